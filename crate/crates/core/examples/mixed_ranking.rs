//! Mix lexical and generated-label scores, tune the field weights by
//! coordinate ascent and rank one query.

use tabsearch::config::PipelineConfig;
use tabsearch::pipeline::train_label_stage;
use tabsearch::ranking::{tune_weights, Metric, MixField, Ranker, RankerConfig};
use tabsearch::synthetic::toy_bundle;

fn main() -> tabsearch::Result<()> {
    let bundle = toy_bundle(7);
    let cfg = PipelineConfig { seed: 7, ..PipelineConfig::default() };
    let mut corpus = bundle.corpus.clone();
    train_label_stage(&corpus, &cfg)?.annotate(&mut corpus, &cfg)?;
    let store = bundle.store();
    let ranker = Ranker::new(&corpus, Some(&store), false);

    let template = RankerConfig::with_fields(&[(MixField::Text, 0.5), (MixField::Labels, 0.5)]);
    let tuned = tune_weights(&ranker, &bundle.tasks(), &bundle.qrels(), &template, Metric::Ndcg(10))?;
    println!(
        "ndcg@10 {:.4} -> {:.4} in {} cycles; w_text {} w_labels {}",
        tuned.start_score,
        tuned.score,
        tuned.cycles,
        tuned.config.weight(MixField::Text),
        tuned.config.weight(MixField::Labels)
    );

    let qrels = bundle.qrels();
    for (name, rc) in [("text only", RankerConfig::text_only()), ("tuned mix", tuned.config)] {
        let list = ranker.rank("q", "wind speed", &rc)?;
        println!("\n{name}:");
        for (id, score) in list.entries.iter().take(5) {
            println!("  {id} {score:.4} grade {}", qrels.grade("T1", id));
        }
    }
    Ok(())
}
