//! Train the label generator on the toy corpus and list the labels it
//! proposes for columns that have no header.

use tabsearch::config::PipelineConfig;
use tabsearch::labelgen::CURATED_NAMES;
use tabsearch::pipeline::train_label_stage;
use tabsearch::synthetic::toy_bundle;

fn main() -> tabsearch::Result<()> {
    let mut cfg = PipelineConfig { seed: 7, ..PipelineConfig::default() };
    cfg.top_m = 3;
    let mut corpus = toy_bundle(7).corpus;
    let stage = train_label_stage(&corpus, &cfg)?;
    println!(
        "{} labels, {} trees over {} curated statistics + {} embedding dims",
        stage.vocab.len(),
        stage.generator.forest.trees().len(),
        CURATED_NAMES.len(),
        cfg.cofactor.k,
    );
    stage.annotate(&mut corpus, &cfg)?;
    for ds in &corpus.datasets {
        for (c, col) in ds.columns.iter().enumerate() {
            if col.raw_label.is_some() {
                continue;
            }
            let labels: Vec<String> = ds.generated_labels[c]
                .iter()
                .map(|l| format!("{} ({:.2})", l.tokens.join(" "), l.probability))
                .collect();
            println!("{} column {c} [{}]: {}", ds.id, ds.title, labels.join(", "));
        }
    }
    Ok(())
}
