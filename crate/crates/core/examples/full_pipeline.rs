//! Both stages on the bundled toy corpus, followed by the metric report.

use std::time::Instant;

use tabsearch::config::PipelineConfig;
use tabsearch::pipeline::{run_experiment, train_label_stage};
use tabsearch::synthetic::toy_bundle;

fn main() -> tabsearch::Result<()> {
    let start = Instant::now();
    let args: Vec<String> = std::env::args().collect();
    let seed = args.get(1).map_or(Ok(7), |s| s.parse()).expect("seed");
    let bundle = toy_bundle(seed);
    let mut cfg = PipelineConfig { seed, ..PipelineConfig::default() };
    if let Some(src) = args.get(2) {
        cfg.set("embedding_source", src)?;
    }
    let mut corpus = bundle.corpus.clone();
    let stage = train_label_stage(&corpus, &cfg)?;
    stage.annotate(&mut corpus, &cfg)?;
    println!("labels generated for the headerless wind column of each target:");
    for id in &bundle.targets {
        let ds = &corpus.datasets[corpus.position(id).unwrap()];
        let (col, _) = ds.columns.iter().enumerate().find(|(_, c)| c.raw_label.is_none()).expect("target column");
        let labels: Vec<String> = ds.generated_labels[col]
            .iter()
            .map(|l| format!("{} ({:.2})", l.tokens.join(" "), l.probability))
            .collect();
        println!("  {id}: {}", labels.join(", "));
    }
    println!();
    let store = bundle.store();
    let exp = run_experiment(&corpus, &store, &bundle.tasks(), &bundle.qrels(), &cfg)?;
    print!("{}", exp.report());
    println!();
    for r in &exp.results {
        println!("{} {}: {}", r.method, r.fields, r.detail);
    }
    println!();
    print!("{}", exp.significance(("SDR", "T+D"), 5, 0.01)?);
    println!("elapsed {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}
