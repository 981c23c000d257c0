//! Joint factorization of the preference and SPPMI matrices on the toy
//! corpus, then the nearest labels of "wind speed" in the learned space.

use tabsearch::cofactor::train;
use tabsearch::config::PipelineConfig;
use tabsearch::pipeline::build_cooccurrence;
use tabsearch::synthetic::toy_bundle;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (norm(a) * norm(b)).max(1e-12)
}

fn main() -> tabsearch::Result<()> {
    let cfg = PipelineConfig { seed: 7, ..PipelineConfig::default() };
    let corpus = toy_bundle(7).corpus;
    let (vocab, pref, _, sppmi) = build_cooccurrence(&corpus, &cfg)?;
    let t = train(&pref, &sppmi, &cfg.cofactor_config())?;
    println!("objective over {} sweeps:", t.trace.len() - 1);
    for (i, v) in t.trace.iter().enumerate().step_by(10) {
        println!("  sweep {i:>3}: {v:.6}");
    }
    println!("  final    : {:.6} (converged {})", t.trace.last().unwrap(), t.converged);

    let Some(target) = vocab.get("wind speed") else {
        return Ok(());
    };
    let v = t.model.label_vector(target);
    let mut near: Vec<(f64, &str)> = (0..vocab.len())
        .filter(|&p| p != target)
        .map(|p| (cosine(v, t.model.label_vector(p)), vocab.label(p)))
        .collect();
    near.sort_by(|a, b| b.0.total_cmp(&a.0));
    println!("\nnearest labels to \"wind speed\":");
    for (s, l) in near.iter().take(5) {
        println!("  {l:<16} {s:.3}");
    }
    Ok(())
}
