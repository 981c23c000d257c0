//! Word mover's distance between a query and label sets, with the exact
//! transport plan behind one of the distances.

use tabsearch::embed::EmbeddingStore;
use tabsearch::ranking::{euclidean, score_labels, solve_transport, wmd, WMD_FLOOR};

const VECTORS: &str = "6 3
wind 1.0 0.0 0.0
speed 0.8 0.3 0.0
gust 0.9 0.1 0.1
school 0.0 1.0 0.0
lunch 0.0 0.8 0.4
month 0.2 0.2 0.9
";

fn main() -> tabsearch::Result<()> {
    let store = EmbeddingStore::from_reader(VECTORS.as_bytes())?;
    let query = ["wind", "speed"];
    for labels in [&["gust", "month"][..], &["school", "lunch"], &["wind", "speed"], &["unknown"]] {
        let s = score_labels(&store, &query, labels, WMD_FLOOR);
        println!("{query:?} vs {labels:?}: score {s:.4}");
    }

    let a = store.embed_tokens(&query)?;
    let b = store.embed_tokens(&["gust", "month", "month"])?;
    let cost: Vec<Vec<f64>> =
        a.points().iter().map(|p| b.points().iter().map(|q| euclidean(&p.vector, &q.vector)).collect()).collect();
    let plan = solve_transport(&a.weights(), &b.weights(), &cost)?;
    println!("\nWMD {:.4}; plan:", wmd(&a, &b)?);
    for &(i, j, flow) in &plan.flows {
        println!("  {} -> {}: {flow:.3}", a.points()[i].token, b.points()[j].token);
    }
    Ok(())
}
