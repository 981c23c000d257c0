//! Field indexes and the four lexical scorers on a small corpus.

use tabsearch::corpus::{Column, Dataset};
use tabsearch::index::{build_index, Field, Scorer};
use tabsearch::ranking::order;

fn main() -> tabsearch::Result<()> {
    let col = |h: &str, v: &[&str]| Column::new(Some(h.into()), v.iter().map(|s| s.to_string()).collect());
    let docs = vec![
        Dataset::new("d1", "Wind speed in Kansas", "Hourly anemometer readings", vec![col("speed", &["12", "14"])]),
        Dataset::new("d2", "School lunch", "Meals served per district", vec![col("district", &["north", "south"])]),
        Dataset::new("d3", "Turbine output", "Power by wind farm", vec![col("farm", &["kansas wind", "iowa"])]),
    ];
    let query = ["wind", "kansas"];
    for field in [Field::Text, Field::Data, Field::All] {
        let idx = build_index(&docs, field);
        println!("{} field, {} terms:", field.name(), idx.vocabulary().count());
        for s in [Scorer::default(), Scorer::TfIdf, Scorer::LmJm { lambda: 0.1 }, Scorer::LmDirichlet { mu: 2000.0 }] {
            let scores = s.score_all(&idx, &query)?;
            let ranked = order("q", idx.ids(), &scores, 3);
            let line: Vec<String> = ranked.entries.iter().map(|(id, v)| format!("{id} {v:.4}")).collect();
            println!("  {:<24} {}", s.to_string(), line.join("  "));
        }
    }
    Ok(())
}
