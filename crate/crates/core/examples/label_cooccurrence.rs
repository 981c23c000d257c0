//! Label normalization, the dataset-label preference matrix and the SPPMI
//! co-occurrence matrix on a four-table corpus.

use tabsearch::cooccur::{build_sppmi, build_vocab_and_preference, cooccurrence_counts};
use tabsearch::corpus::{normalize_label, Column, Corpus, Dataset};

fn table(id: &str, headers: &[&str]) -> Dataset {
    let cols = headers.iter().map(|h| Column::new(Some(h.to_string()), vec![])).collect();
    Dataset::new(id, "", "", cols)
}

fn main() -> tabsearch::Result<()> {
    for raw in ["WindSpeed", "avg_wind_speed_kmh", "HTTPStatus2xx", "Station ID"] {
        println!("{raw:>20} -> {:?}", normalize_label(raw));
    }

    let corpus = Corpus::new(vec![
        table("weather", &["Station", "Month", "Wind Speed", "Temperature"]),
        table("turbines", &["Station", "wind_speed", "Power Output"]),
        table("climate", &["Month", "Temperature", "Rainfall"]),
        table("schools", &["School", "Enrollment"]),
    ]);
    let (vocab, pref) = build_vocab_and_preference(&corpus)?;
    println!("\n{} labels, {} dataset-label pairs", vocab.len(), pref.nnz());

    let counts = cooccurrence_counts(&corpus, &vocab);
    let sppmi = build_sppmi(&counts, 1)?;
    println!("\nnonzero SPPMI cells (k_neg = 1):");
    for i in 0..vocab.len() {
        for &(j, v) in sppmi.row(i) {
            println!("  {:>12} ~ {:<12} {v:.4}", vocab.label(i), vocab.label(j));
        }
    }
    Ok(())
}
