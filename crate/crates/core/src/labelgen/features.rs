//! Curated column statistics.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

use crate::corpus::Column;

pub const CURATED_DIM: usize = 12;

/// Names of the curated statistics, in vector order.
pub const CURATED_NAMES: [&str; CURATED_DIM] = [
    "value_count",
    "distinct_ratio",
    "numeric_ratio",
    "mean_char_len",
    "std_char_len",
    "mean_numeric_value",
    "std_numeric_value",
    "empty_ratio",
    "alphabetic_ratio",
    "date_like_ratio",
    "mean_token_count",
    "max_char_len",
];

fn date_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^(\d{4}[-/]\d{1,2}([-/]\d{1,2})?|\d{1,2}[-/]\d{1,2}[-/]\d{2,4})([ T]\d{1,2}:\d{2}(:\d{2})?)?$",
        )
        .unwrap()
    })
}

fn parse_numeric(s: &str) -> Option<f64> {
    let cleaned: String = s.chars().filter(|&c| c != ',' && c != '$' && c != '%').collect();
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Value statistics of a column.
///
/// `empty_ratio` is taken over all values; the remaining ratios and the
/// length/token statistics over non-empty (after trimming) values only.
pub fn curated_features(column: &Column) -> [f64; CURATED_DIM] {
    let mut f = [0.0; CURATED_DIM];
    let total = column.values.len();
    f[0] = total as f64;
    let cells: Vec<&str> = column
        .values
        .iter()
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .collect();
    if total == 0 {
        return f;
    }
    f[7] = (total - cells.len()) as f64 / total as f64;
    if cells.is_empty() {
        return f;
    }
    let n = cells.len() as f64;
    let distinct: HashSet<&str> = cells.iter().copied().collect();
    f[1] = distinct.len() as f64 / n;

    let numeric: Vec<f64> = cells.iter().filter_map(|c| parse_numeric(c)).collect();
    f[2] = numeric.len() as f64 / n;

    let lens: Vec<f64> = cells.iter().map(|c| c.chars().count() as f64).collect();
    (f[3], f[4]) = mean_std(&lens);
    (f[5], f[6]) = mean_std(&numeric);

    let alphabetic = cells
        .iter()
        .filter(|c| {
            c.chars().any(char::is_alphabetic)
                && c.chars().all(|ch| ch.is_alphabetic() || ch.is_whitespace())
        })
        .count();
    f[8] = alphabetic as f64 / n;
    f[9] = cells.iter().filter(|c| date_pattern().is_match(c)).count() as f64 / n;
    f[10] = cells.iter().map(|c| c.split_whitespace().count() as f64).sum::<f64>() / n;
    f[11] = lens.iter().copied().fold(0.0, f64::max);
    f
}
