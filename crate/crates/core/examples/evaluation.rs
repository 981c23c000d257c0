//! NDCG and precision of two TREC runs, and a paired t-test between them.

use tabsearch::eval::{evaluate, paired_t_test, EvalOptions, Qrels, RunFile};

const QRELS: &str = "\
A 0 d1 3
A 0 d2 1
A 0 d3 0
B 0 d4 2
B 0 d5 3
";

fn run(tag: &str, lines: &[(&str, &str)]) -> tabsearch::Result<RunFile> {
    let mut text = String::new();
    let mut rank = 0;
    let mut last = "";
    for (q, d) in lines {
        rank = if *q == last { rank + 1 } else { 1 };
        last = q;
        text.push_str(&format!("{q} Q0 {d} {rank} {} {tag}\n", 10 - rank));
    }
    RunFile::parse(&text)
}

fn main() -> tabsearch::Result<()> {
    let qrels = Qrels::parse(QRELS)?;
    let good = run("good", &[("A/1", "d1"), ("A/1", "d2"), ("A/2", "d2"), ("A/2", "d1"), ("B/1", "d5"), ("B/1", "d4")])?;
    let weak = run("weak", &[("A/1", "d3"), ("A/1", "d1"), ("A/2", "d3"), ("A/2", "d2"), ("B/1", "d4")])?;
    let opts = EvalOptions { cutoffs: vec![1, 5], ..EvalOptions::default() };
    let a = evaluate(&good, &qrels, &opts)?;
    let b = evaluate(&weak, &qrels, &opts)?;
    for (tag, t) in [("good", &a), ("weak", &b)] {
        println!("{tag}: ndcg@1 {:.4} ndcg@5 {:.4} p@5 {:.4}", t.ndcg[0], t.ndcg[1], t.precision[1]);
        for (q, m) in &t.per_query {
            println!("  {q}: ndcg@5 {:.4}", m.ndcg[1]);
        }
    }
    let (t, p) = paired_t_test(&a.ndcg_series(5), &b.ndcg_series(5))?;
    println!("paired t-test on ndcg@5: t = {t:.4}, p = {p:.4}");
    Ok(())
}
