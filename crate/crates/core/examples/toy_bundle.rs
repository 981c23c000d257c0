//! Write the bundled toy corpus, queries, judgments and vectors to a directory.

use std::path::PathBuf;

use tabsearch::synthetic::toy_bundle;

fn main() -> tabsearch::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "toy".into()));
    let paths = toy_bundle(7).write(&dir)?;
    println!("corpus       {}", paths.corpus.display());
    println!("queries      {}", paths.queries.display());
    println!("descriptions {}", paths.descriptions.display());
    println!("qrels        {}", paths.qrels.display());
    println!("vectors      {}", paths.vectors.display());
    Ok(())
}
