//! Side-view guided subgraph mining on the bundled fixture corpus.
//!
//! `cargo run --example subgraph_mining -- [corpus-dir] [edge-threshold]`

use std::path::PathBuf;

use mvkit::dataio::load_graph_corpus;
use mvkit::subgraph::{gmsv_mine, MiningConfig};
use mvkit::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/graphs"));
    let threshold = args.next().map_or(0.5, |t| t.parse().expect("numeric edge threshold"));
    let (corpus, side) = load_graph_corpus(&dir, threshold)?;
    println!("{} graphs, {} labeled, side views {:?}", corpus.len(), corpus.labeled_count(), side.names);

    for prune in [true, false] {
        let res = gmsv_mine(&corpus, &side, &MiningConfig { k: 5, prune, ..MiningConfig::default() })?;
        println!("prune={prune}: {} nodes visited, {} subtrees pruned", res.nodes_visited, res.subtrees_pruned);
        if prune {
            for p in &res.patterns {
                let edges: Vec<String> = p
                    .code
                    .edges()
                    .iter()
                    .map(|e| format!("({},{},{},{},{})", e.from, e.to, e.from_label, e.edge_label, e.to_label))
                    .collect();
                println!("  q={:+.4} bound={:+.4} support={:>2} {}", p.q, p.q_hat, p.support, edges.join(""));
            }
        }
    }
    Ok(())
}
