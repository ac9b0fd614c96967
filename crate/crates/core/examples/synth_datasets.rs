//! Writes one synthetic dataset in each input format to a directory, ready
//! for the `mvkit` commands' `--input` flag.
//!
//! `cargo run --example synth_datasets -- <out-dir> [seed]`

use std::path::PathBuf;

use mvkit::dataio::synth::{
    synth_graph_corpus, synth_multiview, synth_planted_tensor, synth_sessions, GraphCorpusSpec, MultiviewRule,
    SessionSpec,
};
use mvkit::dataio::sessions::dataset_to_records;
use mvkit::dataio::{write_graph_corpus, write_multiview, write_network_stack, write_sessions, NetworkStack};
use mvkit::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synth-data".into()));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("integer seed"));

    write_multiview(&out.join("multiview"), &synth_multiview(seed, 60, &[10, 8], MultiviewRule::default()))?;

    let (corpus, side) = synth_graph_corpus(seed, &GraphCorpusSpec { graphs: 24, ..GraphCorpusSpec::small() });
    write_graph_corpus(&out.join("graphs"), &corpus, &side)?;

    let (tensor, s, _) = synth_planted_tensor(seed, 8, 20, 3, 0.02);
    let stack = NetworkStack {
        tensor,
        side: None,
        // every fourth subject unlabeled
        labels: (0..20).map(|t| (t % 4 != 3).then(|| usize::from(s[(t, 0)] >= 0.0))).collect(),
        node_names: (0..8).map(|i| format!("region{i}")).collect(),
    };
    write_network_stack(&out.join("networks"), &stack)?;

    let sessions = synth_sessions(seed, &SessionSpec::default());
    write_sessions(&out.join("sessions.jsonl"), &dataset_to_records(&sessions))?;

    println!("wrote multiview/, graphs/, networks/ and sessions.jsonl under {}", out.display());
    Ok(())
}
