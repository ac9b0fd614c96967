//! Multi-view feature selection on a synthetic two-view dataset with one
//! informative feature per view.
//!
//! `cargo run --example feature_selection -- [bundle-dir]` loads a bundle
//! instead (see FORMATS.md).

use mvkit::dataio::load_multiview;
use mvkit::dataio::synth::{synth_multiview, MultiviewRule};
use mvkit::mvfs::{predict, tmvfs_select, SelectionConfig};
use mvkit::numkit::metrics::classification_metrics;
use mvkit::Result;

fn main() -> Result<()> {
    let ds = match std::env::args().nth(1) {
        Some(dir) => load_multiview(dir.as_ref())?,
        None => synth_multiview(3, 60, &[8, 6], MultiviewRule::default()),
    };
    let train: Vec<usize> = (0..ds.n_instances()).filter(|i| i % 3 != 0).collect();
    let test: Vec<usize> = (0..ds.n_instances()).filter(|i| i % 3 == 0).collect();
    let (tr, te) = (ds.subset(&train)?, ds.subset(&test)?);

    let cfg = SelectionConfig {
        targets: vec![2; ds.n_views()],
        ..SelectionConfig::default()
    };
    let state = tmvfs_select(&tr, &cfg)?;
    for (v, name) in ds.view_names.iter().enumerate() {
        println!("{name}: kept {:?}, eliminated first to last {:?}", state.selected[v], state.eliminated[v]);
    }
    let m = classification_metrics(&predict(&state, &te)?, &te.labels)?;
    println!("held-out accuracy {:.3}, f1 {:.3}", m.accuracy, m.f1);
    Ok(())
}
