//! Training the recurrent multi-view classifier with each fusion head on
//! synthetic two-view sessions.

use mvkit::dataio::synth::{synth_sessions, SessionSpec};
use mvkit::deepmood::{evaluate, train, HeadKind, TrainConfig};
use mvkit::Result;

fn main() -> Result<()> {
    let ds = synth_sessions(5, &SessionSpec { sessions: 48, dims: vec![2, 3], min_len: 6, max_len: 12 });
    let train_rows: Vec<usize> = (0..ds.len()).filter(|i| i % 4 != 0).collect();
    let valid_rows: Vec<usize> = (0..ds.len()).filter(|i| i % 4 == 0).collect();
    let (tr, va) = (ds.subset(&train_rows), ds.subset(&valid_rows));

    for head in [HeadKind::Fc, HeadKind::Fm, HeadKind::Mvm] {
        let cfg = TrainConfig {
            head,
            epochs: 60,
            batch_size: 8,
            learning_rate: 0.01,
            min_len: 6,
            max_len: 12,
            ..TrainConfig::default()
        };
        let out = train(&tr, Some(&va), &cfg)?;
        let (loss, acc) = evaluate(&out.best_model, &va)?;
        println!(
            "{head:?}: {} parameters, best epoch {}, validation loss {loss:.4}, accuracy {acc:.3}",
            out.best_model.num_params(),
            out.best_epoch
        );
    }
    Ok(())
}
