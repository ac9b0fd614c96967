//! Model checkpoints and per-epoch metric tables.

use std::io::{Read as _, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochMetrics, MoodModel, TrainConfig};
use crate::dataio::{io_err, parse_err, write_string};
use crate::error::Result;
use crate::Matrix;

const FORMAT: &str = "mvkit-mood";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: TrainConfig,
    dims: Vec<usize>,
    trained_epochs: usize,
    /// `[rows, cols]` per parameter block, in model order.
    blocks: Vec<[usize; 2]>,
}

/// JSON header line, then every parameter block as little-endian `f64` in
/// column-major order.
pub fn write_checkpoint(path: &Path, model: &MoodModel) -> Result<()> {
    let mats = model.matrices();
    let header = Header {
        format: FORMAT.into(),
        version: 1,
        config: model.config.clone(),
        dims: model.dims.clone(),
        trained_epochs: model.trained_epochs,
        blocks: mats.iter().map(|m| [m.nrows(), m.ncols()]).collect(),
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for m in mats {
        for v in m.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&bytes).map_err(|e| io_err(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<MoodModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    let bad = |msg: &str| parse_err(path, 1, msg);
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line"))?;
    let header: Header = serde_json::from_slice(&bytes[..nl]).map_err(|e| bad(&e.to_string()))?;
    if header.format != FORMAT || header.version != 1 {
        return Err(bad("not a version 1 mood checkpoint"));
    }
    let mut model = MoodModel::zeros(&header.dims, &header.config)?;
    model.trained_epochs = header.trained_epochs;
    let mut offset = nl + 1;
    {
        let mats = model.matrices_mut();
        if mats.len() != header.blocks.len() {
            return Err(bad("block count does not match the configured architecture"));
        }
        for (m, [rows, cols]) in mats.into_iter().zip(header.blocks) {
            if m.shape() != (rows, cols) {
                return Err(bad("block shape does not match the configured architecture"));
            }
            let len = rows * cols * 8;
            let chunk = bytes.get(offset..offset + len).ok_or_else(|| bad("truncated parameter block"))?;
            let data: Vec<f64> = chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            *m = Matrix::from_vec(rows, cols, data);
            offset += len;
        }
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after the last block"));
    }
    Ok(model)
}

/// `epoch,train_loss,train_metric,valid_loss,valid_metric`; validation
/// columns are empty without a validation set.
pub fn write_metrics_csv(path: &Path, history: &[EpochMetrics]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,train_metric,valid_loss,valid_metric\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            h.epoch,
            h.train_loss,
            h.train_metric,
            opt(h.valid_loss),
            opt(h.valid_metric)
        ));
    }
    write_string(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deepmood::HeadKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_round_trip() {
        for head in [HeadKind::Fc, HeadKind::Fm, HeadKind::Mvm] {
            let cfg = TrainConfig { head, d_h: 3, d_k: 2, ..Default::default() };
            let mut model = MoodModel::init(&[2, 4], &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
            model.trained_epochs = 7;
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.ckpt");
            write_checkpoint(&path, &model).unwrap();
            assert_eq!(read_checkpoint(&path).unwrap(), model);
        }
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let cfg = TrainConfig { d_h: 2, d_k: 2, ..Default::default() };
        let model = MoodModel::zeros(&[2, 2], &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&path, &model).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_checkpoint(&path).is_err());
    }
}
