//! Stacks of symmetric subject networks.
//!
//! A stack directory holds `nodes.txt` (one node name per line),
//! `labels.csv` (header `label`; a class index per subject, `-1` when
//! unlabeled), `networks.csv` (header `subject,i,j,weight`, upper triangle
//! with `i ≤ j`, absent entries zero) and optionally `side.csv` (one row of
//! side features per subject).

use std::path::Path;

use super::{format_csv, parse_err, read_numeric_csv, read_to_string, write_string};
use crate::error::{invalid, Error, Result};
use crate::tensor::{PartiallySymmetricTensor3, Tensor3};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkStack {
    pub tensor: PartiallySymmetricTensor3,
    pub side: Option<Matrix>,
    /// Class index per subject, `None` when unlabeled.
    pub labels: Vec<Option<usize>>,
    pub node_names: Vec<String>,
}

impl NetworkStack {
    /// Labeled subjects first, each group in file order.
    pub fn labeled_first_order(&self) -> Vec<usize> {
        let (mut a, b): (Vec<usize>, Vec<usize>) = (0..self.labels.len()).partition(|&i| self.labels[i].is_some());
        a.extend(b);
        a
    }
}

fn as_index(v: f64) -> Option<usize> {
    (v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64).then_some(v as usize)
}

pub fn load_network_stack(dir: &Path) -> Result<NetworkStack> {
    let nodes_path = dir.join("nodes.txt");
    let node_names: Vec<String> = read_to_string(&nodes_path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    let m = node_names.len();
    if m == 0 {
        return invalid(format!("{}: no nodes", nodes_path.display()));
    }
    let labels_path = dir.join("labels.csv");
    let (_, rows) = read_numeric_csv(&labels_path)?;
    let mut labels = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        match row.as_slice() {
            [y] if *y == -1.0 => labels.push(None),
            [y] => labels.push(Some(
                as_index(*y).ok_or_else(|| parse_err(&labels_path, i + 2, "label must be a class index or -1"))?,
            )),
            _ => return Err(parse_err(&labels_path, i + 2, "expected one label column")),
        }
    }
    let n = labels.len();
    if n == 0 {
        return invalid(format!("{}: no subjects", labels_path.display()));
    }
    let net_path = dir.join("networks.csv");
    let (header, entries) = read_numeric_csv(&net_path)?;
    if header != ["subject", "i", "j", "weight"] {
        return Err(parse_err(&net_path, 1, "header must be subject,i,j,weight"));
    }
    let mut t = Tensor3::zeros([m, m, n])?;
    let mut seen = std::collections::HashSet::new();
    for (k, row) in entries.iter().enumerate() {
        let line = k + 2;
        let (s, i, j) = match (as_index(row[0]), as_index(row[1]), as_index(row[2])) {
            (Some(s), Some(i), Some(j)) if s < n && i < m && j < m => (s, i, j),
            _ => return Err(parse_err(&net_path, line, "subject or node index out of range")),
        };
        if i > j {
            return Err(parse_err(&net_path, line, "entries must satisfy i <= j"));
        }
        if !seen.insert((s, i, j)) {
            return Err(parse_err(&net_path, line, "duplicate entry"));
        }
        t.set(i, j, s, row[3]);
        t.set(j, i, s, row[3]);
    }
    let side_path = dir.join("side.csv");
    let side = if side_path.exists() {
        let (h, rows) = read_numeric_csv(&side_path)?;
        if rows.len() != n {
            return Err(Error::InvalidArgument(format!("{}: {} rows for {n} subjects", side_path.display(), rows.len())));
        }
        Some(Matrix::from_fn(n, h.len(), |i, j| rows[i][j]))
    } else {
        None
    };
    Ok(NetworkStack { tensor: PartiallySymmetricTensor3::new(t)?, side, labels, node_names })
}

pub fn write_network_stack(dir: &Path, stack: &NetworkStack) -> Result<()> {
    let (m, n) = (stack.tensor.nodes(), stack.tensor.subjects());
    if stack.node_names.len() != m || stack.labels.len() != n {
        return invalid("node names and labels must match the tensor dimensions");
    }
    write_string(&dir.join("nodes.txt"), &(stack.node_names.join("\n") + "\n"))?;
    let labels = stack.labels.iter().map(|y| vec![y.map_or(-1.0, |c| c as f64)]);
    write_string(&dir.join("labels.csv"), &format_csv(&["label".to_string()], labels))?;
    let mut rows = Vec::new();
    for s in 0..n {
        for j in 0..m {
            for i in 0..=j {
                let v = stack.tensor.tensor().get(i, j, s);
                if v != 0.0 {
                    rows.push(vec![s as f64, i as f64, j as f64, v]);
                }
            }
        }
    }
    let header: Vec<String> = ["subject", "i", "j", "weight"].iter().map(|s| s.to_string()).collect();
    write_string(&dir.join("networks.csv"), &format_csv(&header, rows.into_iter()))?;
    if let Some(z) = &stack.side {
        let header: Vec<String> = (0..z.ncols()).map(|j| format!("f{j}")).collect();
        write_string(&dir.join("side.csv"), &format_csv(&header, (0..z.nrows()).map(|i| z.row(i).iter().copied().collect())))?;
    }
    Ok(())
}
