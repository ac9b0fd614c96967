//! Multi-view CSV bundles.

use std::path::Path;

use super::{format_csv, io_err, read_numeric_csv, read_to_string, write_string};
use crate::error::{Error, Result};
use crate::mvfs::MultiViewDataset;
use crate::Matrix;

const MANIFEST: &str = "views.txt";
const LABELS: &str = "labels.csv";

fn view_names(dir: &Path) -> Result<Vec<String>> {
    let manifest = dir.join(MANIFEST);
    if manifest.exists() {
        let names: Vec<String> = read_to_string(&manifest)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        return Ok(names);
    }
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") && path.file_name().is_some_and(|f| f != LABELS) {
            if let Some(stem) = path.file_stem() {
                names.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Loads a bundle without normalization.
pub fn read_multiview_raw(dir: &Path) -> Result<MultiViewDataset> {
    if !dir.is_dir() {
        return Err(io_err(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "bundle directory not found")));
    }
    let names = view_names(dir)?;
    let label_path = dir.join(LABELS);
    let (_, label_rows) = read_numeric_csv(&label_path)?;
    let mut labels = Vec::with_capacity(label_rows.len());
    for (i, row) in label_rows.iter().enumerate() {
        match row.as_slice() {
            [y] if *y == 1.0 || *y == -1.0 => labels.push(*y),
            _ => return Err(super::parse_err(&label_path, i + 2, "expected a single label of 1 or -1")),
        }
    }
    let mut views = Vec::with_capacity(names.len());
    for name in &names {
        let path = dir.join(format!("{name}.csv"));
        let (header, rows) = read_numeric_csv(&path)?;
        if rows.is_empty() {
            return Err(Error::InvalidArgument(format!("{}: view has no instances", path.display())));
        }
        if rows.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{}: {} instances but {} labels",
                path.display(),
                rows.len(),
                labels.len()
            )));
        }
        views.push(Matrix::from_fn(header.len(), rows.len(), |f, i| rows[i][f]));
    }
    MultiViewDataset::new(views, labels, names)
}

/// Loads a bundle and min-max normalizes every feature to `[0, 1]`;
/// constant features become 0.
pub fn load_multiview(dir: &Path) -> Result<MultiViewDataset> {
    let mut ds = read_multiview_raw(dir)?;
    for view in &mut ds.views {
        normalize_rows(view);
    }
    Ok(ds)
}

pub(crate) fn normalize_rows(x: &mut Matrix) {
    for mut row in x.row_iter_mut() {
        let lo = row.min();
        let hi = row.max();
        let span = hi - lo;
        for v in row.iter_mut() {
            *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
        }
    }
}

pub fn write_multiview(dir: &Path, ds: &MultiViewDataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_string(&dir.join(MANIFEST), &(ds.view_names.join("\n") + "\n"))?;
    write_string(
        &dir.join(LABELS),
        &format_csv(&["label".to_string()], ds.labels.iter().map(|&y| vec![y])),
    )?;
    for (name, x) in ds.view_names.iter().zip(&ds.views) {
        let header: Vec<String> = (0..x.nrows()).map(|f| format!("f{f}")).collect();
        let rows = (0..x.ncols()).map(|i| x.column(i).iter().copied().collect());
        write_string(&dir.join(format!("{name}.csv")), &format_csv(&header, rows))?;
    }
    Ok(())
}
