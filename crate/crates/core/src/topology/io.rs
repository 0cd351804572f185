//! Triplet export of coupling matrices.
//!
//! `<stem>.csv` holds `row,col,weight` lines; `<stem>.meta` holds `key = value`
//! lines with the node count, provenance and spectral radius; connectome
//! matrices additionally write `<stem>.labels.csv` (`index,label`).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{AdjacencyMatrix, CsrMatrix, Provenance};
use crate::{Error, Result};

pub fn triplets_csv(m: &AdjacencyMatrix) -> String {
    let mut out = String::from("row,col,weight\n");
    for (i, j, v) in m.entries().triplets() {
        writeln!(out, "{i},{j},{v:e}").unwrap();
    }
    out
}

pub fn metadata_text(m: &AdjacencyMatrix) -> String {
    let mut out = String::new();
    writeln!(out, "n = {}", m.n()).unwrap();
    match m.provenance() {
        Provenance::ErdosRenyi { seed, sparsity } => {
            writeln!(out, "provenance = \"erdos-renyi\"").unwrap();
            writeln!(out, "seed = {seed}").unwrap();
            writeln!(out, "sparsity = {sparsity:?}").unwrap();
        }
        Provenance::Connectome { source_id, synapse_threshold } => {
            writeln!(out, "provenance = \"connectome\"").unwrap();
            writeln!(out, "source_id = {source_id:?}").unwrap();
            writeln!(out, "synapse_threshold = {synapse_threshold}").unwrap();
        }
        Provenance::Explicit => writeln!(out, "provenance = \"explicit\"").unwrap(),
    }
    writeln!(out, "spectral_radius = {:e}", m.spectral_radius()).unwrap();
    writeln!(out, "nnz = {}", m.entries().nnz()).unwrap();
    out
}

/// Writes `<stem>.csv`, `<stem>.meta` and, when labels exist, `<stem>.labels.csv`.
pub fn write_matrix(m: &AdjacencyMatrix, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv, triplets_csv(m))?;
    written.push(csv);
    let meta = dir.join(format!("{stem}.meta"));
    std::fs::write(&meta, metadata_text(m))?;
    written.push(meta);
    if !m.labels().is_empty() {
        let mut out = String::from("index,label\n");
        for (i, l) in m.labels().iter().enumerate() {
            writeln!(out, "{i},{l}").unwrap();
        }
        let path = dir.join(format!("{stem}.labels.csv"));
        std::fs::write(&path, out)?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a `row,col,weight` triplet file into an explicit-provenance matrix.
pub fn read_triplets(path: &Path, n: usize) -> Result<AdjacencyMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut triplets = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| Error::Format { line: idx + 1, reason };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", f.len())));
        }
        let i: usize = f[0].parse().map_err(|_| bad(format!("bad row `{}`", f[0])))?;
        let j: usize = f[1].parse().map_err(|_| bad(format!("bad col `{}`", f[1])))?;
        let v: f64 = f[2].parse().map_err(|_| bad(format!("bad weight `{}`", f[2])))?;
        if i >= n || j >= n {
            return Err(bad(format!("index ({i}, {j}) outside {n}x{n}")));
        }
        triplets.push((i, j, v));
    }
    AdjacencyMatrix::new(CsrMatrix::from_triplets(n, triplets), Provenance::Explicit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::generate_erdos_renyi;

    #[test]
    fn triplets_round_trip_exactly() {
        let m = generate_erdos_renyi(30, 0.2, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_matrix(&m, dir.path(), "er").unwrap();
        assert_eq!(files.len(), 2);
        let back = read_triplets(&files[0], 30).unwrap();
        assert_eq!(back.entries(), m.entries());
        let meta = std::fs::read_to_string(&files[1]).unwrap();
        assert!(meta.contains("provenance = \"erdos-renyi\""));
        assert!(meta.contains("seed = 11"));
    }
}
