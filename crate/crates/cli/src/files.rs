//! On-disk layout of corpora and run outputs.
//!
//! A corpus directory holds `trajectories/<id>.jsonl`, plus `labels.jsonl`,
//! `library.json` and `config.json` when it was generated.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use sbd_core::io::read_trajectory;
use sbd_core::Trajectory;

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating directory {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn trajectory_dir(corpus: &Path) -> PathBuf {
    let nested = corpus.join("trajectories");
    if nested.is_dir() {
        nested
    } else {
        corpus.to_path_buf()
    }
}

pub fn trajectory_path(corpus: &Path, id: &str) -> PathBuf {
    corpus.join("trajectories").join(format!("{id}.jsonl"))
}

/// Every `*.jsonl` trajectory of a corpus, ordered by id.
pub fn read_corpus(corpus: &Path) -> Result<Vec<Trajectory>> {
    let dir = trajectory_dir(corpus);
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "jsonl") && p.is_file());
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let t = read_trajectory(open(&p)?).with_context(|| format!("reading {}", p.display()))?;
        out.push(t);
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    if out.is_empty() {
        return Err(sbd_core::Error::Contract(format!(
            "no trajectories found in {}",
            dir.display()
        )))
        .context("reading corpus");
    }
    Ok(out)
}

pub fn out_dir(out: &Option<PathBuf>) -> PathBuf {
    out.clone().unwrap_or_else(|| PathBuf::from("."))
}
