use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use poscert::ffnn::Ffnn;
use poscert::lure::DelayedLureSystem;
use poscert::matrix::Vector;
use poscert::sector::InputBox;
use serde::Serialize;

use crate::args::BoxSpec;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn load_system(path: &Path) -> Result<DelayedLureSystem> {
    DelayedLureSystem::from_json(&read(path)?).with_context(|| format!("invalid system file {}", path.display()))
}

pub fn load_network(path: &Path) -> Result<Ffnn> {
    Ffnn::from_json(&read(path)?).with_context(|| format!("invalid network file {}", path.display()))
}

/// A single `lo,hi` pair is broadcast to every input.
pub fn input_box(spec: &BoxSpec, dim: usize) -> Result<InputBox> {
    let bounds = match spec.bounds.len() {
        1 => vec![spec.bounds[0]; dim],
        n if n == dim => spec.bounds.clone(),
        n => bail!("--box has {n} intervals, expected 1 or {dim}"),
    };
    let lo = Vector::from_iterator(dim, bounds.iter().map(|b| b.0));
    let hi = Vector::from_iterator(dim, bounds.iter().map(|b| b.1));
    InputBox::new(lo, hi).context("invalid --box")
}

pub fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `value` to `dir/name`, or to stdout when no directory is given.
pub fn emit_json<T: Serialize>(value: &T, dir: Option<&Path>, name: &str) -> Result<Option<PathBuf>> {
    let text = to_json(value)?;
    match dir {
        Some(dir) => {
            create_out_dir(dir)?;
            let path = dir.join(name);
            fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
            Ok(Some(path))
        }
        None => {
            print!("{text}");
            Ok(None)
        }
    }
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))
}
