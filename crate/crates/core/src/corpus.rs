//! On-disk corpus layout: one directory per task holding `clean.trace`,
//! `perturbed.trace` and, for generated corpora, `truth.record`.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sim::{GeneratedPair, GroundTruth};
use crate::trace::{parse_trace, serialize_trace, Trace, TraceParseError};

pub const CLEAN_FILE: &str = "clean.trace";
pub const PERTURBED_FILE: &str = "perturbed.trace";
pub const TRUTH_FILE: &str = "truth.record";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: TraceParseError },
    #[error("{path}: {source}")]
    Truth { path: PathBuf, source: serde_json::Error },
}

impl CorpusError {
    pub fn is_not_found(&self) -> bool {
        matches!(self, CorpusError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
            || matches!(self, CorpusError::Parse { source: TraceParseError::Io(e), .. } if e.kind() == std::io::ErrorKind::NotFound)
    }
}

pub fn read_trace(path: &Path) -> Result<Trace, CorpusError> {
    let f = fs::File::open(path).map_err(|source| CorpusError::Io { path: path.into(), source })?;
    parse_trace(BufReader::new(f)).map_err(|source| CorpusError::Parse { path: path.into(), source })
}

/// Task directories under `root`, sorted by name.
pub fn task_dirs(root: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let io = |source| CorpusError::Io { path: root.into(), source };
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io)? {
        let entry = entry.map_err(io)?;
        if entry.file_type().map_err(io)?.is_dir() {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn read_pair(task_dir: &Path) -> Result<(Trace, Trace), CorpusError> {
    Ok((read_trace(&task_dir.join(CLEAN_FILE))?, read_trace(&task_dir.join(PERTURBED_FILE))?))
}

pub fn read_truth(task_dir: &Path) -> Result<GroundTruth, CorpusError> {
    let path = task_dir.join(TRUTH_FILE);
    let text = fs::read_to_string(&path).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
    serde_json::from_str(&text).map_err(|source| CorpusError::Truth { path, source })
}

/// Writes `root/<task_id>/` for each pair.
pub fn write_corpus(root: &Path, pairs: &[GeneratedPair]) -> Result<(), CorpusError> {
    for p in pairs {
        let dir = root.join(&p.task_id);
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CorpusError::Io { path, source }
        };
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let files = [
            (CLEAN_FILE, serialize_trace(&p.clean)),
            (PERTURBED_FILE, serialize_trace(&p.perturbed)),
            (TRUTH_FILE, serde_json::to_string(&p.truth).expect("truth serializes") + "\n"),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(io(&path))?;
        }
    }
    Ok(())
}
