//! Line-oriented JSON and plain JSON file formats.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fact_core::data::{ActionChunk, Episode};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Error;

/// One tokenized chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub task_id: String,
    pub offset: usize,
    pub tokens: Vec<u32>,
}

/// One chunk in original units, rows are timesteps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub task_id: String,
    pub offset: usize,
    pub values: Vec<Vec<f64>>,
}

impl From<&ActionChunk> for ChunkRecord {
    fn from(c: &ActionChunk) -> Self {
        Self {
            task_id: c.task_id.clone(),
            offset: c.source_offset,
            values: c.values.chunks_exact(c.dims).map(<[f64]>::to_vec).collect(),
        }
    }
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn open(path: &Path) -> Result<fs::File, Error> {
    fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Input {
                path: path.display().to_string(),
                reason: "no such file".into(),
            }
        } else {
            io_err(path)(e)
        }
    })
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Error> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Input {
            path: path.display().to_string(),
            reason: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<(), Error> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::Runtime(e.to_string()))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Appends one line and flushes it to disk.
pub fn append_jsonl<T: Serialize>(path: &Path, item: &T) -> Result<(), Error> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut line = serde_json::to_vec(item).map_err(|e| Error::Runtime(e.to_string()))?;
    line.push(b'\n');
    f.write_all(&line).map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    serde_json::from_reader(BufReader::new(open(path)?)).map_err(|e| Error::Input {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_episodes(path: &Path) -> Result<Vec<Episode>, Error> {
    let episodes: Vec<Episode> = read_jsonl(path)?;
    for (i, ep) in episodes.iter().enumerate() {
        ep.validate().map_err(|e| Error::Input {
            path: path.display().to_string(),
            reason: format!("episode {}: {e}", i + 1),
        })?;
    }
    if episodes.is_empty() {
        return Err(Error::Input {
            path: path.display().to_string(),
            reason: "no episodes".into(),
        });
    }
    Ok(episodes)
}

pub fn write_episodes(path: &Path, episodes: &[Episode]) -> Result<(), Error> {
    write_jsonl(path, episodes)
}
