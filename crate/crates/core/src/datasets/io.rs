//! Gzip-compressed newline-delimited JSON shards and their manifests.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DatasetError;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write `items` as one JSON object per line, gzip-compressed. The gzip
/// header carries no timestamp, so identical input gives identical bytes.
pub fn write_ndjson_gz<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut enc = GzEncoder::new(BufWriter::new(file), Compression::fast());
    for item in items {
        serde_json::to_writer(&mut enc, item)?;
        enc.write_all(b"\n").map_err(|e| DatasetError::io(path, e))?;
    }
    enc.finish()
        .and_then(|mut w| w.flush())
        .map_err(|e| DatasetError::io(path, e))?;
    Ok(())
}

pub fn read_ndjson_gz<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let reader = BufReader::new(GzDecoder::new(file));
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub records: usize,
    pub sha256: String,
}

/// Sidecar describing a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    /// "observational" or "counterfactual".
    pub kind: String,
    pub game: String,
    pub config_hash: String,
    /// Episodes covered, sorted.
    pub episode_seeds: Vec<u64>,
    pub records: usize,
    pub skipped: usize,
    pub shards: Vec<ShardInfo>,
}

impl Manifest {
    pub fn path(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_FILE)
    }

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let path = Self::path(dir);
        let text = fs::read_to_string(&path).map_err(|e| DatasetError::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(DatasetError::Schema {
                found: m.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
        let path = Self::path(dir);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| DatasetError::io(&path, e))
    }

    /// Hash of the manifest's canonical JSON.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("manifest serializes").as_bytes())
    }
}

/// Shard file name for shard number `i`.
pub fn shard_name(i: usize) -> String {
    format!("shard-{i:05}.ndjson.gz")
}

/// Write `groups` (one per shard, already in deterministic order) and a
/// manifest into `dir`.
pub fn write_sharded<T: Serialize>(
    dir: &Path,
    groups: &[Vec<T>],
    mut manifest: Manifest,
) -> Result<Manifest, DatasetError> {
    fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
    let mut shards = Vec::new();
    for (i, items) in groups.iter().enumerate() {
        let name = shard_name(i);
        let path = dir.join(&name);
        write_ndjson_gz(&path, items)?;
        let bytes = fs::read(&path).map_err(|e| DatasetError::io(&path, e))?;
        shards.push(ShardInfo {
            file: name,
            records: items.len(),
            sha256: sha256_hex(&bytes),
        });
    }
    manifest.records = shards.iter().map(|s| s.records).sum();
    manifest.shards = shards;
    manifest.schema_version = SCHEMA_VERSION;
    manifest.save(dir)?;
    Ok(manifest)
}

/// Read every shard listed in the manifest of `dir`, in manifest order.
pub fn read_sharded<T: DeserializeOwned>(dir: &Path) -> Result<(Manifest, Vec<T>), DatasetError> {
    let manifest = Manifest::load(dir)?;
    let mut out = Vec::with_capacity(manifest.records);
    for shard in &manifest.shards {
        out.extend(read_ndjson_gz(&dir.join(&shard.file))?);
    }
    Ok((manifest, out))
}
