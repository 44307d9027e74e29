//! Persisted per-fold feature tables: a columnar binary file
//! (`pairs.bin`) and a JSON sidecar carrying the feature order, the
//! binning spec and the statistics digest so later stages can prove what
//! the features were computed from.

use crate::error::{Error, Result};
use crate::features::{binning::BinningSpec, dense_feature_names, sparse_feature_names, F0Vector};
use crate::util;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::io::{Cursor, Read};
use std::path::Path;

const MAGIC: &[u8; 8] = b"SPLPAIRS";
const VERSION: u32 = 1;

/// In-memory view of one fold's extracted pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairTable {
    pub cve_ids: Vec<String>,
    pub commit_ids: Vec<String>,
    pub labels: Vec<bool>,
    /// column-major: `scalars[f][i]` = feature f of pair i, ordered
    /// sparse-then-dense as in the schema.
    pub scalars: Vec<Vec<f64>>,
    /// row-major (n_pairs x embed_dim)
    pub embed_cve: Vec<Vec<f64>>,
    pub embed_commit: Vec<Vec<f64>>,
}

impl PairTable {
    pub fn len(&self) -> usize {
        self.cve_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cve_ids.is_empty()
    }

    pub fn push(&mut self, cve_id: &str, commit_id: &str, label: bool, f0: &F0Vector) {
        let names: Vec<&str> = sparse_feature_names()
            .into_iter()
            .chain(dense_feature_names())
            .collect();
        if self.scalars.is_empty() {
            self.scalars = vec![Vec::new(); names.len()];
        }
        for (column, name) in self.scalars.iter_mut().zip(names) {
            column.push(f0.get(name));
        }
        self.cve_ids.push(cve_id.to_string());
        self.commit_ids.push(commit_id.to_string());
        self.labels.push(label);
        self.embed_cve.push(f0.text_embed_cve.clone());
        self.embed_commit.push(f0.text_embed_commit.clone());
    }

    /// Rebuild the i-th pair's feature vector.
    pub fn f0(&self, i: usize) -> F0Vector {
        let mut sparse = IndexMap::new();
        let mut dense = IndexMap::new();
        let sparse_names = sparse_feature_names();
        for (f, name) in sparse_names.iter().enumerate() {
            sparse.insert(name.to_string(), self.scalars[f][i]);
        }
        for (f, name) in dense_feature_names().iter().enumerate() {
            dense.insert(name.to_string(), self.scalars[sparse_names.len() + f][i]);
        }
        F0Vector {
            sparse,
            dense,
            text_embed_cve: self.embed_cve[i].clone(),
            text_embed_commit: self.embed_commit[i].clone(),
        }
    }

    /// Indices of all pairs belonging to `cve_id`, in stored order.
    pub fn rows_of_cve(&self, cve_id: &str) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.cve_ids[i] == cve_id).collect()
    }
}

/// Schema + provenance written next to `pairs.bin`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: u32,
    pub fold: usize,
    /// scalar feature order in the binary file (sparse block then dense)
    pub feature_order: Vec<String>,
    pub realized_scalar_count: usize,
    pub n_bins: usize,
    pub binning: BinningSpec,
    pub embed_dim: usize,
    pub embed_provider: String,
    /// SHA-256 of the serialized corpus statistics the features were
    /// extracted with (the idf table version).
    pub stats_digest: String,
    pub train_cves: Vec<String>,
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a>(Cursor<&'a [u8]>);

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.0
            .read_exact(&mut b)
            .map_err(|e| Error::io("pairs.bin", e))?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.0
            .read_exact(&mut b)
            .map_err(|e| Error::io("pairs.bin", e))?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let mut b = vec![0u8; len];
        self.0
            .read_exact(&mut b)
            .map_err(|e| Error::io("pairs.bin", e))?;
        String::from_utf8(b).map_err(|e| Error::Checkpoint(format!("non-utf8 string: {e}")))
    }
}

/// Write `pairs.bin` and `sidecar.json` into `dir`.
pub fn save(dir: &Path, table: &PairTable, sidecar: &Sidecar) -> Result<()> {
    let n = table.len();
    let n_scalars = table.scalars.len();
    let embed_dim = sidecar.embed_dim;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    put_u64(&mut buf, n as u64);
    put_u32(&mut buf, n_scalars as u32);
    put_u32(&mut buf, embed_dim as u32);
    for i in 0..n {
        put_str(&mut buf, &table.cve_ids[i]);
        put_str(&mut buf, &table.commit_ids[i]);
        buf.push(table.labels[i] as u8);
    }
    for column in &table.scalars {
        debug_assert_eq!(column.len(), n);
        for &v in column {
            put_u64(&mut buf, v.to_bits());
        }
    }
    for row in table.embed_cve.iter().chain(table.embed_commit.iter()) {
        debug_assert_eq!(row.len(), embed_dim);
        for &v in row {
            put_u64(&mut buf, v.to_bits());
        }
    }
    util::atomic_write(&dir.join("pairs.bin"), &buf)?;
    util::atomic_write(
        &dir.join("sidecar.json"),
        serde_json::to_string_pretty(sidecar)?.as_bytes(),
    )?;
    Ok(())
}

/// Load a fold's feature table and sidecar back from `dir`.
pub fn load(dir: &Path) -> Result<(PairTable, Sidecar)> {
    let sidecar: Sidecar =
        serde_json::from_slice(&util::read_file(&dir.join("sidecar.json"))?)?;
    let bytes = util::read_file(&dir.join("pairs.bin"))?;
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("pairs.bin: bad magic".into()));
    }
    let mut r = Reader(Cursor::new(&bytes[8..]));
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("pairs.bin: unsupported version {version}")));
    }
    let n = r.u64()? as usize;
    let n_scalars = r.u32()? as usize;
    let embed_dim = r.u32()? as usize;
    let mut table = PairTable::default();
    for _ in 0..n {
        table.cve_ids.push(r.string()?);
        table.commit_ids.push(r.string()?);
        let mut b = [0u8; 1];
        r.0.read_exact(&mut b).map_err(|e| Error::io("pairs.bin", e))?;
        table.labels.push(b[0] != 0);
    }
    for _ in 0..n_scalars {
        let mut column = Vec::with_capacity(n);
        for _ in 0..n {
            column.push(r.f64()?);
        }
        table.scalars.push(column);
    }
    let read_rows = |r: &mut Reader| -> Result<Vec<Vec<f64>>> {
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row = Vec::with_capacity(embed_dim);
            for _ in 0..embed_dim {
                row.push(r.f64()?);
            }
            rows.push(row);
        }
        Ok(rows)
    };
    table.embed_cve = read_rows(&mut r)?;
    table.embed_commit = read_rows(&mut r)?;
    Ok((table, sidecar))
}
