//! On-disk spectrum cache keyed by the content hash of a [`SpinChainSpec`].
//!
//! File layout (`<spec-hash>.spectrum`), all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "CFSPECTR"
//! version    u32
//! length     u32      chain length L
//! flags      u32      bit 0: eigenvectors carry an imaginary part
//! dim        u64
//! spec_hash  32 bytes SHA-256 of the canonical spec JSON
//! data_hash  32 bytes SHA-256 of everything after the header
//! energies   dim × f64
//! vectors    dim × dim × f64, one eigenvector after another (column-major)
//! vectors_im same again, only when flag bit 0 is set
//! ```
//!
//! Only β-independent data is cached. A sidecar `<spec-hash>.json` holds the
//! spec itself so `ls` can describe entries without reading payloads.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use faer::Mat;
use log::{debug, info};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::spectral::{diagonalize, Spectrum};
use crate::spinchain::{build_hamiltonian, hex, SpinChainSpec};

pub const CACHE_ENV: &str = "CORRFLOW_CACHE_DIR";
const DEFAULT_DIR: &str = ".corrflow-cache";
const MAGIC: &[u8; 8] = b"CFSPECTR";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 4 + 8 + 32 + 32;
const EXT: &str = "spectrum";

#[derive(Clone, Debug)]
pub struct SpectrumCache {
    dir: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
pub struct CacheEntry {
    pub path: PathBuf,
    pub spec_hash: String,
    pub data_hash: String,
    pub length: u32,
    pub dim: u64,
    pub complex: bool,
    pub bytes: u64,
    pub spec: Option<SpinChainSpec>,
}

/// Where a spectrum came from.
#[derive(Clone, Debug, Serialize)]
pub struct CacheOutcome {
    pub hit: bool,
    pub path: Option<PathBuf>,
    pub spec_hash: String,
    pub data_hash: Option<String>,
}

struct Header {
    length: u32,
    complex: bool,
    dim: u64,
    spec_hash: [u8; 32],
    data_hash: [u8; 32],
}

impl Header {
    fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HEADER_LEN);
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&self.length.to_le_bytes());
        b.extend_from_slice(&(self.complex as u32).to_le_bytes());
        b.extend_from_slice(&self.dim.to_le_bytes());
        b.extend_from_slice(&self.spec_hash);
        b.extend_from_slice(&self.data_hash);
        b
    }

    fn decode(b: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::CacheCorruption {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if b.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        if &b[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        if u32_at(8) != VERSION {
            return Err(bad(&format!("unsupported version {}", u32_at(8))));
        }
        let flags = u32_at(16);
        if flags > 1 {
            return Err(bad("unknown flag bits"));
        }
        Ok(Self {
            length: u32_at(12),
            complex: flags & 1 == 1,
            dim: u64::from_le_bytes(b[20..28].try_into().unwrap()),
            spec_hash: b[28..60].try_into().unwrap(),
            data_hash: b[60..92].try_into().unwrap(),
        })
    }
}

fn spec_digest(spec: &SpinChainSpec) -> [u8; 32] {
    Sha256::digest(serde_json::to_vec(spec).expect("spec serializes")).into()
}

impl SpectrumCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Directory from `CORRFLOW_CACHE_DIR`, else `./.corrflow-cache`.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(CACHE_ENV).map_or_else(|| PathBuf::from(DEFAULT_DIR), PathBuf::from))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, spec: &SpinChainSpec) -> PathBuf {
        self.dir.join(format!("{}.{EXT}", spec.content_hash()))
    }

    pub fn store(&self, spec: &SpinChainSpec, s: &Spectrum) -> Result<(PathBuf, String)> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(spec);
        let n = s.dim();
        let complex = !s.vectors.is_real();

        // Hash first so the header can be written in one pass.
        let mut hasher = Sha256::new();
        for_each_payload_chunk(s, |chunk| hasher.update(chunk));
        let data_hash: [u8; 32] = hasher.finalize().into();

        let header = Header {
            length: spec.length as u32,
            complex,
            dim: n as u64,
            spec_hash: spec_digest(spec),
            data_hash,
        };
        let tmp = path.with_extension(format!("{EXT}.tmp{}", std::process::id()));
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(&header.encode())?;
            let mut err = None;
            for_each_payload_chunk(s, |chunk| {
                if err.is_none() {
                    err = w.write_all(chunk).err();
                }
            });
            if let Some(e) = err {
                return Err(e.into());
            }
            w.flush()?;
        }
        fs::rename(&tmp, &path)?;
        fs::write(path.with_extension("json"), serde_json::to_vec_pretty(spec)?)?;
        info!("cached spectrum L={} at {}", spec.length, path.display());
        Ok((path, hex(&data_hash)))
    }

    /// `Ok(None)` when no entry exists; any mismatch is [`Error::CacheCorruption`].
    pub fn load(&self, spec: &SpinChainSpec) -> Result<Option<(Spectrum, String)>> {
        let path = self.path_for(spec);
        if !path.exists() {
            return Ok(None);
        }
        let bad = |reason: String| Error::CacheCorruption {
            path: path.clone(),
            reason,
        };
        let mut r = BufReader::with_capacity(1 << 20, File::open(&path)?);
        let mut hb = [0u8; HEADER_LEN];
        r.read_exact(&mut hb).map_err(|_| bad("truncated header".into()))?;
        let header = Header::decode(&hb, &path)?;
        if header.spec_hash != spec_digest(spec) {
            return Err(bad("spec hash does not match the requested spec".into()));
        }
        if header.length as usize != spec.length || header.dim != spec.dim() as u64 {
            return Err(bad(format!(
                "header says L={} dim={}, spec wants L={}",
                header.length, header.dim, spec.length
            )));
        }
        let n = header.dim as usize;
        let mut hasher = Sha256::new();
        let mut buf = vec![0u8; 8 * n];
        let mut next_col = |r: &mut BufReader<File>| -> Result<Vec<f64>> {
            r.read_exact(&mut buf).map_err(|_| bad("truncated payload".into()))?;
            hasher.update(&buf);
            Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let energies = next_col(&mut r)?;
        let mut read_mat = |r: &mut BufReader<File>| -> Result<Mat<f64>> {
            let mut m = Mat::<f64>::zeros(n, n);
            for j in 0..n {
                let col = next_col(r)?;
                for (i, v) in col.into_iter().enumerate() {
                    m[(i, j)] = v;
                }
            }
            Ok(m)
        };
        let re = read_mat(&mut r)?;
        let im = if header.complex { Some(read_mat(&mut r)?) } else { None };
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(bad("trailing bytes after payload".into()));
        }
        let digest: [u8; 32] = hasher.finalize().into();
        if digest != header.data_hash {
            return Err(bad("payload hash mismatch".into()));
        }
        if energies.windows(2).any(|w| w[0] > w[1]) {
            return Err(bad("energies not ascending".into()));
        }
        debug!("cache hit {}", path.display());
        Ok(Some((
            Spectrum {
                energies,
                vectors: ComplexMatrix::from_parts(re, im),
            },
            hex(&digest),
        )))
    }

    /// Loads the cached spectrum or diagonalizes and stores it.
    pub fn load_or_compute(&self, spec: &SpinChainSpec) -> Result<(Spectrum, CacheOutcome)> {
        let spec_hash = spec.content_hash();
        if let Some((s, data_hash)) = self.load(spec)? {
            return Ok((
                s,
                CacheOutcome {
                    hit: true,
                    path: Some(self.path_for(spec)),
                    spec_hash,
                    data_hash: Some(data_hash),
                },
            ));
        }
        let s = diagonalize(&build_hamiltonian(spec)?)?;
        let (path, data_hash) = self.store(spec, &s)?;
        Ok((
            s,
            CacheOutcome {
                hit: false,
                path: Some(path),
                spec_hash,
                data_hash: Some(data_hash),
            },
        ))
    }

    pub fn list(&self) -> Result<Vec<CacheEntry>> {
        let mut out = Vec::new();
        if !self.dir.exists() {
            return Ok(out);
        }
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some(EXT) {
                continue;
            }
            let mut hb = [0u8; HEADER_LEN];
            File::open(&path)?.read_exact(&mut hb).map_err(|_| Error::CacheCorruption {
                path: path.clone(),
                reason: "truncated header".into(),
            })?;
            let h = Header::decode(&hb, &path)?;
            let spec = fs::read(path.with_extension("json"))
                .ok()
                .and_then(|b| serde_json::from_slice(&b).ok());
            out.push(CacheEntry {
                bytes: fs::metadata(&path)?.len(),
                spec_hash: hex(&h.spec_hash),
                data_hash: hex(&h.data_hash),
                length: h.length,
                dim: h.dim,
                complex: h.complex,
                spec,
                path,
            });
        }
        out.sort_by(|a, b| (a.length, &a.spec_hash).cmp(&(b.length, &b.spec_hash)));
        Ok(out)
    }

    /// Removes entries whose spec hash starts with `prefix` (all when `None`).
    pub fn remove(&self, prefix: Option<&str>) -> Result<usize> {
        let mut removed = 0;
        for e in self.list()? {
            if prefix.is_none_or(|p| e.spec_hash.starts_with(p)) {
                fs::remove_file(&e.path)?;
                let _ = fs::remove_file(e.path.with_extension("json"));
                removed += 1;
            }
        }
        Ok(removed)
    }
}

fn for_each_payload_chunk(s: &Spectrum, mut f: impl FnMut(&[u8])) {
    let n = s.dim();
    let mut buf = Vec::with_capacity(8 * n);
    let mut emit = |vals: &mut dyn Iterator<Item = f64>| {
        buf.clear();
        vals.for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
        f(&buf);
    };
    emit(&mut s.energies.iter().copied());
    let re = s.vectors.re();
    for j in 0..n {
        emit(&mut (0..n).map(|i| re[(i, j)]));
    }
    if let Some(im) = s.vectors.im() {
        for j in 0..n {
            emit(&mut (0..n).map(|i| im[(i, j)]));
        }
    }
}
