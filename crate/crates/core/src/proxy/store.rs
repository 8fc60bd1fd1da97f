//! Spool-directory blob store: one file per id.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};
use tempfile::TempDir;

use crate::error::{Error, ProxyError, Result};
use crate::model::DataId;
use crate::services::Payload;

#[derive(Debug, Clone, Copy)]
struct Entry {
    len: u64,
    hash: [u8; 32],
    sized: bool,
}

/// Persists payloads under `<dir>/<uuid>.blob`, or `<uuid>.sized` for
/// payloads that only carry a length and digest. Writes go through a
/// temporary file and a rename so a crash never leaves a torn blob.
pub struct BlobStore {
    dir: PathBuf,
    quota: Option<u64>,
    inner: Mutex<Inner>,
    _temp: Option<TempDir>,
}

#[derive(Default)]
struct Inner {
    index: HashMap<DataId, Entry>,
    used: u64,
}

impl BlobStore {
    /// Opens `dir`, creating it if needed, and indexes any blobs already there.
    pub fn open(dir: impl Into<PathBuf>, quota: Option<u64>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut inner = Inner::default();
        for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            let Some((id, ext)) = parse_name(&path) else { continue };
            let e = match ext {
                "blob" => {
                    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                    Entry { len: bytes.len() as u64, hash: Sha256::digest(&bytes).into(), sized: false }
                }
                "sized" => {
                    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    let Some((len, digest)) = parse_descriptor(&text) else { continue };
                    Entry { len, hash: digest, sized: true }
                }
                _ => continue,
            };
            inner.used += e.len;
            inner.index.insert(id, e);
        }
        Ok(Self { dir, quota, inner: Mutex::new(inner), _temp: None })
    }

    /// A store in a fresh temporary directory, removed on drop.
    pub fn temporary(quota: Option<u64>) -> Result<Self> {
        let temp = tempfile::Builder::new()
            .prefix("circulate-spool-")
            .tempdir()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let mut store = Self::open(temp.path(), quota)?;
        store._temp = Some(temp);
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Stores `payload` under `id`. Re-storing an identical payload is a no-op;
    /// a different payload under a bound id is refused.
    pub fn put(&self, id: DataId, payload: &Payload) -> Result<(), ProxyError> {
        let hash = payload.content_hash();
        let len = payload.len();
        let mut inner = self.inner.lock().unwrap();
        if let Some(e) = inner.index.get(&id) {
            return if e.hash == hash && e.len == len {
                Ok(())
            } else {
                Err(ProxyError::service_invocation(format!("{id} is already bound to a different payload")))
            };
        }
        if let Some(q) = self.quota {
            if inner.used + len > q {
                return Err(ProxyError::service_invocation(format!(
                    "spool full: {len} bytes requested, {} of {q} in use",
                    inner.used
                )));
            }
        }
        let (ext, body): (&str, std::borrow::Cow<[u8]>) = match payload {
            Payload::Bytes(b) => ("blob", b.as_slice().into()),
            Payload::Sized { len, digest } => ("sized", format!("{len} {}\n", hex::encode(digest)).into_bytes().into()),
        };
        let path = self.dir.join(format!("{id}.{ext}"));
        let tmp = self.dir.join(format!(".{id}.tmp"));
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&body)?;
            fs::rename(&tmp, &path)
        };
        write().map_err(|e| {
            let _ = fs::remove_file(&tmp);
            ProxyError::service_invocation(format!("writing {}: {e}", path.display()))
        })?;
        inner.used += len;
        inner.index.insert(id, Entry { len, hash, sized: payload.is_sized() });
        Ok(())
    }

    pub fn get(&self, id: &DataId) -> Result<Payload, ProxyError> {
        let e = self.entry(id)?;
        if e.sized {
            return Ok(Payload::Sized { len: e.len, digest: e.hash });
        }
        let path = self.dir.join(format!("{id}.blob"));
        fs::read(&path)
            .map(Payload::Bytes)
            .map_err(|err| ProxyError::service_invocation(format!("reading {}: {err}", path.display())))
    }

    pub fn len_of(&self, id: &DataId) -> Result<u64, ProxyError> {
        self.entry(id).map(|e| e.len)
    }

    pub fn contains(&self, id: &DataId) -> bool {
        self.inner.lock().unwrap().index.contains_key(id)
    }

    fn entry(&self, id: &DataId) -> Result<Entry, ProxyError> {
        self.inner
            .lock()
            .unwrap()
            .index
            .get(id)
            .copied()
            .ok_or_else(|| ProxyError::variable_not_found(format!("no data with id {id}")))
    }

    /// Removes every id or none of them.
    pub fn remove_all(&self, ids: &[DataId]) -> Result<(), ProxyError> {
        let mut inner = self.inner.lock().unwrap();
        if let Some(missing) = ids.iter().find(|id| !inner.index.contains_key(id)) {
            return Err(ProxyError::variable_not_found(format!("no data with id {missing}")));
        }
        for id in ids {
            if let Some(e) = inner.index.remove(id) {
                inner.used -= e.len;
                let ext = if e.sized { "sized" } else { "blob" };
                let _ = fs::remove_file(self.dir.join(format!("{id}.{ext}")));
            }
        }
        Ok(())
    }

    pub fn ids(&self) -> Vec<DataId> {
        let mut ids: Vec<_> = self.inner.lock().unwrap().index.keys().copied().collect();
        ids.sort();
        ids
    }

    pub fn count(&self) -> usize {
        self.inner.lock().unwrap().index.len()
    }

    /// Logical bytes held.
    pub fn used_bytes(&self) -> u64 {
        self.inner.lock().unwrap().used
    }
}

fn parse_name(path: &Path) -> Option<(DataId, &str)> {
    let stem = path.file_stem()?.to_str()?;
    let ext = path.extension()?.to_str()?;
    Some((stem.parse().ok()?, ext))
}

fn parse_descriptor(text: &str) -> Option<(u64, [u8; 32])> {
    let (len, digest) = text.trim().split_once(' ')?;
    let mut out = [0u8; 32];
    hex::decode_to_slice(digest, &mut out).ok()?;
    Some((len.parse().ok()?, out))
}
