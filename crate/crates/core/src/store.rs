// SPDX-License-Identifier: Apache-2.0

//! Filesystem-backed object storage.
//!
//! Each object lives at `root/<bucket>/<key>`. Writes go to a temporary file
//! under `root/.tmp` and are renamed into place, so a concurrent reader sees
//! either the previous body or the new one in full. Byte ranges are half-open
//! `[lo, hi)`; cloud range headers are inclusive, callers translating from
//! them must subtract one from the upper bound.

use std::fs::{self, File};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TMP_DIR: &str = ".tmp";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectRef {
    pub bucket: String,
    pub key: String,
    pub size: u64,
}

impl ObjectRef {
    pub fn path(&self) -> String {
        format!("{}/{}", self.bucket, self.key)
    }
}

/// Store-wide transfer counters. Per-task accounting lives in
/// [`crate::executor::TaskContext`].
#[derive(Debug, Default)]
pub struct StoreMetrics {
    pub bytes_read: AtomicU64,
    pub bytes_written: AtomicU64,
    pub reads: AtomicU64,
    pub writes: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub reads: u64,
    pub writes: u64,
}

#[derive(Debug)]
pub struct ObjectStore {
    root: PathBuf,
    metrics: StoreMetrics,
    write_log: Mutex<Vec<String>>,
    tmp_seq: AtomicU64,
    /// Optional simulated transfer rate in bytes per second. Reads and writes
    /// sleep for `len / rate` on top of the real I/O time.
    bandwidth: Option<f64>,
}

impl ObjectStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join(TMP_DIR)).map_err(|source| Error::Storage {
            key: root.display().to_string(),
            source,
        })?;
        Ok(Self {
            root,
            metrics: StoreMetrics::default(),
            write_log: Mutex::new(Vec::new()),
            tmp_seq: AtomicU64::new(0),
            bandwidth: None,
        })
    }

    pub fn with_bandwidth(mut self, bytes_per_sec: Option<f64>) -> Self {
        self.bandwidth = bytes_per_sec.filter(|b| *b > 0.0);
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn object_path(&self, bucket: &str, key: &str) -> Result<PathBuf> {
        validate_name(bucket, "bucket")?;
        validate_name(key, "key")?;
        Ok(self.root.join(bucket).join(key))
    }

    fn throttle(&self, len: u64) {
        if let Some(rate) = self.bandwidth {
            std::thread::sleep(Duration::from_secs_f64(len as f64 / rate));
        }
    }

    pub fn put(&self, bucket: &str, key: &str, data: &[u8]) -> Result<ObjectRef> {
        let dest = self.object_path(bucket, key)?;
        let storage_err = |source| Error::Storage {
            key: format!("{bucket}/{key}"),
            source,
        };
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent).map_err(storage_err)?;
        }
        let seq = self.tmp_seq.fetch_add(1, Ordering::Relaxed);
        let tmp = self.root.join(TMP_DIR).join(format!("{}-{}", std::process::id(), seq));
        {
            let mut f = File::create(&tmp).map_err(storage_err)?;
            f.write_all(data).map_err(storage_err)?;
            f.sync_data().ok();
        }
        fs::rename(&tmp, &dest).map_err(|e| {
            let _ = fs::remove_file(&tmp);
            storage_err(e)
        })?;
        self.throttle(data.len() as u64);
        self.metrics
            .bytes_written
            .fetch_add(data.len() as u64, Ordering::Relaxed);
        self.metrics.writes.fetch_add(1, Ordering::Relaxed);
        self.write_log
            .lock()
            .expect("write log poisoned")
            .push(format!("{bucket}/{key}"));
        Ok(ObjectRef {
            bucket: bucket.to_string(),
            key: key.to_string(),
            size: data.len() as u64,
        })
    }

    pub fn head(&self, bucket: &str, key: &str) -> Result<ObjectRef> {
        let path = self.object_path(bucket, key)?;
        match fs::metadata(&path) {
            Ok(meta) if meta.is_file() => Ok(ObjectRef {
                bucket: bucket.to_string(),
                key: key.to_string(),
                size: meta.len(),
            }),
            Ok(_) => Err(not_found(bucket, key)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(not_found(bucket, key)),
            Err(source) => Err(Error::Storage {
                key: format!("{bucket}/{key}"),
                source,
            }),
        }
    }

    /// Reads the whole current body. A single open means a concurrent
    /// overwrite yields either the old or the new body.
    pub fn get(&self, obj: &ObjectRef) -> Result<Vec<u8>> {
        let path = self.object_path(&obj.bucket, &obj.key)?;
        let mut f = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(not_found(&obj.bucket, &obj.key)),
            Err(source) => {
                return Err(Error::Storage {
                    key: obj.path(),
                    source,
                })
            }
        };
        let mut buf = Vec::with_capacity(obj.size as usize);
        f.read_to_end(&mut buf).map_err(|source| Error::Storage {
            key: obj.path(),
            source,
        })?;
        let len = buf.len() as u64;
        self.throttle(len);
        self.metrics.bytes_read.fetch_add(len, Ordering::Relaxed);
        self.metrics.reads.fetch_add(1, Ordering::Relaxed);
        Ok(buf)
    }

    /// Reads the half-open interval `[lo, hi)`. Intervals are never clamped.
    pub fn get_range(&self, obj: &ObjectRef, lo: u64, hi: u64) -> Result<Vec<u8>> {
        if lo > hi || hi > obj.size {
            return Err(Error::Range {
                key: obj.path(),
                lo,
                hi,
                size: obj.size,
            });
        }
        self.read_range(obj, lo, hi)
    }

    fn read_range(&self, obj: &ObjectRef, lo: u64, hi: u64) -> Result<Vec<u8>> {
        let path = self.object_path(&obj.bucket, &obj.key)?;
        let storage_err = |source| Error::Storage {
            key: obj.path(),
            source,
        };
        let mut f = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(not_found(&obj.bucket, &obj.key)),
            Err(e) => return Err(storage_err(e)),
        };
        let len = hi - lo;
        let mut buf = vec![0u8; len as usize];
        if len > 0 {
            f.seek(SeekFrom::Start(lo)).map_err(storage_err)?;
            f.read_exact(&mut buf).map_err(|e| {
                if e.kind() == std::io::ErrorKind::UnexpectedEof {
                    Error::Range {
                        key: obj.path(),
                        lo,
                        hi,
                        size: obj.size,
                    }
                } else {
                    storage_err(e)
                }
            })?;
        }
        self.throttle(len);
        self.metrics.bytes_read.fetch_add(len, Ordering::Relaxed);
        self.metrics.reads.fetch_add(1, Ordering::Relaxed);
        Ok(buf)
    }

    /// Lexicographically sorted keys in `bucket` starting with `prefix`.
    /// A missing bucket lists as empty.
    pub fn list(&self, bucket: &str, prefix: &str) -> Result<Vec<String>> {
        validate_name(bucket, "bucket")?;
        let base = self.root.join(bucket);
        let mut keys = Vec::new();
        if base.is_dir() {
            collect_keys(&base, String::new(), &mut keys).map_err(|source| Error::Storage {
                key: bucket.to_string(),
                source,
            })?;
        }
        keys.retain(|k| k.starts_with(prefix));
        keys.sort();
        Ok(keys)
    }

    pub fn delete(&self, bucket: &str, key: &str) -> Result<()> {
        let path = self.object_path(bucket, key)?;
        match fs::remove_file(path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(not_found(bucket, key)),
            Err(source) => Err(Error::Storage {
                key: format!("{bucket}/{key}"),
                source,
            }),
        }
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        MetricsSnapshot {
            bytes_read: self.metrics.bytes_read.load(Ordering::Relaxed),
            bytes_written: self.metrics.bytes_written.load(Ordering::Relaxed),
            reads: self.metrics.reads.load(Ordering::Relaxed),
            writes: self.metrics.writes.load(Ordering::Relaxed),
        }
    }

    /// Every `bucket/key` written since the store was opened, in write order.
    pub fn write_log(&self) -> Vec<String> {
        self.write_log.lock().expect("write log poisoned").clone()
    }
}

/// Read access shared by the raw store and the per-task timed view of it.
pub trait ObjectRead {
    fn get(&self, obj: &ObjectRef) -> Result<Vec<u8>>;
    fn get_range(&self, obj: &ObjectRef, lo: u64, hi: u64) -> Result<Vec<u8>>;
}

impl ObjectRead for ObjectStore {
    fn get(&self, obj: &ObjectRef) -> Result<Vec<u8>> {
        ObjectStore::get(self, obj)
    }

    fn get_range(&self, obj: &ObjectRef, lo: u64, hi: u64) -> Result<Vec<u8>> {
        ObjectStore::get_range(self, obj, lo, hi)
    }
}

fn not_found(bucket: &str, key: &str) -> Error {
    Error::NotFound {
        bucket: bucket.to_string(),
        key: key.to_string(),
    }
}

fn validate_name(name: &str, what: &str) -> Result<()> {
    if name.is_empty() {
        return Err(Error::param(format!("{what} must be nonempty")));
    }
    if name.starts_with('/')
        || name.split('/').any(|seg| seg.is_empty() || seg == "." || seg == "..")
        || (what == "bucket" && (name.contains('/') || name == TMP_DIR))
    {
        return Err(Error::param(format!("invalid {what} name {name:?}")));
    }
    Ok(())
}

fn collect_keys(dir: &Path, prefix: String, out: &mut Vec<String>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let key = if prefix.is_empty() {
            name
        } else {
            format!("{prefix}/{name}")
        };
        if entry.file_type()?.is_dir() {
            collect_keys(&entry.path(), key, out)?;
        } else {
            out.push(key);
        }
    }
    Ok(())
}
