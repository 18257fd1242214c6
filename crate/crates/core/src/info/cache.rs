//! Content-addressed store of trained predictors.
//!
//! Each entry is a directory named by its training key holding
//! `predictor.json` and `manifest.json`. Entries are assembled in a private
//! temporary directory and renamed into place, so concurrent writers of the
//! same key race harmlessly: the first rename wins and later ones are
//! discarded.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{decode_predictor, encode_predictor, FamilyConfig, Predictor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub key: String,
    pub created_unix: u64,
    pub train_hash: String,
    pub transform: String,
    pub transform_hash: String,
    pub config: FamilyConfig,
}

#[derive(Debug, Clone)]
pub struct PredictorCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl PredictorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        PredictorCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry(&self, key: &str) -> PathBuf {
        self.dir.join(key)
    }

    /// A cached predictor, or `None` if absent or unreadable.
    pub fn get(&self, key: &str) -> Option<Predictor> {
        let text = fs::read_to_string(self.entry(key).join("predictor.json")).ok()?;
        decode_predictor(&text).ok()
    }

    /// Store a predictor unless the key is already present.
    pub fn put(&self, pred: &Predictor, manifest: &CacheManifest) -> Result<()> {
        let target = self.entry(&manifest.key);
        if target.exists() {
            return Ok(());
        }
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let tmp = self.dir.join(format!(
            ".tmp-{}-{}-{}",
            manifest.key,
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let write = |name: &str, body: String| {
            let path = tmp.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))
        };
        let result = (|| {
            write("predictor.json", encode_predictor(pred)?)?;
            write(
                "manifest.json",
                serde_json::to_string_pretty(manifest).expect("manifests serialize"),
            )?;
            if fs::rename(&tmp, &target).is_err() && !target.exists() {
                return Err(Error::Config(format!("cannot publish cache entry {}", target.display())));
            }
            Ok(())
        })();
        let _ = fs::remove_dir_all(&tmp);
        result
    }
}

pub(crate) fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
