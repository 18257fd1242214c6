//! Output directories: every file written is recorded in `manifest.json`
//! with its SHA-256, except wall-clock files marked volatile.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dcheck_core::checklist::ToolInfo;
use dcheck_core::hashing::sha256_hex;
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputManifest {
    pub tool: ToolInfo,
    pub command: String,
    pub files: Vec<FileEntry>,
    /// Files whose content differs between identical runs (timings).
    pub volatile: Vec<String>,
}

pub struct OutputDir {
    root: PathBuf,
    command: String,
    files: Vec<FileEntry>,
    volatile: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            command: command.into(),
            files: Vec::new(),
            volatile: Vec::new(),
        })
    }

    pub fn path(&self, rel: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(path)
    }

    /// Record a file some other writer produced at `rel`.
    pub fn record(&mut self, rel: &str) -> Result<()> {
        let bytes = fs::read(self.root.join(rel)).with_context(|| format!("reading back {rel}"))?;
        if self.files.iter().any(|f| f.path == rel) {
            bail!("output file {rel} written twice");
        }
        self.files.push(FileEntry {
            path: rel.into(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(rel)?;
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record(rel)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.bytes(rel, &pretty(value)?)
    }

    pub fn volatile_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        let path = self.path(rel)?;
        fs::write(&path, pretty(value)?).with_context(|| format!("writing {}", path.display()))?;
        self.volatile.push(rel.into());
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = OutputManifest {
            tool: ToolInfo::current(),
            command: self.command.clone(),
            files: self.files.clone(),
            volatile: self.volatile.clone(),
        };
        let path = self.root.join(MANIFEST);
        fs::write(&path, pretty(&manifest)?).with_context(|| format!("writing {}", path.display()))
    }
}

fn pretty<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Check every recorded file against its digest.
pub fn verify(root: &Path) -> Result<OutputManifest> {
    let path = root.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: OutputManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    for f in &manifest.files {
        let bytes = fs::read(root.join(&f.path)).with_context(|| format!("reading {}", f.path))?;
        if sha256_hex(&bytes) != f.sha256 {
            bail!("{} does not match its manifest digest", f.path);
        }
    }
    Ok(manifest)
}

/// A file-name-safe form of a test id.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PviStats {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// 10th through 90th percentiles, linearly interpolated.
    pub deciles: Vec<f64>,
}

pub fn pvi_stats(values: &[f64]) -> Option<PviStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let pos = q * (sorted.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    Some(PviStats {
        n: values.len(),
        mean: dcheck_core::info::mean(values.iter().copied()),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        deciles: (1..10).map(|d| quantile(d as f64 / 10.0)).collect(),
    })
}

/// `bin_lo,bin_hi,count` rows over equal-width bins spanning the data.
pub fn histogram_csv(values: &[f64], bins: usize) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    let Some(stats) = pvi_stats(values) else {
        return out;
    };
    let bins = if stats.max > stats.min { bins.max(1) } else { 1 };
    let width = (stats.max - stats.min) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        let i = if width > 0.0 { ((v - stats.min) / width) as usize } else { 0 };
        counts[i.min(bins - 1)] += 1;
    }
    for (i, c) in counts.iter().enumerate() {
        let lo = stats.min + width * i as f64;
        let hi = if i + 1 == bins { stats.max } else { stats.min + width * (i + 1) as f64 };
        out.push_str(&format!("{lo},{hi},{c}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_and_histogram() {
        let values: Vec<f64> = (0..=10).map(f64::from).collect();
        let s = pvi_stats(&values).unwrap();
        assert_eq!((s.min, s.max, s.mean), (0.0, 10.0, 5.0));
        assert_eq!(s.deciles, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let h = histogram_csv(&values, 2);
        assert_eq!(h, "bin_lo,bin_hi,count\n0,5,5\n5,10,6\n");
        assert_eq!(histogram_csv(&[1.0, 1.0], 4), "bin_lo,bin_hi,count\n1,1,2\n");
        assert!(pvi_stats(&[]).is_none());
    }

    #[test]
    fn stems_are_safe() {
        assert_eq!(file_stem("applicability-2"), "applicability-2");
        assert_eq!(file_stem("a/b c"), "a_b_c");
    }

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "run").unwrap();
        out.bytes("a/b.txt", b"hello").unwrap();
        out.volatile_json("t.json", &[1.5]).unwrap();
        assert!(out.record("a/b.txt").is_err());
        out.finish().unwrap();
        let m = verify(dir.path()).unwrap();
        assert_eq!(m.files.len(), 1);
        assert_eq!(m.volatile, ["t.json"]);
        fs::write(dir.path().join("a/b.txt"), b"bye").unwrap();
        assert!(verify(dir.path()).is_err());
    }
}
