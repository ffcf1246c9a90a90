use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::codec::load_image;
use super::image::ImageBuffer;
use super::resize::resize_to_budget;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: String,
    pub width: usize,
    pub height: usize,
    pub category: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
    /// Directory relative entry paths are resolved against.
    pub base_dir: PathBuf,
}

impl CorpusManifest {
    pub fn new(seed: u64, entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(Error::Format(format!("duplicate image_id {}", e.image_id)));
            }
        }
        Ok(Self {
            seed,
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.path);
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn categories(&self) -> BTreeMap<&str, Option<&str>> {
        self.entries
            .iter()
            .map(|e| (e.image_id.as_str(), e.category.as_deref()))
            .collect()
    }

    /// JSON-lines text: a `{"seed":..}` header, then one object per entry.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Header { seed: self.seed }).expect("header");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty manifest".into()))?;
        let header: Header = serde_json::from_str(header)
            .map_err(|e| Error::Format(format!("manifest header: {e}")))?;
        let entries = lines
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| Error::Format(format!("manifest line {}: {e}", i + 2)))
            })
            .collect::<Result<Vec<ManifestEntry>>>()?;
        Self::new(header.seed, entries, base_dir)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_owned).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Decoded images of a manifest, in manifest order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub images: Vec<ImageBuffer>,
}

impl Corpus {
    /// Decodes every entry, optionally bringing each into a pixel budget.
    pub fn load(manifest: CorpusManifest, budget: Option<(usize, usize)>) -> Result<Self> {
        let images = manifest
            .entries
            .iter()
            .map(|e| {
                let img = load_image(manifest.resolve(e))?;
                match budget {
                    Some((lo, hi)) => resize_to_budget(&img, lo, hi),
                    None => Ok(img),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, images })
    }

    pub fn from_manifest_path(path: impl AsRef<Path>, budget: Option<(usize, usize)>) -> Result<Self> {
        Self::load(CorpusManifest::load(path)?, budget)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.manifest.entries[index].image_id
    }

    pub fn index_of(&self, image_id: &str) -> Option<usize> {
        self.manifest
            .entries
            .iter()
            .position(|e| e.image_id == image_id)
    }
}
