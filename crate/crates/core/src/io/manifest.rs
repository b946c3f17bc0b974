use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::image::load_grayscale;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!(
                "unknown split {other:?} (expected train, val or test)"
            )),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub split: Split,
    /// Relative to the manifest's base directory.
    pub path: PathBuf,
    pub name: Option<String>,
}

impl ManifestEntry {
    /// Explicit name, else the file stem.
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path.file_stem().map_or_else(
                || self.path.display().to_string(),
                |s| s.to_string_lossy().into_owned(),
            )
        })
    }
}

/// Image list with split labels. Text form: one `<split>\t<relative-path>`
/// entry per line, with an optional third `\t<name>` field; blank lines and
/// `#` comments are ignored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base, path)
    }

    /// Parses manifest text; `origin` is only used in error messages.
    pub fn parse(text: &str, base_dir: PathBuf, origin: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |detail: String| Error::Manifest {
                path: origin.to_path_buf(),
                line: i + 1,
                detail,
            };
            let mut fields = line.split('\t');
            let split = fields
                .next()
                .unwrap_or_default()
                .trim()
                .parse::<Split>()
                .map_err(err)?;
            let rel = fields
                .next()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| err("missing path field".into()))?;
            let name = fields
                .next()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty());
            if fields.next().is_some() {
                return Err(err("too many fields".into()));
            }
            entries.push(ManifestEntry {
                split,
                path: PathBuf::from(rel),
                name,
            });
        }
        let manifest = DatasetManifest { base_dir, entries };
        manifest.check_disjoint(origin)?;
        Ok(manifest)
    }

    fn check_disjoint(&self, origin: &Path) -> Result<()> {
        let mut seen: HashMap<&Path, Split> = HashMap::new();
        for e in &self.entries {
            if let Some(prev) = seen.insert(&e.path, e.split) {
                if prev != e.split {
                    return Err(Error::Manifest {
                        path: origin.to_path_buf(),
                        line: 0,
                        detail: format!(
                            "{} appears in both {prev} and {}",
                            e.path.display(),
                            e.split
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| match &e.name {
                Some(n) => format!("{}\t{}\t{n}\n", e.split, e.path.display()),
                None => format!("{}\t{}\n", e.split, e.path.display()),
            })
            .collect()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.path)
    }

    /// Loads every image of a split as `(name, image)` pairs.
    pub fn load_split<T: Scalar>(&self, split: Split) -> Result<Vec<(String, Tensor<T>)>> {
        self.split(split)
            .map(|e| Ok((e.display_name(), load_grayscale(self.resolve(e))?)))
            .collect()
    }
}
