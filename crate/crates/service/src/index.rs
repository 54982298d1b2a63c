//! On-disk image index: `entries/<id>.json`, `originals/<id>`,
//! `thumbnails/<id>.png`.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use chromaffect::palette::FuzzyPalette;
use chromaffect::scoring::EmotionScores;
use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

pub const THUMBNAIL_SIZE: u32 = 160;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    /// SHA-256 of the original bytes.
    pub id: String,
    /// Source URL, or `upload`.
    pub source: String,
    pub palette: FuzzyPalette,
    /// Display color per palette entry, `#rrggbb`.
    #[serde(default)]
    pub swatches: Vec<String>,
    pub scores: EmotionScores,
    pub predicted: Option<String>,
    /// Digest of the knowledge base the scores were computed with.
    pub kb_digest: String,
    pub thumbnail: String,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("thumbnail: {0}")]
    Image(#[from] image::ImageError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> IndexError + '_ {
    move |source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug)]
pub struct IndexDir {
    root: PathBuf,
}

impl IndexDir {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, IndexError> {
        let root = root.into();
        for sub in ["entries", "originals", "thumbnails"] {
            let d = root.join(sub);
            std::fs::create_dir_all(&d).map_err(io(&d))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, id: &str) -> PathBuf {
        self.root.join("entries").join(format!("{id}.json"))
    }

    pub fn original_path(&self, id: &str) -> PathBuf {
        self.root.join("originals").join(id)
    }

    pub fn thumbnail_path(&self, id: &str) -> PathBuf {
        self.root.join("thumbnails").join(format!("{id}.png"))
    }

    pub fn load_all(&self) -> Result<BTreeMap<String, IndexEntry>, IndexError> {
        let dir = self.root.join("entries");
        let mut out = BTreeMap::new();
        for item in std::fs::read_dir(&dir).map_err(io(&dir))? {
            let path = item.map_err(io(&dir))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            let entry: IndexEntry =
                serde_json::from_str(&text).map_err(|e| IndexError::Malformed {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
            out.insert(entry.id.clone(), entry);
        }
        Ok(out)
    }

    pub fn write_entry(&self, entry: &IndexEntry) -> Result<(), IndexError> {
        let path = self.entry_path(&entry.id);
        let text = serde_json::to_string_pretty(entry).expect("entry serializes");
        write_atomic(&path, text.as_bytes())
    }

    pub fn write_original(&self, id: &str, bytes: &[u8]) -> Result<(), IndexError> {
        write_atomic(&self.original_path(id), bytes)
    }

    pub fn write_thumbnail(&self, id: &str, img: &DynamicImage) -> Result<(), IndexError> {
        let thumb = img.thumbnail(THUMBNAIL_SIZE, THUMBNAIL_SIZE).to_rgb8();
        let mut buf = Cursor::new(Vec::new());
        thumb.write_to(&mut buf, ImageFormat::Png)?;
        write_atomic(&self.thumbnail_path(id), buf.get_ref())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IndexError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io(path))
}
