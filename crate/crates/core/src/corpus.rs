//! Image acquisition and the parallel knowledge-base build over an
//! annotated corpus.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::annotations::ImageRef;
use crate::color::{BasicColorMapping, FuzzyColorSpace};
use crate::emotion::EmotionLabel;
use crate::error::{Error, Result};
use crate::kb::{BuildParams, KnowledgeBase, PaletteAggregator};
use crate::palette::{image_palette, FuzzyPalette, ResizeFilter};

/// Environment variable naming the fetch cache directory.
pub const CACHE_DIR_ENV: &str = "CHROMAFFECT_CACHE_DIR";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Somewhere image bytes come from.
pub trait ImageSource: Sync {
    fn fetch(&self, image: &ImageRef) -> Result<Vec<u8>>;
}

/// Images stored as `<id>.jpg`, `<id>.jpeg` or `<id>.png` in one directory.
#[derive(Clone, Debug)]
pub struct LocalDir {
    root: PathBuf,
}

impl LocalDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl ImageSource for LocalDir {
    fn fetch(&self, image: &ImageRef) -> Result<Vec<u8>> {
        for ext in ["jpg", "jpeg", "png", "JPG", "JPEG", "PNG"] {
            let path = self.root.join(format!("{}.{ext}", image.id));
            if path.is_file() {
                return std::fs::read(&path).map_err(|e| Error::io(path, e));
            }
        }
        Err(Error::Input(format!(
            "no image file for {} in {}",
            image.id,
            self.root.display()
        )))
    }
}

/// In-memory images keyed by id.
#[derive(Clone, Debug, Default)]
pub struct MemorySource(pub HashMap<String, Vec<u8>>);

impl ImageSource for MemorySource {
    fn fetch(&self, image: &ImageRef) -> Result<Vec<u8>> {
        self.0
            .get(&image.id)
            .cloned()
            .ok_or_else(|| Error::Input(format!("no image for {}", image.id)))
    }
}

/// HTTP GET by URL with a content-addressed on-disk cache:
/// `blobs/<sha256 of content>` and `refs/<sha256 of url>` holding the
/// content hash. A rerun reuses everything already fetched.
pub struct FetchClient {
    cache: PathBuf,
    // built on first network use; the blocking client owns a runtime and
    // must not be created inside an async context
    http: OnceLock<std::result::Result<reqwest::blocking::Client, String>>,
}

impl FetchClient {
    pub fn new(cache: impl Into<PathBuf>) -> Result<Self> {
        let cache = cache.into();
        for sub in ["blobs", "refs"] {
            let dir = cache.join(sub);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(Self {
            cache,
            http: OnceLock::new(),
        })
    }

    /// Cache directory from `CHROMAFFECT_CACHE_DIR`, else `./.chromaffect-cache`.
    pub fn default_cache_dir() -> PathBuf {
        std::env::var_os(CACHE_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".chromaffect-cache"))
    }

    pub fn cache_dir(&self) -> &Path {
        &self.cache
    }

    fn ref_path(&self, url: &str) -> PathBuf {
        self.cache.join("refs").join(sha256_hex(url.as_bytes()))
    }

    fn blob_path(&self, hash: &str) -> PathBuf {
        self.cache.join("blobs").join(hash)
    }

    /// Cached bytes for a URL, if present and intact.
    pub fn cached(&self, url: &str) -> Option<Vec<u8>> {
        let hash = std::fs::read_to_string(self.ref_path(url)).ok()?;
        let bytes = std::fs::read(self.blob_path(hash.trim())).ok()?;
        (sha256_hex(&bytes) == hash.trim()).then_some(bytes)
    }

    pub fn store(&self, url: &str, bytes: &[u8]) -> Result<String> {
        let hash = sha256_hex(bytes);
        let blob = self.blob_path(&hash);
        if !blob.exists() {
            write_atomic(&blob, bytes)?;
        }
        write_atomic(&self.ref_path(url), hash.as_bytes())?;
        Ok(hash)
    }

    pub fn get(&self, url: &str) -> Result<Vec<u8>> {
        if let Some(bytes) = self.cached(url) {
            return Ok(bytes);
        }
        let fail = |reason: String| Error::Fetch {
            url: url.to_string(),
            reason,
        };
        let http = self
            .http
            .get_or_init(|| {
                reqwest::blocking::Client::builder()
                    .timeout(Duration::from_secs(60))
                    .user_agent(concat!("chromaffect/", env!("CARGO_PKG_VERSION")))
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| fail(format!("http client: {e}")))?;
        let resp = http.get(url).send().map_err(|e| fail(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(fail(format!("HTTP {}", resp.status())));
        }
        let bytes = resp.bytes().map_err(|e| fail(e.to_string()))?;
        self.store(url, &bytes)?;
        Ok(bytes.to_vec())
    }
}

impl ImageSource for FetchClient {
    fn fetch(&self, image: &ImageRef) -> Result<Vec<u8>> {
        let url = image
            .url
            .as_deref()
            .ok_or_else(|| Error::Input(format!("image {} has no URL", image.id)))?;
        self.get(url)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub params: BuildParams,
    pub filter: ResizeFilter,
    /// Worker pool width; 0 uses the rayon default.
    pub workers: usize,
    /// Allow emotions with no usable images to be left out.
    pub allow_partial: bool,
    /// Largest tolerated fraction of unique images that fail.
    pub max_failure_rate: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            params: BuildParams::default(),
            filter: ResizeFilter::default(),
            workers: 0,
            allow_partial: false,
            max_failure_rate: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedImage {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmotionBuildStats {
    pub selected: usize,
    pub used: usize,
    pub palette_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuildReport {
    pub fingerprint: String,
    pub unique_images: usize,
    pub failed_images: usize,
    pub emotions: BTreeMap<EmotionLabel, EmotionBuildStats>,
    pub missing_emotions: Vec<EmotionLabel>,
    pub skipped: Vec<SkippedImage>,
}

impl BuildReport {
    /// Emotion, selected, used and palette size as tab-separated lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("emotion\tselected\tused\tpalette_size\n");
        for (e, s) in &self.emotions {
            out.push_str(&format!("{e}\t{}\t{}\t{}\n", s.selected, s.used, s.palette_size));
        }
        out
    }
}

/// Dominant palettes of every distinct image, computed in parallel.
pub fn extract_palettes(
    images: &[ImageRef],
    source: &dyn ImageSource,
    space: &FuzzyColorSpace,
    k: usize,
    filter: ResizeFilter,
    workers: usize,
) -> Result<BTreeMap<String, std::result::Result<FuzzyPalette, String>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        images
            .par_iter()
            .map(|img| {
                let r = source
                    .fetch(img)
                    .and_then(|bytes| image_palette(&bytes, space, k, filter))
                    .map_err(|e| e.to_string());
                if let Err(reason) = &r {
                    tracing::warn!("skipping image {}: {reason}", img.id);
                }
                (img.id.clone(), r)
            })
            .collect()
    });
    Ok(results.into_iter().collect())
}

/// Build a knowledge base from per-emotion image selections.
pub fn build_kb(
    selection: &BTreeMap<EmotionLabel, Vec<ImageRef>>,
    source: &dyn ImageSource,
    space: &FuzzyColorSpace,
    mapping: &BasicColorMapping,
    fingerprint: &str,
    opts: &BuildOptions,
) -> Result<(KnowledgeBase, BuildReport)> {
    opts.params.validate()?;
    let mut unique: BTreeMap<&str, &ImageRef> = BTreeMap::new();
    for img in selection.values().flatten() {
        unique.entry(img.id.as_str()).or_insert(img);
    }
    let unique: Vec<ImageRef> = unique.into_values().cloned().collect();
    let palettes = extract_palettes(
        &unique,
        source,
        space,
        opts.params.k_image,
        opts.filter,
        opts.workers,
    )?;
    let skipped: Vec<SkippedImage> = palettes
        .iter()
        .filter_map(|(id, r)| {
            r.as_ref().err().map(|reason| SkippedImage {
                id: id.clone(),
                reason: reason.clone(),
            })
        })
        .collect();
    if !unique.is_empty() && skipped.len() == unique.len() {
        return Err(Error::Build(format!(
            "all {} images failed; first error: {}",
            unique.len(),
            skipped[0].reason
        )));
    }
    let failure_rate = if unique.is_empty() {
        0.0
    } else {
        skipped.len() as f64 / unique.len() as f64
    };
    if failure_rate > opts.max_failure_rate {
        return Err(Error::Build(format!(
            "{} of {} images failed ({:.1}%), above the {:.1}% limit",
            skipped.len(),
            unique.len(),
            100.0 * failure_rate,
            100.0 * opts.max_failure_rate
        )));
    }

    let mut stats = BTreeMap::new();
    let mut built = Vec::new();
    let mut missing = Vec::new();
    for &emotion in EmotionLabel::ALL {
        let images = selection.get(&emotion).map(Vec::as_slice).unwrap_or(&[]);
        let mut agg = PaletteAggregator::default();
        for img in images {
            if let Some(Ok(p)) = palettes.get(&img.id) {
                agg.add_image(p.colors().take(opts.params.k_image));
            }
        }
        let mut stat = EmotionBuildStats {
            selected: images.len(),
            used: agg.images(),
            palette_size: 0,
        };
        if agg.images() == 0 {
            if !opts.allow_partial {
                return Err(Error::Build(format!(
                    "{emotion}: no usable images ({} selected); rerun with partial builds allowed to skip it",
                    images.len()
                )));
            }
            tracing::warn!("{emotion}: no usable images, left out of the knowledge base");
            missing.push(emotion);
        } else {
            let p = agg.finish(emotion, &opts.params)?;
            stat.palette_size = p.entries.len();
            built.push(p);
        }
        stats.insert(emotion, stat);
    }
    if built.is_empty() {
        return Err(Error::Build("no emotion has usable images".into()));
    }
    let kb = KnowledgeBase::from_palettes(fingerprint, opts.params, built, mapping)?;
    let report = BuildReport {
        fingerprint: fingerprint.to_string(),
        unique_images: unique.len(),
        failed_images: skipped.len(),
        emotions: stats,
        missing_emotions: missing,
        skipped,
    };
    Ok((kb, report))
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use image::{DynamicImage, ImageFormat, Rgb, RgbImage};

    use super::*;
    use crate::color::{FuzzyColor, Hue, Intensity, Saturation};
    use crate::config::{MappingConfig, PartitionConfig};

    fn png(rgb: [u8; 3]) -> Vec<u8> {
        let img = RgbImage::from_pixel(8, 8, Rgb(rgb));
        let mut buf = Cursor::new(Vec::new());
        DynamicImage::ImageRgb8(img)
            .write_to(&mut buf, ImageFormat::Png)
            .unwrap();
        buf.into_inner()
    }

    fn r(id: &str) -> ImageRef {
        ImageRef {
            id: id.into(),
            url: None,
        }
    }

    fn setup() -> (FuzzyColorSpace, BasicColorMapping) {
        (
            FuzzyColorSpace::from_config(&PartitionConfig::default()).unwrap(),
            BasicColorMapping::from_config(&MappingConfig::default()).unwrap(),
        )
    }

    #[test]
    fn partial_build_with_failures() {
        let (space, mapping) = setup();
        let mut src = MemorySource::default();
        src.0.insert("red".into(), png([200, 0, 0]));
        src.0.insert("salmon".into(), png([255, 160, 122]));
        src.0.insert("junk".into(), b"not an image".to_vec());
        let mut sel: BTreeMap<_, _> = EmotionLabel::ALL.iter().map(|&e| (e, vec![])).collect();
        sel.insert(EmotionLabel::Anger, vec![r("red"), r("junk")]);
        sel.insert(EmotionLabel::Love, vec![r("salmon"), r("red")]);

        let opts = BuildOptions::default();
        assert!(matches!(
            build_kb(&sel, &src, &space, &mapping, "sha256:x", &opts),
            Err(Error::Build(_))
        ));

        let opts = BuildOptions {
            allow_partial: true,
            workers: 2,
            ..BuildOptions::default()
        };
        let (kb, rep) = build_kb(&sel, &src, &space, &mapping, "sha256:x", &opts).unwrap();
        assert_eq!(kb.emotions.len(), 2);
        assert_eq!(rep.failed_images, 1);
        assert_eq!(rep.skipped[0].id, "junk");
        assert_eq!(rep.emotions[&EmotionLabel::Anger].used, 1);
        assert_eq!(rep.emotions[&EmotionLabel::Anger].selected, 2);
        assert_eq!(rep.missing_emotions.len(), 8);
        let love = kb.palette(EmotionLabel::Love).unwrap();
        let salmon = FuzzyColor::new(Hue::Red, Saturation::Medium, Intensity::Pale);
        assert!(love.colors().any(|c| c == salmon));
        assert_eq!(love.entries.len(), 2);

        let strict = BuildOptions {
            max_failure_rate: 0.2,
            ..opts
        };
        assert!(build_kb(&sel, &src, &space, &mapping, "sha256:x", &strict).is_err());
    }

    #[test]
    fn all_failing_is_error() {
        let (space, mapping) = setup();
        let mut sel = BTreeMap::new();
        sel.insert(EmotionLabel::Fear, vec![r("missing")]);
        let opts = BuildOptions {
            allow_partial: true,
            ..BuildOptions::default()
        };
        let err = build_kb(&sel, &MemorySource::default(), &space, &mapping, "f", &opts);
        assert!(matches!(err, Err(Error::Build(m)) if m.contains("all 1 images failed")));
    }

    #[test]
    fn local_dir_and_cache() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a1.png"), png([1, 2, 3])).unwrap();
        let src = LocalDir::new(dir.path());
        assert_eq!(src.fetch(&r("a1")).unwrap(), png([1, 2, 3]));
        assert!(src.fetch(&r("b2")).is_err());

        let client = FetchClient::new(dir.path().join("cache")).unwrap();
        let url = "http://example.invalid/x.png";
        assert!(client.cached(url).is_none());
        let hash = client.store(url, b"payload").unwrap();
        assert_eq!(hash, sha256_hex(b"payload"));
        assert_eq!(client.get(url).unwrap(), b"payload");
        // a corrupted blob is not served
        std::fs::write(client.cache_dir().join("blobs").join(&hash), b"tampered").unwrap();
        assert!(client.cached(url).is_none());
    }
}
