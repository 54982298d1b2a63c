//! Emotion fuzzy palettes aggregated from per-image dominant palettes, their
//! basic-color distributions, and the on-disk knowledge base.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::color::{BasicColor, BasicColorMapping, FuzzyColor};
use crate::emotion::EmotionLabel;
use crate::error::{Error, Result};
use crate::palette::{FuzzyPalette, DEFAULT_IMAGE_COLORS};

pub const KB_SCHEMA_VERSION: u32 = 1;

/// Tolerance on basic-color rows summing to 100.
pub const ROW_SUM_TOLERANCE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildParams {
    /// Dominant colors taken from each image.
    pub k_image: usize,
    /// Colors kept per emotion before the share filter.
    pub k_emotion: usize,
    /// Entries whose share of the retained frequency mass is below this are
    /// dropped.
    pub min_share: f64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            k_image: DEFAULT_IMAGE_COLORS,
            k_emotion: 15,
            min_share: 0.035,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_image == 0 || self.k_emotion == 0 {
            return Err(Error::Config("k_image and k_emotion must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_share) {
            return Err(Error::Config(format!(
                "min_share must be in [0, 1], got {}",
                self.min_share
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionPaletteEntry {
    #[serde(flatten)]
    pub color: FuzzyColor,
    /// Number of images whose dominant palette contains the color.
    pub frequency: u32,
    /// `frequency` over the total frequency of the top-`k_emotion` colors.
    pub share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionPalette {
    pub emotion: EmotionLabel,
    pub image_count: usize,
    pub entries: Vec<EmotionPaletteEntry>,
}

impl EmotionPalette {
    pub fn colors(&self) -> impl Iterator<Item = FuzzyColor> + '_ {
        self.entries.iter().map(|e| e.color)
    }
}

/// Per-emotion color frequency table. Aggregators over disjoint image sets
/// can be merged by addition in any order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaletteAggregator {
    frequency: [u32; FuzzyColor::COUNT],
    images: usize,
}

impl Default for PaletteAggregator {
    fn default() -> Self {
        Self {
            frequency: [0; FuzzyColor::COUNT],
            images: 0,
        }
    }
}

impl PaletteAggregator {
    /// Count each color of one image's dominant palette once.
    pub fn add_image<I: IntoIterator<Item = FuzzyColor>>(&mut self, colors: I) {
        for c in colors {
            self.frequency[c.index()] += 1;
        }
        self.images += 1;
    }

    pub fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.frequency.iter_mut().zip(other.frequency.iter()) {
            *a += b;
        }
        self.images += other.images;
        self
    }

    pub fn frequency(&self, c: FuzzyColor) -> u32 {
        self.frequency[c.index()]
    }

    pub fn images(&self) -> usize {
        self.images
    }

    /// Top `k_emotion` colors by frequency (ties by color order), then drop
    /// entries whose share of that top set is below `min_share`.
    pub fn finish(&self, emotion: EmotionLabel, params: &BuildParams) -> Result<EmotionPalette> {
        params.validate()?;
        if self.images == 0 {
            return Err(Error::Build(format!("no usable images for {emotion}")));
        }
        let mut top: Vec<(FuzzyColor, u32)> = self
            .frequency
            .iter()
            .enumerate()
            .filter(|(_, &f)| f > 0)
            .map(|(i, &f)| (FuzzyColor::from_index(i).unwrap(), f))
            .collect();
        top.sort_by_key(|&(_, f)| std::cmp::Reverse(f));
        top.truncate(params.k_emotion);
        let mass: u64 = top.iter().map(|&(_, f)| u64::from(f)).sum();
        let entries = top
            .into_iter()
            .map(|(color, frequency)| EmotionPaletteEntry {
                color,
                frequency,
                share: f64::from(frequency) / mass as f64,
            })
            .filter(|e| e.share >= params.min_share)
            .collect();
        Ok(EmotionPalette {
            emotion,
            image_count: self.images,
            entries,
        })
    }
}

/// Aggregate the dominant palettes of an emotion's images.
pub fn build_emotion_palette<'a, I>(
    emotion: EmotionLabel,
    image_palettes: I,
    params: &BuildParams,
) -> Result<EmotionPalette>
where
    I: IntoIterator<Item = &'a FuzzyPalette>,
{
    let mut agg = PaletteAggregator::default();
    for p in image_palettes {
        agg.add_image(p.colors().take(params.k_image));
    }
    agg.finish(emotion, params)
}

/// Percentage of an emotion palette's retained frequency per basic color.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicDistribution(pub BTreeMap<BasicColor, f64>);

impl BasicDistribution {
    pub fn get(&self, c: BasicColor) -> f64 {
        self.0.get(&c).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.0.values().sum()
    }

    /// Basic color with the largest share; earlier column wins ties.
    pub fn modal(&self) -> BasicColor {
        let mut best = BasicColor::ALL[0];
        for &c in BasicColor::ALL {
            if self.get(c) > self.get(best) {
                best = c;
            }
        }
        best
    }
}

pub fn basic_distribution(palette: &EmotionPalette, mapping: &BasicColorMapping) -> BasicDistribution {
    let mut freq = [0u64; 11];
    for e in &palette.entries {
        freq[mapping.defuzzify(e.color).index()] += u64::from(e.frequency);
    }
    let total: u64 = freq.iter().sum();
    BasicDistribution(
        BasicColor::ALL
            .iter()
            .map(|&c| {
                let pct = if total == 0 {
                    0.0
                } else {
                    100.0 * freq[c.index()] as f64 / total as f64
                };
                (c, pct)
            })
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionRecord {
    pub palette: EmotionPalette,
    pub basic_colors: BasicDistribution,
}

/// Learned emotion → palette associations, stamped with the fingerprint of
/// the color configuration they were built under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub schema_version: u32,
    pub fingerprint: String,
    pub params: BuildParams,
    pub emotions: BTreeMap<EmotionLabel, EmotionRecord>,
}

impl KnowledgeBase {
    pub fn from_palettes(
        fingerprint: impl Into<String>,
        params: BuildParams,
        palettes: impl IntoIterator<Item = EmotionPalette>,
        mapping: &BasicColorMapping,
    ) -> Result<Self> {
        let emotions = palettes
            .into_iter()
            .map(|p| {
                let basic_colors = basic_distribution(&p, mapping);
                (p.emotion, EmotionRecord { palette: p, basic_colors })
            })
            .collect();
        let kb = Self {
            schema_version: KB_SCHEMA_VERSION,
            fingerprint: fingerprint.into(),
            params,
            emotions,
        };
        kb.validate()?;
        Ok(kb)
    }

    pub fn palette(&self, e: EmotionLabel) -> Option<&EmotionPalette> {
        self.emotions.get(&e).map(|r| &r.palette)
    }

    pub fn is_complete(&self) -> bool {
        self.emotions.len() == EmotionLabel::ALL.len()
    }

    pub fn missing_emotions(&self) -> Vec<EmotionLabel> {
        EmotionLabel::ALL
            .iter()
            .copied()
            .filter(|e| !self.emotions.contains_key(e))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.emotions.is_empty() {
            return Err(Error::Build("knowledge base has no emotions".into()));
        }
        for (e, rec) in &self.emotions {
            if rec.palette.emotion != *e {
                return Err(Error::Build(format!(
                    "record for {e} holds a palette for {}",
                    rec.palette.emotion
                )));
            }
            let p = &rec.palette;
            if p.entries.is_empty() {
                return Err(Error::Build(format!("{e}: empty palette")));
            }
            if p.entries.len() > self.params.k_emotion {
                return Err(Error::Build(format!(
                    "{e}: {} entries exceed k_emotion {}",
                    p.entries.len(),
                    self.params.k_emotion
                )));
            }
            let shares: f64 = p.entries.iter().map(|x| x.share).sum();
            if shares > 1.0 + 1e-9 || p.entries.iter().any(|x| !(0.0..=1.0).contains(&x.share)) {
                return Err(Error::Build(format!("{e}: shares out of range")));
            }
            let sum = rec.basic_colors.sum();
            if (sum - 100.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Build(format!(
                    "{e}: basic color row sums to {sum:.3}, not 100"
                )));
            }
        }
        Ok(())
    }
}

pub fn save_kb(kb: &KnowledgeBase, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(kb).expect("knowledge base serializes");
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text + "\n").map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Load and validate a knowledge base. With `expected_fingerprint`, a KB
/// built under different color semantics is rejected.
pub fn load_kb(path: &Path, expected_fingerprint: Option<&str>) -> Result<KnowledgeBase> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kb(&text, expected_fingerprint).map_err(|e| match e {
        Error::Malformed { reason, .. } => Error::Malformed {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

pub fn parse_kb(text: &str, expected_fingerprint: Option<&str>) -> Result<KnowledgeBase> {
    let malformed = |reason: String| Error::Malformed {
        path: "<memory>".into(),
        reason,
    };
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| malformed("missing schema_version".into()))?;
    if version != u64::from(KB_SCHEMA_VERSION) {
        return Err(Error::VersionMismatch {
            expected: KB_SCHEMA_VERSION,
            found: version as u32,
        });
    }
    let kb: KnowledgeBase =
        serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
    if let Some(expected) = expected_fingerprint {
        if kb.fingerprint != expected {
            return Err(Error::FingerprintMismatch {
                expected: expected.to_string(),
                found: kb.fingerprint,
            });
        }
    }
    kb.validate().map_err(|e| malformed(e.to_string()))?;
    if !kb.is_complete() {
        tracing::warn!(
            "knowledge base lacks emotions: {:?}",
            kb.missing_emotions()
        );
    }
    Ok(kb)
}
