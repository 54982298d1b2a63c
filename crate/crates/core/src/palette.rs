//! Image normalization, fuzzy color histograms and dominant fuzzy palettes.

use std::fmt::Write as _;

use image::imageops::FilterType;
use image::{DynamicImage, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color::{FuzzyColor, FuzzyColorSpace, RgbPixel};
use crate::error::{Error, Result};

/// Side length of the normalized raster.
pub const NORMALIZED_SIZE: u32 = 200;

/// Number of fuzzy colors kept per image by default.
pub const DEFAULT_IMAGE_COLORS: usize = 5;

/// Pixels per work unit when building histograms in parallel.
const CHUNK_PIXELS: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResizeFilter {
    Nearest,
    #[default]
    Bilinear,
    CatmullRom,
    Lanczos3,
}

impl ResizeFilter {
    fn filter_type(self) -> FilterType {
        match self {
            ResizeFilter::Nearest => FilterType::Nearest,
            ResizeFilter::Bilinear => FilterType::Triangle,
            ResizeFilter::CatmullRom => FilterType::CatmullRom,
            ResizeFilter::Lanczos3 => FilterType::Lanczos3,
        }
    }
}

impl std::str::FromStr for ResizeFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "bilinear" | "triangle" => Ok(Self::Bilinear),
            "catmull-rom" => Ok(Self::CatmullRom),
            "lanczos3" => Ok(Self::Lanczos3),
            _ => Err(Error::Config(format!("unknown resize filter `{s}`"))),
        }
    }
}

/// A 200×200 opaque RGB raster.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedImage(RgbImage);

impl NormalizedImage {
    pub fn new(img: RgbImage) -> Result<Self> {
        if img.dimensions() != (NORMALIZED_SIZE, NORMALIZED_SIZE) {
            return Err(Error::Input(format!(
                "normalized image must be {NORMALIZED_SIZE}x{NORMALIZED_SIZE}, got {:?}",
                img.dimensions()
            )));
        }
        Ok(Self(img))
    }

    pub fn as_rgb(&self) -> &RgbImage {
        &self.0
    }

    pub fn into_rgb(self) -> RgbImage {
        self.0
    }
}

/// Decode PNG/JPEG bytes and normalize with the default (bilinear) filter.
pub fn preprocess(bytes: &[u8]) -> Result<NormalizedImage> {
    preprocess_with(bytes, ResizeFilter::default())
}

pub fn preprocess_with(bytes: &[u8], filter: ResizeFilter) -> Result<NormalizedImage> {
    normalize(decode(bytes)?, filter)
}

pub fn decode(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory(bytes).map_err(|e| {
        let container = match image::guess_format(bytes) {
            Ok(f) => format!("{f:?} container"),
            Err(_) => "unrecognized container".to_string(),
        };
        Error::Input(format!(
            "cannot decode image ({container}, {} bytes): {e}",
            bytes.len()
        ))
    })
}

/// Composite alpha over white, expand to RGB and resize to 200×200 without
/// preserving aspect ratio.
pub fn normalize(img: DynamicImage, filter: ResizeFilter) -> Result<NormalizedImage> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::Input("image has a zero dimension".into()));
    }
    let rgb = if img.color().has_alpha() {
        flatten_on_white(&img)
    } else {
        img.to_rgb8()
    };
    let resized = if rgb.dimensions() == (NORMALIZED_SIZE, NORMALIZED_SIZE) {
        rgb
    } else {
        image::imageops::resize(&rgb, NORMALIZED_SIZE, NORMALIZED_SIZE, filter.filter_type())
    };
    NormalizedImage::new(resized)
}

fn flatten_on_white(img: &DynamicImage) -> RgbImage {
    let rgba = img.to_rgba8();
    let (w, h) = rgba.dimensions();
    RgbImage::from_fn(w, h, |x, y| {
        let [r, g, b, a] = rgba.get_pixel(x, y).0;
        let a = u32::from(a);
        let blend = |c: u8| ((u32::from(c) * a + 255 * (255 - a) + 127) / 255) as u8;
        image::Rgb([blend(r), blend(g), blend(b)])
    })
}

/// Pixel counts per fuzzy color, indexed by [`FuzzyColor::index`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuzzyHistogram {
    counts: [u32; FuzzyColor::COUNT],
}

impl Default for FuzzyHistogram {
    fn default() -> Self {
        Self {
            counts: [0; FuzzyColor::COUNT],
        }
    }
}

impl FuzzyHistogram {
    pub fn add(&mut self, c: FuzzyColor) {
        self.counts[c.index()] += 1;
    }

    pub fn count(&self, c: FuzzyColor) -> u32 {
        self.counts[c.index()]
    }

    pub fn counts(&self) -> &[u32; FuzzyColor::COUNT] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b;
        }
        self
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (FuzzyColor, u32)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(i, &n)| (FuzzyColor::from_index(i).unwrap(), n))
    }
}

/// Sequential histogram over any pixel sequence.
pub fn fuzzy_histogram<I>(pixels: I, space: &FuzzyColorSpace) -> FuzzyHistogram
where
    I: IntoIterator<Item = RgbPixel>,
{
    let mut h = FuzzyHistogram::default();
    for p in pixels {
        h.add(space.fuzzify_rgb(p));
    }
    h
}

/// Histogram of a raster, split across the rayon pool. Integer merging makes
/// the result identical to [`fuzzy_histogram`] for any thread count.
pub fn image_histogram(img: &RgbImage, space: &FuzzyColorSpace) -> FuzzyHistogram {
    img.as_raw()
        .par_chunks(CHUNK_PIXELS * 3)
        .map(|chunk| {
            fuzzy_histogram(
                chunk.chunks_exact(3).map(|p| RgbPixel::new(p[0], p[1], p[2])),
                space,
            )
        })
        .reduce(FuzzyHistogram::default, |a, b| a.merge(&b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaletteEntry {
    #[serde(flatten)]
    pub color: FuzzyColor,
    pub count: u32,
    pub proportion: f64,
}

/// Dominant fuzzy colors of an image, most frequent first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FuzzyPalette {
    pub entries: Vec<PaletteEntry>,
}

impl FuzzyPalette {
    pub fn colors(&self) -> impl Iterator<Item = FuzzyColor> + '_ {
        self.entries.iter().map(|e| e.color)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One tab-separated record per entry: hue, saturation, intensity,
    /// proportion with 6 decimals.
    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let c = e.color;
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}",
                c.hue, c.saturation, c.intensity, e.proportion
            );
        }
        out
    }
}

/// Top-`k` bins by count; ties go to the earlier color in [`FuzzyColor`]
/// order. Empty bins are never included.
pub fn dominant_palette(hist: &FuzzyHistogram, k: usize) -> Result<FuzzyPalette> {
    if k == 0 {
        return Err(Error::Domain("palette size k must be at least 1".into()));
    }
    let total = hist.total();
    let mut bins: Vec<(FuzzyColor, u32)> = hist.nonzero().collect();
    // nonzero() yields colors in ascending order, so a stable sort on count
    // keeps the color tie-break.
    bins.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
    bins.truncate(k);
    Ok(FuzzyPalette {
        entries: bins
            .into_iter()
            .map(|(color, count)| PaletteEntry {
                color,
                count,
                proportion: count as f64 / total as f64,
            })
            .collect(),
    })
}

/// Full pipeline for one encoded image.
pub fn image_palette(
    bytes: &[u8],
    space: &FuzzyColorSpace,
    k: usize,
    filter: ResizeFilter,
) -> Result<FuzzyPalette> {
    let img = preprocess_with(bytes, filter)?;
    dominant_palette(&image_histogram(img.as_rgb(), space), k)
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use image::{ImageFormat, Rgb, Rgba, RgbaImage};

    use super::*;
    use crate::color::{Hue, Intensity, Saturation};
    use crate::config::PartitionConfig;

    fn space() -> FuzzyColorSpace {
        FuzzyColorSpace::from_config(&PartitionConfig::default()).unwrap()
    }

    fn png(img: DynamicImage) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png).unwrap();
        buf.into_inner()
    }

    #[test]
    fn solid_blue_resamples_exactly() {
        let img = RgbImage::from_pixel(400, 400, Rgb([0, 0, 255]));
        let n = preprocess(&png(img.into())).unwrap();
        assert_eq!(n.as_rgb().dimensions(), (200, 200));
        assert!(n.as_rgb().pixels().all(|p| p.0 == [0, 0, 255]));
    }

    #[test]
    fn aspect_not_preserved() {
        let img = RgbImage::from_pixel(100, 300, Rgb([10, 20, 30]));
        let n = preprocess(&png(img.into())).unwrap();
        assert_eq!(n.as_rgb().dimensions(), (200, 200));
    }

    #[test]
    fn transparent_becomes_white() {
        let img = RgbaImage::from_pixel(10, 10, Rgba([0, 0, 0, 0]));
        let n = preprocess(&png(img.into())).unwrap();
        assert!(n.as_rgb().pixels().all(|p| p.0 == [255, 255, 255]));
        let half = RgbaImage::from_pixel(10, 10, Rgba([0, 0, 0, 128]));
        let n = preprocess(&png(half.into())).unwrap();
        assert_eq!(n.as_rgb().get_pixel(5, 5).0, [127, 127, 127]);
    }

    #[test]
    fn grayscale_expands() {
        let img = image::GrayImage::from_pixel(20, 20, image::Luma([90]));
        let n = preprocess(&png(img.into())).unwrap();
        assert!(n.as_rgb().pixels().all(|p| p.0 == [90, 90, 90]));
    }

    #[test]
    fn undecodable_bytes() {
        let err = preprocess(b"definitely not an image").unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        assert!(err.to_string().contains("unrecognized container"));
        let mut truncated = png(RgbImage::from_pixel(5, 5, Rgb([1, 2, 3])).into());
        truncated.truncate(30);
        let err = preprocess(&truncated).unwrap_err();
        assert!(err.to_string().contains("Png container"), "{err}");
    }

    #[test]
    fn zero_dimension() {
        let err = normalize(DynamicImage::new_rgb8(0, 5), ResizeFilter::Bilinear).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn solid_image_histogram_and_palette() {
        let s = space();
        let img = RgbImage::from_pixel(200, 200, Rgb([255, 160, 122]));
        let h = image_histogram(&img, &s);
        assert_eq!(h.total(), 40_000);
        let salmon = FuzzyColor::new(Hue::Red, Saturation::Medium, Intensity::Pale);
        assert_eq!(h.count(salmon), 40_000);
        let p = dominant_palette(&h, 5).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.entries[0].proportion, 1.0);
        assert_eq!(p.to_records(), "Red\tMedium\tPale\t1.000000\n");
    }

    #[test]
    fn half_red_half_gray() {
        let s = space();
        let img = RgbImage::from_fn(200, 200, |x, _| {
            if x < 100 {
                Rgb([255, 0, 0])
            } else {
                Rgb([128, 128, 128])
            }
        });
        let h = image_histogram(&img, &s);
        let bins: Vec<_> = h.nonzero().collect();
        assert_eq!(bins.len(), 2);
        assert!(bins.iter().all(|&(_, n)| n == 20_000));
    }

    #[test]
    fn seven_equal_colors_keep_first_five() {
        let mut h = FuzzyHistogram::default();
        let picks = [100, 3, 57, 12, 90, 44, 7];
        for &i in &picks {
            for _ in 0..10 {
                h.add(FuzzyColor::from_index(i).unwrap());
            }
        }
        let p = dominant_palette(&h, 5).unwrap();
        let got: Vec<usize> = p.colors().map(FuzzyColor::index).collect();
        assert_eq!(got, vec![3, 7, 12, 44, 57]);
    }

    #[test]
    fn k_zero_rejected() {
        assert!(dominant_palette(&FuzzyHistogram::default(), 0).is_err());
    }
}
