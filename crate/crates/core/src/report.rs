//! Tabular and image summaries of a knowledge base.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use image::{Rgb, RgbImage};
use serde::Serialize;

use crate::color::{BasicColor, FuzzyColorSpace, Hue, Intensity, Saturation};
use crate::emotion::EmotionLabel;
use crate::kb::{EmotionPalette, KnowledgeBase};

/// Percent of retained palette frequency per hue, saturation and intensity
/// term.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HsiDistribution {
    pub hue: BTreeMap<Hue, f64>,
    pub saturation: BTreeMap<Saturation, f64>,
    pub intensity: BTreeMap<Intensity, f64>,
}

pub fn hsi_distribution(p: &EmotionPalette) -> HsiDistribution {
    let mut h = [0u64; 8];
    let mut s = [0u64; 3];
    let mut i = [0u64; 5];
    for e in &p.entries {
        let f = u64::from(e.frequency);
        h[e.color.hue.index()] += f;
        s[e.color.saturation.index()] += f;
        i[e.color.intensity.index()] += f;
    }
    let total: u64 = h.iter().sum();
    let pct = |v: u64| if total == 0 { 0.0 } else { 100.0 * v as f64 / total as f64 };
    HsiDistribution {
        hue: Hue::ALL.iter().map(|&t| (t, pct(h[t.index()]))).collect(),
        saturation: Saturation::ALL.iter().map(|&t| (t, pct(s[t.index()]))).collect(),
        intensity: Intensity::ALL.iter().map(|&t| (t, pct(i[t.index()]))).collect(),
    }
}

/// Long-format table: emotion, attribute, term, percent.
pub fn hsi_tsv(kb: &KnowledgeBase) -> String {
    let mut out = String::from("emotion\tattribute\tterm\tpercent\n");
    for (e, rec) in &kb.emotions {
        let d = hsi_distribution(&rec.palette);
        for (t, v) in &d.hue {
            let _ = writeln!(out, "{e}\thue\t{t}\t{v:.2}");
        }
        for (t, v) in &d.saturation {
            let _ = writeln!(out, "{e}\tsaturation\t{t}\t{v:.2}");
        }
        for (t, v) in &d.intensity {
            let _ = writeln!(out, "{e}\tintensity\t{t}\t{v:.2}");
        }
    }
    out
}

/// Emotion rows by basic-color columns, in percent.
pub fn basic_matrix(kb: &KnowledgeBase) -> Vec<(EmotionLabel, Vec<f64>)> {
    kb.emotions
        .iter()
        .map(|(&e, rec)| {
            (
                e,
                BasicColor::ALL
                    .iter()
                    .map(|&c| rec.basic_colors.get(c))
                    .collect(),
            )
        })
        .collect()
}

pub fn basic_matrix_tsv(kb: &KnowledgeBase) -> String {
    let mut out = String::from("emotion");
    for c in BasicColor::ALL {
        let _ = write!(out, "\t{c}");
    }
    out.push('\n');
    for (e, row) in basic_matrix(kb) {
        out.push_str(e.as_str());
        for v in row {
            let _ = write!(out, "\t{v:.2}");
        }
        out.push('\n');
    }
    out
}

/// Palette entries with their display colors.
pub fn palette_tsv(kb: &KnowledgeBase, space: &FuzzyColorSpace) -> String {
    let mut out = String::from("emotion\trank\thue\tsaturation\tintensity\tfrequency\tshare\thex\n");
    for (e, rec) in &kb.emotions {
        for (rank, entry) in rec.palette.entries.iter().enumerate() {
            let c = entry.color;
            let rgb = space.representative_rgb(c);
            let _ = writeln!(
                out,
                "{e}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t#{:02x}{:02x}{:02x}",
                rank + 1,
                c.hue,
                c.saturation,
                c.intensity,
                entry.frequency,
                entry.share,
                rgb.r,
                rgb.g,
                rgb.b
            );
        }
    }
    out
}

pub const HEATMAP_CELL: (u32, u32) = (32, 24);

/// White (0%) to dark red (100%).
pub fn heat_color(percent: f64) -> Rgb<u8> {
    let t = (percent / 100.0).clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    Rgb([lerp(255.0, 128.0), lerp(255.0, 0.0), lerp(255.0, 0.0)])
}

/// Heatmap of the emotion × basic-color matrix, one cell per value, rows in
/// emotion order and columns in basic-color order.
pub fn render_heatmap(kb: &KnowledgeBase) -> RgbImage {
    let m = basic_matrix(kb);
    let (cw, ch) = HEATMAP_CELL;
    let cols = BasicColor::ALL.len() as u32;
    let mut img = RgbImage::from_pixel(cols * cw, (m.len() as u32).max(1) * ch, Rgb([255; 3]));
    for (r, (_, row)) in m.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let color = heat_color(v);
            for y in 0..ch {
                for x in 0..cw {
                    img.put_pixel(c as u32 * cw + x, r as u32 * ch + y, color);
                }
            }
        }
    }
    img
}

pub const STRIP_SWATCH: u32 = 24;

/// One row per emotion; swatch widths proportional to share, rendered at
/// each fuzzy color's representative point.
pub fn render_palette_strips(kb: &KnowledgeBase, space: &FuzzyColorSpace, width: u32) -> RgbImage {
    let rows = (kb.emotions.len() as u32).max(1);
    let mut img = RgbImage::from_pixel(width, rows * STRIP_SWATCH, Rgb([255; 3]));
    for (r, rec) in kb.emotions.values().enumerate() {
        let total: f64 = rec.palette.entries.iter().map(|e| e.share).sum();
        let mut x0 = 0u32;
        let mut acc = 0.0;
        for e in &rec.palette.entries {
            acc += e.share;
            let x1 = ((acc / total) * f64::from(width)).round() as u32;
            let rgb = space.representative_rgb(e.color);
            for y in 0..STRIP_SWATCH {
                for x in x0..x1.min(width) {
                    img.put_pixel(x, r as u32 * STRIP_SWATCH + y, Rgb([rgb.r, rgb.g, rgb.b]));
                }
            }
            x0 = x1;
        }
    }
    img
}
