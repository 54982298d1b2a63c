//! Crisp RGB → HSI conversion, the 120-color fuzzy color space and the
//! fuzzy → basic color mapping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{MappingConfig, PartitionConfig};
use crate::error::{Error, Result};
use crate::fuzzy::LinguisticVariable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RgbPixel {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl RgbPixel {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }
}

impl From<[u8; 3]> for RgbPixel {
    fn from([r, g, b]: [u8; 3]) -> Self {
        Self { r, g, b }
    }
}

impl From<image::Rgb<u8>> for RgbPixel {
    fn from(p: image::Rgb<u8>) -> Self {
        p.0.into()
    }
}

/// Crisp HSI color. `hue` is `None` for achromatic pixels (`r == g == b`),
/// which are exactly the pixels with zero saturation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsiPixel {
    /// Degrees in `[0, 360)`.
    pub hue: Option<f64>,
    /// Percent in `[0, 100]`.
    pub saturation: f64,
    /// Level in `[0, 255]`.
    pub intensity: f64,
}

impl HsiPixel {
    pub fn is_achromatic(&self) -> bool {
        self.hue.is_none()
    }
}

/// Arccos-hue HSI with `I = (R+G+B)/3` on 0–255 and `S = 100·(1 − min/I)`.
pub fn rgb_to_hsi(p: RgbPixel) -> HsiPixel {
    let (r, g, b) = (f64::from(p.r), f64::from(p.g), f64::from(p.b));
    let sum = r + g + b;
    let intensity = sum / 3.0;
    if p.r == p.g && p.g == p.b {
        return HsiPixel {
            hue: None,
            saturation: 0.0,
            intensity,
        };
    }
    let min = r.min(g).min(b);
    let saturation = 100.0 * (1.0 - 3.0 * min / sum);

    let num = 0.5 * ((r - g) + (r - b));
    let den = ((r - g) * (r - g) + (r - b) * (g - b)).sqrt();
    let theta = (num / den).clamp(-1.0, 1.0).acos().to_degrees();
    let mut hue = if b > g { 360.0 - theta } else { theta };
    if hue >= 360.0 {
        hue -= 360.0;
    }
    HsiPixel {
        hue: Some(hue),
        saturation,
        intensity,
    }
}

/// Inverse of [`rgb_to_hsi`] for display purposes; channels are clamped to
/// 0–255.
pub fn hsi_to_rgb(p: HsiPixel) -> RgbPixel {
    let i = p.intensity / 255.0;
    let s = p.saturation / 100.0;
    let Some(h) = p.hue else {
        let v = (i * 255.0).round().clamp(0.0, 255.0) as u8;
        return RgbPixel::new(v, v, v);
    };
    let h = h.rem_euclid(360.0);
    let sector = |h: f64| {
        let x = i * (1.0 - s);
        let y = i * (1.0 + s * h.to_radians().cos() / (60.0 - h).to_radians().cos());
        let z = 3.0 * i - (x + y);
        (x, y, z)
    };
    let (r, g, b) = if h < 120.0 {
        let (x, y, z) = sector(h);
        (y, z, x)
    } else if h < 240.0 {
        let (x, y, z) = sector(h - 120.0);
        (x, y, z)
    } else {
        let (x, y, z) = sector(h - 240.0);
        (z, x, y)
    };
    let q = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    RgbPixel::new(q(r), q(g), q(b))
}

macro_rules! term_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str().eq_ignore_ascii_case(s))
                    .ok_or_else(|| Error::Config(format!(
                        "unknown {} term `{s}`", stringify!($name).to_lowercase()
                    )))
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

pub(crate) use term_enum;

term_enum!(
    /// Hue terms in declaration order.
    Hue {
        Red => "Red",
        Orange => "Orange",
        Yellow => "Yellow",
        Green => "Green",
        Cyan => "Cyan",
        Blue => "Blue",
        Violet => "Violet",
        Magenta => "Magenta",
    }
);

term_enum!(Saturation {
    Low => "Low",
    Medium => "Medium",
    High => "High",
});

term_enum!(Intensity {
    Dark => "Dark",
    Deep => "Deep",
    Medium => "Medium",
    Pale => "Pale",
    Light => "Light",
});

term_enum!(
    /// Basic crisp colors, in the column order of the emotion × color table.
    BasicColor {
        Red => "red",
        Orange => "orange",
        Yellow => "yellow",
        Green => "green",
        Cyan => "cyan",
        Blue => "blue",
        Black => "black",
        Brown => "brown",
        Beige => "beige",
        Purple => "purple",
        Gray => "gray",
    }
);

/// One of the 120 linguistic colors (hue, saturation, intensity).
///
/// The total order is intensity-major, then saturation, then hue, each in
/// declaration order; it is the tie-break order for palettes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FuzzyColor {
    pub hue: Hue,
    pub saturation: Saturation,
    pub intensity: Intensity,
}

impl FuzzyColor {
    pub const COUNT: usize = 120;

    pub const fn new(hue: Hue, saturation: Saturation, intensity: Intensity) -> Self {
        Self {
            hue,
            saturation,
            intensity,
        }
    }

    pub fn index(self) -> usize {
        self.intensity.index() * 24 + self.saturation.index() * 8 + self.hue.index()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        if i >= Self::COUNT {
            return None;
        }
        Some(Self {
            hue: Hue::ALL[i % 8],
            saturation: Saturation::ALL[(i / 8) % 3],
            intensity: Intensity::ALL[i / 24],
        })
    }

    pub fn all() -> impl Iterator<Item = FuzzyColor> {
        (0..Self::COUNT).filter_map(Self::from_index)
    }
}

impl PartialOrd for FuzzyColor {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FuzzyColor {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.index().cmp(&other.index())
    }
}

impl fmt::Display for FuzzyColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.hue, self.saturation, self.intensity)
    }
}

/// Fuzzified pixel: the winning color plus the winning degree per attribute.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fuzzified {
    pub color: FuzzyColor,
    pub hue_degree: f64,
    pub saturation_degree: f64,
    pub intensity_degree: f64,
}

impl Fuzzified {
    /// Membership of the pixel in `color` under the min t-norm.
    pub fn degree(&self) -> f64 {
        self.hue_degree
            .min(self.saturation_degree)
            .min(self.intensity_degree)
    }
}

/// The three fuzzy attributes whose product partitions HSI space into the 120
/// fuzzy colors.
#[derive(Clone, Debug)]
pub struct FuzzyColorSpace {
    hue: LinguisticVariable,
    saturation: LinguisticVariable,
    intensity: LinguisticVariable,
}

impl FuzzyColorSpace {
    pub fn from_config(cfg: &PartitionConfig) -> Result<Self> {
        let hue = cfg.hue.to_variable("hue")?;
        let saturation = cfg.saturation.to_variable("saturation")?;
        let intensity = cfg.intensity.to_variable("intensity")?;
        expect_terms(&hue, Hue::ALL.iter().map(|t| t.as_str()))?;
        expect_terms(&saturation, Saturation::ALL.iter().map(|t| t.as_str()))?;
        expect_terms(&intensity, Intensity::ALL.iter().map(|t| t.as_str()))?;
        expect_domain(&hue, (0.0, 360.0))?;
        expect_domain(&saturation, (0.0, 100.0))?;
        expect_domain(&intensity, (0.0, 255.0))?;
        for v in [&hue, &saturation, &intensity] {
            let cover = v.min_coverage(3601);
            if cover <= 0.0 {
                return Err(Error::Config(format!(
                    "variable {} leaves part of its domain uncovered",
                    v.name()
                )));
            }
        }
        Ok(Self {
            hue,
            saturation,
            intensity,
        })
    }

    pub fn hue(&self) -> &LinguisticVariable {
        &self.hue
    }

    pub fn saturation(&self) -> &LinguisticVariable {
        &self.saturation
    }

    pub fn intensity(&self) -> &LinguisticVariable {
        &self.intensity
    }

    /// Per-attribute argmax classification. Achromatic pixels take hue 0;
    /// their Low saturation routes them to gray when defuzzified.
    pub fn fuzzify(&self, p: HsiPixel) -> Fuzzified {
        let h = p.hue.unwrap_or(0.0);
        // HsiPixel from rgb_to_hsi is always inside the domains; clamping
        // keeps hand-built pixels total.
        let (hi, hd) = self.hue.argmax(h.rem_euclid(360.0));
        let (si, sd) = self.saturation.argmax(p.saturation.clamp(0.0, 100.0));
        let (ii, id) = self.intensity.argmax(p.intensity.clamp(0.0, 255.0));
        Fuzzified {
            color: FuzzyColor::new(Hue::ALL[hi], Saturation::ALL[si], Intensity::ALL[ii]),
            hue_degree: hd,
            saturation_degree: sd,
            intensity_degree: id,
        }
    }

    pub fn fuzzify_rgb(&self, p: RgbPixel) -> FuzzyColor {
        self.fuzzify(rgb_to_hsi(p)).color
    }

    /// Crisp HSI point at the kernel centre of each attribute term.
    pub fn representative_hsi(&self, c: FuzzyColor) -> HsiPixel {
        HsiPixel {
            hue: Some(self.hue.terms()[c.hue.index()].mf.kernel_center()),
            saturation: self.saturation.terms()[c.saturation.index()]
                .mf
                .kernel_center(),
            intensity: self.intensity.terms()[c.intensity.index()].mf.kernel_center(),
        }
    }

    pub fn representative_rgb(&self, c: FuzzyColor) -> RgbPixel {
        hsi_to_rgb(self.representative_hsi(c))
    }
}

fn expect_terms<'a>(v: &LinguisticVariable, names: impl Iterator<Item = &'a str>) -> Result<()> {
    let expected: Vec<&str> = names.collect();
    let got: Vec<&str> = v.terms().iter().map(|t| t.name.as_str()).collect();
    if got != expected {
        return Err(Error::Config(format!(
            "variable {} must declare terms {expected:?} in that order, found {got:?}",
            v.name()
        )));
    }
    Ok(())
}

fn expect_domain(v: &LinguisticVariable, domain: (f64, f64)) -> Result<()> {
    if v.domain() != domain {
        return Err(Error::Config(format!(
            "variable {} must have domain [{}, {}]",
            v.name(),
            domain.0,
            domain.1
        )));
    }
    Ok(())
}

/// Set of terms of one attribute, as a bitmask over declaration indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub(crate) struct TermMask(u16);

impl TermMask {
    pub(crate) fn insert(&mut self, i: usize) {
        self.0 |= 1 << i;
    }

    pub(crate) fn contains(self, i: usize) -> bool {
        self.0 & (1 << i) != 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct MappingRule {
    pub(crate) hue: TermMask,
    pub(crate) saturation: TermMask,
    pub(crate) intensity: TermMask,
    pub(crate) color: BasicColor,
}

/// Fuzzy → basic color rule cascade: Dark → black, Low saturation → gray,
/// Violet/Magenta → purple, then the configured carve-out rules (first match),
/// then the hue's namesake basic color.
#[derive(Clone, Debug, PartialEq)]
pub struct BasicColorMapping {
    rules: Vec<MappingRule>,
    table: [BasicColor; FuzzyColor::COUNT],
}

impl BasicColorMapping {
    pub fn from_config(cfg: &MappingConfig) -> Result<Self> {
        let rules = cfg.compile()?;
        let mut table = [BasicColor::Gray; FuzzyColor::COUNT];
        for c in FuzzyColor::all() {
            table[c.index()] = cascade(&rules, c);
        }
        Ok(Self { rules, table })
    }

    pub fn defuzzify(&self, c: FuzzyColor) -> BasicColor {
        self.table[c.index()]
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }
}

fn cascade(rules: &[MappingRule], c: FuzzyColor) -> BasicColor {
    if c.intensity == Intensity::Dark {
        return BasicColor::Black;
    }
    if c.saturation == Saturation::Low {
        return BasicColor::Gray;
    }
    if matches!(c.hue, Hue::Violet | Hue::Magenta) {
        return BasicColor::Purple;
    }
    if let Some(rule) = rules.iter().find(|r| {
        r.hue.contains(c.hue.index())
            && r.saturation.contains(c.saturation.index())
            && r.intensity.contains(c.intensity.index())
    }) {
        return rule.color;
    }
    match c.hue {
        Hue::Red => BasicColor::Red,
        Hue::Orange => BasicColor::Orange,
        Hue::Yellow => BasicColor::Yellow,
        Hue::Green => BasicColor::Green,
        Hue::Cyan => BasicColor::Cyan,
        Hue::Blue => BasicColor::Blue,
        Hue::Violet | Hue::Magenta => BasicColor::Purple,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> FuzzyColorSpace {
        FuzzyColorSpace::from_config(&PartitionConfig::default()).unwrap()
    }

    fn mapping() -> BasicColorMapping {
        BasicColorMapping::from_config(&MappingConfig::default()).unwrap()
    }

    #[test]
    fn salmon_hsi() {
        let hsi = rgb_to_hsi(RgbPixel::new(255, 160, 122));
        let h = hsi.hue.unwrap();
        assert!((h - 17.0).abs() <= 1.5, "hue {h}");
        assert!((hsi.saturation - 32.0).abs() <= 1.0, "sat {}", hsi.saturation);
        assert_eq!(hsi.intensity, 179.0);
    }

    #[test]
    fn pure_red_and_gray() {
        let red = rgb_to_hsi(RgbPixel::new(255, 0, 0));
        assert_eq!(red.hue, Some(0.0));
        assert_eq!(red.saturation, 100.0);
        assert_eq!(red.intensity, 85.0);

        let gray = rgb_to_hsi(RgbPixel::new(128, 128, 128));
        assert!(gray.is_achromatic());
        assert_eq!(gray.saturation, 0.0);
        assert_eq!(gray.intensity, 128.0);

        let black = rgb_to_hsi(RgbPixel::new(0, 0, 0));
        assert!(black.is_achromatic());
        assert_eq!(black.intensity, 0.0);
    }

    #[test]
    fn hue_reflection() {
        let blue = rgb_to_hsi(RgbPixel::new(0, 0, 255)).hue.unwrap();
        assert!((blue - 240.0).abs() < 1e-9);
        let green = rgb_to_hsi(RgbPixel::new(0, 255, 0)).hue.unwrap();
        assert!((green - 120.0).abs() < 1e-9);
        let magenta = rgb_to_hsi(RgbPixel::new(255, 0, 255)).hue.unwrap();
        assert!((magenta - 300.0).abs() < 1e-9);
    }

    #[test]
    fn salmon_fuzzifies() {
        let f = space().fuzzify(rgb_to_hsi(RgbPixel::new(255, 160, 122)));
        assert_eq!(
            f.color,
            FuzzyColor::new(Hue::Red, Saturation::Medium, Intensity::Pale)
        );
        assert!(f.hue_degree > 0.5 && f.hue_degree < 1.0, "partially red");
    }

    #[test]
    fn black_fuzzifies_by_convention() {
        let c = space().fuzzify_rgb(RgbPixel::new(0, 0, 0));
        assert_eq!(c, FuzzyColor::new(Hue::Red, Saturation::Low, Intensity::Dark));
    }

    #[test]
    fn color_index_roundtrip() {
        for i in 0..FuzzyColor::COUNT {
            assert_eq!(FuzzyColor::from_index(i).unwrap().index(), i);
        }
        assert!(FuzzyColor::from_index(120).is_none());
        let a = FuzzyColor::new(Hue::Magenta, Saturation::High, Intensity::Dark);
        let b = FuzzyColor::new(Hue::Red, Saturation::Low, Intensity::Deep);
        assert!(a < b, "intensity-major ordering");
    }

    #[test]
    fn mapping_examples() {
        let m = mapping();
        use BasicColor as B;
        let fc = FuzzyColor::new;
        assert_eq!(m.defuzzify(fc(Hue::Blue, Saturation::High, Intensity::Dark)), B::Black);
        assert_eq!(m.defuzzify(fc(Hue::Yellow, Saturation::Low, Intensity::Pale)), B::Gray);
        assert_eq!(m.defuzzify(fc(Hue::Orange, Saturation::Medium, Intensity::Deep)), B::Brown);
        assert_eq!(m.defuzzify(fc(Hue::Yellow, Saturation::Medium, Intensity::Light)), B::Beige);
        assert_eq!(m.defuzzify(fc(Hue::Violet, Saturation::High, Intensity::Pale)), B::Purple);
        assert_eq!(m.defuzzify(fc(Hue::Cyan, Saturation::High, Intensity::Light)), B::Cyan);
        assert_eq!(m.defuzzify(fc(Hue::Red, Saturation::High, Intensity::Light)), B::Red);
    }

    #[test]
    fn representative_colors_fuzzify_back() {
        let s = space();
        for c in FuzzyColor::all() {
            let hsi = s.representative_hsi(c);
            assert_eq!(s.fuzzify(hsi).color, c, "kernel point of {c}");
        }
        let rgb = s.representative_rgb(FuzzyColor::new(
            Hue::Red,
            Saturation::High,
            Intensity::Medium,
        ));
        assert!(rgb.r > rgb.g && rgb.r > rgb.b);
    }

    #[test]
    fn hsi_inverse_roughly_roundtrips() {
        for p in [
            RgbPixel::new(255, 160, 122),
            RgbPixel::new(10, 200, 30),
            RgbPixel::new(40, 50, 220),
            RgbPixel::new(90, 90, 90),
        ] {
            let q = hsi_to_rgb(rgb_to_hsi(p));
            for (a, b) in [(p.r, q.r), (p.g, q.g), (p.b, q.b)] {
                assert!((i16::from(a) - i16::from(b)).abs() <= 1, "{p:?} -> {q:?}");
            }
        }
    }
}
