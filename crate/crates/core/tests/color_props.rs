//! Fuzzification against a brute-force 120-way oracle.

use chromaffect::color::{rgb_to_hsi, RgbPixel};
use chromaffect::config::PartitionConfig;
use chromaffect::{FuzzyColor, FuzzyColorSpace};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn space() -> FuzzyColorSpace {
    FuzzyColorSpace::from_config(&PartitionConfig::default()).unwrap()
}

/// Lexicographic argmax over (min degree, μH, μS, μI); earlier index wins.
fn oracle(sp: &FuzzyColorSpace, p: RgbPixel) -> FuzzyColor {
    let hsi = rgb_to_hsi(p);
    let mh: Vec<f64> = sp.hue().memberships(hsi.hue.unwrap_or(0.0)).collect();
    let ms: Vec<f64> = sp.saturation().memberships(hsi.saturation).collect();
    let mi: Vec<f64> = sp.intensity().memberships(hsi.intensity).collect();
    let mut best = (0, (-1.0, -1.0, -1.0, -1.0));
    for c in FuzzyColor::all() {
        let (h, s, i) = (mh[c.hue.index()], ms[c.saturation.index()], mi[c.intensity.index()]);
        let key = (h.min(s).min(i), h, s, i);
        if key > best.1 {
            best = (c.index(), key);
        }
    }
    FuzzyColor::from_index(best.0).unwrap()
}

#[test]
fn fuzzify_matches_oracle_on_random_pixels() {
    let sp = space();
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..1000 {
        let p = RgbPixel::new(rng.random(), rng.random(), rng.random());
        assert_eq!(sp.fuzzify_rgb(p), oracle(&sp, p), "{p:?}");
    }
}

#[test]
fn fuzzify_matches_oracle_on_grays() {
    let sp = space();
    for v in 0..=255u8 {
        let p = RgbPixel::new(v, v, v);
        assert_eq!(sp.fuzzify_rgb(p), oracle(&sp, p));
    }
}

#[test]
fn kernel_points_fuzzify_to_themselves() {
    let sp = space();
    for c in FuzzyColor::all() {
        assert_eq!(sp.fuzzify(sp.representative_hsi(c)).color, c);
    }
}

proptest! {
    #[test]
    fn fuzzify_matches_oracle(r: u8, g: u8, b: u8) {
        let sp = space();
        let p = RgbPixel::new(r, g, b);
        prop_assert_eq!(sp.fuzzify_rgb(p), oracle(&sp, p));
    }

    /// Scaling all channels keeps hue and saturation and scales intensity.
    #[test]
    fn scaling_moves_only_intensity(r in 0u8..=127, g in 0u8..=127, b in 0u8..=127) {
        prop_assume!(!(r == g && g == b));
        let a = rgb_to_hsi(RgbPixel::new(r, g, b));
        let d = rgb_to_hsi(RgbPixel::new(2 * r, 2 * g, 2 * b));
        prop_assert!((a.hue.unwrap() - d.hue.unwrap()).abs() < 1e-9);
        prop_assert!((a.saturation - d.saturation).abs() < 1e-9);
        prop_assert!((d.intensity - 2.0 * a.intensity).abs() < 1e-9);
    }

    #[test]
    fn hsi_stays_in_domain(r: u8, g: u8, b: u8) {
        let p = rgb_to_hsi(RgbPixel::new(r, g, b));
        prop_assert!((0.0..=255.0).contains(&p.intensity));
        prop_assert!((-1e-9..=100.0).contains(&p.saturation));
        if let Some(h) = p.hue {
            prop_assert!((0.0..360.0).contains(&h));
        }
    }

    #[test]
    fn brighter_never_lowers_intensity(r in 0u8..255, g: u8, b: u8) {
        let a = rgb_to_hsi(RgbPixel::new(r, g, b));
        let c = rgb_to_hsi(RgbPixel::new(r + 1, g, b));
        prop_assert!(c.intensity > a.intensity);
    }
}
