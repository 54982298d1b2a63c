//! Plot data and a small raster chart of a 2AFC analysis.

use std::fmt::Write as _;

use chromaffect::psychometrics::{logistic, AnalysisReport};
use image::{Rgb, RgbImage};

/// x, n, observed g and fitted g per merged stimulus level.
pub fn plot_tsv(report: &AnalysisReport) -> String {
    let mut out = String::from("x\tn\tobserved\tfitted\n");
    for p in &report.points {
        let fitted = match &report.fit {
            Ok(f) => format!("{:.6}", logistic(p.x, f.threshold, f.slope)),
            Err(_) => String::new(),
        };
        let _ = writeln!(out, "{:.6}\t{}\t{:.6}\t{fitted}", p.x, p.n, p.g);
    }
    out
}

const W: u32 = 480;
const H: u32 = 320;
const MARGIN: u32 = 30;

fn to_px(x: f64, y: f64, x_max: f64) -> (i64, i64) {
    let pw = f64::from(W - 2 * MARGIN);
    let ph = f64::from(H - 2 * MARGIN);
    let px = f64::from(MARGIN) + (x / x_max).clamp(0.0, 1.0) * pw;
    let py = f64::from(H - MARGIN) - y.clamp(0.0, 1.0) * ph;
    (px.round() as i64, py.round() as i64)
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < W && (y as u32) < H {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, a: (i64, i64), b: (i64, i64), c: Rgb<u8>) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = a.0 as f64 + (b.0 - a.0) as f64 * t;
        let y = a.1 as f64 + (b.1 - a.1) as f64 * t;
        put(img, x.round() as i64, y.round() as i64, c);
    }
}

/// Proportion correct against stimulus difference: observed levels as red
/// squares, the fitted curve in blue, chance (0.5) as a gray rule.
pub fn render(report: &AnalysisReport) -> RgbImage {
    let mut img = RgbImage::from_pixel(W, H, Rgb([255; 3]));
    let x_max = report
        .points
        .iter()
        .map(|p| p.x)
        .fold(1.0, f64::max);
    let gray = Rgb([190; 3]);
    line(&mut img, to_px(0.0, 0.5, x_max), to_px(x_max, 0.5, x_max), gray);
    line(&mut img, to_px(0.0, 1.0, x_max), to_px(x_max, 1.0, x_max), gray);
    let black = Rgb([0; 3]);
    line(&mut img, to_px(0.0, 0.0, x_max), to_px(x_max, 0.0, x_max), black);
    line(&mut img, to_px(0.0, 0.0, x_max), to_px(0.0, 1.0, x_max), black);
    if let Ok(fit) = &report.fit {
        let blue = Rgb([20, 60, 170]);
        let n = 200;
        let mut prev = to_px(0.0, logistic(0.0, fit.threshold, fit.slope), x_max);
        for i in 1..=n {
            let x = x_max * f64::from(i) / f64::from(n);
            let next = to_px(x, logistic(x, fit.threshold, fit.slope), x_max);
            line(&mut img, prev, next, blue);
            prev = next;
        }
    }
    let red = Rgb([200, 30, 30]);
    for p in &report.points {
        let (cx, cy) = to_px(p.x, p.g, x_max);
        for dy in -3..=3 {
            for dx in -3..=3 {
                put(&mut img, cx + dx, cy + dy, red);
            }
        }
    }
    img
}
