#![allow(dead_code)]

use std::io::Cursor;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chromaffect::color::{BasicColorMapping, FuzzyColor, FuzzyColorSpace};
use chromaffect::config::{fingerprint, MappingConfig, PartitionConfig};
use chromaffect::emotion::EmotionLabel;
use chromaffect::kb::{save_kb, BuildParams, EmotionPalette, EmotionPaletteEntry, KnowledgeBase};
use chromaffect_service::{AppState, Engine, ServiceOptions};
use http_body_util::BodyExt;
use image::{DynamicImage, ImageFormat, Rgb, RgbImage};
use tower::ServiceExt;

pub fn space() -> FuzzyColorSpace {
    FuzzyColorSpace::from_config(&PartitionConfig::default()).unwrap()
}

pub fn default_fingerprint() -> String {
    fingerprint(&PartitionConfig::default(), &MappingConfig::default())
}

pub fn engine() -> Engine {
    Engine::new(&PartitionConfig::default(), &MappingConfig::default()).unwrap()
}

pub fn c(i: usize) -> FuzzyColor {
    FuzzyColor::from_index(i).unwrap()
}

pub fn emotion_palette(e: EmotionLabel, colors: &[usize]) -> EmotionPalette {
    let n = colors.len() as f64;
    EmotionPalette {
        emotion: e,
        image_count: colors.len(),
        entries: colors
            .iter()
            .map(|&i| EmotionPaletteEntry {
                color: c(i),
                frequency: 1,
                share: 1.0 / n,
            })
            .collect(),
    }
}

/// All ten emotions; `overrides` replace the default palettes.
pub fn kb_with(overrides: &[(EmotionLabel, &[usize])]) -> KnowledgeBase {
    let mapping = BasicColorMapping::from_config(&MappingConfig::default()).unwrap();
    let palettes = EmotionLabel::ALL.iter().enumerate().map(|(n, &e)| {
        match overrides.iter().find(|(o, _)| *o == e) {
            Some((_, colors)) => emotion_palette(e, colors),
            None => emotion_palette(e, &[n * 11 % 120, (n * 11 + 5) % 120, (n * 11 + 57) % 120]),
        }
    });
    KnowledgeBase::from_palettes(default_fingerprint(), BuildParams::default(), palettes, &mapping).unwrap()
}

pub fn png(img: RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    DynamicImage::ImageRgb8(img).write_to(&mut buf, ImageFormat::Png).unwrap();
    buf.into_inner()
}

/// Fuzzy colors whose representative RGB fuzzifies back to themselves.
pub fn in_gamut() -> Vec<usize> {
    let sp = space();
    FuzzyColor::all()
        .filter(|&c| sp.fuzzify_rgb(sp.representative_rgb(c)) == c)
        .map(|c| c.index())
        .collect()
}

/// 200×200 image split into vertical bands of the given fuzzy colors'
/// representative RGB, so no resampling happens.
pub fn bands(colors: &[usize]) -> Vec<u8> {
    let sp = space();
    let n = colors.len() as u32;
    let img = RgbImage::from_fn(200, 200, |x, _| {
        let band = (x * n / 200) as usize;
        let p = sp.representative_rgb(c(colors[band]));
        Rgb([p.r, p.g, p.b])
    });
    png(img)
}

pub struct TestService {
    pub dir: tempfile::TempDir,
    pub state: Arc<AppState>,
    pub app: Router,
}

pub fn service(kb: Option<&KnowledgeBase>) -> TestService {
    let dir = tempfile::tempdir().unwrap();
    let kb_path = kb.map(|kb| {
        let p = dir.path().join("kb.json");
        save_kb(kb, &p).unwrap();
        p
    });
    let opts = ServiceOptions {
        kb_path,
        index_dir: dir.path().join("index"),
        cache_dir: Some(dir.path().join("cache")),
    };
    let state = AppState::open(engine(), &opts).unwrap();
    let app = chromaffect_service::router(state.clone(), None);
    TestService { dir, state, app }
}

pub async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

pub async fn get_json(app: &Router, uri: &str) -> (StatusCode, serde_json::Value) {
    let (s, b) = send(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap_or(serde_json::Value::Null))
}

pub async fn upload(app: &Router, bytes: Vec<u8>) -> (StatusCode, serde_json::Value) {
    let req = Request::post("/images")
        .header("content-type", "application/octet-stream")
        .body(Body::from(bytes))
        .unwrap();
    let (s, b) = send(app, req).await;
    (s, serde_json::from_slice(&b).unwrap_or(serde_json::Value::Null))
}

pub async fn post_json(app: &Router, uri: &str, body: serde_json::Value) -> (StatusCode, serde_json::Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b) = send(app, req).await;
    (s, serde_json::from_slice(&b).unwrap_or(serde_json::Value::Null))
}
