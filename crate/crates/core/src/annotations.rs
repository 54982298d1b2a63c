//! Ingestion of the tab-separated emotion annotation release: per-image
//! agreement fractions from the image-only annotation set, thresholded per
//! emotion.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::emotion::EmotionLabel;
use crate::error::{Error, Result};

/// Prefix of the per-emotion agreement columns for image-only annotations.
pub const IMAGE_ONLY_PREFIX: &str = "ImageOnly: ";

const ID_COLUMN: &str = "ID";
const URL_COLUMN: &str = "Image URL";

/// Per-emotion selection thresholds on the agreement fraction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Thresholds(BTreeMap<EmotionLabel, f64>);

impl Default for Thresholds {
    /// 0.5 everywhere except shyness (0.3), which has a single image at 0.5.
    fn default() -> Self {
        Self(
            EmotionLabel::ALL
                .iter()
                .map(|&e| (e, if e == EmotionLabel::Shyness { 0.3 } else { 0.5 }))
                .collect(),
        )
    }
}

impl Thresholds {
    pub fn uniform(value: f64) -> Self {
        Self(EmotionLabel::ALL.iter().map(|&e| (e, value)).collect())
    }

    pub fn get(&self, e: EmotionLabel) -> f64 {
        self.0[&e]
    }

    pub fn set(&mut self, e: EmotionLabel, value: f64) -> Result<()> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Config(format!("threshold for {e} must be >= 0, got {value}")));
        }
        self.0.insert(e, value);
        Ok(())
    }

    /// Apply an override written as `emotion=fraction`.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("threshold `{spec}` is not emotion=fraction")))?;
        let e: EmotionLabel = name.trim().parse()?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("threshold `{spec}`: bad fraction")))?;
        self.set(e, v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationRecord {
    pub id: String,
    pub image_url: Option<String>,
    pub agreement: BTreeMap<EmotionLabel, f64>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ImageRef {
    pub id: String,
    pub url: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct AnnotationSet {
    pub records: Vec<AnnotationRecord>,
    pub skipped_rows: usize,
    pub warnings: Vec<String>,
}

/// Parse the annotation table. Rows that cannot be read are skipped and
/// counted; a missing required column is a schema error.
pub fn read_annotations<R: Read>(reader: R, column_prefix: &str) -> Result<AnnotationSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header row: {e}")))?
        .clone();
    if headers.iter().all(|h| h.trim().is_empty()) {
        return Err(Error::Schema("annotation file has no header row".into()));
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let id_col = find(ID_COLUMN).ok_or_else(|| Error::MissingColumn {
        column: ID_COLUMN.into(),
    })?;
    let url_col = find(URL_COLUMN);
    let mut emotion_cols = Vec::with_capacity(EmotionLabel::ALL.len());
    for &e in EmotionLabel::ALL {
        let column = format!("{column_prefix}{e}");
        let idx = find(&column).ok_or(Error::MissingColumn { column })?;
        emotion_cols.push((e, idx));
    }

    let mut set = AnnotationSet::default();
    for (n, row) in rdr.records().enumerate() {
        let line = n + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                set.skip(format!("line {line}: {e}"));
                continue;
            }
        };
        let id = match row.get(id_col).map(str::trim) {
            Some(id) if !id.is_empty() => id.to_string(),
            _ => {
                set.skip(format!("line {line}: missing image id"));
                continue;
            }
        };
        let mut agreement = BTreeMap::new();
        let mut bad = None;
        for &(e, idx) in &emotion_cols {
            match row.get(idx).map(str::trim).map(str::parse::<f64>) {
                Some(Ok(v)) if (0.0..=1.0).contains(&v) => {
                    agreement.insert(e, v);
                }
                Some(Ok(v)) => bad = Some(format!("{e} agreement {v} outside [0, 1]")),
                Some(Err(_)) => bad = Some(format!("{e} agreement is not a number")),
                None => bad = Some(format!("row has no {e} column")),
            }
            if bad.is_some() {
                break;
            }
        }
        if let Some(reason) = bad {
            set.skip(format!("line {line} ({id}): {reason}"));
            continue;
        }
        let image_url = url_col
            .and_then(|i| row.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        set.records.push(AnnotationRecord {
            id,
            image_url,
            agreement,
        });
    }
    Ok(set)
}

impl AnnotationSet {
    fn skip(&mut self, warning: String) {
        tracing::warn!("skipping annotation row: {warning}");
        self.skipped_rows += 1;
        self.warnings.push(warning);
    }
}

/// Images selected per emotion: agreement ≥ threshold. Lists are sorted by
/// id so the result does not depend on row order.
pub fn select(
    records: &[AnnotationRecord],
    thresholds: &Thresholds,
) -> BTreeMap<EmotionLabel, Vec<ImageRef>> {
    let mut out: BTreeMap<EmotionLabel, Vec<ImageRef>> =
        EmotionLabel::ALL.iter().map(|&e| (e, Vec::new())).collect();
    for r in records {
        for (&e, &v) in &r.agreement {
            if v >= thresholds.get(e) {
                out.get_mut(&e).unwrap().push(ImageRef {
                    id: r.id.clone(),
                    url: r.image_url.clone(),
                });
            }
        }
    }
    for list in out.values_mut() {
        list.sort();
        list.dedup();
    }
    out
}

#[derive(Clone, Debug)]
pub struct Selection {
    pub by_emotion: BTreeMap<EmotionLabel, Vec<ImageRef>>,
    pub rows_read: usize,
    pub skipped_rows: usize,
}

impl Selection {
    pub fn counts(&self) -> BTreeMap<EmotionLabel, usize> {
        self.by_emotion.iter().map(|(&e, v)| (e, v.len())).collect()
    }
}

pub fn load_annotations(path: &Path, thresholds: &Thresholds, column_prefix: &str) -> Result<Selection> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let set = read_annotations(std::io::BufReader::new(file), column_prefix)?;
    Ok(Selection {
        by_emotion: select(&set.records, thresholds),
        rows_read: set.records.len() + set.skipped_rows,
        skipped_rows: set.skipped_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        let mut cols = vec!["ID".to_string(), "Style".into(), "Image URL".into()];
        cols.extend(EmotionLabel::ALL.iter().map(|e| format!("ImageOnly: {e}")));
        cols.push("TitleOnly: happiness".into());
        cols.join("\t")
    }

    fn row(id: &str, vals: [f64; 10]) -> String {
        let mut cols = vec![id.to_string(), "Baroque".into(), format!("http://x/{id}.jpg")];
        cols.extend(vals.iter().map(|v| v.to_string()));
        cols.push("0.9".into());
        cols.join("\t")
    }

    // order: happiness love anger sadness gratitude fear shame surprise shyness trust
    fn synthetic() -> String {
        [
            header(),
            row("a", [0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.3, 0.0]),
            row("b", [0.49, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.29, 0.0]),
            row("c", [0.9, 0.5, 0.5, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            row("d", [0.0; 10]),
            row("e", [0.0, 0.0, 0.0, 0.7, 0.0, 0.5, 0.0, 0.2, 0.4, 0.5]),
        ]
        .join("\n")
    }

    #[test]
    fn hand_checked_selection() {
        let set = read_annotations(synthetic().as_bytes(), IMAGE_ONLY_PREFIX).unwrap();
        assert_eq!(set.records.len(), 5);
        let sel = select(&set.records, &Thresholds::default());
        let ids = |e| {
            sel[&e]
                .iter()
                .map(|r| r.id.as_str())
                .collect::<Vec<_>>()
        };
        use EmotionLabel as E;
        assert_eq!(ids(E::Happiness), vec!["a", "c"]);
        assert_eq!(ids(E::Love), vec!["b", "c"]);
        assert_eq!(ids(E::Anger), vec!["c"]);
        assert_eq!(ids(E::Sadness), vec!["e"]);
        assert_eq!(ids(E::Fear), vec!["e"]);
        assert_eq!(ids(E::Shyness), vec!["a", "e"]);
        assert_eq!(ids(E::Trust), vec!["c", "e"]);
        assert!(ids(E::Gratitude).is_empty());
        assert!(ids(E::Surprise).is_empty());
        assert_eq!(sel[&E::Happiness][0].url.as_deref(), Some("http://x/a.jpg"));
    }

    #[test]
    fn threshold_above_one_selects_nothing() {
        let set = read_annotations(synthetic().as_bytes(), IMAGE_ONLY_PREFIX).unwrap();
        let sel = select(&set.records, &Thresholds::uniform(1.01));
        assert!(sel.values().all(Vec::is_empty));
    }

    #[test]
    fn missing_column_is_named() {
        let text = synthetic().replace("ImageOnly: shame", "ImageOnly: shamefulness");
        match read_annotations(text.as_bytes(), IMAGE_ONLY_PREFIX) {
            Err(Error::MissingColumn { column }) => assert_eq!(column, "ImageOnly: shame"),
            other => panic!("expected missing column, got {other:?}"),
        }
        let no_id = synthetic().replacen("ID", "Identifier", 1);
        assert!(matches!(
            read_annotations(no_id.as_bytes(), IMAGE_ONLY_PREFIX),
            Err(Error::MissingColumn { .. })
        ));
    }

    #[test]
    fn empty_file_is_schema_error() {
        assert!(matches!(
            read_annotations(&b""[..], IMAGE_ONLY_PREFIX),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn bad_rows_skipped_and_counted() {
        let mut text = synthetic();
        text.push_str("\nf\tX\turl\tnot-a-number");
        text.push_str("\n\tX\turl\t0.1\t0.1\t0.1\t0.1\t0.1\t0.1\t0.1\t0.1\t0.1\t0.1");
        text.push_str("\ng\tX\turl\t1.5\t0.1\t0.1\t0.1\t0.1\t0.1\t0.1\t0.1\t0.1\t0.1");
        let set = read_annotations(text.as_bytes(), IMAGE_ONLY_PREFIX).unwrap();
        assert_eq!(set.records.len(), 5);
        assert_eq!(set.skipped_rows, 3);
        assert_eq!(set.warnings.len(), 3);
    }

    #[test]
    fn threshold_overrides() {
        let mut t = Thresholds::default();
        t.apply_override("anger=0.4").unwrap();
        assert_eq!(t.get(EmotionLabel::Anger), 0.4);
        assert!(t.apply_override("rage=0.4").is_err());
        assert!(t.apply_override("anger").is_err());
        assert!(t.apply_override("anger=-1").is_err());
    }
}
