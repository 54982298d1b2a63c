//! Partition and mapping configuration files, and the fingerprint that ties
//! a knowledge base to the color semantics it was built with.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::color::{BasicColor, Hue, Intensity, MappingRule, Saturation, TermMask};
use crate::error::{Error, Result};
use crate::fuzzy::{LinguisticVariable, MembershipFunction, Shape, Term};

pub const DEFAULT_PARTITIONS: &str = include_str!("../config/partitions.toml");
pub const DEFAULT_MAPPING: &str = include_str!("../config/mapping.toml");

const SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Triangular,
    Trapezoidal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub name: String,
    pub shape: ShapeKind,
    pub points: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub domain: [f64; 2],
    #[serde(default)]
    pub cyclic: bool,
    pub terms: Vec<TermSpec>,
}

impl VariableSpec {
    pub fn to_variable(&self, name: &str) -> Result<LinguisticVariable> {
        let [lo, hi] = self.domain;
        let period = self.cyclic.then_some(hi - lo);
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let shape = match (t.shape, t.points.as_slice()) {
                    (ShapeKind::Triangular, &[a, b, c]) => Shape::Triangular { a, b, c },
                    (ShapeKind::Trapezoidal, &[a, b, c, d]) => Shape::Trapezoidal { a, b, c, d },
                    (kind, pts) => {
                        return Err(Error::Config(format!(
                            "{name}.{}: {kind:?} shape needs {} points, got {}",
                            t.name,
                            if kind == ShapeKind::Triangular { 3 } else { 4 },
                            pts.len()
                        )))
                    }
                };
                let mf = MembershipFunction::new(shape, period)
                    .map_err(|e| Error::Config(format!("{name}.{}: {e}", t.name)))?;
                Ok(Term {
                    name: t.name.clone(),
                    mf,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LinguisticVariable::new(name, (lo, hi), terms)
    }
}

/// Contents of a partition configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub schema: u32,
    pub hue: VariableSpec,
    pub saturation: VariableSpec,
    pub intensity: VariableSpec,
    pub query_intensity: VariableSpec,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self::parse(DEFAULT_PARTITIONS).expect("embedded partition config is valid")
    }
}

impl PartitionConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("partition file: {e}")))?;
        if cfg.schema != SCHEMA {
            return Err(Error::Config(format!(
                "partition file schema {} unsupported (expected {SCHEMA})",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub color: String,
    pub hue: Vec<String>,
    pub saturation: Vec<String>,
    pub intensity: Vec<String>,
}

/// Contents of a basic-color mapping file: ordered carve-out rules applied
/// after the three fixed rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingConfig {
    pub schema: u32,
    #[serde(default)]
    pub rules: Vec<RuleSpec>,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self::parse(DEFAULT_MAPPING).expect("embedded mapping config is valid")
    }
}

impl MappingConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("mapping file: {e}")))?;
        if cfg.schema != SCHEMA {
            return Err(Error::Config(format!(
                "mapping file schema {} unsupported (expected {SCHEMA})",
                cfg.schema
            )));
        }
        cfg.compile()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub(crate) fn compile(&self) -> Result<Vec<MappingRule>> {
        self.rules
            .iter()
            .enumerate()
            .map(|(n, r)| {
                let ctx = |e: Error| Error::Config(format!("mapping rule {}: {e}", n + 1));
                Ok(MappingRule {
                    hue: mask::<Hue>(&r.hue, "hue").map_err(ctx)?,
                    saturation: mask::<Saturation>(&r.saturation, "saturation").map_err(ctx)?,
                    intensity: mask::<Intensity>(&r.intensity, "intensity").map_err(ctx)?,
                    color: r.color.parse::<BasicColor>().map_err(ctx)?,
                })
            })
            .collect()
    }
}

trait Indexed: std::str::FromStr<Err = Error> {
    fn idx(&self) -> usize;
}

impl Indexed for Hue {
    fn idx(&self) -> usize {
        self.index()
    }
}

impl Indexed for Saturation {
    fn idx(&self) -> usize {
        self.index()
    }
}

impl Indexed for Intensity {
    fn idx(&self) -> usize {
        self.index()
    }
}

fn mask<T: Indexed>(names: &[String], attr: &str) -> Result<TermMask> {
    if names.is_empty() {
        return Err(Error::Config(format!("empty {attr} set")));
    }
    let mut m = TermMask::default();
    for n in names {
        m.insert(n.parse::<T>()?.idx());
    }
    Ok(m)
}

/// Stable hash of the color semantics: hue/saturation/intensity partitions
/// plus the basic-color mapping. Formatting and comments in the source files
/// do not affect it; the query-intensity variable is excluded.
pub fn fingerprint(partitions: &PartitionConfig, mapping: &MappingConfig) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        hue: &'a VariableSpec,
        saturation: &'a VariableSpec,
        intensity: &'a VariableSpec,
        mapping: &'a [RuleSpec],
    }
    let canonical = serde_json::to_vec(&Canonical {
        hue: &partitions.hue,
        saturation: &partitions.saturation,
        intensity: &partitions.intensity,
        mapping: &mapping.rules,
    })
    .expect("config serializes");
    format!("sha256:{}", hex::encode(Sha256::digest(&canonical)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let p = PartitionConfig::default();
        assert_eq!(p.hue.terms.len(), 8);
        assert_eq!(p.saturation.terms.len(), 3);
        assert_eq!(p.intensity.terms.len(), 5);
        assert_eq!(MappingConfig::default().rules.len(), 2);
    }

    #[test]
    fn default_partitions_are_ruspini() {
        let p = PartitionConfig::default();
        for (name, spec) in [
            ("hue", &p.hue),
            ("saturation", &p.saturation),
            ("intensity", &p.intensity),
            ("query_intensity", &p.query_intensity),
        ] {
            let v = spec.to_variable(name).unwrap();
            assert!(v.ruspini_deviation(1000) <= 1e-9, "{name}");
        }
    }

    #[test]
    fn fingerprint_ignores_formatting() {
        let a = PartitionConfig::default();
        let reformatted = DEFAULT_PARTITIONS
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n");
        let b = PartitionConfig::parse(&reformatted).unwrap();
        let m = MappingConfig::default();
        assert_eq!(fingerprint(&a, &m), fingerprint(&b, &m));
    }

    #[test]
    fn fingerprint_tracks_breakpoints_not_query_terms() {
        let m = MappingConfig::default();
        let base = PartitionConfig::default();
        let mut moved = base.clone();
        moved.saturation.terms[0].points[3] = 31.0;
        assert_ne!(fingerprint(&base, &m), fingerprint(&moved, &m));

        let mut query = base.clone();
        query.query_intensity.terms[0].points[3] = 0.3;
        assert_eq!(fingerprint(&base, &m), fingerprint(&query, &m));

        let mut m2 = m.clone();
        m2.rules.pop();
        assert_ne!(fingerprint(&base, &m), fingerprint(&base, &m2));
    }

    #[test]
    fn bad_configs() {
        assert!(PartitionConfig::parse("schema = 1").is_err());
        let wrong_points = DEFAULT_PARTITIONS.replace(
            "[0.0, 0.0, 10.0, 30.0]",
            "[0.0, 10.0, 30.0]",
        );
        let cfg = PartitionConfig::parse(&wrong_points).unwrap();
        assert!(cfg.saturation.to_variable("saturation").is_err());

        let unknown = DEFAULT_MAPPING.replace("\"Deep\", \"Medium\"", "\"Deep\", \"Murky\"");
        assert!(matches!(MappingConfig::parse(&unknown), Err(Error::Config(_))));
        let empty = DEFAULT_MAPPING.replace("saturation = [\"Medium\"]", "saturation = []");
        assert!(MappingConfig::parse(&empty).is_err());
        let missing = "schema = 1\n[[rules]]\ncolor = \"brown\"\nhue = [\"Red\"]\n";
        assert!(MappingConfig::parse(missing).is_err());
    }
}
