//! Palette similarity, ranked emotion scores for images, and fuzzy-hedge
//! retrieval queries over those scores.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::color::FuzzyColor;
use crate::config::PartitionConfig;
use crate::emotion::EmotionLabel;
use crate::error::{Error, Result};
use crate::fuzzy::{apply_hedges, Hedge, LinguisticVariable};
use crate::kb::{EmotionPalette, KnowledgeBase};
use crate::palette::FuzzyPalette;

/// Set of fuzzy colors as a 120-bit mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ColorSet(u128);

impl ColorSet {
    pub fn insert(&mut self, c: FuzzyColor) {
        self.0 |= 1u128 << c.index();
    }

    pub fn contains(&self, c: FuzzyColor) -> bool {
        self.0 & (1u128 << c.index()) != 0
    }

    pub fn len(&self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn intersection(self, other: Self) -> Self {
        Self(self.0 & other.0)
    }

    pub fn union(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = FuzzyColor> {
        (0..FuzzyColor::COUNT)
            .filter(move |i| self.0 & (1u128 << i) != 0)
            .map(|i| FuzzyColor::from_index(i).unwrap())
    }
}

impl FromIterator<FuzzyColor> for ColorSet {
    fn from_iter<I: IntoIterator<Item = FuzzyColor>>(iter: I) -> Self {
        let mut s = Self::default();
        for c in iter {
            s.insert(c);
        }
        s
    }
}

impl From<&FuzzyPalette> for ColorSet {
    fn from(p: &FuzzyPalette) -> Self {
        p.colors().collect()
    }
}

impl From<&EmotionPalette> for ColorSet {
    fn from(p: &EmotionPalette) -> Self {
        p.colors().collect()
    }
}

/// |a ∩ b| / |a ∪ b|, with 0/0 taken as 0.
pub fn jaccard(a: ColorSet, b: ColorSet) -> f64 {
    let union = a.union(b).len();
    if union == 0 {
        return 0.0;
    }
    f64::from(a.intersection(b).len()) / f64::from(union)
}

/// Σ min / Σ max over per-color weights (image proportions against emotion
/// shares). Not the default similarity.
pub fn weighted_jaccard(emotion: &EmotionPalette, image: &FuzzyPalette) -> f64 {
    let mut a = [0.0f64; FuzzyColor::COUNT];
    let mut b = [0.0f64; FuzzyColor::COUNT];
    for e in &emotion.entries {
        a[e.color.index()] = e.share;
    }
    for e in &image.entries {
        b[e.color.index()] = e.proportion;
    }
    let (mut lo, mut hi) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        lo += x.min(*y);
        hi += x.max(*y);
    }
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Jaccard,
    WeightedJaccard,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionScore {
    pub emotion: EmotionLabel,
    pub jaccard: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionScores {
    /// Descending by score; ties by emotion name.
    pub scores: Vec<EmotionScore>,
}

impl EmotionScores {
    pub fn predicted(&self) -> Option<EmotionLabel> {
        self.scores.first().map(|s| s.emotion)
    }

    pub fn get(&self, e: EmotionLabel) -> Option<f64> {
        self.scores.iter().find(|s| s.emotion == e).map(|s| s.jaccard)
    }
}

fn rank(a: &EmotionScore, b: &EmotionScore) -> Ordering {
    b.jaccard
        .total_cmp(&a.jaccard)
        .then_with(|| a.emotion.as_str().cmp(b.emotion.as_str()))
}

/// Score an image palette against every emotion in the knowledge base.
pub fn score_emotions(image: &FuzzyPalette, kb: &KnowledgeBase) -> EmotionScores {
    score_emotions_with(image, kb, Similarity::Jaccard)
}

pub fn score_emotions_with(image: &FuzzyPalette, kb: &KnowledgeBase, sim: Similarity) -> EmotionScores {
    let img = ColorSet::from(image);
    let mut scores: Vec<EmotionScore> = kb
        .emotions
        .iter()
        .map(|(&emotion, rec)| EmotionScore {
            emotion,
            jaccard: match sim {
                Similarity::Jaccard => jaccard(ColorSet::from(&rec.palette), img),
                Similarity::WeightedJaccard => weighted_jaccard(&rec.palette, image),
            },
        })
        .collect();
    scores.sort_by(rank);
    EmotionScores { scores }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityTerm {
    Low,
    Medium,
    High,
}

impl IntensityTerm {
    pub const ALL: [IntensityTerm; 3] = [Self::Low, Self::Medium, Self::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for IntensityTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for IntensityTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Self::Low),
            "medium" => Ok(Self::Medium),
            "high" => Ok(Self::High),
            _ => Err(Error::query(s, "unknown intensity (expected low, medium or high)")),
        }
    }
}

/// Linguistic variable over the score domain [0, 1].
#[derive(Clone, Debug)]
pub struct QueryIntensity(LinguisticVariable);

impl QueryIntensity {
    pub fn from_config(cfg: &PartitionConfig) -> Result<Self> {
        let var = cfg.query_intensity.to_variable("query_intensity")?;
        if var.domain() != (0.0, 1.0) {
            return Err(Error::Config("query_intensity domain must be [0, 1]".into()));
        }
        let names: Vec<&str> = var.terms().iter().map(|t| t.name.as_str()).collect();
        if names != ["low", "medium", "high"] {
            return Err(Error::Config(format!(
                "query_intensity terms must be low, medium, high; got {names:?}"
            )));
        }
        Ok(Self(var))
    }

    pub fn variable(&self) -> &LinguisticVariable {
        &self.0
    }

    pub fn membership(&self, term: IntensityTerm, score: f64) -> Result<f64> {
        let x = self.0.check_domain(score)?;
        Ok(self.0.terms()[term.index()].mf.eval(x))
    }
}

impl Default for QueryIntensity {
    fn default() -> Self {
        Self::from_config(&PartitionConfig::default()).expect("embedded query partition is valid")
    }
}

/// `[not] [very|more-or-less]* {low|medium|high} {emotion}`
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub emotion: EmotionLabel,
    pub intensity: IntensityTerm,
    /// Written order, outermost first.
    pub hedges: Vec<Hedge>,
}

impl Query {
    pub fn parse(text: &str) -> Result<Self> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let n = tokens.len();
        if n < 2 {
            return Err(Error::query(
                text.trim(),
                "query needs at least an intensity and an emotion",
            ));
        }
        let emotion = parse_emotion(tokens[n - 1])?;
        let intensity: IntensityTerm = tokens[n - 2].parse()?;
        let hedges = tokens[..n - 2]
            .iter()
            .map(|t| t.parse::<Hedge>())
            .collect::<Result<Vec<_>>>()?;
        check_hedge_order(&hedges, &tokens[..n - 2])?;
        Ok(Self {
            emotion,
            intensity,
            hedges,
        })
    }

    /// Build from separate fields; `hedges` is a comma-separated list in
    /// written order, possibly empty.
    pub fn from_parts(emotion: &str, intensity: &str, hedges: &str) -> Result<Self> {
        let emotion = parse_emotion(emotion.trim())?;
        let intensity: IntensityTerm = intensity.trim().parse()?;
        let tokens: Vec<&str> = hedges
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect();
        let hedges = tokens
            .iter()
            .map(|t| t.parse::<Hedge>())
            .collect::<Result<Vec<_>>>()?;
        check_hedge_order(&hedges, &tokens)?;
        Ok(Self {
            emotion,
            intensity,
            hedges,
        })
    }

    /// Degree to which an emotion score satisfies the query.
    pub fn degree(&self, qi: &QueryIntensity, score: f64) -> Result<f64> {
        apply_hedges(&self.hedges, qi.membership(self.intensity, score)?)
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for h in &self.hedges {
            write!(f, "{h} ")?;
        }
        write!(f, "{} {}", self.intensity, self.emotion)
    }
}

fn parse_emotion(token: &str) -> Result<EmotionLabel> {
    token
        .parse()
        .map_err(|_| Error::query(token, "unknown emotion"))
}

fn check_hedge_order(hedges: &[Hedge], tokens: &[&str]) -> Result<()> {
    for (i, h) in hedges.iter().enumerate() {
        if *h == Hedge::Not && i > 0 {
            return Err(Error::query(tokens[i], "`not` may only appear first"));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryMatch {
    pub id: String,
    pub score: f64,
    pub degree: f64,
}

/// Degree of each image for the query, ranked by degree descending then id.
/// Images lacking a score for the queried emotion are left out.
pub fn match_query<'a, I>(query: &Query, qi: &QueryIntensity, images: I) -> Result<Vec<QueryMatch>>
where
    I: IntoIterator<Item = (&'a str, &'a EmotionScores)>,
{
    let mut out = Vec::new();
    for (id, scores) in images {
        if let Some(score) = scores.get(query.emotion) {
            out.push(QueryMatch {
                id: id.to_string(),
                score,
                degree: query.degree(qi, score)?,
            });
        }
    }
    out.sort_by(|a, b| b.degree.total_cmp(&a.degree).then_with(|| a.id.cmp(&b.id)));
    Ok(out)
}
