//! Analysis of two-alternative forced-choice experiments: cohort filtering,
//! hit rates, Spearman–Kärber estimates and a logistic psychometric fit.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::emotion::EmotionLabel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    First,
    Second,
}

impl std::str::FromStr for Choice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "first" | "left" | "a" => Ok(Self::First),
            "2" | "second" | "right" | "b" => Ok(Self::Second),
            _ => Err(Error::Input(format!("bad choice `{s}` (expected 1/2 or first/second)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: String,
    pub emotion: EmotionLabel,
    /// Predicted intensities of the two items.
    pub intensities: (f64, f64),
    pub choice: Choice,
}

impl TrialRecord {
    /// Choosing the item the model rates higher. Equal ratings have no
    /// correct answer, so neither choice is a hit.
    pub fn is_hit(&self) -> bool {
        let (a, b) = self.intensities;
        match self.choice {
            Choice::First => a > b,
            Choice::Second => b > a,
        }
    }

    pub fn difference(&self) -> f64 {
        (self.intensities.0 - self.intensities.1).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub id: String,
    pub color_test_passed: bool,
    pub trials: Vec<TrialRecord>,
}

fn parse_flag(s: &str) -> Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "pass" | "passed" | "yes" | "y" => Ok(true),
        "0" | "false" | "fail" | "failed" | "no" | "n" => Ok(false),
        _ => Err(Error::Input(format!("bad color test flag `{s}`"))),
    }
}

const TRIAL_COLUMNS: [&str; 7] = [
    "participant",
    "trial",
    "emotion",
    "intensity1",
    "intensity2",
    "choice",
    "color_test",
];

/// Read the flat trial table (one row per response), grouped by participant
/// in order of first appearance.
pub fn read_trials<R: Read>(reader: R) -> Result<Vec<ParticipantRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("trial file header: {e}")))?
        .clone();
    let mut idx = [0usize; 7];
    for (slot, name) in idx.iter_mut().zip(TRIAL_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or(Error::MissingColumn { column: name.into() })?;
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, ParticipantRecord> = BTreeMap::new();
    for (n, row) in rdr.records().enumerate() {
        let line = n + 2;
        let row = row.map_err(|e| Error::Input(format!("trial file line {line}: {e}")))?;
        let field = |i: usize| row.get(idx[i]).unwrap_or("").trim();
        let bad = |what: String| Error::Input(format!("trial file line {line}: {what}"));
        let id = field(0).to_string();
        if id.is_empty() {
            return Err(bad("empty participant id".into()));
        }
        let emotion: EmotionLabel = field(2).parse().map_err(|e| bad(format!("{e}")))?;
        let intensity = |i: usize| -> Result<f64> {
            let v: f64 = field(i)
                .parse()
                .map_err(|_| bad(format!("{} is not a number", TRIAL_COLUMNS[i])))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(format!("{} = {v} outside [0, 1]", TRIAL_COLUMNS[i])));
            }
            Ok(v)
        };
        let intensities = (intensity(3)?, intensity(4)?);
        let choice: Choice = field(5).parse().map_err(|e| bad(format!("{e}")))?;
        let passed = parse_flag(field(6)).map_err(|e| bad(format!("{e}")))?;
        let trial = TrialRecord {
            trial: field(1).to_string(),
            emotion,
            intensities,
            choice,
        };
        match by_id.get_mut(&id) {
            Some(p) => {
                if p.color_test_passed != passed {
                    return Err(bad(format!("inconsistent color test flag for {id}")));
                }
                if p.trials.iter().any(|t| t.trial == trial.trial) {
                    return Err(bad(format!("duplicate response to trial {} by {id}", trial.trial)));
                }
                p.trials.push(trial);
            }
            None => {
                order.push(id.clone());
                by_id.insert(
                    id.clone(),
                    ParticipantRecord {
                        id,
                        color_test_passed: passed,
                        trials: vec![trial],
                    },
                );
            }
        }
    }
    Ok(order.into_iter().map(|id| by_id.remove(&id).unwrap()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    ColorTest,
    Outlier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub participant: String,
    pub reason: ExclusionReason,
    /// Fraction of responses matching the per-trial majority.
    pub agreement: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub participants_in: usize,
    pub analyzed: usize,
    pub excluded: Vec<Exclusion>,
}

/// Minimum agreement with the per-trial majority to stay in the cohort.
pub const MIN_AGREEMENT: f64 = 0.5;

/// Drop color-test failures, then participants agreeing with the per-trial
/// majority on fewer than half of their responses. The majority is taken
/// once over all color-test passers; a tied trial counts both choices as
/// the majority.
pub fn exclude_invalid(
    participants: Vec<ParticipantRecord>,
) -> Result<(Vec<ParticipantRecord>, ExclusionReport)> {
    if participants.len() < 2 {
        return Err(Error::Analysis(format!(
            "need at least 2 participants, got {}",
            participants.len()
        )));
    }
    let participants_in = participants.len();
    let (passed, failed): (Vec<_>, Vec<_>) =
        participants.into_iter().partition(|p| p.color_test_passed);
    let mut excluded: Vec<Exclusion> = failed
        .iter()
        .map(|p| Exclusion {
            participant: p.id.clone(),
            reason: ExclusionReason::ColorTest,
            agreement: None,
        })
        .collect();

    let mut votes: BTreeMap<&str, [u32; 2]> = BTreeMap::new();
    for p in &passed {
        for t in &p.trials {
            let v = votes.entry(t.trial.as_str()).or_default();
            v[t.choice as usize] += 1;
        }
    }
    let majority: BTreeMap<&str, BTreeSet<usize>> = votes
        .iter()
        .map(|(&k, v)| {
            let top = v[0].max(v[1]);
            (k, (0..2).filter(|&i| v[i] == top).collect())
        })
        .collect();

    let mut kept = Vec::with_capacity(passed.len());
    let mut outliers = Vec::new();
    for p in &passed {
        let agree = p
            .trials
            .iter()
            .filter(|t| majority[t.trial.as_str()].contains(&(t.choice as usize)))
            .count();
        let agreement = if p.trials.is_empty() {
            0.0
        } else {
            agree as f64 / p.trials.len() as f64
        };
        if agreement < MIN_AGREEMENT {
            outliers.push(Exclusion {
                participant: p.id.clone(),
                reason: ExclusionReason::Outlier,
                agreement: Some(agreement),
            });
        } else {
            kept.push(p.id.clone());
        }
    }
    excluded.extend(outliers);
    let kept_set: BTreeSet<String> = kept.into_iter().collect();
    let kept: Vec<ParticipantRecord> = passed
        .into_iter()
        .filter(|p| kept_set.contains(&p.id))
        .collect();
    if kept.is_empty() {
        return Err(Error::Analysis("every participant was excluded".into()));
    }
    let report = ExclusionReport {
        participants_in,
        analyzed: kept.len(),
        excluded,
    };
    Ok((kept, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionHits {
    pub emotion: EmotionLabel,
    pub hits: u64,
    pub responses: u64,
    pub rate: f64,
    /// Mean stimulus difference over the emotion's trials.
    pub difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitRates {
    pub rows: Vec<EmotionHits>,
    pub total_hits: u64,
    pub total_responses: u64,
    pub average: f64,
}

/// Hit counts per emotion from summary data: `(emotion, hits, difference)`
/// with every participant answering each emotion once.
pub fn hit_rates_from_counts(
    counts: &[(EmotionLabel, u64, f64)],
    n_participants: u64,
) -> Result<HitRates> {
    if n_participants == 0 {
        return Err(Error::Analysis("zero participants".into()));
    }
    let rows = counts
        .iter()
        .map(|&(emotion, hits, difference)| {
            if hits > n_participants {
                return Err(Error::Analysis(format!(
                    "{emotion}: {hits} hits exceed {n_participants} participants"
                )));
            }
            Ok(EmotionHits {
                emotion,
                hits,
                responses: n_participants,
                rate: hits as f64 / n_participants as f64,
                difference,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(totals(rows))
}

fn totals(rows: Vec<EmotionHits>) -> HitRates {
    let total_hits = rows.iter().map(|r| r.hits).sum();
    let total_responses: u64 = rows.iter().map(|r| r.responses).sum();
    HitRates {
        rows,
        total_hits,
        total_responses,
        average: if total_responses == 0 {
            0.0
        } else {
            total_hits as f64 / total_responses as f64
        },
    }
}

/// Hit rates per emotion over a (filtered) cohort, in emotion order.
pub fn hit_rates(participants: &[ParticipantRecord]) -> Result<HitRates> {
    if participants.is_empty() {
        return Err(Error::Analysis("zero participants".into()));
    }
    let mut acc: BTreeMap<EmotionLabel, (u64, u64, f64)> = BTreeMap::new();
    for t in participants.iter().flat_map(|p| &p.trials) {
        let e = acc.entry(t.emotion).or_default();
        e.0 += u64::from(t.is_hit());
        e.1 += 1;
        e.2 += t.difference();
    }
    let rows = acc
        .into_iter()
        .map(|(emotion, (hits, responses, diff))| EmotionHits {
            emotion,
            hits,
            responses,
            rate: hits as f64 / responses as f64,
            difference: diff / responses as f64,
        })
        .collect();
    Ok(totals(rows))
}

/// p = 2g − 1, clamped to [0, 1].
pub fn transform_probability(g: f64) -> f64 {
    (2.0 * g - 1.0).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsychometricPoint {
    pub x: f64,
    pub g: f64,
    pub n: u64,
}

impl HitRates {
    pub fn points(&self) -> Vec<PsychometricPoint> {
        self.rows
            .iter()
            .map(|r| PsychometricPoint {
                x: r.difference,
                g: r.rate,
                n: r.responses,
            })
            .collect()
    }
}

/// Sort by x and merge points sharing an x into one with n-weighted g.
pub fn prepare_points(points: &[PsychometricPoint]) -> Result<Vec<PsychometricPoint>> {
    for p in points {
        if !p.x.is_finite() || !(0.0..=1.0).contains(&p.g) || p.n == 0 {
            return Err(Error::Analysis(format!("invalid point {p:?}")));
        }
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut out: Vec<PsychometricPoint> = Vec::with_capacity(sorted.len());
    for p in sorted {
        match out.last_mut() {
            Some(last) if last.x == p.x => {
                let n = last.n + p.n;
                last.g = (last.g * last.n as f64 + p.g * p.n as f64) / n as f64;
                last.n = n;
            }
            _ => out.push(p),
        }
    }
    Ok(out)
}

/// Pooled-adjacent-violators: the weighted least-squares nondecreasing fit.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (mean, weight, len)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 + m2 * w2) / w, w, l1 + l2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, l)| std::iter::repeat_n(m, l))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityScale {
    /// Observed proportion correct g.
    #[default]
    Observed,
    /// 2g − 1, clamped.
    ChanceCorrected,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonize {
    #[default]
    None,
    Pava,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkConfig {
    pub x_lower: f64,
    pub x_upper: f64,
    pub scale: ProbabilityScale,
    pub monotonize: Monotonize,
}

impl Default for SkConfig {
    fn default() -> Self {
        Self {
            x_lower: 0.0,
            x_upper: 1.0,
            scale: ProbabilityScale::Observed,
            monotonize: Monotonize::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkEstimate {
    pub mean: f64,
    pub se: Option<f64>,
    /// Augmented `(x, p, n)` sequence the estimate was computed over; the
    /// end points carry n = 0.
    pub sequence: Vec<(f64, f64, u64)>,
}

/// Probability sequence after scale transform and optional monotonization.
// negated comparisons so NaN bounds are rejected
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn sk_sequence(points: &[PsychometricPoint], cfg: &SkConfig) -> Result<Vec<(f64, f64, u64)>> {
    if !(cfg.x_lower < cfg.x_upper) {
        return Err(Error::Analysis("x_lower must be below x_upper".into()));
    }
    for w in points.windows(2) {
        if !(w[0].x < w[1].x) {
            return Err(Error::Analysis(format!(
                "points must be strictly increasing in x ({} then {})",
                w[0].x, w[1].x
            )));
        }
    }
    for p in points {
        if !(p.x > cfg.x_lower && p.x < cfg.x_upper) {
            return Err(Error::Analysis(format!(
                "x = {} outside ({}, {})",
                p.x, cfg.x_lower, cfg.x_upper
            )));
        }
        if !(0.0..=1.0).contains(&p.g) {
            return Err(Error::Analysis(format!("g = {} outside [0, 1]", p.g)));
        }
    }
    let mut p: Vec<f64> = points
        .iter()
        .map(|pt| match cfg.scale {
            ProbabilityScale::Observed => pt.g,
            ProbabilityScale::ChanceCorrected => transform_probability(pt.g),
        })
        .collect();
    if cfg.monotonize == Monotonize::Pava {
        let w: Vec<f64> = points.iter().map(|pt| pt.n as f64).collect();
        p = pava(&p, &w);
    }
    let mut seq = Vec::with_capacity(points.len() + 2);
    seq.push((cfg.x_lower, 0.0, 0));
    seq.extend(points.iter().zip(p).map(|(pt, p)| (pt.x, p, pt.n)));
    seq.push((cfg.x_upper, 1.0, 0));
    Ok(seq)
}

/// ½ Σ (pᵢ − pᵢ₋₁)(xᵢ + xᵢ₋₁) over the augmented sequence.
pub fn spearman_karber_mean(points: &[PsychometricPoint], cfg: &SkConfig) -> Result<f64> {
    Ok(sk_mean_of(&sk_sequence(points, cfg)?))
}

fn sk_mean_of(seq: &[(f64, f64, u64)]) -> f64 {
    seq.windows(2)
        .map(|w| (w[1].1 - w[0].1) * (w[1].0 + w[0].0))
        .sum::<f64>()
        * 0.5
}

/// √Σ pᵢ(1 − pᵢ)/(nᵢ − 1) · (xᵢ₊₁ − xᵢ₋₁)² over interior points.
pub fn spearman_karber_se(points: &[PsychometricPoint], cfg: &SkConfig) -> Result<f64> {
    sk_se_of(&sk_sequence(points, cfg)?)
}

fn sk_se_of(seq: &[(f64, f64, u64)]) -> Result<f64> {
    let mut var = 0.0;
    for i in 1..seq.len() - 1 {
        let (_, p, n) = seq[i];
        if n < 2 {
            return Err(Error::Analysis(format!(
                "standard error needs n >= 2 at every point (x = {} has n = {n})",
                seq[i].0
            )));
        }
        let dx = seq[i + 1].0 - seq[i - 1].0;
        var += p * (1.0 - p) / (n - 1) as f64 * dx * dx;
    }
    Ok(var.sqrt())
}

pub fn spearman_karber(points: &[PsychometricPoint], cfg: &SkConfig) -> Result<SkEstimate> {
    let sequence = sk_sequence(points, cfg)?;
    Ok(SkEstimate {
        mean: sk_mean_of(&sequence),
        se: sk_se_of(&sequence).ok(),
        sequence,
    })
}

/// g(x) = 0.5 + 0.5 / (1 + exp(−s (x − t)))
pub fn logistic(x: f64, threshold: f64, slope: f64) -> f64 {
    0.5 + 0.5 / (1.0 + (-slope * (x - threshold)).exp())
}

pub const FIT_MAX_ITERATIONS: usize = 500;
pub const FIT_SLOPE_BOUND: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub threshold: f64,
    pub slope: f64,
    pub rss: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    /// Set when the slope reached its bound: the data do not pin a finite
    /// slope.
    pub boundary: Option<String>,
    pub curve: Vec<(f64, f64)>,
}

/// Least-squares logistic fit by Levenberg–Marquardt from t = median x,
/// s = 10.
pub fn fit_logistic(points: &[PsychometricPoint]) -> Result<LogisticFit> {
    let xs: BTreeSet<u64> = points.iter().map(|p| p.x.to_bits()).collect();
    if xs.len() < 3 {
        return Err(Error::Analysis(format!(
            "logistic fit needs at least 3 distinct x values, got {}",
            xs.len()
        )));
    }
    let mut sorted: Vec<f64> = points.iter().map(|p| p.x).collect();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };

    let rss_at = |t: f64, s: f64| -> f64 {
        points
            .iter()
            .map(|p| (p.g - logistic(p.x, t, s)).powi(2))
            .sum()
    };
    let (mut t, mut s) = (median, 10.0);
    let mut rss = rss_at(t, s);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < FIT_MAX_ITERATIONS {
        iterations += 1;
        // normal equations for the Jacobian of the model
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in points {
            let sig = 1.0 / (1.0 + (-s * (p.x - t)).exp());
            let d = 0.5 * sig * (1.0 - sig);
            let jt = -s * d;
            let js = (p.x - t) * d;
            let r = p.g - logistic(p.x, t, s);
            a11 += jt * jt;
            a12 += jt * js;
            a22 += js * js;
            b1 += jt * r;
            b2 += js * r;
        }
        let grad = b1.hypot(b2);
        if grad < 1e-14 {
            converged = true;
            break;
        }
        let mut stepped = false;
        while lambda < 1e16 {
            let (d11, d22) = (a11 * (1.0 + lambda), a22 * (1.0 + lambda));
            let det = d11 * d22 - a12 * a12;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let dt = (b1 * d22 - b2 * a12) / det;
            let ds = (d11 * b2 - a12 * b1) / det;
            let (nt, ns) = (t + dt, (s + ds).clamp(-FIT_SLOPE_BOUND, FIT_SLOPE_BOUND));
            let nrss = rss_at(nt, ns);
            if nrss <= rss {
                let small = dt.abs() <= 1e-12 * (1.0 + t.abs())
                    && (ns - s).abs() <= 1e-12 * (1.0 + s.abs());
                let flat = rss - nrss <= 1e-16 * (1.0 + rss);
                t = nt;
                s = ns;
                rss = nrss;
                lambda = (lambda / 10.0).max(1e-12);
                stepped = true;
                converged = small || flat || rss < 1e-30;
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            // no descent direction left at any damping
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    let residuals: Vec<f64> = points.iter().map(|p| p.g - logistic(p.x, t, s)).collect();
    let (lo, hi) = (sorted[0], sorted[m - 1]);
    let span = hi - lo;
    let boundary = if s.abs() >= FIT_SLOPE_BOUND {
        Some(format!(
            "slope reached bound {FIT_SLOPE_BOUND}; data are consistent with a step at x ≈ {t:.4}"
        ))
    } else if t < lo - span || t > hi + span {
        Some(format!(
            "threshold {t:.4} lies far outside the data range [{lo}, {hi}]; the data are flat and do not pin a finite fit"
        ))
    } else {
        None
    };
    if !converged && boundary.is_none() {
        return Err(Error::FitDiverged {
            iterations,
            rss,
            residuals,
        });
    }
    let curve = (0..=100)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / 100.0;
            (x, logistic(x, t, s))
        })
        .collect();
    Ok(LogisticFit {
        threshold: t,
        slope: s,
        rss,
        iterations,
        residuals,
        boundary,
        curve,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkVariant {
    pub config: SkConfig,
    pub mean: f64,
    pub se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclusions: Option<ExclusionReport>,
    pub hit_rates: HitRates,
    pub points: Vec<PsychometricPoint>,
    pub sk_config: SkConfig,
    pub spearman_karber: SkEstimate,
    /// Estimates under the other scale/monotonization choices, for audit.
    pub variants: Vec<SkVariant>,
    pub fit: std::result::Result<LogisticFit, String>,
}

/// Full analysis from hit rates (either computed from trials or given as a
/// summary table).
pub fn analyze(
    rates: HitRates,
    exclusions: Option<ExclusionReport>,
    cfg: &SkConfig,
) -> Result<AnalysisReport> {
    let points = prepare_points(&rates.points())?;
    let spearman_karber = spearman_karber(&points, cfg)?;
    let mut variants = Vec::new();
    for scale in [ProbabilityScale::Observed, ProbabilityScale::ChanceCorrected] {
        for monotonize in [Monotonize::None, Monotonize::Pava] {
            let c = SkConfig {
                scale,
                monotonize,
                ..*cfg
            };
            let est = self::spearman_karber(&points, &c)?;
            variants.push(SkVariant {
                config: c,
                mean: est.mean,
                se: est.se,
            });
        }
    }
    let fit = fit_logistic(&points).map_err(|e| e.to_string());
    Ok(AnalysisReport {
        exclusions,
        hit_rates: rates,
        points,
        sk_config: *cfg,
        spearman_karber,
        variants,
        fit,
    })
}

pub fn analyze_trials(participants: Vec<ParticipantRecord>, cfg: &SkConfig) -> Result<AnalysisReport> {
    let (kept, report) = exclude_invalid(participants)?;
    analyze(hit_rates(&kept)?, Some(report), cfg)
}

/// Summary table columns: emotion, hits, n, difference.
pub fn read_summary<R: Read>(reader: R) -> Result<HitRates> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("summary header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or(Error::MissingColumn { column: name.into() })
    };
    let (ce, ch, cn, cd) = (col("emotion")?, col("hits")?, col("n")?, col("difference")?);
    let mut rows = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Input(format!("summary line {line}: {e}")))?;
        let get = |c: usize| row.get(c).unwrap_or("").trim();
        let bad = |what: &str| Error::Input(format!("summary line {line}: bad {what}"));
        let emotion: EmotionLabel = get(ce).parse().map_err(|_| bad("emotion"))?;
        let hits: u64 = get(ch).parse().map_err(|_| bad("hits"))?;
        let n: u64 = get(cn).parse().map_err(|_| bad("n"))?;
        let difference: f64 = get(cd).parse().map_err(|_| bad("difference"))?;
        if n == 0 || hits > n {
            return Err(bad("hits/n"));
        }
        rows.push(EmotionHits {
            emotion,
            hits,
            responses: n,
            rate: hits as f64 / n as f64,
            difference,
        });
    }
    if rows.is_empty() {
        return Err(Error::Analysis("summary table has no rows".into()));
    }
    Ok(totals(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, g: f64, n: u64) -> PsychometricPoint {
        PsychometricPoint { x, g, n }
    }

    #[test]
    fn transform_examples() {
        assert_eq!(transform_probability(0.5), 0.0);
        assert_eq!(transform_probability(1.0), 1.0);
        assert!((transform_probability(0.86) - 0.72).abs() < 1e-12);
        assert_eq!(transform_probability(0.3), 0.0);
    }

    #[test]
    fn symmetric_step() {
        let cfg = SkConfig {
            x_lower: 0.4,
            x_upper: 0.6,
            ..SkConfig::default()
        };
        assert!((spearman_karber_mean(&[], &cfg).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn three_point_by_hand() {
        // augmented: (0,0) (0.2,0.6) (0.5,0.7) (0.8,0.9) (1,1)
        // ½[0.6·0.2 + 0.1·0.7 + 0.2·1.3 + 0.1·1.8] = ½[0.12+0.07+0.26+0.18] = 0.315
        let pts = [pt(0.2, 0.6, 10), pt(0.5, 0.7, 10), pt(0.8, 0.9, 10)];
        let mu = spearman_karber_mean(&pts, &SkConfig::default()).unwrap();
        assert!((mu - 0.315).abs() < 1e-15);
    }

    #[test]
    fn two_point_se_by_hand() {
        // interior: (0.3, 0.8, n 5), (0.6, 0.5, n 11); neighbors 0 and 1
        // 0.8·0.2/4·0.6² + 0.5·0.5/10·0.7² = 0.0144 + 0.01225 = 0.02665
        let pts = [pt(0.3, 0.8, 5), pt(0.6, 0.5, 11)];
        let se = spearman_karber_se(&pts, &SkConfig::default()).unwrap();
        assert!((se - 0.02665f64.sqrt()).abs() < 1e-15);
        let zero = [pt(0.3, 1.0, 5), pt(0.6, 0.0, 5)];
        assert_eq!(spearman_karber_se(&zero, &SkConfig::default()).unwrap(), 0.0);
        assert!(spearman_karber_se(&[pt(0.3, 0.5, 1)], &SkConfig::default()).is_err());
    }

    #[test]
    fn unsorted_or_out_of_range_rejected() {
        let cfg = SkConfig::default();
        assert!(spearman_karber_mean(&[pt(0.5, 0.6, 3), pt(0.2, 0.7, 3)], &cfg).is_err());
        assert!(spearman_karber_mean(&[pt(0.2, 0.6, 3), pt(0.2, 0.7, 3)], &cfg).is_err());
        assert!(spearman_karber_mean(&[pt(1.2, 0.6, 3)], &cfg).is_err());
        assert!(spearman_karber_mean(&[pt(0.2, 1.6, 3)], &cfg).is_err());
    }

    #[test]
    fn merge_duplicates() {
        let got = prepare_points(&[pt(0.4, 1.0, 1), pt(0.1, 0.5, 2), pt(0.4, 0.5, 3)]).unwrap();
        assert_eq!(got, vec![pt(0.1, 0.5, 2), pt(0.4, 0.625, 4)]);
    }

    #[test]
    fn pava_examples() {
        assert_eq!(pava(&[1.0, 3.0, 2.0], &[1.0, 1.0, 1.0]), vec![1.0, 2.5, 2.5]);
        assert_eq!(pava(&[3.0, 1.0], &[1.0, 3.0]), vec![1.5, 1.5]);
        assert_eq!(pava(&[0.1, 0.2], &[1.0, 1.0]), vec![0.1, 0.2]);
        assert_eq!(pava(&[3.0, 2.0, 1.0], &[1.0, 1.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn logistic_recovery() {
        let (t, s) = (0.3, 14.0);
        let pts: Vec<_> = (0..12)
            .map(|i| {
                let x = i as f64 / 11.0;
                pt(x, logistic(x, t, s), 50)
            })
            .collect();
        let fit = fit_logistic(&pts).unwrap();
        assert!((fit.threshold - t).abs() < 1e-3, "{fit:?}");
        assert!((fit.slope - s).abs() < 1e-3, "{fit:?}");
        assert!(fit.boundary.is_none());
    }

    #[test]
    fn logistic_symmetric() {
        let pts = [pt(0.3, 0.6, 9), pt(0.4, 0.7, 9), pt(0.6, 0.8, 9), pt(0.7, 0.9, 9)];
        let fit = fit_logistic(&pts).unwrap();
        assert!((fit.threshold - 0.5).abs() < 1e-6, "{fit:?}");
    }

    #[test]
    fn logistic_constant_is_boundary() {
        let pts = [pt(0.1, 1.0, 9), pt(0.4, 1.0, 9), pt(0.7, 1.0, 9)];
        let fit = fit_logistic(&pts).unwrap();
        assert!(fit.boundary.is_some(), "{fit:?}");
        assert!(fit.rss < 1e-6);
    }

    #[test]
    fn logistic_needs_three_x() {
        assert!(fit_logistic(&[pt(0.1, 0.6, 9), pt(0.1, 0.7, 9), pt(0.5, 0.9, 9)]).is_err());
    }

    fn trial(id: &str, e: EmotionLabel, a: f64, b: f64, c: Choice) -> TrialRecord {
        TrialRecord {
            trial: id.into(),
            emotion: e,
            intensities: (a, b),
            choice: c,
        }
    }

    fn person(id: &str, pass: bool, choices: &[Choice]) -> ParticipantRecord {
        ParticipantRecord {
            id: id.into(),
            color_test_passed: pass,
            trials: choices
                .iter()
                .enumerate()
                .map(|(i, &c)| trial(&format!("t{i}"), EmotionLabel::ALL[i % 10], 0.6, 0.2, c))
                .collect(),
        }
    }

    #[test]
    fn exclusion_rules() {
        use Choice::{First as F, Second as S};
        let ten_f = [F; 10];
        let dissent = [F, F, F, F, S, S, S, S, S, S];
        let people = vec![
            person("a", true, &ten_f),
            person("b", true, &ten_f),
            person("c", true, &ten_f),
            person("d", true, &dissent),
            person("e", false, &ten_f),
        ];
        let (kept, rep) = exclude_invalid(people).unwrap();
        assert_eq!(kept.len(), 3);
        assert_eq!(rep.participants_in, 5);
        assert_eq!(rep.analyzed, 3);
        assert_eq!(rep.excluded[0].reason, ExclusionReason::ColorTest);
        assert_eq!(rep.excluded[1].participant, "d");
        assert_eq!(rep.excluded[1].agreement, Some(0.4));

        let unanimous = vec![person("a", true, &ten_f), person("b", true, &ten_f)];
        assert_eq!(exclude_invalid(unanimous).unwrap().1.excluded.len(), 0);

        assert!(exclude_invalid(vec![person("a", true, &ten_f)]).is_err());
        assert!(matches!(
            exclude_invalid(vec![person("a", false, &ten_f), person("b", false, &ten_f)]),
            Err(Error::Analysis(_))
        ));
    }

    #[test]
    fn hits_from_trials() {
        use Choice::{First as F, Second as S};
        let e = EmotionLabel::Anger;
        let p = |id: &str, c| ParticipantRecord {
            id: id.into(),
            color_test_passed: true,
            trials: vec![trial("t", e, 0.3, 0.1, c), trial("u", EmotionLabel::Fear, 0.2, 0.2, F)],
        };
        let r = hit_rates(&[p("a", F), p("b", F), p("c", S)]).unwrap();
        assert_eq!(r.rows[0].emotion, EmotionLabel::Anger);
        assert_eq!((r.rows[0].hits, r.rows[0].responses), (2, 3));
        assert!((r.rows[0].difference - 0.2).abs() < 1e-15);
        // equal intensities are never hits
        assert_eq!(r.rows[1].hits, 0);
        assert_eq!((r.total_hits, r.total_responses), (2, 6));
    }

    #[test]
    fn trial_file_roundtrip() {
        let text = "participant\ttrial\temotion\tintensity1\tintensity2\tchoice\tcolor_test\n\
                    p1\tt1\tanger\t0.5\t0.1\t1\tpass\n\
                    p1\tt2\ttrust\t0.2\t0.4\tsecond\tpass\n\
                    p2\tt1\tanger\t0.5\t0.1\t2\tfail\n";
        let ps = read_trials(text.as_bytes()).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps[0].trials.len(), 2);
        assert!(ps[0].trials.iter().all(TrialRecord::is_hit));
        assert!(!ps[1].color_test_passed);

        let bad = text.replace("0.5\t0.1\t1", "1.5\t0.1\t1");
        assert!(matches!(read_trials(bad.as_bytes()), Err(Error::Input(_))));
        let missing = text.replace("color_test", "ishihara");
        assert!(matches!(
            read_trials(missing.as_bytes()),
            Err(Error::MissingColumn { column }) if column == "color_test"
        ));
    }
}
