//! Fuzzy-set primitives: piecewise-linear membership functions, linguistic
//! variables, hedges and α-cuts.
//!
//! Everything here is immutable once constructed and safe to share across
//! threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values this close to a domain bound are clamped onto it instead of rejected.
pub const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Triangular { a: f64, b: f64, c: f64 },
    Trapezoidal { a: f64, b: f64, c: f64, d: f64 },
}

impl Shape {
    /// Breakpoints as a trapezoid; a triangle is a trapezoid with `b == c`.
    fn corners(&self) -> [f64; 4] {
        match *self {
            Shape::Triangular { a, b, c } => [a, b, b, c],
            Shape::Trapezoidal { a, b, c, d } => [a, b, c, d],
        }
    }
}

/// Triangular or trapezoidal membership function, optionally wrapping with a
/// fixed period (hue).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MembershipFunction {
    shape: Shape,
    corners: [f64; 4],
    period: Option<f64>,
}

impl MembershipFunction {
    pub fn new(shape: Shape, period: Option<f64>) -> Result<Self> {
        let corners = shape.corners();
        if corners.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "membership breakpoints must be finite: {corners:?}"
            )));
        }
        if corners.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config(format!(
                "membership breakpoints out of order: {corners:?}"
            )));
        }
        if let Some(p) = period {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::Config(format!("invalid period {p}")));
            }
            if corners[3] - corners[0] > p {
                return Err(Error::Config(format!(
                    "cyclic membership support {corners:?} is wider than the period {p}"
                )));
            }
        }
        Ok(Self {
            shape,
            corners,
            period,
        })
    }

    pub fn triangular(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(Shape::Triangular { a, b, c }, None)
    }

    pub fn trapezoidal(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::new(Shape::Trapezoidal { a, b, c, d }, None)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    /// Midpoint of the kernel (the region where membership is 1), reduced
    /// into `[0, period)` for cyclic functions.
    pub fn kernel_center(&self) -> f64 {
        let mid = 0.5 * (self.corners[1] + self.corners[2]);
        match self.period {
            Some(p) => mid.rem_euclid(p),
            None => mid,
        }
    }

    /// Membership degree of `x`, always in `[0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        match self.period {
            None => linear_piece(&self.corners, x),
            Some(p) => {
                let x = x.rem_euclid(p);
                // breakpoints may extend one period either side of [0, p)
                linear_piece(&self.corners, x - p)
                    .max(linear_piece(&self.corners, x))
                    .max(linear_piece(&self.corners, x + p))
            }
        }
    }
}

fn linear_piece(&[a, b, c, d]: &[f64; 4], x: f64) -> f64 {
    if x < a || x > d {
        0.0
    } else if x >= b && x <= c {
        1.0
    } else if x < b {
        (x - a) / (b - a)
    } else {
        (d - x) / (d - c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub name: String,
    pub mf: MembershipFunction,
}

/// A variable whose values are words, each backed by a membership function
/// over a closed numeric domain. Term order is significant: it is the
/// tie-break order for [`LinguisticVariable::classify`].
#[derive(Clone, Debug, PartialEq)]
pub struct LinguisticVariable {
    name: String,
    domain: (f64, f64),
    terms: Vec<Term>,
}

impl LinguisticVariable {
    pub fn new(name: impl Into<String>, domain: (f64, f64), terms: Vec<Term>) -> Result<Self> {
        let name = name.into();
        let (lo, hi) = domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "variable {name}: invalid domain [{lo}, {hi}]"
            )));
        }
        if terms.is_empty() {
            return Err(Error::Config(format!("variable {name}: no terms")));
        }
        let mut seen = BTreeSet::new();
        for t in &terms {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::Config(format!(
                    "variable {name}: duplicate term `{}`",
                    t.name
                )));
            }
        }
        Ok(Self {
            name,
            domain,
            terms,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn term_index(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.name == name)
    }

    /// Membership of `x` in every term, in declaration order. No domain check.
    pub fn memberships(&self, x: f64) -> impl Iterator<Item = f64> + '_ {
        self.terms.iter().map(move |t| t.mf.eval(x))
    }

    /// Clamp values within [`DOMAIN_SLACK`] of a bound; reject anything else
    /// outside the domain.
    pub fn check_domain(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain;
        if !x.is_finite() {
            return Err(Error::Domain(format!("{}: non-finite input", self.name)));
        }
        if x < lo - DOMAIN_SLACK || x > hi + DOMAIN_SLACK {
            return Err(Error::Domain(format!(
                "{}: {x} outside [{lo}, {hi}]",
                self.name
            )));
        }
        Ok(x.clamp(lo, hi))
    }

    /// Index and degree of the term with maximal membership; the earliest
    /// declared term wins ties.
    pub fn classify_index(&self, x: f64) -> Result<(usize, f64)> {
        let x = self.check_domain(x)?;
        Ok(self.argmax(x))
    }

    pub(crate) fn argmax(&self, x: f64) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, mu) in self.memberships(x).enumerate() {
            if mu > best.1 {
                best = (i, mu);
            }
        }
        best
    }

    pub fn classify(&self, x: f64) -> Result<(&str, f64)> {
        let (i, mu) = self.classify_index(x)?;
        Ok((self.terms[i].name.as_str(), mu))
    }

    /// Largest deviation of `Σ μ(x)` from 1 over `samples` evenly spaced
    /// points (endpoints included).
    pub fn ruspini_deviation(&self, samples: usize) -> f64 {
        self.sample_points(samples)
            .map(|x| (self.memberships(x).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Smallest `max μ(x)` over the sampled points; positive means covered.
    pub fn min_coverage(&self, samples: usize) -> f64 {
        self.sample_points(samples)
            .map(|x| self.memberships(x).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min)
    }

    fn sample_points(&self, samples: usize) -> impl Iterator<Item = f64> {
        let (lo, hi) = self.domain;
        let n = samples.max(2);
        (0..n).map(move |k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hedge {
    Very,
    MoreOrLess,
    Not,
}

impl Hedge {
    pub fn apply(self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("membership degree {u} outside [0, 1]")));
        }
        Ok(match self {
            Hedge::Very => u * u,
            Hedge::MoreOrLess => u.sqrt(),
            Hedge::Not => 1.0 - u,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Hedge::Very => "very",
            Hedge::MoreOrLess => "more-or-less",
            Hedge::Not => "not",
        }
    }
}

impl fmt::Display for Hedge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Hedge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "very" => Ok(Hedge::Very),
            "more-or-less" | "more_or_less" | "moreorless" => Ok(Hedge::MoreOrLess),
            "not" => Ok(Hedge::Not),
            _ => Err(Error::query(s, "unknown hedge (expected very, more-or-less or not)")),
        }
    }
}

/// Apply hedges given in written order ("not very" is `[Not, Very]`): the
/// rightmost hedge is applied first.
pub fn apply_hedges(hedges: &[Hedge], u: f64) -> Result<f64> {
    hedges.iter().rev().try_fold(u, |acc, h| h.apply(acc))
}

/// Crisp set of elements whose membership is at least `alpha`.
pub fn alpha_cut<K, I>(memberships: I, alpha: f64) -> Result<BTreeSet<K>>
where
    K: Ord,
    I: IntoIterator<Item = (K, f64)>,
{
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("alpha must be in (0, 1], got {alpha}")));
    }
    Ok(memberships
        .into_iter()
        .filter(|(_, mu)| *mu >= alpha)
        .map(|(k, _)| k)
        .collect())
}

/// Standard (max) union of two discrete fuzzy sets.
pub fn fuzzy_union<K: Ord + Clone>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> BTreeMap<K, f64> {
    let mut out = a.clone();
    for (k, v) in b {
        let e = out.entry(k.clone()).or_insert(0.0);
        *e = e.max(*v);
    }
    out
}

/// Standard (min) intersection of two discrete fuzzy sets.
pub fn fuzzy_intersection<K: Ord + Clone>(
    a: &BTreeMap<K, f64>,
    b: &BTreeMap<K, f64>,
) -> BTreeMap<K, f64> {
    a.iter()
        .filter_map(|(k, v)| b.get(k).map(|w| (k.clone(), v.min(*w))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(a: f64, b: f64, c: f64) -> MembershipFunction {
        MembershipFunction::triangular(a, b, c).unwrap()
    }

    fn trap(a: f64, b: f64, c: f64, d: f64) -> MembershipFunction {
        MembershipFunction::trapezoidal(a, b, c, d).unwrap()
    }

    #[test]
    fn triangular_points() {
        let mf = tri(0.0, 5.0, 10.0);
        assert_eq!(mf.eval(5.0), 1.0);
        assert_eq!(mf.eval(2.5), 0.5);
        assert_eq!(mf.eval(7.5), 0.5);
        assert_eq!(mf.eval(-1.0), 0.0);
        assert_eq!(mf.eval(10.0), 0.0);
    }

    #[test]
    fn trapezoidal_points() {
        let mf = trap(0.0, 2.0, 4.0, 6.0);
        assert_eq!(mf.eval(3.0), 1.0);
        assert_eq!(mf.eval(5.0), 0.5);
        assert_eq!(mf.eval(7.0), 0.0);
    }

    #[test]
    fn shoulders() {
        let low = trap(0.0, 0.0, 10.0, 30.0);
        assert_eq!(low.eval(0.0), 1.0);
        let high = trap(55.0, 75.0, 100.0, 100.0);
        assert_eq!(high.eval(100.0), 1.0);
    }

    #[test]
    fn malformed_breakpoints() {
        assert!(matches!(
            MembershipFunction::triangular(5.0, 1.0, 10.0),
            Err(Error::Config(_))
        ));
        assert!(MembershipFunction::trapezoidal(0.0, 2.0, 1.0, 3.0).is_err());
        assert!(MembershipFunction::triangular(0.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn cyclic_wraps() {
        let red = MembershipFunction::new(
            Shape::Trapezoidal {
                a: 310.0,
                b: 350.0,
                c: 370.0,
                d: 385.0,
            },
            Some(360.0),
        )
        .unwrap();
        assert_eq!(red.eval(0.0), 1.0);
        assert_eq!(red.eval(360.0), 1.0);
        assert_eq!(red.eval(5.0), 1.0);
        assert!((red.eval(17.5) - 0.5).abs() < 1e-12);
        assert!((red.eval(330.0) - 0.5).abs() < 1e-12);
        assert_eq!(red.eval(200.0), 0.0);
        assert_eq!(red.kernel_center(), 0.0);
    }

    #[test]
    fn cyclic_support_wider_than_period() {
        let r = MembershipFunction::new(
            Shape::Triangular {
                a: 0.0,
                b: 200.0,
                c: 400.0,
            },
            Some(360.0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn hedges() {
        assert_eq!(Hedge::Very.apply(0.5).unwrap(), 0.25);
        assert_eq!(Hedge::MoreOrLess.apply(0.25).unwrap(), 0.5);
        assert!((Hedge::Not.apply(0.3).unwrap() - 0.7).abs() < 1e-15);
        let v = apply_hedges(&[Hedge::Not, Hedge::Very], 0.6).unwrap();
        assert!((v - 0.64).abs() < 1e-15);
        assert!(Hedge::Very.apply(1.5).is_err());
        assert!(apply_hedges(&[], -0.1).is_ok(), "empty sequence is the identity");
    }

    #[test]
    fn hedge_parsing() {
        assert_eq!("more-or-less".parse::<Hedge>().unwrap(), Hedge::MoreOrLess);
        assert_eq!("VERY".parse::<Hedge>().unwrap(), Hedge::Very);
        let err = "extremely".parse::<Hedge>().unwrap_err();
        assert!(err.to_string().contains("extremely"));
    }

    #[test]
    fn alpha_cut_threshold() {
        let m = [("a", 0.9), ("b", 0.5), ("c", 0.1)];
        let cut = alpha_cut(m, 0.5).unwrap();
        assert_eq!(cut.into_iter().collect::<Vec<_>>(), vec!["a", "b"]);
        let kernel = alpha_cut([("a", 1.0), ("b", 0.999)], 1.0).unwrap();
        assert_eq!(kernel.len(), 1);
        assert!(alpha_cut(m, 0.0).is_err());
        assert!(alpha_cut(m, 1.5).is_err());
    }

    fn two_terms() -> LinguisticVariable {
        LinguisticVariable::new(
            "x",
            (0.0, 10.0),
            vec![
                Term {
                    name: "left".into(),
                    mf: trap(0.0, 0.0, 4.0, 6.0),
                },
                Term {
                    name: "right".into(),
                    mf: trap(4.0, 6.0, 10.0, 10.0),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn classify_tie_goes_to_first_declared() {
        let v = two_terms();
        assert_eq!(v.classify(5.0).unwrap(), ("left", 0.5));
        assert_eq!(v.classify(5.5).unwrap().0, "right");
    }

    #[test]
    fn classify_domain() {
        let v = two_terms();
        assert_eq!(v.classify(10.0 + 1e-10).unwrap().0, "right");
        assert_eq!(v.classify(-1e-10).unwrap().0, "left");
        assert!(matches!(v.classify(10.1), Err(Error::Domain(_))));
        assert!(v.classify(f64::NAN).is_err());
    }

    #[test]
    fn duplicate_terms_rejected() {
        let mf = trap(0.0, 0.0, 10.0, 10.0);
        let r = LinguisticVariable::new(
            "x",
            (0.0, 10.0),
            vec![
                Term {
                    name: "a".into(),
                    mf,
                },
                Term {
                    name: "a".into(),
                    mf,
                },
            ],
        );
        assert!(r.is_err());
    }

    #[test]
    fn union_intersection() {
        let a: BTreeMap<_, _> = [(1, 0.2), (2, 0.8)].into();
        let b: BTreeMap<_, _> = [(2, 0.5), (3, 0.4)].into();
        assert_eq!(fuzzy_union(&a, &b), [(1, 0.2), (2, 0.8), (3, 0.4)].into());
        assert_eq!(fuzzy_intersection(&a, &b), [(2, 0.5)].into());
    }
}
