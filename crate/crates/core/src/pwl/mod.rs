//! Piecewise-linear approximation of univariate functions within an absolute
//! error corridor.
//!
//! A [`UnivariateSpec`] describes a function on a closed interval together with
//! the points where its curvature flips. [`fit_pwl`] builds a [`PwlFunction`]
//! whose every point lies inside `[f - δ, f + δ]` using as few pieces as the
//! corridor allows; [`min_pieces_oracle`] computes the same count on a grid by
//! a different route and is used to check minimality.

mod fit;
mod oracle;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fit::fit_pwl;
pub use oracle::min_pieces_oracle;

/// Shared, thread-safe real function.
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Number of sample points used to check curvature on each segment.
const CURVATURE_SAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Curvature {
    Convex,
    Concave,
}

/// A maximal sub-interval on which the function keeps one curvature sign.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub curvature: Curvature,
}

/// A univariate function to approximate, with its derivative, domain,
/// curvature breaks and absolute tolerance.
#[derive(Clone)]
pub struct UnivariateSpec {
    value: RealFn,
    derivative: RealFn,
    lo: f64,
    hi: f64,
    breaks: Vec<f64>,
    tolerance: f64,
    segments: Vec<Segment>,
}

impl fmt::Debug for UnivariateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UnivariateSpec")
            .field("domain", &(self.lo, self.hi))
            .field("breaks", &self.breaks)
            .field("tolerance", &self.tolerance)
            .field("segments", &self.segments)
            .finish()
    }
}

impl UnivariateSpec {
    /// Builds a spec and classifies the curvature of every segment between
    /// consecutive breaks from sampled second differences.
    pub fn new<F, D>(
        value: F,
        derivative: D,
        domain: (f64, f64),
        curvature_breaks: Vec<f64>,
        tolerance: f64,
    ) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::from_shared(Arc::new(value), Arc::new(derivative), domain, curvature_breaks, tolerance)
    }

    pub fn from_shared(
        value: RealFn,
        derivative: RealFn,
        (lo, hi): (f64, f64),
        curvature_breaks: Vec<f64>,
        tolerance: f64,
    ) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Parameter(format!("empty or non-finite domain [{lo}, {hi}]")));
        }
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(Error::Parameter(format!("tolerance must be positive, got {tolerance}")));
        }
        let mut prev = lo;
        for &b in &curvature_breaks {
            if !(b > prev && b < hi) {
                return Err(Error::Parameter(format!(
                    "curvature breaks must be ascending and strictly inside ({lo}, {hi}), got {b}"
                )));
            }
            prev = b;
        }

        let mut bounds = Vec::with_capacity(curvature_breaks.len() + 2);
        bounds.push(lo);
        bounds.extend_from_slice(&curvature_breaks);
        bounds.push(hi);
        let segments = bounds
            .windows(2)
            .map(|w| {
                classify_curvature(value.as_ref(), w[0], w[1]).map(|curvature| Segment {
                    lo: w[0],
                    hi: w[1],
                    curvature,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self { value, derivative, lo, hi, breaks: curvature_breaks, tolerance, segments })
    }

    /// Same function and domain, different tolerance.
    pub fn with_tolerance(&self, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(Error::Parameter(format!("tolerance must be positive, got {tolerance}")));
        }
        Ok(Self { tolerance, ..self.clone() })
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn curvature_breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub(crate) fn checked_value(&self, x: f64) -> Result<f64> {
        let y = self.value(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::FitFailure { x })
        }
    }
}

fn classify_curvature(f: &(dyn Fn(f64) -> f64 + Send + Sync), a: f64, b: f64) -> Result<Curvature> {
    let step = (b - a) / (CURVATURE_SAMPLES - 1) as f64;
    let ys: Vec<f64> = (0..CURVATURE_SAMPLES)
        .map(|i| if i + 1 == CURVATURE_SAMPLES { f(b) } else { f(a + step * i as f64) })
        .collect();
    let scale = ys.iter().filter(|y| y.is_finite()).fold(1.0f64, |m, y| m.max(y.abs()));
    let tol = 1e-10 * scale;
    let (mut convex, mut concave) = (true, true);
    for w in ys.windows(3) {
        if !(w[0].is_finite() && w[1].is_finite() && w[2].is_finite()) {
            // Reported by the fit with the offending abscissa.
            continue;
        }
        let d2 = w[0] - 2.0 * w[1] + w[2];
        convex &= d2 >= -tol;
        concave &= d2 <= tol;
    }
    match (convex, concave) {
        (true, _) => Ok(Curvature::Convex),
        (false, true) => Ok(Curvature::Concave),
        (false, false) => Err(Error::Validation(format!(
            "function changes curvature inside [{a}, {b}]; add a curvature break"
        ))),
    }
}

/// One affine piece `slope * x + intercept` on `[lo, hi)`; the last piece of a
/// [`PwlFunction`] also owns its right endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub slope: f64,
    pub intercept: f64,
    pub lo: f64,
    pub hi: f64,
}

impl AffinePiece {
    pub fn at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordered affine pieces tiling a closed interval. Discontinuities between
/// pieces are allowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwlFunction {
    tolerance: f64,
    pieces: Vec<AffinePiece>,
}

impl PwlFunction {
    /// Checks that the pieces tile a closed interval without gaps or overlaps.
    pub fn new(pieces: Vec<AffinePiece>, tolerance: f64) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Validation("a PWL function needs at least one piece".into()));
        }
        for (k, p) in pieces.iter().enumerate() {
            if !(p.lo < p.hi) || !p.slope.is_finite() || !p.intercept.is_finite() {
                return Err(Error::Validation(format!("piece {k} is degenerate: {p:?}")));
            }
            if k > 0 && pieces[k - 1].hi != p.lo {
                return Err(Error::Validation(format!(
                    "pieces {} and {k} do not meet: {} vs {}",
                    k - 1,
                    pieces[k - 1].hi,
                    p.lo
                )));
            }
        }
        Ok(Self { tolerance, pieces })
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// The tolerance the function was fitted with.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.pieces[0].lo, self.pieces[self.pieces.len() - 1].hi)
    }

    pub fn max_abs_slope(&self) -> f64 {
        self.pieces.iter().fold(0.0, |m, p| m.max(p.slope.abs()))
    }

    /// Index of the piece owning `x`.
    pub fn piece_index(&self, x: f64) -> Result<usize> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain { x, lo, hi });
        }
        let k = self.pieces.partition_point(|p| p.hi <= x);
        Ok(k.min(self.pieces.len() - 1))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.pieces[self.piece_index(x)?].at(x))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: PwlFunction = serde_json::from_str(s)?;
        Self::new(raw.pieces, raw.tolerance)
    }
}

/// Evaluates `pwl` at `x` using the left-closed ownership convention.
pub fn eval_pwl(pwl: &PwlFunction, x: f64) -> Result<f64> {
    pwl.eval(x)
}

/// Largest `|f(x) - f̂(x)|` over `samples` equispaced points plus every piece
/// boundary.
pub fn verify_corridor(pwl: &PwlFunction, spec: &UnivariateSpec, samples: usize) -> Result<f64> {
    if samples < 2 {
        return Err(Error::Parameter(format!("need at least 2 samples, got {samples}")));
    }
    let (lo, hi) = spec.domain();
    let step = (hi - lo) / (samples - 1) as f64;
    let grid = (0..samples).map(|i| if i + 1 == samples { hi } else { lo + step * i as f64 });
    let boundaries = pwl.pieces().iter().map(|p| p.lo).chain(std::iter::once(pwl.domain().1));
    let mut worst = 0.0f64;
    for x in grid.chain(boundaries) {
        let err = (spec.checked_value(x)? - pwl.eval(x)?).abs();
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_piece_jump() -> PwlFunction {
        PwlFunction::new(
            vec![
                AffinePiece { slope: 1.0, intercept: 0.0, lo: 0.0, hi: 1.0 },
                AffinePiece { slope: 0.0, intercept: 5.0, lo: 1.0, hi: 2.0 },
            ],
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn eval_single_piece() {
        let pwl = PwlFunction::new(vec![AffinePiece { slope: 2.0, intercept: 0.0, lo: 0.0, hi: 1.0 }], 0.1)
            .unwrap();
        assert_eq!(eval_pwl(&pwl, 0.5).unwrap(), 1.0);
        assert_eq!(eval_pwl(&pwl, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn breakpoint_belongs_to_right_piece() {
        let pwl = two_piece_jump();
        assert_eq!(pwl.eval(1.0).unwrap(), 5.0);
        assert_eq!(pwl.eval(2.0).unwrap(), 5.0);
        assert_eq!(pwl.eval(0.999).unwrap(), 0.999);
    }

    #[test]
    fn eval_outside_domain_fails() {
        let pwl = two_piece_jump();
        assert!(matches!(pwl.eval(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(pwl.eval(2.0 + 1e-12), Err(Error::Domain { .. })));
        assert!(pwl.eval(f64::NAN).is_err());
    }

    #[test]
    fn rejects_gaps_and_overlaps() {
        let gap = vec![
            AffinePiece { slope: 1.0, intercept: 0.0, lo: 0.0, hi: 1.0 },
            AffinePiece { slope: 1.0, intercept: 0.0, lo: 1.1, hi: 2.0 },
        ];
        assert!(PwlFunction::new(gap, 0.1).is_err());
        assert!(PwlFunction::new(vec![], 0.1).is_err());
    }

    #[test]
    fn spec_rejects_bad_inputs() {
        assert!(UnivariateSpec::new(|x| x, |_| 1.0, (1.0, 0.0), vec![], 0.1).is_err());
        assert!(UnivariateSpec::new(|x| x, |_| 1.0, (0.0, 1.0), vec![], 0.0).is_err());
        assert!(UnivariateSpec::new(|x| x, |_| 1.0, (0.0, 1.0), vec![1.0], 0.1).is_err());
        // x^3 is not curvature-monotone on [-1, 1] without a break at 0.
        let err = UnivariateSpec::new(|x: f64| x.powi(3), |x| 3.0 * x * x, (-1.0, 1.0), vec![], 0.1);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn spec_classifies_segments() {
        let spec = UnivariateSpec::new(|x: f64| x.powi(3), |x| 3.0 * x * x, (-1.0, 1.0), vec![0.0], 0.1)
            .unwrap();
        let kinds: Vec<_> = spec.segments().iter().map(|s| s.curvature).collect();
        assert_eq!(kinds, vec![Curvature::Concave, Curvature::Convex]);
    }

    #[test]
    fn corridor_of_exact_affine_is_zero() {
        let spec = UnivariateSpec::new(|x| 2.0 * x + 1.0, |_| 2.0, (0.0, 5.0), vec![], 0.1).unwrap();
        let pwl =
            PwlFunction::new(vec![AffinePiece { slope: 2.0, intercept: 1.0, lo: 0.0, hi: 5.0 }], 0.1).unwrap();
        assert_eq!(verify_corridor(&pwl, &spec, 101).unwrap(), 0.0);
        assert!(verify_corridor(&pwl, &spec, 1).is_err());
    }

    #[test]
    fn corridor_detects_perturbed_piece() {
        let delta = 0.1;
        let spec = UnivariateSpec::new(|x: f64| x.powi(3), |x| 3.0 * x * x, (-1.0, 1.0), vec![0.0], delta)
            .unwrap();
        let pwl = fit_pwl(&spec).unwrap();
        let mut pieces = pwl.pieces().to_vec();
        pieces[1].intercept += 2.0 * delta;
        let broken = PwlFunction::new(pieces, delta).unwrap();
        assert!(verify_corridor(&broken, &spec, 2001).unwrap() > delta);
    }

    #[test]
    fn json_schema_fields() {
        let pwl = two_piece_jump();
        let v: serde_json::Value = serde_json::from_str(&pwl.to_json().unwrap()).unwrap();
        assert_eq!(v["tolerance"], 0.1);
        assert_eq!(v["pieces"][1]["intercept"], 5.0);
        for key in ["slope", "intercept", "lo", "hi"] {
            assert!(v["pieces"][0].get(key).is_some(), "missing {key}");
        }
        assert_eq!(PwlFunction::from_json(&pwl.to_json().unwrap()).unwrap(), pwl);
    }
}
