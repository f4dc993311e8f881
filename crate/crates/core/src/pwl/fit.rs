//! Greedy corridor fit.
//!
//! Each piece starts where the previous one ended and is stretched as far
//! right as a single line can stay inside the corridor. Feasibility of a line
//! on `[l, u]` is decided exactly from the curvature structure:
//!
//! * inside one convex (concave) segment a line fits iff the chord of `f`
//!   deviates from `f` by at most `2δ`, and the chord shifted by `δ` towards
//!   the inside of the corridor is then a valid piece;
//! * across curvature breaks the best line is found by minimising the
//!   vertical width of `{(x, f(x))}` over the slope, a convex function of the
//!   slope whose value is available in closed form per segment.
//!
//! Because feasibility is inherited by sub-intervals, farthest-reach greedy
//! uses the minimum number of pieces.

use super::{AffinePiece, Curvature, PwlFunction, Segment, UnivariateSpec};
use crate::error::{Error, Result};

const ROOT_ITERATIONS: usize = 200;
const GOLDEN_ITERATIONS: usize = 120;

/// Fits a PWL δ-absolute approximation of `spec` on its whole domain.
pub fn fit_pwl(spec: &UnivariateSpec) -> Result<PwlFunction> {
    let (lo, hi) = spec.domain();
    let x_tol = 1e-9 * (hi - lo).max(1.0);
    let fitter = Fitter { spec, delta: spec.tolerance() };

    let mut pieces = Vec::new();
    let mut left = lo;
    let mut chained = false;
    while left < hi {
        let right = if fitter.feasible(left, hi)? {
            hi
        } else {
            let (mut ok, mut bad) = (left, hi);
            while bad - ok > x_tol {
                let mid = 0.5 * (ok + bad);
                if mid <= ok || mid >= bad {
                    break;
                }
                if fitter.feasible(left, mid)? {
                    ok = mid;
                } else {
                    bad = mid;
                }
            }
            if ok <= left {
                return Err(Error::Internal(format!("corridor admits no piece starting at {left}")));
            }
            ok
        };
        let (piece, on_boundary) = fitter.piece(left, right, right == hi, chained)?;
        pieces.push(piece);
        chained = on_boundary;
        left = right;
    }
    PwlFunction::new(pieces, spec.tolerance())
}

struct Fitter<'a> {
    spec: &'a UnivariateSpec,
    delta: f64,
}

impl Fitter<'_> {
    fn segments_in(&self, l: f64, u: f64) -> impl Iterator<Item = &Segment> + '_ {
        self.spec.segments().iter().filter(move |s| s.lo < u && s.hi > l)
    }

    fn single_segment(&self, l: f64, u: f64) -> Option<Segment> {
        let mut it = self.segments_in(l, u);
        match (it.next(), it.next()) {
            (Some(s), None) => Some(*s),
            _ => None,
        }
    }

    fn feasible(&self, l: f64, u: f64) -> Result<bool> {
        let width = match self.single_segment(l, u) {
            Some(seg) => self.chord_excess(l, u, seg.curvature)?,
            None => self.chebyshev(l, u)?.1,
        };
        Ok(width <= 2.0 * self.delta)
    }

    /// Largest gap between `f` and its chord over `[l, u]` on a single segment.
    fn chord_excess(&self, l: f64, u: f64, curvature: Curvature) -> Result<f64> {
        let fl = self.spec.checked_value(l)?;
        let fu = self.spec.checked_value(u)?;
        let k = (fu - fl) / (u - l);
        let x = self.stationary(l, u, k, curvature);
        let gap = fl + k * (x - l) - self.spec.checked_value(x)?;
        let gap = match curvature {
            Curvature::Convex => gap,
            Curvature::Concave => -gap,
        };
        Ok(gap.max(0.0))
    }

    /// Point of `[a, b]` where `f' = s`, the derivative being monotone there.
    fn stationary(&self, a: f64, b: f64, s: f64, curvature: Curvature) -> f64 {
        // Orient so that `g` increases on the segment.
        let g = |x: f64| match curvature {
            Curvature::Convex => self.spec.derivative(x) - s,
            Curvature::Concave => s - self.spec.derivative(x),
        };
        if g(a) >= 0.0 {
            return a;
        }
        if g(b) <= 0.0 {
            return b;
        }
        let (mut lo, mut hi) = (a, b);
        for _ in 0..ROOT_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Max and min of `f(x) - s x` over `[l, u]`.
    fn extremes(&self, l: f64, u: f64, s: f64) -> Result<(f64, f64)> {
        let mut max = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        for seg in self.segments_in(l, u) {
            let a = seg.lo.max(l);
            let b = seg.hi.min(u);
            let x = self.stationary(a, b, s, seg.curvature);
            for t in [a, b, x] {
                let v = self.spec.checked_value(t)? - s * t;
                max = max.max(v);
                min = min.min(v);
            }
        }
        Ok((max, min))
    }

    /// Slope minimising the vertical width of the graph over `[l, u]`, with
    /// that width.
    fn chebyshev(&self, l: f64, u: f64) -> Result<(f64, f64)> {
        let mut dmin = f64::INFINITY;
        let mut dmax = f64::NEG_INFINITY;
        let probes = std::iter::once(l)
            .chain(self.spec.curvature_breaks().iter().copied().filter(|&b| b > l && b < u))
            .chain(std::iter::once(u));
        for x in probes {
            let d = self.spec.derivative(x);
            if !d.is_finite() {
                return Err(Error::FitFailure { x });
            }
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        let width = |s: f64| self.extremes(l, u, s).map(|(mx, mn)| mx - mn);

        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (dmin, dmax);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let mut wc = width(c)?;
        let mut wd = width(d)?;
        for _ in 0..GOLDEN_ITERATIONS {
            if b - a <= f64::EPSILON * (1.0 + a.abs().max(b.abs())) {
                break;
            }
            if wc <= wd {
                b = d;
                d = c;
                wd = wc;
                c = b - ratio * (b - a);
                wc = width(c)?;
            } else {
                a = c;
                c = d;
                wc = wd;
                d = a + ratio * (b - a);
                wd = width(d)?;
            }
        }
        Ok(if wc <= wd { (c, wc) } else { (d, wd) })
    }

    /// Builds the piece on `[l, u]`. The flag reports whether the piece ends
    /// on the corridor boundary inside its segment, so the next piece can
    /// continue from that point.
    fn piece(&self, l: f64, u: f64, last: bool, chained: bool) -> Result<(AffinePiece, bool)> {
        if let Some(seg) = self.single_segment(l, u) {
            let fl = self.spec.checked_value(l)?;
            let fu = self.spec.checked_value(u)?;
            let slope = (fu - fl) / (u - l);
            let shift = if last && !chained {
                0.5 * self.chord_excess(l, u, seg.curvature)?
            } else {
                self.delta
            };
            let chord_intercept = fl - slope * l;
            let intercept = match seg.curvature {
                Curvature::Convex => chord_intercept - shift,
                Curvature::Concave => chord_intercept + shift,
            };
            let piece = AffinePiece { slope, intercept, lo: l, hi: u };
            Ok((piece, !last && u < seg.hi))
        } else {
            let (slope, _) = self.chebyshev(l, u)?;
            let (mx, mn) = self.extremes(l, u, slope)?;
            Ok((AffinePiece { slope, intercept: 0.5 * (mx + mn), lo: l, hi: u }, false))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::verify_corridor;

    fn cubic(delta: f64) -> UnivariateSpec {
        UnivariateSpec::new(|x: f64| x.powi(3), |x| 3.0 * x * x, (-1.0, 1.0), vec![0.0], delta).unwrap()
    }

    #[test]
    fn cubic_needs_three_pieces() {
        let pwl = fit_pwl(&cubic(0.1)).unwrap();
        assert_eq!(pwl.len(), 3);
        assert!(verify_corridor(&pwl, &cubic(0.1), 2001).unwrap() <= 0.1 + 1e-9);
        assert!(pwl.eval(0.0).unwrap().abs() <= 0.1);
    }

    #[test]
    fn affine_is_reproduced_exactly() {
        for delta in [1e-6, 0.1, 10.0] {
            let spec = UnivariateSpec::new(|x| 2.0 * x + 1.0, |_| 2.0, (0.0, 5.0), vec![], delta).unwrap();
            let pwl = fit_pwl(&spec).unwrap();
            assert_eq!(pwl.len(), 1);
            assert!((pwl.pieces()[0].slope - 2.0).abs() < 1e-12);
            assert!((pwl.pieces()[0].intercept - 1.0).abs() < 1e-12);
            assert!(verify_corridor(&pwl, &spec, 1001).unwrap() < 1e-12);
        }
    }

    #[test]
    fn convex_fit_is_continuous() {
        let spec = UnivariateSpec::new(|x: f64| -(1.0 - x).ln(), |x| 1.0 / (1.0 - x), (0.0, 0.95), vec![], 0.01)
            .unwrap();
        let pwl = fit_pwl(&spec).unwrap();
        assert!(pwl.len() > 3);
        for w in pwl.pieces().windows(2) {
            let jump = (w[0].at(w[0].hi) - w[1].at(w[1].lo)).abs();
            assert!(jump < 1e-12, "jump {jump} at {}", w[0].hi);
        }
    }

    #[test]
    fn non_finite_value_is_reported() {
        let spec =
            UnivariateSpec::new(|x: f64| if x > 0.9 { f64::NAN } else { x * x }, |x| 2.0 * x, (0.0, 1.0), vec![], 0.01)
                .unwrap();
        match fit_pwl(&spec) {
            Err(Error::FitFailure { x }) => assert!(x > 0.9),
            other => panic!("expected fit failure, got {other:?}"),
        }
    }
}
