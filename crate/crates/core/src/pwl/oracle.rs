//! Reference piece count on a grid.
//!
//! Breakpoints are restricted to `grid_size` equispaced abscissae and the
//! corridor is only enforced at those abscissae. A line fits the points
//! `i..=j` iff their minimum vertical width is at most `2δ`; that width is the
//! minimum over hull edge slopes of `max_upper(y - s x) - min_lower(y - s x)`.
//! Sub-intervals of a coverable interval are coverable, so the shortest path
//! through the interval graph follows farthest-reach jumps.

use super::UnivariateSpec;
use crate::error::{Error, Result};

pub fn min_pieces_oracle(spec: &UnivariateSpec, grid_size: usize) -> Result<usize> {
    if grid_size < 3 {
        return Err(Error::Parameter(format!("grid_size must be at least 3, got {grid_size}")));
    }
    let (lo, hi) = spec.domain();
    let step = (hi - lo) / (grid_size - 1) as f64;
    let xs: Vec<f64> =
        (0..grid_size).map(|i| if i + 1 == grid_size { hi } else { lo + step * i as f64 }).collect();
    let ys = xs.iter().map(|&x| spec.checked_value(x)).collect::<Result<Vec<_>>>()?;
    let limit = 2.0 * spec.tolerance();
    let coverable = |i: usize, j: usize| vertical_width(&xs[i..=j], &ys[i..=j]) <= limit;

    // Pieces may jump at a breakpoint, so each grid point belongs to exactly
    // one piece and consecutive pieces cover disjoint runs of points.
    let last = grid_size - 1;
    let mut at = 0;
    let mut pieces = 0;
    while at <= last {
        if at < last && !coverable(at, at + 1) {
            return Err(Error::Internal(format!("grid interval starting at {} is infeasible", xs[at])));
        }
        // Largest j with points at..=j coverable by one line.
        let (mut ok, mut bad) = (at, last + 1);
        while bad - ok > 1 {
            let mid = ok + (bad - ok) / 2;
            if coverable(at, mid) {
                ok = mid;
            } else {
                bad = mid;
            }
        }
        at = ok + 1;
        pieces += 1;
    }
    Ok(pieces)
}

/// Minimum over slopes of the vertical extent of a point set sorted by x.
pub(crate) fn vertical_width(xs: &[f64], ys: &[f64]) -> f64 {
    if xs.len() <= 2 {
        return 0.0;
    }
    let lower = hull(xs, ys, |cross| cross <= 0.0);
    let upper = hull(xs, ys, |cross| cross >= 0.0);
    let slope = |h: &[usize], k: usize| (ys[h[k + 1]] - ys[h[k]]) / (xs[h[k + 1]] - xs[h[k]]);
    let lower_slopes: Vec<f64> = (0..lower.len() - 1).map(|k| slope(&lower, k)).collect();
    let upper_slopes: Vec<f64> = (0..upper.len() - 1).map(|k| slope(&upper, k)).collect();

    let width_at = |s: f64| {
        // Lower hull slopes increase: the minimiser of y - s x sits where they cross s.
        let lo_v = lower[lower_slopes.partition_point(|&e| e < s)];
        // Upper hull slopes decrease: the maximiser sits where they cross s.
        let up_v = upper[upper_slopes.partition_point(|&e| e > s)];
        (ys[up_v] - s * xs[up_v]) - (ys[lo_v] - s * xs[lo_v])
    };
    lower_slopes
        .iter()
        .chain(upper_slopes.iter())
        .map(|&s| width_at(s))
        .fold(f64::INFINITY, f64::min)
}

/// Monotone-chain half hull; `pop` decides when the middle point is removed.
fn hull(xs: &[f64], ys: &[f64], pop: impl Fn(f64) -> bool) -> Vec<usize> {
    let mut h: Vec<usize> = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        while h.len() >= 2 {
            let (a, b) = (h[h.len() - 2], h[h.len() - 1]);
            let cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a]);
            if pop(cross) {
                h.pop();
            } else {
                break;
            }
        }
        h.push(i);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_of_collinear_points_is_zero() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        assert!(vertical_width(&xs, &ys).abs() < 1e-12);
    }

    #[test]
    fn width_of_parabola_matches_closed_form() {
        // Best line for x^2 on [0, 1] deviates by 1/8 either side.
        let n = 2001;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!((vertical_width(&xs, &ys) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn width_of_zigzag() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [0.0, 1.0, 0.0, 1.0];
        // The horizontal line y = 1/2 is optimal.
        assert!((vertical_width(&xs, &ys) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn affine_needs_one_piece() {
        let spec = UnivariateSpec::new(|x| 2.0 * x + 1.0, |_| 2.0, (0.0, 5.0), vec![], 0.01).unwrap();
        assert_eq!(min_pieces_oracle(&spec, 1000).unwrap(), 1);
        assert!(min_pieces_oracle(&spec, 2).is_err());
    }

    #[test]
    fn cubic_needs_three_pieces() {
        let spec = UnivariateSpec::new(|x: f64| x.powi(3), |x| 3.0 * x * x, (-1.0, 1.0), vec![0.0], 0.1).unwrap();
        assert_eq!(min_pieces_oracle(&spec, 10_000).unwrap(), 3);
    }
}
