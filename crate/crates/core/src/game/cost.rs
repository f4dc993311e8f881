//! Cybersecurity cost functions `h`, their derivatives and budget caps.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pwl::UnivariateSpec;

/// Shape of the cybersecurity cost `h(s)` on `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CostKind {
    /// Inverse square root, `α (1/√(1-s) - 1)`.
    #[serde(rename = "ISR", alias = "isr")]
    Isr,
    /// Logarithmic, `-α ln(1-s)`.
    #[serde(rename = "LOG", alias = "log")]
    Log,
    /// Nonconvex, `α (1/√(1-s) + 2/(1+e^{-20s}) - 2)`.
    #[serde(rename = "NCF", alias = "ncf")]
    Ncf,
}

impl CostKind {
    pub const ALL: [CostKind; 3] = [CostKind::Isr, CostKind::Log, CostKind::Ncf];

    pub fn name(self) -> &'static str {
        match self {
            CostKind::Isr => "isr",
            CostKind::Log => "log",
            CostKind::Ncf => "ncf",
        }
    }

    /// Subset label used by the benchmark summaries (`log234`, `root567`, ...).
    pub fn family(self) -> &'static str {
        match self {
            CostKind::Isr => "root",
            CostKind::Log => "log",
            CostKind::Ncf => "nonconvex",
        }
    }
}

impl std::fmt::Display for CostKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CostKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "isr" | "root" => Ok(CostKind::Isr),
            "log" => Ok(CostKind::Log),
            "ncf" | "nonconvex" => Ok(CostKind::Ncf),
            other => Err(Error::Parameter(format!("unknown cost kind {other:?}"))),
        }
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn raw_cost(kind: CostKind, alpha: f64, s: f64) -> f64 {
    match kind {
        CostKind::Isr => alpha * (1.0 / (1.0 - s).sqrt() - 1.0),
        CostKind::Log => -alpha * (-s).ln_1p(),
        CostKind::Ncf => alpha * (1.0 / (1.0 - s).sqrt() + 2.0 * logistic(20.0 * s) - 2.0),
    }
}

/// Cybersecurity cost `h(s)`.
pub fn cost_h(kind: CostKind, alpha: f64, s: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::Domain { x: s, lo: 0.0, hi: 1.0 });
    }
    Ok(raw_cost(kind, alpha, s))
}

/// `h'(s)`, for `0 <= s < 1`.
pub fn cost_derivative(kind: CostKind, alpha: f64, s: f64) -> f64 {
    let isr = 0.5 * (1.0 - s).powf(-1.5);
    match kind {
        CostKind::Isr => alpha * isr,
        CostKind::Log => alpha / (1.0 - s),
        CostKind::Ncf => {
            let g = logistic(20.0 * s);
            alpha * (isr + 40.0 * g * (1.0 - g))
        }
    }
}

/// The unique `s̄` in `(0, 1)` with `h(s̄) = B`.
pub fn security_cap(kind: CostKind, alpha: f64, budget: f64) -> Result<f64> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Parameter(format!("budget must be positive, got {budget}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    let ratio = budget / alpha;
    let cap = match kind {
        CostKind::Isr => 1.0 - 1.0 / ((1.0 + ratio) * (1.0 + ratio)),
        CostKind::Log => -(-ratio).exp_m1(),
        CostKind::Ncf => {
            let (mut lo, mut hi) = (0.0f64, 1.0 - 1e-12);
            if raw_cost(kind, alpha, hi) < budget {
                return Err(Error::Parameter(format!("budget {budget} is unreachable for alpha {alpha}")));
            }
            loop {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if raw_cost(kind, alpha, mid) < budget {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if (raw_cost(kind, alpha, lo) - budget).abs() <= (raw_cost(kind, alpha, hi) - budget).abs() {
                lo
            } else {
                hi
            }
        }
    };
    if !(cap > 0.0 && cap < 1.0) {
        return Err(Error::Parameter(format!(
            "budget {budget} with alpha {alpha} gives a security cap outside (0, 1)"
        )));
    }
    Ok(cap)
}

/// Inflection points of the nonconvex cost on `(0, 1)`, independent of `α`.
///
/// Located from sign changes of the central second difference with step
/// `1e-4`, each refined by bisection.
pub fn ncf_inflections() -> &'static [f64] {
    static BREAKS: OnceLock<Vec<f64>> = OnceLock::new();
    BREAKS.get_or_init(|| {
        const STEP: f64 = 1e-4;
        let d2 = |s: f64| raw_cost(CostKind::Ncf, 1.0, s - STEP) - 2.0 * raw_cost(CostKind::Ncf, 1.0, s) + raw_cost(CostKind::Ncf, 1.0, s + STEP);
        let mut breaks = Vec::new();
        let scan: Vec<f64> = (1..9_998).map(|i| i as f64 * STEP).collect();
        for w in scan.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (d2(a) > 0.0) != (d2(b) > 0.0) {
                let (mut lo, mut hi) = (a, b);
                let sign_lo = d2(lo) > 0.0;
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if (d2(mid) > 0.0) == sign_lo {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                breaks.push(0.5 * (lo + hi));
            }
        }
        breaks
    })
}

/// Curvature breaks of `h` strictly inside `(0, cap)`.
pub fn curvature_breaks(kind: CostKind, cap: f64) -> Vec<f64> {
    match kind {
        CostKind::Isr | CostKind::Log => Vec::new(),
        CostKind::Ncf => ncf_inflections().iter().copied().filter(|&b| b > 0.0 && b < cap).collect(),
    }
}

/// Largest slope of `h` on `[0, cap]`.
pub fn max_cost_slope(kind: CostKind, alpha: f64, cap: f64) -> f64 {
    let mut slope = cost_derivative(kind, alpha, 0.0).max(cost_derivative(kind, alpha, cap));
    for b in curvature_breaks(kind, cap) {
        slope = slope.max(cost_derivative(kind, alpha, b));
    }
    slope
}

/// The univariate approximation problem for one player's cost on `[0, cap]`.
pub fn cost_spec(kind: CostKind, alpha: f64, cap: f64, tolerance: f64) -> Result<UnivariateSpec> {
    UnivariateSpec::new(
        move |s| if (0.0..1.0).contains(&s) { raw_cost(kind, alpha, s) } else { f64::NAN },
        move |s| cost_derivative(kind, alpha, s),
        (0.0, cap),
        curvature_breaks(kind, cap),
        tolerance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_values() {
        assert_eq!(cost_h(CostKind::Isr, 1.0, 0.0).unwrap(), 0.0);
        assert!((cost_h(CostKind::Isr, 1.0, 0.75).unwrap() - 1.0).abs() < 1e-15);
        assert!(cost_h(CostKind::Ncf, 1.0, 0.0).unwrap().abs() < 1e-15);
        assert!(cost_h(CostKind::Ncf, 7.0, 0.0).unwrap().abs() < 1e-15);
        assert_eq!(cost_h(CostKind::Log, 3.0, 0.0).unwrap(), 0.0);
        assert!(matches!(cost_h(CostKind::Log, 1.0, 1.0), Err(Error::Domain { .. })));
        assert!(cost_h(CostKind::Isr, 1.0, 1.5).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for kind in CostKind::ALL {
            for &s in &[0.0, 0.01, 0.2, 0.5, 0.9] {
                let h = 1e-6;
                let a = if s == 0.0 { 0.0 } else { s - h };
                let fd = (raw_cost(kind, 2.5, s + h) - raw_cost(kind, 2.5, a)) / (s + h - a);
                let d = cost_derivative(kind, 2.5, s);
                assert!((fd - d).abs() <= 1e-4 * d.abs().max(1.0), "{kind} at {s}: {fd} vs {d}");
            }
        }
    }

    #[test]
    fn caps_invert_budget() {
        assert!((security_cap(CostKind::Isr, 1.0, 1.0).unwrap() - 0.75).abs() < 1e-15);
        assert!((security_cap(CostKind::Log, 1.0, 1.0).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        let ncf = security_cap(CostKind::Ncf, 1.0, 1.0).unwrap();
        assert!((cost_h(CostKind::Ncf, 1.0, ncf).unwrap() - 1.0).abs() <= 1e-10);
        for kind in CostKind::ALL {
            for alpha in [1.0, 4.0, 10.0] {
                for budget in [0.5, 2.0, 5.0] {
                    let cap = security_cap(kind, alpha, budget).unwrap();
                    assert!(cap > 0.0 && cap < 1.0);
                    assert!((cost_h(kind, alpha, cap).unwrap() - budget).abs() <= 1e-10);
                }
            }
        }
        assert!(security_cap(CostKind::Isr, 1.0, 0.0).is_err());
        assert!(security_cap(CostKind::Isr, 1.0, -1.0).is_err());
    }

    #[test]
    fn ncf_has_two_inflections() {
        let b = ncf_inflections();
        assert_eq!(b.len(), 2, "{b:?}");
        // h'' = 0.75 (1-s)^{-5/2} + 800 g (1-g)(1-2g), g = logistic(20 s).
        let h2 = |s: f64| {
            let g = logistic(20.0 * s);
            0.75 * (1.0 - s).powf(-2.5) + 800.0 * g * (1.0 - g) * (1.0 - 2.0 * g)
        };
        for &s in b {
            assert!(h2(s - 1e-6) * h2(s + 1e-6) < 0.0, "no sign change at {s}");
        }
    }

    #[test]
    fn ncf_slope_bound_covers_interior_peak() {
        let cap = security_cap(CostKind::Ncf, 1.0, 5.0).unwrap();
        let bound = max_cost_slope(CostKind::Ncf, 1.0, cap);
        for i in 0..=10_000 {
            let s = cap * i as f64 / 10_000.0;
            assert!(cost_derivative(CostKind::Ncf, 1.0, s) <= bound * (1.0 + 1e-12));
        }
    }
}
