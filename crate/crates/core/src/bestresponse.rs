//! Best responses of one player against mixed opponents.
//!
//! For a fixed security level `s` the markets decouple and each one is a
//! concave quadratic in `Q_j`, solved in closed form. What remains is the
//! one-dimensional value function `φ(s)`, maximised by Lipschitz
//! branch-and-bound over each cost-continuous segment of `[0, s̄]`: an
//! interval `[a, b]` can hold at most `(φ(a) + φ(b))/2 + L (b - a)/2`, so it
//! is discarded once that bound is within the gap budget of the incumbent.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::game::{
    payoff_against, profile_payoff, CostSegment, GameView, GciInstance, MixedProfile, PureStrategy,
    FEASIBILITY_TOL,
};

pub use crate::game::OpponentAggregates;

/// Slack used in every regret and improvement comparison.
pub const COMPARISON_SLACK: f64 = 1e-9;

/// Default oracle gap, `(1 - μ) 4 δ_f / 5`.
pub fn default_delta_gap(delta_f: f64, mu: f64) -> f64 {
    (1.0 - mu) * 4.0 * delta_f / 5.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponseResult {
    pub strategy: PureStrategy,
    /// Expected payoff of `strategy`.
    pub value: f64,
    /// Certified bound on `sup - value`.
    pub gap: f64,
}

/// `a_j` and `d_j` of market `j` at security level `s`.
fn market_coefficients(inst: &GciInstance, p: usize, agg: &OpponentAggregates, s: f64, j: usize) -> (f64, f64) {
    let pl = inst.player(p);
    let mk = &inst.markets()[j];
    let m = inst.num_players() as f64;
    let a = mk.q + mk.r * (s + agg.mean_security_sum) / m - mk.m_slope * agg.mean_quantity[j] - pl.c_prod - pl.c_lin[j];
    (a, mk.m_slope + pl.c_quad[j])
}

/// Optimal quantity of one market and its value net of setup cost.
fn market_optimum(a: f64, d: f64, cap: f64, setup: f64) -> (f64, f64) {
    let q = (a / (2.0 * d)).clamp(0.0, cap);
    (q, a * q - d * q * q - setup)
}

fn partial_value(inst: &GciInstance, p: usize, agg: &OpponentAggregates, s: f64) -> f64 {
    let pl = inst.player(p);
    (0..inst.num_markets())
        .map(|j| {
            let (a, d) = market_coefficients(inst, p, agg, s, j);
            market_optimum(a, d, pl.quantity_cap[j], pl.c_setup[j]).1.max(0.0)
        })
        .sum()
}

/// Market decisions maximising the payoff at a fixed security level: the
/// quantities, the entry indicators and the summed market values.
pub fn optimal_quantities_for_s(
    inst: &GciInstance,
    p: usize,
    agg: &OpponentAggregates,
    s: f64,
) -> (Vec<f64>, Vec<bool>, f64) {
    let pl = inst.player(p);
    let n = inst.num_markets();
    let mut quantities = vec![0.0; n];
    let mut entry = vec![false; n];
    let mut total = 0.0;
    for j in 0..n {
        let (a, d) = market_coefficients(inst, p, agg, s, j);
        let (q, v) = market_optimum(a, d, pl.quantity_cap[j], pl.c_setup[j]);
        if v > 0.0 {
            quantities[j] = q;
            entry[j] = true;
            total += v;
        }
    }
    (quantities, entry, total)
}

fn attack_term(inst: &GciInstance, p: usize, agg: &OpponentAggregates, s: f64) -> f64 {
    let m = inst.num_players() as f64;
    (1.0 - s) * (1.0 - (s + agg.mean_security_sum) / m) * inst.player(p).damage
}

fn phi_with(inst: &GciInstance, p: usize, agg: &OpponentAggregates, s: f64, cost: f64) -> f64 {
    partial_value(inst, p, agg, s) - cost - attack_term(inst, p, agg, s)
}

/// Value of the best strategy of `p` with security level `s`.
pub fn phi<V: GameView + ?Sized>(view: &V, p: usize, agg: &OpponentAggregates, s: f64) -> Result<f64> {
    let inst = view.instance();
    let cap = inst.security_cap(p);
    if !(s >= -FEASIBILITY_TOL && s <= cap + FEASIBILITY_TOL) {
        return Err(Error::Domain { x: s, lo: 0.0, hi: cap });
    }
    let s = s.clamp(0.0, cap);
    Ok(phi_with(inst, p, agg, s, view.security_cost(p, s)))
}

/// Upper bound on `|φ'|` over `[0, s̄^p]`.
pub fn lipschitz_bound<V: GameView + ?Sized>(view: &V, p: usize) -> f64 {
    let inst = view.instance();
    let pl = inst.player(p);
    let m = inst.num_players() as f64;
    let market: f64 = inst.markets().iter().zip(&pl.quantity_cap).map(|(mk, cap)| mk.r / m * cap).sum();
    market + pl.damage * (2.0 / m + 1.0) + view.cost_slope_bound(p)
}

#[derive(Clone, Copy)]
struct Interval {
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    bound: f64,
    segment: usize,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.bound.total_cmp(&other.bound) == Ordering::Equal
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound)
    }
}

struct Search<'a> {
    inst: &'a GciInstance,
    p: usize,
    agg: &'a OpponentAggregates,
    segments: Vec<CostSegment>,
    lipschitz: f64,
    best_s: f64,
    best_value: f64,
}

impl Search<'_> {
    fn eval(&self, segment: usize, s: f64) -> f64 {
        let seg = &self.segments[segment];
        phi_with(self.inst, self.p, self.agg, s, seg.eval(s))
    }

    fn offer(&mut self, s: f64, value: f64) {
        if value > self.best_value {
            self.best_value = value;
            self.best_s = s;
        }
    }

    fn interval(&self, a: f64, b: f64, fa: f64, fb: f64, segment: usize) -> Interval {
        Interval { a, b, fa, fb, bound: 0.5 * (fa + fb) + 0.5 * self.lipschitz * (b - a), segment }
    }

    /// Golden-section polish around the incumbent, inside its segment.
    fn refine(&mut self, segment: usize, lo: f64, hi: f64) {
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (lo, hi);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut fc, mut fd) = (self.eval(segment, c), self.eval(segment, d));
        for _ in 0..80 {
            if b - a <= 1e-15 {
                break;
            }
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = self.eval(segment, c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = self.eval(segment, d);
            }
        }
        self.offer(c, fc);
        self.offer(d, fd);
    }
}

/// Best response of `p` to opponents summarised by `agg`.
///
/// `seeds` are security levels evaluated up front (typically those of the
/// player's current support), making the returned value at least the value
/// of any of them.
pub fn best_response_to_aggregates<V: GameView + ?Sized>(
    view: &V,
    p: usize,
    agg: &OpponentAggregates,
    delta_gap: f64,
    seeds: &[f64],
) -> Result<BestResponseResult> {
    if !(delta_gap > 0.0 && delta_gap.is_finite()) {
        return Err(Error::Parameter(format!("delta_gap must be positive, got {delta_gap}")));
    }
    let inst = view.instance();
    let cap = inst.security_cap(p);
    let lipschitz = lipschitz_bound(view, p).max(f64::MIN_POSITIVE);
    let segments = view.cost_segments(p);
    if segments.is_empty() {
        return Err(Error::Internal(format!("player {p} has no cost segments")));
    }
    // Left of a segment end the cost may jump, so that end is excluded and the
    // lost sliver `[hi - trim, hi)` is covered by `lipschitz * trim`.
    let trim = 0.25 * delta_gap / lipschitz;
    let budget = 0.5 * delta_gap;

    let mut search =
        Search { inst, p, agg, segments, lipschitz, best_s: 0.0, best_value: f64::NEG_INFINITY };
    for &s in seeds {
        if s >= -FEASIBILITY_TOL && s <= cap + FEASIBILITY_TOL {
            let s = s.clamp(0.0, cap);
            search.offer(s, phi_with(inst, p, agg, s, view.security_cost(p, s)));
        }
    }

    let mut heap = BinaryHeap::new();
    let last = search.segments.len() - 1;
    for k in 0..=last {
        let seg = search.segments[k];
        let a = seg.lo;
        let b = if k == last { seg.hi } else { (seg.hi - trim).max(seg.lo) };
        let fa = search.eval(k, a);
        search.offer(a, fa);
        if b > a {
            let fb = search.eval(k, b);
            search.offer(b, fb);
            heap.push(search.interval(a, b, fa, fb, k));
        }
    }
    if !search.best_value.is_finite() {
        return Err(Error::Internal(format!("value function of player {p} is not finite")));
    }

    while let Some(iv) = heap.pop() {
        if iv.bound <= search.best_value + budget {
            break;
        }
        let mid = 0.5 * (iv.a + iv.b);
        if mid <= iv.a || mid >= iv.b {
            continue;
        }
        let fm = search.eval(iv.segment, mid);
        search.offer(mid, fm);
        heap.push(search.interval(iv.a, mid, iv.fa, fm, iv.segment));
        heap.push(search.interval(mid, iv.b, fm, iv.fb, iv.segment));
    }

    // Polish inside the segment holding the incumbent; only improvements count.
    let k = search
        .segments
        .iter()
        .position(|seg| search.best_s >= seg.lo && search.best_s < seg.hi)
        .unwrap_or(last);
    let seg = search.segments[k];
    let seg_hi = if k == last { seg.hi } else { (seg.hi - trim).max(seg.lo) };
    let radius = 4.0 * delta_gap / lipschitz;
    let (lo, hi) = ((search.best_s - radius).max(seg.lo), (search.best_s + radius).min(seg_hi));
    if hi > lo {
        search.refine(k, lo, hi);
    }

    let s = search.best_s.clamp(0.0, cap);
    let (quantities, entry, _) = optimal_quantities_for_s(inst, p, agg, s);
    let strategy = PureStrategy { quantities, entry, security: s };
    let value = payoff_against(view, p, &strategy, agg);
    Ok(BestResponseResult { strategy, value, gap: delta_gap })
}

/// Best response of `p` against the other players' strategies in `profile`.
pub fn best_response<V: GameView + ?Sized>(
    view: &V,
    p: usize,
    profile: &MixedProfile,
    delta_gap: f64,
) -> Result<BestResponseResult> {
    let inst = view.instance();
    if profile.players.len() != inst.num_players() {
        return Err(Error::Validation("profile has the wrong number of players".into()));
    }
    for (i, strat) in profile.players.iter().enumerate() {
        if i != p {
            strat.validate(inst, i)?;
        }
    }
    let agg = OpponentAggregates::from_profile(profile, p, inst.num_markets());
    let seeds: Vec<f64> = profile.players[p].support.iter().map(|x| x.security).collect();
    best_response_to_aggregates(view, p, &agg, delta_gap, &seeds)
}

/// Gain of the best deviation of `p` over its mixed strategy in `profile`.
pub fn regret<V: GameView + ?Sized>(view: &V, profile: &MixedProfile, p: usize, delta_gap: f64) -> Result<f64> {
    let current = profile_payoff(view, p, profile)?;
    Ok(best_response(view, p, profile, delta_gap)?.value - current)
}
