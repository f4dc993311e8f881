//! The cybersecurity investment game: instances, strategies and payoffs.
//!
//! Every player sells in `n` markets, choosing quantities `Q[j]`, entry
//! indicators `b[j]` and a security level `s`. Payoffs are evaluated through a
//! [`GameView`], so the same code serves the original game (exact cost `h`)
//! and its piecewise-linear approximation.

mod cost;
mod generator;
mod io;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use cost::{
    cost_derivative, cost_h, cost_spec, curvature_breaks, max_cost_slope, ncf_inflections, security_cap,
    CostKind,
};
pub use generator::generate_instance;
pub use io::{load_instance, save_instance};

/// Slack allowed when checking box constraints and simplex membership.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Inverse demand parameters of one market.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    #[serde(serialize_with = "crate::numfmt::serialize_f64_17")]
    pub q: f64,
    #[serde(rename = "m", serialize_with = "crate::numfmt::serialize_f64_17")]
    pub m_slope: f64,
    #[serde(serialize_with = "crate::numfmt::serialize_f64_17")]
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerParams {
    #[serde(serialize_with = "crate::numfmt::serialize_f64_17")]
    pub c_prod: f64,
    #[serde(serialize_with = "crate::numfmt::serialize_vec_f64_17")]
    pub c_setup: Vec<f64>,
    #[serde(serialize_with = "crate::numfmt::serialize_vec_f64_17")]
    pub c_lin: Vec<f64>,
    #[serde(serialize_with = "crate::numfmt::serialize_vec_f64_17")]
    pub c_quad: Vec<f64>,
    #[serde(serialize_with = "crate::numfmt::serialize_f64_17")]
    pub alpha: f64,
    #[serde(rename = "D", serialize_with = "crate::numfmt::serialize_f64_17")]
    pub damage: f64,
    #[serde(rename = "B", serialize_with = "crate::numfmt::serialize_f64_17")]
    pub budget: f64,
    #[serde(rename = "Q_cap", serialize_with = "crate::numfmt::serialize_vec_f64_17")]
    pub quantity_cap: Vec<f64>,
}

/// A validated game instance with precomputed security caps.
#[derive(Clone, Debug, PartialEq)]
pub struct GciInstance {
    players: Vec<PlayerParams>,
    markets: Vec<MarketParams>,
    cost_kind: CostKind,
    security_caps: Vec<f64>,
    seed: Option<u64>,
}

impl GciInstance {
    pub fn new(
        markets: Vec<MarketParams>,
        players: Vec<PlayerParams>,
        cost_kind: CostKind,
        seed: Option<u64>,
    ) -> Result<Self> {
        if players.len() < 2 {
            return Err(Error::Validation(format!("need at least 2 players, got {}", players.len())));
        }
        if markets.is_empty() {
            return Err(Error::Validation("need at least one market".into()));
        }
        for (j, mk) in markets.iter().enumerate() {
            if !(mk.q > 0.0 && mk.m_slope > 0.0 && mk.r > 0.0) || !(mk.q.is_finite() && mk.r.is_finite()) {
                return Err(Error::Validation(format!("market {j} has invalid parameters {mk:?}")));
            }
        }
        let n = markets.len();
        let mut security_caps = Vec::with_capacity(players.len());
        for (p, pl) in players.iter().enumerate() {
            let lens = [pl.c_setup.len(), pl.c_lin.len(), pl.c_quad.len(), pl.quantity_cap.len()];
            if lens.iter().any(|&l| l != n) {
                return Err(Error::Validation(format!("player {p} has per-market arrays of lengths {lens:?}, expected {n}")));
            }
            let scalars = [pl.c_prod, pl.alpha, pl.damage, pl.budget];
            let arrays = pl.c_setup.iter().chain(&pl.c_lin).chain(&pl.c_quad).chain(&pl.quantity_cap);
            if scalars.iter().chain(arrays).any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Validation(format!("player {p} has negative or non-finite parameters")));
            }
            if pl.c_quad.iter().chain(&pl.quantity_cap).any(|&v| v <= 0.0) {
                return Err(Error::Validation(format!("player {p} needs positive c_quad and Q_cap")));
            }
            let cap = security_cap(cost_kind, pl.alpha, pl.budget)?;
            let residual = (cost_h(cost_kind, pl.alpha, cap)? - pl.budget).abs();
            if residual > 1e-10 {
                return Err(Error::CapResidual { player: p, residual });
            }
            security_caps.push(cap);
        }
        Ok(Self { players, markets, cost_kind, security_caps, seed })
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn num_markets(&self) -> usize {
        self.markets.len()
    }

    pub fn players(&self) -> &[PlayerParams] {
        &self.players
    }

    pub fn player(&self, p: usize) -> &PlayerParams {
        &self.players[p]
    }

    pub fn markets(&self) -> &[MarketParams] {
        &self.markets
    }

    pub fn cost_kind(&self) -> CostKind {
        self.cost_kind
    }

    /// `s̄^p`, the highest security level the budget of player `p` affords.
    pub fn security_cap(&self, p: usize) -> f64 {
        self.security_caps[p]
    }

    pub fn security_caps(&self) -> &[f64] {
        &self.security_caps
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// How the cybersecurity cost is evaluated on one sub-interval of `[0, s̄]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CostLaw {
    Exact { kind: CostKind, alpha: f64 },
    Affine { slope: f64, intercept: f64 },
}

/// A closed sub-interval of `[0, s̄]` on which the cost is continuous.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostSegment {
    pub lo: f64,
    pub hi: f64,
    pub law: CostLaw,
}

impl CostSegment {
    pub fn eval(&self, s: f64) -> f64 {
        match self.law {
            CostLaw::Exact { kind, alpha } => cost_h(kind, alpha, s).unwrap_or(f64::NAN),
            CostLaw::Affine { slope, intercept } => slope * s + intercept,
        }
    }
}

/// A game whose payoffs differ from the instance only in the cost term.
pub trait GameView: Sync {
    fn instance(&self) -> &GciInstance;

    /// Cost paid by player `p` at security level `s`.
    fn security_cost(&self, p: usize, s: f64) -> f64;

    /// Partition of `[0, s̄^p]` into closed intervals on which the cost is
    /// continuous; endpoints may carry one-sided limits.
    fn cost_segments(&self, p: usize) -> Vec<CostSegment>;

    /// Upper bound on `|cost'|` over `[0, s̄^p]`.
    fn cost_slope_bound(&self, p: usize) -> f64;
}

impl GameView for GciInstance {
    fn instance(&self) -> &GciInstance {
        self
    }

    fn security_cost(&self, p: usize, s: f64) -> f64 {
        cost_h(self.cost_kind, self.players[p].alpha, s).unwrap_or(f64::NAN)
    }

    fn cost_segments(&self, p: usize) -> Vec<CostSegment> {
        vec![CostSegment {
            lo: 0.0,
            hi: self.security_caps[p],
            law: CostLaw::Exact { kind: self.cost_kind, alpha: self.players[p].alpha },
        }]
    }

    fn cost_slope_bound(&self, p: usize) -> f64 {
        max_cost_slope(self.cost_kind, self.players[p].alpha, self.security_caps[p])
    }
}

/// A pure strategy `(Q, b, s)` of one player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PureStrategy {
    #[serde(rename = "Q")]
    pub quantities: Vec<f64>,
    #[serde(rename = "b", serialize_with = "ser_indicators", deserialize_with = "de_indicators")]
    pub entry: Vec<bool>,
    #[serde(rename = "s")]
    pub security: f64,
}

fn ser_indicators<S: Serializer>(b: &[bool], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(b.iter().map(|&x| u8::from(x)))
}

fn de_indicators<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<bool>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Int(u8),
        Bool(bool),
    }
    Vec::<Flag>::deserialize(d)?
        .into_iter()
        .map(|f| match f {
            Flag::Bool(b) => Ok(b),
            Flag::Int(0) => Ok(false),
            Flag::Int(1) => Ok(true),
            Flag::Int(v) => Err(serde::de::Error::custom(format!("entry indicator must be 0 or 1, got {v}"))),
        })
        .collect()
}

impl PureStrategy {
    /// Stay out of every market with no security investment.
    pub fn idle(n: usize) -> Self {
        Self { quantities: vec![0.0; n], entry: vec![false; n], security: 0.0 }
    }

    /// Checks `0 <= Q[j] <= b[j] Q̄[j]` and `0 <= s <= s̄` for player `p`.
    pub fn validate(&self, inst: &GciInstance, p: usize) -> Result<()> {
        let pl = inst.player(p);
        let n = inst.num_markets();
        if self.quantities.len() != n || self.entry.len() != n {
            return Err(Error::Validation(format!("strategy of player {p} has wrong market count")));
        }
        for j in 0..n {
            let q = self.quantities[j];
            let cap = if self.entry[j] { pl.quantity_cap[j] } else { 0.0 };
            if !(q.is_finite() && q >= -FEASIBILITY_TOL && q <= cap + FEASIBILITY_TOL) {
                return Err(Error::Validation(format!(
                    "player {p}: quantity {q} in market {j} violates 0 <= Q <= {cap}"
                )));
            }
        }
        let s = self.security;
        if !(s.is_finite() && s >= -FEASIBILITY_TOL && s <= inst.security_cap(p) + FEASIBILITY_TOL) {
            return Err(Error::Validation(format!(
                "player {p}: security {s} outside [0, {}]",
                inst.security_cap(p)
            )));
        }
        Ok(())
    }

    /// Equality up to `tol` in every continuous coordinate.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.entry == other.entry
            && (self.security - other.security).abs() <= tol
            && self.quantities.len() == other.quantities.len()
            && self.quantities.iter().zip(&other.quantities).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Finite-support mixed strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    #[serde(rename = "strategies")]
    pub support: Vec<PureStrategy>,
    #[serde(rename = "probabilities")]
    pub probs: Vec<f64>,
}

impl MixedStrategy {
    pub fn pure(x: PureStrategy) -> Self {
        Self { support: vec![x], probs: vec![1.0] }
    }

    pub fn validate(&self, inst: &GciInstance, p: usize) -> Result<()> {
        if self.support.is_empty() {
            return Err(Error::Validation(format!("player {p} has an empty support")));
        }
        if self.support.len() != self.probs.len() {
            return Err(Error::Validation(format!("player {p}: support and probabilities differ in length")));
        }
        if self.probs.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Validation(format!("player {p} has a negative probability")));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > FEASIBILITY_TOL {
            return Err(Error::Validation(format!("player {p}: probabilities sum to {total}")));
        }
        self.support.iter().try_for_each(|x| x.validate(inst, p))
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &PureStrategy)> {
        self.probs.iter().copied().zip(self.support.iter())
    }
}

/// One mixed strategy per player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedProfile {
    pub players: Vec<MixedStrategy>,
}

impl MixedProfile {
    pub fn new(players: Vec<MixedStrategy>) -> Self {
        Self { players }
    }

    pub fn from_pure(profile: &[PureStrategy]) -> Self {
        Self { players: profile.iter().cloned().map(MixedStrategy::pure).collect() }
    }

    pub fn validate(&self, inst: &GciInstance) -> Result<()> {
        if self.players.len() != inst.num_players() {
            return Err(Error::Validation(format!(
                "profile has {} players, instance has {}",
                self.players.len(),
                inst.num_players()
            )));
        }
        self.players.iter().enumerate().try_for_each(|(p, s)| s.validate(inst, p))
    }

    pub fn total_support(&self) -> usize {
        self.players.iter().map(|s| s.support.len()).sum()
    }
}

/// What player `p` sees of the others: summed expected quantities per market
/// and the summed expected security level.
#[derive(Clone, Debug, PartialEq)]
pub struct OpponentAggregates {
    pub mean_quantity: Vec<f64>,
    pub mean_security_sum: f64,
}

impl OpponentAggregates {
    pub fn zero(n: usize) -> Self {
        Self { mean_quantity: vec![0.0; n], mean_security_sum: 0.0 }
    }

    /// Expectations over `profile` excluding player `p`.
    pub fn from_profile(profile: &MixedProfile, p: usize, n: usize) -> Self {
        let mut agg = Self::zero(n);
        for (i, strat) in profile.players.iter().enumerate() {
            if i == p {
                continue;
            }
            for (w, x) in strat.iter() {
                for (acc, q) in agg.mean_quantity.iter_mut().zip(&x.quantities) {
                    *acc += w * q;
                }
                agg.mean_security_sum += w * x.security;
            }
        }
        agg
    }

    pub fn from_pure(profile: &[PureStrategy], p: usize, n: usize) -> Self {
        let mut agg = Self::zero(n);
        for (i, x) in profile.iter().enumerate() {
            if i != p {
                for (acc, q) in agg.mean_quantity.iter_mut().zip(&x.quantities) {
                    *acc += q;
                }
                agg.mean_security_sum += x.security;
            }
        }
        agg
    }
}

/// Payoff of `p` playing `own` when the opponents' (expected) totals are `agg`.
///
/// The payoff is affine in each opponent's quantities and security level, so
/// this equals the expected payoff against any opponent distribution with
/// these means. No feasibility checks.
pub fn payoff_against<V: GameView + ?Sized>(view: &V, p: usize, own: &PureStrategy, agg: &OpponentAggregates) -> f64 {
    let inst = view.instance();
    let pl = inst.player(p);
    let m = inst.num_players() as f64;
    let s = own.security;
    let s_avg = (s + agg.mean_security_sum) / m;
    let mut total = 0.0;
    for (j, mk) in inst.markets().iter().enumerate() {
        let qty = own.quantities[j];
        let price = mk.q + mk.r * s_avg - mk.m_slope * (qty + agg.mean_quantity[j]);
        total += price * qty - pl.c_prod * qty - pl.c_quad[j] * qty * qty - pl.c_lin[j] * qty;
        if own.entry[j] {
            total -= pl.c_setup[j];
        }
    }
    total - view.security_cost(p, s) - (1.0 - s) * (1.0 - s_avg) * pl.damage
}

/// Payoff of player `p` on a pure profile.
pub fn payoff<V: GameView + ?Sized>(view: &V, p: usize, profile: &[PureStrategy]) -> Result<f64> {
    let inst = view.instance();
    if profile.len() != inst.num_players() {
        return Err(Error::Validation(format!("profile has {} strategies, expected {}", profile.len(), inst.num_players())));
    }
    for (i, x) in profile.iter().enumerate() {
        x.validate(inst, i)?;
    }
    let agg = OpponentAggregates::from_pure(profile, p, inst.num_markets());
    Ok(payoff_against(view, p, &profile[p], &agg))
}

/// Expected payoff of `p` playing `own` against the other players' mixed
/// strategies in `profile` (the entry of `p` itself is ignored).
pub fn expected_payoff<V: GameView + ?Sized>(view: &V, p: usize, own: &PureStrategy, profile: &MixedProfile) -> Result<f64> {
    let inst = view.instance();
    if profile.players.len() != inst.num_players() {
        return Err(Error::Validation("profile has the wrong number of players".into()));
    }
    own.validate(inst, p)?;
    for (i, strat) in profile.players.iter().enumerate() {
        if i != p {
            strat.validate(inst, i)?;
        }
    }
    let agg = OpponentAggregates::from_profile(profile, p, inst.num_markets());
    Ok(payoff_against(view, p, own, &agg))
}

/// Expected payoff of `p` under the full mixed profile.
pub fn profile_payoff<V: GameView + ?Sized>(view: &V, p: usize, profile: &MixedProfile) -> Result<f64> {
    profile.validate(view.instance())?;
    let agg = OpponentAggregates::from_profile(profile, p, view.instance().num_markets());
    Ok(profile.players[p].iter().map(|(w, x)| w * payoff_against(view, p, x, &agg)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_instance(kind: CostKind) -> GciInstance {
        let markets = vec![MarketParams { q: 150.0, m_slope: 1.0, r: 0.3 }];
        let player = PlayerParams {
            c_prod: 5.0,
            c_setup: vec![700.0],
            c_lin: vec![2.0],
            c_quad: vec![0.5],
            alpha: 3.0,
            damage: 80.0,
            budget: 2.0,
            quantity_cap: vec![120.0],
        };
        GciInstance::new(markets, vec![player.clone(), player], kind, None).unwrap()
    }

    #[test]
    fn idle_profile_pays_only_attack_damage() {
        let inst = generate_instance(3, 2, CostKind::Log, 11).unwrap();
        let idle = vec![PureStrategy::idle(2); 3];
        for p in 0..3 {
            assert_eq!(payoff(&inst, p, &idle).unwrap(), -inst.player(p).damage);
        }
    }

    #[test]
    fn hand_evaluated_payoff() {
        let inst = tiny_instance(CostKind::Isr);
        let x0 = PureStrategy { quantities: vec![30.0], entry: vec![true], security: 0.2 };
        let x1 = PureStrategy { quantities: vec![10.0], entry: vec![true], security: 0.4 };
        // price = 150 + 0.3 * 0.3 - 1 * 40 = 110.09
        let revenue = 110.09 * 30.0;
        let costs = 5.0 * 30.0 + 700.0 + 0.5 * 900.0 + 2.0 * 30.0;
        let h = 3.0 * (1.0 / 0.8f64.sqrt() - 1.0);
        let attack = 0.8 * 0.7 * 80.0;
        let expected = revenue - costs - h - attack;
        assert!((payoff(&inst, 0, &[x0, x1]).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn symmetric_players_get_equal_payoffs() {
        let inst = tiny_instance(CostKind::Ncf);
        let x = PureStrategy { quantities: vec![25.0], entry: vec![true], security: 0.05 };
        let pr = [x.clone(), x];
        assert_eq!(payoff(&inst, 0, &pr).unwrap(), payoff(&inst, 1, &pr).unwrap());
    }

    #[test]
    fn infeasible_strategies_are_rejected() {
        let inst = tiny_instance(CostKind::Log);
        let ok = PureStrategy { quantities: vec![10.0], entry: vec![true], security: 0.0 };
        let no_entry = PureStrategy { quantities: vec![10.0], entry: vec![false], security: 0.0 };
        let too_secure = PureStrategy { quantities: vec![0.0], entry: vec![false], security: 0.99 };
        assert!(payoff(&inst, 0, &[ok.clone(), no_entry]).is_err());
        assert!(payoff(&inst, 0, &[too_secure, ok]).is_err());
    }

    #[test]
    fn expectation_uses_opponent_mixture() {
        let inst = tiny_instance(CostKind::Log);
        let own = PureStrategy { quantities: vec![20.0], entry: vec![true], security: 0.1 };
        let x = PureStrategy { quantities: vec![10.0], entry: vec![true], security: 0.3 };
        let y = PureStrategy { quantities: vec![40.0], entry: vec![true], security: 0.05 };
        let mix = MixedProfile::new(vec![
            MixedStrategy::pure(own.clone()),
            MixedStrategy { support: vec![x.clone(), y.clone()], probs: vec![0.3, 0.7] },
        ]);
        let direct = 0.3 * payoff(&inst, 0, &[own.clone(), x]).unwrap() + 0.7 * payoff(&inst, 0, &[own.clone(), y]).unwrap();
        assert!((expected_payoff(&inst, 0, &own, &mix).unwrap() - direct).abs() < 1e-9);
    }

    #[test]
    fn degenerate_mixture_equals_pure_payoff() {
        let inst = generate_instance(3, 2, CostKind::Isr, 4).unwrap();
        let xs: Vec<PureStrategy> = (0..3)
            .map(|p| PureStrategy {
                quantities: vec![10.0 + p as f64, 0.0],
                entry: vec![true, false],
                security: 0.5 * inst.security_cap(p),
            })
            .collect();
        let mix = MixedProfile::from_pure(&xs);
        for p in 0..3 {
            let e = expected_payoff(&inst, p, &xs[p], &mix).unwrap();
            assert!((e - payoff(&inst, p, &xs).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_support_is_rejected() {
        let inst = tiny_instance(CostKind::Log);
        let own = PureStrategy::idle(1);
        let mix = MixedProfile::new(vec![MixedStrategy::pure(own.clone()), MixedStrategy { support: vec![], probs: vec![] }]);
        assert!(expected_payoff(&inst, 0, &own, &mix).is_err());
    }

    #[test]
    fn indicators_serialize_as_integers() {
        let x = PureStrategy { quantities: vec![1.0, 0.0], entry: vec![true, false], security: 0.25 };
        let s = serde_json::to_string(&x).unwrap();
        assert!(s.contains("\"b\":[1,0]"), "{s}");
        let back: PureStrategy = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
    }
}
