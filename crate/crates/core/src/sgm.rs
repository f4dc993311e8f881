//! Sample generation, the approximation procedures and certification.
//!
//! The sample generation method alternates between an equilibrium of the
//! game restricted to the sampled strategies and a best-response sweep over
//! the players; every player whose best deviation gains at least
//! `target - delta_gap` contributes that deviation to its sample.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bestresponse::{best_response, best_response_to_aggregates, default_delta_gap, regret, COMPARISON_SLACK};
use crate::error::{Error, Result};
use crate::game::{
    cost_spec, profile_payoff, CostLaw, CostSegment, GameView, GciInstance, MixedProfile, MixedStrategy,
    OpponentAggregates, PureStrategy,
};
use crate::normalform::{build_sampled_game, solve_sampled_ne_with, NeSolverConfig, SampledMixedProfile};
use crate::pwl::{fit_pwl, PwlFunction};

/// Two strategies closer than this in every coordinate are the same sample.
pub const DEDUP_TOL: f64 = 1e-9;

/// The instance with each cost `h^p` replaced by a PWL approximation `ĥ^p`.
#[derive(Clone, Debug)]
pub struct ApproximatedGame {
    base: GciInstance,
    h_hat: Vec<PwlFunction>,
    tolerance: f64,
}

impl ApproximatedGame {
    pub fn base(&self) -> &GciInstance {
        &self.base
    }

    pub fn h_hat(&self, p: usize) -> &PwlFunction {
        &self.h_hat[p]
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn piece_counts(&self) -> Vec<usize> {
        self.h_hat.iter().map(PwlFunction::len).collect()
    }
}

impl GameView for ApproximatedGame {
    fn instance(&self) -> &GciInstance {
        &self.base
    }

    fn security_cost(&self, p: usize, s: f64) -> f64 {
        let pwl = &self.h_hat[p];
        let (lo, hi) = pwl.domain();
        pwl.eval(s.clamp(lo, hi)).unwrap_or(f64::NAN)
    }

    fn cost_segments(&self, p: usize) -> Vec<CostSegment> {
        self.h_hat[p]
            .pieces()
            .iter()
            .map(|pc| CostSegment { lo: pc.lo, hi: pc.hi, law: CostLaw::Affine { slope: pc.slope, intercept: pc.intercept } })
            .collect()
    }

    fn cost_slope_bound(&self, p: usize) -> f64 {
        self.h_hat[p].max_abs_slope()
    }
}

/// Fits every player's cost on `[0, s̄^p]` with absolute tolerance `delta`.
pub fn approximate_ipg(inst: &GciInstance, delta: f64) -> Result<ApproximatedGame> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Parameter(format!("approximation tolerance must be positive, got {delta}")));
    }
    let h_hat = (0..inst.num_players())
        .map(|p| {
            let pl = inst.player(p);
            fit_pwl(&cost_spec(inst.cost_kind(), pl.alpha, inst.security_cap(p), delta)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ApproximatedGame { base: inst.clone(), h_hat, tolerance: delta })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SgmStatus {
    Solved,
    TimeLimit,
    SolverExhausted,
}

impl SgmStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SgmStatus::Solved => "solved",
            SgmStatus::TimeLimit => "time_limit",
            SgmStatus::SolverExhausted => "solver_exhausted",
        }
    }
}

impl fmt::Display for SgmStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SgmStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "solved" => Ok(SgmStatus::Solved),
            "time_limit" => Ok(SgmStatus::TimeLimit),
            "solver_exhausted" => Ok(SgmStatus::SolverExhausted),
            other => Err(Error::Parameter(format!("unknown status {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgmConfig {
    /// Equilibrium tolerance `δ` in the game being solved.
    pub target: f64,
    pub delta_gap: f64,
    /// Regret tolerance of the sampled-game solver.
    pub delta_m: f64,
    pub max_iterations: usize,
    pub time_limit_s: f64,
    /// Seed of the sampled-game solver's random restarts.
    pub seed: u64,
}

impl SgmConfig {
    /// `delta_gap = 4δ/5` and `delta_M = δ/10`.
    pub fn for_target(target: f64) -> Self {
        Self { target, delta_gap: 0.8 * target, delta_m: target / 10.0, max_iterations: 10_000, time_limit_s: 900.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_gap > 0.0 && self.target > self.delta_gap) {
            return Err(Error::Parameter(format!(
                "need target > delta_gap > 0, got target {} and delta_gap {}",
                self.target, self.delta_gap
            )));
        }
        if !(self.delta_m >= 0.0 && self.delta_m <= self.target / 10.0 * (1.0 + 1e-12)) {
            return Err(Error::Parameter(format!("delta_M {} must lie in [0, target/10]", self.delta_m)));
        }
        if self.max_iterations == 0 || !(self.time_limit_s > 0.0) {
            return Err(Error::Parameter("iteration and time limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgmOutcome {
    pub profile: MixedProfile,
    pub iterations: usize,
    /// Strategies added to each player's sample after initialisation.
    pub strategies_added: Vec<usize>,
    pub status: SgmStatus,
    pub wall_time_s: f64,
    /// Largest best-response gain measured in the last sweep.
    pub max_gain: f64,
}

/// Best response of every player to the null environment.
pub fn initialize_samples<V: GameView + ?Sized>(view: &V, delta_gap: f64) -> Result<Vec<PureStrategy>> {
    let inst = view.instance();
    let zero = OpponentAggregates::zero(inst.num_markets());
    (0..inst.num_players())
        .map(|p| best_response_to_aggregates(view, p, &zero, delta_gap, &[]).map(|br| br.strategy))
        .collect()
}

fn push_unique(list: &mut Vec<PureStrategy>, x: PureStrategy) -> bool {
    if list.iter().any(|y| y.approx_eq(&x, DEDUP_TOL)) {
        false
    } else {
        list.push(x);
        true
    }
}

fn to_mixed(samples: &[Vec<PureStrategy>], ne: &SampledMixedProfile) -> MixedProfile {
    MixedProfile::new(
        samples
            .iter()
            .zip(&ne.probs)
            .map(|(list, w)| {
                let (support, probs) =
                    list.iter().zip(w).filter(|(_, &x)| x > 0.0).map(|(s, &x)| (s.clone(), x)).unzip();
                MixedStrategy { support, probs }
            })
            .collect(),
    )
}

/// Runs the sample generation method on `view`.
pub fn run_sgm<V: GameView + ?Sized>(view: &V, config: &SgmConfig, warm_start: Option<&MixedProfile>) -> Result<SgmOutcome> {
    config.validate()?;
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(config.time_limit_s);
    let inst = view.instance();
    let m = inst.num_players();

    let (mut samples, mut warm) = match warm_start {
        Some(profile) => {
            profile.validate(inst)?;
            let mut samples: Vec<Vec<PureStrategy>> = vec![Vec::new(); m];
            let mut probs: Vec<Vec<f64>> = vec![Vec::new(); m];
            for (p, strat) in profile.players.iter().enumerate() {
                for (w, x) in strat.iter() {
                    match samples[p].iter().position(|y| y.approx_eq(x, DEDUP_TOL)) {
                        Some(k) => probs[p][k] += w,
                        None => {
                            samples[p].push(x.clone());
                            probs[p].push(w);
                        }
                    }
                }
            }
            (samples, Some(SampledMixedProfile { probs }))
        }
        None => (initialize_samples(view, config.delta_gap)?.into_iter().map(|x| vec![x]).collect(), None),
    };
    let initial_sizes: Vec<usize> = samples.iter().map(Vec::len).collect();
    let ne_config = NeSolverConfig { deadline: Some(deadline), seed: config.seed, ..NeSolverConfig::default() };
    let mut profile = MixedProfile::new(samples.iter().map(|l| MixedStrategy::pure(l[0].clone())).collect());
    let mut max_gain = f64::INFINITY;
    let mut iterations = 0;

    let finish = |profile: MixedProfile, iterations, samples: &[Vec<PureStrategy>], status, max_gain| SgmOutcome {
        profile,
        iterations,
        strategies_added: samples.iter().zip(&initial_sizes).map(|(l, k)| l.len() - k).collect(),
        status,
        wall_time_s: start.elapsed().as_secs_f64(),
        max_gain,
    };

    while iterations < config.max_iterations {
        if Instant::now() >= deadline {
            return Ok(finish(profile, iterations, &samples, SgmStatus::TimeLimit, max_gain));
        }
        iterations += 1;
        let game = match build_sampled_game(view, samples.clone()) {
            Ok(g) => g,
            Err(Error::SolverExhausted) => {
                return Ok(finish(profile, iterations, &samples, SgmStatus::SolverExhausted, max_gain))
            }
            Err(e) => return Err(e),
        };
        let ne = match solve_sampled_ne_with(&game, config.delta_m, warm.as_ref(), &ne_config) {
            Ok(ne) => ne,
            Err(Error::SolverExhausted) => {
                return Ok(finish(profile, iterations, &samples, SgmStatus::SolverExhausted, max_gain))
            }
            Err(Error::TimeLimit) => return Ok(finish(profile, iterations, &samples, SgmStatus::TimeLimit, max_gain)),
            Err(e) => return Err(e),
        };
        profile = to_mixed(&samples, &ne);
        max_gain = f64::NEG_INFINITY;
        let mut added = false;
        let threshold = config.target - config.delta_gap - COMPARISON_SLACK;
        for p in 0..m {
            if Instant::now() >= deadline {
                return Ok(finish(profile, iterations, &samples, SgmStatus::TimeLimit, f64::INFINITY));
            }
            let br = best_response(view, p, &profile, config.delta_gap)?;
            let gain = br.value - profile_payoff(view, p, &profile)?;
            max_gain = max_gain.max(gain);
            if gain >= threshold {
                added |= push_unique(&mut samples[p], br.strategy);
            }
        }
        if max_gain < threshold {
            return Ok(finish(profile, iterations, &samples, SgmStatus::Solved, max_gain));
        }
        if !added {
            // Every violating deviation is already sampled: the sampled
            // equilibrium is too coarse for the target.
            return Ok(finish(profile, iterations, &samples, SgmStatus::SolverExhausted, max_gain));
        }
        warm = Some(ne);
    }
    Ok(finish(profile, iterations, &samples, SgmStatus::TimeLimit, max_gain))
}

/// Parameters shared by the three solution methods.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcedureConfig {
    pub delta_f: f64,
    pub mu: f64,
    pub delta_0: f64,
    /// Oracle gap; defaults to `(1 - μ) 4 δ_f / 5`.
    pub delta_gap: Option<f64>,
    pub time_limit_s: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for ProcedureConfig {
    fn default() -> Self {
        Self {
            delta_f: 1e-4,
            mu: 0.5,
            delta_0: 0.05,
            delta_gap: None,
            time_limit_s: 900.0,
            max_iterations: 10_000,
            seed: 0,
        }
    }
}

impl ProcedureConfig {
    pub fn delta_gap(&self) -> f64 {
        self.delta_gap.unwrap_or_else(|| default_delta_gap(self.delta_f, self.mu))
    }

    fn check(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::Parameter(format!("mu must lie in (0, 1), got {}", self.mu)));
        }
        if !(self.delta_f > 0.0 && self.delta_f.is_finite()) {
            return Err(Error::Parameter(format!("delta_f must be positive, got {}", self.delta_f)));
        }
        Ok(())
    }

    /// SGM settings for target `(1 - μ) δ_f` with the given time budget.
    fn sgm(&self, time_limit_s: f64) -> SgmConfig {
        let target = (1.0 - self.mu) * self.delta_f;
        SgmConfig {
            target,
            delta_gap: self.delta_gap(),
            delta_m: target / 10.0,
            max_iterations: self.max_iterations,
            time_limit_s,
            seed: self.seed,
        }
    }
}

/// SGM on the original game with target `δ_f`.
pub fn sgm_procedure(inst: &GciInstance, cfg: &ProcedureConfig) -> Result<SgmOutcome> {
    cfg.check()?;
    let config = SgmConfig {
        target: cfg.delta_f,
        delta_gap: cfg.delta_gap(),
        delta_m: cfg.delta_f / 10.0,
        max_iterations: cfg.max_iterations,
        time_limit_s: cfg.time_limit_s,
        seed: cfg.seed,
    };
    run_sgm(inst, &config, None)
}

/// One approximation at `μ δ_f / 2`, then SGM with target `(1 - μ) δ_f`.
pub fn direct_procedure(inst: &GciInstance, cfg: &ProcedureConfig) -> Result<(MixedProfile, SgmOutcome)> {
    cfg.check()?;
    let approx = approximate_ipg(inst, cfg.mu * cfg.delta_f / 2.0)?;
    let outcome = run_sgm(&approx, &cfg.sgm(cfg.time_limit_s), None)?;
    Ok((outcome.profile.clone(), outcome))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoLevelOutcome {
    pub profile: MixedProfile,
    pub stage1: SgmOutcome,
    /// Absent when stage 1 did not solve.
    pub stage2: Option<SgmOutcome>,
}

impl TwoLevelOutcome {
    pub fn status(&self) -> SgmStatus {
        self.stage2.as_ref().map_or(self.stage1.status, |s| s.status)
    }

    pub fn wall_time_s(&self) -> f64 {
        self.stage1.wall_time_s + self.stage2.as_ref().map_or(0.0, |s| s.wall_time_s)
    }
}

/// Coarse approximation at `δ_0`, then the fine one at `μ δ_f / 2` warm
/// started from the coarse equilibrium.
pub fn two_level_procedure(inst: &GciInstance, cfg: &ProcedureConfig) -> Result<TwoLevelOutcome> {
    cfg.check()?;
    let fine = cfg.mu * cfg.delta_f / 2.0;
    if !(cfg.delta_0 > fine) {
        return Err(Error::Parameter(format!("delta_0 must exceed mu * delta_f / 2 = {fine}, got {}", cfg.delta_0)));
    }
    let coarse = approximate_ipg(inst, cfg.delta_0)?;
    let stage1 = run_sgm(&coarse, &cfg.sgm(cfg.time_limit_s), None)?;
    if stage1.status != SgmStatus::Solved {
        return Ok(TwoLevelOutcome { profile: stage1.profile.clone(), stage1, stage2: None });
    }
    let remaining = (cfg.time_limit_s - stage1.wall_time_s).max(1e-3);
    let fine_game = approximate_ipg(inst, fine)?;
    let stage2 = run_sgm(&fine_game, &cfg.sgm(remaining), Some(&stage1.profile))?;
    Ok(TwoLevelOutcome { profile: stage2.profile.clone(), stage1, stage2: Some(stage2) })
}

/// Largest regret of `profile` in the original game, each measured with the
/// exact-cost oracle at gap `delta_gap`.
pub fn certify_equilibrium(inst: &GciInstance, profile: &MixedProfile, delta_gap: f64) -> Result<f64> {
    profile.validate(inst)?;
    (0..inst.num_players())
        .map(|p| regret(inst, profile, p, delta_gap))
        .try_fold(f64::NEG_INFINITY, |acc, r| r.map(|r| acc.max(r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{generate_instance, payoff, CostKind, MarketParams, PlayerParams};
    use crate::pwl::verify_corridor;

    fn degenerate() -> GciInstance {
        // Tiny budget and quantity caps with huge setup costs: staying idle is
        // the only sensible strategy.
        let markets = vec![MarketParams { q: 100.0, m_slope: 1.0, r: 0.1 }];
        let pl = PlayerParams {
            c_prod: 1.0,
            c_setup: vec![1e6],
            c_lin: vec![1.0],
            c_quad: vec![1.0],
            alpha: 1.0,
            damage: 50.0,
            budget: 1e-12,
            quantity_cap: vec![1e-9],
        };
        GciInstance::new(markets, vec![pl.clone(), pl], CostKind::Log, None).unwrap()
    }

    #[test]
    fn approximation_stays_in_corridor() {
        for kind in CostKind::ALL {
            let inst = generate_instance(3, 2, kind, 12).unwrap();
            let approx = approximate_ipg(&inst, 0.01).unwrap();
            for p in 0..3 {
                let pl = inst.player(p);
                let spec = cost_spec(kind, pl.alpha, inst.security_cap(p), 0.01).unwrap();
                assert!(verify_corridor(approx.h_hat(p), &spec, 5001).unwrap() <= 0.01 + 1e-9);
            }
        }
        assert!(approximate_ipg(&generate_instance(2, 1, CostKind::Log, 0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn approximation_changes_only_the_cost() {
        let inst = generate_instance(2, 2, CostKind::Ncf, 3).unwrap();
        let approx = approximate_ipg(&inst, 0.01).unwrap();
        let prof = vec![
            PureStrategy { quantities: vec![20.0, 10.0], entry: vec![true, true], security: 0.5 * inst.security_cap(0) },
            PureStrategy { quantities: vec![0.0, 30.0], entry: vec![false, true], security: 0.2 * inst.security_cap(1) },
        ];
        for p in 0..2 {
            let diff = payoff(&inst, p, &prof).unwrap() - payoff(&approx, p, &prof).unwrap();
            let s = prof[p].security;
            let h = inst.security_cost(p, s) - approx.security_cost(p, s);
            assert!((diff + h).abs() < 1e-9);
        }
    }

    #[test]
    fn coarser_tolerance_needs_fewer_pieces() {
        let inst = generate_instance(2, 2, CostKind::Log, 9).unwrap();
        let coarse = approximate_ipg(&inst, 0.05).unwrap().piece_counts();
        let fine = approximate_ipg(&inst, 2.5e-5).unwrap().piece_counts();
        for (c, f) in coarse.iter().zip(&fine) {
            assert!(c < f, "{coarse:?} vs {fine:?}");
        }
    }

    #[test]
    fn initial_samples_are_null_best_responses() {
        let inst = generate_instance(3, 2, CostKind::Isr, 2).unwrap();
        let xs = initialize_samples(&inst, 1e-5).unwrap();
        let zero = OpponentAggregates::zero(2);
        for (p, x) in xs.iter().enumerate() {
            x.validate(&inst, p).unwrap();
            let br = best_response_to_aggregates(&inst, p, &zero, 1e-5, &[]).unwrap();
            assert_eq!(&br.strategy, x);
        }
    }

    #[test]
    fn degenerate_instance_stops_immediately() {
        let inst = degenerate();
        let out = run_sgm(&inst, &SgmConfig::for_target(1e-4), None).unwrap();
        assert_eq!(out.status, SgmStatus::Solved);
        assert_eq!(out.iterations, 1);
        assert!(certify_equilibrium(&inst, &out.profile, 1e-5).unwrap() <= 1e-5 + 1e-9);
    }

    #[test]
    fn solves_small_instances() {
        for kind in CostKind::ALL {
            let inst = generate_instance(2, 2, kind, 31).unwrap();
            let cfg = SgmConfig { delta_gap: 4e-5, ..SgmConfig::for_target(1e-4) };
            let out = run_sgm(&inst, &cfg, None).unwrap();
            assert_eq!(out.status, SgmStatus::Solved, "{kind}");
            assert!(certify_equilibrium(&inst, &out.profile, 4e-5).unwrap() <= 1e-4 + 1e-9);
            // Warm starting from the answer stops without new samples.
            let again = run_sgm(&inst, &cfg, Some(&out.profile)).unwrap();
            assert_eq!(again.status, SgmStatus::Solved);
            assert_eq!((again.iterations, again.strategies_added.iter().sum::<usize>()), (1, 0));
        }
    }

    #[test]
    fn perturbed_profile_has_positive_regret() {
        let inst = generate_instance(2, 2, CostKind::Log, 31).unwrap();
        let out = run_sgm(&inst, &SgmConfig { delta_gap: 4e-5, ..SgmConfig::for_target(1e-4) }, None).unwrap();
        let mut bad = out.profile.clone();
        let cap = inst.security_cap(0);
        for x in bad.players[0].support.iter_mut() {
            x.security = if x.security + 0.1 * cap <= cap { x.security + 0.1 * cap } else { x.security - 0.1 * cap };
        }
        assert!(certify_equilibrium(&inst, &bad, 4e-5).unwrap() > 1e-3);
    }

    #[test]
    fn procedure_parameters_are_checked() {
        let inst = generate_instance(2, 2, CostKind::Log, 1).unwrap();
        let bad_mu = ProcedureConfig { mu: 1.0, ..ProcedureConfig::default() };
        assert!(direct_procedure(&inst, &bad_mu).is_err());
        let bad_delta0 = ProcedureConfig { delta_0: 2.5e-5, ..ProcedureConfig::default() };
        assert!(two_level_procedure(&inst, &bad_delta0).is_err());
        assert!(SgmConfig { delta_gap: 2e-4, ..SgmConfig::for_target(1e-4) }.validate().is_err());
        assert!(SgmConfig { delta_m: 1e-4, ..SgmConfig::for_target(1e-4) }.validate().is_err());
    }

    #[test]
    fn status_strings_round_trip() {
        for s in [SgmStatus::Solved, SgmStatus::TimeLimit, SgmStatus::SolverExhausted] {
            assert_eq!(s.as_str().parse::<SgmStatus>().unwrap(), s);
        }
    }
}
