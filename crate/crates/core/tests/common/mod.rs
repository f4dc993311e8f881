//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use pwl_sgm::bestresponse::lipschitz_bound;
use pwl_sgm::game::{
    generate_instance, payoff, payoff_against, CostKind, GciInstance, MixedProfile, MixedStrategy, OpponentAggregates,
    PureStrategy,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn kind_of(k: usize) -> CostKind {
    CostKind::ALL[k % 3]
}

/// Instance with `m ∈ 2..=max_m` and `n ∈ 1..=max_n` drawn from `seed`.
pub fn random_instance(seed: u64, max_m: usize, max_n: usize) -> GciInstance {
    let mut r = rng(seed ^ 0xa11ce);
    let m = r.gen_range(2..=max_m);
    let n = r.gen_range(1..=max_n);
    generate_instance(m, n, kind_of(seed as usize), seed).unwrap()
}

/// Feasible pure strategy; market entry is random even at zero quantity.
pub fn random_pure<R: Rng>(inst: &GciInstance, p: usize, r: &mut R) -> PureStrategy {
    let pl = inst.player(p);
    let entry: Vec<bool> = (0..inst.num_markets()).map(|_| r.gen_bool(0.7)).collect();
    let quantities = entry.iter().zip(&pl.quantity_cap).map(|(&b, &c)| if b { r.gen_range(0.0..=c) } else { 0.0 }).collect();
    PureStrategy { quantities, entry, security: r.gen_range(0.0..=inst.security_cap(p)) }
}

pub fn random_mixed<R: Rng>(inst: &GciInstance, p: usize, support: usize, r: &mut R) -> MixedStrategy {
    let support_strats: Vec<PureStrategy> = (0..support).map(|_| random_pure(inst, p, r)).collect();
    let raw: Vec<f64> = (0..support).map(|_| r.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    MixedStrategy { support: support_strats, probs: raw.iter().map(|w| w / total).collect() }
}

pub fn random_profile<R: Rng>(inst: &GciInstance, max_support: usize, r: &mut R) -> MixedProfile {
    MixedProfile::new((0..inst.num_players()).map(|p| random_mixed(inst, p, r.gen_range(1..=max_support), r)).collect())
}

/// Expected payoff of `own` by summing over every opponent pure profile.
pub fn enumerated_payoff(inst: &GciInstance, p: usize, own: &PureStrategy, profile: &MixedProfile) -> f64 {
    let m = inst.num_players();
    let others: Vec<usize> = (0..m).filter(|&q| q != p).collect();
    let mut pos = vec![0usize; m];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        let pure: Vec<PureStrategy> = (0..m)
            .map(|q| {
                if q == p {
                    own.clone()
                } else {
                    weight *= profile.players[q].probs[pos[q]];
                    profile.players[q].support[pos[q]].clone()
                }
            })
            .collect();
        total += weight * payoff(inst, p, &pure).unwrap();
        let mut moved = false;
        for &q in others.iter().rev() {
            pos[q] += 1;
            if pos[q] < profile.players[q].support.len() {
                moved = true;
                break;
            }
            pos[q] = 0;
        }
        if !moved {
            return total;
        }
    }
}

/// Best payoff of a single-market player over a `grid × grid` lattice of
/// security levels and quantities, with the slack that bounds how far the
/// lattice optimum can sit below the true one.
pub fn grid_best_response(inst: &GciInstance, p: usize, agg: &OpponentAggregates, grid: usize) -> (f64, f64) {
    assert_eq!(inst.num_markets(), 1);
    let cap_s = inst.security_cap(p);
    let cap_q = inst.player(p).quantity_cap[0];
    let at = |s: f64, q: f64, b: bool| {
        payoff_against(inst, p, &PureStrategy { quantities: vec![q], entry: vec![b], security: s }, agg)
    };
    let steps = (grid - 1) as f64;
    let mut best = f64::NEG_INFINITY;
    let mut curvature: f64 = 0.0;
    for k in 0..grid {
        let s = cap_s * k as f64 / steps;
        // The payoff is an exact quadratic in the quantity once entered.
        let idle = at(s, 0.0, false);
        let f0 = at(s, 0.0, true);
        let f1 = at(s, 1.0, true);
        let f2 = at(s, 2.0, true);
        let d = -(f2 - 2.0 * f1 + f0) / 2.0;
        let a = f1 - f0 + d;
        curvature = curvature.max(d);
        best = best.max(idle);
        for l in 0..grid {
            let q = cap_q * l as f64 / steps;
            best = best.max(f0 + a * q - d * q * q);
        }
    }
    let h_q = cap_q / steps;
    let slack = lipschitz_bound(inst, p) * cap_s / steps + curvature * h_q * h_q / 4.0;
    (best, slack)
}
