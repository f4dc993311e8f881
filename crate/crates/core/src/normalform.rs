//! Finite sampled games and their mixed equilibria.
//!
//! Equilibria are found by support enumeration in order of increasing total
//! support size, so small supports are preferred. Pure profiles come first,
//! searched depth first in lexicographic order. A mixed support profile is
//! skipped when one of its strategies is strictly dominated given the other
//! supports; otherwise its indifference conditions are solved and the
//! candidate is accepted only if its regret inside the finite game is at
//! most `delta_m`.
//!
//! Sampled games of a [`GameView`] are stored in separable form: a player's
//! payoff is affine in every opponent's quantities and security level, so
//! `u_p(x) = base_p(x_p) + Σ_{q≠p} w_pq(x_p, x_q)`. The indifference
//! conditions are then linear for any number of players. Games given by
//! general tensors with three or more players fall back to
//! Levenberg-Marquardt from several starts.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::{payoff_against, GameView, OpponentAggregates, PureStrategy};

const PROB_TOL: f64 = 1e-9;

/// Relative cost perturbations tried in turn to keep pivoting off degenerate
/// bases; sampled payoffs are affine in the opponent and hence of low rank.
const LEMKE_JITTER: [f64; 3] = [1e-10, 1e-8, 1e-12];

#[derive(Clone, Debug, PartialEq)]
enum Payoffs {
    /// Row-major tensors with player 0 as the slowest index.
    Dense { strides: Vec<usize>, tensors: Vec<Vec<f64>> },
    /// `base[p][i]` and `weight[p][q][i][j]`; `weight[p][p]` is empty.
    Separable { base: Vec<Vec<f64>>, weight: Vec<Vec<Vec<Vec<f64>>>> },
}

/// A finite game over sampled pure strategies.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledGame {
    strategies: Vec<Vec<PureStrategy>>,
    shape: Vec<usize>,
    payoffs: Payoffs,
}

impl SampledGame {
    /// A game given by one row-major tensor per player (player 0 slowest),
    /// without underlying strategies.
    pub fn from_tensors(shape: Vec<usize>, tensors: Vec<Vec<f64>>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Validation(format!("every player needs a strategy, shape {shape:?}")));
        }
        let size: usize = shape.iter().product();
        if tensors.len() != shape.len() || tensors.iter().any(|t| t.len() != size) {
            return Err(Error::Validation("payoff tensors do not match the game shape".into()));
        }
        if tensors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("payoff tensor holds a non-finite entry".into()));
        }
        if shape.len() == 2 {
            // Two-player tensors are separable with a zero base.
            let (k0, k1) = (shape[0], shape[1]);
            let w01 = (0..k0).map(|i| tensors[0][i * k1..(i + 1) * k1].to_vec()).collect();
            let w10 = (0..k1).map(|j| (0..k0).map(|i| tensors[1][i * k1 + j]).collect()).collect();
            let weight = vec![vec![Vec::new(), w01], vec![w10, Vec::new()]];
            let base = vec![vec![0.0; k0], vec![0.0; k1]];
            return Ok(Self { strategies: Vec::new(), shape, payoffs: Payoffs::Separable { base, weight } });
        }
        let mut strides = vec![1; shape.len()];
        for p in (0..shape.len() - 1).rev() {
            strides[p] = strides[p + 1] * shape[p + 1];
        }
        Ok(Self { strategies: Vec::new(), shape, payoffs: Payoffs::Dense { strides, tensors } })
    }

    pub fn num_players(&self) -> usize {
        self.shape.len()
    }

    pub fn num_strategies(&self, p: usize) -> usize {
        self.shape[p]
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Pure strategies of `p`; empty for games built from tensors.
    pub fn strategies(&self, p: usize) -> &[PureStrategy] {
        self.strategies.get(p).map_or(&[], Vec::as_slice)
    }

    /// Payoff of `p` on the pure profile `idx`.
    pub fn payoff(&self, p: usize, idx: &[usize]) -> f64 {
        match &self.payoffs {
            Payoffs::Dense { strides, tensors } => {
                tensors[p][idx.iter().zip(strides).map(|(i, s)| i * s).sum::<usize>()]
            }
            Payoffs::Separable { base, weight } => {
                let i = idx[p];
                base[p][i] + (0..idx.len()).filter(|&q| q != p).map(|q| weight[p][q][i][idx[q]]).sum::<f64>()
            }
        }
    }

    /// Payoff of every pure strategy of `p` against the opponents' mixed
    /// strategies in `profile`.
    pub fn deviation_payoffs(&self, profile: &SampledMixedProfile, p: usize) -> Vec<f64> {
        let sparse: Vec<Vec<(usize, f64)>> = profile
            .probs
            .iter()
            .map(|w| w.iter().copied().enumerate().filter(|&(_, x)| x > 0.0).collect())
            .collect();
        self.mixed_payoffs(p, &sparse)
    }

    /// `u_p(i)` for every `i`, opponents mixing as in `sparse` (the entry of
    /// `p` is ignored).
    fn mixed_payoffs(&self, p: usize, sparse: &[Vec<(usize, f64)>]) -> Vec<f64> {
        let m = self.num_players();
        match &self.payoffs {
            Payoffs::Separable { base, weight } => (0..self.shape[p])
                .map(|i| {
                    base[p][i]
                        + (0..m)
                            .filter(|&q| q != p)
                            .map(|q| sparse[q].iter().map(|&(j, w)| w * weight[p][q][i][j]).sum::<f64>())
                            .sum::<f64>()
                })
                .collect(),
            Payoffs::Dense { strides, tensors } => {
                let mut out = vec![0.0; self.shape[p]];
                let others: Vec<usize> = (0..m).filter(|&q| q != p).collect();
                let mut pos = vec![0usize; m];
                loop {
                    let mut w = 1.0;
                    let mut at = 0;
                    for &q in &others {
                        let (j, x) = sparse[q][pos[q]];
                        w *= x;
                        at += j * strides[q];
                    }
                    for (i, o) in out.iter_mut().enumerate() {
                        *o += w * tensors[p][at + i * strides[p]];
                    }
                    if !advance(&mut pos, &others, |q| sparse[q].len()) {
                        break;
                    }
                }
                out
            }
        }
    }

    /// Whether `k` beats `i` for `p` against every profile drawn from the
    /// opponents' `supports`.
    fn strictly_beats(&self, p: usize, k: usize, i: usize, supports: &[Vec<usize>]) -> bool {
        let m = self.num_players();
        match &self.payoffs {
            Payoffs::Separable { base, weight } => {
                let worst: f64 = (0..m)
                    .filter(|&q| q != p)
                    .map(|q| {
                        supports[q].iter().map(|&j| weight[p][q][k][j] - weight[p][q][i][j]).fold(f64::INFINITY, f64::min)
                    })
                    .sum();
                base[p][k] - base[p][i] + worst > 0.0
            }
            Payoffs::Dense { strides, tensors } => {
                let others: Vec<usize> = (0..m).filter(|&q| q != p).collect();
                let mut pos = vec![0usize; m];
                loop {
                    let at: usize = others.iter().map(|&q| supports[q][pos[q]] * strides[q]).sum();
                    if tensors[p][at + k * strides[p]] <= tensors[p][at + i * strides[p]] {
                        return false;
                    }
                    if !advance(&mut pos, &others, |q| supports[q].len()) {
                        return true;
                    }
                }
            }
        }
    }
}

/// Odometer step over `pos[q]` for `q` in `dims` (last one fastest).
fn advance(pos: &mut [usize], dims: &[usize], len: impl Fn(usize) -> usize) -> bool {
    for &q in dims.iter().rev() {
        pos[q] += 1;
        if pos[q] < len(q) {
            return true;
        }
        pos[q] = 0;
    }
    false
}

/// One probability vector per player over its sampled strategies.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledMixedProfile {
    pub probs: Vec<Vec<f64>>,
}

impl SampledMixedProfile {
    pub fn validate(&self, game: &SampledGame) -> Result<()> {
        if self.probs.len() != game.num_players() {
            return Err(Error::Validation("profile has the wrong number of players".into()));
        }
        for (p, w) in self.probs.iter().enumerate() {
            if w.len() != game.num_strategies(p) {
                return Err(Error::Validation(format!(
                    "player {p} has {} probabilities, expected {}",
                    w.len(),
                    game.num_strategies(p)
                )));
            }
            let total: f64 = w.iter().sum();
            if w.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > PROB_TOL {
                return Err(Error::Validation(format!("player {p} probabilities are not on the simplex")));
            }
        }
        Ok(())
    }

    pub fn total_support(&self) -> usize {
        self.probs.iter().map(|w| w.iter().filter(|&&x| x > 0.0).count()).sum()
    }

    /// Pads every vector with zeros up to the game shape.
    pub fn extended_to(&self, game: &SampledGame) -> Option<Self> {
        if self.probs.len() != game.num_players() {
            return None;
        }
        let mut probs = self.probs.clone();
        for (p, w) in probs.iter_mut().enumerate() {
            if w.len() > game.num_strategies(p) {
                return None;
            }
            w.resize(game.num_strategies(p), 0.0);
        }
        Some(Self { probs })
    }
}

/// The finite game of `view` restricted to the strategy lists.
pub fn build_sampled_game<V: GameView + ?Sized>(view: &V, strategies: Vec<Vec<PureStrategy>>) -> Result<SampledGame> {
    let inst = view.instance();
    let m = inst.num_players();
    if strategies.len() != m {
        return Err(Error::Validation(format!("got strategy lists for {} players, expected {m}", strategies.len())));
    }
    for (p, list) in strategies.iter().enumerate() {
        if list.is_empty() {
            return Err(Error::Validation(format!("player {p} has no sampled strategy")));
        }
        list.iter().try_for_each(|x| x.validate(inst, p))?;
    }
    let n = inst.num_markets();
    let zero = OpponentAggregates::zero(n);
    let base: Vec<Vec<f64>> =
        (0..m).map(|p| strategies[p].iter().map(|x| payoff_against(view, p, x, &zero)).collect()).collect();
    let mut weight = vec![vec![Vec::new(); m]; m];
    for p in 0..m {
        for q in (0..m).filter(|&q| q != p) {
            weight[p][q] = strategies[p]
                .iter()
                .zip(&base[p])
                .map(|(x, &b)| {
                    strategies[q]
                        .iter()
                        .map(|y| {
                            let agg = OpponentAggregates { mean_quantity: y.quantities.clone(), mean_security_sum: y.security };
                            payoff_against(view, p, x, &agg) - b
                        })
                        .collect()
                })
                .collect();
        }
    }
    if base.iter().flatten().chain(weight.iter().flatten().flatten().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Validation("sampled payoffs are not finite".into()));
    }
    let shape = strategies.iter().map(Vec::len).collect();
    Ok(SampledGame { strategies, shape, payoffs: Payoffs::Separable { base, weight } })
}

/// Best pure deviation gain of `p` inside the finite game.
pub fn sampled_regret(game: &SampledGame, profile: &SampledMixedProfile, p: usize) -> f64 {
    let u = game.deviation_payoffs(profile, p);
    let current: f64 = u.iter().zip(&profile.probs[p]).map(|(a, w)| a * w).sum();
    u.iter().copied().fold(f64::NEG_INFINITY, f64::max) - current
}

fn max_regret(game: &SampledGame, profile: &SampledMixedProfile) -> f64 {
    (0..game.num_players()).map(|p| sampled_regret(game, profile, p)).fold(f64::NEG_INFINITY, f64::max)
}

/// Search limits of [`solve_sampled_ne_with`].
#[derive(Clone, Debug)]
pub struct NeSolverConfig {
    /// Mixed support profiles examined before giving up.
    pub max_candidates: usize,
    /// Nodes of the pure-profile search before giving up.
    pub max_pure_nodes: usize,
    /// Mixed support profiles examined before separable games switch to
    /// complementary pivoting; `None` keeps enumerating.
    pub pivot_after: Option<usize>,
    pub deadline: Option<Instant>,
    /// Random starts per support for dense games with three or more players.
    pub multistarts: usize,
    pub seed: u64,
}

impl Default for NeSolverConfig {
    fn default() -> Self {
        Self { max_candidates: 200_000, max_pure_nodes: 2_000_000,
            pivot_after: Some(2_000),
            deadline: None, multistarts: 10, seed: 0x5eed }
    }
}

/// Mixed equilibrium of `game` with regret at most `delta_m` for every player.
pub fn solve_sampled_ne(
    game: &SampledGame,
    delta_m: f64,
    warm_start: Option<&SampledMixedProfile>,
) -> Result<SampledMixedProfile> {
    solve_sampled_ne_with(game, delta_m, warm_start, &NeSolverConfig::default())
}

pub fn solve_sampled_ne_with(
    game: &SampledGame,
    delta_m: f64,
    warm_start: Option<&SampledMixedProfile>,
    config: &NeSolverConfig,
) -> Result<SampledMixedProfile> {
    if !(delta_m >= 0.0) {
        return Err(Error::Parameter(format!("delta_M must be nonnegative, got {delta_m}")));
    }
    let accept = delta_m + PROB_TOL;
    if let Some(warm) = warm_start.and_then(|w| w.extended_to(game)) {
        if warm.validate(game).is_ok() && max_regret(game, &warm) <= accept {
            return Ok(warm);
        }
    }
    let mut solver = SupportSolver { game, accept, config, candidates: 0, nodes: 0, pivoted: false };
    // A truncated pure search still leaves the mixed supports to try.
    match solver.pure_search() {
        Ok(Some(found)) => return Ok(found),
        Ok(None) | Err(Error::SolverExhausted) => {}
        Err(e) => return Err(e),
    }
    let m = game.num_players();
    let max_total: usize = game.shape().iter().sum();
    for total in m + 1..=max_total {
        for sizes in size_vectors(game.shape(), total) {
            if let Some(found) = solver.scan_sizes(&sizes)? {
                return Ok(found);
            }
        }
    }
    // Enumeration misses equilibria of degenerate games.
    solver.pivot().ok_or(Error::SolverExhausted)
}

/// Support size vectors with the given sum, most balanced first.
fn size_vectors(shape: &[usize], total: usize) -> Vec<Vec<usize>> {
    fn rec(shape: &[usize], left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let p = cur.len();
        if p == shape.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let rest = shape.len() - p - 1;
        for k in 1..=shape[p].min(left.saturating_sub(rest)) {
            cur.push(k);
            rec(shape, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(shape, total, &mut Vec::new(), &mut out);
    let imbalance = |v: &Vec<usize>| v.iter().max().unwrap() - v.iter().min().unwrap();
    out.sort_by(|a, b| imbalance(a).cmp(&imbalance(b)).then_with(|| a.cmp(b)));
    out
}

/// Lexicographic successor of a `k`-subset of `0..n`.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for t in i + 1..k {
                c[t] = c[t - 1] + 1;
            }
            return true;
        }
    }
    false
}

struct SupportSolver<'a> {
    game: &'a SampledGame,
    accept: f64,
    config: &'a NeSolverConfig,
    candidates: usize,
    nodes: usize,
    pivoted: bool,
}

impl SupportSolver<'_> {
    fn check_deadline(&self) -> Result<()> {
        match self.config.deadline {
            Some(d) if Instant::now() >= d => Err(Error::TimeLimit),
            _ => Ok(()),
        }
    }

    fn pure_profile(&self, idx: &[usize]) -> SampledMixedProfile {
        SampledMixedProfile {
            probs: idx
                .iter()
                .enumerate()
                .map(|(p, &i)| (0..self.game.num_strategies(p)).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    /// Lexicographically first pure profile with regret within tolerance.
    fn pure_search(&mut self) -> Result<Option<SampledMixedProfile>> {
        let g = self.game;
        let m = g.num_players();
        match &g.payoffs {
            Payoffs::Separable { base, weight } => {
                // lower[p][q][i][k]: smallest gain of k over i caused by q.
                let lower: Vec<Vec<Vec<Vec<f64>>>> = (0..m)
                    .map(|p| {
                        (0..m)
                            .map(|q| {
                                if q == p {
                                    return Vec::new();
                                }
                                (0..g.shape[p])
                                    .map(|i| {
                                        (0..g.shape[p])
                                            .map(|k| {
                                                (0..g.shape[q])
                                                    .map(|j| weight[p][q][k][j] - weight[p][q][i][j])
                                                    .fold(f64::INFINITY, f64::min)
                                            })
                                            .collect()
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect();
                let mut idx = vec![0usize; m];
                let found = self.pure_dfs(0, &mut idx, base, weight, &lower)?;
                Ok(found.then(|| self.pure_profile(&idx)))
            }
            Payoffs::Dense { .. } => {
                let all: Vec<usize> = (0..m).collect();
                let mut idx = vec![0usize; m];
                loop {
                    self.nodes += 1;
                    if self.nodes > self.config.max_pure_nodes {
                        return Err(Error::SolverExhausted);
                    }
                    if self.nodes % 4096 == 0 {
                        self.check_deadline()?;
                    }
                    let prof = self.pure_profile(&idx);
                    if max_regret(g, &prof) <= self.accept {
                        return Ok(Some(prof));
                    }
                    if !advance(&mut idx, &all, |q| g.shape[q]) {
                        return Ok(None);
                    }
                }
            }
        }
    }

    /// Assigns players `level..` in lexicographic order, pruning a partial
    /// profile once an assigned player has a deviation that gains more than
    /// the tolerance against every completion.
    fn pure_dfs(
        &mut self,
        level: usize,
        idx: &mut [usize],
        base: &[Vec<f64>],
        weight: &[Vec<Vec<Vec<f64>>>],
        lower: &[Vec<Vec<Vec<f64>>>],
    ) -> Result<bool> {
        let g = self.game;
        let m = g.num_players();
        for choice in 0..g.shape[level] {
            self.nodes += 1;
            if self.nodes > self.config.max_pure_nodes {
                return Err(Error::SolverExhausted);
            }
            if self.nodes % 4096 == 0 {
                self.check_deadline()?;
            }
            idx[level] = choice;
            let viable = (0..=level).all(|p| {
                let i = idx[p];
                (0..g.shape[p]).filter(|&k| k != i).all(|k| {
                    let mut gain = base[p][k] - base[p][i];
                    for q in (0..m).filter(|&q| q != p) {
                        gain += if q <= level {
                            weight[p][q][k][idx[q]] - weight[p][q][i][idx[q]]
                        } else {
                            lower[p][q][i][k]
                        };
                    }
                    gain <= self.accept
                })
            });
            if viable && (level + 1 == m || self.pure_dfs(level + 1, idx, base, weight, lower)?) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn scan_sizes(&mut self, sizes: &[usize]) -> Result<Option<SampledMixedProfile>> {
        let m = sizes.len();
        let mut supports: Vec<Vec<usize>> = sizes.iter().map(|&k| (0..k).collect()).collect();
        loop {
            self.candidates += 1;
            if self.config.pivot_after.is_some_and(|k| self.candidates > k) {
                if let Some(found) = self.pivot() {
                    return Ok(Some(found));
                }
            }
            if self.candidates > self.config.max_candidates {
                return Err(Error::SolverExhausted);
            }
            if self.candidates % 64 == 0 {
                self.check_deadline()?;
            }
            if !self.conditionally_dominated(&supports) {
                if let Some(found) = self.try_support(&supports) {
                    return Ok(Some(found));
                }
            }
            let mut moved = false;
            for p in (0..m).rev() {
                if next_combination(&mut supports[p], self.game.num_strategies(p)) {
                    moved = true;
                    break;
                }
                supports[p] = (0..sizes[p]).collect();
            }
            if !moved {
                return Ok(None);
            }
        }
    }

    /// Some support strategy is strictly beaten by another pure strategy
    /// against every opponent profile drawn from the supports.
    fn conditionally_dominated(&self, supports: &[Vec<usize>]) -> bool {
        let g = self.game;
        (0..g.num_players()).any(|p| {
            supports[p]
                .iter()
                .any(|&i| (0..g.num_strategies(p)).filter(|&k| k != i).any(|k| g.strictly_beats(p, k, i, supports)))
        })
    }

    fn try_support(&self, supports: &[Vec<usize>]) -> Option<SampledMixedProfile> {
        match &self.game.payoffs {
            Payoffs::Separable { base, weight } => {
                let weights = solve_separable(supports, base, weight, None)?;
                self.accept_if_equilibrium(supports, &weights)
            }
            Payoffs::Dense { .. } => {
                let sizes: Vec<usize> = supports.iter().map(Vec::len).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(
                    self.config.seed ^ (self.candidates as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                );
                for start in 0..self.config.multistarts.max(1) {
                    let init: Vec<Vec<f64>> = sizes
                        .iter()
                        .map(|&k| {
                            if start == 0 {
                                vec![1.0 / k as f64; k]
                            } else {
                                let w: Vec<f64> = (0..k).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
                                let s: f64 = w.iter().sum();
                                w.into_iter().map(|x| x / s).collect()
                            }
                        })
                        .collect();
                    if let Some(weights) = self.levenberg_marquardt(supports, init) {
                        if let Some(found) = self.accept_if_equilibrium(supports, &weights) {
                            return Some(found);
                        }
                    }
                }
                None
            }
        }
    }

    /// Lemke's algorithm on a separable game, once per solve. The support it
    /// finds is re-solved by the linear system to clean up rounding and the
    /// perturbation.
    fn pivot(&mut self) -> Option<SampledMixedProfile> {
        if std::mem::replace(&mut self.pivoted, true) {
            return None;
        }
        let Payoffs::Separable { base, weight } = &self.game.payoffs else { return None };
        LEMKE_JITTER.iter().find_map(|&jitter| {
            let sigma = lemke_polymatrix(&self.game.shape, base, weight, jitter)?;
            let supports: Vec<Vec<usize>> = sigma
                .iter()
                .map(|w| {
                    let top = w.iter().copied().fold(0.0, f64::max);
                    (0..w.len()).filter(|&i| w[i] > 1e-9 * top).collect()
                })
                .collect();
            solve_separable(&supports, base, weight, Some(&sigma))
                .and_then(|w| self.accept_if_equilibrium(&supports, &w))
                .or_else(|| {
                    let all: Vec<Vec<usize>> = sigma.iter().map(|w| (0..w.len()).collect()).collect();
                    self.accept_if_equilibrium(&all, &sigma)
                })
        })
    }

    /// Indifference residuals and their Jacobian for a dense game.
    fn residuals(&self, supports: &[Vec<usize>], sigma: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let g = self.game;
        let Payoffs::Dense { strides, tensors } = &g.payoffs else {
            unreachable!("residuals are only used for dense games")
        };
        let m = g.num_players();
        let offsets = offsets(supports);
        let dim: usize = supports.iter().map(Vec::len).sum();
        let mut r = DVector::zeros(dim);
        let mut jac = DMatrix::zeros(dim, dim);
        let mut row = 0;
        for p in 0..m {
            let others: Vec<usize> = (0..m).filter(|&q| q != p).collect();
            let k = supports[p].len();
            let mut u = vec![0.0; k];
            let mut du = vec![vec![0.0; dim]; k];
            let mut pos = vec![0usize; m];
            loop {
                let at: usize = others.iter().map(|&q| supports[q][pos[q]] * strides[q]).sum();
                for (t, &i) in supports[p].iter().enumerate() {
                    let v = tensors[p][at + i * strides[p]];
                    u[t] += others.iter().fold(v, |w, &q| w * sigma[q][pos[q]]);
                    for &q in &others {
                        let d = others.iter().filter(|&&o| o != q).fold(v, |w, &o| w * sigma[o][pos[o]]);
                        du[t][offsets[q] + pos[q]] += d;
                    }
                }
                if !advance(&mut pos, &others, |q| supports[q].len()) {
                    break;
                }
            }
            for t in 1..k {
                r[row] = u[t] - u[0];
                for x in 0..dim {
                    jac[(row, x)] = du[t][x] - du[0][x];
                }
                row += 1;
            }
            r[row] = sigma[p].iter().sum::<f64>() - 1.0;
            for x in 0..k {
                jac[(row, offsets[p] + x)] = 1.0;
            }
            row += 1;
        }
        (r, jac)
    }

    fn levenberg_marquardt(&self, supports: &[Vec<usize>], mut sigma: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
        let Payoffs::Dense { tensors, .. } = &self.game.payoffs else { return None };
        let scale = tensors.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
        let (mut r, mut jac) = self.residuals(supports, &sigma);
        let mut cost = r.norm_squared();
        let mut lambda = 1e-3;
        for _ in 0..60 {
            if cost.sqrt() <= 1e-12 * scale {
                break;
            }
            let jt = jac.transpose();
            let mut normal = &jt * &jac;
            let diag_max = (0..normal.nrows()).map(|i| normal[(i, i)]).fold(0.0f64, f64::max).max(1e-300);
            for i in 0..normal.nrows() {
                normal[(i, i)] += lambda * diag_max;
            }
            let step = normal.cholesky()?.solve(&(-(&jt * &r)));
            let mut trial = sigma.clone();
            for (x, d) in trial.iter_mut().flatten().zip(step.iter()) {
                *x += d;
            }
            let (tr, tj) = self.residuals(supports, &trial);
            let tc = tr.norm_squared();
            if tc < cost {
                let improvement = cost - tc;
                sigma = trial;
                r = tr;
                jac = tj;
                cost = tc;
                lambda = (lambda / 3.0).max(1e-12);
                if improvement <= 1e-30 * scale * scale {
                    break;
                }
            } else {
                lambda *= 4.0;
                if lambda > 1e12 {
                    break;
                }
            }
        }
        Some(sigma)
    }

    fn accept_if_equilibrium(&self, supports: &[Vec<usize>], weights: &[Vec<f64>]) -> Option<SampledMixedProfile> {
        let g = self.game;
        let mut probs = Vec::with_capacity(g.num_players());
        for (p, (sup, w)) in supports.iter().zip(weights).enumerate() {
            if w.iter().any(|&x| !(x >= -PROB_TOL)) {
                return None;
            }
            let mut dense = vec![0.0; g.num_strategies(p)];
            for (&i, &x) in sup.iter().zip(w) {
                dense[i] = x.max(0.0);
            }
            let total: f64 = dense.iter().sum();
            if !(total > 0.0) || (total - 1.0).abs() > 1e-6 {
                return None;
            }
            dense.iter_mut().for_each(|x| *x /= total);
            probs.push(dense);
        }
        let profile = SampledMixedProfile { probs };
        (max_regret(g, &profile) <= self.accept).then_some(profile)
    }
}

fn offsets(supports: &[Vec<usize>]) -> Vec<usize> {
    supports
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.len();
            Some(o)
        })
        .collect()
}

/// Equilibrium of a separable game as a linear complementarity problem
/// `w = Mz + q`, `z = (σ, v)`, with per-player costs rescaled into [1, 2]:
/// costs are at least `v_p` everywhere and equal to it on the support, and
/// every player's weights sum to at least one. Positive costs rule out
/// secondary rays, so Lemke's algorithm ends at a solution unless rounding
/// derails it. Ties in the ratio test are broken lexicographically, and a
/// seeded perturbation of relative size `jitter` on costs and right-hand
/// side makes exact ties rare.
fn lemke_polymatrix(
    shape: &[usize],
    base: &[Vec<f64>],
    weight: &[Vec<Vec<Vec<f64>>>],
    jitter: f64,
) -> Option<Vec<Vec<f64>>> {
    let m = shape.len();
    let offsets: Vec<usize> = shape
        .iter()
        .scan(0, |acc, &k| {
            let o = *acc;
            *acc += k;
            Some(o)
        })
        .collect();
    let k_total: usize = shape.iter().sum();
    let dim = k_total + m;
    let mut mat = DMatrix::zeros(dim, dim);
    let mut noise = ChaCha8Rng::seed_from_u64(0x1e3e);
    for p in 0..m {
        // The base is spread over the opponents since their weights sum to one.
        let share = |i: usize, q: usize, j: usize| weight[p][q][i][j] + base[p][i] / (m - 1) as f64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for q in (0..m).filter(|&q| q != p) {
            for i in 0..shape[p] {
                for j in 0..shape[q] {
                    lo = lo.min(share(i, q, j));
                    hi = hi.max(share(i, q, j));
                }
            }
        }
        let range = if hi > lo { hi - lo } else { 1.0 };
        for i in 0..shape[p] {
            for q in (0..m).filter(|&q| q != p) {
                for j in 0..shape[q] {
                    mat[(offsets[p] + i, offsets[q] + j)] =
                        2.0 - (share(i, q, j) - lo) / range + jitter * noise.gen::<f64>();
                }
            }
            mat[(offsets[p] + i, k_total + p)] = -1.0;
            mat[(k_total + p, offsets[p] + i)] = 1.0;
        }
    }
    let mut q = DVector::zeros(dim);
    q.rows_mut(k_total, m).fill(-1.0);
    for x in q.iter_mut() {
        *x += jitter * noise.gen::<f64>();
    }

    // Columns: w (dim), z (dim), z0, rhs. Basis starts at w.
    let cols = 2 * dim + 2;
    let (z0, rhs) = (2 * dim, 2 * dim + 1);
    let mut t = DMatrix::zeros(dim, cols);
    for i in 0..dim {
        t[(i, i)] = 1.0;
        for j in 0..dim {
            t[(i, dim + j)] = -mat[(i, j)];
        }
        t[(i, z0)] = -1.0;
        t[(i, rhs)] = q[i];
    }
    let original = t.clone();
    let mut basis: Vec<usize> = (0..dim).collect();
    // Rebuilds the tableau from the basis to stop rounding from piling up.
    let refactor = |t: &mut DMatrix<f64>, basis: &[usize]| -> Option<()> {
        let b = DMatrix::from_fn(dim, dim, |i, k| original[(i, basis[k])]);
        *t = b.lu().solve(&original)?;
        Some(())
    };
    let pivot_on = |t: &mut DMatrix<f64>, r: usize, c: usize| {
        let pv = t[(r, c)];
        for x in 0..cols {
            t[(r, x)] /= pv;
        }
        for i in 0..dim {
            if i != r {
                let f = t[(i, c)];
                if f != 0.0 {
                    for x in 0..cols {
                        t[(i, x)] -= f * t[(r, x)];
                    }
                }
            }
        }
    };
    let mut row = (0..dim).min_by(|&a, &b| q[a].total_cmp(&q[b]))?;
    let mut entering = z0;
    for step in 1..=10 * dim {
        pivot_on(&mut t, row, entering);
        let leaving = std::mem::replace(&mut basis[row], entering);
        if step % 32 == 0 {
            refactor(&mut t, &basis)?;
        }
        if leaving == z0 {
            let mut z = vec![0.0; dim];
            for (i, &b) in basis.iter().enumerate() {
                if (dim..2 * dim).contains(&b) {
                    z[b - dim] = t[(i, rhs)];
                }
            }
            return Some(shape.iter().zip(&offsets).map(|(&k, &o)| z[o..o + k].to_vec()).collect());
        }
        entering = if leaving < dim { leaving + dim } else { leaving - dim };
        // Lexicographic ratio test over (rhs, B^-1) divided by the pivot column.
        let eligible: Vec<usize> = (0..dim).filter(|&i| t[(i, entering)] > 1e-12).collect();
        if eligible.is_empty() {
            return None;
        }
        let key = |i: usize, x: usize| t[(i, x)] / t[(i, entering)];
        let lex = std::iter::once(rhs).chain(0..dim).collect::<Vec<_>>();
        row = *eligible.iter().min_by(|&&a, &&b| {
            for &x in &lex {
                let (ka, kb) = (key(a, x), key(b, x));
                if (ka - kb).abs() > 1e-13 * (1.0 + ka.abs().max(kb.abs())) {
                    return ka.total_cmp(&kb);
                }
            }
            // z0 leaves first on an exact tie.
            (basis[b] == z0).cmp(&(basis[a] == z0))
        })?;
    }
    None
}

/// Indifference system of a separable game: the opponents' weights make all
/// support strategies of each player equally good. Unknowns are every
/// support weight followed by one value per player.
/// With `near` (full weight vectors) the solution closest to it is returned,
/// which matters when the system is rank deficient.
fn solve_separable(
    supports: &[Vec<usize>],
    base: &[Vec<f64>],
    weight: &[Vec<Vec<Vec<f64>>>],
    near: Option<&[Vec<f64>]>,
) -> Option<Vec<Vec<f64>>> {
    let m = supports.len();
    let offsets = offsets(supports);
    let k_total: usize = supports.iter().map(Vec::len).sum();
    let dim = k_total + m;
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    let mut row = 0;
    for p in 0..m {
        for &i in &supports[p] {
            for q in (0..m).filter(|&q| q != p) {
                for (c, &j) in supports[q].iter().enumerate() {
                    a[(row, offsets[q] + c)] = weight[p][q][i][j];
                }
            }
            a[(row, k_total + p)] = -1.0;
            b[row] = -base[p][i];
            row += 1;
        }
    }
    for q in 0..m {
        for c in 0..supports[q].len() {
            a[(row, offsets[q] + c)] = 1.0;
        }
        b[row] = 1.0;
        row += 1;
    }
    let svd = a.clone().svd(true, true);
    let x = match near {
        None => svd.solve(&b, 1e-12).ok()?,
        Some(sigma) => {
            let mut x0 = DVector::zeros(dim);
            for p in 0..m {
                for (c, &i) in supports[p].iter().enumerate() {
                    x0[offsets[p] + c] = sigma[p][i];
                }
            }
            for p in 0..m {
                let values: f64 = supports[p]
                    .iter()
                    .map(|&i| {
                        base[p][i]
                            + (0..m)
                                .filter(|&q| q != p)
                                .map(|q| supports[q].iter().map(|&j| sigma[q][j] * weight[p][q][i][j]).sum::<f64>())
                                .sum::<f64>()
                    })
                    .sum();
                x0[k_total + p] = values / supports[p].len() as f64;
            }
            let residual = &b - &a * &x0;
            x0 + svd.solve(&residual, 1e-12).ok()?
        }
    };
    Some(supports.iter().zip(&offsets).map(|(s, &o)| x.iter().skip(o).take(s.len()).copied().collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{generate_instance, payoff, CostKind};

    fn bimatrix(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> SampledGame {
        let flat = |t: [[f64; 2]; 2]| t.iter().flatten().copied().collect::<Vec<_>>();
        SampledGame::from_tensors(vec![2, 2], vec![flat(a), flat(b)]).unwrap()
    }

    fn random_game(shape: Vec<usize>, seed: u64) -> SampledGame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size: usize = shape.iter().product();
        let payoffs = (0..shape.len()).map(|_| (0..size).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect();
        SampledGame::from_tensors(shape, payoffs).unwrap()
    }

    /// Best gain over pure deviations, by explicit summation over profiles.
    fn brute_regret(game: &SampledGame, prof: &SampledMixedProfile, p: usize) -> f64 {
        let m = game.num_players();
        let size: usize = game.shape().iter().product();
        let mut dev = vec![0.0; game.num_strategies(p)];
        let mut current = 0.0;
        for flat in 0..size {
            let mut idx = vec![0; m];
            let mut rest = flat;
            for q in (0..m).rev() {
                idx[q] = rest % game.shape()[q];
                rest /= game.shape()[q];
            }
            let w_others: f64 = (0..m).filter(|&q| q != p).map(|q| prof.probs[q][idx[q]]).product();
            dev[idx[p]] += w_others * game.payoff(p, &idx);
            current += w_others * prof.probs[p][idx[p]] * game.payoff(p, &idx);
        }
        dev.iter().copied().fold(f64::NEG_INFINITY, f64::max) - current
    }

    #[test]
    fn matching_pennies_is_uniform() {
        let g = bimatrix([[1.0, -1.0], [-1.0, 1.0]], [[-1.0, 1.0], [1.0, -1.0]]);
        let ne = solve_sampled_ne(&g, 1e-9, None).unwrap();
        for w in &ne.probs {
            assert!((w[0] - 0.5).abs() < 1e-9 && (w[1] - 0.5).abs() < 1e-9);
        }
        assert!(sampled_regret(&g, &ne, 0).abs() < 1e-12);
    }

    #[test]
    fn prisoners_dilemma_defects() {
        let g = bimatrix([[-1.0, -3.0], [0.0, -2.0]], [[-1.0, 0.0], [-3.0, -2.0]]);
        let ne = solve_sampled_ne(&g, 0.0, None).unwrap();
        assert_eq!(ne.probs, vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(ne.total_support(), 2);
        assert_eq!(sampled_regret(&g, &ne, 0), 0.0);
    }

    #[test]
    fn random_three_player_games_are_solved() {
        for seed in 0..10 {
            let g = random_game(vec![2, 2, 2], seed);
            let ne = solve_sampled_ne(&g, 1e-7, None).unwrap();
            for p in 0..3 {
                assert!(brute_regret(&g, &ne, p) <= 1e-7 + 1e-9, "seed {seed}");
            }
        }
    }

    #[test]
    fn regret_matches_enumeration() {
        let g = random_game(vec![3, 2, 4], 3);
        let uniform = SampledMixedProfile {
            probs: g.shape().iter().map(|&k| vec![1.0 / k as f64; k]).collect(),
        };
        for p in 0..3 {
            assert!((sampled_regret(&g, &uniform, p) - brute_regret(&g, &uniform, p)).abs() < 1e-12);
        }
    }

    #[test]
    fn warm_start_is_returned_unchanged() {
        let g = random_game(vec![3, 3], 17);
        let ne = solve_sampled_ne(&g, 1e-8, None).unwrap();
        assert_eq!(solve_sampled_ne(&g, 1e-8, Some(&ne)).unwrap(), ne);
    }

    #[test]
    fn tensors_match_payoffs() {
        let inst = generate_instance(3, 2, CostKind::Log, 2).unwrap();
        let lists: Vec<Vec<PureStrategy>> = (0..3)
            .map(|p| {
                (0..p + 1)
                    .map(|k| PureStrategy {
                        quantities: vec![10.0 * k as f64, 5.0],
                        entry: vec![k > 0, true],
                        security: 0.01 * k as f64,
                    })
                    .collect()
            })
            .collect();
        let g = build_sampled_game(&inst, lists.clone()).unwrap();
        for i in 0..1 {
            for j in 0..2 {
                for k in 0..3 {
                    let prof = [lists[0][i].clone(), lists[1][j].clone(), lists[2][k].clone()];
                    for p in 0..3 {
                        let direct = payoff(&inst, p, &prof).unwrap();
                        assert!((g.payoff(p, &[i, j, k]) - direct).abs() < 1e-9);
                    }
                }
            }
        }
        let single = build_sampled_game(&inst, lists.iter().map(|l| vec![l[0].clone()]).collect()).unwrap();
        assert_eq!(single.shape(), &[1, 1, 1]);
        assert!(build_sampled_game(&inst, vec![vec![], lists[1].clone(), lists[2].clone()]).is_err());
    }

    #[test]
    fn symmetric_instance_gives_symmetric_tensors() {
        let mut inst = generate_instance(2, 1, CostKind::Isr, 6).unwrap();
        let pl = inst.player(0).clone();
        inst = crate::game::GciInstance::new(inst.markets().to_vec(), vec![pl.clone(), pl], CostKind::Isr, None).unwrap();
        let list: Vec<PureStrategy> = [0.0, 20.0, 40.0]
            .iter()
            .map(|&q| PureStrategy { quantities: vec![q], entry: vec![q > 0.0], security: q / 1000.0 })
            .collect();
        let g = build_sampled_game(&inst, vec![list.clone(), list]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((g.payoff(0, &[i, j]) - g.payoff(1, &[j, i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn separable_and_dense_forms_agree() {
        let inst = generate_instance(3, 2, CostKind::Ncf, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lists: Vec<Vec<PureStrategy>> = (0..3)
            .map(|p| {
                (0..3)
                    .map(|_| {
                        let cap = inst.player(p).quantity_cap.clone();
                        let quantities: Vec<f64> = cap.iter().map(|&c| rng.gen_range(0.0..c)).collect();
                        let entry = quantities.iter().map(|&q| q > 0.0).collect();
                        let security = rng.gen_range(0.0..inst.security_cap(p));
                        PureStrategy { quantities, entry, security }
                    })
                    .collect()
            })
            .collect();
        let sep = build_sampled_game(&inst, lists).unwrap();
        let size: usize = sep.shape().iter().product();
        let tensors = (0..3)
            .map(|p| (0..size).map(|f| sep.payoff(p, &[f / 9, (f / 3) % 3, f % 3])).collect())
            .collect();
        let dense = SampledGame::from_tensors(vec![3, 3, 3], tensors).unwrap();
        let ne = solve_sampled_ne(&sep, 1e-7, None).unwrap();
        for p in 0..3 {
            let (a, b) = (sep.deviation_payoffs(&ne, p), dense.deviation_payoffs(&ne, p));
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-6));
            assert!(brute_regret(&dense, &ne, p) <= 1e-6);
        }
        let dense_ne = solve_sampled_ne(&dense, 1e-7, None).unwrap();
        assert!((0..3).all(|p| brute_regret(&sep, &dense_ne, p) <= 1e-6));
    }

    #[test]
    fn pivoting_solves_polymatrix_games() {
        let cfg = NeSolverConfig { pivot_after: Some(0), ..NeSolverConfig::default() };
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = 2 + (seed as usize % 4);
            let shape: Vec<usize> = (0..m).map(|_| rng.gen_range(2..7)).collect();
            let base: Vec<Vec<f64>> = shape.iter().map(|&k| (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect();
            let weight = (0..m)
                .map(|p| {
                    (0..m)
                        .map(|q| {
                            if p == q {
                                return Vec::new();
                            }
                            (0..shape[p]).map(|_| (0..shape[q]).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect()
                        })
                        .collect()
                })
                .collect();
            let g = SampledGame { strategies: Vec::new(), shape, payoffs: Payoffs::Separable { base, weight } };
            let ne = solve_sampled_ne_with(&g, 1e-8, None, &cfg).unwrap();
            ne.validate(&g).unwrap();
            assert!((0..m).all(|p| brute_regret(&g, &ne, p) <= 1e-7), "seed {seed}");
            let tableau = match &g.payoffs {
                Payoffs::Separable { base, weight } => lemke_polymatrix(g.shape(), base, weight, LEMKE_JITTER[0]),
                Payoffs::Dense { .. } => None,
            };
            assert!(tableau.is_some(), "seed {seed}");
        }
    }

    #[test]
    fn size_vectors_are_balanced_first() {
        let v = size_vectors(&[3, 3], 4);
        assert_eq!(v, vec![vec![2, 2], vec![1, 3], vec![3, 1]]);
    }

    #[test]
    fn exhaustion_is_reported() {
        // Matching pennies has no pure equilibrium: four pure candidates fail.
        let g = bimatrix([[1.0, -1.0], [-1.0, 1.0]], [[-1.0, 1.0], [1.0, -1.0]]);
        let cfg = NeSolverConfig { max_candidates: 4, ..NeSolverConfig::default() };
        assert!(matches!(solve_sampled_ne_with(&g, 0.0, None, &cfg), Err(Error::SolverExhausted)));
        assert!(solve_sampled_ne(&g, -1.0, None).is_err());
    }
}
