//! Seeded random instances.
//!
//! Every parameter is drawn uniformly from an arithmetic grid `{lo, lo+step,
//! ..., hi}` as an integer index divided by the grid scale, so values are
//! exact multiples of the step. Draw order: for each market `q, m, r`; then
//! for each player `c_prod`, `c_setup[..]`, `c_lin[..]`, `c_quad[..]`,
//! `alpha`, `D`, `Q_cap[..]`, `B`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CostKind, GciInstance, MarketParams, PlayerParams};
use crate::error::{Error, Result};

/// Grid `{lo/scale, (lo+1)/scale, ..., hi/scale}`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Grid {
    pub lo: i64,
    pub hi: i64,
    pub scale: f64,
}

#[cfg_attr(not(test), allow(dead_code))]
impl Grid {
    const fn new(lo: i64, hi: i64, scale: f64) -> Self {
        Self { lo, hi, scale }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.gen_range(self.lo..=self.hi) as f64 / self.scale
    }

    pub fn min(&self) -> f64 {
        self.lo as f64 / self.scale
    }

    pub fn max(&self) -> f64 {
        self.hi as f64 / self.scale
    }
}

pub(crate) const Q: Grid = Grid::new(100, 200, 1.0);
pub(crate) const M_SLOPE: Grid = Grid::new(50, 200, 100.0);
pub(crate) const R: Grid = Grid::new(10, 50, 100.0);
pub(crate) const C_PROD: Grid = Grid::new(1, 10, 1.0);
pub(crate) const C_SETUP: Grid = Grid::new(500, 2000, 1.0);
pub(crate) const C_LIN: Grid = Grid::new(100, 400, 100.0);
pub(crate) const C_QUAD: Grid = Grid::new(25, 100, 100.0);
pub(crate) const ALPHA: Grid = Grid::new(1, 10, 1.0);
pub(crate) const DAMAGE: Grid = Grid::new(50, 100, 1.0);
pub(crate) const Q_CAP: Grid = Grid::new(50, 200, 1.0);
pub(crate) const BUDGET: Grid = Grid::new(1, 10, 2.0);

/// Deterministic instance with `m` players and `n` markets.
pub fn generate_instance(m: usize, n: usize, kind: CostKind, seed: u64) -> Result<GciInstance> {
    if m < 2 || n < 1 {
        return Err(Error::Parameter(format!("need m >= 2 and n >= 1, got m = {m}, n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let markets = (0..n)
        .map(|_| MarketParams { q: Q.draw(&mut rng), m_slope: M_SLOPE.draw(&mut rng), r: R.draw(&mut rng) })
        .collect();
    let per_market = |rng: &mut ChaCha8Rng, g: Grid| (0..n).map(|_| g.draw(rng)).collect::<Vec<_>>();
    let players = (0..m)
        .map(|_| {
            let c_prod = C_PROD.draw(&mut rng);
            let c_setup = per_market(&mut rng, C_SETUP);
            let c_lin = per_market(&mut rng, C_LIN);
            let c_quad = per_market(&mut rng, C_QUAD);
            let alpha = ALPHA.draw(&mut rng);
            let damage = DAMAGE.draw(&mut rng);
            let quantity_cap = per_market(&mut rng, Q_CAP);
            let budget = BUDGET.draw(&mut rng);
            PlayerParams { c_prod, c_setup, c_lin, c_quad, alpha, damage, budget, quantity_cap }
        })
        .collect();
    GciInstance::new(markets, players, kind, Some(seed))
}
