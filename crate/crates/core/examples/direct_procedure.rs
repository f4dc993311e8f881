//! Solves one instance with the exact oracle and with the direct
//! approximation procedure, then certifies both profiles.

use pwl_sgm::game::{generate_instance, CostKind};
use pwl_sgm::sgm::{certify_equilibrium, direct_procedure, sgm_procedure, ProcedureConfig};

fn main() -> pwl_sgm::Result<()> {
    let inst = generate_instance(3, 2, CostKind::Ncf, 5)?;
    let cfg = ProcedureConfig::default();

    let exact = sgm_procedure(&inst, &cfg)?;
    println!("exact oracle: {} after {} iterations, {:.3}s", exact.status, exact.iterations, exact.wall_time_s);
    println!("  certified regret {:.3e}", certify_equilibrium(&inst, &exact.profile, cfg.delta_gap())?);

    let (profile, outcome) = direct_procedure(&inst, &cfg)?;
    println!("direct: {} after {} iterations, {:.3}s", outcome.status, outcome.iterations, outcome.wall_time_s);
    println!("  certified regret {:.3e}", certify_equilibrium(&inst, &profile, cfg.delta_gap())?);
    for (p, strat) in profile.players.iter().enumerate() {
        for (w, x) in strat.iter() {
            println!("  player {p}: {w:.4} x Q = {:?}, s = {:.6}", x.quantities, x.security);
        }
    }
    Ok(())
}
