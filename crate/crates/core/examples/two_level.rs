//! The two-level procedure: a coarse approximation first, then the fine one
//! warm-started from the coarse equilibrium.

use pwl_sgm::game::{generate_instance, CostKind};
use pwl_sgm::sgm::{approximate_ipg, certify_equilibrium, two_level_procedure, ProcedureConfig};

fn main() -> pwl_sgm::Result<()> {
    let inst = generate_instance(3, 3, CostKind::Log, 21)?;
    let cfg = ProcedureConfig::default();
    println!("pieces at delta_0: {:?}", approximate_ipg(&inst, cfg.delta_0)?.piece_counts());
    println!("pieces at mu delta_f / 2: {:?}", approximate_ipg(&inst, cfg.mu * cfg.delta_f / 2.0)?.piece_counts());

    let out = two_level_procedure(&inst, &cfg)?;
    println!("stage 1: {} iterations, {}", out.stage1.iterations, out.stage1.status);
    if let Some(stage2) = &out.stage2 {
        println!("stage 2: {} iterations, {}", stage2.iterations, stage2.status);
    }
    println!("status {}, {:.3}s", out.status(), out.wall_time_s());
    println!("certified regret {:.3e}", certify_equilibrium(&inst, &out.profile, cfg.delta_gap())?);
    Ok(())
}
