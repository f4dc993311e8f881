//! Tabulates the three security cost laws and their piecewise linear fits.

use pwl_sgm::game::{cost_h, cost_spec, ncf_inflections, security_cap, CostKind};
use pwl_sgm::pwl::fit_pwl;

fn main() -> pwl_sgm::Result<()> {
    let (alpha, budget) = (4.0, 3.0);
    println!("nonconvex inflections: {:?}", ncf_inflections());
    for kind in CostKind::ALL {
        let cap = security_cap(kind, alpha, budget)?;
        println!("{kind}: cap s = {cap:.6}, h(cap) = {:.6}", cost_h(kind, alpha, cap)?);
        for delta in [0.1, 0.01, 0.001] {
            let pwl = fit_pwl(&cost_spec(kind, alpha, cap, delta)?)?;
            println!("  delta {delta:<6} -> {:>3} pieces", pwl.len());
        }
    }
    Ok(())
}
