//! Best response of one player against a fixed opponent profile, with the
//! value of the security sub-problem along a coarse grid.

use pwl_sgm::bestresponse::{best_response, phi};
use pwl_sgm::game::{generate_instance, CostKind, MixedProfile, OpponentAggregates, PureStrategy};

fn main() -> pwl_sgm::Result<()> {
    let inst = generate_instance(2, 2, CostKind::Ncf, 11)?;
    let opponent = PureStrategy { quantities: vec![40.0, 25.0], entry: vec![true, true], security: 0.01 };
    let profile = MixedProfile::from_pure(&[PureStrategy::idle(2), opponent]);
    let br = best_response(&inst, 0, &profile, 1e-6)?;
    println!("best response of player 0: {:?}", br.strategy);
    println!("value {:.6} (gap {:.1e})", br.value, br.gap);

    let agg = OpponentAggregates::from_profile(&profile, 0, inst.num_markets());
    let cap = inst.security_cap(0);
    for k in 0..=10 {
        let s = cap * k as f64 / 10.0;
        println!("  s = {s:.5}  phi = {:.4}", phi(&inst, 0, &agg, s)?);
    }
    Ok(())
}
