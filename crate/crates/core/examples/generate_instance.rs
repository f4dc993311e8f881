//! Draws a seeded instance, saves it as JSON and loads it back.

use pwl_sgm::game::{generate_instance, load_instance, save_instance, CostKind};

fn main() -> pwl_sgm::Result<()> {
    let inst = generate_instance(3, 2, CostKind::Log, 7)?;
    for (j, market) in inst.markets().iter().enumerate() {
        println!("market {j}: q = {}, m = {}, r = {}", market.q, market.m_slope, market.r);
    }
    for p in 0..inst.num_players() {
        let pl = inst.player(p);
        println!("player {p}: alpha = {}, B = {}, cap s = {:.6}", pl.alpha, pl.budget, inst.security_cap(p));
    }
    let path = std::env::temp_dir().join("pwl_sgm_example_instance.json");
    save_instance(&inst, &path)?;
    let back = load_instance(&path)?;
    println!("round trip identical: {}", back == inst);
    Ok(())
}
