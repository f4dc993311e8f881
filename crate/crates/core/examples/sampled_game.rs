//! Equilibria of small finite games: matching pennies, the prisoner's
//! dilemma and a sampled game of a generated instance.

use pwl_sgm::game::{generate_instance, CostKind, PureStrategy};
use pwl_sgm::normalform::{build_sampled_game, sampled_regret, solve_sampled_ne, SampledGame};

fn main() -> pwl_sgm::Result<()> {
    let pennies = SampledGame::from_tensors(vec![2, 2], vec![vec![1.0, -1.0, -1.0, 1.0], vec![-1.0, 1.0, 1.0, -1.0]])?;
    println!("matching pennies: {:?}", solve_sampled_ne(&pennies, 1e-9, None)?.probs);

    let dilemma = SampledGame::from_tensors(vec![2, 2], vec![vec![3.0, 0.0, 5.0, 1.0], vec![3.0, 5.0, 0.0, 1.0]])?;
    println!("prisoner's dilemma: {:?}", solve_sampled_ne(&dilemma, 1e-9, None)?.probs);

    let inst = generate_instance(2, 1, CostKind::Isr, 3)?;
    let lists: Vec<Vec<PureStrategy>> = (0..2)
        .map(|p| {
            [0.0, 30.0, 60.0]
                .iter()
                .map(|&q| PureStrategy { quantities: vec![q], entry: vec![q > 0.0], security: inst.security_cap(p) / 2.0 })
                .collect()
        })
        .collect();
    let game = build_sampled_game(&inst, lists)?;
    let ne = solve_sampled_ne(&game, 1e-7, None)?;
    for p in 0..2 {
        println!("player {p}: weights {:?}, regret {:.2e}", ne.probs[p], sampled_regret(&game, &ne, p));
    }
    Ok(())
}
