//! Fits x^3 on [-1, 1] within 0.1 and prints the pieces.

use pwl_sgm::pwl::{fit_pwl, min_pieces_oracle, verify_corridor, UnivariateSpec};

fn main() -> pwl_sgm::Result<()> {
    let spec = UnivariateSpec::new(|x| x * x * x, |x| 3.0 * x * x, (-1.0, 1.0), vec![0.0], 0.1)?;
    let pwl = fit_pwl(&spec)?;
    println!("{} pieces", pwl.len());
    for piece in pwl.pieces() {
        println!("  [{:+.4}, {:+.4}]  y = {:+.4} x {:+.4}", piece.lo, piece.hi, piece.slope, piece.intercept);
    }
    println!("max sampled error {:.6}", verify_corridor(&pwl, &spec, 100_000)?);
    println!("grid lower bound on pieces {}", min_pieces_oracle(&spec, 10_000)?);
    Ok(())
}
