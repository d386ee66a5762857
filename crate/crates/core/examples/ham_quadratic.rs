//! HAM on top of plain GD, momentum and Adam on a separable quadratic.
//!
//! `cargo run --example ham_quadratic`

use ham_core::objectives::{Objective, SeparableQuadratic};
use ham_core::optim::{run_ham, BaseOptimizer, HamConfig};
use ham_core::{BaseKind, ParamVector};

fn main() -> ham_core::Result<()> {
    let q = SeparableQuadratic::new(vec![1.0, 4.0, 0.25], vec![2.0, -1.0, 0.5])?;
    let x0 = ParamVector::from(vec![0.1, 0.1, -0.1]);
    let eta = 0.05;
    let steps = 200;
    println!("{:<10} {:>8} {:>14} {:>10}", "base", "alpha", "final loss", "flips");
    for (name, kind) in [
        ("gd", BaseKind::Gd),
        ("momentum", BaseKind::Momentum { mu: 0.9 }),
        ("adam", BaseKind::adam()),
    ] {
        for alpha in [0.0, 1.0, 5.0] {
            let mut base = BaseOptimizer::new(kind, x0.len());
            let (x, trace) = run_ham(&q, &x0, &mut base, &HamConfig::new(alpha, 0.0, eta), steps, 50)?;
            println!(
                "{:<10} {:>8} {:>14.3e} {:>10}",
                name,
                alpha,
                q.value(&x)?,
                trace.total_flips()
            );
        }
    }
    // Decay trades a little loss for a smaller L1 norm.
    for beta in [0.0, 0.1, 0.5] {
        let (x, _) = run_ham(
            &q,
            &x0,
            &mut BaseOptimizer::gd(),
            &HamConfig::new(5.0, beta, eta),
            steps,
            steps,
        )?;
        println!("beta {beta:<4} loss {:.3e} |x|_1 {:.4}", q.value(&x)?, x.l1());
    }
    Ok(())
}
