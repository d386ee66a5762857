//! Sparse underdetermined least squares: HAM's endpoint is the
//! `R_α`-minimal interpolator, and larger α pulls it toward the sparse truth.
//!
//! `cargo run --release --example implicit_bias_regression`

use ham_core::regression::{
    constrained_minimizer_oracle, implicit_bias_check, min_norm_solution, run_regression, Method, RegressionProblem,
};
use ham_core::trace::distance;

fn main() -> ham_core::Result<()> {
    let p = RegressionProblem::generate(20, 8, 3, 1)?;
    let report = implicit_bias_check(&p, 10.0, 1e-4, 1_000_000)?;
    println!(
        "alpha 10: rel gap to oracle {:.2e}, train residual {:.1e}, oracle newton iterations {}",
        report.rel_gap, report.train_residual, report.oracle.iterations
    );
    let pinv = min_norm_solution(&p.z, &p.y)?;
    println!("{:>8} {:>14} {:>12}", "alpha", "dist to x*", "l1 norm");
    println!("{:>8} {:>14.4} {:>12.4}", "pinv", distance(&pinv, &p.x_star), pinv.l1());
    for alpha in [1e-2, 1.0, 10.0, 100.0, 1e3] {
        let o = constrained_minimizer_oracle(&p, alpha)?;
        println!("{alpha:>8} {:>14.4} {:>12.4}", distance(&o.x, &p.x_star), o.x.l1());
    }
    let big = RegressionProblem::generate(100, 40, 5, 0)?;
    println!("n=100 d=40 k=5, 1e4 steps at eta 1e-3:");
    for (name, m) in [
        ("gd", Method::Gd),
        ("ham", Method::Ham { alpha: 100.0 }),
        ("ham-signed", Method::HamSigned { alpha: 100.0 }),
        ("mw", Method::Mw { init_scale: 0.1 }),
    ] {
        let (x, _) = run_regression(&big, m, 1e-3, 10_000, 10_000)?;
        println!("  {name:<11} dist to x* {:.4}", distance(&x, &big.x_star));
    }
    Ok(())
}
