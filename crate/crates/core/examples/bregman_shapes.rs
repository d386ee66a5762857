//! The HAM potential `R_α`: its divergence, conjugate map and how its level
//! sets move from the L2 ball (small α) toward the L1 ball (large α).
//!
//! `cargo run --example bregman_shapes`

use ham_core::bregman::{box_grid, l1_shape_error, l2_shape_error, BregmanSpec};
use ham_core::ParamVector;

fn main() -> ham_core::Result<()> {
    let grid = box_grid(1.0, 41, 2)?;
    println!("{:>8} {:>12} {:>12}", "alpha", "l2_err", "l1_err");
    for alpha in [1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6, 1e12] {
        // The L1 normalization needs α > 1.
        let (l2, l1) = (l2_shape_error(alpha, &grid).ok(), l1_shape_error(alpha, &grid).ok());
        let show = |v: Option<f64>| v.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
        println!("{alpha:>8.0e} {:>12} {:>12}", show(l2), show(l1));
    }
    let spec = BregmanSpec::new(3.0, ParamVector::from(vec![0.5, -0.2]))?;
    let x = ParamVector::from(vec![1.0, 0.4]);
    let theta = spec.gradient(&x)?;
    println!("grad R at x {:?}", theta.as_slice());
    println!("divergence D(x, x0) {:.6}", spec.divergence(&x, &spec.x0)?);
    let centered = BregmanSpec::centered(3.0, 2)?;
    let back = centered.conjugate_gradient(&centered.gradient(&x)?)?;
    println!("conjugate round trip error {:.1e}", back.max_abs_diff(&x)?);
    Ok(())
}
