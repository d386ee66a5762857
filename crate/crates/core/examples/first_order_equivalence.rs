//! The exponential update against gradient descent on the `x = m ⊙ w`
//! factorization: the trajectory gap shrinks with the learning rate.
//!
//! `cargo run --example first_order_equivalence`

use ham_core::objectives::SeparableQuadratic;
use ham_core::optim::{first_order_gap_check, mw_step, OverparamState};
use ham_core::ParamVector;

fn main() -> ham_core::Result<()> {
    let q = SeparableQuadratic::new(vec![0.1, 0.2], vec![1.0, -1.0])?;
    let x0 = ParamVector::from(vec![0.25, -2.25]);
    let steps = 20;
    for beta in [0.0, 1e-2] {
        let mut prev: Option<f64> = None;
        for eta in [1e-2, 5e-3, 2.5e-3, 1.25e-3] {
            let gap = first_order_gap_check(&q, &x0, eta, beta, steps)?;
            let ratio = prev.map(|p| format!("{:.3}", gap / p)).unwrap_or_else(|| "-".into());
            println!("beta {beta:<5} eta {eta:<8} gap {gap:.3e} ratio {ratio}");
            prev = Some(gap);
        }
    }
    let s = OverparamState::from_product(&ParamVector::from(vec![4.0, -9.0]), 0.0);
    let next = mw_step(&s, &ParamVector::from(vec![0.5, -0.5]), 0.01)?;
    println!(
        "m {:?} w {:?} -> product {:?}",
        s.m.as_slice(),
        s.w.as_slice(),
        next.product().as_slice()
    );
    Ok(())
}
