//! Gradient flows under the GD, mirror-descent-like and HAM metrics, with
//! fitted loss-decay rates and the pilot-flow consistency check.
//!
//! `cargo run --example riemannian_flows`

use ham_core::flows::{flow_integrate, pilot_flow_check, rate_estimate, FlowOptions, MetricKind};
use ham_core::objectives::SeparableQuadratic;
use ham_core::ParamVector;

fn main() -> ham_core::Result<()> {
    let q = SeparableQuadratic::new(vec![1.0], vec![0.0])?;
    let opts = FlowOptions::new(10.0, 1e-3).record_every(10);
    let runs = [
        ("gd", MetricKind::Gd, 1.0),
        ("ham(alpha=1)", MetricKind::Ham { alpha: 1.0 }, 1.0),
        ("ham(alpha=5)", MetricKind::Ham { alpha: 5.0 }, 1.0),
        ("mw(gamma=0.01)", MetricKind::Mw { gamma: 0.01 }, 0.05),
    ];
    println!("{:<16} {:>6} {:>12} {:>14}", "metric", "x0", "slope", "t(loss<1e-8)");
    for (name, kind, x0) in runs {
        let tr = flow_integrate(&q, kind, &ParamVector::from(vec![x0]), &opts)?;
        let slope = rate_estimate(&tr, 0.0)?;
        let t = tr
            .time_to_loss(1e-8)
            .map(|t| format!("{t:.3}"))
            .unwrap_or_else(|| "never".into());
        println!("{name:<16} {x0:>6} {slope:>12.4} {t:>14}");
    }
    let q2 = SeparableQuadratic::new(vec![1.0, 2.0], vec![1.0, -0.5])?;
    let residual = pilot_flow_check(&q2, &ParamVector::from(vec![0.3, 0.4]), 0.1, 0.25, 5.0, 1e-4)?;
    println!("pilot flow vs reduced flow: max residual {residual:.3e}");
    Ok(())
}
