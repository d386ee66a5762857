//! Monte-Carlo Fisher information: `N(x, 1)` gives the Euclidean metric and
//! `N(2√|x|, 1)` gives `1/|x|`.
//!
//! `cargo run --release --example fisher_information`

use ham_core::fisher::{fisher_mc_estimate, ScoreModel};

fn main() -> ham_core::Result<()> {
    println!(
        "{:<10} {:>6} {:>10} {:>10} {:>8}",
        "model", "x", "estimate", "exact", "z"
    );
    for (name, model, xs) in [
        ("mean", ScoreModel::MeanParam, vec![-2.0, 0.0, 3.0]),
        ("sqrt", ScoreModel::SqrtParam, vec![0.1, 1.0, 4.0, 25.0]),
    ] {
        for (i, x) in xs.into_iter().enumerate() {
            let e = fisher_mc_estimate(model, x, 1_000_000, 7 + i as u64)?;
            let exact = model.information(x)?;
            println!(
                "{name:<10} {x:>6} {:>10.5} {exact:>10.5} {:>8.2}",
                e.estimate,
                e.z_score(exact)
            );
        }
    }
    Ok(())
}
