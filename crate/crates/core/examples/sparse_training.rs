//! Sparse training of a small tanh MLP on two moons: pruning at
//! initialization and an Ac/Dc-style dense/sparse schedule, with and
//! without HAM, plus a census of weight sign flips.
//!
//! `cargo run --release --example sparse_training`

use ham_core::optim::HamConfig;
use ham_core::sparse_lab::{
    acdc_lite_train, acdc_schedule, magnitude_prune, moons_split, pai_train, random_mask, sign_flip_census,
    toy_network, MaskedModel, TrainConfig, Trainer,
};
use ham_core::{BaseKind, Rng};

fn main() -> ham_core::Result<()> {
    let seed = 0;
    let (train, test) = moons_split(seed);
    let mlp = toy_network();
    let dense = MaskedModel::dense(mlp.clone(), mlp.init(&mut Rng::new(seed)))?;
    let eta = 5e-3;
    let cfg = |ham| TrainConfig::new(BaseKind::Momentum { mu: 0.9 }, ham, seed);

    let pai = random_mask(&dense, 0.9, seed + 100)?;
    for (name, ham) in [
        ("gd", HamConfig::disabled(eta)),
        ("ham", HamConfig::new(200.0, 0.0, eta)),
    ] {
        let run = pai_train(pai.clone(), &train, &test, &cfg(ham), 2000)?;
        println!(
            "pai  {name:<4} sparsity {:.2} acc {:.3} flips {}",
            run.model.sparsity(),
            run.test_accuracy,
            run.trace.total_flips()
        );
    }

    let schedule = acdc_schedule(500, 250, 3);
    for (name, ham) in [
        ("base", HamConfig::new(0.0, 0.0, eta)),
        ("ham", HamConfig::new(200.0, 1e-4, eta)),
    ] {
        let run = acdc_lite_train(dense.clone(), &train, &test, &cfg(ham), &schedule, 0.9)?;
        println!(
            "acdc {name:<4} sparsity {:.2} acc {:.3}",
            run.model.sparsity(),
            run.test_accuracy
        );
    }

    let pruned = magnitude_prune(&dense, 0.7)?;
    let mut trainer = Trainer::new(pruned, &train, cfg(HamConfig::new(200.0, 0.0, eta)))?;
    let mut snapshots = Vec::new();
    trainer.run_observed(1000, &mut |step, p| {
        if step % 100 == 0 {
            snapshots.push(p.clone());
        }
    })?;
    let census = sign_flip_census(&snapshots)?;
    println!(
        "sign census: flips per interval {:?}, stable from interval {:?}",
        census.flips, census.t0
    );
    Ok(())
}
