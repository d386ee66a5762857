//! Toy sparse training: two-moons classification with a masked MLP,
//! pruning-at-initialization masks, an alternating dense/sparse schedule
//! and sign-flip bookkeeping.

use crate::error::{Error, Result};
use crate::numcore::{sign, ParamVector, Rng};
use crate::objectives::{Activation, MlpObjective, Objective, ToyMlp};
use crate::optim::{ham_iterate_with_grad, BaseKind, BaseOptimizer, HamConfig};
use crate::trace::RunTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Two interleaved half circles with Gaussian jitter `noise`; classes alternate.
pub fn two_moons(n: usize, noise: f64, rng: &mut Rng) -> Dataset {
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let t = std::f64::consts::PI * rng.uniform();
        let (x, y) = if label == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        inputs.push(vec![x + noise * rng.normal(), y + noise * rng.normal()]);
        labels.push(label);
    }
    Dataset { inputs, labels }
}

pub const TRAIN_SIZE: usize = 500;
pub const TEST_SIZE: usize = 500;
pub const MOONS_NOISE: f64 = 0.2;

/// The fixed 500/500 train/test split for `seed`.
pub fn moons_split(seed: u64) -> (Dataset, Dataset) {
    let mut rng = Rng::new(seed ^ 0x6d6f_6f6e);
    let train = two_moons(TRAIN_SIZE, MOONS_NOISE, &mut rng);
    let test = two_moons(TEST_SIZE, MOONS_NOISE, &mut rng);
    (train, test)
}

/// The 2–32–2 tanh network used throughout.
pub fn toy_network() -> ToyMlp {
    ToyMlp::new(2, 32, 2, Activation::Tanh)
}

/// A network, its parameters and a trainability mask (`true` = trainable).
/// Masked-out entries are held at exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedModel {
    pub mlp: ToyMlp,
    pub params: ParamVector,
    pub mask: Vec<bool>,
}

impl MaskedModel {
    pub fn dense(mlp: ToyMlp, params: ParamVector) -> Result<Self> {
        params.ensure_len(mlp.param_count())?;
        let mask = vec![true; params.len()];
        Ok(MaskedModel { mlp, params, mask })
    }

    /// Fraction of weight entries (biases excluded) that are masked out.
    pub fn sparsity(&self) -> f64 {
        let flags = self.mlp.weight_flags();
        let total = flags.iter().filter(|&&f| f).count();
        let off = flags.iter().zip(&self.mask).filter(|(&w, &m)| w && !m).count();
        off as f64 / total as f64
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    /// Replace the mask and zero every newly masked entry.
    pub fn apply_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: mask.len(),
            });
        }
        for (p, &m) in self.params.as_mut_slice().iter_mut().zip(&mask) {
            if !m {
                *p = 0.0;
            }
        }
        self.mask = mask;
        Ok(())
    }

    pub fn lift_mask(&mut self) {
        self.mask = vec![true; self.params.len()];
    }

    fn check_layers(&self, mask: &[bool]) -> Result<()> {
        for (li, layer) in self.mlp.layers().iter().enumerate() {
            if !layer.weights.clone().any(|i| mask[i]) {
                return Err(Error::invalid(format!(
                    "sparsity leaves layer {li} with no trainable weights"
                )));
            }
        }
        Ok(())
    }
}

fn check_fraction(s: f64) -> Result<()> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::invalid(format!("sparsity must lie in [0, 1), got {s}")));
    }
    Ok(())
}

/// Layerwise-uniform random mask masking `round(s·count)` weights per layer.
/// Biases stay trainable.
pub fn random_mask(model: &MaskedModel, s: f64, seed: u64) -> Result<MaskedModel> {
    check_fraction(s)?;
    let mut rng = Rng::new(seed);
    let mut mask = vec![true; model.params.len()];
    for layer in model.mlp.layers() {
        let mut idx: Vec<usize> = layer.weights.collect();
        rng.shuffle(&mut idx);
        let off = (s * idx.len() as f64).round() as usize;
        for &i in &idx[..off] {
            mask[i] = false;
        }
    }
    model.check_layers(&mask)?;
    let mut out = model.clone();
    out.apply_mask(mask)?;
    Ok(out)
}

/// Keep the `count − round(s·count)` eligible entries of largest magnitude;
/// ties go to the lower index. Ineligible entries are always kept.
pub fn magnitude_mask(values: &[f64], eligible: &[bool], s: f64) -> Result<Vec<bool>> {
    check_fraction(s)?;
    if eligible.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: values.len(),
            got: eligible.len(),
        });
    }
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| eligible[i]).collect();
    let prune = (s * idx.len() as f64).round() as usize;
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    let mut mask = vec![true; values.len()];
    for &i in &idx[idx.len() - prune..] {
        mask[i] = false;
    }
    Ok(mask)
}

/// Magnitude pruning of each layer's weights to sparsity `s`, zeroing pruned
/// entries. Biases are never pruned.
pub fn magnitude_prune(model: &MaskedModel, s: f64) -> Result<MaskedModel> {
    let mut mask = vec![true; model.params.len()];
    for layer in model.mlp.layers() {
        let range = layer.weights;
        let part = magnitude_mask(&model.params.as_slice()[range.clone()], &vec![true; range.len()], s)?;
        mask[range].copy_from_slice(&part);
    }
    model.check_layers(&mask)?;
    let mut out = model.clone();
    out.apply_mask(mask)?;
    Ok(out)
}

/// Wraps an objective so masked-out coordinates see a zero gradient.
pub struct MaskedObjective<'a> {
    pub inner: &'a dyn Objective,
    pub mask: &'a [bool],
}

impl Objective for MaskedObjective<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value_and_grad(&self, x: &ParamVector) -> Result<(f64, ParamVector)> {
        let (f, mut g) = self.inner.value_and_grad(x)?;
        for (gi, &m) in g.as_mut_slice().iter_mut().zip(self.mask) {
            if !m {
                *gi = 0.0;
            }
        }
        Ok((f, g))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub base: BaseKind,
    pub ham: HamConfig,
    pub batch: usize,
    /// Seeds the mini-batch order.
    pub seed: u64,
    pub log_every: usize,
}

impl TrainConfig {
    pub fn new(base: BaseKind, ham: HamConfig, seed: u64) -> Self {
        TrainConfig {
            base,
            ham,
            batch: 32,
            seed,
            log_every: 1,
        }
    }
}

/// Mini-batch training state. The step counter, batch order and optimizer
/// buffers persist across calls to [`Trainer::run`], so phases can be chained.
pub struct Trainer<'d> {
    pub model: MaskedModel,
    pub trace: RunTrace,
    data: &'d Dataset,
    cfg: TrainConfig,
    base: BaseOptimizer,
    rng: Rng,
    order: Vec<usize>,
    cursor: usize,
    step: usize,
    flips: usize,
}

impl<'d> Trainer<'d> {
    pub fn new(model: MaskedModel, data: &'d Dataset, cfg: TrainConfig) -> Result<Self> {
        if data.is_empty() || cfg.batch == 0 {
            return Err(Error::invalid("training needs data and a positive batch size"));
        }
        cfg.ham.validate(model.params.len())?;
        let base = BaseOptimizer::new(cfg.base, model.params.len());
        let rng = Rng::new(cfg.seed);
        Ok(Trainer {
            model,
            trace: RunTrace::default(),
            data,
            base,
            rng,
            order: Vec::new(),
            cursor: 0,
            step: 0,
            flips: 0,
            cfg,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    fn next_batch(&mut self) -> (Vec<Vec<f64>>, Vec<usize>) {
        let b = self.cfg.batch.min(self.data.len());
        let mut inputs = Vec::with_capacity(b);
        let mut labels = Vec::with_capacity(b);
        for _ in 0..b {
            if self.cursor == self.order.len() {
                self.order = (0..self.data.len()).collect();
                self.rng.shuffle(&mut self.order);
                self.cursor = 0;
            }
            let i = self.order[self.cursor];
            self.cursor += 1;
            inputs.push(self.data.inputs[i].clone());
            labels.push(self.data.labels[i]);
        }
        (inputs, labels)
    }

    /// Swap in a new mask, zeroing masked parameters and their optimizer buffers.
    pub fn set_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        self.model.apply_mask(mask)?;
        self.base.reset_where(&self.model.mask);
        Ok(())
    }

    pub fn lift_mask(&mut self) {
        self.model.lift_mask();
    }

    /// Run `steps` HAM iterations on mini-batches. Per-step iterates are
    /// passed to `observe`.
    pub fn run_observed(&mut self, steps: usize, observe: &mut dyn FnMut(usize, &ParamVector)) -> Result<()> {
        let every = self.cfg.log_every.max(1);
        for _ in 0..steps {
            let (inputs, labels) = self.next_batch();
            let inner = MlpObjective {
                mlp: &self.model.mlp,
                inputs: &inputs,
                labels: &labels,
            };
            let obj = MaskedObjective {
                inner: &inner,
                mask: &self.model.mask,
            };
            let (loss, g) = obj.value_and_grad(&self.model.params)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteAtStep {
                    context: "toy training loss",
                    step: self.step,
                    index: 0,
                });
            }
            let (next, mut row) = ham_iterate_with_grad(
                &obj,
                &self.model.params,
                loss,
                &g,
                &mut self.base,
                &self.cfg.ham,
                self.step,
            )?;
            self.flips += row.sign_flips;
            self.model.params = next;
            self.step += 1;
            observe(self.step, &self.model.params);
            if self.step.is_multiple_of(every) {
                row.sign_flips = self.flips;
                self.flips = 0;
                self.trace.push(row);
            }
        }
        self.trace.grad_calls = self.step + self.base.extra_grad_calls();
        Ok(())
    }

    pub fn run(&mut self, steps: usize) -> Result<()> {
        self.run_observed(steps, &mut |_, _| {})
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Dense(usize),
    /// Train under the magnitude mask at the target sparsity.
    Sparse(usize),
}

impl Phase {
    pub fn steps(self) -> usize {
        match self {
            Phase::Dense(n) | Phase::Sparse(n) => n,
        }
    }
}

/// Dense warm-up, then alternating sparse/dense phases of `phase` steps,
/// ending on a sparse phase.
pub fn acdc_schedule(warmup: usize, phase: usize, cycles: usize) -> Vec<Phase> {
    let mut out = vec![Phase::Dense(warmup)];
    for _ in 0..cycles {
        out.push(Phase::Sparse(phase));
        out.push(Phase::Dense(phase));
    }
    out.push(Phase::Sparse(phase));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRun {
    pub model: MaskedModel,
    pub trace: RunTrace,
    pub test_accuracy: f64,
}

/// Alternate dense and magnitude-pruned phases, then enforce sparsity `s` on
/// the final model and score it on `test`.
pub fn acdc_lite_train(
    model: MaskedModel,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    schedule: &[Phase],
    s: f64,
) -> Result<SparseRun> {
    check_fraction(s)?;
    let mut trainer = Trainer::new(model, train, cfg.clone())?;
    for &phase in schedule {
        match phase {
            Phase::Dense(n) => {
                trainer.lift_mask();
                trainer.run(n)?;
            }
            Phase::Sparse(n) => {
                let pruned = magnitude_prune(&trainer.model, s)?;
                trainer.set_mask(pruned.mask)?;
                trainer.run(n)?;
            }
        }
    }
    let trace = std::mem::take(&mut trainer.trace);
    let model = magnitude_prune(&trainer.model, s)?;
    let test_accuracy = model.mlp.accuracy(&model.params, &test.inputs, &test.labels)?;
    Ok(SparseRun {
        model,
        trace,
        test_accuracy,
    })
}

/// Train a fixed mask (pruning at initialization) for `steps` steps.
pub fn pai_train(
    model: MaskedModel,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    steps: usize,
) -> Result<SparseRun> {
    let mut trainer = Trainer::new(model, train, cfg.clone())?;
    trainer.run(steps)?;
    let trace = std::mem::take(&mut trainer.trace);
    let model = trainer.model;
    let test_accuracy = model.mlp.accuracy(&model.params, &test.inputs, &test.labels)?;
    Ok(SparseRun {
        model,
        trace,
        test_accuracy,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignStabilityReport {
    /// First snapshot index after which no flips occur; `None` if the last
    /// interval still flips.
    pub t0: Option<usize>,
    /// `flips[i]` counts strict sign reversals between snapshots `i` and `i+1`.
    pub flips: Vec<usize>,
}

impl SignStabilityReport {
    /// Report over precomputed per-interval flip counts.
    pub fn from_counts(flips: Vec<usize>) -> Self {
        let t0 = match flips.iter().rposition(|&c| c > 0) {
            None => Some(0),
            Some(last) if last + 1 == flips.len() => None,
            Some(last) => Some(last + 1),
        };
        SignStabilityReport { t0, flips }
    }

    pub fn total(&self) -> usize {
        self.flips.iter().sum()
    }

    /// Flips among the first `intervals` intervals.
    pub fn early(&self, intervals: usize) -> usize {
        self.flips.iter().take(intervals).sum()
    }
}

/// Count strict sign reversals between consecutive snapshots. Moves to or
/// from exact zero are not flips.
pub fn sign_flip_census(snapshots: &[ParamVector]) -> Result<SignStabilityReport> {
    if snapshots.len() < 2 {
        return Err(Error::invalid("sign census needs at least two snapshots"));
    }
    let n = snapshots[0].len();
    let mut flips = Vec::with_capacity(snapshots.len() - 1);
    for w in snapshots.windows(2) {
        w[1].ensure_len(n)?;
        flips.push(
            w[0].iter()
                .zip(w[1].iter())
                .filter(|(&a, &b)| sign(a) * sign(b) < 0.0)
                .count(),
        );
    }
    Ok(SignStabilityReport::from_counts(flips))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSummary {
    pub seed: u64,
    pub method: String,
    pub sparsity: f64,
    pub final_accuracy: f64,
    pub t0: Option<usize>,
    pub mean_l1: f64,
}
