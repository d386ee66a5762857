//! Discrete optimizer steps: base optimizers, the hyperbolic step, the HAM
//! iteration that alternates them, the idealized exponential update and the
//! `m ⊙ w` overparameterized baseline.

use crate::error::{Error, Result};
use crate::numcore::{sign, ParamVector};
use crate::objectives::Objective;
use crate::trace::{RunTrace, TraceRow};

/// Learning-rate schedule `k ↦ η(k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant(f64),
    /// Linear ramp from `base` to `peak` at `peak_step`, then back to `base`
    /// at `total_steps`; constant `base` afterwards.
    Triangular {
        base: f64,
        peak: f64,
        peak_step: usize,
        total_steps: usize,
    },
}

impl LrSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            LrSchedule::Constant(eta) => eta,
            LrSchedule::Triangular {
                base,
                peak,
                peak_step,
                total_steps,
            } => {
                if k <= peak_step {
                    let t = if peak_step == 0 {
                        1.0
                    } else {
                        k as f64 / peak_step as f64
                    };
                    base + (peak - base) * t
                } else if k < total_steps {
                    let t = (k - peak_step) as f64 / (total_steps - peak_step) as f64;
                    peak + (base - peak) * t
                } else {
                    base
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LrSchedule::Constant(eta) => eta > 0.0 && eta.is_finite(),
            LrSchedule::Triangular {
                base,
                peak,
                peak_step,
                total_steps,
            } => base > 0.0 && peak > 0.0 && peak.is_finite() && peak_step <= total_steps,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "learning-rate schedule must stay positive: {self:?}"
            )))
        }
    }
}

/// Which sign multiplies the gradient inside the hyperbolic exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignSource {
    /// `sign(x_{k+½})`, the deployed variant.
    #[default]
    HalfStep,
    /// `sign(x_k)`, the "signed" ablation.
    PreviousStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamConfig {
    pub alpha: f64,
    pub beta: f64,
    pub schedule: LrSchedule,
    /// `true` entries receive the hyperbolic step; `None` applies it everywhere.
    pub group_mask: Option<Vec<bool>>,
    /// Suppress `beta` where the gradient is exactly zero (dropout-style masking).
    pub mask_beta_on_zero_grad: bool,
    /// Clamp the exponent to `[-c, c]`. `None` leaves it untouched and fails on overflow.
    pub exponent_clamp: Option<f64>,
    pub sign_source: SignSource,
}

impl HamConfig {
    pub fn new(alpha: f64, beta: f64, eta: f64) -> Self {
        HamConfig {
            alpha,
            beta,
            schedule: LrSchedule::Constant(eta),
            group_mask: None,
            mask_beta_on_zero_grad: false,
            exponent_clamp: None,
            sign_source: SignSource::HalfStep,
        }
    }

    /// α = β = 0: the base optimizer alone.
    pub fn disabled(eta: f64) -> Self {
        Self::new(0.0, 0.0, eta)
    }

    pub fn with_sign_source(mut self, source: SignSource) -> Self {
        self.sign_source = source;
        self
    }

    pub fn with_group_mask(mut self, mask: Vec<bool>) -> Self {
        self.group_mask = Some(mask);
        self
    }

    pub fn with_schedule(mut self, schedule: LrSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.schedule.validate()?;
        if !(self.beta >= 0.0) || !self.beta.is_finite() || !self.alpha.is_finite() {
            return Err(Error::invalid("alpha must be finite and beta finite and nonnegative"));
        }
        if let Some(mask) = &self.group_mask {
            if mask.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: mask.len(),
                });
            }
        }
        if let Some(c) = self.exponent_clamp {
            if !(c > 0.0) {
                return Err(Error::invalid("exponent clamp must be positive"));
            }
        }
        Ok(())
    }

    fn applies(&self, i: usize) -> bool {
        self.group_mask.as_ref().is_none_or(|m| m[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseKind {
    Gd,
    Momentum { mu: f64 },
    AdamLite { beta1: f64, beta2: f64, eps: f64 },
    SamGd { rho: f64 },
}

impl BaseKind {
    pub fn adam() -> Self {
        BaseKind::AdamLite {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sam() -> Self {
        BaseKind::SamGd { rho: 0.05 }
    }
}

/// Base optimizer with its auxiliary buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseOptimizer {
    kind: BaseKind,
    first: Vec<f64>,
    second: Vec<f64>,
    t: u64,
    extra_grad_calls: usize,
}

impl BaseOptimizer {
    pub fn new(kind: BaseKind, n: usize) -> Self {
        let (first, second) = match kind {
            BaseKind::Gd | BaseKind::SamGd { .. } => (Vec::new(), Vec::new()),
            BaseKind::Momentum { .. } => (vec![0.0; n], Vec::new()),
            BaseKind::AdamLite { .. } => (vec![0.0; n], vec![0.0; n]),
        };
        BaseOptimizer {
            kind,
            first,
            second,
            t: 0,
            extra_grad_calls: 0,
        }
    }

    pub fn gd() -> Self {
        Self::new(BaseKind::Gd, 0)
    }

    pub fn kind(&self) -> BaseKind {
        self.kind
    }

    /// Gradient evaluations made inside `step` beyond the one it was handed.
    pub fn extra_grad_calls(&self) -> usize {
        self.extra_grad_calls
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    /// Zero the buffers at every index where `keep` is false.
    pub fn reset_where(&mut self, keep: &[bool]) {
        for buf in [&mut self.first, &mut self.second] {
            for (b, &k) in buf.iter_mut().zip(keep) {
                if !k {
                    *b = 0.0;
                }
            }
        }
    }

    /// One base step from `x` with gradient `g = ∇f(x)`, returning `x_{k+½}`.
    /// `obj` is consulted only by SAM for the gradient at the ascent point.
    pub fn step(&mut self, obj: &dyn Objective, x: &ParamVector, g: &ParamVector, eta: f64) -> Result<ParamVector> {
        g.ensure_len(x.len())?;
        match self.kind {
            BaseKind::Gd => x.axpy(-eta, g),
            BaseKind::Momentum { mu } => {
                if self.first.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.first.len(),
                        got: x.len(),
                    });
                }
                for (b, &gi) in self.first.iter_mut().zip(g.iter()) {
                    *b = mu * *b + gi;
                }
                Ok(x.iter().zip(&self.first).map(|(xi, b)| xi - eta * b).collect())
            }
            BaseKind::AdamLite { beta1, beta2, eps } => {
                if self.first.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.first.len(),
                        got: x.len(),
                    });
                }
                self.t += 1;
                let c1 = 1.0 - beta1.powf(self.t as f64);
                let c2 = 1.0 - beta2.powf(self.t as f64);
                let mut out = ParamVector::zeros(x.len());
                for i in 0..x.len() {
                    let gi = g[i];
                    self.first[i] = beta1 * self.first[i] + (1.0 - beta1) * gi;
                    self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * gi * gi;
                    let m_hat = self.first[i] / c1;
                    let v_hat = self.second[i] / c2;
                    out[i] = x[i] - eta * m_hat / (v_hat.sqrt() + eps);
                }
                Ok(out)
            }
            BaseKind::SamGd { rho } => {
                let norm = g.l2();
                if norm == 0.0 {
                    return x.axpy(-eta, g);
                }
                let ascent = x.axpy(rho / norm, g)?;
                let g_adv = obj.gradient(&ascent)?;
                self.extra_grad_calls += 1;
                x.axpy(-eta, &g_adv)
            }
        }
    }
}

/// The hyperbolic step
/// `x ← x_{k+½} ⊙ exp(−η(α·sign(·)·g + β))` on masked-in coordinates.
///
/// `g` must be the gradient at `x_prev` that the base step consumed. The sign
/// is taken from `x_half` or `x_prev` according to `cfg.sign_source`.
pub fn hyperbolic_step(
    x_half: &ParamVector,
    x_prev: &ParamVector,
    g: &ParamVector,
    cfg: &HamConfig,
    eta: f64,
) -> Result<ParamVector> {
    let n = x_half.len();
    g.ensure_len(n)?;
    x_prev.ensure_len(n)?;
    cfg.validate(n)?;
    let mut out = x_half.clone();
    for i in 0..n {
        if !cfg.applies(i) {
            continue;
        }
        let s = match cfg.sign_source {
            SignSource::HalfStep => sign(x_half[i]),
            SignSource::PreviousStep => sign(x_prev[i]),
        };
        let beta = if cfg.mask_beta_on_zero_grad && g[i] == 0.0 {
            0.0
        } else {
            cfg.beta
        };
        let mut e = -eta * (cfg.alpha * s * g[i] + beta);
        if let Some(c) = cfg.exponent_clamp {
            e = e.clamp(-c, c);
        }
        let v = x_half[i] * e.exp();
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "hyperbolic step",
                index: i,
            });
        }
        debug_assert!(v == 0.0 || sign(v) == sign(x_half[i]));
        out[i] = v;
    }
    Ok(out)
}

/// One HAM iteration: `g = ∇f(x_k)`, base step, then the hyperbolic step with
/// the same `g`. The row holds `f(x_k)`, `‖x_{k+1}‖₁` and flips vs `x_k`.
pub fn ham_iterate(
    obj: &dyn Objective,
    x: &ParamVector,
    base: &mut BaseOptimizer,
    cfg: &HamConfig,
    k: usize,
) -> Result<(ParamVector, TraceRow)> {
    let (loss, g) = obj.value_and_grad(x)?;
    ham_iterate_with_grad(obj, x, loss, &g, base, cfg, k)
}

/// [`ham_iterate`] with a precomputed `(f(x_k), ∇f(x_k))`.
pub fn ham_iterate_with_grad(
    obj: &dyn Objective,
    x: &ParamVector,
    loss: f64,
    g: &ParamVector,
    base: &mut BaseOptimizer,
    cfg: &HamConfig,
    k: usize,
) -> Result<(ParamVector, TraceRow)> {
    let eta = cfg.schedule.at(k);
    let x_half = base.step(obj, x, g, eta)?;
    let next = hyperbolic_step(&x_half, x, g, cfg, eta)?;
    if let Some(index) = next.first_non_finite() {
        return Err(Error::NonFiniteAtStep {
            context: "ham iterate",
            step: k,
            index,
        });
    }
    let row = TraceRow {
        step: k,
        loss,
        l1: next.l1(),
        dist: None,
        sign_flips: x.sign_flips(&next),
    };
    Ok((next, row))
}

/// Run `steps` HAM iterations from `x0`, logging every `log_every` steps
/// (and the last one).
pub fn run_ham(
    obj: &dyn Objective,
    x0: &ParamVector,
    base: &mut BaseOptimizer,
    cfg: &HamConfig,
    steps: usize,
    log_every: usize,
) -> Result<(ParamVector, RunTrace)> {
    cfg.validate(x0.len())?;
    let log_every = log_every.max(1);
    let mut x = x0.clone();
    let mut trace = RunTrace::default();
    let mut flips = 0;
    for k in 0..steps {
        let (next, mut row) = ham_iterate(obj, &x, base, cfg, k)?;
        flips += row.sign_flips;
        if (k + 1) % log_every == 0 || k + 1 == steps {
            row.sign_flips = flips;
            flips = 0;
            trace.push(row);
        }
        x = next;
    }
    trace.grad_calls = steps + base.extra_grad_calls();
    Ok((x, trace))
}

/// `x ⊙ exp(−η(2·sign₀⊙g + β))`.
pub fn exponential_update(
    x: &ParamVector,
    g: &ParamVector,
    sign0: &ParamVector,
    eta: f64,
    beta: f64,
) -> Result<ParamVector> {
    g.ensure_len(x.len())?;
    sign0.ensure_len(x.len())?;
    if sign0.iter().any(|&s| s != -1.0 && s != 0.0 && s != 1.0) {
        return Err(Error::invalid("sign0 entries must be -1, 0 or 1"));
    }
    Ok(x.iter()
        .zip(g.iter().zip(sign0.iter()))
        .map(|(&xi, (&gi, &si))| xi * (-eta * (2.0 * si * gi + beta)).exp())
        .collect())
}

/// The `x = m ⊙ w` factorization trained by plain gradient descent with
/// weight decay `β/2` on each factor.
#[derive(Debug, Clone, PartialEq)]
pub struct OverparamState {
    pub m: ParamVector,
    pub w: ParamVector,
    pub beta: f64,
}

impl OverparamState {
    /// `m₀ = sign(x₀)·√|x₀|`, `w₀ = √|x₀|`, so `m₀⊙w₀ = x₀` and `m₀² + w₀² = 2|x₀|`.
    pub fn from_product(x0: &ParamVector, beta: f64) -> Self {
        OverparamState {
            m: x0.map(|v| sign(v) * v.abs().sqrt()),
            w: x0.map(|v| v.abs().sqrt()),
            beta,
        }
    }

    pub fn new(m: ParamVector, w: ParamVector, beta: f64) -> Result<Self> {
        w.ensure_len(m.len())?;
        Ok(OverparamState { m, w, beta })
    }

    pub fn product(&self) -> ParamVector {
        self.m.iter().zip(self.w.iter()).map(|(a, b)| a * b).collect()
    }

    /// Simultaneous update with `g` evaluated at `m ⊙ w`.
    pub fn step(&mut self, g: &ParamVector, eta: f64) -> Result<()> {
        g.ensure_len(self.m.len())?;
        let half = 0.5 * self.beta;
        for i in 0..g.len() {
            let (m, w) = (self.m[i], self.w[i]);
            self.m[i] = m - eta * (w * g[i] + half * m);
            self.w[i] = w - eta * (m * g[i] + half * w);
        }
        Ok(())
    }
}

pub fn mw_step(state: &OverparamState, g: &ParamVector, eta: f64) -> Result<OverparamState> {
    let mut next = state.clone();
    next.step(g, eta)?;
    Ok(next)
}

/// Run the `m ⊙ w` descent and the exponential update side by side from the
/// matched initialization and return `max_k ‖m_k⊙w_k − x_k‖∞`.
///
/// Fails if any coordinate of either trajectory changes sign, since the
/// exponential update fixes the sign at `sign(x₀)`.
pub fn first_order_gap_check(obj: &dyn Objective, x0: &ParamVector, eta: f64, beta: f64, steps: usize) -> Result<f64> {
    x0.ensure_len(obj.dim())?;
    if let Some(i) = x0.iter().position(|&v| v == 0.0) {
        return Err(Error::invalid(format!("x0[{i}] is zero; its sign is undefined")));
    }
    let sign0 = x0.sign();
    let mut mw = OverparamState::from_product(x0, beta);
    let mut x = x0.clone();
    let mut gap: f64 = 0.0;
    for step in 0..steps {
        let g_mw = obj.gradient(&mw.product())?;
        mw.step(&g_mw, eta)?;
        let g_x = obj.gradient(&x)?;
        x = exponential_update(&x, &g_x, &sign0, eta, beta)?;
        let p = mw.product();
        for i in 0..x.len() {
            if sign(p[i]) != sign0[i] || sign(x[i]) != sign0[i] {
                return Err(Error::SignFlip { step, index: i });
            }
        }
        gap = gap.max(p.max_abs_diff(&x)?);
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Matrix;
    use crate::objectives::{LeastSquares, SeparableQuadratic};
    use proptest::prelude::*;

    struct Flat(usize);
    impl Objective for Flat {
        fn dim(&self) -> usize {
            self.0
        }
        fn value_and_grad(&self, _x: &ParamVector) -> Result<(f64, ParamVector)> {
            Ok((0.0, ParamVector::zeros(self.0)))
        }
    }

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from(v)
    }

    /// exp by Taylor series with compensated summation.
    fn exp_series(e: f64) -> f64 {
        let (mut sum, mut c, mut term) = (0.0f64, 0.0f64, 1.0f64);
        for k in 0..60 {
            let y = term - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
            term *= e / (k + 1) as f64;
        }
        sum
    }

    #[test]
    fn base_steps() {
        let q = Flat(1);
        let mut gd = BaseOptimizer::gd();
        let out = gd.step(&q, &pv(&[1.0]), &pv(&[0.5]), 0.1).unwrap();
        assert_eq!(out.as_slice(), &[0.95]);

        let mut mom = BaseOptimizer::new(BaseKind::Momentum { mu: 0.9 }, 2);
        let x = pv(&[1.0, -2.0]);
        let g = pv(&[0.3, -0.7]);
        assert_eq!(mom.step(&Flat(2), &x, &g, 0.1).unwrap(), x.axpy(-0.1, &g).unwrap());

        let mut adam = BaseOptimizer::new(BaseKind::adam(), 3);
        let x = pv(&[0.0, 1.0, -1.0]);
        let g = pv(&[2.0, -0.01, 0.5]);
        let out = adam.step(&Flat(3), &x, &g, 0.01).unwrap();
        for i in 0..3 {
            assert_eq!(sign(out[i] - x[i]), -sign(g[i]));
        }
        assert!(adam.second_moment().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn sam_perturbs_and_counts() {
        let q = SeparableQuadratic::new(vec![1.0, 4.0], vec![0.0, 0.0]).unwrap();
        let mut sam = BaseOptimizer::new(BaseKind::SamGd { rho: 0.1 }, 2);
        let x = pv(&[1.0, 1.0]);
        let g = q.gradient(&x).unwrap();
        let out = sam.step(&q, &x, &g, 0.1).unwrap();
        let n = g.l2();
        let adv = x.axpy(0.1 / n, &g).unwrap();
        let expected = x.axpy(-0.1, &q.gradient(&adv).unwrap()).unwrap();
        assert_eq!(out, expected);
        assert_eq!(sam.extra_grad_calls(), 1);

        let zero = pv(&[0.0, 0.0]);
        let out = sam.step(&q, &zero, &zero, 0.1).unwrap();
        assert_eq!(out, zero);
        assert_eq!(sam.extra_grad_calls(), 1);
    }

    #[test]
    fn hyperbolic_identity_cases() {
        let x = pv(&[0.5, -1.0, 0.0, 2.0]);
        let g = pv(&[0.1, -0.3, 0.7, 0.0]);
        let out = hyperbolic_step(&x, &x, &g, &HamConfig::disabled(0.1), 0.1).unwrap();
        assert_eq!(out, x);
        let zero = ParamVector::zeros(4);
        let out = hyperbolic_step(&x, &x, &zero, &HamConfig::new(5.0, 0.0, 0.1), 0.1).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn hyperbolic_formula() {
        let cfg = HamConfig::new(200.0, 1e-3, 1e-3);
        let out = hyperbolic_step(&pv(&[0.5]), &pv(&[0.5]), &pv(&[0.2]), &cfg, 1e-3).unwrap();
        let expected = 0.5 * exp_series(-1e-3 * (200.0 * 0.2 + 1e-3));
        assert!(
            (out[0] - expected).abs() <= 1e-15 * expected,
            "{} vs {}",
            out[0],
            expected
        );
    }

    #[test]
    fn hyperbolic_mask_beta_and_sign_source() {
        let x_half = pv(&[0.5, -0.5, 0.2]);
        let x_prev = pv(&[-0.1, -0.4, 0.3]);
        let g = pv(&[0.2, 0.0, 0.1]);
        let cfg = HamConfig::new(2.0, 0.5, 0.1).with_group_mask(vec![true, true, false]);
        let out = hyperbolic_step(&x_half, &x_prev, &g, &cfg, 0.1).unwrap();
        assert_eq!(out[2], 0.2);
        assert_eq!(out[1], -0.5 * (-0.1f64 * 0.5).exp());

        let mut masked = cfg.clone();
        masked.mask_beta_on_zero_grad = true;
        let out = hyperbolic_step(&x_half, &x_prev, &g, &masked, 0.1).unwrap();
        assert_eq!(out[1], -0.5);

        let signed = cfg.clone().with_sign_source(SignSource::PreviousStep);
        let out = hyperbolic_step(&x_half, &x_prev, &g, &signed, 0.1).unwrap();
        assert_eq!(out[0], 0.5 * (-0.1f64 * (-2.0 * 0.2 + 0.5)).exp());

        assert!(hyperbolic_step(
            &x_half,
            &x_prev,
            &g,
            &HamConfig::new(1.0, 0.0, 0.1).with_group_mask(vec![true]),
            0.1
        )
        .is_err());
    }

    #[test]
    fn hyperbolic_overflow_and_clamp() {
        let cfg = HamConfig::new(1e6, 0.0, 1.0);
        let x = pv(&[1.0]);
        let g = pv(&[-1.0]);
        let err = hyperbolic_step(&x, &x, &g, &cfg, 1.0).unwrap_err();
        assert_eq!(
            err,
            Error::NonFinite {
                context: "hyperbolic step",
                index: 0
            }
        );
        let mut clamped = cfg.clone();
        clamped.exponent_clamp = Some(10.0);
        let out = hyperbolic_step(&x, &x, &g, &clamped, 1.0).unwrap();
        assert_eq!(out[0], 10f64.exp());
    }

    #[test]
    fn degenerate_ham_is_gd_bitwise() {
        let q = SeparableQuadratic::new(vec![1.0, 3.0, 0.2], vec![1.0, -2.0, 0.5]).unwrap();
        let x0 = pv(&[0.3, 0.4, -1.0]);
        let eta = 0.05;
        let (x_ham, _) = run_ham(&q, &x0, &mut BaseOptimizer::gd(), &HamConfig::disabled(eta), 1000, 1).unwrap();
        let mut x = x0.clone();
        for _ in 0..1000 {
            let g = q.gradient(&x).unwrap();
            x = x.axpy(-eta, &g).unwrap();
        }
        assert_eq!(x_ham.max_abs_diff(&x).unwrap(), 0.0);
    }

    #[test]
    fn masked_coordinates_follow_base() {
        let q = SeparableQuadratic::new(vec![1.0, 2.0, 0.5], vec![1.0, -1.0, 2.0]).unwrap();
        let x0 = pv(&[0.3, 0.4, -1.0]);
        let eta = 0.05;
        let cfg = HamConfig::new(5.0, 0.01, eta).with_group_mask(vec![false, true, false]);
        let mut x = x0.clone();
        let mut base = BaseOptimizer::new(BaseKind::Momentum { mu: 0.9 }, 3);
        let mut shadow = BaseOptimizer::new(BaseKind::Momentum { mu: 0.9 }, 3);
        for k in 0..50 {
            let g = q.gradient(&x).unwrap();
            let plain = shadow.step(&q, &x, &g, eta).unwrap();
            let (next, _) = ham_iterate(&q, &x, &mut base, &cfg, k).unwrap();
            assert_eq!(next[0], plain[0]);
            assert_eq!(next[2], plain[2]);
            x = next;
        }
    }

    #[test]
    fn ham_loss_never_above_gd() {
        let q = SeparableQuadratic::new(vec![1.0, 0.5, 2.0], vec![1.0, 2.0, 0.5]).unwrap();
        let x0 = pv(&[0.2, 0.1, 0.3]);
        let eta = 0.01;
        let cfg = HamConfig::new(1.0, 0.0, eta);
        let (mut xh, mut xg) = (x0.clone(), x0.clone());
        let mut base = BaseOptimizer::gd();
        for k in 0..2000 {
            let fh = q.value(&xh).unwrap();
            let fg = q.value(&xg).unwrap();
            assert!(fh <= fg, "step {k}: {fh} > {fg}");
            xh = ham_iterate(&q, &xh, &mut base, &cfg, k).unwrap().0;
            let g = q.gradient(&xg).unwrap();
            xg = xg.axpy(-eta, &g).unwrap();
        }
    }

    #[test]
    fn ham_step_on_least_squares_composes_formulas() {
        let z = Matrix::from_row_major(2, 3, vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]).unwrap();
        let ls = LeastSquares::new(z, vec![1.0, -2.0]).unwrap();
        let x = pv(&[0.2, -0.4, 0.1]);
        let (alpha, beta, eta) = (3.0, 0.1, 0.05);
        // r = Zx - y = [-1.7, 2.4], g = Zᵀr = [-0.5, -3.4, 8.9]
        let g = [-0.5, -3.4, 8.9];
        let x_half = [0.2 - eta * g[0], -0.4 - eta * g[1], 0.1 - eta * g[2]];
        let expected: Vec<f64> = (0..3)
            .map(|i| x_half[i] * (-eta * (alpha * sign(x_half[i]) * g[i] + beta)).exp())
            .collect();
        let (next, row) = ham_iterate(&ls, &x, &mut BaseOptimizer::gd(), &HamConfig::new(alpha, beta, eta), 0).unwrap();
        for i in 0..3 {
            assert!((next[i] - expected[i]).abs() < 1e-14);
        }
        assert_eq!(row.sign_flips, 1);
        assert!((row.loss - 0.5 * (2.89 + 5.76)).abs() < 1e-14);
    }

    #[test]
    fn pure_decay_shrinks_l1_geometrically() {
        let x0 = pv(&[0.3, -2.0, 1.5]);
        let (eta, beta) = (0.1, 0.2);
        let (x, _) = run_ham(
            &Flat(3),
            &x0,
            &mut BaseOptimizer::gd(),
            &HamConfig::new(0.0, beta, eta),
            500,
            100,
        )
        .unwrap();
        let expected = x0.l1() * (-(500.0 * eta * beta)).exp();
        assert!((x.l1() - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn exponential_update_examples() {
        let x = pv(&[1.0, -0.5]);
        let g = pv(&[0.3, 0.1]);
        let s = x.sign();
        assert_eq!(exponential_update(&x, &g, &s, 0.0, 1.0).unwrap(), x);
        let out = exponential_update(&pv(&[1.0]), &pv(&[0.1]), &pv(&[1.0]), 0.01, 0.0).unwrap();
        assert!((out[0] - exp_series(-0.002)).abs() < 1e-16);
        let out = exponential_update(&pv(&[2.0]), &pv(&[5.0]), &pv(&[0.0]), 0.1, 0.3).unwrap();
        assert_eq!(out[0], 2.0 * (-0.03f64).exp());
        assert!(exponential_update(&x, &g, &pv(&[0.5, 1.0]), 0.1, 0.0).is_err());
    }

    #[test]
    fn mw_step_examples() {
        let s = OverparamState::from_product(&pv(&[4.0, -9.0, 0.0]), 0.0);
        assert_eq!(s.m.as_slice(), &[2.0, -3.0, 0.0]);
        assert_eq!(s.w.as_slice(), &[2.0, 3.0, 0.0]);
        assert_eq!(s.product().as_slice(), &[4.0, -9.0, 0.0]);

        let same = mw_step(&s, &ParamVector::zeros(3), 0.1).unwrap();
        assert_eq!(same, s);

        let s = OverparamState::new(pv(&[1.0]), pv(&[1.0]), 0.0).unwrap();
        let n = mw_step(&s, &pv(&[0.1]), 0.01).unwrap();
        assert!((n.m[0] - 0.999).abs() < 1e-15 && (n.w[0] - 0.999).abs() < 1e-15);
        assert!((n.product()[0] - 0.998001).abs() < 1e-15);
    }

    #[test]
    fn mw_product_matches_first_order_expansion() {
        let s = OverparamState::new(pv(&[0.8, -1.1]), pv(&[0.6, 0.9]), 0.3).unwrap();
        let g = pv(&[0.7, -0.4]);
        let x = s.product();
        let err = |eta: f64| {
            let p = mw_step(&s, &g, eta).unwrap().product();
            (0..2)
                .map(|i| {
                    let lin = x[i] - eta * (s.m[i].powi(2) + s.w[i].powi(2)) * g[i] - eta * s.beta * x[i];
                    (p[i] - lin).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!((3.9..4.1).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn mw_hyperbolic_invariant_drift_is_second_order() {
        let s0 = OverparamState::new(pv(&[0.8, -1.1]), pv(&[0.6, 0.9]), 0.0).unwrap();
        let g = pv(&[0.7, -0.4]);
        let drift = |eta: f64| {
            let s1 = mw_step(&s0, &g, eta).unwrap();
            let inv = |s: &OverparamState, i: usize| s.m[i].powi(2) - s.w[i].powi(2);
            (0..2).map(|i| (inv(&s1, i) - inv(&s0, i)).abs()).fold(0.0, f64::max)
        };
        let ratio = drift(1e-2) / drift(5e-3);
        assert!((3.99..4.01).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn gap_check_behaviour() {
        let q = SeparableQuadratic::new(vec![1.0, 2.0], vec![1.5, -1.0]).unwrap();
        let x0 = pv(&[0.8, -0.5]);
        let gap = first_order_gap_check(&q, &x0, 1e-3, 0.0, 200).unwrap();
        assert!(gap.is_finite() && gap < 1e-4, "gap {gap}");
        // exact square roots keep the matched initialization exact
        let exact = pv(&[0.25, -2.25]);
        assert_eq!(first_order_gap_check(&Flat(2), &exact, 1e-2, 0.0, 100).unwrap(), 0.0);
        assert!(first_order_gap_check(&q, &pv(&[0.0, 1.0]), 1e-3, 0.0, 10).is_err());
        // m = w = 0.5, g = 1.25, η = 0.8 sends both factors to exactly zero
        let flip = SeparableQuadratic::new(vec![1.0], vec![-1.0]).unwrap();
        assert!(matches!(
            first_order_gap_check(&flip, &pv(&[0.25]), 0.8, 0.0, 5),
            Err(Error::SignFlip { .. })
        ));
    }

    #[test]
    fn schedules() {
        let s = LrSchedule::Triangular {
            base: 0.1,
            peak: 1.0,
            peak_step: 10,
            total_steps: 20,
        };
        assert_eq!(s.at(0), 0.1);
        assert_eq!(s.at(10), 1.0);
        assert!((s.at(15) - 0.55).abs() < 1e-12);
        assert_eq!(s.at(25), 0.1);
        assert!(HamConfig::disabled(0.0).validate(1).is_err());
        let mut neg = HamConfig::new(1.0, -1.0, 0.1);
        assert!(neg.validate(1).is_err());
        neg.beta = 0.0;
        assert!(neg.validate(1).is_ok());
    }

    proptest! {
        #[test]
        fn hyperbolic_step_preserves_signs(
            xs in proptest::collection::vec(-10.0f64..10.0, 1..20),
            gs in proptest::collection::vec(-10.0f64..10.0, 20),
            alpha in -50.0f64..200.0,
            beta in 0.0f64..1.0,
            eta in 1e-4f64..1e-2,
        ) {
            let x = ParamVector::new(xs.clone());
            let g = ParamVector::new(gs[..xs.len()].to_vec());
            let out = hyperbolic_step(&x, &x, &g, &HamConfig::new(alpha, beta, eta), eta).unwrap();
            for i in 0..x.len() {
                prop_assert_eq!(sign(out[i]), sign(x[i]));
            }
        }
    }
}
