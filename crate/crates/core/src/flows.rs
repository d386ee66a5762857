//! Continuous-time Riemannian gradient flows
//! `dx/dt = −𝓘⁻¹(x) ⊙ ∇f(x) − βx`, integrated with fixed-step RK4.

use crate::error::{Error, Result};
use crate::numcore::ParamVector;
use crate::objectives::Objective;
use crate::trace::distance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricKind {
    /// Flat metric, plain gradient flow.
    Gd,
    /// `m ⊙ w` overparameterization, `𝓘⁻¹(x) = √(x² + γ²)`.
    Mw { gamma: f64 },
    /// HAM, `𝓘⁻¹(x) = 1 + α|x|`.
    Ham { alpha: f64 },
}

/// Pointwise inverse metric ("artificial learning rate").
pub fn metric_inverse(kind: MetricKind, x: &ParamVector) -> Result<ParamVector> {
    match kind {
        MetricKind::Gd => Ok(ParamVector::filled(x.len(), 1.0)),
        MetricKind::Mw { gamma } => {
            if !(gamma > 0.0) {
                return Err(Error::invalid("mw metric needs gamma > 0"));
            }
            Ok(x.map(|v| (v * v + gamma * gamma).sqrt()))
        }
        MetricKind::Ham { alpha } => {
            let out = x.map(|v| 1.0 + alpha * v.abs());
            if let Some(index) = out.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::Positivity {
                    index,
                    value: out[index],
                });
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    /// Weight-decay strength; enters as `−βx` for every metric.
    pub beta: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Store every `record_every`-th RK4 step (the final state is always stored).
    pub record_every: usize,
    pub target: Option<ParamVector>,
}

impl FlowOptions {
    pub fn new(t_end: f64, dt: f64) -> Self {
        FlowOptions {
            beta: 0.0,
            t_end,
            dt,
            record_every: 1,
            target: None,
        }
    }

    pub fn beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn record_every(mut self, every: usize) -> Self {
        self.record_every = every.max(1);
        self
    }

    pub fn target(mut self, target: ParamVector) -> Self {
        self.target = Some(target);
        self
    }

    /// Number of RK4 steps and the step size that lands exactly on `t_end`.
    fn grid(&self) -> Result<(usize, f64)> {
        if !(self.dt > 0.0) || !(self.t_end >= self.dt) {
            return Err(Error::invalid(format!(
                "need dt > 0 and t_end >= dt (dt = {}, t_end = {})",
                self.dt, self.t_end
            )));
        }
        let steps = (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize;
        Ok((steps, self.t_end / steps as f64))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowTrace {
    pub times: Vec<f64>,
    pub states: Vec<ParamVector>,
    pub loss: Vec<f64>,
    pub l1: Vec<f64>,
    pub dist_to_target: Vec<Option<f64>>,
}

impl FlowTrace {
    fn record(&mut self, t: f64, x: &ParamVector, loss: f64, target: Option<&ParamVector>) {
        self.times.push(t);
        self.l1.push(x.l1());
        self.loss.push(loss);
        self.dist_to_target.push(target.map(|a| distance(x, a)));
        self.states.push(x.clone());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &ParamVector {
        self.states.last().expect("trace holds at least the initial state")
    }

    /// First stored time at which the loss is at or below `level`.
    pub fn time_to_loss(&self, level: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.loss)
            .find(|(_, &l)| l <= level)
            .map(|(&t, _)| t)
    }
}

fn axpy_into(out: &mut ParamVector, x: &ParamVector, c: f64, k: &ParamVector) {
    for i in 0..x.len() {
        out[i] = x[i] + c * k[i];
    }
}

/// Classical RK4 on an autonomous-in-state, possibly time-dependent, field.
fn rk4_step(
    x: &ParamVector,
    t: f64,
    h: f64,
    field: &mut dyn FnMut(&ParamVector, f64) -> Result<ParamVector>,
) -> Result<ParamVector> {
    let mut probe = ParamVector::zeros(x.len());
    let k1 = field(x, t)?;
    axpy_into(&mut probe, x, 0.5 * h, &k1);
    let k2 = field(&probe, t + 0.5 * h)?;
    axpy_into(&mut probe, x, 0.5 * h, &k2);
    let k3 = field(&probe, t + 0.5 * h)?;
    axpy_into(&mut probe, x, h, &k3);
    let k4 = field(&probe, t + h)?;
    Ok((0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// The flow's right-hand side at `x`.
pub fn flow_field(obj: &dyn Objective, kind: MetricKind, beta: f64, x: &ParamVector) -> Result<ParamVector> {
    let g = obj.gradient(x)?;
    let inv = metric_inverse(kind, x)?;
    Ok((0..x.len()).map(|i| -inv[i] * g[i] - beta * x[i]).collect())
}

pub fn flow_integrate(
    obj: &dyn Objective,
    kind: MetricKind,
    x0: &ParamVector,
    opts: &FlowOptions,
) -> Result<FlowTrace> {
    x0.ensure_len(obj.dim())?;
    x0.check_finite("flow initial state")?;
    let (steps, h) = opts.grid()?;
    let every = opts.record_every.max(1);
    let mut trace = FlowTrace::default();
    let mut x = x0.clone();
    trace.record(0.0, &x, obj.value(&x)?, opts.target.as_ref());
    let mut field = |x: &ParamVector, _t: f64| flow_field(obj, kind, opts.beta, x);
    for step in 1..=steps {
        x = rk4_step(&x, (step - 1) as f64 * h, h, &mut field)?;
        if let Some(index) = x.first_non_finite() {
            return Err(Error::NonFiniteAtStep {
                context: "flow integration",
                step,
                index,
            });
        }
        if step % every == 0 || step == steps {
            trace.record(step as f64 * h, &x, obj.value(&x)?, opts.target.as_ref());
        }
    }
    Ok(trace)
}

/// Integrate the `m ⊙ w` flow generated by `u₀, v₀` together with the
/// gradient accumulator `G(t) = ∫₀ᵗ ∇f(x_s) ds` and return the largest
/// deviation from the closed form `u₀² e^{−2G−βt} − v₀² e^{2G−βt}`.
///
/// With `u₀² = (|x₀|+x₀)/2 + c` and `v₀² = (|x₀|−x₀)/2 + c`, the closed form
/// satisfies `dx = −2√(x² + γ_t²) ∇f dt − βx dt` with `γ_t = 2u₀v₀e^{−βt}`,
/// which is the field integrated here.
pub fn pilot_flow_check(
    obj: &dyn Objective,
    x0: &ParamVector,
    beta: f64,
    offset: f64,
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    x0.ensure_len(obj.dim())?;
    if !(offset > 0.0) {
        return Err(Error::invalid("pilot flow offset c must be positive"));
    }
    let n = x0.len();
    let (steps, h) = FlowOptions::new(t_end, dt).grid()?;
    let u2: Vec<f64> = x0.iter().map(|&x| 0.5 * (x.abs() + x) + offset).collect();
    let v2: Vec<f64> = x0.iter().map(|&x| 0.5 * (x.abs() - x) + offset).collect();
    let gamma0: Vec<f64> = u2.iter().zip(&v2).map(|(a, b)| 2.0 * (a * b).sqrt()).collect();

    // state = [x; G]
    let mut state = ParamVector::zeros(2 * n);
    for i in 0..n {
        state[i] = u2[i] - v2[i];
    }
    let mut field = |s: &ParamVector, t: f64| -> Result<ParamVector> {
        let x: ParamVector = s.as_slice()[..n].iter().copied().collect();
        let g = obj.gradient(&x)?;
        let decay = (-beta * t).exp();
        let mut out = ParamVector::zeros(2 * n);
        for i in 0..n {
            let gamma = gamma0[i] * decay;
            out[i] = -2.0 * (x[i] * x[i] + gamma * gamma).sqrt() * g[i] - beta * x[i];
            out[n + i] = g[i];
        }
        Ok(out)
    };
    let mut worst: f64 = 0.0;
    for step in 1..=steps {
        let t0 = (step - 1) as f64 * h;
        state = rk4_step(&state, t0, h, &mut field)?;
        if let Some(index) = state.first_non_finite() {
            return Err(Error::NonFiniteAtStep {
                context: "pilot flow",
                step,
                index,
            });
        }
        let t = step as f64 * h;
        for i in 0..n {
            let g_acc = state[n + i];
            let closed = u2[i] * (-2.0 * g_acc - beta * t).exp() - v2[i] * (2.0 * g_acc - beta * t).exp();
            worst = worst.max((state[i] - closed).abs());
        }
    }
    Ok(worst)
}

/// Least-squares slope of `ln(f(x_t) − f*)` against `t` over the trailing half
/// of the trace. Negative for a converging flow; `−2Λ` for gradient flow on a
/// quadratic with curvature `Λ`.
pub fn rate_estimate(trace: &FlowTrace, f_star: f64) -> Result<f64> {
    let start = trace.len() / 2;
    let points: Vec<(f64, f64)> = trace.times[start..]
        .iter()
        .zip(&trace.loss[start..])
        .filter(|(_, &l)| l > f_star)
        .map(|(&t, &l)| (t, (l - f_star).ln()))
        .collect();
    if points.len() < 10 {
        return Err(Error::invalid(format!(
            "rate fit needs at least 10 samples above f*, found {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, l) in &points {
        sxy += (t - mt) * (l - ml);
        sxx += (t - mt) * (t - mt);
    }
    Ok(sxy / sxx)
}
