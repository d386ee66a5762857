//! Underdetermined sparse linear regression and the exact implicit-bias
//! oracle `argmin_{Zx=y} R_α(x)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::bregman::BregmanSpec;
use crate::error::{Error, Result};
use crate::numcore::{Matrix, ParamVector, Rng};
use crate::objectives::{LeastSquares, Objective};
use crate::optim::{ham_iterate, BaseOptimizer, HamConfig, OverparamState, SignSource};
use crate::trace::{distance, RunTrace, TraceRow};

/// `y = Z x*` with `Z` a `d × n` standard-normal design and `x*` `k`-sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    pub z: Matrix,
    pub y: Vec<f64>,
    pub x_star: ParamVector,
    pub k: usize,
    pub seed: u64,
}

impl RegressionProblem {
    pub fn generate(n: usize, d: usize, k: usize, seed: u64) -> Result<Self> {
        if d == 0 || d >= n {
            return Err(Error::invalid(format!("need 0 < d < n, got d = {d}, n = {n}")));
        }
        if k > n {
            return Err(Error::invalid(format!("sparsity {k} exceeds dimension {n}")));
        }
        let mut rng = Rng::new(seed);
        let data: Vec<f64> = (0..d * n).map(|_| rng.normal()).collect();
        let z = Matrix::from_row_major(d, n, data)?;
        let mut positions: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut positions);
        let mut x_star = ParamVector::zeros(n);
        for &p in &positions[..k] {
            let s = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            x_star[p] = s * rng.uniform_in(0.5, 1.5);
        }
        let y = z.matvec(&x_star)?.into_vec();
        Ok(RegressionProblem { z, y, x_star, k, seed })
    }

    pub fn n(&self) -> usize {
        self.z.cols()
    }

    pub fn d(&self) -> usize {
        self.z.rows()
    }

    /// Mean-squared loss `½‖Zx − y‖²/d`.
    pub fn objective(&self) -> Result<LeastSquares> {
        Ok(LeastSquares::new(self.z.clone(), self.y.clone())?.mean_squared())
    }

    /// Flat text form: a `n d k seed` header, `d` rows of `Z`, then `y`, then `x*`.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {} {}\n", self.n(), self.d(), self.k, self.seed);
        let mut line = |vals: &[f64]| {
            let parts: Vec<String> = vals.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", parts.join(" "));
        };
        for i in 0..self.d() {
            line(self.z.row(i));
        }
        line(&self.y);
        line(self.x_star.as_slice());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let bad = |msg: &str| Error::invalid(format!("problem file: {msg}"));
        let header: Vec<u64> = lines
            .next()
            .ok_or_else(|| bad("empty"))?
            .split_whitespace()
            .map(|t| t.parse::<u64>().map_err(|_| bad("header must be four integers")))
            .collect::<Result<_>>()?;
        let [n, d, k, seed] = header[..] else {
            return Err(bad("header must be `n d k seed`"));
        };
        let (n, d, k) = (n as usize, d as usize, k as usize);
        let mut row = |len: usize| -> Result<Vec<f64>> {
            let vals: Vec<f64> = lines
                .next()
                .ok_or_else(|| bad("truncated"))?
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("unparsable number")))
                .collect::<Result<_>>()?;
            if vals.len() != len {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    got: vals.len(),
                });
            }
            Ok(vals)
        };
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..d {
            data.extend(row(n)?);
        }
        let z = Matrix::from_row_major(d, n, data)?;
        let y = row(d)?;
        let x_star = ParamVector::from(row(n)?);
        Ok(RegressionProblem { z, y, x_star, k, seed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Gd,
    /// GD base step plus the hyperbolic step with the half-step sign.
    Ham {
        alpha: f64,
    },
    /// As `Ham` but with `sign(x_k)` in the hyperbolic step.
    HamSigned {
        alpha: f64,
    },
    /// `x = m ⊙ w` trained by GD from `m₀ = init_scale`, `w₀ = 0`.
    Mw {
        init_scale: f64,
    },
}

fn track(row: &mut TraceRow, next: &ParamVector, x_star: &ParamVector) {
    row.dist = Some(distance(next, x_star));
}

/// Full-batch training from `x₀ = 0` with `β = 0`. Each logged row holds the
/// loss at `x_k` and the L1 norm, distance to `x*` and sign flips of `x_{k+1}`.
pub fn run_regression(
    problem: &RegressionProblem,
    method: Method,
    eta: f64,
    steps: usize,
    log_every: usize,
) -> Result<(ParamVector, RunTrace)> {
    let obj = problem.objective()?;
    let n = problem.n();
    let log_every = log_every.max(1);
    let mut trace = RunTrace::default();
    let mut flips = 0;
    let mut log = |k: usize, mut row: TraceRow, trace: &mut RunTrace| {
        flips += row.sign_flips;
        if (k + 1).is_multiple_of(log_every) || k + 1 == steps {
            row.sign_flips = flips;
            flips = 0;
            trace.push(row);
        }
    };
    let x = match method {
        Method::Mw { init_scale } => {
            let mut state = OverparamState::new(ParamVector::filled(n, init_scale), ParamVector::zeros(n), 0.0)?;
            let mut x = state.product();
            for k in 0..steps {
                let (loss, g) = obj.value_and_grad(&x)?;
                state.step(&g, eta)?;
                let next = state.product();
                if let Some(index) = next.first_non_finite() {
                    return Err(Error::NonFiniteAtStep {
                        context: "mw regression",
                        step: k,
                        index,
                    });
                }
                let mut row = TraceRow {
                    step: k,
                    loss,
                    l1: next.l1(),
                    dist: None,
                    sign_flips: x.sign_flips(&next),
                };
                track(&mut row, &next, &problem.x_star);
                log(k, row, &mut trace);
                x = next;
            }
            x
        }
        _ => {
            let cfg = match method {
                Method::Gd => HamConfig::disabled(eta),
                Method::Ham { alpha } => HamConfig::new(alpha, 0.0, eta),
                Method::HamSigned { alpha } => {
                    HamConfig::new(alpha, 0.0, eta).with_sign_source(SignSource::PreviousStep)
                }
                Method::Mw { .. } => unreachable!(),
            };
            cfg.validate(n)?;
            let mut base = BaseOptimizer::gd();
            let mut x = ParamVector::zeros(n);
            for k in 0..steps {
                let (next, mut row) = ham_iterate(&obj, &x, &mut base, &cfg, k)?;
                track(&mut row, &next, &problem.x_star);
                log(k, row, &mut trace);
                x = next;
            }
            x
        }
    };
    if trace.rows.iter().any(|r| !r.loss.is_finite()) {
        return Err(Error::NonFinite {
            context: "regression loss",
            index: 0,
        });
    }
    trace.grad_calls = steps;
    Ok((x, trace))
}

fn gram_cholesky(z: &Matrix) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let zn = z.to_nalgebra();
    (&zn * zn.transpose())
        .cholesky()
        .ok_or_else(|| Error::invalid("Z Zᵀ is not positive definite; Z lacks full row rank"))
}

/// Minimum-norm interpolator `Zᵀ(ZZᵀ)⁻¹y`.
pub fn min_norm_solution(z: &Matrix, y: &[f64]) -> Result<ParamVector> {
    if y.len() != z.rows() {
        return Err(Error::DimensionMismatch {
            expected: z.rows(),
            got: y.len(),
        });
    }
    let chol = gram_cholesky(z)?;
    let nu = chol.solve(&DVector::from_column_slice(y));
    z.matvec_t(nu.as_slice())
}

/// Norm of the component of `v` orthogonal to the row space of `Z`.
pub fn row_space_residual(z: &Matrix, v: &ParamVector) -> Result<f64> {
    let chol = gram_cholesky(z)?;
    let zv = z.matvec(v)?;
    let coef = chol.solve(&DVector::from_column_slice(zv.as_slice()));
    let proj = z.matvec_t(coef.as_slice())?;
    Ok(v.sub(&proj)?.l2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x: ParamVector,
    /// Dual variable with `∇R_α(x) = Zᵀν`.
    pub nu: Vec<f64>,
    pub iterations: usize,
    /// `‖Zx − y‖∞` at termination.
    pub residual: f64,
}

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 200;
const MAX_HALVINGS: usize = 60;

/// `argmin_{Zx=y} R_α(x)` with `R_α` centered at 0, from the dual start `ν = 0`.
pub fn constrained_minimizer_oracle(problem: &RegressionProblem, alpha: f64) -> Result<OracleSolution> {
    constrained_minimizer_oracle_from(problem, alpha, &vec![0.0; problem.d()])
}

/// Damped Newton on `F(ν) = Z∇R*(Zᵀν) − y` with Jacobian `Z diag(e^{α|Zᵀν|}) Zᵀ`,
/// backtracking on `‖F‖₂`.
pub fn constrained_minimizer_oracle_from(
    problem: &RegressionProblem,
    alpha: f64,
    nu0: &[f64],
) -> Result<OracleSolution> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("oracle needs alpha > 0"));
    }
    let (d, n) = (problem.d(), problem.n());
    if nu0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: nu0.len(),
        });
    }
    let spec = BregmanSpec::centered(alpha, n)?;
    let z = &problem.z;
    let zn = z.to_nalgebra();
    // None when the primal point overflows, which backtracking treats as a rejection.
    let eval = |nu: &[f64]| -> Result<Option<(ParamVector, ParamVector, Vec<f64>)>> {
        let theta = z.matvec_t(nu)?;
        let x = match spec.conjugate_gradient(&theta) {
            Ok(x) => x,
            Err(Error::NonFinite { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let zx = z.matvec(&x)?;
        let f: Vec<f64> = zx.iter().zip(&problem.y).map(|(a, b)| a - b).collect();
        if f.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        Ok(Some((theta, x, f)))
    };
    let norm2 = |f: &[f64]| f.iter().map(|v| v * v).sum::<f64>().sqrt();
    let inf = |f: &[f64]| f.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut nu = nu0.to_vec();
    let (mut theta, mut x, mut f) = eval(&nu)?.ok_or(Error::NonFinite {
        context: "oracle start",
        index: 0,
    })?;
    for iter in 0..NEWTON_MAX_ITERS {
        if inf(&f) < NEWTON_TOL {
            return Ok(OracleSolution {
                x,
                nu,
                iterations: iter,
                residual: inf(&f),
            });
        }
        let w = spec.conjugate_hessian_diag(&theta)?;
        let scaled = DMatrix::from_fn(d, n, |i, j| zn[(i, j)] * w[j]);
        let jac = &scaled * zn.transpose();
        let step = match jac.clone().cholesky() {
            Some(c) => c.solve(&DVector::from_column_slice(&f)),
            None => jac
                .lu()
                .solve(&DVector::from_column_slice(&f))
                .ok_or_else(|| Error::invalid("oracle Jacobian is singular"))?,
        };
        let current = norm2(&f);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = nu.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            if let Some(state) = eval(&trial)? {
                if norm2(&state.2) < current {
                    accepted = Some((trial, state));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, state)) => {
                nu = trial;
                (theta, x, f) = state;
            }
            None => {
                return Err(Error::NotConverged {
                    iterations: iter,
                    residual: inf(&f),
                });
            }
        }
    }
    if inf(&f) < NEWTON_TOL {
        return Ok(OracleSolution {
            x,
            nu,
            iterations: NEWTON_MAX_ITERS,
            residual: inf(&f),
        });
    }
    Err(Error::NotConverged {
        iterations: NEWTON_MAX_ITERS,
        residual: inf(&f),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    /// `‖x_final − x_oracle‖ / ‖x_oracle‖`.
    pub rel_gap: f64,
    pub x_final: ParamVector,
    pub oracle: OracleSolution,
    pub train_residual: f64,
}

/// Train HAM(α, β=0) from 0 and compare the endpoint with the oracle.
pub fn implicit_bias_check(problem: &RegressionProblem, alpha: f64, eta: f64, steps: usize) -> Result<BiasReport> {
    let (x_final, _) = run_regression(problem, Method::Ham { alpha }, eta, steps, steps.max(1))?;
    let obj = problem.objective()?;
    let train_residual = obj.residual(&x_final)?.l2();
    let y_norm = problem.y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let threshold = 1e-6 * y_norm;
    if train_residual > threshold {
        return Err(Error::ResidualTooLarge {
            residual: train_residual,
            threshold,
        });
    }
    let oracle = constrained_minimizer_oracle(problem, alpha)?;
    let rel_gap = distance(&x_final, &oracle.x) / oracle.x.l2();
    Ok(BiasReport {
        rel_gap,
        x_final,
        oracle,
        train_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{flow_integrate, FlowOptions, MetricKind};
    use nalgebra::SVD;

    fn small() -> RegressionProblem {
        RegressionProblem::generate(20, 8, 3, 7).unwrap()
    }

    #[test]
    fn generation_invariants() {
        let p = RegressionProblem::generate(100, 40, 5, 3).unwrap();
        assert_eq!((p.n(), p.d()), (100, 40));
        assert_eq!(p.x_star.iter().filter(|&&v| v != 0.0).count(), 5);
        assert!(p.x_star.iter().all(|&v| v == 0.0 || (0.5..=1.5).contains(&v.abs())));
        let zx = p.z.matvec(&p.x_star).unwrap();
        assert_eq!(zx.as_slice(), p.y.as_slice());
        assert_eq!(p, RegressionProblem::generate(100, 40, 5, 3).unwrap());
        assert_ne!(p.z, RegressionProblem::generate(100, 40, 5, 4).unwrap().z);
        assert!(RegressionProblem::generate(10, 10, 1, 0).is_err());
        assert!(RegressionProblem::generate(10, 5, 11, 0).is_err());
    }

    #[test]
    fn zero_sparsity_has_zero_solution() {
        let p = RegressionProblem::generate(12, 4, 0, 1).unwrap();
        assert!(p.y.iter().all(|&v| v == 0.0));
        let (x, _) = run_regression(&p, Method::Ham { alpha: 5.0 }, 1e-2, 100, 10).unwrap();
        assert_eq!(x.l1(), 0.0);
    }

    #[test]
    fn text_round_trip() {
        let p = small();
        let back = RegressionProblem::from_text(&p.to_text()).unwrap();
        assert_eq!(p, back);
        assert!(RegressionProblem::from_text("3 2 1").is_err());
        assert!(RegressionProblem::from_text("3 2 1 0\n1 2 3\n").is_err());
    }

    #[test]
    fn gd_reaches_min_norm_and_stays_in_row_space() {
        let p = small();
        let pinv = min_norm_solution(&p.z, &p.y).unwrap();
        let (x, trace) = run_regression(&p, Method::Gd, 0.1, 5000, 500).unwrap();
        assert!(distance(&x, &pinv) / pinv.l2() < 1e-6);
        assert!(row_space_residual(&p.z, &x).unwrap() < 1e-10);
        assert_eq!(trace.rows.len(), 10);
        assert!(trace.rows.iter().all(|r| r.dist.is_some()));
    }

    #[test]
    fn oracle_small_alpha_is_min_norm() {
        let p = small();
        let pinv = min_norm_solution(&p.z, &p.y).unwrap();
        let o = constrained_minimizer_oracle(&p, 1e-6).unwrap();
        assert!(o.residual < 1e-10);
        assert!(distance(&o.x, &pinv) / pinv.l2() < 1e-4);
    }

    #[test]
    fn oracle_kkt_and_uniqueness() {
        let p = small();
        for alpha in [0.1, 1.0, 10.0, 100.0] {
            let o = constrained_minimizer_oracle(&p, alpha).unwrap();
            let g = BregmanSpec::centered(alpha, p.n()).unwrap().gradient(&o.x).unwrap();
            assert!(row_space_residual(&p.z, &g).unwrap() < 1e-8, "alpha {alpha}");
            let mut rng = Rng::new(99);
            let nu0: Vec<f64> = (0..p.d()).map(|_| 0.05 * rng.normal()).collect();
            let other = constrained_minimizer_oracle_from(&p, alpha, &nu0).unwrap();
            assert!(other.x.max_abs_diff(&o.x).unwrap() < 1e-9, "alpha {alpha}");
        }
    }

    #[test]
    fn oracle_l1_shrinks_with_alpha() {
        let p = RegressionProblem::generate(40, 15, 3, 12).unwrap();
        let mut prev = f64::INFINITY;
        for alpha in [0.1, 1.0, 10.0, 100.0] {
            let l1 = constrained_minimizer_oracle(&p, alpha).unwrap().x.l1();
            assert!(l1 < prev, "alpha {alpha}: {l1} vs {prev}");
            prev = l1;
        }
    }

    /// Minimize `R_α(x_p + N t)` over the null space by repeated grid zooming.
    fn manifold_scan(p: &RegressionProblem, alpha: f64) -> ParamVector {
        let n = p.n();
        let spec = BregmanSpec::centered(alpha, n).unwrap();
        let xp = min_norm_solution(&p.z, &p.y).unwrap();
        // null space of Z = eigenvectors of the projector I − Zᵀ(ZZᵀ)⁻¹Z with eigenvalue 1
        let zn = p.z.to_nalgebra();
        let gram_inv = (&zn * zn.transpose()).try_inverse().unwrap();
        let proj = DMatrix::identity(n, n) - zn.transpose() * gram_inv * &zn;
        let svd = SVD::new(proj, true, false);
        let u = svd.u.unwrap();
        let null: Vec<Vec<f64>> = (0..n)
            .filter(|&j| svd.singular_values[j] > 0.5)
            .map(|j| (0..n).map(|i| u[(i, j)]).collect())
            .collect();
        assert_eq!(null.len(), n - p.d());
        let point = |t: &[f64]| -> ParamVector {
            (0..n)
                .map(|i| xp[i] + null.iter().zip(t).map(|(b, c)| b[i] * c).sum::<f64>())
                .collect()
        };
        let dims = null.len();
        let pts = 21usize;
        let mut center = vec![0.0; dims];
        let mut radius = 3.0 * xp.l2();
        while radius > 1e-7 {
            let mut best = (f64::INFINITY, center.clone());
            for flat in 0..pts.pow(dims as u32) {
                let mut rem = flat;
                let t: Vec<f64> = (0..dims)
                    .map(|a| {
                        let idx = rem % pts;
                        rem /= pts;
                        center[a] - radius + 2.0 * radius * idx as f64 / (pts - 1) as f64
                    })
                    .collect();
                let v = spec.value(&point(&t)).unwrap();
                if v < best.0 {
                    best = (v, t);
                }
            }
            center = best.1;
            radius /= 5.0;
        }
        point(&center)
    }

    #[test]
    fn oracle_matches_brute_force_scan() {
        for (seed, alpha) in [(2, 1.0), (5, 10.0)] {
            let p = RegressionProblem::generate(6, 3, 2, seed).unwrap();
            let o = constrained_minimizer_oracle(&p, alpha).unwrap();
            let scan = manifold_scan(&p, alpha);
            let diff = scan.max_abs_diff(&o.x).unwrap();
            assert!(diff < 1e-3, "seed {seed}: {diff}");
        }
    }

    #[test]
    fn ham_flow_mirror_stays_in_row_space() {
        let p = small();
        let alpha = 10.0;
        let spec = BregmanSpec::centered(alpha, p.n()).unwrap();
        let obj = p.objective().unwrap();
        let opts = FlowOptions::new(20.0, 1e-3).record_every(100);
        let trace = flow_integrate(&obj, MetricKind::Ham { alpha }, &ParamVector::zeros(p.n()), &opts).unwrap();
        let worst = trace
            .states
            .iter()
            .map(|x| row_space_residual(&p.z, &spec.gradient(x).unwrap()).unwrap())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "residual {worst}");
    }

    #[test]
    fn discrete_ham_mirror_drift_is_first_order() {
        let p = small();
        let alpha = 10.0;
        let spec = BregmanSpec::centered(alpha, p.n()).unwrap();
        let obj = p.objective().unwrap();
        let drift = |eta: f64| {
            let cfg = HamConfig::new(alpha, 0.0, eta);
            let mut base = BaseOptimizer::gd();
            let mut x = ParamVector::zeros(p.n());
            for k in 0..(3.0 / eta) as usize {
                x = ham_iterate(&obj, &x, &mut base, &cfg, k).unwrap().0;
            }
            row_space_residual(&p.z, &spec.gradient(&x).unwrap()).unwrap()
        };
        let ratio = drift(1e-3) / drift(2e-3);
        assert!((0.35..0.65).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn bregman_divergence_to_interpolators_decreases() {
        let p = small();
        let alpha = 5.0;
        let spec = BregmanSpec::centered(alpha, p.n()).unwrap();
        let xs = [p.x_star.clone(), min_norm_solution(&p.z, &p.y).unwrap()];
        let obj = p.objective().unwrap();
        let cfg = HamConfig::new(alpha, 0.0, 1e-3);
        let mut base = BaseOptimizer::gd();
        let mut x = ParamVector::zeros(p.n());
        let mut prev = [f64::INFINITY; 2];
        for k in 0..4000 {
            x = ham_iterate(&obj, &x, &mut base, &cfg, k).unwrap().0;
            if k % 200 == 0 {
                for (slot, target) in prev.iter_mut().zip(&xs) {
                    let d = spec.divergence(target, &x).unwrap();
                    assert!(d <= *slot + 1e-9);
                    *slot = d;
                }
            }
        }
    }

    #[test]
    fn short_run_fails_bias_check() {
        let p = small();
        assert!(matches!(
            implicit_bias_check(&p, 10.0, 1e-3, 10),
            Err(Error::ResidualTooLarge { .. })
        ));
    }

    #[test]
    fn bias_check_at_tiny_alpha_is_min_norm() {
        let p = small();
        let r = implicit_bias_check(&p, 1e-6, 0.1, 5000).unwrap();
        assert!(r.rel_gap < 1e-3);
        let pinv = min_norm_solution(&p.z, &p.y).unwrap();
        assert!(distance(&r.x_final, &pinv) / pinv.l2() < 1e-3);
    }

    #[test]
    fn mw_trains() {
        let p = small();
        let (_, trace) = run_regression(&p, Method::Mw { init_scale: 0.1 }, 1e-2, 2000, 100).unwrap();
        assert!(trace.last().unwrap().loss < trace.rows[0].loss);
    }
}
