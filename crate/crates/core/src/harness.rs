//! Reproducible experiment runner: flat `key=value` configs, one CSV per run,
//! a JSON-lines summary, and parallel parameter sweeps.
//!
//! Every CSV starts with `#` comment lines holding the artifact version and the
//! fully resolved config, followed by a column header and the rows. Floats are
//! written with 17 significant digits so they round-trip exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::bregman::{box_grid, l1_shape_error, l2_shape_error, normalized_value, BregmanSpec};
use crate::error::{Error, Result};
use crate::fisher::{fisher_mc_estimate, ScoreModel};
use crate::flows::{flow_integrate, rate_estimate, FlowOptions, MetricKind};
use crate::numcore::{ParamVector, Rng};
use crate::objectives::{Objective, SeparableQuadratic};
use crate::optim::{BaseKind, HamConfig};
use crate::regression::{constrained_minimizer_oracle, run_regression, Method, RegressionProblem};
use crate::sparse_lab::{
    acdc_lite_train, acdc_schedule, moons_split, pai_train, random_mask, toy_network, MaskedModel, SignStabilityReport,
    TrainConfig,
};
use crate::trace::distance;

pub const VERSION: &str = concat!("ham-core ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Command {
    Regression,
    Flow,
    Bregman,
    Fisher,
    ToyTrain,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySpec {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> KeySpec {
    KeySpec { name, default, help }
}

const COMMON_KEYS: &[KeySpec] = &[
    key("seed", "1", "random seed"),
    key(
        "summary",
        "",
        "JSON-lines summary file; empty means summary.jsonl next to the CSV",
    ),
];

const REGRESSION_KEYS: &[KeySpec] = &[
    key("out", "regression.csv", "output CSV path"),
    key("n", "20", "number of unknowns"),
    key("d", "8", "number of measurements (d < n)"),
    key("k", "3", "nonzeros in the ground truth"),
    key("method", "ham", "gd | ham | ham-signed | mw"),
    key("alpha", "10", "HAM curvature alpha"),
    key("eta", "1e-4", "learning rate"),
    key("steps", "100000", "training steps"),
    key("init-scale", "0.1", "mw only: initial value of m (w starts at 0)"),
    key("log-every", "1000", "log interval in steps"),
    key(
        "problem-in",
        "",
        "load the problem from this file instead of generating it",
    ),
    key("problem-out", "", "write the generated problem to this file"),
];

const FLOW_KEYS: &[KeySpec] = &[
    key("out", "flow.csv", "output CSV path"),
    key("metric", "ham", "gd | mw | ham"),
    key("alpha", "1", "ham metric alpha"),
    key("gamma", "0.01", "mw metric gamma"),
    key("beta", "0", "weight decay"),
    key("t-end", "10", "final time"),
    key("dt", "1e-3", "RK4 step"),
    key("record-every", "10", "store every n-th step"),
    key("x0", "1", "comma-separated initial point"),
    key("curvatures", "1", "comma-separated curvatures (one value broadcasts)"),
    key("targets", "0", "comma-separated minimizer (one value broadcasts)"),
];

const BREGMAN_KEYS: &[KeySpec] = &[
    key("out", "bregman.csv", "output CSV path"),
    key("alpha", "1e-4", "potential alpha"),
    key("grid-box", "1", "grid half width"),
    key("grid-pts", "41", "points per axis"),
    key("dim", "2", "grid dimension"),
];

const FISHER_KEYS: &[KeySpec] = &[
    key("out", "fisher.csv", "output CSV path"),
    key("model", "sqrt", "mean (N(x,1)) | sqrt (N(2 sqrt|x|, 1))"),
    key("xs", "0.1,1,4,25", "comma-separated parameter values"),
    key("samples", "1000000", "Monte-Carlo samples per point (>= 10000)"),
];

const TOY_KEYS: &[KeySpec] = &[
    key("out", "toy-train.csv", "output CSV path"),
    key("mode", "acdc", "acdc | pai | dense"),
    key("base", "momentum", "gd | momentum | adam | sam"),
    key("mu", "0.9", "momentum coefficient"),
    key("alpha", "200", "HAM alpha (0 disables the curvature term)"),
    key("beta", "1e-4", "HAM weight decay"),
    key("eta", "5e-3", "learning rate"),
    key("sparsity", "0.9", "fraction of weights masked"),
    key("steps", "2000", "pai/dense: training steps"),
    key("warmup", "500", "acdc: dense warm-up steps"),
    key("phase", "250", "acdc: steps per sparse or dense phase"),
    key("cycles", "3", "acdc: sparse/dense cycles before the final sparse phase"),
    key("batch", "32", "mini-batch size"),
    key("log-every", "10", "log interval in steps"),
];

const SWEEP_KEYS: &[KeySpec] = &[
    key("out", "sweep.csv", "output CSV path"),
    key("command", "regression", "subcommand run at every point"),
    key("axes", "", "axes as `key=v1,v2;key2=w1,w2`"),
    key("workers", "1", "worker threads"),
];

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Regression,
        Command::Flow,
        Command::Bregman,
        Command::Fisher,
        Command::ToyTrain,
        Command::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Regression => "regression",
            Command::Flow => "flow",
            Command::Bregman => "bregman",
            Command::Fisher => "fisher",
            Command::ToyTrain => "toy-train",
            Command::Sweep => "sweep",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown command `{name}`")))
    }

    /// Keys specific to this command, followed by the common ones.
    pub fn keys(self) -> Vec<KeySpec> {
        let own = match self {
            Command::Regression => REGRESSION_KEYS,
            Command::Flow => FLOW_KEYS,
            Command::Bregman => BREGMAN_KEYS,
            Command::Fisher => FISHER_KEYS,
            Command::ToyTrain => TOY_KEYS,
            Command::Sweep => SWEEP_KEYS,
        };
        own.iter().chain(COMMON_KEYS).copied().collect()
    }

    pub fn about(self) -> &'static str {
        match self {
            Command::Regression => "train GD/HAM/HAM-signed/mw on sparse underdetermined least squares",
            Command::Flow => "integrate a Riemannian gradient flow on a separable quadratic",
            Command::Bregman => "tabulate the HAM potential on a grid with its limit-shape normalization",
            Command::Fisher => "Monte-Carlo Fisher information of the Gaussian parameterizations",
            Command::ToyTrain => "sparse training of a 2-32-2 MLP on two moons",
            Command::Sweep => "run a command over the Cartesian product of parameter axes",
        }
    }

    /// CSV column layout, shown in `--help`.
    pub fn csv_schema(self) -> &'static str {
        match self {
            Command::Regression => "step,loss,l1,dist_to_xstar",
            Command::Flow => "time,loss,l1,dist_to_target,x_0,...,x_{n-1}",
            Command::Bregman => "x_0,...,x_{dim-1},R,normalized (2R for alpha <= 1, (alpha/ln alpha)R otherwise)",
            Command::Fisher => "x,estimate,stderr,target",
            Command::ToyTrain => "step,loss,l1,sign_flips",
            Command::Sweep => "<axis keys>,status,<summary metrics of the swept command>",
        }
    }

    /// Summary metric names, in output order.
    pub fn metric_names(self) -> &'static [&'static str] {
        match self {
            Command::Regression => &["final_loss", "final_l1", "final_dist", "oracle_rel_gap"],
            Command::Flow => &["final_loss", "final_l1", "rate"],
            Command::Bregman => &["l2_err", "l1_err"],
            Command::Fisher => &["max_abs_z"],
            Command::ToyTrain => &["test_accuracy", "sparsity", "mean_l1", "total_flips", "t0"],
            Command::Sweep => &["points", "failed"],
        }
    }
}

/// Parse `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
        let k = k.trim().to_string();
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

/// A command plus every one of its keys resolved to a value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentConfig {
    pub command: Command,
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Defaults, then `file` entries, then `overrides` (flags win). Unknown
    /// keys are rejected. For sweeps the keys of the swept command are also
    /// accepted.
    pub fn resolve(command: Command, file: &[(String, String)], overrides: &[(String, String)]) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut allowed = command.keys();
        if command == Command::Sweep {
            let inner = overrides
                .iter()
                .rev()
                .chain(file.iter().rev())
                .find(|(k, _)| k == "command")
                .map(|(_, v)| v.as_str())
                .unwrap_or("regression");
            let inner = Command::parse(inner)?;
            if inner == Command::Sweep {
                return Err(Error::Config("a sweep cannot sweep sweeps".into()));
            }
            for spec in inner.keys() {
                if !allowed.iter().any(|a| a.name == spec.name) {
                    allowed.push(spec);
                }
            }
        }
        for spec in &allowed {
            values.insert(spec.name.to_string(), spec.default.to_string());
        }
        for (k, v) in file.iter().chain(overrides) {
            if !values.contains_key(k) {
                return Err(Error::Config(format!("unknown key `{k}` for `{}`", command.name())));
            }
            values.insert(k.clone(), v.clone());
        }
        Ok(ExperimentConfig { command, values })
    }

    pub fn defaults(command: Command) -> Result<Self> {
        Self::resolve(command, &[], &[])
    }

    pub fn with(mut self, key: &str, value: &str) -> Result<Self> {
        self.set(key, value)?;
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!(
                "unknown key `{key}` for `{}`",
                self.command.name()
            ))),
        }
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::Config(format!("cannot parse `{key}` = `{raw}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.parse(key)
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parse(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.parse(key)
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.get(key)?;
        let list: Vec<f64> = raw
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("cannot parse `{key}` entry `{t}`")))
            })
            .collect::<Result<_>>()?;
        if list.is_empty() {
            return Err(Error::Config(format!("`{key}` is empty")));
        }
        Ok(list)
    }

    /// Comment block: version, command, then every key in sorted order.
    pub fn header(&self) -> String {
        let mut out = format!("# {VERSION}\n# command={}\n", self.command.name());
        for (k, v) in &self.values {
            let _ = writeln!(out, "# {k}={v}");
        }
        out
    }

    pub fn out_path(&self) -> Result<PathBuf> {
        Ok(PathBuf::from(self.get("out")?))
    }

    pub fn summary_path(&self) -> Result<PathBuf> {
        let explicit = self.get("summary")?;
        if !explicit.is_empty() {
            return Ok(PathBuf::from(explicit));
        }
        let out = self.out_path()?;
        let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(dir.join("summary.jsonl"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn metric_cell(v: &Value) -> Cell {
    match v {
        Value::Number(n) if n.is_u64() => Cell::Int(n.as_u64().unwrap_or_default()),
        Value::Number(n) => Cell::Num(n.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => Cell::Text(s.clone()),
        _ => Cell::Empty,
    }
}

/// Table plus summary metrics produced by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Ordered as [`Command::metric_names`].
    pub metrics: Vec<(&'static str, Value)>,
}

impl RunOutput {
    pub fn metric(&self, name: &str) -> Option<&Value> {
        self.metrics.iter().find(|(k, _)| *k == name).map(|(_, v)| v)
    }

    pub fn metrics_json(&self) -> Value {
        let mut m = Map::new();
        for (k, v) in &self.metrics {
            m.insert((*k).to_string(), v.clone());
        }
        Value::Object(m)
    }
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

fn columns(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Column header and rows, without the comment header.
pub fn render_body(out: &RunOutput) -> String {
    let mut s = out.columns.join(",");
    s.push('\n');
    for row in &out.rows {
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn render_csv(cfg: &ExperimentConfig, out: &RunOutput) -> String {
    cfg.header() + &render_body(out)
}

/// The CSV with its `#` comment lines removed.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

pub fn summary_record(cfg: &ExperimentConfig, result: &Result<RunOutput>) -> String {
    let config: Map<String, Value> = cfg
        .values()
        .iter()
        .map(|(k, v)| (k.clone(), Value::String(v.clone())))
        .collect();
    let record = match result {
        Ok(out) => json!({
            "version": VERSION,
            "command": cfg.command.name(),
            "status": "ok",
            "config": config,
            "metrics": out.metrics_json(),
        }),
        Err(e) => json!({
            "version": VERSION,
            "command": cfg.command.name(),
            "status": failure_status(e),
            "error": e.to_string(),
            "config": config,
        }),
    };
    record.to_string()
}

pub fn failure_status(err: &Error) -> &'static str {
    if err.is_numeric() {
        "failed-numeric"
    } else {
        "failed-config"
    }
}

/// 2 for configuration errors, 3 for numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numeric() {
        3
    } else {
        2
    }
}

/// Run the configured command without touching the output paths.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.command {
        Command::Regression => run_regression_cmd(cfg),
        Command::Flow => run_flow_cmd(cfg),
        Command::Bregman => run_bregman_cmd(cfg),
        Command::Fisher => run_fisher_cmd(cfg),
        Command::ToyTrain => run_toy_cmd(cfg),
        Command::Sweep => run_sweep_cmd(cfg),
    }
}

/// Run, write the CSV and append the summary record (also on failure).
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let result = run(cfg);
    let summary = cfg.summary_path()?;
    if let Some(dir) = summary.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::OpenOptions::new().create(true).append(true).open(&summary)?;
    writeln!(f, "{}", summary_record(cfg, &result))?;
    let out = result?;
    let path = cfg.out_path()?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(&path, render_csv(cfg, &out))?;
    Ok(out)
}

/// Resolve from an optional config file plus flag overrides, execute, and map
/// the outcome to an exit status. Diagnostics go to stderr.
pub fn cli_main(command: Command, config_file: Option<&Path>, overrides: &[(String, String)]) -> i32 {
    let outcome = (|| {
        let file = match config_file {
            Some(p) => {
                let text =
                    fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                parse_config_text(&text)?
            }
            None => Vec::new(),
        };
        let cfg = ExperimentConfig::resolve(command, &file, overrides)?;
        let out = execute(&cfg)?;
        Ok::<_, Error>((cfg, out))
    })();
    match outcome {
        Ok((cfg, out)) => {
            let path = cfg.out_path().map(|p| p.display().to_string()).unwrap_or_default();
            eprintln!("wrote {} rows to {path}", out.rows.len());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run_regression_cmd(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let problem_in = cfg.get("problem-in")?;
    let problem = if problem_in.is_empty() {
        RegressionProblem::generate(cfg.usize("n")?, cfg.usize("d")?, cfg.usize("k")?, cfg.u64("seed")?)?
    } else {
        RegressionProblem::from_text(&fs::read_to_string(problem_in)?)?
    };
    let problem_out = cfg.get("problem-out")?;
    if !problem_out.is_empty() {
        fs::write(problem_out, problem.to_text())?;
    }
    let alpha = cfg.f64("alpha")?;
    let method = match cfg.get("method")? {
        "gd" => Method::Gd,
        "ham" => Method::Ham { alpha },
        "ham-signed" => Method::HamSigned { alpha },
        "mw" => Method::Mw {
            init_scale: cfg.f64("init-scale")?,
        },
        other => return Err(Error::Config(format!("unknown method `{other}`"))),
    };
    let (x, trace) = run_regression(
        &problem,
        method,
        cfg.f64("eta")?,
        cfg.usize("steps")?,
        cfg.usize("log-every")?,
    )?;
    let rows = trace
        .rows
        .iter()
        .map(|r| {
            vec![
                Cell::Int(r.step as u64),
                Cell::Num(r.loss),
                Cell::Num(r.l1),
                r.dist.map(Cell::Num).unwrap_or(Cell::Empty),
            ]
        })
        .collect();
    let oracle_gap = match method {
        Method::Ham { alpha } if alpha > 0.0 => constrained_minimizer_oracle(&problem, alpha)
            .map(|o| num(distance(&x, &o.x) / o.x.l2()))
            .unwrap_or(Value::Null),
        _ => Value::Null,
    };
    let obj = problem.objective()?;
    Ok(RunOutput {
        columns: columns(&["step", "loss", "l1", "dist_to_xstar"]),
        rows,
        metrics: vec![
            ("final_loss", num(obj.value(&x)?)),
            ("final_l1", num(x.l1())),
            ("final_dist", num(distance(&x, &problem.x_star))),
            ("oracle_rel_gap", oracle_gap),
        ],
    })
}

fn broadcast(v: Vec<f64>, n: usize, key: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        m if m == n => Ok(v),
        m => Err(Error::Config(format!("`{key}` has {m} entries, expected 1 or {n}"))),
    }
}

fn run_flow_cmd(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let x0 = cfg.f64_list("x0")?;
    let n = x0.len();
    let curv = broadcast(cfg.f64_list("curvatures")?, n, "curvatures")?;
    let targets = broadcast(cfg.f64_list("targets")?, n, "targets")?;
    let obj = SeparableQuadratic::new(curv, targets.clone())?;
    let kind = match cfg.get("metric")? {
        "gd" => MetricKind::Gd,
        "mw" => MetricKind::Mw {
            gamma: cfg.f64("gamma")?,
        },
        "ham" => MetricKind::Ham {
            alpha: cfg.f64("alpha")?,
        },
        other => return Err(Error::Config(format!("unknown metric `{other}`"))),
    };
    let opts = FlowOptions::new(cfg.f64("t-end")?, cfg.f64("dt")?)
        .beta(cfg.f64("beta")?)
        .record_every(cfg.usize("record-every")?)
        .target(ParamVector::from(targets));
    let trace = flow_integrate(&obj, kind, &ParamVector::from(x0), &opts)?;
    let mut cols = vec!["time".to_string(), "loss".into(), "l1".into(), "dist_to_target".into()];
    cols.extend((0..n).map(|i| format!("x_{i}")));
    let rows = (0..trace.len())
        .map(|i| {
            let mut row = vec![
                Cell::Num(trace.times[i]),
                Cell::Num(trace.loss[i]),
                Cell::Num(trace.l1[i]),
                trace.dist_to_target[i].map(Cell::Num).unwrap_or(Cell::Empty),
            ];
            row.extend(trace.states[i].iter().map(|&v| Cell::Num(v)));
            row
        })
        .collect();
    let rate = rate_estimate(&trace, 0.0).map(num).unwrap_or(Value::Null);
    Ok(RunOutput {
        columns: cols,
        rows,
        metrics: vec![
            ("final_loss", num(*trace.loss.last().unwrap_or(&f64::NAN))),
            ("final_l1", num(*trace.l1.last().unwrap_or(&f64::NAN))),
            ("rate", rate),
        ],
    })
}

fn run_bregman_cmd(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let alpha = cfg.f64("alpha")?;
    let dim = cfg.usize("dim")?;
    let grid = box_grid(cfg.f64("grid-box")?, cfg.usize("grid-pts")?, dim)?;
    let spec = BregmanSpec::centered(alpha, dim)?;
    let mut cols: Vec<String> = (0..dim).map(|i| format!("x_{i}")).collect();
    cols.push("R".into());
    cols.push("normalized".into());
    let mut rows = Vec::with_capacity(grid.len());
    for x in &grid {
        let mut row: Vec<Cell> = x.iter().map(|&v| Cell::Num(v)).collect();
        row.push(Cell::Num(spec.value(x)?));
        row.push(Cell::Num(normalized_value(alpha, x)?));
        rows.push(row);
    }
    let l1 = if alpha > 1.0 {
        num(l1_shape_error(alpha, &grid)?)
    } else {
        Value::Null
    };
    Ok(RunOutput {
        columns: cols,
        rows,
        metrics: vec![("l2_err", num(l2_shape_error(alpha, &grid)?)), ("l1_err", l1)],
    })
}

fn run_fisher_cmd(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let model = match cfg.get("model")? {
        "mean" => ScoreModel::MeanParam,
        "sqrt" => ScoreModel::SqrtParam,
        other => return Err(Error::Config(format!("unknown model `{other}`"))),
    };
    let samples = cfg.usize("samples")?;
    let seed = cfg.u64("seed")?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, x) in cfg.f64_list("xs")?.into_iter().enumerate() {
        let est = fisher_mc_estimate(model, x, samples, seed.wrapping_add(i as u64))?;
        let target = model.information(x)?;
        worst = worst.max(est.z_score(target).abs());
        rows.push(vec![
            Cell::Num(x),
            Cell::Num(est.estimate),
            Cell::Num(est.stderr),
            Cell::Num(target),
        ]);
    }
    Ok(RunOutput {
        columns: columns(&["x", "estimate", "stderr", "target"]),
        rows,
        metrics: vec![("max_abs_z", num(worst))],
    })
}

fn run_toy_cmd(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let seed = cfg.u64("seed")?;
    let base = match cfg.get("base")? {
        "gd" => BaseKind::Gd,
        "momentum" => BaseKind::Momentum { mu: cfg.f64("mu")? },
        "adam" => BaseKind::adam(),
        "sam" => BaseKind::sam(),
        other => return Err(Error::Config(format!("unknown base `{other}`"))),
    };
    let ham = HamConfig::new(cfg.f64("alpha")?, cfg.f64("beta")?, cfg.f64("eta")?);
    let mut train_cfg = TrainConfig::new(base, ham, seed);
    train_cfg.batch = cfg.usize("batch")?;
    train_cfg.log_every = cfg.usize("log-every")?;
    let s = cfg.f64("sparsity")?;
    let (train, test) = moons_split(seed);
    let mlp = toy_network();
    let params = mlp.init(&mut Rng::new(seed));
    let dense = MaskedModel::dense(mlp, params)?;
    let run = match cfg.get("mode")? {
        "acdc" => {
            let schedule = acdc_schedule(cfg.usize("warmup")?, cfg.usize("phase")?, cfg.usize("cycles")?);
            acdc_lite_train(dense, &train, &test, &train_cfg, &schedule, s)?
        }
        "pai" => pai_train(
            random_mask(&dense, s, seed.wrapping_add(100))?,
            &train,
            &test,
            &train_cfg,
            cfg.usize("steps")?,
        )?,
        "dense" => pai_train(dense, &train, &test, &train_cfg, cfg.usize("steps")?)?,
        other => return Err(Error::Config(format!("unknown mode `{other}`"))),
    };
    let rows = run
        .trace
        .rows
        .iter()
        .map(|r| {
            vec![
                Cell::Int(r.step as u64),
                Cell::Num(r.loss),
                Cell::Num(r.l1),
                Cell::Int(r.sign_flips as u64),
            ]
        })
        .collect();
    let report = SignStabilityReport::from_counts(run.trace.rows.iter().map(|r| r.sign_flips).collect());
    let t0 = report.t0.map(|t| json!(t)).unwrap_or(Value::Null);
    Ok(RunOutput {
        columns: columns(&["step", "loss", "l1", "sign_flips"]),
        rows,
        metrics: vec![
            ("test_accuracy", num(run.test_accuracy)),
            ("sparsity", num(run.model.sparsity())),
            ("mean_l1", num(run.trace.mean_l1())),
            ("total_flips", json!(report.total())),
            ("t0", t0),
        ],
    })
}

/// `key=v1,v2;key2=w1` into ordered axes.
pub fn parse_axes(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, vals) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("axis `{part}` is not key=v1,v2")))?;
        let vals: Vec<String> = vals
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if vals.is_empty() {
            return Err(Error::Config(format!("axis `{k}` has no values")));
        }
        let k = k.trim().to_string();
        if axes.iter().any(|(seen, _)| *seen == k) {
            return Err(Error::Config(format!("axis `{k}` given twice")));
        }
        axes.push((k, vals));
    }
    if axes.is_empty() {
        return Err(Error::Config("sweep needs at least one axis".into()));
    }
    Ok(axes)
}

/// Cartesian product of the axes, first axis varying slowest.
pub fn grid_points(axes: &[(String, Vec<String>)]) -> Vec<Vec<String>> {
    let mut points = vec![Vec::new()];
    for (_, vals) in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(v.clone());
                    q
                })
            })
            .collect();
    }
    points
}

/// The swept command's config with the sweep-only keys stripped.
pub fn inner_config(cfg: &ExperimentConfig) -> Result<ExperimentConfig> {
    let inner = Command::parse(cfg.get("command")?)?;
    let mut out = ExperimentConfig::defaults(inner)?;
    for spec in inner.keys() {
        if spec.name == "out" || spec.name == "summary" {
            continue;
        }
        out.set(spec.name, cfg.get(spec.name)?)?;
    }
    Ok(out)
}

fn run_sweep_cmd(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let base = inner_config(cfg)?;
    let axes = parse_axes(cfg.get("axes")?)?;
    for (k, _) in &axes {
        if k == "out" || k == "summary" || base.get(k).is_err() {
            return Err(Error::Config(format!(
                "`{k}` cannot be swept for `{}`",
                base.command.name()
            )));
        }
    }
    let workers = cfg.usize("workers")?;
    if workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    let points = grid_points(&axes);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<RunOutput>> = pool.install(|| {
        points
            .par_iter()
            .map(|point| {
                let mut point_cfg = base.clone();
                for ((k, _), v) in axes.iter().zip(point) {
                    point_cfg.set(k, v)?;
                }
                run(&point_cfg)
            })
            .collect()
    });
    let names = base.command.metric_names();
    let mut cols: Vec<String> = axes.iter().map(|(k, _)| k.clone()).collect();
    cols.push("status".into());
    cols.extend(names.iter().map(|s| s.to_string()));
    let mut failed = 0u64;
    let rows = points
        .iter()
        .zip(&results)
        .map(|(point, res)| {
            let mut row: Vec<Cell> = point.iter().map(|v| Cell::Text(v.clone())).collect();
            match res {
                Ok(out) => {
                    row.push(Cell::Text("ok".into()));
                    row.extend(
                        names
                            .iter()
                            .map(|n| out.metric(n).map(metric_cell).unwrap_or(Cell::Empty)),
                    );
                }
                Err(e) => {
                    failed += 1;
                    let kind = failure_status(e);
                    row.push(Cell::Text(kind.into()));
                    row.extend(names.iter().map(|_| Cell::Empty));
                }
            }
            row
        })
        .collect();
    Ok(RunOutput {
        columns: cols,
        rows,
        metrics: vec![("points", json!(points.len())), ("failed", json!(failed))],
    })
}
