//! Flow-routing benchmark and the asynchronous-dual counterexample.

use std::io::Write;

use nalgebra::DMatrix;

use crate::analysis::{detect_oscillation, dist2, Oscillation};
use crate::error::{Error, Result};
use crate::problem::{Constraint, Coupling, LocalCost, ProblemBuilder, ProblemSpec};
use crate::reg::{project_dual_ball_in_place, RegParams, StepSizes};
use crate::sim::{run_async, RandomSchedule, References, RoundLength, RunTrace, ScheduleParams, SimOptions};
use crate::sync::{SaddleEstimate, SaddleProblem};

/// The eight flows of the benchmark network, as 1-based edge lists.
pub fn default_paths() -> Vec<Vec<usize>> {
    vec![
        vec![1, 3, 6],
        vec![4, 7, 8],
        vec![2, 4, 7, 5],
        vec![3, 4, 7],
        vec![1, 3, 6, 7, 5],
        vec![2, 4, 9],
        vec![5, 8, 9, 6],
        vec![7, 4],
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRoutingConfig {
    /// Edge list of each flow, 1-based.
    pub paths: Vec<Vec<usize>>,
    pub num_edges: usize,
    pub capacity: f64,
    /// Utility weight `delta_i`.
    pub weight: f64,
    /// Scale `s` of the congestion cost `s x^T A^T A x`.
    pub congestion: f64,
    pub lo: f64,
    pub up: f64,
    /// Every coordinate of the Slater point.
    pub slater: f64,
    /// `alpha = beta` values of the sweep.
    pub sweep: Vec<f64>,
    /// `rho = rho_fraction * rho_0`.
    pub rho_fraction: f64,
    pub p_update: f64,
    pub p_edge: f64,
    pub round_min: u32,
    pub round_max: u32,
    pub seed: u64,
    /// Maximum number of dual updates per run.
    pub horizon: u64,
    /// Early-exit threshold on the scaled dual step and the aggregate change.
    pub stop_tol: f64,
    /// Regularization of the unregularized reference solve.
    pub reference_reg: f64,
    pub reference_tol: f64,
}

impl Default for FlowRoutingConfig {
    fn default() -> Self {
        Self {
            paths: default_paths(),
            num_edges: 9,
            capacity: 10.0,
            weight: 100.0,
            congestion: 1.0 / 20.0,
            lo: 0.0,
            up: 10.0,
            slater: 0.1,
            sweep: vec![0.1, 0.01, 0.001],
            rho_fraction: 0.9,
            p_update: 0.05,
            p_edge: 0.05,
            round_min: 5,
            round_max: 100,
            seed: 42,
            horizon: 3_000_000,
            stop_tol: 1e-9,
            reference_reg: 1e-8,
            reference_tol: 1e-10,
        }
    }
}

impl FlowRoutingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::param("paths", "at least one flow is required"));
        }
        for (i, path) in self.paths.iter().enumerate() {
            if path.is_empty() {
                return Err(Error::param(format!("paths[{}]", i + 1), "path uses no edges"));
            }
            if let Some(&e) = path.iter().find(|&&e| e == 0 || e > self.num_edges) {
                return Err(Error::param(
                    format!("paths[{}]", i + 1),
                    format!("edge {e} not in 1..={}", self.num_edges),
                ));
            }
        }
        let positive = [
            ("capacity", self.capacity),
            ("weight", self.weight),
            ("congestion", self.congestion),
            ("rho_fraction", self.rho_fraction),
            ("stop_tol", self.stop_tol),
            ("reference_reg", self.reference_reg),
            ("reference_tol", self.reference_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("{v} must be positive")));
            }
        }
        if self.rho_fraction >= 1.0 {
            return Err(Error::param("rho_fraction", "must be below 1"));
        }
        if !(self.lo > -1.0 && self.lo < self.up) {
            return Err(Error::param("lo", format!("box [{}, {}] is invalid for log utilities", self.lo, self.up)));
        }
        if let Some(&a) = self.sweep.iter().find(|&&a| !(a > 0.0)) {
            return Err(Error::param("sweep", format!("{a} must be positive")));
        }
        for (name, p) in [("p_update", self.p_update), ("p_edge", self.p_edge)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(name, format!("{p} is not a probability")));
            }
        }
        if self.round_min == 0 || self.round_min > self.round_max {
            return Err(Error::param("round_min", format!("invalid range [{}, {}]", self.round_min, self.round_max)));
        }
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be positive"));
        }
        Ok(())
    }

    pub fn schedule_params(&self) -> ScheduleParams {
        ScheduleParams {
            p_update: self.p_update,
            p_edge: self.p_edge,
            round_length: RoundLength::Uniform { min: self.round_min, max: self.round_max },
            ..ScheduleParams::default()
        }
    }
}

/// Edge-by-flow incidence matrix.
pub fn flow_adjacency(cfg: &FlowRoutingConfig) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(cfg.num_edges, cfg.paths.len());
    for (i, path) in cfg.paths.iter().enumerate() {
        for &e in path {
            a[(e - 1, i)] = 1.0;
        }
    }
    a
}

/// Log utilities, quadratic congestion cost and edge capacity constraints.
pub fn build_flow_problem(cfg: &FlowRoutingConfig) -> Result<ProblemSpec> {
    cfg.validate()?;
    let n = cfg.paths.len();
    let a = flow_adjacency(cfg);
    let q = a.transpose() * &a * (2.0 * cfg.congestion);
    let mut b = ProblemBuilder::scalar(n)
        .all_local_costs(LocalCost::LogUtility { weight: cfg.weight })
        .coupling(Coupling::Quadratic(q))
        .uniform_bounds(cfg.lo, cfg.up)
        .slater_point(vec![cfg.slater; n]);
    for e in 0..cfg.num_edges {
        let row: Vec<f64> = a.row(e).iter().copied().collect();
        b = b.constraint(Constraint::Affine { a: row, b: cfg.capacity });
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && cfg.paths[i].iter().any(|e| cfg.paths[j].contains(e)) {
                b = b.depends(i, j);
            }
        }
    }
    b.build()
}

/// Saddle points of the benchmark: a near-unregularized reference and one
/// regularized solution per sweep entry.
#[derive(Debug, Clone)]
pub struct FlowReferences {
    pub unreg: SaddleEstimate,
    pub reg: Vec<(f64, f64, SaddleEstimate)>,
}

impl FlowReferences {
    pub fn compute(spec: &ProblemSpec, cfg: &FlowRoutingConfig, pairs: &[(f64, f64)]) -> Result<Self> {
        let small = RegParams::new(cfg.reference_reg, cfg.reference_reg)?;
        let unreg = solve_checked(spec, small, cfg.reference_tol)?;
        let mut reg = Vec::new();
        for &(alpha, beta) in pairs {
            let est = solve_checked(spec, RegParams::new(alpha, beta)?, 1e-12)?;
            reg.push((alpha, beta, est));
        }
        Ok(Self { unreg, reg })
    }

    pub fn get(&self, alpha: f64, beta: f64) -> Option<&SaddleEstimate> {
        self.reg.iter().find(|(a, b, _)| *a == alpha && *b == beta).map(|(_, _, e)| e)
    }

    pub fn for_run(&self, alpha: f64, beta: f64) -> Option<References> {
        self.get(alpha, beta).map(|e| References {
            x_reg: e.x.clone(),
            mu_reg: e.mu.clone(),
            x_unreg: Some(self.unreg.x.clone()),
            mu_unreg: Some(self.unreg.mu.clone()),
        })
    }
}

fn solve_checked(spec: &ProblemSpec, reg: RegParams, tol: f64) -> Result<SaddleEstimate> {
    let problem = SaddleProblem::new(spec.clone(), reg)?;
    let est = problem.solve(tol, crate::sync::DEFAULT_MAX_ITERS)?;
    if !est.converged {
        return Err(Error::NotConverged {
            what: "saddle-point reference",
            iterations: est.iterations,
            residual: est.residual,
        });
    }
    Ok(est)
}

/// Outcome of one benchmark run.
#[derive(Debug, Clone)]
pub struct FlowResult {
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub gamma: f64,
    pub rho: f64,
    pub rounds: u64,
    pub ticks: u64,
    pub converged: bool,
    pub primal_err_reg: f64,
    pub primal_err_unreg: f64,
    pub dual_err_reg: f64,
    pub dual_err_unreg: f64,
    /// Largest constraint value at the final aggregate.
    pub max_g_final: f64,
    /// Largest constraint value at the regularized saddle point.
    pub max_g_reg: f64,
    /// `|xhat_kappa - xhat|`.
    pub reg_gap: f64,
    pub trace: RunTrace,
}

pub const SUMMARY_COLUMNS: [&str; 15] = [
    "alpha",
    "beta",
    "seed",
    "gamma",
    "rho",
    "rounds",
    "ticks",
    "converged",
    "primal_err_reg",
    "primal_err_unreg",
    "dual_err_reg",
    "dual_err_unreg",
    "max_g_final",
    "max_g_reg",
    "reg_gap",
];

impl FlowResult {
    fn record(&self) -> Vec<String> {
        vec![
            self.alpha.to_string(),
            self.beta.to_string(),
            self.seed.to_string(),
            self.gamma.to_string(),
            self.rho.to_string(),
            self.rounds.to_string(),
            self.ticks.to_string(),
            (self.converged as u8).to_string(),
            self.primal_err_reg.to_string(),
            self.primal_err_unreg.to_string(),
            self.dual_err_reg.to_string(),
            self.dual_err_unreg.to_string(),
            self.max_g_final.to_string(),
            self.max_g_reg.to_string(),
            self.reg_gap.to_string(),
        ]
    }
}

pub fn write_summary<W: Write>(results: &[FlowResult], mut out: W) -> Result<()> {
    if let Some(seed) = results.first().map(|r| r.seed) {
        writeln!(out, "# seed={seed}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in results {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

fn max_g(spec: &ProblemSpec, x: &[f64]) -> f64 {
    let mut g = vec![0.0; spec.num_constraints()];
    spec.constraint_values(x, &mut g);
    g.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Step sizes of the benchmark: `gamma = 2/(L_p + alpha)`, `rho = fraction * rho_0`.
pub fn flow_steps(problem: &SaddleProblem, cfg: &FlowRoutingConfig) -> Result<StepSizes> {
    StepSizes::recommended(&problem.reg, &problem.bounds, cfg.rho_fraction)
}

/// Run the asynchronous method on the benchmark from `x = 0`, `mu = 0`.
/// `record_every` strides the per-round records kept in the trace.
pub fn run_flow_experiment(
    spec: &ProblemSpec,
    cfg: &FlowRoutingConfig,
    refs: &FlowReferences,
    seed: u64,
    reg: RegParams,
    record_every: u64,
) -> Result<FlowResult> {
    let problem = SaddleProblem::new(spec.clone(), reg)?;
    let steps = flow_steps(&problem, cfg)?;
    let reference = refs
        .get(reg.alpha, reg.beta)
        .ok_or_else(|| Error::param("alpha", format!("no reference solution for ({}, {})", reg.alpha, reg.beta)))?
        .clone();
    let mut schedule = RandomSchedule::new(seed, cfg.schedule_params(), spec)?;
    let opts = SimOptions {
        horizon: cfg.horizon,
        stop_tol: Some(cfg.stop_tol),
        record_every,
        references: refs.for_run(reg.alpha, reg.beta),
        ..SimOptions::default()
    };
    let x0 = vec![0.0; spec.dim()];
    let mu0 = vec![0.0; spec.num_constraints()];
    let trace = run_async(&problem, &steps, &mut schedule, &x0, &mu0, &opts)?;
    Ok(FlowResult {
        alpha: reg.alpha,
        beta: reg.beta,
        seed,
        gamma: steps.gamma,
        rho: steps.rho,
        rounds: trace.stats.rounds,
        ticks: trace.stats.ticks,
        converged: trace.converged(),
        primal_err_reg: dist2(&trace.final_x, &reference.x),
        primal_err_unreg: dist2(&trace.final_x, &refs.unreg.x),
        dual_err_reg: dist2(&trace.final_mu, &reference.mu),
        dual_err_unreg: dist2(&trace.final_mu, &refs.unreg.mu),
        max_g_final: max_g(spec, &trace.final_x),
        max_g_reg: max_g(spec, &reference.x),
        reg_gap: dist2(&reference.x, &refs.unreg.x),
        trace,
    })
}

/// All sweep settings with `beta = alpha`, run in parallel.
pub fn sweep(cfg: &FlowRoutingConfig, seed: u64, record_every: u64) -> Result<Vec<FlowResult>> {
    let spec = build_flow_problem(cfg)?;
    let pairs: Vec<(f64, f64)> = cfg.sweep.iter().map(|&a| (a, a)).collect();
    let refs = FlowReferences::compute(&spec, cfg, &pairs)?;
    std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|&(a, b)| {
                let (spec, refs) = (&spec, &refs);
                s.spawn(move || run_flow_experiment(spec, cfg, refs, seed, RegParams::new(a, b)?, record_every))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub outer: usize,
    pub mode1_iters: usize,
    pub mode2_iters: usize,
    pub inner_tol: f64,
    /// Cap on each convergence-gated inner loop.
    pub inner_max: usize,
    pub lo: f64,
    pub up: f64,
    pub slater: [f64; 2],
    pub f_lb: f64,
    /// Also record the state after every mode iteration.
    pub record_inner: bool,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta: 0.01,
            gamma: 0.002,
            rho: 0.0003,
            outer: 10,
            mode1_iters: 500,
            mode2_iters: 1500,
            inner_tol: 1e-5,
            inner_max: 10_000_000,
            lo: 0.0,
            up: 5.0,
            slater: [0.2, 0.2],
            f_lb: -5.0,
            record_inner: false,
        }
    }
}

/// Two scalar agents with opposite linear costs and the constraint
/// `(x_1 - x_2)^2 / 2 - 0.2 <= 0`.
pub fn counterexample_problem(cfg: &CounterexampleConfig) -> Result<ProblemSpec> {
    let h = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
    ProblemBuilder::scalar(2)
        .local_cost(0, LocalCost::Linear(vec![0.1]))
        .local_cost(1, LocalCost::Linear(vec![-0.1]))
        .constraint(Constraint::Quadratic { h, a: vec![0.0; 2], b: 0.2 })
        .uniform_bounds(cfg.lo, cfg.up)
        .slater_point(cfg.slater.to_vec())
        .lower_bound(cfg.f_lb)
        .couple(0, 1)
        .build()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleRow {
    pub outer: usize,
    /// 0 for outer-loop ends, 1 or 2 for mode iterations.
    pub mode: u8,
    pub iter: usize,
    pub x1: f64,
    pub x2: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleTrace {
    /// State at the end of each outer iteration.
    pub outer: Vec<CounterexampleRow>,
    /// State after every mode iteration, when requested.
    pub inner: Vec<CounterexampleRow>,
    /// Largest number of passes any convergence-gated loop needed.
    pub max_inner_passes: usize,
}

impl CounterexampleTrace {
    pub fn series(&self, pick: impl Fn(&CounterexampleRow) -> f64) -> Vec<f64> {
        self.outer.iter().map(pick).collect()
    }

    /// Oscillation of `x_1`, `x_2` and `mu` over the first and last
    /// `window` outer iterations.
    pub fn oscillation(&self, window: usize) -> Result<[Oscillation; 3]> {
        Ok([
            detect_oscillation(&self.series(|r| r.x1), window)?,
            detect_oscillation(&self.series(|r| r.x2), window)?,
            detect_oscillation(&self.series(|r| r.mu), window)?,
        ])
    }

    /// One row per outer iteration.
    pub fn write_outer_csv<W: Write>(&self, out: W) -> Result<()> {
        write_counter_rows(&self.outer, out)
    }

    /// One row per mode iteration; empty unless recorded.
    pub fn write_inner_csv<W: Write>(&self, out: W) -> Result<()> {
        write_counter_rows(&self.inner, out)
    }
}

fn write_counter_rows<W: Write>(rows: &[CounterexampleRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["outer", "mode", "iter", "x1", "x2", "mu"])?;
    for r in rows {
        w.write_record(&[
            r.outer.to_string(),
            r.mode.to_string(),
            r.iter.to_string(),
            r.x1.to_string(),
            r.x2.to_string(),
            r.mu.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Scripted alternation between a mode where agent 2 runs on a stale dual
/// value and a mode where both agents solve their subproblems to tolerance.
/// Updates happen strictly in the listed order.
pub fn run_counterexample(cfg: &CounterexampleConfig) -> Result<CounterexampleTrace> {
    let spec = counterexample_problem(cfg)?;
    let reg = RegParams::new(cfg.alpha, cfg.beta)?;
    let problem = SaddleProblem::new(spec, reg)?;
    let lo = cfg.lo;
    let up = cfg.up;
    let (a, g, r, b) = (cfg.alpha, cfg.gamma, cfg.rho, cfg.beta);
    // theta_1, theta_2: projected gradient steps of each agent; theta_M: cloud step
    let theta1 = |x1: f64, x2: f64, mu: f64| (x1 - g * (0.1 + a * x1 + mu * (x1 - x2))).clamp(lo, up);
    let theta2 = |x1: f64, x2: f64, mu: f64| (x2 - g * (-0.1 + a * x2 + mu * (x2 - x1))).clamp(lo, up);
    let ball = problem.ball;
    let theta_m = |x1: f64, x2: f64, mu: f64| {
        let mut v = [mu + r * (0.5 * (x1 - x2).powi(2) - 0.2 - b * mu)];
        project_dual_ball_in_place(&mut v, &ball);
        v[0]
    };

    let (mut x1, mut x2, mut mu, mut mu_old) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut trace =
        CounterexampleTrace { outer: Vec::with_capacity(cfg.outer), inner: Vec::new(), max_inner_passes: 0 };
    let row = |outer, mode, iter, x1, x2, mu| CounterexampleRow { outer, mode, iter, x1, x2, mu };
    for outer in 1..=cfg.outer {
        for it in 1..=cfg.mode1_iters {
            x2 = theta2(x1, x2, mu_old);
            x1 = theta1(x1, x2, mu);
            mu = theta_m(x1, x2, mu);
            if cfg.record_inner {
                trace.inner.push(row(outer, 1, it, x1, x2, mu));
            }
        }
        mu_old = mu;
        for it in 1..=cfg.mode2_iters {
            let mut passes = 0;
            while (x1 - theta1(x1, x2, mu)).abs() > cfg.inner_tol {
                x1 = theta1(x1, x2, mu);
                passes += 1;
                if passes >= cfg.inner_max {
                    return Err(Error::NotConverged {
                        what: "counterexample agent 1 subproblem",
                        iterations: passes as u64,
                        residual: (x1 - theta1(x1, x2, mu)).abs(),
                    });
                }
            }
            trace.max_inner_passes = trace.max_inner_passes.max(passes);
            passes = 0;
            while (x2 - theta2(x1, x2, mu_old)).abs() > cfg.inner_tol {
                x2 = theta2(x1, x2, mu_old);
                passes += 1;
                if passes >= cfg.inner_max {
                    return Err(Error::NotConverged {
                        what: "counterexample agent 2 subproblem",
                        iterations: passes as u64,
                        residual: (x2 - theta2(x1, x2, mu_old)).abs(),
                    });
                }
            }
            trace.max_inner_passes = trace.max_inner_passes.max(passes);
            mu = theta_m(x1, x2, mu);
            if cfg.record_inner {
                trace.inner.push(row(outer, 2, it, x1, x2, mu));
            }
        }
        mu_old = mu;
        trace.outer.push(row(outer, 0, 0, x1, x2, mu));
    }
    Ok(trace)
}

/// Result of running the counterexample problem through the simulator.
#[derive(Debug, Clone)]
pub struct CounterexampleSync {
    pub reference: SaddleEstimate,
    pub trace: RunTrace,
    pub primal_err: f64,
    pub dual_err: f64,
}

/// The counterexample problem with a synchronized dual variable, on a dense
/// random schedule with the configured step sizes.
pub fn run_counterexample_synchronized(
    cfg: &CounterexampleConfig,
    seed: u64,
    horizon: u64,
) -> Result<CounterexampleSync> {
    let spec = counterexample_problem(cfg)?;
    let problem = SaddleProblem::new(spec.clone(), RegParams::new(cfg.alpha, cfg.beta)?)?;
    let reference = problem.solve(1e-13, crate::sync::DEFAULT_MAX_ITERS)?;
    if !reference.converged {
        return Err(Error::NotConverged {
            what: "counterexample reference",
            iterations: reference.iterations,
            residual: reference.residual,
        });
    }
    let steps = StepSizes { gamma: cfg.gamma, rho: cfg.rho };
    let params = ScheduleParams {
        p_update: 0.5,
        p_edge: 0.5,
        round_length: RoundLength::Uniform { min: 2, max: 6 },
        ..ScheduleParams::default()
    };
    let mut schedule = RandomSchedule::new(seed, params, &spec)?;
    let opts = SimOptions {
        horizon,
        stop_tol: Some(1e-10),
        record_every: 1000,
        references: Some(References {
            x_reg: reference.x.clone(),
            mu_reg: reference.mu.clone(),
            x_unreg: None,
            mu_unreg: None,
        }),
        ..SimOptions::default()
    };
    let trace = run_async(&problem, &steps, &mut schedule, &[0.0, 0.0], &[0.0], &opts)?;
    Ok(CounterexampleSync {
        primal_err: dist2(&trace.final_x, &reference.x),
        dual_err: dist2(&trace.final_mu, &reference.mu),
        reference,
        trace,
    })
}
