//! Synchronous primal-dual projection and the saddle-point oracle.

use crate::analysis::dist2;
use crate::error::{Error, Result};
use crate::problem::{compute_bounds, dual_ball_radius, BoundsPack, ProblemSpec};
use crate::reg::{grad_x_reg_into, project_box_in_place, project_dual_ball_in_place, DualBall, RegParams, StepSizes};

/// A problem paired with its regularization, bound constants and dual ball.
#[derive(Debug, Clone)]
pub struct SaddleProblem {
    pub spec: ProblemSpec,
    pub reg: RegParams,
    pub bounds: BoundsPack,
    pub ball: DualBall,
}

impl SaddleProblem {
    pub fn new(spec: ProblemSpec, reg: RegParams) -> Result<Self> {
        let bounds = compute_bounds(&spec, reg.alpha)?;
        let ball = DualBall::new(dual_ball_radius(&spec, reg.alpha)?, spec.num_constraints())?;
        Ok(Self { spec, reg, bounds, ball })
    }

    /// Regularization-independent part reused with new weights.
    pub fn with_reg(&self, reg: RegParams) -> Result<Self> {
        Self::new(self.spec.clone(), reg)
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.spec.num_constraints()
    }

    pub fn in_domain(&self, x: &[f64], mu: &[f64]) -> bool {
        self.spec.boxset().contains(x) && self.ball.contains(mu, 1e-12)
    }

    /// One Jacobi step: both halves read the same `(x, mu)`.
    pub fn step_into(&self, steps: &StepSizes, x: &[f64], mu: &[f64], x_out: &mut [f64], mu_out: &mut [f64]) {
        grad_x_reg_into(&self.spec, x, mu, self.reg.alpha, x_out);
        for (o, &v) in x_out.iter_mut().zip(x) {
            *o = v - steps.gamma * *o;
        }
        project_box_in_place(x_out, self.spec.boxset());
        self.spec.constraint_values(x, mu_out);
        for (o, &m) in mu_out.iter_mut().zip(mu) {
            *o = m + steps.rho * (*o - self.reg.beta * m);
        }
        project_dual_ball_in_place(mu_out, &self.ball);
    }

    pub fn sync_step(&self, steps: &StepSizes, x: &[f64], mu: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Error::check_len("primal vector", self.dim(), x.len())?;
        Error::check_len("dual vector", self.num_constraints(), mu.len())?;
        steps.validate(&self.reg, &self.bounds)?;
        let mut xo = vec![0.0; x.len()];
        let mut mo = vec![0.0; mu.len()];
        self.step_into(steps, x, mu, &mut xo, &mut mo);
        Ok((xo, mo))
    }

    /// Steps used by the oracle: `gamma = 1/L_p` and `rho = 0.1 L_p / M_g^2`,
    /// capped inside the admissible interval.
    pub fn oracle_steps(&self) -> StepSizes {
        let lp = self.bounds.lp;
        let mg2 = self.bounds.m_g * self.bounds.m_g;
        let rho = if mg2 > 0.0 { 0.1 * lp / mg2 } else { 1.0 };
        StepSizes { gamma: 1.0 / lp, rho: rho.min(1.0 / self.reg.beta) }
    }

    /// Iterate the synchronous map from `(x0, mu0)` until the one-step
    /// residual drops below `tol`. When a window of iterations makes no
    /// progress the dual step is halved.
    pub fn solve_from(
        &self,
        x0: &[f64],
        mu0: &[f64],
        steps: StepSizes,
        tol: f64,
        max_iters: u64,
    ) -> Result<SaddleEstimate> {
        if !(tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        Error::check_len("primal vector", self.dim(), x0.len())?;
        Error::check_len("dual vector", self.num_constraints(), mu0.len())?;
        const WINDOW: u64 = 20_000;
        let mut steps = steps;
        let (mut x, mut mu) = (x0.to_vec(), mu0.to_vec());
        project_box_in_place(&mut x, self.spec.boxset());
        project_dual_ball_in_place(&mut mu, &self.ball);
        let (mut xn, mut mn) = (x.clone(), mu.clone());
        let mut residual = f64::INFINITY;
        let mut window_start = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iters {
            self.step_into(&steps, &x, &mu, &mut xn, &mut mn);
            iterations += 1;
            residual = (dist2(&x, &xn).powi(2) + dist2(&mu, &mn).powi(2)).sqrt();
            std::mem::swap(&mut x, &mut xn);
            std::mem::swap(&mut mu, &mut mn);
            if residual < tol {
                break;
            }
            if iterations % WINDOW == 0 {
                if !(residual < window_start) {
                    steps.rho *= 0.5;
                }
                window_start = residual;
            }
        }
        Ok(SaddleEstimate { x, mu, residual, iterations, converged: residual < tol, steps })
    }

    pub fn solve(&self, tol: f64, max_iters: u64) -> Result<SaddleEstimate> {
        let x0 = self.spec.slater_point().to_vec();
        let mu0 = vec![0.0; self.num_constraints()];
        self.solve_from(&x0, &mu0, self.oracle_steps(), tol, max_iters)
    }

    /// Minimizer over the box of `L_kappa(., mu)`, by projected gradient
    /// descent from `start` with step `2/(L_p + alpha)`.
    pub fn inner_target_from(&self, mu: &[f64], start: &[f64], tol: f64, max_iters: u64) -> Result<Vec<f64>> {
        Error::check_len("dual vector", self.num_constraints(), mu.len())?;
        Error::check_len("primal vector", self.dim(), start.len())?;
        if !(tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        let gamma = 2.0 / (self.bounds.lp + self.reg.alpha);
        let mut x = start.to_vec();
        project_box_in_place(&mut x, self.spec.boxset());
        let mut next = vec![0.0; x.len()];
        let mut residual = f64::INFINITY;
        for _ in 0..max_iters {
            grad_x_reg_into(&self.spec, &x, mu, self.reg.alpha, &mut next);
            for (o, &v) in next.iter_mut().zip(&x) {
                *o = v - gamma * *o;
            }
            project_box_in_place(&mut next, self.spec.boxset());
            residual = dist2(&x, &next);
            std::mem::swap(&mut x, &mut next);
            if residual < tol {
                return Ok(x);
            }
        }
        Err(Error::NotConverged { what: "inner_target", iterations: max_iters, residual })
    }

    pub fn inner_target(&self, mu: &[f64], tol: f64) -> Result<Vec<f64>> {
        let start = self.spec.slater_point().to_vec();
        self.inner_target_from(mu, &start, tol, DEFAULT_MAX_ITERS)
    }
}

pub const DEFAULT_MAX_ITERS: u64 = 10_000_000;

/// Approximate regularized saddle point.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleEstimate {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    /// `|(x, mu) - T(x, mu)|` for the one-step map `T` with `steps`.
    pub residual: f64,
    pub iterations: u64,
    pub converged: bool,
    pub steps: StepSizes,
}

/// Synchronous update `(x, mu) -> (x+, mu+)`.
pub fn sync_step(problem: &SaddleProblem, steps: &StepSizes, x: &[f64], mu: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    problem.sync_step(steps, x, mu)
}

pub fn solve_saddle(spec: &ProblemSpec, reg: RegParams, tol: f64, max_iters: u64) -> Result<SaddleEstimate> {
    SaddleProblem::new(spec.clone(), reg)?.solve(tol, max_iters)
}

pub fn inner_target(spec: &ProblemSpec, reg: RegParams, mu: &[f64], tol: f64) -> Result<Vec<f64>> {
    SaddleProblem::new(spec.clone(), reg)?.inner_target(mu, tol)
}
