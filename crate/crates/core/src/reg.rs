//! Regularized Lagrangian, projections and step-size constants.

use crate::error::{Error, Result};
use crate::problem::{dot, BoundsPack, BoxSet, ProblemSpec};

/// Regularization weights: `alpha` on the primal, `beta` on the dual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegParams {
    pub alpha: f64,
    pub beta: f64,
}

impl RegParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("{v} must be positive and finite")));
            }
        }
        Ok(Self { alpha, beta })
    }

    /// Checks `alpha < L_p`, needed for the primal contraction.
    pub fn check_against(&self, bounds: &BoundsPack) -> Result<()> {
        if self.alpha < bounds.lp {
            Ok(())
        } else {
            Err(Error::param("alpha", format!("{} must be below L_p = {}", self.alpha, bounds.lp)))
        }
    }
}

/// Primal step `gamma` and dual step `rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub gamma: f64,
    pub rho: f64,
}

impl StepSizes {
    /// `gamma = 2/(L_p + alpha)` and `rho = fraction * rho_0`.
    pub fn recommended(reg: &RegParams, bounds: &BoundsPack, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::param("rho fraction", format!("{fraction} not in (0, 1)")));
        }
        let (rho0, _) = dual_rate_constants(fraction, reg.beta, reg.alpha, bounds.m_g)?;
        Ok(Self { gamma: optimal_gamma(reg.alpha, bounds.lp), rho: fraction * rho0 })
    }

    /// Checks `gamma in (0, 2/L_p)` and `rho in (0, rho_0)`.
    pub fn validate(&self, reg: &RegParams, bounds: &BoundsPack) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 2.0 / bounds.lp) {
            return Err(Error::param("gamma", format!("{} not in (0, 2/L_p) with L_p = {}", self.gamma, bounds.lp)));
        }
        let (rho0, _) = dual_rate_constants(self.rho.max(f64::MIN_POSITIVE), reg.beta, reg.alpha, bounds.m_g)?;
        if !(self.rho > 0.0 && self.rho < rho0) {
            return Err(Error::param("rho", format!("{} not in (0, rho_0) with rho_0 = {rho0}", self.rho)));
        }
        Ok(())
    }
}

/// Dual feasible set `{mu >= 0 : |mu|_1 <= radius}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualBall {
    pub radius: f64,
    pub dim: usize,
}

impl DualBall {
    pub fn new(radius: f64, dim: usize) -> Result<Self> {
        if dim > 0 && !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param("radius", format!("{radius} must be positive and finite")));
        }
        Ok(Self { radius, dim })
    }

    pub fn contains(&self, mu: &[f64], tol: f64) -> bool {
        mu.len() == self.dim && mu.iter().all(|&v| v >= 0.0) && mu.iter().sum::<f64>() <= self.radius * (1.0 + tol)
    }
}

fn check_xmu(spec: &ProblemSpec, x: &[f64], mu: &[f64]) -> Result<()> {
    Error::check_len("primal vector", spec.dim(), x.len())?;
    Error::check_len("dual vector", spec.num_constraints(), mu.len())
}

/// `f(x) + alpha/2 |x|^2 + mu^T g(x) - beta/2 |mu|^2`
pub fn reg_lagrangian(spec: &ProblemSpec, x: &[f64], mu: &[f64], reg: &RegParams) -> Result<f64> {
    check_xmu(spec, x, mu)?;
    let mut g = vec![0.0; spec.num_constraints()];
    spec.constraint_values(x, &mut g);
    Ok(spec.objective(x) + 0.5 * reg.alpha * dot(x, x) + dot(mu, &g) - 0.5 * reg.beta * dot(mu, mu))
}

/// Full primal gradient, assembled block by block from the per-agent partial gradients.
pub fn grad_x_reg_into(spec: &ProblemSpec, x: &[f64], mu: &[f64], alpha: f64, out: &mut [f64]) {
    let p = spec.partition();
    for i in 0..p.num_blocks() {
        spec.partial_grad_x(x, mu, alpha, i, &mut out[p.range(i)]);
    }
}

pub fn grad_x_reg(spec: &ProblemSpec, x: &[f64], mu: &[f64], reg: &RegParams) -> Result<Vec<f64>> {
    check_xmu(spec, x, mu)?;
    let mut out = vec![0.0; x.len()];
    grad_x_reg_into(spec, x, mu, reg.alpha, &mut out);
    Ok(out)
}

/// `g(x) - beta mu`
pub fn grad_mu_reg(spec: &ProblemSpec, x: &[f64], mu: &[f64], beta: f64) -> Result<Vec<f64>> {
    check_xmu(spec, x, mu)?;
    let mut out = vec![0.0; mu.len()];
    spec.constraint_values(x, &mut out);
    for (o, m) in out.iter_mut().zip(mu) {
        *o -= beta * m;
    }
    Ok(out)
}

pub fn project_box_in_place(v: &mut [f64], set: &BoxSet) {
    for ((v, l), u) in v.iter_mut().zip(set.lo()).zip(set.up()) {
        *v = v.clamp(*l, *u);
    }
}

pub fn project_box(v: &[f64], set: &BoxSet) -> Result<Vec<f64>> {
    Error::check_len("project_box", set.dim(), v.len())?;
    let mut out = v.to_vec();
    project_box_in_place(&mut out, set);
    Ok(out)
}

/// Exact Euclidean projection onto the nonnegative l1 ball.
pub fn project_dual_ball_in_place(v: &mut [f64], ball: &DualBall) {
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = x.max(0.0);
        sum += *x;
    }
    if sum <= ball.radius {
        return;
    }
    // Outside the ball, the projection lies on the simplex face: shift by the
    // threshold theta found from the sorted positive entries.
    let mut sorted: Vec<f64> = v.iter().copied().filter(|&x| x > 0.0).collect();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let t = (cumulative - ball.radius) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

pub fn project_dual_ball(v: &[f64], ball: &DualBall) -> Result<Vec<f64>> {
    Error::check_len("project_dual_ball", ball.dim, v.len())?;
    if ball.dim > 0 && !(ball.radius > 0.0) {
        return Err(Error::param("radius", "must be positive"));
    }
    let mut out = v.to_vec();
    project_dual_ball_in_place(&mut out, ball);
    Ok(out)
}

/// Step `2/(L_p + alpha)`, which minimizes the primal contraction factor.
pub fn optimal_gamma(alpha: f64, lp: f64) -> f64 {
    2.0 / (lp + alpha)
}

/// Primal contraction factor `max(|1 - gamma alpha|, |1 - gamma L_p|)`.
pub fn contraction_qp(gamma: f64, alpha: f64, lp: f64) -> Result<f64> {
    if !(lp > 0.0) || !lp.is_finite() {
        return Err(Error::param("L_p", format!("{lp} must be positive")));
    }
    if !(alpha > 0.0 && alpha < lp) {
        return Err(Error::param("alpha", format!("{alpha} not in (0, L_p) with L_p = {lp}")));
    }
    if !(gamma > 0.0 && gamma < 2.0 / lp) {
        return Err(Error::param("gamma", format!("{gamma} not in (0, 2/L_p) with L_p = {lp}")));
    }
    Ok((1.0 - gamma * alpha).abs().max((1.0 - gamma * lp).abs()))
}

/// Dual step bound `rho_0` and dual contraction factor `q_d` for step `rho`.
pub fn dual_rate_constants(rho: f64, beta: f64, alpha: f64, m_g: f64) -> Result<(f64, f64)> {
    for (name, v) in [("rho", rho), ("beta", beta), ("alpha", alpha)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::param(name, format!("{v} must be positive and finite")));
        }
    }
    if !(m_g >= 0.0) || !m_g.is_finite() {
        return Err(Error::param("M_g", format!("{m_g} must be finite and non-negative")));
    }
    let rho0 = (2.0 * alpha / (m_g * m_g + 2.0 * alpha * beta)).min(2.0 * beta / (1.0 + beta * beta));
    let q_d = (1.0 - rho * beta).powi(2) + rho * rho;
    Ok((rho0, q_d))
}

fn check_bounds(bounds: &BoundsPack) -> Result<()> {
    for (name, v) in [("M_f", bounds.m_f), ("M_x", bounds.m_x), ("M_mu", bounds.m_mu)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::param(name, format!("{v} must be finite and non-negative")));
        }
    }
    if bounds.m_gj.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::param("M_gj", "entries must be finite and non-negative"));
    }
    Ok(())
}

/// Regularization weights that keep both regularization errors below `eps`,
/// with safety factor 0.9 and `beta = alpha^3 / 2`.
pub fn choose_reg_params(eps: f64, bounds: &BoundsPack) -> Result<RegParams> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::param("eps", format!("{eps} must be positive")));
    }
    check_bounds(bounds)?;
    let mg_max = bounds.m_gj.iter().copied().fold(0.0, f64::max);
    let m_hat = (mg_max * bounds.m_mu).max(bounds.m_f * bounds.m_mu);
    let denom = m_hat + bounds.m_x * bounds.m_x;
    if !(denom > 0.0) {
        return Err(Error::param("bounds", "M_hat + M_x^2 must be positive"));
    }
    let alpha = 0.9 * 2.0 * eps / denom;
    RegParams::new(alpha, alpha.powi(3) / 2.0)
}

/// A priori regularization errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBounds {
    /// Bound on `|f(xhat_kappa) - f(xhat)|`.
    pub cost: f64,
    /// Bound on `g_j(xhat_kappa)` for each constraint.
    pub violation: Vec<f64>,
}

pub fn error_bounds(reg: &RegParams, bounds: &BoundsPack) -> Result<ErrorBounds> {
    check_bounds(bounds)?;
    let root = (reg.beta / (2.0 * reg.alpha)).sqrt();
    Ok(ErrorBounds {
        cost: bounds.m_f * bounds.m_mu * root + 0.5 * reg.alpha * bounds.m_x * bounds.m_x,
        violation: bounds.m_gj.iter().map(|m| m * bounds.m_mu * root).collect(),
    })
}
