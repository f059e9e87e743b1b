//! Constrained convex problems split across agents.
//!
//! A [`ProblemSpec`] is `minimize sum_i f_i(x_i) + c(x) subject to g(x) <= 0,
//! x in X`, where `X` is a box and each agent owns one contiguous block of `x`.
//! Dependencies between agents are declared by the author and validated
//! against the structure of the built-in oracle families.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{norm2, BlockPartition};
use crate::error::{Error, Result};

/// A smooth function with an analytic gradient.
///
/// Used for custom local costs (argument is the agent's block), custom
/// coupling costs and custom constraints (argument is the full vector).
pub trait SmoothFunction: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Known Lipschitz constant of the gradient over the box, if any.
    fn lipschitz_hint(&self) -> Option<f64> {
        None
    }

    /// Known bound on the gradient norm over the box, if any.
    fn gradient_bound_hint(&self) -> Option<f64> {
        None
    }
}

#[derive(Clone)]
pub enum LocalCost {
    Zero,
    /// `c^T x_i`
    Linear(Vec<f64>),
    /// `sum_k p_k x_k^2 / 2 + q^T x_i` with `p >= 0`
    Quadratic {
        p: Vec<f64>,
        q: Vec<f64>,
    },
    /// `-weight * sum_k log(1 + x_k)`
    LogUtility {
        weight: f64,
    },
    Custom(Arc<dyn SmoothFunction>),
}

#[derive(Clone)]
pub enum Coupling {
    None,
    /// `x^T Q x / 2` with `Q` symmetric positive semidefinite.
    Quadratic(DMatrix<f64>),
    Custom(Arc<dyn SmoothFunction>),
}

#[derive(Clone)]
pub enum Constraint {
    /// `a^T x - b`
    Affine {
        a: Vec<f64>,
        b: f64,
    },
    /// `x^T H x / 2 + a^T x - b` with `H` symmetric positive semidefinite.
    Quadratic {
        h: DMatrix<f64>,
        a: Vec<f64>,
        b: f64,
    },
    Custom(Arc<dyn SmoothFunction>),
}

impl fmt::Debug for LocalCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalCost::Zero => write!(f, "Zero"),
            LocalCost::Linear(c) => f.debug_tuple("Linear").field(c).finish(),
            LocalCost::Quadratic { p, q } => f.debug_struct("Quadratic").field("p", p).field("q", q).finish(),
            LocalCost::LogUtility { weight } => f.debug_struct("LogUtility").field("weight", weight).finish(),
            LocalCost::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl fmt::Debug for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coupling::None => write!(f, "None"),
            Coupling::Quadratic(q) => write!(f, "Quadratic({}x{})", q.nrows(), q.ncols()),
            Coupling::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Affine { a, b } => f.debug_struct("Affine").field("a", a).field("b", b).finish(),
            Constraint::Quadratic { a, b, .. } => f.debug_struct("Quadratic").field("a", a).field("b", b).finish(),
            Constraint::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl LocalCost {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            LocalCost::Zero => 0.0,
            LocalCost::Linear(c) => dot(c, x),
            LocalCost::Quadratic { p, q } => {
                x.iter().zip(p.iter().zip(q)).map(|(x, (p, q))| 0.5 * p * x * x + q * x).sum()
            }
            LocalCost::LogUtility { weight } => -weight * x.iter().map(|v| v.ln_1p()).sum::<f64>(),
            LocalCost::Custom(h) => h.value(x),
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            LocalCost::Zero => out.fill(0.0),
            LocalCost::Linear(c) => out.copy_from_slice(c),
            LocalCost::Quadratic { p, q } => {
                for k in 0..x.len() {
                    out[k] = p[k] * x[k] + q[k];
                }
            }
            LocalCost::LogUtility { weight } => {
                for k in 0..x.len() {
                    out[k] = -weight / (1.0 + x[k]);
                }
            }
            LocalCost::Custom(h) => h.gradient(x, out),
        }
    }
}

impl Constraint {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Affine { a, b } => dot(a, x) - b,
            Constraint::Quadratic { h, a, b } => {
                let mut quad = 0.0;
                for k in 0..x.len() {
                    quad += x[k] * dot(h.column(k).as_slice(), x);
                }
                0.5 * quad + dot(a, x) - b
            }
            Constraint::Custom(h) => h.value(x),
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Constraint::Affine { a, .. } => out.copy_from_slice(a),
            Constraint::Quadratic { h, a, .. } => {
                for k in 0..x.len() {
                    out[k] = dot(h.column(k).as_slice(), x) + a[k];
                }
            }
            Constraint::Custom(h) => h.gradient(x, out),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Box constraint set `X = X_1 x ... x X_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lo: Vec<f64>,
    up: Vec<f64>,
    partition: BlockPartition,
}

impl BoxSet {
    pub fn new(lo: Vec<f64>, up: Vec<f64>, partition: BlockPartition) -> Result<Self> {
        Error::check_len("box lower bound", partition.dim(), lo.len())?;
        Error::check_len("box upper bound", partition.dim(), up.len())?;
        for k in 0..lo.len() {
            if !lo[k].is_finite() || !up[k].is_finite() {
                return Err(Error::param("box", format!("coordinate {k} has a non-finite bound")));
            }
            if lo[k] > up[k] {
                return Err(Error::param("box", format!("coordinate {k}: lower {} > upper {}", lo[k], up[k])));
            }
        }
        Ok(Self { lo, up, partition })
    }

    /// The same interval `[lo, up]` in every coordinate.
    pub fn uniform(lo: f64, up: f64, partition: BlockPartition) -> Result<Self> {
        let n = partition.dim();
        Self::new(vec![lo; n], vec![up; n], partition)
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn up(&self) -> &[f64] {
        &self.up
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(k, &v)| v >= self.lo[k] && v <= self.up[k])
    }

    /// Clamp coordinates `range` of `x` into the box, in place.
    pub fn clamp_block(&self, agent: usize, block: &mut [f64]) {
        let r = self.partition.range(agent);
        for (v, k) in block.iter_mut().zip(r) {
            *v = v.clamp(self.lo[k], self.up[k]);
        }
    }

    /// Largest Euclidean norm of a point of the box.
    pub fn max_norm(&self) -> f64 {
        self.lo.iter().zip(&self.up).map(|(l, u)| l.abs().max(u.abs()).powi(2)).sum::<f64>().sqrt()
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.up).map(|(l, u)| (u - l).powi(2)).sum::<f64>().sqrt()
    }

    pub fn block_diameter(&self, agent: usize) -> f64 {
        self.partition.range(agent).map(|k| (self.up[k] - self.lo[k]).powi(2)).sum::<f64>().sqrt()
    }

    fn sample<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        for k in 0..out.len() {
            out[k] = if self.up[k] > self.lo[k] { rng.random_range(self.lo[k]..=self.up[k]) } else { self.lo[k] };
        }
    }
}

/// Validated constrained problem. Immutable once built.
#[derive(Clone)]
pub struct ProblemSpec {
    local: Vec<LocalCost>,
    coupling: Coupling,
    constraints: Vec<Constraint>,
    boxset: BoxSet,
    slater: Vec<f64>,
    f_lb: f64,
    neighbors: Vec<Vec<usize>>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("agents", &self.num_agents())
            .field("n", &self.dim())
            .field("m", &self.num_constraints())
            .field("f_lb", &self.f_lb)
            .field("neighbors", &self.neighbors)
            .finish_non_exhaustive()
    }
}

/// Builder for [`ProblemSpec`].
pub struct ProblemBuilder {
    dims: Vec<usize>,
    local: Vec<LocalCost>,
    coupling: Coupling,
    constraints: Vec<Constraint>,
    bounds: Option<(Vec<f64>, Vec<f64>)>,
    slater: Option<Vec<f64>>,
    f_lb: Option<f64>,
    pairs: Vec<(usize, usize)>,
}

impl ProblemBuilder {
    pub fn new(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            local: vec![LocalCost::Zero; dims.len()],
            coupling: Coupling::None,
            constraints: Vec::new(),
            bounds: None,
            slater: None,
            f_lb: None,
            pairs: Vec::new(),
        }
    }

    /// `count` agents with scalar states.
    pub fn scalar(count: usize) -> Self {
        Self::new(&vec![1; count])
    }

    pub fn local_cost(mut self, agent: usize, cost: LocalCost) -> Self {
        if agent < self.local.len() {
            self.local[agent] = cost;
        }
        self
    }

    pub fn all_local_costs(mut self, cost: LocalCost) -> Self {
        self.local.iter_mut().for_each(|c| *c = cost.clone());
        self
    }

    pub fn coupling(mut self, coupling: Coupling) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn constraint(mut self, g: Constraint) -> Self {
        self.constraints.push(g);
        self
    }

    pub fn bounds(mut self, lo: Vec<f64>, up: Vec<f64>) -> Self {
        self.bounds = Some((lo, up));
        self
    }

    pub fn uniform_bounds(self, lo: f64, up: f64) -> Self {
        let n = self.dims.iter().sum();
        self.bounds(vec![lo; n], vec![up; n])
    }

    pub fn slater_point(mut self, x: Vec<f64>) -> Self {
        self.slater = Some(x);
        self
    }

    /// Lower bound on the optimal cost. Computed from the box when omitted.
    pub fn lower_bound(mut self, f_lb: f64) -> Self {
        self.f_lb = Some(f_lb);
        self
    }

    /// Declare that the partial gradient in `x_j` depends on `x_i`.
    pub fn depends(mut self, i: usize, j: usize) -> Self {
        self.pairs.push((i, j));
        self
    }

    /// Declare a dependency in both directions.
    pub fn couple(self, i: usize, j: usize) -> Self {
        self.depends(i, j).depends(j, i)
    }

    pub fn build(self) -> Result<ProblemSpec> {
        let partition = BlockPartition::new(&self.dims)?;
        let n = partition.dim();
        let (lo, up) = self.bounds.ok_or_else(|| Error::param("box", "bounds are required"))?;
        let boxset = BoxSet::new(lo, up, partition.clone())?;

        for (i, cost) in self.local.iter().enumerate() {
            let ni = partition.block_dim(i);
            match cost {
                LocalCost::Linear(c) => Error::check_len("linear cost", ni, c.len())?,
                LocalCost::Quadratic { p, q } => {
                    Error::check_len("quadratic cost p", ni, p.len())?;
                    Error::check_len("quadratic cost q", ni, q.len())?;
                    if p.iter().any(|&v| v < 0.0) {
                        return Err(Error::param(format!("local_cost[{i}].p"), "curvature must be non-negative"));
                    }
                }
                LocalCost::LogUtility { weight } => {
                    if !(*weight >= 0.0) {
                        return Err(Error::param(format!("local_cost[{i}].weight"), "must be non-negative"));
                    }
                    if let Some(k) = partition.range(i).find(|&k| boxset.lo[k] <= -1.0) {
                        return Err(Error::param(
                            "box",
                            format!("log utility needs lower bound > -1 at coordinate {k}"),
                        ));
                    }
                }
                LocalCost::Zero | LocalCost::Custom(_) => {}
            }
        }
        if let Coupling::Quadratic(q) = &self.coupling {
            check_symmetric("coupling", q, n)?;
        }
        for (j, g) in self.constraints.iter().enumerate() {
            match g {
                Constraint::Affine { a, .. } => Error::check_len("affine constraint", n, a.len())?,
                Constraint::Quadratic { h, a, .. } => {
                    Error::check_len("quadratic constraint", n, a.len())?;
                    check_symmetric(&format!("constraint[{j}].h"), h, n)?;
                }
                Constraint::Custom(_) => {}
            }
        }

        let neighbors = neighborhoods_from_pairs(partition.num_blocks(), &self.pairs)?;
        let mut spec = ProblemSpec {
            local: self.local,
            coupling: self.coupling,
            constraints: self.constraints,
            boxset,
            slater: Vec::new(),
            f_lb: 0.0,
            neighbors,
        };
        for (i, j) in spec.structural_dependencies() {
            if !spec.neighbors[j].contains(&i) {
                return Err(Error::MissingDependency(i, j));
            }
        }

        let slater = match self.slater {
            Some(x) => x,
            None if spec.constraints.is_empty() => spec.boxset.lo.clone(),
            None => return Err(Error::param("slater", "a Slater point is required when constraints are present")),
        };
        Error::check_len("Slater point", n, slater.len())?;
        if !spec.boxset.contains(&slater) {
            return Err(Error::param("slater", "point lies outside the box"));
        }
        let mut g = vec![0.0; spec.num_constraints()];
        spec.constraint_values(&slater, &mut g);
        if let Some((index, &value)) = g.iter().enumerate().find(|(_, &v)| !(v < 0.0)) {
            return Err(Error::SlaterViolation { index, value });
        }
        spec.slater = slater;
        spec.f_lb = match self.f_lb {
            Some(v) if v.is_finite() => v,
            Some(v) => return Err(Error::param("f_lb", format!("{v} is not finite"))),
            None => box_lower_bound(&spec, 1e-10, 100_000).0,
        };
        let fx = spec.objective(&spec.slater);
        if spec.f_lb > fx {
            return Err(Error::param("f_lb", format!("{} exceeds the cost {fx} at the Slater point", spec.f_lb)));
        }
        Ok(spec)
    }
}

fn check_symmetric(what: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::param(what, format!("expected {n}x{n} matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    for r in 0..n {
        for c in 0..r {
            let (a, b) = (m[(r, c)], m[(c, r)]);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::param(what, format!("matrix is not symmetric at ({r}, {c})")));
            }
        }
    }
    Ok(())
}

/// Essential neighborhoods from declared ordered pairs `(i, j)`, meaning the
/// partial gradient of agent `j` depends on `x_i`. Self pairs are ignored.
pub fn neighborhoods_from_pairs(agents: usize, pairs: &[(usize, usize)]) -> Result<Vec<Vec<usize>>> {
    let mut adj = vec![vec![false; agents]; agents];
    for &(i, j) in pairs {
        if i >= agents || j >= agents {
            return Err(Error::param("sparsity", format!("pair ({i}, {j}) names an agent outside 0..{agents}")));
        }
        if i != j {
            adj[i][j] = true;
        }
    }
    for i in 0..agents {
        for j in 0..agents {
            if adj[i][j] && !adj[j][i] {
                return Err(Error::AsymmetricSparsity(i, j));
            }
        }
    }
    Ok((0..agents).map(|i| (0..agents).filter(|&j| adj[i][j]).collect()).collect())
}

/// Per-agent essential neighborhoods of a validated problem.
pub fn essential_neighborhoods(spec: &ProblemSpec) -> Vec<Vec<usize>> {
    spec.neighbors.clone()
}

impl ProblemSpec {
    pub fn num_agents(&self) -> usize {
        self.local.len()
    }

    pub fn dim(&self) -> usize {
        self.boxset.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn partition(&self) -> &BlockPartition {
        self.boxset.partition()
    }

    pub fn boxset(&self) -> &BoxSet {
        &self.boxset
    }

    pub fn slater_point(&self) -> &[f64] {
        &self.slater
    }

    pub fn lower_bound(&self) -> f64 {
        self.f_lb
    }

    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.neighbors[agent]
    }

    pub fn local_costs(&self) -> &[LocalCost] {
        &self.local
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Same problem with a different Slater point and cost lower bound.
    pub fn with_slater(&self, slater: Vec<f64>, f_lb: f64) -> Result<Self> {
        Error::check_len("Slater point", self.dim(), slater.len())?;
        let mut g = vec![0.0; self.num_constraints()];
        self.constraint_values(&slater, &mut g);
        if let Some((index, &value)) = g.iter().enumerate().find(|(_, &v)| !(v < 0.0)) {
            return Err(Error::SlaterViolation { index, value });
        }
        if !self.boxset.contains(&slater) {
            return Err(Error::param("slater", "point lies outside the box"));
        }
        if !(f_lb <= self.objective(&slater)) {
            return Err(Error::param("f_lb", "exceeds the cost at the Slater point"));
        }
        Ok(Self { slater, f_lb, ..self.clone() })
    }

    /// Ordered pairs `(i, j)` for which the built-in oracles make the partial
    /// gradient of agent `j` depend on `x_i`. Custom parts contribute nothing.
    pub fn structural_dependencies(&self) -> Vec<(usize, usize)> {
        let p = self.partition();
        let agents = p.num_blocks();
        let mut dep = vec![vec![false; agents]; agents];
        let mut mark = |m: &DMatrix<f64>| {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    if m[(r, c)] != 0.0 {
                        dep[p.owner(c)][p.owner(r)] = true;
                    }
                }
            }
        };
        if let Coupling::Quadratic(q) = &self.coupling {
            mark(q);
        }
        for g in &self.constraints {
            if let Constraint::Quadratic { h, .. } = g {
                mark(h);
            }
        }
        let mut out = Vec::new();
        for i in 0..agents {
            for j in 0..agents {
                if i != j && dep[i][j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Total cost `sum_i f_i(x_i) + c(x)`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let p = self.partition();
        let mut v: f64 = (0..self.num_agents()).map(|i| self.local[i].value(&x[p.range(i)])).sum();
        v += match &self.coupling {
            Coupling::None => 0.0,
            Coupling::Quadratic(q) => {
                let mut s = 0.0;
                for k in 0..x.len() {
                    s += x[k] * dot(q.column(k).as_slice(), x);
                }
                0.5 * s
            }
            Coupling::Custom(h) => h.value(x),
        };
        v
    }

    pub fn objective_gradient(&self, x: &[f64], out: &mut [f64]) {
        let p = self.partition();
        for i in 0..self.num_agents() {
            let r = p.range(i);
            self.local[i].gradient(&x[r.clone()], &mut out[r]);
        }
        match &self.coupling {
            Coupling::None => {}
            Coupling::Quadratic(q) => {
                for k in 0..x.len() {
                    out[k] += dot(q.column(k).as_slice(), x);
                }
            }
            Coupling::Custom(h) => {
                let mut buf = vec![0.0; x.len()];
                h.gradient(x, &mut buf);
                out.iter_mut().zip(&buf).for_each(|(o, b)| *o += b);
            }
        }
    }

    pub fn constraint_values(&self, x: &[f64], out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(&self.constraints) {
            *o = g.value(x);
        }
    }

    pub fn constraint_gradient(&self, j: usize, x: &[f64], out: &mut [f64]) {
        self.constraints[j].gradient(x, out);
    }

    /// Partial gradient `grad_{x_i} L(x, mu) + alpha x_i` for one agent's block,
    /// written to `out` (length of that block). Reads only the entries of `x`
    /// the declared sparsity allows for built-in oracles.
    pub fn partial_grad_x(&self, x: &[f64], mu: &[f64], alpha: f64, agent: usize, out: &mut [f64]) {
        let r = self.partition().range(agent);
        assert_eq!(x.len(), self.dim(), "state dimension");
        assert_eq!(mu.len(), self.num_constraints(), "dual dimension");
        assert_eq!(out.len(), r.len(), "block dimension");
        self.local[agent].gradient(&x[r.clone()], out);

        let full = |h: &Arc<dyn SmoothFunction>| -> Vec<f64> {
            let mut buf = vec![0.0; x.len()];
            h.gradient(x, &mut buf);
            buf
        };
        match &self.coupling {
            Coupling::None => {}
            Coupling::Quadratic(q) => {
                for (o, k) in out.iter_mut().zip(r.clone()) {
                    *o += dot(q.column(k).as_slice(), x);
                }
            }
            Coupling::Custom(h) => {
                let buf = full(h);
                for (o, k) in out.iter_mut().zip(r.clone()) {
                    *o += buf[k];
                }
            }
        }
        for (o, k) in out.iter_mut().zip(r.clone()) {
            *o += alpha * x[k];
        }
        for (g, &m) in self.constraints.iter().zip(mu) {
            if m == 0.0 {
                continue;
            }
            match g {
                Constraint::Affine { a, .. } => {
                    for (o, k) in out.iter_mut().zip(r.clone()) {
                        *o += m * a[k];
                    }
                }
                Constraint::Quadratic { h, a, .. } => {
                    for (o, k) in out.iter_mut().zip(r.clone()) {
                        *o += m * (dot(h.column(k).as_slice(), x) + a[k]);
                    }
                }
                Constraint::Custom(h) => {
                    let buf = full(h);
                    for (o, k) in out.iter_mut().zip(r.clone()) {
                        *o += m * buf[k];
                    }
                }
            }
        }
    }
}

/// Constants required by the step-size conditions and rate bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsPack {
    /// Lipschitz constant of `grad_x L_kappa(., mu)`, uniform over `mu` in the dual ball.
    pub lp: f64,
    pub m_g: f64,
    pub m_f: f64,
    pub m_x: f64,
    pub m_gj: Vec<f64>,
    pub m_mu: f64,
    pub d_x: f64,
    pub l_x: f64,
    /// l1 radius of the dual ball.
    pub radius: f64,
    /// Some constant came from sampling rather than a closed form.
    pub sampled: bool,
    /// Sampling did not stabilize within its budget.
    pub warning: bool,
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn add(self, o: Interval) -> Self {
        Self { lo: self.lo + o.lo, hi: self.hi + o.hi }
    }

    fn abs_max(self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

/// Interval enclosure of `(M x)_k + a_k` over the box.
fn linear_interval(m: &DMatrix<f64>, a: Option<&[f64]>, k: usize, b: &BoxSet) -> Interval {
    let mut iv = Interval::point(a.map_or(0.0, |a| a[k]));
    let col = m.column(k);
    for l in 0..b.dim() {
        let (u, v) = (col[l] * b.lo[l], col[l] * b.up[l]);
        iv = iv.add(Interval { lo: u.min(v), hi: u.max(v) });
    }
    iv
}

const SAMPLE_SEED: u64 = 0x5eed_b0b5;
const SAMPLE_LEVELS: [usize; 5] = [256, 1024, 4096, 16384, 65536];
const SAMPLE_RTOL: f64 = 1e-3;

struct Sampled {
    value: f64,
    stable: bool,
}

/// Refine `estimate(count)` over increasing sample budgets until two
/// consecutive levels agree to `SAMPLE_RTOL`.
fn refine(mut estimate: impl FnMut(usize) -> f64) -> Sampled {
    let mut prev = estimate(SAMPLE_LEVELS[0]);
    for &count in &SAMPLE_LEVELS[1..] {
        let cur = estimate(count).max(prev);
        if (cur - prev).abs() <= SAMPLE_RTOL * cur.abs().max(1e-300) {
            return Sampled { value: cur, stable: true };
        }
        prev = cur;
    }
    Sampled { value: prev, stable: false }
}

/// Sampled maximum gradient norm of a function of `dim` inputs drawn from `domain`.
fn sampled_grad_bound(h: &dyn SmoothFunction, domain: &BoxSet, range: std::ops::Range<usize>) -> Sampled {
    if let Some(v) = h.gradient_bound_hint() {
        return Sampled { value: v, stable: true };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let mut full = vec![0.0; domain.dim()];
    let mut grad = vec![0.0; range.len()];
    let mut best = 0.0f64;
    refine(|count| {
        for _ in 0..count {
            domain.sample(&mut rng, &mut full);
            h.gradient(&full[range.clone()], &mut grad);
            best = best.max(norm2(&grad));
        }
        best
    })
}

/// Sampled Lipschitz constant of the gradient from nearby point pairs.
fn sampled_lipschitz(h: &dyn SmoothFunction, domain: &BoxSet, range: std::ops::Range<usize>) -> Sampled {
    if let Some(v) = h.lipschitz_hint() {
        return Sampled { value: v, stable: true };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED ^ 1);
    let d = range.len();
    let mut full = vec![0.0; domain.dim()];
    let (mut u, mut v) = (vec![0.0; d], vec![0.0; d]);
    let (mut gu, mut gv) = (vec![0.0; d], vec![0.0; d]);
    let lo: Vec<f64> = domain.lo[range.clone()].to_vec();
    let up: Vec<f64> = domain.up[range.clone()].to_vec();
    let scale = 1e-4 * domain.diameter().max(1e-12);
    let mut best = 0.0f64;
    refine(|count| {
        for _ in 0..count {
            domain.sample(&mut rng, &mut full);
            u.copy_from_slice(&full[range.clone()]);
            for k in 0..d {
                let step = scale * rng.random_range(-1.0..=1.0);
                v[k] = (u[k] + step).clamp(lo[k], up[k]);
            }
            let dist = crate::analysis::dist2(&u, &v);
            if dist == 0.0 {
                continue;
            }
            h.gradient(&u, &mut gu);
            h.gradient(&v, &mut gv);
            best = best.max(crate::analysis::dist2(&gu, &gv) / dist);
        }
        best
    })
}

fn lambda_max(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m).eigenvalues.max()
}

/// Bound constants for regularization `alpha`.
///
/// Closed forms are used for the built-in oracle families: box corners for
/// norms and diameters, interval enclosures for gradient norms, singular
/// values for affine constraint Jacobians, and the largest Hessian eigenvalue
/// at the vertices of the dual ball for `L_p`. Custom oracles fall back to
/// seeded sampling over budgets of 256 to 65536 points, refined until two
/// consecutive budgets agree to a relative 1e-3; otherwise `warning` is set.
pub fn compute_bounds(spec: &ProblemSpec, alpha: f64) -> Result<BoundsPack> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::param("alpha", format!("{alpha} must be positive")));
    }
    let b = spec.boxset();
    let p = spec.partition();
    let n = spec.dim();
    let mut sampled = false;
    let mut warning = false;
    let mut note = |s: &Sampled| {
        sampled = true;
        warning |= !s.stable;
        s.value
    };

    // Gradient enclosure of the cost and Hessian bound of its smooth part.
    let mut grad_iv = vec![Interval::point(0.0); n];
    let mut hess = DMatrix::<f64>::zeros(n, n);
    let mut cost_norm_extra = 0.0;
    for i in 0..spec.num_agents() {
        let r = p.range(i);
        match &spec.local[i] {
            LocalCost::Zero => {}
            LocalCost::Linear(c) => {
                for (k, &ck) in r.clone().zip(c) {
                    grad_iv[k] = Interval::point(ck);
                }
            }
            LocalCost::Quadratic { p: pk, q } => {
                for (t, k) in r.clone().enumerate() {
                    let (u, v) = (pk[t] * b.lo[k] + q[t], pk[t] * b.up[k] + q[t]);
                    grad_iv[k] = Interval { lo: u.min(v), hi: u.max(v) };
                    hess[(k, k)] += pk[t];
                }
            }
            LocalCost::LogUtility { weight } => {
                for k in r.clone() {
                    grad_iv[k] = Interval { lo: -weight / (1.0 + b.lo[k]), hi: -weight / (1.0 + b.up[k]) };
                    hess[(k, k)] += weight / (1.0 + b.lo[k]).powi(2);
                }
            }
            LocalCost::Custom(h) => {
                cost_norm_extra += note(&sampled_grad_bound(h.as_ref(), b, r.clone()));
                let lip = note(&sampled_lipschitz(h.as_ref(), b, r.clone()));
                for k in r.clone() {
                    hess[(k, k)] += lip;
                }
            }
        }
    }
    match &spec.coupling {
        Coupling::None => {}
        Coupling::Quadratic(q) => {
            for k in 0..n {
                grad_iv[k] = grad_iv[k].add(linear_interval(q, None, k, b));
            }
            hess += q;
        }
        Coupling::Custom(h) => {
            cost_norm_extra += note(&sampled_grad_bound(h.as_ref(), b, 0..n));
            let lip = note(&sampled_lipschitz(h.as_ref(), b, 0..n));
            for k in 0..n {
                hess[(k, k)] += lip;
            }
        }
    }
    let m_f = grad_iv.iter().map(|iv| iv.abs_max().powi(2)).sum::<f64>().sqrt() + cost_norm_extra;
    for k in 0..n {
        hess[(k, k)] += alpha;
    }

    let radius = dual_ball_radius(spec, alpha)?;
    let m = spec.num_constraints();
    let mut m_gj = Vec::with_capacity(m);
    let mut lp = lambda_max(hess.clone());
    for g in &spec.constraints {
        match g {
            Constraint::Affine { a, .. } => m_gj.push(norm2(a)),
            Constraint::Quadratic { h, a, .. } => {
                let norm = (0..n).map(|k| linear_interval(h, Some(a), k, b).abs_max().powi(2)).sum::<f64>().sqrt();
                m_gj.push(norm);
                lp = lp.max(lambda_max(&hess + h * radius));
            }
            Constraint::Custom(h) => {
                m_gj.push(note(&sampled_grad_bound(h.as_ref(), b, 0..n)));
                let lip = note(&sampled_lipschitz(h.as_ref(), b, 0..n));
                lp = lp.max(lambda_max(hess.clone()) + radius * lip);
            }
        }
    }
    let all_affine = spec.constraints.iter().all(|g| matches!(g, Constraint::Affine { .. }));
    let m_g = if m == 0 {
        0.0
    } else if all_affine {
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for (j, g) in spec.constraints.iter().enumerate() {
            if let Constraint::Affine { a, .. } = g {
                for k in 0..n {
                    jac[(j, k)] = a[k];
                }
            }
        }
        jac.singular_values().max()
    } else {
        m_gj.iter().map(|v| v * v).sum::<f64>().sqrt()
    };

    Ok(BoundsPack {
        lp,
        m_g,
        m_f,
        m_x: b.max_norm(),
        m_gj,
        m_mu: radius,
        d_x: b.diameter(),
        l_x: (0..spec.num_agents()).map(|i| b.block_diameter(i)).fold(0.0, f64::max),
        radius,
        sampled,
        warning,
    })
}

/// l1 radius of the dual ball containing the regularized dual solution:
/// `(f(xbar) + alpha/2 |xbar|^2 - f_lb) / min_j(-g_j(xbar))`. Zero when
/// the problem has no constraints.
pub fn dual_ball_radius(spec: &ProblemSpec, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::param("alpha", "must be non-negative"));
    }
    let m = spec.num_constraints();
    if m == 0 {
        return Ok(0.0);
    }
    let xbar = spec.slater_point();
    let mut g = vec![0.0; m];
    spec.constraint_values(xbar, &mut g);
    let mut slack = f64::INFINITY;
    for (index, &value) in g.iter().enumerate() {
        if !(value < 0.0) {
            return Err(Error::SlaterViolation { index, value });
        }
        slack = slack.min(-value);
    }
    let num = spec.objective(xbar) + 0.5 * alpha * dot(xbar, xbar) - spec.lower_bound();
    let radius = num / slack;
    if !(radius > 0.0) {
        return Err(Error::param("f_lb", "dual ball radius is not positive; lower the cost bound"));
    }
    Ok(radius)
}

/// Certified lower bound on `min_X f` for convex `f`, ignoring `g`.
///
/// Runs projected gradient descent and returns the linearization bound
/// `f(x) + min_{y in X} grad f(x)^T (y - x)` at the final iterate together
/// with that iterate.
pub fn box_lower_bound(spec: &ProblemSpec, tol: f64, max_iters: usize) -> (f64, Vec<f64>) {
    let b = spec.boxset();
    let n = spec.dim();
    let mut x: Vec<f64> = b.lo.iter().zip(&b.up).map(|(l, u)| 0.5 * (l + u)).collect();
    let mut grad = vec![0.0; n];
    let mut step = 1.0;
    let certificate = |x: &[f64], grad: &[f64]| {
        let lin: f64 = (0..n)
            .map(|k| {
                let y = if grad[k] > 0.0 { b.lo[k] } else { b.up[k] };
                grad[k] * (y - x[k])
            })
            .sum();
        spec.objective(x) + lin
    };
    let mut fx = spec.objective(&x);
    let mut best = f64::NEG_INFINITY;
    let mut trial = vec![0.0; n];
    for _ in 0..max_iters {
        spec.objective_gradient(&x, &mut grad);
        let lower = certificate(&x, &grad);
        best = best.max(lower);
        if fx - best <= tol * fx.abs().max(1.0) {
            break;
        }
        // backtracking projected gradient step
        loop {
            for k in 0..n {
                trial[k] = (x[k] - step * grad[k]).clamp(b.lo[k], b.up[k]);
            }
            let ft = spec.objective(&trial);
            let dec: f64 = (0..n).map(|k| grad[k] * (trial[k] - x[k])).sum::<f64>()
                + (0..n).map(|k| (trial[k] - x[k]).powi(2)).sum::<f64>() / (2.0 * step);
            if ft <= fx + dec + 1e-15 * fx.abs() || step < 1e-14 {
                break;
            }
            step *= 0.5;
        }
        if trial == x {
            break;
        }
        x.copy_from_slice(&trial);
        fx = spec.objective(&x);
        step *= 2.0;
    }
    (best, x)
}
