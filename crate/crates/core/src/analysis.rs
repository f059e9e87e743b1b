//! Block-maximum norm, a priori rate bounds and trajectory checks.
//!
//! The bounds evaluated here are upper bounds that must hold along every
//! trajectory of the asynchronous method; [`BoundReport`] collects the
//! per-round comparison of a measured quantity against its bound.

use std::io::Write;
use std::ops::Range;

use crate::error::{Error, Result};

/// Relative slack tolerated before a bound comparison counts as violated.
pub const VIOLATION_RTOL: f64 = 1e-9;

/// Decomposition of `R^n` into the contiguous blocks owned by the agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    offsets: Vec<usize>,
    dims: Vec<usize>,
}

impl BlockPartition {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::param("dims", "at least one block is required"));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::param("dims", format!("block {i} has dimension 0")));
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for &d in dims {
            offsets.push(acc);
            acc += d;
        }
        Ok(Self { offsets, dims: dims.to_vec() })
    }

    /// `count` blocks of dimension one.
    pub fn scalar(count: usize) -> Result<Self> {
        Self::new(&vec![1; count])
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0) + self.dims.last().copied().unwrap_or(0)
    }

    pub fn block_dim(&self, i: usize) -> usize {
        self.dims[i]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.dims[i]
    }

    /// Index of the block containing coordinate `k`.
    pub fn owner(&self, k: usize) -> usize {
        match self.offsets.binary_search(&k) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    pub fn block_norm(&self, v: &[f64], i: usize) -> f64 {
        norm2(&v[self.range(i)])
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The (2, inf) block-maximum norm: the largest Euclidean norm of any block.
pub fn block_max_norm(v: &[f64], partition: &BlockPartition) -> Result<f64> {
    Error::check_len("block_max_norm", partition.dim(), v.len())?;
    Ok((0..partition.num_blocks()).map(|i| partition.block_norm(v, i)).fold(0.0, f64::max))
}

fn check_q(name: &str, q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("contraction factor {q} not in (0, 1)")))
    }
}

fn pow(q: f64, c: u64) -> f64 {
    if c == 0 {
        1.0
    } else {
        q.powf(c as f64)
    }
}

/// Per-round primal bound `q_p^c(t) * D(k_t)`.
pub fn primal_round_bound(cycles: u64, d_kt: f64, q_p: f64) -> Result<f64> {
    check_q("q_p", q_p)?;
    if d_kt < 0.0 || !d_kt.is_finite() {
        return Err(Error::param("D(k_t)", format!("{d_kt} is not a finite non-negative distance")));
    }
    Ok(pow(q_p, cycles) * d_kt)
}

/// Constants entering the dual and primal rate bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub q_d: f64,
    pub q_p: f64,
    pub n_agents: usize,
    pub m_g: f64,
    pub l_x: f64,
    pub d_x: f64,
    pub rho: f64,
    pub alpha: f64,
}

impl RateConstants {
    fn validate(&self) -> Result<()> {
        check_q("q_d", self.q_d)?;
        check_q("q_p", self.q_p)?;
        if self.n_agents == 0 {
            return Err(Error::param("n_agents", "must be positive"));
        }
        for (name, v) in
            [("M_g", self.m_g), ("L_x", self.l_x), ("D_x", self.d_x), ("rho", self.rho), ("alpha", self.alpha)]
        {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("{v} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// Error injected into the dual recursion by a round that completed `cycles` cycles.
    pub fn dual_error_term(&self, cycles: u64) -> f64 {
        let n = self.n_agents as f64;
        let mg2 = self.m_g * self.m_g;
        let qc = pow(self.q_p, cycles);
        self.q_d * n * mg2 * self.l_x * self.l_x * qc * qc
            + 2.0 * n.sqrt() * self.rho * self.rho * mg2 * self.l_x * self.d_x * qc
    }
}

/// Bound on `||mu(t+1) - muhat||^2` given the squared initial dual error and
/// the cycle counts `c(0), ..., c(t)`, summed exactly as the closed form.
pub fn dual_rate_bound(t: usize, mu0_err_sq: f64, cycles: &[u64], consts: &RateConstants) -> Result<f64> {
    consts.validate()?;
    Error::check_len("dual_rate_bound cycle history", t + 1, cycles.len())?;
    let mut total = consts.q_d.powi(t as i32 + 1) * mu0_err_sq;
    for (l, &c) in cycles.iter().enumerate() {
        total += consts.q_d.powi((t - l) as i32) * consts.dual_error_term(c);
    }
    Ok(total)
}

/// Bound on `||x^c_t - xhat||_2` from the cycle count and the measured dual error.
pub fn primal_total_bound(cycles: u64, dual_err: f64, consts: &RateConstants) -> Result<f64> {
    consts.validate()?;
    if consts.alpha <= 0.0 {
        return Err(Error::param("alpha", "must be positive"));
    }
    Ok(pow(consts.q_p, cycles) * (consts.n_agents as f64).sqrt() * consts.l_x + consts.m_g / consts.alpha * dual_err)
}

/// Error bound for a round in which only `fresh` of `n` blocks were uploaded.
/// Root-sum-of-squares reading: `sqrt(N(t) q_p^{2c} D^2 + M(t) L_x^2)`.
pub fn partial_round_bound(fresh: usize, n: usize, cycles: u64, d_kt: f64, q_p: f64, l_x: f64) -> Result<f64> {
    if fresh > n {
        return Err(Error::param("fresh", format!("{fresh} exceeds agent count {n}")));
    }
    let fresh_part = primal_round_bound(cycles, d_kt, q_p)?;
    Ok((fresh as f64 * fresh_part * fresh_part + (n - fresh) as f64 * l_x * l_x).sqrt())
}

/// Amplitude comparison between the first and last windows of a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oscillation {
    pub amplitude_first: f64,
    pub amplitude_last: f64,
    pub decaying: bool,
    /// Both windows flat; `decaying` is false by convention.
    pub degenerate: bool,
}

impl Oscillation {
    pub fn ratio(&self) -> f64 {
        if self.amplitude_first == 0.0 {
            if self.amplitude_last == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            self.amplitude_last / self.amplitude_first
        }
    }
}

/// Threshold on `amplitude_last / amplitude_first` below which a series decays.
pub const DECAY_RATIO: f64 = 0.5;

pub fn detect_oscillation(series: &[f64], window: usize) -> Result<Oscillation> {
    if window < 2 {
        return Err(Error::param("window", "must cover at least two samples"));
    }
    if series.len() < 2 * window {
        return Err(Error::SeriesTooShort { len: series.len(), needed: 2 * window });
    }
    let amp = |w: &[f64]| {
        let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    };
    let amplitude_first = amp(&series[..window]);
    let amplitude_last = amp(&series[series.len() - window..]);
    Ok(Oscillation {
        amplitude_first,
        amplitude_last,
        decaying: amplitude_last < DECAY_RATIO * amplitude_first,
        degenerate: amplitude_first == 0.0 && amplitude_last == 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub t: u64,
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
    pub violated: bool,
}

/// Per-round measured-versus-bound comparison for one inequality.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundReport {
    pub name: String,
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), rows: Vec::new() }
    }

    pub fn push(&mut self, t: u64, measured: f64, bound: f64) {
        let slack = bound - measured;
        let violated = measured.is_nan() || bound.is_nan() || slack < -VIOLATION_RTOL * bound.abs().max(1.0);
        self.rows.push(BoundRow { t, measured, bound, slack, violated });
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violated).count()
    }

    pub fn min_slack(&self) -> f64 {
        self.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "measured", "bound", "slack", "violated"])?;
        for r in &self.rows {
            w.write_record(&[
                r.t.to_string(),
                r.measured.to_string(),
                r.bound.to_string(),
                r.slack.to_string(),
                (r.violated as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
