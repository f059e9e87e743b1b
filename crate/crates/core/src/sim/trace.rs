//! Run records and their CSV forms.

use std::fmt;
use std::io::{BufRead, Write};

use crate::analysis::{BoundReport, RateConstants};
use crate::error::{Error, Result};

/// Per-round record. Errors are NaN when no reference point was supplied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub t: u64,
    /// Tick at which `mu(t)` became available to the agents.
    pub k_t: u64,
    /// Completed cycles before the first upload used in this round.
    pub c_t: u64,
    /// Blocks of the aggregate refreshed this round.
    pub fresh: usize,
    pub primal_err_reg: f64,
    pub primal_err_unreg: f64,
    pub dual_err_reg: f64,
    pub dual_err_unreg: f64,
    pub max_g: f64,
    /// Bound on `|mu(t) - muhat_kappa|^2`.
    pub dual_bound: f64,
    /// Bound on `|x^c_t - xhat_kappa|`.
    pub primal_bound: f64,
}

pub const ROUND_COLUMNS: [&str; 11] = [
    "t",
    "k_t",
    "c_t",
    "fresh",
    "primal_err_reg",
    "primal_err_unreg",
    "dual_err_reg",
    "dual_err_unreg",
    "max_g",
    "dual_bound",
    "primal_bound",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Update,
    Send,
    Deliver,
    Discard,
    Upload,
    CloudReceive,
    CloudDiscard,
    DualUpdate,
    CycleComplete,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::Update => "update",
            EventKind::Send => "send",
            EventKind::Deliver => "deliver",
            EventKind::Discard => "discard",
            EventKind::Upload => "upload",
            EventKind::CloudReceive => "cloud_receive",
            EventKind::CloudDiscard => "cloud_discard",
            EventKind::DualUpdate => "dual_update",
            EventKind::CycleComplete => "cycle_complete",
        };
        f.write_str(s)
    }
}

/// Marker for the cloud in `Event::peer`.
pub const CLOUD: usize = usize::MAX;

/// One simulator event. `msg` is the sequence number of the send that created
/// a message; `version` is the sequence number of the update that produced
/// the carried value (0 for the initial point).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub seq: u64,
    pub tick: u64,
    pub round: u64,
    pub kind: EventKind,
    pub agent: usize,
    pub peer: usize,
    pub msg: u64,
    pub version: u64,
    /// Dual timestamp carried by a message.
    pub stamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    Horizon,
    ScheduleExhausted,
    TickLimit,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub ticks: u64,
    pub rounds: u64,
    pub updates: u64,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_discarded: u64,
    pub uploads_sent: u64,
    pub uploads_discarded: u64,
    /// Segments whose end did not satisfy the cloud gate.
    pub gate_waits: u64,
    pub fifo_violations: u64,
    pub sync_violations: u64,
    pub stale_reads: u64,
    pub dual_bound_violations: u64,
    pub primal_bound_violations: u64,
    /// Per-update checks of `|theta_i(y) - xhat_i| <= q_p |y - xhat|_2` over
    /// the agent's own and neighbor blocks.
    pub invariant_checks: u64,
    pub invariant_violations: u64,
    /// Block-maximum set-descent checks: per update against `q_p` times the
    /// block-max distance, and at each cycle end against `q_p^s D(k_t)`.
    pub set_descent_checks: u64,
    pub set_descent_violations: u64,
    /// First few invariant failures, for diagnostics.
    pub invariant_notes: Vec<String>,
}

/// Everything recorded by one simulator run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub seed: Option<u64>,
    pub rounds: Vec<RoundRecord>,
    /// `c(t)` for every completed round.
    pub cycles: Vec<u64>,
    /// Fresh-block count for every completed round.
    pub fresh: Vec<usize>,
    pub stop: StopReason,
    pub final_x: Vec<f64>,
    pub final_mu: Vec<f64>,
    /// Own blocks of all agents at the end of the run.
    pub agent_x: Vec<f64>,
    /// Own blocks and dual value after every round, when requested.
    pub states: Vec<(Vec<f64>, Vec<f64>)>,
    pub events: Vec<Event>,
    pub stats: RunStats,
    pub constants: RateConstants,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `c(t)`-based set-descent bound versus measured aggregate distance, when probed.
    pub set_descent: BoundReport,
    /// Partial-aggregate bound, when probed with a partial gate.
    pub partial: BoundReport,
    /// Squared initial dual error to the regularized saddle point.
    pub mu0_err_sq: f64,
}

impl RunTrace {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }

    pub fn last(&self) -> Option<&RoundRecord> {
        self.rounds.last()
    }

    fn header(&self) -> Vec<String> {
        let c = &self.constants;
        vec![
            format!("seed={}", self.seed.map_or("none".to_string(), |s| s.to_string())),
            format!(
                "alpha={} beta={} gamma={} rho={} q_p={} q_d={} n_agents={} m_g={} l_x={} d_x={}",
                self.alpha, self.beta, self.gamma, c.rho, c.q_p, c.q_d, c.n_agents, c.m_g, c.l_x, c.d_x
            ),
            format!("mu0_err_sq={}", self.mu0_err_sq),
        ]
    }

    /// Per-round CSV preceded by `#` comment lines with the seed and constants.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for line in self.header() {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(ROUND_COLUMNS)?;
        for r in &self.rounds {
            w.write_record(&[
                r.t.to_string(),
                r.k_t.to_string(),
                r.c_t.to_string(),
                r.fresh.to_string(),
                r.primal_err_reg.to_string(),
                r.primal_err_unreg.to_string(),
                r.dual_err_reg.to_string(),
                r.dual_err_unreg.to_string(),
                r.max_g.to_string(),
                r.dual_bound.to_string(),
                r.primal_bound.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_events_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seq", "tick", "round", "kind", "agent", "peer", "msg", "version", "stamp"])?;
        for e in &self.events {
            let peer = if e.peer == CLOUD { "cloud".to_string() } else { e.peer.to_string() };
            w.write_record(&[
                e.seq.to_string(),
                e.tick.to_string(),
                e.round.to_string(),
                e.kind.to_string(),
                e.agent.to_string(),
                peer,
                e.msg.to_string(),
                e.version.to_string(),
                e.stamp.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A per-round CSV read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub seed: Option<u64>,
    /// `key=value` pairs from the comment header.
    pub meta: Vec<(String, String)>,
    pub rows: Vec<RoundRecord>,
}

impl TraceTable {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        let v = self.meta(key).ok_or_else(|| Error::param(key, "missing from trace header"))?;
        v.parse().map_err(|_| Error::param(key, format!("`{v}` is not a number")))
    }

    pub fn read<R: BufRead>(input: R, path: &str) -> Result<Self> {
        let mut meta = Vec::new();
        let mut body = String::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                for pair in rest.split_whitespace() {
                    let (k, v) = pair.split_once('=').ok_or_else(|| Error::Config {
                        path: path.to_string(),
                        line: lineno + 1,
                        msg: format!("malformed header entry `{pair}`"),
                    })?;
                    meta.push((k.to_string(), v.to_string()));
                }
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ROUND_COLUMNS {
            return Err(Error::Config {
                path: path.to_string(),
                line: 0,
                msg: format!("unexpected columns {:?}", headers),
            });
        }
        let mut rows = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let fail = |col: &str| Error::Config {
                path: path.to_string(),
                line: k + 2,
                msg: format!("column `{col}` is not a number"),
            };
            let f = |i: usize| rec[i].parse::<f64>().map_err(|_| fail(ROUND_COLUMNS[i]));
            let u = |i: usize| rec[i].parse::<u64>().map_err(|_| fail(ROUND_COLUMNS[i]));
            rows.push(RoundRecord {
                t: u(0)?,
                k_t: u(1)?,
                c_t: u(2)?,
                fresh: u(3)? as usize,
                primal_err_reg: f(4)?,
                primal_err_unreg: f(5)?,
                dual_err_reg: f(6)?,
                dual_err_unreg: f(7)?,
                max_g: f(8)?,
                dual_bound: f(9)?,
                primal_bound: f(10)?,
            });
        }
        let seed = meta.iter().find(|(k, _)| k == "seed").and_then(|(_, v)| v.parse().ok());
        Ok(Self { seed, meta, rows })
    }
}
