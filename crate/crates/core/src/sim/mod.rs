//! Discrete-event simulation of asynchronous primal updates with a
//! synchronized, cloud-computed dual variable.
//!
//! Within a tick the order is: message deliveries, agent updates, sends and
//! uploads, then (at the last tick of a round plan) the cloud gate. Messages
//! with zero delay are delivered at send time and read from the next tick on.
//! A delivered message is dropped when its dual timestamp no longer matches
//! the receiver's.

pub mod schedule;
pub mod trace;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::analysis::{dist2, BoundReport, RateConstants};
use crate::error::{Error, Result};
use crate::reg::{
    contraction_qp, dual_rate_constants, grad_x_reg_into, project_box_in_place, project_dual_ball_in_place, StepSizes,
};
use crate::sync::SaddleProblem;

pub use schedule::{
    generate_schedule, Action, DelayModel, LockstepSchedule, PlannedEvent, RandomSchedule, RoundLength, RoundPlan,
    Schedule, ScheduleParams, SimSchedule, UploadModel,
};
pub use trace::{Event, EventKind, RoundRecord, RunStats, RunTrace, StopReason, TraceTable, CLOUD};

/// Condition under which the cloud computes the next dual value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    /// Every block of the aggregate was refreshed this round.
    AllFresh,
    /// At least this many blocks were refreshed (must be positive).
    AtLeast(usize),
}

/// Saddle points used to measure errors.
#[derive(Debug, Clone, PartialEq)]
pub struct References {
    pub x_reg: Vec<f64>,
    pub mu_reg: Vec<f64>,
    pub x_unreg: Option<Vec<f64>>,
    pub mu_unreg: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Maximum number of dual updates.
    pub horizon: u64,
    /// Safety limit on simulated ticks.
    pub max_ticks: u64,
    /// Stop once `|mu(t+1) - mu(t)| / rho` and the projected-gradient
    /// residual `|x^c - Pi_X[x^c - gamma grad_x L]| / gamma` of the aggregate
    /// both fall below this value.
    pub stop_tol: Option<f64>,
    pub gate: Gate,
    /// Keep every `record_every`-th round record (plus the last).
    pub record_every: u64,
    pub record_events: bool,
    pub record_states: bool,
    /// Check set-descent invariants against per-round inner targets. Expensive.
    pub probe: bool,
    pub references: Option<References>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            horizon: 1000,
            max_ticks: u64::MAX,
            stop_tol: None,
            gate: Gate::AllFresh,
            record_every: 1,
            record_events: false,
            record_states: false,
            probe: false,
            references: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dest {
    Agent(usize),
    Cloud,
}

#[derive(Debug)]
struct Message {
    deliver: u64,
    seq: u64,
    from: usize,
    dest: Dest,
    stamp: u64,
    version: u64,
    value: Vec<f64>,
}

impl PartialEq for Message {
    fn eq(&self, other: &Self) -> bool {
        self.deliver == other.deliver && self.seq == other.seq
    }
}

impl Eq for Message {}

impl PartialOrd for Message {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Message {
    // reversed so the heap pops the earliest delivery first
    fn cmp(&self, other: &Self) -> Ordering {
        (other.deliver, other.seq).cmp(&(self.deliver, self.seq))
    }
}

/// Cycle completion: every agent has updated since the cycle
/// began, and each directed essential channel has delivered a value computed
/// since the cycle began.
#[derive(Debug, Clone)]
struct CycleTracker {
    start: u64,
    updated: Vec<bool>,
    agents_left: usize,
    channel_ok: Vec<bool>,
    channels_left: usize,
    channel_count: usize,
    /// Sequence numbers at which cycles completed in the current round.
    completions: Vec<u64>,
}

impl CycleTracker {
    fn new(agents: usize, channel_count: usize) -> Self {
        Self {
            start: 0,
            updated: vec![false; agents],
            agents_left: agents,
            channel_ok: vec![false; agents * agents],
            channels_left: channel_count,
            channel_count,
            completions: Vec::new(),
        }
    }

    fn begin_cycle(&mut self, seq: u64) {
        self.start = seq;
        self.updated.fill(false);
        self.agents_left = self.updated.len();
        self.channel_ok.fill(false);
        self.channels_left = self.channel_count;
    }

    fn begin_round(&mut self, seq: u64) {
        self.completions.clear();
        self.begin_cycle(seq);
    }

    /// Returns true when this event completed a cycle.
    fn on_update(&mut self, agent: usize, seq: u64) -> bool {
        if !self.updated[agent] {
            self.updated[agent] = true;
            self.agents_left -= 1;
        }
        self.check(seq)
    }

    fn on_delivery(&mut self, from: usize, to: usize, version: u64, seq: u64, agents: usize) -> bool {
        let ch = from * agents + to;
        if version > self.start && !self.channel_ok[ch] {
            self.channel_ok[ch] = true;
            self.channels_left -= 1;
        }
        self.check(seq)
    }

    fn check(&mut self, seq: u64) -> bool {
        if self.agents_left == 0 && self.channels_left == 0 {
            self.completions.push(seq);
            self.begin_cycle(seq);
            true
        } else {
            false
        }
    }

    fn cycles_before(&self, seq: u64) -> u64 {
        self.completions.iter().filter(|&&c| c < seq).count() as u64
    }
}

struct Probe {
    xhat: Vec<f64>,
    d_kt: f64,
    q_p: f64,
    tol: f64,
}

struct Engine<'a> {
    problem: &'a SaddleProblem,
    steps: StepSizes,
    opts: &'a SimOptions,
    n_agents: usize,
    neighbors: Vec<Vec<usize>>,
    copies: Vec<Vec<f64>>,
    own_version: Vec<u64>,
    dual_stamp: Vec<u64>,
    mu: Vec<f64>,
    t: u64,
    seq: u64,
    tick: u64,
    heap: BinaryHeap<Message>,
    in_flight: Vec<u32>,
    last_deliver: Vec<u64>,
    last_sent_seq: Vec<u64>,
    xc: Vec<f64>,
    fresh: Vec<bool>,
    kept_seq: Vec<u64>,
    tracker: CycleTracker,
    grad: Vec<f64>,
    scratch: Vec<f64>,
    events: Vec<Event>,
    stats: RunStats,
    probe: Option<Probe>,
    set_descent: BoundReport,
    partial: BoundReport,
}

const MAX_NOTES: usize = 8;

impl<'a> Engine<'a> {
    fn channel(&self, from: usize, dest: Dest) -> usize {
        from * (self.n_agents + 1)
            + match dest {
                Dest::Agent(j) => j,
                Dest::Cloud => self.n_agents,
            }
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    #[allow(clippy::too_many_arguments)]
    fn log(&mut self, seq: u64, kind: EventKind, agent: usize, peer: usize, msg: u64, version: u64, stamp: u64) {
        if self.opts.record_events {
            self.events.push(Event { seq, tick: self.tick, round: self.t, kind, agent, peer, msg, version, stamp });
        }
    }

    fn note(&mut self, msg: String) {
        self.stats.invariant_violations += 1;
        if self.stats.invariant_notes.len() < MAX_NOTES {
            self.stats.invariant_notes.push(msg);
        }
    }

    /// Distance of agent `i`'s copy to `xhat` over its own and neighbor blocks.
    fn relevant_bmax(&self, i: usize, x: &[f64], xhat: &[f64]) -> f64 {
        let p = self.problem.spec.partition();
        std::iter::once(i)
            .chain(self.neighbors[i].iter().copied())
            .map(|j| dist2(&x[p.range(j)], &xhat[p.range(j)]))
            .fold(0.0, f64::max)
    }

    /// Euclidean distance over the same blocks.
    fn relevant_dist(&self, i: usize, x: &[f64], xhat: &[f64]) -> f64 {
        let p = self.problem.spec.partition();
        std::iter::once(i)
            .chain(self.neighbors[i].iter().copied())
            .map(|j| dist2(&x[p.range(j)], &xhat[p.range(j)]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn begin_round_probe(&mut self) -> Result<()> {
        if !self.opts.probe {
            return Ok(());
        }
        let start = self.probe.as_ref().map_or_else(|| self.copies[0].clone(), |p| p.xhat.clone());
        let xhat = self.problem.inner_target_from(&self.mu, &start, 1e-13, 50_000_000)?;
        let d_kt = (0..self.n_agents).map(|i| self.relevant_bmax(i, &self.copies[i], &xhat)).fold(0.0, f64::max);
        let q_p = contraction_qp(self.steps.gamma, self.problem.reg.alpha, self.problem.bounds.lp)?;
        self.probe = Some(Probe { xhat, d_kt, q_p, tol: 1e-8 * d_kt.max(1.0) });
        Ok(())
    }

    /// After `s` completed cycles every relevant block of every copy lies
    /// within `q_p^s D(k_t)` of the inner target.
    fn check_cycle_sets(&mut self) {
        let Some(probe) = &self.probe else { return };
        let s = self.tracker.completions.len() as i32;
        let radius = probe.q_p.powi(s) * probe.d_kt + probe.tol;
        let exceeded = (0..self.n_agents).any(|i| self.relevant_bmax(i, &self.copies[i], &probe.xhat) > radius);
        self.stats.set_descent_checks += 1;
        if exceeded {
            self.stats.set_descent_violations += 1;
        }
    }

    fn do_update(&mut self, i: usize) {
        let p = self.problem.spec.partition();
        let r = p.range(i);
        let pre = self.probe.as_ref().map(|probe| {
            (
                self.relevant_bmax(i, &self.copies[i], &probe.xhat),
                self.relevant_dist(i, &self.copies[i], &probe.xhat),
                probe.q_p,
                probe.tol,
            )
        });
        let grad = &mut self.grad[..r.len()];
        self.problem.spec.partial_grad_x(&self.copies[i], &self.mu, self.problem.reg.alpha, i, grad);
        let gamma = self.steps.gamma;
        let block = &mut self.copies[i][r.clone()];
        for (v, g) in block.iter_mut().zip(grad.iter()) {
            *v -= gamma * g;
        }
        self.problem.spec.boxset().clamp_block(i, block);
        let seq = self.next_seq();
        self.own_version[i] = seq;
        self.stats.updates += 1;
        self.log(seq, EventKind::Update, i, i, 0, seq, self.t);

        if let (Some((bmax, euclid, q_p, tol)), Some(probe)) = (pre, &self.probe) {
            let after = dist2(&self.copies[i][r.clone()], &probe.xhat[r]);
            self.stats.invariant_checks += 1;
            if after > q_p * euclid + tol {
                self.note(format!("round {}: agent {i} update moved to {after:e}, above q_p times {euclid:e}", self.t));
            }
            self.stats.set_descent_checks += 1;
            if after > q_p * bmax + tol {
                self.stats.set_descent_violations += 1;
            }
        }
        if self.tracker.on_update(i, seq) {
            self.log(seq, EventKind::CycleComplete, i, i, 0, 0, self.t);
            self.check_cycle_sets();
        }
    }

    fn send(&mut self, from: usize, dest: Dest, delay: u32) {
        let seq = self.next_seq();
        let r = self.problem.spec.partition().range(from);
        let version = self.own_version[from];
        let stamp = self.dual_stamp[from];
        let (kind, peer) = match dest {
            Dest::Agent(j) => {
                self.stats.messages_sent += 1;
                (EventKind::Send, j)
            }
            Dest::Cloud => {
                self.stats.uploads_sent += 1;
                (EventKind::Upload, CLOUD)
            }
        };
        self.log(seq, kind, from, peer, seq, version, stamp);
        let ch = self.channel(from, dest);
        let deliver = (self.tick + delay as u64).max(self.last_deliver[ch]);
        self.last_deliver[ch] = deliver;
        if deliver == self.tick && self.in_flight[ch] == 0 {
            self.scratch.clear();
            self.scratch.extend_from_slice(&self.copies[from][r]);
            let value = std::mem::take(&mut self.scratch);
            self.deliver(from, dest, seq, stamp, version, &value);
            self.scratch = value;
        } else {
            self.in_flight[ch] += 1;
            self.heap.push(Message { deliver, seq, from, dest, stamp, version, value: self.copies[from][r].to_vec() });
        }
    }

    fn deliver(&mut self, from: usize, dest: Dest, msg: u64, stamp: u64, version: u64, value: &[f64]) {
        let ch = self.channel(from, dest);
        if msg <= self.last_sent_seq[ch] {
            self.stats.fifo_violations += 1;
        }
        self.last_sent_seq[ch] = msg;
        let seq = self.next_seq();
        let r = self.problem.spec.partition().range(from);
        match dest {
            Dest::Agent(j) => {
                if stamp != self.dual_stamp[j] {
                    self.stats.messages_discarded += 1;
                    self.log(seq, EventKind::Discard, j, from, msg, version, stamp);
                    return;
                }
                self.stats.messages_delivered += 1;
                self.copies[j][r].copy_from_slice(value);
                self.log(seq, EventKind::Deliver, j, from, msg, version, stamp);
                if self.tracker.on_delivery(from, j, version, seq, self.n_agents) {
                    self.log(seq, EventKind::CycleComplete, j, from, 0, 0, self.t);
                    self.check_cycle_sets();
                }
            }
            Dest::Cloud => {
                if stamp != self.t {
                    self.stats.uploads_discarded += 1;
                    self.log(seq, EventKind::CloudDiscard, from, CLOUD, msg, version, stamp);
                    return;
                }
                self.xc[r].copy_from_slice(value);
                self.fresh[from] = true;
                self.kept_seq[from] = msg;
                self.log(seq, EventKind::CloudReceive, from, CLOUD, msg, version, stamp);
            }
        }
    }

    fn deliver_due(&mut self, tick: u64) {
        while self.heap.peek().is_some_and(|m| m.deliver <= tick) {
            let m = self.heap.pop().expect("peeked");
            let ch = self.channel(m.from, m.dest);
            self.in_flight[ch] -= 1;
            self.deliver(m.from, m.dest, m.seq, m.stamp, m.version, &m.value);
        }
    }

    fn gate_open(&self) -> bool {
        let fresh = self.fresh.iter().filter(|&&f| f).count();
        match self.opts.gate {
            Gate::AllFresh => fresh == self.n_agents,
            Gate::AtLeast(k) => fresh >= k,
        }
    }
}

/// Run the asynchronous method from `(x0, mu0)` under `schedule`.
pub fn run_async<S: Schedule + ?Sized>(
    problem: &SaddleProblem,
    steps: &StepSizes,
    schedule: &mut S,
    x0: &[f64],
    mu0: &[f64],
    opts: &SimOptions,
) -> Result<RunTrace> {
    let spec = &problem.spec;
    let n = spec.dim();
    let m = spec.num_constraints();
    let agents = spec.num_agents();
    Error::check_len("initial primal point", n, x0.len())?;
    Error::check_len("initial dual point", m, mu0.len())?;
    steps.validate(&problem.reg, &problem.bounds)?;
    if !spec.boxset().contains(x0) {
        return Err(Error::param("x0", "initial point lies outside the box"));
    }
    if !problem.ball.contains(mu0, 0.0) {
        return Err(Error::param("mu0", "initial dual point lies outside the dual ball"));
    }
    if let Gate::AtLeast(k) = opts.gate {
        if k == 0 || k > agents {
            return Err(Error::param("gate", format!("fresh-block threshold {k} not in 1..={agents}")));
        }
    }
    if opts.record_every == 0 {
        return Err(Error::param("record_every", "must be positive"));
    }
    if let Some(r) = &opts.references {
        Error::check_len("reference x", n, r.x_reg.len())?;
        Error::check_len("reference mu", m, r.mu_reg.len())?;
    }

    let q_p = contraction_qp(steps.gamma, problem.reg.alpha, problem.bounds.lp)?;
    let (_, q_d) = dual_rate_constants(steps.rho, problem.reg.beta, problem.reg.alpha, problem.bounds.m_g)?;
    let constants = RateConstants {
        q_d,
        q_p,
        n_agents: agents,
        m_g: problem.bounds.m_g,
        l_x: problem.bounds.l_x,
        d_x: problem.bounds.d_x,
        rho: steps.rho,
        alpha: problem.reg.alpha,
    };
    let neighbors: Vec<Vec<usize>> = (0..agents).map(|i| spec.neighbors(i).to_vec()).collect();
    let channel_count = neighbors.iter().map(Vec::len).sum();
    let max_block = spec.partition().dims().iter().copied().max().unwrap_or(0);

    let mut e = Engine {
        problem,
        steps: *steps,
        opts,
        n_agents: agents,
        neighbors,
        copies: vec![x0.to_vec(); agents],
        own_version: vec![0; agents],
        dual_stamp: vec![0; agents],
        mu: mu0.to_vec(),
        t: 0,
        seq: 0,
        tick: 0,
        heap: BinaryHeap::new(),
        in_flight: vec![0; agents * (agents + 1)],
        last_deliver: vec![0; agents * (agents + 1)],
        last_sent_seq: vec![0; agents * (agents + 1)],
        xc: x0.to_vec(),
        fresh: vec![false; agents],
        kept_seq: vec![0; agents],
        tracker: CycleTracker::new(agents, channel_count),
        grad: vec![0.0; max_block],
        scratch: Vec::with_capacity(max_block),
        events: Vec::new(),
        stats: RunStats::default(),
        probe: None,
        set_descent: BoundReport::new("set-descent"),
        partial: BoundReport::new("partial-aggregate"),
    };

    let refs = opts.references.as_ref();
    let err = |a: &[f64], b: Option<&Vec<f64>>| b.map_or(f64::NAN, |b| dist2(a, b));
    let mu0_err_sq = refs.map_or(f64::NAN, |r| dist2(mu0, &r.mu_reg).powi(2));
    let mut dual_bound = mu0_err_sq;
    let mut rounds = Vec::new();
    let mut cycles = Vec::new();
    let mut fresh_counts = Vec::new();
    let mut states = Vec::new();
    let mut step_x = vec![0.0; x0.len()];
    let mut g = vec![0.0; m];
    let mut mu_next = vec![0.0; m];
    let mut plan = RoundPlan::default();
    let mut k_t = 0u64;
    let mut stop = StopReason::Horizon;

    e.tracker.begin_round(e.seq);
    e.begin_round_probe()?;

    while e.t < opts.horizon {
        if e.tick >= opts.max_ticks {
            stop = StopReason::TickLimit;
            break;
        }
        if !schedule.next_plan(&mut plan) {
            stop = StopReason::ScheduleExhausted;
            break;
        }
        let start = e.tick;
        let end = start + plan.length as u64;
        let mut idx = 0;
        loop {
            let next_ev = plan.events.get(idx).map(|ev| start + ev.tick as u64);
            let next_msg = e.heap.peek().map(|msg| msg.deliver).filter(|&d| d < end);
            let k = match (next_ev, next_msg) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => break,
            };
            e.tick = k;
            e.deliver_due(k);
            e.tick = k;
            while let Some(ev) = plan.events.get(idx).filter(|ev| start + ev.tick as u64 == k) {
                match ev.action {
                    Action::Update { agent } => e.do_update(agent),
                    Action::Send { from, to, delay } => e.send(from, Dest::Agent(to), delay),
                    Action::Upload { agent, delay } => e.send(agent, Dest::Cloud, delay),
                }
                idx += 1;
            }
            if e.dual_stamp.iter().any(|&s| s != e.t) {
                e.stats.sync_violations += 1;
            }
        }
        e.tick = end - 1;
        e.stats.ticks = end;

        if !e.gate_open() {
            e.stats.gate_waits += 1;
            e.tick = end;
            continue;
        }

        // cloud dual update from the aggregate
        let fresh: usize = e.fresh.iter().filter(|&&f| f).count();
        let first_upload = (0..agents).filter(|&i| e.fresh[i]).map(|i| e.kept_seq[i]).min().unwrap_or(u64::MAX);
        let c_t = e.tracker.cycles_before(first_upload);
        if let Some(probe) = &e.probe {
            let p = spec.partition();
            if fresh == agents {
                let measured =
                    (0..agents).map(|i| dist2(&e.xc[p.range(i)], &probe.xhat[p.range(i)])).fold(0.0, f64::max);
                let bound = probe.q_p.powi(c_t as i32) * probe.d_kt + probe.tol;
                e.set_descent.push(e.t, measured, bound);
            } else {
                let measured = dist2(&e.xc, &probe.xhat);
                let bound = crate::analysis::partial_round_bound(
                    fresh,
                    agents,
                    c_t,
                    probe.d_kt,
                    probe.q_p,
                    problem.bounds.l_x,
                )? + probe.tol;
                e.partial.push(e.t, measured, bound);
            }
        }

        spec.constraint_values(&e.xc, &mut g);
        let beta = problem.reg.beta;
        for j in 0..m {
            mu_next[j] = e.mu[j] + steps.rho * (g[j] - beta * e.mu[j]);
        }
        project_dual_ball_in_place(&mut mu_next, &problem.ball);

        let dual_err = err(&e.mu, refs.map(|r| &r.mu_reg));
        let primal_err = err(&e.xc, refs.map(|r| &r.x_reg));
        let sqrt_n = (agents as f64).sqrt();
        let primal_bound = q_p.powi(c_t.min(i32::MAX as u64) as i32) * sqrt_n * constants.l_x
            + constants.m_g / constants.alpha * dual_err;
        if dual_err * dual_err > dual_bound * (1.0 + crate::analysis::VIOLATION_RTOL) {
            e.stats.dual_bound_violations += 1;
        }
        if primal_err > primal_bound * (1.0 + crate::analysis::VIOLATION_RTOL) {
            e.stats.primal_bound_violations += 1;
        }
        let record = RoundRecord {
            t: e.t,
            k_t,
            c_t,
            fresh,
            primal_err_reg: primal_err,
            primal_err_unreg: err(&e.xc, refs.and_then(|r| r.x_unreg.as_ref())),
            dual_err_reg: dual_err,
            dual_err_unreg: err(&e.mu, refs.and_then(|r| r.mu_unreg.as_ref())),
            max_g: g.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            dual_bound,
            primal_bound,
        };
        dual_bound = q_d * dual_bound + constants.dual_error_term(c_t);
        cycles.push(c_t);
        fresh_counts.push(fresh);

        let dmu = dist2(&mu_next, &e.mu) / steps.rho;
        // projected-gradient residual of the aggregate under the current dual
        let dx = if opts.stop_tol.is_some() {
            grad_x_reg_into(spec, &e.xc, &e.mu, problem.reg.alpha, &mut step_x);
            for (o, &v) in step_x.iter_mut().zip(&e.xc) {
                *o = v - steps.gamma * *o;
            }
            project_box_in_place(&mut step_x, spec.boxset());
            dist2(&step_x, &e.xc) / steps.gamma
        } else {
            f64::INFINITY
        };
        std::mem::swap(&mut e.mu, &mut mu_next);
        let seq = e.next_seq();
        e.log(seq, EventKind::DualUpdate, 0, CLOUD, 0, 0, e.t + 1);
        e.t += 1;
        e.dual_stamp.fill(e.t);
        e.fresh.fill(false);
        e.tick = end;
        k_t = end;
        e.stats.rounds = e.t;

        let converged = opts.stop_tol.is_some_and(|tol| dmu < tol && dx < tol);
        let last = converged || e.t >= opts.horizon;
        if (e.t - 1).is_multiple_of(opts.record_every) || last {
            rounds.push(record);
        }
        if opts.record_states {
            let owned: Vec<f64> = (0..agents).flat_map(|i| e.copies[i][spec.partition().range(i)].to_vec()).collect();
            states.push((owned, e.mu.clone()));
        }
        if converged {
            stop = StopReason::Converged;
            break;
        }
        e.tracker.begin_round(e.seq);
        e.begin_round_probe()?;
    }
    let agent_x: Vec<f64> = (0..agents).flat_map(|i| e.copies[i][spec.partition().range(i)].to_vec()).collect();
    Ok(RunTrace {
        seed: schedule.seed(),
        rounds,
        cycles,
        fresh: fresh_counts,
        stop,
        final_x: e.xc,
        final_mu: e.mu,
        agent_x,
        states,
        events: e.events,
        stats: e.stats,
        constants,
        alpha: problem.reg.alpha,
        beta: problem.reg.beta,
        gamma: steps.gamma,
        set_descent: e.set_descent,
        partial: e.partial,
        mu0_err_sq,
    })
}

/// Cloud dual step `Pi_M[mu + rho (g(x^c) - beta mu)]`.
pub fn cloud_dual_update(problem: &SaddleProblem, xc: &[f64], mu: &[f64], rho: f64) -> Result<Vec<f64>> {
    let g = crate::reg::grad_mu_reg(&problem.spec, xc, mu, problem.reg.beta)?;
    let mut out: Vec<f64> = mu.iter().zip(&g).map(|(m, g)| m + rho * g).collect();
    project_dual_ball_in_place(&mut out, &problem.ball);
    Ok(out)
}
