//! Realizations of update, communication and upload times.
//!
//! A schedule is consumed one round plan at a time. A plan covers the ticks
//! `[k_t, k_t + length)` and lists what happens at each tick offset. Random
//! schedules are generated lazily so long horizons never materialize.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use crate::error::{Error, Result};
use crate::problem::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Update {
        agent: usize,
    },
    /// Send the sender's own block to an essential neighbor.
    Send {
        from: usize,
        to: usize,
        delay: u32,
    },
    Upload {
        agent: usize,
        delay: u32,
    },
}

impl Action {
    /// Position within a tick: updates happen before sends and uploads.
    fn class(&self) -> u8 {
        match self {
            Action::Update { .. } => 0,
            Action::Send { .. } | Action::Upload { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedEvent {
    pub tick: u32,
    pub action: Action,
}

/// Events of one round, sorted by tick and then class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundPlan {
    pub length: u32,
    pub events: Vec<PlannedEvent>,
}

impl RoundPlan {
    pub fn new(length: u32, mut events: Vec<PlannedEvent>) -> Self {
        events.sort_by_key(|e| (e.tick, e.action.class()));
        Self { length, events }
    }

    fn clear(&mut self) {
        self.length = 0;
        self.events.clear();
    }

    fn push(&mut self, tick: u32, action: Action) {
        self.events.push(PlannedEvent { tick, action });
    }

    fn finish(&mut self) {
        self.events.sort_by_key(|e| (e.tick, e.action.class()));
    }

    /// Checks tick ranges, agent indices and that sends follow essential neighborhoods.
    pub fn validate(&self, neighbors: &[Vec<usize>]) -> Result<()> {
        if self.length == 0 {
            return Err(Error::Schedule("round length must be positive".into()));
        }
        let n = neighbors.len();
        let mut prev = (0, 0);
        for e in &self.events {
            if e.tick >= self.length {
                return Err(Error::Schedule(format!("event at tick {} beyond round length {}", e.tick, self.length)));
            }
            let key = (e.tick, e.action.class());
            if key < prev {
                return Err(Error::Schedule("events are not sorted".into()));
            }
            prev = key;
            match e.action {
                Action::Update { agent } | Action::Upload { agent, .. } if agent >= n => {
                    return Err(Error::Schedule(format!("agent {agent} out of range")));
                }
                Action::Send { from, to, .. } => {
                    if from >= n || to >= n {
                        return Err(Error::Schedule(format!("send {from} -> {to} out of range")));
                    }
                    if !neighbors[from].contains(&to) {
                        return Err(Error::Schedule(format!("send {from} -> {to} between non-neighbors")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Source of round plans.
pub trait Schedule {
    /// Fill `plan` with the next round. Returns false when exhausted.
    fn next_plan(&mut self, plan: &mut RoundPlan) -> bool;

    fn seed(&self) -> Option<u64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayModel {
    Zero,
    Fixed(u32),
    /// Uniform integer in `[min, max]`.
    Uniform {
        min: u32,
        max: u32,
    },
}

impl DelayModel {
    fn validate(&self, name: &str) -> Result<()> {
        match *self {
            DelayModel::Uniform { min, max } if min > max => {
                Err(Error::param(name, format!("empty delay range [{min}, {max}]")))
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        match *self {
            DelayModel::Zero => 0,
            DelayModel::Fixed(d) => d,
            DelayModel::Uniform { min, max } => rng.random_range(min..=max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoundLength {
    Fixed(u32),
    Uniform { min: u32, max: u32 },
}

impl RoundLength {
    fn validate(&self) -> Result<()> {
        match *self {
            RoundLength::Fixed(0) => Err(Error::param("round_length", "must be positive")),
            RoundLength::Uniform { min, max } if min == 0 || min > max => {
                Err(Error::param("round_length", format!("invalid range [{min}, {max}]")))
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u32 {
        match *self {
            RoundLength::Fixed(l) => l,
            RoundLength::Uniform { min, max } => rng.random_range(min..=max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UploadModel {
    /// Each agent uploads once per round at a uniformly chosen tick.
    OncePerRound,
    /// Each agent uploads at each tick independently with this probability.
    Bernoulli(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleParams {
    pub p_update: f64,
    pub p_edge: f64,
    pub delay: DelayModel,
    pub upload_delay: DelayModel,
    pub round_length: RoundLength,
    pub uploads: UploadModel,
    /// Give every agent at least one update in every round.
    pub ensure_update: bool,
    /// Unordered agent pairs allowed to communicate; all essential pairs when `None`.
    pub edges: Option<Vec<(usize, usize)>>,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            p_update: 0.05,
            p_edge: 0.05,
            delay: DelayModel::Zero,
            upload_delay: DelayModel::Zero,
            round_length: RoundLength::Uniform { min: 5, max: 100 },
            uploads: UploadModel::OncePerRound,
            ensure_update: true,
            edges: None,
        }
    }
}

impl ScheduleParams {
    /// Every agent updates and exchanges at every tick with no delays.
    pub fn synchronous(round_length: u32) -> Self {
        Self { p_update: 1.0, p_edge: 1.0, round_length: RoundLength::Fixed(round_length), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_update", self.p_update), ("p_edge", self.p_edge)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(name, format!("{p} is not a probability")));
            }
        }
        if let UploadModel::Bernoulli(p) = self.uploads {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param("cloud_send_prob", format!("{p} is not a probability")));
            }
        }
        self.delay.validate("delay")?;
        self.upload_delay.validate("upload_delay")?;
        self.round_length.validate()
    }
}

/// Ticks of a Bernoulli(p) process on `[0, len)`, found by geometric skipping.
fn bernoulli_ticks<R: Rng>(rng: &mut R, p: f64, len: u32, geo: Option<&Geometric>, mut f: impl FnMut(u32)) {
    if p <= 0.0 || len == 0 {
        return;
    }
    if p >= 1.0 {
        (0..len).for_each(f);
        return;
    }
    let geo = geo.expect("geometric sampler for 0 < p < 1");
    let mut t = geo.sample(rng);
    while t < len as u64 {
        f(t as u32);
        t += 1 + geo.sample(rng);
    }
}

/// Seeded random schedule, generated round by round.
#[derive(Debug, Clone)]
pub struct RandomSchedule {
    rng: ChaCha8Rng,
    seed: u64,
    params: ScheduleParams,
    agents: usize,
    pairs: Vec<(usize, usize)>,
    geo_update: Option<Geometric>,
    geo_edge: Option<Geometric>,
    geo_upload: Option<Geometric>,
}

fn geometric(p: f64) -> Option<Geometric> {
    if p > 0.0 && p < 1.0 {
        Geometric::new(p).ok()
    } else {
        None
    }
}

impl RandomSchedule {
    pub fn new(seed: u64, params: ScheduleParams, spec: &ProblemSpec) -> Result<Self> {
        let neighbors: Vec<Vec<usize>> = (0..spec.num_agents()).map(|i| spec.neighbors(i).to_vec()).collect();
        Self::for_neighbors(seed, params, &neighbors)
    }

    pub fn for_neighbors(seed: u64, params: ScheduleParams, neighbors: &[Vec<usize>]) -> Result<Self> {
        params.validate()?;
        let agents = neighbors.len();
        let pairs = match &params.edges {
            Some(edges) => {
                for &(i, j) in edges {
                    let essential = i < agents && j < agents && neighbors[i].contains(&j);
                    if !essential && params.p_edge > 0.0 {
                        return Err(Error::Schedule(format!(
                            "edge ({i}, {j}) is not an essential pair but has p_edge = {}",
                            params.p_edge
                        )));
                    }
                }
                edges.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect()
            }
            None => {
                (0..agents).flat_map(|i| neighbors[i].iter().filter(move |&&j| j > i).map(move |&j| (i, j))).collect()
            }
        };
        let geo_upload = match params.uploads {
            UploadModel::Bernoulli(p) => geometric(p),
            UploadModel::OncePerRound => None,
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            geo_update: geometric(params.p_update),
            geo_edge: geometric(params.p_edge),
            geo_upload,
            params,
            agents,
            pairs,
        })
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }
}

impl Schedule for RandomSchedule {
    fn next_plan(&mut self, plan: &mut RoundPlan) -> bool {
        plan.clear();
        let rng = &mut self.rng;
        let len = self.params.round_length.sample(rng);
        plan.length = len;
        for agent in 0..self.agents {
            let before = plan.events.len();
            bernoulli_ticks(rng, self.params.p_update, len, self.geo_update.as_ref(), |t| {
                plan.events.push(PlannedEvent { tick: t, action: Action::Update { agent } });
            });
            if plan.events.len() == before && self.params.ensure_update {
                let t = rng.random_range(0..len);
                plan.push(t, Action::Update { agent });
            }
        }
        for &(i, j) in &self.pairs {
            let mut ticks = Vec::new();
            bernoulli_ticks(rng, self.params.p_edge, len, self.geo_edge.as_ref(), |t| ticks.push(t));
            for t in ticks {
                let d1 = self.params.delay.sample(rng);
                let d2 = self.params.delay.sample(rng);
                plan.push(t, Action::Send { from: i, to: j, delay: d1 });
                plan.push(t, Action::Send { from: j, to: i, delay: d2 });
            }
        }
        for agent in 0..self.agents {
            match self.params.uploads {
                UploadModel::OncePerRound => {
                    let t = rng.random_range(0..len);
                    let delay = self.params.upload_delay.sample(rng);
                    plan.push(t, Action::Upload { agent, delay });
                }
                UploadModel::Bernoulli(p) => {
                    let mut ticks = Vec::new();
                    bernoulli_ticks(rng, p, len, self.geo_upload.as_ref(), |t| ticks.push(t));
                    for t in ticks {
                        let delay = self.params.upload_delay.sample(rng);
                        plan.push(t, Action::Upload { agent, delay });
                    }
                }
            }
        }
        plan.finish();
        true
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

/// A finite list of round plans.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSchedule {
    pub plans: Vec<RoundPlan>,
    pub seed: Option<u64>,
    cursor: usize,
}

impl SimSchedule {
    pub fn new(plans: Vec<RoundPlan>, neighbors: &[Vec<usize>]) -> Result<Self> {
        for p in &plans {
            p.validate(neighbors)?;
        }
        Ok(Self { plans, seed: None, cursor: 0 })
    }

    pub fn rewind(&mut self) {
        self.cursor = 0;
    }

    pub fn total_ticks(&self) -> u64 {
        self.plans.iter().map(|p| p.length as u64).sum()
    }
}

impl Schedule for SimSchedule {
    fn next_plan(&mut self, plan: &mut RoundPlan) -> bool {
        match self.plans.get(self.cursor) {
            Some(p) => {
                plan.clone_from(p);
                self.cursor += 1;
                true
            }
            None => false,
        }
    }

    fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Materialize `rounds` plans of a random schedule.
pub fn generate_schedule(seed: u64, params: ScheduleParams, spec: &ProblemSpec, rounds: usize) -> Result<SimSchedule> {
    let mut source = RandomSchedule::new(seed, params, spec)?;
    let mut plans = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let mut p = RoundPlan::default();
        source.next_plan(&mut p);
        plans.push(p);
    }
    Ok(SimSchedule { plans, seed: Some(seed), cursor: 0 })
}

/// Deterministic two-tick rounds that reproduce the synchronous iteration:
/// every agent uploads at the first tick, then every agent updates and sends
/// to all its neighbors at the second tick.
#[derive(Debug, Clone)]
pub struct LockstepSchedule {
    plan: RoundPlan,
}

impl LockstepSchedule {
    pub fn new(spec: &ProblemSpec) -> Self {
        let n = spec.num_agents();
        let mut events = Vec::new();
        for agent in 0..n {
            events.push(PlannedEvent { tick: 0, action: Action::Upload { agent, delay: 0 } });
            events.push(PlannedEvent { tick: 1, action: Action::Update { agent } });
            for &to in spec.neighbors(agent) {
                events.push(PlannedEvent { tick: 1, action: Action::Send { from: agent, to, delay: 0 } });
            }
        }
        Self { plan: RoundPlan::new(2, events) }
    }
}

impl Schedule for LockstepSchedule {
    fn next_plan(&mut self, plan: &mut RoundPlan) -> bool {
        plan.clone_from(&self.plan);
        true
    }
}
