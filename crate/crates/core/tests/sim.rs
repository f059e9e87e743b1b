mod common;

use std::collections::HashMap;

use asyncpd::sim::*;
use asyncpd::sync::SaddleProblem;
use common::*;

fn run(p: &SaddleProblem, s: &mut dyn Schedule, opts: &SimOptions) -> RunTrace {
    let x0 = p.spec.slater_point().to_vec();
    let mu0 = vec![0.0; p.num_constraints()];
    run_async(p, &steps(p), s, &x0, &mu0, opts).unwrap()
}

fn delayed_params(round_max: u32) -> ScheduleParams {
    ScheduleParams {
        p_update: 0.2,
        p_edge: 0.3,
        delay: DelayModel::Uniform { min: 0, max: 25 },
        upload_delay: DelayModel::Uniform { min: 0, max: 10 },
        round_length: RoundLength::Uniform { min: 5, max: round_max },
        ..ScheduleParams::default()
    }
}

#[test]
fn lockstep_reproduces_synchronous_iterates() {
    for p in [saddle(&flow_spec(), 0.1, 0.1), saddle(&chain_spec(), 0.2, 0.3)] {
        let st = steps(&p);
        let x0 = p.spec.slater_point().to_vec();
        let mu0 = vec![0.0; p.num_constraints()];
        let opts = SimOptions { horizon: 100, record_states: true, ..SimOptions::default() };
        let trace = run_async(&p, &st, &mut LockstepSchedule::new(&p.spec), &x0, &mu0, &opts).unwrap();
        assert_eq!(trace.states.len(), 100);
        assert_eq!(trace.stats.ticks, 200);
        let (mut x, mut mu) = (x0, mu0);
        for (k, (xs, ms)) in trace.states.iter().enumerate() {
            (x, mu) = p.sync_step(&st, &x, &mu).unwrap();
            assert_eq!(xs, &x, "primal differs at round {k}");
            assert_eq!(ms, &mu, "dual differs at round {k}");
        }
    }
}

#[test]
fn same_seed_same_trace() {
    let p = saddle(&chain_spec(), 0.2, 0.3);
    let opts = SimOptions { horizon: 200, record_events: true, ..SimOptions::default() };
    let a = run(&p, &mut RandomSchedule::new(11, delayed_params(40), &p.spec).unwrap(), &opts);
    let b = run(&p, &mut RandomSchedule::new(11, delayed_params(40), &p.spec).unwrap(), &opts);
    let c = run(&p, &mut RandomSchedule::new(12, delayed_params(40), &p.spec).unwrap(), &opts);
    assert_eq!(a.final_x, b.final_x);
    assert_eq!(a.final_mu, b.final_mu);
    assert_eq!(a.events, b.events);
    assert_eq!(a.seed, Some(11));
    assert_ne!(a.events, c.events);

    let mut s = generate_schedule(5, delayed_params(40), &p.spec, 50).unwrap();
    let first = run(&p, &mut s, &SimOptions { horizon: 50, ..opts.clone() });
    s.rewind();
    let second = run(&p, &mut s, &SimOptions { horizon: 50, ..opts.clone() });
    assert_eq!(first.events, second.events);
}

/// Channel key in the event log: sender and receiver (`CLOUD` for uploads).
fn key(e: &Event) -> (usize, usize) {
    match e.kind {
        EventKind::Send | EventKind::Upload => (e.agent, e.peer),
        EventKind::Deliver | EventKind::Discard => (e.peer, e.agent),
        EventKind::CloudReceive | EventKind::CloudDiscard => (e.agent, CLOUD),
        _ => unreachable!(),
    }
}

#[test]
fn message_log_respects_fifo_discard_and_synchrony() {
    let p = saddle(&chain_spec(), 0.2, 0.3);
    for seed in 0..10 {
        let opts = SimOptions { horizon: 300, record_events: true, ..SimOptions::default() };
        let tr = run(&p, &mut RandomSchedule::new(seed, delayed_params(60), &p.spec).unwrap(), &opts);
        assert_eq!(tr.stats.fifo_violations, 0);
        assert_eq!(tr.stats.sync_violations, 0);

        let mut sent: HashMap<u64, &Event> = HashMap::new();
        let mut last: HashMap<(usize, usize), u64> = HashMap::new();
        let mut discarded = 0;
        for e in &tr.events {
            match e.kind {
                EventKind::Send | EventKind::Upload => {
                    sent.insert(e.msg, e);
                }
                EventKind::Deliver | EventKind::Discard | EventKind::CloudReceive | EventKind::CloudDiscard => {
                    let s = sent.get(&e.msg).expect("arrival of an unsent message");
                    assert_eq!(key(s), key(e));
                    assert_eq!((s.version, s.stamp), (e.version, e.stamp));
                    assert!(e.tick >= s.tick);
                    let prev = last.insert(key(e), e.msg).unwrap_or(0);
                    assert!(e.msg > prev, "seed {seed}: channel {:?} reordered", key(e));
                    let kept = matches!(e.kind, EventKind::Deliver | EventKind::CloudReceive);
                    assert_eq!(kept, e.stamp == e.round, "seed {seed}: wrong discard decision {e:?}");
                    if !kept {
                        discarded += 1;
                    }
                }
                EventKind::Update => assert_eq!(e.stamp, e.round),
                _ => {}
            }
        }
        assert!(discarded > 0, "seed {seed}: schedule never crossed a round boundary");
        assert_eq!(discarded, tr.stats.messages_discarded + tr.stats.uploads_discarded);
    }
}

/// Recompute `c(t)` from the event log alone.
fn cycles_from_log(tr: &RunTrace, neighbors: &[Vec<usize>]) -> Vec<u64> {
    let n = neighbors.len();
    let mut out = Vec::new();
    let mut start = 0u64;
    let mut updated = vec![false; n];
    let mut chan: HashMap<(usize, usize), bool> = HashMap::new();
    let reset = |updated: &mut Vec<bool>, chan: &mut HashMap<(usize, usize), bool>| {
        updated.fill(false);
        chan.clear();
        for (i, nb) in neighbors.iter().enumerate() {
            for &j in nb {
                chan.insert((i, j), false);
            }
        }
    };
    reset(&mut updated, &mut chan);
    let mut completions: Vec<u64> = Vec::new();
    let mut kept: HashMap<usize, u64> = HashMap::new();
    for e in &tr.events {
        match e.kind {
            EventKind::Update => updated[e.agent] = true,
            EventKind::Deliver if e.version > start => {
                chan.insert((e.peer, e.agent), true);
            }
            EventKind::CloudReceive => {
                kept.insert(e.agent, e.msg);
            }
            EventKind::DualUpdate => {
                let first = kept.values().copied().min().unwrap_or(u64::MAX);
                out.push(completions.iter().filter(|&&c| c < first).count() as u64);
                completions.clear();
                kept.clear();
                start = e.seq;
                reset(&mut updated, &mut chan);
                continue;
            }
            _ => continue,
        }
        if updated.iter().all(|&u| u) && chan.values().all(|&c| c) {
            completions.push(e.seq);
            start = e.seq;
            reset(&mut updated, &mut chan);
        }
    }
    out
}

#[test]
fn cycle_counts_match_brute_force() {
    let p = saddle(&chain_spec(), 0.2, 0.3);
    let nb: Vec<Vec<usize>> = (0..4).map(|i| p.spec.neighbors(i).to_vec()).collect();
    let mut total = 0;
    for seed in 0..10 {
        let params = ScheduleParams { delay: DelayModel::Uniform { min: 0, max: 6 }, ..delayed_params(80) };
        let opts = SimOptions { horizon: 200, record_events: true, ..SimOptions::default() };
        let tr = run(&p, &mut RandomSchedule::new(seed, params, &p.spec).unwrap(), &opts);
        assert_eq!(cycles_from_log(&tr, &nb), tr.cycles, "seed {seed}");
        total += tr.cycles.iter().sum::<u64>();
    }
    assert!(total > 0);
}

#[test]
fn one_tick_synchronous_rounds_complete_one_cycle() {
    let p = saddle(&flow_spec(), 0.1, 0.1);
    let mut s = RandomSchedule::new(1, ScheduleParams::synchronous(1), &p.spec).unwrap();
    let tr = run(&p, &mut s, &SimOptions { horizon: 50, ..SimOptions::default() });
    assert!(tr.cycles.iter().all(|&c| c == 1), "{:?}", tr.cycles);
    assert!(tr.fresh.iter().all(|&f| f == 8));
}

#[test]
fn late_messages_are_dropped_and_late_uploads_extend_the_round() {
    let p = saddle(&chain_spec(), 0.2, 0.3);
    let nb: Vec<Vec<usize>> = (0..4).map(|i| p.spec.neighbors(i).to_vec()).collect();
    let ev = |tick, action| PlannedEvent { tick, action };
    let mut first = vec![ev(0, Action::Send { from: 0, to: 1, delay: 10 })];
    for agent in 0..4 {
        first.push(ev(0, Action::Update { agent }));
        first.push(ev(1, Action::Upload { agent, delay: if agent == 3 { 5 } else { 0 } }));
    }
    let mut second = Vec::new();
    for agent in 0..4 {
        second.push(ev(0, Action::Upload { agent, delay: 0 }));
    }
    let plans = vec![
        RoundPlan::new(3, first),
        RoundPlan::new(4, Vec::new()),
        RoundPlan::new(3, second.clone()),
        RoundPlan::new(20, second),
    ];
    let mut s = SimSchedule::new(plans, &nb).unwrap();
    let opts = SimOptions { horizon: 10, record_events: true, ..SimOptions::default() };
    let tr = run(&p, &mut s, &opts);
    assert_eq!(tr.stop, StopReason::ScheduleExhausted);
    // agent 3's upload lands at tick 6, so round 0 only closes after the second segment
    assert_eq!(tr.stats.gate_waits, 1);
    assert_eq!(tr.stats.rounds, 3);
    assert_eq!(tr.stats.uploads_discarded, 0);
    let drop = tr.events.iter().find(|e| e.kind == EventKind::Discard).expect("no discard");
    assert_eq!((drop.agent, drop.peer, drop.stamp, drop.round, drop.tick), (1, 0, 0, 2, 10));
    assert_eq!(tr.stats.messages_discarded, 1);
}

#[test]
fn probed_invariants_hold_under_delays() {
    let p = saddle(&chain_spec(), 0.2, 0.3);
    let est = p.solve(1e-13, 10_000_000).unwrap();
    for seed in 0..4 {
        let opts = SimOptions {
            horizon: 150,
            probe: true,
            references: Some(References {
                x_reg: est.x.clone(),
                mu_reg: est.mu.clone(),
                x_unreg: None,
                mu_unreg: None,
            }),
            ..SimOptions::default()
        };
        let tr = run(&p, &mut RandomSchedule::new(seed, delayed_params(60), &p.spec).unwrap(), &opts);
        assert!(tr.stats.invariant_checks > 100);
        assert_eq!(tr.stats.invariant_violations, 0, "{:?}", tr.stats.invariant_notes);
        assert_eq!(tr.set_descent.rows.len(), 150);
        assert_eq!(tr.stats.dual_bound_violations, 0);
        assert_eq!(tr.stats.primal_bound_violations, 0);
        assert!(tr.rounds.iter().all(|r| r.dual_err_reg.powi(2) <= r.dual_bound * (1.0 + 1e-9)));
    }
}

#[test]
fn partial_gate_bound_holds() {
    let p = saddle(&flow_spec(), 0.1, 0.1);
    let params = ScheduleParams {
        uploads: UploadModel::Bernoulli(0.01),
        round_length: RoundLength::Uniform { min: 5, max: 40 },
        ..ScheduleParams::default()
    };
    let opts = SimOptions { horizon: 200, gate: Gate::AtLeast(3), probe: true, ..SimOptions::default() };
    let tr = run(&p, &mut RandomSchedule::new(9, params, &p.spec).unwrap(), &opts);
    assert!(tr.fresh.iter().all(|&f| f >= 3));
    assert!(tr.partial.rows.len() > 50, "{} partial rounds", tr.partial.rows.len());
    assert_eq!(tr.partial.violations(), 0);
    assert_eq!(tr.set_descent.violations(), 0);
    assert_eq!(tr.stats.invariant_violations, 0, "{:?}", tr.stats.invariant_notes);
    assert!(tr.stats.set_descent_checks > 0);
    assert_eq!(tr.stats.set_descent_violations, 0);
}

/// The per-update block-max contraction by `q_p` is not implied by the
/// Euclidean contraction: on the coupled chain an update can land farther
/// from the target than `q_p` times the block-max distance.
#[test]
fn block_max_descent_can_fail_where_euclidean_holds() {
    let p = saddle(&chain_spec(), 0.2, 0.3);
    let opts = SimOptions { horizon: 150, probe: true, ..SimOptions::default() };
    let tr = run(&p, &mut RandomSchedule::new(0, delayed_params(60), &p.spec).unwrap(), &opts);
    assert_eq!(tr.stats.invariant_violations, 0);
    assert!(tr.stats.set_descent_violations > 0);
}

#[test]
fn update_and_edge_frequencies_match_probabilities() {
    let p = saddle(&chain_spec(), 0.2, 0.3);
    let params = ScheduleParams { ensure_update: false, ..ScheduleParams::default() };
    let opts = SimOptions { horizon: 3000, ..SimOptions::default() };
    let tr = run(&p, &mut RandomSchedule::new(3, params, &p.spec).unwrap(), &opts);
    let trials = tr.stats.ticks as f64 * 4.0;
    let sd = (trials * 0.05 * 0.95).sqrt();
    assert!((tr.stats.updates as f64 - 0.05 * trials).abs() < 3.0 * sd, "{} updates in {trials}", tr.stats.updates);
    // both directions of each of the three pairs
    let pair_trials = tr.stats.ticks as f64 * 3.0;
    let sends = tr.stats.messages_sent as f64 / 2.0;
    let sd = (pair_trials * 0.05 * 0.95).sqrt();
    assert!((sends - 0.05 * pair_trials).abs() < 3.0 * sd, "{sends} exchanges in {pair_trials}");
}

#[test]
fn bad_inputs_rejected() {
    let p = saddle(&chain_spec(), 0.2, 0.3);
    let st = steps(&p);
    let mut s = LockstepSchedule::new(&p.spec);
    let opts = SimOptions::default();
    assert!(run_async(&p, &st, &mut s, &[0.0; 3], &[0.0; 2], &opts).is_err());
    assert!(run_async(&p, &st, &mut s, &[9.0; 4], &[0.0; 2], &opts).is_err());
    assert!(run_async(&p, &st, &mut s, &[0.0; 4], &[-1.0, 0.0], &opts).is_err());
    let gate = SimOptions { gate: Gate::AtLeast(0), ..SimOptions::default() };
    assert!(run_async(&p, &st, &mut s, &[0.0; 4], &[0.0; 2], &gate).is_err());
    let mut bad = st;
    bad.gamma = 10.0;
    assert!(run_async(&p, &bad, &mut s, &[0.0; 4], &[0.0; 2], &opts).is_err());
}

#[test]
fn trace_csv_round_trips() {
    let p = saddle(&chain_spec(), 0.2, 0.3);
    let est = p.solve(1e-13, 10_000_000).unwrap();
    let opts = SimOptions {
        horizon: 40,
        references: Some(References { x_reg: est.x, mu_reg: est.mu, x_unreg: None, mu_unreg: None }),
        ..SimOptions::default()
    };
    let tr = run(&p, &mut RandomSchedule::new(2, delayed_params(30), &p.spec).unwrap(), &opts);
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let table = TraceTable::read(std::io::Cursor::new(buf), "mem").unwrap();
    assert_eq!(table.seed, Some(2));
    assert_eq!(table.rows.len(), 40);
    assert_eq!(table.meta_f64("q_p").unwrap(), tr.constants.q_p);
    for (a, b) in table.rows.iter().zip(&tr.rounds) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.dual_err_reg, b.dual_err_reg);
        assert!(a.primal_err_unreg.is_nan());
    }
}
