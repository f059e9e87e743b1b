//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Exits 0 after printing the report so the remaining suites still run;
//! set `ACCEPTANCE_STRICT=1` to exit 1 when any criterion fails.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::io::Cursor;
use std::time::Instant;

use asyncpd::analysis::{block_max_norm, BlockPartition};
use asyncpd::cli::check_trace;
use asyncpd::experiments::*;
use asyncpd::problem::{compute_bounds, BoxSet, ProblemSpec};
use asyncpd::reg::*;
use asyncpd::sim::*;
use asyncpd::sync::{SaddleProblem, DEFAULT_MAX_ITERS};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative tolerance on reproduced benchmark values.
const REL_TOL: f64 = 0.02;
/// Required distance to the regularized saddle point after an asynchronous run.
const ASYNC_TOL: f64 = 1e-6;
/// Late-to-early amplitude ratio that counts as sustained oscillation.
const OSC_RATIO: f64 = 0.5;
const SEEDS: [u64; 3] = [42, 43, 44];

/// Criterion lines with their notes, printed in criterion order.
#[derive(Default)]
struct Report {
    lines: BTreeMap<usize, (bool, Vec<String>)>,
}

impl Report {
    fn record(&mut self, id: usize, ok: bool, secs: f64, detail: String) {
        let head = format!("criterion {id}: {} ({secs:.1} s) {detail}", if ok { "PASS" } else { "FAIL" });
        let entry = self.lines.entry(id).or_default();
        entry.0 = ok;
        entry.1.insert(0, head.trim_end().to_string());
    }

    fn note(&mut self, id: usize, line: String) {
        self.lines.entry(id).or_default().1.push(format!("  {line}"));
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn max_g(spec: &ProblemSpec, x: &[f64]) -> f64 {
    let mut g = vec![0.0; spec.num_constraints()];
    spec.constraint_values(x, &mut g);
    g.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn regularization(rep: &mut Report, spec: &ProblemSpec, refs: &FlowReferences, secs: f64) {
    let primal = [(0.1, 8.616), (0.01, 0.223), (0.001, 0.0237)];
    let violation = [(0.1, 1.948), (0.01, 0.252), (0.001, 0.0262)];
    let mut ok1 = true;
    let mut d1 = Vec::new();
    for (a, want) in primal {
        let got = dist(&refs.get(a, a).unwrap().x, &refs.unreg.x);
        let r = rel(got, want);
        ok1 &= r <= REL_TOL;
        d1.push(format!("a={a}: {got:.5} vs {want} ({:.1}%)", 100.0 * r));
    }
    rep.record(1, ok1 && secs < 60.0, secs, d1.join("; "));
    if !ok1 {
        let dual = dist(&refs.get(0.1, 0.1).unwrap().mu, &refs.unreg.mu);
        rep.note(1, format!("dual regularization gap at a=0.1 is {dual:.4}"));
    }

    let mut ok2 = true;
    let mut d2 = Vec::new();
    for (a, want) in violation {
        let x = &refs.get(a, a).unwrap().x;
        let got = max_g(spec, x);
        let bound = error_bounds(&RegParams::new(a, a).unwrap(), &compute_bounds(spec, a).unwrap())
            .unwrap()
            .violation
            .into_iter()
            .fold(0.0, f64::max);
        let r = rel(got, want);
        ok2 &= r <= REL_TOL && got <= bound;
        d2.push(format!("a={a}: {got:.5} vs {want} ({:.1}%), bound {bound:.3e}", 100.0 * r));
    }
    rep.record(2, ok2, secs, d2.join("; "));
}

fn async_runs(rep: &mut Report, cfg: &FlowRoutingConfig, spec: &ProblemSpec, refs: &FlowReferences) -> Vec<FlowResult> {
    let t0 = Instant::now();
    let jobs: Vec<(f64, u64)> = cfg.sweep.iter().flat_map(|&a| SEEDS.map(|s| (a, s))).collect();
    let results: Vec<FlowResult> = std::thread::scope(|s| {
        let hs: Vec<_> = jobs
            .iter()
            .map(|&(a, seed)| {
                // keep contiguous rows where the trace is small enough to replay
                let every = if a < 0.005 { 100 } else { 1 };
                s.spawn(move || {
                    run_flow_experiment(spec, cfg, refs, seed, RegParams::new(a, a).unwrap(), every).unwrap()
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let secs = t0.elapsed().as_secs_f64();
    let mut ok = secs < 300.0;
    let mut detail = Vec::new();
    for r in &results {
        let pass = r.converged && r.primal_err_reg < ASYNC_TOL && r.dual_err_reg < ASYNC_TOL;
        ok &= pass;
        detail.push(format!(
            "a={} seed={}: rounds={} primal={:.1e} dual={:.1e}{}",
            r.alpha,
            r.seed,
            r.rounds,
            r.primal_err_reg,
            r.dual_err_reg,
            if pass { "" } else { " [miss]" }
        ));
    }
    rep.record(3, ok, secs, format!("{} runs", results.len()));
    for d in detail {
        rep.note(3, d);
    }
    let mean = |a: f64| {
        let v: Vec<f64> = results.iter().filter(|r| r.alpha == a).map(|r| r.rounds as f64).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let means: Vec<f64> = cfg.sweep.iter().map(|&a| mean(a)).collect();
    rep.note(
        3,
        format!(
            "mean rounds by alpha: {} (increasing as alpha shrinks: {})",
            means.iter().map(|m| format!("{m:.0}")).collect::<Vec<_>>().join(", "),
            means.windows(2).all(|w| w[1] > w[0])
        ),
    );
    results
}

fn bound_soundness(rep: &mut Report, results: &[FlowResult], sync: &CounterexampleSync) {
    let t0 = Instant::now();
    let mut ok = true;
    let mut in_run = 0;
    let mut replayed = 0;
    let mut rows = 0;
    let mut min_slack = f64::INFINITY;
    let traces = results.iter().map(|r| &r.trace).chain(std::iter::once(&sync.trace));
    for tr in traces {
        in_run += tr.stats.dual_bound_violations + tr.stats.primal_bound_violations;
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let table = TraceTable::read(Cursor::new(buf), "memory").unwrap();
        let check = check_trace(&table).unwrap();
        ok &= check.violations() == 0 && check.recursion_mismatches == 0;
        replayed += usize::from(check.replayed);
        rows += table.rows.len();
        min_slack = min_slack.min(check.dual.min_slack()).min(check.primal.min_slack());
    }
    ok &= in_run == 0;
    rep.record(
        4,
        ok,
        t0.elapsed().as_secs_f64(),
        format!(
            "{} traces, {rows} stored rows, {replayed} replayed in full, {in_run} violations over all rounds, min slack {min_slack:.2e}",
            results.len() + 1
        ),
    );
}

fn counterexample(rep: &mut Report) -> CounterexampleSync {
    let t0 = Instant::now();
    let cfg = CounterexampleConfig::default();
    let trace = run_counterexample(&cfg).unwrap();
    let osc = trace.oscillation(3).unwrap();
    let sustained = osc.iter().all(|o| !o.degenerate && o.ratio() >= OSC_RATIO);
    let sync = run_counterexample_synchronized(&cfg, 7, 3_000_000).unwrap();
    let sync_ok = sync.trace.converged() && sync.primal_err < ASYNC_TOL && sync.dual_err < ASYNC_TOL;
    let secs = t0.elapsed().as_secs_f64();
    let ratios: Vec<String> =
        ["x1", "x2", "mu"].iter().zip(&osc).map(|(n, o)| format!("{n} {:.4}", o.ratio())).collect();
    rep.record(
        5,
        sustained && sync_ok && secs < 60.0,
        secs,
        format!(
            "oscillation ratios {} (need >= {OSC_RATIO}); synchronized dual: rounds={} primal={:.1e} dual={:.1e}",
            ratios.join(", "),
            sync.trace.stats.rounds,
            sync.primal_err,
            sync.dual_err
        ),
    );
    let last = trace.outer.last().unwrap();
    rep.note(
        5,
        format!(
            "last outer state x=({:.4}, {:.4}) mu={:.4}; regularized saddle x=({:.4}, {:.4}) mu={:.4}",
            last.x1, last.x2, last.mu, sync.reference.x[0], sync.reference.x[1], sync.reference.mu[0]
        ),
    );
    for w in [3, 4, 5] {
        let o = trace.oscillation(w).unwrap();
        rep.note(
            5,
            format!(
                "window {w}: ratios {:.4} / {:.4} / {:.4}, decaying {}",
                o[0].ratio(),
                o[1].ratio(),
                o[2].ratio(),
                o.iter().filter(|o| o.decaying).count()
            ),
        );
    }
    sync
}

fn lockstep(rep: &mut Report) {
    let t0 = Instant::now();
    let mut ok = true;
    let mut ticks = Vec::new();
    for p in [saddle(&flow_spec(), 0.1, 0.1), saddle(&chain_spec(), 0.2, 0.3)] {
        let st = steps(&p);
        let x0 = p.spec.slater_point().to_vec();
        let mu0 = vec![0.0; p.num_constraints()];
        let opts = SimOptions { horizon: 100, record_states: true, ..SimOptions::default() };
        let tr = run_async(&p, &st, &mut LockstepSchedule::new(&p.spec), &x0, &mu0, &opts).unwrap();
        let (mut x, mut mu) = (x0, mu0);
        ok &= tr.states.len() == 100;
        for (xs, ms) in &tr.states {
            (x, mu) = p.sync_step(&st, &x, &mu).unwrap();
            ok &= xs == &x && ms == &mu;
        }
        ticks.push(tr.stats.ticks);
    }
    rep.record(6, ok, t0.elapsed().as_secs_f64(), format!("bitwise over {ticks:?} ticks (flow, chain)"));
}

fn reg_round_trip(rep: &mut Report, spec: &ProblemSpec, refs: &FlowReferences) {
    let t0 = Instant::now();
    let base = compute_bounds(spec, 1e-9).unwrap();
    let f_star = spec.objective(&refs.unreg.x);
    let mut ok = true;
    let mut detail = Vec::new();
    for eps in [1.0, 0.1, 0.01] {
        let reg = choose_reg_params(eps, &base).unwrap();
        let eb = error_bounds(&reg, &compute_bounds(spec, reg.alpha).unwrap()).unwrap();
        let vb = eb.violation.iter().copied().fold(0.0, f64::max);
        let est = SaddleProblem::new(spec.clone(), reg).unwrap().solve(1e-10, DEFAULT_MAX_ITERS).unwrap();
        let gap = (spec.objective(&est.x) - f_star).abs();
        let viol = max_g(spec, &est.x).max(0.0);
        let pass = est.converged && eb.cost < eps && vb < eps && gap < eps && viol < eps;
        ok &= pass;
        detail.push(format!(
            "eps={eps}: alpha={:.2e} cost bound {:.3e} violation bound {vb:.3e} measured gap {gap:.2e} violation {viol:.1e}",
            reg.alpha, eb.cost
        ));
    }
    rep.record(7, ok, t0.elapsed().as_secs_f64(), String::new());
    for d in detail {
        rep.note(7, d);
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random_partition(rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..rng.random_range(2..6)).map(|_| rng.random_range(1..4)).collect()
}

fn properties(rep: &mut Report) {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checks: Vec<(&str, usize, usize)> = Vec::new();

    // projections
    let set = BoxSet::new(
        vec![-1.0, 0.0, -5.0, 2.0, -3.0],
        vec![1.0, 4.0, 5.0, 2.5, 0.0],
        BlockPartition::new(&[2, 1, 2]).unwrap(),
    )
    .unwrap();
    let ball = DualBall::new(2.0, 6).unwrap();
    let mut bad = 0;
    for _ in 0..1000 {
        let v: Vec<f64> = (0..5).map(|_| rng.random_range(-20.0..20.0)).collect();
        let w: Vec<f64> = (0..5).map(|_| rng.random_range(-20.0..20.0)).collect();
        let (pv, pw) = (project_box(&v, &set).unwrap(), project_box(&w, &set).unwrap());
        let box_ok = project_box(&pv, &set).unwrap() == pv && dist(&pv, &pw) <= dist(&v, &w) + 1e-12;
        let m: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let n: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (pm, pn) = (project_dual_ball(&m, &ball).unwrap(), project_dual_ball(&n, &ball).unwrap());
        let ball_ok = dist(&project_dual_ball(&pm, &ball).unwrap(), &pm) < 1e-12
            && dist(&pm, &pn) <= dist(&m, &n) + 1e-12
            && ball.contains(&pm, 1e-12);
        bad += usize::from(!(box_ok && ball_ok));
    }
    checks.push(("projection idempotence and non-expansiveness", 1000, bad));

    // gradients against central differences
    let problems = [
        saddle(&flow_spec(), 0.1, 0.1),
        saddle(&chain_spec(), 0.2, 0.3),
        saddle(&counterexample_problem(&CounterexampleConfig::default()).unwrap(), 0.01, 0.01),
    ];
    let (mut n, mut bad) = (0, 0);
    for p in &problems {
        let b = p.spec.boxset();
        for _ in 0..20 {
            let x: Vec<f64> =
                (0..p.dim()).map(|k| b.lo()[k] + rng.random_range(0.05..0.95) * (b.up()[k] - b.lo()[k])).collect();
            let mu: Vec<f64> = (0..p.num_constraints())
                .map(|_| rng.random_range(0.0..1.0) * p.ball.radius / p.num_constraints() as f64)
                .collect();
            let gx = grad_x_reg(&p.spec, &x, &mu, &p.reg).unwrap();
            let gm = grad_mu_reg(&p.spec, &x, &mu, p.reg.beta).unwrap();
            let l = |x: &[f64], mu: &[f64]| reg_lagrangian(&p.spec, x, mu, &p.reg).unwrap();
            let mut worst: f64 = 0.0;
            for k in 0..x.len() {
                let h = 1e-6 * (1.0 + x[k].abs());
                let (mut a, mut c) = (x.clone(), x.clone());
                a[k] += h;
                c[k] -= h;
                worst = worst.max(((l(&a, &mu) - l(&c, &mu)) / (2.0 * h) - gx[k]).abs() / gx[k].abs().max(1.0));
            }
            for j in 0..mu.len() {
                let h = 1e-6 * (1.0 + mu[j].abs());
                let (mut a, mut c) = (mu.clone(), mu.clone());
                a[j] += h;
                c[j] -= h;
                worst = worst.max(((l(&x, &a) - l(&x, &c)) / (2.0 * h) - gm[j]).abs() / gm[j].abs().max(1.0));
            }
            n += 1;
            bad += usize::from(worst > 1e-5);
        }
    }
    checks.push(("gradient vs central difference, 20 points x 3 problems", n, bad));

    // norm inequalities
    let mut bad = 0;
    for _ in 0..1000 {
        let dims = random_partition(&mut rng);
        let p = BlockPartition::new(&dims).unwrap();
        let v: Vec<f64> = (0..p.dim()).map(|_| rng.random_range(-10.0..10.0)).collect();
        let (b, e, k) = (block_max_norm(&v, &p).unwrap(), norm(&v), dims.len() as f64);
        bad += usize::from(!(b <= e + 1e-12 && e <= k.sqrt() * b * (1.0 + 1e-12)));
    }
    checks.push(("block-max vs Euclidean norm", 1000, bad));

    let (mut mixed_bad, mut induced_bad, mut worst) = (0, 0, 0.0f64);
    for _ in 0..100 {
        let dims = random_partition(&mut rng);
        let p = BlockPartition::new(&dims).unwrap();
        let d = p.dim();
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let spectral = a.clone().svd(false, false).singular_values.max();
        for _ in 0..10 {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let av: Vec<f64> = (&a * DVector::from_column_slice(&v)).iter().copied().collect();
            let bav = block_max_norm(&av, &p).unwrap();
            mixed_bad += usize::from(bav > spectral * norm(&v) * (1.0 + 1e-10));
            let ratio = bav / block_max_norm(&v, &p).unwrap() / spectral;
            worst = worst.max(ratio);
            induced_bad += usize::from(ratio > 1.0 + 1e-10);
        }
    }
    checks.push(("block-max of Av within spectral norm times |v|_2", 1000, mixed_bad));
    checks.push(("block-max ratio |Av|/|v| within spectral norm", 1000, induced_bad));

    // strong monotonicity
    let mut bad = 0;
    for p in &problems {
        let b = p.spec.boxset();
        for _ in 0..200 {
            let mut draw = || -> (Vec<f64>, Vec<f64>) {
                let x =
                    (0..p.dim()).map(|k| b.lo()[k] + rng.random_range(0.0..1.0) * (b.up()[k] - b.lo()[k])).collect();
                let mu = (0..p.num_constraints())
                    .map(|_| rng.random_range(0.0..1.0) * p.ball.radius / p.num_constraints() as f64)
                    .collect();
                (x, mu)
            };
            let ((x1, m1), (x2, m2)) = (draw(), draw());
            let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let dx = sub(&x1, &x2);
            let gx =
                sub(&grad_x_reg(&p.spec, &x1, &m1, &p.reg).unwrap(), &grad_x_reg(&p.spec, &x2, &m1, &p.reg).unwrap());
            let dm = sub(&m1, &m2);
            let gm = sub(
                &grad_mu_reg(&p.spec, &x1, &m1, p.reg.beta).unwrap(),
                &grad_mu_reg(&p.spec, &x1, &m2, p.reg.beta).unwrap(),
            );
            let ok = dot(&gx, &dx) >= p.reg.alpha * dot(&dx, &dx) * (1.0 - 1e-9)
                && -dot(&gm, &dm) >= p.reg.beta * dot(&dm, &dm) * (1.0 - 1e-9);
            bad += usize::from(!ok);
        }
    }
    checks.push(("strong monotonicity in x and mu", 600, bad));

    // message log on random schedules
    let p = saddle(&chain_spec(), 0.2, 0.3);
    let params = ScheduleParams {
        p_update: 0.2,
        p_edge: 0.3,
        delay: DelayModel::Uniform { min: 0, max: 25 },
        upload_delay: DelayModel::Uniform { min: 0, max: 10 },
        round_length: RoundLength::Uniform { min: 5, max: 60 },
        ..ScheduleParams::default()
    };
    let mut bad = 0;
    for seed in 0..10 {
        let opts = SimOptions { horizon: 300, record_events: true, ..SimOptions::default() };
        let x0 = p.spec.slater_point().to_vec();
        let mu0 = vec![0.0; p.num_constraints()];
        let tr = run_async(
            &p,
            &steps(&p),
            &mut RandomSchedule::new(seed, params.clone(), &p.spec).unwrap(),
            &x0,
            &mu0,
            &opts,
        )
        .unwrap();
        let mut ok = tr.stats.fifo_violations == 0 && tr.stats.sync_violations == 0;
        let mut sent: HashMap<u64, &Event> = HashMap::new();
        let mut last: HashMap<(usize, usize, bool), u64> = HashMap::new();
        for e in &tr.events {
            match e.kind {
                EventKind::Send | EventKind::Upload => {
                    sent.insert(e.msg, e);
                }
                EventKind::Deliver | EventKind::Discard | EventKind::CloudReceive | EventKind::CloudDiscard => {
                    let Some(s) = sent.get(&e.msg) else {
                        ok = false;
                        continue;
                    };
                    let chan = (s.agent, s.peer, matches!(s.kind, EventKind::Upload));
                    ok &= last.insert(chan, e.msg).unwrap_or(0) < e.msg;
                    let kept = matches!(e.kind, EventKind::Deliver | EventKind::CloudReceive);
                    ok &= kept == (e.stamp == e.round);
                }
                EventKind::Update => ok &= e.stamp == e.round,
                _ => {}
            }
        }
        bad += usize::from(!ok);
    }
    checks.push(("FIFO, discard and dual synchrony on random schedules", 10, bad));

    let ok = checks.iter().all(|c| c.2 == 0);
    rep.record(8, ok, t0.elapsed().as_secs_f64(), format!("{} suites", checks.len()));
    for (name, n, bad) in &checks {
        rep.note(8, format!("{} {name}: {bad}/{n} failures", if *bad == 0 { "ok  " } else { "FAIL" }));
    }
    rep.note(8, format!("largest block-max ratio over spectral norm: {worst:.4}"));
}

fn main() {
    let cfg = FlowRoutingConfig::default();
    let spec = build_flow_problem(&cfg).unwrap();
    let mut rep = Report::default();

    let t0 = Instant::now();
    let pairs: Vec<(f64, f64)> = cfg.sweep.iter().map(|&a| (a, a)).collect();
    let refs = FlowReferences::compute(&spec, &cfg, &pairs).unwrap();
    regularization(&mut rep, &spec, &refs, t0.elapsed().as_secs_f64());

    let results = async_runs(&mut rep, &cfg, &spec, &refs);
    let sync = counterexample(&mut rep);
    bound_soundness(&mut rep, &results, &sync);
    lockstep(&mut rep);
    reg_round_trip(&mut rep, &spec, &refs);
    properties(&mut rep);

    for line in rep.lines.values().flat_map(|(_, lines)| lines) {
        println!("{line}");
    }
    let failed: Vec<usize> = rep.lines.iter().filter(|(_, l)| !l.0).map(|(id, _)| *id).collect();
    println!(
        "acceptance: {}/{} criteria pass{}",
        rep.lines.len() - failed.len(),
        rep.lines.len(),
        if failed.is_empty() { String::new() } else { format!(", failing: {failed:?}") }
    );
    if !failed.is_empty() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
