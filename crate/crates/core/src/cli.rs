//! Command-line front end.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{BoundReport, RateConstants, VIOLATION_RTOL};
use crate::config::load_flow_config;
use crate::error::{Error, Result};
use crate::experiments::{
    build_flow_problem, run_counterexample, run_counterexample_synchronized, run_flow_experiment, sweep, write_summary,
    CounterexampleConfig, FlowReferences, FlowResult, FlowRoutingConfig,
};
use crate::reg::RegParams;
use crate::sim::TraceTable;

#[derive(Debug, Parser)]
#[command(name = "asyncpd", version, about = "Asynchronous primal-dual experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the flow-routing benchmark for one (alpha, beta).
    Flow(FlowArgs),
    /// Run the scripted counterexample and its synchronized-dual control.
    Counterexample(CounterArgs),
    /// Replay the rate bounds against a per-round trace CSV.
    BoundsCheck(BoundsArgs),
    /// Run every (alpha, alpha) setting of the benchmark sweep.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// key = value file overriding benchmark settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum number of dual updates.
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Keep every n-th round in the per-round CSV.
    #[arg(long, default_value_t = 1)]
    pub every: u64,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Defaults to alpha.
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct CounterArgs {
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Also write the state after every inner iteration.
    #[arg(long)]
    pub inner: bool,
    /// Outer iterations per amplitude window.
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    /// Seed of the synchronized-dual control run.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Directory for the bound report CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `args` and run; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::InvalidParameter { .. } => 2,
                _ => 1,
            }
        }
    }
}

pub fn run<W: Write>(cli: Cli, out: &mut W) -> Result<i32> {
    match cli.command {
        Command::Flow(a) => flow(a, out),
        Command::Sweep(a) => run_sweep(a, out),
        Command::Counterexample(a) => counterexample(a, out),
        Command::BoundsCheck(a) => bounds_check(a, out),
    }
}

fn flow_config(c: &Common) -> Result<FlowRoutingConfig> {
    let mut cfg = match &c.config {
        Some(p) => load_flow_config(p)?,
        None => FlowRoutingConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(h) = c.horizon {
        cfg.horizon = h;
    }
    if c.every == 0 {
        return Err(Error::param("every", "must be positive"));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let f = File::create(&path)?;
    Ok((path, BufWriter::new(f)))
}

/// File name of the per-round CSV of one run.
pub fn trace_file_name(alpha: f64, beta: f64) -> String {
    if alpha == beta {
        format!("flow_a{alpha}.csv")
    } else {
        format!("flow_a{alpha}_b{beta}.csv")
    }
}

fn emit<W: Write>(results: &[FlowResult], dir: &Path, out: &mut W) -> Result<i32> {
    for r in results {
        let (path, mut f) = create(dir, &trace_file_name(r.alpha, r.beta))?;
        r.trace.write_csv(&mut f)?;
        f.flush()?;
        writeln!(
            out,
            "alpha={} beta={} seed={} rounds={} converged={} primal_reg={:.3e} primal_unreg={:.6} dual_reg={:.3e} dual_unreg={:.6} max_g_reg={:.6} -> {}",
            r.alpha,
            r.beta,
            r.seed,
            r.rounds,
            r.converged,
            r.primal_err_reg,
            r.primal_err_unreg,
            r.dual_err_reg,
            r.dual_err_unreg,
            r.max_g_reg,
            path.display()
        )?;
    }
    let (path, mut f) = create(dir, "summary.csv")?;
    write_summary(results, &mut f)?;
    f.flush()?;
    writeln!(out, "summary -> {}", path.display())?;
    let failed: Vec<_> = results.iter().filter(|r| !r.converged).collect();
    if failed.is_empty() {
        Ok(0)
    } else {
        for r in failed {
            eprintln!("error: run alpha={} beta={} did not converge within horizon {}", r.alpha, r.beta, r.rounds);
        }
        Ok(1)
    }
}

fn flow<W: Write>(a: FlowArgs, out: &mut W) -> Result<i32> {
    let cfg = flow_config(&a.common)?;
    let reg = RegParams::new(a.alpha, a.beta.unwrap_or(a.alpha))?;
    let spec = build_flow_problem(&cfg)?;
    let refs = FlowReferences::compute(&spec, &cfg, &[(reg.alpha, reg.beta)])?;
    let r = run_flow_experiment(&spec, &cfg, &refs, cfg.seed, reg, a.common.every)?;
    emit(&[r], &a.common.out, out)
}

fn run_sweep<W: Write>(a: SweepArgs, out: &mut W) -> Result<i32> {
    let cfg = flow_config(&a.common)?;
    let results = sweep(&cfg, cfg.seed, a.common.every)?;
    emit(&results, &a.common.out, out)
}

fn counterexample<W: Write>(a: CounterArgs, out: &mut W) -> Result<i32> {
    let cfg = CounterexampleConfig { record_inner: a.inner, ..CounterexampleConfig::default() };
    let trace = run_counterexample(&cfg)?;
    let (path, mut f) = create(&a.out, "counterexample.csv")?;
    trace.write_outer_csv(&mut f)?;
    f.flush()?;
    writeln!(out, "outer-loop states -> {}", path.display())?;
    if a.inner {
        let (path, mut f) = create(&a.out, "counterexample_inner.csv")?;
        trace.write_inner_csv(&mut f)?;
        f.flush()?;
        writeln!(out, "inner states -> {}", path.display())?;
    }
    let osc = trace.oscillation(a.window)?;
    for (name, o) in ["x1", "x2", "mu"].iter().zip(&osc) {
        writeln!(
            out,
            "{name}: amplitude first={:.6} last={:.6} ratio={:.4} decaying={}",
            o.amplitude_first,
            o.amplitude_last,
            o.ratio(),
            o.decaying
        )?;
    }
    let sync = run_counterexample_synchronized(&cfg, a.seed, 3_000_000)?;
    writeln!(
        out,
        "synchronized dual: rounds={} converged={} primal_err={:.3e} dual_err={:.3e}",
        sync.trace.stats.rounds,
        sync.trace.converged(),
        sync.primal_err,
        sync.dual_err
    )?;
    Ok(0)
}

/// Replayed bound checks of a stored trace.
#[derive(Debug, Clone)]
pub struct BoundsCheck {
    pub dual: BoundReport,
    pub primal: BoundReport,
    /// Rounds where the stored dual bound disagrees with the recursion.
    pub recursion_mismatches: usize,
    /// Whether the rows were contiguous, so the recursion could be replayed.
    pub replayed: bool,
}

impl BoundsCheck {
    pub fn violations(&self) -> usize {
        self.dual.violations() + self.primal.violations()
    }
}

/// Check `|mu(t) - muhat|^2 <= dual_bound` and `|x^c_t - xhat| <= primal_bound` on every
/// row, with the primal bound recomputed from the header constants.
pub fn check_trace(table: &TraceTable) -> Result<BoundsCheck> {
    let consts = RateConstants {
        q_d: table.meta_f64("q_d")?,
        q_p: table.meta_f64("q_p")?,
        n_agents: table.meta_f64("n_agents")? as usize,
        m_g: table.meta_f64("m_g")?,
        l_x: table.meta_f64("l_x")?,
        d_x: table.meta_f64("d_x")?,
        rho: table.meta_f64("rho")?,
        alpha: table.meta_f64("alpha")?,
    };
    let mut dual = BoundReport::new("dual_rate");
    let mut primal = BoundReport::new("primal_rate");
    let replayed = table.rows.iter().enumerate().all(|(i, r)| r.t == i as u64);
    let mut mismatches = 0;
    let mut b = table.meta_f64("mu0_err_sq").unwrap_or(f64::NAN);
    for r in &table.rows {
        if r.dual_err_reg.is_nan() {
            return Err(Error::param("dual_err_reg", format!("missing at round {}", r.t)));
        }
        if replayed && b.is_finite() {
            if (b - r.dual_bound).abs() > 1e-9 * b.abs().max(1e-300) {
                mismatches += 1;
            }
            b = consts.q_d * b + consts.dual_error_term(r.c_t);
        }
        dual.push(r.t, r.dual_err_reg * r.dual_err_reg, r.dual_bound * (1.0 + VIOLATION_RTOL));
        let primal_bound = crate::analysis::primal_total_bound(r.c_t, r.dual_err_reg, &consts)?;
        primal.push(r.t, r.primal_err_reg, primal_bound * (1.0 + VIOLATION_RTOL));
    }
    Ok(BoundsCheck { dual, primal, recursion_mismatches: mismatches, replayed })
}

fn bounds_check<W: Write>(a: BoundsArgs, out: &mut W) -> Result<i32> {
    let f = File::open(&a.trace).map_err(|e| Error::Config {
        path: a.trace.display().to_string(),
        line: 0,
        msg: format!("cannot read: {e}"),
    })?;
    let table = TraceTable::read(BufReader::new(f), &a.trace.display().to_string())?;
    let check = check_trace(&table)?;
    if let Some(dir) = &a.out {
        for rep in [&check.dual, &check.primal] {
            let (_, mut f) = create(dir, &format!("{}.csv", rep.name))?;
            rep.write_csv(&mut f)?;
            f.flush()?;
        }
    }
    writeln!(
        out,
        "rows={} dual_violations={} primal_violations={} min_slack_dual={:.3e} min_slack_primal={:.3e} recursion={}",
        table.rows.len(),
        check.dual.violations(),
        check.primal.violations(),
        check.dual.min_slack(),
        check.primal.min_slack(),
        if check.replayed {
            format!("replayed, {} mismatches", check.recursion_mismatches)
        } else {
            "not replayed (strided rows)".into()
        }
    )?;
    Ok(if check.violations() == 0 && check.recursion_mismatches == 0 { 0 } else { 1 })
}
