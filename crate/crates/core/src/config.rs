//! Plain-text `key = value` configuration.
//!
//! Values are numbers, words, or lists. List entries are separated by
//! whitespace or commas and may be wrapped in `[...]`; `;` separates matrix
//! rows. Everything after `#` on a line is ignored.
//!
//! ```text
//! # three scalar agents sharing one resource
//! agents = 3
//! local = log
//! local_weight = 1 2 3
//! coupling = 1 0 0; 0 1 0; 0 0 1
//! constraint_a = 1 1 1
//! constraint_b = 2
//! lo = 0
//! up = 5
//! slater = 0.1 0.1 0.1
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::experiments::FlowRoutingConfig;
use crate::problem::{Constraint, Coupling, LocalCost, ProblemBuilder, ProblemSpec};

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Parsed `key = value` file.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    path: String,
    entries: BTreeMap<String, Entry>,
}

impl KvConfig {
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fail = |msg: String| Error::Config { path: path.to_string(), line: k + 1, msg };
            let (key, value) =
                line.split_once('=').ok_or_else(|| fail(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(fail(format!("invalid key `{key}`")));
            }
            let entry = Entry { value: value.trim().to_string(), line: k + 1, used: false };
            if entries.insert(key.to_string(), entry).is_some() {
                return Err(fail(format!("`{key}` given twice")));
            }
        }
        Ok(Self { path: path.to_string(), entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            line: 0,
            msg: format!("cannot read: {e}"),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn fail(&self, key: &str, msg: String) -> Error {
        let line = self.entries.get(key).map_or(0, |e| e.line);
        Error::Config { path: self.path.clone(), line, msg: format!("`{key}`: {msg}") }
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            e.value.clone()
        })
    }

    pub fn str(&mut self, key: &str) -> Option<String> {
        self.raw(key)
    }

    pub fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| self.fail(key, format!("`{v}` is not a number"))),
        }
    }

    pub fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => {
                let clean = v.replace('_', "");
                let parsed = clean.parse::<u64>().ok().or_else(|| {
                    // allow 3e6 style integers
                    clean.parse::<f64>().ok().filter(|f| f.fract() == 0.0 && *f >= 0.0 && *f < 1.8e19).map(|f| f as u64)
                });
                parsed.map(Some).ok_or_else(|| self.fail(key, format!("`{v}` is not a non-negative integer")))
            }
        }
    }

    pub fn rows(&mut self, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let inner = v.trim().trim_start_matches('[').trim_end_matches(']');
        let mut rows = Vec::new();
        for row in inner.split(';') {
            let mut r = Vec::new();
            for tok in row.split(|c: char| c.is_whitespace() || c == ',' || c == '[' || c == ']') {
                if tok.is_empty() {
                    continue;
                }
                r.push(tok.parse::<f64>().map_err(|_| self.fail(key, format!("`{tok}` is not a number")))?);
            }
            rows.push(r);
        }
        Ok(Some(rows))
    }

    pub fn vec(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.rows(key)? {
            None => Ok(None),
            Some(rows) if rows.len() == 1 => Ok(rows.into_iter().next()),
            Some(_) => Err(self.fail(key, "expected a single list, found matrix rows".into())),
        }
    }

    pub fn matrix(&mut self, key: &str) -> Result<Option<DMatrix<f64>>> {
        let Some(rows) = self.rows(key)? else { return Ok(None) };
        let cols = rows[0].len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(self.fail(key, "rows must be non-empty and of equal length".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(Some(DMatrix::from_row_slice(rows.len(), cols, &flat)))
    }

    /// Scalar broadcast to `n` entries, or a list of exactly `n`.
    pub fn broadcast(&mut self, key: &str, n: usize) -> Result<Option<Vec<f64>>> {
        match self.vec(key)? {
            None => Ok(None),
            Some(v) if v.len() == 1 => Ok(Some(vec![v[0]; n])),
            Some(v) if v.len() == n => Ok(Some(v)),
            Some(v) => Err(self.fail(key, format!("expected 1 or {n} values, got {}", v.len()))),
        }
    }

    /// Error on any key not consumed by a reader.
    pub fn finish(&self) -> Result<()> {
        match self.entries.iter().find(|(_, e)| !e.used) {
            None => Ok(()),
            Some((k, e)) => {
                Err(Error::Config { path: self.path.clone(), line: e.line, msg: format!("unknown key `{k}`") })
            }
        }
    }
}

/// Apply overrides from `kv` to `base`. Paths are given as `;`-separated
/// rows of 1-based edge indices.
pub fn flow_config_from(kv: &mut KvConfig, base: FlowRoutingConfig) -> Result<FlowRoutingConfig> {
    let mut c = base;
    if let Some(rows) = kv.rows("paths")? {
        let mut paths = Vec::with_capacity(rows.len());
        for row in rows {
            let mut p = Vec::with_capacity(row.len());
            for e in row {
                if e.fract() != 0.0 || e < 1.0 {
                    return Err(kv.fail("paths", format!("edge index {e} is not a positive integer")));
                }
                p.push(e as usize);
            }
            paths.push(p);
        }
        c.paths = paths;
    }
    macro_rules! set_f64 {
        ($($field:ident),*) => {$(
            if let Some(v) = kv.f64(stringify!($field))? { c.$field = v; }
        )*};
    }
    macro_rules! set_u64 {
        ($($field:ident),*) => {$(
            if let Some(v) = kv.u64(stringify!($field))? {
                c.$field = v.try_into().map_err(|_| kv.fail(stringify!($field), format!("{v} is out of range")))?;
            }
        )*};
    }
    set_f64!(
        capacity,
        weight,
        congestion,
        lo,
        up,
        slater,
        rho_fraction,
        p_update,
        p_edge,
        stop_tol,
        reference_reg,
        reference_tol
    );
    set_u64!(num_edges, round_min, round_max, seed, horizon);
    if let Some(v) = kv.vec("sweep")? {
        c.sweep = v;
    }
    kv.finish()?;
    c.validate().map_err(|e| match e {
        Error::InvalidParameter { field, reason } => kv.fail(&field, reason),
        other => other,
    })?;
    Ok(c)
}

pub fn load_flow_config(path: &Path) -> Result<FlowRoutingConfig> {
    let mut kv = KvConfig::load(path)?;
    flow_config_from(&mut kv, FlowRoutingConfig::default())
}

/// Build a scalar-agent problem with log, quadratic, or linear local costs,
/// optional quadratic coupling and affine constraints. Dependencies are
/// taken from the nonzero pattern of the coupling and constraint matrices.
pub fn problem_from(kv: &mut KvConfig) -> Result<ProblemSpec> {
    let n = kv.u64("agents")?.ok_or_else(|| kv.fail("agents", "is required".into()))? as usize;
    if n == 0 {
        return Err(kv.fail("agents", "must be positive".into()));
    }
    let kind = kv.str("local").unwrap_or_else(|| "zero".into());
    let costs: Vec<LocalCost> = match kind.as_str() {
        "log" => {
            let w = kv.broadcast("local_weight", n)?.unwrap_or(vec![1.0; n]);
            w.into_iter().map(|weight| LocalCost::LogUtility { weight }).collect()
        }
        "quadratic" => {
            let p = kv.broadcast("local_p", n)?.unwrap_or(vec![1.0; n]);
            let q = kv.broadcast("local_q", n)?.unwrap_or(vec![0.0; n]);
            p.into_iter().zip(q).map(|(p, q)| LocalCost::Quadratic { p: vec![p], q: vec![q] }).collect()
        }
        "linear" => {
            let c = kv.broadcast("local_c", n)?.unwrap_or(vec![0.0; n]);
            c.into_iter().map(|c| LocalCost::Linear(vec![c])).collect()
        }
        "zero" => vec![LocalCost::Zero; n],
        other => return Err(kv.fail("local", format!("unknown kind `{other}` (log, quadratic, linear, zero)"))),
    };
    let mut b = ProblemBuilder::scalar(n);
    for (i, c) in costs.into_iter().enumerate() {
        b = b.local_cost(i, c);
    }
    let mut linked = vec![vec![false; n]; n];
    if let Some(q) = kv.matrix("coupling")? {
        if q.nrows() != n || q.ncols() != n {
            return Err(kv.fail("coupling", format!("expected {n}x{n}, got {}x{}", q.nrows(), q.ncols())));
        }
        for i in 0..n {
            for j in 0..n {
                linked[i][j] |= q[(i, j)] != 0.0;
            }
        }
        b = b.coupling(Coupling::Quadratic(q));
    }
    if let Some(a) = kv.matrix("constraint_a")? {
        if a.ncols() != n {
            return Err(kv.fail("constraint_a", format!("expected {n} columns, got {}", a.ncols())));
        }
        let rhs = kv
            .broadcast("constraint_b", a.nrows())?
            .ok_or_else(|| kv.fail("constraint_b", "is required with constraint_a".into()))?;
        for (r, &bj) in rhs.iter().enumerate() {
            let row: Vec<f64> = a.row(r).iter().copied().collect();
            for i in 0..n {
                for j in 0..n {
                    linked[i][j] |= row[i] != 0.0 && row[j] != 0.0;
                }
            }
            b = b.constraint(Constraint::Affine { a: row, b: bj });
        }
    } else if kv.contains("constraint_b") {
        return Err(kv.fail("constraint_b", "given without constraint_a".into()));
    }
    for (i, row) in linked.iter().enumerate() {
        for (j, &l) in row.iter().enumerate() {
            if l && i != j {
                b = b.depends(i, j);
            }
        }
    }
    let lo = kv.broadcast("lo", n)?.ok_or_else(|| kv.fail("lo", "is required".into()))?;
    let up = kv.broadcast("up", n)?.ok_or_else(|| kv.fail("up", "is required".into()))?;
    b = b.bounds(lo, up);
    if let Some(s) = kv.broadcast("slater", n)? {
        b = b.slater_point(s);
    }
    if let Some(f) = kv.f64("lower_bound")? {
        b = b.lower_bound(f);
    }
    kv.finish()?;
    b.build()
}

pub fn load_problem(path: &Path) -> Result<ProblemSpec> {
    let mut kv = KvConfig::load(path)?;
    problem_from(&mut kv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_matrices() {
        let mut kv = KvConfig::parse("a = 1.5 # note\nb = [1, 2 3]\nm = 1 2; 3 4\n", "t").unwrap();
        assert_eq!(kv.f64("a").unwrap(), Some(1.5));
        assert_eq!(kv.vec("b").unwrap(), Some(vec![1.0, 2.0, 3.0]));
        let m = kv.matrix("m").unwrap().unwrap();
        assert_eq!(m[(1, 0)], 3.0);
        kv.finish().unwrap();
    }

    #[test]
    fn errors_name_the_field() {
        let err = KvConfig::parse("x 1\n", "t").unwrap_err().to_string();
        assert!(err.contains("t:1"), "{err}");
        let mut kv = KvConfig::parse("capacity = abc\n", "t").unwrap();
        let err = flow_config_from(&mut kv, FlowRoutingConfig::default()).unwrap_err().to_string();
        assert!(err.contains("capacity"), "{err}");
        let mut kv = KvConfig::parse("capacty = 3\n", "t").unwrap();
        let err = flow_config_from(&mut kv, FlowRoutingConfig::default()).unwrap_err().to_string();
        assert!(err.contains("capacty"), "{err}");
        let mut kv = KvConfig::parse("p_edge = 2\n", "t").unwrap();
        let err = flow_config_from(&mut kv, FlowRoutingConfig::default()).unwrap_err().to_string();
        assert!(err.contains("p_edge"), "{err}");
    }

    #[test]
    fn flow_overrides() {
        let text = "paths = 1 2; 2\nnum_edges = 2\nhorizon = 3e6\nsweep = 0.5\n";
        let mut kv = KvConfig::parse(text, "t").unwrap();
        let c = flow_config_from(&mut kv, FlowRoutingConfig::default()).unwrap();
        assert_eq!(c.paths, vec![vec![1, 2], vec![2]]);
        assert_eq!(c.horizon, 3_000_000);
        assert_eq!(c.sweep, vec![0.5]);
    }

    #[test]
    fn problem_family() {
        let text = "agents = 3\nlocal = log\nlocal_weight = 1 2 3\ncoupling = 1 0 0; 0 1 0.5; 0 0.5 1\n\
                    constraint_a = 1 1 0\nconstraint_b = 2\nlo = 0\nup = 5\nslater = 0.1\n";
        let mut kv = KvConfig::parse(text, "t").unwrap();
        let spec = problem_from(&mut kv).unwrap();
        assert_eq!(spec.num_agents(), 3);
        assert_eq!(spec.num_constraints(), 1);
        assert_eq!(spec.neighbors(0), &[1]);
        assert_eq!(spec.neighbors(1), &[0, 2]);
        let mut kv = KvConfig::parse("agents = 2\nlocal = cubic\nlo = 0\nup = 1\n", "t").unwrap();
        assert!(problem_from(&mut kv).unwrap_err().to_string().contains("local"));
    }
}
