//! Experiment configs, orchestration and CSV output.
//!
//! Config files are flat UTF-8 `key = value` lines; `#` starts a comment,
//! lists are comma separated, and a later assignment of a key overrides an
//! earlier one.
//!
//! ```text
//! model = six-state
//! n_population = 100
//! n_items = 500
//! cache_size = 100
//! shuffle_size = 50
//! gmax = 3
//! init = single-fresh        # or: PD:1, I:99
//! t_max = 500
//! runs = 500
//! seed = 1
//! methods = classic, refined, popsim
//! measures = replication, coverage
//! out = fig7.csv
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::agent;
use crate::error::{Error, Result};
use crate::exact::exact_expected_series;
use crate::exec::Execution;
use crate::gossip::{build_model, GossipModel, GossipParams, ModelKind};
use crate::meanfield::classic_trajectory;
use crate::model::{CountVector, Measure};
use crate::popsim::simulate_measures;
use crate::refined::refined_trajectory_with;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("`{key}`: expected {expected}, got `{value}`")]
    TypeMismatch {
        key: String,
        expected: &'static str,
        value: String,
    },
    #[error("`{key}`: {message}")]
    InvariantViolation { key: String, message: String },
}

impl ConfigError {
    fn invariant(key: &str, message: impl Into<String>) -> Self {
        ConfigError::InvariantViolation {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Classic,
    Refined,
    Popsim,
    Agentsim,
    Exact,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Classic,
        Method::Refined,
        Method::Popsim,
        Method::Agentsim,
        Method::Exact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Classic => "classic",
            Method::Refined => "refined",
            Method::Popsim => "popsim",
            Method::Agentsim => "agentsim",
            Method::Exact => "exact",
        }
    }

    fn is_simulation(self) -> bool {
        matches!(self, Method::Popsim | Method::Agentsim)
    }
}

impl FromStr for Method {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MeasureKind {
    Replication,
    Coverage,
}

impl MeasureKind {
    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Replication => "replication",
            MeasureKind::Coverage => "coverage",
        }
    }
}

impl FromStr for MeasureKind {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "replication" => Ok(MeasureKind::Replication),
            "coverage" => Ok(MeasureKind::Coverage),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitSpec {
    /// One node holds the fresh item, every other node has never seen it.
    SingleFresh,
    /// Explicit `(state name, count)` pairs; unlisted states are empty.
    Counts(Vec<(String, u64)>),
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSpec::SingleFresh => f.write_str("single-fresh"),
            InitSpec::Counts(pairs) => {
                let parts: Vec<String> = pairs.iter().map(|(s, c)| format!("{s}:{c}")).collect();
                f.write_str(&parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ModelKind,
    pub params: GossipParams,
    pub init: InitSpec,
    pub t_max: usize,
    pub runs: usize,
    pub seed: u64,
    /// Sorted in column order.
    pub methods: Vec<Method>,
    /// Sorted in column order.
    pub measures: Vec<MeasureKind>,
    pub out: Option<PathBuf>,
}

const KEYS: [&str; 13] = [
    "model",
    "n_population",
    "n_items",
    "cache_size",
    "shuffle_size",
    "gmax",
    "init",
    "t_max",
    "runs",
    "seed",
    "methods",
    "measures",
    "out",
];

fn parse_int<T: FromStr>(
    key: &str,
    value: &str,
    expected: &'static str,
) -> std::result::Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::TypeMismatch {
        key: key.to_string(),
        expected,
        value: value.to_string(),
    })
}

fn parse_list<T: FromStr + Ord>(
    key: &str,
    value: &str,
    expected: &'static str,
) -> std::result::Result<Vec<T>, ConfigError> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parsed = item.parse().map_err(|_| ConfigError::TypeMismatch {
            key: key.to_string(),
            expected,
            value: item.to_string(),
        })?;
        out.push(parsed);
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn parse_init(value: &str) -> std::result::Result<InitSpec, ConfigError> {
    if value == "single-fresh" {
        return Ok(InitSpec::SingleFresh);
    }
    let mut pairs = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let mismatch = || ConfigError::TypeMismatch {
            key: "init".into(),
            expected: "`single-fresh` or a list of State:count",
            value: item.to_string(),
        };
        let (state, count) = item.split_once(':').ok_or_else(mismatch)?;
        let count = count.trim().parse().map_err(|_| mismatch())?;
        pairs.push((state.trim().to_string(), count));
    }
    Ok(InitSpec::Counts(pairs))
}

/// Parses a config, then applies `overrides` as if appended to it.
pub fn parse_config_with(
    text: &str,
    overrides: &[(&str, String)],
) -> std::result::Result<ExperimentConfig, ConfigError> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::TypeMismatch {
                key: format!("line {}", idx + 1),
                expected: "`key = value`",
                value: line.to_string(),
            });
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                line: idx + 1,
            });
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    for (key, value) in overrides {
        if !KEYS.contains(key) {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                line: 0,
            });
        }
        entries.push((key.to_string(), value.clone()));
    }
    let get = |key: &str| {
        entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    };
    let required =
        |key: &str| get(key).ok_or_else(|| ConfigError::invariant(key, "required key is missing"));

    let kind: ModelKind = required("model")?
        .parse()
        .map_err(|_| ConfigError::TypeMismatch {
            key: "model".into(),
            expected:
                "a model kind (two-state, three-state, six-state, full-replication, full-coverage)",
            value: get("model").unwrap_or_default().to_string(),
        })?;
    let population: u64 = parse_int(
        "n_population",
        required("n_population")?,
        "a positive integer",
    )?;
    let n_items: u32 = parse_int("n_items", required("n_items")?, "a positive integer")?;
    let cache_size: u32 = parse_int("cache_size", required("cache_size")?, "a positive integer")?;
    let shuffle_size: u32 = parse_int(
        "shuffle_size",
        required("shuffle_size")?,
        "a positive integer",
    )?;
    let gmax: u32 = parse_int("gmax", required("gmax")?, "a positive integer")?;
    let params =
        GossipParams::new(n_items, cache_size, shuffle_size, gmax, population).map_err(|e| {
            ConfigError::invariant(
                "n_items/cache_size/shuffle_size/gmax/n_population",
                e.to_string(),
            )
        })?;
    let init = parse_init(required("init")?)?;
    let t_max: usize = parse_int("t_max", required("t_max")?, "a non-negative integer")?;
    let runs: usize =
        get("runs").map_or(Ok(100), |v| parse_int("runs", v, "a positive integer"))?;
    let seed: u64 = get("seed").map_or(Ok(0), |v| {
        parse_int("seed", v, "an unsigned 64-bit integer")
    })?;
    let methods = get("methods").map_or(Ok(vec![Method::Classic]), |v| {
        parse_list("methods", v, "classic, refined, popsim, agentsim or exact")
    })?;
    let measures = get("measures").map_or(Ok(vec![MeasureKind::Replication]), |v| {
        parse_list("measures", v, "replication or coverage")
    })?;
    let out = get("out").filter(|v| !v.is_empty()).map(PathBuf::from);

    let config = ExperimentConfig {
        kind,
        params,
        init,
        t_max,
        runs,
        seed,
        methods,
        measures,
        out,
    };
    config.validate()?;
    Ok(config)
}

pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, ConfigError> {
    parse_config_with(text, &[])
}

/// Initial counts for `kind` with population `n`, per `init`.
///
/// `single-fresh` puts the fresh holder in `D` (`PD` for the six-state
/// model) and everybody else in `I` (in `O` for the replication-only
/// models). The delay-structured models spread the other nodes over the
/// delay classes round-robin, and the holder takes the next round-robin
/// slot.
pub fn initial_counts(
    kind: ModelKind,
    params: &GossipParams,
    init: &InitSpec,
) -> std::result::Result<CountVector, ConfigError> {
    let n = params.population;
    let names = kind.state_names(params.gmax);
    let mut counts = vec![0u64; names.len()];
    match init {
        InitSpec::SingleFresh => {
            let idx = |name: &str| names.iter().position(|s| s == name).expect("known state");
            match kind {
                ModelKind::TwoState => {
                    counts[idx("D")] = 1;
                    counts[idx("O")] = n - 1;
                }
                ModelKind::ThreeState => {
                    counts[idx("D")] = 1;
                    counts[idx("I")] = n - 1;
                }
                ModelKind::SixState => {
                    counts[idx("PD")] = 1;
                    counts[idx("I")] = n - 1;
                }
                ModelKind::FullReplication | ModelKind::FullCoverage => {
                    let groups = u64::from(params.gmax) + 1;
                    let others = if kind == ModelKind::FullReplication {
                        "O"
                    } else {
                        "I"
                    };
                    for d in 0..groups {
                        counts[idx(&format!("{others}{d}"))] =
                            (n - 1) / groups + u64::from(d < (n - 1) % groups);
                    }
                    counts[idx(&format!("D{}", (n - 1) % groups))] = 1;
                }
            }
        }
        InitSpec::Counts(pairs) => {
            for (state, c) in pairs {
                let Some(i) = names.iter().position(|s| s == state) else {
                    return Err(ConfigError::invariant(
                        "init",
                        format!(
                            "unknown state `{state}` for {kind} (states: {})",
                            names.join(", ")
                        ),
                    ));
                };
                counts[i] += c;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    if total != n {
        return Err(ConfigError::invariant(
            "init",
            format!("initial counts sum to {total}, expected n_population = {n}"),
        ));
    }
    Ok(CountVector::new(counts).expect("non-empty"))
}

impl ExperimentConfig {
    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        initial_counts(self.kind, &self.params, &self.init)?;
        if self.runs == 0 {
            return Err(ConfigError::invariant(
                "runs",
                "at least one run is required",
            ));
        }
        if self.methods.contains(&Method::Agentsim) && self.init != InitSpec::SingleFresh {
            return Err(ConfigError::invariant(
                "methods",
                "agentsim only supports init = single-fresh",
            ));
        }
        if self.measures.contains(&MeasureKind::Coverage) && !self.kind.has_coverage() {
            return Err(ConfigError::invariant(
                "measures",
                format!("{} does not track coverage", self.kind),
            ));
        }
        Ok(())
    }

    pub fn initial_counts(&self) -> CountVector {
        initial_counts(self.kind, &self.params, &self.init).expect("validated")
    }
}

pub const PRESETS: [(&str, &str); 5] = [
    ("fig1", include_str!("../presets/fig1.cfg")),
    ("fig3", include_str!("../presets/fig3.cfg")),
    ("fig5", include_str!("../presets/fig5.cfg")),
    ("fig7", include_str!("../presets/fig7.cfg")),
    ("fig8", include_str!("../presets/fig8.cfg")),
];

/// Text of a shipped preset, by name (`fig7`) or file name (`fig7.cfg`).
pub fn preset(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".cfg").unwrap_or(name);
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

/// Columns of results aligned on `t = 0..=t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub t: Vec<usize>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl ResultTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn header(&self) -> String {
        std::iter::once("t")
            .chain(self.columns.iter().map(|(n, _)| n.as_str()))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for (row, t) in self.t.iter().enumerate() {
            out.push_str(&t.to_string());
            for (_, values) in &self.columns {
                out.push(',');
                out.push_str(&format_float(values[row]));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidParams(format!("malformed CSV: {msg}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let names: Vec<&str> = header.split(',').collect();
        if names.first() != Some(&"t") {
            return Err(bad("first column must be `t`".into()));
        }
        let mut table = ResultTable {
            t: Vec::new(),
            columns: names[1..]
                .iter()
                .map(|n| (n.to_string(), Vec::new()))
                .collect(),
        };
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != names.len() {
                return Err(bad(format!("row {} has {} fields", i + 1, fields.len())));
            }
            table.t.push(
                fields[0]
                    .parse()
                    .map_err(|_| bad(format!("bad t `{}`", fields[0])))?,
            );
            for ((_, col), f) in table.columns.iter_mut().zip(&fields[1..]) {
                col.push(f.parse().map_err(|_| bad(format!("bad value `{f}`")))?);
            }
        }
        Ok(table)
    }
}

/// `%.17g`: 17 significant digits, trailing zeros trimmed, exponent form
/// outside `1e-5 ≤ |x| < 1e17`.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-5..17).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{:.*}", (16 - exp) as usize, x))
    }
}

fn measure_for(model: &GossipModel, kind: MeasureKind) -> Result<Measure> {
    match kind {
        MeasureKind::Replication => Ok(model.replication_measure()),
        MeasureKind::Coverage => model.coverage_measure(),
    }
}

pub fn run(config: &ExperimentConfig) -> Result<ResultTable> {
    run_with(config, Execution::default())
}

/// Runs every requested method and assembles the columns in the fixed
/// order: method (classic, refined, popsim mean, popsim std, agentsim
/// mean, agentsim std, exact), then measure (replication, coverage).
pub fn run_with(config: &ExperimentConfig, exec: Execution) -> Result<ResultTable> {
    let model = build_model(config.kind, &config.params)?;
    let counts0 = config.initial_counts();
    let mu0 = counts0.occupancy();
    let measures: Vec<Measure> = config
        .measures
        .iter()
        .map(|&m| measure_for(&model, m))
        .collect::<Result<_>>()?;
    let n = config.params.population;
    let t_max = config.t_max;

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    let mut push = |token: &str, series: Vec<Vec<f64>>| {
        for (kind, values) in config.measures.iter().zip(series) {
            columns.push((format!("{token}_{}", kind.name()), values));
        }
    };

    for &method in &config.methods {
        match method {
            Method::Classic => {
                let traj = classic_trajectory(&model, &mu0, t_max)?;
                push(
                    "classic",
                    measures.iter().map(|h| traj.measure_series(h)).collect(),
                );
            }
            Method::Refined => {
                let traj = refined_trajectory_with(&model, &mu0, t_max, exec)?;
                push(
                    "refined",
                    measures.iter().map(|h| traj.measure_series(h, n)).collect(),
                );
            }
            Method::Popsim => {
                let stats = simulate_measures(
                    &model,
                    &counts0,
                    t_max,
                    config.runs,
                    config.seed,
                    &measures,
                    exec,
                );
                push(
                    "popsim_mean",
                    stats.iter().map(|s| s.mean.clone()).collect(),
                );
                push("popsim_std", stats.iter().map(|s| s.std.clone()).collect());
            }
            Method::Agentsim => {
                let stats = agent::run_experiment_with(
                    &config.params,
                    t_max,
                    config.runs,
                    config.seed,
                    exec,
                )?;
                let pick = |k: &MeasureKind| match k {
                    MeasureKind::Replication => &stats.replication,
                    MeasureKind::Coverage => &stats.coverage,
                };
                push(
                    "agentsim_mean",
                    config
                        .measures
                        .iter()
                        .map(|k| pick(k).mean.clone())
                        .collect(),
                );
                push(
                    "agentsim_std",
                    config
                        .measures
                        .iter()
                        .map(|k| pick(k).std.clone())
                        .collect(),
                );
            }
            Method::Exact => {
                // The shipped measures are linear, so h(E[M]) = E[h(M)].
                debug_assert!(measures.iter().all(Measure::is_linear));
                let series = exact_expected_series(&model, &counts0, t_max)?;
                push(
                    "exact",
                    measures
                        .iter()
                        .map(|h| series.iter().map(|e| h.value(e)).collect())
                        .collect(),
                );
            }
        }
    }

    let t = if columns.is_empty() {
        Vec::new()
    } else {
        (0..=t_max).collect()
    };
    Ok(ResultTable { t, columns })
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidParams(format!("{}: {e}", path.display()))
}

pub fn write_csv(table: &ResultTable, path: &Path) -> Result<()> {
    fs::write(path, table.to_csv()).map_err(|e| io_error(path, e))
}

/// A matplotlib script plotting every measure of the CSV at `csv_path`;
/// simulation means get standard-deviation bars.
pub fn plot_script(table: &ResultTable, csv_path: &Path) -> String {
    let mut measures: Vec<&str> = Vec::new();
    for (name, _) in &table.columns {
        let m = name.rsplit('_').next().unwrap_or(name);
        if !measures.contains(&m) {
            measures.push(m);
        }
    }
    let mut s = String::new();
    s.push_str("import csv\nimport matplotlib.pyplot as plt\n\n");
    s.push_str(&format!(
        "with open({:?}) as f:\n",
        csv_path.display().to_string()
    ));
    s.push_str("    rows = list(csv.DictReader(f))\n");
    s.push_str("t = [int(r['t']) for r in rows]\n\n\ndef col(name):\n    return [float(r[name]) for r in rows]\n\n\n");
    s.push_str(&format!(
        "fig, axes = plt.subplots(1, {}, figsize=(6 * {}, 4), squeeze=False)\n",
        measures.len().max(1),
        measures.len().max(1)
    ));
    for (i, m) in measures.iter().enumerate() {
        s.push_str(&format!("ax = axes[0][{i}]\n"));
        for method in Method::ALL {
            let mean = if method.is_simulation() {
                format!("{}_mean_{m}", method.name())
            } else {
                format!("{}_{m}", method.name())
            };
            if table.column(&mean).is_none() {
                continue;
            }
            if method.is_simulation() {
                let std = format!("{}_std_{m}", method.name());
                s.push_str(&format!(
                    "ax.errorbar(t, col({mean:?}), yerr=col({std:?}), errorevery=max(1, len(t) // 25), capsize=2, label={:?})\n",
                    method.name()
                ));
            } else {
                s.push_str(&format!(
                    "ax.plot(t, col({mean:?}), label={:?})\n",
                    method.name()
                ));
            }
        }
        s.push_str(&format!(
            "ax.set_xlabel('t')\nax.set_ylabel({m:?})\nax.legend()\n"
        ));
    }
    s.push_str("fig.tight_layout()\nplt.show()\n");
    s
}

pub fn write_plot_script(table: &ResultTable, csv_path: &Path, path: &Path) -> Result<()> {
    fs::write(path, plot_script(table, csv_path)).map_err(|e| io_error(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub label: String,
    pub population: u64,
    pub seconds: f64,
}

/// Best-of-`reps` wall-clock time of `f`.
pub fn time_min<T>(reps: usize, mut f: impl FnMut() -> T) -> f64 {
    (0..reps.max(1))
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(f());
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Classic and refined six-state analysis over 1500 steps, for each
/// population size. Neither depends on `N` beyond the initial occupancy.
pub fn timing_report(populations: &[u64], reps: usize, exec: Execution) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    for &population in populations {
        let params = GossipParams::new(500, 100, 50, 9, population)?;
        let model = build_model(ModelKind::SixState, &params)?;
        let mu0 = initial_counts(ModelKind::SixState, &params, &InitSpec::SingleFresh)
            .map_err(|e| Error::InvalidParams(e.to_string()))?
            .occupancy();
        let cov = model.coverage_measure()?;
        let classic = time_min(reps, || {
            classic_trajectory(&model, &mu0, 1500).map(|tr| tr.measure_series(&cov))
        });
        let refined = time_min(reps, || {
            refined_trajectory_with(&model, &mu0, 1500, exec)
                .map(|tr| tr.measure_series(&cov, population))
        });
        rows.push(TimingRow {
            label: "classic mean field".into(),
            population,
            seconds: classic,
        });
        rows.push(TimingRow {
            label: "refined mean field".into(),
            population,
            seconds: refined,
        });
    }
    Ok(rows)
}
