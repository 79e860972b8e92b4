//! Command-line front end.
//!
//! `arw <command> [--key value]... [--config FILE]`. Values come from the
//! optional config file (flat `key = value` lines, or the JSON summary of an
//! earlier run) and are overridden by flags. Every command writes a CSV
//! table (to `--out`, or stdout) and, when `--out` or `--summary` is given,
//! a JSON summary with the effective parameters and a content hash of the
//! CSV.
//!
//! Exit status: 0 on success, 1 on a failed check or runtime error, 2 on a
//! configuration error, 3 when more than 10% of the trials hit the cap.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::experiments::{
    self, bisect_crossing, ek_curve, estimate_rho_c, explode_table, fit_decay, nucleate_table,
    EkCurveConfig, ExperimentError, ExplodeConfig, NucleateConfig, RhoCConfig, SuiteReport,
};
use crate::initdist::{EnvSampler, EnvSpec, InitError, SleepMix};
use crate::model::{Configuration, Interval};
use crate::rng::{derive_seed, MIXER_ID};
use crate::stabilizer::{stabilize, Policy, DEFAULT_CAP};
use crate::stacks::{InstructionSource, Params, StackError};
use crate::stats::Proportion;

pub const USAGE: &str = "\
usage: arw <command> [--key value]... [--config FILE]

commands:
  stabilize     stabilize one configuration (--input FILE or a sampled law)
  ek-scan       estimate P(E_k) over a grid of k
  explode       estimate P(activity reaches both ends of [-R, R])
  nucleate      nucleation trials: excursion then midstream scans
  rhoc          bisect for the density where P(E_k) crosses 1/2
  check-lemmas  exact checks of the stabilization lemmas
  selftest      quick internal consistency checks

common keys: seed, workers (default $ARW_WORKERS), cap, out, summary, config
initial law: kind (iid|markov|periodic), rho, marginal, truncation, support,
             transition, state-rho, state-support, pattern, q
";

const ENV_KEYS: &[&str] = &[
    "kind",
    "marginal",
    "rho",
    "truncation",
    "support",
    "transition",
    "state-rho",
    "state-support",
    "pattern",
];
const PLUMBING_KEYS: &[&str] = &["config", "out", "summary", "workers"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("{0}")]
    Output(String),
    #[error(transparent)]
    Run(ExperimentError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Output(_) | CliError::Run(_) => 1,
        }
    }
}

fn config_err(key: &str, msg: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

impl From<InitError> for CliError {
    fn from(e: InitError) -> Self {
        match e {
            InitError::InvalidSpec { key, msg } => CliError::Config { key, msg },
            other => CliError::Run(other.into()),
        }
    }
}

impl From<StackError> for CliError {
    fn from(e: StackError) -> Self {
        config_err("lambda", e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Invalid { key, msg } => CliError::Config { key, msg },
            ExperimentError::Init(e) => e.into(),
            ExperimentError::Stack(e) => e.into(),
            other => CliError::Run(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Stabilize,
    EkScan,
    Explode,
    Nucleate,
    Rhoc,
    CheckLemmas,
    Selftest,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Stabilize,
        Command::EkScan,
        Command::Explode,
        Command::Nucleate,
        Command::Rhoc,
        Command::CheckLemmas,
        Command::Selftest,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Stabilize => "stabilize",
            Command::EkScan => "ek-scan",
            Command::Explode => "explode",
            Command::Nucleate => "nucleate",
            Command::Rhoc => "rhoc",
            Command::CheckLemmas => "check-lemmas",
            Command::Selftest => "selftest",
        }
    }

    pub fn parse(s: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == s)
    }

    fn keys(&self) -> Vec<&'static str> {
        let own: &[&str] = match self {
            Command::Stabilize => &["input", "lo", "hi", "lambda", "policy", "q", "seed", "cap"],
            Command::EkScan => &["lambda", "q", "k", "kmin", "kmax", "step", "trials", "seed", "cap"],
            Command::Explode => &["lambda", "q", "r", "trials", "seed", "cap"],
            Command::Nucleate => &["lambda", "q", "m", "K", "trials", "seed", "cap"],
            Command::Rhoc => &[
                "lambda", "k", "q", "rho-lo", "rho-hi", "trials", "tol", "seed", "cap",
            ],
            Command::CheckLemmas => &["seed", "instances"],
            Command::Selftest => &["seed"],
        };
        let mut keys: Vec<&str> = own.iter().chain(PLUMBING_KEYS).copied().collect();
        if matches!(
            self,
            Command::Stabilize | Command::EkScan | Command::Explode | Command::Nucleate
        ) {
            keys.extend(ENV_KEYS);
        }
        keys
    }
}

/// Parameters of one run: config-file values overridden by flags. Every
/// value read through the typed getters (defaults included) is recorded as
/// effective, and the effective set is what the summary stores.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    values: BTreeMap<String, String>,
    effective: BTreeMap<String, String>,
}

impl RunConfig {
    /// Parses `<command> [--key value | --key=value]...`.
    pub fn from_args(args: &[String]) -> Result<Self, CliError> {
        let Some(name) = args.first() else {
            return Err(CliError::Usage(format!("missing command\n\n{USAGE}")));
        };
        let command = Command::parse(name)
            .ok_or_else(|| CliError::Usage(format!("unknown command `{name}`\n\n{USAGE}")))?;
        let allowed = command.keys();
        let mut flags = BTreeMap::new();
        let mut i = 1;
        while i < args.len() {
            let arg = &args[i];
            let Some(body) = arg.strip_prefix("--") else {
                return Err(config_err(arg, "expected a --key flag"));
            };
            let (key, value) = match body.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    i += 1;
                    let v = args
                        .get(i)
                        .ok_or_else(|| config_err(body, "flag needs a value"))?;
                    (body.to_string(), v.clone())
                }
            };
            if !allowed.contains(&key.as_str()) {
                return Err(config_err(&key, format!("unknown flag for `{}`", command.name())));
            }
            flags.insert(key, value);
            i += 1;
        }
        let mut values = match flags.get("config") {
            Some(path) => read_config_file(path, &allowed)?,
            None => BTreeMap::new(),
        };
        values.extend(flags);
        Ok(RunConfig {
            command,
            values,
            effective: BTreeMap::new(),
        })
    }

    pub fn effective(&self) -> &BTreeMap<String, String> {
        &self.effective
    }

    fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn plumbing(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn record(&mut self, key: &str, value: String) {
        self.effective.insert(key.to_string(), value);
    }

    fn parsed<T: std::str::FromStr + ToString>(
        &mut self,
        key: &str,
        default: Option<T>,
        what: &str,
    ) -> Result<T, CliError> {
        let v = match self.values.get(key) {
            Some(raw) => raw
                .trim()
                .parse::<T>()
                .map_err(|_| config_err(key, format!("expected {what}, got {raw:?}")))?,
            None => default.ok_or_else(|| config_err(key, "required"))?,
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    fn f64(&mut self, key: &str, default: Option<f64>) -> Result<f64, CliError> {
        let v = self.parsed(key, default, "a number")?;
        if !v.is_finite() {
            return Err(config_err(key, "must be finite"));
        }
        Ok(v)
    }

    fn u64(&mut self, key: &str, default: Option<u64>) -> Result<u64, CliError> {
        self.parsed(key, default, "a non-negative integer")
    }

    fn i64(&mut self, key: &str, default: Option<i64>) -> Result<i64, CliError> {
        self.parsed(key, default, "an integer")
    }

    fn string(&mut self, key: &str, default: Option<&str>) -> Result<String, CliError> {
        self.parsed(key, default.map(str::to_string), "a string")
    }

    fn u64_list(&mut self, key: &str, default: Option<&str>) -> Result<Vec<u64>, CliError> {
        let raw = match self.values.get(key) {
            Some(r) => r.clone(),
            None => default.ok_or_else(|| config_err(key, "required"))?.to_string(),
        };
        let list = raw
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| config_err(key, format!("bad integer {t:?} in list")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.record(key, join(&list));
        Ok(list)
    }

    fn env_spec(&mut self) -> Result<EnvSpec, CliError> {
        let given: BTreeMap<String, String> = self
            .values
            .iter()
            .filter(|(k, _)| ENV_KEYS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let spec = EnvSpec::from_params(&given)?;
        for (k, v) in spec.to_params() {
            self.record(&k, v);
        }
        Ok(spec)
    }

    fn sleep_mix(&mut self) -> Result<SleepMix, CliError> {
        let q = self.f64("q", Some(1.0))?;
        Ok(SleepMix::new(q)?)
    }

    fn seed(&mut self) -> Result<u64, CliError> {
        self.u64("seed", Some(1))
    }

    fn cap(&mut self) -> Result<u64, CliError> {
        let cap = self.u64("cap", Some(DEFAULT_CAP))?;
        if cap == 0 {
            return Err(config_err("cap", "must be positive"));
        }
        Ok(cap)
    }

    fn trials(&mut self) -> Result<u64, CliError> {
        let t = self.u64("trials", Some(500))?;
        if t == 0 {
            return Err(config_err("trials", "must be positive"));
        }
        Ok(t)
    }

    /// `--workers`, else `$ARW_WORKERS`, else the available parallelism.
    fn workers(&self) -> Result<usize, CliError> {
        let (raw, key) = match self.plumbing("workers") {
            Some(w) => (Some(w.to_string()), "workers"),
            None => (std::env::var("ARW_WORKERS").ok(), "ARW_WORKERS"),
        };
        match raw {
            Some(w) => match w.trim().parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(config_err(key, format!("expected a positive integer, got {w:?}"))),
            },
            None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Reads `key = value` lines, or the `params` object of a JSON summary.
fn read_config_file(path: &str, allowed: &[&str]) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err("config", format!("cannot read {path}: {e}")))?;
    let mut out = BTreeMap::new();
    if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| config_err("config", format!("{path}: bad JSON: {e}")))?;
        let params = v
            .get("params")
            .and_then(Value::as_object)
            .ok_or_else(|| config_err("config", format!("{path}: no `params` object")))?;
        for (k, val) in params {
            let s = match val {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.insert(k.clone(), s);
        }
    } else {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                config_err("config", format!("{path}:{}: expected `key = value`", n + 1))
            })?;
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    if let Some(bad) = out.keys().find(|k| !allowed.contains(&k.as_str()) || *k == "config") {
        return Err(config_err(bad, format!("unknown key in {path}")));
    }
    Ok(out)
}

/// SHA-256 of `"blob <len>\0" ++ content`, hex encoded.
pub fn blob_sha256(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

/// What a command produced.
struct Output {
    csv: String,
    /// Lines printed to stdout regardless of `--out`.
    report: Vec<String>,
    results: Value,
    capped: u64,
    total: u64,
    ok: bool,
}

impl Output {
    fn table(csv: String, results: Value, capped: u64, total: u64) -> Self {
        Output {
            csv,
            report: Vec::new(),
            results,
            capped,
            total,
            ok: true,
        }
    }
}

/// Runs the CLI on `args` (without the program name), printing to the
/// process's stdout and stderr. Returns the exit status.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let args: Vec<String> = args.into_iter().collect();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(&args, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit output streams.
pub fn run_with(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if matches!(args.first().map(String::as_str), Some("-h" | "--help" | "help")) {
        let _ = out.write_all(USAGE.as_bytes());
        return 0;
    }
    match execute(args, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(args: &[String], stdout: &mut dyn Write) -> Result<i32, CliError> {
    let mut cfg = RunConfig::from_args(args)?;
    let workers = cfg.workers()?;
    let output = match cfg.command {
        Command::Stabilize => cmd_stabilize(&mut cfg)?,
        Command::EkScan => cmd_ek_scan(&mut cfg, workers)?,
        Command::Explode => cmd_explode(&mut cfg, workers)?,
        Command::Nucleate => cmd_nucleate(&mut cfg, workers)?,
        Command::Rhoc => cmd_rhoc(&mut cfg, workers)?,
        Command::CheckLemmas => cmd_check_lemmas(&mut cfg)?,
        Command::Selftest => cmd_selftest(&mut cfg)?,
    };
    let write_err = |e: std::io::Error| CliError::Output(e.to_string());
    for line in &output.report {
        writeln!(stdout, "{line}").map_err(write_err)?;
    }
    let out_path = cfg.plumbing("out").map(str::to_string);
    match &out_path {
        Some(p) => std::fs::write(p, &output.csv)
            .map_err(|e| CliError::Output(format!("cannot write {p}: {e}")))?,
        None if output.report.is_empty() => {
            stdout.write_all(output.csv.as_bytes()).map_err(write_err)?
        }
        None => {}
    }
    let summary_path = cfg
        .plumbing("summary")
        .map(str::to_string)
        .or_else(|| out_path.as_ref().map(|p| format!("{p}.json")));
    if let Some(p) = summary_path {
        let seed = cfg.effective().get("seed").cloned();
        let summary = json!({
            "command": cfg.command.name(),
            "params": cfg.effective(),
            "seed": seed,
            "version": env!("CARGO_PKG_VERSION"),
            "mixer": MIXER_ID,
            "csv": {
                "path": out_path,
                "bytes": output.csv.len(),
                "sha256_blob": blob_sha256(output.csv.as_bytes()),
            },
            "results": output.results,
            "capped": output.capped,
            "trials": output.total,
        });
        let text = serde_json::to_string_pretty(&summary).expect("serializable") + "\n";
        std::fs::write(&p, text).map_err(|e| CliError::Output(format!("cannot write {p}: {e}")))?;
    }
    if output.total > 0 && output.capped * 10 > output.total {
        return Ok(3);
    }
    Ok(if output.ok { 0 } else { 1 })
}

fn cmd_stabilize(cfg: &mut RunConfig) -> Result<Output, CliError> {
    let seed = cfg.seed()?;
    let cap = cfg.cap()?;
    let lambda = cfg.f64("lambda", Some(1.0))?;
    let params = Params::new(lambda)?;
    let sigma = if cfg.has("input") {
        let path = cfg.string("input", None)?;
        let text = std::fs::read_to_string(&path)
            .map_err(|e| config_err("input", format!("cannot read {path}: {e}")))?;
        Configuration::from_text(&text).map_err(|e| config_err("input", format!("{path}: {e}")))?
    } else {
        let lo = cfg.i64("lo", None)?;
        let hi = cfg.i64("hi", None)?;
        if lo > hi {
            return Err(config_err("hi", "must be at least lo"));
        }
        let env = cfg.env_spec()?;
        let mix = cfg.sleep_mix()?;
        EnvSampler::new(&env)?.sample(mix, Interval { lo: lo - 1, hi: hi + 1 }, derive_seed(seed, 1, 0))
    };
    let window = sigma.window();
    if window.len() < 3 {
        return Err(config_err("input", "configuration needs at least three sites"));
    }
    let lo = cfg.i64("lo", Some(window.lo + 1))?;
    let hi = cfg.i64("hi", Some(window.hi - 1))?;
    let v = Interval::new(lo, hi).map_err(|e| config_err("hi", e.to_string()))?;
    if !window.contains_interval(&v.widen(1)) {
        return Err(config_err("lo", format!("{v} plus one site each side must lie in {window}")));
    }
    let policy = match cfg.string("policy", Some("fifo"))?.as_str() {
        "fifo" => Policy::Fifo,
        "leftmost" => Policy::Leftmost,
        "rightmost" => Policy::Rightmost,
        "random" => Policy::RandomQueue {
            seed: derive_seed(seed, 3, 0),
        },
        other => {
            return Err(config_err(
                "policy",
                format!("unknown policy {other:?} (fifo, leftmost, rightmost, random)"),
            ))
        }
    };
    let source = InstructionSource::random(derive_seed(seed, 2, 0), params);
    let rep = stabilize(&sigma, &source, v, policy, cap).map_err(ExperimentError::from)?;
    let mut csv = String::from("site,initial,final,odometer\n");
    for x in window.sites() {
        let _ = writeln!(
            csv,
            "{x},{},{},{}",
            sigma.get(x),
            rep.final_config.get(x),
            rep.odometer.get(x)
        );
    }
    let results = json!({
        "interval": [v.lo, v.hi],
        "topplings": rep.topplings,
        "capped": rep.capped,
        "visited": rep.visited.len(),
        "arrived_left": rep.arrived(v.lo - 1),
        "arrived_right": rep.arrived(v.hi + 1),
    });
    Ok(Output::table(csv, results, rep.capped as u64, 1))
}

fn cmd_ek_scan(cfg: &mut RunConfig, workers: usize) -> Result<Output, CliError> {
    let seed = cfg.seed()?;
    let cap = cfg.cap()?;
    let lambda = cfg.f64("lambda", Some(1.0))?;
    let env = cfg.env_spec()?;
    let mix = cfg.sleep_mix()?;
    let trials = cfg.trials()?;
    let k_grid = if cfg.has("k") {
        cfg.u64_list("k", None)?
    } else {
        let get = |key: &str, d: u64| -> Result<u64, CliError> {
            match cfg.values.get(key) {
                Some(raw) => raw
                    .trim()
                    .parse()
                    .map_err(|_| config_err(key, format!("expected a non-negative integer, got {raw:?}"))),
                None => Ok(d),
            }
        };
        let (kmin, kmax, step) = (get("kmin", 25)?, get("kmax", 150)?, get("step", 25)?);
        if step == 0 {
            return Err(config_err("step", "must be positive"));
        }
        if kmin == 0 || kmin > kmax {
            return Err(config_err("kmin", "need 1 ≤ kmin ≤ kmax"));
        }
        let grid: Vec<u64> = (kmin..=kmax).step_by(step as usize).collect();
        cfg.record("k", join(&grid));
        grid
    };
    let rows = ek_curve(&EkCurveConfig {
        lambda,
        env,
        mix,
        k_grid,
        trials,
        seed,
        cap,
        workers,
    })?;
    let mut csv = String::from("k,trials,successes,p_hat,ci_lo,ci_hi,capped\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.k, r.trials, r.successes, r.p_hat, r.ci_lo, r.ci_hi, r.capped
        );
    }
    let fit = fit_decay(&rows).ok();
    let capped = rows.iter().map(|r| r.capped).sum();
    let total = rows.iter().map(|r| r.trials).sum();
    Ok(Output::table(csv, json!({ "decay_fit": fit }), capped, total))
}

fn cmd_explode(cfg: &mut RunConfig, workers: usize) -> Result<Output, CliError> {
    let seed = cfg.seed()?;
    let cap = cfg.cap()?;
    let lambda = cfg.f64("lambda", Some(1.0))?;
    let env = cfg.env_spec()?;
    let mix = cfg.sleep_mix()?;
    let trials = cfg.trials()?;
    let r_grid = cfg.u64_list("r", Some("50,100,200"))?;
    let rows = explode_table(&ExplodeConfig {
        lambda,
        env,
        mix,
        r_grid,
        trials,
        seed,
        cap,
        workers,
    })?;
    let mut csv = String::from("R,trials,reached_both,stabilized,capped,p_hat,ci_lo,ci_hi\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.r, r.trials, r.reached_both, r.stabilized, r.capped, r.p_hat, r.ci_lo, r.ci_hi
        );
    }
    let capped = rows.iter().map(|r| r.capped).sum();
    let total = rows.iter().map(|r| r.trials).sum();
    Ok(Output::table(csv, Value::Null, capped, total))
}

fn cmd_nucleate(cfg: &mut RunConfig, workers: usize) -> Result<Output, CliError> {
    let seed = cfg.seed()?;
    let cap = cfg.cap()?;
    let lambda = cfg.f64("lambda", Some(1.0))?;
    let env = cfg.env_spec()?;
    let mix = cfg.sleep_mix()?;
    let trials = cfg.trials()?;
    let m_grid = cfg.u64_list("m", Some("3"))?;
    let k_max = cfg.u64("K", Some(300))?;
    let rows = nucleate_table(&NucleateConfig {
        lambda,
        env,
        mix,
        m_grid,
        k_max,
        trials,
        seed,
        cap,
        workers,
    })?;
    let mut csv = String::from("m,K,trials,covered,success,p_hat,ci_lo,ci_hi\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.m, r.k_max, r.trials, r.covered, r.success, r.p_hat, r.ci_lo, r.ci_hi
        );
    }
    let capped = rows.iter().map(|r| r.capped).sum();
    let total = rows.iter().map(|r| r.trials).sum();
    let per_m: Vec<Value> = rows.iter().map(|r| json!({ "m": r.m, "capped": r.capped })).collect();
    Ok(Output::table(csv, json!({ "capped_per_m": per_m }), capped, total))
}

fn cmd_rhoc(cfg: &mut RunConfig, workers: usize) -> Result<Output, CliError> {
    let seed = cfg.seed()?;
    let cap = cfg.cap()?;
    let lambda = cfg.f64("lambda", Some(1.0))?;
    let k = cfg.u64("k", Some(100))?;
    let mix = cfg.sleep_mix()?;
    let rho_lo = cfg.f64("rho-lo", Some(0.01))?;
    let rho_hi = cfg.f64("rho-hi", Some(1.5))?;
    let trials = cfg.trials()?;
    let tol = cfg.f64("tol", Some(0.01))?;
    let est = estimate_rho_c(&RhoCConfig {
        lambda,
        k,
        mix,
        rho_lo,
        rho_hi,
        trials,
        tol,
        seed,
        cap,
        workers,
    })?;
    let mut csv = String::from("iter,rho_lo,rho_hi,rho_mid,p_hat\n");
    for s in &est.steps {
        let _ = writeln!(csv, "{},{},{},{},{}", s.iter, s.rho_lo, s.rho_hi, s.rho_mid, s.p_hat);
    }
    let probes = est.steps.len() as u64 + 2;
    let results = json!({
        "rho_hat": est.rho_hat,
        "bracket": [est.bracket.0, est.bracket.1],
        "flagged": est.flagged,
        "notes": est.notes,
    });
    Ok(Output::table(csv, results, est.capped, probes * trials))
}

fn suite_output(reports: &[SuiteReport]) -> Output {
    let mut csv = String::from("suite,instances,violations,capped,passed\n");
    let mut report = Vec::new();
    for r in reports {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.name,
            r.instances,
            r.violations,
            r.capped,
            r.passed()
        );
        report.push(format!(
            "{} {} ({} instances, {} violations, {} capped)",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.instances,
            r.violations,
            r.capped
        ));
        report.extend(r.details.iter().map(|d| format!("  {d}")));
    }
    Output {
        ok: reports.iter().all(SuiteReport::passed),
        csv,
        report,
        results: json!(reports),
        capped: 0,
        total: 0,
    }
}

fn cmd_check_lemmas(cfg: &mut RunConfig) -> Result<Output, CliError> {
    let seed = cfg.seed()?;
    let instances = cfg.u64("instances", Some(500))? as usize;
    if instances == 0 {
        return Err(config_err("instances", "must be positive"));
    }
    Ok(suite_output(&experiments::all_suites(instances, seed)?))
}

fn cmd_selftest(cfg: &mut RunConfig) -> Result<Output, CliError> {
    let seed = cfg.seed()?;
    let mut reports = experiments::all_suites(40, seed)?;

    let mut det = SuiteReport {
        name: "determinism".into(),
        instances: 1,
        violations: 0,
        capped: 0,
        details: Vec::new(),
    };
    let curve = EkCurveConfig {
        lambda: 1.0,
        env: EnvSpec::iid_poisson(1.2),
        mix: SleepMix::all_active(),
        k_grid: vec![5, 10, 20],
        trials: 50,
        seed,
        cap: DEFAULT_CAP,
        workers: 1,
    };
    let a = ek_curve(&curve)?;
    let b = ek_curve(&EkCurveConfig { workers: 4, ..curve })?;
    if a != b {
        det.violations += 1;
        det.details.push("E_k table depends on the worker count".into());
    }
    reports.push(det);

    let mut bis = SuiteReport {
        name: "bisection".into(),
        instances: 1,
        violations: 0,
        capped: 0,
        details: Vec::new(),
    };
    let est = bisect_crossing(0.0, 1.0, 1e-3, |rho| {
        Ok::<_, ()>(Proportion::new(if rho < 0.7 { 100 } else { 0 }, 100))
    })
    .expect("infallible probe");
    if (est.rho_hat - 0.7).abs() > 1e-3 || est.flagged {
        bis.violations += 1;
        bis.details.push(format!("step oracle gave {}", est.rho_hat));
    }
    reports.push(bis);
    Ok(suite_output(&reports))
}
