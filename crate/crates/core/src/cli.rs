//! Command-line front end: scenario settings, sweeps and CSV output.
//!
//! Settings come from flags, then the config file (`--config` or
//! `CVDQS_CONFIG`), then built-in defaults. The config file holds
//! `key = value` lines named after the long flags; `#` starts a comment.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::Cutoff;
use crate::nla::NlaSpec;
use crate::sensing::{
    crlb_entangled, crlb_product, delta_alpha_entangled, delta_alpha_ideal_nla,
    delta_alpha_product, simulate_practical, ScenarioConfig, Scheme,
    SensitivityPoint,
};
use crate::validate::{self, ValidateOptions};

pub const SENSITIVITY_HEADER: [&str; 12] = [
    "scheme",
    "M",
    "N_S",
    "eta",
    "g",
    "scissors",
    "probe_power",
    "delta_alpha",
    "p_success",
    "cutoff",
    "trunc_deficit",
    "error",
];
pub const NLA_HEADER: [&str; 3] = ["g", "p_success", "probe_power"];
pub const BOUNDS_HEADER: [&str; 5] = [
    "eta",
    "crlb_entangled",
    "crlb_product",
    "delta_alpha_entangled",
    "delta_alpha_product",
];

#[derive(Debug, Parser)]
#[command(name = "cvdqs", version, about = "Distributed quantum sensing sweeps with noiseless linear amplifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub params: Params,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sensitivity of all four schemes over the gain grid.
    SweepSensitivity,
    /// Joint success probability and probe power of the practical NLA over the gain grid.
    SweepNla,
    /// Cramér-Rao bounds and closed-form sensitivities over the transmissivity grid.
    Bounds,
    /// Run the invariant suite and print a pass/fail table.
    Validate {
        /// Scale the one-photon coefficient of the practical NLA operator by (1 + EPS).
        #[arg(long, value_name = "EPS", allow_negative_numbers = true)]
        perturb_projector: Option<f64>,
    },
}

/// Scenario flags. Every field is optional so the config file can fill gaps.
#[derive(Debug, Default, Clone, Args)]
pub struct Params {
    /// Number of sensors.
    #[arg(long = "M", global = true)]
    pub modes: Option<usize>,
    /// Mean photon number of the squeezed-vacuum source.
    #[arg(long, global = true)]
    pub ns: Option<f64>,
    /// Channel transmissivity.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Quantum scissors per practical NLA.
    #[arg(long, global = true)]
    pub scissors: Option<usize>,
    /// Source photon cutoff (default: smallest one whose truncation deficit is below 1e-6).
    #[arg(long, global = true)]
    pub cutoff: Option<usize>,
    /// First NLA gain of the grid.
    #[arg(long, global = true)]
    pub g_min: Option<f64>,
    /// Last NLA gain of the grid.
    #[arg(long, global = true)]
    pub g_max: Option<f64>,
    /// Number of gain grid points.
    #[arg(long, global = true)]
    pub g_steps: Option<usize>,
    /// First transmissivity of the bounds grid.
    #[arg(long, global = true)]
    pub eta_min: Option<f64>,
    /// Last transmissivity of the bounds grid.
    #[arg(long, global = true)]
    pub eta_max: Option<f64>,
    /// Number of transmissivity grid points.
    #[arg(long, global = true)]
    pub eta_steps: Option<usize>,
    /// Output CSV path (default: stdout).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Significant digits of floating-point fields.
    #[arg(long, global = true, value_name = "K")]
    pub precision: Option<usize>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, value_name = "J")]
    pub jobs: Option<usize>,
    /// Config file of `key = value` lines.
    #[arg(long, global = true, env = "CVDQS_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,
}

impl Params {
    /// Fills every unset field from `other`.
    pub fn or(self, other: Params) -> Params {
        Params {
            modes: self.modes.or(other.modes),
            ns: self.ns.or(other.ns),
            eta: self.eta.or(other.eta),
            scissors: self.scissors.or(other.scissors),
            cutoff: self.cutoff.or(other.cutoff),
            g_min: self.g_min.or(other.g_min),
            g_max: self.g_max.or(other.g_max),
            g_steps: self.g_steps.or(other.g_steps),
            eta_min: self.eta_min.or(other.eta_min),
            eta_max: self.eta_max.or(other.eta_max),
            eta_steps: self.eta_steps.or(other.eta_steps),
            out: self.out.or(other.out),
            precision: self.precision.or(other.precision),
            jobs: self.jobs.or(other.jobs),
            config: self.config.or(other.config),
        }
    }
}

fn config_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_value<T: std::str::FromStr>(path: &Path, line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_error(path, line, format!("invalid value {value:?} for {key}")))
}

/// Parses config-file text. Keys are the long flag names; `_` and `-` are
/// interchangeable.
pub fn parse_config(text: &str, path: &Path) -> Result<Params> {
    let mut p = Params::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(config_error(path, line, "expected `key = value`"));
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        macro_rules! set {
            ($field:ident) => {
                p.$field = Some(parse_value(path, line, &key, value)?)
            };
        }
        match key.as_str() {
            "M" => set!(modes),
            "ns" => set!(ns),
            "eta" => set!(eta),
            "scissors" => set!(scissors),
            "cutoff" => set!(cutoff),
            "g-min" => set!(g_min),
            "g-max" => set!(g_max),
            "g-steps" => set!(g_steps),
            "eta-min" => set!(eta_min),
            "eta-max" => set!(eta_max),
            "eta-steps" => set!(eta_steps),
            "out" => set!(out),
            "precision" => set!(precision),
            "jobs" => set!(jobs),
            _ => return Err(config_error(path, line, format!("unknown key {key:?}"))),
        }
    }
    Ok(p)
}

/// Fully resolved and checked settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub modes: usize,
    pub n_s: f64,
    pub eta: f64,
    pub scissors: usize,
    pub cutoff: Option<Cutoff>,
    pub g_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
    pub out: Option<PathBuf>,
    pub precision: usize,
    pub jobs: Option<usize>,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

/// `steps` evenly spaced points on `[min, max]`; one step only for a
/// single-point range.
pub fn grid(name: &str, min: f64, max: f64, steps: usize) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite()) || min > max {
        return Err(usage(format!("{name} range [{min}, {max}] is empty")));
    }
    match steps {
        0 => Err(usage(format!("{name} grid needs at least one step"))),
        1 if min == max => Ok(vec![min]),
        1 => Err(usage(format!("{name} grid with one step needs min == max"))),
        n => Ok((0..n)
            .map(|i| {
                if i == n - 1 {
                    max
                } else {
                    min + (max - min) * i as f64 / (n - 1) as f64
                }
            })
            .collect()),
    }
}

impl Settings {
    pub fn resolve(p: Params) -> Result<Self> {
        let modes = p.modes.unwrap_or(4);
        let n_s = p.ns.unwrap_or(0.04);
        let eta = p.eta.unwrap_or(0.5);
        let scissors = p.scissors.unwrap_or(2);
        let precision = p.precision.unwrap_or(6);
        if modes < 1 {
            return Err(usage("--M must be at least 1"));
        }
        if !(n_s >= 0.0 && n_s.is_finite()) {
            return Err(usage("--ns must be a finite value >= 0"));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(usage("--eta must lie in (0, 1]"));
        }
        if scissors < 1 {
            return Err(usage("--scissors must be at least 1"));
        }
        if !(3..=17).contains(&precision) {
            return Err(usage("--precision must lie in [3, 17]"));
        }
        if p.jobs == Some(0) {
            return Err(usage("--jobs must be at least 1"));
        }
        let cutoff = match p.cutoff {
            Some(c) if c < scissors => {
                return Err(usage(format!(
                    "--cutoff {c} is below --scissors {scissors}; the cutoff must hold the scissor truncation"
                )))
            }
            Some(c) => Some(Cutoff::new(c)?),
            None => None,
        };
        let g_min = p.g_min.unwrap_or(1.0);
        if g_min < 1.0 {
            return Err(usage("--g-min must be at least 1"));
        }
        let g_grid = grid("gain", g_min, p.g_max.unwrap_or(3.0), p.g_steps.unwrap_or(41))?;
        let eta_min = p.eta_min.unwrap_or(0.1);
        let eta_max = p.eta_max.unwrap_or(1.0);
        if !(eta_min > 0.0 && eta_max <= 1.0) {
            return Err(usage("transmissivity grid must lie in (0, 1]"));
        }
        let eta_grid = grid("transmissivity", eta_min, eta_max, p.eta_steps.unwrap_or(10))?;
        Ok(Settings {
            modes,
            n_s,
            eta,
            scissors,
            cutoff,
            g_grid,
            eta_grid,
            out: p.out,
            precision,
            jobs: p.jobs,
        })
    }

    fn practical(&self, g: f64) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::new(Scheme::EntangledPracticalNla, self.modes, self.n_s, self.eta)?
            .with_nla(NlaSpec::practical(g, self.scissors)?);
        if let Some(c) = self.cutoff {
            cfg = cfg.with_cutoff(c);
        }
        Ok(cfg)
    }
}

/// Scientific notation with `precision` significant digits.
pub fn format_float(v: f64, precision: usize) -> String {
    format!("{:.*e}", precision.saturating_sub(1), v)
}

/// One row of `sweep-sensitivity`.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityRow {
    pub scheme: Scheme,
    pub modes: usize,
    pub n_s: f64,
    pub eta: f64,
    pub g: f64,
    pub scissors: Option<usize>,
    pub point: std::result::Result<SensitivityPoint, String>,
}

impl SensitivityRow {
    fn record(&self, precision: usize) -> Vec<String> {
        let f = |v: f64| format_float(v, precision);
        let mut rec = vec![
            self.scheme.to_string(),
            self.modes.to_string(),
            f(self.n_s),
            f(self.eta),
            f(self.g),
            self.scissors.map(|s| s.to_string()).unwrap_or_default(),
        ];
        match &self.point {
            Ok(pt) => rec.extend([
                f(pt.probe_power),
                f(pt.delta_alpha),
                f(pt.p_success),
                pt.cutoff.map(|c| c.to_string()).unwrap_or_default(),
                pt.cutoff.map(|_| f(pt.trunc_deficit)).unwrap_or_default(),
                String::new(),
            ]),
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 5));
                rec.push(e.clone());
            }
        }
        rec
    }
}

/// Rows for one gain: the practical point, the ideal point at the same gain,
/// and the no-NLA and product baselines at the practical probe power.
pub fn sensitivity_rows(s: &Settings, g: f64) -> Vec<SensitivityRow> {
    let row = |scheme, n_s, eta, scissors, point| SensitivityRow {
        scheme,
        modes: s.modes,
        n_s,
        eta,
        g,
        scissors,
        point,
    };
    let practical = s
        .practical(g)
        .and_then(|cfg| simulate_practical(&cfg))
        .map_err(|e| e.to_string());
    let ideal = delta_alpha_ideal_nla(s.modes, s.n_s, s.eta, g).map_err(|e| e.to_string());

    let mut rows = vec![
        row(Scheme::EntangledIdealNla, s.n_s, s.eta, None, ideal),
        row(Scheme::EntangledPracticalNla, s.n_s, s.eta, Some(s.scissors), practical.clone()),
    ];
    match practical {
        Ok(pt) => {
            let power = pt.probe_power;
            let n_src = power / s.eta;
            let no_nla = delta_alpha_entangled(s.modes, n_src, s.eta)
                .map(|d| closed_form(Scheme::EntangledNoNla, power, d))
                .map_err(|e| e.to_string());
            let product = delta_alpha_product(s.modes, power, 1.0)
                .map(|d| closed_form(Scheme::ProductOptimal, power, d))
                .map_err(|e| e.to_string());
            rows.push(row(Scheme::EntangledNoNla, n_src, s.eta, None, no_nla));
            rows.push(row(Scheme::ProductOptimal, power, 1.0, None, product));
        }
        Err(e) => {
            let note = format!("no practical probe power at this gain: {e}");
            rows.push(row(Scheme::EntangledNoNla, f64::NAN, s.eta, None, Err(note.clone())));
            rows.push(row(Scheme::ProductOptimal, f64::NAN, 1.0, None, Err(note)));
        }
    }
    rows
}

fn closed_form(scheme: Scheme, power: f64, delta_alpha: f64) -> SensitivityPoint {
    SensitivityPoint {
        scheme,
        probe_power: power,
        delta_alpha,
        p_success: 1.0,
        idealized: false,
        cutoff: None,
        trunc_deficit: 0.0,
    }
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| usage(format!("cannot start {j} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// All `sweep-sensitivity` rows, sorted by `(scheme, g)`.
pub fn sweep_sensitivity(s: &Settings) -> Result<Vec<SensitivityRow>> {
    let mut rows: Vec<SensitivityRow> = in_pool(s.jobs, || {
        s.g_grid
            .par_iter()
            .flat_map_iter(|&g| sensitivity_rows(s, g))
            .collect()
    })?;
    rows.sort_by(|a, b| a.scheme.cmp(&b.scheme).then(a.g.total_cmp(&b.g)));
    Ok(rows)
}

/// `(g, p_success, probe_power)` of the practical NLA over the gain grid.
pub fn sweep_nla(s: &Settings) -> Result<Vec<(f64, f64, f64)>> {
    let points: Vec<Result<(f64, f64, f64)>> = in_pool(s.jobs, || {
        s.g_grid
            .par_iter()
            .map(|&g| {
                let pt = simulate_practical(&s.practical(g)?)?;
                Ok((g, pt.p_success, pt.probe_power))
            })
            .collect()
    })?;
    points.into_iter().collect()
}

/// `(eta, crlb_e, crlb_p, δα_e, δα_p)` with the product baseline sharing the loss.
pub fn bounds_table(s: &Settings) -> Result<Vec<[f64; 5]>> {
    s.eta_grid
        .iter()
        .map(|&eta| {
            Ok([
                eta,
                crlb_entangled(s.modes, s.n_s, eta)?,
                crlb_product(s.modes, s.n_s, eta)?,
                delta_alpha_entangled(s.modes, s.n_s, eta)?,
                delta_alpha_product(s.modes, s.n_s, eta)?,
            ])
        })
        .collect()
}

fn csv_bytes<I, R>(header: &[&str], records: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in records {
        w.write_record(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

pub fn sensitivity_csv(s: &Settings) -> Result<Vec<u8>> {
    let rows = sweep_sensitivity(s)?;
    csv_bytes(&SENSITIVITY_HEADER, rows.iter().map(|r| r.record(s.precision)))
}

pub fn nla_csv(s: &Settings) -> Result<Vec<u8>> {
    let f = |v: f64| format_float(v, s.precision);
    let rows = sweep_nla(s)?;
    csv_bytes(&NLA_HEADER, rows.into_iter().map(|(g, p, n)| [f(g), f(p), f(n)]))
}

pub fn bounds_csv(s: &Settings) -> Result<Vec<u8>> {
    let f = |v: f64| format_float(v, s.precision);
    let rows = bounds_table(s)?;
    csv_bytes(&BOUNDS_HEADER, rows.into_iter().map(|r| r.map(f)))
}

fn print_report(results: &[validate::CheckResult]) {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status}  {:width$}  {}", r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", results.len());
}

/// Runs a parsed command line. `Ok(false)` means a validation failure.
pub fn run(cli: Cli) -> Result<bool> {
    let file = match &cli.params.config {
        Some(path) => parse_config(&fs::read_to_string(path)?, path)?,
        None => Params::default(),
    };
    let settings = Settings::resolve(cli.params.clone().or(file))?;
    let out = settings.out.as_deref();
    match cli.command {
        Command::SweepSensitivity => emit(out, &sensitivity_csv(&settings)?)?,
        Command::SweepNla => emit(out, &nla_csv(&settings)?)?,
        Command::Bounds => emit(out, &bounds_csv(&settings)?)?,
        Command::Validate { perturb_projector } => {
            let opts = ValidateOptions {
                modes: settings.modes,
                n_s: settings.n_s,
                scissors: settings.scissors,
                cutoff: settings.cutoff,
                perturb_projector: perturb_projector.unwrap_or(0.0),
            };
            let results = in_pool(settings.jobs, || validate::run(&opts))?;
            print_report(&results);
            return Ok(results.iter().all(|r| r.passed));
        }
    }
    Ok(true)
}

/// Exit status: 0 success, 1 validation failure, 2 usage or configuration error.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("cvdqs: {e}");
            ExitCode::from(2)
        }
    }
}
