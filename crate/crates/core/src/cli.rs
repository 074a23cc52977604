//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::admission::{adm_mac, trace_region_2user, AdmOptions};
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{
    generate_channel, load_channel, write_channel, write_report, ChannelSet, ChannelSpec, Fading,
};
use crate::ratecalc::WeightVector;
use crate::solvers::{max_resmac, max_rmac, min_pmac_within, SolveReport, SolverOptions};
use crate::study::{timeshare_study, StudyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NO_CONVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "maccanon",
    version,
    about = "Resource allocation for the MIMO multiple-access channel"
)]
pub struct Cli {
    /// Worker threads for tone-level work (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallel: Option<u64>,

    /// Seed for every random draw.
    #[arg(long, global = true, env = "MACCANON_SEED", default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random channel and write it as JSON.
    Gen(GenArgs),
    /// Run a solver on a channel file.
    Solve(SolveArgs),
    /// Trace the boundary of a two-user capacity region.
    Trace(TraceArgs),
    /// Sweep tone count and loading factor, counting time-shared solutions.
    StudyTimeshare(StudyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Model {
    Iid,
    Kronecker,
}

fn unit_interval(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must lie in [0, 1), got {v}"))
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn nonnegative(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be nonnegative, got {v}"))
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub users: u64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub rx: u64,
    /// Transmit antennas, one value for all users or one per user.
    #[arg(long, num_args = 1.., default_values_t = [2u64], value_parser = clap::value_parser!(u64).range(1..))]
    pub tx: Vec<u64>,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub tones: u64,
    #[arg(long, value_enum, default_value_t = Model::Kronecker)]
    pub model: Model,
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    pub rho_tx: f64,
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    pub rho_rx: f64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub taps: u64,
    /// Real baseband (flat channels only).
    #[arg(long)]
    pub real: bool,
    /// Output file (stdout if omitted).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverName {
    Maxrmac,
    Minpmac,
    Maxresmac,
    Admmac,
}

#[derive(Debug, Args)]
pub struct Budget {
    /// Per-user energy budgets.
    #[arg(long, num_args = 1.., value_parser = positive, conflicts_with = "snr")]
    pub energies: Option<Vec<f64>>,
    /// SNR in dB; every user gets `N·10^(SNR/10)`.
    #[arg(long, default_value_t = 15.0)]
    pub snr: f64,
}

impl Budget {
    fn resolve(&self, ch: &ChannelSet) -> Result<Vec<f64>> {
        match &self.energies {
            Some(e) => broadcast("--energies", e, ch.num_users()),
            None => Ok(vec![snr_energy(ch.num_tones(), self.snr); ch.num_users()]),
        }
    }
}

fn snr_energy(tones: usize, snr_db: f64) -> f64 {
    tones as f64 * 10f64.powf(snr_db / 10.0)
}

/// One value for everybody, or one per user.
fn broadcast(flag: &str, v: &[f64], users: usize) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; users]),
        n if n == users => Ok(v.to_vec()),
        n => Err(Error::Validation(format!(
            "{flag} has {n} values for {users} users"
        ))),
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(value_enum)]
    pub solver: SolverName,
    #[arg(long)]
    pub channel: PathBuf,
    #[command(flatten)]
    pub budget: Budget,
    /// Rate targets (minpmac, admmac). minpmac flags targets that need
    /// more than the energy budget as infeasible.
    #[arg(long, num_args = 1.., value_parser = nonnegative)]
    pub rates: Option<Vec<f64>>,
    /// Shared energy budget (maxresmac; default `U` times the SNR budget).
    #[arg(long, value_parser = positive)]
    pub total_energy: Option<f64>,
    /// Rate weights (maxrmac, maxresmac) or energy prices (minpmac).
    #[arg(long, num_args = 1.., value_parser = nonnegative)]
    pub weights: Option<Vec<f64>>,
    /// Report file.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub channel: PathBuf,
    #[command(flatten)]
    pub budget: Budget,
    #[arg(long, default_value_t = 81, value_parser = clap::value_parser!(u64).range(2..))]
    pub points: u64,
    /// CSV file (stdout if omitted).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long, num_args = 1.., default_values_t = [1u64, 2, 4, 8, 16, 32, 64], value_parser = clap::value_parser!(u64).range(1..))]
    pub tones: Vec<u64>,
    #[arg(long, num_args = 1.., default_values_t = [0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 0.99], value_parser = positive)]
    pub rhos: Vec<f64>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 15.0)]
    pub snr: f64,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub taps: u64,
    /// CSV file (stdout if omitted).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let threads = cli.parallel.map(|k| k as usize);
    let outcome = exec::with_threads(threads.unwrap_or(0), || dispatch(&cli, threads));
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Validation(_) => EXIT_USAGE,
                Error::NonConvergence { .. } | Error::Undecided { .. } => EXIT_NO_CONVERGENCE,
                _ => EXIT_FAILURE,
            }
        }
    }
}

fn solver_options(cli: &Cli, threads: Option<usize>) -> SolverOptions {
    SolverOptions {
        parallel: threads != Some(1),
        seed: cli.seed,
        ..Default::default()
    }
}

fn dispatch(cli: &Cli, threads: Option<usize>) -> Result<i32> {
    let opts = solver_options(cli, threads);
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, cli.seed).map(|_| EXIT_OK),
        Command::Solve(a) => cmd_solve(a, opts),
        Command::Trace(a) => cmd_trace(a, opts).map(|_| EXIT_OK),
        Command::StudyTimeshare(a) => cmd_study_timeshare(a, cli.seed, opts).map(|_| EXIT_OK),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn cmd_gen(a: &GenArgs, seed: u64) -> Result<()> {
    let users = a.users as usize;
    let tx: Vec<usize> = a.tx.iter().map(|&t| t as usize).collect();
    let tx = match tx.len() {
        1 => vec![tx[0]; users],
        n if n == users => tx,
        n => {
            return Err(Error::Validation(format!(
                "--tx has {n} values for {users} users"
            )))
        }
    };
    let spec = ChannelSpec {
        users,
        rx: a.rx as usize,
        tx,
        tones: a.tones as usize,
        c_b: if a.real { 2 } else { 1 },
        fading: match a.model {
            Model::Iid => Fading::IidRayleigh,
            Model::Kronecker => Fading::KroneckerExponential,
        },
        rho_tx: a.rho_tx,
        rho_rx: a.rho_rx,
        taps: a.taps as usize,
        seed,
    };
    let ch = generate_channel(&spec).map_err(|e| match e {
        Error::Validation(m) if m.starts_with("taps") => Error::Validation(format!("--taps: {m}")),
        other => other,
    })?;
    let mut out = open_output(a.output.as_deref())?;
    write_channel(&ch, &mut out)?;
    out.flush()?;
    Ok(())
}

fn require<'a>(v: &'a Option<Vec<f64>>, flag: &str, solver: &str) -> Result<&'a [f64]> {
    v.as_deref()
        .ok_or_else(|| Error::Validation(format!("{solver} needs {flag}")))
}

pub fn cmd_solve(a: &SolveArgs, opts: SolverOptions) -> Result<i32> {
    let ch = load_channel(&a.channel)?;
    let users = ch.num_users();
    let weights = |default: f64| -> Result<Vec<f64>> {
        match &a.weights {
            Some(w) => broadcast("--weights", w, users),
            None => Ok(vec![default; users]),
        }
    };
    let start = Instant::now();
    let result = match a.solver {
        SolverName::Maxrmac => {
            let theta = WeightVector::new(weights(1.0)?)?;
            max_rmac(&ch, &a.budget.resolve(&ch)?, &theta, &opts)
        }
        SolverName::Maxresmac => {
            let theta = WeightVector::new(weights(1.0)?)?;
            let total = match a.total_energy {
                Some(t) => t,
                None => a.budget.resolve(&ch)?.iter().sum(),
            };
            max_resmac(&ch, total, &theta, &opts)
        }
        SolverName::Minpmac => {
            let rates = broadcast("--rates", require(&a.rates, "--rates", "minpmac")?, users)?;
            min_pmac_within(&ch, &rates, &weights(1.0)?, &a.budget.resolve(&ch)?, &opts)
        }
        SolverName::Admmac => {
            let rates = broadcast("--rates", require(&a.rates, "--rates", "admmac")?, users)?;
            let adm = AdmOptions {
                solver: opts,
                ..Default::default()
            };
            adm_mac(&ch, &rates, &a.budget.resolve(&ch)?, &adm)
        }
    };
    let elapsed = start.elapsed();
    let (report, code) = match result {
        Ok(r) => {
            let code = if r.flag.is_feasible() {
                EXIT_OK
            } else {
                EXIT_INFEASIBLE
            };
            (r, code)
        }
        Err(Error::NonConvergence { iterations, best }) => {
            eprintln!("warning: no convergence after {iterations} outer iterations; writing the best iterate");
            (*best, EXIT_NO_CONVERGENCE)
        }
        Err(e) => return Err(e),
    };
    report.verify(&ch)?;
    if let Some(path) = &a.output {
        let mut out = open_output(Some(path))?;
        write_report(&report, &mut out)?;
        out.flush()?;
    }
    print_summary(&report, elapsed.as_secs_f64());
    Ok(code)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn print_summary(r: &SolveReport, seconds: f64) {
    println!("solver: {}", r.solver);
    println!("flag: {}", r.flag.code());
    println!("objective: {:.9}", r.objective);
    println!("rates: {}", fmt_list(&r.rates));
    println!("energies: {}", fmt_list(&r.energies));
    if r.alpha.len() > 1 {
        println!("alpha: {}", fmt_list(&r.alpha));
    }
    println!("outer iterations: {}", r.outer_iterations);
    println!("wall time: {seconds:.3} s");
}

pub fn cmd_trace(a: &TraceArgs, opts: SolverOptions) -> Result<()> {
    let ch = load_channel(&a.channel)?;
    if ch.num_users() != 2 {
        return Err(Error::Validation(format!(
            "--channel: trace needs a 2-user channel, got {} users",
            ch.num_users()
        )));
    }
    let energies = a.budget.resolve(&ch)?;
    let adm = AdmOptions {
        solver: opts,
        ..Default::default()
    };
    let start = Instant::now();
    let t = trace_region_2user(&ch, &energies, a.points as usize, &adm)?;
    let mut w = csv::Writer::from_writer(open_output(a.output.as_deref())?);
    w.write_record(["b1", "b2"]).map_err(csv_error)?;
    for (b1, b2) in &t.points {
        w.write_record([b1.to_string(), b2.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    let mut out = w
        .into_inner()
        .map_err(|e| Error::Io(io::Error::other(e.to_string())))?;
    for (k, name) in ["corner_user2_last", "corner_user1_last"]
        .iter()
        .enumerate()
    {
        let (b1, b2) = t.corners[k];
        writeln!(out, "# {name},{b1},{b2},{}", t.corner_boundary[k])?;
    }
    out.flush()?;
    eprintln!(
        "{} points, {} solves, {} undecided probes, {:.3} s",
        t.points.len(),
        t.solves,
        t.undecided,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(io::Error::other(e.to_string()))
}

pub fn cmd_study_timeshare(a: &StudyArgs, seed: u64, opts: SolverOptions) -> Result<()> {
    let cfg = StudyConfig {
        tones: a.tones.iter().map(|&n| n as usize).collect(),
        rhos: a.rhos.clone(),
        trials: a.trials as usize,
        snr_db: a.snr,
        seed,
        taps: a.taps as usize,
        parallel: opts.parallel,
        solver: opts,
        ..Default::default()
    };
    let cells = timeshare_study(&cfg)?;
    let mut w = csv::Writer::from_writer(open_output(a.output.as_deref())?);
    w.write_record([
        "tones",
        "rho",
        "trials",
        "timeshare_prob",
        "mean_alpha_max",
        "infeasible",
    ])
    .map_err(csv_error)?;
    for c in &cells {
        w.write_record([
            c.tones.to_string(),
            c.rho.to_string(),
            c.trials.len().to_string(),
            c.timeshare_probability().to_string(),
            c.mean_alpha_max().to_string(),
            c.infeasible_count().to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
