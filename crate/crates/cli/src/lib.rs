//! The `metalyap` command line.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 negative mathematical
//! result (no certificate, failed validation, monotonicity or containment
//! violation), 3 a simulated trajectory diverged.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use metalyap::analysis::{boundary_trace, intersect_levels, SetSummary, SublevelSet, DEFAULT_SAMPLES};
use metalyap::certificate::Rejection;
use metalyap::sdp::SolverOptions;
use metalyap::simulate::{adversarial_policy, check_monotone, integrate, MonotoneReport, SwitchingPolicy, Trajectory};
use metalyap::{certify, Certificate, CertifyOptions, Objective, Outcome, SwitchedSystem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NEGATIVE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "metalyap", version, about = "Homogeneous polynomial Lyapunov certificates for switched linear systems")]
pub struct Cli {
    /// JSON file supplying defaults for any flag (flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search for a certificate at one level.
    Certify(CertifyArgs),
    /// Certify a range of levels and write a summary table.
    Sweep(SweepArgs),
    /// Trace sublevel sets through x0 and their intersection (n = 2).
    InvariantSet(InvariantArgs),
    /// Simulate switched trajectories, optionally checking a certificate.
    Simulate(SimulateArgs),
    /// Re-check a certificate against a system from scratch.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct SolverFlags {
    /// feas, x1 (minimise P(1,1)) or x2 (minimise P(m,m)).
    #[arg(long)]
    objective: Option<String>,
    /// Strictness δ of the decrease condition (default 1e-6·max‖B‖).
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative duality-gap target.
    #[arg(long)]
    tol: Option<f64>,
    /// Solve in plain monomial coordinates.
    #[arg(long)]
    no_precondition: bool,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long)]
    c: Option<usize>,
    #[command(flatten)]
    solver: SolverFlags,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    system: Option<PathBuf>,
    /// Inclusive level range, e.g. 1..13.
    #[arg(long)]
    c_range: Option<String>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct InvariantArgs {
    #[arg(long)]
    system: Option<PathBuf>,
    /// Boundary point, comma separated.
    #[arg(long)]
    x0: Option<String>,
    /// Existing certificate files; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    cert: Vec<PathBuf>,
    /// Certify this level inline when no --cert is given.
    #[arg(long)]
    c: Option<usize>,
    /// Certify these levels inline when no --cert is given.
    #[arg(long)]
    c_range: Option<String>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    system: Option<PathBuf>,
    /// fixed:<mode>, periodic:<dwell>:<m1,m2,..>, random[:<min>:<max>] or
    /// adversarial (needs --cert). Modes are 1-based.
    #[arg(long)]
    policy: Option<String>,
    /// Random policies: a count N (seeds 0..N) or a half-open range a..b.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Certificate to check monotonicity and containment against.
    #[arg(long)]
    cert: Option<PathBuf>,
    /// Write every k-th sample to the trajectory CSVs.
    #[arg(long)]
    every: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    cert: Option<PathBuf>,
    #[arg(long)]
    system: Option<PathBuf>,
}

/// Keys accepted in a `--config` file. Every key mirrors a flag.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<PathBuf>,
    pub c: Option<usize>,
    pub c_range: Option<String>,
    pub objective: Option<String>,
    pub margin: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub precondition: Option<bool>,
    pub x0: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub policy: Option<String>,
    pub seeds: Option<String>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub every: Option<usize>,
    pub cert: Option<Vec<PathBuf>>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<metalyap::Error> for CliError {
    fn from(e: metalyap::Error) -> Self {
        usage(e.to_string())
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_ERROR,
        message: message.into(),
    }
}

type CliResult<T = i32> = Result<T, CliError>;

/// Parses `args` and runs the command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    let cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Certify(a) => cmd_certify(a, &cfg),
        Command::Sweep(a) => cmd_sweep(a, &cfg),
        Command::InvariantSet(a) => cmd_invariant_set(a, &cfg),
        Command::Simulate(a) => cmd_simulate(a, &cfg),
        Command::Validate(a) => cmd_validate(a, &cfg),
    }
}

fn load_system(flag: Option<PathBuf>, cfg: &RunConfig) -> CliResult<(PathBuf, SwitchedSystem)> {
    let path = flag.or_else(|| cfg.system.clone()).ok_or_else(|| usage("--system is required"))?;
    let sys = SwitchedSystem::load(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    for i in sys.non_hurwitz_modes() {
        eprintln!("warning: mode {} is not Hurwitz", i + 1);
    }
    Ok((path, sys))
}

fn certify_options(flags: &SolverFlags, cfg: &RunConfig) -> CliResult<(Objective, CertifyOptions)> {
    let objective = match flags.objective.as_ref().or(cfg.objective.as_ref()) {
        Some(s) => s.parse::<Objective>()?,
        None => Objective::X1,
    };
    let defaults = SolverOptions::default();
    let solver = SolverOptions {
        max_iters: flags.max_iters.or(cfg.max_iters).unwrap_or(defaults.max_iters),
        tol: flags.tol.or(cfg.tol).unwrap_or(defaults.tol),
    };
    if solver.max_iters == 0 || !(solver.tol > 0.0) {
        return Err(usage("--max-iters and --tol must be positive"));
    }
    let margin = flags.margin.or(cfg.margin);
    if let Some(m) = margin {
        if !(m >= 0.0 && m.is_finite()) {
            return Err(usage("--margin must be finite and non-negative"));
        }
    }
    Ok((
        objective,
        CertifyOptions {
            solver,
            margin,
            precondition: !flags.no_precondition && cfg.precondition.unwrap_or(true),
            ..CertifyOptions::default()
        },
    ))
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> CliResult<PathBuf> {
    let dir = flag.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Parses `a..b`, `a-b` or a single level, inclusive.
pub fn parse_level_range(s: &str) -> Result<(usize, usize), String> {
    let s = s.trim();
    let parts: Vec<&str> = if let Some((a, b)) = s.split_once("..") {
        vec![a, b.trim_start_matches('=')]
    } else if let Some((a, b)) = s.split_once('-') {
        vec![a, b]
    } else {
        vec![s, s]
    };
    let lo: usize = parts[0].trim().parse().map_err(|_| format!("bad level range {s:?}"))?;
    let hi: usize = parts[1].trim().parse().map_err(|_| format!("bad level range {s:?}"))?;
    if lo == 0 || lo > hi {
        return Err(format!("level range needs 1 <= lo <= hi, got {s:?}"));
    }
    Ok((lo, hi))
}

/// Parses `N` (seeds `0..N`) or a half-open range `a..b`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (
            a.trim().parse::<u64>().map_err(|_| format!("bad seed range {s:?}"))?,
            b.trim().parse::<u64>().map_err(|_| format!("bad seed range {s:?}"))?,
        ),
        None => (0, s.parse::<u64>().map_err(|_| format!("bad seed count {s:?}"))?),
    };
    if lo >= hi {
        return Err(format!("empty seed set {s:?}"));
    }
    Ok((lo..hi).collect())
}

pub fn parse_point(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad coordinate {v:?} in {s:?}")))
        .collect()
}

fn point(flag: Option<String>, cfg: &RunConfig) -> CliResult<Option<Vec<f64>>> {
    match flag {
        Some(s) => parse_point(&s).map(Some).map_err(usage),
        None => Ok(cfg.x0.clone()),
    }
}

fn cert_file_name(c: usize, objective: Objective) -> String {
    format!("cert_c{c}_{objective}.json")
}

fn describe_rejection(r: &Rejection) -> String {
    format!(
        "{} after {} iterations (best normalised margin {:.3e}, upper bound {:.3e})",
        r.status, r.iterations, r.max_margin, r.max_margin_bound
    )
}

fn print_certificate(cert: &Certificate) {
    println!(
        "level c = {} (order {}), objective {}: feasible",
        cert.c,
        cert.order(),
        cert.objective
    );
    println!(
        "  iterations {}, runtime {:.3} s, normalised margin {:.3e}",
        cert.solver.iterations, cert.solver.runtime_secs, cert.solver.max_margin
    );
    let lmi: Vec<String> = cert.margins.lmi_max_eigs.iter().map(|e| format!("{e:.4e}")).collect();
    println!(
        "  min eig(P - I) = {:.4e}; max eig(B'P + PB) = [{}]; delta = {:.3e}",
        cert.margins.floor_min_eig,
        lmi.join(", "),
        cert.solver.margin
    );
}

fn cmd_certify(a: CertifyArgs, cfg: &RunConfig) -> CliResult {
    let (path, sys) = load_system(a.system, cfg)?;
    let c = a.c.or(cfg.c).unwrap_or(1);
    let (objective, opts) = certify_options(&a.solver, cfg)?;
    let out = out_dir(a.out, cfg)?;
    println!("system {} (n = {}, {} modes)", path.display(), sys.n(), sys.num_modes());
    match certify(&sys, c, objective, &opts)? {
        Outcome::Certified(cert) => {
            print_certificate(&cert);
            let file = out.join(cert_file_name(c, objective));
            write(&file, &cert.to_json())?;
            println!("  wrote {}", file.display());
            Ok(EXIT_OK)
        }
        Outcome::Rejected(r) => {
            println!("level c = {c} (order {}), objective {objective}: {}", 2 * c, describe_rejection(&r));
            Ok(EXIT_NEGATIVE)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    c: usize,
    order: usize,
    status: String,
    iterations: usize,
    runtime_s: f64,
    p11: Option<f64>,
}

fn run_levels(sys: &SwitchedSystem, levels: &[usize], objective: Objective, opts: &CertifyOptions, jobs: Option<usize>) -> CliResult<Vec<Outcome>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| usage(e.to_string()))?;
    let results: Vec<metalyap::Result<Outcome>> =
        pool.install(|| levels.par_iter().map(|&c| certify(sys, c, objective, opts)).collect());
    results.into_iter().map(|r| r.map_err(CliError::from)).collect()
}

fn cmd_sweep(a: SweepArgs, cfg: &RunConfig) -> CliResult {
    let (path, sys) = load_system(a.system, cfg)?;
    let range = a.c_range.or_else(|| cfg.c_range.clone()).unwrap_or_else(|| "1..13".into());
    let (lo, hi) = parse_level_range(&range).map_err(usage)?;
    let (objective, opts) = certify_options(&a.solver, cfg)?;
    let out = out_dir(a.out, cfg)?;
    let levels: Vec<usize> = (lo..=hi).collect();
    let outcomes = run_levels(&sys, &levels, objective, &opts, a.jobs.or(cfg.jobs))?;

    println!("system {} (n = {}, {} modes), objective {objective}", path.display(), sys.n(), sys.num_modes());
    println!("{:>3} {:>5} {:>18} {:>6} {:>10} {:>14}", "c", "order", "status", "iters", "runtime_s", "P(1,1)");
    let mut csv = String::from("c,order,status,iterations,runtime_s,P11\n");
    let mut all = true;
    for (c, outcome) in levels.iter().zip(&outcomes) {
        let row = match outcome {
            Outcome::Certified(cert) => {
                write(&out.join(cert_file_name(*c, objective)), &cert.to_json())?;
                SweepRow {
                    c: *c,
                    order: 2 * c,
                    status: "feasible".into(),
                    iterations: cert.solver.iterations,
                    runtime_s: cert.solver.runtime_secs,
                    p11: Some(cert.p[(0, 0)]),
                }
            }
            Outcome::Rejected(r) => {
                all = false;
                SweepRow {
                    c: *c,
                    order: 2 * c,
                    status: r.status.to_string(),
                    iterations: r.iterations,
                    runtime_s: r.runtime_secs,
                    p11: None,
                }
            }
        };
        let p11 = row.p11.map(|v| v.to_string()).unwrap_or_default();
        println!(
            "{:>3} {:>5} {:>18} {:>6} {:>10.4} {:>14}",
            row.c,
            row.order,
            row.status,
            row.iterations,
            row.runtime_s,
            row.p11.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into())
        );
        csv.push_str(&format!("{},{},{},{},{},{}\n", row.c, row.order, row.status, row.iterations, row.runtime_s, p11));
    }
    let file = out.join("sweep.csv");
    write(&file, &csv)?;
    println!("wrote {}", file.display());
    Ok(if all { EXIT_OK } else { EXIT_NEGATIVE })
}

#[derive(Debug, Serialize)]
struct AreasFile {
    x0: Vec<f64>,
    samples: usize,
    /// Decreasing level `c`.
    sets: Vec<SetSummary>,
    intersection: SetSummary,
}

fn cmd_invariant_set(a: InvariantArgs, cfg: &RunConfig) -> CliResult {
    let (_, sys) = load_system(a.system, cfg)?;
    let x0 = point(a.x0, cfg)?.ok_or_else(|| usage("--x0 is required"))?;
    if x0.len() != sys.n() {
        return Err(usage(format!("--x0 has {} coordinates, system n = {}", x0.len(), sys.n())));
    }
    if x0.iter().all(|v| *v == 0.0) {
        return Err(usage("--x0 must be non-zero (the level V(0) is 0)"));
    }
    if sys.n() != 2 {
        return Err(usage(format!(
            "boundary tracing is only supported for n = 2 (system has n = {}); use validate or simulate for containment",
            sys.n()
        )));
    }
    let samples = a.samples.or(cfg.samples).unwrap_or(DEFAULT_SAMPLES);
    let out = out_dir(a.out, cfg)?;
    let cert_paths = if a.cert.is_empty() { cfg.cert.clone().unwrap_or_default() } else { a.cert };

    let mut certs = Vec::new();
    if cert_paths.is_empty() {
        let range = match (a.c.or(cfg.c), a.c_range.or_else(|| cfg.c_range.clone())) {
            (_, Some(r)) => r,
            (Some(c), None) => c.to_string(),
            (None, None) => return Err(usage("give --cert files or --c / --c-range to certify inline")),
        };
        let (lo, hi) = parse_level_range(&range).map_err(usage)?;
        let (objective, opts) = certify_options(&a.solver, cfg)?;
        let levels: Vec<usize> = (lo..=hi).collect();
        for (c, outcome) in levels.iter().zip(run_levels(&sys, &levels, objective, &opts, cfg.jobs)?) {
            match outcome {
                Outcome::Certified(cert) => certs.push(*cert),
                Outcome::Rejected(r) => {
                    println!("level c = {c}: {}", describe_rejection(&r));
                    return Ok(EXIT_NEGATIVE);
                }
            }
        }
    } else {
        for p in &cert_paths {
            let cert = Certificate::load(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            let v = cert.validate(&sys)?;
            if !v.passed {
                println!("{} fails validation: {}", p.display(), v.violations.join("; "));
                return Ok(EXIT_NEGATIVE);
            }
            certs.push(cert);
        }
    }
    certs.sort_by(|a, b| b.c.cmp(&a.c).then(a.objective.to_string().cmp(&b.objective.to_string())));

    let sets: Vec<SublevelSet> = certs.iter().map(|c| boundary_trace(c, &x0, samples)).collect::<metalyap::Result<_>>()?;
    let both = intersect_levels(&sets)?;
    println!("{:<24} {:>14} {:>12} {:>10}", "set", "level", "area", "error");
    for set in sets.iter().chain(std::iter::once(&both)) {
        let s = set.summary();
        println!("{:<24} {:>14.6e} {:>12.6} {:>10.2e}", s.label, s.level, s.area, s.error_bound);
    }
    for (cert, set) in certs.iter().zip(&sets) {
        write(&out.join(format!("set_c{}_{}.csv", cert.c, cert.objective)), &set.to_csv())?;
    }
    write(&out.join("intersection.csv"), &both.to_csv())?;
    let areas = AreasFile {
        x0,
        samples,
        sets: sets.iter().map(SublevelSet::summary).collect(),
        intersection: both.summary(),
    };
    write(&out.join("areas.json"), &serde_json::to_string_pretty(&areas).expect("serialises"))?;
    println!("wrote {} boundary files and areas.json to {}", sets.len() + 1, out.display());
    Ok(EXIT_OK)
}

/// Parses a policy string (1-based modes) for a system with `num_modes`.
pub fn parse_policy(s: &str, seed: u64) -> Result<SwitchingPolicy, String> {
    let mut parts = s.split(':');
    let kind = parts.next().unwrap_or_default();
    let rest: Vec<&str> = parts.collect();
    let mode = |v: &str| -> Result<usize, String> {
        match v.trim().parse::<usize>() {
            Ok(m) if m >= 1 => Ok(m - 1),
            _ => Err(format!("bad mode {v:?} (modes are numbered from 1)")),
        }
    };
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("bad number {v:?}"));
    match (kind, rest.as_slice()) {
        ("fixed", [m]) => Ok(SwitchingPolicy::Fixed(mode(m)?)),
        ("periodic", [dwell, seq]) => Ok(SwitchingPolicy::Periodic {
            dwell: num(dwell)?,
            sequence: seq.split(',').map(mode).collect::<Result<_, _>>()?,
        }),
        ("random", []) => Ok(SwitchingPolicy::random(seed)),
        ("random", [lo, hi]) => Ok(SwitchingPolicy::Random {
            dwell_min: num(lo)?,
            dwell_max: num(hi)?,
            seed,
        }),
        _ => Err(format!(
            "unknown policy {s:?}; expected fixed:<mode>, periodic:<dwell>:<modes>, random[:<min>:<max>] or adversarial"
        )),
    }
}

#[derive(Debug, Serialize)]
struct RunReport {
    seed: Option<u64>,
    policy: String,
    file: String,
    diverged: bool,
    divergence: Option<metalyap::simulate::Divergence>,
    final_norm: f64,
    monotone: Option<MonotoneReport>,
    /// Largest `V(x(t)) / V(x0)` when a certificate is given.
    worst_level_ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SimulationReport {
    policy: String,
    x0: Vec<f64>,
    horizon: f64,
    step: f64,
    runs: usize,
    diverged: usize,
    monotonicity_violations: usize,
    containment_violations: usize,
    details: Vec<RunReport>,
}

/// Containment tolerance on `V(x(t)) ≤ V(x0)·(1 + tol)`.
const CONTAINMENT_TOL: f64 = 1e-6;

fn cmd_simulate(a: SimulateArgs, cfg: &RunConfig) -> CliResult {
    let (_, sys) = load_system(a.system, cfg)?;
    let policy = a.policy.or_else(|| cfg.policy.clone()).unwrap_or_else(|| "random".into());
    let x0 = point(a.x0, cfg)?.unwrap_or_else(|| {
        let mut e = vec![0.0; sys.n()];
        e[0] = 1.0;
        e
    });
    if x0.len() != sys.n() {
        return Err(usage(format!("--x0 has {} coordinates, system n = {}", x0.len(), sys.n())));
    }
    let horizon = a.horizon.or(cfg.horizon).unwrap_or(metalyap::simulate::DEFAULT_HORIZON);
    let step = a.step.or(cfg.step).unwrap_or(metalyap::simulate::DEFAULT_STEP);
    let every = a.every.or(cfg.every).unwrap_or(1).max(1);
    let out = out_dir(a.out, cfg)?;
    let cert_path = a.cert.or_else(|| cfg.cert.as_ref().and_then(|v| v.first().cloned()));
    let cert = match &cert_path {
        Some(p) => {
            let cert = Certificate::load(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            // errors out on a hash mismatch
            cert.validate(&sys)?;
            Some(cert)
        }
        None => None,
    };

    let is_random = policy.starts_with("random");
    let runs: Vec<(Option<u64>, SwitchingPolicy)> = if policy == "adversarial" {
        let cert = cert.as_ref().ok_or_else(|| usage("the adversarial policy needs --cert"))?;
        vec![(None, adversarial_policy(cert, &sys)?)]
    } else if is_random {
        let seeds = parse_seeds(&a.seeds.or_else(|| cfg.seeds.clone()).unwrap_or_else(|| "1".into())).map_err(usage)?;
        seeds
            .into_iter()
            .map(|s| parse_policy(&policy, s).map(|p| (Some(s), p)))
            .collect::<Result<_, _>>()
            .map_err(usage)?
    } else {
        vec![(None, parse_policy(&policy, 0).map_err(usage)?)]
    };

    let trajectories: Vec<metalyap::Result<Trajectory>> =
        runs.par_iter().map(|(_, p)| integrate(&sys, p, &x0, horizon, step)).collect();
    let level = match &cert {
        Some(c) => Some(c.eval_v(&x0)?),
        None => None,
    };
    let mut details = Vec::new();
    for ((seed, p), tr) in runs.iter().zip(trajectories) {
        let tr = tr?;
        let file = match seed {
            Some(s) => format!("traj_seed{s}.csv"),
            None => "traj.csv".into(),
        };
        write(&out.join(&file), &thin_csv(&tr, every))?;
        let monotone = match &cert {
            Some(c) => Some(check_monotone(c, &tr)?),
            None => None,
        };
        let worst_level_ratio = match (&cert, level) {
            (Some(c), Some(l)) if l > 0.0 => {
                let mut w = 0.0f64;
                for x in &tr.states {
                    w = w.max(c.eval_v(x)? / l);
                }
                Some(w)
            }
            _ => None,
        };
        details.push(RunReport {
            seed: *seed,
            policy: p.describe(),
            file,
            diverged: tr.diverged(),
            final_norm: tr.final_state().map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt()).unwrap_or(f64::NAN),
            divergence: tr.divergence.clone(),
            monotone,
            worst_level_ratio,
        });
    }
    let report = SimulationReport {
        policy,
        x0,
        horizon,
        step,
        runs: details.len(),
        diverged: details.iter().filter(|d| d.diverged).count(),
        monotonicity_violations: details.iter().filter(|d| d.monotone.as_ref().is_some_and(|m| !m.monotone)).count(),
        containment_violations: details
            .iter()
            .filter(|d| d.worst_level_ratio.is_some_and(|w| w > 1.0 + CONTAINMENT_TOL))
            .count(),
        details,
    };
    write(&out.join("report.json"), &serde_json::to_string_pretty(&report).expect("serialises"))?;
    println!(
        "{} run(s): {} diverged, {} monotonicity violation(s), {} containment violation(s)",
        report.runs, report.diverged, report.monotonicity_violations, report.containment_violations
    );
    println!("wrote trajectories and report.json to {}", out.display());
    Ok(if report.diverged > 0 {
        EXIT_DIVERGED
    } else if report.monotonicity_violations + report.containment_violations > 0 {
        EXIT_NEGATIVE
    } else {
        EXIT_OK
    })
}

/// The trajectory CSV keeping the header, every `every`-th sample and the
/// final one.
fn thin_csv(tr: &Trajectory, every: usize) -> String {
    let full = tr.to_csv();
    if every == 1 {
        return full;
    }
    let mut out = String::new();
    let mut data = 0usize;
    let lines: Vec<&str> = full.lines().collect();
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        let is_data = !line.starts_with('#') && !line.starts_with('t');
        if !is_data || data.is_multiple_of(every) || i == last {
            out.push_str(line);
            out.push('\n');
        }
        if is_data {
            data += 1;
        }
    }
    out
}

fn cmd_validate(a: ValidateArgs, cfg: &RunConfig) -> CliResult {
    let cert_path = a
        .cert
        .or_else(|| cfg.cert.as_ref().and_then(|v| v.first().cloned()))
        .ok_or_else(|| usage("--cert is required"))?;
    let (_, sys) = load_system(a.system, cfg)?;
    let cert = Certificate::load(&cert_path).map_err(|e| usage(format!("{}: {e}", cert_path.display())))?;
    let v = cert.validate(&sys)?;
    println!(
        "certificate c = {} (order {}), objective {}: min eig(P - I) = {:.4e}, delta = {:.3e}",
        cert.c,
        cert.order(),
        cert.objective,
        v.recomputed.floor_min_eig,
        v.margin
    );
    for (i, e) in v.recomputed.lmi_max_eigs.iter().enumerate() {
        println!("  mode {}: max eig(B'P + PB) = {e:.4e}", i + 1);
    }
    if v.passed {
        println!("PASS");
        Ok(EXIT_OK)
    } else {
        for line in &v.violations {
            println!("  violated: {line}");
        }
        println!("FAIL");
        Ok(EXIT_NEGATIVE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_ranges() {
        assert_eq!(parse_level_range("1..13").unwrap(), (1, 13));
        assert_eq!(parse_level_range("2-4").unwrap(), (2, 4));
        assert_eq!(parse_level_range("5").unwrap(), (5, 5));
        assert!(parse_level_range("0..3").is_err());
        assert!(parse_level_range("4..2").is_err());
    }

    #[test]
    fn seeds_and_points() {
        assert_eq!(parse_seeds("3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("5..7").unwrap(), vec![5, 6]);
        assert!(parse_seeds("0").is_err());
        assert_eq!(parse_point("1, -0.5").unwrap(), vec![1.0, -0.5]);
        assert!(parse_point("1,x").is_err());
    }

    #[test]
    fn policies() {
        assert!(matches!(parse_policy("fixed:2", 0).unwrap(), SwitchingPolicy::Fixed(1)));
        assert!(parse_policy("fixed:0", 0).is_err());
        match parse_policy("periodic:0.5:1,2,1", 0).unwrap() {
            SwitchingPolicy::Periodic { dwell, sequence } => {
                assert_eq!(dwell, 0.5);
                assert_eq!(sequence, vec![0, 1, 0]);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_policy("random:0.1:0.2", 9).unwrap(), SwitchingPolicy::Random { seed: 9, .. }));
        assert!(parse_policy("chaotic", 0).is_err());
    }
}
