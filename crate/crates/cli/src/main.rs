mod io;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use tsfilter_core::lmi::{DelayRateMode, SlackStructure, LAMBDA_COEFFS};
use tsfilter_core::sdp::{self, SolveStatus, SolverOptions};
use tsfilter_core::simulation::{
    l2_gain_estimate, lyapunov_monitor, make_delay_sine, simulate_filtering, DelayTrajectory, Disturbance,
    LkWeights, SimConfig,
};
use tsfilter_core::synthesis::{
    gamma_min, synthesize, BoundsDomain, FilterFile, GammaSearch, SynthesisOutcome, SynthesisSettings, Theorem,
};
use tsfilter_core::verification::{check_lambda_identity_with, lemma1_monte_carlo};
use tsfilter_core::TsDelayModel;

use crate::io::{load_model, manifest_path_for, read_input, RunManifest};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INDETERMINATE: u8 = 3;

#[derive(Parser)]
#[command(name = "tsfilter", version, about = "Fuzzy H-infinity filter design for T-S systems with time-varying delay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the synthesis LMIs at one attenuation level.
    Synth(SynthArgs),
    /// Bisect for the smallest feasible attenuation level over an (omega, h) grid.
    GammaMin(GammaMinArgs),
    /// Reproduce the reference attenuation tables.
    Tables(TablesArgs),
    /// Simulate a designed filter against the plant.
    Simulate(SimulateArgs),
    /// Monte-Carlo check of the integral inequality and the Lambda identity.
    Verify(VerifyArgs),
    /// Dump the assembled feasibility problem in SDPA sparse format.
    ExportSdpa(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum RateArg {
    Plain,
    Rho,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SlackArg {
    Full,
    BlockDiagonal,
}

/// Options shared by every command that builds the synthesis LMIs.
#[derive(Args, Debug, Clone, Serialize)]
struct ProblemArgs {
    /// Model JSON (defaults to the bundled Example 1 plant).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    /// 1 (basic) or 2 (membership-dependent).
    #[arg(long, default_value = "2")]
    theorem: Theorem,
    #[arg(long = "delay-rate-term", value_enum, default_value_t = RateArg::Rho)]
    delay_rate_term: RateArg,
    #[arg(long, value_enum, default_value_t = SlackArg::Full)]
    slack: SlackArg,
    /// Premise range and grid used to derive membership product bounds.
    #[arg(long, default_value_t = -50.0, allow_negative_numbers = true)]
    bounds_lo: f64,
    #[arg(long, default_value_t = 50.0, allow_negative_numbers = true)]
    bounds_hi: f64,
    #[arg(long, default_value_t = 10001)]
    bounds_grid: usize,
    #[arg(long, default_value_t = 1e-6)]
    bounds_margin: f64,
}

impl ProblemArgs {
    fn settings(&self, model: &TsDelayModel, h: f64, omega: f64) -> Result<SynthesisSettings> {
        let bounds = match self.theorem {
            Theorem::Basic => None,
            Theorem::MembershipDependent => Some(
                BoundsDomain {
                    lo: self.bounds_lo,
                    hi: self.bounds_hi,
                    grid_points: self.bounds_grid,
                    margin: self.bounds_margin,
                }
                .bounds(model)?,
            ),
        };
        Ok(SynthesisSettings {
            h,
            rho: self.rho,
            omega,
            theorem: self.theorem,
            delay_rate_mode: match self.delay_rate_term {
                RateArg::Plain => DelayRateMode::Plain,
                RateArg::Rho => DelayRateMode::Rho,
            },
            slack_structure: match self.slack {
                SlackArg::Full => SlackStructure::Full,
                SlackArg::BlockDiagonal => SlackStructure::BlockDiagonal,
            },
            bounds,
        })
    }
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    h: f64,
    #[arg(long)]
    omega: f64,
    #[arg(long)]
    gamma: f64,
    /// Filter file to write.
    #[arg(long, default_value = "filter.json")]
    out: PathBuf,
    /// Manifest path (default: `<out>.manifest.json`).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SearchArgs {
    #[arg(long, default_value_t = 5e-3)]
    tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    gamma_lo: f64,
    #[arg(long, default_value_t = 10.0)]
    gamma_hi: f64,
    /// Grid cells solved concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Directory for per-cell filters, search logs, the table and the manifest.
    #[arg(long, default_value = "gamma_min")]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct GammaMinArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    h: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    omega: Vec<f64>,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args, Debug, Serialize)]
struct TablesArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long = "delay-rate-term", value_enum, default_value_t = RateArg::Plain)]
    delay_rate_term: RateArg,
    #[arg(long, value_enum, default_value_t = SlackArg::Full)]
    slack: SlackArg,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum DisturbanceArg {
    Zero,
    Pulse,
    #[value(name = "decaying_sine", alias = "decaying-sine")]
    DecayingSine,
    Noise,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PhiArg {
    Zero,
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum DelayArg {
    Constant,
    Sine,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "filter.json")]
    filter: PathBuf,
    #[arg(long, value_enum, default_value_t = DisturbanceArg::DecayingSine)]
    disturbance: DisturbanceArg,
    /// Initial plant history (random: unit norm, drawn from `--seed`).
    #[arg(long, value_enum, default_value_t = PhiArg::Zero)]
    phi: PhiArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = DelayArg::Sine)]
    delay: DelayArg,
    /// Delay bound (default: from the filter file settings).
    #[arg(long)]
    h: Option<f64>,
    /// Delay-rate bound (default: from the filter file settings).
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Require an empirical gain estimate (fails on zero-energy input).
    #[arg(long)]
    gain: bool,
    #[arg(long, default_value = "trajectories.csv")]
    csv: PathBuf,
    #[arg(long, default_value = "summary.json")]
    summary: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random (h, Z) cases for the Lambda identity.
    #[arg(long, default_value_t = 100)]
    lambda_cases: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Perturb the Lambda coefficient table (negative control).
    #[arg(long, hide = true)]
    corrupt_lambda: bool,
}

#[derive(Args, Debug, Serialize)]
struct ExportArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    h: f64,
    #[arg(long)]
    omega: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value = "problem.dat-s")]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::GammaMin(a) => cmd_gamma_min(&a),
        Command::Tables(a) => cmd_tables(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::ExportSdpa(a) => cmd_export_sdpa(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<u8> {
    let mut manifest = RunManifest::new("synth", a);
    let model = load_model(a.problem.model.as_deref(), &mut manifest)?;
    let settings = a.problem.settings(&model, a.h, a.omega)?;
    let outcome = synthesize(&model, &settings, a.gamma, &SolverOptions::default())?;
    let report = outcome.report().clone();
    let code = match outcome {
        SynthesisOutcome::Feasible(r) => {
            let mut text = FilterFile::from(&*r).to_json()?;
            text.push('\n');
            manifest.emit(&a.out, text.as_bytes())?;
            println!(
                "feasible at gamma = {} (worst margin {:.3e}, {} iterations); filter written to {}",
                a.gamma,
                report.worst_margin,
                report.iterations,
                a.out.display()
            );
            0
        }
        SynthesisOutcome::NotFeasible(_) if report.status == SolveStatus::Infeasible => {
            println!(
                "infeasible at gamma = {} (phase-I bound {:.3e}, {} iterations)",
                a.gamma, report.lower_bound, report.iterations
            );
            EXIT_INFEASIBLE
        }
        SynthesisOutcome::NotFeasible(_) => {
            eprintln!(
                "indeterminate at gamma = {}: {} (t = {:.3e}, bound {:.3e}, residual {:.3e}, {} iterations)",
                a.gamma, report.message, report.t, report.lower_bound, report.dual_residual, report.iterations
            );
            EXIT_INDETERMINATE
        }
    };
    let mpath = a.manifest.clone().unwrap_or_else(|| manifest_path_for(&a.out));
    manifest.finish(&mpath)?;
    Ok(code)
}

#[derive(Debug, Clone, Serialize)]
struct CellResult {
    omega: f64,
    h: f64,
    gamma_star: Option<f64>,
    filter_file: Option<String>,
}

fn fmt_num(x: f64) -> String {
    // stable, short file-name friendly rendering
    let s = format!("{x}");
    s.replace('-', "m")
}

/// Runs every (omega, h) cell, possibly on several threads.
fn run_grid(
    model: &TsDelayModel,
    problem: &ProblemArgs,
    hs: &[f64],
    omegas: &[f64],
    search: &SearchArgs,
    manifest: &mut RunManifest,
) -> Result<Vec<CellResult>> {
    if hs.is_empty() || omegas.is_empty() {
        bail!("empty h or omega list");
    }
    let gs = GammaSearch {
        tol: search.tol,
        bracket: (search.gamma_lo, search.gamma_hi),
        ..GammaSearch::default()
    };
    let cells: Vec<(f64, f64)> = omegas.iter().flat_map(|&w| hs.iter().map(move |&h| (w, h))).collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<(CellResult, Vec<(PathBuf, Vec<u8>)>)>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    let jobs = search.jobs.clamp(1, cells.len());

    let solve_cell = |omega: f64, h: f64| -> Result<(CellResult, Vec<(PathBuf, Vec<u8>)>)> {
        let settings = problem.settings(model, h, omega)?;
        info!("cell omega = {omega}, h = {h}");
        let (result, log) = gamma_min(model, &settings, &gs)?;
        let stem = format!("w{}_h{}", fmt_num(omega), fmt_num(h));
        let mut files = Vec::new();
        let mut log_text = serde_json::to_string_pretty(&log)?;
        log_text.push('\n');
        files.push((search.out_dir.join(format!("search_{stem}.json")), log_text.into_bytes()));
        let mut filter_file = None;
        if let Some(r) = &result {
            let mut text = FilterFile::from(r).to_json()?;
            text.push('\n');
            let path = search.out_dir.join(format!("filter_{stem}.json"));
            filter_file = Some(path.display().to_string());
            files.push((path, text.into_bytes()));
        }
        Ok((
            CellResult {
                omega,
                h,
                gamma_star: log.gamma_star,
                filter_file,
            },
            files,
        ))
    };

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= cells.len() {
                    break;
                }
                let (w, h) = cells[k];
                let r = solve_cell(w, h);
                results.lock().expect("results lock")[k] = Some(r);
            });
        }
    });

    let mut out = Vec::new();
    for r in results.into_inner().expect("results lock") {
        let (cell, files) = r.expect("every cell visited")?;
        for (path, bytes) in files {
            manifest.emit(&path, &bytes)?;
        }
        out.push(cell);
    }
    Ok(out)
}

fn render_table(cells: &[CellResult], hs: &[f64], omegas: &[f64]) -> String {
    let mut s = String::from("omega \\ h");
    for h in hs {
        s += &format!("  {h:>7}");
    }
    s.push('\n');
    for &w in omegas {
        s += &format!("{w:>9}");
        for &h in hs {
            let g = cells.iter().find(|c| c.omega == w && c.h == h).and_then(|c| c.gamma_star);
            match g {
                Some(g) => s += &format!("  {g:>7.4}"),
                None => s += &format!("  {:>7}", "-"),
            }
        }
        s.push('\n');
    }
    s
}

fn table_csv(cells: &[CellResult]) -> String {
    let mut s = String::from("omega,h,gamma_star\n");
    for c in cells {
        let g = c.gamma_star.map(|g| format!("{g}")).unwrap_or_default();
        s += &format!("{},{},{}\n", c.omega, c.h, g);
    }
    s
}

fn cmd_gamma_min(a: &GammaMinArgs) -> Result<u8> {
    let mut manifest = RunManifest::new("gamma-min", a);
    let model = load_model(a.problem.model.as_deref(), &mut manifest)?;
    let cells = run_grid(&model, &a.problem, &a.h, &a.omega, &a.search, &mut manifest)?;
    print!("{}", render_table(&cells, &a.h, &a.omega));
    manifest.emit(&a.search.out_dir.join("table.csv"), table_csv(&cells).as_bytes())?;
    manifest.finish(&a.search.out_dir.join("manifest.json"))?;
    Ok(if cells.iter().all(|c| c.gamma_star.is_some()) { 0 } else { EXIT_INFEASIBLE })
}

/// Reference attenuation levels for Example 1 at rho = 0.2, by omega, over
/// h = 0.5, 0.6, 0.8, 1.
const REFERENCE: [(f64, [f64; 4]); 3] = [
    (2.0, [0.17, 0.19, 0.21, 0.24]),
    (5.0, [0.18, 0.20, 0.21, 0.22]),
    (20.0, [0.23, 0.23, 0.24, 0.25]),
];
const REFERENCE_H: [f64; 4] = [0.5, 0.6, 0.8, 1.0];

fn cmd_tables(a: &TablesArgs) -> Result<u8> {
    let mut manifest = RunManifest::new("tables", a);
    let model = load_model(a.model.as_deref(), &mut manifest)?;
    let problem = ProblemArgs {
        model: a.model.clone(),
        rho: 0.2,
        theorem: Theorem::MembershipDependent,
        delay_rate_term: a.delay_rate_term,
        slack: a.slack,
        bounds_lo: -50.0,
        bounds_hi: 50.0,
        bounds_grid: 10001,
        bounds_margin: 1e-6,
    };
    let omegas: Vec<f64> = REFERENCE.iter().map(|r| r.0).collect();
    let cells = run_grid(&model, &problem, &REFERENCE_H, &omegas, &a.search, &mut manifest)?;
    let mut text = String::from("omega,h,gamma_star,reference,deviation\n");
    println!("{:>6} {:>5} {:>8} {:>9} {:>9}", "omega", "h", "gamma*", "reference", "deviation");
    for (w, refs) in REFERENCE {
        for (h, r) in REFERENCE_H.iter().zip(refs) {
            let g = cells.iter().find(|c| c.omega == w && c.h == *h).and_then(|c| c.gamma_star);
            let (gs, dev) = match g {
                Some(g) => (format!("{g:.4}"), format!("{:+.4}", g - r)),
                None => ("-".into(), "-".into()),
            };
            println!("{w:>6} {h:>5} {gs:>8} {r:>9} {dev:>9}");
            text += &format!("{w},{h},{},{r},{}\n", g.map(|g| g.to_string()).unwrap_or_default(), dev);
        }
    }
    manifest.emit(&a.search.out_dir.join("tables.csv"), text.as_bytes())?;
    manifest.finish(&a.search.out_dir.join("manifest.json"))?;
    Ok(if cells.iter().all(|c| c.gamma_star.is_some()) { 0 } else { EXIT_INFEASIBLE })
}

#[derive(Debug, Serialize)]
struct SimSummary {
    t_final: f64,
    samples: usize,
    divergent: bool,
    terminal_norm: f64,
    empirical_gain: Option<f64>,
    certified_gamma: f64,
    gain_within_certificate: Option<bool>,
    lyapunov_max_v: Option<f64>,
    lyapunov_max_forward_difference: Option<f64>,
    delay: DelayTrajectory,
    disturbance: Disturbance,
    phi: Vec<f64>,
}

fn cmd_simulate(a: &SimulateArgs) -> Result<u8> {
    let mut manifest = RunManifest::new("simulate", a);
    let model = load_model(a.model.as_deref(), &mut manifest)?;
    let bytes = read_input(&a.filter, "filter")?;
    manifest.input(a.filter.display().to_string(), &bytes);
    let ff = FilterFile::from_json(std::str::from_utf8(&bytes)?)
        .with_context(|| format!("cannot parse filter file `{}`", a.filter.display()))?;
    ff.filter.check(&model).context("filter does not match the model")?;

    let h = a
        .h
        .or(ff.settings.as_ref().map(|s| s.h))
        .context("no delay bound: pass --h or use a filter file with settings")?;
    let rho = a.rho.or(ff.settings.as_ref().map(|s| s.rho)).unwrap_or(0.0);
    let delay = match a.delay {
        DelayArg::Constant => DelayTrajectory::Constant { value: h },
        DelayArg::Sine => make_delay_sine(h, rho, 1e-3 * h)?,
    };
    let disturbance = match a.disturbance {
        DisturbanceArg::Zero => Disturbance::Zero,
        DisturbanceArg::Pulse => Disturbance::Pulse {
            t0: 1.0,
            t1: 3.0,
            level: 1.0,
        },
        DisturbanceArg::DecayingSine => Disturbance::DecayingSine { a: 0.2, b: 1.0 },
        DisturbanceArg::Noise => Disturbance::SeededNoise {
            seed: a.seed,
            bandwidth: 2.0,
        },
    };
    let mut config = SimConfig::new(&model, h, delay, disturbance.clone());
    if let Some(t) = a.t_final {
        config.t_final = t;
    }
    if let Some(dt) = a.dt {
        config.dt = dt;
    }
    if let PhiArg::Random = a.phi {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let v: Vec<f64> = (0..model.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        config.phi = v.into_iter().map(|x| x / norm).collect();
    }

    let res = simulate_filtering(&model, &ff.filter, &config)?;
    let last = res.len() - 1;
    let terminal_norm = (res.x[last].norm_squared() + res.xh[last].norm_squared()).sqrt();

    let zero_input = matches!(disturbance, Disturbance::Zero);
    let empirical_gain = if a.gain {
        Some(l2_gain_estimate(&res)?)
    } else if !zero_input && matches!(a.phi, PhiArg::Zero) {
        Some(l2_gain_estimate(&res)?)
    } else {
        None
    };
    let lyap = if zero_input && !ff.certificate.is_empty() {
        let weights = LkWeights::from_certificate(&ff.certificate, h)?;
        Some(lyapunov_monitor(&weights, &res)?)
    } else {
        None
    };

    let summary = SimSummary {
        t_final: res.t[last],
        samples: res.len(),
        divergent: res.divergent,
        terminal_norm,
        empirical_gain,
        certified_gamma: ff.gamma,
        gain_within_certificate: empirical_gain.map(|g| g <= ff.gamma),
        lyapunov_max_v: lyap.as_ref().map(|l| l.max_v),
        lyapunov_max_forward_difference: lyap.as_ref().map(|l| l.max_forward_difference),
        delay,
        disturbance,
        phi: config.phi.clone(),
    };
    manifest.emit(&a.csv, res.to_csv().as_bytes())?;
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    manifest.emit(&a.summary, text.as_bytes())?;
    manifest.finish(&manifest_path_for(&a.summary))?;

    print!("terminal norm {terminal_norm:.3e} at t = {}", summary.t_final);
    if let Some(g) = empirical_gain {
        print!("; empirical gain {g:.4} vs certified {:.4}", ff.gamma);
    }
    println!();
    Ok(0)
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    trials: usize,
    seed: u64,
    lemma1_min_margin: f64,
    lemma1_failures: Vec<u64>,
    lambda_cases: usize,
    lambda_max_deviation: f64,
    lambda_failures: Vec<u64>,
    passed: bool,
}

fn random_spd(rng: &mut impl Rng, m: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(m, m) * 0.1
}

fn cmd_verify(a: &VerifyArgs) -> Result<u8> {
    let mut master = ChaCha8Rng::seed_from_u64(a.seed);
    let mut min_margin = f64::INFINITY;
    let mut lemma_fail = Vec::new();
    for _ in 0..a.trials {
        let s: u64 = master.gen();
        let summary = lemma1_monte_carlo(&mut ChaCha8Rng::seed_from_u64(s), 1, a.tol)?;
        min_margin = min_margin.min(summary.min_margin);
        if !summary.passed {
            lemma_fail.push(s);
        }
    }

    let mut coeffs = LAMBDA_COEFFS;
    if a.corrupt_lambda {
        coeffs[1][2] += 0.5;
    }
    let mut max_dev: f64 = 0.0;
    let mut lambda_fail = Vec::new();
    for _ in 0..a.lambda_cases {
        let s: u64 = master.gen();
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let h = rng.gen_range(0.1..2.0);
        let m = 2 * rng.gen_range(1..=3);
        let z = random_spd(&mut rng, m);
        let dev = check_lambda_identity_with(h, &z, &coeffs)?;
        max_dev = max_dev.max(dev);
        if !(dev < 1e-10) {
            lambda_fail.push(s);
        }
    }

    let passed = lemma_fail.is_empty() && lambda_fail.is_empty();
    let min_shown = if a.trials == 0 { 0.0 } else { min_margin };
    println!(
        "lemma1 trials={} min_margin={:.3e} failures={}; lambda cases={} max_dev={:.3e} failures={}; {}",
        a.trials,
        min_shown,
        lemma_fail.len(),
        a.lambda_cases,
        max_dev,
        lambda_fail.len(),
        if passed { "PASS" } else { "FAIL" }
    );
    for s in &lemma_fail {
        eprintln!("integral inequality violated: instance seed {s}");
    }
    for s in &lambda_fail {
        eprintln!("Lambda identity mismatch: instance seed {s}");
    }
    if let Some(path) = &a.report {
        let report = VerifyReport {
            trials: a.trials,
            seed: a.seed,
            lemma1_min_margin: min_shown,
            lemma1_failures: lemma_fail,
            lambda_cases: a.lambda_cases,
            lambda_max_deviation: max_dev,
            lambda_failures: lambda_fail,
            passed,
        };
        let mut manifest = RunManifest::new("verify", a);
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        manifest.emit(path, text.as_bytes())?;
        manifest.finish(&manifest_path_for(path))?;
    }
    Ok(if passed { 0 } else { EXIT_INFEASIBLE })
}

fn cmd_export_sdpa(a: &ExportArgs) -> Result<u8> {
    let mut manifest = RunManifest::new("export-sdpa", a);
    let model = load_model(a.problem.model.as_deref(), &mut manifest)?;
    let settings = a.problem.settings(&model, a.h, a.omega)?;
    let problem = sdp::canonicalize(&settings.build(&model, a.gamma)?)?;
    let text = sdp::export_sdpa(&problem);
    manifest.emit(&a.out, text.as_bytes())?;
    manifest.finish(&a.manifest.clone().unwrap_or_else(|| manifest_path_for(&a.out)))?;
    println!(
        "mDIM = {}, {} blocks, written to {}",
        problem.num_vars,
        problem.blocks.len(),
        a.out.display()
    );
    Ok(0)
}
