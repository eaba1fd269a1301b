mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cyberinv_core::actuarial::{
    optimal_losses, premium_report_baseline, prevention_gap, report_from_samples, PremiumReport,
};
use cyberinv_core::gordon_loeb::{enbis, static_optimum, BreachFamily};
use cyberinv_core::hawkes::{
    expected_count, expected_intensity, intensity_variance, lambda_max_heuristic, simulate_indexed,
};
use cyberinv_core::hjb::{solve, Solution};
use cyberinv_core::persist;
use cyberinv_core::poisson::{lambda_baseline, lambda_expectation_matched, solve_poisson};
use cyberinv_core::rng::RngStreams;
use cyberinv_core::strategy::{extract_policy, gain_table, Benchmark, GainSettings};
use cyberinv_core::Error;
use serde::Serialize;

use config::{Diagnostics, PoissonMode, RunConfig};

#[derive(Parser)]
#[command(
    name = "cyberinv",
    version,
    about = "Dynamic cybersecurity investment under clustered attacks"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides run.out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    mc_paths: Option<usize>,
    /// Desk-scale grid: d_lambda = 3, d_h = 1, lambda_max = 120.
    #[arg(long, global = true)]
    coarse: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Baseline,
    Expectation,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchmarkArg {
    Constant,
    Poisson,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and print it with defaults filled in.
    Validate,
    /// Solve for the value function and feedback control.
    Solve {
        /// Also export the field as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Solve the constant-intensity benchmark.
    SolvePoisson {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        csv: bool,
    },
    /// Control traces along simulated attack paths.
    Trace {
        /// Field metadata; defaults to <out>/hawkes.json.
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        n_paths: Option<usize>,
        #[arg(long)]
        t_init: Option<f64>,
        #[arg(long)]
        h_init: Option<f64>,
    },
    /// Relative gain tables.
    Gain {
        #[arg(long)]
        field: Option<PathBuf>,
        /// Constant-intensity field for the poisson benchmark.
        #[arg(long)]
        poisson: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "constant")]
        benchmark: BenchmarkArg,
    },
    /// Loss spreads and premia with and without the optimal control.
    Premium {
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Static single-period investment optimum.
    StaticGl,
    /// Intensity and attack-count moments over the horizon.
    Moments,
}

enum Failure {
    Config(String),
    Solver(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Io(_) => 4,
        }
    }
    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Solver(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::InvalidParameter { .. }
            | Error::Unstable { .. }
            | Error::Argument(_)
            | Error::Config(_) => Failure::Config(m),
            Error::Policy(_)
            | Error::Numerical(_)
            | Error::Solver { .. }
            | Error::UndefinedGain(_) => Failure::Solver(m),
            Error::Format(_) | Error::Io(_) => Failure::Io(m),
        }
    }
}

impl From<Diagnostics> for Failure {
    fn from(d: Diagnostics) -> Self {
        Failure::Config(d.to_string().trim_end().to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn load_config(common: &Common) -> Outcome<RunConfig> {
    let overrides = config::env_overrides(std::env::vars());
    let mut cfg = match &common.config {
        Some(p) => config::from_file(p, &overrides)?,
        None => config::from_str("", &overrides)?,
    };
    if let Some(o) = &common.out {
        cfg.run.out = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.run.threads = t;
    }
    if let Some(n) = common.mc_paths {
        cfg.premium.mc_paths = n;
    }
    if common.coarse {
        cfg.grid.make_coarse();
    }
    // flags can break invariants the file satisfied
    let cfg = config::from_str(&cfg.to_toml(), &[])?;
    Ok(cfg)
}

fn field_path(cfg: &RunConfig, given: &Option<PathBuf>, stem: &str) -> PathBuf {
    given
        .clone()
        .unwrap_or_else(|| cfg.run.out.join(format!("{stem}.json")))
}

fn load_field(path: &Path) -> Outcome<Solution> {
    persist::load_solution(path).map_err(|e| match e {
        Error::Io(io) => Failure::Io(format!("{}: {io}", path.display())),
        other => other.into(),
    })
}

fn save(sol: &Solution, out: &Path, stem: &str, csv: bool) -> Outcome<()> {
    let meta = persist::save_solution(sol, out, stem)?;
    persist::save_quality(&sol.report, &out.join(format!("{stem}.quality.json")))?;
    if csv {
        persist::write_field_csv(sol, &out.join(format!("{stem}_field.csv")))?;
    }
    let r = &sol.report;
    println!(
        "wrote {} ({} steps, {} monotonicity flags, {:.2} s)",
        meta.display(),
        r.integrator.n_steps,
        r.monotone_violations_lambda + r.monotone_violations_h,
        r.wall_seconds
    );
    Ok(())
}

fn poisson_intensity(cfg: &RunConfig, mode: PoissonMode) -> Outcome<f64> {
    let h = cfg.hawkes();
    Ok(match mode {
        PoissonMode::Baseline => lambda_baseline(&h),
        PoissonMode::Expectation => lambda_expectation_matched(&h, cfg.costs.horizon)?,
    })
}

fn mode_name(mode: PoissonMode) -> &'static str {
    match mode {
        PoissonMode::Baseline => "baseline",
        PoissonMode::Expectation => "expectation",
    }
}

#[derive(Serialize)]
struct StaticReport {
    family: BreachFamily,
    v: f64,
    a: f64,
    b: f64,
    p: f64,
    loss: f64,
    z_star: f64,
    enbis: f64,
    bound: f64,
}

#[derive(Serialize)]
struct MomentsSummary {
    horizon: f64,
    expected_count: f64,
    lambda_max_heuristic: f64,
    lambda_baseline: f64,
    lambda_expectation_matched: f64,
}

#[derive(Serialize)]
struct PremiumRow {
    baseline: PremiumReport,
    optimal: PremiumReport,
    premium_reduction_pct: f64,
    std_reduction_pct: f64,
}

fn run(cli: Cli) -> Outcome<()> {
    let cfg = load_config(&cli.common)?;
    if cfg.run.threads > 0 {
        // a second call in the same process fails harmlessly
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.run.threads)
            .build_global();
    }
    let out = cfg.run.out.clone();
    match cli.command {
        Command::Validate => {
            print!("{}", cfg.to_toml());
        }
        Command::Solve { csv } => {
            let sol = solve(&cfg.grid(), &cfg.model(), &cfg.solver())?;
            save(&sol, &out, "hawkes", csv)?;
        }
        Command::SolvePoisson { mode, csv } => {
            let mode = match mode {
                Some(ModeArg::Baseline) => PoissonMode::Baseline,
                Some(ModeArg::Expectation) => PoissonMode::Expectation,
                None => cfg.benchmark.poisson_mode,
            };
            let lp = poisson_intensity(&cfg, mode)?;
            let sol = solve_poisson(&cfg.grid(), lp, &cfg.breach(), &cfg.costs(), &cfg.solver())?;
            println!("constant intensity {lp}");
            save(&sol, &out, &format!("poisson_{}", mode_name(mode)), csv)?;
        }
        Command::Trace {
            field,
            n_paths,
            t_init,
            h_init,
        } => {
            let sol = load_field(&field_path(&cfg, &field, "hawkes"))?;
            let n = n_paths.unwrap_or(cfg.trace.n_paths);
            let t0 = t_init.unwrap_or(cfg.trace.t_init);
            let h0 = h_init.unwrap_or(cfg.trace.h_init);
            let streams = RngStreams::new(cfg.run.seed);
            let hw = sol.model.hawkes;
            let mut paths = Vec::with_capacity(n);
            for i in 0..n as u64 {
                let path = simulate_indexed(&hw, sol.grid().horizon, &streams, i)?;
                let trace = extract_policy(&sol, &path, t0, h0, cfg.trace.lookup)?;
                persist::write_trace_csv(&trace, &out.join(format!("trace_{i}.csv")))?;
                paths.push((i, path));
            }
            persist::write_paths_csv(&paths, &out.join("paths.csv"))?;
            println!("wrote {n} traces to {}", out.display());
        }
        Command::Gain {
            field,
            poisson,
            benchmark,
        } => {
            let sol = load_field(&field_path(&cfg, &field, "hawkes"))?;
            let settings = GainSettings {
                value_lookup: cfg.benchmark.value_lookup,
                policy_lookup: cfg.benchmark.policy_lookup,
            };
            let mut points = Vec::new();
            for &t in &cfg.gain.t {
                for &l in &cfg.gain.lambda {
                    for &h in &cfg.gain.h {
                        points.push((t, l, h));
                    }
                }
            }
            let (kind, bench_field) = match benchmark {
                BenchmarkArg::Constant => (Benchmark::Constant, None),
                BenchmarkArg::Poisson => {
                    let stem = format!("poisson_{}", mode_name(cfg.benchmark.poisson_mode));
                    let p = load_field(&field_path(&cfg, &poisson, &stem))?;
                    let cyberinv_core::hjb::FieldKind::Poisson { intensity } = p.kind else {
                        return Err(Failure::Config(
                            "benchmark field is not a constant-intensity field".into(),
                        ));
                    };
                    let kind = if intensity == lambda_baseline(&sol.model.hawkes) {
                        Benchmark::PoissonBaseline
                    } else {
                        Benchmark::PoissonMatched
                    };
                    (kind, Some(p))
                }
            };
            let rows = gain_table(&points, &sol, kind, bench_field.as_ref(), &settings)?;
            let path = out.join(format!("gain_{}.csv", kind.name()));
            persist::write_gain_csv(&rows, &path)?;
            for r in &rows {
                println!(
                    "t={} lambda={} h={} gain={:.4}%",
                    r.t, r.lambda, r.h, r.gain_pct
                );
            }
        }
        Command::Premium { field } => {
            let sol = load_field(&field_path(&cfg, &field, "hawkes"))?;
            let (hw, bm) = (cfg.hawkes(), cfg.breach());
            let mut rows = Vec::new();
            let mut json = Vec::new();
            for &ev in &cfg.premium.eta_var {
                let costs = cyberinv_core::dynamics::CostParams {
                    eta_var: ev,
                    ..cfg.costs()
                };
                let base = premium_report_baseline(
                    &hw,
                    &bm,
                    &costs,
                    cfg.premium.theta,
                    cfg.premium.mc_paths,
                    cfg.run.seed,
                )?;
                let samples =
                    optimal_losses(&sol, &hw, &bm, &costs, cfg.premium.mc_paths, cfg.run.seed)?;
                persist::write_losses_csv(
                    cfg.run.seed,
                    &samples,
                    &out.join(format!("losses_optimal_eta_var_{ev}.csv")),
                )?;
                let opt = report_from_samples("optimal", ev, &samples, cfg.premium.theta)?;
                let (dp, ds) = prevention_gap(&base, &opt)?;
                println!(
                    "eta_var={ev}: std {:.2} -> {:.2}, premium {:.2} -> {:.2} ({dp:.2}% lower)",
                    base.loss_std, opt.loss_std, base.premium, opt.premium
                );
                json.push(PremiumRow {
                    baseline: base.clone(),
                    optimal: opt.clone(),
                    premium_reduction_pct: dp,
                    std_reduction_pct: ds,
                });
                rows.push((base, opt));
            }
            persist::write_premium_tables(
                &rows,
                &out.join("std_table.csv"),
                &out.join("premium_table.csv"),
            )?;
            persist::write_json(&json, &out.join("premium_reports.json"))?;
        }
        Command::StaticGl => {
            let m = cfg.breach();
            let (p, loss) = (cfg.static_gl.p, cfg.static_gl.loss);
            let z = static_optimum(&m, p, loss)?;
            let report = StaticReport {
                family: m.family,
                v: m.v,
                a: m.a,
                b: m.b,
                p,
                loss,
                z_star: z,
                enbis: enbis(&m, p, loss, z)?,
                bound: m.v * p * loss / std::f64::consts::E,
            };
            persist::write_json(&report, &out.join("static_gl.json"))?;
            println!("z* = {z}");
        }
        Command::Moments => {
            let hw = cfg.hawkes();
            let horizon = cfg.costs.horizon;
            let steps = 20;
            let mut rows = Vec::with_capacity(steps + 1);
            for k in 0..=steps {
                let t = horizon * k as f64 / steps as f64;
                rows.push((
                    t,
                    expected_intensity(&hw, t)?,
                    expected_count(&hw, t)?,
                    intensity_variance(&hw, t)?,
                ));
            }
            let path = out.join("moments.csv");
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            let mut text = String::from("t,mean_intensity,expected_count,intensity_variance\n");
            for (t, a, b, c) in &rows {
                text.push_str(&format!("{t},{a},{b},{c}\n"));
            }
            std::fs::write(&path, text).map_err(Error::from)?;
            let summary = MomentsSummary {
                horizon,
                expected_count: expected_count(&hw, horizon)?,
                lambda_max_heuristic: lambda_max_heuristic(&hw, horizon)?,
                lambda_baseline: lambda_baseline(&hw),
                lambda_expectation_matched: lambda_expectation_matched(&hw, horizon)?,
            };
            persist::write_json(&summary, &out.join("moments.json"))?;
            println!(
                "E[N_T] = {:.4}, lambda_max = {:.2}",
                summary.expected_count, summary.lambda_max_heuristic
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
