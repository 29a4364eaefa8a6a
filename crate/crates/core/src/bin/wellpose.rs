use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use wellpose::admissibility::{self, SweepAxes, Verdict};
use wellpose::bench;
use wellpose::check::run_checks;
use wellpose::config::{defaults_help, emit_config, parse_config, RunConfig};
use wellpose::fields::{fmt17, ScalarField2D};
use wellpose::output::{self, ResumeLog};
use wellpose::reversal::{solve_decomposition, ReversedPoiseuilleProblem};
use wellpose::solver::run_forward;
use wellpose::Error;

/// Weakly-compressible channel flow toolkit: steady benchmarks, reversed-time
/// decomposition and admissibility classification of initial data.
#[derive(Parser, Debug)]
#[command(name = "wellpose", version)]
struct Cli {
    /// Configuration file of `section.key=value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Steady residual of the Poiseuille benchmark.
    Bench,
    /// One forward run from the `init.*` data: trajectory CSV and snapshots.
    Forward,
    /// Reversed-time decomposition table with numeric and closed-form limits.
    Reverse,
    /// Classify every point of the `sweep.*` grid.
    Sweep,
    /// Run the built-in invariant suite.
    Check,
    /// Print the effective configuration in canonical form.
    EmitConfig,
}

enum Failure {
    Usage(String),
    Check(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Failure::Io(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

struct Ctx {
    cfg: RunConfig,
    config_text: String,
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            let _ = writeln!(std::io::stdout(), "{}", msg.as_ref());
        }
    }
}

fn main() -> ExitCode {
    let cmd = Cli::command().after_long_help(format!("Configuration keys and defaults:\n{}", defaults_help()));
    let cli = match cmd.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Check(m)) => {
            eprintln!("failed: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config_text = match &cli.config {
        Some(path) => fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let cfg = parse_config(&config_text)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let config_text = if cli.config.is_some() { config_text } else { emit_config(&cfg) };
    let ctx = Ctx { cfg, config_text, out, quiet: cli.quiet };
    match cli.command {
        Command::Bench => bench_cmd(&ctx),
        Command::Forward => forward_cmd(&ctx),
        Command::Reverse => reverse_cmd(&ctx),
        Command::Sweep => sweep_cmd(&ctx),
        Command::Check => check_cmd(&ctx),
        Command::EmitConfig => {
            let _ = write!(std::io::stdout(), "{}", emit_config(&ctx.cfg));
            Ok(())
        }
    }
}

fn bench_cmd(ctx: &Ctx) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let grid = cfg.grid()?;
    let b = cfg.benchmark()?;
    b.check_grid(&grid)?;
    let vel = b.velocity_field(grid, cfg.fluid.mu, 1.0);
    let rho = ScalarField2D::constant(grid, cfg.fluid.rho0);
    let p = ScalarField2D::from_fn(grid, |x, _| cfg.px * x);
    let report = bench::steady_residual(&vel, &rho, &p, &cfg.fluid, cfg.fluid.f, cfg.run.tol_residual);
    let text = format!(
        "benchmark={} nx={} ny={} peak_velocity={} reynolds={}\n{}\n",
        b.name(),
        grid.nx(),
        grid.ny(),
        fmt17(b.peak_velocity(cfg.fluid.mu)),
        fmt17(cfg.fluid.reynolds(b.peak_velocity(cfg.fluid.mu), b.h())),
        report.record()
    );
    output::write_file(&ctx.out.join(output::BENCH_FILE), &text)?;
    ctx.say(text.trim_end());
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Check(format!("steady residual {} exceeds {}", report.max_norm, report.tolerance)))
    }
}

fn forward_cmd(ctx: &Ctx) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let grid = cfg.grid()?;
    let b = cfg.benchmark()?;
    let spec = admissibility::InitialDataSpec::new(cfg.init.alpha, cfg.init.eps, cfg.init.k)?;
    let initial = admissibility::generate_initial(&spec, &b, grid, &cfg.fluid)?;
    let params = spec.forced_params(&b, &cfg.fluid);
    let mut opts = cfg.run_options().with_reference(b.velocity_field(grid, cfg.fluid.mu, spec.alpha));
    if cfg.run.freeze_dt {
        opts = opts.with_fixed_dt(wellpose::solver::stable_dt(&initial, &params, cfg.run.cfl)?);
    }
    let traj = run_forward(&initial, &params, &opts)?;
    let files = output::write_trajectory(&ctx.out, &traj)?;
    let last = traj.last();
    ctx.say(format!(
        "steps={} t={} diverged={} l2_distance={} files={}",
        traj.steps,
        fmt17(last.t),
        traj.diverged,
        fmt17(last.diagnostics.l2_distance_to_reference.unwrap_or(f64::NAN)),
        files.len()
    ));
    Ok(())
}

fn reverse_cmd(ctx: &Ctx) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let r = &cfg.reverse;
    let prob = ReversedPoiseuilleProblem::from_grid(&cfg.grid()?, cfg.fluid.mu, cfg.px, r.wall_margin)?;
    let sol = solve_decomposition(&prob, r.j0, r.t0, r.t_end, r.steps)?;
    let path = ctx.out.join(output::REVERSE_FILE);
    fs::create_dir_all(&ctx.out)?;
    let mut w = BufWriter::new(File::create(&path)?);
    output::write_reverse_table(&sol, &mut w)?;
    w.flush()?;
    let worst = (0..sol.ys.len()).map(|k| sol.relative_difference(k)).fold(0.0, f64::max);
    ctx.say(format!("heights={} max_rel_diff={} failures={}", sol.ys.len(), fmt17(worst), sol.failures.len()));
    for (k, msg) in &sol.failures {
        eprintln!("y={}: {msg}", fmt17(sol.ys[*k]));
    }
    if !sol.failures.is_empty() || worst.is_nan() || worst > r.tol {
        return Err(Failure::Check(format!("numeric and closed-form limits differ by {worst:e} (tolerance {})", r.tol)));
    }
    Ok(())
}

fn threads_from_env() -> Result<usize, Failure> {
    match std::env::var("WELLPOSE_THREADS") {
        Ok(v) => v.trim().parse().map_err(|_| Failure::Usage(format!("WELLPOSE_THREADS='{v}' is not a count"))),
        Err(_) => Ok(0),
    }
}

fn sweep_cmd(ctx: &Ctx) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let grid = cfg.grid()?;
    let b = cfg.benchmark()?;
    let axes = SweepAxes::new(cfg.sweep.alpha.clone(), cfg.sweep.eps.clone(), cfg.sweep.k.clone())?;
    let threads = threads_from_env()?;
    let done = output::load_resume(&ctx.out, &axes)?;
    if !done.is_empty() {
        ctx.say(format!("resuming: {} of {} points already classified", done.len(), axes.len()));
    }
    let log = Mutex::new(ResumeLog::open(&ctx.out)?);
    let log_error = Mutex::new(None);
    let on_done = |i: usize, r: &admissibility::ParamPointResult| {
        if let Err(e) = log.lock().expect("resume log lock").record(i, r) {
            log_error.lock().expect("error slot lock").get_or_insert(e);
        }
        ctx.say(format!("point {i}: {}", r.csv_row()));
    };
    let opts = cfg.classify_options();
    let set = admissibility::sweep(&axes, &b, grid, &cfg.fluid, &opts, threads, &done, &on_done)?;
    if let Some(e) = log_error.into_inner().expect("error slot lock") {
        return Err(e.into());
    }
    write_with(&ctx.out.join(output::SWEEP_FILE), |w| set.write_csv(w))?;
    output::write_file(&ctx.out.join(output::SWEEP_SUMMARY_FILE), &output::sweep_summary_json(&set, &ctx.config_text))?;
    write_with(&ctx.out.join(output::SWEEP_TIMING_FILE), |w| output::write_sweep_timing(&set, w))?;
    log.into_inner().expect("resume log lock").finish(&ctx.out)?;
    ctx.say(format!(
        "points={} admissible={} inadmissible={} inconclusive={}",
        set.results.len(),
        set.count(Verdict::Admissible),
        set.count(Verdict::Inadmissible),
        set.count(Verdict::Inconclusive)
    ));
    Ok(())
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()
}

fn check_cmd(ctx: &Ctx) -> Result<(), Failure> {
    let outcomes = run_checks();
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    for c in &outcomes {
        if !c.passed || !ctx.quiet {
            let _ = writeln!(std::io::stdout(), "{}", c.line());
        }
    }
    ctx.say(format!("{} checks, {} failed", outcomes.len(), failed));
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} checks failed")));
    }
    Ok(())
}
