mod plots;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};

use weakpc::identities::{run_suite, IdentityGaps, IDENTITY_TOL};
use weakpc::mc::{run_experiment, write_outputs, ExperimentConfig, GridProgress};

const EXIT_USAGE: u8 = 1;
const EXIT_CHECKS: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

const DEMO_CONFIG: &str = r#"
schema_version = 1
replications = 50
base_seed = 2024

[[grid]]
n = 120
t = 120
r = 2
loadings = { alpha = 0.7 }
"#;

#[derive(Parser)]
#[command(name = "weakpc", version, about = "Monte Carlo experiments for principal components under weak factors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Worker threads, or "auto".
        #[arg(long, default_value = "auto", value_parser = parse_threads)]
        threads: Threads,
        /// Override a config entry, e.g. `--set grid.0.n=200`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        overwrite: bool,
        /// Also write SVG line charts next to the plot data.
        #[arg(long)]
        render_plots: bool,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Run a small built-in experiment (N = T = 120, 50 replications).
    Demo {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "auto", value_parser = parse_threads)]
        threads: Threads,
        #[arg(long)]
        overwrite: bool,
    },
    /// Check the exact algebraic identities on random instances.
    Identities {
        #[arg(long, default_value_t = 20_240_601)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
}

#[derive(Clone, Copy, Debug)]
enum Threads {
    Auto,
    Fixed(usize),
}

fn parse_threads(s: &str) -> std::result::Result<Threads, String> {
    if s == "auto" {
        return Ok(Threads::Auto);
    }
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(Threads::Fixed(n)),
        _ => Err(format!("expected a positive integer or \"auto\", got '{s}'")),
    }
}

/// An error together with the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn usage(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_USAGE, err: err.into() }
}

fn runtime(err: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_RUNTIME, err: err.into() }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Run { config, output, threads, overrides, overwrite, render_plots } => {
            load_config(&config, &overrides).and_then(|cfg| run(&cfg, &output, threads, overwrite, render_plots))
        }
        Command::Validate { config } => validate(&config),
        Command::Demo { output, threads, overwrite } => ExperimentConfig::from_toml_str(DEMO_CONFIG)
            .map_err(usage)
            .and_then(|cfg| run(&cfg, &output, threads, overwrite, false)),
        Command::Identities { seed, count } => identities(seed, count),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, err }) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}

fn read_config_text(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(usage)
}

fn load_config(path: &Path, overrides: &[String]) -> std::result::Result<ExperimentConfig, Failure> {
    let text = read_config_text(path)?;
    let cfg = ExperimentConfig::from_toml_with_overrides(&text, overrides)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(usage)?;
    let problems = cfg.diagnostics();
    if let Some(first) = problems.first() {
        for p in &problems[1..] {
            eprintln!("  {p}");
        }
        return Err(usage(anyhow::anyhow!("{first}")));
    }
    Ok(cfg)
}

fn validate(path: &Path) -> std::result::Result<(), Failure> {
    let text = read_config_text(path)?;
    let cfg = ExperimentConfig::from_toml_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(usage)?;
    let problems = cfg.diagnostics();
    if problems.is_empty() {
        let reps = cfg.replications * cfg.grid.len();
        println!("{}: ok ({} grid points, {reps} replications)", path.display(), cfg.grid.len());
        return Ok(());
    }
    for p in &problems {
        println!("{p}");
    }
    Err(usage(anyhow::anyhow!("{} problem(s) in {}", problems.len(), path.display())))
}

fn progress_line(p: &GridProgress) {
    eprintln!(
        "grid {}/{}  N={} T={}  {} reps  {} flagged  {:.1}s",
        p.grid_id + 1,
        p.n_grid,
        p.n,
        p.t,
        p.replications,
        p.flagged,
        p.elapsed_seconds
    );
}

fn run(
    cfg: &ExperimentConfig,
    output: &Path,
    threads: Threads,
    overwrite: bool,
    render_plots: bool,
) -> std::result::Result<(), Failure> {
    // Fail before computing anything if the directory would be refused later.
    weakpc::mc::prepare_output_dir(output, overwrite).map_err(usage)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Threads::Fixed(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building thread pool").map_err(runtime)?;
    let start = Instant::now();
    let run = pool.install(|| run_experiment(cfg, &progress_line)).map_err(runtime)?;
    let summary = write_outputs(output, cfg, &run, true).map_err(runtime)?;
    if render_plots {
        plots::render_dir(&output.join("plots")).map_err(runtime)?;
    }
    println!(
        "wrote {} records to {} in {:.1}s",
        run.records.len(),
        output.display(),
        start.elapsed().as_secs_f64()
    );
    for r in &summary.rates {
        println!("slope  series {} {:<7} {:+.3} (se {:.3})", r.series, r.target.as_str(), r.slope, r.stderr);
    }
    let mut failed = 0;
    for c in &summary.checks {
        let value = c.value.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let status = if c.pass { "PASS" } else { "FAIL" };
        println!("{status}  {:?} {} grid {:?}: {value}", c.kind, c.target.as_str(), c.grid);
        failed += usize::from(!c.pass);
    }
    if failed > 0 {
        return Err(Failure { code: EXIT_CHECKS, err: anyhow::anyhow!("{failed} check(s) failed") });
    }
    Ok(())
}

fn identities(seed: u64, count: usize) -> std::result::Result<(), Failure> {
    let gaps = run_suite(seed, count).map_err(runtime)?;
    type Gap = fn(&IdentityGaps) -> f64;
    let rows: [(&str, Gap); 6] = [
        ("rotation", |g| g.rotation),
        ("translation", |g| g.translation),
        ("symmetric", |g| g.symmetric),
        ("y_decomposition", |g| g.y_decomposition),
        ("decomp_r1", |g| g.decomp_r1),
        ("h_bn", |g| g.h_bn),
    ];
    let mut worst = 0.0_f64;
    for (name, get) in rows {
        let m = gaps.iter().map(get).fold(0.0_f64, f64::max);
        worst = worst.max(m);
        println!("{name:<16} {m:.3e}");
    }
    println!("{count} instances, max gap {worst:.3e} (tolerance {IDENTITY_TOL:e})");
    if worst < IDENTITY_TOL {
        Ok(())
    } else {
        Err(Failure { code: EXIT_CHECKS, err: anyhow::anyhow!("identity gap {worst:e} exceeds {IDENTITY_TOL:e}") })
    }
}
