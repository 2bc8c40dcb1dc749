use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lanlab::density::{density_curve, write_density_csv, MixtureDensitySpec};
use lanlab::estimate::write_estimate_csv;
use lanlab::harness::{
    run_estimator_experiment, run_lan_experiment, run_scaling_study, run_tail_checks, simulate_replication,
    write_scaling_csv, write_tails_csv, ExperimentConfig, ExperimentReport,
};
use lanlab::lan::write_lan_csv;
use lanlab::model::{probe_assumptions, ProbeBoxes};
use lanlab::simulate::{write_latent_sidecar, Retention};
use lanlab::Error;

#[derive(Parser)]
#[command(name = "lanlab", version, about = "Simulation and likelihood-ratio diagnostics for jump-diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `experiment.replications`.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads; falls back to LANLAB_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one replication and write the path as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Replication index.
        #[arg(long, default_value_t = 0)]
        rep: u64,
        /// Also write the latent randomness as a binary sidecar.
        #[arg(long)]
        latent: bool,
        /// Retain the fine sub-grid in the sidecar.
        #[arg(long)]
        fine: bool,
    },
    /// Transition density on a grid of end points.
    Density {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long)]
        delta: f64,
        /// Defaults to `model.theta0`.
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<f64>,
        /// Half-width of the end-point grid around `x`.
        #[arg(long, default_value_t = 5.0)]
        half_width: f64,
        #[arg(long, default_value_t = 1001)]
        points: usize,
    },
    /// Laws of the likelihood-ratio statistics.
    Lan {
        #[command(flatten)]
        common: Common,
    },
    /// Law of the standardized drift estimator.
    Estimate {
        #[command(flatten)]
        common: Common,
    },
    /// Step-size scaling of the remainder moments.
    Scaling {
        #[command(flatten)]
        common: Common,
    },
    /// Poisson-tail and jump-size probability checks.
    Tails {
        #[command(flatten)]
        common: Common,
    },
    /// Runtime checks of the model assumptions.
    Probe {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
}

enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(format!("i/o error: {e}"))
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", common.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(reps) = common.reps {
        cfg.experiment.replications = reps;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.display().to_string();
    }
    cfg.validate()?;
    let out = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_report(dir: &Path, report: &ExperimentReport) -> Result<(), Failure> {
    let mut w = create(dir, "report.json")?;
    report.write_json(&mut w)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn threads(common: &Common) -> Result<Option<usize>, Failure> {
    if let Some(t) = common.threads {
        return Ok(Some(t));
    }
    match std::env::var("LANLAB_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Usage(format!("LANLAB_THREADS must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { common, rep, latent, fine } => {
            let (cfg, out) = load(&common)?;
            let retention = match (latent, fine) {
                (_, true) => Retention::FinePath,
                (true, false) => Retention::Increments,
                _ => Retention::None,
            };
            let record = simulate_replication(&cfg, rep, retention)?;
            let mut w = create(&out, "path.csv")?;
            record.write_csv(&mut w)?;
            w.flush()?;
            if retention != Retention::None {
                let mut w = create(&out, "path.lat")?;
                write_latent_sidecar(&record, &mut w)?;
                w.flush()?;
            }
        }
        Command::Density { common, x, delta, theta, half_width, points } => {
            let (cfg, out) = load(&common)?;
            if points < 2 || !(half_width > 0.0) {
                return Err(Failure::Usage("density grid needs at least 2 points and a positive half-width".into()));
            }
            let model = cfg.model.build()?;
            let spec = MixtureDensitySpec::new(&model)?;
            let step = 2.0 * half_width / (points - 1) as f64;
            let ys: Vec<f64> = (0..points).map(|i| x - half_width + step * i as f64).collect();
            let curve = density_curve(&spec, theta.unwrap_or(cfg.model.theta0), delta, x, &ys)?;
            let mut w = create(&out, "density.csv")?;
            write_density_csv(&curve, &mut w)?;
            w.flush()?;
        }
        Command::Lan { common } => {
            let (cfg, out) = load(&common)?;
            let run = run_lan_experiment(&cfg)?;
            for (i, samples) in run.samples.iter().enumerate() {
                let mut w = create(&out, &format!("lan_u{i}.csv"))?;
                write_lan_csv(samples, &mut w)?;
                w.flush()?;
            }
            write_report(&out, &run.report)?;
        }
        Command::Estimate { common } => {
            let (cfg, out) = load(&common)?;
            let (report, normality) = run_estimator_experiment(&cfg)?;
            let mut w = create(&out, "estimate.csv")?;
            write_estimate_csv(&normality.results, &mut w)?;
            w.flush()?;
            write_report(&out, &report)?;
        }
        Command::Scaling { common } => {
            let (cfg, out) = load(&common)?;
            let report = run_scaling_study(&cfg)?;
            let mut w = create(&out, "scaling.csv")?;
            write_scaling_csv(&report.slopes, &mut w)?;
            w.flush()?;
            write_report(&out, &report)?;
        }
        Command::Tails { common } => {
            let (cfg, out) = load(&common)?;
            let report = run_tail_checks(&cfg)?;
            let mut w = create(&out, "tails.csv")?;
            write_tails_csv(&report.tails, &mut w)?;
            w.flush()?;
            write_report(&out, &report)?;
        }
        Command::Probe { common, samples } => {
            let (cfg, out) = load(&common)?;
            let model = cfg.model.build()?;
            let boxes = ProbeBoxes::around(cfg.model.theta0);
            let mut rng = cfg.key().aux(0x9b0e);
            let report = probe_assumptions(&model, &boxes, samples, &mut rng)?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Usage(e.to_string()))?;
            fs::write(out.join("probe.json"), format!("{text}\n"))?;
            println!("{text}");
        }
    }
    Ok(())
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Simulate { common, .. }
        | Command::Density { common, .. }
        | Command::Lan { common }
        | Command::Estimate { common }
        | Command::Scaling { common }
        | Command::Tails { common }
        | Command::Probe { common, .. } => common,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let informational = matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            let _ = e.print();
            return if informational { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    let outcome = threads(common(&cli.command)).and_then(|t| match t {
        Some(0) => Err(Failure::Usage("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Usage(e.to_string()))?
            .install(|| run(cli.command)),
        None => run(cli.command),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(2)
        }
    }
}
