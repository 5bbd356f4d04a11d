use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bicycle_critic_sim::config::{resolve_scenario, Config};
use bicycle_critic_sim::trace_csv::{read_trace, write_coefficients, write_trace};
use bicycle_critic_core::dynamics::stability_eigenvalues;
use bicycle_critic_core::harness::{compare, metrics, run, Controller, RunMetrics, RunTrace, Sensing};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(version, about = "Adaptive critic-tuned fuzzy roll control for a linearized bicycle")]
struct Cli {
    /// TOML file overriding the built-in defaults (see `dump-config`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Adaptive,
    Frozen,
}

#[derive(Clone, Copy, ValueEnum)]
enum SensingArg {
    Ideal,
    Imu,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and write its trace.
    Simulate {
        /// Preset (case1, case2, case3a, case3b) or path to a scenario file.
        #[arg(long)]
        scenario: String,
        #[arg(long, value_enum, default_value = "adaptive")]
        controller: ControllerArg,
        #[arg(long, value_enum, default_value = "ideal")]
        sensing: SensingArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the 27 consequent coefficients after every control step.
        #[arg(long)]
        coefficients: Option<PathBuf>,
    },
    /// Overshoot, settling time and tracking error of a trace.
    Metrics {
        #[arg(long = "in")]
        input: PathBuf,
        /// Settling band, deg.
        #[arg(long)]
        band: Option<f64>,
    },
    /// Side-by-side metrics of two traces.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        band: Option<f64>,
    },
    /// Open-loop eigenvalue real parts over a speed range.
    Stability {
        #[arg(long, default_value_t = 0.0)]
        v_min: f64,
        #[arg(long, default_value_t = 10.0)]
        v_max: f64,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
    },
    /// Print the effective configuration as TOML.
    DumpConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Simulate {
            scenario,
            controller,
            sensing,
            seed,
            out,
            coefficients,
        } => simulate(&cfg, &scenario, controller, sensing, seed, &out, coefficients.as_deref()),
        Command::Metrics { input, band } => {
            let m = metrics_of(&input, band.unwrap_or(cfg.metrics.band))?;
            print_metrics(&m);
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { a, b, band } => {
            let band = band.unwrap_or(cfg.metrics.band);
            let report = compare(&metrics_of(&a, band)?, &metrics_of(&b, band)?);
            println!("{report}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Stability { v_min, v_max, step } => {
            stability(&cfg, v_min, v_max, step)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpConfig => {
            print!("{}", cfg.to_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn simulate(
    cfg: &Config,
    name: &str,
    controller: ControllerArg,
    sensing: SensingArg,
    seed: u64,
    out: &Path,
    coefficients: Option<&Path>,
) -> Result<ExitCode> {
    let mut scenario = resolve_scenario(name, cfg)?;
    scenario.seed = seed;
    scenario.controller = match controller {
        ControllerArg::Adaptive => Controller::Adaptive(cfg.learning),
        ControllerArg::Frozen => Controller::Frozen,
    };
    scenario.sensing = match sensing {
        SensingArg::Ideal => Sensing::Ideal,
        SensingArg::Imu => cfg.imu_sensing(),
    };
    scenario.record_coefficients = coefficients.is_some();
    let loop_cfg = cfg.loop_config()?;

    let (trace, failure) = match run(&scenario, &loop_cfg) {
        Ok(t) => (t, None),
        Err(f) => (f.trace.clone(), Some(f)),
    };
    save(out, &trace, |w, t| write_trace(w, t))?;
    if let Some(path) = coefficients {
        save(path, &trace, |w, t| write_coefficients(w, t).map(|_| ()))?;
    }
    if let Some(f) = failure {
        eprintln!("{}: run aborted: {f}; partial trace written to {}", scenario.name, out.display());
        return Ok(ExitCode::FAILURE);
    }
    if let Some(m) = metrics(&trace, cfg.metrics.band) {
        print_metrics(&m);
    }
    Ok(ExitCode::SUCCESS)
}

fn save<E>(path: &Path, trace: &RunTrace, f: impl FnOnce(&mut BufWriter<File>, &RunTrace) -> Result<(), E>) -> Result<()>
where
    E: std::error::Error + Send + Sync + 'static,
{
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w, trace).with_context(|| format!("writing {}", path.display()))?;
    w.flush()?;
    Ok(())
}

fn metrics_of(path: &Path, band: f64) -> Result<RunMetrics> {
    if !(band > 0.0) {
        bail!("settling band must be positive");
    }
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let trace = read_trace(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    metrics(&trace, band).context("empty trace")
}

fn print_metrics(m: &RunMetrics) {
    println!("overshoot_deg      {}", m.overshoot);
    match m.settling_time {
        Some(t) => println!("settling_time_s    {t}"),
        None => println!("settling_time_s    not settled"),
    }
    println!("tracking_rmse_deg  {}", m.tracking_rmse);
    println!("control_effort     {}", m.control_effort);
    println!("max_torque_nm      {}", m.max_torque);
    println!("converged          {}", m.converged);
}

fn stability(cfg: &Config, v_min: f64, v_max: f64, step: f64) -> Result<()> {
    if !(step > 0.0) || !(v_max >= v_min) || v_min < 0.0 {
        bail!("need 0 <= v-min <= v-max and step > 0");
    }
    let n = ((v_max - v_min) / step + 1e-9).floor() as usize;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(
        out,
        "{:>8} {:>12} {:>12} {:>12} {:>12}  stable",
        "v", "re1", "re2", "re3", "re4"
    )?;
    for i in 0..=n {
        let v = v_min + i as f64 * step;
        let eig = stability_eigenvalues(&cfg.bicycle.params(v))?;
        let stable = eig[0].re < 0.0;
        writeln!(
            out,
            "{:>8.3} {:>12.6} {:>12.6} {:>12.6} {:>12.6}  {}",
            v,
            eig[0].re,
            eig[1].re,
            eig[2].re,
            eig[3].re,
            if stable { "yes" } else { "no" }
        )?;
    }
    Ok(())
}
