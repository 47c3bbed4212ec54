//! `chaosep` command-line front end.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use chaosep::dynsys::{mix, Component, MixSpec, Normalization};
use chaosep::io;
use chaosep::metrics::psd_overlay;
use chaosep::pipeline::alpha::train_alpha_estimator;
use chaosep::pipeline::interp::{interpolation_study, range_study};
use chaosep::pipeline::{
    generate_pair, repeat_seeds, run_separation, sweep_alpha, ComponentPair, RunRecord, ScenarioKind,
};
use chaosep::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "chaosep", version, about = "Separate mixed chaotic signals with reservoir computing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write the two component series and their mixture.
    Generate,
    /// Known-α separation: reservoir versus Wiener filter.
    Separate,
    /// Errors over a grid of mixing fractions.
    Sweep,
    /// Train the mixing-fraction estimator and report its calibration.
    EstimateAlpha,
    /// Compare interpolated and directly trained readouts.
    InterpStudy,
}

/// Failure classes with their exit codes.
enum Failure {
    Config(String),
    Output(String),
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Run(_) => 1,
            Failure::Output(_) => 2,
            Failure::Config(_) => 3,
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            Failure::Config(m) => ("config", m),
            Failure::Output(m) => ("output", m),
            Failure::Run(m) => ("run", m),
        };
        format!("chaosep: error[{kind}]: {}", msg.replace('\n', " "))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } => Failure::Config(e.to_string()),
            Error::Io(_) => Failure::Output(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn output_err(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| Failure::Output(format!("{}: {e}", path.display()))
}

fn load_config(cli: &Cli) -> Outcome<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

/// Creates the output directory and checks that it accepts files.
fn prepare_out(dir: &Path) -> Outcome<()> {
    fs::create_dir_all(dir).map_err(|e| Failure::Output(format!("{}: {e}", dir.display())))?;
    let probe = dir.join(".chaosep-write-test");
    fs::write(&probe, b"").map_err(|e| Failure::Output(format!("{}: {e}", dir.display())))?;
    let _ = fs::remove_file(probe);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Run(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Failure::Output(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Outcome<()> {
    let cfg = load_config(cli)?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let work = || -> Outcome<()> {
        match cli.command {
            Command::Generate => {
                prevalidate(&cfg, true)?;
                prepare_out(&out)?;
                cmd_generate(&cfg, &out)
            }
            Command::Separate => {
                prevalidate(&cfg, true)?;
                prepare_out(&out)?;
                cmd_separate(&cfg, &out)
            }
            Command::Sweep => {
                prevalidate(&cfg, false)?;
                prepare_out(&out)?;
                cmd_sweep(&cfg, &out)
            }
            Command::EstimateAlpha => {
                cfg.estimator()?.validate()?;
                prepare_out(&out)?;
                cmd_estimate_alpha(&cfg, &out)
            }
            Command::InterpStudy => {
                cfg.interp().spec.validate()?;
                prepare_out(&out)?;
                cmd_interp(&cfg, &out)
            }
        }
    };
    match cli.jobs {
        Some(0) => Err(Failure::Config("jobs: must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Run(e.to_string()))?
            .install(work),
        None => work(),
    }
}

fn prevalidate(cfg: &RunConfig, needs_alpha: bool) -> Outcome<()> {
    let spec = cfg.scenario();
    spec.validate()?;
    if needs_alpha {
        spec.require_alpha()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct GenerateManifest {
    scenario: &'static str,
    component: Component,
    alpha: f64,
    seed: u64,
    n_samples: usize,
    dt: f64,
    s1_normalization: Normalization,
    s2_normalization: Normalization,
}

fn cmd_generate(cfg: &RunConfig, out: &Path) -> Outcome<()> {
    let spec = cfg.scenario();
    let alpha = spec.require_alpha()?;
    let n = cfg
        .n_samples
        .unwrap_or(spec.reservoir.washout + spec.train_len + spec.test_len);
    if n < 2 {
        return Err(Failure::Config("n_samples: must be >= 2".into()));
    }
    let (a, b) = generate_pair(&spec, spec.seed, n)?;
    let fit = n.min(spec.reservoir.washout + spec.train_len);
    let raw1 = a.component(spec.component);
    let raw2 = b.component(spec.component);
    let n1 = Normalization::fit(&raw1.samples[..fit])?;
    let n2 = Normalization::fit(&raw2.samples[..fit])?;
    let s1 = raw1.normalized_with(n1);
    let s2 = raw2.normalized_with(n2);
    let u = mix(&s1, &s2, MixSpec::new(alpha)?)?;

    for (name, series) in [("s1.csv", &s1), ("s2.csv", &s2), ("mixed.csv", &u)] {
        let p = out.join(name);
        io::write_series(&p, series).map_err(output_err(&p))?;
    }
    for (name, tr) in [("trajectory1.csv", &a), ("trajectory2.csv", &b)] {
        let p = out.join(name);
        io::write_trajectory(&p, tr).map_err(output_err(&p))?;
    }
    write_json(
        &out.join("manifest.json"),
        &GenerateManifest {
            scenario: spec.kind.as_str(),
            component: spec.component,
            alpha,
            seed: spec.seed,
            n_samples: n,
            dt: u.dt,
            s1_normalization: n1,
            s2_normalization: n2,
        },
    )
}

fn cmd_separate(cfg: &RunConfig, out: &Path) -> Outcome<()> {
    let spec = cfg.scenario();
    let r = run_separation(&spec)?;
    let runs: Vec<RunRecord> = [r.rc, r.wiener]
        .into_iter()
        .map(|report| RunRecord {
            scenario: spec.kind,
            alpha: r.alpha,
            seed: r.seed,
            report,
        })
        .collect();
    let p = out.join("report.csv");
    io::write_reports(&p, &runs).map_err(output_err(&p))?;
    let p = out.join("predictions.csv");
    io::write_predictions(&p, &r.actual, &r.rc_prediction, &r.wiener_prediction)
        .map_err(output_err(&p))?;
    let p = out.join("filter.csv");
    io::write_filter(&p, &r.filter).map_err(output_err(&p))
}

fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Outcome<()> {
    let spec = cfg.scenario();
    let table = sweep_alpha(&spec, &cfg.sweep_alphas(), cfg.sweep_repeats())?;
    let p = out.join(format!("{}.csv", spec.kind.figure()));
    io::write_sweep(&p, spec.kind, &table).map_err(output_err(&p))?;
    let p = out.join(format!("{}_runs.csv", spec.kind.figure()));
    io::write_reports(&p, &table.runs).map_err(output_err(&p))?;
    if spec.kind == ScenarioKind::MatchedSpectra {
        // Spectra of the two z components of the first seed.
        let mut zspec = spec.clone();
        zspec.component = Component::Z;
        let pair = ComponentPair::generate(&zspec, spec.seed)?;
        let train = pair.train_range();
        let overlay = psd_overlay(
            &pair.s1.slice(train.clone())?,
            &pair.s2.slice(train)?,
            spec.seg_len,
        )?;
        let p = out.join("fig4_psd.csv");
        io::write_overlay(&p, &overlay).map_err(output_err(&p))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CorrectionSummary {
    coefficients: [f64; 4],
    monotone: bool,
    grid: Vec<f64>,
}

fn cmd_estimate_alpha(cfg: &RunConfig, out: &Path) -> Outcome<()> {
    let est = train_alpha_estimator(&cfg.estimator()?)?;
    let p = out.join("fig5.csv");
    io::write_calibration(&p, &est.calibration).map_err(output_err(&p))?;
    let p = out.join("alpha_estimates.csv");
    io::write_csv(
        &p,
        &["true_alpha", "corrected_estimate"],
        est.calibration
            .iter()
            .map(|c| [format!("{}", c.alpha), format!("{}", c.corrected_test)]),
    )
    .map_err(output_err(&p))?;
    write_json(
        &out.join("correction.json"),
        &CorrectionSummary {
            coefficients: est.correction.coeffs,
            monotone: est.monotone,
            grid: est.training_grid.clone(),
        },
    )?;
    if !est.monotone {
        eprintln!("chaosep: warning: correction cubic is not monotone on [0, 1]");
    }
    Ok(())
}

fn cmd_interp(cfg: &RunConfig, out: &Path) -> Outcome<()> {
    let s = cfg.interp();
    let seeds = repeat_seeds(s.spec.seed, s.repeats);
    let a = interpolation_study(&s.spec, s.center, &s.spacings, &seeds)?;
    let b = range_study(&s.spec, s.lo, s.hi, &s.queries, &seeds)?;
    let p = out.join("fig6.csv");
    io::write_interp(&p, &[("a", &a), ("b", &b)]).map_err(output_err(&p))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.code())
        }
    }
}
