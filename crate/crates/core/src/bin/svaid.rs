//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a verified property failed, 2 bad input or usage,
//! 3 runtime failure, 4 degenerate data.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use svaid::bench::{loglog_slope, rows_to_csv, run_bench, BenchConfig};
use svaid::identify::{fit, fit_with_prior, stack};
use svaid::io::{
    load_model, load_scenario, read_samples, serialize_model, to_toml, write_atomic,
    write_control_log, write_samples, FitFile, RunManifest,
};
use svaid::sim::run_scenario;
use svaid::verify::{run_verification, VerifyConfig};
use svaid::Error;

#[derive(Parser)]
#[command(name = "svaid", version, about = "Chain dynamics, identification and control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and log samples, controller output and metrics.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario's duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Least-squares fit of the parameters from a sample log.
    Fit {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Model file whose parameters serve as the prior.
        #[arg(long)]
        theta0: Option<PathBuf>,
        /// Data weight of the prior-regularized fit, in (0, 1).
        #[arg(long, requires = "theta0")]
        alpha: Option<f64>,
    },
    /// Randomized structural checks.
    Verify {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        max_links: usize,
        /// Check this model instead of random chains.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Regressor timing against chain length.
    Bench {
        #[arg(long, default_value_t = 32)]
        max_links: usize,
        #[arg(long, default_value_t = 2)]
        min_links: usize,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Outcome {
    Ok,
    PropertyFailed,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_)
        | Error::IndexOutOfRange { .. }
        | Error::Dimension { .. }
        | Error::Parse { .. }
        | Error::Semantic { .. } => 2,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
        Error::Degenerate(_) => 4,
        Error::Simulation { source, .. } => match source.as_ref() {
            Error::Degenerate(_) => 4,
            _ => 3,
        },
        Error::SingularMassMatrix { .. } | Error::Io(_) => 3,
    }
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        Error::Semantic { path: p, message } => Error::Semantic {
            path: format!("{}: {p}", path.display()),
            message,
        },
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    }
}

fn read_bytes(path: &Path) -> svaid::Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| with_path(path, e.into()))
}

fn prepare_out(dir: &Path) -> svaid::Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn finish_manifest(mut m: RunManifest, dir: &Path, outputs: &[&str]) -> svaid::Result<()> {
    m.outputs = outputs.iter().map(|s| s.to_string()).collect();
    m.write(&dir.join("manifest.toml"))
}

fn hash_input(parts: &[&[u8]]) -> Vec<u8> {
    let mut all = Vec::new();
    for p in parts {
        all.extend_from_slice(&(p.len() as u64).to_le_bytes());
        all.extend_from_slice(p);
    }
    all
}

fn run(cli: Cli) -> svaid::Result<Outcome> {
    match cli.command {
        Command::Simulate {
            scenario,
            out,
            seed,
            duration,
        } => {
            let scenario_bytes = read_bytes(&scenario)?;
            let mut loaded = load_scenario(&scenario).map_err(|e| with_path(&scenario, e))?;
            if let Some(s) = seed {
                loaded.sim.seed = s;
            }
            if let Some(d) = duration {
                if d < 0.0 || !d.is_finite() {
                    return Err(Error::InvalidInput(format!("duration must be >= 0, got {d}")));
                }
                loaded.sim.duration = d;
            }
            let model_bytes = read_bytes(&loaded.model_path)?;
            let overrides = format!("{:?}|{:?}", seed, duration);
            let mut manifest = RunManifest::new(
                "simulate",
                &hash_input(&[&scenario_bytes, &model_bytes, overrides.as_bytes()]),
                Some(loaded.sim.seed),
            );
            manifest.inputs = vec![
                scenario.display().to_string(),
                loaded.model_path.display().to_string(),
            ];

            prepare_out(&out)?;
            manifest.write(&out.join("manifest.toml"))?;
            let result = run_scenario(&loaded.scenario, &loaded.sim)?;
            let mut buf = Vec::new();
            write_samples(&mut buf, &result.samples)?;
            write_atomic(&out.join("samples.csv"), &buf)?;
            let mut buf = Vec::new();
            write_control_log(&mut buf, &result.control_log)?;
            write_atomic(&out.join("control.csv"), &buf)?;
            write_atomic(&out.join("metrics.toml"), to_toml(&result.metrics)?.as_bytes())?;
            finish_manifest(
                manifest,
                &out,
                &["samples.csv", "control.csv", "metrics.toml"],
            )?;
            let m = &result.metrics;
            println!("scenario      {}", m.scenario);
            println!("ticks         {} ({} saturated)", m.ticks, m.saturated_ticks);
            if let Some(r2) = m.offline_r_squared {
                println!("offline R^2   {r2:.6}");
            }
            if let Some(r2) = m.final_r_squared {
                println!("online R^2    {r2:.6}");
            }
            if let Some(t) = m.buffer_full_time {
                println!("buffer full   {t:.3} s");
            }
            if let Some(t) = m.switch_time {
                println!("switch        {t:.3} s");
            }
            println!("outputs in    {}", out.display());
            Ok(Outcome::Ok)
        }
        Command::Fit {
            model,
            samples,
            out,
            theta0,
            alpha,
        } => {
            let model_bytes = read_bytes(&model)?;
            let sample_bytes = read_bytes(&samples)?;
            let chain = load_model(&model).map_err(|e| with_path(&model, e))?;
            let data = read_samples(sample_bytes.as_slice()).map_err(|e| with_path(&samples, e))?;
            let prior = match &theta0 {
                Some(p) => {
                    let bytes = read_bytes(p)?;
                    let prior = load_model(p).map_err(|e| with_path(p, e))?;
                    if prior.num_params() != chain.num_params() {
                        return Err(Error::Semantic {
                            path: p.display().to_string(),
                            message: "prior model has a different number of links".into(),
                        });
                    }
                    Some((bytes, prior.theta()))
                }
                None => None,
            };
            let prior_bytes = prior.as_ref().map_or(&[][..], |(b, _)| b.as_slice());
            let alpha_text = format!("{alpha:?}");
            let mut manifest = RunManifest::new(
                "fit",
                &hash_input(&[&model_bytes, &sample_bytes, prior_bytes, alpha_text.as_bytes()]),
                None,
            );
            manifest.inputs = std::iter::once(&model)
                .chain(std::iter::once(&samples))
                .chain(theta0.iter())
                .map(|p| p.display().to_string())
                .collect();
            let sys = stack(&chain, &data)?;
            prepare_out(&out)?;
            manifest.write(&out.join("manifest.toml"))?;
            let result = match &prior {
                Some((_, theta_0)) => fit_with_prior(&sys, theta_0, alpha.unwrap_or(0.99))?,
                None => fit(&sys)?,
            };
            write_atomic(
                &out.join("fit.toml"),
                to_toml(&FitFile::from(&result))?.as_bytes(),
            )?;
            let fitted = chain.with_theta(&result.theta_hat)?;
            write_atomic(&out.join("fitted.model"), serialize_model(&fitted).as_bytes())?;
            finish_manifest(manifest, &out, &["fit.toml", "fitted.model"])?;
            println!("samples       {}", data.len());
            println!("rank          {} of {}", result.rank, chain.num_params());
            println!("R^2           {:.9}", result.r_squared);
            for (j, r2) in result.per_joint_r_squared.iter().enumerate() {
                println!("R^2 joint {:<3} {r2:.9}", j + 1);
            }
            Ok(Outcome::Ok)
        }
        Command::Verify {
            trials,
            seed,
            max_links,
            model,
            out,
            inject_fault,
        } => {
            if trials == 0 {
                return Err(Error::InvalidInput("--trials must be at least 1".into()));
            }
            let chain = match &model {
                Some(p) => Some(load_model(p).map_err(|e| with_path(p, e))?),
                None => None,
            };
            let cfg = VerifyConfig {
                trials,
                seed,
                max_links,
                model: chain,
                inject_fault,
                ..Default::default()
            };
            let cfg_text = format!("{cfg:?}");
            if let Some(dir) = &out {
                prepare_out(dir)?;
                RunManifest::new("verify", cfg_text.as_bytes(), Some(seed))
                    .write(&dir.join("manifest.toml"))?;
            }
            let report = run_verification(&cfg)?;
            for p in &report.properties {
                println!(
                    "{:<4} {:<22} max {:.3e} (tol {:.0e}, {} failing)",
                    if p.passed { "ok" } else { "FAIL" },
                    p.name,
                    p.max_error,
                    p.tolerance,
                    p.failures
                );
            }
            if let Some(dir) = out {
                write_atomic(&dir.join("verify.toml"), to_toml(&report)?.as_bytes())?;
                finish_manifest(
                    RunManifest::new("verify", cfg_text.as_bytes(), Some(seed)),
                    &dir,
                    &["verify.toml"],
                )?;
            }
            Ok(if report.all_passed() {
                Outcome::Ok
            } else {
                Outcome::PropertyFailed
            })
        }
        Command::Bench {
            max_links,
            min_links,
            repeats,
            seed,
            out,
        } => {
            let cfg = BenchConfig {
                min_links,
                max_links,
                repeats,
                seed,
            };
            let cfg_text = format!("{cfg:?}");
            if let Some(dir) = &out {
                prepare_out(dir)?;
                RunManifest::new("bench", cfg_text.as_bytes(), Some(seed))
                    .write(&dir.join("manifest.toml"))?;
            }
            let rows = run_bench(&cfg)?;
            let csv = rows_to_csv(&rows);
            print!("{csv}");
            if rows.len() >= 2 {
                println!("# log-log slope {:.4}", loglog_slope(&rows)?);
            }
            if let Some(dir) = out {
                write_atomic(&dir.join("bench.csv"), csv.as_bytes())?;
                finish_manifest(
                    RunManifest::new("bench", cfg_text.as_bytes(), Some(seed)),
                    &dir,
                    &["bench.csv"],
                )?;
            }
            Ok(Outcome::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::PropertyFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
