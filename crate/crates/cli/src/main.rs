use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use phasecp::baseline::{unwrap_path, unwrap_quality_guided};
use phasecp::config::RunConfig;
use phasecp::experiment::{format_summary, run_bench, EpswMode, MethodSettings};
use phasecp::io::{load_phase, load_phz, load_sidecar, save_pgm, save_phase, save_phz, save_sidecar, sidecar_path, NoiseSidecar, PhzFile};
use phasecp::metrics::{isnr, rsnr, write_csv};
use phasecp::phase::{gradient, wrap_image, wrapped_gradient};
use phasecp::solver::{fidelity_bound_from_estimate, fidelity_bound_oracle, noise_bound, solve, SolverConfig};
use phasecp::synth::{add_noise, make_phantom, NoiseSpec, PhantomKind, PhantomSpec};
use phasecp::Error;

#[derive(Parser)]
#[command(name = "phasecp", version, about = "Joint phase unwrapping and denoising")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic phantom.
    Synth {
        #[arg(long, default_value = "gaussian")]
        kind: PhantomKind,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write an 8-bit PGM preview.
        #[arg(long)]
        dump_pgm: Option<PathBuf>,
    },
    /// Add calibrated noise to a phase image and wrap it.
    Wrap {
        #[arg(long = "in")]
        input: PathBuf,
        /// Target ISNR in dB, or `inf`.
        #[arg(long, value_parser = parse_isnr)]
        isnr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_wrapped: PathBuf,
        #[arg(long)]
        out_noise: PathBuf,
    },
    /// Reconstruct a phase image from a wrapped observation.
    Unwrap {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = UnwrapMethod::Cp)]
        method: UnwrapMethod,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Noise standard deviation; defaults to the observation's sidecar.
        #[arg(long)]
        sigma: Option<f64>,
        /// Ground truth, for RSNR and the oracle fidelity radius.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Noise realization, for the oracle fidelity radius.
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long)]
        dump_pgm: Option<PathBuf>,
    },
    /// Run a full experiment sweep.
    Bench {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum UnwrapMethod {
    Cp,
    Path,
    Quality,
}

fn parse_isnr(s: &str) -> std::result::Result<f64, String> {
    let v = match s {
        "inf" | "Inf" | "infinity" => f64::INFINITY,
        other => other.parse::<f64>().map_err(|e| e.to_string())?,
    };
    if v.is_nan() || v == f64::NEG_INFINITY {
        return Err(format!("ISNR must be a number or inf, got {s}"));
    }
    Ok(v)
}

fn synth(kind: PhantomKind, rho: f64, width: usize, height: usize, out: &Path, pgm: Option<&Path>) -> Result<()> {
    let x = make_phantom(&PhantomSpec::new(kind, width, height, rho))?;
    save_phase(out, &x).with_context(|| format!("writing {}", out.display()))?;
    if let Some(p) = pgm {
        save_pgm(p, &x)?;
    }
    println!("{}: {}x{} {} rho={} max={}", out.display(), width, height, kind.name(), rho, x.max_abs());
    Ok(())
}

fn wrap(input: &Path, target: f64, seed: u64, out_wrapped: &Path, out_noise: &Path) -> Result<()> {
    let x = load_phase(input).with_context(|| format!("reading {}", input.display()))?;
    let noisy = add_noise(&x, &NoiseSpec { target_isnr_db: target, rng_seed: seed })?;
    let y = wrap_image(&noisy.noisy);
    save_phz(out_wrapped, &PhzFile::from_wrapped(&y))?;
    save_phase(out_noise, &noisy.noise)?;
    let meta = NoiseSidecar {
        sigma: noisy.sigma,
        isnr_target_db: target,
        isnr_realized_db: isnr(&x, &noisy.noise),
        seed,
    };
    let sidecar = sidecar_path(out_wrapped);
    save_sidecar(&sidecar, &meta)?;
    println!("sigma={} isnr_realized_db={} sidecar={}", meta.sigma, meta.isnr_realized_db, sidecar.display());
    Ok(())
}

struct UnwrapArgs {
    input: PathBuf,
    method: UnwrapMethod,
    config: Option<PathBuf>,
    out: PathBuf,
    sigma: Option<f64>,
    truth: Option<PathBuf>,
    noise: Option<PathBuf>,
    dump_pgm: Option<PathBuf>,
}

fn unwrap(args: UnwrapArgs) -> Result<()> {
    let y = load_phz(&args.input)?.to_wrapped()?;
    let (w, h) = (y.width(), y.height());
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.width = w;
    cfg.height = h;
    let settings = MethodSettings::from_config(&cfg);
    let truth = args.truth.as_deref().map(load_phase).transpose()?;
    let q = wrapped_gradient(&y);
    let start = Instant::now();

    let mut report = vec![("method", String::new())];
    let x_hat = match args.method {
        UnwrapMethod::Path => {
            report[0].1 = "path".into();
            unwrap_path(&y)
        }
        UnwrapMethod::Quality => {
            report[0].1 = "quality".into();
            unwrap_quality_guided(&y)
        }
        UnwrapMethod::Cp => {
            report[0].1 = "cp".into();
            let sigma = match args.sigma {
                Some(s) => s,
                None => {
                    let sidecar = sidecar_path(&args.input);
                    if !sidecar.exists() {
                        return Err(Error::Config(format!(
                            "cp needs the noise level: pass --sigma or provide {}",
                            sidecar.display()
                        ))
                        .into());
                    }
                    load_sidecar(&sidecar)?.sigma
                }
            };
            let eps_n = noise_bound(sigma, w * h, settings.c_chernoff);
            let eps_w = match settings.epsw {
                EpswMode::Manual(v) => v,
                EpswMode::Baseline => fidelity_bound_from_estimate(&q, &unwrap_quality_guided(&y)),
                EpswMode::Oracle => {
                    let (Some(x), Some(n)) = (&truth, args.noise.as_deref()) else {
                        return Err(Error::Config("epsw.mode=oracle needs --truth and --noise".into()).into());
                    };
                    fidelity_bound_oracle(&q, x, &load_phase(n)?)?
                }
            };
            let mut solver_cfg = SolverConfig::with_levels(w, h, settings.levels, settings.wavelet, eps_n, eps_w)?;
            solver_cfg.max_iter = settings.max_iter;
            solver_cfg.tol = settings.tol;
            solver_cfg.check_every = settings.check_every;
            let result = solve(&q, solver_cfg)?;
            report.push(("eps_n", eps_n.to_string()));
            report.push(("eps_w", eps_w.to_string()));
            report.push(("iterations", result.iterations.to_string()));
            report.push(("converged", result.converged.to_string()));
            report.push(("noise_l2", result.v.norm().to_string()));
            report.push(("residual_l1", q.l1_distance(&gradient(&result.u.add(&result.v)?)).to_string()));
            result.u
        }
    };
    if args.method != UnwrapMethod::Cp {
        report.push(("residual_l1", q.l1_distance(&gradient(&x_hat)).to_string()));
    }
    if let Some(x) = &truth {
        report.push(("rsnr_db", rsnr(x, &x_hat)?.to_string()));
    }
    report.push(("seconds", start.elapsed().as_secs_f64().to_string()));

    save_phase(&args.out, &x_hat)?;
    if let Some(p) = &args.dump_pgm {
        save_pgm(p, &x_hat)?;
    }
    for (k, v) in report {
        println!("{k}={v}");
    }
    Ok(())
}

fn bench(config: &Path) -> Result<()> {
    let cfg = RunConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    let outcome = run_bench(&cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut csv = Vec::new();
    write_csv(&mut csv, &outcome.reports)?;
    let csv_path = cfg.output_dir.join("results.csv");
    phasecp::io::write_atomic(&csv_path, &csv)?;
    let summary = format_summary(&outcome.summary);
    phasecp::io::write_atomic(&cfg.output_dir.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    eprintln!("wrote {}", csv_path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { kind, rho, width, height, out, dump_pgm } => {
            synth(kind, rho, width, height, &out, dump_pgm.as_deref())
        }
        Command::Wrap { input, isnr, seed, out_wrapped, out_noise } => wrap(&input, isnr, seed, &out_wrapped, &out_noise),
        Command::Unwrap { input, method, config, out, sigma, truth, noise, dump_pgm } => {
            unwrap(UnwrapArgs { input, method, config, out, sigma, truth, noise, dump_pgm })
        }
        Command::Bench { config } => bench(&config),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Divergence { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
