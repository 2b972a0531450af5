use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde_json::json;
use sphrec::analysis::{rip_constant, theorem_b_report, theorem_c_failure, theorem_c_tau};
use sphrec::experiments::{run, ExperimentConfig};
use sphrec::kss::sample_kss;
use sphrec::moments::{read_matrix_csv, read_vector_csv, write_vector_csv};
use sphrec::solver::{solve, AdmmSettings};
use sphrec::transport::wasserstein;
use sphrec::{build_ensemble, make_circle_code, make_e8_code, moments_of, DiscreteMeasure, RecoveryProblem, SphericalCode};

#[derive(Parser)]
#[command(name = "sphrec", version, about = "Recover point measures on spheres from KSS moments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spherical codes.
    #[command(subcommand)]
    Codes(CodesCmd),
    /// Kostlan-Shub-Smale polynomials.
    #[command(subcommand)]
    Kss(KssCmd),
    /// Measurement matrices and moment vectors.
    #[command(subcommand)]
    Moments(MomentsCmd),
    /// Solve the l1 recovery program for a matrix and moment vector.
    Recover(RecoverArgs),
    /// RIP constants and probability bounds.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Optimal transport between measures.
    #[command(subcommand)]
    Transport(TransportCmd),
    /// Configured experiments.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum CodeKind {
    Circle,
    E8,
}

#[derive(Subcommand)]
enum CodesCmd {
    /// Write a code in the plain-text format.
    Gen {
        #[arg(long, value_enum)]
        kind: CodeKind,
        /// Number of points (circle only).
        #[arg(long = "N", default_value_t = 200)]
        n_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum KssCmd {
    /// Sample m polynomials of degree d in n variables.
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: u32,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum MomentsCmd {
    /// Write phi.csv and, given a measure, b.csv.
    Build {
        /// Code file, or `circle:N` / `e8`.
        #[arg(long)]
        code: String,
        #[arg(long)]
        d: u32,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        measure: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    moments: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    TheoremB,
    TheoremC,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Restricted isometry constant of order s.
    Rip {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        s: usize,
    },
    /// Evaluate a family of bounds.
    Bounds {
        #[arg(long, value_enum)]
        preset: Preset,
        #[arg(long = "N")]
        n_code: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = std::f64::consts::SQRT_2 - 1.0)]
        delta: f64,
        #[arg(long)]
        m: Option<usize>,
        /// Concentration slack (theorem-c).
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Support offset angle (theorem-c).
        #[arg(long)]
        theta: Option<f64>,
        /// Degree (theorem-c).
        #[arg(long)]
        d: Option<u32>,
    },
}

#[derive(Subcommand)]
enum TransportCmd {
    /// Quadratic Wasserstein distance under the angular metric.
    Wasserstein {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Also write the optimal plan as CSV.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Run a TOML config and write records.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn load_code(spec: &str) -> Result<SphericalCode> {
    if spec == "e8" {
        return Ok(make_e8_code());
    }
    if let Some(n) = spec.strip_prefix("circle:") {
        return Ok(make_circle_code(n.parse().context("circle:N needs an integer N")?)?);
    }
    Ok(SphericalCode::read_text(open(Path::new(spec))?)?)
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Codes(CodesCmd::Gen { kind, n_points, out }) => {
            let code = match kind {
                CodeKind::Circle => make_circle_code(n_points)?,
                CodeKind::E8 => make_e8_code(),
            };
            let mut w = output(out.as_deref())?;
            code.write_text(&mut w)?;
            w.flush()?;
        }
        Command::Kss(KssCmd::Sample { n, d, m, seed, out }) => {
            let mut w = output(out.as_deref())?;
            for p in sample_kss(n, d, m, seed)? {
                p.write_text(&mut w)?;
            }
            w.flush()?;
        }
        Command::Moments(MomentsCmd::Build { code, d, m, seed, measure, out }) => {
            let code = load_code(&code)?;
            let ens = build_ensemble(&code, d, m, seed)?;
            std::fs::create_dir_all(&out)?;
            ens.write_csv(BufWriter::new(File::create(out.join("phi.csv"))?))?;
            if let Some(path) = measure {
                let mu = DiscreteMeasure::from_json(&read(&path)?)?;
                let b = moments_of(&ens, &code, &mu)?;
                write_vector_csv(&b.values, BufWriter::new(File::create(out.join("b.csv"))?))?;
            }
        }
        Command::Recover(args) => {
            let phi = read_matrix_csv(open(&args.matrix)?)?;
            let b = read_vector_csv(open(&args.moments)?)?;
            let problem = RecoveryProblem::new(phi, DVector::from_vec(b), args.tau)?;
            let settings = AdmmSettings { max_iter: args.max_iter, ..AdmmSettings::default() };
            let sol = solve(&problem, &settings)?;
            let mut w = output(args.out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &sol)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Analyze(AnalyzeCmd::Rip { matrix, s }) => {
            let phi = read_matrix_csv(open(&matrix)?)?;
            print_json(&serde_json::to_value(rip_constant(&phi, s)?)?)?;
        }
        Command::Analyze(AnalyzeCmd::Bounds { preset, n_code, k, delta, m, eps, theta, d }) => match preset {
            Preset::TheoremB => print_json(&serde_json::to_value(theorem_b_report(n_code, k, delta, m)?)?)?,
            Preset::TheoremC => {
                let (Some(m), Some(theta), Some(d)) = (m, theta, d) else {
                    bail!("theorem-c needs --m, --theta and --d");
                };
                let g = vec![1.0 / k as f64; k];
                let failure = theorem_c_failure(n_code, k, m, eps)?;
                print_json(&json!([
                    {"name": "tau", "inputs": {"N": n_code, "k": k, "theta": theta, "d": d, "eps": eps}, "value": theorem_c_tau(&g, k, theta, d, eps)?,
                     "note": "uniform weights 1/k"},
                    {"name": "failure-probability", "inputs": {"N": n_code, "k": k, "m": m, "eps": eps}, "value": failure.value, "log_value": failure.log_value},
                ]))?;
            }
        },
        Command::Transport(TransportCmd::Wasserstein { a, b, plan }) => {
            let mu = DiscreteMeasure::from_json(&read(&a)?)?;
            let nu = DiscreteMeasure::from_json(&read(&b)?)?;
            let (w, p) = wasserstein(&mu, &nu)?;
            if let Some(path) = plan {
                p.write_csv(BufWriter::new(File::create(path)?))?;
            }
            print_json(&json!({"w2": w, "cost": p.cost}))?;
        }
        Command::Experiment(ExperimentCmd::Run { config, out }) => {
            let cfg = ExperimentConfig::from_toml(&read(&config)?)?;
            let result = run(&cfg)?;
            result.write_to(&out)?;
            let s = &result.summary;
            eprintln!(
                "{} rows, {} not optimal, failure budget {}",
                s.rows,
                s.non_optimal_rows,
                if s.within_failure_budget { "met" } else { "exceeded" }
            );
            if !s.within_failure_budget {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
