//! The `collide` command line.
//!
//! Results go to standard output as JSON (or CSV with `--format csv`); the
//! resolved configuration and a one-line summary go to standard error.
//! Exit codes: 0 success or pass, 1 test failed, 2 inconclusive, 3 usage
//! error, 4 runtime error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::collision::{
    estimate_fidelity, estimate_fidelity_first_order, execution_time, expected_anomaly_noisy,
    expected_collisions_noisy, expected_collisions_quantum, expected_collisions_uniform, expected_cross_qq,
    expected_cross_qu, expected_cross_uu, shot_budget, UniformMode,
};
use crate::device::{archive_samples, open_device, serve, DeviceSpec};
use crate::distribution::NoiseModel;
use crate::error::{Error, Result};
use crate::experiments::{write_figures, ExperimentSpec, FIGURES};
use crate::rng::mix_seed;
use crate::volume::{measure_collision_volume, run_cv_test, run_xcv_test, TestConfig, TestOutcome, TestResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_USAGE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "collide", version, about = "Collision-counting benchmarks for random circuit sampling")]
struct Cli {
    /// Master seed for circuits and device randomness.
    #[arg(long, global = true, env = "COLLIDE_SEED")]
    seed: Option<u64>,
    /// Directory for output files (figures, and a copy of each command's result).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Dist {
    Uniform,
    Quantum,
    Noisy,
    CrossUu,
    CrossQq,
    CrossQu,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form expected (cross-)collision counts.
    Expect {
        #[arg(long, value_enum)]
        dist: Dist,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        shots: u64,
        /// Second side's shots for cross distributions (defaults to --shots).
        #[arg(long)]
        shots_b: Option<u64>,
        /// Depolarizing fidelity, required for --dist noisy.
        #[arg(long)]
        alpha: Option<f64>,
        /// Use `N - D + D(1 - 1/D)^N` instead of the large-D uniform form.
        #[arg(long)]
        exact: bool,
    },
    /// Collision-volume test of one device.
    CvTest {
        #[arg(long)]
        device: DeviceSpec,
        #[arg(long)]
        n: u32,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Cross-collision-volume test of two devices running the same circuit.
    XcvTest {
        #[arg(long)]
        device_a: DeviceSpec,
        #[arg(long)]
        device_b: DeviceSpec,
        #[arg(long)]
        n: u32,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Largest passing width in an upward CV scan.
    Volume {
        #[arg(long)]
        device: DeviceSpec,
        #[arg(long)]
        n_min: u32,
        #[arg(long)]
        n_max: u32,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Serve a device over TCP until killed.
    Serve {
        #[arg(long)]
        device: DeviceSpec,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
    },
    /// Draw samples and write them to an archive.
    Sample {
        #[arg(long)]
        device: DeviceSpec,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        shots: u64,
        #[arg(long)]
        out: PathBuf,
        /// Circuit to run; defaults to the first circuit a CV test at this width uses.
        #[arg(long)]
        circuit_seed: Option<u64>,
    },
    /// Invert a measured anomaly for the depolarizing fidelity.
    Fidelity {
        #[arg(long, allow_hyphen_values = true)]
        anomaly: f64,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        shots: u64,
    },
    /// Shot budget and sampling time.
    Cost {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        alpha: f64,
        /// Shots per second per device.
        #[arg(long, default_value_t = 1e6)]
        rate: f64,
        /// Devices sampling in parallel.
        #[arg(long, default_value_t = 1)]
        parallel: u64,
    },
    /// Write figure datasets as CSV files.
    Figures {
        /// Figures to generate (1-6); all when omitted.
        #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=6))]
        which: Vec<u8>,
        #[arg(long, default_value_t = 20)]
        trials: u32,
        /// Register width for the simulated figures.
        #[arg(long, default_value_t = 16)]
        n: u32,
    },
}

#[derive(Debug, Args, Clone)]
struct TestArgs {
    #[arg(long, default_value_t = 500)]
    min_collisions: u64,
    #[arg(long, default_value_t = 2.0)]
    growth: f64,
    #[arg(long, default_value_t = 1 << 26)]
    max_shots: u64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// XCV shot ratio.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Circuits per test; anomalies are pooled.
    #[arg(long, default_value_t = 1)]
    circuits: u32,
    /// Keep samples across adaptive rounds.
    #[arg(long)]
    accumulate: bool,
}

impl TestArgs {
    fn config(&self, seed: u64) -> TestConfig {
        TestConfig {
            min_collisions: self.min_collisions,
            shot_growth_factor: self.growth,
            max_shots: self.max_shots,
            pass_threshold: self.threshold,
            lambda: self.lambda,
            seed,
            accumulate: self.accumulate,
            circuits: self.circuits,
        }
    }
}

/// Process entry point.
pub fn main(args: impl IntoIterator<Item = OsString>) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Entry point with explicit output streams.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// One command's result: a JSON value, an optional CSV rendering and an exit code.
struct Output {
    name: &'static str,
    json: Value,
    csv: Option<String>,
    code: i32,
    summary: String,
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let seed = cli.seed.unwrap_or(0);
    let output = match &cli.command {
        Command::Expect {
            dist,
            n,
            shots,
            shots_b,
            alpha,
            exact,
        } => {
            echo(err, "expect", json!({"seed": seed, "dist": dist, "n": n, "shots": shots,
                "shots_b": shots_b, "alpha": alpha, "exact": exact}))?;
            expect(*dist, *n, *shots, shots_b.unwrap_or(*shots), *alpha, *exact)?
        }
        Command::CvTest { device, n, test } => {
            let config = test.config(seed);
            echo(err, "cv-test", json!({"device": device.to_string(), "n": n, "config": config}))?;
            let mut dev = open_device(device, mix_seed(seed, 1))?;
            test_output("cv-test", run_cv_test(&mut dev, *n, &config)?)?
        }
        Command::XcvTest {
            device_a,
            device_b,
            n,
            test,
        } => {
            let config = test.config(seed);
            echo(err, "xcv-test", json!({"device_a": device_a.to_string(),
                "device_b": device_b.to_string(), "n": n, "config": config}))?;
            let mut a = open_device(device_a, mix_seed(seed, 1))?;
            let mut b = open_device(device_b, mix_seed(seed, 2))?;
            test_output("xcv-test", run_xcv_test(&mut a, &mut b, *n, &config)?)?
        }
        Command::Volume {
            device,
            n_min,
            n_max,
            test,
        } => {
            let config = test.config(seed);
            echo(err, "volume", json!({"device": device.to_string(), "n_min": n_min,
                "n_max": n_max, "config": config}))?;
            let mut dev = open_device(device, mix_seed(seed, 1))?;
            let result = measure_collision_volume(&mut dev, *n_min, *n_max, &config)?;
            let code = if result.halted_inconclusive {
                EXIT_INCONCLUSIVE
            } else if result.log_volume < i64::from(*n_min) {
                EXIT_FAIL
            } else {
                EXIT_OK
            };
            let mut csv = String::from("n_qubits,outcome,final_shots,collisions,anomaly\n");
            for r in &result.results {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.n_qubits,
                    outcome_name(r.outcome),
                    r.final_shots,
                    r.report.collisions,
                    r.report.anomaly
                ));
            }
            Output {
                name: "volume",
                summary: format!("log2 collision volume = {}", result.log_volume),
                json: serde_json::to_value(&result).map_err(json_error)?,
                csv: Some(csv),
                code,
            }
        }
        Command::Serve { device, listen } => {
            echo(err, "serve", json!({"seed": seed, "device": device.to_string(), "listen": listen}))?;
            let _ = writeln!(err, "serving {device} on {listen}");
            let _ = err.flush();
            serve(device, listen, seed)?;
            return Ok(EXIT_OK);
        }
        Command::Sample {
            device,
            n,
            shots,
            out: path,
            circuit_seed,
        } => {
            let circuit_seed = circuit_seed.unwrap_or_else(|| TestConfig::with_seed(seed).circuit_seed(*n, 0));
            echo(err, "sample", json!({"seed": seed, "device": device.to_string(), "n": n,
                "shots": shots, "out": path, "circuit_seed": circuit_seed}))?;
            let mut dev = open_device(device, mix_seed(seed, 1))?;
            let set = dev.sample(circuit_seed, *n, *shots)?;
            archive_samples(&set, path)?;
            let collisions = set.total() - set.distinct();
            Output {
                name: "sample",
                summary: format!("wrote {} samples ({} distinct) to {}", set.total(), set.distinct(), path.display()),
                json: json!({"path": path, "n_qubits": n, "shots": set.total(), "distinct": set.distinct(),
                    "collisions": collisions, "circuit_seed": circuit_seed}),
                csv: None,
                code: EXIT_OK,
            }
        }
        Command::Fidelity { anomaly, n, shots } => {
            echo(err, "fidelity", json!({"anomaly": anomaly, "n": n, "shots": shots}))?;
            let dim = dim_of(*n)?;
            let est = estimate_fidelity(*anomaly, *shots, dim)?;
            Output {
                name: "fidelity",
                summary: format!("alpha = {:.6}", est.alpha),
                json: json!({"anomaly": anomaly, "n_qubits": n, "shots": shots, "alpha": est.alpha,
                    "clamped": est.clamped, "alpha_first_order": estimate_fidelity_first_order(*anomaly)}),
                csv: None,
                code: EXIT_OK,
            }
        }
        Command::Cost {
            n,
            alpha,
            rate,
            parallel,
        } => {
            echo(err, "cost", json!({"n": n, "alpha": alpha, "rate": rate, "parallel": parallel}))?;
            let shots = shot_budget(*n, *alpha)?;
            let cost = execution_time(shots, *rate, *parallel)?;
            Output {
                name: "cost",
                summary: format!("{shots} shots, {:.3e} s ({:.2} days)", cost.seconds, cost.seconds / 86_400.0),
                json: json!({"n_qubits": n, "alpha": alpha, "shots": cost.shots, "rep_rate": cost.rep_rate,
                    "parallel_factor": cost.parallel_factor, "seconds": cost.seconds,
                    "days": cost.seconds / 86_400.0}),
                csv: None,
                code: EXIT_OK,
            }
        }
        Command::Figures { which, trials, n } => {
            let which = if which.is_empty() { FIGURES.to_vec() } else { which.clone() };
            let dir = cli.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            let specs: Vec<ExperimentSpec> = which
                .iter()
                .map(|&f| ExperimentSpec {
                    trials: *trials,
                    n_qubits: *n,
                    ..ExperimentSpec::new(f, seed)
                })
                .collect();
            echo(err, "figures", json!({"output_dir": dir, "specs": specs}))?;
            let paths = write_figures(&dir, &specs)?;
            let _ = writeln!(err, "wrote {} figure file(s) to {}", paths.len(), dir.display());
            let json = json!({"files": paths});
            write_stdout(out, cli.format, &json, None)?;
            return Ok(EXIT_OK);
        }
    };
    let _ = writeln!(err, "{}", output.summary);
    write_stdout(out, cli.format, &output.json, output.csv.as_deref())?;
    if let Some(dir) = &cli.output_dir {
        save_copy(dir, &output, cli.format)?;
    }
    Ok(output.code)
}

fn echo(err: &mut dyn Write, command: &str, config: Value) -> Result<()> {
    writeln!(err, "config {command}: {config}")?;
    Ok(())
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn dim_of(n: u32) -> Result<u64> {
    if n > 63 {
        return Err(Error::domain(format!("{n} qubits is too wide (at most 63)")));
    }
    Ok(1u64 << n)
}

fn expect(dist: Dist, n: u32, shots: u64, shots_b: u64, alpha: Option<f64>, exact: bool) -> Result<Output> {
    let dim = dim_of(n)?;
    let mode = if exact { UniformMode::Exact } else { UniformMode::Asymptotic };
    let mut json = json!({"dist": dist, "n_qubits": n, "dim": dim, "shots": shots});
    let value = match dist {
        Dist::Uniform => expected_collisions_uniform(dim, shots, mode),
        Dist::Quantum => expected_collisions_quantum(dim, shots),
        Dist::Noisy => {
            let alpha = alpha.ok_or_else(|| Error::domain("--dist noisy needs --alpha"))?;
            let noise = NoiseModel::new(alpha)?;
            json["alpha"] = json!(alpha);
            if shots > 0 {
                json["expected_anomaly"] = json!(expected_anomaly_noisy(dim, shots, noise)?);
            }
            expected_collisions_noisy(dim, shots, noise)
        }
        Dist::CrossUu | Dist::CrossQq | Dist::CrossQu => {
            json["shots_b"] = json!(shots_b);
            match dist {
                Dist::CrossUu => expected_cross_uu(dim, shots, shots_b),
                Dist::CrossQq => expected_cross_qq(dim, shots, shots_b),
                _ => expected_cross_qu(dim, shots, shots_b),
            }
        }
    };
    json["expected"] = json!(value);
    Ok(Output {
        name: "expect",
        summary: format!("expected = {value}"),
        json,
        csv: None,
        code: EXIT_OK,
    })
}

fn outcome_name(o: TestOutcome) -> &'static str {
    match o {
        TestOutcome::Passed => "passed",
        TestOutcome::Failed => "failed",
        TestOutcome::Inconclusive => "inconclusive",
    }
}

fn test_output(name: &'static str, result: TestResult) -> Result<Output> {
    let code = match result.outcome {
        TestOutcome::Passed => EXIT_OK,
        TestOutcome::Failed => EXIT_FAIL,
        TestOutcome::Inconclusive => EXIT_INCONCLUSIVE,
    };
    let mut csv = Vec::new();
    result.write_transcript_csv(&mut csv)?;
    Ok(Output {
        name,
        summary: format!(
            "{name} n={}: {} (anomaly {:.4}, {} collisions, {} round(s))",
            result.n_qubits,
            outcome_name(result.outcome),
            result.report.anomaly,
            result.report.collisions,
            result.iterations
        ),
        json: serde_json::to_value(&result).map_err(json_error)?,
        csv: Some(String::from_utf8(csv).expect("csv output is UTF-8")),
        code,
    })
}

/// Flat objects become a header row and a value row.
fn flat_csv(json: &Value) -> String {
    let Value::Object(map) = json else {
        return format!("{json}\n");
    };
    let cell = |v: &Value| match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    };
    let quote = |s: String| {
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s
        }
    };
    let header: Vec<String> = map.keys().cloned().map(quote).collect();
    let values: Vec<String> = map.values().map(|v| quote(cell(v))).collect();
    format!("{}\n{}\n", header.join(","), values.join(","))
}

fn render(format: Format, json: &Value, csv: Option<&str>) -> String {
    match format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(json).expect("JSON values serialize")),
        Format::Csv => csv.map_or_else(|| flat_csv(json), str::to_string),
    }
}

fn write_stdout(out: &mut dyn Write, format: Format, json: &Value, csv: Option<&str>) -> Result<()> {
    out.write_all(render(format, json, csv).as_bytes())?;
    out.flush()?;
    Ok(())
}

fn save_copy(dir: &Path, output: &Output, format: Format) -> Result<()> {
    fs::create_dir_all(dir)?;
    let ext = match format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    fs::write(
        dir.join(format!("{}.{ext}", output.name)),
        render(format, &output.json, output.csv.as_deref()),
    )?;
    Ok(())
}
