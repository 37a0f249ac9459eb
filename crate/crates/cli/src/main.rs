#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use nsp_core::config::{parse_overrides, parse_scenario};
use nsp_core::energy::{system_power, EnergyTable, Pipeline};
use nsp_core::fidelity::{CameraSettings, NoiseModel};
use nsp_core::policy::PolicyKind;
use nsp_core::presets::PresetStore;
use nsp_core::sim::{run, sweep, AxisValue, Scenario, SweepAxis};
use nsp_core::thermal::ThermalStack;
use nsp_core::validate::regression_suite;
use nsp_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

/// Thermal and power simulator for near-sensor vision processing.
#[derive(Debug, Parser)]
#[command(name = "nsp-sim", version)]
struct Cli {
    /// Directory of workload presets; overrides NSP_SIM_PRESET_DIR.
    #[arg(long, global = true)]
    preset_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TraceFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario and write the trace and metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: TraceFormat,
    },
    /// Simulate a scenario across values of one axis; writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// nsp_power, fidelity_snr, ambient or gap.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma list or start:stop:step; `none` is accepted for fidelity_snr.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: PathBuf,
        /// Repeat the sweep for these presets (comma list or `all`).
        #[arg(long)]
        workloads: Option<String>,
        /// Repeat the sweep for these policies (comma list or `all`).
        #[arg(long)]
        policies: Option<String>,
    },
    /// Run the built-in regression checks.
    Validate {
        /// File with [thermal], [energy] or [noise] overrides.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Noise variance and SNR against die temperature, as CSV.
    FidelityCurve {
        #[arg(long, default_value_t = 320.0)]
        lux: f64,
        /// Overrides the auto-exposure time, ms.
        #[arg(long)]
        exposure_ms: Option<f64>,
        /// Overrides the auto-exposure ISO.
        #[arg(long)]
        iso: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        #[arg(long, default_value_t = 120.0)]
        to: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        /// File with a [noise] override.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List available workload presets.
    ListPresets,
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::InfeasibleFidelity(_)) => EXIT_INFEASIBLE,
            _ => EXIT_CONFIG,
        };
        Self { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::new(e).into()
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    let store = || -> Result<PresetStore, Failure> {
        Ok(match &cli.preset_dir {
            Some(dir) => PresetStore::from_dir(dir)?,
            None => PresetStore::from_env()?,
        })
    };
    match &cli.command {
        Command::Run { config, out, format } => cmd_run(&load_scenario(config, &store()?)?, out, *format),
        Command::Sweep {
            config,
            axis,
            values,
            out,
            workloads,
            policies,
        } => {
            let store = store()?;
            let base = load_scenario(config, &store)?;
            let values = parse_values(values, *axis)?;
            let workloads = workloads.as_deref().map(|w| list_or_all(w, &store.names())).transpose()?;
            let policies = policies
                .as_deref()
                .map(|p| {
                    let all = ["stop_capture_go", "seasonal_migration", "full_far"].map(String::from);
                    list_or_all(p, &all)
                })
                .transpose()?;
            cmd_sweep(&base, &store, *axis, &values, out, workloads, policies)
        }
        Command::Validate { config } => cmd_validate(config.as_deref(), &store()?),
        Command::FidelityCurve {
            lux,
            exposure_ms,
            iso,
            from,
            to,
            step,
            config,
            out,
        } => {
            let mut settings = CameraSettings::for_lux(*lux)?;
            if let Some(e) = exposure_ms {
                settings.exposure_ms = *e;
            }
            if let Some(i) = iso {
                settings.iso = *i;
            }
            settings.validate()?;
            let noise = match config {
                Some(path) => parse_overrides(&read(path)?)?.2,
                None => NoiseModel::default(),
            };
            cmd_fidelity_curve(&noise, &settings, *from, *to, *step, out.as_deref())
        }
        Command::ListPresets => cmd_list_presets(&store()?),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::from)
}

fn load_scenario(path: &Path, store: &PresetStore) -> Result<Scenario, Failure> {
    let text = read(path)?;
    parse_scenario(&text, store)
        .with_context(|| format!("in {}", path.display()))
        .map_err(Failure::from)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>, Failure> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    let f = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_run(scenario: &Scenario, out: &Path, format: TraceFormat) -> CmdResult {
    let trace = run(scenario)?;
    match format {
        TraceFormat::Csv => trace.write_csv(create(out, "trace.csv")?),
        TraceFormat::Json => trace.write_json(create(out, "trace.json")?),
    }
    .context("writing trace")?;
    let mut m = create(out, "metrics.json")?;
    serde_json::to_writer_pretty(&mut m, &trace.metrics.to_json()).context("writing metrics")?;
    writeln!(m).and_then(|_| m.flush()).context("writing metrics")?;
    if !trace.unserved_triggers.is_empty() {
        log::warn!("{} capture triggers were not served before the end", trace.unserved_triggers.len());
    }
    let metrics = &trace.metrics;
    println!(
        "avg_power_w={:.4} duty_cycle={:.4} migrations_per_s={:.4} frames={} dropped={} captures={}",
        metrics.avg_power_w,
        metrics.duty_cycle,
        metrics.migrations_per_s,
        metrics.frames_total,
        metrics.frames_dropped,
        metrics.captures.len()
    );
    Ok(())
}

fn list_or_all(text: &str, all: &[String]) -> Result<Vec<String>, Failure> {
    if text == "all" {
        return Ok(all.to_vec());
    }
    let items: Vec<String> = text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(anyhow::anyhow!("empty list `{text}`").into());
    }
    Ok(items)
}

fn parse_values(text: &str, axis: SweepAxis) -> Result<Vec<AxisValue>, Failure> {
    let bad = |m: String| -> Failure { anyhow::anyhow!("--values: {m}").into() };
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.parse::<f64>().map_err(|_| bad(format!("`{p}` is not a number"))))
            .collect::<Result<_, _>>()?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || stop < start {
            return Err(bad(format!("range {text} needs step > 0 and stop >= start")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| AxisValue::Value(start + step * i as f64)).collect());
    }
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s.eq_ignore_ascii_case("none") {
                if axis == SweepAxis::FidelitySnr {
                    Ok(AxisValue::None)
                } else {
                    Err(bad(format!("`none` is only valid for fidelity_snr, not {axis}")))
                }
            } else {
                s.parse().map(AxisValue::Value).map_err(|_| bad(format!("`{s}` is not a number")))
            }
        })
        .collect()
}

fn cmd_sweep(
    base: &Scenario,
    store: &PresetStore,
    axis: SweepAxis,
    values: &[AxisValue],
    out: &Path,
    workloads: Option<Vec<String>>,
    policies: Option<Vec<String>>,
) -> CmdResult {
    let mut w = create(out, "sweep.csv")?;
    let mut header = Vec::new();
    if workloads.is_some() {
        header.push("workload");
    }
    if policies.is_some() {
        header.push("policy");
    }
    header.extend(["axis_value", "metric", "value"]);
    writeln!(w, "{}", header.join(",")).context("writing sweep")?;

    let workload_list: Vec<Option<String>> = workloads.map_or(vec![None], |v| v.into_iter().map(Some).collect());
    let policy_list: Vec<Option<PolicyKind>> = match policies {
        None => vec![None],
        Some(v) => v.iter().map(|p| p.parse().map(Some)).collect::<Result<_, Error>>()?,
    };
    let mut first_error: Option<Error> = None;
    for workload in &workload_list {
        for policy in &policy_list {
            let mut scenario = base.clone();
            if let Some(name) = workload {
                scenario.workload = store.get(name)?;
            }
            if let Some(kind) = policy {
                scenario.policy.kind = *kind;
            }
            let mut prefix = String::new();
            if let Some(name) = workload {
                prefix.push_str(name);
                prefix.push(',');
            }
            if let Some(kind) = policy {
                prefix.push_str(&kind.to_string());
                prefix.push(',');
            }
            for cell in sweep(&scenario, axis, values) {
                match cell.metrics {
                    Ok(m) => {
                        for (name, v) in m.scalars() {
                            writeln!(w, "{prefix}{},{name},{v}", cell.value).context("writing sweep")?;
                        }
                    }
                    Err(e) => {
                        eprintln!("{prefix}{}: {e}", cell.value);
                        writeln!(w, "{prefix}{},error,NaN", cell.value).context("writing sweep")?;
                        first_error.get_or_insert(e);
                    }
                }
            }
        }
    }
    w.flush().context("writing sweep")?;
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_validate(config: Option<&Path>, store: &PresetStore) -> CmdResult {
    let (stack, energy, noise) = match config {
        Some(path) => parse_overrides(&read(path)?)
            .with_context(|| format!("in {}", path.display()))?,
        None => (ThermalStack::default(), EnergyTable::default(), NoiseModel::default()),
    };
    let checks = regression_suite(&stack, &energy, &noise, store)?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        return Err(Failure {
            code: EXIT_VALIDATION,
            error: anyhow::anyhow!("{failed} validation checks failed"),
        });
    }
    Ok(())
}

fn cmd_fidelity_curve(noise: &NoiseModel, settings: &CameraSettings, from: f64, to: f64, step: f64, out: Option<&Path>) -> CmdResult {
    if !(step > 0.0) || to < from {
        return Err(anyhow::anyhow!("temperature range needs step > 0 and to >= from").into());
    }
    let mut sink: Box<dyn Write> = match out {
        Some(path) => Box::new(BufWriter::new(
            fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(sink, "temperature_c,variance,snr_db").context("writing curve")?;
    let n = ((to - from) / step + 1e-9).floor() as usize;
    for i in 0..=n {
        let t = from + step * i as f64;
        let var = noise.noise_variance(settings, t)?;
        let snr = noise.snr_db(settings, t)?;
        writeln!(sink, "{t},{var:.6},{snr:.4}").context("writing curve")?;
    }
    sink.flush().context("writing curve")?;
    Ok(())
}

fn cmd_list_presets(store: &PresetStore) -> CmdResult {
    let table = EnergyTable::default();
    println!("# presets from {}", store.source());
    println!("{:<16} {:>10} {:>7} {:>10} {:>10}", "name", "resolution", "fps", "trad_w", "nsp_w");
    for name in store.names() {
        let p = store.get(&name)?;
        let trad = system_power(&table, &p, Pipeline::Traditional)?.total();
        let near = system_power(&table, &p, Pipeline::NearSensor)?.total();
        println!(
            "{:<16} {:>10} {:>7} {:>10.3} {:>10.3}",
            name,
            format!("{}x{}", p.width, p.height),
            p.fps,
            trad,
            near
        );
    }
    Ok(())
}
