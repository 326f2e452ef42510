//! `ratpc`: link-model sweeps, consumption-model fitting, and controller
//! simulations from the command line.
//!
//! Every invocation is deterministic: data files carry no timestamps or
//! hostnames, and the record of how a file was produced goes to a
//! `<out>.meta.json` sidecar so the data itself stays byte-stable.
//!
//! Exit codes: 0 on success, 2 for usage errors (bad flags or flag values),
//! 3 for data and configuration errors (unreadable inputs, unknown devices,
//! degenerate fits).

use std::env;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ratpc_core::algorithms::AlgorithmId;
use ratpc_core::analysis::{self, Range, SweepGrid};
use ratpc_core::energy::{self, DeviceProfile, RxSample, ScaleParam, TxSample};
use ratpc_core::phy::ChannelModel;
use ratpc_core::sim;

/// Environment variable naming a default device-profile CSV; the
/// `--profiles` flag overrides it, and without either the built-in table
/// is used.
const PROFILE_ENV: &str = "RATPC_PROFILES";

#[derive(Parser)]
#[command(
    name = "ratpc",
    version,
    about = "802.11a link goodput/energy models and rate-power controller simulation",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Per-mode goodput across SNR, with the best-mode envelope.
    Envelope(EnvelopeArgs),
    /// Per-mode expected energy per frame across transmit power.
    EnergyTxp(EnergyTxpArgs),
    /// Energy efficiency along the goodput-optimal mode envelope.
    EfficiencyCurve(EfficiencyCurveArgs),
    /// Per-mode energy efficiency across transmit power.
    EfficiencyTxp(EfficiencyTxpArgs),
    /// Efficiency curve with one consumption parameter rescaled.
    Sensitivity(SensitivityArgs),
    /// Fit consumption-model slopes to measured power samples.
    Fit(FitArgs),
    /// Replay the approach scenario under one controller.
    Simulate(SimulateArgs),
    /// Run all controllers and tabulate conservativeness vs efficiency.
    CiReport(CiReportArgs),
}

/// Link geometry shared by the sweep commands.
#[derive(Args)]
struct LinkArgs {
    /// Payload per frame, octets.
    #[arg(long = "l", value_name = "OCTETS", default_value_t = 1500)]
    payload: u32,
    /// Attempts allowed per frame (first try plus retries).
    #[arg(long, default_value_t = 7)]
    nmax: usize,
    /// Receiver noise floor, dBm.
    #[arg(long, default_value_t = -85.0, allow_negative_numbers = true)]
    noise: f64,
    /// Link distance, metres (>= 1).
    #[arg(long, default_value_t = 18.0)]
    distance: f64,
}

impl LinkArgs {
    fn grid(&self, range: Range) -> Result<SweepGrid, Failure> {
        if self.payload == 0 {
            return Err(Failure::Usage("--l must be at least 1 octet".into()));
        }
        if self.nmax == 0 {
            return Err(Failure::Usage("--nmax must be at least 1".into()));
        }
        if !(self.distance >= 1.0) {
            return Err(Failure::Usage("--distance must be at least 1 metre".into()));
        }
        let mut channel = ChannelModel::default().at_distance(self.distance);
        channel.noise_floor_dbm = self.noise;
        Ok(SweepGrid { range, payload_octets: self.payload, n_max: self.nmax, channel })
    }

    fn meta(&self) -> serde_json::Value {
        json!({
            "l": self.payload,
            "nmax": self.nmax,
            "noise_dbm": self.noise,
            "distance_m": self.distance,
        })
    }
}

/// Device-profile selection shared by the energy commands.
#[derive(Args)]
struct DeviceArgs {
    /// Device name, matched ignoring case and punctuation (`raspberrypi`).
    #[arg(long)]
    device: String,
    /// Device-profile CSV; overrides the RATPC_PROFILES environment
    /// variable and the built-in table.
    #[arg(long)]
    profiles: Option<PathBuf>,
}

#[derive(Args)]
struct EnvelopeArgs {
    #[command(flatten)]
    link: LinkArgs,
    /// SNR axis, min:max:step in dB.
    #[arg(long, default_value = "0:40:0.1", value_parser = Range::from_str)]
    snr: Range,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnergyTxpArgs {
    #[command(flatten)]
    link: LinkArgs,
    #[command(flatten)]
    device: DeviceArgs,
    /// Transmit-power axis, min:max:step in dBm.
    #[arg(long, default_value = "0:30:0.1", value_parser = Range::from_str)]
    txp: Range,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EfficiencyCurveArgs {
    #[command(flatten)]
    link: LinkArgs,
    #[command(flatten)]
    device: DeviceArgs,
    /// SNR axis, min:max:step in dB.
    #[arg(long, default_value = "0:30:0.1", value_parser = Range::from_str)]
    snr: Range,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the efficiency drops at mode transitions to this CSV.
    #[arg(long)]
    drops_out: Option<PathBuf>,
}

#[derive(Args)]
struct EfficiencyTxpArgs {
    #[command(flatten)]
    link: LinkArgs,
    #[command(flatten)]
    device: DeviceArgs,
    /// Transmit-power axis, min:max:step in dBm.
    #[arg(long, default_value = "0:30:0.1", value_parser = Range::from_str)]
    txp: Range,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SensitivityArgs {
    #[command(flatten)]
    link: LinkArgs,
    #[command(flatten)]
    device: DeviceArgs,
    /// Consumption parameter to rescale: rho_id | rho_tx | rho_rx | gamma_xg.
    #[arg(long, value_parser = ScaleParam::from_str)]
    param: ScaleParam,
    /// Scale factor applied to the parameter (> 0).
    #[arg(long)]
    factor: f64,
    /// SNR axis, min:max:step in dB.
    #[arg(long, default_value = "0:30:0.1", value_parser = Range::from_str)]
    snr: Range,
    /// Output CSV path (baseline and scaled curves side by side).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Transmit-power samples CSV with header `mcs_mbps,txp_mw,rho_tx_w`.
    #[arg(long)]
    tx: PathBuf,
    /// Receive-power samples CSV with header `mcs_mbps,rho_rx_w`.
    #[arg(long)]
    rx: PathBuf,
    /// Output JSON path for the fitted coefficients.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Controller: parf | minstrel-piano (mp) | rrpaa | prcs. Required
    /// unless a scenario file names one.
    #[arg(long, value_parser = AlgorithmId::from_str, required_unless_present = "scenario")]
    alg: Option<AlgorithmId>,
    /// Independent runs; run k uses seed+k (default 10).
    #[arg(long, default_value_t = 10)]
    runs: u32,
    /// Base seed (default 1, or the scenario file's seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Scenario TOML to start from; explicit flags override its values.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Approach speed, m/s (default 1).
    #[arg(long)]
    speed: Option<f64>,
    /// Start distance, metres (default: solved so the most robust mode at
    /// maximum power still delivers reliably).
    #[arg(long)]
    start: Option<f64>,
    /// End distance, metres (default 1).
    #[arg(long)]
    end: Option<f64>,
    /// Log-normal shadowing sigma, dB (default 0).
    #[arg(long)]
    sigma: Option<f64>,
    /// Payload per frame, octets (default 1500).
    #[arg(long = "l", value_name = "OCTETS")]
    payload: Option<u32>,
    /// Attempts allowed per frame (default 7).
    #[arg(long)]
    nmax: Option<usize>,
    /// Device-profile CSV; overrides RATPC_PROFILES and the built-in table.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Per-run, per-device stats CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write the first run's decision trace to this CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct CiReportArgs {
    /// Runs per controller; run k uses seed+k (default 10).
    #[arg(long, default_value_t = 10)]
    runs: u32,
    /// Base seed (default 1, or the scenario file's seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Scenario TOML for the shared setup; its algorithm key is ignored
    /// because every controller runs.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Device-profile CSV; overrides RATPC_PROFILES and the built-in table.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Per-device conservativeness/efficiency CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-device rank-correlation CSV.
    #[arg(long)]
    correlations_out: Option<PathBuf>,
}

/// A failed invocation, split by exit code.
#[derive(Debug)]
enum Failure {
    /// Exit 2: the command line itself is wrong.
    Usage(String),
    /// Exit 3: inputs or configuration cannot be used.
    Data(String),
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version land here too; clap reports 0 for those.
            let code = e.exit_code().clamp(0, 255) as u8;
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Envelope(a) => envelope(a),
        Cmd::EnergyTxp(a) => energy_txp(a),
        Cmd::EfficiencyCurve(a) => efficiency_curve(a),
        Cmd::EfficiencyTxp(a) => efficiency_txp(a),
        Cmd::Sensitivity(a) => sensitivity(a),
        Cmd::Fit(a) => fit(a),
        Cmd::Simulate(a) => simulate(a),
        Cmd::CiReport(a) => ci_report(a),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing.

/// Resolve the device table: explicit flag, then RATPC_PROFILES, then the
/// built-in profiles. Returns the table and a label for the sidecar.
fn load_table(flag: Option<&Path>) -> Result<(Vec<DeviceProfile>, String), Failure> {
    let path = flag
        .map(Path::to_path_buf)
        .or_else(|| env::var_os(PROFILE_ENV).map(PathBuf::from));
    match path {
        Some(p) => {
            let table = energy::load_profiles(&p).map_err(|e| {
                Failure::Data(format!("cannot load profiles from {}: {e}", p.display()))
            })?;
            Ok((table, p.display().to_string()))
        }
        None => Ok((energy::builtin_profiles().to_vec(), "builtin".to_string())),
    }
}

fn pick_device(table: &[DeviceProfile], name: &str) -> Result<DeviceProfile, Failure> {
    energy::find_profile(table, name).cloned().ok_or_else(|| {
        let known: Vec<&str> = table.iter().map(|p| p.name.as_str()).collect();
        Failure::Data(format!("unknown device `{name}`; available: {}", known.join(", ")))
    })
}

fn create_out(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Data(format!("cannot create {}: {e}", path.display())))
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut os = out.as_os_str().to_os_string();
    os.push(".meta.json");
    PathBuf::from(os)
}

/// Record how an output file was produced. Deliberately free of
/// timestamps so repeated runs stay byte-identical.
fn write_sidecar(out: &Path, command: &str, params: serde_json::Value) -> Result<(), Failure> {
    let doc = json!({
        "command": command,
        "parameters": params,
        "tool": "ratpc",
        "version": env!("CARGO_PKG_VERSION"),
    });
    let path = sidecar_path(out);
    std::fs::write(&path, format!("{doc:#}\n"))
        .map_err(|e| Failure::Data(format!("cannot create {}: {e}", path.display())))
}

fn render_range(r: Range) -> String {
    format!("{}:{}:{}", r.min, r.max, r.step)
}

// ---------------------------------------------------------------------------
// Sweep commands.

fn envelope(a: EnvelopeArgs) -> Result<(), Failure> {
    let grid = a.link.grid(a.snr)?;
    let rows = analysis::envelope_sweep(&grid);
    analysis::write_envelope_csv(create_out(&a.out)?, &rows).map_err(data)?;
    let mut params = a.link.meta();
    params["snr"] = json!(render_range(a.snr));
    write_sidecar(&a.out, "envelope", params)
}

fn energy_txp(a: EnergyTxpArgs) -> Result<(), Failure> {
    let grid = a.link.grid(a.txp)?;
    let (table, source) = load_table(a.device.profiles.as_deref())?;
    let dev = pick_device(&table, &a.device.device)?;
    let rows = analysis::energy_vs_txp(&grid, &dev).map_err(data)?;
    analysis::write_energy_txp_csv(create_out(&a.out)?, &rows).map_err(data)?;
    let mut params = a.link.meta();
    params["txp"] = json!(render_range(a.txp));
    params["device"] = json!(dev.name);
    params["profiles"] = json!(source);
    write_sidecar(&a.out, "energy-txp", params)
}

fn efficiency_curve(a: EfficiencyCurveArgs) -> Result<(), Failure> {
    let grid = a.link.grid(a.snr)?;
    let (table, source) = load_table(a.device.profiles.as_deref())?;
    let dev = pick_device(&table, &a.device.device)?;
    let curve = analysis::efficiency_vs_optimal_goodput(&grid, &dev).map_err(data)?;
    analysis::write_efficiency_curve_csv(create_out(&a.out)?, &curve).map_err(data)?;
    if let Some(drops_out) = &a.drops_out {
        let drops = analysis::find_transition_drops(&curve);
        analysis::write_drops_csv(create_out(drops_out)?, &drops).map_err(data)?;
    }
    let mut params = a.link.meta();
    params["snr"] = json!(render_range(a.snr));
    params["device"] = json!(dev.name);
    params["profiles"] = json!(source);
    write_sidecar(&a.out, "efficiency-curve", params)
}

fn efficiency_txp(a: EfficiencyTxpArgs) -> Result<(), Failure> {
    let grid = a.link.grid(a.txp)?;
    let (table, source) = load_table(a.device.profiles.as_deref())?;
    let dev = pick_device(&table, &a.device.device)?;
    let rows = analysis::efficiency_vs_txp(&grid, &dev).map_err(data)?;
    analysis::write_efficiency_txp_csv(create_out(&a.out)?, &rows).map_err(data)?;
    let mut params = a.link.meta();
    params["txp"] = json!(render_range(a.txp));
    params["device"] = json!(dev.name);
    params["profiles"] = json!(source);
    write_sidecar(&a.out, "efficiency-txp", params)
}

fn sensitivity(a: SensitivityArgs) -> Result<(), Failure> {
    if !(a.factor > 0.0) {
        return Err(Failure::Usage(format!("--factor must be positive, got {}", a.factor)));
    }
    let grid = a.link.grid(a.snr)?;
    let (table, source) = load_table(a.device.profiles.as_deref())?;
    let dev = pick_device(&table, &a.device.device)?;
    let scaled = energy::scale_parameter(&dev, a.param, a.factor);
    let base_curve = analysis::efficiency_vs_optimal_goodput(&grid, &dev).map_err(data)?;
    let scaled_curve = analysis::efficiency_vs_optimal_goodput(&grid, &scaled).map_err(data)?;
    analysis::write_sensitivity_csv(
        create_out(&a.out)?,
        &grid,
        &dev,
        &scaled,
        &base_curve,
        &scaled_curve,
    )
    .map_err(data)?;
    let mut params = a.link.meta();
    params["snr"] = json!(render_range(a.snr));
    params["device"] = json!(dev.name);
    params["profiles"] = json!(source);
    params["param"] = json!(a.param.label());
    params["factor"] = json!(a.factor);
    write_sidecar(&a.out, "sensitivity", params)
}

// ---------------------------------------------------------------------------
// Fitting.

fn read_samples<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row.map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?);
    }
    Ok(out)
}

fn fit(a: FitArgs) -> Result<(), Failure> {
    let tx: Vec<TxSample> = read_samples(&a.tx)?;
    let rx: Vec<RxSample> = read_samples(&a.rx)?;
    let fit = energy::fit_profile(&tx, &rx).map_err(data)?;
    let doc = json!({
        "alpha": fit.alpha,
        "alpha_adj_r2": fit.alpha_adj_r2,
        "beta": fit.beta,
        "beta_adj_r2": fit.beta_adj_r2,
    });
    std::fs::write(&a.out, format!("{doc:#}\n"))
        .map_err(|e| Failure::Data(format!("cannot create {}: {e}", a.out.display())))?;
    write_sidecar(
        &a.out,
        "fit",
        json!({
            "tx": a.tx.display().to_string(),
            "rx": a.rx.display().to_string(),
            "tx_samples": tx.len(),
            "rx_samples": rx.len(),
        }),
    )
}

// ---------------------------------------------------------------------------
// Simulation commands.

/// Scenario assembly shared by `simulate` and `ci-report`: start from the
/// scenario file (or defaults), then let explicit flags override.
#[allow(clippy::too_many_arguments)]
fn build_scenario(
    scenario: Option<&Path>,
    algorithm: Option<AlgorithmId>,
    seed: Option<u64>,
    speed: Option<f64>,
    start: Option<f64>,
    end: Option<f64>,
    sigma: Option<f64>,
    payload: Option<u32>,
    nmax: Option<usize>,
) -> Result<sim::ScenarioConfig, Failure> {
    let mut cfg = match scenario {
        Some(path) => sim::load_scenario(path)
            .map_err(|e| Failure::Data(format!("scenario {}: {e}", path.display())))?,
        None => sim::ScenarioConfig::new(algorithm.unwrap_or(AlgorithmId::Parf)),
    };
    if let Some(alg) = algorithm {
        cfg.algorithm = alg;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(speed) = speed {
        cfg.speed_mps = speed;
    }
    if start.is_some() {
        cfg.start_distance_m = start;
    }
    if let Some(end) = end {
        cfg.end_distance_m = end;
    }
    if let Some(sigma) = sigma {
        cfg.shadowing_sigma_db = sigma;
    }
    if let Some(payload) = payload {
        cfg.payload_octets = payload;
    }
    if let Some(nmax) = nmax {
        cfg.n_max = nmax;
    }
    cfg.validate().map_err(data)?;
    Ok(cfg)
}

fn seed_span(base: u64, runs: u32) -> Result<Vec<u64>, Failure> {
    if runs == 0 {
        return Err(Failure::Usage("--runs must be at least 1".into()));
    }
    base.checked_add(runs as u64 - 1)
        .ok_or_else(|| Failure::Usage(format!("seed span {base}+{runs} overflows")))?;
    Ok((0..runs as u64).map(|k| base + k).collect())
}

fn scenario_meta(cfg: &sim::ScenarioConfig, runs: u32, seeds: &[u64]) -> serde_json::Value {
    json!({
        "runs": runs,
        "seeds": seeds,
        "speed_mps": cfg.speed_mps,
        "start_distance_m": cfg.start_distance_m,
        "end_distance_m": cfg.end_distance_m,
        "payload_octets": cfg.payload_octets,
        "nmax": cfg.n_max,
        "shadowing_sigma_db": cfg.shadowing_sigma_db,
        "noise_dbm": cfg.channel.noise_floor_dbm,
    })
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let cfg = build_scenario(
        a.scenario.as_deref(),
        a.alg,
        a.seed,
        a.speed,
        a.start,
        a.end,
        a.sigma,
        a.payload,
        a.nmax,
    )?;
    let (table, source) = load_table(a.profiles.as_deref())?;
    let seeds = seed_span(cfg.seed, a.runs)?;
    let records = sim::run_batch(&cfg, &[cfg.algorithm], &seeds, &table).map_err(data)?;
    sim::summary::write_stats_csv(create_out(&a.out)?, &records).map_err(data)?;
    if let Some(trace_out) = &a.trace_out {
        let mut first = cfg.clone();
        first.seed = seeds[0];
        let (trace, _) = sim::run_scenario(&first, &table).map_err(data)?;
        sim::summary::write_trace_csv(create_out(trace_out)?, &trace).map_err(data)?;
    }
    let mut params = scenario_meta(&cfg, a.runs, &seeds);
    params["algorithm"] = json!(cfg.algorithm.name());
    params["profiles"] = json!(source);
    if let Some(s) = &a.scenario {
        params["scenario"] = json!(s.display().to_string());
    }
    write_sidecar(&a.out, "simulate", params)
}

fn ci_report(a: CiReportArgs) -> Result<(), Failure> {
    let cfg = build_scenario(
        a.scenario.as_deref(),
        None,
        a.seed,
        None,
        None,
        None,
        None,
        None,
        None,
    )?;
    let (table, source) = load_table(a.profiles.as_deref())?;
    let seeds = seed_span(cfg.seed, a.runs)?;
    let records = sim::run_batch(&cfg, &AlgorithmId::ALL, &seeds, &table).map_err(data)?;
    let summary = sim::summarize_runs(&records).map_err(data)?;
    sim::summary::write_ci_report_csv(create_out(&a.out)?, &summary).map_err(data)?;
    if let Some(corr_out) = &a.correlations_out {
        sim::summary::write_correlation_csv(create_out(corr_out)?, &summary).map_err(data)?;
    }
    let mut params = scenario_meta(&cfg, a.runs, &seeds);
    params["algorithms"] =
        json!(AlgorithmId::ALL.iter().map(|a| a.name()).collect::<Vec<_>>());
    params["profiles"] = json!(source);
    if let Some(s) = &a.scenario {
        params["scenario"] = json!(s.display().to_string());
    }
    write_sidecar(&a.out, "ci-report", params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_path_appends_full_suffix() {
        assert_eq!(sidecar_path(Path::new("a/b.csv")), Path::new("a/b.csv.meta.json"));
        assert_eq!(sidecar_path(Path::new("plain")), Path::new("plain.meta.json"));
    }

    #[test]
    fn rendered_ranges_parse_back() {
        for r in [Range::new(0.0, 40.0, 0.1).unwrap(), Range::new(-5.0, 3.5, 0.25).unwrap()] {
            let back: Range = render_range(r).parse().unwrap();
            assert_eq!(back, r);
        }
    }

    #[test]
    fn seed_spans_are_contiguous_and_checked() {
        assert_eq!(seed_span(42, 3).unwrap(), vec![42, 43, 44]);
        assert!(seed_span(42, 0).is_err());
        assert!(seed_span(u64::MAX, 2).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
