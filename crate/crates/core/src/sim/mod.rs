//! Frame-level single-link simulator.
//!
//! A saturated transmitter runs an adaptation controller while the receiver
//! approaches at constant speed, so the SNR sweeps from barely-usable to
//! excellent within one run. Every transmission attempt draws its backoff
//! and its data/ACK losses from seeded, per-purpose RNG streams, advances a
//! microsecond clock, and feeds the outcome back to the controller. The
//! run produces an exact decision step function, time totals that close to
//! the microsecond, and a (mode, power) airtime histogram from which the
//! energy of any device profile follows without re-running.

pub mod config;
pub mod summary;

pub use config::{load_scenario, parse_scenario};
pub use summary::{summarize_runs, BatchSummary};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algorithms::{
    AlgorithmId, Controller, ControllerParams, Feedback, MAX_TXP_DBM,
};
use crate::dcf::{self, TxSetup};
use crate::energy::{dbm_to_mw, DeviceProfile};
use crate::phy::{ack_mode_for, mode_table, per, ChannelModel, PhyMode, TimingParams, NUM_MODES};
use crate::{par, Error, Result};

/// Delivery probability the auto-picked start distance must still provide
/// with the most robust mode at full power.
pub const START_DELIVERY_TARGET: f64 = 0.9;

/// One run of the approach scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub algorithm: AlgorithmId,
    pub seed: u64,
    /// Receiver approach speed, m/s.
    pub speed_mps: f64,
    /// Where the receiver starts; `None` picks the farthest distance at
    /// which the lowest mode at full power still delivers
    /// [`START_DELIVERY_TARGET`] of its frames.
    pub start_distance_m: Option<f64>,
    /// The run stops when the receiver gets this close, m.
    pub end_distance_m: f64,
    pub payload_octets: u32,
    /// Transmission attempts per frame.
    pub n_max: usize,
    pub channel: ChannelModel,
    /// Log-normal shadowing standard deviation, dB; 0 keeps the channel
    /// deterministic.
    pub shadowing_sigma_db: f64,
    pub params: ControllerParams,
}

impl ScenarioConfig {
    pub fn new(algorithm: AlgorithmId) -> Self {
        ScenarioConfig {
            algorithm,
            seed: 1,
            speed_mps: 1.0,
            start_distance_m: None,
            end_distance_m: 1.0,
            payload_octets: 1500,
            n_max: 7,
            channel: ChannelModel::default(),
            shadowing_sigma_db: 0.0,
            params: ControllerParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed_mps > 0.0) || !self.speed_mps.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "speed must be positive, got {}",
                self.speed_mps
            )));
        }
        if !(self.end_distance_m >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "end distance must be at least 1 m, got {}",
                self.end_distance_m
            )));
        }
        if let Some(start) = self.start_distance_m {
            if !(start > self.end_distance_m) || !start.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "start distance {start} must exceed end distance {}",
                    self.end_distance_m
                )));
            }
        }
        if self.n_max == 0 {
            return Err(Error::InvalidConfig("retry budget must be at least 1".into()));
        }
        if !(self.shadowing_sigma_db >= 0.0) {
            return Err(Error::InvalidConfig("shadowing sigma must be >= 0".into()));
        }
        // Surface payload/channel problems before a run starts.
        TxSetup::constant(self.payload_octets, self.n_max, mode_table()[0], 10.0)?;
        self.channel.at_distance(self.end_distance_m).path_loss_db()?;
        Ok(())
    }

    /// The start distance actually used by a run.
    pub fn resolved_start_distance(&self) -> Result<f64> {
        self.validate()?;
        match self.start_distance_m {
            Some(d) => Ok(d),
            None => default_start_distance(
                &self.channel,
                self.payload_octets,
                self.n_max,
                f64::from(MAX_TXP_DBM),
            ),
        }
    }
}

/// Farthest distance at which the lowest mode at `txp_dbm` still delivers
/// [`START_DELIVERY_TARGET`] of its frames through the full retry chain.
pub fn default_start_distance(
    channel: &ChannelModel,
    payload_octets: u32,
    n_max: usize,
    txp_dbm: f64,
) -> Result<f64> {
    let mode1 = mode_table()[0];
    let deliver = |d: f64| -> Result<f64> {
        let snr = channel.at_distance(d).snr_from_txp(txp_dbm)?;
        let setup = TxSetup::constant(payload_octets, n_max, mode1, snr)?;
        Ok(dcf::success_probabilities(&setup).0)
    };
    let (mut lo, mut hi) = (1.0f64, 10_000.0f64);
    if deliver(lo)? < START_DELIVERY_TARGET {
        return Err(Error::InvalidSetup(
            "link cannot deliver frames even at 1 m; no usable start distance".into(),
        ));
    }
    if deliver(hi)? >= START_DELIVERY_TARGET {
        return Ok(hi);
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if deliver(mid)? >= START_DELIVERY_TARGET {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// One segment boundary of the decision step function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceStep {
    pub t_us: u64,
    /// 1-based mode index.
    pub mode_index: u8,
    pub txp_dbm: u8,
}

impl TraceStep {
    pub fn rate_mbps(&self) -> u32 {
        mode_table()[(self.mode_index - 1) as usize].rate_mbps
    }
}

/// Everything one run recorded. Times are exact integer microseconds and
/// `tx_us + rx_us + idle_us == duration_us` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub steps: Vec<TraceStep>,
    pub duration_us: u64,
    pub frames_generated: u64,
    pub frames_delivered: u64,
    pub attempts: u64,
    pub tx_us: u64,
    pub rx_us: u64,
    pub idle_us: u64,
    pub payload_octets: u32,
    pub start_distance_m: f64,
    pub end_distance_m: f64,
    /// Transmit airtime per (mode index, txp dBm) cell.
    tx_cell_us: BTreeMap<(u8, u8), u64>,
    /// Receive (ACK) airtime per ACK mode index.
    rx_mode_us: [u64; NUM_MODES],
}

impl RunTrace {
    pub fn delivered_bits(&self) -> u64 {
        self.frames_delivered * u64::from(self.payload_octets) * 8
    }

    pub fn goodput_mbps(&self) -> f64 {
        if self.duration_us == 0 {
            return 0.0;
        }
        self.delivered_bits() as f64 / self.duration_us as f64
    }

    /// Energy this run costs a given device: idle time at the baseline
    /// draw, each (mode, power) airtime cell at its transmit slope, ACK
    /// airtime at the receive slope, plus the per-frame processing toll.
    /// The histogram makes this exact for any profile without re-running.
    pub fn energy_j(&self, profile: &DeviceProfile) -> f64 {
        let us = 1e-6;
        let mut e = profile.rho_id_w * self.idle_us as f64 * us;
        for (&(mode_index, txp_dbm), &t) in &self.tx_cell_us {
            let mode = &mode_table()[(mode_index - 1) as usize];
            let txp_mw = dbm_to_mw(f64::from(txp_dbm));
            e += profile.rho_tx_w(f64::from(mode.rate_mbps), txp_mw) * t as f64 * us;
        }
        for (k, &t) in self.rx_mode_us.iter().enumerate() {
            if t > 0 {
                e += profile.rho_rx_w(f64::from(mode_table()[k].rate_mbps)) * t as f64 * us;
            }
        }
        e + profile.gamma_xg_j * self.frames_generated as f64
    }

    pub fn efficiency_bits_per_joule(&self, profile: &DeviceProfile) -> f64 {
        self.delivered_bits() as f64 / self.energy_j(profile)
    }
}

/// Time-normalised rate and power averages and their inverse product.
///
/// Rate is averaged in Mbps and normalised by the fastest mode; power is
/// averaged in dBm and normalised by the maximum power. Both integrals are
/// exact over the decision step function. Large values mean the controller
/// sat on slow, quiet working points.
pub fn conservativeness_index(trace: &RunTrace) -> Result<(f64, f64, f64)> {
    if trace.duration_us == 0 || trace.steps.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut rate_integral = 0.0;
    let mut txp_integral = 0.0;
    for (i, step) in trace.steps.iter().enumerate() {
        let t_end = trace.steps.get(i + 1).map_or(trace.duration_us, |next| next.t_us);
        let dt = t_end.saturating_sub(step.t_us) as f64;
        rate_integral += f64::from(step.rate_mbps()) * dt;
        txp_integral += f64::from(step.txp_dbm) * dt;
    }
    let span = trace.duration_us as f64;
    let top_rate = f64::from(mode_table()[NUM_MODES - 1].rate_mbps);
    let mcs_hat = rate_integral / (top_rate * span);
    let txp_hat = txp_integral / (f64::from(MAX_TXP_DBM) * span);
    Ok((mcs_hat, txp_hat, 1.0 / (mcs_hat * txp_hat)))
}

/// Per-device outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceStat {
    pub device: String,
    pub energy_j: f64,
    pub efficiency_bpj: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub goodput_mbps: f64,
    pub mcs_hat: f64,
    pub txp_hat: f64,
    pub ci: f64,
    pub devices: Vec<DeviceStat>,
}

pub fn stats_from_trace(trace: &RunTrace, profiles: &[DeviceProfile]) -> Result<RunStats> {
    let (mcs_hat, txp_hat, ci) = conservativeness_index(trace)?;
    let devices = profiles
        .iter()
        .map(|p| DeviceStat {
            device: p.name.clone(),
            energy_j: trace.energy_j(p),
            efficiency_bpj: trace.efficiency_bits_per_joule(p),
        })
        .collect();
    Ok(RunStats { goodput_mbps: trace.goodput_mbps(), mcs_hat, txp_hat, ci, devices })
}

struct DriveEnv {
    payload_octets: u32,
    n_max: usize,
    timing: TimingParams,
    channel: ChannelModel,
    start_distance_m: f64,
    end_distance_m: f64,
    speed_mps: f64,
    shadowing_sigma_db: f64,
    max_frames: Option<u64>,
    backoff_rng: ChaCha8Rng,
    loss_rng: ChaCha8Rng,
    shadow_rng: ChaCha8Rng,
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// The shared event loop: one saturated transmitter, per-attempt Bernoulli
/// losses, exact microsecond accounting.
fn drive(controller: &mut dyn Controller, mut env: DriveEnv) -> Result<RunTrace> {
    let data_bits = dcf::data_bits(env.payload_octets);
    let ack_bits = dcf::ack_bits();
    let mut clock: u64 = 0;
    let mut trace = RunTrace {
        steps: Vec::new(),
        duration_us: 0,
        frames_generated: 0,
        frames_delivered: 0,
        attempts: 0,
        tx_us: 0,
        rx_us: 0,
        idle_us: 0,
        payload_octets: env.payload_octets,
        start_distance_m: env.start_distance_m,
        end_distance_m: env.end_distance_m,
        tx_cell_us: BTreeMap::new(),
        rx_mode_us: [0; NUM_MODES],
    };

    loop {
        let t_s = clock as f64 * 1e-6;
        let distance = env.start_distance_m - env.speed_mps * t_s;
        if distance <= env.end_distance_m {
            break;
        }
        if env.max_frames.is_some_and(|m| trace.frames_generated >= m) {
            break;
        }
        trace.frames_generated += 1;

        let link = env.channel.at_distance(distance);
        for attempt in 1..=env.n_max {
            let decision = controller.decision();
            let changed = trace.steps.last().map_or(true, |s| {
                s.mode_index != decision.mode.index || s.txp_dbm != decision.txp_dbm
            });
            if changed {
                trace.steps.push(TraceStep {
                    t_us: clock,
                    mode_index: decision.mode.index,
                    txp_dbm: decision.txp_dbm,
                });
            }

            let mut snr_db = link.snr_from_txp(f64::from(decision.txp_dbm))?;
            if env.shadowing_sigma_db > 0.0 {
                snr_db += env.shadowing_sigma_db * std_normal(&mut env.shadow_rng);
            }
            let ack_mode = ack_mode_for(&decision.mode);
            let per_data = per(&decision.mode, snr_db, data_bits);
            let per_ack = per(ack_mode, snr_db, ack_bits);

            let slots = u64::from(env.backoff_rng.gen_range(0..=dcf::cw_for_attempt(attempt)));
            let backoff_us = slots * u64::from(env.timing.slot_us);
            clock += backoff_us;
            trace.idle_us += backoff_us;

            let t_data = u64::from(env.timing.airtime_data_us(env.payload_octets, &decision.mode));
            clock += t_data;
            trace.tx_us += t_data;
            trace.attempts += 1;
            *trace.tx_cell_us.entry((decision.mode.index, decision.txp_dbm)).or_insert(0) +=
                t_data;

            // Both legs are always drawn so the loss stream stays aligned
            // across controllers and parameter changes.
            let data_lost = env.loss_rng.gen::<f64>() < per_data;
            let ack_lost = env.loss_rng.gen::<f64>() < per_ack;
            let success = !data_lost && !ack_lost;

            if success {
                let t_ack = u64::from(env.timing.airtime_ack_us(ack_mode)?);
                let sifs = u64::from(env.timing.sifs_us);
                let difs = u64::from(env.timing.difs_us);
                clock += sifs + t_ack + difs;
                trace.idle_us += sifs + difs;
                trace.rx_us += t_ack;
                trace.rx_mode_us[(ack_mode.index - 1) as usize] += t_ack;
            } else {
                let wait = u64::from(env.timing.ack_timeout_us());
                clock += wait;
                trace.idle_us += wait;
            }

            controller.feedback(&Feedback { success, decision, timestamp_us: clock })?;
            if success {
                trace.frames_delivered += 1;
                break;
            }
        }
    }

    trace.duration_us = clock;
    Ok(trace)
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Run the approach scenario with a caller-supplied controller.
pub fn run_scenario_with(
    controller: &mut dyn Controller,
    cfg: &ScenarioConfig,
    profiles: &[DeviceProfile],
) -> Result<(RunTrace, RunStats)> {
    let start = cfg.resolved_start_distance()?;
    let env = DriveEnv {
        payload_octets: cfg.payload_octets,
        n_max: cfg.n_max,
        timing: TimingParams::IEEE80211A,
        channel: cfg.channel,
        start_distance_m: start,
        end_distance_m: cfg.end_distance_m,
        speed_mps: cfg.speed_mps,
        shadowing_sigma_db: cfg.shadowing_sigma_db,
        max_frames: None,
        backoff_rng: rng_stream(cfg.seed, 0),
        loss_rng: rng_stream(cfg.seed, 1),
        shadow_rng: rng_stream(cfg.seed, 3),
    };
    let trace = drive(controller, env)?;
    let stats = stats_from_trace(&trace, profiles)?;
    Ok((trace, stats))
}

/// Run the approach scenario with the configured adaptation algorithm.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    profiles: &[DeviceProfile],
) -> Result<(RunTrace, RunStats)> {
    let mut params = cfg.params;
    // Frame-boundary reconstruction must match the simulated retry budget.
    params.minstrel_piano.retry_limit = cfg.n_max as u32;
    let mut controller =
        cfg.algorithm.build(&params, cfg.payload_octets, &TimingParams::IEEE80211A);
    run_scenario_with(controller.as_mut(), cfg, profiles)
}

/// Stationary run at a frozen working point: fixed mode, power and SNR for
/// a given number of frames. This is the bridge between the stochastic
/// loop and the closed-form expectations.
pub fn run_fixed_point(
    payload_octets: u32,
    n_max: usize,
    mode: PhyMode,
    txp_dbm: u8,
    snr_db: f64,
    frames: u64,
    seed: u64,
) -> Result<RunTrace> {
    // A synthetic channel whose loss at 18 m yields exactly `snr_db` for
    // `txp_dbm`, so the drive loop needs no special casing.
    let mut channel = ChannelModel::default();
    let base_loss = channel.path_loss_db()?;
    channel.noise_floor_dbm = f64::from(txp_dbm) - base_loss - snr_db;
    let mut controller = crate::algorithms::FixedController::new(mode, txp_dbm);
    let env = DriveEnv {
        payload_octets,
        n_max,
        timing: TimingParams::IEEE80211A,
        channel,
        start_distance_m: 18.0,
        end_distance_m: 1.0,
        speed_mps: 0.0,
        shadowing_sigma_db: 0.0,
        max_frames: Some(frames),
        backoff_rng: rng_stream(seed, 0),
        loss_rng: rng_stream(seed, 1),
        shadow_rng: rng_stream(seed, 3),
    };
    drive(&mut controller, env)
}

/// One (algorithm, seed) cell of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algorithm: AlgorithmId,
    pub seed: u64,
    pub stats: RunStats,
}

/// Cross product of algorithms and seeds; independent runs execute in
/// parallel when the `parallel` feature is on, and results keep the
/// (algorithm-major, seed-minor) order regardless.
pub fn run_batch(
    base: &ScenarioConfig,
    algorithms: &[AlgorithmId],
    seeds: &[u64],
    profiles: &[DeviceProfile],
) -> Result<Vec<RunRecord>> {
    base.validate()?;
    let jobs: Vec<(AlgorithmId, u64)> = algorithms
        .iter()
        .flat_map(|&a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let results = par::map(&jobs, |&(algorithm, seed)| {
        let cfg = ScenarioConfig { algorithm, seed, ..base.clone() };
        run_scenario(&cfg, profiles).map(|(_, stats)| RunRecord { algorithm, seed, stats })
    });
    results.into_iter().collect()
}
