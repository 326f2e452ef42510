//! Grid sweeps over SNR and transmit power: the best-mode goodput envelope,
//! per-mode energy and efficiency curves, sensitivity scans of the power
//! model, and detection of the efficiency drops at mode transitions.
//!
//! Sweep points are independent, so with the `parallel` feature they are
//! evaluated on the rayon pool; rows always come back in grid order.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dcf::{self, TxSetup};
use crate::energy::{self, DeviceProfile, ScaleParam};
use crate::par;
use crate::phy::{mode_table, ChannelModel, PhyMode, NUM_MODES};
use crate::{Error, Result};

/// Closed axis `min..=max` walked in fixed steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Range {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(max >= min) {
            return Err(Error::InvalidConfig(format!(
                "bad range {min}:{max}:{step} (need max >= min, step > 0)"
            )));
        }
        Ok(Range { min, max, step })
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.min + i as f64 * self.step).collect()
    }
}

impl std::str::FromStr for Range {
    type Err = Error;

    /// Parse `min:max:step`, e.g. `0:40:0.1`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidConfig(format!(
                "range `{s}` must look like min:max:step"
            )));
        }
        let num = |p: &str| {
            p.parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("`{p}` is not a number in range `{s}`")))
        };
        Range::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

/// One sweep: the axis, the payload/retry setup, and the channel that maps
/// between SNR and transmit power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub range: Range,
    pub payload_octets: u32,
    pub n_max: usize,
    pub channel: ChannelModel,
}

impl SweepGrid {
    /// Default SNR axis: 0..40 dB in 0.1 dB steps.
    pub fn default_snr() -> Self {
        SweepGrid {
            range: Range { min: 0.0, max: 40.0, step: 0.1 },
            payload_octets: 1500,
            n_max: 7,
            channel: ChannelModel::default(),
        }
    }

    /// Default TXP axis: 0..30 dBm in 0.1 dBm steps.
    pub fn default_txp() -> Self {
        SweepGrid {
            range: Range { min: 0.0, max: 30.0, step: 0.1 },
            ..Self::default_snr()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeRow {
    pub snr_db: f64,
    pub g_modes_mbps: [f64; NUM_MODES],
    pub best_mode: u8,
    pub g_star_mbps: f64,
}

/// Constant-strategy goodput of all eight modes per SNR point, plus the
/// argmax envelope. Ties resolve to the lower mode index.
pub fn envelope_sweep(grid: &SweepGrid) -> Vec<EnvelopeRow> {
    let points = grid.range.points();
    par::map(&points, |&snr_db| {
        let mut g_modes_mbps = [0.0; NUM_MODES];
        for (k, mode) in mode_table().iter().enumerate() {
            let setup = TxSetup::constant(grid.payload_octets, grid.n_max, *mode, snr_db)
                .expect("valid sweep setup");
            g_modes_mbps[k] = dcf::goodput_mbps(&setup);
        }
        let mut best = 0usize;
        for k in 1..NUM_MODES {
            if g_modes_mbps[k] > g_modes_mbps[best] {
                best = k;
            }
        }
        EnvelopeRow {
            snr_db,
            g_modes_mbps,
            best_mode: (best + 1) as u8,
            g_star_mbps: g_modes_mbps[best],
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyTxpRow {
    pub txp_dbm: f64,
    pub e_modes_j: [f64; NUM_MODES],
}

/// Expected per-frame energy of each mode as a function of transmit power,
/// with the SNR derived from the grid's channel.
pub fn energy_vs_txp(grid: &SweepGrid, profile: &DeviceProfile) -> Result<Vec<EnergyTxpRow>> {
    // Surface a bad channel before fanning out.
    grid.channel.path_loss_db()?;
    let points = grid.range.points();
    Ok(par::map(&points, |&txp_dbm| {
        let snr_db = grid.channel.snr_from_txp(txp_dbm).expect("channel validated");
        let mut e_modes_j = [0.0; NUM_MODES];
        for (k, mode) in mode_table().iter().enumerate() {
            let setup = TxSetup::constant(grid.payload_octets, grid.n_max, *mode, snr_db)
                .expect("valid sweep setup");
            e_modes_j[k] = energy::expected_energy(&setup, profile, txp_dbm).e_frame_j;
        }
        EnergyTxpRow { txp_dbm, e_modes_j }
    }))
}

/// One point of the efficiency-vs-goodput curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyPoint {
    pub snr_db: f64,
    pub best_mode: u8,
    pub g_star_mbps: f64,
    pub mu_bits_per_joule: f64,
}

/// Transmit power at which the efficiency-vs-goodput curve is evaluated.
///
/// The curve's purpose is to expose what mode transitions alone do to
/// efficiency, so the transmit-power term of the radio's power draw is
/// held at a small constant (1 mW) while channel quality sweeps the SNR
/// axis. Coupling the power to the SNR instead would let the power slope
/// `alpha2 * TXP_mW` grow exponentially along the axis and bury the
/// transition structure under a device-specific power ramp.
pub const REFERENCE_TXP_DBM: f64 = 0.0;

/// Efficiency at the goodput-optimal mode across the SNR axis, evaluated
/// at [`REFERENCE_TXP_DBM`]. Rows are ordered by goodput (equivalently
/// SNR, as the envelope is monotone).
pub fn efficiency_vs_optimal_goodput(
    grid: &SweepGrid,
    profile: &DeviceProfile,
) -> Result<Vec<EfficiencyPoint>> {
    grid.channel.path_loss_db()?;
    let points = grid.range.points();
    let mut rows = par::map(&points, |&snr_db| {
        let (best, g_star_mbps) =
            dcf::optimal_goodput(grid.payload_octets, grid.n_max, snr_db, mode_table());
        let setup = TxSetup::constant(grid.payload_octets, grid.n_max, best, snr_db)
            .expect("valid sweep setup");
        EfficiencyPoint {
            snr_db,
            best_mode: best.index,
            g_star_mbps,
            mu_bits_per_joule: energy::efficiency(&setup, profile, REFERENCE_TXP_DBM),
        }
    });
    rows.sort_by(|a, b| {
        a.g_star_mbps
            .total_cmp(&b.g_star_mbps)
            .then(a.snr_db.total_cmp(&b.snr_db))
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyTxpRow {
    pub txp_dbm: f64,
    pub mu_modes_bpj: [f64; NUM_MODES],
    /// Goodput-best mode at this power.
    pub best_mode: u8,
}

/// Per-mode efficiency as a function of transmit power, plus which mode a
/// goodput-maximising station would pick at each power.
pub fn efficiency_vs_txp(grid: &SweepGrid, profile: &DeviceProfile) -> Result<Vec<EfficiencyTxpRow>> {
    grid.channel.path_loss_db()?;
    let points = grid.range.points();
    Ok(par::map(&points, |&txp_dbm| {
        let snr_db = grid.channel.snr_from_txp(txp_dbm).expect("channel validated");
        let mut mu_modes_bpj = [0.0; NUM_MODES];
        let mut g = [0.0; NUM_MODES];
        for (k, mode) in mode_table().iter().enumerate() {
            let setup = TxSetup::constant(grid.payload_octets, grid.n_max, *mode, snr_db)
                .expect("valid sweep setup");
            mu_modes_bpj[k] = energy::efficiency(&setup, profile, txp_dbm);
            g[k] = dcf::goodput_mbps(&setup);
        }
        let mut best = 0usize;
        for k in 1..NUM_MODES {
            if g[k] > g[best] {
                best = k;
            }
        }
        EfficiencyTxpRow { txp_dbm, mu_modes_bpj, best_mode: (best + 1) as u8 }
    }))
}

/// An efficiency drop at a mode transition of the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionDrop {
    pub snr_db: f64,
    pub from_mode: u8,
    pub to_mode: u8,
    pub mu_before: f64,
    pub mu_after: f64,
    /// Relative drop (mu_before - mu_after) / mu_before.
    pub drop: f64,
}

/// Scan a curve (sorted by goodput) for argmax-mode changes and record
/// those where efficiency actually falls.
pub fn find_transition_drops(curve: &[EfficiencyPoint]) -> Vec<TransitionDrop> {
    curve
        .windows(2)
        .filter(|w| w[1].best_mode != w[0].best_mode && w[1].mu_bits_per_joule < w[0].mu_bits_per_joule)
        .map(|w| TransitionDrop {
            snr_db: w[1].snr_db,
            from_mode: w[0].best_mode,
            to_mode: w[1].best_mode,
            mu_before: w[0].mu_bits_per_joule,
            mu_after: w[1].mu_bits_per_joule,
            drop: (w[0].mu_bits_per_joule - w[1].mu_bits_per_joule) / w[0].mu_bits_per_joule,
        })
        .collect()
}

/// Number of argmax-mode changes along a curve, drops or not.
pub fn count_mode_changes(curve: &[EfficiencyPoint]) -> usize {
    curve.windows(2).filter(|w| w[1].best_mode != w[0].best_mode).count()
}

/// Mean relative drop across recorded transitions (0 when there are none).
pub fn mean_relative_drop(drops: &[TransitionDrop]) -> f64 {
    if drops.is_empty() {
        return 0.0;
    }
    drops.iter().map(|d| d.drop).sum::<f64>() / drops.len() as f64
}

/// Signed mean of (mu_before - mu_after) / mu_before over every argmax
/// change, drops and rises alike. Unlike [`mean_relative_drop`], this is
/// comparable across parameter scalings even when a scaling removes some
/// drops entirely.
pub fn mean_transition_delta(curve: &[EfficiencyPoint]) -> f64 {
    let deltas: Vec<f64> = curve
        .windows(2)
        .filter(|w| w[1].best_mode != w[0].best_mode && w[0].mu_bits_per_joule > 0.0)
        .map(|w| (w[0].mu_bits_per_joule - w[1].mu_bits_per_joule) / w[0].mu_bits_per_joule)
        .collect();
    if deltas.is_empty() {
        return 0.0;
    }
    deltas.iter().sum::<f64>() / deltas.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityEntry {
    pub param: ScaleParam,
    pub factor: f64,
    pub curve: Vec<EfficiencyPoint>,
    pub drops: Vec<TransitionDrop>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub baseline_curve: Vec<EfficiencyPoint>,
    pub baseline_drops: Vec<TransitionDrop>,
    /// rho_id, rho_tx and gamma_xg, each scaled by `factor` and `1/factor`.
    pub entries: Vec<SensitivityEntry>,
    /// Largest relative efficiency change over the grid when rho_rx is
    /// scaled by `factor` or `1/factor`; the receive slope should not matter.
    pub rho_rx_max_rel_mu_change: f64,
}

/// Re-run the efficiency curve with each energy parameter scaled up and
/// down, and quantify how little the receive slope matters.
pub fn sensitivity_scan(
    grid: &SweepGrid,
    profile: &DeviceProfile,
    factor: f64,
) -> Result<SensitivityReport> {
    if !(factor > 0.0) {
        return Err(Error::InvalidConfig(format!("scale factor must be positive, got {factor}")));
    }
    let baseline_curve = efficiency_vs_optimal_goodput(grid, profile)?;
    let baseline_drops = find_transition_drops(&baseline_curve);

    let mut entries = Vec::new();
    for param in [ScaleParam::RhoId, ScaleParam::RhoTx, ScaleParam::GammaXg] {
        for f in [factor, 1.0 / factor] {
            let scaled = energy::scale_parameter(profile, param, f);
            let curve = efficiency_vs_optimal_goodput(grid, &scaled)?;
            let drops = find_transition_drops(&curve);
            entries.push(SensitivityEntry { param, factor: f, curve, drops });
        }
    }

    let mut rho_rx_max_rel_mu_change = 0.0f64;
    for f in [factor, 1.0 / factor] {
        let scaled = energy::scale_parameter(profile, ScaleParam::RhoRx, f);
        let curve = efficiency_vs_optimal_goodput(grid, &scaled)?;
        for (a, b) in baseline_curve.iter().zip(&curve) {
            if a.mu_bits_per_joule > 0.0 {
                let rel = (b.mu_bits_per_joule - a.mu_bits_per_joule).abs() / a.mu_bits_per_joule;
                rho_rx_max_rel_mu_change = rho_rx_max_rel_mu_change.max(rel);
            }
        }
    }

    Ok(SensitivityReport { baseline_curve, baseline_drops, entries, rho_rx_max_rel_mu_change })
}

// ---------------------------------------------------------------------------
// CSV emission. Floats are written with Rust's shortest round-trip
// formatting; no timestamps or other volatile fields appear in data files.

fn csv_err(e: csv::Error) -> Error {
    Error::DataFormat(e.to_string())
}

pub fn write_envelope_csv<W: Write>(w: W, rows: &[EnvelopeRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["snr_db".to_string()];
    header.extend((1..=NUM_MODES).map(|k| format!("g_mode{k}_mbps")));
    header.push("best_mode".into());
    header.push("g_star_mbps".into());
    out.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.snr_db.to_string()];
        rec.extend(r.g_modes_mbps.iter().map(|g| g.to_string()));
        rec.push(r.best_mode.to_string());
        rec.push(r.g_star_mbps.to_string());
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_energy_txp_csv<W: Write>(w: W, rows: &[EnergyTxpRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["txp_dbm".to_string()];
    header.extend((1..=NUM_MODES).map(|k| format!("e_mode{k}_j")));
    out.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.txp_dbm.to_string()];
        rec.extend(r.e_modes_j.iter().map(|e| e.to_string()));
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_efficiency_curve_csv<W: Write>(w: W, rows: &[EfficiencyPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["snr_db", "best_mode", "g_star_mbps", "mu_bits_per_joule"])
        .map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.snr_db.to_string(),
            r.best_mode.to_string(),
            r.g_star_mbps.to_string(),
            r.mu_bits_per_joule.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_efficiency_txp_csv<W: Write>(w: W, rows: &[EfficiencyTxpRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["txp_dbm".to_string()];
    header.extend((1..=NUM_MODES).map(|k| format!("mu_mode{k}_bpj")));
    header.push("best_mode".into());
    out.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.txp_dbm.to_string()];
        rec.extend(r.mu_modes_bpj.iter().map(|m| m.to_string()));
        rec.push(r.best_mode.to_string());
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_drops_csv<W: Write>(w: W, drops: &[TransitionDrop]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["snr_db", "from_mode", "to_mode", "mu_before", "mu_after", "drop"])
        .map_err(csv_err)?;
    for d in drops {
        out.write_record([
            d.snr_db.to_string(),
            d.from_mode.to_string(),
            d.to_mode.to_string(),
            d.mu_before.to_string(),
            d.mu_after.to_string(),
            d.drop.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Side-by-side CSV of a baseline and a scaled efficiency curve, including
/// frame energies so absolute shifts are visible.
pub fn write_sensitivity_csv<W: Write>(
    w: W,
    grid: &SweepGrid,
    profile: &DeviceProfile,
    scaled: &DeviceProfile,
    base_curve: &[EfficiencyPoint],
    scaled_curve: &[EfficiencyPoint],
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "snr_db",
        "best_mode",
        "g_star_mbps",
        "mu_base_bpj",
        "mu_scaled_bpj",
        "e_base_j",
        "e_scaled_j",
    ])
    .map_err(csv_err)?;
    for (a, b) in base_curve.iter().zip(scaled_curve) {
        let mode = *PhyMode::from_index(a.best_mode).expect("mode index from sweep");
        let setup = TxSetup::constant(grid.payload_octets, grid.n_max, mode, a.snr_db)
            .expect("valid sweep setup");
        let txp_dbm = grid.channel.txp_for_snr(a.snr_db)?;
        let e_base = energy::expected_energy(&setup, profile, txp_dbm).e_frame_j;
        let e_scaled = energy::expected_energy(&setup, scaled, txp_dbm).e_frame_j;
        out.write_record([
            a.snr_db.to_string(),
            a.best_mode.to_string(),
            a.g_star_mbps.to_string(),
            a.mu_bits_per_joule.to_string(),
            b.mu_bits_per_joule.to_string(),
            e_base.to_string(),
            e_scaled.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}
