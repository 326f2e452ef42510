//! Device energy model.
//!
//! A device is characterised by its idle draw, per-frame processing tolls,
//! and linear transmit/receive power slopes over MCS and transmit power.
//! On top of the DCF delay decomposition this yields the expected energy of
//! one transmission, and bits-per-joule efficiency.

use std::io::Read;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dcf::{self, DelayBreakdown, TxSetup};
use crate::phy::{ack_mode_for, db_to_linear};
use crate::{Error, Result};

/// Power model of one platform. Units: watts, joules, Mbps, mW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    /// Baseline draw of the whole device, W.
    pub rho_id_w: f64,
    /// Per-generated-frame processing toll, J.
    pub gamma_xg_j: f64,
    /// Per-received-frame processing toll, J (receiver role only).
    pub gamma_xr_j: f64,
    /// rho_tx = alpha0 + alpha1 * MCS + alpha2 * TXP_mW, W.
    pub alpha: [f64; 3],
    /// rho_rx = beta0 + beta1 * MCS, W.
    pub beta: [f64; 2],
}

impl DeviceProfile {
    /// Incremental transmit power while the radio is sending, W.
    pub fn rho_tx_w(&self, mcs_mbps: f64, txp_mw: f64) -> f64 {
        self.alpha[0] + self.alpha[1] * mcs_mbps + self.alpha[2] * txp_mw
    }

    /// Incremental receive power while the radio is receiving, W.
    pub fn rho_rx_w(&self, mcs_mbps: f64) -> f64 {
        self.beta[0] + self.beta[1] * mcs_mbps
    }
}

/// Both slopes at once.
pub fn power_slopes(profile: &DeviceProfile, mcs_mbps: f64, txp_mw: f64) -> (f64, f64) {
    (profile.rho_tx_w(mcs_mbps, txp_mw), profile.rho_rx_w(mcs_mbps))
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_linear(dbm)
}

#[derive(Debug, Deserialize, Serialize)]
struct ProfileRow {
    name: String,
    rho_id: f64,
    gamma_xg: f64,
    gamma_xr: f64,
    alpha0: f64,
    alpha1: f64,
    alpha2: f64,
    beta0: f64,
    beta1: f64,
}

impl From<ProfileRow> for DeviceProfile {
    fn from(r: ProfileRow) -> Self {
        DeviceProfile {
            name: r.name,
            rho_id_w: r.rho_id,
            gamma_xg_j: r.gamma_xg,
            gamma_xr_j: r.gamma_xr,
            alpha: [r.alpha0, r.alpha1, r.alpha2],
            beta: [r.beta0, r.beta1],
        }
    }
}

/// Parse a profile CSV (header `name,rho_id,gamma_xg,gamma_xr,alpha0..beta1`,
/// `#` comments allowed).
pub fn parse_profiles<R: Read>(reader: R) -> Result<Vec<DeviceProfile>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::DataFormat(e.to_string()))?
        .clone();
    let expected = ["name", "rho_id", "gamma_xg", "gamma_xr", "alpha0", "alpha1", "alpha2", "beta0", "beta1"];
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::DataFormat(format!(
            "profile header must be `{}`, found `{}`",
            expected.join(","),
            got.join(",")
        )));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<ProfileRow>() {
        let row = row.map_err(|e| Error::DataFormat(e.to_string()))?;
        out.push(row.into());
    }
    if out.is_empty() {
        return Err(Error::DataFormat("profile file contains no devices".into()));
    }
    Ok(out)
}

pub fn load_profiles<P: AsRef<Path>>(path: P) -> Result<Vec<DeviceProfile>> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_profiles(file)
}

/// The five bundled platforms (see `data/devices.csv`).
pub fn builtin_profiles() -> &'static [DeviceProfile] {
    static PROFILES: OnceLock<Vec<DeviceProfile>> = OnceLock::new();
    PROFILES.get_or_init(|| {
        parse_profiles(include_str!("../data/devices.csv").as_bytes())
            .expect("bundled profile data is well-formed")
    })
}

/// Find a profile by a forgiving name match (case and punctuation ignored).
pub fn find_profile<'a>(profiles: &'a [DeviceProfile], name: &str) -> Option<&'a DeviceProfile> {
    let norm = |s: &str| {
        s.chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase()
    };
    let want = norm(name);
    profiles.iter().find(|p| norm(&p.name) == want)
}

/// Energy decomposition of one transmission, J.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    /// Conditional on success.
    pub e_succ_j: f64,
    /// All attempts exhausted.
    pub e_fail_j: f64,
    /// Unconditional expectation per generated frame (processing toll included).
    pub e_frame_j: f64,
    /// Delivered bits per joule.
    pub mu_bits_per_joule: f64,
}

/// Apply the device power model to a delay breakdown: idle time at the
/// baseline draw, each attempt's airtime at that attempt's transmit slope,
/// the ACK at the receive slope of its own rate, plus the per-frame toll.
pub fn energy_from_delay(
    delay: &DelayBreakdown,
    setup: &TxSetup,
    profile: &DeviceProfile,
    txp_dbm: f64,
) -> EnergyBreakdown {
    let txp_mw = dbm_to_mw(txp_dbm);
    let us = 1e-6;
    let branch = |stage: &dcf::StageTimes| -> f64 {
        let mut e = profile.rho_id_w * stage.idle_us * us;
        for (i, mode) in setup.modes().iter().enumerate() {
            e += profile.rho_tx_w(mode.rate_mbps as f64, txp_mw) * stage.tx_us[i] * us;
            let ack = ack_mode_for(mode);
            e += profile.rho_rx_w(ack.rate_mbps as f64) * stage.rx_us[i] * us;
        }
        e
    };
    let e_succ_j = branch(&delay.succ);
    let e_fail_j = branch(&delay.fail);
    let e_frame_j =
        profile.gamma_xg_j + (1.0 - delay.p_succ) * e_fail_j + delay.p_succ * e_succ_j;
    let mu_bits_per_joule = delay.p_succ * setup.payload_bits() as f64 / e_frame_j;
    EnergyBreakdown { e_succ_j, e_fail_j, e_frame_j, mu_bits_per_joule }
}

/// Expected energy of one transmission at the given transmit power.
pub fn expected_energy(setup: &TxSetup, profile: &DeviceProfile, txp_dbm: f64) -> EnergyBreakdown {
    let delay = dcf::expected_delay(setup);
    energy_from_delay(&delay, setup, profile, txp_dbm)
}

/// Delivered bits per joule for this setup and power.
pub fn efficiency(setup: &TxSetup, profile: &DeviceProfile, txp_dbm: f64) -> f64 {
    expected_energy(setup, profile, txp_dbm).mu_bits_per_joule
}

/// Long-run traffic mix for the average-power identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficLoad {
    /// Fraction of time spent transmitting.
    pub tau_tx: f64,
    /// Fraction of time spent receiving.
    pub tau_rx: f64,
    /// Generated frames per second.
    pub lambda_g: f64,
    /// Received frames per second.
    pub lambda_r: f64,
}

impl TrafficLoad {
    pub fn new(tau_tx: f64, tau_rx: f64, lambda_g: f64, lambda_r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau_tx)
            || !(0.0..=1.0).contains(&tau_rx)
            || tau_tx + tau_rx > 1.0
            || lambda_g < 0.0
            || lambda_r < 0.0
        {
            return Err(Error::InvalidSetup(
                "airtime fractions must be in [0,1] with tau_tx + tau_rx <= 1, rates >= 0".into(),
            ));
        }
        Ok(TrafficLoad { tau_tx, tau_rx, lambda_g, lambda_r })
    }
}

/// Mean power draw under a steady traffic mix, W.
pub fn avg_power(profile: &DeviceProfile, load: &TrafficLoad, mcs_mbps: f64, txp_mw: f64) -> f64 {
    profile.rho_id_w
        + profile.rho_tx_w(mcs_mbps, txp_mw) * load.tau_tx
        + profile.rho_rx_w(mcs_mbps) * load.tau_rx
        + profile.gamma_xg_j * load.lambda_g
        + profile.gamma_xr_j * load.lambda_r
}

/// Which scalar of the power model a sensitivity scan perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleParam {
    RhoId,
    RhoTx,
    RhoRx,
    GammaXg,
}

impl ScaleParam {
    pub fn label(self) -> &'static str {
        match self {
            ScaleParam::RhoId => "rho_id",
            ScaleParam::RhoTx => "rho_tx",
            ScaleParam::RhoRx => "rho_rx",
            ScaleParam::GammaXg => "gamma_xg",
        }
    }
}

impl std::str::FromStr for ScaleParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rho_id" => Ok(ScaleParam::RhoId),
            "rho_tx" => Ok(ScaleParam::RhoTx),
            "rho_rx" => Ok(ScaleParam::RhoRx),
            "gamma_xg" => Ok(ScaleParam::GammaXg),
            other => Err(Error::InvalidConfig(format!(
                "unknown parameter `{other}` (expected rho_id, rho_tx, rho_rx or gamma_xg)"
            ))),
        }
    }
}

/// A copy of the profile with one parameter scaled. Scaling `rho_tx` or
/// `rho_rx` scales the whole slope vector.
pub fn scale_parameter(profile: &DeviceProfile, param: ScaleParam, factor: f64) -> DeviceProfile {
    let mut p = profile.clone();
    match param {
        ScaleParam::RhoId => p.rho_id_w *= factor,
        ScaleParam::GammaXg => p.gamma_xg_j *= factor,
        ScaleParam::RhoTx => p.alpha.iter_mut().for_each(|a| *a *= factor),
        ScaleParam::RhoRx => p.beta.iter_mut().for_each(|b| *b *= factor),
    }
    p
}

// ---------------------------------------------------------------------------
// Least-squares fitting of the power slopes.

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
pub struct TxSample {
    pub mcs_mbps: f64,
    pub txp_mw: f64,
    pub rho_tx_w: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
pub struct RxSample {
    pub mcs_mbps: f64,
    pub rho_rx_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub alpha: [f64; 3],
    pub alpha_adj_r2: f64,
    pub beta: [f64; 2],
    pub beta_adj_r2: f64,
}

/// Ordinary least squares for both power slopes.
///
/// Transmit samples must span at least two MCS values and two TXP values
/// (four samples minimum); receive samples at least two MCS values.
pub fn fit_profile(tx: &[TxSample], rx: &[RxSample]) -> Result<FitResult> {
    if tx.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "need at least 4 transmit samples, got {}",
            tx.len()
        )));
    }
    if rx.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least 2 receive samples, got {}",
            rx.len()
        )));
    }
    let distinct = |values: Vec<f64>| {
        let mut v = values;
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    if distinct(tx.iter().map(|s| s.mcs_mbps).collect()) < 2
        || distinct(tx.iter().map(|s| s.txp_mw).collect()) < 2
    {
        return Err(Error::DegenerateFit(
            "transmit samples must span at least two MCS and two TXP values".into(),
        ));
    }
    if distinct(rx.iter().map(|s| s.mcs_mbps).collect()) < 2 {
        return Err(Error::DegenerateFit(
            "receive samples must span at least two MCS values".into(),
        ));
    }

    let tx_rows: Vec<[f64; 3]> = tx.iter().map(|s| [1.0, s.mcs_mbps, s.txp_mw]).collect();
    let tx_y: Vec<f64> = tx.iter().map(|s| s.rho_tx_w).collect();
    let (alpha, alpha_adj_r2) = ols::<3>(&tx_rows, &tx_y)?;

    let rx_rows: Vec<[f64; 2]> = rx.iter().map(|s| [1.0, s.mcs_mbps]).collect();
    let rx_y: Vec<f64> = rx.iter().map(|s| s.rho_rx_w).collect();
    let (beta, beta_adj_r2) = ols::<2>(&rx_rows, &rx_y)?;

    Ok(FitResult { alpha, alpha_adj_r2, beta, beta_adj_r2 })
}

/// Normal-equation OLS with Gaussian elimination; returns coefficients and
/// adjusted R^2.
fn ols<const P: usize>(rows: &[[f64; P]], y: &[f64]) -> Result<([f64; P], f64)> {
    let n = rows.len();
    let mut xtx = [[0.0f64; P]; P];
    let mut xty = [0.0f64; P];
    for (row, &yi) in rows.iter().zip(y) {
        for i in 0..P {
            for j in 0..P {
                xtx[i][j] += row[i] * row[j];
            }
            xty[i] += row[i] * yi;
        }
    }
    let coef = solve(xtx, xty)?;

    let mean = y.iter().sum::<f64>() / n as f64;
    let mut rss = 0.0;
    let mut tss = 0.0;
    for (row, &yi) in rows.iter().zip(y) {
        let fit: f64 = (0..P).map(|i| coef[i] * row[i]).sum();
        rss += (yi - fit).powi(2);
        tss += (yi - mean).powi(2);
    }
    let r2 = if tss > 0.0 {
        1.0 - rss / tss
    } else if rss <= f64::EPSILON {
        1.0
    } else {
        0.0
    };
    let dof = n as f64 - P as f64 - 1.0;
    let adj = if rss <= 1e-20 {
        1.0
    } else if dof > 0.0 {
        1.0 - (1.0 - r2) * (n as f64 - 1.0) / dof
    } else {
        f64::NAN
    };
    Ok((coef, adj))
}

fn solve<const P: usize>(mut a: [[f64; P]; P], mut b: [f64; P]) -> Result<[f64; P]> {
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    for col in 0..P {
        let pivot = (col..P)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-12 * scale {
            return Err(Error::DegenerateFit(
                "design matrix is rank-deficient".into(),
            ));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..P {
            let f = a[row][col] / a[col][col];
            for k in col..P {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0f64; P];
    for col in (0..P).rev() {
        let mut acc = b[col];
        for k in col + 1..P {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::{mode_table, PhyMode, TimingParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn htc() -> DeviceProfile {
        builtin_profiles()[0].clone()
    }

    fn rpi() -> DeviceProfile {
        find_profile(builtin_profiles(), "raspberrypi").unwrap().clone()
    }

    #[test]
    fn builtin_profiles_load_and_match_measurements() {
        let all = builtin_profiles();
        assert_eq!(all.len(), 5);
        let names: Vec<&str> = all.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(
            names,
            ["HTC Legend", "Linksys WRT54G", "Raspberry Pi", "Galaxy Note 10.1", "Soekris net4826-48"]
        );
        let soekris = &all[4];
        assert!((soekris.alpha[1] - 0.0170).abs() < 1e-12);
        assert!((soekris.beta[1] - 0.0237).abs() < 1e-12);
        let rpi = &all[2];
        assert!((rpi.beta[1] - 0.00146).abs() < 1e-12);
    }

    #[test]
    fn transmit_slope_worked_example() {
        // HTC Legend at MCS 54 and 100 mW: 0.354 + 0.0052*54 + 0.021*100.
        let (rho_tx, rho_rx) = power_slopes(&htc(), 54.0, 100.0);
        assert!((rho_tx - 2.7348).abs() < 1e-12);
        assert!((htc().rho_tx_w(54.0, 0.0) - (0.354 + 0.2808)).abs() < 1e-12);
        // Receive slope at the ACK's 6 Mbps.
        assert!((htc().rho_rx_w(6.0) - 0.05158).abs() < 1e-12);
        assert!((rho_rx - (0.013 + 0.00643 * 54.0)).abs() < 1e-12);
    }

    #[test]
    fn slopes_positive_over_operating_range() {
        for p in builtin_profiles() {
            for mode in mode_table() {
                for txp_dbm in 0..=17 {
                    let mw = dbm_to_mw(txp_dbm as f64);
                    let (tx, rx) = power_slopes(p, mode.rate_mbps as f64, mw);
                    assert!(tx > 0.0, "{} tx at {} Mbps {} dBm", p.name, mode.rate_mbps, txp_dbm);
                    assert!(rx > 0.0, "{} rx at {} Mbps", p.name, mode.rate_mbps);
                }
            }
        }
    }

    #[test]
    fn profile_csv_round_trip_and_errors() {
        let text = "name,rho_id,gamma_xg,gamma_xr,alpha0,alpha1,alpha2,beta0,beta1\n\
                    Widget,1.5,0.0001,0.00005,0.3,0.001,0.02,0.01,0.002\n";
        let got = parse_profiles(text.as_bytes()).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].name, "Widget");
        assert!((got[0].alpha[2] - 0.02).abs() < 1e-15);

        let bad_header = "name,rho_id\nWidget,1.5\n";
        assert!(matches!(parse_profiles(bad_header.as_bytes()), Err(Error::DataFormat(_))));

        let bad_value = "name,rho_id,gamma_xg,gamma_xr,alpha0,alpha1,alpha2,beta0,beta1\n\
                         Widget,abc,0,0,0,0,0,0,0\n";
        assert!(matches!(parse_profiles(bad_value.as_bytes()), Err(Error::DataFormat(_))));

        let empty = "name,rho_id,gamma_xg,gamma_xr,alpha0,alpha1,alpha2,beta0,beta1\n";
        assert!(matches!(parse_profiles(empty.as_bytes()), Err(Error::DataFormat(_))));
    }

    #[test]
    fn find_profile_is_forgiving() {
        let all = builtin_profiles();
        assert_eq!(find_profile(all, "raspberrypi").unwrap().name, "Raspberry Pi");
        assert_eq!(find_profile(all, "SOEKRIS NET4826-48").unwrap().name, "Soekris net4826-48");
        assert!(find_profile(all, "unknown-device").is_none());
    }

    #[test]
    fn clean_single_attempt_energy_closed_form() {
        let mode = *PhyMode::from_index(8).unwrap();
        let setup = TxSetup::constant(1500, 1, mode, 60.0).unwrap();
        let p = rpi();
        let txp_dbm = 10.0;
        let e = expected_energy(&setup, &p, txp_dbm);

        let t = TimingParams::IEEE80211A;
        let idle_s = (67.5 + t.sifs_us as f64 + t.difs_us as f64) * 1e-6;
        let tx_s = t.airtime_data_us(1500, &mode) as f64 * 1e-6;
        let rx_s = 28e-6;
        let expect_succ = p.rho_id_w * idle_s
            + p.rho_tx_w(54.0, dbm_to_mw(txp_dbm)) * tx_s
            + p.rho_rx_w(24.0) * rx_s;
        assert!((e.e_succ_j - expect_succ).abs() < 1e-15);
        assert!((e.e_frame_j - (p.gamma_xg_j + expect_succ)).abs() / e.e_frame_j < 1e-9);
        assert!((e.mu_bits_per_joule - 12000.0 / e.e_frame_j).abs() < 1e-6);
    }

    #[test]
    fn frame_energy_never_below_processing_toll() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let mode = *PhyMode::from_index(rng.gen_range(1..=8)).unwrap();
            let snr = rng.gen_range(-10.0..40.0);
            let txp = rng.gen_range(0.0..17.0);
            let setup = TxSetup::constant(1500, 7, mode, snr).unwrap();
            for p in builtin_profiles() {
                let e = expected_energy(&setup, p, txp);
                assert!(e.e_frame_j >= p.gamma_xg_j);
                assert!(e.e_succ_j > 0.0 && e.e_fail_j > 0.0);
            }
        }
    }

    #[test]
    fn dead_link_efficiency_is_zero() {
        let mode = *PhyMode::from_index(8).unwrap();
        let setup = TxSetup::constant(1500, 7, mode, -20.0).unwrap();
        assert_eq!(efficiency(&setup, &rpi(), 10.0), 0.0);
    }

    #[test]
    fn stochastic_energy_replay_matches_expectation() {
        // Replay the retry process and integrate power over the drawn
        // timeline; the per-frame mean must approach the closed form.
        let mode = *PhyMode::from_index(3).unwrap();
        let snr = 9.0;
        let txp_dbm = 4.0;
        let setup = TxSetup::constant(1500, 7, mode, snr).unwrap();
        let profile = rpi();
        let expect = expected_energy(&setup, &profile, txp_dbm);

        let t = TimingParams::IEEE80211A;
        let p_data = 1.0 - crate::phy::per(&mode, snr, dcf::data_bits(1500));
        let p_ack = 1.0 - crate::phy::per(ack_mode_for(&mode), snr, dcf::ack_bits());
        let rho_tx = profile.rho_tx_w(12.0, dbm_to_mw(txp_dbm));
        let rho_rx = profile.rho_rx_w(ack_mode_for(&mode).rate_mbps as f64);

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let frames = 300_000u32;
        let mut total_j = 0.0f64;
        for _ in 0..frames {
            total_j += profile.gamma_xg_j;
            for attempt in 1..=7 {
                let slots = rng.gen_range(0..=dcf::cw_for_attempt(attempt));
                total_j += profile.rho_id_w * (slots * t.slot_us) as f64 * 1e-6;
                total_j += rho_tx * t.airtime_data_us(1500, &mode) as f64 * 1e-6;
                let ok = rng.gen::<f64>() < p_data && rng.gen::<f64>() < p_ack;
                if ok {
                    total_j += profile.rho_id_w * (t.sifs_us + t.difs_us) as f64 * 1e-6;
                    total_j += rho_rx * t.airtime_ack_us(ack_mode_for(&mode)).unwrap() as f64 * 1e-6;
                    break;
                }
                total_j += profile.rho_id_w * t.ack_timeout_us() as f64 * 1e-6;
            }
        }
        let mean = total_j / frames as f64;
        assert!(
            (mean - expect.e_frame_j).abs() / expect.e_frame_j < 0.01,
            "sim {mean} vs model {}",
            expect.e_frame_j
        );
    }

    #[test]
    fn avg_power_identity() {
        let p = htc();
        let idle = TrafficLoad::new(0.0, 0.0, 0.0, 0.0).unwrap();
        assert!((avg_power(&p, &idle, 54.0, 50.0) - p.rho_id_w).abs() < 1e-15);

        let tx_only = TrafficLoad::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert!(
            (avg_power(&p, &tx_only, 54.0, 50.0) - (p.rho_id_w + p.rho_tx_w(54.0, 50.0))).abs()
                < 1e-15
        );

        let mixed = TrafficLoad::new(0.25, 0.25, 100.0, 50.0).unwrap();
        let expect = p.rho_id_w
            + 0.25 * p.rho_tx_w(36.0, 10.0)
            + 0.25 * p.rho_rx_w(36.0)
            + 100.0 * p.gamma_xg_j
            + 50.0 * p.gamma_xr_j;
        assert!((avg_power(&p, &mixed, 36.0, 10.0) - expect).abs() < 1e-12);

        assert!(TrafficLoad::new(0.7, 0.5, 0.0, 0.0).is_err());
        assert!(TrafficLoad::new(-0.1, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn scaling_parameters() {
        let p = rpi();
        let same = scale_parameter(&p, ScaleParam::RhoId, 1.0);
        assert_eq!(same, p);

        let tripled = scale_parameter(&p, ScaleParam::GammaXg, 3.0);
        assert!((tripled.gamma_xg_j - 3.0 * p.gamma_xg_j).abs() < 1e-18);

        let tx3 = scale_parameter(&p, ScaleParam::RhoTx, 3.0);
        assert!((tx3.rho_tx_w(54.0, 50.0) - 3.0 * p.rho_tx_w(54.0, 50.0)).abs() < 1e-12);

        // Scaling the generation toll shifts every frame energy by the same
        // absolute amount, so pairwise differences are preserved.
        let mode = *PhyMode::from_index(5).unwrap();
        let s1 = TxSetup::constant(1500, 7, mode, 18.0).unwrap();
        let s2 = TxSetup::constant(1500, 7, mode, 22.0).unwrap();
        let d_base = expected_energy(&s1, &p, 10.0).e_frame_j - expected_energy(&s2, &p, 10.0).e_frame_j;
        let d_scaled =
            expected_energy(&s1, &tripled, 10.0).e_frame_j - expected_energy(&s2, &tripled, 10.0).e_frame_j;
        assert!((d_base - d_scaled).abs() < 1e-12 * d_base.abs().max(1.0));
    }

    #[test]
    fn ols_recovers_noiseless_coefficients() {
        let alpha = [0.42, 0.0031, 0.055];
        let beta = [0.02, 0.0017];
        let mut tx = Vec::new();
        for mcs in [6.0, 12.0, 24.0, 54.0] {
            for txp in [1.0, 10.0, 50.0] {
                tx.push(TxSample {
                    mcs_mbps: mcs,
                    txp_mw: txp,
                    rho_tx_w: alpha[0] + alpha[1] * mcs + alpha[2] * txp,
                });
            }
        }
        let rx: Vec<RxSample> = [6.0, 12.0, 24.0, 36.0, 54.0]
            .iter()
            .map(|&m| RxSample { mcs_mbps: m, rho_rx_w: beta[0] + beta[1] * m })
            .collect();
        let fit = fit_profile(&tx, &rx).unwrap();
        for i in 0..3 {
            assert!((fit.alpha[i] - alpha[i]).abs() < 1e-9, "alpha[{i}]");
        }
        for i in 0..2 {
            assert!((fit.beta[i] - beta[i]).abs() < 1e-9, "beta[{i}]");
        }
        assert!((fit.alpha_adj_r2 - 1.0).abs() < 1e-9);
        assert!((fit.beta_adj_r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ols_noisy_recovery_within_three_standard_errors() {
        let alpha = [0.42, 0.0031, 0.055];
        let sigma = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut gauss = || {
            // Box-Muller from two uniforms.
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let mut tx = Vec::new();
        for mcs in [6.0, 9.0, 12.0, 18.0, 24.0, 36.0, 48.0, 54.0] {
            for txp in [1.0, 3.0, 10.0, 30.0, 50.0] {
                tx.push(TxSample {
                    mcs_mbps: mcs,
                    txp_mw: txp,
                    rho_tx_w: alpha[0] + alpha[1] * mcs + alpha[2] * txp + sigma * gauss(),
                });
            }
        }
        let rx: Vec<RxSample> = [6.0, 12.0, 24.0, 36.0, 54.0]
            .iter()
            .map(|&m| RxSample { mcs_mbps: m, rho_rx_w: 0.02 + 0.0017 * m })
            .collect();
        let fit = fit_profile(&tx, &rx).unwrap();

        // Standard errors from (X'X)^-1 diag, test-side computation.
        let n = tx.len() as f64;
        let mean_mcs = tx.iter().map(|s| s.mcs_mbps).sum::<f64>() / n;
        let mean_txp = tx.iter().map(|s| s.txp_mw).sum::<f64>() / n;
        let sxx: f64 = tx.iter().map(|s| (s.mcs_mbps - mean_mcs).powi(2)).sum();
        let szz: f64 = tx.iter().map(|s| (s.txp_mw - mean_txp).powi(2)).sum();
        // MCS and TXP are laid out on an independent grid, so the
        // off-diagonal term vanishes and the slope variances decouple.
        let se1 = sigma / sxx.sqrt();
        let se2 = sigma / szz.sqrt();
        assert!((fit.alpha[1] - alpha[1]).abs() < 3.0 * se1, "alpha1 off by >3 SE");
        assert!((fit.alpha[2] - alpha[2]).abs() < 3.0 * se2, "alpha2 off by >3 SE");
        assert!(fit.alpha_adj_r2 > 0.95);
    }

    #[test]
    fn ols_rejects_rank_deficiency() {
        // All transmit samples at one TXP: the txp column is degenerate.
        let tx: Vec<TxSample> = [6.0, 12.0, 24.0, 54.0]
            .iter()
            .map(|&m| TxSample { mcs_mbps: m, txp_mw: 10.0, rho_tx_w: 0.5 + 0.01 * m })
            .collect();
        let rx: Vec<RxSample> = [6.0, 54.0]
            .iter()
            .map(|&m| RxSample { mcs_mbps: m, rho_rx_w: 0.02 + 0.001 * m })
            .collect();
        assert!(matches!(fit_profile(&tx, &rx), Err(Error::DegenerateFit(_))));

        // Too few samples.
        assert!(fit_profile(&tx[..3], &rx).is_err());
        assert!(fit_profile(&tx, &rx[..1]).is_err());
    }
}
