//! Analytical model of one DCF transmission: per-attempt success
//! probabilities, the expected-delay decomposition over the retry chain,
//! effective goodput, and the best-mode envelope.
//!
//! A "transmission" is the whole MAC-level life of one frame: up to `n_max`
//! attempts, each preceded by a mean backoff, each failure followed by the
//! ACK-timeout dwell, and a successful attempt closed by SIFS + ACK + DIFS.

use crate::phy::{
    self, ack_mode_for, ErrorModel, PhyMode, TimingParams, ACK_OCTETS, MAC_OVERHEAD_OCTETS,
};
use crate::{Error, Result};

const T: TimingParams = TimingParams::IEEE80211A;

/// Everything that defines one modelled transmission: payload, and the
/// (mode, SNR) pair in effect at each attempt. Attempt vectors are
/// validated at construction, so evaluation functions cannot fail.
#[derive(Debug, Clone, PartialEq)]
pub struct TxSetup {
    payload_octets: u32,
    modes: Vec<PhyMode>,
    snrs_db: Vec<f64>,
}

impl TxSetup {
    pub fn new(payload_octets: u32, modes: Vec<PhyMode>, snrs_db: Vec<f64>) -> Result<Self> {
        if payload_octets == 0 {
            return Err(Error::InvalidSetup("payload must be at least 1 octet".into()));
        }
        if modes.is_empty() {
            return Err(Error::InvalidSetup("at least one attempt is required".into()));
        }
        if modes.len() != snrs_db.len() {
            return Err(Error::InvalidSetup(format!(
                "{} modes vs {} SNRs",
                modes.len(),
                snrs_db.len()
            )));
        }
        Ok(TxSetup { payload_octets, modes, snrs_db })
    }

    /// The common case: the same mode and SNR at every attempt.
    pub fn constant(payload_octets: u32, n_max: usize, mode: PhyMode, snr_db: f64) -> Result<Self> {
        Self::new(payload_octets, vec![mode; n_max], vec![snr_db; n_max])
    }

    pub fn payload_octets(&self) -> u32 {
        self.payload_octets
    }

    pub fn n_max(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[PhyMode] {
        &self.modes
    }

    pub fn snrs_db(&self) -> &[f64] {
        &self.snrs_db
    }

    pub fn payload_bits(&self) -> u64 {
        8 * self.payload_octets as u64
    }
}

/// Frame lengths that enter the error model.
pub fn data_bits(payload_octets: u32) -> u64 {
    8 * (payload_octets + MAC_OVERHEAD_OCTETS) as u64
}

pub fn ack_bits() -> u64 {
    8 * ACK_OCTETS as u64
}

/// Probability that a single attempt delivers the frame AND its ACK.
pub fn attempt_success_prob(payload_octets: u32, mode: &PhyMode, snr_db: f64) -> f64 {
    attempt_success_prob_with(phy::default_error_model(), payload_octets, mode, snr_db)
}

pub fn attempt_success_prob_with(
    model: &dyn ErrorModel,
    payload_octets: u32,
    mode: &PhyMode,
    snr_db: f64,
) -> f64 {
    let p_data = 1.0 - model.per(mode, snr_db, data_bits(payload_octets));
    let p_ack = 1.0 - model.per(ack_mode_for(mode), snr_db, ack_bits());
    p_data * p_ack
}

/// Overall success probability and the probability of first succeeding at
/// each attempt: `p_n[k] = p_k * prod_{j<k} (1 - p_j)`.
pub fn success_probabilities(setup: &TxSetup) -> (f64, Vec<f64>) {
    success_probabilities_with(phy::default_error_model(), setup)
}

pub fn success_probabilities_with(model: &dyn ErrorModel, setup: &TxSetup) -> (f64, Vec<f64>) {
    let mut p_n = Vec::with_capacity(setup.n_max());
    let mut all_failed = 1.0;
    for (mode, &snr) in setup.modes.iter().zip(&setup.snrs_db) {
        let p = attempt_success_prob_with(model, setup.payload_octets, mode, snr);
        p_n.push(all_failed * p);
        all_failed *= 1.0 - p;
    }
    (p_n.iter().sum(), p_n)
}

/// Mean backoff before the given 1-based attempt: the contention window
/// doubles per retry from CW_min and saturates at CW_max.
pub fn backoff_mean_us(attempt: usize) -> f64 {
    (cw_for_attempt(attempt) as f64 / 2.0) * T.slot_us as f64
}

/// Contention window (in slots, inclusive upper bound of the uniform draw)
/// for the given 1-based attempt.
pub fn cw_for_attempt(attempt: usize) -> u32 {
    assert!(attempt >= 1, "attempts are 1-based");
    let exp = (attempt - 1).min(31) as u32;
    let window = (T.cw_min + 1).saturating_mul(1u32 << exp.min(6));
    window.min(T.cw_max + 1) - 1
}

/// Expected idle/tx/rx microseconds inside one branch (success or failure)
/// of the transmission, with per-attempt resolution so that energy weights
/// can be applied per mode afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTimes {
    /// Backoffs, ACK-timeout dwells, SIFS and DIFS.
    pub idle_us: f64,
    /// Expected data airtime attributable to each attempt.
    pub tx_us: Vec<f64>,
    /// Expected ACK airtime attributable to success at each attempt.
    pub rx_us: Vec<f64>,
}

impl StageTimes {
    pub fn total_us(&self) -> f64 {
        self.idle_us + self.tx_us.iter().sum::<f64>() + self.rx_us.iter().sum::<f64>()
    }
}

/// Full delay decomposition of one transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayBreakdown {
    pub p_succ: f64,
    pub p_n_succ: Vec<f64>,
    /// Mean duration of a successful transmission (conditional on success).
    pub d_succ_us: f64,
    /// Duration of a failed transmission (all attempts exhausted).
    pub d_fail_us: f64,
    /// Unconditional expected duration.
    pub e_delay_us: f64,
    pub succ: StageTimes,
    pub fail: StageTimes,
}

pub fn expected_delay(setup: &TxSetup) -> DelayBreakdown {
    expected_delay_with(phy::default_error_model(), setup)
}

pub fn expected_delay_with(model: &dyn ErrorModel, setup: &TxSetup) -> DelayBreakdown {
    let n = setup.n_max();
    let (p_succ, p_n_succ) = success_probabilities_with(model, setup);

    // Conditional weight of "first success at attempt k". When success is
    // impossible the weights degenerate; the uniform limit (constant
    // per-attempt probability taken to zero) keeps the breakdown finite and
    // leaves the unconditional expectation untouched.
    let w: Vec<f64> = if p_succ > 0.0 {
        p_n_succ.iter().map(|p| p / p_succ).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    // Probability that attempt i happens at all, given success: sum_{k>=i} w_k.
    let mut attempt_weight = vec![0.0; n];
    let mut tail = 0.0;
    for i in (0..n).rev() {
        tail += w[i];
        attempt_weight[i] = tail;
    }

    let wait = T.ack_timeout_us() as f64;
    let l = setup.payload_octets;

    let mut succ = StageTimes {
        idle_us: backoff_mean_us(1) + T.sifs_us as f64 + T.difs_us as f64,
        tx_us: vec![0.0; n],
        rx_us: vec![0.0; n],
    };
    for i in 0..n {
        if i > 0 {
            // Retry i+1 is preceded by the previous attempt's ACK timeout
            // and its own (escalated) backoff.
            succ.idle_us += (backoff_mean_us(i + 1) + wait) * attempt_weight[i];
        }
        succ.tx_us[i] = T.airtime_data_us(l, &setup.modes[i]) as f64 * attempt_weight[i];
        let ack = ack_mode_for(&setup.modes[i]);
        succ.rx_us[i] = T.airtime_ack_us(ack).expect("mandatory") as f64 * w[i];
    }
    let d_succ_us = succ.total_us();

    let mut fail = StageTimes {
        idle_us: 0.0,
        tx_us: vec![0.0; n],
        rx_us: vec![0.0; n],
    };
    for i in 0..n {
        fail.idle_us += backoff_mean_us(i + 1) + wait;
        fail.tx_us[i] = T.airtime_data_us(l, &setup.modes[i]) as f64;
    }
    let d_fail_us = fail.total_us();

    DelayBreakdown {
        e_delay_us: (1.0 - p_succ) * d_fail_us + p_succ * d_succ_us,
        p_succ,
        p_n_succ,
        d_succ_us,
        d_fail_us,
        succ,
        fail,
    }
}

/// Long-run goodput of back-to-back transmissions with this setup, Mbps.
pub fn goodput_mbps(setup: &TxSetup) -> f64 {
    let d = expected_delay(setup);
    d.p_succ * setup.payload_bits() as f64 / d.e_delay_us
}

/// Best constant-mode goodput at one SNR. Ties go to the lower index, so
/// a dead link reports the most robust mode with zero goodput.
pub fn optimal_goodput(
    payload_octets: u32,
    n_max: usize,
    snr_db: f64,
    modes: &[PhyMode],
) -> (PhyMode, f64) {
    assert!(!modes.is_empty(), "mode set must not be empty");
    let mut best = (modes[0], f64::MIN);
    for &m in modes {
        let setup = TxSetup::constant(payload_octets, n_max, m, snr_db)
            .expect("constant setup from valid payload");
        let g = goodput_mbps(&setup);
        if g > best.1 {
            best = (m, g);
        }
    }
    if best.1 < 0.0 {
        best.1 = 0.0;
    }
    best
}
