//! 802.11a PHY layer.
//!
//! Mode table and MAC/PHY timing constants, OFDM frame airtimes, a
//! packet-error model for the AWGN link, and the ITU-style indoor path-loss
//! channel that converts transmit power into SNR at the receiver.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of 802.11a PHY modes.
pub const NUM_MODES: usize = 8;

/// MAC framing added on top of the payload of a data frame (header + FCS), octets.
pub const MAC_OVERHEAD_OCTETS: u32 = 28;

/// Length of an ACK control frame, octets.
pub const ACK_OCTETS: u32 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Qam16,
    Qam64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodingRate {
    Half,
    TwoThirds,
    ThreeQuarters,
}

impl CodingRate {
    pub fn as_f64(self) -> f64 {
        match self {
            CodingRate::Half => 0.5,
            CodingRate::TwoThirds => 2.0 / 3.0,
            CodingRate::ThreeQuarters => 0.75,
        }
    }

    /// Coding gain modelled as an effective-SNR offset, dB.
    fn snr_offset_db(self) -> f64 {
        match self {
            CodingRate::Half => 5.0,
            CodingRate::TwoThirds => 4.0,
            CodingRate::ThreeQuarters => 3.0,
        }
    }
}

/// One entry of the 802.11a rate table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhyMode {
    /// 1-based position in the rate table; higher index = faster, more fragile.
    pub index: u8,
    pub rate_mbps: u32,
    pub modulation: Modulation,
    pub coding_rate: CodingRate,
    /// Data bits carried per 4 us OFDM symbol.
    pub bits_per_symbol: u32,
}

static MODES: [PhyMode; NUM_MODES] = [
    PhyMode { index: 1, rate_mbps: 6, modulation: Modulation::Bpsk, coding_rate: CodingRate::Half, bits_per_symbol: 24 },
    PhyMode { index: 2, rate_mbps: 9, modulation: Modulation::Bpsk, coding_rate: CodingRate::ThreeQuarters, bits_per_symbol: 36 },
    PhyMode { index: 3, rate_mbps: 12, modulation: Modulation::Qpsk, coding_rate: CodingRate::Half, bits_per_symbol: 48 },
    PhyMode { index: 4, rate_mbps: 18, modulation: Modulation::Qpsk, coding_rate: CodingRate::ThreeQuarters, bits_per_symbol: 72 },
    PhyMode { index: 5, rate_mbps: 24, modulation: Modulation::Qam16, coding_rate: CodingRate::Half, bits_per_symbol: 96 },
    PhyMode { index: 6, rate_mbps: 36, modulation: Modulation::Qam16, coding_rate: CodingRate::ThreeQuarters, bits_per_symbol: 144 },
    PhyMode { index: 7, rate_mbps: 48, modulation: Modulation::Qam64, coding_rate: CodingRate::TwoThirds, bits_per_symbol: 192 },
    PhyMode { index: 8, rate_mbps: 54, modulation: Modulation::Qam64, coding_rate: CodingRate::ThreeQuarters, bits_per_symbol: 216 },
];

/// The full 802.11a mode table, ordered by rate.
pub fn mode_table() -> &'static [PhyMode; NUM_MODES] {
    &MODES
}

impl PhyMode {
    /// Look a mode up by its 1-based table index.
    pub fn from_index(index: u8) -> Option<&'static PhyMode> {
        MODES.get(index.checked_sub(1)? as usize)
    }

    pub fn from_rate(rate_mbps: u32) -> Option<&'static PhyMode> {
        MODES.iter().find(|m| m.rate_mbps == rate_mbps)
    }

    pub fn is_mandatory(&self) -> bool {
        matches!(self.rate_mbps, 6 | 12 | 24)
    }
}

/// Highest mandatory rate not exceeding the data rate; used for ACKs.
pub fn ack_mode_for(data_mode: &PhyMode) -> &'static PhyMode {
    let rate = match data_mode.rate_mbps {
        6 | 9 => 6,
        12 | 18 => 12,
        _ => 24,
    };
    PhyMode::from_rate(rate).expect("mandatory rate present in table")
}

/// MAC/PHY timing constants (802.11a OFDM, 20 MHz).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingParams {
    pub slot_us: u32,
    pub sifs_us: u32,
    pub difs_us: u32,
    pub preamble_us: u32,
    pub signal_us: u32,
    pub symbol_us: u32,
    pub cw_min: u32,
    pub cw_max: u32,
    /// PLCP SERVICE field plus convolutional tail bits, prepended to every PSDU.
    pub service_tail_bits: u32,
}

impl TimingParams {
    pub const IEEE80211A: TimingParams = TimingParams {
        slot_us: 9,
        sifs_us: 16,
        difs_us: 34,
        preamble_us: 16,
        signal_us: 4,
        symbol_us: 4,
        cw_min: 15,
        cw_max: 1023,
        service_tail_bits: 22,
    };

    /// Airtime of a PSDU of `octets` bytes: preamble + SIGNAL + data symbols.
    pub fn psdu_airtime_us(&self, octets: u32, mode: &PhyMode) -> u32 {
        let bits = self.service_tail_bits + 8 * octets;
        let symbols = bits.div_ceil(mode.bits_per_symbol);
        self.preamble_us + self.signal_us + self.symbol_us * symbols
    }

    /// Airtime of a data frame carrying `payload_octets` of payload (MAC
    /// header and FCS included on top). `payload_octets` must be >= 1.
    pub fn airtime_data_us(&self, payload_octets: u32, mode: &PhyMode) -> u32 {
        self.psdu_airtime_us(payload_octets + MAC_OVERHEAD_OCTETS, mode)
    }

    /// Airtime of an ACK. Only mandatory control rates are legal here.
    pub fn airtime_ack_us(&self, ack_mode: &PhyMode) -> Result<u32> {
        if !ack_mode.is_mandatory() {
            return Err(Error::NonMandatoryAckRate(ack_mode.rate_mbps));
        }
        Ok(self.psdu_airtime_us(ACK_OCTETS, ack_mode))
    }

    /// Idle dwell after an unanswered data frame before the next backoff:
    /// SIFS + the slowest-rate ACK airtime + one slot. This is the single
    /// place the ACK-timeout convention lives.
    pub fn ack_timeout_us(&self) -> u32 {
        let base_ack = self
            .airtime_ack_us(&MODES[0])
            .expect("lowest mode is mandatory");
        self.sifs_us + base_ack + self.slot_us
    }
}

impl Default for TimingParams {
    fn default() -> Self {
        Self::IEEE80211A
    }
}

/// Packet-error probability model on the AWGN link.
///
/// Implementations must be monotone: non-increasing in SNR, non-decreasing
/// in frame length, and non-decreasing in mode index at fixed SNR.
pub trait ErrorModel: Send + Sync {
    fn per(&self, mode: &PhyMode, snr_db: f64, length_bits: u64) -> f64;
}

/// Default error model: Gray-coded BPSK/QPSK/M-QAM bit-error formulas on
/// Es/N0, with the convolutional code folded in as an effective-SNR offset
/// per coding rate, and PER = 1 - (1 - BER)^bits.
///
/// The raw textbook approximations cross each other deep in the failure
/// region (the M-QAM prefactor < 1 undercuts BPSK once every curve is near
/// its error floor), so the per-mode BER is taken as the running maximum
/// across mode index. In the region where any mode is actually usable the
/// maximum coincides with the mode's own curve.
#[derive(Debug, Clone, Copy, Default)]
pub struct AwgnApprox;

fn q(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

fn raw_ber(modulation: Modulation, es_n0: f64) -> f64 {
    match modulation {
        Modulation::Bpsk => q((2.0 * es_n0).sqrt()),
        Modulation::Qpsk => q(es_n0.sqrt()),
        // (4/log2 M)(1 - 1/sqrt(M)) Q(sqrt(3 Es/N0 / (M-1)))
        Modulation::Qam16 => 0.75 * q((es_n0 / 5.0).sqrt()),
        Modulation::Qam64 => (7.0 / 12.0) * q((es_n0 / 21.0).sqrt()),
    }
}

impl AwgnApprox {
    /// Bit-error probability for `mode` at `snr_db`, after the robustness
    /// ordering across mode indices has been enforced.
    pub fn ber(&self, mode: &PhyMode, snr_db: f64) -> f64 {
        MODES[..mode.index as usize]
            .iter()
            .map(|m| raw_ber(m.modulation, db_to_linear(snr_db + m.coding_rate.snr_offset_db())))
            .fold(0.0, f64::max)
    }
}

impl ErrorModel for AwgnApprox {
    fn per(&self, mode: &PhyMode, snr_db: f64, length_bits: u64) -> f64 {
        let ber = self.ber(mode, snr_db).clamp(0.0, 1.0);
        if ber >= 1.0 {
            return 1.0;
        }
        // 1 - (1-ber)^n without catastrophic cancellation.
        -f64::exp_m1(length_bits as f64 * f64::ln_1p(-ber))
    }
}

static DEFAULT_ERROR_MODEL: AwgnApprox = AwgnApprox;

pub fn default_error_model() -> &'static dyn ErrorModel {
    &DEFAULT_ERROR_MODEL
}

/// Packet-error probability under the default model.
pub fn per(mode: &PhyMode, snr_db: f64, length_bits: u64) -> f64 {
    DEFAULT_ERROR_MODEL.per(mode, snr_db, length_bits)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Indoor propagation channel: ITU-style log-distance loss plus a flat
/// noise floor. SNR(txp) = txp - L(d) - N, everything in dB/dBm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub noise_floor_dbm: f64,
    pub distance_m: f64,
    pub frequency_mhz: f64,
    /// Distance power-loss coefficient (31 = office environment, 5 GHz band).
    pub power_loss_coefficient: f64,
    pub floor_penetration_db: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            noise_floor_dbm: -85.0,
            distance_m: 18.0,
            frequency_mhz: 5200.0,
            power_loss_coefficient: 31.0,
            floor_penetration_db: 0.0,
        }
    }
}

impl ChannelModel {
    pub fn at_distance(&self, distance_m: f64) -> Self {
        ChannelModel { distance_m, ..*self }
    }

    /// Total path loss in dB. The model is not defined below 1 m.
    pub fn path_loss_db(&self) -> Result<f64> {
        if !(self.distance_m >= 1.0) {
            return Err(Error::DistanceTooClose(self.distance_m));
        }
        Ok(20.0 * self.frequency_mhz.log10()
            + self.power_loss_coefficient * self.distance_m.log10()
            + self.floor_penetration_db
            - 28.0)
    }

    /// Receiver SNR in dB for a transmit power in dBm.
    pub fn snr_from_txp(&self, txp_dbm: f64) -> Result<f64> {
        Ok(txp_dbm - self.path_loss_db()? - self.noise_floor_dbm)
    }

    /// Transmit power in dBm needed to hit a target SNR; inverse of
    /// [`snr_from_txp`](Self::snr_from_txp).
    pub fn txp_for_snr(&self, snr_db: f64) -> Result<f64> {
        Ok(snr_db + self.path_loss_db()? + self.noise_floor_dbm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: TimingParams = TimingParams::IEEE80211A;

    #[test]
    fn mode_table_is_the_80211a_rate_set() {
        let rates: Vec<u32> = MODES.iter().map(|m| m.rate_mbps).collect();
        assert_eq!(rates, [6, 9, 12, 18, 24, 36, 48, 54]);
        for (i, m) in MODES.iter().enumerate() {
            assert_eq!(m.index as usize, i + 1);
            // 4 us per OFDM symbol.
            assert_eq!(m.bits_per_symbol, m.rate_mbps * 4);
        }
        assert_eq!(PhyMode::from_index(5).unwrap().modulation, Modulation::Qam16);
        assert_eq!(PhyMode::from_index(5).unwrap().coding_rate, CodingRate::Half);
        assert!(PhyMode::from_index(0).is_none());
        assert!(PhyMode::from_index(9).is_none());
    }

    #[test]
    fn timing_constants_are_consistent() {
        assert_eq!(T.difs_us, T.sifs_us + 2 * T.slot_us);
        assert_eq!(T.cw_max, 64 * (T.cw_min + 1) - 1);
    }

    #[test]
    fn data_airtime_matches_hand_computation() {
        let m8 = PhyMode::from_index(8).unwrap();
        // 1500 B raw PSDU at 54 Mbps: 16 + 4 + 4*ceil(12022/216) = 244 us.
        assert_eq!(T.psdu_airtime_us(1500, m8), 244);
        // With the 28 B MAC overhead: 4*ceil(12246/216) -> 248 us total.
        assert_eq!(T.airtime_data_us(1500, m8), 248);
        let m1 = PhyMode::from_index(1).unwrap();
        assert_eq!(T.airtime_data_us(1500, m1), 16 + 4 + 4 * 511);
    }

    #[test]
    fn header_only_frame_costs_one_symbol_ceiling_per_mode() {
        for m in MODES.iter() {
            let bits: u32 = 22 + 8 * 28;
            let expect = 20 + 4 * bits.div_ceil(m.bits_per_symbol);
            assert_eq!(T.psdu_airtime_us(28, m), expect);
        }
    }

    #[test]
    fn airtime_never_increases_with_mode_index() {
        for l in [1u32, 64, 576, 1500, 2304] {
            for pair in MODES.windows(2) {
                assert!(
                    T.airtime_data_us(l, &pair[0]) >= T.airtime_data_us(l, &pair[1]),
                    "l={l}, modes {} vs {}",
                    pair[0].rate_mbps,
                    pair[1].rate_mbps
                );
            }
        }
    }

    #[test]
    fn ack_airtimes() {
        let m1 = PhyMode::from_rate(6).unwrap();
        let m5 = PhyMode::from_rate(24).unwrap();
        assert_eq!(T.airtime_ack_us(m1).unwrap(), 44);
        assert_eq!(T.airtime_ack_us(m5).unwrap(), 28);
        let m2 = PhyMode::from_rate(9).unwrap();
        assert!(matches!(
            T.airtime_ack_us(m2),
            Err(Error::NonMandatoryAckRate(9))
        ));
        // An ACK is always cheaper than a full data frame.
        for m in MODES.iter() {
            let ack = ack_mode_for(m);
            assert!(T.airtime_ack_us(ack).unwrap() < T.airtime_data_us(1500, m));
        }
    }

    #[test]
    fn ack_mode_is_highest_mandatory_not_above_data_rate() {
        let expect = [6, 6, 12, 12, 24, 24, 24, 24];
        for (m, want) in MODES.iter().zip(expect) {
            assert_eq!(ack_mode_for(m).rate_mbps, want);
        }
    }

    #[test]
    fn ack_timeout_is_sifs_plus_base_ack_plus_slot() {
        assert_eq!(T.ack_timeout_us(), 16 + 44 + 9);
    }

    #[test]
    fn per_limits() {
        for m in MODES.iter() {
            let bits = 8 * (1500 + 28) as u64;
            assert!(per(m, 60.0, bits) < 1e-9, "mode {}", m.rate_mbps);
            assert!(per(m, -20.0, bits) > 1.0 - 1e-9, "mode {}", m.rate_mbps);
        }
    }

    #[test]
    fn per_monotone_in_snr_length_and_mode() {
        let snrs: Vec<f64> = (-60..=140).map(|s| s as f64 * 0.5).collect();
        for m in MODES.iter() {
            for w in snrs.windows(2) {
                assert!(per(m, w[0], 12000) >= per(m, w[1], 12000));
            }
        }
        for m in MODES.iter() {
            for bits in [1u64, 10, 100, 1000, 10_000] {
                assert!(per(m, 12.0, bits) <= per(m, 12.0, bits * 10));
            }
        }
        for &s in &snrs {
            for bits in [1u64, 112, 12246] {
                for pair in MODES.windows(2) {
                    assert!(
                        per(&pair[0], s, bits) <= per(&pair[1], s, bits) + 1e-15,
                        "snr={s} bits={bits} modes {} vs {}",
                        pair[0].rate_mbps,
                        pair[1].rate_mbps
                    );
                }
            }
        }
    }

    #[test]
    fn path_loss_anchor_values() {
        let chan = ChannelModel::default();
        let l = chan.path_loss_db().unwrap();
        assert!((l - 85.0).abs() < 1.0, "18 m office loss {l} dB");
        let near = chan.at_distance(1.0).path_loss_db().unwrap();
        assert!((near - 46.32).abs() < 0.05, "1 m loss {near} dB");
        assert!(matches!(
            chan.at_distance(0.5).path_loss_db(),
            Err(Error::DistanceTooClose(_))
        ));
    }

    #[test]
    fn path_loss_grows_with_distance() {
        let chan = ChannelModel::default();
        let mut prev = chan.at_distance(1.0).path_loss_db().unwrap();
        for d in 2..100 {
            let l = chan.at_distance(d as f64).path_loss_db().unwrap();
            assert!(l > prev);
            prev = l;
        }
    }

    #[test]
    fn snr_is_txp_minus_loss_minus_noise() {
        let chan = ChannelModel::default();
        let l = chan.path_loss_db().unwrap();
        let snr = chan.snr_from_txp(10.0).unwrap();
        assert!((snr - (10.0 - l + 85.0)).abs() < 1e-12);
        // 1 dBm more power = 1 dB more SNR.
        let up = chan.snr_from_txp(11.0).unwrap();
        assert!((up - snr - 1.0).abs() < 1e-12);
        // Round trip through the inverse map.
        let txp = chan.txp_for_snr(snr).unwrap();
        assert!((txp - 10.0).abs() < 1e-12);
    }

    #[test]
    fn db_mw_conversion() {
        assert!((db_to_linear(0.0) - 1.0).abs() < 1e-12);
        assert!((db_to_linear(20.0) - 100.0).abs() < 1e-9);
        assert!((db_to_linear(17.0) - 50.118_723_362_727_22).abs() < 1e-9);
    }
}
