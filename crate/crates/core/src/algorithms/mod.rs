//! Joint rate / transmit-power controllers behind one pull-style interface.
//!
//! The link layer asks [`Controller::decision`] for the setting of the next
//! transmission attempt and reports the outcome back through
//! [`Controller::feedback`]. Four adaptive schemes are provided: an
//! ARF-style probing controller with a power stage (`parf`), an
//! EWMA/sampling controller with a power layer (`minstrel-piano`), and two
//! variants of a windowed loss-ratio controller (`rrpaa`, `prcs`), plus a
//! frozen controller for calibration runs.

mod minstrel_piano;
mod parf;
mod windowed;

pub use minstrel_piano::{MinstrelPiano, MinstrelPianoConfig};
pub use parf::{Parf, ParfConfig};
pub use windowed::{WindowVariant, Windowed, WindowedConfig};

use serde::{Deserialize, Serialize};

use crate::phy::{PhyMode, TimingParams};
use crate::{Error, Result};

/// Lowest transmit power a controller may select, dBm.
pub const MIN_TXP_DBM: u8 = 0;
/// Highest transmit power a controller may select, dBm.
pub const MAX_TXP_DBM: u8 = 17;

/// A (mode, transmit power) working point. Power is quantised to whole dBm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub mode: PhyMode,
    pub txp_dbm: u8,
}

/// Outcome of one transmission attempt, echoed together with the decision
/// that produced it and the MAC clock after the attempt completed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    pub success: bool,
    pub decision: Decision,
    pub timestamp_us: u64,
}

/// Pull-style adaptation interface.
///
/// `decision` is stable between feedbacks: calling it twice without an
/// intervening `feedback` returns the same value. Feedback must echo the
/// decision it reports on and carry a non-decreasing timestamp.
pub trait Controller {
    fn name(&self) -> &'static str;
    /// Setting for the next transmission attempt.
    fn decision(&self) -> Decision;
    /// Report the outcome of the attempt made with the current decision.
    fn feedback(&mut self, fb: &Feedback) -> Result<()>;
}

/// Validates the feedback contract shared by every controller.
#[derive(Debug, Clone, Default)]
pub(crate) struct FeedbackGuard {
    last_us: u64,
}

impl FeedbackGuard {
    pub(crate) fn check(&mut self, expected: Decision, fb: &Feedback) -> Result<()> {
        if fb.decision != expected {
            return Err(Error::FeedbackMismatch);
        }
        if fb.timestamp_us < self.last_us {
            return Err(Error::OutOfOrderFeedback);
        }
        self.last_us = fb.timestamp_us;
        Ok(())
    }
}

/// Reconstructs frame boundaries from per-attempt outcomes: a frame ends on
/// a success or after `retry_limit` consecutive failures (retries exhausted).
#[derive(Debug, Clone)]
pub(crate) struct FrameTracker {
    retry_limit: usize,
    fails: usize,
}

impl FrameTracker {
    pub(crate) fn new(retry_limit: usize) -> Self {
        FrameTracker { retry_limit: retry_limit.max(1), fails: 0 }
    }

    /// Feed one attempt outcome; `Some(delivered)` at a frame boundary.
    pub(crate) fn observe(&mut self, success: bool) -> Option<bool> {
        if success {
            self.fails = 0;
            return Some(true);
        }
        self.fails += 1;
        if self.fails >= self.retry_limit {
            self.fails = 0;
            return Some(false);
        }
        None
    }
}

/// The adaptive schemes selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmId {
    Parf,
    MinstrelPiano,
    Rrpaa,
    Prcs,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 4] =
        [AlgorithmId::Parf, AlgorithmId::MinstrelPiano, AlgorithmId::Rrpaa, AlgorithmId::Prcs];

    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmId::Parf => "parf",
            AlgorithmId::MinstrelPiano => "minstrel-piano",
            AlgorithmId::Rrpaa => "rrpaa",
            AlgorithmId::Prcs => "prcs",
        }
    }

    /// Instantiate the controller.
    pub fn build(
        &self,
        params: &ControllerParams,
        payload_octets: u32,
        timing: &TimingParams,
    ) -> Box<dyn Controller + Send> {
        match self {
            AlgorithmId::Parf => Box::new(Parf::new(params.parf)),
            AlgorithmId::MinstrelPiano => Box::new(MinstrelPiano::new(
                params.minstrel_piano,
                payload_octets,
                timing,
            )),
            AlgorithmId::Rrpaa => Box::new(Windowed::new(
                WindowVariant::Rrpaa,
                params.windowed,
                payload_octets,
                timing,
            )),
            AlgorithmId::Prcs => Box::new(Windowed::new(
                WindowVariant::Prcs,
                params.windowed,
                payload_octets,
                timing,
            )),
        }
    }
}

impl std::str::FromStr for AlgorithmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parf" => Ok(AlgorithmId::Parf),
            "mp" | "minstrel-piano" | "minstrelpiano" => Ok(AlgorithmId::MinstrelPiano),
            "rrpaa" => Ok(AlgorithmId::Rrpaa),
            "prcs" => Ok(AlgorithmId::Prcs),
            other => Err(Error::InvalidConfig(format!(
                "unknown algorithm `{other}` (expected parf, mp, rrpaa or prcs)"
            ))),
        }
    }
}

impl std::fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Tuning constants for all controllers, as read from a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    pub parf: ParfConfig,
    pub minstrel_piano: MinstrelPianoConfig,
    pub windowed: WindowedConfig,
}

/// Frozen working point, for calibration against the closed-form model.
#[derive(Debug, Clone)]
pub struct FixedController {
    decision: Decision,
    guard: FeedbackGuard,
}

impl FixedController {
    pub fn new(mode: PhyMode, txp_dbm: u8) -> Self {
        FixedController {
            decision: Decision { mode, txp_dbm: txp_dbm.min(MAX_TXP_DBM) },
            guard: FeedbackGuard::default(),
        }
    }
}

impl Controller for FixedController {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn decision(&self) -> Decision {
        self.decision
    }

    fn feedback(&mut self, fb: &Feedback) -> Result<()> {
        self.guard.check(self.decision, fb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::mode_table;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mode(i: u8) -> PhyMode {
        *PhyMode::from_index(i).unwrap()
    }

    fn build(id: AlgorithmId) -> Box<dyn Controller + Send> {
        id.build(&ControllerParams::default(), 1500, &TimingParams::IEEE80211A)
    }

    #[test]
    fn initial_decisions() {
        let parf = build(AlgorithmId::Parf).decision();
        assert_eq!(parf.mode.index, 1);
        assert_eq!(parf.txp_dbm, MAX_TXP_DBM);

        for id in [AlgorithmId::MinstrelPiano, AlgorithmId::Rrpaa, AlgorithmId::Prcs] {
            let d = build(id).decision();
            assert_eq!(d.mode.index, 8, "{id} should start at the top rate");
            assert_eq!(d.txp_dbm, MAX_TXP_DBM);
        }
    }

    #[test]
    fn names_and_parsing() {
        for id in AlgorithmId::ALL {
            assert_eq!(build(id).name(), id.name());
            assert_eq!(id.name().parse::<AlgorithmId>().unwrap(), id);
        }
        assert_eq!("mp".parse::<AlgorithmId>().unwrap(), AlgorithmId::MinstrelPiano);
        assert_eq!("PARF".parse::<AlgorithmId>().unwrap(), AlgorithmId::Parf);
        assert!("arf".parse::<AlgorithmId>().is_err());
    }

    #[test]
    fn feedback_contract_enforced() {
        let mut c = build(AlgorithmId::Parf);
        let d = c.decision();
        let wrong = Feedback {
            success: true,
            decision: Decision { mode: mode(5), txp_dbm: 3 },
            timestamp_us: 10,
        };
        assert!(matches!(c.feedback(&wrong), Err(Error::FeedbackMismatch)));

        c.feedback(&Feedback { success: true, decision: d, timestamp_us: 100 }).unwrap();
        let d = c.decision();
        let stale = Feedback { success: true, decision: d, timestamp_us: 50 };
        assert!(matches!(c.feedback(&stale), Err(Error::OutOfOrderFeedback)));
    }

    #[test]
    fn fixed_controller_never_moves() {
        let mut c = FixedController::new(mode(4), 9);
        let d = c.decision();
        for k in 0..100u64 {
            c.feedback(&Feedback { success: k % 3 == 0, decision: d, timestamp_us: k * 500 })
                .unwrap();
            assert_eq!(c.decision(), d);
        }
    }

    #[test]
    fn frame_tracker_boundaries() {
        let mut t = FrameTracker::new(3);
        assert_eq!(t.observe(true), Some(true));
        assert_eq!(t.observe(false), None);
        assert_eq!(t.observe(true), Some(true));
        assert_eq!(t.observe(false), None);
        assert_eq!(t.observe(false), None);
        assert_eq!(t.observe(false), Some(false));
        // Counter reset after an exhausted frame.
        assert_eq!(t.observe(false), None);
    }

    /// Any feedback stream, however adversarial, must keep decisions inside
    /// the mode table and power bounds.
    #[test]
    fn decisions_stay_in_bounds_under_random_feedback() {
        for id in AlgorithmId::ALL {
            let mut c = build(id);
            let mut rng = ChaCha8Rng::seed_from_u64(0xfeed);
            let mut now = 0u64;
            for _ in 0..10_000 {
                let d = c.decision();
                assert!((1..=8).contains(&d.mode.index), "{id}: mode {}", d.mode.index);
                assert!(d.txp_dbm <= MAX_TXP_DBM, "{id}: txp {}", d.txp_dbm);
                now += rng.gen_range(1..2000u64);
                let success = rng.gen_bool(0.5);
                c.feedback(&Feedback { success, decision: d, timestamp_us: now }).unwrap();
            }
        }
    }

    /// Identical feedback must reproduce identical decision paths.
    #[test]
    fn replay_equality() {
        for id in AlgorithmId::ALL {
            let run = || {
                let mut c = build(id);
                let mut fb_rng = ChaCha8Rng::seed_from_u64(99);
                let mut now = 0u64;
                let mut path = Vec::new();
                for _ in 0..5_000 {
                    let d = c.decision();
                    path.push((d.mode.index, d.txp_dbm));
                    now += 700;
                    let success = fb_rng.gen_bool(0.7);
                    c.feedback(&Feedback { success, decision: d, timestamp_us: now }).unwrap();
                }
                path
            };
            assert_eq!(run(), run(), "{id} must replay identically");
        }
    }

    /// The windowed controllers hold their decision inside a window; the
    /// per-frame controllers adjust far more often under the same feedback.
    #[test]
    fn decision_granularity_split() {
        let changes = |id: AlgorithmId| {
            let mut c = build(id);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut now = 0u64;
            let mut last = c.decision();
            let mut count = 0usize;
            for _ in 0..8_000 {
                let d = c.decision();
                if d != last {
                    count += 1;
                    last = d;
                }
                now += 600;
                let success = rng.gen_bool(0.6);
                c.feedback(&Feedback { success, decision: d, timestamp_us: now }).unwrap();
            }
            count
        };
        let parf = changes(AlgorithmId::Parf);
        let mp = changes(AlgorithmId::MinstrelPiano);
        let rrpaa = changes(AlgorithmId::Rrpaa);
        let prcs = changes(AlgorithmId::Prcs);
        // 8000 attempts = 200 windows of 40; a windowed scheme can change at
        // most once per window, while the per-frame schemes react constantly.
        assert!(rrpaa <= 200, "rrpaa changed {rrpaa} times");
        assert!(prcs <= 200, "prcs changed {prcs} times");
        assert!(parf > rrpaa, "parf {parf} vs rrpaa {rrpaa}");
        assert!(mp > rrpaa, "mp {mp} vs rrpaa {rrpaa}");
    }

    #[test]
    fn windowed_changes_only_on_window_boundaries() {
        for id in [AlgorithmId::Rrpaa, AlgorithmId::Prcs] {
            let mut c = build(id);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut now = 0u64;
            let mut last = c.decision();
            for attempt in 0..4_000usize {
                let d = c.decision();
                if d != last {
                    assert_eq!(attempt % 40, 0, "{id} moved mid-window at attempt {attempt}");
                    last = d;
                }
                now += 800;
                let success = rng.gen_bool(0.55);
                c.feedback(&Feedback { success, decision: d, timestamp_us: now }).unwrap();
            }
        }
    }

    #[test]
    fn mode_helper_is_the_shared_table() {
        for (i, m) in mode_table().iter().enumerate() {
            assert_eq!(mode(i as u8 + 1), *m);
        }
    }
}
