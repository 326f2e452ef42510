//! Probing rate controller with a power stage.
//!
//! The rate core raises the mode after a streak of consecutive successes
//! (or when a retry timer expires) and drops it when the first attempt at a
//! freshly raised setting fails or two consecutive attempts fail. On top of
//! that, once the top rate is stable the controller walks the transmit
//! power down one dB at a time; persistent failures restore power first and
//! only then fall back on rate.

use serde::{Deserialize, Serialize};

use crate::phy::{mode_table, PhyMode, NUM_MODES};
use crate::Result;

use super::{Controller, Decision, Feedback, FeedbackGuard, MAX_TXP_DBM, MIN_TXP_DBM};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParfConfig {
    /// Consecutive successes needed before probing upward.
    pub success_threshold: u32,
    /// Forced upward probe after this long without a change, us.
    pub timer_us: u64,
    pub min_txp_dbm: u8,
    pub max_txp_dbm: u8,
}

impl Default for ParfConfig {
    fn default() -> Self {
        ParfConfig {
            success_threshold: 10,
            timer_us: 15_000_000,
            min_txp_dbm: MIN_TXP_DBM,
            max_txp_dbm: MAX_TXP_DBM,
        }
    }
}

/// What the last upward probe changed, so a first-attempt failure can
/// revert it.
#[derive(Debug, Clone, Copy)]
enum Probe {
    RateUp { prev: usize },
    PowerDown { prev: u8 },
}

#[derive(Debug)]
pub struct Parf {
    cfg: ParfConfig,
    /// 0-based position in the mode table.
    mode_idx: usize,
    txp_dbm: u8,
    consec_succ: u32,
    consec_fail: u32,
    probe: Option<Probe>,
    last_change_us: u64,
    guard: FeedbackGuard,
}

impl Parf {
    pub fn new(cfg: ParfConfig) -> Self {
        Parf {
            cfg,
            mode_idx: 0,
            txp_dbm: cfg.max_txp_dbm,
            consec_succ: 0,
            consec_fail: 0,
            probe: None,
            last_change_us: 0,
            guard: FeedbackGuard::default(),
        }
    }

    fn mode(&self) -> PhyMode {
        mode_table()[self.mode_idx]
    }

    fn probe_upward(&mut self, now_us: u64) {
        if self.mode_idx + 1 < NUM_MODES {
            self.probe = Some(Probe::RateUp { prev: self.mode_idx });
            self.mode_idx += 1;
        } else if self.txp_dbm > self.cfg.min_txp_dbm {
            self.probe = Some(Probe::PowerDown { prev: self.txp_dbm });
            self.txp_dbm -= 1;
        }
        self.consec_succ = 0;
        self.last_change_us = now_us;
    }

    fn on_success(&mut self, now_us: u64) {
        self.consec_fail = 0;
        self.probe = None;
        self.consec_succ += 1;
        let timer_expired = now_us.saturating_sub(self.last_change_us) >= self.cfg.timer_us;
        if self.consec_succ >= self.cfg.success_threshold || timer_expired {
            self.probe_upward(now_us);
        }
    }

    fn on_failure(&mut self, now_us: u64) {
        self.consec_succ = 0;
        if let Some(probe) = self.probe.take() {
            // First attempt at a freshly probed setting failed: revert.
            match probe {
                Probe::RateUp { prev } => self.mode_idx = prev,
                Probe::PowerDown { prev } => self.txp_dbm = prev,
            }
            self.consec_fail = 0;
            self.last_change_us = now_us;
            return;
        }
        self.consec_fail += 1;
        if self.consec_fail >= 2 {
            if self.txp_dbm < self.cfg.max_txp_dbm {
                self.txp_dbm += 1;
            } else if self.mode_idx > 0 {
                self.mode_idx -= 1;
            }
            self.consec_fail = 0;
            self.last_change_us = now_us;
        }
    }
}

impl Controller for Parf {
    fn name(&self) -> &'static str {
        "parf"
    }

    fn decision(&self) -> Decision {
        Decision { mode: self.mode(), txp_dbm: self.txp_dbm }
    }

    fn feedback(&mut self, fb: &Feedback) -> Result<()> {
        self.guard.check(self.decision(), fb)?;
        if fb.success {
            self.on_success(fb.timestamp_us);
        } else {
            self.on_failure(fb.timestamp_us);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feed(c: &mut Parf, now: &mut u64, success: bool) {
        *now += 1_000;
        let d = c.decision();
        c.feedback(&Feedback { success, decision: d, timestamp_us: *now }).unwrap();
    }

    #[test]
    fn streak_raises_rate_and_first_failure_reverts() {
        let mut c = Parf::new(ParfConfig::default());
        let mut now = 0u64;
        for _ in 0..10 {
            feed(&mut c, &mut now, true);
        }
        assert_eq!(c.decision().mode.index, 2);
        assert_eq!(c.decision().txp_dbm, 17);

        feed(&mut c, &mut now, false);
        assert_eq!(c.decision().mode.index, 1, "failed probe must revert");
        // The revert cleared the failure streak: one more failure is not
        // enough to move anything.
        feed(&mut c, &mut now, false);
        assert_eq!(c.decision().mode.index, 1);
        assert_eq!(c.decision().txp_dbm, 17);
    }

    #[test]
    fn climbs_all_rates_then_walks_power_down() {
        let mut c = Parf::new(ParfConfig::default());
        let mut now = 0u64;
        for _ in 0..70 {
            feed(&mut c, &mut now, true);
        }
        assert_eq!(c.decision().mode.index, 8);
        assert_eq!(c.decision().txp_dbm, 17);

        for _ in 0..10 {
            feed(&mut c, &mut now, true);
        }
        assert_eq!(c.decision().txp_dbm, 16, "stable top rate starts shaving power");

        // All the way to the floor, then nothing left to probe.
        for _ in 0..(16 * 10 + 20) {
            feed(&mut c, &mut now, true);
        }
        assert_eq!(c.decision().txp_dbm, 0);
        assert_eq!(c.decision().mode.index, 8);
    }

    #[test]
    fn power_probe_failure_restores_previous_power() {
        let mut c = Parf::new(ParfConfig::default());
        let mut now = 0u64;
        for _ in 0..80 {
            feed(&mut c, &mut now, true);
        }
        assert_eq!(c.decision().txp_dbm, 16);
        feed(&mut c, &mut now, false);
        assert_eq!(c.decision().txp_dbm, 17, "failed power probe must restore");
        assert_eq!(c.decision().mode.index, 8);
    }

    #[test]
    fn persistent_failures_raise_power_before_dropping_rate() {
        let mut c = Parf::new(ParfConfig::default());
        let mut now = 0u64;
        // Reach mode 8 at reduced power, confirmed by a success after the
        // probe so the next failures are not treated as a probe revert.
        for _ in 0..81 {
            feed(&mut c, &mut now, true);
        }
        assert_eq!(c.decision().txp_dbm, 16);

        feed(&mut c, &mut now, false);
        feed(&mut c, &mut now, false);
        assert_eq!(c.decision().txp_dbm, 17, "two failures raise power first");
        assert_eq!(c.decision().mode.index, 8);

        feed(&mut c, &mut now, false);
        feed(&mut c, &mut now, false);
        assert_eq!(c.decision().mode.index, 7, "at max power the rate falls back");
    }

    #[test]
    fn floor_is_stable_under_total_loss() {
        let mut c = Parf::new(ParfConfig::default());
        let mut now = 0u64;
        for _ in 0..100 {
            feed(&mut c, &mut now, false);
        }
        assert_eq!(c.decision().mode.index, 1);
        assert_eq!(c.decision().txp_dbm, 17, "failures pin power at max, not min");
    }

    #[test]
    fn timer_forces_a_probe_without_a_full_streak() {
        let mut c = Parf::new(ParfConfig::default());
        let d = c.decision();
        c.feedback(&Feedback { success: true, decision: d, timestamp_us: 1_000 }).unwrap();
        assert_eq!(c.decision().mode.index, 1);

        // One lone success long after the last change still probes upward.
        let d = c.decision();
        c.feedback(&Feedback { success: true, decision: d, timestamp_us: 16_000_000 }).unwrap();
        assert_eq!(c.decision().mode.index, 2);
    }
}
