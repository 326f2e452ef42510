//! Windowed loss-ratio controllers, two variants with a shared core.
//!
//! Outcomes are accumulated over a fixed window of attempts; at the window
//! boundary the loss ratio is compared against two per-mode thresholds
//! derived from adjacent-rate airtimes. A ratio above the tolerance
//! degrades the working point, one below the opportunistic threshold
//! improves it, anything in between holds. The variants differ only in
//! degrade priority: one restores power before touching the rate, the
//! other drops the rate first. Failed improvements suppress the next ones
//! for exponentially growing spans, which is what makes these controllers
//! deliberate rather than oscillating at rung boundaries.

use serde::{Deserialize, Serialize};

use crate::phy::{mode_table, TimingParams, NUM_MODES};
use crate::Result;

use super::{Controller, Decision, Feedback, FeedbackGuard, MAX_TXP_DBM, MIN_TXP_DBM};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowVariant {
    /// Degrade restores transmit power first, then falls back on rate.
    Rrpaa,
    /// Degrade drops the rate first, then raises transmit power.
    Prcs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowedConfig {
    /// Attempts per evaluation window.
    pub window_attempts: u32,
    /// Upper bound for the improvement-suppression span, in windows.
    pub suppress_cap: u32,
    /// Loss tolerance of the lowest mode, which has no slower neighbour.
    pub lowest_mode_mtl: f64,
    pub min_txp_dbm: u8,
    pub max_txp_dbm: u8,
}

impl Default for WindowedConfig {
    fn default() -> Self {
        WindowedConfig {
            window_attempts: 40,
            suppress_cap: 64,
            lowest_mode_mtl: 0.5,
            min_txp_dbm: MIN_TXP_DBM,
            max_txp_dbm: MAX_TXP_DBM,
        }
    }
}

#[derive(Debug)]
pub struct Windowed {
    variant: WindowVariant,
    cfg: WindowedConfig,
    /// 0-based position in the mode table.
    mode_idx: usize,
    txp_dbm: u8,
    win_att: u32,
    win_fail: u32,
    /// Maximum tolerable loss per mode: beyond this the next slower mode
    /// would deliver more.
    mtl: [f64; NUM_MODES],
    /// Opportunistic improvement threshold per mode (half the loss at
    /// which the next faster mode breaks even).
    ori: [f64; NUM_MODES],
    suppress_len: u32,
    cooldown: u32,
    last_was_improve: bool,
    guard: FeedbackGuard,
}

impl Windowed {
    pub fn new(
        variant: WindowVariant,
        cfg: WindowedConfig,
        payload_octets: u32,
        timing: &TimingParams,
    ) -> Self {
        let air: Vec<f64> = mode_table()
            .iter()
            .map(|m| timing.airtime_data_us(payload_octets, m) as f64)
            .collect();
        let mut mtl = [0.0; NUM_MODES];
        mtl[0] = cfg.lowest_mode_mtl;
        for k in 1..NUM_MODES {
            mtl[k] = 1.0 - air[k] / air[k - 1];
        }
        let mut ori = [0.0; NUM_MODES];
        for k in 0..NUM_MODES - 1 {
            ori[k] = mtl[k + 1] / 2.0;
        }
        ori[NUM_MODES - 1] = mtl[NUM_MODES - 1] / 2.0;

        Windowed {
            variant,
            cfg,
            mode_idx: NUM_MODES - 1,
            txp_dbm: cfg.max_txp_dbm,
            win_att: 0,
            win_fail: 0,
            mtl,
            ori,
            suppress_len: 1,
            cooldown: 0,
            last_was_improve: false,
            guard: FeedbackGuard::default(),
        }
    }

    pub fn variant(&self) -> WindowVariant {
        self.variant
    }

    /// Loss thresholds (tolerance, improvement) for a 1-based mode index.
    pub fn thresholds(&self, mode_index: u8) -> (f64, f64) {
        let k = (mode_index - 1) as usize;
        (self.mtl[k], self.ori[k])
    }

    fn try_improve(&mut self) -> bool {
        if self.mode_idx + 1 < NUM_MODES {
            self.mode_idx += 1;
            true
        } else if self.txp_dbm > self.cfg.min_txp_dbm {
            self.txp_dbm -= 1;
            true
        } else {
            false
        }
    }

    fn degrade(&mut self) {
        match self.variant {
            WindowVariant::Rrpaa => {
                if self.txp_dbm < self.cfg.max_txp_dbm {
                    self.txp_dbm += 1;
                } else if self.mode_idx > 0 {
                    self.mode_idx -= 1;
                }
            }
            WindowVariant::Prcs => {
                if self.mode_idx > 0 {
                    self.mode_idx -= 1;
                } else if self.txp_dbm < self.cfg.max_txp_dbm {
                    self.txp_dbm += 1;
                }
            }
        }
    }

    fn close_window(&mut self) {
        let loss = f64::from(self.win_fail) / f64::from(self.win_att);
        self.win_att = 0;
        self.win_fail = 0;

        if loss > self.mtl[self.mode_idx] {
            // A degrade right after an improvement means the probe failed:
            // back off the next attempts exponentially. A degrade out of
            // the blue is a genuine channel change, probe freely again.
            self.suppress_len = if self.last_was_improve {
                (self.suppress_len * 2).min(self.cfg.suppress_cap.max(1))
            } else {
                1
            };
            self.cooldown = self.suppress_len;
            self.last_was_improve = false;
            self.degrade();
            return;
        }

        if self.last_was_improve {
            // The improvement survived a full window: trust it.
            self.suppress_len = 1;
            self.last_was_improve = false;
        }
        if loss < self.ori[self.mode_idx] {
            if self.cooldown == 0 {
                self.last_was_improve = self.try_improve();
            } else {
                self.cooldown -= 1;
            }
        } else if self.cooldown > 0 {
            self.cooldown -= 1;
        }
    }
}

impl Controller for Windowed {
    fn name(&self) -> &'static str {
        match self.variant {
            WindowVariant::Rrpaa => "rrpaa",
            WindowVariant::Prcs => "prcs",
        }
    }

    fn decision(&self) -> Decision {
        Decision { mode: mode_table()[self.mode_idx], txp_dbm: self.txp_dbm }
    }

    fn feedback(&mut self, fb: &Feedback) -> Result<()> {
        self.guard.check(self.decision(), fb)?;
        self.win_att += 1;
        self.win_fail += u32::from(!fb.success);
        if self.win_att >= self.cfg.window_attempts {
            self.close_window();
        }
        Ok(())
    }
}
