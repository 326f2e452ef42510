//! Sampling rate controller with an EWMA success model and a power layer.
//!
//! The rate core keeps a per-mode success-probability EWMA, refreshed from
//! windowed counts, and transmits at the mode with the best estimated
//! throughput (probability times payload over airtime). Every Nth frame is
//! a probe: alternately the next faster mode of an upward round-robin at
//! the reference power, or the proven mode at the next level of a
//! full-range power sweep — always hunting across the plane above the
//! working point it already trusts. A faster mode takes over only with a
//! decisive throughput lead; falling back is immediate. Power levels carry
//! the same windowed EWMA as rates, with one twist: a window with too few
//! samples at a level counts as a zero-success window, so trust in a level
//! evaporates unless dense sampling keeps re-proving it. The reference power
//! steps down one dB only while the level below holds fresh trust matching
//! the best rate's own success — at the default sparse cadence that bar is
//! effectively never met, which is what keeps this controller loud and
//! aggressive compared to the windowed ones.

use serde::{Deserialize, Serialize};

use crate::phy::{mode_table, TimingParams, NUM_MODES};
use crate::Result;

use super::{Controller, Decision, Feedback, FeedbackGuard, FrameTracker, MAX_TXP_DBM, MIN_TXP_DBM};

/// Number of integer-dBm power levels (0 through the cap).
const TXP_LEVELS: usize = MAX_TXP_DBM as usize + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinstrelPianoConfig {
    /// Weight of the old estimate in `p' = w*p + (1-w)*window_ratio`.
    pub ewma_weight: f64,
    /// Statistics window length, us.
    pub window_us: u64,
    /// Every Nth frame is a probe frame.
    pub probe_period: u32,
    /// Retries per frame, used to reconstruct frame boundaries.
    pub retry_limit: u32,
    /// A faster mode replaces the best only after its wins of the
    /// throughput ranking run this far ahead of its losses, counted per
    /// window evaluation.
    pub upgrade_hold_windows: u32,
    /// A level's window ratio counts only when backed by at least this many
    /// samples; sparser windows score zero, so one stray probe per window
    /// builds no trust.
    pub power_min_samples: u32,
    /// A lower level takes over as reference when its trust is within this
    /// much of the best rate's success estimate.
    pub power_tolerance: f64,
    /// Reference-power success EWMA below this raises the reference.
    pub power_recover_threshold: f64,
    /// How many dB a recovery raises the reference at once.
    pub power_up_step: u8,
    pub min_txp_dbm: u8,
    pub max_txp_dbm: u8,
}

impl Default for MinstrelPianoConfig {
    fn default() -> Self {
        MinstrelPianoConfig {
            ewma_weight: 0.75,
            window_us: 100_000,
            probe_period: 6,
            retry_limit: 7,
            upgrade_hold_windows: 6,
            power_min_samples: 3,
            power_tolerance: 0.05,
            power_recover_threshold: 0.8,
            power_up_step: 2,
            min_txp_dbm: MIN_TXP_DBM,
            max_txp_dbm: MAX_TXP_DBM,
        }
    }
}

/// What the current attempt is for, so its outcome lands in the right
/// statistics bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
enum AttemptKind {
    Normal,
    RateProbe,
    PowerProbe,
}

#[derive(Debug)]
pub struct MinstrelPiano {
    cfg: MinstrelPianoConfig,
    /// Payload bits over data airtime per mode — the throughput weight.
    tput_weight: [f64; NUM_MODES],
    /// Success-probability estimate per mode at the reference power.
    ewma_p: [f64; NUM_MODES],
    win_att: [u32; NUM_MODES],
    win_succ: [u32; NUM_MODES],
    /// Trust per power level at the best rate; decays in sample-starved
    /// windows.
    lvl_ewma: [f64; TXP_LEVELS],
    lvl_att: [u32; TXP_LEVELS],
    lvl_succ: [u32; TXP_LEVELS],
    best: usize,
    /// Net lead (wins minus losses) faster modes hold over the incumbent.
    upgrade_run: u32,
    ref_txp: u8,
    frames_done: u64,
    probe_rate_next: bool,
    /// Alternates rate probes between the immediate neighbour and the
    /// round-robin cursor.
    probe_near: bool,
    /// Next mode of the upward probing round-robin.
    rate_cursor: usize,
    /// Next level of the power sweep.
    power_cursor: u8,
    window_start_us: u64,
    tracker: FrameTracker,
    kind: AttemptKind,
    current: Decision,
    guard: FeedbackGuard,
}

impl MinstrelPiano {
    pub fn new(cfg: MinstrelPianoConfig, payload_octets: u32, timing: &TimingParams) -> Self {
        let bits = (payload_octets as f64) * 8.0;
        let mut tput_weight = [0.0; NUM_MODES];
        for (k, mode) in mode_table().iter().enumerate() {
            tput_weight[k] = bits / timing.airtime_data_us(payload_octets, mode) as f64;
        }
        // Optimistic start: every mode assumed perfect, so the initial best
        // is the fastest one. Power levels start with no trust at all.
        let best = NUM_MODES - 1;
        let ref_txp = cfg.max_txp_dbm;
        MinstrelPiano {
            cfg,
            tput_weight,
            ewma_p: [1.0; NUM_MODES],
            win_att: [0; NUM_MODES],
            win_succ: [0; NUM_MODES],
            lvl_ewma: [0.0; TXP_LEVELS],
            lvl_att: [0; TXP_LEVELS],
            lvl_succ: [0; TXP_LEVELS],
            best,
            upgrade_run: 0,
            ref_txp,
            frames_done: 0,
            probe_rate_next: true,
            probe_near: false,
            rate_cursor: 0,
            power_cursor: cfg.min_txp_dbm,
            window_start_us: 0,
            tracker: FrameTracker::new(cfg.retry_limit as usize),
            kind: AttemptKind::Normal,
            current: Decision { mode: mode_table()[best], txp_dbm: ref_txp },
            guard: FeedbackGuard::default(),
        }
    }

    fn normal_decision(&self) -> Decision {
        Decision { mode: mode_table()[self.best], txp_dbm: self.ref_txp }
    }

    fn pick_rate_probe(&mut self) -> Decision {
        // Exploration is upward: only modes that could beat the current
        // best are worth a sample. Every other probe goes to the immediate
        // neighbour — the likeliest successor — and the rest round-robin
        // the whole space above. Callers skip this at the top mode.
        self.probe_near = !self.probe_near;
        let k = if self.probe_near {
            self.best + 1
        } else {
            if self.rate_cursor <= self.best || self.rate_cursor >= NUM_MODES {
                self.rate_cursor = self.best + 1;
            }
            let k = self.rate_cursor;
            self.rate_cursor += 1;
            k
        };
        Decision { mode: mode_table()[k], txp_dbm: self.ref_txp }
    }

    fn pick_power_probe(&mut self) -> Decision {
        let txp = self.power_cursor;
        self.power_cursor =
            if txp >= self.cfg.max_txp_dbm { self.cfg.min_txp_dbm } else { txp + 1 };
        Decision { mode: mode_table()[self.best], txp_dbm: txp }
    }

    fn schedule_next_frame(&mut self) {
        let upcoming = self.frames_done + 1;
        let probing =
            self.cfg.probe_period > 0 && upcoming % u64::from(self.cfg.probe_period) == 0;
        if !probing {
            self.kind = AttemptKind::Normal;
            self.current = self.normal_decision();
            return;
        }
        let rate_probe = self.probe_rate_next;
        self.probe_rate_next = !self.probe_rate_next;
        if rate_probe && self.best + 1 < NUM_MODES {
            self.kind = AttemptKind::RateProbe;
            self.current = self.pick_rate_probe();
        } else {
            self.kind = AttemptKind::PowerProbe;
            self.current = self.pick_power_probe();
        }
    }

    fn close_window(&mut self, now_us: u64) {
        let w = self.cfg.ewma_weight;
        for k in 0..NUM_MODES {
            if self.win_att[k] > 0 {
                let ratio = f64::from(self.win_succ[k]) / f64::from(self.win_att[k]);
                self.ewma_p[k] = w * self.ewma_p[k] + (1.0 - w) * ratio;
                self.win_att[k] = 0;
                self.win_succ[k] = 0;
            }
        }
        // Power levels score their window ratio, or zero when too few
        // samples reached them — stale trust drains away.
        let lo = self.cfg.min_txp_dbm as usize;
        let hi = self.cfg.max_txp_dbm as usize;
        for l in lo..=hi {
            let ratio = if self.lvl_att[l] >= self.cfg.power_min_samples.max(1) {
                f64::from(self.lvl_succ[l]) / f64::from(self.lvl_att[l])
            } else {
                0.0
            };
            self.lvl_ewma[l] = w * self.lvl_ewma[l] + (1.0 - w) * ratio;
            self.lvl_att[l] = 0;
            self.lvl_succ[l] = 0;
        }

        let mut best = 0usize;
        for k in 1..NUM_MODES {
            if self.ewma_p[k] * self.tput_weight[k] > self.ewma_p[best] * self.tput_weight[best] {
                best = k;
            }
        }
        // Stepping up waits until the challengers' lead is decisive — a
        // losing window pays one win back. Stepping down is immediate.
        if best > self.best {
            self.upgrade_run += 1;
            if self.upgrade_run < self.cfg.upgrade_hold_windows {
                best = self.best;
            } else {
                self.upgrade_run = 0;
            }
        } else if best == self.best {
            self.upgrade_run = self.upgrade_run.saturating_sub(1);
        } else {
            self.upgrade_run = 0;
        }
        self.best = best;

        // Power layer: recover fast when the reference struggles; descend
        // one dB only while the level below holds fresh, matching trust.
        if self.ewma_p[self.best] < self.cfg.power_recover_threshold
            && self.ref_txp < self.cfg.max_txp_dbm
        {
            self.ref_txp =
                (self.ref_txp + self.cfg.power_up_step).min(self.cfg.max_txp_dbm);
        } else if self.ref_txp > self.cfg.min_txp_dbm
            && self.ewma_p[self.best] >= self.cfg.power_recover_threshold
            && self.lvl_ewma[self.ref_txp as usize - 1]
                >= self.ewma_p[self.best] - self.cfg.power_tolerance
        {
            // Stepping down is only ever justified on a healthy link; when
            // everything fails, both estimates collapse together and the
            // relative bar alone would still clear.
            self.ref_txp -= 1;
        }
        self.window_start_us = now_us;
    }
}

impl Controller for MinstrelPiano {
    fn name(&self) -> &'static str {
        "minstrel-piano"
    }

    fn decision(&self) -> Decision {
        self.current
    }

    fn feedback(&mut self, fb: &Feedback) -> Result<()> {
        self.guard.check(self.current, fb)?;

        match self.kind {
            AttemptKind::Normal => {
                let k = (fb.decision.mode.index - 1) as usize;
                self.win_att[k] += 1;
                self.win_succ[k] += u32::from(fb.success);
                // Frames at the reference power keep its own trust fresh.
                let l = fb.decision.txp_dbm as usize;
                self.lvl_att[l] += 1;
                self.lvl_succ[l] += u32::from(fb.success);
            }
            AttemptKind::RateProbe => {
                let k = (fb.decision.mode.index - 1) as usize;
                self.win_att[k] += 1;
                self.win_succ[k] += u32::from(fb.success);
            }
            AttemptKind::PowerProbe => {
                let l = fb.decision.txp_dbm as usize;
                self.lvl_att[l] += 1;
                self.lvl_succ[l] += u32::from(fb.success);
            }
        }

        if fb.timestamp_us.saturating_sub(self.window_start_us) >= self.cfg.window_us {
            self.close_window(fb.timestamp_us);
        }

        if self.tracker.observe(fb.success).is_some() {
            self.frames_done += 1;
            self.schedule_next_frame();
        } else {
            // Retries always run at the current best setting.
            self.kind = AttemptKind::Normal;
            self.current = self.normal_decision();
        }
        Ok(())
    }
}
