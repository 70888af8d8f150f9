//! Hardness-aware curriculum.
//!
//! Training starts in the easy stage: only ground-truth objects are pasted,
//! densely. From `hard_start_epoch` on, pseudo-labels are admitted with a
//! threshold that falls linearly from `tau_hi` to `tau_lo`, while the number
//! of pasted objects per scene grows linearly from `d_min` to `d_max`.
//!
//! Epoch numbers are used exactly as they appear in the schedule: the `kitti`
//! preset switches at epoch 45 and reaches its final values at epoch 60.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Easy,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardnessSchedule {
    pub total_epochs: u32,
    pub hard_start_epoch: u32,
    pub tau_hi: f64,
    pub tau_lo: f64,
    pub d_min: u32,
    pub d_max: u32,
}

impl HardnessSchedule {
    pub fn new(
        total_epochs: u32,
        hard_start_epoch: u32,
        (tau_hi, tau_lo): (f64, f64),
        (d_min, d_max): (u32, u32),
    ) -> Result<Self> {
        let s = Self {
            total_epochs,
            hard_start_epoch,
            tau_hi,
            tau_lo,
            d_min,
            d_max,
        };
        s.validate()?;
        Ok(s)
    }

    /// 60 epochs, hard stage from 45, threshold 0.6 to 0.4, density 5 to 15.
    pub fn kitti() -> Self {
        Self {
            total_epochs: 60,
            hard_start_epoch: 45,
            tau_hi: 0.6,
            tau_lo: 0.4,
            d_min: 5,
            d_max: 15,
        }
    }

    /// 30 epochs, hard stage from 15, threshold 0.8 to 0.4, density 10 to 30.
    pub fn waymo() -> Self {
        Self {
            total_epochs: 30,
            hard_start_epoch: 15,
            tau_hi: 0.8,
            tau_lo: 0.4,
            d_min: 10,
            d_max: 30,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "kitti" => Ok(Self::kitti()),
            "waymo" => Ok(Self::waymo()),
            other => Err(Error::Config(format!("unknown schedule preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::Config("total_epochs must be positive".into()));
        }
        if self.hard_start_epoch > self.total_epochs {
            return Err(Error::Config(format!(
                "hard_start_epoch {} exceeds total_epochs {}",
                self.hard_start_epoch, self.total_epochs
            )));
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.tau_hi) || !unit.contains(&self.tau_lo) || self.tau_hi < self.tau_lo {
            return Err(Error::Config(format!(
                "thresholds must satisfy 0 <= tau_lo <= tau_hi <= 1 (got {} -> {})",
                self.tau_hi, self.tau_lo
            )));
        }
        if self.d_min > self.d_max {
            return Err(Error::Config(format!("d_min {} exceeds d_max {}", self.d_min, self.d_max)));
        }
        Ok(())
    }

    pub fn stage(&self, epoch: u32) -> Stage {
        if epoch < self.hard_start_epoch {
            Stage::Easy
        } else {
            Stage::Hard
        }
    }

    /// Fraction of the hard stage elapsed at `epoch`, as `(numerator, denominator)`.
    fn hard_progress(&self, epoch: u32) -> (u64, u64) {
        let span = (self.total_epochs - self.hard_start_epoch) as u64;
        if span == 0 {
            return (0, 1);
        }
        let done = (epoch.saturating_sub(self.hard_start_epoch) as u64).min(span);
        (done, span)
    }

    /// Admission threshold; only defined in the hard stage.
    pub fn threshold(&self, epoch: u32) -> Result<f64> {
        if self.stage(epoch) == Stage::Easy {
            return Err(Error::Contract(format!(
                "threshold requested at easy-stage epoch {epoch} (hard stage starts at {})",
                self.hard_start_epoch
            )));
        }
        let (num, den) = self.hard_progress(epoch);
        let f = num as f64 / den as f64;
        Ok((1.0 - f) * self.tau_hi + f * self.tau_lo)
    }

    /// Objects to paste per scene.
    pub fn density(&self, epoch: u32) -> u32 {
        match self.stage(epoch) {
            Stage::Easy => self.d_max,
            Stage::Hard => {
                let (num, den) = self.hard_progress(epoch);
                let range = (self.d_max - self.d_min) as u64;
                // round-half-up of d_min + range * num / den
                let extra = (2 * range * num + den) / (2 * den);
                self.d_min + extra as u32
            }
        }
    }
}

impl Default for HardnessSchedule {
    fn default() -> Self {
        Self::kitti()
    }
}

/// A schedule given either by preset name or field by field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Preset(String),
    Explicit(HardnessSchedule),
}

impl ScheduleSpec {
    pub fn resolve(&self) -> Result<HardnessSchedule> {
        match self {
            ScheduleSpec::Preset(name) => HardnessSchedule::preset(name),
            ScheduleSpec::Explicit(s) => {
                s.validate()?;
                Ok(*s)
            }
        }
    }
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::Preset("kitti".into())
    }
}
