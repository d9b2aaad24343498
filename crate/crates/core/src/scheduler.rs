//! Two-stage step schedule: RMA for the first `round(r·T)` steps, then GIA.

use std::fmt;

use crate::attention_mask::MaskMode;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("first_stage_ratio {0} out of [0,1]")]
    RatioOutOfRange(f64),
    #[error("total steps must be at least 1")]
    NoSteps,
    #[error("schedule line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Slack absorbed before rounding so that products like `0.15 · 20`, which
/// land a few ulps off an integer or half-integer, round as written.
const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSchedule {
    steps: Vec<MaskMode>,
}

/// Number of leading RMA steps: `r·T` rounded half-up, clamped to `[0, T]`.
pub fn first_stage_steps(total_steps: u32, first_stage_ratio: f64) -> Result<u32, ScheduleError> {
    if total_steps == 0 {
        return Err(ScheduleError::NoSteps);
    }
    if !(0.0..=1.0).contains(&first_stage_ratio) {
        return Err(ScheduleError::RatioOutOfRange(first_stage_ratio));
    }
    let n = (first_stage_ratio * f64::from(total_steps) + 0.5 + ROUNDING_SLACK).floor();
    Ok((n as u32).min(total_steps))
}

pub fn build_schedule(total_steps: u32, first_stage_ratio: f64) -> Result<StageSchedule, ScheduleError> {
    let rma = first_stage_steps(total_steps, first_stage_ratio)? as usize;
    let mut steps = vec![MaskMode::Rma; rma];
    steps.resize(total_steps as usize, MaskMode::Gia);
    Ok(StageSchedule { steps })
}

impl StageSchedule {
    /// Accepts a mode list only if every RMA entry precedes every GIA entry.
    pub fn from_steps(steps: Vec<MaskMode>) -> Result<Self, ScheduleError> {
        if steps.is_empty() {
            return Err(ScheduleError::NoSteps);
        }
        if let Some(pos) = steps
            .windows(2)
            .position(|w| w[0] == MaskMode::Gia && w[1] == MaskMode::Rma)
        {
            return Err(ScheduleError::Format {
                line: pos + 2,
                message: "RMA step after a GIA step".into(),
            });
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[MaskMode] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn mode_at(&self, step: usize) -> MaskMode {
        self.steps[step]
    }

    pub fn rma_count(&self) -> usize {
        self.steps.iter().filter(|&&m| m == MaskMode::Rma).count()
    }

    /// One mode per line, `RMA` or `GIA`, newline-terminated.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn from_text(text: &str) -> Result<Self, ScheduleError> {
        let steps = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim().parse::<MaskMode>().map_err(|_| ScheduleError::Format {
                    line: i + 1,
                    message: format!("expected RMA or GIA, got `{}`", l.trim()),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_steps(steps)
    }
}

impl fmt::Display for StageSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.steps {
            writeln!(f, "{m}")?;
        }
        Ok(())
    }
}
