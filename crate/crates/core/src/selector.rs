//! Least-occluded view selection with switching hysteresis.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::occlusion::field_area;

/// Scores each camera view; larger means less occluded. The default scorer
/// uses the visible field area, and any other detector can be swapped in.
pub trait ViewScorer: Sync {
    fn score(&self, image: &RgbImage) -> f64;
}

/// Field area in pixels.
#[derive(Debug, Clone, Copy, Default)]
pub struct FieldAreaScorer;

impl ViewScorer for FieldAreaScorer {
    fn score(&self, image: &RgbImage) -> f64 {
        field_area(image) as f64
    }
}

pub fn score_views(images: &[RgbImage], scorer: &dyn ViewScorer) -> Vec<f64> {
    images.iter().map(|img| scorer.score(img)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionParams {
    /// Frames between scoring ticks.
    pub cadence: usize,
    /// Minimum frames between switches.
    pub dwell_min: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            cadence: 30,
            dwell_min: 60,
        }
    }
}

impl SelectionParams {
    /// 1-based frames at which views are scored.
    pub fn ticks(&self, frame_count: usize) -> Vec<usize> {
        (1..=frame_count).step_by(self.cadence.max(1)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionPlan {
    /// Camera index per frame; entry `i` is frame `i + 1`.
    pub choice: Vec<usize>,
    /// Frames at which the choice changes.
    pub switch_events: Vec<usize>,
    pub dwell_min: usize,
}

impl SelectionPlan {
    pub fn camera_at(&self, t: usize) -> usize {
        self.choice[t - 1]
    }

    pub fn constant(camera: usize, frame_count: usize, dwell_min: usize) -> Self {
        SelectionPlan {
            choice: vec![camera; frame_count],
            switch_events: Vec::new(),
            dwell_min,
        }
    }
}

/// Builds the per-frame plan from scores taken at `ticks` (1-based frame,
/// score per camera). At each tick the best camera wins, preferring the
/// incumbent and then the lowest index on ties; a switch is suppressed when
/// fewer than `dwell_min` frames have passed since the previous one.
pub fn plan_selection(
    frame_count: usize,
    ticks: &[(usize, Vec<f64>)],
    params: &SelectionParams,
    initial: usize,
) -> Result<SelectionPlan> {
    if params.cadence == 0 {
        return Err(Error::InvalidParameter("cadence must be at least 1".into()));
    }
    let mut choice = vec![initial; frame_count];
    let mut switch_events = Vec::new();
    let mut current: Option<usize> = None;
    let mut last_switch: Option<usize> = None;
    let mut tick_iter = ticks.iter().peekable();
    for t in 1..=frame_count {
        while let Some((tick, scores)) = tick_iter.next_if(|(tick, _)| *tick <= t) {
            if scores.is_empty() {
                continue;
            }
            let best = best_view(scores, current);
            match current {
                None => current = Some(best),
                Some(c) if c != best => {
                    let allowed = last_switch.is_none_or(|s| tick - s >= params.dwell_min);
                    if allowed {
                        current = Some(best);
                        last_switch = Some(t);
                        switch_events.push(t);
                    }
                }
                _ => {}
            }
        }
        choice[t - 1] = current.unwrap_or(initial);
    }
    Ok(SelectionPlan {
        choice,
        switch_events,
        dwell_min: params.dwell_min,
    })
}

fn best_view(scores: &[f64], incumbent: Option<usize>) -> usize {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    match incumbent {
        Some(c) if scores.get(c) == Some(&max) => c,
        _ => scores.iter().position(|&s| s == max).unwrap_or(0),
    }
}
