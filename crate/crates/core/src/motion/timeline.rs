use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame range with one atlas. `stale` marks frames between a detected move
/// and the next calibration, which keep the previous atlas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub atlas_id: usize,
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementEvent {
    pub frame: usize,
    pub seconds: f64,
    /// Set when this move follows the previous one by less than ten minutes.
    pub below_design_rate: bool,
    /// Calibration frame found after this move, if any.
    pub calibration: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub frame_count: usize,
    pub fps: f64,
    /// Calibration frame of the first atlas.
    pub initial_calibration: usize,
    pub movement_events: Vec<MovementEvent>,
    pub segments: Vec<Segment>,
    pub warnings: Vec<String>,
}

/// Minimum spacing between moves the detector is designed for, in seconds.
pub const DESIGN_MOVE_SPACING: f64 = 600.0;

impl Timeline {
    pub fn calibration_points(&self) -> Vec<usize> {
        self.movement_events.iter().filter_map(|e| e.calibration).collect()
    }

    pub fn segment_at(&self, t: usize) -> Option<&Segment> {
        let i = self.segments.partition_point(|s| s.end < t);
        self.segments.get(i).filter(|s| s.start <= t)
    }

    pub fn atlas_count(&self) -> usize {
        self.segments.iter().map(|s| s.atlas_id + 1).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("timeline serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("timeline", e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Partitions `1..=frame_count` into segments. `calibrations[i]` is the
/// calibration frame found after `events[i]`; frames between a move and its
/// calibration stay on the previous atlas and are flagged stale.
pub fn build_timeline(
    frame_count: usize,
    fps: f64,
    initial_calibration: usize,
    events: &[usize],
    calibrations: &[Option<usize>],
) -> Result<Timeline> {
    if events.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("movement events must be strictly increasing".into()));
    }
    if events.len() != calibrations.len() {
        return Err(Error::InvalidParameter("one calibration entry per event is required".into()));
    }
    if events.iter().any(|&t| t == 0 || t >= frame_count) {
        return Err(Error::InvalidParameter("movement events must lie inside the video".into()));
    }
    let spacing = (DESIGN_MOVE_SPACING * fps).round() as usize;
    let mut timeline = Timeline {
        frame_count,
        fps,
        initial_calibration,
        movement_events: Vec::new(),
        segments: Vec::new(),
        warnings: Vec::new(),
    };
    let mut start = 1;
    let mut atlas_id = 0;
    let mut stale = false;
    for (i, (&t_mov, &t_hom)) in events.iter().zip(calibrations).enumerate() {
        let below = i > 0 && t_mov - events[i - 1] < spacing;
        timeline.movement_events.push(MovementEvent {
            frame: t_mov,
            seconds: (t_mov - 1) as f64 / fps,
            below_design_rate: below,
            calibration: t_hom,
        });
        if start <= t_mov {
            timeline.segments.push(Segment {
                start,
                end: t_mov,
                atlas_id,
                stale,
            });
            start = t_mov + 1;
        }
        let next_event = events.get(i + 1).copied().unwrap_or(frame_count + 1);
        match t_hom {
            Some(h) if h > t_mov && h < next_event && h <= frame_count => {
                if start < h {
                    timeline.segments.push(Segment {
                        start,
                        end: h - 1,
                        atlas_id,
                        stale: true,
                    });
                }
                start = h;
                atlas_id += 1;
                stale = false;
            }
            _ => {
                timeline.warnings.push(format!(
                    "no calibration frame after the move at frame {t_mov}; keeping atlas {atlas_id}"
                ));
                stale = true;
            }
        }
    }
    if start <= frame_count {
        timeline.segments.push(Segment {
            start,
            end: frame_count,
            atlas_id,
            stale,
        });
    }
    Ok(timeline)
}
