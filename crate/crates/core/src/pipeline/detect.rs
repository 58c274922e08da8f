use serde::{Deserialize, Serialize};

use super::config::{derive_seed, PipelineConfig};
use crate::error::{Error, Result};
use crate::features::accumulate_matches;
use crate::geometry::{build_atlas, HomographyAtlas};
use crate::ingest::{frame_stack, FrameSource};
use crate::motion::{build_timeline, detect_movements, dom_at, interval_votes, DomSample, DomSeries, IntervalVote, Timeline};
use crate::occlusion::{find_calibration_frame, DooSample};

const SEED_FOREST: u64 = 1;
const SEED_DOM: u64 = 2;
const SEED_ATLAS: u64 = 3;

/// How many times a segment may restart because the rig was still moving
/// when it was calibrated.
const MAX_RESTARTS: usize = 3;

/// Misalignment samples of one segment, measured against its own atlas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSeries {
    pub atlas_id: usize,
    pub start: usize,
    pub series: DomSeries,
    pub votes: Vec<IntervalVote>,
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub timeline: Timeline,
    pub atlases: Vec<HomographyAtlas>,
    pub dom: Vec<SegmentSeries>,
    pub doo: Vec<DooSample>,
}

/// Estimates an atlas from the matches pooled over the window starting at
/// `t_hom`.
pub fn calibrate<S: FrameSource + ?Sized>(
    source: &S,
    t_hom: usize,
    atlas_id: usize,
    config: &PipelineConfig,
) -> Result<HomographyAtlas> {
    let last = (t_hom + config.accumulate.window - 1).min(source.frame_count());
    let matches = accumulate_matches(source, t_hom..=last, &config.accumulate, &config.features)?;
    build_atlas(
        &matches,
        source.reference_index(),
        source.camera_ids(),
        &config.atlas_params(),
        atlas_id,
        derive_seed(config.seed, SEED_ATLAS, atlas_id as u64),
    )
}

/// Samples the misalignment from `start` onward, one voting interval at a
/// time, until the first movement event is confirmed or the video ends.
/// An event is confirmed once its interval and the smoothing window after
/// it have been sampled.
fn scan_segment<S: FrameSource + ?Sized>(
    source: &S,
    atlas: &HomographyAtlas,
    start: usize,
    config: &PipelineConfig,
) -> Result<(SegmentSeries, Option<usize>)> {
    let fps = source.fps();
    let n = source.frame_count();
    let stride = config.dom_stride_frames(fps);
    let interval = ((config.vote_interval * fps).round() as usize).max(1);
    let margin = (config.ma_window / 2 + 1) * stride;
    let params = config.detect_params();
    let dom_params = config.dom_params();
    let forest_seed = derive_seed(config.seed, SEED_FOREST, atlas.segment_id as u64);
    let mut samples: Vec<DomSample> = Vec::new();
    let mut frames = (start..=n).step_by(stride).peekable();
    loop {
        let horizon = samples.last().map_or(start, |s| s.t + stride) + interval;
        let batch: Vec<usize> = std::iter::from_fn(|| frames.next_if(|&t| t < horizon)).collect();
        let computed = crate::parallel::map(batch, |t| -> Result<DomSample> {
            let stack = frame_stack(source, t)?;
            let value = dom_at(&stack.images, atlas, &dom_params, derive_seed(config.seed, SEED_DOM, t as u64));
            Ok(DomSample { t, value })
        });
        for s in computed {
            samples.push(s?);
        }
        let complete = frames.peek().is_none();
        let mut series = DomSeries::new(samples.clone(), stride);
        if series.samples.iter().filter(|s| s.value.is_some()).count() >= 2 {
            series.filter_outliers(&config.forest, forest_seed);
        }
        series.smooth(config.ma_window);
        let last = samples.last().map_or(start, |s| s.t);
        let event = detect_movements(&series, fps, &params)
            .first()
            .copied()
            .filter(|&t| complete || t + interval + margin <= last);
        if event.is_some() || complete {
            let votes = interval_votes(&series, fps, &params);
            return Ok((
                SegmentSeries {
                    atlas_id: atlas.segment_id,
                    start,
                    series,
                    votes,
                },
                event,
            ));
        }
    }
}

fn search_calibration<S: FrameSource + ?Sized>(
    source: &S,
    after: usize,
    config: &PipelineConfig,
    doo: &mut Vec<DooSample>,
) -> Result<Option<usize>> {
    match find_calibration_frame(source, after + 1, &config.calibration_search(), Some(doo)) {
        Ok(t) => Ok(Some(t)),
        Err(Error::NoCalibrationFrame(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Finds the calibration frames and movement events of a recording and
/// estimates one atlas per stationary segment.
pub fn detect_timeline<S: FrameSource + ?Sized>(source: &S, config: &PipelineConfig) -> Result<Detection> {
    config.validate()?;
    let n = source.frame_count();
    let fps = source.fps();
    let mut doo = Vec::new();
    let mut warnings = Vec::new();
    if !config.align {
        let atlas = HomographyAtlas::identity(source.camera_ids().to_vec(), source.reference_index(), 0);
        return Ok(Detection {
            timeline: build_timeline(n, fps, 1, &[], &[])?,
            atlases: vec![atlas],
            dom: Vec::new(),
            doo,
        });
    }

    let t0 = match search_calibration(source, 0, config, &mut doo).map_err(|e| e.in_stage("calibrate"))? {
        Some(t) => t,
        None => {
            warnings.push("no occlusion-free frames found; calibrating at frame 1".to_string());
            1
        }
    };
    log::info!("initial calibration at frame {t0}");
    let mut atlases = vec![calibrate(source, t0, 0, config).map_err(|e| e.in_stage("calibrate"))?];
    let mut events: Vec<usize> = Vec::new();
    let mut calibrations: Vec<Option<usize>> = Vec::new();
    let mut dom = Vec::new();
    let mut start = t0;
    let interval = ((config.vote_interval * fps).round() as usize).max(1);
    let mut restarts = 0;
    loop {
        let atlas = atlases.last().expect("at least one atlas");
        let (series, event) = scan_segment(source, atlas, start, config).map_err(|e| e.in_stage("detect"))?;
        dom.push(series);
        let Some(t_mov) = event.filter(|&t| t < n) else {
            break;
        };
        // A move right after a calibration means the rig had not settled.
        let continuation = !events.is_empty() && t_mov < start + interval && restarts < MAX_RESTARTS;
        if continuation {
            restarts += 1;
            warnings.push(format!(
                "rig still moving after the calibration at frame {start}; searching again from frame {}",
                t_mov + 1
            ));
        } else {
            restarts = 0;
            log::info!("movement detected at frame {t_mov}");
        }
        let found = search_calibration(source, t_mov, config, &mut doo).map_err(|e| e.in_stage("calibrate"))?;
        let atlas = match found {
            Some(t_hom) => match calibrate(source, t_hom, if continuation { atlases.len() - 1 } else { atlases.len() }, config) {
                Ok(a) => Some((t_hom, a)),
                Err(e @ (Error::CalibrationFailed(_) | Error::InsufficientCorrespondences { .. })) => {
                    warnings.push(format!("calibration at frame {t_hom} failed: {e}"));
                    None
                }
                Err(e) => return Err(e.in_stage("calibrate")),
            },
            None => None,
        };
        if continuation {
            atlases.pop();
            calibrations.pop();
        } else {
            events.push(t_mov);
        }
        match atlas {
            Some((t_hom, a)) => {
                log::info!("recalibrated at frame {t_hom}");
                atlases.push(a);
                calibrations.push(Some(t_hom));
                start = t_hom;
            }
            None => {
                calibrations.push(None);
                break;
            }
        }
    }
    let mut timeline = build_timeline(n, fps, t0, &events, &calibrations)?;
    timeline.warnings.splice(0..0, warnings);
    Ok(Detection {
        timeline,
        atlases,
        dom,
        doo,
    })
}
