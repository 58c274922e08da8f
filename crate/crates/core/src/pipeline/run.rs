use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::detect::{detect_timeline, Detection};
use crate::enhance::{apply_centering, fill_missing, CenterTracker, Provenance, RenderedFrame};
use crate::error::{Error, Result};
use crate::features::{detect, Keypoint};
use crate::geometry::{warp, Canvas};
use crate::ingest::{frame_file_name, frame_stack, load_manifest, FrameSource};
use crate::metrics::{compare, evaluate_dir, Comparison, MetricsAccumulator, MetricsReport};
use crate::motion::Segment;
use crate::occlusion::{segment_field_rgb, write_doo_csv};
use crate::selector::{plan_selection, score_views, FieldAreaScorer, SelectionPlan};

/// Frames processed per parallel batch while rendering.
const RENDER_BATCH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRow {
    pub t_mov: usize,
    pub t_hom: Option<usize>,
    pub below_design_rate: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceCounts {
    pub selected: usize,
    pub cross_view: usize,
    pub temporal: usize,
    pub none: usize,
    /// Pixels without content in any frame after the first.
    pub none_after_first: usize,
}

impl ProvenanceCounts {
    fn add(&mut self, t: usize, provenance: &[Provenance]) {
        for p in provenance {
            match p {
                Provenance::Selected => self.selected += 1,
                Provenance::CrossView => self.cross_view += 1,
                Provenance::Temporal => self.temporal += 1,
                Provenance::None => {
                    self.none += 1;
                    if t > 1 {
                        self.none_after_first += 1;
                    }
                }
            }
        }
    }
}

/// Selection plan plus the scores it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub camera_ids: Vec<String>,
    pub ticks: Vec<(usize, Vec<f64>)>,
    pub plan: SelectionPlan,
}

/// Summary of a run. Contains nothing that depends on wall-clock time or
/// thread scheduling; stage timings go to `timings.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frame_count: usize,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub camera_ids: Vec<String>,
    pub reference: String,
    pub config: PipelineConfig,
    pub initial_calibration: usize,
    pub events: Vec<EventRow>,
    pub segments: Vec<Segment>,
    pub switch_events: Vec<usize>,
    pub provenance: ProvenanceCounts,
    /// `None` when the video has fewer than two frames.
    pub metrics: Option<MetricsReport>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("run report", e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Seconds spent per stage, in execution order.
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    fn record(&mut self, stage: &str, since: Instant) {
        self.stages.push((stage.to_string(), since.elapsed().as_secs_f64()));
    }
}

/// Where a run writes its outputs.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: &Path) -> Self {
        OutputLayout { root: root.to_path_buf() }
    }

    pub fn frames(&self) -> PathBuf {
        self.root.join("frames")
    }

    pub fn frame(&self, t: usize) -> PathBuf {
        self.frames().join(frame_file_name(t))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn timeline(&self) -> PathBuf {
        self.root.join("timeline.json")
    }

    pub fn plan(&self) -> PathBuf {
        self.root.join("plan.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.json")
    }

    pub fn timings(&self) -> PathBuf {
        self.root.join("timings.json")
    }

    pub fn atlas(&self, id: usize) -> PathBuf {
        self.root.join(format!("atlas_{id}.json"))
    }

    pub fn debug(&self) -> PathBuf {
        self.root.join("debug")
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path.display().to_string(), e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn save_png(image: &RgbImage, path: &Path) -> Result<()> {
    image
        .save(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

/// Options that change what is written but not what is computed.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub dump_debug: bool,
}

/// Loads a manifest and runs the full pipeline on it.
pub fn run_manifest(manifest: &Path, config: &PipelineConfig, out: &Path, options: RunOptions) -> Result<RunReport> {
    let source = load_manifest(manifest).map_err(|e| e.in_stage("ingest"))?;
    run(&source, config, out, options)
}

/// Align, select, enhance and evaluate `source`, writing every output
/// under `out`.
pub fn run<S: FrameSource + ?Sized>(source: &S, config: &PipelineConfig, out: &Path, options: RunOptions) -> Result<RunReport> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    crate::parallel::with_threads(config.threads, || run_stages(source, config, out, options))?
}

fn run_stages<S: FrameSource + ?Sized>(source: &S, config: &PipelineConfig, out: &Path, options: RunOptions) -> Result<RunReport> {
    let layout = OutputLayout::new(out);
    let output = |e: Error| e.in_stage("output");
    create_dir(&layout.frames()).map_err(output)?;
    if options.dump_debug {
        create_dir(&layout.debug().join("provenance")).map_err(output)?;
    }
    let mut timings = Timings::default();
    let (width, height) = source.dimensions().map_err(|e| e.in_stage("ingest"))?;
    let n = source.frame_count();
    let ids = source.camera_ids().to_vec();
    let reference = source.reference_index();

    let started = Instant::now();
    let detection = detect_timeline(source, config).map_err(|e| e.in_stage("align"))?;
    timings.record("align", started);
    for atlas in &detection.atlases {
        atlas.write(&layout.atlas(atlas.segment_id)).map_err(output)?;
    }
    detection.timeline.write(&layout.timeline()).map_err(output)?;
    if options.dump_debug {
        write_debug(&layout, &ids, &detection).map_err(output)?;
    }

    let started = Instant::now();
    let params = config.selection_params();
    let ticks = crate::parallel::map(params.ticks(n), |t| -> Result<(usize, Vec<f64>)> {
        let stack = frame_stack(source, t)?;
        Ok((t, score_views(&stack.images, &FieldAreaScorer)))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()
    .map_err(|e| e.in_stage("select"))?;
    let plan = plan_selection(n, &ticks, &params, reference).map_err(|e| e.in_stage("select"))?;
    write_json(
        &layout.plan(),
        &PlanFile {
            camera_ids: ids.clone(),
            ticks,
            plan: plan.clone(),
        },
    )
    .map_err(output)?;
    timings.record("select", started);

    let started = Instant::now();
    let (provenance, metrics) = render(source, config, &detection, &plan, &layout, options)?;
    timings.record("enhance", started);
    write_json(&layout.metrics(), &metrics).map_err(output)?;

    let timeline = &detection.timeline;
    let report = RunReport {
        frame_count: n,
        fps: source.fps(),
        width,
        height,
        camera_ids: ids.clone(),
        reference: ids[reference].clone(),
        config: config.clone(),
        initial_calibration: timeline.initial_calibration,
        events: timeline
            .movement_events
            .iter()
            .map(|e| EventRow {
                t_mov: e.frame,
                t_hom: e.calibration,
                below_design_rate: e.below_design_rate,
            })
            .collect(),
        segments: timeline.segments.clone(),
        switch_events: plan.switch_events.clone(),
        provenance,
        metrics,
        warnings: timeline.warnings.clone(),
    };
    fs::write(layout.report(), report.to_json()).map_err(|e| Error::io(layout.report(), e).in_stage("output"))?;
    write_json(&layout.timings(), &timings).map_err(output)?;
    Ok(report)
}

fn write_debug(layout: &OutputLayout, ids: &[String], detection: &Detection) -> Result<()> {
    let dir = layout.debug();
    write_doo_csv(&dir.join("doo.csv"), ids, &detection.doo)?;
    for seg in &detection.dom {
        let mut text = String::from("t,dom,inlier,smoothed\n");
        for ((s, inlier), smoothed) in seg.series.samples.iter().zip(&seg.series.inlier).zip(&seg.series.smoothed) {
            let v = s.value.map(|v| v.to_string()).unwrap_or_default();
            let m = smoothed.map(|v| v.to_string()).unwrap_or_default();
            text.push_str(&format!("{},{v},{inlier},{m}\n", s.t));
        }
        let path = dir.join(format!("dom_segment_{}_{}.csv", seg.atlas_id, seg.start));
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    let votes: Vec<_> = detection.dom.iter().map(|s| (s.atlas_id, s.start, &s.votes)).collect();
    write_json(&dir.join("votes.json"), &votes)
}

struct Prepared {
    frame: RenderedFrame,
    reference: Option<RenderedFrame>,
}

fn prepare<S: FrameSource + ?Sized>(
    source: &S,
    config: &PipelineConfig,
    detection: &Detection,
    plan: &SelectionPlan,
    canvas: &Canvas,
    t: usize,
) -> Result<Prepared> {
    let size = source.dimensions()?;
    let camera = plan.camera_at(t);
    let segment = detection
        .timeline
        .segment_at(t)
        .ok_or_else(|| Error::InvalidParameter(format!("frame {t} is outside the timeline")))?;
    let atlas = &detection.atlases[segment.atlas_id];
    let view = |c: usize| -> Result<RenderedFrame> {
        let image = source.frame(c, t)?;
        let warped = warp(&image, &atlas.to_reference[c], canvas);
        Ok(RenderedFrame::from_warped(t, warped, canvas, size, c, segment.atlas_id, segment.stale))
    };
    let frame = view(camera)?;
    let reference = source.reference_index();
    let reference = if config.filling && camera != reference {
        Some(view(reference)?)
    } else {
        None
    };
    Ok(Prepared { frame, reference })
}

fn render<S: FrameSource + ?Sized>(
    source: &S,
    config: &PipelineConfig,
    detection: &Detection,
    plan: &SelectionPlan,
    layout: &OutputLayout,
    options: RunOptions,
) -> Result<(ProvenanceCounts, Option<MetricsReport>)> {
    let enhance = |e: Error| e.in_stage("enhance");
    let (width, height) = source.dimensions().map_err(enhance)?;
    let canvas = if config.centering {
        Canvas::doubled(width, height)
    } else {
        Canvas::same(width, height)
    };
    let mut tracker = CenterTracker::new(width, height, config.center_alpha);
    let mut history = None;
    let mut counts = ProvenanceCounts::default();
    let mut metrics = MetricsAccumulator::new(config.psnr_cap, config.features);
    let frames: Vec<usize> = (1..=source.frame_count()).collect();
    for batch in frames.chunks(RENDER_BATCH) {
        let prepared = crate::parallel::map(batch.to_vec(), |t| prepare(source, config, detection, plan, &canvas, t));
        let mut finished = Vec::with_capacity(batch.len());
        for p in prepared {
            let Prepared { mut frame, reference } = p.map_err(enhance)?;
            if config.centering {
                tracker.update(segment_field_rgb(&frame.image).centroid);
                frame = apply_centering(&frame, tracker.pixel_offset());
            }
            if config.filling {
                let reference = match reference {
                    Some(r) if config.centering => apply_centering(&r, frame.shift),
                    Some(r) => r,
                    None => frame.clone(),
                };
                frame = fill_missing(&frame, &reference.image, &reference.validity, &mut history, &config.fill);
            }
            counts.add(frame.t, &frame.provenance);
            finished.push(frame);
        }
        let written = crate::parallel::map(finished, |frame| -> Result<(RenderedFrame, Vec<Keypoint>)> {
            save_png(&frame.image, &layout.frame(frame.t))?;
            if options.dump_debug {
                let path = layout.debug().join("provenance").join(frame_file_name(frame.t));
                frame
                    .provenance_image()
                    .save(&path)
                    .map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
            }
            let keypoints = detect(&frame.image, config.features.max_points);
            Ok((frame, keypoints))
        });
        for w in written {
            let (frame, keypoints) = w.map_err(|e| e.in_stage("output"))?;
            metrics.push(&frame.image, keypoints).map_err(|e| e.in_stage("metrics"))?;
        }
    }
    let report = match metrics.finish() {
        Ok(r) => Some(r),
        Err(Error::TooFewFrames) => None,
        Err(e) => return Err(e.in_stage("metrics")),
    };
    Ok((counts, report))
}

/// Compares two frame directories: metrics for each and the ratios of
/// `a` to `b`.
pub fn evaluate(a: &Path, b: &Path, config: &PipelineConfig) -> Result<Comparison> {
    crate::parallel::with_threads(config.threads, || {
        let ra = evaluate_dir(a, config.psnr_cap, &config.features)?;
        let rb = evaluate_dir(b, config.psnr_cap, &config.features)?;
        Ok(compare(ra, rb))
    })?
}
