//! End-to-end orchestration: calibration and movement detection, view
//! selection, enhancement, output writing and evaluation.

mod config;
mod detect;
mod run;

pub use config::PipelineConfig;
pub use detect::{calibrate, detect_timeline, Detection, SegmentSeries};
pub use run::{
    evaluate, run, run_manifest, EventRow, OutputLayout, PlanFile, ProvenanceCounts, RunOptions, RunReport, Timings,
};
