//! Degree-of-misalignment series, isolation-forest outlier filtering,
//! movement detection, and the segment timeline.

mod dom;
mod forest;
mod series;
mod timeline;

pub use dom::{consensus_matches, degree_of_misalignment, dom_at, DomParams};
pub use forest::{average_path_length, ForestParams, IsolationForest};
pub use series::{detect_movements, interval_votes, threshold, DetectParams, DomSample, DomSeries, IntervalVote};
pub use timeline::{build_timeline, MovementEvent, Segment, Timeline, DESIGN_MOVE_SPACING};
