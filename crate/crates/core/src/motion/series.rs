use serde::{Deserialize, Serialize};

use super::forest::{ForestParams, IsolationForest};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomSample {
    pub t: usize,
    /// `None` when the frame had no usable correspondences.
    pub value: Option<f64>,
}

/// Degree-of-misalignment samples with outlier flags and the moving
/// average over the inliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomSeries {
    pub samples: Vec<DomSample>,
    /// Frames between consecutive samples.
    pub stride: usize,
    pub inlier: Vec<bool>,
    pub smoothed: Vec<Option<f64>>,
}

impl DomSeries {
    /// Series with every present sample an inlier and no smoothing yet.
    pub fn new(samples: Vec<DomSample>, stride: usize) -> Self {
        let inlier = samples.iter().map(|s| s.value.is_some()).collect();
        let smoothed = samples.iter().map(|s| s.value).collect();
        DomSeries {
            samples,
            stride,
            inlier,
            smoothed,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Marks isolation-forest outliers among the present samples.
    pub fn filter_outliers(&mut self, params: &ForestParams, seed: u64) {
        let present: Vec<(usize, f64)> = self
            .samples
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.value.map(|v| (i, v)))
            .collect();
        let values: Vec<f64> = present.iter().map(|&(_, v)| v).collect();
        let forest = IsolationForest::fit(&values, params, seed);
        let flags = forest.outliers(&values);
        self.inlier = vec![false; self.samples.len()];
        for (&(i, _), outlier) in present.iter().zip(flags) {
            self.inlier[i] = !outlier;
        }
    }

    /// Centered moving average over the inlier samples within `window`
    /// positions; defined only at inlier positions.
    pub fn smooth(&mut self, window: usize) {
        let half = window.max(1) / 2;
        let n = self.samples.len();
        let mut cnt = vec![0usize; n + 1];
        for i in 0..n {
            let present = self.inlier[i] && self.samples[i].value.is_some();
            cnt[i + 1] = cnt[i] + usize::from(present);
        }
        self.smoothed = (0..n)
            .map(|i| {
                if !self.inlier[i] || self.samples[i].value.is_none() {
                    return None;
                }
                let lo = i.saturating_sub(half);
                let hi = (i + half + 1).min(n);
                let c = cnt[hi] - cnt[lo];
                if c == 0 {
                    return None;
                }
                // Summing the window directly keeps results independent of
                // how far the series extends.
                let s: f64 = (lo..hi)
                    .filter(|&j| self.inlier[j])
                    .filter_map(|j| self.samples[j].value)
                    .sum();
                Some(s / c as f64)
            })
            .collect();
    }
}

/// `min(max + 1, 2 * mean)` over the present values.
pub fn threshold(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Some((max + 1.0).min(2.0 * mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectParams {
    /// Voting interval length in seconds.
    pub interval_seconds: f64,
    /// Minimum exceedances per interval.
    pub exceed_count: usize,
    /// Span of the processing segment the threshold is computed over.
    pub window_seconds: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            interval_seconds: 75.0,
            exceed_count: 4,
            window_seconds: 600.0,
        }
    }
}

/// One qualifying voting interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalVote {
    /// Frame range `[start, end)` of the interval.
    pub start: usize,
    pub end: usize,
    pub threshold: f64,
    pub exceeding: Vec<usize>,
    pub median: usize,
}

fn median_frame(frames: &[usize]) -> usize {
    let mut f = frames.to_vec();
    f.sort_unstable();
    let n = f.len();
    if n % 2 == 1 {
        f[n / 2]
    } else {
        // Lower median keeps the result on a sampled frame.
        f[n / 2 - 1]
    }
}

/// Votes in consecutive intervals of `interval_seconds` starting at the first
/// sample. Each interval's threshold is computed over the smoothed samples
/// of the trailing processing window ending at that interval's end.
pub fn interval_votes(series: &DomSeries, fps: f64, params: &DetectParams) -> Vec<IntervalVote> {
    let Some(first) = series.samples.first() else {
        return Vec::new();
    };
    let last = series.samples.last().unwrap().t;
    let interval = ((params.interval_seconds * fps).round() as usize).max(1);
    let span = ((params.window_seconds * fps).round() as usize).max(1);
    let mut votes = Vec::new();
    let mut start = first.t;
    while start <= last {
        let end = start + interval;
        let window_start = end.saturating_sub(span).max(first.t);
        let in_window: Vec<f64> = series
            .samples
            .iter()
            .zip(&series.smoothed)
            .filter(|(s, _)| s.t >= window_start && s.t < end)
            .filter_map(|(_, v)| *v)
            .collect();
        if let Some(tau) = threshold(&in_window) {
            let exceeding: Vec<usize> = series
                .samples
                .iter()
                .zip(&series.smoothed)
                .filter(|(s, v)| s.t >= start && s.t < end && v.is_some_and(|v| v > tau))
                .map(|(s, _)| s.t)
                .collect();
            if exceeding.len() >= params.exceed_count.max(1) {
                votes.push(IntervalVote {
                    start,
                    end,
                    threshold: tau,
                    median: median_frame(&exceeding),
                    exceeding,
                });
            }
        }
        start = end;
    }
    votes
}

/// Movement events: the medians of qualifying intervals, with a run of
/// adjacent qualifying intervals (or medians within one interval of each
/// other) merged into its first event.
pub fn detect_movements(series: &DomSeries, fps: f64, params: &DetectParams) -> Vec<usize> {
    let interval = ((params.interval_seconds * fps).round() as usize).max(1);
    let mut events = Vec::new();
    let mut previous: Option<&IntervalVote> = None;
    let votes = interval_votes(series, fps, params);
    for vote in &votes {
        let merged = previous.is_some_and(|p| p.end == vote.start || vote.median.abs_diff(p.median) <= interval);
        if !merged {
            events.push(vote.median);
        }
        previous = Some(vote);
    }
    events
}
