//! Per-node representative clustering: each node of the grid accumulates a
//! small set of weighted block representatives summarising the intensity
//! patterns seen at that node over the sequence.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame_io::{extract_block, FrameSequence, NodeGrid, Raster};

/// Threshold below which an element standard deviation counts as zero for
/// the degenerate-correlation rules.
pub const DEGENERATE_STD: f64 = 1e-9;

/// Weighted cluster of similar block labels: running mean vector, scalar
/// variance, and the number of labels absorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct Representative {
    mean: Vec<f64>,
    variance: f64,
    weight: u64,
}

impl Representative {
    /// A fresh representative seeded from a single label.
    pub fn from_label(label: &[f64]) -> Representative {
        Representative {
            mean: label.to_vec(),
            variance: 0.0,
            weight: 1,
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn weight(&self) -> u64 {
        self.weight
    }

    /// Absorbs one label into the running statistics. The mean recursion is
    /// the exact running mean; both recursions read the pre-update mean and
    /// weight, in this order:
    ///   mean'     = mean + (l - mean) / (W + 1)
    ///   variance' = ((W - 1) / W) * variance + ||l - mean||^2 / (W + 1)
    ///   W'        = W + 1
    pub fn absorb(&mut self, label: &[f64]) {
        assert_eq!(label.len(), self.mean.len(), "label dimension mismatch");
        let w = self.weight as f64;
        let mut sq = 0.0;
        for (m, &l) in self.mean.iter_mut().zip(label) {
            let d = l - *m;
            sq += d * d;
            *m += d / (w + 1.0);
        }
        self.variance = (w - 1.0) / w * self.variance + sq / (w + 1.0);
        self.weight += 1;
    }

    pub(crate) fn from_parts(mean: Vec<f64>, variance: f64, weight: u64) -> Representative {
        assert!(weight >= 1, "representative weight must be at least 1");
        Representative {
            mean,
            variance,
            weight,
        }
    }
}

/// Pearson correlation between equal-length vectors, population statistics.
/// Degenerate cases: both deviations below `DEGENERATE_STD` compare equal
/// (1.0); exactly one flat vector cannot correlate (0.0).
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "correlation requires equal dimensions");
    assert!(!a.is_empty(), "correlation requires at least one element");
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    let std_a = (var_a / n).sqrt();
    let std_b = (var_b / n).sqrt();
    let a_flat = std_a < DEGENERATE_STD;
    let b_flat = std_b < DEGENERATE_STD;
    if a_flat && b_flat {
        return 1.0;
    }
    if a_flat || b_flat {
        return 0.0;
    }
    cov / (n * std_a * std_b)
}

/// Mean absolute difference between equal-length vectors.
pub fn mad(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "mad requires equal dimensions");
    assert!(!a.is_empty(), "mad requires at least one element");
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Similarity thresholds for matching a label against a representative.
/// `t2` is auto-estimated from sequence noise unless supplied directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseThresholds {
    pub t1: f64,
    pub t2: f64,
    /// Mean of the interquartile MAD band used to derive `t2`.
    pub q31_mean: f64,
    /// Population standard deviation of the interquartile MAD band.
    pub q31_std: f64,
}

impl NoiseThresholds {
    /// Fixed thresholds without an estimation trail.
    pub fn fixed(t1: f64, t2: f64) -> NoiseThresholds {
        NoiseThresholds {
            t1,
            t2,
            q31_mean: 0.0,
            q31_std: 0.0,
        }
    }
}

/// Derives t2 from raw inter-frame MAD points: sort ascending, keep the
/// central band [floor(0.25 n), floor(0.75 n)] inclusive, then
/// t2 = 2 * (mean + 2 * std) over the band. Zero maps to the 0.5 floor.
pub(crate) fn t2_from_points(points: &mut [f64]) -> (f64, f64, f64) {
    assert!(
        !points.is_empty(),
        "t2 estimation requires at least one point"
    );
    points.sort_by(|a, b| a.partial_cmp(b).expect("MAD points must be finite"));
    let n = points.len();
    let lo = (0.25 * n as f64).floor() as usize;
    let hi = (0.75 * n as f64).floor() as usize;
    let band = &points[lo..=hi];
    let m = band.len() as f64;
    let mean = band.iter().sum::<f64>() / m;
    let var = band.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    let std = var.sqrt();
    let t2 = 2.0 * (mean + 2.0 * std);
    let t2 = if t2 == 0.0 { 0.5 } else { t2 };
    (t2, mean, std)
}

/// Estimates noise thresholds from the first min(frame_count, 100) frames:
/// MAD between co-located labels of successive frames feeds the quartile
/// procedure of `t2_from_points`. Needs at least two frames.
pub fn estimate_noise_threshold(
    frames: &FrameSequence,
    grid: &NodeGrid,
    t1: f64,
) -> Result<NoiseThresholds> {
    if frames.frame_count() < 2 {
        return Err(Error::InsufficientFrames(format!(
            "threshold estimation needs at least 2 frames, got {}",
            frames.frame_count()
        )));
    }
    let window = frames.frame_count().min(100);
    let mut points = Vec::with_capacity((window - 1) * grid.node_count());
    let mut prev = Vec::new();
    let mut cur = Vec::new();
    for f in 1..window {
        for j in 0..grid.rows() {
            for i in 0..grid.cols() {
                extract_block(frames.frame(f - 1), grid, i, j, &mut prev);
                extract_block(frames.frame(f), grid, i, j, &mut cur);
                points.push(mad(&prev, &cur));
            }
        }
    }
    let (t2, q31_mean, q31_std) = t2_from_points(&mut points);
    Ok(NoiseThresholds {
        t1,
        t2,
        q31_mean,
        q31_std,
    })
}

/// Ordered set of representatives for one node. Order is creation order;
/// matching prefers the highest correlation, ties to the lowest index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RepresentativeSet {
    reps: Vec<Representative>,
}

impl RepresentativeSet {
    pub fn new() -> RepresentativeSet {
        RepresentativeSet { reps: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn rep(&self, index: usize) -> &Representative {
        &self.reps[index]
    }

    pub fn reps(&self) -> &[Representative] {
        &self.reps
    }

    pub(crate) fn push(&mut self, rep: Representative) {
        self.reps.push(rep);
    }

    /// Index of the best match: among representatives passing both the
    /// correlation (> t1) and MAD (< t2) constraints, the one with the
    /// highest correlation; ties resolve to the lowest index.
    pub fn match_representative(&self, label: &[f64], thr: &NoiseThresholds) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (idx, rep) in self.reps.iter().enumerate() {
            let corr = correlation(rep.mean(), label);
            if corr <= thr.t1 {
                continue;
            }
            if mad(rep.mean(), label) >= thr.t2 {
                continue;
            }
            match best {
                Some((_, best_corr)) if corr <= best_corr => {}
                _ => best = Some((idx, corr)),
            }
        }
        best.map(|(idx, _)| idx)
    }

    /// Matches and absorbs `label`, appending a fresh representative when
    /// nothing qualifies. Returns the index that received the label.
    pub fn observe(&mut self, label: &[f64], thr: &NoiseThresholds) -> usize {
        match self.match_representative(label, thr) {
            Some(idx) => {
                self.reps[idx].absorb(label);
                idx
            }
            None => {
                self.reps.push(Representative::from_label(label));
                self.reps.len() - 1
            }
        }
    }

    /// Index of the largest weight; ties resolve to the lowest index.
    pub fn highest_weight_index(&self) -> Option<usize> {
        let mut best: Option<(usize, u64)> = None;
        for (idx, rep) in self.reps.iter().enumerate() {
            match best {
                Some((_, w)) if rep.weight() <= w => {}
                _ => best = Some((idx, rep.weight())),
            }
        }
        best.map(|(idx, _)| idx)
    }

    pub fn total_weight(&self) -> u64 {
        self.reps.iter().map(|r| r.weight()).sum()
    }
}

/// Whole-scene model: one representative set per grid node plus the
/// thresholds and frame rate the model was built with.
#[derive(Debug, Clone)]
pub struct SceneModel {
    grid: NodeGrid,
    sets: Vec<RepresentativeSet>,
    thresholds: NoiseThresholds,
    fps: f64,
    frames_ingested: u64,
}

impl SceneModel {
    pub fn new(grid: NodeGrid, thresholds: NoiseThresholds, fps: f64) -> SceneModel {
        SceneModel {
            grid,
            sets: vec![RepresentativeSet::new(); grid.node_count()],
            thresholds,
            fps,
            frames_ingested: 0,
        }
    }

    pub(crate) fn from_parts(
        grid: NodeGrid,
        sets: Vec<RepresentativeSet>,
        thresholds: NoiseThresholds,
        fps: f64,
        frames_ingested: u64,
    ) -> SceneModel {
        assert_eq!(sets.len(), grid.node_count(), "set count must match grid");
        SceneModel {
            grid,
            sets,
            thresholds,
            fps,
            frames_ingested,
        }
    }

    pub fn grid(&self) -> &NodeGrid {
        &self.grid
    }

    pub fn thresholds(&self) -> &NoiseThresholds {
        &self.thresholds
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames_ingested(&self) -> u64 {
        self.frames_ingested
    }

    pub fn set(&self, i: u32, j: u32) -> &RepresentativeSet {
        &self.sets[self.grid.node_index(i, j)]
    }

    pub fn sets(&self) -> &[RepresentativeSet] {
        &self.sets
    }

    /// Ingests one frame: every node matches its label against its set and
    /// either absorbs it or appends a new representative.
    pub fn ingest_frame(&mut self, frame: &Raster) {
        assert_eq!(
            (frame.width(), frame.height()),
            (self.grid.source_width(), self.grid.source_height()),
            "frame geometry does not match model grid"
        );
        let grid = self.grid;
        let thr = self.thresholds;
        let mut buf = Vec::new();
        for j in 0..grid.rows() {
            for i in 0..grid.cols() {
                extract_block(frame, &grid, i, j, &mut buf);
                self.sets[grid.node_index(i, j)].observe(&buf, &thr);
            }
        }
        self.frames_ingested += 1;
    }

    /// Parallel variant of `ingest_frame`: nodes are independent, so the
    /// result is identical to the sequential path.
    pub fn ingest_frame_parallel(&mut self, frame: &Raster) {
        assert_eq!(
            (frame.width(), frame.height()),
            (self.grid.source_width(), self.grid.source_height()),
            "frame geometry does not match model grid"
        );
        let grid = self.grid;
        let thr = self.thresholds;
        self.sets.par_iter_mut().enumerate().for_each(|(idx, set)| {
            let i = (idx % grid.cols() as usize) as u32;
            let j = (idx / grid.cols() as usize) as u32;
            let mut buf = Vec::new();
            extract_block(frame, &grid, i, j, &mut buf);
            set.observe(&buf, &thr);
        });
        self.frames_ingested += 1;
    }

    /// Current model size under the bounded-memory accounting: per node,
    /// S * (block_size^2 + 2) f64 scalars.
    pub fn model_bytes(&self) -> usize {
        let n2 = self.grid.block_size() as usize * self.grid.block_size() as usize;
        let scalars: usize = self.sets.iter().map(|s| s.len() * (n2 + 2)).sum();
        scalars * std::mem::size_of::<f64>()
    }
}
