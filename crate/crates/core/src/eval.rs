//! Estimate-quality metrics, the single-Gaussian segmenter, and the
//! pixelwise temporal median oracle used as a baseline.

use crate::frame_io::{FrameSequence, NodeGrid, Raster};
use crate::mrf::BackgroundGrid;
use crate::repset::SceneModel;

/// Binary per-pixel mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Mask {
        assert_eq!(
            data.len(),
            width as usize * height as usize,
            "mask length mismatch"
        );
        Mask {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Mask {
        Mask::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// 0/255 raster rendering of the mask.
    pub fn to_raster(&self) -> Raster {
        Raster::new(
            self.width,
            self.height,
            self.data.iter().map(|&v| if v { 255 } else { 0 }).collect(),
        )
    }

    /// Mask from a raster: any nonzero pixel is foreground.
    pub fn from_raster(raster: &Raster) -> Mask {
        Mask::new(
            raster.width(),
            raster.height(),
            raster.data().iter().map(|&v| v != 0).collect(),
        )
    }
}

/// Average grey-level error: mean absolute difference over all pixels.
pub fn age(estimate: &Raster, truth: &Raster) -> f64 {
    assert_eq!(
        (estimate.width(), estimate.height()),
        (truth.width(), truth.height()),
        "age requires matching geometries"
    );
    let total: u64 = estimate
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs() as u64)
        .sum();
    total as f64 / estimate.data().len() as f64
}

/// Error pixels: absolute difference strictly greater than `threshold`.
/// Returns the count and the EP mask.
pub fn error_pixels(estimate: &Raster, truth: &Raster, threshold: u8) -> (usize, Mask) {
    assert_eq!(
        (estimate.width(), estimate.height()),
        (truth.width(), truth.height()),
        "error_pixels requires matching geometries"
    );
    let data: Vec<bool> = estimate
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&a, &b)| (a as i32 - b as i32).abs() > threshold as i32)
        .collect();
    let mask = Mask::new(estimate.width(), estimate.height(), data);
    (mask.count(), mask)
}

/// Clustered error pixels: error pixels whose in-bounds 4-neighbours are
/// all error pixels. Out-of-bounds neighbours do not disqualify.
pub fn clustered_error_pixels(mask: &Mask) -> usize {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut count = 0;
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as u32, y as u32) {
                continue;
            }
            let neighbours = [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)];
            let clustered = neighbours.iter().all(|&(nx, ny)| {
                nx < 0 || ny < 0 || nx >= w || ny >= h || mask.get(nx as u32, ny as u32)
            });
            if clustered {
                count += 1;
            }
        }
    }
    count
}

/// Foreground-detection agreement between a predicted and a truth mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationScore {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

impl SegmentationScore {
    pub fn zero() -> SegmentationScore {
        SegmentationScore {
            true_positives: 0,
            false_positives: 0,
            false_negatives: 0,
        }
    }

    pub fn accumulate(&mut self, other: SegmentationScore) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }

    /// tp / (tp + fp + fn); 0 when the denominator is 0.
    pub fn similarity(&self) -> f64 {
        let denom = self.true_positives + self.false_positives + self.false_negatives;
        if denom == 0 {
            0.0
        } else {
            self.true_positives as f64 / denom as f64
        }
    }
}

/// Per-pixel agreement counts between predicted and truth masks.
pub fn similarity(predicted: &Mask, truth: &Mask) -> SegmentationScore {
    assert_eq!(
        (predicted.width, predicted.height),
        (truth.width, truth.height),
        "similarity requires matching geometries"
    );
    let mut score = SegmentationScore::zero();
    for (&p, &t) in predicted.data.iter().zip(&truth.data) {
        match (p, t) {
            (true, true) => score.true_positives += 1,
            (true, false) => score.false_positives += 1,
            (false, true) => score.false_negatives += 1,
            (false, false) => {}
        }
    }
    score
}

/// Single-Gaussian per-pixel segmentation: foreground where
/// (x - mean)^2 > k^2 * max(variance, var_floor).
pub fn gaussian_segment(
    frame: &Raster,
    mean: &[f64],
    variance: &[f64],
    k: f64,
    var_floor: f64,
) -> Mask {
    let len = frame.data().len();
    assert_eq!(mean.len(), len, "mean map length mismatch");
    assert_eq!(variance.len(), len, "variance map length mismatch");
    let k2 = k * k;
    let data: Vec<bool> = frame
        .data()
        .iter()
        .zip(mean.iter().zip(variance))
        .map(|(&x, (&mu, &var))| {
            let d = x as f64 - mu;
            d * d > k2 * var.max(var_floor)
        })
        .collect();
    Mask::new(frame.width(), frame.height(), data)
}

/// Per-pixel mean map of the chosen representatives, covering the grid's
/// covered area.
pub fn model_mean_map(model: &SceneModel, labels: &BackgroundGrid) -> Vec<f64> {
    expand_model_map(model, labels, |model, i, j, rep| {
        model.set(i, j).rep(rep).mean().to_vec()
    })
}

/// Per-pixel variance map: every pixel of a block shares the block's
/// chosen-representative scalar variance.
pub fn model_variance_map(model: &SceneModel, labels: &BackgroundGrid) -> Vec<f64> {
    let grid = model.grid();
    let n2 = grid.block_size() as usize * grid.block_size() as usize;
    expand_model_map(model, labels, |model, i, j, rep| {
        vec![model.set(i, j).rep(rep).variance(); n2]
    })
}

fn expand_model_map(
    model: &SceneModel,
    labels: &BackgroundGrid,
    block_values: impl Fn(&SceneModel, u32, u32, usize) -> Vec<f64>,
) -> Vec<f64> {
    assert!(
        labels.is_complete(),
        "model maps require a complete label grid"
    );
    let grid = model.grid();
    let n = grid.block_size();
    let (w, h) = (
        grid.covered_width() as usize,
        grid.covered_height() as usize,
    );
    let mut map = vec![0.0; w * h];
    for j in 0..grid.rows() {
        for i in 0..grid.cols() {
            let rep = labels.get(i, j).unwrap();
            let values = block_values(model, i, j, rep);
            let (x0, y0) = grid.node_origin(i, j);
            for by in 0..n as usize {
                let row0 = (y0 as usize + by) * w + x0 as usize;
                map[row0..row0 + n as usize]
                    .copy_from_slice(&values[by * n as usize..(by + 1) * n as usize]);
            }
        }
    }
    map
}

/// Per-pixel temporal mean and population variance over a sequence,
/// the direct initialisation for segmentation comparisons.
pub fn pixel_stats(frames: &FrameSequence) -> (Vec<f64>, Vec<f64>) {
    assert!(
        frames.frame_count() > 0,
        "pixel stats require at least one frame"
    );
    let len = frames.frame(0).data().len();
    let count = frames.frame_count() as f64;
    let mut sum = vec![0.0f64; len];
    let mut sum_sq = vec![0.0f64; len];
    for f in 0..frames.frame_count() {
        for (idx, &v) in frames.frame(f).data().iter().enumerate() {
            let v = v as f64;
            sum[idx] += v;
            sum_sq[idx] += v * v;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
    let var: Vec<f64> = sum_sq
        .iter()
        .zip(&mean)
        .map(|(&sq, &m)| (sq / count - m * m).max(0.0))
        .collect();
    (mean, var)
}

/// Crops a raster to the area covered by a grid.
pub fn crop_to_grid(raster: &Raster, grid: &NodeGrid) -> Raster {
    let (w, h) = (grid.covered_width(), grid.covered_height());
    assert!(
        raster.width() >= w && raster.height() >= h,
        "raster smaller than grid coverage"
    );
    if raster.width() == w && raster.height() == h {
        return raster.clone();
    }
    Raster::from_fn(w, h, |x, y| raster.get(x, y))
}

/// Pixelwise temporal median of all frames. For an even frame count, the
/// mean of the two central order statistics, rounded half up.
pub fn median_oracle(frames: &FrameSequence) -> Raster {
    let count = frames.frame_count();
    assert!(count > 0, "median oracle requires at least one frame");
    let len = frames.frame(0).data().len();
    let mut out = vec![0u8; len];
    let mut hist = [0u32; 256];
    for idx in 0..len {
        hist.fill(0);
        for f in 0..count {
            hist[frames.frame(f).data()[idx] as usize] += 1;
        }
        out[idx] = if count % 2 == 1 {
            order_statistic(&hist, count / 2)
        } else {
            let lo = order_statistic(&hist, count / 2 - 1) as u16;
            let hi = order_statistic(&hist, count / 2) as u16;
            // Round half up so the even-count median stays an integer.
            (lo + hi).div_ceil(2) as u8
        };
    }
    Raster::new(frames.width(), frames.height(), out)
}

/// k-th (0-based) order statistic from a value histogram.
fn order_statistic(hist: &[u32; 256], k: usize) -> u8 {
    let mut remaining = k as i64;
    for (value, &count) in hist.iter().enumerate() {
        remaining -= count as i64;
        if remaining < 0 {
            return value as u8;
        }
    }
    unreachable!("order statistic index out of range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame_io::FrameSequence;

    fn raster_of(width: u32, height: u32, values: &[u8]) -> Raster {
        Raster::new(width, height, values.to_vec())
    }

    #[test]
    fn age_is_mean_absolute_difference() {
        let a = raster_of(2, 2, &[10, 20, 30, 40]);
        let b = raster_of(2, 2, &[12, 18, 30, 44]);
        assert_eq!(age(&a, &b), (2.0 + 2.0 + 0.0 + 4.0) / 4.0);
        assert_eq!(age(&a, &a), 0.0);
    }

    #[test]
    fn error_pixels_use_strict_threshold() {
        let a = raster_of(3, 1, &[100, 100, 100]);
        let b = raster_of(3, 1, &[120, 121, 80]);
        // |diff| = 20, 21, 20 with threshold 20: only the middle counts.
        let (count, mask) = error_pixels(&a, &b, 20);
        assert_eq!(count, 1);
        assert_eq!(mask.data(), &[false, true, false]);
    }

    #[test]
    fn solid_square_has_single_clustered_error_pixel() {
        // 3x3 solid EP square inside a 5x5 frame: only the centre has all
        // four neighbours inside the square.
        let mut mask = Mask::filled(5, 5, false);
        for y in 1..4 {
            for x in 1..4 {
                mask.set(x, y, true);
            }
        }
        assert_eq!(clustered_error_pixels(&mask), 1);
    }

    #[test]
    fn full_mask_is_entirely_clustered() {
        let mask = Mask::filled(4, 3, true);
        assert_eq!(clustered_error_pixels(&mask), 12);
    }

    #[test]
    fn isolated_error_pixel_is_not_clustered() {
        let mut mask = Mask::filled(5, 5, false);
        mask.set(2, 2, true);
        assert_eq!(clustered_error_pixels(&mask), 0);
    }

    #[test]
    fn similarity_counts_and_zero_denominator() {
        let pred = Mask::new(2, 2, vec![true, true, false, false]);
        let truth = Mask::new(2, 2, vec![true, false, true, false]);
        let score = similarity(&pred, &truth);
        assert_eq!(score.true_positives, 1);
        assert_eq!(score.false_positives, 1);
        assert_eq!(score.false_negatives, 1);
        assert!((score.similarity() - 1.0 / 3.0).abs() < 1e-12);

        let empty = Mask::filled(2, 2, false);
        assert_eq!(similarity(&empty, &empty).similarity(), 0.0);
    }

    #[test]
    fn gaussian_segment_thresholds_squared_offset() {
        let frame = raster_of(2, 1, &[200, 104]);
        let mean = vec![100.0, 100.0];
        let variance = vec![4.0, 4.0];
        // Offsets 100 and 4 against k^2 * max(var, floor) = 6.25 * 4 = 25.
        let mask = gaussian_segment(&frame, &mean, &variance, 2.5, 4.0);
        assert_eq!(mask.data(), &[true, false]);
    }

    #[test]
    fn gaussian_segment_applies_variance_floor() {
        let frame = raster_of(1, 1, &[104]);
        // Zero variance would flag the 4-offset pixel; the floor of 4.0
        // keeps it background.
        let mask = gaussian_segment(&frame, &[100.0], &[0.0], 2.5, 4.0);
        assert_eq!(mask.data(), &[false]);
        let mask = gaussian_segment(&frame, &[100.0], &[0.0], 2.5, 1.0);
        assert_eq!(mask.data(), &[true]);
    }

    #[test]
    fn median_oracle_odd_and_even_counts() {
        let make = |v: &[u8]| raster_of(1, 1, v);
        let odd = FrameSequence::from_frames(
            vec![
                make(&[10]),
                make(&[200]),
                make(&[10]),
                make(&[200]),
                make(&[10]),
            ],
            25.0,
        )
        .unwrap();
        assert_eq!(median_oracle(&odd).data(), &[10]);

        let even = FrameSequence::from_frames(
            vec![make(&[10]), make(&[200]), make(&[200]), make(&[200])],
            25.0,
        )
        .unwrap();
        assert_eq!(median_oracle(&even).data(), &[200]);

        // Central pair (10, 21): mean 15.5 rounds half up to 16.
        let half = FrameSequence::from_frames(
            vec![make(&[10]), make(&[21]), make(&[0]), make(&[255])],
            25.0,
        )
        .unwrap();
        assert_eq!(median_oracle(&half).data(), &[16]);
    }

    #[test]
    fn median_oracle_is_pixelwise() {
        let f1 = raster_of(2, 1, &[0, 255]);
        let f2 = raster_of(2, 1, &[10, 5]);
        let f3 = raster_of(2, 1, &[20, 255]);
        let seq = FrameSequence::from_frames(vec![f1, f2, f3], 25.0).unwrap();
        assert_eq!(median_oracle(&seq).data(), &[10, 255]);
    }

    #[test]
    fn pixel_stats_match_closed_form() {
        let f1 = raster_of(1, 2, &[10, 0]);
        let f2 = raster_of(1, 2, &[20, 0]);
        let seq = FrameSequence::from_frames(vec![f1, f2], 25.0).unwrap();
        let (mean, var) = pixel_stats(&seq);
        assert_eq!(mean, vec![15.0, 0.0]);
        assert_eq!(var, vec![25.0, 0.0]);
    }

    #[test]
    fn mask_raster_round_trip() {
        let mask = Mask::new(2, 2, vec![true, false, false, true]);
        let raster = mask.to_raster();
        assert_eq!(raster.data(), &[255, 0, 0, 255]);
        assert_eq!(Mask::from_raster(&raster), mask);
    }
}
