//! Forward math of a two-stage detection head: position-sensitive RoI
//! pooling, bin voting, softmax and the multitask detection loss.
//!
//! Score maps are plain inputs here, so everything can be exercised without
//! a trained network.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{input, Result};
use crate::geometry::BoundingBox;

/// Probability floor used by the cross-entropy terms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Position-sensitive score maps laid out as `[channel][row][col]` with
/// `k * k * classes` channels. Bin `(i, j)` and class `c` read channel
/// `(i * k + j) * classes + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMaps {
    data: Vec<f64>,
    k: usize,
    classes: usize,
    height: usize,
    width: usize,
}

impl ScoreMaps {
    pub fn new(data: Vec<f64>, k: usize, classes: usize, height: usize, width: usize) -> Result<Self> {
        if k == 0 || classes == 0 || height == 0 || width == 0 {
            return Err(input("score maps need k, classes, height and width >= 1"));
        }
        let expected = k * k * classes * height * width;
        if data.len() != expected {
            return Err(input(alloc::format!(
                "score maps: expected {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { data, k, classes, height, width })
    }

    /// Builds maps by evaluating `f(channel, row, col)`.
    pub fn from_fn(
        k: usize,
        classes: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(k * k * classes * height * width);
        for ch in 0..k * k * classes {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(ch, y, x));
                }
            }
        }
        Self::new(data, k, classes, height, width)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn channels(&self) -> usize {
        self.k * self.k * self.classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channel_index(&self, i: usize, j: usize, c: usize) -> usize {
        (i * self.k + j) * self.classes + c
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f64 {
        self.data[(channel * self.height + y) * self.width + x]
    }
}

/// Output of [`psroi_pool`]: a `k x k x classes` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledGrid {
    k: usize,
    classes: usize,
    values: Vec<f64>,
}

impl PooledGrid {
    pub fn new(k: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * k * classes {
            return Err(input("pooled grid size does not match k * k * classes"));
        }
        Ok(Self { k, classes, values })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.values[(i * self.k + j) * self.classes + c]
    }
}

/// Index range of pixels whose centres fall in `[start, end)`, clipped to `[0, len)`.
fn pixel_span(start: f64, end: f64, len: usize) -> (usize, usize) {
    let lo = libm::ceil(start - 0.5).max(0.0) as usize;
    let hi = (libm::ceil(end - 0.5).max(0.0) as usize).min(len);
    (lo.min(hi), hi)
}

/// Position-sensitive average pooling of `roi` (image coordinates) over
/// `maps`. `spatial_scale` maps image pixels to score-map cells.
///
/// The scaled RoI is split into `k x k` equal sub-rectangles; bin `(i, j, c)`
/// averages channel `(i, j, c)` over the map cells whose centres lie in
/// sub-rectangle `(i, j)`. Bins that contain no cell centre are zero.
pub fn psroi_pool(maps: &ScoreMaps, roi: &BoundingBox, spatial_scale: f64) -> Result<PooledGrid> {
    if !(spatial_scale.is_finite() && spatial_scale > 0.0) {
        return Err(input("spatial scale must be positive"));
    }
    let x0 = roi.left() * spatial_scale;
    let y0 = roi.top() * spatial_scale;
    let rw = roi.width() * spatial_scale;
    let rh = roi.height() * spatial_scale;
    const EPS: f64 = 1e-9;
    if x0 < -EPS || y0 < -EPS || x0 + rw > maps.width as f64 + EPS || y0 + rh > maps.height as f64 + EPS {
        return Err(input(alloc::format!(
            "RoI ({x0}, {y0}, {rw}, {rh}) lies outside the {}x{} score map",
            maps.width,
            maps.height
        )));
    }

    let k = maps.k;
    let bin_w = rw / k as f64;
    let bin_h = rh / k as f64;
    let mut values = vec![0.0; k * k * maps.classes];
    for i in 0..k {
        let (ys, ye) = pixel_span(y0 + i as f64 * bin_h, y0 + (i + 1) as f64 * bin_h, maps.height);
        for j in 0..k {
            let (xs, xe) = pixel_span(x0 + j as f64 * bin_w, x0 + (j + 1) as f64 * bin_w, maps.width);
            let n = (ye - ys) * (xe - xs);
            if n == 0 {
                continue;
            }
            for c in 0..maps.classes {
                let ch = maps.channel_index(i, j, c);
                let mut sum = 0.0;
                for y in ys..ye {
                    for x in xs..xe {
                        sum += maps.get(ch, y, x);
                    }
                }
                values[(i * k + j) * maps.classes + c] = sum / n as f64;
            }
        }
    }
    Ok(PooledGrid { k, classes: maps.classes, values })
}

/// Sums every bin of each class into one score per class.
pub fn vote(pooled: &PooledGrid) -> Vec<f64> {
    let mut scores = vec![0.0; pooled.classes];
    for bin in pooled.values.chunks_exact(pooled.classes) {
        for (s, v) in scores.iter_mut().zip(bin) {
            *s += v;
        }
    }
    scores
}

/// Max-shifted softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| libm::exp(s - max)).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Box regression parameters `(cx, cy, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionTarget([f64; 4]);

impl RegressionTarget {
    pub fn new(t: [f64; 4]) -> Result<Self> {
        if t.iter().any(|v| !v.is_finite()) {
            return Err(input("regression target must be finite"));
        }
        Ok(Self(t))
    }

    pub fn values(&self) -> [f64; 4] {
        self.0
    }
}

/// Per-coordinate penalty applied to regression residuals.
pub trait RegressionPenalty {
    fn penalty(&self, residual: f64) -> f64;
}

/// `0.5 x^2` for `|x| < 1`, `|x| - 0.5` otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct SmoothL1;

impl RegressionPenalty for SmoothL1 {
    fn penalty(&self, residual: f64) -> f64 {
        let a = residual.abs();
        if a < 1.0 {
            0.5 * a * a
        } else {
            a - 0.5
        }
    }
}

pub(crate) fn clamped_neg_log(p: f64) -> f64 {
    if p < PROB_FLOOR {
        log::warn!("probability {p} below floor, clamped to {PROB_FLOOR}");
        -libm::log(PROB_FLOOR)
    } else {
        -libm::log(p)
    }
}

/// Multitask detection loss with a caller-chosen regression penalty.
///
/// Background samples (`gt_class == 0`) contribute only the classification
/// term.
pub fn detection_loss_with<P: RegressionPenalty>(
    class_probs: &[f64],
    gt_class: usize,
    reg_pred: &RegressionTarget,
    reg_target: &RegressionTarget,
    lambda: f64,
    penalty: &P,
) -> Result<f64> {
    let p = *class_probs
        .get(gt_class)
        .ok_or_else(|| input(alloc::format!("class {gt_class} out of range")))?;
    let cls = clamped_neg_log(p);
    if gt_class != 1 {
        return Ok(cls);
    }
    let reg: f64 = reg_target
        .0
        .iter()
        .zip(&reg_pred.0)
        .map(|(t, p)| penalty.penalty(t - p))
        .sum();
    Ok(cls + lambda * reg)
}

/// [`detection_loss_with`] using smooth-L1.
pub fn detection_loss(
    class_probs: &[f64],
    gt_class: usize,
    reg_pred: &RegressionTarget,
    reg_target: &RegressionTarget,
    lambda: f64,
) -> Result<f64> {
    detection_loss_with(class_probs, gt_class, reg_pred, reg_target, lambda, &SmoothL1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rt(t: [f64; 4]) -> RegressionTarget {
        RegressionTarget::new(t).unwrap()
    }

    #[test]
    fn pool_constant_maps() {
        let maps = ScoreMaps::from_fn(3, 2, 9, 9, |_, _, _| 2.5).unwrap();
        let roi = BoundingBox::new(0.0, 0.0, 9.0, 9.0).unwrap();
        let pooled = psroi_pool(&maps, &roi, 1.0).unwrap();
        assert!(pooled.values.iter().all(|&v| v == 2.5));
        assert_eq!(vote(&pooled), vec![22.5, 22.5]);
    }

    #[test]
    fn pool_k1_is_roi_mean() {
        let maps = ScoreMaps::from_fn(1, 1, 4, 4, |_, y, x| (y * 4 + x) as f64).unwrap();
        let roi = BoundingBox::new(1.0, 1.0, 2.0, 2.0).unwrap();
        let pooled = psroi_pool(&maps, &roi, 1.0).unwrap();
        // cells (1,1)=5 (1,2)=6 (2,1)=9 (2,2)=10
        assert_eq!(pooled.get(0, 0, 0), 7.5);
        assert_eq!(vote(&pooled), vec![7.5]);
    }

    #[test]
    fn pool_quadrants() {
        // every channel holds 1..16 in row-major order
        let maps = ScoreMaps::from_fn(2, 2, 4, 4, |_, y, x| (y * 4 + x + 1) as f64).unwrap();
        let roi = BoundingBox::new(0.0, 0.0, 4.0, 4.0).unwrap();
        let pooled = psroi_pool(&maps, &roi, 1.0).unwrap();
        for c in 0..2 {
            assert_eq!(pooled.get(0, 0, c), 3.5); // 1 2 5 6
            assert_eq!(pooled.get(0, 1, c), 5.5); // 3 4 7 8
            assert_eq!(pooled.get(1, 0, c), 11.5); // 9 10 13 14
            assert_eq!(pooled.get(1, 1, c), 13.5); // 11 12 15 16
        }
        assert_eq!(vote(&pooled), vec![34.0, 34.0]);
    }

    #[test]
    fn pool_uses_position_sensitive_channels() {
        // channel value identifies itself; bin (i,j,c) must read channel (i*k+j)*C+c
        let maps = ScoreMaps::from_fn(2, 2, 4, 4, |ch, _, _| ch as f64).unwrap();
        let roi = BoundingBox::new(0.0, 0.0, 4.0, 4.0).unwrap();
        let pooled = psroi_pool(&maps, &roi, 1.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for c in 0..2 {
                    assert_eq!(pooled.get(i, j, c), ((i * 2 + j) * 2 + c) as f64);
                }
            }
        }
    }

    #[test]
    fn pool_empty_bins_are_zero() {
        let maps = ScoreMaps::from_fn(3, 1, 4, 4, |_, _, _| 1.0).unwrap();
        // 1.2 px wide RoI split three ways: some bins catch no cell centre
        let roi = BoundingBox::new(0.1, 0.1, 1.2, 1.2).unwrap();
        let pooled = psroi_pool(&maps, &roi, 1.0).unwrap();
        let zeros = pooled.values.iter().filter(|&&v| v == 0.0).count();
        let ones = pooled.values.iter().filter(|&&v| v == 1.0).count();
        assert_eq!(zeros + ones, 9);
        assert_eq!(ones, 1);
    }

    #[test]
    fn pool_scaling_and_bounds() {
        let maps = ScoreMaps::from_fn(1, 1, 2, 2, |_, y, x| (y * 2 + x) as f64).unwrap();
        let roi = BoundingBox::new(0.0, 0.0, 64.0, 64.0).unwrap();
        assert_eq!(psroi_pool(&maps, &roi, 1.0 / 32.0).unwrap().get(0, 0, 0), 1.5);
        assert!(psroi_pool(&maps, &roi, 1.0).is_err());
        let off = BoundingBox::new(-1.0, 0.0, 1.0, 1.0).unwrap();
        assert!(psroi_pool(&maps, &off, 1.0).is_err());
    }

    #[test]
    fn score_maps_shape_checked() {
        assert!(ScoreMaps::new(vec![0.0; 7], 2, 2, 1, 1).is_err());
        assert!(ScoreMaps::new(vec![0.0; 8], 2, 2, 1, 1).is_ok());
    }

    #[test]
    fn vote_k1_is_identity() {
        let grid = PooledGrid::new(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
        assert_eq!(vote(&grid), vec![0.5, -1.0, 2.0]);
        let ones = PooledGrid::new(3, 2, vec![1.0; 18]).unwrap();
        assert_eq!(vote(&ones), vec![9.0, 9.0]);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[3.0, 23.0]);
        assert!(p[1] >= 1.0 - 1e-8);
        let p = softmax(&[1.0, 2.0]);
        // 1 / (1 + e), e / (1 + e)
        let e = core::f64::consts::E;
        assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((p[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((p[0] - 0.268_941_421_369_995).abs() < 1e-12);
        let big = softmax(&[1000.0, 1000.0]);
        assert_eq!(big, vec![0.5, 0.5]);
    }

    #[test]
    fn loss_examples() {
        let zero = rt([0.0; 4]);
        let off = rt([5.0, -3.0, 1.0, 2.0]);
        // background with perfect classification ignores regression entirely
        assert_eq!(detection_loss(&[1.0, 0.0], 0, &off, &zero, 1.0).unwrap(), 0.0);
        assert_eq!(detection_loss(&[0.0, 1.0], 1, &zero, &zero, 1.0).unwrap(), 0.0);
        let l = detection_loss(&[0.5, 0.5], 1, &zero, &rt([0.5, 0.0, 0.0, 0.0]), 1.0).unwrap();
        assert!((l - (core::f64::consts::LN_2 + 0.125)).abs() < 1e-15);
        assert!(detection_loss(&[1.0, 0.0], 2, &zero, &zero, 1.0).is_err());
    }

    #[test]
    fn loss_clamps_zero_probability() {
        let zero = rt([0.0; 4]);
        let l = detection_loss(&[1.0, 0.0], 1, &zero, &zero, 1.0).unwrap();
        assert!((l + libm::log(PROB_FLOOR)).abs() < 1e-9);
    }

    #[test]
    fn smooth_l1_branches() {
        assert_eq!(SmoothL1.penalty(0.5), 0.125);
        assert_eq!(SmoothL1.penalty(-2.0), 1.5);
        assert_eq!(SmoothL1.penalty(1.0), 0.5);
    }

    struct Squared;
    impl RegressionPenalty for Squared {
        fn penalty(&self, r: f64) -> f64 {
            r * r
        }
    }

    #[test]
    fn penalty_is_pluggable() {
        let l = detection_loss_with(&[0.0, 1.0], 1, &rt([0.0; 4]), &rt([2.0, 0.0, 0.0, 0.0]), 0.5, &Squared)
            .unwrap();
        assert_eq!(l, 2.0);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(v in proptest::collection::vec(-30.0..30.0f64, 1..6), shift in -100.0..100.0f64) {
            let p = softmax(&v);
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let q = softmax(&shifted);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!(*a > 0.0);
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn background_loss_ignores_regression(
            p in 0.01..1.0f64,
            a in proptest::array::uniform4(-10.0..10.0f64),
            b in proptest::array::uniform4(-10.0..10.0f64),
        ) {
            let probs = [p, 1.0 - p];
            let l1 = detection_loss(&probs, 0, &rt(a), &rt(b), 1.0).unwrap();
            let l2 = detection_loss(&probs, 0, &rt([0.0; 4]), &rt([0.0; 4]), 1.0).unwrap();
            prop_assert_eq!(l1, l2);
            prop_assert!(l1 >= 0.0);
        }

        #[test]
        fn loss_monotone_in_gt_probability(p in 0.01..0.98f64, dp in 0.001..0.02f64, r in proptest::array::uniform4(-3.0..3.0f64)) {
            let z = rt([0.0; 4]);
            let lo = detection_loss(&[1.0 - p, p], 1, &rt(r), &z, 1.0).unwrap();
            let hi = detection_loss(&[1.0 - p - dp, p + dp], 1, &rt(r), &z, 1.0).unwrap();
            prop_assert!(hi < lo);
            prop_assert!(hi >= 0.0);
        }
    }
}
