//! Axis-aligned box arithmetic, IoU, greedy non-maximum suppression and
//! anchor generation.

use alloc::vec::Vec;

use crate::error::{input, Result};

/// Axis-aligned box in pixel coordinates, stored as (left, top, width, height).
///
/// Coordinates are continuous; nothing in the crate rounds them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

impl BoundingBox {
    /// Builds a box from its top-left corner and size. Width and height must
    /// be finite and strictly positive.
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Result<Self> {
        if !(left.is_finite() && top.is_finite()) {
            return Err(input("box corner must be finite"));
        }
        if !(width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0) {
            return Err(input(alloc::format!(
                "box size must be positive, got {width}x{height}"
            )));
        }
        Ok(Self { left, top, width, height })
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(cx - width / 2.0, cy - height / 2.0, width, height)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn top(&self) -> f64 {
        self.top
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// (cx, cy, w, h) parameterization used by the motion model.
    pub fn to_cxcywh(&self) -> [f64; 4] {
        let (cx, cy) = self.center();
        [cx, cy, self.width, self.height]
    }

    pub fn to_ltwh(&self) -> [f64; 4] {
        [self.left, self.top, self.width, self.height]
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            left: self.left + dx,
            top: self.top + dy,
            ..*self
        }
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.right().min(other.right()) - self.left.max(other.left);
        let h = self.bottom().min(other.bottom()) - self.top.max(other.top);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy non-maximum suppression.
///
/// Boxes are visited by descending score (equal scores keep input order); a
/// box is kept unless its IoU with an already kept box exceeds
/// `iou_threshold`. Returns kept indices in visiting order.
pub fn nms(boxes: &[BoundingBox], scores: &[f64], iou_threshold: f64) -> Result<Vec<usize>> {
    if boxes.len() != scores.len() {
        return Err(input(alloc::format!(
            "nms: {} boxes but {} scores",
            boxes.len(),
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    // sort_by is stable, so ties stay in index order.
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));

    let mut keep: Vec<usize> = Vec::new();
    for i in order {
        if keep
            .iter()
            .all(|&k| iou(&boxes[k], &boxes[i]) <= iou_threshold)
        {
            keep.push(i);
        }
    }
    Ok(keep)
}

/// Default anchor scales (side length of an equal-area square, pixels).
pub const DEFAULT_ANCHOR_SCALES: [f64; 3] = [64.0, 128.0, 256.0];
/// Default anchor aspect ratios (width / height).
pub const DEFAULT_ANCHOR_RATIOS: [f64; 3] = [0.5, 1.0, 2.0];

/// A region-proposal anchor tagged with the (scale, ratio) pair that built it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub bbox: BoundingBox,
    pub scale_index: usize,
    pub ratio_index: usize,
}

/// Lays `|scales| * |ratios|` anchors on every cell of a `feature_w x feature_h`
/// map. Cell (row i, col j) is centred at `((j + 0.5) * stride, (i + 0.5) * stride)`.
///
/// A scale is the square root of the anchor area and a ratio is width over
/// height, so every ratio at one scale covers the same area.
///
/// Output order is row-major over cells, then scale, then ratio.
pub fn generate_anchors(
    feature_w: usize,
    feature_h: usize,
    stride: f64,
    scales: &[f64],
    ratios: &[f64],
) -> Result<Vec<Anchor>> {
    if scales.is_empty() || ratios.is_empty() {
        return Err(input("anchor scales and ratios must be non-empty"));
    }
    if feature_w == 0 || feature_h == 0 {
        return Err(input("feature map dimensions must be at least 1"));
    }
    if !(stride.is_finite() && stride > 0.0) {
        return Err(input("anchor stride must be positive"));
    }
    if scales.iter().chain(ratios).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(input("anchor scales and ratios must be positive"));
    }

    let mut anchors = Vec::with_capacity(feature_w * feature_h * scales.len() * ratios.len());
    for i in 0..feature_h {
        let cy = (i as f64 + 0.5) * stride;
        for j in 0..feature_w {
            let cx = (j as f64 + 0.5) * stride;
            for (scale_index, &scale) in scales.iter().enumerate() {
                for (ratio_index, &ratio) in ratios.iter().enumerate() {
                    let root = libm::sqrt(ratio);
                    let bbox = BoundingBox::from_center(cx, cy, scale * root, scale / root)?;
                    anchors.push(Anchor {
                        bbox,
                        scale_index,
                        ratio_index,
                    });
                }
            }
        }
    }
    Ok(anchors)
}
