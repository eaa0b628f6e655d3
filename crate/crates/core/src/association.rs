//! Track-to-detection association: appearance galleries, the motion and
//! appearance gates, an exact rectangular assignment solver, the
//! age-prioritized matching cascade and the IoU fallback.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::descriptor::{cosine_distance, AppearanceDescriptor};
use crate::error::{input, Result};
use crate::geometry::iou;
use crate::motion::{motion_gate, KalmanFilter, Measurement};
use crate::tracker::{Detection, Track};

/// Cost assigned to pairs that may not be matched.
pub const INFEASIBLE_COST: f64 = 1e5;
/// Default appearance gate.
pub const DEFAULT_APPEARANCE_THRESHOLD: f64 = 0.2;
/// Default gallery capacity.
pub const DEFAULT_GALLERY_CAPACITY: usize = 100;

/// Bounded FIFO of a track's most recent appearance descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    descriptors: VecDeque<AppearanceDescriptor>,
    capacity: usize,
}

impl Gallery {
    pub fn new(capacity: usize) -> Self {
        Self {
            descriptors: VecDeque::with_capacity(capacity.min(DEFAULT_GALLERY_CAPACITY)),
            capacity: capacity.max(1),
        }
    }

    /// Appends `d`, evicting the oldest entry when full.
    pub fn push(&mut self, d: AppearanceDescriptor) {
        if self.descriptors.len() == self.capacity {
            self.descriptors.pop_front();
        }
        self.descriptors.push_back(d);
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &AppearanceDescriptor> {
        self.descriptors.iter()
    }
}

/// Smallest cosine distance between `r` and any descriptor in `g`.
pub fn gallery_distance(g: &Gallery, r: &AppearanceDescriptor) -> Result<f64> {
    if g.is_empty() {
        return Err(input("gallery is empty"));
    }
    Ok(g.iter()
        .map(|d| cosine_distance(d, r))
        .fold(f64::INFINITY, f64::min))
}

/// `true` iff `d2 < t2`.
pub fn appearance_gate(d2: f64, t2: f64) -> bool {
    d2 < t2
}

/// A pair is admissible only when both gates pass.
pub fn combined_gate(motion: bool, appearance: bool) -> bool {
    motion && appearance
}

/// Dense `rows x cols` cost matrix tagged with caller ids for each row and
/// column. Entries at or above [`INFEASIBLE_COST`] (and non-finite entries)
/// are infeasible.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    row_ids: Vec<usize>,
    col_ids: Vec<usize>,
    costs: Vec<f64>,
}

impl CostMatrix {
    pub fn new(row_ids: Vec<usize>, col_ids: Vec<usize>, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != row_ids.len() * col_ids.len() {
            return Err(input("cost matrix size does not match its ids"));
        }
        if costs.iter().any(|c| *c < 0.0) {
            return Err(input("costs must be non-negative"));
        }
        Ok(Self { row_ids, col_ids, costs })
    }

    /// Builds the matrix by evaluating `cost(row_id, col_id)`.
    pub fn from_fn(row_ids: Vec<usize>, col_ids: Vec<usize>, mut cost: impl FnMut(usize, usize) -> f64) -> Self {
        let mut costs = Vec::with_capacity(row_ids.len() * col_ids.len());
        for &r in &row_ids {
            for &c in &col_ids {
                let v = cost(r, c);
                costs.push(if v.is_finite() && v >= 0.0 { v.min(INFEASIBLE_COST) } else { INFEASIBLE_COST });
            }
        }
        Self { row_ids, col_ids, costs }
    }

    /// Square-free convenience constructor with ids `0..rows` and `0..cols`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(input("ragged cost matrix"));
        }
        Self::new((0..rows.len()).collect(), (0..cols).collect(), rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[usize] {
        &self.col_ids
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.costs[r * self.cols() + c]
    }

    fn effective(&self, r: usize, c: usize) -> f64 {
        let v = self.get(r, c);
        if is_feasible(v) {
            v
        } else {
            INFEASIBLE_COST
        }
    }
}

pub fn is_feasible(cost: f64) -> bool {
    cost.is_finite() && cost < INFEASIBLE_COST
}

/// Outcome of an assignment, expressed in the caller's row and column ids.
/// Every row id lands in exactly one of `matches` / `unmatched_tracks`, and
/// every column id in exactly one of `matches` / `unmatched_detections`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignmentResult {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Exact minimum-cost assignment on a rectangular matrix.
///
/// Infeasible entries carry [`INFEASIBLE_COST`] through a shortest
/// augmenting path solver and any pair landing on one is dropped. As long as
/// the feasible costs of any one assignment sum to less than the sentinel,
/// the result matches as many feasible pairs as possible and, among those,
/// has minimal total cost.
pub fn solve_assignment(c: &CostMatrix) -> AssignmentResult {
    let (n, m) = (c.rows(), c.cols());
    let mut result = AssignmentResult::default();
    let mut row_match: Vec<Option<usize>> = vec![None; n];
    if n > 0 && m > 0 {
        if n <= m {
            for (r, col) in shortest_augmenting_path(n, m, |i, j| c.effective(i, j)).into_iter().enumerate() {
                row_match[r] = Some(col);
            }
        } else {
            for (col, r) in shortest_augmenting_path(m, n, |i, j| c.effective(j, i)).into_iter().enumerate() {
                row_match[r] = Some(col);
            }
        }
    }

    let mut col_used = vec![false; m];
    for (r, assigned) in row_match.iter().enumerate() {
        match *assigned {
            Some(col) if is_feasible(c.get(r, col)) => {
                col_used[col] = true;
                result.matches.push((c.row_ids[r], c.col_ids[col]));
            }
            _ => result.unmatched_tracks.push(c.row_ids[r]),
        }
    }
    result.unmatched_detections = c
        .col_ids
        .iter()
        .zip(&col_used)
        .filter(|(_, used)| !**used)
        .map(|(id, _)| *id)
        .collect();
    result
}

/// Hungarian method with potentials for `n <= m`. Returns, for each row, the
/// column it is assigned to.
fn shortest_augmenting_path(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based with index 0 as the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut min_slack = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        min_slack.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < min_slack[j] {
                    min_slack[j] = cur;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Gate thresholds used by the cascade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeParams {
    /// Motion gate on squared Mahalanobis distance.
    pub t1: f64,
    /// Appearance gate on gallery cosine distance.
    pub t2: f64,
    /// Oldest `time_since_update` level visited.
    pub max_age: u32,
    /// When false the cascade cost is `1 - IoU` (still motion gated) and
    /// galleries are ignored.
    pub use_appearance: bool,
    /// Largest admissible `1 - IoU` when appearance is disabled.
    pub iou_max_distance: f64,
}

/// Age-prioritized matching.
///
/// Tracks with `time_since_update == 1` are matched first, then 2, and so on
/// up to `max_age`, each level only seeing detections left over by earlier
/// levels. Within a level the cost is the gallery distance for pairs that
/// pass both gates and infeasible otherwise.
///
/// Row ids are indices into `tracks`, column ids indices into `detections`.
pub fn matching_cascade(
    kf: &KalmanFilter,
    tracks: &[Track],
    detections: &[Detection],
    track_indices: &[usize],
    detection_indices: &[usize],
    params: &CascadeParams,
) -> Result<AssignmentResult> {
    let measurements: Vec<Measurement> = detections.iter().map(|d| Measurement::from_box(&d.bbox)).collect();

    let mut unmatched_detections: Vec<usize> = detection_indices.to_vec();
    let mut matches = Vec::new();
    for level in 1..=params.max_age {
        if unmatched_detections.is_empty() {
            break;
        }
        let level_tracks: Vec<usize> = track_indices
            .iter()
            .copied()
            .filter(|&t| tracks[t].time_since_update() == level)
            .collect();
        if level_tracks.is_empty() {
            continue;
        }

        let mut costs = Vec::with_capacity(level_tracks.len() * unmatched_detections.len());
        for &t in &level_tracks {
            let track = &tracks[t];
            let projection = kf.gate_projection(track.kalman())?;
            let predicted = track.kalman().to_box();
            for &d in &unmatched_detections {
                let b1 = motion_gate(projection.mahalanobis_sq(&measurements[d]), params.t1);
                let cost = if !b1 {
                    INFEASIBLE_COST
                } else if params.use_appearance {
                    let descriptor = detections[d]
                        .descriptor
                        .as_ref()
                        .ok_or_else(|| input(alloc::format!("detection {d} has no descriptor")))?;
                    let d2 = gallery_distance(track.gallery(), descriptor)?;
                    if combined_gate(b1, appearance_gate(d2, params.t2)) {
                        d2
                    } else {
                        INFEASIBLE_COST
                    }
                } else {
                    let dist = 1.0 - iou(&predicted, &detections[d].bbox);
                    if dist <= params.iou_max_distance {
                        dist
                    } else {
                        INFEASIBLE_COST
                    }
                };
                costs.push(cost);
            }
        }
        let matrix = CostMatrix::new(level_tracks, unmatched_detections.clone(), costs)?;
        let level_result = solve_assignment(&matrix);
        matches.extend(level_result.matches);
        unmatched_detections = level_result.unmatched_detections;
    }

    let unmatched_tracks = track_indices
        .iter()
        .copied()
        .filter(|t| !matches.iter().any(|(mt, _)| mt == t))
        .collect();
    Ok(AssignmentResult {
        matches,
        unmatched_tracks,
        unmatched_detections,
    })
}

/// Assignment on `1 - IoU` between predicted track boxes and detection
/// boxes; pairs with `1 - IoU > max_distance` are infeasible.
pub fn iou_match(
    tracks: &[Track],
    detections: &[Detection],
    track_indices: &[usize],
    detection_indices: &[usize],
    max_distance: f64,
) -> AssignmentResult {
    let matrix = CostMatrix::from_fn(track_indices.to_vec(), detection_indices.to_vec(), |t, d| {
        let cost = 1.0 - iou(&tracks[t].kalman().to_box(), &detections[d].bbox);
        if cost > max_distance {
            INFEASIBLE_COST
        } else {
            cost
        }
    });
    solve_assignment(&matrix)
}
