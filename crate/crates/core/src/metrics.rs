//! CLEAR-style multi-object tracking metrics and detection average precision.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::association::{solve_assignment, CostMatrix, INFEASIBLE_COST};
use crate::error::{input, Result};
use crate::geometry::{iou, BoundingBox};

/// Default IoU needed for a ground-truth / hypothesis correspondence.
pub const DEFAULT_MATCH_IOU: f64 = 0.5;

/// A box carrying an identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub id: u64,
    pub bbox: BoundingBox,
}

/// Boxes keyed by frame index.
pub type FrameBoxes = BTreeMap<u32, Vec<LabeledBox>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Match,
    Switch,
    Miss,
    FalsePositive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub frame: u32,
    pub kind: EventKind,
    pub gt_id: Option<u64>,
    pub hyp_id: Option<u64>,
    /// Overlap of a `Match` or `Switch`.
    pub iou: Option<f64>,
}

/// Per-sequence event log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MotAccumulator {
    events: Vec<Event>,
    frames: u32,
    gt_boxes: u64,
    hyp_boxes: u64,
    matches: u64,
    switches: u64,
    misses: u64,
    false_positives: u64,
    fragmentations: u64,
    iou_sum: f64,
}

impl MotAccumulator {
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn frames(&self) -> u32 {
        self.frames
    }

    /// Ground-truth boxes seen, i.e. the number of labelled samples.
    pub fn gt_boxes(&self) -> u64 {
        self.gt_boxes
    }

    pub fn hyp_boxes(&self) -> u64 {
        self.hyp_boxes
    }

    /// Matched pairs, switches included.
    pub fn matches(&self) -> u64 {
        self.matches
    }

    pub fn switches(&self) -> u64 {
        self.switches
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn false_positives(&self) -> u64 {
        self.false_positives
    }

    pub fn fragmentations(&self) -> u64 {
        self.fragmentations
    }

    fn push(&mut self, event: Event) {
        match event.kind {
            EventKind::Match | EventKind::Switch => {
                self.matches += 1;
                self.iou_sum += event.iou.unwrap_or(0.0);
                if event.kind == EventKind::Switch {
                    self.switches += 1;
                }
            }
            EventKind::Miss => self.misses += 1,
            EventKind::FalsePositive => self.false_positives += 1,
        }
        self.events.push(event);
    }
}

fn check_unique(frame: u32, boxes: &[LabeledBox], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for b in boxes {
        if !seen.insert(b.id) {
            return Err(input(alloc::format!("frame {frame}: duplicate {what} id {}", b.id)));
        }
    }
    Ok(())
}

/// Builds the event log for one sequence.
///
/// In each frame, correspondences from earlier frames are kept while their
/// IoU stays at or above `iou_threshold`; the remaining boxes are paired by
/// minimum `1 - IoU` assignment. A ground truth matched to a hypothesis id
/// other than its last one is an identity switch. A ground truth that was
/// tracked at its previous appearance and is missed now counts one
/// fragmentation.
pub fn evaluate_sequence(gt: &FrameBoxes, hyp: &FrameBoxes, iou_threshold: f64) -> Result<MotAccumulator> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(input("IoU threshold must lie in (0, 1]"));
    }
    let frames: BTreeSet<u32> = gt.keys().chain(hyp.keys()).copied().collect();
    let empty = Vec::new();

    let mut acc = MotAccumulator {
        frames: frames.len() as u32,
        ..MotAccumulator::default()
    };
    // last hypothesis each ground truth was matched to
    let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();
    let mut tracked: BTreeMap<u64, bool> = BTreeMap::new();

    for frame in frames {
        let gts = gt.get(&frame).unwrap_or(&empty);
        let hyps = hyp.get(&frame).unwrap_or(&empty);
        check_unique(frame, gts, "ground-truth")?;
        check_unique(frame, hyps, "hypothesis")?;
        acc.gt_boxes += gts.len() as u64;
        acc.hyp_boxes += hyps.len() as u64;

        let mut gt_taken = vec![false; gts.len()];
        let mut hyp_taken = vec![false; hyps.len()];
        let mut pairs: Vec<(usize, usize, bool)> = Vec::new();

        for (gi, g) in gts.iter().enumerate() {
            let Some(&h_id) = last_match.get(&g.id) else { continue };
            if let Some(hi) = hyps.iter().position(|h| h.id == h_id) {
                if !hyp_taken[hi] && iou(&g.bbox, &hyps[hi].bbox) >= iou_threshold {
                    gt_taken[gi] = true;
                    hyp_taken[hi] = true;
                    pairs.push((gi, hi, false));
                }
            }
        }

        let free_gt: Vec<usize> = (0..gts.len()).filter(|&i| !gt_taken[i]).collect();
        let free_hyp: Vec<usize> = (0..hyps.len()).filter(|&i| !hyp_taken[i]).collect();
        let matrix = CostMatrix::from_fn(free_gt, free_hyp, |gi, hi| {
            let o = iou(&gts[gi].bbox, &hyps[hi].bbox);
            if o >= iou_threshold {
                1.0 - o
            } else {
                INFEASIBLE_COST
            }
        });
        for (gi, hi) in solve_assignment(&matrix).matches {
            gt_taken[gi] = true;
            hyp_taken[hi] = true;
            pairs.push((gi, hi, true));
        }
        pairs.sort_unstable();

        for (gi, hi, fresh) in pairs {
            let (g, h) = (&gts[gi], &hyps[hi]);
            let switched = fresh && last_match.get(&g.id).is_some_and(|&prev| prev != h.id);
            acc.push(Event {
                frame,
                kind: if switched { EventKind::Switch } else { EventKind::Match },
                gt_id: Some(g.id),
                hyp_id: Some(h.id),
                iou: Some(iou(&g.bbox, &h.bbox)),
            });
            last_match.insert(g.id, h.id);
            tracked.insert(g.id, true);
        }
        for g in gts.iter().zip(&gt_taken).filter(|(_, t)| !**t).map(|(g, _)| g) {
            acc.push(Event { frame, kind: EventKind::Miss, gt_id: Some(g.id), hyp_id: None, iou: None });
            if tracked.insert(g.id, false) == Some(true) {
                acc.fragmentations += 1;
            }
        }
        for h in hyps.iter().zip(&hyp_taken).filter(|(_, t)| !**t).map(|(h, _)| h) {
            acc.push(Event { frame, kind: EventKind::FalsePositive, gt_id: None, hyp_id: Some(h.id), iou: None });
        }
    }
    Ok(acc)
}

/// Summary counts and rates of one sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceScore {
    pub false_positives: u64,
    pub false_negatives: u64,
    pub id_switches: u64,
    pub fragmentations: u64,
    pub mota: f64,
    pub motp: f64,
    pub frames: u32,
    pub labeled_samples: u64,
}

/// `MOTA = 1 - (FP + FN + IDS) / labelled samples`; `MOTP` is the mean IoU
/// of matched pairs (0 when nothing matched).
pub fn score(acc: &MotAccumulator) -> Result<SequenceScore> {
    if acc.gt_boxes == 0 {
        return Err(input("cannot score a sequence without ground truth"));
    }
    let errors = acc.false_positives + acc.misses + acc.switches;
    Ok(SequenceScore {
        false_positives: acc.false_positives,
        false_negatives: acc.misses,
        id_switches: acc.switches,
        fragmentations: acc.fragmentations,
        mota: 1.0 - errors as f64 / acc.gt_boxes as f64,
        motp: if acc.matches == 0 { 0.0 } else { acc.iou_sum / acc.matches as f64 },
        frames: acc.frames,
        labeled_samples: acc.gt_boxes,
    })
}

/// Frame-weighted means over several sequences, plus summed counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateScore {
    pub mota: f64,
    pub motp: f64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub id_switches: u64,
    pub fragmentations: u64,
    pub frames: u64,
}

/// Mean of `values` weighted by their frame counts.
pub fn frame_weighted_mean(values: &[(f64, u32)]) -> Result<f64> {
    let total: u64 = values.iter().map(|(_, f)| u64::from(*f)).sum();
    if total == 0 {
        return Err(input("weighted mean needs at least one frame"));
    }
    Ok(values.iter().map(|(v, f)| v * f64::from(*f)).sum::<f64>() / total as f64)
}

/// mMOTA and mMOTP with weights proportional to each sequence's frame count.
pub fn weighted_aggregate(scores: &[SequenceScore]) -> Result<AggregateScore> {
    let mota: Vec<(f64, u32)> = scores.iter().map(|s| (s.mota, s.frames)).collect();
    let motp: Vec<(f64, u32)> = scores.iter().map(|s| (s.motp, s.frames)).collect();
    Ok(AggregateScore {
        mota: frame_weighted_mean(&mota)?,
        motp: frame_weighted_mean(&motp)?,
        false_positives: scores.iter().map(|s| s.false_positives).sum(),
        false_negatives: scores.iter().map(|s| s.false_negatives).sum(),
        id_switches: scores.iter().map(|s| s.id_switches).sum(),
        fragmentations: scores.iter().map(|s| s.fragmentations).sum(),
        frames: scores.iter().map(|s| u64::from(s.frames)).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub bbox: BoundingBox,
    pub score: f64,
}

/// All-point interpolated average precision at one IoU threshold.
///
/// Detections are ranked by descending score (ties by frame, then input
/// order). Each one is a true positive when its best-overlapping
/// ground-truth box in the same frame reaches `iou_threshold` and has not
/// been claimed by a higher-ranked detection.
pub fn average_precision(
    detections: &BTreeMap<u32, Vec<ScoredBox>>,
    gt: &BTreeMap<u32, Vec<BoundingBox>>,
    iou_threshold: f64,
) -> f64 {
    let n_gt: usize = gt.values().map(Vec::len).sum();
    let mut ranked: Vec<(u32, &ScoredBox)> = detections
        .iter()
        .flat_map(|(f, ds)| ds.iter().map(move |d| (*f, d)))
        .collect();
    if n_gt == 0 {
        return if ranked.is_empty() { 1.0 } else { 0.0 };
    }
    if ranked.is_empty() {
        return 0.0;
    }
    ranked.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));

    let mut claimed: BTreeMap<u32, Vec<bool>> =
        gt.iter().map(|(f, boxes)| (*f, vec![false; boxes.len()])).collect();
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    for (rank, (frame, det)) in ranked.iter().enumerate() {
        let best = gt.get(frame).and_then(|boxes| {
            boxes
                .iter()
                .enumerate()
                .map(|(i, g)| (i, iou(g, &det.bbox)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        });
        if let Some((gi, overlap)) = best {
            let flags = claimed.get_mut(frame).expect("frame present in gt");
            if overlap >= iou_threshold && !flags[gi] {
                flags[gi] = true;
                tp += 1;
            }
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (rank + 1) as f64);
    }

    // precision envelope, then area under the step curve
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}
