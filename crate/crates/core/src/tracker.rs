//! The online tracker: per-frame predict, cascade, IoU fallback, update and
//! lifecycle transitions.

use alloc::vec::Vec;

use crate::association::{
    iou_match, matching_cascade, CascadeParams, Gallery, DEFAULT_APPEARANCE_THRESHOLD,
    DEFAULT_GALLERY_CAPACITY,
};
use crate::descriptor::AppearanceDescriptor;
use crate::error::{input, Result};
use crate::geometry::BoundingBox;
use crate::motion::{KalmanFilter, KalmanState, Measurement, MotionConfig, CHI2_95_4DOF};

/// One detector output in a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub descriptor: Option<AppearanceDescriptor>,
}

impl Detection {
    pub fn new(bbox: BoundingBox, confidence: f64, descriptor: Option<AppearanceDescriptor>) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(input(alloc::format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self { bbox, confidence, descriptor })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Unconfirmed,
    Confirmed,
    Deleted,
}

/// A persistent identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    id: u64,
    state: TrackState,
    kalman: KalmanState,
    gallery: Gallery,
    hits: u32,
    time_since_update: u32,
    age: u32,
}

impl Track {
    pub fn from_parts(
        id: u64,
        state: TrackState,
        kalman: KalmanState,
        gallery: Gallery,
        hits: u32,
        time_since_update: u32,
        age: u32,
    ) -> Self {
        Self { id, state, kalman, gallery, hits, time_since_update, age }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn state(&self) -> TrackState {
        self.state
    }

    pub fn is_confirmed(&self) -> bool {
        self.state == TrackState::Confirmed
    }

    pub fn kalman(&self) -> &KalmanState {
        &self.kalman
    }

    pub fn gallery(&self) -> &Gallery {
        &self.gallery
    }

    /// Consecutive frames with a successful association.
    pub fn hits(&self) -> u32 {
        self.hits
    }

    pub fn time_since_update(&self) -> u32 {
        self.time_since_update
    }

    /// Frames since birth.
    pub fn age(&self) -> u32 {
        self.age
    }

    pub fn bbox(&self) -> BoundingBox {
        self.kalman.to_box()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Motion gate on squared Mahalanobis distance.
    pub t1: f64,
    /// Appearance gate on gallery cosine distance.
    pub t2: f64,
    /// Confirmed tracks missing for more than this many frames are deleted.
    pub max_age: u32,
    /// Consecutive associations needed to confirm a track.
    pub n_init: u32,
    pub gallery_capacity: usize,
    /// Largest admissible `1 - IoU` in the IoU fallback.
    pub iou_max_distance: f64,
    /// Detections below this confidence are dropped before association.
    pub min_confidence: f64,
    /// Use descriptors for cascade costs. When off, the cascade scores
    /// motion-gated pairs by `1 - IoU` and detections need no descriptor.
    pub appearance: bool,
    pub motion: MotionConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            t1: CHI2_95_4DOF,
            t2: DEFAULT_APPEARANCE_THRESHOLD,
            max_age: 30,
            n_init: 3,
            gallery_capacity: DEFAULT_GALLERY_CAPACITY,
            iou_max_distance: 0.7,
            min_confidence: 0.0,
            appearance: true,
            motion: MotionConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.t1) || !positive(self.t2) || !positive(self.iou_max_distance) {
            return Err(input("tracker thresholds must be positive"));
        }
        if self.n_init < 1 || self.max_age < 1 || self.gallery_capacity < 1 {
            return Err(input("n_init, max_age and gallery_capacity must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(input("min_confidence must lie in [0, 1]"));
        }
        Ok(())
    }

    fn cascade_params(&self) -> CascadeParams {
        CascadeParams {
            t1: self.t1,
            t2: self.t2,
            max_age: self.max_age,
            use_appearance: self.appearance,
            iou_max_distance: self.iou_max_distance,
        }
    }
}

/// Confirmed, recently updated tracks of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame: u32,
    pub tracks: Vec<(u64, BoundingBox)>,
}

/// Detections of one frame, tagged with a 0-based frame index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameDetections {
    pub frame: u32,
    pub detections: Vec<Detection>,
}

/// Single-sequence tracker state.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    kf: KalmanFilter,
    tracks: Vec<Track>,
    next_id: u64,
    next_frame: u32,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        Self::starting_at(config, 0)
    }

    /// Tracker whose first [`step`](Self::step) is labelled `frame`.
    pub fn starting_at(config: TrackerConfig, frame: u32) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            kf: KalmanFilter::new(config.motion),
            config,
            tracks: Vec::new(),
            next_id: 1,
            next_frame: frame,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Live (non-deleted) tracks.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Number of tracks created so far.
    pub fn births(&self) -> u64 {
        self.next_id - 1
    }

    /// Advances one frame.
    pub fn step(&mut self, detections: &[Detection]) -> Result<FrameOutput> {
        let detections: Vec<Detection> = detections
            .iter()
            .filter(|d| d.confidence >= self.config.min_confidence)
            .cloned()
            .collect();
        if self.config.appearance {
            if let Some(i) = detections.iter().position(|d| d.descriptor.is_none()) {
                return Err(input(alloc::format!(
                    "frame {}: detection {i} has no descriptor but appearance matching is on",
                    self.next_frame
                )));
            }
        }

        for track in &mut self.tracks {
            track.kalman = self.kf.predict(&track.kalman);
            track.age += 1;
            track.time_since_update += 1;
        }

        let (confirmed, unconfirmed): (Vec<usize>, Vec<usize>) =
            (0..self.tracks.len()).partition(|&i| self.tracks[i].is_confirmed());
        let all_detections: Vec<usize> = (0..detections.len()).collect();

        let cascade = matching_cascade(
            &self.kf,
            &self.tracks,
            &detections,
            &confirmed,
            &all_detections,
            &self.config.cascade_params(),
        )?;

        let (recent, stale): (Vec<usize>, Vec<usize>) = cascade
            .unmatched_tracks
            .iter()
            .partition(|&&i| self.tracks[i].time_since_update == 1);
        let iou_candidates: Vec<usize> = unconfirmed.iter().chain(&recent).copied().collect();
        let fallback = iou_match(
            &self.tracks,
            &detections,
            &iou_candidates,
            &cascade.unmatched_detections,
            self.config.iou_max_distance,
        );

        for &(t, d) in cascade.matches.iter().chain(&fallback.matches) {
            let det = &detections[d];
            let track = &mut self.tracks[t];
            track.kalman = self.kf.update(&track.kalman, &Measurement::from_box(&det.bbox))?;
            if let Some(desc) = &det.descriptor {
                track.gallery.push(desc.clone());
            }
            track.hits += 1;
            track.time_since_update = 0;
        }

        for &t in stale.iter().chain(&fallback.unmatched_tracks) {
            let track = &mut self.tracks[t];
            track.hits = 0;
            match track.state {
                TrackState::Unconfirmed => track.state = TrackState::Deleted,
                TrackState::Confirmed if track.time_since_update > self.config.max_age => {
                    track.state = TrackState::Deleted
                }
                _ => {}
            }
        }

        let mut unmatched = fallback.unmatched_detections;
        unmatched.sort_unstable();
        for d in unmatched {
            self.birth(&detections[d]);
        }

        for track in &mut self.tracks {
            if track.state == TrackState::Unconfirmed && track.hits >= self.config.n_init {
                track.state = TrackState::Confirmed;
            }
        }
        self.tracks.retain(|t| t.state != TrackState::Deleted);

        let mut output: Vec<(u64, BoundingBox)> = self
            .tracks
            .iter()
            .filter(|t| t.is_confirmed() && t.time_since_update <= 1)
            .map(|t| (t.id, t.bbox()))
            .collect();
        output.sort_by_key(|(id, _)| *id);

        let frame = self.next_frame;
        self.next_frame += 1;
        Ok(FrameOutput { frame, tracks: output })
    }

    fn birth(&mut self, det: &Detection) {
        let mut gallery = Gallery::new(self.config.gallery_capacity);
        if let Some(desc) = &det.descriptor {
            gallery.push(desc.clone());
        }
        self.tracks.push(Track {
            id: self.next_id,
            state: TrackState::Unconfirmed,
            kalman: self.kf.initiate(&Measurement::from_box(&det.bbox)),
            gallery,
            hits: 1,
            time_since_update: 0,
            age: 1,
        });
        self.next_id += 1;
    }
}

/// Tracks a whole sequence. Frames must be strictly ascending; missing frame
/// indices between them are stepped with no detections and appear in the
/// output.
pub fn run(config: TrackerConfig, frames: &[FrameDetections]) -> Result<Vec<FrameOutput>> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    if let Some(w) = frames.windows(2).find(|w| w[1].frame <= w[0].frame) {
        return Err(input(alloc::format!(
            "frames out of order: {} follows {}",
            w[1].frame,
            w[0].frame
        )));
    }
    let mut tracker = Tracker::starting_at(config, first.frame)?;
    let mut outputs = Vec::new();
    for f in frames {
        while tracker.next_frame < f.frame {
            outputs.push(tracker.step(&[])?);
        }
        outputs.push(tracker.step(&f.detections)?);
    }
    Ok(outputs)
}
