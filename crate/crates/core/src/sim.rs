//! Seeded ant-colony scenario generator.
//!
//! Agents perform a heading random walk with occasional abrupt turns and
//! pauses inside a rectangular arena. Observations are derived from the
//! ground truth by Bernoulli misses, Gaussian centre jitter and uniformly
//! placed false positives; each detection carries a noisy copy of its
//! agent's identity descriptor.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Three independent streams are used: stream 0 drives
//! motion, stream 1 observation noise and stream 2 identity vectors, so
//! changing noise settings never changes the trajectories.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::descriptor::{AppearanceDescriptor, DESCRIPTOR_DIM};
use crate::error::{input, Result};
use crate::geometry::BoundingBox;
use crate::metrics::{FrameBoxes, LabeledBox};
use crate::tracker::{Detection, FrameDetections};

const MOTION_STREAM: u64 = 0;
const OBSERVATION_STREAM: u64 = 1;
const IDENTITY_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionParams {
    /// Mean walking speed, pixels per frame.
    pub speed_mean: f64,
    pub speed_std: f64,
    /// Per-frame heading diffusion, radians.
    pub turn_std: f64,
    /// Chance per frame of a sharp turn (90 to 180 degrees either way).
    pub abrupt_turn_prob: f64,
    /// Chance per frame of stopping for `pause_frames` frames.
    pub pause_prob: f64,
    pub pause_frames: u32,
    /// Agents refuse moves that bring their centre closer than this to
    /// another agent (0 disables avoidance).
    pub personal_space: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            speed_mean: 3.0,
            speed_std: 1.0,
            turn_std: 0.15,
            abrupt_turn_prob: 0.02,
            pause_prob: 0.01,
            pause_frames: 10,
            personal_space: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseParams {
    pub miss_prob: f64,
    /// Expected false positives per frame (Poisson).
    pub false_positive_rate: f64,
    /// Std of the Gaussian added to each detection centre, pixels.
    pub jitter_std: f64,
    /// Std of the per-component Gaussian added to the identity vector
    /// before renormalizing.
    pub descriptor_noise_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub arena_width: f64,
    pub arena_height: f64,
    pub n_agents: u32,
    pub frames: u32,
    /// Side of the square ground-truth box.
    pub box_size: f64,
    pub motion: MotionParams,
    /// Agents leave when they reach the border and new ones walk in.
    pub entry_exit: bool,
    /// Chance per frame that a new agent enters (entry/exit mode only).
    pub entry_prob: f64,
    pub noise: NoiseParams,
    pub descriptor_dim: usize,
    /// Minimum centre distance between agents at placement time.
    pub min_initial_separation: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            arena_width: 1920.0,
            arena_height: 1080.0,
            n_agents: 10,
            frames: 300,
            box_size: 96.0,
            motion: MotionParams::default(),
            entry_exit: false,
            entry_prob: 0.0,
            noise: NoiseParams::default(),
            descriptor_dim: DESCRIPTOR_DIM,
            min_initial_separation: 0.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let non_neg = |v: f64| v.is_finite() && v >= 0.0;
        if !(self.arena_width > 0.0 && self.arena_height > 0.0 && self.box_size > 0.0) {
            return Err(input("arena and box dimensions must be positive"));
        }
        if self.box_size > self.arena_width.min(self.arena_height) {
            return Err(input("box does not fit in the arena"));
        }
        if self.frames == 0 || self.descriptor_dim == 0 {
            return Err(input("frames and descriptor_dim must be positive"));
        }
        let m = &self.motion;
        let n = &self.noise;
        if ![m.abrupt_turn_prob, m.pause_prob, n.miss_prob, self.entry_prob].into_iter().all(prob) {
            return Err(input("probabilities must lie in [0, 1]"));
        }
        if ![
            m.speed_mean,
            m.speed_std,
            m.turn_std,
            m.personal_space,
            n.false_positive_rate,
            n.jitter_std,
            n.descriptor_noise_std,
            self.min_initial_separation,
        ]
        .into_iter()
        .all(non_neg)
        {
            return Err(input("rates, speeds and standard deviations must be non-negative"));
        }
        if self.n_agents == 0 && !self.entry_exit {
            return Err(input("scenario has no agents and no entries"));
        }
        Ok(())
    }
}

/// A detection and the agent it came from (`None` for false positives).
#[derive(Debug, Clone, PartialEq)]
pub struct SimDetection {
    pub detection: Detection,
    pub source: Option<u64>,
}

/// Simulator output, indexed by 0-based frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub gt: Vec<Vec<LabeledBox>>,
    pub detections: Vec<Vec<SimDetection>>,
    pub identity_descriptors: BTreeMap<u64, AppearanceDescriptor>,
}

impl Scenario {
    pub fn frames(&self) -> usize {
        self.gt.len()
    }

    pub fn gt_boxes(&self) -> FrameBoxes {
        self.gt
            .iter()
            .enumerate()
            .filter(|(_, b)| !b.is_empty())
            .map(|(f, b)| (f as u32, b.clone()))
            .collect()
    }

    pub fn frame_detections(&self) -> Vec<FrameDetections> {
        self.detections
            .iter()
            .enumerate()
            .map(|(f, ds)| FrameDetections {
                frame: f as u32,
                detections: ds.iter().map(|d| d.detection.clone()).collect(),
            })
            .collect()
    }

    pub fn detection_count(&self) -> usize {
        self.detections.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone)]
struct Agent {
    id: u64,
    x: f64,
    y: f64,
    heading: f64,
    speed: f64,
    paused: u32,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> AppearanceDescriptor {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        if let Ok(d) = AppearanceDescriptor::normalize(&v) {
            return d;
        }
    }
}

struct World<'a> {
    cfg: &'a ScenarioConfig,
    motion_rng: ChaCha8Rng,
    identity_rng: ChaCha8Rng,
    agents: Vec<Agent>,
    identities: BTreeMap<u64, AppearanceDescriptor>,
    next_id: u64,
}

impl World<'_> {
    fn half(&self) -> f64 {
        self.cfg.box_size / 2.0
    }

    fn spawn(&mut self, x: f64, y: f64, heading: f64) {
        let m = &self.cfg.motion;
        let speed = (m.speed_mean + m.speed_std * gaussian(&mut self.motion_rng)).max(0.0);
        let id = self.next_id;
        self.next_id += 1;
        self.identities
            .insert(id, random_unit(&mut self.identity_rng, self.cfg.descriptor_dim));
        self.agents.push(Agent { id, x, y, heading, speed, paused: 0 });
    }

    fn place_initial(&mut self) {
        let h = self.half();
        for _ in 0..self.cfg.n_agents {
            let mut pos = (0.0, 0.0);
            for _ in 0..1000 {
                pos = (
                    self.motion_rng.random_range(h..=self.cfg.arena_width - h),
                    self.motion_rng.random_range(h..=self.cfg.arena_height - h),
                );
                let sep = self.cfg.min_initial_separation;
                if self.agents.iter().all(|a| libm::hypot(a.x - pos.0, a.y - pos.1) >= sep) {
                    break;
                }
            }
            let heading = self.motion_rng.random_range(-PI..PI);
            self.spawn(pos.0, pos.1, heading);
        }
    }

    fn maybe_enter(&mut self) {
        if !self.cfg.entry_exit || !self.motion_rng.random_bool(self.cfg.entry_prob) {
            return;
        }
        let h = self.half();
        let (w, ht) = (self.cfg.arena_width, self.cfg.arena_height);
        let side = self.motion_rng.random_range(0..4u8);
        let along_x = self.motion_rng.random_range(h..=w - h);
        let along_y = self.motion_rng.random_range(h..=ht - h);
        let (x, y, heading) = match side {
            0 => (h, along_y, 0.0),
            1 => (w - h, along_y, PI),
            2 => (along_x, h, PI / 2.0),
            _ => (along_x, ht - h, -PI / 2.0),
        };
        self.spawn(x, y, heading);
    }

    fn advance(&mut self) {
        let h = self.half();
        let (w, ht) = (self.cfg.arena_width, self.cfg.arena_height);
        let m = self.cfg.motion;
        let mut exited = Vec::new();
        for i in 0..self.agents.len() {
            let rng = &mut self.motion_rng;
            // draws happen unconditionally so the stream layout is fixed
            let pause_roll: f64 = rng.random();
            let abrupt_roll: f64 = rng.random();
            let abrupt_angle = rng.random_range(PI / 2.0..=PI) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let diffusion = m.turn_std * gaussian(rng);

            let a = &mut self.agents[i];
            if a.paused > 0 {
                a.paused -= 1;
                continue;
            }
            if pause_roll < m.pause_prob {
                a.paused = m.pause_frames;
                continue;
            }
            a.heading += if abrupt_roll < m.abrupt_turn_prob { abrupt_angle } else { diffusion };

            let mut nx = a.x + a.speed * libm::cos(a.heading);
            let mut ny = a.y + a.speed * libm::sin(a.heading);
            let outside = nx < h || nx > w - h || ny < h || ny > ht - h;
            if outside && self.cfg.entry_exit {
                exited.push(a.id);
                continue;
            }
            if nx < h || nx > w - h {
                a.heading = PI - a.heading;
                nx = nx.clamp(h, w - h);
            }
            if ny < h || ny > ht - h {
                a.heading = -a.heading;
                ny = ny.clamp(h, ht - h);
            }
            let (id, heading) = (a.id, a.heading);
            if m.personal_space > 0.0
                && self
                    .agents
                    .iter()
                    .any(|o| o.id != id && libm::hypot(o.x - nx, o.y - ny) < m.personal_space)
            {
                self.agents[i].heading = heading + PI;
                continue;
            }
            let a = &mut self.agents[i];
            a.x = nx;
            a.y = ny;
        }
        self.agents.retain(|a| !exited.contains(&a.id));
    }

    fn snapshot(&self) -> Vec<LabeledBox> {
        let s = self.cfg.box_size;
        self.agents
            .iter()
            .map(|a| LabeledBox {
                id: a.id,
                bbox: BoundingBox::from_center(a.x, a.y, s, s).expect("positive box size"),
            })
            .collect()
    }
}

fn observe(
    cfg: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
    gt: &[LabeledBox],
    identities: &BTreeMap<u64, AppearanceDescriptor>,
) -> Result<Vec<SimDetection>> {
    let n = &cfg.noise;
    let noisy_descriptor = |rng: &mut ChaCha8Rng, identity: &AppearanceDescriptor| loop {
        let v: Vec<f64> = identity
            .as_slice()
            .iter()
            .map(|x| x + n.descriptor_noise_std * gaussian(rng))
            .collect();
        // renormalizing an exact copy would still perturb the last bits
        if n.descriptor_noise_std == 0.0 {
            break identity.clone();
        }
        if let Ok(d) = AppearanceDescriptor::normalize(&v) {
            break d;
        }
    };

    let mut out = Vec::with_capacity(gt.len());
    for b in gt {
        let missed = rng.random::<f64>() < n.miss_prob;
        let dx = n.jitter_std * gaussian(rng);
        let dy = n.jitter_std * gaussian(rng);
        let descriptor = noisy_descriptor(rng, &identities[&b.id]);
        if missed {
            continue;
        }
        let bbox = b.bbox.translate(dx, dy);
        out.push(SimDetection {
            detection: Detection::new(bbox, 1.0, Some(descriptor))?,
            source: Some(b.id),
        });
    }

    let count = if n.false_positive_rate > 0.0 {
        let poisson = Poisson::new(n.false_positive_rate).map_err(|_| input("bad false positive rate"))?;
        poisson.sample(rng) as u64
    } else {
        0
    };
    let s = cfg.box_size;
    for _ in 0..count {
        let left = rng.random_range(0.0..=cfg.arena_width - s);
        let top = rng.random_range(0.0..=cfg.arena_height - s);
        let confidence = rng.random_range(0.3..=0.9);
        let descriptor = random_unit(rng, cfg.descriptor_dim);
        out.push(SimDetection {
            detection: Detection::new(BoundingBox::new(left, top, s, s)?, confidence, Some(descriptor))?,
            source: None,
        });
    }
    Ok(out)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generates a scenario. Identical configs give identical scenarios.
pub fn simulate(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut world = World {
        cfg: config,
        motion_rng: stream(config.seed, MOTION_STREAM),
        identity_rng: stream(config.seed, IDENTITY_STREAM),
        agents: Vec::new(),
        identities: BTreeMap::new(),
        next_id: 1,
    };
    let mut observation_rng = stream(config.seed, OBSERVATION_STREAM);
    world.place_initial();

    let mut gt = Vec::with_capacity(config.frames as usize);
    let mut detections = Vec::with_capacity(config.frames as usize);
    for frame in 0..config.frames {
        if frame > 0 {
            world.advance();
            world.maybe_enter();
        }
        let boxes = world.snapshot();
        detections.push(observe(config, &mut observation_rng, &boxes, &world.identities)?);
        gt.push(boxes);
    }
    Ok(Scenario {
        gt,
        detections,
        identity_descriptors: world.identities,
    })
}

/// Drops detections of agents that come too close to a lower-id agent.
///
/// For every pair of ground-truth boxes in a frame whose centres are closer
/// than `merge_distance`, the detection of the higher agent id is removed.
pub fn occlusion_filter(scenario: &Scenario, merge_distance: f64) -> Result<Scenario> {
    if merge_distance.is_nan() || merge_distance < 0.0 {
        return Err(input("merge distance must be non-negative"));
    }
    let mut out = scenario.clone();
    for (gt, dets) in out.gt.iter().zip(out.detections.iter_mut()) {
        let mut hidden = Vec::new();
        for (i, a) in gt.iter().enumerate() {
            for b in &gt[i + 1..] {
                let (ax, ay) = a.bbox.center();
                let (bx, by) = b.bbox.center();
                if libm::hypot(ax - bx, ay - by) < merge_distance {
                    hidden.push(a.id.max(b.id));
                }
            }
        }
        dets.retain(|d| d.source.is_none_or(|s| !hidden.contains(&s)));
    }
    Ok(out)
}
