//! The `track`, `evaluate` and `simulate` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use antrack_core::geometry::BoundingBox;
use antrack_core::metrics::{
    evaluate_sequence, frame_weighted_mean, score, FrameBoxes, LabeledBox, SequenceScore,
};
use antrack_core::sim::{simulate, ScenarioConfig};
use antrack_core::tracker::{run, Detection, FrameDetections, TrackerConfig};

use crate::error::{CliError, Result};
use crate::formats::{
    align_embeddings, parse_embeddings, parse_mot, write_embeddings, write_mot, EmbeddingRow, MotRow,
};
use crate::settings::resolve;

pub const GT_FILE: &str = "gt.txt";
pub const DETECTIONS_FILE: &str = "det.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(CliError::io(path))
}

fn to_box(row: &MotRow) -> Result<BoundingBox> {
    Ok(BoundingBox::new(row.left, row.top, row.width, row.height)?)
}

#[derive(Debug, Clone, Default)]
pub struct TrackArgs {
    pub detections: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub no_appearance: bool,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackSummary {
    pub frames: usize,
    pub rows: usize,
    pub appearance: bool,
}

pub fn cmd_track(args: &TrackArgs) -> Result<TrackSummary> {
    let mut config = resolve(TrackerConfig::default(), args.config.as_deref(), &args.overrides)?;
    config.validate()?;

    let rows = parse_mot(&read(&args.detections)?, &args.detections)?;
    let descriptors = match (&args.embeddings, args.no_appearance) {
        (Some(path), false) => {
            let embeddings = parse_embeddings(&read(path)?, path)?;
            Some(align_embeddings(&rows, &embeddings)?)
        }
        (Some(_), true) => {
            log::warn!("--no-appearance given: ignoring embeddings, association uses motion gating and IoU only");
            None
        }
        (None, _) => {
            log::warn!("no embeddings given: appearance matching disabled, association uses motion gating and IoU only");
            None
        }
    };
    config.appearance = descriptors.is_some();

    let mut frames: Vec<FrameDetections> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if !(0.0..=1.0).contains(&row.conf) {
            return Err(CliError::Data(format!(
                "{}: detection {} has confidence {} outside [0, 1]",
                args.detections.display(),
                i + 1,
                row.conf
            )));
        }
        let frame = row.frame - 1;
        if frames.last().is_none_or(|f| f.frame != frame) {
            frames.push(FrameDetections { frame, detections: Vec::new() });
        }
        let descriptor = descriptors.as_ref().map(|d| d[i].clone());
        frames
            .last_mut()
            .expect("frame pushed above")
            .detections
            .push(Detection::new(to_box(row)?, row.conf, descriptor)?);
    }

    let outputs = run(config, &frames)?;
    let out_rows: Vec<MotRow> = outputs
        .iter()
        .flat_map(|o| {
            o.tracks.iter().map(move |(id, b)| MotRow {
                frame: o.frame + 1,
                id: *id as i64,
                left: b.left(),
                top: b.top(),
                width: b.width(),
                height: b.height(),
                conf: 1.0,
            })
        })
        .collect();
    write(&args.out, &write_mot(&out_rows))?;
    Ok(TrackSummary {
        frames: outputs.len(),
        rows: out_rows.len(),
        appearance: config.appearance,
    })
}

/// Reads a box file into 0-based frames of identified boxes.
pub fn read_boxes(path: &Path) -> Result<FrameBoxes> {
    let rows = parse_mot(&read(path)?, path)?;
    let mut out = FrameBoxes::new();
    for row in rows {
        if row.id < 0 {
            return Err(CliError::Data(format!(
                "{}: frame {} has a box without identity (id {})",
                path.display(),
                row.frame,
                row.id
            )));
        }
        out.entry(row.frame - 1).or_default().push(LabeledBox {
            id: row.id as u64,
            bbox: to_box(&row)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub gt: Vec<PathBuf>,
    pub hyp: Vec<PathBuf>,
    pub iou_threshold: f64,
    pub weight_by_frames: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub gt: PathBuf,
    pub hyp: PathBuf,
    pub score: SequenceScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub sequences: Vec<SequenceReport>,
    pub mean_mota: f64,
    pub mean_motp: f64,
    pub weight_by_frames: bool,
}

impl EvaluationReport {
    pub fn text(&self) -> String {
        let mut out = String::new();
        for s in &self.sequences {
            let c = &s.score;
            writeln!(
                out,
                "{}: FP={} FN={} IDS={} FM={} MOTA={:.3} MOTP={:.3} frames={} labels={}",
                s.hyp.display(),
                c.false_positives,
                c.false_negatives,
                c.id_switches,
                c.fragmentations,
                c.mota,
                c.motp,
                c.frames,
                c.labeled_samples
            )
            .expect("writing to a String");
        }
        let weighting = if self.weight_by_frames { "frame-weighted" } else { "unweighted" };
        writeln!(
            out,
            "mean ({weighting}, {} sequences): mMOTA={:.3} mMOTP={:.3}",
            self.sequences.len(),
            self.mean_mota,
            self.mean_motp
        )
        .expect("writing to a String");
        out
    }

    /// One `key=value` pair per line.
    pub fn key_values(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: String, v: String| {
            out.push_str(&k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("sequences".into(), self.sequences.len().to_string());
        for (i, s) in self.sequences.iter().enumerate() {
            let c = &s.score;
            kv(format!("seq.{i}.gt"), s.gt.display().to_string());
            kv(format!("seq.{i}.hyp"), s.hyp.display().to_string());
            kv(format!("seq.{i}.frames"), c.frames.to_string());
            kv(format!("seq.{i}.labels"), c.labeled_samples.to_string());
            kv(format!("seq.{i}.fp"), c.false_positives.to_string());
            kv(format!("seq.{i}.fn"), c.false_negatives.to_string());
            kv(format!("seq.{i}.ids"), c.id_switches.to_string());
            kv(format!("seq.{i}.fm"), c.fragmentations.to_string());
            kv(format!("seq.{i}.mota"), format!("{:.6}", c.mota));
            kv(format!("seq.{i}.motp"), format!("{:.6}", c.motp));
        }
        let total = |f: fn(&SequenceScore) -> u64| self.sequences.iter().map(|s| f(&s.score)).sum::<u64>().to_string();
        kv("total.fp".into(), total(|c| c.false_positives));
        kv("total.fn".into(), total(|c| c.false_negatives));
        kv("total.ids".into(), total(|c| c.id_switches));
        kv("total.fm".into(), total(|c| c.fragmentations));
        kv("mean.weighting".into(), if self.weight_by_frames { "frames" } else { "uniform" }.into());
        kv("mean.mota".into(), format!("{:.6}", self.mean_mota));
        kv("mean.motp".into(), format!("{:.6}", self.mean_motp));
        out
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluationReport> {
    if args.gt.is_empty() || args.gt.len() != args.hyp.len() {
        return Err(CliError::Usage(format!(
            "need matching --gt/--hyp pairs, got {} ground truth and {} hypothesis files",
            args.gt.len(),
            args.hyp.len()
        )));
    }
    if !(args.iou_threshold > 0.0 && args.iou_threshold <= 1.0) {
        return Err(CliError::Usage("--iou must lie in (0, 1]".into()));
    }

    let mut sequences = Vec::with_capacity(args.gt.len());
    for (gt_path, hyp_path) in args.gt.iter().zip(&args.hyp) {
        let gt = read_boxes(gt_path)?;
        let hyp = read_boxes(hyp_path)?;
        let (Some(first), Some(last)) = (gt.keys().next(), gt.keys().next_back()) else {
            return Err(CliError::Data(format!("{}: ground truth is empty", gt_path.display())));
        };
        let outside = hyp.keys().filter(|f| *f < first || *f > last).count();
        if outside > 0 {
            log::warn!(
                "{}: {outside} hypothesis frames fall outside the ground-truth range {}..={}",
                hyp_path.display(),
                first + 1,
                last + 1
            );
        }
        let acc = evaluate_sequence(&gt, &hyp, args.iou_threshold)?;
        sequences.push(SequenceReport {
            gt: gt_path.clone(),
            hyp: hyp_path.clone(),
            score: score(&acc)?,
        });
    }

    let weight = |s: &SequenceReport| if args.weight_by_frames { s.score.frames } else { 1 };
    let mota: Vec<(f64, u32)> = sequences.iter().map(|s| (s.score.mota, weight(s))).collect();
    let motp: Vec<(f64, u32)> = sequences.iter().map(|s| (s.score.motp, weight(s))).collect();
    Ok(EvaluationReport {
        mean_mota: frame_weighted_mean(&mota)?,
        mean_motp: frame_weighted_mean(&motp)?,
        sequences,
        weight_by_frames: args.weight_by_frames,
    })
}

#[derive(Debug, Clone, Default)]
pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulateSummary {
    pub frames: usize,
    pub gt_rows: usize,
    pub detection_rows: usize,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateSummary> {
    let mut config = resolve(ScenarioConfig::default(), args.config.as_deref(), &args.overrides)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let scenario = simulate(&config)?;

    let mut gt_rows = Vec::new();
    let mut det_rows = Vec::new();
    let mut emb_rows = Vec::new();
    for (f, (gt, dets)) in scenario.gt.iter().zip(&scenario.detections).enumerate() {
        let frame = f as u32 + 1;
        for b in gt {
            gt_rows.push(MotRow {
                frame,
                id: b.id as i64,
                left: b.bbox.left(),
                top: b.bbox.top(),
                width: b.bbox.width(),
                height: b.bbox.height(),
                conf: 1.0,
            });
        }
        for (det_index, d) in dets.iter().enumerate() {
            let b = &d.detection.bbox;
            det_rows.push(MotRow {
                frame,
                id: -1,
                left: b.left(),
                top: b.top(),
                width: b.width(),
                height: b.height(),
                conf: d.detection.confidence,
            });
            let values = d
                .detection
                .descriptor
                .as_ref()
                .map(|v| v.as_slice().to_vec())
                .ok_or_else(|| CliError::Data("simulated detection without descriptor".into()))?;
            emb_rows.push(EmbeddingRow { frame, det_index, values });
        }
    }

    fs::create_dir_all(&args.out_dir).map_err(CliError::io(&args.out_dir))?;
    write(&args.out_dir.join(GT_FILE), &write_mot(&gt_rows))?;
    write(&args.out_dir.join(DETECTIONS_FILE), &write_mot(&det_rows))?;
    write(&args.out_dir.join(EMBEDDINGS_FILE), &write_embeddings(&emb_rows))?;
    Ok(SimulateSummary {
        frames: scenario.frames(),
        gt_rows: gt_rows.len(),
        detection_rows: det_rows.len(),
    })
}
