//! On-disk formats.
//!
//! * Boxes (detections, ground truth, trajectories), MOTChallenge style:
//!   `frame,id,left,top,width,height,conf,-1,-1,-1` with 1-based frames.
//! * Embeddings: `frame,det_index,e0,...,e127`, where `det_index` is the
//!   0-based position of the detection among its frame's rows.
//! * Config: one `key=value` per line, `#` starts a comment.
//!
//! Reals are written with six decimals and a `.` separator.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use antrack_core::descriptor::{AppearanceDescriptor, DESCRIPTOR_DIM};

use crate::error::{CliError, Result};

pub const MOT_FIELDS: usize = 10;
pub const EMBEDDING_FIELDS: usize = DESCRIPTOR_DIM + 2;

/// One row of a box file. `frame` is 1-based as on disk; `id` is -1 for raw
/// detections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRow {
    pub frame: u32,
    pub id: i64,
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub conf: f64,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> CliError {
    CliError::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {name} '{raw}'")))
}

pub fn parse_mot(text: &str, path: &Path) -> Result<Vec<MotRow>> {
    let mut rows: Vec<MotRow> = Vec::new();
    for (line, content) in data_lines(text) {
        let parts: Vec<&str> = content.split(',').collect();
        if parts.len() != MOT_FIELDS {
            return Err(parse_err(path, line, format!("expected {MOT_FIELDS} fields, found {}", parts.len())));
        }
        let frame: u32 = field(path, line, "frame", parts[0])?;
        if frame == 0 {
            return Err(parse_err(path, line, "frames are 1-based"));
        }
        let row = MotRow {
            frame,
            id: field(path, line, "id", parts[1])?,
            left: field(path, line, "left", parts[2])?,
            top: field(path, line, "top", parts[3])?,
            width: field(path, line, "width", parts[4])?,
            height: field(path, line, "height", parts[5])?,
            conf: field(path, line, "confidence", parts[6])?,
        };
        for (i, raw) in parts[7..].iter().enumerate() {
            field::<f64>(path, line, &format!("field {}", i + 8), raw)?;
        }
        if ![row.left, row.top, row.width, row.height, row.conf].iter().all(|v| v.is_finite()) {
            return Err(parse_err(path, line, "non-finite value"));
        }
        if row.width <= 0.0 || row.height <= 0.0 {
            return Err(parse_err(path, line, "box width and height must be positive"));
        }
        if rows.last().is_some_and(|prev| prev.frame > frame) {
            return Err(parse_err(path, line, "frames must be non-decreasing"));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_mot(rows: &[MotRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 64);
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},-1,-1,-1",
            r.frame, r.id, r.left, r.top, r.width, r.height, r.conf
        )
        .expect("writing to a String");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub frame: u32,
    pub det_index: usize,
    pub values: Vec<f64>,
}

pub fn parse_embeddings(text: &str, path: &Path) -> Result<Vec<EmbeddingRow>> {
    let mut rows = Vec::new();
    for (line, content) in data_lines(text) {
        let parts: Vec<&str> = content.split(',').collect();
        if parts.len() != EMBEDDING_FIELDS {
            return Err(parse_err(
                path,
                line,
                format!("expected {EMBEDDING_FIELDS} fields, found {}", parts.len()),
            ));
        }
        let values = parts[2..]
            .iter()
            .map(|raw| field::<f64>(path, line, "embedding component", raw))
            .collect::<Result<Vec<f64>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, line, "non-finite embedding component"));
        }
        rows.push(EmbeddingRow {
            frame: field(path, line, "frame", parts[0])?,
            det_index: field(path, line, "detection index", parts[1])?,
            values,
        });
    }
    Ok(rows)
}

pub fn write_embeddings(rows: &[EmbeddingRow]) -> String {
    let mut out = String::new();
    for r in rows {
        write!(out, "{},{}", r.frame, r.det_index).expect("writing to a String");
        for v in &r.values {
            write!(out, ",{v:.6}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

/// Matches embedding rows to detection rows. Every detection must have
/// exactly one embedding, addressed by its position within its frame.
pub fn align_embeddings(dets: &[MotRow], embeddings: &[EmbeddingRow]) -> Result<Vec<AppearanceDescriptor>> {
    if dets.len() != embeddings.len() {
        return Err(CliError::Data(format!(
            "{} detections but {} embedding rows",
            dets.len(),
            embeddings.len()
        )));
    }
    let mut by_key: BTreeMap<(u32, usize), &EmbeddingRow> = BTreeMap::new();
    for e in embeddings {
        if by_key.insert((e.frame, e.det_index), e).is_some() {
            return Err(CliError::Data(format!(
                "duplicate embedding for frame {} detection {}",
                e.frame, e.det_index
            )));
        }
    }
    let mut out = Vec::with_capacity(dets.len());
    let mut frame = 0;
    let mut index = 0;
    for d in dets {
        if d.frame != frame {
            frame = d.frame;
            index = 0;
        }
        let e = by_key.get(&(frame, index)).ok_or_else(|| {
            CliError::Data(format!("no embedding for frame {frame} detection {index}"))
        })?;
        out.push(AppearanceDescriptor::normalize(&e.values).map_err(|err| {
            CliError::Data(format!("frame {frame} detection {index}: {err}"))
        })?);
        index += 1;
    }
    Ok(out)
}

/// `key=value` lines with `#` comments, in file order.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (line, content) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let content = content.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| parse_err(path, line, format!("expected key=value, found '{content}'")))?;
        out.push((k.trim().to_string(), v.trim().to_string(), line));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test.txt")
    }

    #[test]
    fn mot_parse_and_write() {
        let text = "1,-1,10.5,20,96,96,0.9,-1,-1,-1\n\n2,3,11,21,96,96,1,-1,-1,-1\n";
        let rows = parse_mot(text, p()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].left, 10.5);
        assert_eq!(rows[1].id, 3);
        assert_eq!(
            write_mot(&rows),
            "1,-1,10.500000,20.000000,96.000000,96.000000,0.900000,-1,-1,-1\n\
             2,3,11.000000,21.000000,96.000000,96.000000,1.000000,-1,-1,-1\n"
        );
    }

    #[test]
    fn mot_errors_carry_line_numbers() {
        let err = parse_mot("1,-1,0,0,1,1,1,-1,-1,-1\n1,-1,0,0,1,1\n", p()).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }), "{err}");
        let err = parse_mot("2,-1,0,0,1,1,1,-1,-1,-1\n1,-1,0,0,1,1,1,-1,-1,-1\n", p()).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }));
        let err = parse_mot("1,-1,0,0,0,1,1,-1,-1,-1\n", p()).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 1, .. }));
        let err = parse_mot("1,-1,0,abc,1,1,1,-1,-1,-1\n", p()).unwrap_err();
        assert_eq!(err.to_string(), "test.txt:1: invalid top 'abc'");
        assert!(parse_mot("0,-1,0,0,1,1,1,-1,-1,-1\n", p()).is_err());
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn embeddings_align_by_frame_position() {
        let dets = parse_mot("1,-1,0,0,1,1,1,-1,-1,-1\n1,-1,5,0,1,1,1,-1,-1,-1\n3,-1,0,0,1,1,1,-1,-1,-1\n", p()).unwrap();
        let mk = |frame, det_index, hot: usize| {
            let mut values = vec![0.0; DESCRIPTOR_DIM];
            values[hot] = 2.0;
            EmbeddingRow { frame, det_index, values }
        };
        let rows = vec![mk(3, 0, 2), mk(1, 1, 1), mk(1, 0, 0)];
        let text = write_embeddings(&rows);
        let parsed = parse_embeddings(&text, p()).unwrap();
        assert_eq!(parsed, rows);
        let descs = align_embeddings(&dets, &parsed).unwrap();
        assert_eq!(descs[0].as_slice()[0], 1.0);
        assert_eq!(descs[1].as_slice()[1], 1.0);
        assert_eq!(descs[2].as_slice()[2], 1.0);

        assert!(matches!(align_embeddings(&dets, &parsed[..2]), Err(CliError::Data(_))));
        let wrong = vec![mk(3, 0, 2), mk(1, 1, 1), mk(1, 2, 0)];
        assert!(matches!(align_embeddings(&dets, &wrong), Err(CliError::Data(_))));
        let dup = vec![mk(3, 0, 2), mk(1, 1, 1), mk(1, 1, 0)];
        assert!(matches!(align_embeddings(&dets, &dup), Err(CliError::Data(_))));
    }

    #[test]
    fn embedding_field_count_checked() {
        let err = parse_embeddings("1,0,0.5,0.5\n", p()).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 1, .. }));
    }

    #[test]
    fn config_lines() {
        let text = "# tracker\nmax_age = 12\n\nt2=0.25 # tighter\n";
        let kv = parse_config(text, p()).unwrap();
        assert_eq!(kv, vec![("max_age".into(), "12".into(), 2), ("t2".into(), "0.25".into(), 4)]);
        assert!(parse_config("oops\n", p()).is_err());
    }
}
