//! MOT Challenge text format: `frame,id,left,top,width,height,conf,x,y,z`.
//!
//! Detection files carry `id = -1`. Ground-truth and result files carry one
//! row per `(frame, id)`; a ground-truth row with `conf = 0` is ignore-flagged.
//! Fields after `conf` are accepted and dropped.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::scalar::Scalar;
use crate::tracker::{Detection, FrameOutput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id {id} in frame {frame}")]
    DuplicateId { line: usize, frame: u32, id: u64 },
}

impl MotError {
    pub fn line(&self) -> usize {
        match self {
            MotError::Parse { line, .. } | MotError::DuplicateId { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotMode {
    Det,
    GtOrResult,
}

/// One identity-carrying row of a ground-truth or result file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackRow<T> {
    pub id: u64,
    pub bbox: BBox<T>,
    pub conf: T,
    /// Set when `conf == 0`; only meaningful for ground truth.
    pub ignored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceData<R> {
    pub name: String,
    pub frames: BTreeMap<u32, Vec<R>>,
    /// Largest frame index seen, 0 for an empty file.
    pub frame_count: u32,
}

impl<R> SequenceData<R> {
    pub fn new(name: impl Into<String>) -> Self {
        SequenceData {
            name: name.into(),
            frames: BTreeMap::new(),
            frame_count: 0,
        }
    }

    pub fn frame(&self, f: u32) -> &[R] {
        self.frames.get(&f).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn push(&mut self, frame: u32, row: R) {
        self.frames.entry(frame).or_default().push(row);
        self.frame_count = self.frame_count.max(frame);
    }

    pub fn row_count(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }
}

pub type DetSequence<T> = SequenceData<Detection<T>>;
pub type TrackSequence<T> = SequenceData<TrackRow<T>>;

#[derive(Debug, Clone, PartialEq)]
pub enum MotData<T> {
    Det(DetSequence<T>),
    GtOrResult(TrackSequence<T>),
}

struct Row {
    frame: u32,
    id: f64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    conf: f64,
}

fn parse_row(text: &str, line: usize) -> Result<Option<Row>, MotError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(None);
    }
    let err = |message: String| MotError::Parse { line, message };
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() < 7 {
        return Err(err(format!("expected at least 7 fields, found {}", fields.len())));
    }
    let mut nums = [0.0f64; 7];
    for (k, (slot, raw)) in nums.iter_mut().zip(&fields).enumerate() {
        let v: f64 = raw
            .parse()
            .map_err(|_| err(format!("field {} `{raw}` is not a number", k + 1)))?;
        if !v.is_finite() {
            return Err(err(format!("field {} is not finite", k + 1)));
        }
        *slot = v;
    }
    let [frame, id, x, y, w, h, conf] = nums;
    if frame.fract() != 0.0 || frame < 1.0 || frame > u32::MAX as f64 {
        return Err(err(format!("frame `{}` must be an integer >= 1", fields[0])));
    }
    if id.fract() != 0.0 {
        return Err(err(format!("id `{}` must be an integer", fields[1])));
    }
    if !(w > 0.0) || !(h > 0.0) {
        return Err(err(format!("box size {w}x{h} must be positive")));
    }
    Ok(Some(Row {
        frame: frame as u32,
        id,
        x,
        y,
        w,
        h,
        conf,
    }))
}

fn bbox<T: Scalar>(r: &Row) -> BBox<T> {
    BBox::new(T::lit(r.x), T::lit(r.y), T::lit(r.w), T::lit(r.h))
}

/// Parses a detection file. Rows must have `id = -1` and a score in `[0, 1]`.
/// Row order within a frame is kept.
pub fn parse_detections<T: Scalar>(text: &str, name: &str) -> Result<DetSequence<T>, MotError> {
    let mut seq = SequenceData::new(name);
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let Some(r) = parse_row(raw, line)? else { continue };
        if r.id != -1.0 {
            return Err(MotError::Parse {
                line,
                message: format!("detection rows need id -1, found {}", r.id),
            });
        }
        if !(0.0..=1.0).contains(&r.conf) {
            return Err(MotError::Parse {
                line,
                message: format!("detection score {} outside [0, 1]", r.conf),
            });
        }
        seq.push(r.frame, Detection::new(r.frame, bbox(&r), T::lit(r.conf)));
    }
    Ok(seq)
}

/// Parses a ground-truth or result file. Rows within a frame are sorted by id
/// so downstream results do not depend on line order.
pub fn parse_tracks<T: Scalar>(text: &str, name: &str) -> Result<TrackSequence<T>, MotError> {
    let mut seq: TrackSequence<T> = SequenceData::new(name);
    let mut seen: BTreeMap<(u32, u64), usize> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let Some(r) = parse_row(raw, line)? else { continue };
        if r.id < 0.0 || r.id > u64::MAX as f64 {
            return Err(MotError::Parse {
                line,
                message: format!("track id {} must be non-negative", r.id),
            });
        }
        let id = r.id as u64;
        if seen.insert((r.frame, id), line).is_some() {
            return Err(MotError::DuplicateId {
                line,
                frame: r.frame,
                id,
            });
        }
        seq.push(
            r.frame,
            TrackRow {
                id,
                bbox: bbox(&r),
                conf: T::lit(r.conf),
                ignored: r.conf == 0.0,
            },
        );
    }
    for rows in seq.frames.values_mut() {
        rows.sort_by_key(|r| r.id);
    }
    Ok(seq)
}

pub fn parse_mot_file<T: Scalar>(text: &str, name: &str, mode: MotMode) -> Result<MotData<T>, MotError> {
    match mode {
        MotMode::Det => parse_detections(text, name).map(MotData::Det),
        MotMode::GtOrResult => parse_tracks(text, name).map(MotData::GtOrResult),
    }
}

/// Formats tracker output, one line per `(frame, id)` in that order.
pub fn write_results<T: Scalar>(outputs: &[FrameOutput<T>]) -> String {
    let mut rows: Vec<(u32, u64, [f64; 5])> = outputs
        .iter()
        .flat_map(|fo| {
            fo.entries.iter().map(move |e| {
                let b = &e.bbox;
                (
                    fo.frame,
                    e.id,
                    [b.x.as_f64(), b.y.as_f64(), b.w.as_f64(), b.h.as_f64(), e.confidence.as_f64()],
                )
            })
        })
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = String::new();
    for (frame, id, [x, y, w, h, c]) in rows {
        writeln!(out, "{frame},{id},{x:.2},{y:.2},{w:.2},{h:.2},{c:.2},-1,-1,-1").unwrap();
    }
    out
}

/// Formats identity rows (ground truth or results) in the same layout as
/// [`write_results`].
pub fn write_tracks<T: Scalar>(seq: &TrackSequence<T>) -> String {
    let mut out = String::new();
    for (frame, rows) in &seq.frames {
        let mut rows = rows.clone();
        rows.sort_by_key(|r| r.id);
        for r in rows {
            let b = r.bbox;
            writeln!(
                out,
                "{frame},{},{:.2},{:.2},{:.2},{:.2},{:.2},-1,-1,-1",
                r.id,
                b.x.as_f64(),
                b.y.as_f64(),
                b.w.as_f64(),
                b.h.as_f64(),
                r.conf.as_f64()
            )
            .unwrap();
        }
    }
    out
}

/// Formats a detection sequence with `id = -1`, keeping row order within each frame.
pub fn write_detections<T: Scalar>(seq: &DetSequence<T>) -> String {
    let mut out = String::new();
    for (frame, dets) in &seq.frames {
        for d in dets {
            let b = d.bbox;
            writeln!(
                out,
                "{frame},-1,{:.2},{:.2},{:.2},{:.2},{:.2},-1,-1,-1",
                b.x.as_f64(),
                b.y.as_f64(),
                b.w.as_f64(),
                b.h.as_f64(),
                d.score.as_f64()
            )
            .unwrap();
        }
    }
    out
}
