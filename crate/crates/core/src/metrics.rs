//! CLEAR-MOT (MOTA), identity (IDF1) and HOTA scores.
//!
//! All matching here uses area IoU, whatever cost the tracker was run with.
//! Scores are fractions; callers format percentages. Ground-truth rows flagged
//! as ignored are removed before scoring together with the predictions that
//! overlap them (IoU >= 0.5 under a one-to-one matching).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::hungarian_solve;
use crate::geometry::{iou, BBox};
use crate::mot_io::TrackSequence;
use crate::scalar::Scalar;

pub const DEFAULT_IOU_THRESH: f64 = 0.5;
pub const ALPHA_COUNT: usize = 19;

/// HOTA localisation thresholds `0.05, 0.10, ..., 0.95`.
pub fn alphas() -> [f64; ALPHA_COUNT] {
    std::array::from_fn(|i| (i + 1) as f64 * 0.05)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ground truth for `{0}` has no boxes to evaluate")]
    EmptyGroundTruth(String),
    #[error("`{name}`: predictions reach frame {pred_frames} but ground truth ends at frame {gt_frames}")]
    FrameRangeMismatch {
        name: String,
        gt_frames: u32,
        pred_frames: u32,
    },
}

/// Boxes of one frame, ids sorted ascending.
#[derive(Debug, Clone, Default)]
struct Frame {
    gt: Vec<(u64, BBox<f64>)>,
    pred: Vec<(u64, BBox<f64>)>,
}

impl Frame {
    fn similarity(&self) -> Vec<Vec<f64>> {
        self.gt
            .iter()
            .map(|(_, g)| self.pred.iter().map(|(_, p)| iou(g, p)).collect())
            .collect()
    }
}

/// Maximum-total-score one-to-one matching restricted to pairs with
/// `feasible(i, j)`. Scores must lie in `[0, 1]`.
fn max_score_matching(score: &[Vec<f64>], feasible: impl Fn(usize, usize) -> bool) -> Vec<(usize, usize)> {
    if score.is_empty() || score[0].is_empty() {
        return Vec::new();
    }
    let cost: Vec<Vec<f64>> = score
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &s)| if feasible(i, j) { 1.0 - s } else { f64::INFINITY })
                .collect()
        })
        .collect();
    // With gate 1 leaving a row and a column unmatched costs exactly as much
    // as a zero-score match, so the objective is `const - sum(score)`.
    hungarian_solve(&cost, 1.0).pairs()
}

fn frames_of<T: Scalar>(gt: &TrackSequence<T>, pred: &TrackSequence<T>) -> Result<Vec<Frame>, MetricsError> {
    if pred.frame_count > gt.frame_count {
        return Err(MetricsError::FrameRangeMismatch {
            name: gt.name.clone(),
            gt_frames: gt.frame_count,
            pred_frames: pred.frame_count,
        });
    }
    let mut frames = Vec::with_capacity(gt.frame_count as usize);
    for f in 1..=gt.frame_count {
        let g = gt.frame(f);
        let mut pred: Vec<(u64, BBox<f64>)> = pred.frame(f).iter().map(|r| (r.id, r.bbox.cast())).collect();
        pred.sort_by_key(|p| p.0);
        if g.iter().any(|r| r.ignored) && !pred.is_empty() {
            let all: Vec<BBox<f64>> = g.iter().map(|r| r.bbox.cast()).collect();
            let sim: Vec<Vec<f64>> = all
                .iter()
                .map(|gb| pred.iter().map(|(_, pb)| iou(gb, pb)).collect())
                .collect();
            let pairs = max_score_matching(&sim, |i, j| sim[i][j] >= DEFAULT_IOU_THRESH);
            let drop: BTreeSet<usize> = pairs.into_iter().filter(|&(i, _)| g[i].ignored).map(|(_, j)| j).collect();
            pred = pred
                .into_iter()
                .enumerate()
                .filter(|(j, _)| !drop.contains(j))
                .map(|(_, p)| p)
                .collect();
        }
        let mut gt: Vec<(u64, BBox<f64>)> = g.iter().filter(|r| !r.ignored).map(|r| (r.id, r.bbox.cast())).collect();
        gt.sort_by_key(|p| p.0);
        frames.push(Frame { gt, pred });
    }
    let total: usize = frames.iter().map(|f| f.gt.len()).sum();
    if total == 0 {
        return Err(MetricsError::EmptyGroundTruth(gt.name.clone()));
    }
    Ok(frames)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClearCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub idsw: u64,
    pub gt_total: u64,
}

impl ClearCounts {
    pub fn mota(&self) -> f64 {
        if self.gt_total == 0 {
            return 0.0;
        }
        1.0 - (self.fp + self.fn_ + self.idsw) as f64 / self.gt_total as f64
    }

    fn add(&mut self, o: &ClearCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.idsw += o.idsw;
        self.gt_total += o.gt_total;
    }
}

fn clear_counts(frames: &[Frame], thresh: f64) -> ClearCounts {
    let mut c = ClearCounts::default();
    // gt id -> pred id matched in the previous frame (persistence)
    let mut prev_frame: BTreeMap<u64, u64> = BTreeMap::new();
    // gt id -> last pred id it was ever matched to (switch detection)
    let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();
    for fr in frames {
        let sim = fr.similarity();
        let mut gt_used = vec![false; fr.gt.len()];
        let mut pred_used = vec![false; fr.pred.len()];
        let mut pairs = Vec::new();
        for (i, (gid, _)) in fr.gt.iter().enumerate() {
            let Some(&pid) = prev_frame.get(gid) else { continue };
            if let Some(j) = fr.pred.iter().position(|(p, _)| *p == pid) {
                if sim[i][j] >= thresh && !pred_used[j] {
                    gt_used[i] = true;
                    pred_used[j] = true;
                    pairs.push((i, j));
                }
            }
        }
        let rows: Vec<usize> = (0..fr.gt.len()).filter(|&i| !gt_used[i]).collect();
        let cols: Vec<usize> = (0..fr.pred.len()).filter(|&j| !pred_used[j]).collect();
        let sub: Vec<Vec<f64>> = rows.iter().map(|&i| cols.iter().map(|&j| sim[i][j]).collect()).collect();
        for (a, b) in max_score_matching(&sub, |a, b| sub[a][b] >= thresh) {
            pairs.push((rows[a], cols[b]));
        }

        prev_frame.clear();
        for &(i, j) in &pairs {
            let (gid, pid) = (fr.gt[i].0, fr.pred[j].0);
            if let Some(&last) = last_match.get(&gid) {
                if last != pid {
                    c.idsw += 1;
                }
            }
            last_match.insert(gid, pid);
            prev_frame.insert(gid, pid);
        }
        c.tp += pairs.len() as u64;
        c.fp += (fr.pred.len() - pairs.len()) as u64;
        c.fn_ += (fr.gt.len() - pairs.len()) as u64;
        c.gt_total += fr.gt.len() as u64;
    }
    c
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdCounts {
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

impl IdCounts {
    pub fn idf1(&self) -> f64 {
        let denom = 2 * self.idtp + self.idfp + self.idfn;
        if denom == 0 {
            return 0.0;
        }
        2.0 * self.idtp as f64 / denom as f64
    }

    fn add(&mut self, o: &IdCounts) {
        self.idtp += o.idtp;
        self.idfp += o.idfp;
        self.idfn += o.idfn;
    }
}

fn id_counts(frames: &[Frame], thresh: f64) -> IdCounts {
    let mut gt_ids = BTreeSet::new();
    let mut pred_ids = BTreeSet::new();
    let mut overlap: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    let (mut gt_total, mut pred_total) = (0u64, 0u64);
    for fr in frames {
        let sim = fr.similarity();
        gt_total += fr.gt.len() as u64;
        pred_total += fr.pred.len() as u64;
        gt_ids.extend(fr.gt.iter().map(|g| g.0));
        pred_ids.extend(fr.pred.iter().map(|p| p.0));
        for (i, (gid, _)) in fr.gt.iter().enumerate() {
            for (j, (pid, _)) in fr.pred.iter().enumerate() {
                if sim[i][j] >= thresh {
                    *overlap.entry((*gid, *pid)).or_default() += 1;
                }
            }
        }
    }
    let gt_ids: Vec<u64> = gt_ids.into_iter().collect();
    let pred_ids: Vec<u64> = pred_ids.into_iter().collect();
    let widest = overlap.values().copied().max().unwrap_or(0);
    let mut idtp = 0;
    if widest > 0 {
        let w = widest as f64;
        let cost: Vec<Vec<f64>> = gt_ids
            .iter()
            .map(|g| {
                pred_ids
                    .iter()
                    .map(|p| w - overlap.get(&(*g, *p)).copied().unwrap_or(0) as f64)
                    .collect()
            })
            .collect();
        // Objective is `const - sum(overlap)` with gate `w`, as in `max_score_matching`.
        for (i, j) in hungarian_solve(&cost, w).pairs() {
            idtp += overlap.get(&(gt_ids[i], pred_ids[j])).copied().unwrap_or(0);
        }
    }
    IdCounts {
        idtp,
        idfp: pred_total - idtp,
        idfn: gt_total - idtp,
    }
}

/// Raw HOTA tallies for one threshold. `assoc` is the sum over true positives
/// of their association score, so pooled AssA is `assoc / tp`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AlphaCounts {
    pub alpha: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub assoc: f64,
}

impl AlphaCounts {
    pub fn deta(&self) -> f64 {
        let denom = self.tp + self.fn_ + self.fp;
        if denom == 0 {
            return 0.0;
        }
        self.tp as f64 / denom as f64
    }

    pub fn assa(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        self.assoc / self.tp as f64
    }

    pub fn hota(&self) -> f64 {
        (self.deta() * self.assa()).sqrt()
    }
}

fn hota_counts(frames: &[Frame]) -> Vec<AlphaCounts> {
    // Global alignment between identities, accumulated from per-frame
    // IoU normalised against each box's competing overlaps.
    let mut gt_count: BTreeMap<u64, f64> = BTreeMap::new();
    let mut pred_count: BTreeMap<u64, f64> = BTreeMap::new();
    let mut potential: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let sims: Vec<Vec<Vec<f64>>> = frames.iter().map(Frame::similarity).collect();
    for (fr, sim) in frames.iter().zip(&sims) {
        for (gid, _) in &fr.gt {
            *gt_count.entry(*gid).or_default() += 1.0;
        }
        for (pid, _) in &fr.pred {
            *pred_count.entry(*pid).or_default() += 1.0;
        }
        let row_sum: Vec<f64> = sim.iter().map(|r| r.iter().sum()).collect();
        let col_sum: Vec<f64> = (0..fr.pred.len()).map(|j| sim.iter().map(|r| r[j]).sum()).collect();
        for (i, (gid, _)) in fr.gt.iter().enumerate() {
            for (j, (pid, _)) in fr.pred.iter().enumerate() {
                let s = sim[i][j];
                if s > 0.0 {
                    *potential.entry((*gid, *pid)).or_default() += s / (row_sum[i] + col_sum[j] - s);
                }
            }
        }
    }
    let alignment = |g: u64, p: u64| -> f64 {
        let pot = potential.get(&(g, p)).copied().unwrap_or(0.0);
        pot / (gt_count[&g] + pred_count[&p] - pot)
    };

    alphas()
        .iter()
        .map(|&alpha| {
            let mut c = AlphaCounts {
                alpha,
                ..Default::default()
            };
            let mut matches: BTreeMap<(u64, u64), f64> = BTreeMap::new();
            for (fr, sim) in frames.iter().zip(&sims) {
                let score: Vec<Vec<f64>> = fr
                    .gt
                    .iter()
                    .zip(sim)
                    .map(|((g, _), row)| fr.pred.iter().zip(row).map(|((p, _), s)| alignment(*g, *p) * s).collect())
                    .collect();
                let pairs = max_score_matching(&score, |i, j| sim[i][j] >= alpha);
                for &(i, j) in &pairs {
                    *matches.entry((fr.gt[i].0, fr.pred[j].0)).or_default() += 1.0;
                }
                c.tp += pairs.len() as u64;
                c.fn_ += (fr.gt.len() - pairs.len()) as u64;
                c.fp += (fr.pred.len() - pairs.len()) as u64;
            }
            c.assoc = matches
                .iter()
                .map(|(&(g, p), &m)| m * m / (gt_count[&g] + pred_count[&p] - m))
                .sum();
            c
        })
        .collect()
}

pub fn clear_mot<T: Scalar>(
    gt: &TrackSequence<T>,
    pred: &TrackSequence<T>,
    iou_thresh: f64,
) -> Result<ClearCounts, MetricsError> {
    Ok(clear_counts(&frames_of(gt, pred)?, iou_thresh))
}

pub fn idf1<T: Scalar>(gt: &TrackSequence<T>, pred: &TrackSequence<T>, iou_thresh: f64) -> Result<IdCounts, MetricsError> {
    Ok(id_counts(&frames_of(gt, pred)?, iou_thresh))
}

pub fn hota<T: Scalar>(gt: &TrackSequence<T>, pred: &TrackSequence<T>) -> Result<Vec<AlphaCounts>, MetricsError> {
    Ok(hota_counts(&frames_of(gt, pred)?))
}

/// Everything needed to score one sequence or to pool it with others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceCounts {
    pub clear: ClearCounts,
    pub identity: IdCounts,
    pub alphas: Vec<AlphaCounts>,
}

impl SequenceCounts {
    fn empty() -> Self {
        SequenceCounts {
            clear: ClearCounts::default(),
            identity: IdCounts::default(),
            alphas: alphas()
                .iter()
                .map(|&alpha| AlphaCounts {
                    alpha,
                    ..Default::default()
                })
                .collect(),
        }
    }

    /// Pools counts: detection and association tallies add, so HOTA of the
    /// pool is not the average of per-sequence HOTA.
    pub fn pool<'a>(items: impl IntoIterator<Item = &'a SequenceCounts>) -> SequenceCounts {
        let mut acc = SequenceCounts::empty();
        for s in items {
            acc.clear.add(&s.clear);
            acc.identity.add(&s.identity);
            for (a, b) in acc.alphas.iter_mut().zip(&s.alphas) {
                a.tp += b.tp;
                a.fp += b.fp;
                a.fn_ += b.fn_;
                a.assoc += b.assoc;
            }
        }
        acc
    }

    pub fn report(&self) -> MetricsReport {
        let n = self.alphas.len() as f64;
        let mean = |f: fn(&AlphaCounts) -> f64| self.alphas.iter().map(f).sum::<f64>() / n;
        MetricsReport {
            hota: mean(AlphaCounts::hota),
            deta: mean(AlphaCounts::deta),
            assa: mean(AlphaCounts::assa),
            mota: self.clear.mota(),
            idf1: self.identity.idf1(),
            counts: Counts {
                tp: self.clear.tp,
                fp: self.clear.fp,
                fn_: self.clear.fn_,
                idsw: self.clear.idsw,
                gt_total: self.clear.gt_total,
                idtp: self.identity.idtp,
                idfp: self.identity.idfp,
                idfn: self.identity.idfn,
            },
            per_alpha: self.alphas.iter().map(|a| (a.alpha, a.hota())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub idsw: u64,
    pub gt_total: u64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

/// Scores as fractions (1.0 is perfect). MOTA can be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub mota: f64,
    pub idf1: f64,
    pub counts: Counts,
    pub per_alpha: Vec<(f64, f64)>,
}

/// Counts for one sequence, CLEAR and identity measures at IoU 0.5.
pub fn evaluate_counts<T: Scalar>(gt: &TrackSequence<T>, pred: &TrackSequence<T>) -> Result<SequenceCounts, MetricsError> {
    let frames = frames_of(gt, pred)?;
    Ok(SequenceCounts {
        clear: clear_counts(&frames, DEFAULT_IOU_THRESH),
        identity: id_counts(&frames, DEFAULT_IOU_THRESH),
        alphas: hota_counts(&frames),
    })
}

pub fn evaluate<T: Scalar>(gt: &TrackSequence<T>, pred: &TrackSequence<T>) -> Result<MetricsReport, MetricsError> {
    Ok(evaluate_counts(gt, pred)?.report())
}

/// Per-sequence reports plus the pooled `COMBINED` report, keyed by name.
pub fn evaluate_many<T: Scalar>(
    pairs: &[(TrackSequence<T>, TrackSequence<T>)],
) -> Result<BTreeMap<String, MetricsReport>, MetricsError> {
    let mut counts: BTreeMap<String, SequenceCounts> = BTreeMap::new();
    for (gt, pred) in pairs {
        counts.insert(gt.name.clone(), evaluate_counts(gt, pred)?);
    }
    let mut out: BTreeMap<String, MetricsReport> = counts.iter().map(|(k, v)| (k.clone(), v.report())).collect();
    out.insert("COMBINED".to_string(), SequenceCounts::pool(counts.values()).report());
    Ok(out)
}
