//! Two-stage association pipeline.
//!
//! Each frame the tracker predicts every live track, splits detections into a
//! high- and a low-score set, matches high boxes with a gated Hungarian solve on
//! the configured cost matrix, lets trusted unmatched tracks claim low boxes by
//! best overlap with their last observation ("patching"), and keeps trusted
//! tracks that are still unmatched alive for a few frames on their own
//! predictions (pseudo-observations).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{greedy_best_iou, hungarian_solve, Assignment};
use crate::geometry::{build_cost_matrix, BBox, CostKind, IouKind};
use crate::motion::{state_to_bbox, KalmanFilter, KalmanState, NoiseWeights};
use crate::scalar::Scalar;

/// A scored box observed at a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection<T> {
    pub frame: u32,
    pub bbox: BBox<T>,
    pub score: T,
}

impl<T: Scalar> Detection<T> {
    pub fn new(frame: u32, bbox: BBox<T>, score: T) -> Self {
        Detection { frame, bbox, score }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track<T> {
    pub id: u64,
    pub state: KalmanState<T>,
    /// Most recent box the track was updated with (a pseudo-box while coasting).
    pub last_observation: BBox<T>,
    /// Consecutive frames survived on pseudo-observations.
    pub pseudo_count: u32,
    /// Score of the most recent real detection matched to this track.
    pub confidence: T,
    pub hits: u32,
    pub misses: u32,
    pub status: TrackStatus,
}

impl<T: Scalar> Track<T> {
    /// Current box from the filter state, falling back to the last observation
    /// if the state has degenerated.
    pub fn bbox(&self) -> BBox<T> {
        state_to_bbox(&self.state).unwrap_or(self.last_observation)
    }

    pub fn is_trusted(&self, cfg: &TrackerConfig<T>) -> bool {
        self.confidence >= cfg.tau_trust
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("thresholds must satisfy 0 <= tau_low < tau_high <= 1 (got tau_low {low}, tau_high {high})")]
    ScoreThresholds { low: f64, high: f64 },
    #[error("match_gate must be finite and positive (got {0})")]
    MatchGate(f64),
    #[error("tau_trust must lie in [0, 1] (got {0})")]
    Trust(f64),
    #[error("patch_min must not be NaN")]
    PatchMin,
    #[error("min_hits must be at least 1")]
    MinHits,
    #[error("max_age must be at least 1")]
    MaxAge,
    #[error("noise weights must be finite and positive")]
    Noise,
}

/// Every threshold and selector of the tracker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig<T> {
    /// Detections at or above this score drive the first stage and may spawn tracks.
    pub tau_high: T,
    /// Detections below this score are discarded.
    pub tau_low: T,
    /// First-stage cost ceiling; costs above it are forbidden edges.
    pub match_gate: T,
    pub cost_kind: CostKind,
    pub patch_iou_kind: IouKind,
    /// Minimum patching score on the selected kind's native scale. Values above
    /// 1 disable the patching stage.
    pub patch_min: T,
    /// Tracks whose confidence is below this neither patch nor coast.
    pub tau_trust: T,
    pub pseudo_ttl: u32,
    pub min_hits: u32,
    pub max_age: u32,
    pub noise: NoiseWeights<T>,
}

impl<T: Scalar> Default for TrackerConfig<T> {
    fn default() -> Self {
        TrackerConfig {
            tau_high: T::lit(0.6),
            tau_low: T::lit(0.1),
            match_gate: T::lit(0.8),
            cost_kind: CostKind::HeightIou,
            patch_iou_kind: IouKind::Ciou,
            patch_min: T::lit(0.3),
            tau_trust: T::lit(0.5),
            pseudo_ttl: 3,
            min_hits: 3,
            max_age: 30,
            noise: NoiseWeights::default(),
        }
    }
}

impl<T: Scalar> TrackerConfig<T> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let (low, high) = (self.tau_low, self.tau_high);
        if !(low >= T::zero() && low < high && high <= T::one()) {
            return Err(ConfigError::ScoreThresholds {
                low: low.as_f64(),
                high: high.as_f64(),
            });
        }
        if !(self.match_gate.is_finite() && self.match_gate > T::zero()) {
            return Err(ConfigError::MatchGate(self.match_gate.as_f64()));
        }
        if !(self.tau_trust >= T::zero() && self.tau_trust <= T::one()) {
            return Err(ConfigError::Trust(self.tau_trust.as_f64()));
        }
        if self.patch_min.is_nan() {
            return Err(ConfigError::PatchMin);
        }
        if self.min_hits < 1 {
            return Err(ConfigError::MinHits);
        }
        if self.max_age < 1 {
            return Err(ConfigError::MaxAge);
        }
        let w = self.noise;
        let ok = |v: T| v.is_finite() && v > T::zero();
        if !(ok(w.position) && ok(w.velocity)) {
            return Err(ConfigError::Noise);
        }
        Ok(())
    }

    /// Patching can claim a box only if `patch_min` is reachable (every kind peaks at 1).
    pub fn patching_enabled(&self) -> bool {
        self.patch_min <= T::one()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("frame {got} does not follow frame {previous}")]
    NonMonotonicFrame { previous: u32, got: u32 },
    #[error("detection for frame {got} passed to step for frame {expected}")]
    FrameMismatch { expected: u32, got: u32 },
    #[error("detection score {score} outside [0, 1] at frame {frame}")]
    InvalidScore { frame: u32, score: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput<T> {
    pub id: u64,
    pub bbox: BBox<T>,
    pub confidence: T,
}

/// Confirmed tracks reported for one frame, sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOutput<T> {
    pub frame: u32,
    pub entries: Vec<TrackOutput<T>>,
}

/// What happened inside the last [`Tracker::step`], for inspection and tests.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepTrace<T> {
    pub high: Vec<Detection<T>>,
    pub low: Vec<Detection<T>>,
    /// `(track id, detection)` matched by the Hungarian stage.
    pub first_stage: Vec<(u64, Detection<T>)>,
    /// `(track id, detection)` claimed by patching.
    pub patched: Vec<(u64, Detection<T>)>,
    /// Tracks that coasted on a pseudo-observation.
    pub pseudo: Vec<u64>,
    pub spawned: Vec<u64>,
    pub removed: Vec<u64>,
}

/// Partitions one frame's detections into `(high, low)`, dropping those below
/// `tau_low`. The high boundary is inclusive. Order is preserved.
pub fn split_by_score<T: Scalar>(
    dets: &[Detection<T>],
    cfg: &TrackerConfig<T>,
) -> (Vec<Detection<T>>, Vec<Detection<T>>) {
    let high = dets.iter().filter(|d| d.score >= cfg.tau_high).copied().collect();
    let low = dets
        .iter()
        .filter(|d| d.score >= cfg.tau_low && d.score < cfg.tau_high)
        .copied()
        .collect();
    (high, low)
}

/// Hungarian matching of (already predicted) tracks against high-score detections.
pub fn first_association<T: Scalar>(
    tracks: &[Track<T>],
    high: &[Detection<T>],
    cfg: &TrackerConfig<T>,
) -> Assignment<T> {
    let rows: Vec<BBox<T>> = tracks.iter().map(Track::bbox).collect();
    let cols: Vec<BBox<T>> = high.iter().map(|d| d.bbox).collect();
    if rows.is_empty() || cols.is_empty() {
        return Assignment::unmatched(rows.len(), cols.len());
    }
    hungarian_solve(&build_cost_matrix(&rows, &cols, cfg.cost_kind), cfg.match_gate)
}

/// Trajectory-based patching: trusted tracks, in descending confidence (ties by
/// ascending id), each claim the remaining low box that best overlaps their last
/// observation, if that score reaches `patch_min`.
///
/// Returns `(index into tracks, index into low)` pairs in claim order.
pub fn patch_association<T: Scalar>(
    tracks: &[&Track<T>],
    low: &[Detection<T>],
    cfg: &TrackerConfig<T>,
) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..tracks.len())
        .filter(|&i| tracks[i].is_trusted(cfg))
        .collect();
    order.sort_by(|&a, &b| {
        tracks[b]
            .confidence
            .partial_cmp(&tracks[a].confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(tracks[a].id.cmp(&tracks[b].id))
    });

    // Pool of unclaimed low boxes, kept in original order.
    let mut pool: Vec<usize> = (0..low.len()).collect();
    let mut claims = Vec::new();
    for ti in order {
        if pool.is_empty() {
            break;
        }
        let boxes: Vec<BBox<T>> = pool.iter().map(|&d| low[d].bbox).collect();
        if let Some(k) = greedy_best_iou(
            &tracks[ti].last_observation,
            &boxes,
            cfg.patch_iou_kind,
            cfg.patch_min,
        ) {
            claims.push((ti, pool.remove(k)));
        }
    }
    claims
}

/// Coasts an unmatched trusted track on its own prediction while its pseudo
/// budget lasts. Returns whether the track is reported this frame.
pub fn retain_pseudo_observation<T: Scalar>(
    track: &mut Track<T>,
    kf: &KalmanFilter<T>,
    cfg: &TrackerConfig<T>,
) -> bool {
    if track.pseudo_count < cfg.pseudo_ttl {
        let pseudo = track.bbox();
        track.state = kf.update(&track.state, &pseudo);
        track.last_observation = pseudo;
        track.pseudo_count += 1;
        true
    } else {
        track.misses += 1;
        track.hits = 0;
        false
    }
}

/// Sequential per-sequence tracker state.
#[derive(Debug, Clone)]
pub struct Tracker<T> {
    cfg: TrackerConfig<T>,
    kf: KalmanFilter<T>,
    tracks: Vec<Track<T>>,
    next_id: u64,
    last_frame: Option<u32>,
    trace: StepTrace<T>,
}

impl<T: Scalar> Tracker<T> {
    pub fn new(cfg: TrackerConfig<T>) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Tracker {
            kf: KalmanFilter::new(cfg.noise),
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            trace: StepTrace::default(),
        })
    }

    pub fn config(&self) -> &TrackerConfig<T> {
        &self.cfg
    }

    /// Live (non-removed) tracks, ordered by id.
    pub fn tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    pub fn last_trace(&self) -> &StepTrace<T> {
        &self.trace
    }

    /// Advances the tracker by one frame. `frame` must be strictly greater than
    /// the previous call's and every detection must carry it.
    pub fn step(&mut self, frame: u32, dets: &[Detection<T>]) -> Result<FrameOutput<T>, TrackError> {
        if let Some(previous) = self.last_frame {
            if frame <= previous {
                return Err(TrackError::NonMonotonicFrame { previous, got: frame });
            }
        }
        for d in dets {
            if d.frame != frame {
                return Err(TrackError::FrameMismatch {
                    expected: frame,
                    got: d.frame,
                });
            }
            if !(d.score >= T::zero() && d.score <= T::one()) {
                return Err(TrackError::InvalidScore {
                    frame,
                    score: d.score.as_f64(),
                });
            }
        }
        self.last_frame = Some(frame);
        let cfg = self.cfg;
        let mut trace = StepTrace::default();

        for t in &mut self.tracks {
            t.state = self.kf.predict(&t.state);
        }

        let (high, low) = split_by_score(dets, &cfg);

        let first = first_association(&self.tracks, &high, &cfg);
        let mut matched: Vec<Option<Detection<T>>> = vec![None; self.tracks.len()];
        for m in &first.matches {
            matched[m.row] = Some(high[m.col]);
            trace.first_stage.push((self.tracks[m.row].id, high[m.col]));
        }

        let leftover: Vec<usize> = first.unmatched_rows.clone();
        let leftover_refs: Vec<&Track<T>> = leftover.iter().map(|&i| &self.tracks[i]).collect();
        for (k, d) in patch_association(&leftover_refs, &low, &cfg) {
            let ti = leftover[k];
            matched[ti] = Some(low[d]);
            trace.patched.push((self.tracks[ti].id, low[d]));
        }

        let mut active = vec![false; self.tracks.len()];
        for (ti, t) in self.tracks.iter_mut().enumerate() {
            if let Some(det) = matched[ti] {
                t.state = self.kf.update(&t.state, &det.bbox);
                t.last_observation = det.bbox;
                t.confidence = det.score;
                t.hits += 1;
                t.misses = 0;
                t.pseudo_count = 0;
                active[ti] = true;
            } else if t.is_trusted(&cfg) {
                active[ti] = retain_pseudo_observation(t, &self.kf, &cfg);
                if active[ti] {
                    trace.pseudo.push(t.id);
                }
            } else {
                t.misses += 1;
                t.hits = 0;
            }

            if t.status == TrackStatus::Tentative && t.hits >= cfg.min_hits {
                t.status = TrackStatus::Confirmed;
            }
            if t.misses > cfg.max_age {
                t.status = TrackStatus::Removed;
                trace.removed.push(t.id);
            }
        }

        let mut entries: Vec<TrackOutput<T>> = self
            .tracks
            .iter()
            .zip(&active)
            .filter(|(t, &a)| a && t.status == TrackStatus::Confirmed)
            .map(|(t, _)| TrackOutput {
                id: t.id,
                bbox: t.bbox(),
                confidence: t.confidence,
            })
            .collect();
        self.tracks.retain(|t| t.status != TrackStatus::Removed);

        for &col in &first.unmatched_cols {
            let det = high[col];
            let id = self.next_id;
            self.next_id += 1;
            let status = if cfg.min_hits <= 1 {
                TrackStatus::Confirmed
            } else {
                TrackStatus::Tentative
            };
            let track = Track {
                id,
                state: self.kf.init(&det.bbox),
                last_observation: det.bbox,
                pseudo_count: 0,
                confidence: det.score,
                hits: 1,
                misses: 0,
                status,
            };
            if status == TrackStatus::Confirmed {
                entries.push(TrackOutput {
                    id,
                    bbox: track.bbox(),
                    confidence: det.score,
                });
            }
            self.tracks.push(track);
            trace.spawned.push(id);
        }
        entries.sort_by_key(|e| e.id);

        trace.high = high;
        trace.low = low;
        self.trace = trace;
        Ok(FrameOutput { frame, entries })
    }

    /// Runs frames `1..=last_frame` in order, feeding each its detections (possibly none).
    pub fn run<'a, I>(&mut self, last_frame: u32, mut dets_for: I) -> Result<Vec<FrameOutput<T>>, TrackError>
    where
        I: FnMut(u32) -> &'a [Detection<T>],
        T: 'a,
    {
        (1..=last_frame).map(|f| self.step(f, dets_for(f))).collect()
    }
}
