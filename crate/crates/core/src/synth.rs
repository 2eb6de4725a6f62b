//! Deterministic synthetic scenes: ground truth plus noisy, occlusion-faded detections.
//!
//! Randomness comes from xoshiro256** seeded through SplitMix64
//! (`Xoshiro256StarStar::seed_from_u64`). Every draw goes through the helpers
//! below, in a fixed order, so a seed pins the output byte for byte:
//!
//! * uniform: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`
//! * Gaussian: Box–Muller, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`, one value per pair
//! * Poisson: Knuth's multiplication method
//!
//! Per target, at set-up: `cx, cy` uniform inside the arena (`cy` is then
//! overridden for [`Layout::Rows`]), then a velocity.
//! Per frame: ground truth for every target, then per target four Gaussian
//! draws (x, y, w, h noise), then the false-positive count and per false
//! positive `cx, cy, score`, then per target one uniform deciding whether its
//! velocity segment ends (probability `1 / segment_len`, followed by a fresh
//! velocity draw when it does).

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BBox};
use crate::mot_io::{DetSequence, SequenceData, TrackRow, TrackSequence};
use crate::scalar::Scalar;
use crate::tracker::Detection;

/// Detection score of a fully visible target.
pub const VISIBLE_SCORE: f64 = 0.95;
/// Overlap with a nearer target above which a target counts as occluded.
pub const OCCLUSION_IOU: f64 = 0.3;
/// Score band of spurious detections.
pub const FP_SCORE_RANGE: (f64, f64) = (0.1, 0.5);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Initial placement of targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Uniform over the arena.
    Free,
    /// Target `i` starts on the `i`-th of `n_targets` evenly spaced depth rows
    /// (bottom row nearest the camera), `cx` uniform, like a stage formation.
    Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// `(width, height)` in pixels.
    pub arena: (f64, f64),
    pub n_targets: u32,
    pub n_frames: u32,
    pub base_height: f64,
    /// Height grows as `base_height * (1 + perspective_gain * cy / arena.1)`.
    pub perspective_gain: f64,
    pub noise_std: f64,
    /// Score lost per consecutive occluded frame.
    pub occlusion_decay: f64,
    /// Expected spurious detections per frame.
    pub fp_rate: f64,
    /// Detections scoring below this are dropped.
    pub miss_score: f64,
    pub seed: u64,
    /// Mean horizontal speed in px/frame.
    pub speed: f64,
    /// Vertical speed bound as a fraction of the horizontal speed.
    pub vertical_ratio: f64,
    /// Mean length in frames of a constant-velocity segment.
    pub segment_len: f64,
    /// Box width over height.
    pub aspect: f64,
    pub layout: Layout,
    pub name: String,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            arena: (1280.0, 720.0),
            n_targets: 5,
            n_frames: 100,
            base_height: 120.0,
            perspective_gain: 0.5,
            noise_std: 1.0,
            occlusion_decay: 0.1,
            fp_rate: 0.5,
            miss_score: 0.25,
            seed: 0,
            speed: 4.0,
            vertical_ratio: 0.25,
            segment_len: 40.0,
            aspect: 0.4,
            layout: Layout::Free,
            name: "synth".to_string(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        let (w, h) = self.arena;
        let finite = [
            w,
            h,
            self.base_height,
            self.perspective_gain,
            self.noise_std,
            self.occlusion_decay,
            self.fp_rate,
            self.miss_score,
            self.speed,
            self.vertical_ratio,
            self.segment_len,
            self.aspect,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all numeric fields must be finite");
        }
        if self.n_targets == 0 || self.n_frames == 0 {
            return bad("n_targets and n_frames must be positive");
        }
        if !(self.base_height > 0.0) || !(self.aspect > 0.0) || self.perspective_gain < 0.0 {
            return bad("base_height and aspect must be positive, perspective_gain non-negative");
        }
        let tallest = self.base_height * (1.0 + self.perspective_gain);
        if tallest >= h || tallest * self.aspect >= w {
            return bad("the largest target box must fit inside the arena");
        }
        if !(0.0..=1.0).contains(&self.occlusion_decay) {
            return bad("occlusion_decay must lie in [0, 1]");
        }
        if self.noise_std < 0.0 || self.fp_rate < 0.0 || self.speed < 0.0 {
            return bad("noise_std, fp_rate and speed must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.vertical_ratio) {
            return bad("vertical_ratio must lie in [0, 1]");
        }
        if !(self.segment_len >= 1.0) {
            return bad("segment_len must be at least 1");
        }
        Ok(())
    }

    /// Range of `cy` for which the whole box fits vertically.
    fn depth_band(&self) -> (f64, f64) {
        let k = self.base_height * self.perspective_gain / (2.0 * self.arena.1);
        let lo = self.base_height / 2.0 / (1.0 - k);
        let hi = (self.arena.1 - self.base_height / 2.0) / (1.0 + k);
        (lo, hi)
    }

    fn height_at(&self, cy: f64) -> f64 {
        self.base_height * (1.0 + self.perspective_gain * cy / self.arena.1)
    }
}

/// The pinned random source.
#[derive(Debug, Clone)]
pub struct SynthRng(Xoshiro256StarStar);

impl SynthRng {
    pub fn new(seed: u64) -> Self {
        SynthRng(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn poisson(&mut self, lambda: f64) -> u32 {
        if lambda <= 0.0 {
            return 0;
        }
        let limit = (-lambda).exp();
        let mut k = 0;
        let mut p = self.uniform();
        while p > limit {
            k += 1;
            p *= self.uniform();
        }
        k
    }
}

#[derive(Debug, Clone, Copy)]
struct Target {
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    occluded_run: u32,
}

fn draw_velocity(rng: &mut SynthRng, cfg: &ScenarioConfig) -> (f64, f64) {
    let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
    let vx = sign * cfg.speed * rng.range(0.5, 1.5);
    let vy = vx.abs() * cfg.vertical_ratio * rng.range(-1.0, 1.0);
    (vx, vy)
}

/// Reflects `v` into `[lo, hi]`, flipping `vel` when a wall is hit.
fn reflect(v: &mut f64, vel: &mut f64, lo: f64, hi: f64) {
    if hi <= lo {
        *v = 0.5 * (lo + hi);
        return;
    }
    for _ in 0..4 {
        if *v < lo {
            *v = 2.0 * lo - *v;
            *vel = vel.abs();
        } else if *v > hi {
            *v = 2.0 * hi - *v;
            *vel = -vel.abs();
        } else {
            return;
        }
    }
    *v = v.clamp(lo, hi);
}

impl Target {
    fn bbox(&self, cfg: &ScenarioConfig) -> BBox<f64> {
        let h = cfg.height_at(self.cy);
        BBox::from_center(self.cx, self.cy, h * cfg.aspect, h)
    }

    /// Keeps the whole box inside the arena for the current height.
    fn confine(&mut self, cfg: &ScenarioConfig) {
        let (aw, ah) = cfg.arena;
        let h = cfg.height_at(self.cy);
        reflect(&mut self.cy, &mut self.vy, h / 2.0, ah - h / 2.0);
        let h = cfg.height_at(self.cy);
        // Height depends on cy, so a final clamp absorbs the feedback.
        self.cy = self.cy.clamp(h / 2.0, ah - h / 2.0);
        let w = h * cfg.aspect;
        reflect(&mut self.cx, &mut self.vx, w / 2.0, aw - w / 2.0);
    }
}

/// Ground truth and detections for a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub gt: TrackSequence<T>,
    pub dets: DetSequence<T>,
}

fn gt_row<T: Scalar>(id: u64, b: &BBox<f64>) -> TrackRow<T> {
    TrackRow {
        id,
        bbox: b.cast(),
        conf: T::one(),
        ignored: false,
    }
}

pub fn generate<T: Scalar>(cfg: &ScenarioConfig) -> Result<Scenario<T>, ScenarioError> {
    cfg.validate()?;
    let mut rng = SynthRng::new(cfg.seed);
    let (aw, ah) = cfg.arena;
    let mut targets: Vec<Target> = (0..cfg.n_targets)
        .map(|i| {
            let cx = rng.range(0.0, aw);
            let cy = rng.range(0.0, ah);
            let cy = match cfg.layout {
                Layout::Free => cy,
                Layout::Rows => {
                    let (lo, hi) = cfg.depth_band();
                    lo + (i as f64 + 0.5) / cfg.n_targets as f64 * (hi - lo)
                }
            };
            let (vx, vy) = draw_velocity(&mut rng, cfg);
            let mut t = Target {
                cx,
                cy,
                vx,
                vy,
                occluded_run: 0,
            };
            t.confine(cfg);
            t
        })
        .collect();

    let mut gt = SequenceData::new(cfg.name.clone());
    let mut dets = SequenceData::new(cfg.name.clone());
    for frame in 1..=cfg.n_frames {
        let boxes: Vec<BBox<f64>> = targets.iter().map(|t| t.bbox(cfg)).collect();
        for (i, b) in boxes.iter().enumerate() {
            gt.push(frame, gt_row::<T>(i as u64 + 1, b));
        }
        for i in 0..targets.len() {
            let occluded = (0..targets.len())
                .any(|j| j != i && targets[j].cy > targets[i].cy && iou(&boxes[i], &boxes[j]) > OCCLUSION_IOU);
            let t = &mut targets[i];
            t.occluded_run = if occluded { t.occluded_run + 1 } else { 0 };
            let score = (VISIBLE_SCORE - cfg.occlusion_decay * t.occluded_run as f64).max(0.0);
            let b = boxes[i];
            let noise: [f64; 4] = std::array::from_fn(|_| cfg.noise_std * rng.gaussian());
            if score < cfg.miss_score {
                continue;
            }
            let nb = BBox::new(b.x + noise[0], b.y + noise[1], (b.w + noise[2]).max(1.0), (b.h + noise[3]).max(1.0));
            dets.push(frame, Detection::new(frame, nb.cast(), T::lit(score)));
        }
        for _ in 0..rng.poisson(cfg.fp_rate) {
            let cx = rng.range(0.0, aw);
            let cy = rng.range(0.0, ah);
            let score = rng.range(FP_SCORE_RANGE.0, FP_SCORE_RANGE.1);
            let h = cfg.height_at(cy);
            let b = BBox::from_center(cx, cy, h * cfg.aspect, h);
            dets.push(frame, Detection::new(frame, b.cast(), T::lit(score)));
        }
        for t in &mut targets {
            if rng.uniform() < 1.0 / cfg.segment_len {
                (t.vx, t.vy) = draw_velocity(&mut rng, cfg);
            }
            t.cx += t.vx;
            t.cy += t.vy;
            t.confine(cfg);
        }
    }
    // Frames after the last detection still count toward the sequence length.
    dets.frame_count = cfg.n_frames;
    Ok(Scenario { gt, dets })
}

/// Frames of the crossing fixture.
pub const FIXTURE_FRAMES: u32 = 40;
/// First frame of the occluded target's score dip.
pub const FIXTURE_DIP_START: u32 = 11;
/// Scores of the occluded target over the dip, one per frame from
/// [`FIXTURE_DIP_START`]; the minimum sits at the central frame.
pub const FIXTURE_DIP: [f64; 10] = [0.84, 0.76, 0.68, 0.58, 0.52, 0.3, 0.52, 0.58, 0.68, 0.84];
const FIXTURE_SCORE: f64 = 0.9;
/// Frame from which the short target stands still.
pub const FIXTURE_HALT: u32 = 12;

/// Closed-form fixture trajectories: `(tall, short)` boxes at `frame`.
///
/// The tall target (vertical extent `[0, 100]`) walks right at 4 px/frame. The
/// short one (`[40, 70]`) walks left at 6 px/frame behind it and halts at
/// `x = 116` from frame 14 while hidden.
pub fn fixture_boxes(frame: u32) -> (BBox<f64>, BBox<f64>) {
    let t = frame as f64;
    let tall = BBox::new(60.0 + 4.0 * (t - 1.0), 0.0, 40.0, 100.0);
    let stop = FIXTURE_HALT as f64;
    let short_x = if t < stop { 116.0 + 6.0 * (stop - t) } else { 116.0 };
    (tall, BBox::new(short_x, 40.0, 24.0, 30.0))
}

pub fn fixture_score(frame: u32) -> f64 {
    frame
        .checked_sub(FIXTURE_DIP_START)
        .and_then(|k| FIXTURE_DIP.get(k as usize))
        .copied()
        .unwrap_or(FIXTURE_SCORE)
}

/// Two targets of different heights crossing, the short one fading while hidden.
/// Ground-truth ids are 1 (tall) and 2 (short); detections are exact boxes.
pub fn crossing_fixture<T: Scalar>() -> Scenario<T> {
    let mut gt = SequenceData::new("crossing");
    let mut dets = SequenceData::new("crossing");
    for frame in 1..=FIXTURE_FRAMES {
        let (tall, short) = fixture_boxes(frame);
        gt.push(frame, gt_row::<T>(1, &tall));
        gt.push(frame, gt_row::<T>(2, &short));
        dets.push(frame, Detection::new(frame, tall.cast(), T::lit(FIXTURE_SCORE)));
        dets.push(frame, Detection::new(frame, short.cast(), T::lit(fixture_score(frame))));
    }
    Scenario { gt, dets }
}
