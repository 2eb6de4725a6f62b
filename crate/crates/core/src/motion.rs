//! Constant-velocity Kalman filter over `(cx, cy, a, h)` box measurements.
//!
//! The state is `(cx, cy, a, h, vcx, vcy, va, vh)` with `a = w / h`. Process and
//! measurement noise scale with the box height; the weights live in
//! [`NoiseWeights`] so the tracker configuration can carry them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::scalar::Scalar;

pub const STATE_DIM: usize = 8;
pub const MEAS_DIM: usize = 4;

/// Heights below this are considered degenerate by [`state_to_bbox`].
pub const DEGENERATE_HEIGHT: f64 = 1e-6;
/// Height and aspect ratio in the mean are clamped to at least this value.
pub const MIN_SHAPE: f64 = 1e-3;

pub type Vec8<T> = [T; STATE_DIM];
pub type Mat8<T> = [[T; STATE_DIM]; STATE_DIM];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("degenerate state: height {height} and aspect {aspect} must exceed {DEGENERATE_HEIGHT}")]
    DegenerateState { height: f64, aspect: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseWeights<T> {
    /// Position/size std as a fraction of box height.
    pub position: T,
    /// Velocity std as a fraction of box height.
    pub velocity: T,
}

impl<T: Scalar> Default for NoiseWeights<T> {
    fn default() -> Self {
        NoiseWeights {
            position: T::lit(1.0 / 20.0),
            velocity: T::lit(1.0 / 160.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanState<T> {
    pub mean: Vec8<T>,
    pub covariance: Mat8<T>,
}

impl<T: Scalar> KalmanState<T> {
    pub fn center(&self) -> (T, T) {
        (self.mean[0], self.mean[1])
    }

    pub fn covariance_trace(&self) -> T {
        (0..STATE_DIM).fold(T::zero(), |acc, i| acc + self.covariance[i][i])
    }
}

/// Stateless filter parameterised by its noise weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanFilter<T> {
    pub weights: NoiseWeights<T>,
}

impl<T: Scalar> Default for KalmanFilter<T> {
    fn default() -> Self {
        KalmanFilter {
            weights: NoiseWeights::default(),
        }
    }
}

fn zeros<T: Scalar>() -> Mat8<T> {
    [[T::zero(); STATE_DIM]; STATE_DIM]
}

fn diag<T: Scalar>(d: &Vec8<T>) -> Mat8<T> {
    let mut m = zeros();
    for i in 0..STATE_DIM {
        m[i][i] = d[i];
    }
    m
}

fn symmetrize<T: Scalar>(m: &mut Mat8<T>) {
    for i in 0..STATE_DIM {
        for j in (i + 1)..STATE_DIM {
            let avg = (m[i][j] + m[j][i]) * T::half();
            m[i][j] = avg;
            m[j][i] = avg;
        }
    }
}

fn matmul<T: Scalar>(a: &Mat8<T>, b: &Mat8<T>) -> Mat8<T> {
    let mut out = zeros();
    for i in 0..STATE_DIM {
        for k in 0..STATE_DIM {
            let aik = a[i][k];
            if aik == T::zero() {
                continue;
            }
            for j in 0..STATE_DIM {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn transpose<T: Scalar>(a: &Mat8<T>) -> Mat8<T> {
    let mut out = zeros();
    for i in 0..STATE_DIM {
        for j in 0..STATE_DIM {
            out[j][i] = a[i][j];
        }
    }
    out
}

/// Solves `S X = B` for symmetric positive-definite 4x4 `S` via Cholesky.
/// `B` is given column-major as `MEAS_DIM` columns of length `MEAS_DIM`.
fn cholesky_solve4<T: Scalar>(s: &[[T; MEAS_DIM]; MEAS_DIM], rhs: &mut [[T; MEAS_DIM]]) {
    let mut l = [[T::zero(); MEAS_DIM]; MEAS_DIM];
    for i in 0..MEAS_DIM {
        for j in 0..=i {
            let mut sum = s[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                l[i][i] = sum.max(T::min_positive_value()).sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    for col in rhs.iter_mut() {
        for i in 0..MEAS_DIM {
            let mut sum = col[i];
            for k in 0..i {
                sum -= l[i][k] * col[k];
            }
            col[i] = sum / l[i][i];
        }
        for i in (0..MEAS_DIM).rev() {
            let mut sum = col[i];
            for k in (i + 1)..MEAS_DIM {
                sum -= l[k][i] * col[k];
            }
            col[i] = sum / l[i][i];
        }
    }
}

fn clamp_shape<T: Scalar>(mean: &mut Vec8<T>) {
    let floor = T::lit(MIN_SHAPE);
    if !(mean[2] >= floor) {
        mean[2] = floor;
    }
    if !(mean[3] >= floor) {
        mean[3] = floor;
    }
}

/// Measurement vector `(cx, cy, a, h)` for a box.
pub fn measurement<T: Scalar>(b: &BBox<T>) -> [T; MEAS_DIM] {
    let (cx, cy) = b.center();
    [cx, cy, b.w / b.h, b.h]
}

/// Inverse of the `(cx, cy, a, h)` encoding.
pub fn state_to_bbox<T: Scalar>(s: &KalmanState<T>) -> Result<BBox<T>, MotionError> {
    let [cx, cy, a, h, ..] = s.mean;
    let eps = T::lit(DEGENERATE_HEIGHT);
    if !(h > eps) || !(a > T::zero()) || !(a * h > T::zero()) {
        return Err(MotionError::DegenerateState {
            height: h.as_f64(),
            aspect: a.as_f64(),
        });
    }
    Ok(BBox::from_center(cx, cy, a * h, h))
}

impl<T: Scalar> KalmanFilter<T> {
    pub fn new(weights: NoiseWeights<T>) -> Self {
        KalmanFilter { weights }
    }

    /// Process noise diagonal (standard deviations) for a box of height `h`.
    fn process_std(&self, h: T) -> Vec8<T> {
        let p = self.weights.position * h;
        let v = self.weights.velocity * h;
        [p, p, T::lit(1e-2), p, v, v, T::lit(1e-5), v]
    }

    fn measurement_std(&self, h: T) -> [T; MEAS_DIM] {
        let p = self.weights.position * h;
        [p, p, T::lit(1e-1), p]
    }

    /// New track state from a first observation: zero velocity, height-scaled uncertainty.
    pub fn init(&self, b: &BBox<T>) -> KalmanState<T> {
        let z = measurement(b);
        let mut mean = [T::zero(); STATE_DIM];
        mean[..MEAS_DIM].copy_from_slice(&z);
        let h = b.h;
        let two = T::two();
        let ten = T::lit(10.0);
        let p = self.weights.position * h;
        let v = self.weights.velocity * h;
        let std = [
            two * p,
            two * p,
            T::lit(1e-2),
            two * p,
            ten * v,
            ten * v,
            T::lit(1e-5),
            ten * v,
        ];
        let var = std.map(|s| s * s);
        KalmanState {
            mean,
            covariance: diag(&var),
        }
    }

    /// One-frame constant-velocity prediction: `x = F x`, `P = F P F^T + Q`.
    pub fn predict(&self, s: &KalmanState<T>) -> KalmanState<T> {
        let mut mean = s.mean;
        for i in 0..MEAS_DIM {
            mean[i] += mean[i + MEAS_DIM];
        }

        let mut f = diag(&[T::one(); STATE_DIM]);
        for i in 0..MEAS_DIM {
            f[i][i + MEAS_DIM] = T::one();
        }
        let q = self.process_std(s.mean[3]).map(|x| x * x);
        let mut cov = matmul(&matmul(&f, &s.covariance), &transpose(&f));
        for i in 0..STATE_DIM {
            cov[i][i] += q[i];
        }
        symmetrize(&mut cov);
        clamp_shape(&mut mean);
        KalmanState {
            mean,
            covariance: cov,
        }
    }

    /// Kalman correction against a box measurement. Uses the Joseph form so the
    /// posterior stays symmetric positive-definite under rounding.
    pub fn update(&self, s: &KalmanState<T>, obs: &BBox<T>) -> KalmanState<T> {
        let z = measurement(obs);
        let r = self.measurement_std(s.mean[3]).map(|x| x * x);
        let p = &s.covariance;

        let mut innov_cov = [[T::zero(); MEAS_DIM]; MEAS_DIM];
        for i in 0..MEAS_DIM {
            for j in 0..MEAS_DIM {
                innov_cov[i][j] = p[i][j];
            }
            innov_cov[i][i] += r[i];
        }

        // Gain K = P H^T S^-1; solve S K^T = H P one row of K at a time.
        let mut kt: Vec<[T; MEAS_DIM]> = (0..STATE_DIM)
            .map(|row| {
                let mut c = [T::zero(); MEAS_DIM];
                c.copy_from_slice(&p[row][..MEAS_DIM]);
                c
            })
            .collect();
        cholesky_solve4(&innov_cov, &mut kt);
        let gain = kt;

        let mut innovation = [T::zero(); MEAS_DIM];
        for i in 0..MEAS_DIM {
            innovation[i] = z[i] - s.mean[i];
        }
        let mut mean = s.mean;
        for (i, m) in mean.iter_mut().enumerate() {
            for j in 0..MEAS_DIM {
                *m += gain[i][j] * innovation[j];
            }
        }

        // Joseph form: (I - KH) P (I - KH)^T + K R K^T.
        let mut ikh = diag(&[T::one(); STATE_DIM]);
        for i in 0..STATE_DIM {
            for j in 0..MEAS_DIM {
                ikh[i][j] -= gain[i][j];
            }
        }
        let mut cov = matmul(&matmul(&ikh, p), &transpose(&ikh));
        for i in 0..STATE_DIM {
            for j in 0..STATE_DIM {
                let mut krk = T::zero();
                for m in 0..MEAS_DIM {
                    krk += gain[i][m] * r[m] * gain[j][m];
                }
                cov[i][j] += krk;
            }
        }
        symmetrize(&mut cov);
        clamp_shape(&mut mean);
        KalmanState {
            mean,
            covariance: cov,
        }
    }
}
