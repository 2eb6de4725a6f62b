//! Axis-aligned boxes and the IoU family used by both association stages.
//!
//! All scores are pure functions of two valid boxes and are symmetric in their
//! arguments. `iou` and `height_iou` live in `[0, 1]`, `giou` and `diou` in
//! `(-1, 1]`, and `ciou` in `(-1.5, 1]` (the aspect-ratio penalty can push a
//! far, mis-shaped pair below `-1`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid box: width {w} and height {h} must be finite and positive (x {x}, y {y})")]
pub struct InvalidBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Axis-aligned box in pixel coordinates: top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BBox<T> {
    /// Builds a box without validation. Callers own the `w > 0, h > 0` invariant.
    #[inline]
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        debug_assert!(w > T::zero() && h > T::zero(), "degenerate box");
        BBox { x, y, w, h }
    }

    pub fn try_new(x: T, y: T, w: T, h: T) -> Result<Self, InvalidBox> {
        let finite = x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite();
        if !finite || w <= T::zero() || h <= T::zero() {
            return Err(InvalidBox {
                x: x.as_f64(),
                y: y.as_f64(),
                w: w.as_f64(),
                h: h.as_f64(),
            });
        }
        Ok(BBox { x, y, w, h })
    }

    /// Box of the given size centred on `(cx, cy)`.
    pub fn from_center(cx: T, cy: T, w: T, h: T) -> Self {
        Self::new(cx - w * T::half(), cy - h * T::half(), w, h)
    }

    #[inline]
    pub fn x2(&self) -> T {
        self.x + self.w
    }

    #[inline]
    pub fn y2(&self) -> T {
        self.y + self.h
    }

    #[inline]
    pub fn center(&self) -> (T, T) {
        (self.x + self.w * T::half(), self.y + self.h * T::half())
    }

    #[inline]
    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn scaled(&self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.w * s, self.h * s)
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        BBox {
            x: U::lit(self.x.as_f64()),
            y: U::lit(self.y.as_f64()),
            w: U::lit(self.w.as_f64()),
            h: U::lit(self.h.as_f64()),
        }
    }
}

#[inline]
fn overlap<T: Scalar>(lo_a: T, hi_a: T, lo_b: T, hi_b: T) -> T {
    (hi_a.min(hi_b) - lo_a.max(lo_b)).max(T::zero())
}

/// Area from corners, so that identical boxes give `intersection == area` exactly.
#[inline]
fn corner_area<T: Scalar>(a: &BBox<T>) -> T {
    (a.x2() - a.x) * (a.y2() - a.y)
}

#[inline]
fn intersection<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    overlap(a.x, a.x2(), b.x, b.x2()) * overlap(a.y, a.y2(), b.y, b.y2())
}

/// Smallest box enclosing both inputs, as `(width, height)`.
#[inline]
fn hull_size<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> (T, T) {
    (
        a.x2().max(b.x2()) - a.x.min(b.x),
        a.y2().max(b.y2()) - a.y.min(b.y),
    )
}

/// Intersection over union. `0` for disjoint boxes.
pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let inter = intersection(a, b);
    if inter <= T::zero() {
        return T::zero();
    }
    inter / (corner_area(a) + corner_area(b) - inter)
}

/// Generalized IoU: `iou - |hull \ union| / |hull|`.
pub fn giou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let inter = intersection(a, b);
    let union = corner_area(a) + corner_area(b) - inter;
    let (hw, hh) = hull_size(a, b);
    let hull = hw * hh;
    inter / union - (hull - union) / hull
}

/// Squared centre distance over squared hull diagonal; the DIoU penalty.
fn center_penalty<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let (acx, acy) = a.center();
    let (bcx, bcy) = b.center();
    let rho2 = (acx - bcx).powi(2) + (acy - bcy).powi(2);
    let (hw, hh) = hull_size(a, b);
    rho2 / (hw * hw + hh * hh)
}

/// Distance IoU: `iou - rho^2 / c^2` with `c` the hull diagonal.
pub fn diou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    iou(a, b) - center_penalty(a, b)
}

/// Complete IoU: DIoU minus the aspect-ratio consistency term `alpha * v`.
///
/// `alpha` is treated as a constant and is `0` whenever `v == 0`.
pub fn ciou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let overlap = iou(a, b);
    let diff = (a.w / a.h).atan() - (b.w / b.h).atan();
    let v = T::lit(4.0) / (T::PI() * T::PI()) * diff * diff;
    let alpha = if v == T::zero() {
        T::zero()
    } else {
        v / ((T::one() - overlap) + v)
    };
    overlap - center_penalty(a, b) - alpha * v
}

/// IoU of the vertical extents only; horizontal coordinates are ignored.
pub fn height_iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let inter = overlap(a.y, a.y2(), b.y, b.y2());
    if inter <= T::zero() {
        return T::zero();
    }
    inter / (a.y2().max(b.y2()) - a.y.min(b.y))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown {what} `{value}` (expected one of: {expected})")]
pub struct UnknownKind {
    pub what: &'static str,
    pub value: String,
    pub expected: &'static str,
}

/// Overlap score used by the patching stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouKind {
    Iou,
    Giou,
    Diou,
    Ciou,
}

impl IouKind {
    pub const ALL: [IouKind; 4] = [IouKind::Iou, IouKind::Giou, IouKind::Diou, IouKind::Ciou];

    pub fn score<T: Scalar>(self, a: &BBox<T>, b: &BBox<T>) -> T {
        match self {
            IouKind::Iou => iou(a, b),
            IouKind::Giou => giou(a, b),
            IouKind::Diou => diou(a, b),
            IouKind::Ciou => ciou(a, b),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IouKind::Iou => "iou",
            IouKind::Giou => "giou",
            IouKind::Diou => "diou",
            IouKind::Ciou => "ciou",
        }
    }
}

impl fmt::Display for IouKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IouKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "iou" => Ok(IouKind::Iou),
            "giou" => Ok(IouKind::Giou),
            "diou" => Ok(IouKind::Diou),
            "ciou" => Ok(IouKind::Ciou),
            _ => Err(UnknownKind {
                what: "iou kind",
                value: s.to_string(),
                expected: "iou, giou, diou, ciou",
            }),
        }
    }
}

/// Which overlap drives the first-stage cost matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CostKind {
    #[serde(rename = "area")]
    AreaIou,
    #[serde(rename = "height")]
    HeightIou,
}

impl CostKind {
    pub const ALL: [CostKind; 2] = [CostKind::AreaIou, CostKind::HeightIou];

    pub fn similarity<T: Scalar>(self, a: &BBox<T>, b: &BBox<T>) -> T {
        match self {
            CostKind::AreaIou => iou(a, b),
            CostKind::HeightIou => height_iou(a, b),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CostKind::AreaIou => "area",
            CostKind::HeightIou => "height",
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CostKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "area" => Ok(CostKind::AreaIou),
            "height" => Ok(CostKind::HeightIou),
            _ => Err(UnknownKind {
                what: "cost kind",
                value: s.to_string(),
                expected: "area, height",
            }),
        }
    }
}

/// `cost[i][j] = 1 - similarity(rows[i], cols[j])`, shape `rows.len() x cols.len()`.
pub fn build_cost_matrix<T: Scalar>(rows: &[BBox<T>], cols: &[BBox<T>], kind: CostKind) -> Vec<Vec<T>> {
    rows.iter()
        .map(|r| cols.iter().map(|c| T::one() - kind.similarity(r, c)).collect())
        .collect()
}
