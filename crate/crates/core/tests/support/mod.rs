//! Independent oracles shared by the integration tests and the acceptance run.
//! None of this calls into the library's geometry, assignment or metrics code.
#![allow(dead_code)]

pub mod reference;

/// Box as `[x, y, w, h]`.
pub type Rect = [f64; 4];

/// IoU and GIoU by counting grid cells (side `res`) whose centres fall in each box.
pub fn raster_iou_giou(a: Rect, b: Rect, res: f64) -> (f64, f64) {
    let x0 = a[0].min(b[0]);
    let y0 = a[1].min(b[1]);
    let x1 = (a[0] + a[2]).max(b[0] + b[2]);
    let y1 = (a[1] + a[3]).max(b[1] + b[3]);
    let nx = ((x1 - x0) / res).round() as i64;
    let ny = ((y1 - y0) / res).round() as i64;
    let inside = |r: &Rect, px: f64, py: f64| px > r[0] && px < r[0] + r[2] && py > r[1] && py < r[1] + r[3];
    let (mut inter, mut union) = (0u64, 0u64);
    for i in 0..nx {
        let px = x0 + (i as f64 + 0.5) * res;
        for j in 0..ny {
            let py = y0 + (j as f64 + 0.5) * res;
            let (ia, ib) = (inside(&a, px, py), inside(&b, px, py));
            if ia && ib {
                inter += 1;
            }
            if ia || ib {
                union += 1;
            }
        }
    }
    let hull = (nx * ny) as f64;
    let iou = inter as f64 / union as f64;
    (iou, iou - (hull - union as f64) / hull)
}

fn scalar_iou(a: Rect, b: Rect) -> f64 {
    let iw = ((a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0])).max(0.0);
    let ih = ((a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1])).max(0.0);
    let i = iw * ih;
    i / (a[2] * a[3] + b[2] * b[3] - i)
}

/// DIoU term by term from the published definition.
pub fn scalar_diou(a: Rect, b: Rect) -> f64 {
    let dx = (a[0] + a[2] / 2.0) - (b[0] + b[2] / 2.0);
    let dy = (a[1] + a[3] / 2.0) - (b[1] + b[3] / 2.0);
    let cw = (a[0] + a[2]).max(b[0] + b[2]) - a[0].min(b[0]);
    let ch = (a[1] + a[3]).max(b[1] + b[3]) - a[1].min(b[1]);
    scalar_iou(a, b) - (dx * dx + dy * dy) / (cw * cw + ch * ch)
}

/// CIoU term by term, with the aspect weight set to zero when `v = 0`.
pub fn scalar_ciou(a: Rect, b: Rect) -> f64 {
    let pi = std::f64::consts::PI;
    let v = 4.0 / (pi * pi) * ((a[2] / a[3]).atan() - (b[2] / b[3]).atan()).powi(2);
    let alpha = if v == 0.0 { 0.0 } else { v / (1.0 - scalar_iou(a, b) + v) };
    scalar_diou(a, b) - alpha * v
}

/// Minimum of `sum(matched costs) + gate * (unmatched rows + unmatched cols) / 2`
/// over all partial matchings that only use cells with `cost <= gate`.
pub fn brute_force_objective(cost: &[Vec<f64>], gate: f64) -> f64 {
    fn go(r: usize, cost: &[Vec<f64>], gate: f64, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if r == cost.len() {
            let free_cols = used.iter().filter(|u| !**u).count() as f64;
            *best = best.min(acc + gate * free_cols / 2.0);
            return;
        }
        go(r + 1, cost, gate, used, acc + gate / 2.0, best);
        for c in 0..used.len() {
            if !used[c] && cost[r][c] <= gate {
                used[c] = true;
                go(r + 1, cost, gate, used, acc + cost[r][c], best);
                used[c] = false;
            }
        }
    }
    let m = cost.first().map_or(0, Vec::len);
    let mut best = f64::INFINITY;
    go(0, cost, gate, &mut vec![false; m], 0.0, &mut best);
    best
}

/// Whether the symmetric matrix `m` admits a Cholesky factorisation with
/// strictly positive pivots.
pub fn is_positive_definite(m: &[[f64; 8]; 8]) -> bool {
    let n = 8;
    let mut l = [[0.0f64; 8]; 8];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return false;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    true
}

/// Pairs ground truth and predictions frame by frame for the reference evaluator.
pub fn ref_frames(gt: &patchtrack::TrackSequence, pred: &patchtrack::TrackSequence) -> Vec<reference::RefFrame> {
    let rect = |r: &patchtrack::TrackRow| [r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h];
    (1..=gt.frame_count)
        .map(|f| {
            (
                gt.frame(f).iter().map(|r| (r.id, rect(r))).collect(),
                pred.frame(f).iter().map(|r| (r.id, rect(r))).collect(),
            )
        })
        .collect()
}

/// Runs the tracker over a scenario and returns its output as a result sequence.
pub fn track(cfg: patchtrack::TrackerConfig, s: &patchtrack::Scenario) -> patchtrack::TrackSequence {
    let mut t = patchtrack::Tracker::new(cfg).unwrap();
    let out = t.run(s.gt.frame_count, |f| s.dets.frame(f)).unwrap();
    let mut pred = patchtrack::mot_io::SequenceData::new(s.gt.name.clone());
    for fo in &out {
        for e in &fo.entries {
            pred.push(
                fo.frame,
                patchtrack::TrackRow {
                    id: e.id,
                    bbox: e.bbox,
                    conf: e.confidence,
                    ignored: false,
                },
            );
        }
    }
    pred
}
