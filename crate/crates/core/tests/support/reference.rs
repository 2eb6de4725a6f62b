//! Reference CLEAR-MOT / IDF1 / HOTA evaluator built on `pathfinding`'s
//! Kuhn–Munkres solver with integer weights.

use std::collections::HashMap;

use pathfinding::prelude::{kuhn_munkres, Matrix};

use super::Rect;

/// One frame: ground-truth and predicted `(id, box)` lists.
pub type RefFrame = (Vec<(u64, Rect)>, Vec<(u64, Rect)>);

#[derive(Debug, Clone, Copy)]
pub struct RefScores {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub mota: f64,
    pub idf1: f64,
    pub idsw: u64,
}

const SCALE: f64 = 1e12;

fn area_iou(a: &Rect, b: &Rect) -> f64 {
    let ix = ((a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0])).max(0.0);
    let iy = ((a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1])).max(0.0);
    let i = ix * iy;
    if i == 0.0 {
        return 0.0;
    }
    i / (a[2] * a[3] + b[2] * b[3] - i)
}

/// Maximum-weight matching; `None` weights are forbidden. Returns `(row, col)` pairs.
fn max_weight(w: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    let n = w.len();
    let m = w.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Vec::new();
    }
    // Square padding; a forbidden or padded cell weighs 0, i.e. "unmatched".
    let k = n.max(m);
    let mut data = vec![0i64; k * k];
    for i in 0..n {
        for j in 0..m {
            if let Some(v) = w[i][j] {
                data[i * k + j] = (v * SCALE).round() as i64;
            }
        }
    }
    let mat = Matrix::from_vec(k, k, data).unwrap();
    let (_, assign) = kuhn_munkres(&mat);
    assign
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i < n && j < m && w[i][j].is_some_and(|v| v > 0.0))
        .collect()
}

pub fn evaluate(frames: &[RefFrame]) -> RefScores {
    let sims: Vec<Vec<Vec<f64>>> = frames
        .iter()
        .map(|(g, p)| g.iter().map(|(_, gb)| p.iter().map(|(_, pb)| area_iou(gb, pb)).collect()).collect())
        .collect();
    let gt_total: usize = frames.iter().map(|f| f.0.len()).sum();
    let pred_total: usize = frames.iter().map(|f| f.1.len()).sum();

    // CLEAR: keep last frame's pairs that still clear 0.5, then match the rest.
    let (mut fp, mut fnn, mut idsw) = (0usize, 0usize, 0u64);
    let mut prev: HashMap<u64, u64> = HashMap::new();
    let mut last: HashMap<u64, u64> = HashMap::new();
    for ((g, p), sim) in frames.iter().zip(&sims) {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        let mut g_taken = vec![false; g.len()];
        let mut p_taken = vec![false; p.len()];
        for (i, (gid, _)) in g.iter().enumerate() {
            if let Some(pid) = prev.get(gid) {
                if let Some(j) = p.iter().position(|(q, _)| q == pid) {
                    if sim[i][j] >= 0.5 && !p_taken[j] {
                        g_taken[i] = true;
                        p_taken[j] = true;
                        pairs.push((i, j));
                    }
                }
            }
        }
        let w: Vec<Vec<Option<f64>>> = (0..g.len())
            .map(|i| {
                (0..p.len())
                    .map(|j| (!g_taken[i] && !p_taken[j] && sim[i][j] >= 0.5).then_some(sim[i][j]))
                    .collect()
            })
            .collect();
        pairs.extend(max_weight(&w));
        prev.clear();
        for &(i, j) in &pairs {
            let (gid, pid) = (g[i].0, p[j].0);
            if last.get(&gid).is_some_and(|&q| q != pid) {
                idsw += 1;
            }
            last.insert(gid, pid);
            prev.insert(gid, pid);
        }
        fp += p.len() - pairs.len();
        fnn += g.len() - pairs.len();
    }
    let mota = 1.0 - (fp + fnn) as f64 / gt_total as f64 - idsw as f64 / gt_total as f64;

    // Identity measures over id pairs.
    let mut gids: Vec<u64> = frames.iter().flat_map(|f| f.0.iter().map(|x| x.0)).collect();
    let mut pids: Vec<u64> = frames.iter().flat_map(|f| f.1.iter().map(|x| x.0)).collect();
    gids.sort_unstable();
    gids.dedup();
    pids.sort_unstable();
    pids.dedup();
    let mut both: HashMap<(u64, u64), f64> = HashMap::new();
    for ((g, p), sim) in frames.iter().zip(&sims) {
        for (i, (gid, _)) in g.iter().enumerate() {
            for (j, (pid, _)) in p.iter().enumerate() {
                if sim[i][j] >= 0.5 {
                    *both.entry((*gid, *pid)).or_default() += 1.0;
                }
            }
        }
    }
    let w: Vec<Vec<Option<f64>>> = gids
        .iter()
        .map(|g| pids.iter().map(|p| both.get(&(*g, *p)).copied()).collect())
        .collect();
    let idtp: f64 = max_weight(&w).iter().map(|&(i, j)| w[i][j].unwrap()).sum();
    let idf1 = 2.0 * idtp / (gt_total + pred_total) as f64;

    // HOTA, one matching per threshold.
    let mut gcount: HashMap<u64, f64> = HashMap::new();
    let mut pcount: HashMap<u64, f64> = HashMap::new();
    let mut pot: HashMap<(u64, u64), f64> = HashMap::new();
    for ((g, p), sim) in frames.iter().zip(&sims) {
        for (gid, _) in g {
            *gcount.entry(*gid).or_default() += 1.0;
        }
        for (pid, _) in p {
            *pcount.entry(*pid).or_default() += 1.0;
        }
        for i in 0..g.len() {
            for j in 0..p.len() {
                let s = sim[i][j];
                if s > 0.0 {
                    let rs: f64 = sim[i].iter().sum();
                    let cs: f64 = sim.iter().map(|r| r[j]).sum();
                    *pot.entry((g[i].0, p[j].0)).or_default() += s / (rs + cs - s);
                }
            }
        }
    }
    let (mut hs, mut ds, mut as_) = (0.0, 0.0, 0.0);
    for k in 1..=19 {
        let alpha = 0.05 * k as f64;
        let mut tp = 0usize;
        let mut counts: HashMap<(u64, u64), f64> = HashMap::new();
        for ((g, p), sim) in frames.iter().zip(&sims) {
            let w: Vec<Vec<Option<f64>>> = (0..g.len())
                .map(|i| {
                    (0..p.len())
                        .map(|j| {
                            let key = (g[i].0, p[j].0);
                            let pv = pot.get(&key).copied().unwrap_or(0.0);
                            let align = pv / (gcount[&key.0] + pcount[&key.1] - pv);
                            (sim[i][j] >= alpha).then_some(align * sim[i][j])
                        })
                        .collect()
                })
                .collect();
            for (i, j) in max_weight(&w) {
                tp += 1;
                *counts.entry((g[i].0, p[j].0)).or_default() += 1.0;
            }
        }
        let deta = tp as f64 / (gt_total + pred_total - tp) as f64;
        let assa = if tp == 0 {
            0.0
        } else {
            counts
                .iter()
                .map(|(&(g, p), &c)| c * c / (gcount[&g] + pcount[&p] - c))
                .sum::<f64>()
                / tp as f64
        };
        ds += deta;
        as_ += assa;
        hs += (deta * assa).sqrt();
    }
    RefScores {
        hota: hs / 19.0,
        deta: ds / 19.0,
        assa: as_ / 19.0,
        mota,
        idf1,
        idsw,
    }
}
