//! Gated minimum-cost assignment and greedy best-overlap selection.
//!
//! [`hungarian_solve`] works on the gated graph: entries with `cost > gate` are
//! forbidden edges, and leaving a row/column pair unmatched costs `gate`. The
//! rectangular problem is embedded in a square `(n + m) x (n + m)` matrix where
//! every real row owns a private "unmatched" column (cost `gate / 2`), every
//! real column owns a private "unmatched" row (cost `gate / 2`), and the
//! dummy-dummy block is free. The solved objective is therefore
//!
//! ```text
//! sum(cost of matches) + gate * (n + m - 2 * |matches|) / 2
//! ```
//!
//! which is minimised by taking every match that pays for itself. Among
//! optimal solutions the one whose row-to-column vector is lexicographically
//! smallest (real columns ordered by index, "unmatched" last) is returned.

use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, IouKind};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match<T> {
    pub row: usize,
    pub col: usize,
    pub cost: T,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Assignment<T> {
    /// Sorted by row.
    pub matches: Vec<Match<T>>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl<T: Scalar> Assignment<T> {
    /// Everything unmatched, for an `n x m` problem.
    pub fn unmatched(n: usize, m: usize) -> Self {
        Assignment {
            matches: Vec::new(),
            unmatched_rows: (0..n).collect(),
            unmatched_cols: (0..m).collect(),
        }
    }

    pub fn total_cost(&self) -> T {
        self.matches.iter().fold(T::zero(), |acc, m| acc + m.cost)
    }

    /// Value of the gated objective: match costs plus `gate / 2` per unmatched row and column.
    pub fn objective(&self, gate: T) -> T {
        let unmatched = T::lit((self.unmatched_rows.len() + self.unmatched_cols.len()) as f64);
        self.total_cost() + gate * T::half() * unmatched
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.matches.iter().map(|m| (m.row, m.col)).collect()
    }
}

/// Dense O(N^3) shortest-augmenting-path Hungarian on a square matrix with
/// `+inf` marking forbidden cells. Returns `(row -> col, u, v)` where
/// `cost[i][j] - u[i] - v[j] >= 0` holds with equality on the matching.
fn solve_square<T: Scalar>(cost: &[Vec<T>]) -> (Vec<usize>, Vec<T>, Vec<T>) {
    let n = cost.len();
    let inf = T::infinity();
    // 1-based with slot 0 as the virtual root, following the classic formulation.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let c = cost[i0 - 1][j - 1];
                if c.is_finite() {
                    let cur = c - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            assert!(j1 != 0, "square assignment has no perfect matching");
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else if minv[j].is_finite() {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Rewrites an optimal matching into the lexicographically smallest optimal
/// matching over the first `fix_rows` rows.
///
/// Every optimal matching lives in the equality subgraph of an optimal dual, so
/// for each row in order we pick the smallest tight column that can be reached
/// by an alternating chain ending at the row's current column.
fn lex_smallest(tight: &[Vec<bool>], row_to_col: &mut [usize], fix_rows: usize) {
    let n = row_to_col.len();
    let mut col_to_row = vec![0usize; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    let mut fixed_row = vec![false; n];
    // parent[c] = (r, c'): row r may leave column c for column c'.
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut freeable = vec![false; n];
    let mut queue = Vec::with_capacity(n);

    for i in 0..fix_rows {
        let home = row_to_col[i];
        freeable.iter_mut().for_each(|f| *f = false);
        parent.iter_mut().for_each(|p| *p = None);
        queue.clear();
        freeable[home] = true;
        queue.push(home);
        let mut head = 0;
        while head < queue.len() {
            let c = queue[head];
            head += 1;
            for r in 0..n {
                if r == i || fixed_row[r] || !tight[r][c] {
                    continue;
                }
                let rc = row_to_col[r];
                if !freeable[rc] {
                    freeable[rc] = true;
                    parent[rc] = Some((r, c));
                    queue.push(rc);
                }
            }
        }

        let best = (0..n)
            .find(|&j| tight[i][j] && freeable[j])
            .expect("current column is always a candidate");
        if best != home {
            let mut moves = vec![(i, best)];
            let mut cur = best;
            while cur != home {
                let (r, c) = parent[cur].expect("chain reaches the freed column");
                moves.push((r, c));
                cur = c;
            }
            for (r, c) in moves {
                row_to_col[r] = c;
                col_to_row[c] = r;
            }
        }
        fixed_row[i] = true;
    }
}

/// Minimum-cost one-to-one assignment on the subgraph of entries with `cost <= gate`.
///
/// `cost` is row-major and may be rectangular; all rows must have equal length.
/// Non-finite entries are treated as forbidden.
pub fn hungarian_solve<T: Scalar>(cost: &[Vec<T>], gate: T) -> Assignment<T> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    debug_assert!(cost.iter().all(|r| r.len() == m), "ragged cost matrix");
    if n == 0 || m == 0 {
        return Assignment::unmatched(n, m);
    }

    let size = n + m;
    let inf = T::infinity();
    let half_gate = gate * T::half();
    let mut sq = vec![vec![inf; size]; size];
    let mut scale = gate.abs().max(T::one());
    for i in 0..n {
        for j in 0..m {
            let c = cost[i][j];
            if c.is_finite() && c <= gate {
                sq[i][j] = c;
                scale = scale.max(c.abs());
            }
        }
        sq[i][m + i] = half_gate;
    }
    for j in 0..m {
        sq[n + j][j] = half_gate;
        for k in 0..n {
            sq[n + j][m + k] = T::zero();
        }
    }

    let (mut row_to_col, u, v) = solve_square(&sq);

    let eps = T::epsilon() * T::lit(1024.0 * size as f64) * scale;
    let tight: Vec<Vec<bool>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| sq[i][j].is_finite() && sq[i][j] - u[i] - v[j] <= eps)
                .collect()
        })
        .collect();
    lex_smallest(&tight, &mut row_to_col, n);

    let mut col_taken = vec![false; m];
    let mut out = Assignment {
        matches: Vec::new(),
        unmatched_rows: Vec::new(),
        unmatched_cols: Vec::new(),
    };
    for (i, &j) in row_to_col.iter().take(n).enumerate() {
        if j < m {
            col_taken[j] = true;
            out.matches.push(Match {
                row: i,
                col: j,
                cost: cost[i][j],
            });
        } else {
            out.unmatched_rows.push(i);
        }
    }
    out.unmatched_cols = (0..m).filter(|&j| !col_taken[j]).collect();
    out
}

/// Index of the candidate with the highest `kind` score against `anchor`,
/// provided that score is at least `min_score`. Ties go to the lowest index.
pub fn greedy_best_iou<T: Scalar>(
    anchor: &BBox<T>,
    candidates: &[BBox<T>],
    kind: IouKind,
    min_score: T,
) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (idx, cand) in candidates.iter().enumerate() {
        let s = kind.score(anchor, cand);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((idx, s));
        }
    }
    best.filter(|&(_, s)| s >= min_score).map(|(idx, _)| idx)
}
