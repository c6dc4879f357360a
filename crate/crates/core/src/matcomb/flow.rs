//! Integer max-flow on the row/column network of a k x m pattern.
//!
//! Node layout: source = 0, rows 1..=k, columns k+1..=k+m, sink = k+m+1.

use std::collections::VecDeque;

pub(crate) struct RowColumnNetwork<'a> {
    k: usize,
    m: usize,
    arcs: &'a [Vec<bool>],
    row_cap: Vec<i64>,
    col_cap: Vec<i64>,
    arc_cap: i64,
    flow: Vec<Vec<i64>>,
    row_flow: Vec<i64>,
    col_flow: Vec<i64>,
}

/// Rows reachable from the source and columns not reachable, in a residual
/// graph where row-to-column arcs are treated as uncapacitated.
pub(crate) struct SourceSide {
    pub rows: Vec<usize>,
    pub unreached_cols: Vec<usize>,
}

impl<'a> RowColumnNetwork<'a> {
    pub fn new(arcs: &'a [Vec<bool>], row_cap: Vec<i64>, col_cap: Vec<i64>, arc_cap: i64) -> Self {
        let k = row_cap.len();
        let m = col_cap.len();
        RowColumnNetwork {
            k,
            m,
            arcs,
            row_cap,
            col_cap,
            arc_cap,
            flow: vec![vec![0; m]; k],
            row_flow: vec![0; k],
            col_flow: vec![0; m],
        }
    }

    /// Runs breadth-first augmenting paths to a maximum flow and returns its
    /// value.
    pub fn max_flow(&mut self) -> i64 {
        let (k, m) = (self.k, self.m);
        let sink = k + m + 1;
        loop {
            let mut parent = vec![usize::MAX; k + m + 2];
            parent[0] = 0;
            let mut queue = VecDeque::from([0usize]);
            while let Some(u) = queue.pop_front() {
                if u == sink {
                    break;
                }
                for (w, residual) in self.neighbours(u) {
                    if residual > 0 && parent[w] == usize::MAX {
                        parent[w] = u;
                        queue.push_back(w);
                    }
                }
            }
            if parent[sink] == usize::MAX {
                break;
            }
            let mut bottleneck = i64::MAX;
            let mut v = sink;
            while v != 0 {
                let u = parent[v];
                bottleneck = bottleneck.min(self.residual(u, v));
                v = u;
            }
            let mut v = sink;
            while v != 0 {
                let u = parent[v];
                self.push(u, v, bottleneck);
                v = u;
            }
        }
        self.row_flow.iter().sum()
    }

    fn residual(&self, u: usize, v: usize) -> i64 {
        let (k, m) = (self.k, self.m);
        let sink = k + m + 1;
        match (u, v) {
            (0, r) if (1..=k).contains(&r) => self.row_cap[r - 1] - self.row_flow[r - 1],
            (c, t) if t == sink => self.col_cap[c - k - 1] - self.col_flow[c - k - 1],
            (r, c) if (1..=k).contains(&r) && c > k => {
                let (i, j) = (r - 1, c - k - 1);
                if self.arcs[i][j] {
                    self.arc_cap - self.flow[i][j]
                } else {
                    0
                }
            }
            (c, r) if c > k && (1..=k).contains(&r) => self.flow[r - 1][c - k - 1],
            (r, 0) if (1..=k).contains(&r) => self.row_flow[r - 1],
            (t, c) if t == sink => self.col_flow[c - k - 1],
            _ => 0,
        }
    }

    fn push(&mut self, u: usize, v: usize, amount: i64) {
        let k = self.k;
        let sink = k + self.m + 1;
        match (u, v) {
            (0, r) => self.row_flow[r - 1] += amount,
            (c, t) if t == sink => self.col_flow[c - k - 1] += amount,
            (r, c) if r <= k => self.flow[r - 1][c - k - 1] += amount,
            (c, r) => self.flow[r - 1][c - k - 1] -= amount,
        }
    }

    fn neighbours(&self, u: usize) -> Vec<(usize, i64)> {
        let (k, m) = (self.k, self.m);
        let sink = k + m + 1;
        let mut out = Vec::new();
        if u == 0 {
            out.extend((1..=k).map(|r| (r, self.residual(0, r))));
        } else if u <= k {
            out.extend((k + 1..=k + m).map(|c| (c, self.residual(u, c))));
            out.push((0, self.residual(u, 0)));
        } else if u < sink {
            out.push((sink, self.residual(u, sink)));
            out.extend((1..=k).map(|r| (r, self.residual(u, r))));
        }
        out
    }

    /// Source side of a minimum cut of the same network with unbounded
    /// row-to-column arcs. Valid after [`max_flow`](Self::max_flow): the
    /// capacities on those arcs are implied by the row and column capacities,
    /// so the flow is maximal for both networks.
    pub fn source_side(&self) -> SourceSide {
        let (k, m) = (self.k, self.m);
        let mut row_seen = vec![false; k];
        let mut col_seen = vec![false; m];
        let mut queue = VecDeque::new();
        for i in 0..k {
            if self.row_cap[i] - self.row_flow[i] > 0 {
                row_seen[i] = true;
                queue.push_back((true, i));
            }
        }
        while let Some((is_row, x)) = queue.pop_front() {
            if is_row {
                for j in 0..m {
                    if self.arcs[x][j] && !col_seen[j] {
                        col_seen[j] = true;
                        queue.push_back((false, j));
                    }
                }
            } else {
                for i in 0..k {
                    if self.flow[i][x] > 0 && !row_seen[i] {
                        row_seen[i] = true;
                        queue.push_back((true, i));
                    }
                }
            }
        }
        SourceSide {
            rows: (0..k).filter(|&i| row_seen[i]).collect(),
            unreached_cols: (0..m).filter(|&j| !col_seen[j]).collect(),
        }
    }
}
