//! Distances between gaze distributions.
//!
//! [`emd_transport`] solves the balanced transportation problem between two
//! unit-mass signatures with the transportation simplex (least-cost start,
//! MODI potentials, stepping-stone pivots). [`emd_1d`] integrates the CDF
//! difference in closed form and serves as its independent check.

use std::collections::VecDeque;

use crate::distributions::{DistanceHistogram, Signature, MASS_TOLERANCE};
use crate::error::{Error, Result};

/// Default smoothing for KL divergence and the Bhattacharyya floor.
pub const DEFAULT_EPS: f64 = 1e-9;

/// Optimal flows between two signatures.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub sources: usize,
    pub sinks: usize,
    /// Row-major `sources x sinks` flow matrix.
    pub flows: Vec<f64>,
    /// Row-major ground distances `|a_i - b_j|`.
    pub ground: Vec<f64>,
}

impl TransportPlan {
    pub fn flow(&self, i: usize, j: usize) -> f64 {
        self.flows[i * self.sinks + j]
    }

    pub fn work(&self) -> f64 {
        self.flows.iter().zip(&self.ground).map(|(f, d)| f * d).sum()
    }

    pub fn total_flow(&self) -> f64 {
        self.flows.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.flows.chunks(self.sinks).map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.sinks)
            .map(|j| (0..self.sources).map(|i| self.flow(i, j)).sum())
            .collect()
    }
}

fn check_unit_mass(s: &Signature) -> Result<()> {
    let total = s.total_mass();
    if s.is_empty() || (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::UnnormalizedSignature(total));
    }
    Ok(())
}

/// Earth Mover's Distance: minimal work divided by the total flow (which is 1).
pub fn emd_transport(a: &Signature, b: &Signature) -> Result<(f64, TransportPlan)> {
    check_unit_mass(a)?;
    check_unit_mass(b)?;
    let (m, n) = (a.len(), b.len());
    let mut ground = Vec::with_capacity(m * n);
    for pa in a.positions() {
        for pb in b.positions() {
            ground.push((pa - pb).abs());
        }
    }
    let flows = if m == 1 && n == 1 {
        vec![1.0]
    } else {
        TransportSimplex::new(a.masses(), b.masses(), &ground).solve()
    };
    let plan = TransportPlan { sources: m, sinks: n, flows, ground };
    let distance = plan.work() / plan.total_flow();
    Ok((distance, plan))
}

/// Shorthand for the EMD value alone.
pub fn emd(a: &Signature, b: &Signature) -> Result<f64> {
    emd_transport(a, b).map(|(d, _)| d)
}

struct TransportSimplex<'a> {
    m: usize,
    n: usize,
    cost: &'a [f64],
    flow: Vec<f64>,
    basic: Vec<bool>,
    /// Spanning-tree adjacency over the basic cells: node `i < m` is row
    /// `i`, node `m + j` is column `j`.
    adj: Vec<Vec<usize>>,
    potential: Vec<f64>,
    parent: Vec<usize>,
    queue: VecDeque<usize>,
}

impl<'a> TransportSimplex<'a> {
    fn new(supply: &[f64], demand: &[f64], cost: &'a [f64]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut solver = Self {
            m,
            n,
            cost,
            flow: vec![0.0; m * n],
            basic: vec![false; m * n],
            adj: vec![Vec::new(); m + n],
            potential: vec![0.0; m + n],
            parent: vec![usize::MAX; m + n],
            queue: VecDeque::with_capacity(m + n),
        };
        solver.least_cost_start(supply, demand);
        solver
    }

    fn link(&mut self, i: usize, j: usize) {
        self.basic[i * self.n + j] = true;
        self.adj[i].push(self.m + j);
        self.adj[self.m + j].push(i);
    }

    fn unlink(&mut self, i: usize, j: usize) {
        self.basic[i * self.n + j] = false;
        let col = self.m + j;
        self.adj[i].retain(|&x| x != col);
        self.adj[col].retain(|&x| x != i);
    }

    /// Least-cost initial basic feasible solution. Each allocation retires
    /// exactly one row or column (both on the final cell), so the basis is a
    /// spanning tree with `m + n - 1` cells even when degenerate.
    fn least_cost_start(&mut self, supply: &[f64], demand: &[f64]) {
        let (m, n) = (self.m, self.n);
        let mut s = supply.to_vec();
        let mut d = demand.to_vec();
        let mut row_open = vec![true; m];
        let mut col_open = vec![true; n];
        let (mut rows_left, mut cols_left) = (m, n);
        let mut cells: Vec<usize> = (0..m * n).collect();
        cells.sort_unstable_by(|&x, &y| self.cost[x].total_cmp(&self.cost[y]).then(x.cmp(&y)));
        for cell in cells {
            if rows_left == 0 || cols_left == 0 {
                break;
            }
            let (i, j) = (cell / n, cell % n);
            if !row_open[i] || !col_open[j] {
                continue;
            }
            let f = s[i].min(d[j]);
            s[i] -= f;
            d[j] -= f;
            self.flow[cell] = f;
            self.link(i, j);
            if rows_left == 1 && cols_left == 1 {
                rows_left = 0;
                cols_left = 0;
            } else if (s[i] <= d[j] && rows_left > 1) || cols_left == 1 {
                row_open[i] = false;
                rows_left -= 1;
            } else {
                col_open[j] = false;
                cols_left -= 1;
            }
        }
    }

    fn edge_cost(&self, a: usize, b: usize) -> f64 {
        if a < self.m {
            self.cost[a * self.n + (b - self.m)]
        } else {
            self.cost[b * self.n + (a - self.m)]
        }
    }

    /// Dual potentials with `u_0 = 0` and `u_i + v_j = c_ij` on basic cells.
    fn update_potentials(&mut self) {
        self.parent.fill(usize::MAX);
        self.parent[0] = 0;
        self.potential[0] = 0.0;
        self.queue.clear();
        self.queue.push_back(0);
        while let Some(node) = self.queue.pop_front() {
            for k in 0..self.adj[node].len() {
                let next = self.adj[node][k];
                if self.parent[next] == usize::MAX {
                    self.parent[next] = node;
                    self.potential[next] = self.edge_cost(node, next) - self.potential[node];
                    self.queue.push_back(next);
                }
            }
        }
    }

    /// Tree path from column `j` to row `i` as cells, starting at column `j`.
    fn tree_path(&mut self, i: usize, j: usize) -> Vec<(usize, usize)> {
        self.parent.fill(usize::MAX);
        self.parent[i] = i;
        let target = self.m + j;
        self.queue.clear();
        self.queue.push_back(i);
        while let Some(node) = self.queue.pop_front() {
            if node == target {
                break;
            }
            for &next in &self.adj[node] {
                if self.parent[next] == usize::MAX {
                    self.parent[next] = node;
                    self.queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = target;
        while node != i {
            let p = self.parent[node];
            let cell = if node < self.m { (node, p - self.m) } else { (p, node - self.m) };
            path.push(cell);
            node = p;
        }
        path
    }

    fn solve(mut self) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let scale = self.cost.iter().copied().fold(0.0, f64::max).max(1.0);
        let tol = 1e-12 * scale;
        let max_pivots = 50 * (m + n) * (m + n);
        let mut degenerate_run = 0usize;
        for _ in 0..max_pivots {
            self.update_potentials();
            let (u, v) = self.potential.split_at(m);
            // Dantzig pricing; Bland's rule after a long degenerate streak
            let bland = degenerate_run > m + n;
            let mut entering = None;
            let mut best = -tol;
            'scan: for (i, &ui) in u.iter().enumerate() {
                let row = &self.cost[i * n..(i + 1) * n];
                for j in 0..n {
                    let reduced = row[j] - ui - v[j];
                    if reduced < best && !self.basic[i * n + j] {
                        entering = Some((i, j));
                        if bland {
                            break 'scan;
                        }
                        best = reduced;
                    }
                }
            }
            let Some((ei, ej)) = entering else {
                break;
            };
            let path = self.tree_path(ei, ej);
            // path[0] touches column ej and loses flow; signs alternate from there
            let mut theta = f64::INFINITY;
            let mut leaving = 0;
            for (k, &(i, j)) in path.iter().enumerate().step_by(2) {
                let f = self.flow[i * n + j];
                if f < theta || (f == theta && (i, j) < path[leaving]) {
                    theta = f;
                    leaving = k;
                }
            }
            for (k, &(i, j)) in path.iter().enumerate() {
                if k % 2 == 0 {
                    self.flow[i * n + j] -= theta;
                } else {
                    self.flow[i * n + j] += theta;
                }
            }
            let (li, lj) = path[leaving];
            self.flow[li * n + lj] = 0.0;
            self.unlink(li, lj);
            self.link(ei, ej);
            self.flow[ei * n + ej] = theta;
            degenerate_run = if theta == 0.0 { degenerate_run + 1 } else { 0 };
        }
        // clear rounding dust so every flow is non-negative
        for f in &mut self.flow {
            if *f < 0.0 {
                *f = 0.0;
            }
        }
        self.flow
    }
}

/// `∫ |CDF_a(t) - CDF_b(t)| dt` over the merged breakpoints.
pub fn emd_1d(a: &Signature, b: &Signature) -> Result<f64> {
    check_unit_mass(a)?;
    check_unit_mass(b)?;
    let (pa, ma) = (a.positions(), a.masses());
    let (pb, mb) = (b.positions(), b.masses());
    let (mut i, mut j) = (0, 0);
    let (mut cdf_a, mut cdf_b) = (0.0f64, 0.0f64);
    let mut prev: Option<f64> = None;
    let mut total = 0.0;
    while i < pa.len() || j < pb.len() {
        let next = match (pa.get(i), pb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            total += (cdf_a - cdf_b).abs() * (next - p);
        }
        while i < pa.len() && pa[i] == next {
            cdf_a += ma[i];
            i += 1;
        }
        while j < pb.len() && pb[j] == next {
            cdf_b += mb[j];
            j += 1;
        }
        prev = Some(next);
    }
    Ok(total)
}

fn check_aligned(p: &DistanceHistogram, q: &DistanceHistogram) -> Result<()> {
    if p.edges != q.edges || p.counts.len() != q.counts.len() {
        return Err(Error::EdgeMismatch);
    }
    Ok(())
}

/// `Σ p_i ln((p_i + eps) / (q_i + eps))`, in nats.
pub fn kl_divergence(p: &DistanceHistogram, q: &DistanceHistogram, eps: f64) -> Result<f64> {
    check_aligned(p, q)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    Ok(p.counts
        .iter()
        .zip(&q.counts)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * ((pi + eps) / (qi + eps)).ln())
        .sum())
}

/// `-ln(max(BC, eps))` with `BC = Σ sqrt(p_i q_i)`.
pub fn bhattacharyya_with_eps(p: &DistanceHistogram, q: &DistanceHistogram, eps: f64) -> Result<f64> {
    check_aligned(p, q)?;
    let bc: f64 = p.counts.iter().zip(&q.counts).map(|(a, b)| (a * b).sqrt()).sum();
    // BC can exceed 1 by rounding; the distance is clamped at 0
    Ok((-bc.max(eps).ln()).max(0.0))
}

pub fn bhattacharyya(p: &DistanceHistogram, q: &DistanceHistogram) -> Result<f64> {
    bhattacharyya_with_eps(p, q, DEFAULT_EPS)
}
