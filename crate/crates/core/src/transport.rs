//! Exact Earth Mover's Distance.
//!
//! [`emd_exact`] solves the transportation LP with a primal network simplex
//! over the bipartite source/sink graph. [`emd_1d`] is the closed form for
//! bins on a line with cost `|i - j|`; the two are checked against each other
//! in the test suite and by `selftest`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::TransportError;
use crate::histogram::{CostMatrix, Histogram};

/// Optimal flow matrix and its cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    /// `flows[i][j]` is the mass moved from source bin `i` to sink bin `j`.
    pub flows: Vec<Vec<f64>>,
    pub total_cost: f64,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.flows.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let b = self.flows.len();
        (0..b).map(|j| self.flows.iter().map(|r| r[j]).sum()).collect()
    }
}

fn check_dims(q: &Histogram, p: &Histogram) -> Result<(), TransportError> {
    if q.bins() != p.bins() {
        return Err(TransportError::Dimension(q.bins(), p.bins()));
    }
    Ok(())
}

/// Solves `min sum f_ij c_ij` subject to `f >= 0`, row sums `q`, column sums `p`.
pub fn emd_exact(q: &Histogram, p: &Histogram, c: &CostMatrix) -> Result<TransportPlan, TransportError> {
    check_dims(q, p)?;
    if c.size() != q.bins() {
        return Err(TransportError::Dimension(q.bins(), c.size()));
    }
    let bins = q.bins();
    let rows: Vec<usize> = (0..bins).filter(|&i| q.mass()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..bins).filter(|&j| p.mass()[j] > 0.0).collect();
    let supply: Vec<f64> = rows.iter().map(|&i| q.mass()[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| p.mass()[j]).collect();
    let cost: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| c.get(i, j)))
        .collect();

    let mut net = Network::new(supply, demand, cost);
    net.solve()?;

    let mut flows = vec![vec![0.0; bins]; bins];
    let mut total_cost = 0.0;
    for &cell in &net.basis {
        let f = net.flow[cell];
        if f > 0.0 {
            let (i, j) = (rows[cell / net.k], cols[cell % net.k]);
            flows[i][j] = f;
            total_cost += f * c.get(i, j);
        }
    }
    Ok(TransportPlan { flows, total_cost })
}

/// Transportation network in spanning-tree form. Row nodes are `0..m`,
/// column nodes `m..m + k`; cell `(i, j)` has index `i * k + j`.
struct Network {
    m: usize,
    k: usize,
    cost: Vec<f64>,
    flow: Vec<f64>,
    /// Exactly `m + k - 1` basic cells forming a spanning tree.
    basis: Vec<usize>,
}

/// Tree bookkeeping recomputed at each pivot.
struct Tree {
    parent: Vec<usize>,
    parent_cell: Vec<usize>,
    depth: Vec<usize>,
    potential: Vec<f64>,
}

impl Network {
    fn new(supply: Vec<f64>, demand: Vec<f64>, cost: Vec<f64>) -> Self {
        let (m, k) = (supply.len(), demand.len());
        let mut net = Self {
            m,
            k,
            cost,
            flow: vec![0.0; m * k],
            basis: Vec::with_capacity(m + k - 1),
        };
        net.least_cost_start(supply, demand);
        net
    }

    /// Least-cost rule: visit cells by increasing cost (ties by index) and
    /// saturate one row or column per allocation, keeping degenerate zeros
    /// so the basis is always a spanning tree.
    fn least_cost_start(&mut self, mut supply: Vec<f64>, mut demand: Vec<f64>) {
        let (m, k) = (self.m, self.k);
        let mut order: Vec<usize> = (0..m * k).collect();
        order.sort_by(|&a, &b| self.cost[a].total_cmp(&self.cost[b]).then(a.cmp(&b)));
        let mut row_open = vec![true; m];
        let mut col_open = vec![true; k];
        let (mut rows_left, mut cols_left) = (m, k);
        for cell in order {
            let (i, j) = (cell / k, cell % k);
            if !row_open[i] || !col_open[j] {
                continue;
            }
            self.basis.push(cell);
            if rows_left == 1 && cols_left == 1 {
                self.flow[cell] = supply[i].max(demand[j]);
                break;
            }
            if (supply[i] <= demand[j] && rows_left > 1) || cols_left == 1 {
                self.flow[cell] = supply[i];
                demand[j] = (demand[j] - supply[i]).max(0.0);
                supply[i] = 0.0;
                row_open[i] = false;
                rows_left -= 1;
            } else {
                self.flow[cell] = demand[j];
                supply[i] = (supply[i] - demand[j]).max(0.0);
                demand[j] = 0.0;
                col_open[j] = false;
                cols_left -= 1;
            }
        }
        debug_assert_eq!(self.basis.len(), m + k - 1);
    }

    fn tree(&self) -> Tree {
        let nodes = self.m + self.k;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];
        for &cell in &self.basis {
            let (r, c) = (cell / self.k, self.m + cell % self.k);
            adj[r].push((c, cell));
            adj[c].push((r, cell));
        }
        let mut tree = Tree {
            parent: vec![usize::MAX; nodes],
            parent_cell: vec![usize::MAX; nodes],
            depth: vec![0; nodes],
            potential: vec![0.0; nodes],
        };
        let mut seen = vec![false; nodes];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for &(b, cell) in &adj[a] {
                if !seen[b] {
                    seen[b] = true;
                    tree.parent[b] = a;
                    tree.parent_cell[b] = cell;
                    tree.depth[b] = tree.depth[a] + 1;
                    tree.potential[b] = self.cost[cell] - tree.potential[a];
                    stack.push(b);
                }
            }
        }
        tree
    }

    fn reduced_cost(&self, tree: &Tree, cell: usize) -> f64 {
        let (i, j) = (cell / self.k, self.m + cell % self.k);
        self.cost[cell] - tree.potential[i] - tree.potential[j]
    }

    /// Cells on the tree path from row node of `cell` to its column node.
    fn cycle(&self, tree: &Tree, cell: usize) -> Vec<usize> {
        let (mut a, mut b) = (cell / self.k, self.m + cell % self.k);
        let mut from_row = Vec::new();
        let mut from_col = Vec::new();
        while tree.depth[a] > tree.depth[b] {
            from_row.push(tree.parent_cell[a]);
            a = tree.parent[a];
        }
        while tree.depth[b] > tree.depth[a] {
            from_col.push(tree.parent_cell[b]);
            b = tree.parent[b];
        }
        while a != b {
            from_row.push(tree.parent_cell[a]);
            a = tree.parent[a];
            from_col.push(tree.parent_cell[b]);
            b = tree.parent[b];
        }
        from_row.extend(from_col.into_iter().rev());
        from_row
    }

    fn solve(&mut self) -> Result<(), TransportError> {
        let cells = self.m * self.k;
        if self.m == 1 || self.k == 1 {
            return Ok(());
        }
        let scale = self.cost.iter().fold(1.0f64, |a, &c| a.max(c));
        let eps = 1e-12 * scale;
        let max_pivots = 50 * cells + 1000;
        let mut in_basis = vec![false; cells];
        for &cell in &self.basis {
            in_basis[cell] = true;
        }
        // Dantzig pricing; after a long run of degenerate pivots switch to
        // Bland's first-improving rule, which cannot cycle.
        let mut bland = false;
        let mut degenerate_run = 0usize;
        for _ in 0..max_pivots {
            let tree = self.tree();
            let mut entering = None;
            let mut best = -eps;
            for cell in (0..cells).filter(|&c| !in_basis[c]) {
                let r = self.reduced_cost(&tree, cell);
                if r < best {
                    entering = Some(cell);
                    if bland {
                        break;
                    }
                    best = r;
                }
            }
            let Some(entering) = entering else {
                return Ok(());
            };

            let path = self.cycle(&tree, entering);
            // Path edges alternate -, +, -, ... starting at the row end; the
            // entering cell carries +.
            let mut theta = f64::INFINITY;
            let mut leaving = usize::MAX;
            for &cell in path.iter().step_by(2) {
                let f = self.flow[cell];
                if f < theta || (f == theta && cell < leaving) {
                    theta = f;
                    leaving = cell;
                }
            }
            for (pos, &cell) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    self.flow[cell] -= theta;
                } else {
                    self.flow[cell] += theta;
                }
            }
            self.flow[entering] = theta;
            self.flow[leaving] = 0.0;
            let slot = self.basis.iter().position(|&c| c == leaving).expect("leaving cell is basic");
            self.basis[slot] = entering;
            in_basis[leaving] = false;
            in_basis[entering] = true;

            if theta == 0.0 {
                degenerate_run += 1;
                if degenerate_run > self.m + self.k {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
        }
        Err(TransportError::PivotLimit(max_pivots))
    }
}

/// Closed-form EMD for cost `|i - j|`: the L1 distance between the two
/// cumulative mass vectors.
pub fn emd_1d(q: &Histogram, p: &Histogram) -> Result<f64, TransportError> {
    check_dims(q, p)?;
    let (mut cq, mut cp, mut total) = (0.0, 0.0, 0.0);
    for (a, b) in q.mass().iter().zip(p.mass()) {
        cq += a;
        cp += b;
        total += (cq - cp).abs();
    }
    Ok(total)
}

fn pairwise_with<F>(reals: &[Histogram], synthetics: &[Histogram], emd: F) -> Result<DMatrix<f64>, TransportError>
where
    F: Fn(&Histogram, &Histogram) -> Result<f64, TransportError> + Sync,
{
    let p = synthetics.len();
    let values = (0..reals.len() * p)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / p, cell % p);
            emd(&reals[i], &synthetics[j]).map_err(|e| TransportError::Cell {
                row: i,
                col: j,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(DMatrix::from_row_slice(reals.len(), p, &values))
}

/// `n x p` matrix with entry `(i, j) = EMD(reals[i], synthetics[j])` under `c`.
pub fn pairwise_emd(
    reals: &[Histogram],
    synthetics: &[Histogram],
    c: &CostMatrix,
) -> Result<DMatrix<f64>, TransportError> {
    pairwise_with(reals, synthetics, |q, p| emd_exact(q, p, c).map(|plan| plan.total_cost))
}

/// [`pairwise_emd`] under the `|i - j|` ground distance, using the closed form.
pub fn pairwise_emd_1d(reals: &[Histogram], synthetics: &[Histogram]) -> Result<DMatrix<f64>, TransportError> {
    pairwise_with(reals, synthetics, emd_1d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histogram::bin_distance_costs;
    use proptest::prelude::*;

    fn h(v: &[f64]) -> Histogram {
        Histogram::new(v.to_vec()).unwrap()
    }

    /// Minimum over all vertices of the transportation polytope: every choice
    /// of `2B - 1` cells whose equality system has a unique nonnegative solution.
    fn vertex_enumeration(q: &[f64], p: &[f64], c: &CostMatrix) -> f64 {
        let b = q.len();
        let cells = b * b;
        let need = 2 * b - 1;
        let mut best = f64::INFINITY;
        let mut pick: Vec<usize> = (0..need).collect();
        loop {
            // rows: b source constraints + first b-1 sink constraints
            let a = DMatrix::from_fn(need, need, |r, col| {
                let cell = pick[col];
                let (i, j) = (cell / b, cell % b);
                if r < b {
                    (i == r) as u8 as f64
                } else {
                    (j == r - b) as u8 as f64
                }
            });
            let rhs = nalgebra::DVector::from_iterator(need, q.iter().chain(&p[..b - 1]).copied());
            let lu = a.lu();
            if let Some(x) = lu.solve(&rhs) {
                if lu.determinant().abs() > 1e-9 && x.iter().all(|&v| v >= -1e-12) {
                    let cost: f64 = pick.iter().zip(x.iter()).map(|(&cell, &f)| f * c.get(cell / b, cell % b)).sum();
                    best = best.min(cost);
                }
            }
            // next combination
            let mut k = need;
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                if pick[k] < cells - need + k {
                    break;
                }
            }
            pick[k] += 1;
            for t in k + 1..need {
                pick[t] = pick[t - 1] + 1;
            }
        }
    }

    fn assert_feasible(plan: &TransportPlan, q: &Histogram, p: &Histogram, c: &CostMatrix) {
        assert!(plan.flows.iter().flatten().all(|&f| f >= 0.0));
        for (a, b) in plan.row_sums().iter().zip(q.mass()) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in plan.col_sums().iter().zip(p.mass()) {
            assert!((a - b).abs() < 1e-9);
        }
        let cost: f64 = (0..q.bins())
            .flat_map(|i| (0..q.bins()).map(move |j| (i, j)))
            .map(|(i, j)| plan.flows[i][j] * c.get(i, j))
            .sum();
        assert!((cost - plan.total_cost).abs() < 1e-9);
    }

    #[test]
    fn identity_has_zero_cost_and_diagonal_plan() {
        let q = h(&[0.2, 0.3, 0.0, 0.5]);
        let c = bin_distance_costs(4, 1.0).unwrap();
        let plan = emd_exact(&q, &q, &c).unwrap();
        assert_eq!(plan.total_cost, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(plan.flows[i][j], 0.0);
                }
            }
            assert_eq!(plan.flows[i][i], q.mass()[i]);
        }
        assert_eq!(emd_1d(&q, &q).unwrap(), 0.0);
    }

    #[test]
    fn single_unit_moved_two_bins() {
        let (q, p) = (h(&[1.0, 0.0, 0.0]), h(&[0.0, 0.0, 1.0]));
        let c = bin_distance_costs(3, 1.0).unwrap();
        assert_eq!(emd_exact(&q, &p, &c).unwrap().total_cost, 2.0);
        assert_eq!(emd_1d(&q, &p).unwrap(), 2.0);
    }

    #[test]
    fn half_shift_matches_vertex_enumeration() {
        let (qv, pv) = ([0.5, 0.5, 0.0], [0.0, 0.5, 0.5]);
        let c = bin_distance_costs(3, 1.0).unwrap();
        let oracle = vertex_enumeration(&qv, &pv, &c);
        assert!((oracle - 1.0).abs() < 1e-12);
        let plan = emd_exact(&h(&qv), &h(&pv), &c).unwrap();
        assert!((plan.total_cost - 1.0).abs() < 1e-12);
        assert_feasible(&plan, &h(&qv), &h(&pv), &c);
    }

    #[test]
    fn dimension_mismatch() {
        let c = bin_distance_costs(3, 1.0).unwrap();
        let (a, b) = (h(&[1.0, 0.0, 0.0]), h(&[0.5, 0.5]));
        assert_eq!(emd_1d(&a, &b), Err(TransportError::Dimension(3, 2)));
        assert!(emd_exact(&a, &b, &c).is_err());
        assert!(emd_exact(&b, &b, &c).is_err());
    }

    #[test]
    fn pairwise_shapes_and_identity() {
        let one = vec![h(&[0.25, 0.75])];
        let m = pairwise_emd_1d(&one, &one).unwrap();
        assert_eq!((m.nrows(), m.ncols(), m[(0, 0)]), (1, 1, 0.0));
        let reals = vec![h(&[1.0, 0.0, 0.0]), h(&[0.0, 1.0, 0.0])];
        let synth = vec![h(&[0.0, 0.0, 1.0]), h(&[1.0, 0.0, 0.0]), h(&[0.2, 0.3, 0.5])];
        let c = bin_distance_costs(3, 1.0).unwrap();
        let m = pairwise_emd(&reals, &synth, &c).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (2, 3));
        assert_eq!(m[(0, 0)], 2.0);
        assert_eq!(m[(1, 1)], 1.0);
        let t = pairwise_emd(&synth, &reals, &c).unwrap();
        assert!((m - t.transpose()).amax() < 1e-12);
    }

    #[test]
    fn pairwise_error_names_cell() {
        let reals = vec![h(&[1.0, 0.0, 0.0])];
        let synth = vec![h(&[1.0, 0.0, 0.0]), h(&[0.5, 0.5])];
        let err = pairwise_emd_1d(&reals, &synth).unwrap_err();
        assert!(matches!(err, TransportError::Cell { row: 0, col: 1, .. }));
    }

    fn arb_hist(bins: usize) -> impl Strategy<Value = Histogram> {
        proptest::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.0f64..1.0], bins)
            .prop_filter("nonzero", |v| v.iter().sum::<f64>() > 1e-3)
            .prop_map(|v| Histogram::from_counts(&v).unwrap())
    }

    fn arb_cost(bins: usize) -> impl Strategy<Value = CostMatrix> {
        proptest::collection::vec(0.0f64..10.0, bins * bins).prop_map(move |v| {
            let rows = (0..bins)
                .map(|i| (0..bins).map(|j| if i == j { 0.0 } else { v[i * bins + j] }).collect())
                .collect();
            CostMatrix::from_rows(rows).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn exact_matches_enumeration_on_random_costs(q in arb_hist(3), p in arb_hist(3), c in arb_cost(3)) {
            let plan = emd_exact(&q, &p, &c).unwrap();
            assert_feasible(&plan, &q, &p, &c);
            let oracle = vertex_enumeration(q.mass(), p.mass(), &c);
            prop_assert!((plan.total_cost - oracle).abs() < 1e-9, "{} vs {}", plan.total_cost, oracle);
        }

        #[test]
        fn exact_matches_enumeration_four_bins(q in arb_hist(4), p in arb_hist(4), c in arb_cost(4)) {
            let plan = emd_exact(&q, &p, &c).unwrap();
            let oracle = vertex_enumeration(q.mass(), p.mass(), &c);
            prop_assert!((plan.total_cost - oracle).abs() < 1e-9);
        }

        #[test]
        fn closed_form_matches_lp(q in arb_hist(24), p in arb_hist(24)) {
            let c = bin_distance_costs(24, 1.0).unwrap();
            let plan = emd_exact(&q, &p, &c).unwrap();
            assert_feasible(&plan, &q, &p, &c);
            prop_assert!((plan.total_cost - emd_1d(&q, &p).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn squared_cost_plans_are_feasible(q in arb_hist(16), p in arb_hist(16)) {
            let c = bin_distance_costs(16, 2.0).unwrap();
            let plan = emd_exact(&q, &p, &c).unwrap();
            assert_feasible(&plan, &q, &p, &c);
            let back = emd_exact(&p, &q, &c).unwrap();
            prop_assert!((plan.total_cost - back.total_cost).abs() < 1e-9);
            // squared cost dominates the L1 cost bin by bin
            prop_assert!(plan.total_cost + 1e-9 >= emd_1d(&q, &p).unwrap());
        }
    }
}
