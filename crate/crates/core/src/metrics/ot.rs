//! Optimal transport between weighted point clouds under squared-Euclidean cost.

use crate::error::{invalid, Error, Result};
use crate::kernel::sq_dist;
use crate::state::{compensated_sum, ParticleState, MASS_TOLERANCE};

/// Largest `K_a * K_b` accepted by the exact solver.
pub const EXACT_SIZE_LIMIT: usize = 2_000_000;

/// Discrete measure `sum_k masses[k] delta_{points[k]}`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedCloud {
    dim: usize,
    points: Vec<f64>,
    masses: Vec<f64>,
}

impl WeightedCloud {
    pub fn new(points: Vec<f64>, masses: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || masses.is_empty() || points.len() != masses.len() * dim {
            return Err(invalid(format!(
                "{} coordinates do not form {} points of dimension {dim}",
                points.len(),
                masses.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite point coordinate"));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(invalid("masses must be finite and nonnegative"));
        }
        let total = compensated_sum(&masses);
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(invalid(format!("masses sum to {total}, not 1")));
        }
        Ok(Self { dim, points, masses })
    }

    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(invalid("points do not form rows of the given dimension"));
        }
        let k = points.len() / dim;
        Self::new(points, vec![1.0 / k as f64; k], dim)
    }

    pub fn from_state(state: &ParticleState) -> Self {
        Self {
            dim: state.dim(),
            points: state.positions().to_vec(),
            masses: state.weights().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}

fn check_pair(a: &WeightedCloud, b: &WeightedCloud) -> Result<()> {
    if a.dim != b.dim {
        return Err(invalid(format!(
            "clouds differ in dimension ({} vs {})",
            a.dim, b.dim
        )));
    }
    Ok(())
}

/// Optimal coupling as a sparse list of `(source, sink, mass)` entries.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    pub cost: f64,
    pub flows: Vec<(usize, usize, f64)>,
    pub pivots: usize,
}

/// Spanning-tree basis of the transportation problem; node `r` is row `r`,
/// node `n + c` is column `c`.
struct Basis {
    n: usize,
    m: usize,
    arcs: Vec<(usize, usize, f64)>,
    adj: Vec<Vec<usize>>,
    parent_arc: Vec<usize>,
    parent: Vec<usize>,
    depth: Vec<usize>,
    potential: Vec<f64>,
    queue: Vec<usize>,
}

impl Basis {
    /// North-west corner rule; always yields exactly `n + m - 1` arcs forming a tree.
    fn northwest(supply: &[f64], demand: &[f64], cost: &[f64]) -> Self {
        let (n, m) = (supply.len(), demand.len());
        let (mut s, mut d) = (supply.to_vec(), demand.to_vec());
        let mut arcs = Vec::with_capacity(n + m - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let f = s[i].min(d[j]).max(0.0);
            arcs.push((i, j, f));
            s[i] -= f;
            d[j] -= f;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if i == n - 1 {
                j += 1;
            } else if j == m - 1 || s[i] < d[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        let nodes = n + m;
        let mut adj = vec![Vec::new(); nodes];
        for (a, &(r, c, _)) in arcs.iter().enumerate() {
            adj[r].push(a);
            adj[n + c].push(a);
        }
        let mut basis = Self {
            n,
            m,
            arcs,
            adj,
            parent_arc: vec![usize::MAX; nodes],
            parent: vec![usize::MAX; nodes],
            depth: vec![0; nodes],
            potential: vec![0.0; nodes],
            queue: Vec::with_capacity(nodes),
        };
        basis.relabel(0, usize::MAX, 0, 0.0, cost);
        debug_assert_eq!(basis.queue.len(), nodes, "basis is not a spanning tree");
        basis
    }

    fn other_end(&self, arc: usize, node: usize) -> usize {
        let (r, c, _) = self.arcs[arc];
        if node < self.n {
            self.n + c
        } else {
            r
        }
    }

    /// Sets tree labels for the component reached from `start` without crossing `via`.
    fn relabel(&mut self, start: usize, via: usize, depth: usize, potential: f64, cost: &[f64]) {
        self.parent_arc[start] = via;
        self.depth[start] = depth;
        self.potential[start] = potential;
        self.queue.clear();
        self.queue.push(start);
        let mut head = 0;
        while head < self.queue.len() {
            let node = self.queue[head];
            head += 1;
            for k in 0..self.adj[node].len() {
                let a = self.adj[node][k];
                if a == self.parent_arc[node] {
                    continue;
                }
                let other = self.other_end(a, node);
                let (r, c, _) = self.arcs[a];
                self.potential[other] = cost[r * self.m + c] - self.potential[node];
                self.parent_arc[other] = a;
                self.parent[other] = node;
                self.depth[other] = self.depth[node] + 1;
                self.queue.push(other);
            }
        }
    }

    /// Tree arcs on the path from column `col` to row `row`, in path order, and the
    /// number of them on the column side of the apex.
    fn cycle(&self, row: usize, col: usize) -> (Vec<usize>, usize) {
        let (mut p, mut q) = (row, self.n + col);
        let mut from_row = Vec::new();
        let mut from_col = Vec::new();
        while self.depth[p] > self.depth[q] {
            from_row.push(self.parent_arc[p]);
            p = self.parent[p];
        }
        while self.depth[q] > self.depth[p] {
            from_col.push(self.parent_arc[q]);
            q = self.parent[q];
        }
        while p != q {
            from_row.push(self.parent_arc[p]);
            p = self.parent[p];
            from_col.push(self.parent_arc[q]);
            q = self.parent[q];
        }
        let split = from_col.len();
        from_col.extend(from_row.into_iter().rev());
        (from_col, split)
    }

    /// Replaces tree arc `leaving` by `(row, col)` carrying `flow`. `col_side` says whether the
    /// leaving arc sat between the column node and the apex of the cycle.
    fn exchange(&mut self, leaving: usize, row: usize, col: usize, flow: f64, col_side: bool, cost: &[f64]) {
        let (lr, lc, _) = self.arcs[leaving];
        for node in [lr, self.n + lc] {
            let list = &mut self.adj[node];
            let k = list.iter().position(|&a| a == leaving).expect("arc is in the tree");
            list.swap_remove(k);
        }
        self.arcs[leaving] = (row, col, flow);
        self.adj[row].push(leaving);
        self.adj[self.n + col].push(leaving);
        // the detached component hangs below the endpoint on the leaving arc's side
        let (anchor, start) = if col_side {
            (row, self.n + col)
        } else {
            (self.n + col, row)
        };
        self.parent[start] = anchor;
        let depth = self.depth[anchor] + 1;
        let potential = cost[row * self.m + col] - self.potential[anchor];
        self.relabel(start, leaving, depth, potential, cost);
    }
}

/// Exact optimal transport by the primal transportation simplex with block pricing.
pub fn exact_transport(a: &WeightedCloud, b: &WeightedCloud) -> Result<TransportPlan> {
    check_pair(a, b)?;
    let (n, m) = (a.len(), b.len());
    let size = n * m;
    if size > EXACT_SIZE_LIMIT {
        return Err(Error::TooLarge {
            size,
            limit: EXACT_SIZE_LIMIT,
        });
    }
    let mut cost = Vec::with_capacity(size);
    for i in 0..n {
        for j in 0..m {
            cost.push(sq_dist(a.point(i), b.point(j)));
        }
    }
    let scale = cost.iter().cloned().fold(0.0, f64::max).max(1.0);
    let tol = 1e-12 * scale;
    let mut basis = Basis::northwest(a.masses(), b.masses(), &cost);
    let mut in_basis = vec![false; size];
    for &(r, c, _) in &basis.arcs {
        in_basis[r * m + c] = true;
    }
    let block = ((size as f64).sqrt() as usize).max(64).min(size);
    let mut cursor = 0;
    let mut pivots = 0;
    let max_pivots = 50 * size + 1000;
    loop {
        // block search for the most negative reduced cost
        let mut best = (usize::MAX, -tol);
        let mut scanned = 0;
        while scanned < size {
            let end = (scanned + block).min(size);
            for _ in scanned..end {
                let cell = cursor;
                cursor += 1;
                if cursor == size {
                    cursor = 0;
                }
                if in_basis[cell] {
                    continue;
                }
                let (r, c) = (cell / m, cell % m);
                let red = cost[cell] - basis.potential[r] - basis.potential[n + c];
                if red < best.1 {
                    best = (cell, red);
                }
            }
            scanned = end;
            if best.0 != usize::MAX {
                break;
            }
        }
        if best.0 == usize::MAX {
            break;
        }
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::NotConverged {
                iterations: pivots,
                violation: best.1.abs(),
            });
        }
        let (row, col) = (best.0 / m, best.0 % m);
        let (path, split) = basis.cycle(row, col);
        // arcs at even path positions lose flow
        let mut theta = f64::INFINITY;
        let mut leaving = (usize::MAX, 0);
        for (k, &arc) in path.iter().enumerate() {
            if k % 2 == 0 && basis.arcs[arc].2 < theta {
                theta = basis.arcs[arc].2;
                leaving = (arc, k);
            }
        }
        let theta = theta.max(0.0);
        for (k, &arc) in path.iter().enumerate() {
            let f = &mut basis.arcs[arc].2;
            if k % 2 == 0 {
                *f = (*f - theta).max(0.0);
            } else {
                *f += theta;
            }
        }
        let (lr, lc, _) = basis.arcs[leaving.0];
        in_basis[lr * m + lc] = false;
        in_basis[best.0] = true;
        basis.exchange(leaving.0, row, col, theta, leaving.1 < split, &cost);
    }
    // drop rounding residue left by flow subtraction
    let max_mass = a.masses().iter().chain(b.masses()).cloned().fold(0.0, f64::max);
    let residue = 64.0 * f64::EPSILON * max_mass;
    for arc in basis.arcs.iter_mut() {
        if arc.2 < residue {
            arc.2 = 0.0;
        }
    }
    let total: f64 = basis
        .arcs
        .iter()
        .map(|&(r, c, f)| f * cost[r * m + c])
        .sum();
    Ok(TransportPlan {
        cost: total.max(0.0),
        flows: basis.arcs,
        pivots,
    })
}

/// Exact 2-Wasserstein distance.
pub fn wasserstein2_exact(a: &WeightedCloud, b: &WeightedCloud) -> Result<f64> {
    Ok(exact_transport(a, b)?.cost.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornOptions {
    pub epsilon: f64,
    pub max_iter: usize,
    /// Stop once the L1 violation of the source marginal drops below this.
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            max_iter: 100_000,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornResult {
    /// Square root of the transport cost of the entropic plan.
    pub value: f64,
    pub iterations: usize,
    pub violation: f64,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Entropic 2-Wasserstein estimate from log-domain Sinkhorn iterations.
pub fn wasserstein2_sinkhorn(
    a: &WeightedCloud,
    b: &WeightedCloud,
    opts: SinkhornOptions,
) -> Result<SinkhornResult> {
    check_pair(a, b)?;
    let eps = opts.epsilon;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid(format!("entropic regularization must be positive, got {eps}")));
    }
    let keep = |c: &WeightedCloud| -> Vec<usize> { (0..c.len()).filter(|&k| c.masses[k] > 0.0).collect() };
    let (ia, ib) = (keep(a), keep(b));
    let (n, m) = (ia.len(), ib.len());
    let log_a: Vec<f64> = ia.iter().map(|&i| a.masses[i].ln()).collect();
    let log_b: Vec<f64> = ib.iter().map(|&j| b.masses[j].ln()).collect();
    let mut cost = Vec::with_capacity(n * m);
    for &i in &ia {
        for &j in &ib {
            cost.push(sq_dist(a.point(i), b.point(j)));
        }
    }
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut violation = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        for i in 0..n {
            let row = &cost[i * m..(i + 1) * m];
            f[i] = -eps * log_sum_exp((0..m).map(|j| (g[j] - row[j]) / eps + log_b[j]));
        }
        for j in 0..m {
            g[j] = -eps * log_sum_exp((0..n).map(|i| (f[i] - cost[i * m + j]) / eps + log_a[i]));
        }
        if iterations % 10 == 0 || iterations == opts.max_iter {
            violation = (0..n)
                .map(|i| {
                    let row: f64 = (0..m)
                        .map(|j| ((f[i] + g[j] - cost[i * m + j]) / eps + log_a[i] + log_b[j]).exp())
                        .sum();
                    (row - a.masses[ia[i]]).abs()
                })
                .sum();
            if violation < opts.tol {
                break;
            }
        }
    }
    if !(violation < opts.tol) {
        return Err(Error::NotConverged {
            iterations,
            violation,
        });
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            let c = cost[i * m + j];
            total += ((f[i] + g[j] - c) / eps + log_a[i] + log_b[j]).exp() * c;
        }
    }
    Ok(SinkhornResult {
        value: total.max(0.0).sqrt(),
        iterations,
        violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, k: usize, dim: usize, weighted: bool) -> WeightedCloud {
        let pts: Vec<f64> = (0..k * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if !weighted {
            return WeightedCloud::uniform(pts, dim).unwrap();
        }
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        let mut w: Vec<f64> = w.iter().map(|v| v / total).collect();
        let drift = 1.0 - w.iter().sum::<f64>();
        w[0] += drift;
        WeightedCloud::new(pts, w, dim).unwrap()
    }

    #[test]
    fn closed_form_cases() {
        let a = WeightedCloud::uniform(vec![0.0, 0.0], 2).unwrap();
        let b = WeightedCloud::uniform(vec![3.0, 0.0], 2).unwrap();
        assert!((wasserstein2_exact(&a, &b).unwrap() - 3.0).abs() <= 1e-12);
        let a = WeightedCloud::uniform(vec![0.0], 1).unwrap();
        let b = WeightedCloud::uniform(vec![-1.0, 1.0], 1).unwrap();
        assert!((wasserstein2_exact(&a, &b).unwrap() - 1.0).abs() <= 1e-12);
        assert_eq!(wasserstein2_exact(&b, &b).unwrap(), 0.0);
    }

    #[test]
    fn plan_marginals_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (n, m) in [(7, 13), (20, 20), (1, 5), (30, 9)] {
            let a = random_cloud(&mut rng, n, 2, true);
            let b = random_cloud(&mut rng, m, 2, true);
            let plan = exact_transport(&a, &b).unwrap();
            let mut rows = vec![0.0; n];
            let mut cols = vec![0.0; m];
            for &(r, c, f) in &plan.flows {
                assert!(f >= 0.0);
                rows[r] += f;
                cols[c] += f;
            }
            for (x, y) in rows.iter().zip(a.masses()).chain(cols.iter().zip(b.masses())) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn matches_brute_force_permutations() {
        // uniform n-to-n OT is attained at a permutation
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = 5;
            let a = random_cloud(&mut rng, n, 2, false);
            let b = random_cloud(&mut rng, n, 2, false);
            let mut perm: Vec<usize> = (0..n).collect();
            let mut best = f64::INFINITY;
            permute(&mut perm, 0, &mut |p| {
                let c: f64 = p.iter().enumerate().map(|(i, &j)| sq_dist(a.point(i), b.point(j))).sum();
                best = best.min(c / n as f64);
            });
            assert_relative_eq!(exact_transport(&a, &b).unwrap().cost, best, epsilon = 1e-12);
        }
    }

    fn permute(p: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            visit(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, visit);
            p.swap(k, i);
        }
    }

    #[test]
    fn size_guard() {
        let a = WeightedCloud::uniform(vec![0.0; 2000], 1).unwrap();
        let b = WeightedCloud::uniform(vec![0.0; 1001], 1).unwrap();
        assert!(matches!(wasserstein2_exact(&a, &b), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn sinkhorn_cases() {
        let a = WeightedCloud::uniform(vec![0.0, 0.0], 2).unwrap();
        let b = WeightedCloud::uniform(vec![3.0, 0.0], 2).unwrap();
        let r = wasserstein2_sinkhorn(&a, &b, SinkhornOptions::default()).unwrap();
        assert!((r.value - 3.0).abs() <= 0.03);
        let zero = SinkhornOptions {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(wasserstein2_sinkhorn(&a, &b, zero).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_cloud(&mut rng, 30, 2, false);
        let opts = SinkhornOptions {
            epsilon: 0.001,
            ..Default::default()
        };
        let r = wasserstein2_sinkhorn(&c, &c, opts).unwrap();
        assert!(r.value <= 0.05, "{}", r.value);
    }

    #[test]
    fn sinkhorn_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_cloud(&mut rng, 20, 2, true);
        let b = random_cloud(&mut rng, 20, 2, true);
        let opts = SinkhornOptions {
            epsilon: 1e-3,
            max_iter: 3,
            tol: 1e-14,
        };
        assert!(matches!(
            wasserstein2_sinkhorn(&a, &b, opts),
            Err(Error::NotConverged { .. })
        ));
    }

    fn quantile_w2(a: &WeightedCloud, b: &WeightedCloud) -> f64 {
        let sorted = |c: &WeightedCloud| {
            let mut v: Vec<(f64, f64)> = (0..c.len()).map(|k| (c.point(k)[0], c.masses()[k])).collect();
            v.sort_by(|x, y| x.0.total_cmp(&y.0));
            v
        };
        let (qa, qb) = (sorted(a), sorted(b));
        let (mut i, mut j, mut t, mut total) = (0, 0, 0.0, 0.0);
        let (mut ca, mut cb) = (qa[0].1, qb[0].1);
        while i < qa.len() && j < qb.len() {
            let next = ca.min(cb);
            total += (next - t).max(0.0) * (qa[i].0 - qb[j].0).powi(2);
            t = next;
            if ca <= cb {
                i += 1;
                if i < qa.len() {
                    ca += qa[i].1;
                }
            } else {
                j += 1;
                if j < qb.len() {
                    cb += qb[j].1;
                }
            }
        }
        total.sqrt()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn metric_axioms(seed in 0u64..10_000, d in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ka = rng.random_range(1..15);
            let kb = rng.random_range(1..15);
            let kc = rng.random_range(1..15);
            let a = random_cloud(&mut rng, ka, d, true);
            let b = random_cloud(&mut rng, kb, d, true);
            let c = random_cloud(&mut rng, kc, d, true);
            let ab = wasserstein2_exact(&a, &b).unwrap();
            let ba = wasserstein2_exact(&b, &a).unwrap();
            let bc = wasserstein2_exact(&b, &c).unwrap();
            let ac = wasserstein2_exact(&a, &c).unwrap();
            proptest::prop_assert!(ab >= 0.0 && (ab - ba).abs() <= 1e-9);
            proptest::prop_assert!(ac <= ab + bc + 1e-9);
            proptest::prop_assert!(ab > 0.0);
            // same measure, points listed in another order
            let order: Vec<usize> = (0..ka).rev().collect();
            let pts: Vec<f64> = order.iter().flat_map(|&k| a.point(k).to_vec()).collect();
            let masses: Vec<f64> = order.iter().map(|&k| a.masses()[k]).collect();
            let shuffled = WeightedCloud::new(pts, masses, d).unwrap();
            proptest::prop_assert!(wasserstein2_exact(&a, &shuffled).unwrap() <= 1e-9);
        }

        #[test]
        fn one_dimensional_quantile_coupling(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ka = rng.random_range(1..30);
            let kb = rng.random_range(1..30);
            let a = random_cloud(&mut rng, ka, 1, true);
            let b = random_cloud(&mut rng, kb, 1, true);
            let exact = wasserstein2_exact(&a, &b).unwrap();
            proptest::prop_assert!((exact - quantile_w2(&a, &b)).abs() <= 1e-9);
        }
    }

    #[test]
    fn sinkhorn_approaches_exact_as_epsilon_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let a = random_cloud(&mut rng, 20, 2, true);
            let b = random_cloud(&mut rng, 25, 2, true);
            let exact = wasserstein2_exact(&a, &b).unwrap();
            let gaps: Vec<f64> = [0.5, 0.1, 0.02]
                .iter()
                .map(|&epsilon| {
                    let opts = SinkhornOptions {
                        epsilon,
                        tol: 1e-11,
                        ..Default::default()
                    };
                    (wasserstein2_sinkhorn(&a, &b, opts).unwrap().value - exact).abs()
                })
                .collect();
            assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        }
    }
}
