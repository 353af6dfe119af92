//! Uniform time grids, sampled paths and two-parameter grid functions.
//!
//! Conventions used by every estimator downstream:
//!
//! * grids are uniform, t_i = t0 + i (t1 - t0) / (n - 1), with n >= 2;
//! * a sampled path is interpreted as piecewise linear between nodes;
//! * Hölder-type quantities are suprema over grid pairs and therefore lower
//!   bounds for their continuum counterparts;
//! * pair scans are exhaustive up to `MAX_EXHAUSTIVE_NODES` nodes and fall
//!   back to dyadic strides (i, i + 2^m) beyond that, trading sharpness for
//!   an O(n log n) scan.

use crate::error::{Error, Result};
use crate::linalg;

/// Exhaustive O(n^2) pair scans are allowed up to this many nodes.
pub const MAX_EXHAUSTIVE_NODES: usize = 4097;

/// Uniform grid on [t0, t1] with n >= 2 nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) {
            return Err(Error::invalid("grid endpoints must be finite"));
        }
        if t1 <= t0 {
            return Err(Error::invalid(format!(
                "grid needs t1 > t0, got [{t0}, {t1}]"
            )));
        }
        if n < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 nodes, got {n}")));
        }
        Ok(TimeGrid { t0, t1, n })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn span(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn step(&self) -> f64 {
        (self.t1 - self.t0) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        self.t0 + i as f64 * (self.t1 - self.t0) / (self.n - 1) as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    /// Index of the node at time `t`; errors when `t` falls between nodes.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let h = self.step();
        let pos = ((t - self.t0) / h).round();
        let idx = pos as usize;
        if pos < 0.0 || idx >= self.n || (self.node(idx) - t).abs() > 1e-10 * h.max(1.0) {
            return Err(Error::invalid(format!(
                "time {t} is not a node of the grid [{}, {}] with {} nodes",
                self.t0, self.t1, self.n
            )));
        }
        Ok(idx)
    }

    /// Prefix grid over the first `m + 1` nodes, i.e. [t0, t_m].
    pub fn prefix(&self, m: usize) -> Result<TimeGrid> {
        if m == 0 || m >= self.n {
            return Err(Error::invalid(format!(
                "prefix up to node {m} not available on a {}-node grid",
                self.n
            )));
        }
        TimeGrid::new(self.t0, self.node(m), m + 1)
    }
}

/// Visit the (i, j), i < j pairs used by norm scans: all of them on small
/// grids, dyadic strides beyond `MAX_EXHAUSTIVE_NODES`.
pub fn for_each_scan_pair(n: usize, mut f: impl FnMut(usize, usize)) {
    if n <= MAX_EXHAUSTIVE_NODES {
        for i in 0..n {
            for j in i + 1..n {
                f(i, j);
            }
        }
    } else {
        for i in 0..n {
            let mut gap = 1usize;
            while i + gap < n {
                f(i, i + gap);
                gap *= 2;
            }
        }
    }
}

/// d-dimensional path sampled on a uniform grid, row-major (n x d).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl SampledPath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("path dimension must be at least 1"));
        }
        if values.len() != grid.len() * dim {
            return Err(Error::invalid(format!(
                "value buffer has {} entries, grid x dim needs {}",
                values.len(),
                grid.len() * dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("path values must be finite"));
        }
        Ok(SampledPath { grid, dim, values })
    }

    /// Sample `f` at every node. The closure must return `dim` values.
    pub fn from_fn(grid: TimeGrid, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len() * dim);
        for t in grid.nodes() {
            let v = f(t);
            assert_eq!(v.len(), dim, "sampling closure returned wrong dimension");
            values.extend_from_slice(&v);
        }
        SampledPath::new(grid, dim, values)
    }

    /// Scalar convenience wrapper around [`SampledPath::from_fn`].
    pub fn from_scalar_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        SampledPath::from_fn(grid, 1, |t| vec![f(t)])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// x_j - x_i.
    pub fn increment(&self, i: usize, j: usize) -> Vec<f64> {
        linalg::sub(self.value(j), self.value(i))
    }

    /// Piecewise-linear evaluation. `t` may overshoot the grid by rounding
    /// noise only.
    pub fn interp(&self, t: f64) -> Vec<f64> {
        let (t0, t1) = (self.grid.t0(), self.grid.t1());
        let tol = 1e-9 * self.grid.span().max(1.0);
        assert!(
            t >= t0 - tol && t <= t1 + tol,
            "interpolation time {t} outside [{t0}, {t1}]"
        );
        let t = t.clamp(t0, t1);
        let h = self.grid.step();
        let pos = (t - t0) / h;
        let i = (pos.floor() as usize).min(self.grid.len() - 2);
        let w = pos - i as f64;
        let a = self.value(i);
        let b = self.value(i + 1);
        (0..self.dim).map(|k| a[k] + w * (b[k] - a[k])).collect()
    }

    /// Componentwise difference of two paths on the same grid.
    pub fn difference(&self, other: &SampledPath) -> Result<SampledPath> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(Error::invalid(
                "path difference needs matching grids and dimensions",
            ));
        }
        SampledPath::new(
            self.grid,
            self.dim,
            linalg::sub(&self.values, &other.values),
        )
    }

    /// CSV with header `t,x1,...,xd` and 17-significant-digit values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for k in 1..=self.dim {
            out.push_str(&format!(",x{k}"));
        }
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!("{:.16e}", self.grid.node(i)));
            for v in self.value(i) {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    /// Inverse of [`SampledPath::to_csv`]. The time column must be uniform.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("empty path CSV"))?;
        let dim = header.split(',').count().saturating_sub(1);
        if dim == 0 || !header.starts_with('t') {
            return Err(Error::invalid("path CSV header must be t,x1,...,xd"));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::invalid(format!(
                    "path CSV row {} has {} fields, expected {}",
                    ln + 2,
                    fields.len(),
                    dim + 1
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad float {s:?} in path CSV")))
            };
            times.push(parse(fields[0])?);
            for f in &fields[1..] {
                values.push(parse(f)?);
            }
        }
        if times.len() < 2 {
            return Err(Error::invalid("path CSV needs at least two rows"));
        }
        let n = times.len();
        let grid = TimeGrid::new(times[0], times[n - 1], n)?;
        let tol = 1e-9 * grid.span().max(1.0);
        for (i, &t) in times.iter().enumerate() {
            if (t - grid.node(i)).abs() > tol {
                return Err(Error::invalid(format!(
                    "path CSV time column is not uniform at row {}",
                    i + 2
                )));
            }
        }
        SampledPath::new(grid, dim, values)
    }
}

/// Grid Hölder seminorm: max over scan pairs of |x_j - x_i| / (t_j - t_i)^gamma.
pub fn holder_seminorm(path: &SampledPath, gamma: f64) -> f64 {
    assert!(
        gamma > 0.0 && gamma <= 1.0,
        "holder exponent must lie in (0, 1], got {gamma}"
    );
    let n = path.len();
    let h = path.grid().step();
    // Uniform grid: cache (k h)^gamma per node gap.
    let gap_pow: Vec<f64> = (0..n).map(|k| (k as f64 * h).powf(gamma)).collect();
    let mut best = 0.0_f64;
    for_each_scan_pair(n, |i, j| {
        let d = linalg::norm(&path.increment(i, j));
        let q = d / gap_pow[j - i];
        if q > best {
            best = q;
        }
    });
    best
}

/// Function of grid node pairs (i <= j) with a fixed number of tensor
/// entries per pair, stored upper-triangular. The diagonal h(t_i, t_i) is
/// stored too (identically zero for every object this crate builds).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoParamFunction {
    grid: TimeGrid,
    entry_len: usize,
    values: Vec<f64>,
}

impl TwoParamFunction {
    /// Build from a closure over node index pairs i <= j.
    pub fn from_fn(
        grid: TimeGrid,
        entry_len: usize,
        f: impl Fn(usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        if entry_len == 0 {
            return Err(Error::invalid("two-parameter entries must be non-empty"));
        }
        let n = grid.len();
        if n > MAX_EXHAUSTIVE_NODES {
            return Err(Error::invalid(format!(
                "dense two-parameter storage is capped at {MAX_EXHAUSTIVE_NODES} nodes, got {n}"
            )));
        }
        let mut values = Vec::with_capacity(n * (n + 1) / 2 * entry_len);
        for i in 0..n {
            for j in i..n {
                let e = f(i, j);
                assert_eq!(e.len(), entry_len, "pair closure returned wrong entry size");
                values.extend_from_slice(&e);
            }
        }
        Ok(TwoParamFunction {
            grid,
            entry_len,
            values,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn entry_len(&self) -> usize {
        self.entry_len
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j && j < self.grid.len());
        let n = self.grid.len();
        // Row i starts after rows 0..i, row k holding n - k entries.
        let row_start = i * (2 * n - i + 1) / 2;
        (row_start + (j - i)) * self.entry_len
    }

    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.values[o..o + self.entry_len]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = self.offset(i, j);
        &mut self.values[o..o + self.entry_len]
    }
}

/// Grid two-parameter norm: max over scan pairs i < j of
/// |h(t_i, t_j)|_F / (t_j - t_i)^nu.
pub fn two_param_norm(h: &TwoParamFunction, nu: f64) -> f64 {
    assert!(nu > 0.0 && nu <= 2.0, "two-parameter exponent must lie in (0, 2], got {nu}");
    let n = h.grid().len();
    let step = h.grid().step();
    let gap_pow: Vec<f64> = (0..n).map(|k| (k as f64 * step).powf(nu)).collect();
    let mut best = 0.0_f64;
    for_each_scan_pair(n, |i, j| {
        let q = linalg::norm(h.entry(i, j)) / gap_pow[j - i];
        if q > best {
            best = q;
        }
    });
    best
}

/// Additivity defect h(s, t) - h(s, u) - h(u, t) over a node triple
/// s = t_i <= u = t_k <= t = t_j.
pub fn coherence_defect(h: &TwoParamFunction, i: usize, k: usize, j: usize) -> Vec<f64> {
    assert!(
        i <= k && k <= j && j < h.grid().len(),
        "coherence defect needs an ordered node triple"
    );
    let mut out = h.entry(i, j).to_vec();
    for (o, v) in out.iter_mut().zip(h.entry(i, k)) {
        *o -= v;
    }
    for (o, v) in out.iter_mut().zip(h.entry(k, j)) {
        *o -= v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_grid(n: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn nodes_are_uniform_and_hit_endpoints() {
        let g = TimeGrid::new(0.0, 1.0, 5).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.step(), 0.25);
        assert_eq!(g.node(4), 1.0);
    }

    #[test]
    fn degenerate_grids_are_rejected() {
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 8).is_err());
        assert!(TimeGrid::new(2.0, 1.0, 8).is_err());
    }

    #[test]
    fn sqrt_path_has_unit_half_holder_norm() {
        // |sqrt(t) - sqrt(s)| / (t-s)^(1/2) equals 1 exactly at s = 0 and is
        // smaller for s > 0, so the grid supremum is 1.
        let path = SampledPath::from_scalar_fn(unit_grid(101), |t| t.sqrt()).unwrap();
        let v = holder_seminorm(&path, 0.5);
        assert!((v - 1.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn linear_path_lipschitz_norm_is_slope() {
        let path = SampledPath::from_fn(unit_grid(64), 2, |t| vec![3.0 * t, -4.0 * t]).unwrap();
        let v = holder_seminorm(&path, 1.0);
        assert!((v - 5.0).abs() < 1e-12, "got {v}");
        let flat = SampledPath::from_scalar_fn(unit_grid(64), |_| 2.5).unwrap();
        assert_eq!(holder_seminorm(&flat, 0.5), 0.0);
    }

    #[test]
    fn holder_seminorm_grows_toward_continuum_under_refinement() {
        // f(t) = t^2 on [0,1] with gamma = 1: grid value is 2 - h, increasing
        // to the continuum Lipschitz constant 2.
        let mut prev = 0.0;
        for n in [17usize, 65, 257] {
            let path = SampledPath::from_scalar_fn(unit_grid(n), |t| t * t).unwrap();
            let v = holder_seminorm(&path, 1.0);
            let h = 1.0 / (n - 1) as f64;
            assert!((v - (2.0 - h)).abs() < 1e-12, "n={n} got {v}");
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn scan_pairs_are_exhaustive_on_small_grids_and_strided_beyond() {
        let mut count = 0usize;
        for_each_scan_pair(10, |_, _| count += 1);
        assert_eq!(count, 45);

        let n = MAX_EXHAUSTIVE_NODES + 10;
        let mut count = 0usize;
        let mut has_adjacent = 0usize;
        for_each_scan_pair(n, |i, j| {
            count += 1;
            if j == i + 1 {
                has_adjacent += 1;
            }
        });
        assert_eq!(has_adjacent, n - 1);
        assert!(count <= n * 14, "stride scan should be O(n log n), got {count}");
    }

    #[test]
    fn two_param_norm_oracles() {
        // h(s,t) = t - s at nu = 2 peaks at the smallest gap: 1 / step.
        let g = unit_grid(5);
        let h = TwoParamFunction::from_fn(g, 1, |i, j| vec![g.node(j) - g.node(i)]).unwrap();
        let v = two_param_norm(&h, 2.0);
        assert!((v - 4.0).abs() < 1e-12, "got {v}");
        // h(s,t) = (t - s)^2 at nu = 2 is identically 1 over pairs.
        let h2 =
            TwoParamFunction::from_fn(g, 1, |i, j| vec![(g.node(j) - g.node(i)).powi(2)]).unwrap();
        let v2 = two_param_norm(&h2, 2.0);
        assert!((v2 - 1.0).abs() < 1e-12, "got {v2}");
    }

    #[test]
    fn coherence_defect_of_squared_increment() {
        // h(s,t) = (t-s)^2, triple (0, 1/2, 1): 1 - 1/4 - 1/4 = 1/2.
        let g = TimeGrid::new(0.0, 1.0, 3).unwrap();
        let h = TwoParamFunction::from_fn(g, 1, |i, j| vec![(g.node(j) - g.node(i)).powi(2)])
            .unwrap();
        let d = coherence_defect(&h, 0, 1, 2);
        assert!((d[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let path = SampledPath::from_fn(unit_grid(17), 2, |t| {
            vec![(1.0 + t).ln() * 0.123456789123456789, t.exp()]
        })
        .unwrap();
        let text = path.to_csv();
        assert!(text.starts_with("t,x1,x2\n"));
        let back = SampledPath::from_csv(&text).unwrap();
        assert_eq!(path.values(), back.values());
        assert_eq!(path.dim(), back.dim());
        assert_eq!(path.len(), back.len());
    }

    #[test]
    fn interp_matches_closed_form_on_linear_path() {
        let path = SampledPath::from_fn(unit_grid(9), 2, |t| vec![2.0 * t, 1.0 - t]).unwrap();
        let v = path.interp(0.3);
        assert!((v[0] - 0.6).abs() < 1e-15);
        assert!((v[1] - 0.7).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn additive_two_param_functions_have_zero_defect(
            vals in proptest::collection::vec(-10.0_f64..10.0, 9),
            triple in (0usize..9, 0usize..9, 0usize..9),
        ) {
            // h(s,t) = f(t) - f(s) is additive, so every defect vanishes.
            let g = unit_grid(9);
            let h = TwoParamFunction::from_fn(g, 1, |i, j| vec![vals[j] - vals[i]]).unwrap();
            let (mut a, mut b, mut c) = triple;
            if a > b { std::mem::swap(&mut a, &mut b); }
            if b > c { std::mem::swap(&mut b, &mut c); }
            if a > b { std::mem::swap(&mut a, &mut b); }
            let d = coherence_defect(&h, a, b, c);
            prop_assert!(d[0].abs() < 1e-12);
        }

        #[test]
        fn holder_scale_embedding_on_unit_interval(
            vals in proptest::collection::vec(-5.0_f64..5.0, 12),
        ) {
            // On spans <= 1, lowering the exponent can only lower the seminorm.
            let g = unit_grid(12);
            let path = SampledPath::new(g, 1, vals).unwrap();
            let hi = holder_seminorm(&path, 0.5);
            let lo = holder_seminorm(&path, 0.3);
            prop_assert!(lo <= hi + 1e-12);
        }
    }
}
