//! Second-order enhancement of a sampled path: the pair (X, A) where
//! A(s, t) approximates the iterated integral of X - X_s against dX.
//!
//! Storage is O(n): only adjacent-node areas are kept, everything else is
//! reconstructed through the additivity identity
//!
//!   A(s, t) = A(s, u) + A(u, t) + (X_u - X_s) (X_t - X_u)^T,
//!
//! which the reconstruction satisfies by construction up to rounding. A
//! dense variant exists so diagnostics can probe areas that deliberately
//! violate the identity.
//!
//! The canonical lift of a sampled path treats it as piecewise linear, for
//! which the adjacent-step area is exactly half the squared increment; that
//! choice makes the enhancement geometric: the symmetric part of A(s, t)
//! equals half of (X_t - X_s)(X_t - X_s)^T.

use crate::error::{Error, Result};
use crate::grid::{for_each_scan_pair, holder_seminorm, SampledPath, TwoParamFunction};
use crate::linalg;

/// Lower bound for admissible Hölder scales of the enhancement.
pub const GAMMA_MIN: f64 = 1.0 / 3.0;
/// Upper bound: beyond 1/2 a first-order theory would do.
pub const GAMMA_MAX: f64 = 0.5;

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > GAMMA_MIN && gamma <= GAMMA_MAX) {
        return Err(Error::invalid(format!(
            "enhancement scale gamma must lie in (1/3, 1/2], got {gamma}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum AreaStorage {
    /// Adjacent-step areas, (n-1) blocks of d*d, plus prefix areas
    /// A(0, i) for O(1) reconstruction of arbitrary pairs.
    Adjacent { prefix: Vec<f64> },
    /// Explicit per-pair areas. Diagnostics only; O(n^2) memory.
    Dense(TwoParamFunction),
}

#[derive(Debug, Clone)]
pub struct RoughPath {
    base: SampledPath,
    gamma: f64,
    storage: AreaStorage,
}

impl RoughPath {
    /// Assemble from adjacent-step areas laid out as (n-1) row-major d x d
    /// blocks. Non-adjacent areas follow by additivity.
    pub fn from_adjacent_area(base: SampledPath, adjacent: Vec<f64>, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let d = base.dim();
        let n = base.len();
        if adjacent.len() != (n - 1) * d * d {
            return Err(Error::invalid(format!(
                "adjacent area buffer has {} entries, expected {}",
                adjacent.len(),
                (n - 1) * d * d
            )));
        }
        // prefix[k] = A(0, k); A(0, k+1) = A(0, k) + A(k, k+1)
        //                                + (X_k - X_0)(X_{k+1} - X_k)^T.
        let mut prefix = vec![0.0; n * d * d];
        for k in 0..n - 1 {
            let dx0k = base.increment(0, k);
            let dxk = base.increment(k, k + 1);
            let cross = linalg::outer(&dx0k, &dxk);
            let (lo, hi) = prefix.split_at_mut((k + 1) * d * d);
            let prev = &lo[k * d * d..];
            let adj = &adjacent[k * d * d..(k + 1) * d * d];
            for e in 0..d * d {
                hi[e] = prev[e] + adj[e] + cross[e];
            }
        }
        Ok(RoughPath {
            base,
            gamma,
            storage: AreaStorage::Adjacent { prefix },
        })
    }

    /// Assemble from an explicit dense area table (entries are row-major
    /// d x d per node pair). Intended for perturbation experiments; the
    /// table is taken at face value, defects and all.
    pub fn from_dense_area(base: SampledPath, area: TwoParamFunction, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let d = base.dim();
        if area.grid() != base.grid() {
            return Err(Error::invalid("area table grid differs from path grid"));
        }
        if area.entry_len() != d * d {
            return Err(Error::invalid(format!(
                "area entries have {} components, path dimension needs {}",
                area.entry_len(),
                d * d
            )));
        }
        Ok(RoughPath {
            base,
            gamma,
            storage: AreaStorage::Dense(area),
        })
    }

    pub fn base(&self) -> &SampledPath {
        &self.base
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Path increment X_j - X_i.
    pub fn increment(&self, i: usize, j: usize) -> Vec<f64> {
        self.base.increment(i, j)
    }

    /// Area A(t_i, t_j), i <= j, as a row-major d x d block.
    pub fn area(&self, i: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim() * self.dim()];
        self.area_into(i, j, &mut out);
        out
    }

    /// Allocation-free variant of [`RoughPath::area`] for hot scans.
    pub fn area_into(&self, i: usize, j: usize, out: &mut [f64]) {
        debug_assert!(i <= j && j < self.len());
        let d = self.dim();
        debug_assert_eq!(out.len(), d * d);
        match &self.storage {
            AreaStorage::Adjacent { prefix } => {
                // A(i, j) = A(0, j) - A(0, i) - (X_i - X_0)(X_j - X_i)^T.
                let pi = &prefix[i * d * d..(i + 1) * d * d];
                let pj = &prefix[j * d * d..(j + 1) * d * d];
                let x0 = self.base.value(0);
                let xi = self.base.value(i);
                let xj = self.base.value(j);
                for a in 0..d {
                    let dx0i = xi[a] - x0[a];
                    for b in 0..d {
                        out[a * d + b] = pj[a * d + b] - pi[a * d + b] - dx0i * (xj[b] - xi[b]);
                    }
                }
            }
            AreaStorage::Dense(table) => out.copy_from_slice(table.entry(i, j)),
        }
    }

    /// Materialise the full per-pair area table.
    pub fn to_dense(&self) -> Result<TwoParamFunction> {
        let d = self.dim();
        TwoParamFunction::from_fn(*self.base.grid(), d * d, |i, j| self.area(i, j))
    }

    /// CSV of adjacent-step areas: `i,t_i,t_{i+1},A11,...,Add`.
    pub fn area_csv(&self) -> String {
        let d = self.dim();
        let grid = self.base.grid();
        let mut out = String::from("i,t_i,t_ip1");
        for a in 1..=d {
            for b in 1..=d {
                out.push_str(&format!(",A{a}{b}"));
            }
        }
        out.push('\n');
        let mut block = vec![0.0; d * d];
        for i in 0..self.len() - 1 {
            self.area_into(i, i + 1, &mut block);
            out.push_str(&format!("{i},{:.16e},{:.16e}", grid.node(i), grid.node(i + 1)));
            for v in &block {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Canonical second-order lift of a sampled path.
///
/// Adjacent-step areas are computed by composite trapezoid quadrature of
/// the first iterated integral with `refinement` sub-steps per grid step,
/// treating the path as piecewise linear. The integrand is then linear in
/// time, so the quadrature is exact and the per-step area collapses to half
/// the squared increment; the quadrature is kept literal so the refinement
/// parameter means what it says.
pub fn lift_path(x: &SampledPath, refinement: usize, gamma: f64) -> Result<RoughPath> {
    check_gamma(gamma)?;
    if refinement == 0 {
        return Err(Error::invalid("lift refinement must be at least 1"));
    }
    let d = x.dim();
    let n = x.len();
    // Trapezoid of f(w) = w over [0, 1] with `refinement` panels; the area
    // block for one step is (this factor) x increment outer product.
    let mut factor = 0.0;
    for m in 0..=refinement {
        let w = m as f64 / refinement as f64;
        let weight = if m == 0 || m == refinement { 0.5 } else { 1.0 };
        factor += weight * w;
    }
    factor /= refinement as f64;
    let mut adjacent = vec![0.0; (n - 1) * d * d];
    for i in 0..n - 1 {
        let dx = x.increment(i, i + 1);
        let block = linalg::outer(&dx, &dx);
        for (o, v) in adjacent[i * d * d..(i + 1) * d * d].iter_mut().zip(&block) {
            *o = factor * v;
        }
    }
    RoughPath::from_adjacent_area(x.clone(), adjacent, gamma)
}

/// Additivity defect A(s,t) - A(s,u) - A(u,t) - (X_u - X_s)(X_t - X_u)^T
/// over the node triple i <= k <= j, as a row-major d x d block.
pub fn chen_defect(rp: &RoughPath, i: usize, k: usize, j: usize) -> Vec<f64> {
    assert!(i <= k && k <= j && j < rp.len(), "defect needs an ordered triple");
    let d = rp.dim();
    let mut out = rp.area(i, j);
    let mid = rp.area(i, k);
    let hi = rp.area(k, j);
    let cross = linalg::outer(&rp.increment(i, k), &rp.increment(k, j));
    for e in 0..d * d {
        out[e] -= mid[e] + hi[e] + cross[e];
    }
    out
}

/// Geometricity defect Sym(A(s,t)) - (X_t - X_s)(X_t - X_s)^T / 2 at a node
/// pair i <= j.
pub fn symmetry_defect(rp: &RoughPath, i: usize, j: usize) -> Vec<f64> {
    assert!(i <= j && j < rp.len(), "defect needs an ordered pair");
    let d = rp.dim();
    let a = rp.area(i, j);
    let dx = rp.increment(i, j);
    let mut out = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            out[r * d + c] = 0.5 * (a[r * d + c] + a[c * d + r]) - 0.5 * dx[r] * dx[c];
        }
    }
    out
}

/// Largest Frobenius norm of the additivity defect over node triples.
/// Exhaustive for small grids; dyadic middle points within scan pairs
/// otherwise.
pub fn max_chen_defect(rp: &RoughPath) -> f64 {
    let n = rp.len();
    let d = rp.dim();
    let exhaustive = n <= 300;
    let mut best = 0.0_f64;
    let mut a_ij = vec![0.0; d * d];
    let mut a_ik = vec![0.0; d * d];
    let mut a_kj = vec![0.0; d * d];
    let probe = |rp: &RoughPath, i: usize, k: usize, j: usize,
                     a_ij: &mut [f64], a_ik: &mut [f64], a_kj: &mut [f64]|
     -> f64 {
        rp.area_into(i, j, a_ij);
        rp.area_into(i, k, a_ik);
        rp.area_into(k, j, a_kj);
        let xi = rp.base.value(i);
        let xk = rp.base.value(k);
        let xj = rp.base.value(j);
        let mut sq = 0.0;
        for a in 0..d {
            let dik = xk[a] - xi[a];
            for b in 0..d {
                let e = a_ij[a * d + b] - a_ik[a * d + b] - a_kj[a * d + b]
                    - dik * (xj[b] - xk[b]);
                sq += e * e;
            }
        }
        sq.sqrt()
    };
    if exhaustive {
        for i in 0..n {
            for k in i + 1..n {
                for j in k + 1..n {
                    let v = probe(rp, i, k, j, &mut a_ij, &mut a_ik, &mut a_kj);
                    if v > best {
                        best = v;
                    }
                }
            }
        }
    } else {
        for_each_scan_pair(n, |i, j| {
            let mut off = 1usize;
            while i + off < j {
                let v = probe(rp, i, i + off, j, &mut a_ij, &mut a_ik, &mut a_kj);
                if v > best {
                    best = v;
                }
                off *= 2;
            }
        });
    }
    best
}

/// Largest Frobenius norm of the geometricity defect over scan pairs.
pub fn max_symmetry_defect(rp: &RoughPath) -> f64 {
    let n = rp.len();
    let d = rp.dim();
    let mut block = vec![0.0; d * d];
    let mut best = 0.0_f64;
    for_each_scan_pair(n, |i, j| {
        rp.area_into(i, j, &mut block);
        let xi = rp.base.value(i);
        let xj = rp.base.value(j);
        let mut sq = 0.0;
        for r in 0..d {
            for c in 0..d {
                let e = 0.5 * (block[r * d + c] + block[c * d + r])
                    - 0.5 * (xj[r] - xi[r]) * (xj[c] - xi[c]);
                sq += e * e;
            }
        }
        let v = sq.sqrt();
        if v > best {
            best = v;
        }
    });
    best
}

/// Homogeneous grid norm of the enhancement.
#[derive(Debug, Clone, Copy)]
pub struct RoughPathNorm {
    /// gamma-Hölder seminorm of the base path.
    pub path: f64,
    /// 2 gamma two-parameter norm of the area.
    pub area: f64,
}

impl RoughPathNorm {
    pub fn total(&self) -> f64 {
        self.path + self.area
    }
}

/// ||X||_gamma + ||A||_{2 gamma} over grid scan pairs.
pub fn roughpath_norm(rp: &RoughPath) -> RoughPathNorm {
    let path = holder_seminorm(&rp.base, rp.gamma);
    let n = rp.len();
    let d = rp.dim();
    let step = rp.base.grid().step();
    let two_gamma = 2.0 * rp.gamma;
    let gap_pow: Vec<f64> = (0..n).map(|k| (k as f64 * step).powf(two_gamma)).collect();
    let mut block = vec![0.0; d * d];
    let mut area = 0.0_f64;
    for_each_scan_pair(n, |i, j| {
        rp.area_into(i, j, &mut block);
        let v = linalg::norm(&block) / gap_pow[j - i];
        if v > area {
            area = v;
        }
    });
    RoughPathNorm { path, area }
}

/// Inhomogeneous distance: gamma-seminorm of the path difference plus the
/// 2 gamma norm of the area difference. Both enhancements must share grid,
/// dimension and scale.
pub fn roughpath_distance(a: &RoughPath, b: &RoughPath) -> Result<f64> {
    if a.base.grid() != b.base.grid() || a.dim() != b.dim() {
        return Err(Error::invalid(
            "rough path distance needs matching grids and dimensions",
        ));
    }
    if a.gamma != b.gamma {
        return Err(Error::invalid("rough path distance needs matching scales"));
    }
    let diff = a.base.difference(&b.base)?;
    let path = holder_seminorm(&diff, a.gamma);
    let n = a.len();
    let d = a.dim();
    let step = a.base.grid().step();
    let gap_pow: Vec<f64> = (0..n)
        .map(|k| (k as f64 * step).powf(2.0 * a.gamma))
        .collect();
    let mut ba = vec![0.0; d * d];
    let mut bb = vec![0.0; d * d];
    let mut area = 0.0_f64;
    for_each_scan_pair(n, |i, j| {
        a.area_into(i, j, &mut ba);
        b.area_into(i, j, &mut bb);
        let mut sq = 0.0;
        for e in 0..d * d {
            let x = ba[e] - bb[e];
            sq += x * x;
        }
        let v = sq.sqrt() / gap_pow[j - i];
        if v > area {
            area = v;
        }
    });
    Ok(path + area)
}
