//! Vector fields, zero-order coefficients and compactly supported test
//! functions, all with closed-form derivatives.
//!
//! Trigonometric fields are real-valued trigonometric polynomials stored as
//! one complex coefficient per Hermitian pair: a stored mode (k, c) with
//! k != 0 stands for c e^{i k.x} + conj(c) e^{-i k.x}, i.e. the real
//! contribution 2 (Re c cos(k.x) - Im c sin(k.x)); a k = 0 mode must be real
//! and is counted once. This keeps spectral operations (weighted coefficient
//! sums, Fourier-multiplier mollification) exact.

use crate::error::{Error, Result};
use crate::linalg;

/// One Hermitian mode pair of a trigonometric field: integer frequency k
/// and complex amplitude per component, split into real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigMode {
    pub k: Vec<i64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl TrigMode {
    pub fn freq_norm(&self) -> f64 {
        self.k.iter().map(|&k| (k * k) as f64).sum::<f64>().sqrt()
    }

    /// Euclidean magnitude of the complex amplitude vector.
    pub fn amp_norm(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .sum::<f64>()
            .sqrt()
    }

    fn is_zero_freq(&self) -> bool {
        self.k.iter().all(|&k| k == 0)
    }
}

/// Piecewise-constant time modulation: `factors[i]` applies on
/// [breakpoints[i], breakpoints[i+1]), the last factor extends to infinity
/// and times before the first breakpoint use the first factor.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeModulation {
    breakpoints: Vec<f64>,
    factors: Vec<f64>,
}

impl TimeModulation {
    pub fn new(breakpoints: Vec<f64>, factors: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != factors.len() {
            return Err(Error::invalid(
                "time modulation needs matching, non-empty breakpoints and factors",
            ));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "time modulation breakpoints must be strictly increasing",
            ));
        }
        if factors.iter().chain(&breakpoints).any(|v| !v.is_finite()) {
            return Err(Error::invalid("time modulation values must be finite"));
        }
        Ok(TimeModulation {
            breakpoints,
            factors,
        })
    }

    pub fn factor(&self, t: f64) -> f64 {
        let mut idx = 0;
        for (i, &bp) in self.breakpoints.iter().enumerate() {
            if t >= bp {
                idx = i;
            } else {
                break;
            }
        }
        self.factors[idx]
    }

    pub fn max_abs_factor(&self) -> f64 {
        self.factors.iter().fold(0.0, |m, f| m.max(f.abs()))
    }
}

/// Vector field on R^d, possibly time-modulated.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorField {
    /// b(x) = v.
    Constant { v: Vec<f64> },
    /// b(x) = A x, row-major d x d matrix.
    Linear { dim: usize, matrix: Vec<f64> },
    /// Real trigonometric polynomial, one stored mode per Hermitian pair.
    Trig { dim: usize, modes: Vec<TrigMode> },
    /// Pointwise sum of fields of equal dimension.
    Sum { terms: Vec<VectorField> },
    /// Scalar piecewise-constant-in-time modulation of another field.
    Modulated {
        inner: Box<VectorField>,
        modulation: TimeModulation,
    },
}

impl VectorField {
    pub fn constant(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("constant field needs finite components"));
        }
        Ok(VectorField::Constant { v })
    }

    pub fn linear(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if dim == 0 || matrix.len() != dim * dim {
            return Err(Error::invalid("linear field needs a d x d matrix"));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("linear field matrix must be finite"));
        }
        Ok(VectorField::Linear { dim, matrix })
    }

    /// Validated trigonometric polynomial. Each mode stands for a Hermitian
    /// pair, so storing both k and -k (or the same k twice) is rejected.
    pub fn trig(dim: usize, modes: Vec<TrigMode>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("trig field needs dimension >= 1"));
        }
        for m in &modes {
            if m.k.len() != dim || m.re.len() != dim || m.im.len() != dim {
                return Err(Error::invalid(
                    "trig mode k/re/im lengths must equal the field dimension",
                ));
            }
            if m.re.iter().chain(&m.im).any(|v| !v.is_finite()) {
                return Err(Error::invalid("trig amplitudes must be finite"));
            }
            if m.is_zero_freq() && m.im.iter().any(|&v| v != 0.0) {
                return Err(Error::invalid(
                    "the zero mode of a real field must have a real amplitude",
                ));
            }
        }
        for (a, ma) in modes.iter().enumerate() {
            for mb in modes.iter().skip(a + 1) {
                let same = ma.k == mb.k;
                let conj = ma.k.iter().zip(&mb.k).all(|(x, y)| *x == -y);
                if same || (conj && !ma.is_zero_freq()) {
                    return Err(Error::invalid(format!(
                        "modes {:?} and {:?} belong to the same Hermitian pair",
                        ma.k, mb.k
                    )));
                }
            }
        }
        Ok(VectorField::Trig { dim, modes })
    }

    pub fn sum(terms: Vec<VectorField>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid("sum field needs at least one term"));
        }
        let d = terms[0].dim();
        if terms.iter().any(|t| t.dim() != d) {
            return Err(Error::invalid("sum field terms must share a dimension"));
        }
        Ok(VectorField::Sum { terms })
    }

    pub fn modulated(inner: VectorField, modulation: TimeModulation) -> Self {
        VectorField::Modulated {
            inner: Box::new(inner),
            modulation,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            VectorField::Constant { v } => v.len(),
            VectorField::Linear { dim, .. } | VectorField::Trig { dim, .. } => *dim,
            VectorField::Sum { terms } => terms[0].dim(),
            VectorField::Modulated { inner, .. } => inner.dim(),
        }
    }

    /// b(t, x).
    pub fn value(&self, t: f64, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            VectorField::Constant { v } => v.clone(),
            VectorField::Linear { dim, matrix } => linalg::matvec(matrix, x, *dim, *dim),
            VectorField::Trig { dim, modes } => {
                let mut out = vec![0.0; *dim];
                for m in modes {
                    let theta: f64 = m.k.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
                    if m.is_zero_freq() {
                        for a in 0..*dim {
                            out[a] += m.re[a];
                        }
                    } else {
                        let (s, c) = theta.sin_cos();
                        for a in 0..*dim {
                            out[a] += 2.0 * (m.re[a] * c - m.im[a] * s);
                        }
                    }
                }
                out
            }
            VectorField::Sum { terms } => {
                let mut out = vec![0.0; self.dim()];
                for term in terms {
                    for (o, v) in out.iter_mut().zip(term.value(t, x)) {
                        *o += v;
                    }
                }
                out
            }
            VectorField::Modulated { inner, modulation } => {
                linalg::scale(modulation.factor(t), &inner.value(t, x))
            }
        }
    }

    /// Jacobian J_{ac} = d b_a / d x_c, row-major d x d.
    pub fn jacobian(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        match self {
            VectorField::Constant { .. } => vec![0.0; d * d],
            VectorField::Linear { matrix, .. } => matrix.clone(),
            VectorField::Trig { dim, modes } => {
                let mut out = vec![0.0; dim * dim];
                for m in modes {
                    if m.is_zero_freq() {
                        continue;
                    }
                    let theta: f64 = m.k.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
                    let (s, c) = theta.sin_cos();
                    for a in 0..*dim {
                        let g = m.re[a] * s + m.im[a] * c;
                        for cc in 0..*dim {
                            out[a * dim + cc] += -2.0 * m.k[cc] as f64 * g;
                        }
                    }
                }
                out
            }
            VectorField::Sum { terms } => {
                let mut out = vec![0.0; d * d];
                for term in terms {
                    for (o, v) in out.iter_mut().zip(term.jacobian(t, x)) {
                        *o += v;
                    }
                }
                out
            }
            VectorField::Modulated { inner, modulation } => {
                linalg::scale(modulation.factor(t), &inner.jacobian(t, x))
            }
        }
    }

    /// div b(t, x), exact (trace of the analytic Jacobian).
    pub fn divergence(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            VectorField::Constant { .. } => 0.0,
            VectorField::Linear { dim, matrix } => {
                (0..*dim).map(|i| matrix[i * dim + i]).sum()
            }
            VectorField::Trig { modes, .. } => {
                let mut out = 0.0;
                for m in modes {
                    if m.is_zero_freq() {
                        continue;
                    }
                    let theta: f64 = m.k.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
                    let (s, c) = theta.sin_cos();
                    let k_re: f64 = m.k.iter().zip(&m.re).map(|(&k, &r)| k as f64 * r).sum();
                    let k_im: f64 = m.k.iter().zip(&m.im).map(|(&k, &i)| k as f64 * i).sum();
                    out += -2.0 * (k_re * s + k_im * c);
                }
                out
            }
            VectorField::Sum { terms } => terms.iter().map(|f| f.divergence(t, x)).sum(),
            VectorField::Modulated { inner, modulation } => {
                modulation.factor(t) * inner.divergence(t, x)
            }
        }
    }

    /// Gradient of the divergence, needed by duality weights.
    pub fn divergence_gradient(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        match self {
            VectorField::Constant { .. } | VectorField::Linear { .. } => vec![0.0; d],
            VectorField::Trig { dim, modes } => {
                let mut out = vec![0.0; *dim];
                for m in modes {
                    if m.is_zero_freq() {
                        continue;
                    }
                    let theta: f64 = m.k.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
                    let (s, c) = theta.sin_cos();
                    let k_re: f64 = m.k.iter().zip(&m.re).map(|(&k, &r)| k as f64 * r).sum();
                    let k_im: f64 = m.k.iter().zip(&m.im).map(|(&k, &i)| k as f64 * i).sum();
                    for cc in 0..*dim {
                        out[cc] += -2.0 * m.k[cc] as f64 * (k_re * c - k_im * s);
                    }
                }
                out
            }
            VectorField::Sum { terms } => {
                let mut out = vec![0.0; d];
                for term in terms {
                    for (o, v) in out.iter_mut().zip(term.divergence_gradient(t, x)) {
                        *o += v;
                    }
                }
                out
            }
            VectorField::Modulated { inner, modulation } => {
                linalg::scale(modulation.factor(t), &inner.divergence_gradient(t, x))
            }
        }
    }

    /// Analytic upper bound for sup_x |b(t, x)| over all t; infinite for
    /// unbounded variants.
    pub fn sup_norm_bound(&self) -> f64 {
        match self {
            VectorField::Constant { v } => linalg::norm(v),
            VectorField::Linear { matrix, .. } => {
                if matrix.iter().all(|&m| m == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            VectorField::Trig { dim, modes } => {
                // Componentwise: |b_a| <= sum over modes of (2 or 1) |c_a|.
                let mut comp = vec![0.0; *dim];
                for m in modes {
                    let w = if m.is_zero_freq() { 1.0 } else { 2.0 };
                    for a in 0..*dim {
                        comp[a] += w * (m.re[a] * m.re[a] + m.im[a] * m.im[a]).sqrt();
                    }
                }
                linalg::norm(&comp)
            }
            VectorField::Sum { terms } => terms.iter().map(|f| f.sup_norm_bound()).sum(),
            VectorField::Modulated { inner, modulation } => {
                modulation.max_abs_factor() * inner.sup_norm_bound()
            }
        }
    }

    /// Linear-growth norm sup_x |b(t, x)| / (1 + |x|): exact for constant
    /// and linear fields, a probe-grid estimate otherwise.
    pub fn lin_norm(&self, t: f64, probes: &[Vec<f64>]) -> f64 {
        match self {
            VectorField::Constant { v } => linalg::norm(v),
            VectorField::Linear { dim, matrix } => linalg::operator_norm(matrix, *dim, *dim),
            _ => probes
                .iter()
                .map(|x| linalg::norm(&self.value(t, x)) / (1.0 + linalg::norm(x)))
                .fold(0.0, f64::max),
        }
    }

    /// Fourier-multiplier mollification: damp each stored amplitude by
    /// exp(-(eps |k|)^2 / 2). Exact on trigonometric polynomials, identity
    /// on constants, undefined elsewhere.
    pub fn mollify(&self, eps: f64) -> Result<VectorField> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::invalid("mollification width must be >= 0"));
        }
        match self {
            VectorField::Constant { .. } => Ok(self.clone()),
            VectorField::Trig { dim, modes } => {
                let damped = modes
                    .iter()
                    .map(|m| {
                        let w = (-0.5 * (eps * m.freq_norm()).powi(2)).exp();
                        TrigMode {
                            k: m.k.clone(),
                            re: linalg::scale(w, &m.re),
                            im: linalg::scale(w, &m.im),
                        }
                    })
                    .collect();
                VectorField::trig(*dim, damped)
            }
            VectorField::Sum { terms } => {
                let t: Result<Vec<VectorField>> = terms.iter().map(|f| f.mollify(eps)).collect();
                VectorField::sum(t?)
            }
            VectorField::Modulated { inner, modulation } => Ok(VectorField::Modulated {
                inner: Box::new(inner.mollify(eps)?),
                modulation: modulation.clone(),
            }),
            VectorField::Linear { .. } => Err(Error::invalid(
                "mollification is spectral; linear fields have no discrete spectrum",
            )),
        }
    }

    /// Weighted coefficient norm: sum over the full (Hermitian-completed)
    /// spectrum of |c_k| (1 + |k|)^alpha. Defined for trigonometric fields
    /// only.
    pub fn fl_norm(&self, alpha: f64) -> Result<f64> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::invalid("spectral weight alpha must be >= 0"));
        }
        match self {
            VectorField::Trig { modes, .. } => {
                let mut out = 0.0;
                for m in modes {
                    let w = if m.is_zero_freq() { 1.0 } else { 2.0 };
                    out += w * m.amp_norm() * (1.0 + m.freq_norm()).powf(alpha);
                }
                Ok(out)
            }
            _ => Err(Error::invalid(
                "the weighted coefficient norm needs a discrete spectrum (trig field)",
            )),
        }
    }
}

/// Zero-order (scalar) coefficient fields.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarField {
    Zero,
    Constant(f64),
    /// c(t, x) = div b(t, x) for a vector field b.
    Divergence(Box<VectorField>),
    /// Scalar trigonometric polynomial; modes carry 1-component amplitudes
    /// but d-component frequencies.
    Trig { dim: usize, modes: Vec<TrigMode> },
}

impl ScalarField {
    pub fn scalar_trig(dim: usize, modes: Vec<TrigMode>) -> Result<Self> {
        for m in &modes {
            if m.k.len() != dim || m.re.len() != 1 || m.im.len() != 1 {
                return Err(Error::invalid(
                    "scalar trig modes need d-component k and 1-component amplitudes",
                ));
            }
            if m.is_zero_freq() && m.im[0] != 0.0 {
                return Err(Error::invalid("the zero mode must be real"));
            }
        }
        Ok(ScalarField::Trig { dim, modes })
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Constant(c) => *c,
            ScalarField::Divergence(b) => b.divergence(t, x),
            ScalarField::Trig { modes, .. } => {
                let mut out = 0.0;
                for m in modes {
                    let theta: f64 = m.k.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
                    if m.is_zero_freq() {
                        out += m.re[0];
                    } else {
                        let (s, c) = theta.sin_cos();
                        out += 2.0 * (m.re[0] * c - m.im[0] * s);
                    }
                }
                out
            }
        }
    }

    pub fn gradient(&self, t: f64, x: &[f64]) -> Vec<f64> {
        match self {
            ScalarField::Zero | ScalarField::Constant(_) => vec![0.0; x.len()],
            ScalarField::Divergence(b) => b.divergence_gradient(t, x),
            ScalarField::Trig { dim, modes } => {
                let mut out = vec![0.0; *dim];
                for m in modes {
                    if m.is_zero_freq() {
                        continue;
                    }
                    let theta: f64 = m.k.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
                    let (s, c) = theta.sin_cos();
                    for cc in 0..*dim {
                        out[cc] += -2.0 * m.k[cc] as f64 * (m.re[0] * s + m.im[0] * c);
                    }
                }
                out
            }
        }
    }

    /// Analytic upper bound for sup |c|; infinite when unbounded.
    pub fn sup_norm_bound(&self) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Constant(c) => c.abs(),
            ScalarField::Divergence(b) => match &**b {
                VectorField::Constant { .. } => 0.0,
                VectorField::Trig { modes, .. } => modes
                    .iter()
                    .map(|m| {
                        let w = if m.is_zero_freq() { 1.0 } else { 2.0 };
                        let k_re: f64 =
                            m.k.iter().zip(&m.re).map(|(&k, &r)| k as f64 * r).sum();
                        let k_im: f64 =
                            m.k.iter().zip(&m.im).map(|(&k, &i)| k as f64 * i).sum();
                        w * (k_re * k_re + k_im * k_im).sqrt()
                    })
                    .sum(),
                VectorField::Linear { dim, matrix } => {
                    (0..*dim).map(|i| matrix[i * dim + i]).sum::<f64>().abs()
                }
                _ => f64::INFINITY,
            },
            ScalarField::Trig { modes, .. } => modes
                .iter()
                .map(|m| {
                    let w = if m.is_zero_freq() { 1.0 } else { 2.0 };
                    w * (m.re[0] * m.re[0] + m.im[0] * m.im[0]).sqrt()
                })
                .sum(),
        }
    }
}

/// Grid Hölder-in-space norm of a field at a fixed time: probe supremum of
/// |b| plus the largest pair quotient |b(x) - b(y)| / |x - y|^alpha. Probe
/// pairs are scanned exhaustively; cost is quadratic in the probe count.
pub fn holder_cb_norm(b: &VectorField, alpha: f64, t: f64, probes: &[Vec<f64>]) -> f64 {
    assert!(alpha > 0.0 && alpha <= 1.0, "space exponent must lie in (0, 1]");
    assert!(probes.len() >= 2, "need at least two probe points");
    let values: Vec<Vec<f64>> = probes.iter().map(|x| b.value(t, x)).collect();
    let sup = values.iter().map(|v| linalg::norm(v)).fold(0.0, f64::max);
    let mut semi = 0.0_f64;
    for i in 0..probes.len() {
        for j in i + 1..probes.len() {
            let dx = linalg::norm(&linalg::sub(&probes[i], &probes[j]));
            if dx == 0.0 {
                continue;
            }
            let dv = linalg::norm(&linalg::sub(&values[i], &values[j]));
            semi = semi.max(dv / dx.powf(alpha));
        }
    }
    sup + semi
}

/// Uniform lattice of probe points over a box, `per_axis` points per axis.
/// Intended for the probe-grid estimates above; counts grow like
/// per_axis^d, keep them modest.
pub fn lattice_probes(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    assert_eq!(lo.len(), hi.len());
    assert!(per_axis >= 2);
    let d = lo.len();
    let total = per_axis.pow(d as u32);
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut x = vec![0.0; d];
        let mut rest = flat;
        for a in 0..d {
            let idx = rest % per_axis;
            rest /= per_axis;
            x[a] = lo[a] + (hi[a] - lo[a]) * idx as f64 / (per_axis - 1) as f64;
        }
        out.push(x);
    }
    out
}

/// Compactly supported bump-times-polynomial test function on the ball
/// B(center, radius):
///
///   phi(x) = p(z) exp(-1 / (1 - |z|^2 / r^2)),   z = x - center,
///
/// extended by zero outside. The polynomial depends on the degree: 1,
/// 1 + sum z_a / r, or additionally + sum (z_a / r)^2. All derivatives are
/// closed-form; the function is smooth across the support boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    center: Vec<f64>,
    radius: f64,
    degree: u8,
}

impl TestFunction {
    pub fn new(center: Vec<f64>, radius: f64, degree: u8) -> Result<Self> {
        if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("test function center must be finite"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("test function radius must be positive"));
        }
        if degree > 2 {
            return Err(Error::invalid("polynomial degree is capped at 2"));
        }
        Ok(TestFunction {
            center,
            radius,
            degree,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn local(&self, x: &[f64]) -> Option<(Vec<f64>, f64)> {
        let z = linalg::sub(x, &self.center);
        let u = linalg::dot(&z, &z) / (self.radius * self.radius);
        if u >= 1.0 - 1e-12 {
            None
        } else {
            Some((z, u))
        }
    }

    fn poly(&self, z: &[f64]) -> (f64, Vec<f64>, f64) {
        // Returns (p, grad p, laplacian-style constant): grad p and the
        // Hessian of p, the latter being (2 / r^2) I for degree 2.
        let d = self.dim();
        let r = self.radius;
        let mut p = 1.0;
        let mut grad = vec![0.0; d];
        let mut hess_diag = 0.0;
        if self.degree >= 1 {
            p += z.iter().sum::<f64>() / r;
            for g in grad.iter_mut() {
                *g += 1.0 / r;
            }
        }
        if self.degree >= 2 {
            p += z.iter().map(|&zz| zz * zz).sum::<f64>() / (r * r);
            for (g, &zz) in grad.iter_mut().zip(z) {
                *g += 2.0 * zz / (r * r);
            }
            hess_diag = 2.0 / (r * r);
        }
        (p, grad, hess_diag)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self.local(x) {
            None => 0.0,
            Some((z, u)) => {
                let f = (-1.0 / (1.0 - u)).exp();
                self.poly(&z).0 * f
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        match self.local(x) {
            None => vec![0.0; d],
            Some((z, u)) => {
                let w = 1.0 - u;
                let f = (-1.0 / w).exp();
                let r2 = self.radius * self.radius;
                let (p, gp, _) = self.poly(&z);
                // grad f = -2 f z / (r^2 w^2).
                (0..d)
                    .map(|a| f * gp[a] + p * (-2.0 * f * z[a] / (r2 * w * w)))
                    .collect()
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        match self.local(x) {
            None => vec![0.0; d * d],
            Some((z, u)) => {
                let w = 1.0 - u;
                let f = (-1.0 / w).exp();
                let r2 = self.radius * self.radius;
                let r4 = r2 * r2;
                let (p, gp, hp_diag) = self.poly(&z);
                let gf: Vec<f64> = z.iter().map(|&zz| -2.0 * f * zz / (r2 * w * w)).collect();
                let mut out = vec![0.0; d * d];
                for a in 0..d {
                    for c in 0..d {
                        // Hessian of f.
                        let mut hf = f
                            * (4.0 * z[a] * z[c] / (r4 * w * w * w * w)
                                - 8.0 * z[a] * z[c] / (r4 * w * w * w));
                        if a == c {
                            hf -= f * 2.0 / (r2 * w * w);
                        }
                        let mut v = p * hf + gp[a] * gf[c] + gp[c] * gf[a];
                        if a == c {
                            v += hp_diag * f;
                        }
                        out[a * d + c] = v;
                    }
                }
                out
            }
        }
    }
}
