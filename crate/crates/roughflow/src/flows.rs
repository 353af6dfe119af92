//! Characteristic flows of dy = b(t, y) dt + dX for an additive, possibly
//! very rough driver X.
//!
//! The integrator never differentiates X: it solves the Lipschitz part
//! theta = Phi - X with classical RK4 (or Euler for cross-checks), reading
//! the driver by linear interpolation at stage times, and adds X back. For
//! additive noise this is exact in X at the nodes; path irregularity enters
//! only through the interpolation of X at stage midpoints.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{ScalarField, VectorField};
use crate::grid::{holder_seminorm, SampledPath, TimeGrid};
use crate::linalg;

/// Magnitude at which a trajectory is declared divergent.
pub const BLOW_UP_GUARD: f64 = 1e8;

/// Drift seen by the integrator: either a field b(t, x) integrated forward,
/// or the reversed drift -b(t0 - t, x) used by inverse (backward) flows.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift {
    Forward(VectorField),
    Reversed { field: VectorField, t0: f64 },
}

impl Drift {
    pub fn dim(&self) -> usize {
        match self {
            Drift::Forward(f) | Drift::Reversed { field: f, .. } => f.dim(),
        }
    }

    pub fn value(&self, t: f64, x: &[f64]) -> Vec<f64> {
        match self {
            Drift::Forward(f) => f.value(t, x),
            Drift::Reversed { field, t0 } => linalg::scale(-1.0, &field.value(t0 - t, x)),
        }
    }

    pub fn jacobian(&self, t: f64, x: &[f64]) -> Vec<f64> {
        match self {
            Drift::Forward(f) => f.jacobian(t, x),
            Drift::Reversed { field, t0 } => linalg::scale(-1.0, &field.jacobian(t0 - t, x)),
        }
    }

    pub fn divergence(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Drift::Forward(f) => f.divergence(t, x),
            Drift::Reversed { field, t0 } => -field.divergence(t0 - t, x),
        }
    }

    pub fn lin_norm(&self, t: f64, probes: &[Vec<f64>]) -> f64 {
        match self {
            Drift::Forward(f) => f.lin_norm(t, probes),
            Drift::Reversed { field, t0 } => field.lin_norm(t0 - t, probes),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    Euler,
}

/// Flow of one drift and one driver over a set of initial points. All
/// trajectories share the driver's grid; Phi_0(x) = x by construction.
#[derive(Debug, Clone)]
pub struct FlowField {
    drift: Drift,
    driver: SampledPath,
    x0s: Vec<Vec<f64>>,
    trajectories: Vec<SampledPath>,
    dphi: Option<Vec<SampledPath>>,
}

impl FlowField {
    pub fn drift(&self) -> &Drift {
        &self.drift
    }

    pub fn driver(&self) -> &SampledPath {
        &self.driver
    }

    pub fn grid(&self) -> &TimeGrid {
        self.driver.grid()
    }

    pub fn dim(&self) -> usize {
        self.driver.dim()
    }

    pub fn num_points(&self) -> usize {
        self.x0s.len()
    }

    pub fn initial_point(&self, idx: usize) -> &[f64] {
        &self.x0s[idx]
    }

    pub fn trajectory(&self, idx: usize) -> &SampledPath {
        &self.trajectories[idx]
    }

    pub fn dphi(&self, idx: usize) -> Option<&SampledPath> {
        self.dphi.as_ref().map(|d| &d[idx])
    }

    /// Computes and caches the variational derivative along every
    /// trajectory; no-op when already present.
    pub fn ensure_dphi(&mut self) -> Result<()> {
        if self.dphi.is_none() {
            self.dphi = Some(variational_derivative(self)?);
        }
        Ok(())
    }

    /// CSV rows `x0_index,t,phi_1,...,phi_d[,dphi_11,...,dphi_dd]`, one row
    /// per initial point and node, matrices row-major.
    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut header = String::from("x0_index,t");
        for a in 1..=d {
            header.push_str(&format!(",phi_{a}"));
        }
        if self.dphi.is_some() {
            for r in 1..=d {
                for c in 1..=d {
                    header.push_str(&format!(",dphi_{r}{c}"));
                }
            }
        }
        let mut out = header;
        out.push('\n');
        for (idx, traj) in self.trajectories.iter().enumerate() {
            for k in 0..traj.len() {
                out.push_str(&format!("{idx},{:.16e}", traj.grid().node(k)));
                for v in traj.value(k) {
                    out.push_str(&format!(",{v:.16e}"));
                }
                if let Some(dphi) = &self.dphi {
                    for v in dphi[idx].value(k) {
                        out.push_str(&format!(",{v:.16e}"));
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

fn check_guard(theta: &[f64], idx: usize, t: f64) -> Result<()> {
    if theta.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP_GUARD) {
        return Err(Error::numerical(format!(
            "trajectory {idx} left the guard region (|theta| > {BLOW_UP_GUARD:.0e}) near t = {t:.6}"
        )));
    }
    Ok(())
}

fn solve_theta(
    drift: &Drift,
    driver: &SampledPath,
    x0: &[f64],
    idx: usize,
    method: Integrator,
) -> Result<Vec<f64>> {
    let grid = driver.grid();
    let n = grid.len();
    let d = driver.dim();
    let h = grid.step();
    let mut values = vec![0.0; n * d];
    values[..d].copy_from_slice(x0);
    let mut theta = x0.to_vec();
    let eval = |t: f64, th: &[f64], x: &[f64]| -> Vec<f64> {
        let pos: Vec<f64> = th.iter().zip(x).map(|(a, b)| a + b).collect();
        drift.value(t, &pos)
    };
    for k in 0..n - 1 {
        let t = grid.node(k);
        let x_lo = driver.value(k);
        let x_hi = driver.value(k + 1);
        let x_mid: Vec<f64> = x_lo.iter().zip(x_hi).map(|(a, b)| 0.5 * (a + b)).collect();
        match method {
            Integrator::Euler => {
                let k1 = eval(t, &theta, x_lo);
                for a in 0..d {
                    theta[a] += h * k1[a];
                }
            }
            Integrator::Rk4 => {
                let k1 = eval(t, &theta, x_lo);
                let s2: Vec<f64> = (0..d).map(|a| theta[a] + 0.5 * h * k1[a]).collect();
                let k2 = eval(t + 0.5 * h, &s2, &x_mid);
                let s3: Vec<f64> = (0..d).map(|a| theta[a] + 0.5 * h * k2[a]).collect();
                let k3 = eval(t + 0.5 * h, &s3, &x_mid);
                let s4: Vec<f64> = (0..d).map(|a| theta[a] + h * k3[a]).collect();
                let k4 = eval(t + h, &s4, x_hi);
                for a in 0..d {
                    theta[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
                }
            }
        }
        check_guard(&theta, idx, t + h)?;
        values[(k + 1) * d..(k + 2) * d].copy_from_slice(&theta);
    }
    Ok(values)
}

/// Integrates the flow of `drift` for every initial point, in parallel
/// across points with a deterministic output order. The returned
/// trajectories are Phi = theta + X on the driver grid.
pub fn integrate(
    drift: &Drift,
    driver: &SampledPath,
    x0s: &[Vec<f64>],
    method: Integrator,
) -> Result<FlowField> {
    let d = driver.dim();
    if drift.dim() != d {
        return Err(Error::invalid(format!(
            "drift dimension {} does not match the driver dimension {d}",
            drift.dim()
        )));
    }
    if x0s.is_empty() || x0s.iter().any(|x| x.len() != d) {
        return Err(Error::invalid(
            "need at least one initial point, all of the driver dimension",
        ));
    }
    let start = driver.value(0);
    if start.iter().any(|v| v.abs() > 1e-12) {
        return Err(Error::invalid(
            "the driver must vanish at the initial time so that Phi_0(x) = x",
        ));
    }
    let trajectories: Result<Vec<SampledPath>> = x0s
        .par_iter()
        .enumerate()
        .map(|(idx, x0)| {
            let theta = solve_theta(drift, driver, x0, idx, method)?;
            let n = driver.len();
            let mut phi = vec![0.0; n * d];
            for k in 0..n {
                for a in 0..d {
                    phi[k * d + a] = theta[k * d + a] + driver.value(k)[a];
                }
            }
            SampledPath::new(driver.grid().clone(), d, phi)
        })
        .collect();
    Ok(FlowField {
        drift: drift.clone(),
        driver: driver.clone(),
        x0s: x0s.to_vec(),
        trajectories: trajectories?,
        dphi: None,
    })
}

/// Forward flow Phi_t(x) = x + int_0^t b(q, Phi_q(x)) dq + X_t, RK4.
pub fn solve_flow(b: &VectorField, driver: &SampledPath, x0s: &[Vec<f64>]) -> Result<FlowField> {
    integrate(&Drift::Forward(b.clone()), driver, x0s, Integrator::Rk4)
}

/// First-order companion of [`solve_flow`] for integrator cross-checks.
pub fn solve_flow_euler(
    b: &VectorField,
    driver: &SampledPath,
    x0s: &[Vec<f64>],
) -> Result<FlowField> {
    integrate(&Drift::Forward(b.clone()), driver, x0s, Integrator::Euler)
}

/// Builds the reversed driver q -> X_{t0 - q} - X_{t0} on [0, t0] together
/// with the node index of t0 on the original grid.
pub fn reversed_driver(driver: &SampledPath, t0: f64) -> Result<(SampledPath, usize)> {
    let grid = driver.grid();
    if grid.t0() != 0.0 {
        return Err(Error::invalid("backward flows expect a grid starting at 0"));
    }
    let h = grid.step();
    let pos = (t0 / h).round() as usize;
    if pos == 0 || pos >= grid.len() || (grid.node(pos) - t0).abs() > 1e-10 * h.max(1.0) {
        return Err(Error::invalid(format!(
            "terminal time {t0} must be a positive node of the driver grid"
        )));
    }
    let d = driver.dim();
    let size = pos + 1;
    let mut values = vec![0.0; size * d];
    let terminal = driver.value(pos).to_vec();
    for j in 0..size {
        let src = driver.value(pos - j);
        for a in 0..d {
            values[j * d + a] = src[a] - terminal[a];
        }
    }
    let rgrid = TimeGrid::new(0.0, t0, size)?;
    Ok((SampledPath::new(rgrid, d, values)?, pos))
}

/// Backward characteristics through time t0:
///
///   psi_t(y) = y - int_0^t b(t0 - q, psi_q(y)) dq - (X_{t0} - X_{t0 - t}),
///
/// solved on [0, t0]; the value at t = t0 is the inverse flow Phi^{-1}_{t0}.
pub fn inverse_flow(
    b: &VectorField,
    driver: &SampledPath,
    t0: f64,
    points: &[Vec<f64>],
) -> Result<FlowField> {
    let (reversed, _) = reversed_driver(driver, t0)?;
    let drift = Drift::Reversed {
        field: b.clone(),
        t0,
    };
    integrate(&drift, &reversed, points, Integrator::Rk4)
}

/// Variational derivative along every trajectory: solves
/// dM/dt = Db(t, Phi_t) M, M_0 = Id, with RK4 on frozen trajectories
/// (Phi interpolated linearly at stage midpoints). Matrices row-major.
pub fn variational_derivative(ff: &FlowField) -> Result<Vec<SampledPath>> {
    let d = ff.dim();
    let grid = ff.grid();
    let n = grid.len();
    let h = grid.step();
    (0..ff.num_points())
        .into_par_iter()
        .map(|idx| {
            let traj = ff.trajectory(idx);
            let mut m = linalg::identity(d);
            let mut values = vec![0.0; n * d * d];
            values[..d * d].copy_from_slice(&m);
            for k in 0..n - 1 {
                let t = grid.node(k);
                let p_lo = traj.value(k);
                let p_hi = traj.value(k + 1);
                let p_mid: Vec<f64> =
                    p_lo.iter().zip(p_hi).map(|(a, b)| 0.5 * (a + b)).collect();
                let j_lo = ff.drift.jacobian(t, p_lo);
                let j_mid = ff.drift.jacobian(t + 0.5 * h, &p_mid);
                let j_hi = ff.drift.jacobian(t + h, p_hi);
                let k1 = linalg::matmul(&j_lo, &m, d, d, d);
                let s2 = linalg::add(&m, &linalg::scale(0.5 * h, &k1));
                let k2 = linalg::matmul(&j_mid, &s2, d, d, d);
                let s3 = linalg::add(&m, &linalg::scale(0.5 * h, &k2));
                let k3 = linalg::matmul(&j_mid, &s3, d, d, d);
                let s4 = linalg::add(&m, &linalg::scale(h, &k3));
                let k4 = linalg::matmul(&j_hi, &s4, d, d, d);
                for p in 0..d * d {
                    m[p] += h / 6.0 * (k1[p] + 2.0 * k2[p] + 2.0 * k3[p] + k4[p]);
                }
                if m.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP_GUARD) {
                    return Err(Error::numerical(format!(
                        "variational derivative of trajectory {idx} diverged near t = {:.6}",
                        t + h
                    )));
                }
                values[(k + 1) * d * d..(k + 2) * d * d].copy_from_slice(&m);
            }
            SampledPath::new(grid.clone(), d * d, values)
        })
        .collect()
}

/// Jacobian of the flow map through the divergence identity:
/// Jac_t = exp( int_0^t div b(q, Phi_q) dq ), trapezoid in time.
pub fn jacobian_determinant(ff: &FlowField, idx: usize) -> Result<SampledPath> {
    let traj = ff.trajectory(idx);
    let grid = ff.grid();
    let h = grid.step();
    let div: Vec<f64> = (0..traj.len())
        .map(|k| ff.drift.divergence(grid.node(k), traj.value(k)))
        .collect();
    let mut out = Vec::with_capacity(traj.len());
    let mut acc = 0.0;
    out.push(1.0);
    for k in 0..traj.len() - 1 {
        acc += 0.5 * h * (div[k] + div[k + 1]);
        out.push(acc.exp());
    }
    SampledPath::new(grid.clone(), 1, out)
}

/// Determinant of the cached variational derivative, for cross-checking
/// the divergence identity.
pub fn dphi_determinant(ff: &FlowField, idx: usize) -> Result<SampledPath> {
    let d = ff.dim();
    let dphi = ff
        .dphi(idx)
        .ok_or_else(|| Error::invalid("variational derivative not computed; call ensure_dphi"))?;
    let values: Vec<f64> = (0..dphi.len())
        .map(|k| linalg::det(dphi.value(k), d))
        .collect();
    SampledPath::new(ff.grid().clone(), 1, values)
}

/// Growth envelope ((x^2 + x) e^x + x + 1) e^x of the Gronwall argument
/// behind the a-priori flow bound.
pub fn gronwall_envelope(x: f64) -> f64 {
    ((x * x + x) * x.exp() + x + 1.0) * x.exp()
}

#[derive(Debug, Clone)]
pub struct AprioriPoint {
    pub x0: Vec<f64>,
    pub lhs: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Outcome of the a-priori Hölder bound check
/// ||Phi(x)||_gamma <= K_T g(T ||b||_lin) (1 + |x|)(1 + ||X||_gamma).
#[derive(Debug, Clone)]
pub struct AprioriReport {
    pub gamma: f64,
    pub lin_norm: f64,
    pub driver_seminorm: f64,
    pub constant: f64,
    pub per_point: Vec<AprioriPoint>,
    pub pass: bool,
}

/// Evaluates the a-priori bound on every trajectory of the flow. The
/// linear-growth norm of the drift is estimated on `probes` (exact for
/// constant and linear fields); the time constant is frozen to
/// max(1, T^{1 - gamma}).
pub fn apriori_holder_check(ff: &FlowField, gamma: f64, probes: &[Vec<f64>]) -> AprioriReport {
    let grid = ff.grid();
    let t_span = grid.span();
    // Piecewise-constant modulations make the norm time-dependent; probe a
    // handful of times and keep the worst.
    let lin_norm = (0..5)
        .map(|i| ff.drift.lin_norm(grid.t0() + t_span * i as f64 / 4.0, probes))
        .fold(0.0, f64::max);
    let driver_seminorm = holder_seminorm(&ff.driver, gamma);
    let k_t = 1.0_f64.max(t_span.powf(1.0 - gamma));
    let constant = k_t * gronwall_envelope(t_span * lin_norm);
    let per_point: Vec<AprioriPoint> = (0..ff.num_points())
        .map(|idx| {
            let x0 = ff.initial_point(idx).to_vec();
            let lhs = holder_seminorm(ff.trajectory(idx), gamma);
            let bound = constant * (1.0 + linalg::norm(&x0)) * (1.0 + driver_seminorm);
            AprioriPoint {
                pass: lhs <= bound,
                x0,
                lhs,
                bound,
            }
        })
        .collect();
    AprioriReport {
        gamma,
        lin_norm,
        driver_seminorm,
        constant,
        pass: per_point.iter().all(|p| p.pass),
        per_point,
    }
}

/// Stability of the flow in the driver.
#[derive(Debug, Clone)]
pub struct FlowCompareReport {
    /// sup over initial points of the gamma-seminorm of Phi^X(x) - Phi^Y(x).
    pub difference_norm: f64,
    /// gamma-seminorm of the driver difference X - Y.
    pub driver_distance: f64,
    /// Lipschitz-in-time norm of DPhi^X - DPhi^Y, when requested.
    pub dphi_difference: Option<f64>,
}

/// Solves the flow under two drivers on the same grid and measures how far
/// apart the trajectories (and optionally their variational derivatives)
/// drift.
pub fn flow_compare(
    b: &VectorField,
    driver_x: &SampledPath,
    driver_y: &SampledPath,
    points: &[Vec<f64>],
    gamma: f64,
    with_dphi: bool,
) -> Result<FlowCompareReport> {
    let mut fx = solve_flow(b, driver_x, points)?;
    let mut fy = solve_flow(b, driver_y, points)?;
    let driver_distance = holder_seminorm(&driver_x.difference(driver_y)?, gamma);
    let mut difference_norm = 0.0_f64;
    for idx in 0..points.len() {
        let diff = fx.trajectory(idx).difference(fy.trajectory(idx))?;
        difference_norm = difference_norm.max(holder_seminorm(&diff, gamma));
    }
    let dphi_difference = if with_dphi {
        fx.ensure_dphi()?;
        fy.ensure_dphi()?;
        let mut worst = 0.0_f64;
        for idx in 0..points.len() {
            let diff = fx.dphi(idx).unwrap().difference(fy.dphi(idx).unwrap())?;
            worst = worst.max(holder_seminorm(&diff, 1.0));
        }
        Some(worst)
    } else {
        None
    };
    Ok(FlowCompareReport {
        difference_norm,
        driver_distance,
        dphi_difference,
    })
}

/// Derivative of the averaging functional F_t(x) = int_0^t f(Phi_q(x)) dq
/// by the chain rule: DF_t = int_0^t grad f(Phi_q) DPhi_q dq (trapezoid,
/// covector-valued path). Requires the cached variational derivative.
pub fn averaging_derivative(ff: &FlowField, idx: usize, f: &ScalarField) -> Result<SampledPath> {
    let d = ff.dim();
    let dphi = ff
        .dphi(idx)
        .ok_or_else(|| Error::invalid("variational derivative not computed; call ensure_dphi"))?;
    let traj = ff.trajectory(idx);
    let grid = ff.grid();
    let h = grid.step();
    let integrand: Vec<Vec<f64>> = (0..traj.len())
        .map(|k| {
            let g = f.gradient(grid.node(k), traj.value(k));
            let m = dphi.value(k);
            (0..d)
                .map(|c| (0..d).map(|r| g[r] * m[r * d + c]).sum())
                .collect()
        })
        .collect();
    let mut values = vec![0.0; traj.len() * d];
    let mut acc = vec![0.0; d];
    for k in 0..traj.len() - 1 {
        for a in 0..d {
            acc[a] += 0.5 * h * (integrand[k][a] + integrand[k + 1][a]);
            values[(k + 1) * d + a] = acc[a];
        }
    }
    SampledPath::new(grid.clone(), d, values)
}
