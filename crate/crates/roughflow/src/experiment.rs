//! Experiment runners: bind a parsed configuration to the numerical
//! modules, write CSV artifacts, and collect scalar results for the JSON
//! report. Everything here is deterministic for a fixed config; the only
//! run-to-run difference in a report is the wall-time field.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{
    ConvergenceExperiment, ConvergenceTarget, DualitySweepExperiment, ExperimentConfig,
    FbmExperiment, FlowExperiment, IrregularityExperiment, TransportResidualExperiment,
};
use crate::controlled::{rough_integral_pairing, ControlledPath};
use crate::drivers::{irregularity_norm, sample_fbm, FbmSampler, FbmSpec, IrregularitySpec};
use crate::error::{Error, Result};
use crate::flows::{solve_flow, FlowField};
use crate::grid::{SampledPath, TimeGrid};
use crate::linalg;
use crate::rate::log_log_fit;
use crate::rough::lift_path;
use crate::transport::{
    duality_bound, pair_value, TransportProblem, WeakResidualStudy, WeakSolutionSample,
};

/// Scalar results of one run. Keys are sorted on serialization, so the
/// report is byte-stable.
#[derive(Debug, Serialize)]
pub struct Report {
    pub config_hash: String,
    pub kind: String,
    pub scalars: BTreeMap<String, f64>,
    pub wall_time_seconds: f64,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

pub fn config_hash(config_bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config_bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Runs one experiment, writing CSV artifacts into `out_dir` and
/// returning the report (the caller decides where the report itself
/// goes).
pub fn run_experiment(
    config: &ExperimentConfig,
    config_bytes: &[u8],
    out_dir: &Path,
) -> Result<Report> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let scalars = match config {
        ExperimentConfig::Fbm(c) => run_fbm(c, out_dir)?,
        ExperimentConfig::Irregularity(c) => run_irregularity(c, out_dir)?,
        ExperimentConfig::Flow(c) => run_flow(c, out_dir)?,
        ExperimentConfig::TransportResidual(c) => run_transport_residual(c, out_dir)?,
        ExperimentConfig::DualitySweep(c) => run_duality_sweep(c, out_dir)?,
        ExperimentConfig::Convergence(c) => run_convergence(c, out_dir)?,
    };
    Ok(Report {
        config_hash: config_hash(config_bytes),
        kind: config.kind().to_string(),
        scalars,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    })
}

fn write(out_dir: &Path, name: &str, content: &str) -> Result<()> {
    fs::write(out_dir.join(name), content)?;
    Ok(())
}

fn run_fbm(c: &FbmExperiment, out_dir: &Path) -> Result<BTreeMap<String, f64>> {
    let grid = TimeGrid::new(0.0, c.horizon, c.nodes)?;
    let spec = FbmSpec::new(c.hurst, c.dim, c.horizon, c.seed)?;
    let path = sample_fbm(&spec, &grid)?;
    write(out_dir, "path.csv", &path.to_csv())?;
    let mut scalars = BTreeMap::new();
    scalars.insert("hurst".into(), c.hurst);
    scalars.insert("nodes".into(), c.nodes as f64);
    scalars.insert(
        "terminal_abs".into(),
        linalg::norm(path.value(c.nodes - 1)),
    );
    if c.mc_samples > 0 {
        // Covariance E[X_{T/2} X_T] = T^{2H}/2 for every Hurst index; the
        // midpoint must be a grid node.
        if c.nodes % 2 == 0 {
            return Err(Error::Config(
                "the Monte Carlo study needs an odd node count (midpoint on the grid)".into(),
            ));
        }
        let mid = (c.nodes - 1) / 2;
        let sampler = FbmSampler::new(c.hurst, c.dim, &grid)?;
        let products: Vec<f64> = (0..c.mc_samples as u64)
            .collect::<Vec<u64>>()
            .par_iter()
            .map(|&k| {
                let x = sampler.sample(c.seed.wrapping_add(k));
                x.value(mid)[0] * x.value(c.nodes - 1)[0]
            })
            .collect();
        let m = products.len() as f64;
        let mean = linalg::pairwise_sum(&products) / m;
        let sq: Vec<f64> = products.iter().map(|p| (p - mean) * (p - mean)).collect();
        let se = (linalg::pairwise_sum(&sq) / (m * (m - 1.0))).sqrt();
        let target = 0.5 * c.horizon.powf(2.0 * c.hurst);
        scalars.insert("mc_covariance".into(), mean);
        scalars.insert("mc_standard_error".into(), se);
        scalars.insert("mc_target".into(), target);
        scalars.insert("mc_abs_error".into(), (mean - target).abs());
    }
    Ok(scalars)
}

fn run_irregularity(c: &IrregularityExperiment, out_dir: &Path) -> Result<BTreeMap<String, f64>> {
    let grid = TimeGrid::new(0.0, c.horizon, c.nodes)?;
    let path = c.driver.sample(&grid)?;
    let spec = IrregularitySpec::new(
        c.rho,
        c.gamma_w.unwrap_or(crate::drivers::DEFAULT_GAMMA_W),
        crate::drivers::default_xi_grid(c.driver.dim(), c.levels.unwrap_or(7)),
        c.pair_stride,
    )?;
    let report = irregularity_norm(&path, &spec)?;
    let mut csv = String::from("magnitude,value,s,t,max_phase_step,warned\n");
    for fe in &report.per_frequency {
        csv.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            fe.magnitude,
            fe.value,
            fe.s,
            fe.t,
            fe.max_phase_step,
            u8::from(fe.warned)
        ));
    }
    write(out_dir, "per_frequency.csv", &csv)?;
    let mut scalars = BTreeMap::new();
    scalars.insert("value".into(), report.value);
    scalars.insert("argmax_xi_magnitude".into(), linalg::norm(&report.argmax_xi));
    scalars.insert("argmax_s".into(), report.argmax_s);
    scalars.insert("argmax_t".into(), report.argmax_t);
    scalars.insert("warned".into(), f64::from(u8::from(report.warned)));
    scalars.insert("frequencies".into(), report.per_frequency.len() as f64);
    Ok(scalars)
}

fn run_flow(c: &FlowExperiment, out_dir: &Path) -> Result<BTreeMap<String, f64>> {
    let grid = TimeGrid::new(0.0, c.horizon, c.nodes)?;
    let field = c.field.build()?;
    let driver = c.driver.sample(&grid)?;
    let mut ff: FlowField = solve_flow(&field, &driver, &c.points)?;
    if c.variational {
        ff.ensure_dphi()?;
    }
    write(out_dir, "flow.csv", &ff.to_csv())?;
    let mut scalars = BTreeMap::new();
    let d = field.dim();
    for idx in 0..c.points.len() {
        let traj = ff.trajectory(idx);
        let terminal = traj.value(traj.len() - 1);
        for a in 0..d {
            scalars.insert(format!("terminal_{idx}_{a}"), terminal[a]);
        }
        let jac = crate::flows::jacobian_determinant(&ff, idx)?;
        scalars.insert(
            format!("jacobian_exp_{idx}"),
            jac.value(jac.len() - 1)[0],
        );
        if c.variational {
            let det = crate::flows::dphi_determinant(&ff, idx)?;
            scalars.insert(format!("jacobian_det_{idx}"), det.value(det.len() - 1)[0]);
        }
    }
    Ok(scalars)
}

fn run_transport_residual(
    c: &TransportResidualExperiment,
    out_dir: &Path,
) -> Result<BTreeMap<String, f64>> {
    let grid = TimeGrid::new(0.0, 1.0, c.nodes)?;
    let driver = c.driver.lift(&grid, c.gamma)?;
    let problem = TransportProblem::new(
        c.field.build()?,
        c.zero_order.build()?,
        driver,
        c.initial.build()?,
        c.gamma,
    )?;
    let phi = c.test_function.build()?;
    let space = match &c.space {
        Some(b) => Some(b.build()?),
        None => None,
    };
    let study = WeakResidualStudy::new(&problem, &phi, space)?;
    let table = study.residual_table();
    let mut csv = String::from("window,max_residual\n");
    for &(w, r) in &table {
        csv.push_str(&format!("{w:.16e},{r:.16e}\n"));
    }
    write(out_dir, "residual_table.csv", &csv)?;
    write(
        out_dir,
        "u_final.csv",
        &study.sample().snapshot_csv(c.nodes - 1),
    )?;
    let fit = study.residual_slope()?;
    let mut scalars = BTreeMap::new();
    scalars.insert("residual_slope".into(), fit.slope);
    scalars.insert("residual_intercept".into(), fit.intercept);
    scalars.insert("gubinelli_norm".into(), study.gubinelli_norm()?);
    scalars.insert("u_sup".into(), study.sample().sup_value());
    scalars.insert("windows".into(), table.len() as f64);
    Ok(scalars)
}

fn run_duality_sweep(c: &DualitySweepExperiment, out_dir: &Path) -> Result<BTreeMap<String, f64>> {
    let grid = TimeGrid::new(0.0, 1.0, c.nodes)?;
    let driver = c.driver.lift(&grid, c.gamma)?;
    let field = c.field.build()?;
    let problem = TransportProblem::new(
        field.clone(),
        crate::fields::ScalarField::Zero,
        driver,
        c.initial.build()?,
        c.gamma,
    )?;
    let phi0 = c.test_function.build()?;
    let quad = c.space.build()?;
    let mut csv = String::from("epsilon,lhs,rhs,u_sup\n");
    let mut scalars = BTreeMap::new();
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    for (i, &eps) in c.epsilons.iter().enumerate() {
        let smooth = field.mollify(eps)?;
        let rep = duality_bound(&problem, &smooth, &phi0, 1.0, &quad, c.q_stride)?;
        csv.push_str(&format!(
            "{eps:.16e},{:.16e},{:.16e},{:.16e}\n",
            rep.lhs, rep.rhs, rep.u_sup
        ));
        scalars.insert(format!("lhs_{i}"), rep.lhs);
        scalars.insert(format!("rhs_{i}"), rep.rhs);
        monotone &= rep.rhs < prev;
        prev = rep.rhs;
    }
    write(out_dir, "sweep.csv", &csv)?;
    scalars.insert("rhs_monotone".into(), f64::from(u8::from(monotone)));
    scalars.insert("epsilons".into(), c.epsilons.len() as f64);
    Ok(scalars)
}

fn run_convergence(c: &ConvergenceExperiment, out_dir: &Path) -> Result<BTreeMap<String, f64>> {
    let rows: Vec<(usize, f64, f64)> = c
        .resolutions
        .iter()
        .map(|&n| {
            let h = 1.0 / (n - 1) as f64;
            let err = match c.target {
                ConvergenceTarget::RoughIntegral => rough_integral_error(n)?,
                ConvergenceTarget::Flow => flow_error(n)?,
            };
            Ok((n, h, err))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("nodes,step,error\n");
    for &(n, h, e) in &rows {
        csv.push_str(&format!("{n},{h:.16e},{e:.16e}\n"));
    }
    write(out_dir, "convergence.csv", &csv)?;
    let fit = log_log_fit(
        &rows
            .iter()
            .map(|&(_, h, e)| (h, e))
            .collect::<Vec<(f64, f64)>>(),
    )?;
    let mut scalars = BTreeMap::new();
    scalars.insert("slope".into(), fit.slope);
    scalars.insert("intercept".into(), fit.intercept);
    scalars.insert("resolutions".into(), rows.len() as f64);
    for &(n, _, e) in &rows {
        scalars.insert(format!("error_n{n}"), e);
    }
    Ok(scalars)
}

/// Compensated integral of y = X^2 against X = t on [0, 1]; exact value
/// 1/3. The quadratic integrand leaves a genuine second-order error.
fn rough_integral_error(n: usize) -> Result<f64> {
    let grid = TimeGrid::new(0.0, 1.0, n)?;
    let x = SampledPath::from_scalar_fn(grid.clone(), |t| t)?;
    let rp = lift_path(&x, 1, 0.45)?;
    let value = SampledPath::from_scalar_fn(grid.clone(), |t| t * t)?;
    let derivative = SampledPath::from_scalar_fn(grid, |t| 2.0 * t)?;
    let cp = ControlledPath::new(value, derivative, 1, 0.45)?;
    let integral = rough_integral_pairing(&cp, &rp, 0, n - 1)?;
    Ok((integral - 1.0 / 3.0).abs())
}

/// Linear drift b = -x with driver X = sin(2t)/2 against the
/// variation-of-constants formula for the continuum driver. The sampled
/// driver is linear between nodes, so the error is dominated by the
/// sampling gap, second order in the step.
fn flow_error(n: usize) -> Result<f64> {
    let grid = TimeGrid::new(0.0, 1.0, n)?;
    let field = crate::fields::VectorField::linear(1, vec![-1.0])?;
    let driver = SampledPath::from_scalar_fn(grid, |t| (2.0 * t).sin() / 2.0)?;
    let x0 = 1.0;
    let ff = solve_flow(&field, &driver, &[vec![x0]])?;
    let traj = ff.trajectory(0);
    let got = traj.value(traj.len() - 1)[0];
    // Phi_1 = x0 e^{-1} + int_0^1 e^{s-1} cos(2s) ds.
    let t: f64 = 1.0;
    let integral = ((2.0 * t).cos() + 2.0 * (2.0 * t).sin()) / 5.0 - (-t).exp() / 5.0;
    let want = x0 * (-t).exp() + integral;
    Ok((got - want).abs())
}

/// Full pairing path of the solution against a test function; used by the
/// uniqueness-regression experiment in the acceptance suite.
pub fn pairing_path(
    problem: &TransportProblem,
    quad: &crate::transport::BoxGrid,
    phi: &crate::fields::TestFunction,
) -> Result<Vec<f64>> {
    let ws = WeakSolutionSample::build(problem, quad.clone())?;
    Ok((0..ws.time().len())
        .map(|k| pair_value(&ws, phi, k))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn hash_is_stable_and_hex() {
        let h = config_hash(b"{}");
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash(b"{}"));
        assert_ne!(h, config_hash(b"{} "));
    }

    #[test]
    fn fbm_run_writes_path_and_scalars() {
        let dir = tempdir().unwrap();
        let text = r#"{"kind": "fbm", "hurst": 0.5, "nodes": 33, "seed": 11, "mc_samples": 200}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let report = run_experiment(&cfg, text.as_bytes(), dir.path()).unwrap();
        assert_eq!(report.kind, "fbm");
        assert!(dir.path().join("path.csv").exists());
        let cov = report.scalars["mc_covariance"];
        let se = report.scalars["mc_standard_error"];
        assert!((cov - 0.5).abs() < 4.0 * se, "cov {cov} se {se}");
    }

    #[test]
    fn reports_are_reproducible_modulo_wall_time() {
        let text =
            r#"{"kind": "convergence", "target": "rough-integral", "resolutions": [9, 17, 33]}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        let r1 = run_experiment(&cfg, text.as_bytes(), d1.path()).unwrap();
        let r2 = run_experiment(&cfg, text.as_bytes(), d2.path()).unwrap();
        let strip = |r: &Report| {
            r.to_json()
                .lines()
                .filter(|l| !l.contains("wall_time_seconds"))
                .collect::<Vec<&str>>()
                .join("\n")
        };
        assert_eq!(strip(&r1), strip(&r2));
        assert_eq!(
            fs::read_to_string(d1.path().join("convergence.csv")).unwrap(),
            fs::read_to_string(d2.path().join("convergence.csv")).unwrap()
        );
    }

    #[test]
    fn rough_integral_convergence_is_second_order() {
        let e1 = rough_integral_error(17).unwrap();
        let e2 = rough_integral_error(33).unwrap();
        let e3 = rough_integral_error(65).unwrap();
        assert!(e1 / e2 > 3.4 && e1 / e2 < 4.6, "{}", e1 / e2);
        assert!(e2 / e3 > 3.4 && e2 / e3 < 4.6, "{}", e2 / e3);
    }

    #[test]
    fn flow_convergence_tracks_the_sampling_gap() {
        let e1 = flow_error(33).unwrap();
        let e2 = flow_error(65).unwrap();
        let ratio = e1 / e2;
        assert!(ratio > 3.0 && ratio < 5.5, "ratio {ratio}");
    }

    #[test]
    fn irregularity_run_reports_the_line_argmax() {
        let dir = tempdir().unwrap();
        let text = r#"{
            "kind": "irregularity",
            "driver": {"type": "line", "velocity": [1.0]},
            "nodes": 257,
            "rho": 2.0,
            "levels": 5
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let report = run_experiment(&cfg, text.as_bytes(), dir.path()).unwrap();
        // With rho = 2 the (1+|xi|)^2 prefactor beats the 1/|xi| decay of
        // the oscillatory integral, so the largest magnitude wins.
        assert_eq!(report.scalars["argmax_xi_magnitude"], 16.0);
        assert!(dir.path().join("per_frequency.csv").exists());
    }
}
