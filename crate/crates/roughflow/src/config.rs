//! JSON experiment configurations.
//!
//! Files, not flags, carry experiment parameters: a config is the
//! reproducibility artifact. Schemas are strict (unknown keys are
//! rejected) and validated before any numerics run.

use serde::Deserialize;

use crate::drivers::{sample_fbm, FbmSpec};
use crate::error::{Error, Result};
use crate::fields::{ScalarField, TestFunction, TrigMode, VectorField};
use crate::grid::{SampledPath, TimeGrid};
use crate::rough::{lift_path, RoughPath, GAMMA_MAX, GAMMA_MIN};
use crate::transport::{BoxGrid, InitialCondition};

fn default_horizon() -> f64 {
    1.0
}

fn default_dim() -> usize {
    1
}

fn default_gamma() -> f64 {
    0.4
}

fn default_stride() -> usize {
    1
}

/// One trigonometric mode: integer frequency vector plus complex
/// amplitude, component by component.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub k: Vec<i64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ModeSpec {
    fn build(&self) -> TrigMode {
        TrigMode {
            k: self.k.clone(),
            re: self.re.clone(),
            im: self.im.clone(),
        }
    }
}

/// Vector field description.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { components: Vec<f64> },
    Linear { matrix: Vec<Vec<f64>> },
    Trig { dim: usize, modes: Vec<ModeSpec> },
}

impl FieldSpec {
    pub fn build(&self) -> Result<VectorField> {
        match self {
            FieldSpec::Constant { components } => VectorField::constant(components.clone()),
            FieldSpec::Linear { matrix } => {
                let dim = matrix.len();
                let mut flat = Vec::with_capacity(dim * dim);
                for row in matrix {
                    if row.len() != dim {
                        return Err(Error::Config("linear field matrix must be square".into()));
                    }
                    flat.extend_from_slice(row);
                }
                VectorField::linear(dim, flat)
            }
            FieldSpec::Trig { dim, modes } => {
                VectorField::trig(*dim, modes.iter().map(ModeSpec::build).collect())
            }
        }
    }
}

/// Scalar zero-order coefficient description.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalarSpec {
    Zero,
    Constant { value: f64 },
    Divergence { field: FieldSpec },
    Trig { dim: usize, modes: Vec<ModeSpec> },
}

impl ScalarSpec {
    pub fn build(&self) -> Result<ScalarField> {
        Ok(match self {
            ScalarSpec::Zero => ScalarField::Zero,
            ScalarSpec::Constant { value } => ScalarField::Constant(*value),
            ScalarSpec::Divergence { field } => {
                ScalarField::Divergence(Box::new(field.build()?))
            }
            ScalarSpec::Trig { dim, modes } => {
                ScalarField::scalar_trig(*dim, modes.iter().map(ModeSpec::build).collect())?
            }
        })
    }
}

/// Driving signal description. Paths are sampled on the experiment grid;
/// the rough lift interpolates linearly between nodes.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriverSpec {
    Fbm {
        hurst: f64,
        #[serde(default = "default_dim")]
        dim: usize,
        seed: u64,
        /// Amplitude multiplier applied after sampling.
        #[serde(default = "crate::config::default_scale")]
        scale: f64,
    },
    /// X_t = velocity * t.
    Line { velocity: Vec<f64> },
    /// X_t = amplitude * sin(frequency * t), one dimensional.
    Sinusoid { amplitude: f64, frequency: f64 },
}

pub(crate) fn default_scale() -> f64 {
    1.0
}

impl DriverSpec {
    pub fn dim(&self) -> usize {
        match self {
            DriverSpec::Fbm { dim, .. } => *dim,
            DriverSpec::Line { velocity } => velocity.len(),
            DriverSpec::Sinusoid { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DriverSpec::Fbm {
                hurst, dim, seed, ..
            } => {
                FbmSpec::new(*hurst, *dim, 1.0, *seed)?;
            }
            DriverSpec::Line { velocity } => {
                if velocity.is_empty() {
                    return Err(Error::Config("line driver needs a velocity vector".into()));
                }
            }
            DriverSpec::Sinusoid { frequency, .. } => {
                if *frequency == 0.0 {
                    return Err(Error::Config("sinusoid frequency must be nonzero".into()));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, grid: &TimeGrid) -> Result<SampledPath> {
        match self {
            DriverSpec::Fbm {
                hurst,
                dim,
                seed,
                scale,
            } => {
                let spec = FbmSpec::new(*hurst, *dim, grid.span(), *seed)?;
                let raw = sample_fbm(&spec, grid)?;
                if *scale == 1.0 {
                    return Ok(raw);
                }
                let values: Vec<f64> = raw.values().iter().map(|v| scale * v).collect();
                SampledPath::new(grid.clone(), *dim, values)
            }
            DriverSpec::Line { velocity } => SampledPath::from_fn(grid.clone(), velocity.len(), |t| {
                velocity.iter().map(|v| v * t).collect()
            }),
            DriverSpec::Sinusoid {
                amplitude,
                frequency,
            } => SampledPath::from_scalar_fn(grid.clone(), |t| amplitude * (frequency * t).sin()),
        }
    }

    /// Sample and lift in one go. Fractional drivers are lifted from their
    /// node values; smooth drivers get refined cross-area quadrature.
    pub fn lift(&self, grid: &TimeGrid, gamma: f64) -> Result<RoughPath> {
        let path = self.sample(grid)?;
        match self {
            DriverSpec::Fbm { hurst, .. } => {
                if gamma >= *hurst {
                    return Err(Error::Config(format!(
                        "gamma {gamma} must be below the driver's hurst {hurst}"
                    )));
                }
                lift_path(&path, 1, gamma)
            }
            _ => lift_path(&path, 4, gamma),
        }
    }
}

/// Compactly supported test function: bump times a low-degree polynomial.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default)]
    pub degree: u8,
}

impl BumpSpec {
    pub fn build(&self) -> Result<TestFunction> {
        TestFunction::new(self.center.clone(), self.radius, self.degree)
    }
}

/// Initial datum description.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    Constant { value: f64 },
    Bump { center: Vec<f64>, radius: f64, #[serde(default)] degree: u8 },
    Trig { dim: usize, modes: Vec<ModeSpec> },
}

impl InitialSpec {
    pub fn build(&self) -> Result<InitialCondition> {
        Ok(match self {
            InitialSpec::Constant { value } => InitialCondition::Constant(*value),
            InitialSpec::Bump {
                center,
                radius,
                degree,
            } => InitialCondition::Bump(TestFunction::new(center.clone(), *radius, *degree)?),
            InitialSpec::Trig { dim, modes } => InitialCondition::Trig(ScalarField::scalar_trig(
                *dim,
                modes.iter().map(ModeSpec::build).collect(),
            )?),
        })
    }
}

/// Uniform quadrature cube.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub center: Vec<f64>,
    pub half_width: f64,
    pub points_per_axis: usize,
}

impl BoxSpec {
    pub fn build(&self) -> Result<BoxGrid> {
        BoxGrid::cube(&self.center, self.half_width, self.points_per_axis)
    }
}

/// Exact fractional Brownian sampling, optionally with a Monte Carlo
/// covariance check at (horizon/2, horizon).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbmExperiment {
    pub hurst: f64,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub nodes: usize,
    pub seed: u64,
    /// 0 disables the Monte Carlo study.
    #[serde(default)]
    pub mc_samples: usize,
    #[serde(default)]
    pub output: Option<String>,
}

/// Occupation-measure irregularity scan of a driver sample.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrregularityExperiment {
    pub driver: DriverSpec,
    pub nodes: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub rho: f64,
    #[serde(default)]
    pub gamma_w: Option<f64>,
    /// Number of dyadic magnitude levels in the default frequency grid.
    #[serde(default)]
    pub levels: Option<u32>,
    #[serde(default = "default_stride")]
    pub pair_stride: usize,
    #[serde(default)]
    pub output: Option<String>,
}

/// Characteristic flow of a field along a driver, from several starting
/// points.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowExperiment {
    pub field: FieldSpec,
    pub driver: DriverSpec,
    pub nodes: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub points: Vec<Vec<f64>>,
    /// Also solve the variational equation and report det DPhi.
    #[serde(default)]
    pub variational: bool,
    #[serde(default)]
    pub output: Option<String>,
}

/// Weak-formulation residual study of one transport problem against one
/// test function.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportResidualExperiment {
    pub field: FieldSpec,
    #[serde(default = "ScalarSpec::zero")]
    pub zero_order: ScalarSpec,
    pub driver: DriverSpec,
    pub nodes: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub initial: InitialSpec,
    pub test_function: BumpSpec,
    #[serde(default)]
    pub space: Option<BoxSpec>,
    #[serde(default)]
    pub output: Option<String>,
}

impl ScalarSpec {
    fn zero() -> Self {
        ScalarSpec::Zero
    }
}

/// Duality bound sweep across mollification widths.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualitySweepExperiment {
    pub field: FieldSpec,
    pub driver: DriverSpec,
    pub nodes: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub initial: InitialSpec,
    pub test_function: BumpSpec,
    pub epsilons: Vec<f64>,
    pub space: BoxSpec,
    #[serde(default = "default_q_stride")]
    pub q_stride: usize,
    #[serde(default)]
    pub output: Option<String>,
}

fn default_q_stride() -> usize {
    4
}

/// Self-contained convergence study at dyadic resolutions.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceTarget {
    /// Compensated rough integral of X^2 against X = t; reference 1/3.
    RoughIntegral,
    /// Linear-drift flow with a sinusoidal driver against the
    /// variation-of-constants formula.
    Flow,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceExperiment {
    pub target: ConvergenceTarget,
    pub resolutions: Vec<usize>,
    #[serde(default)]
    pub output: Option<String>,
}

/// Top-level experiment file: a `kind` tag plus kind-specific fields.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Fbm(FbmExperiment),
    Irregularity(IrregularityExperiment),
    Flow(FlowExperiment),
    TransportResidual(TransportResidualExperiment),
    DualitySweep(DualitySweepExperiment),
    Convergence(ConvergenceExperiment),
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::Fbm(_) => "fbm",
            ExperimentConfig::Irregularity(_) => "irregularity",
            ExperimentConfig::Flow(_) => "flow",
            ExperimentConfig::TransportResidual(_) => "transport-residual",
            ExperimentConfig::DualitySweep(_) => "duality-sweep",
            ExperimentConfig::Convergence(_) => "convergence",
        }
    }

    pub fn output(&self) -> Option<&str> {
        match self {
            ExperimentConfig::Fbm(c) => c.output.as_deref(),
            ExperimentConfig::Irregularity(c) => c.output.as_deref(),
            ExperimentConfig::Flow(c) => c.output.as_deref(),
            ExperimentConfig::TransportResidual(c) => c.output.as_deref(),
            ExperimentConfig::DualitySweep(c) => c.output.as_deref(),
            ExperimentConfig::Convergence(c) => c.output.as_deref(),
        }
    }

    /// Structural validation: everything that can be rejected without
    /// running numerics.
    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::Fbm(c) => {
                FbmSpec::new(c.hurst, c.dim, c.horizon, c.seed)?;
                check_nodes(c.nodes)?;
            }
            ExperimentConfig::Irregularity(c) => {
                c.driver.validate()?;
                check_nodes(c.nodes)?;
                if c.rho < 0.0 {
                    return Err(Error::Config("rho must be >= 0".into()));
                }
                if let Some(gw) = c.gamma_w {
                    if !(gw > 0.5 && gw <= 1.0) {
                        return Err(Error::Config("gamma_w must lie in (1/2, 1]".into()));
                    }
                }
            }
            ExperimentConfig::Flow(c) => {
                c.driver.validate()?;
                check_nodes(c.nodes)?;
                let field = c.field.build()?;
                if field.dim() != c.driver.dim() {
                    return Err(Error::Config(
                        "field and driver dimensions must agree".into(),
                    ));
                }
                if c.points.is_empty() {
                    return Err(Error::Config("flow needs at least one start point".into()));
                }
                for p in &c.points {
                    if p.len() != field.dim() {
                        return Err(Error::Config("start point dimension mismatch".into()));
                    }
                }
            }
            ExperimentConfig::TransportResidual(c) => {
                c.driver.validate()?;
                check_nodes(c.nodes)?;
                check_gamma(c.gamma)?;
                c.field.build()?;
                c.zero_order.build()?;
                c.initial.build()?;
                c.test_function.build()?;
                if let Some(b) = &c.space {
                    b.build()?;
                }
            }
            ExperimentConfig::DualitySweep(c) => {
                c.driver.validate()?;
                check_nodes(c.nodes)?;
                check_gamma(c.gamma)?;
                c.field.build()?;
                c.initial.build()?;
                c.test_function.build()?;
                c.space.build()?;
                if c.epsilons.is_empty() {
                    return Err(Error::Config("sweep needs at least one epsilon".into()));
                }
                if c.epsilons.iter().any(|&e| e <= 0.0) {
                    return Err(Error::Config("epsilons must be positive".into()));
                }
                if c.q_stride == 0 {
                    return Err(Error::Config("q_stride must be >= 1".into()));
                }
            }
            ExperimentConfig::Convergence(c) => {
                if c.resolutions.len() < 2 {
                    return Err(Error::Config(
                        "convergence needs at least two resolutions".into(),
                    ));
                }
                for &n in &c.resolutions {
                    check_nodes(n)?;
                }
            }
        }
        Ok(())
    }
}

fn check_nodes(nodes: usize) -> Result<()> {
    if !(2..=4097).contains(&nodes) {
        return Err(Error::Config(format!(
            "nodes must lie in [2, 4097], got {nodes}"
        )));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > GAMMA_MIN && gamma <= GAMMA_MAX) {
        return Err(Error::Config(format!(
            "gamma must lie in ({GAMMA_MIN}, {GAMMA_MAX}], got {gamma}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_minimal_fbm_config() {
        let cfg = ExperimentConfig::from_json(
            r#"{"kind": "fbm", "hurst": 0.3, "nodes": 129, "seed": 7}"#,
        )
        .unwrap();
        assert_eq!(cfg.kind(), "fbm");
        match cfg {
            ExperimentConfig::Fbm(c) => {
                assert_eq!(c.dim, 1);
                assert_eq!(c.horizon, 1.0);
                assert_eq!(c.mc_samples, 0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = ExperimentConfig::from_json(
            r#"{"kind": "fbm", "hurst": 0.3, "nodes": 129, "seed": 7, "typo": 1}"#,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("typo"), "{err}");
    }

    #[test]
    fn rejects_out_of_range_hurst_with_the_documented_message() {
        let err = ExperimentConfig::from_json(
            r#"{"kind": "fbm", "hurst": 1.5, "nodes": 129, "seed": 7}"#,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("hurst must lie in (0,1)"), "{err}");
    }

    #[test]
    fn driver_samples_line_and_sinusoid() {
        let grid = TimeGrid::new(0.0, 1.0, 5).unwrap();
        let line = DriverSpec::Line {
            velocity: vec![2.0, -1.0],
        };
        let p = line.sample(&grid).unwrap();
        assert_eq!(p.value(4), &[2.0, -1.0]);
        let sin = DriverSpec::Sinusoid {
            amplitude: 0.5,
            frequency: 2.0,
        };
        let p = sin.sample(&grid).unwrap();
        assert!((p.value(4)[0] - 0.5 * 2.0_f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn fbm_lift_requires_gamma_below_hurst() {
        let grid = TimeGrid::new(0.0, 1.0, 9).unwrap();
        let spec = DriverSpec::Fbm {
            hurst: 0.35,
            dim: 1,
            seed: 1,
            scale: 1.0,
        };
        assert!(spec.lift(&grid, 0.4).is_err());
        assert!(spec.lift(&grid, 0.34).is_ok());
    }

    #[test]
    fn transport_config_round_trip() {
        let text = r#"{
            "kind": "transport-residual",
            "field": {"type": "constant", "components": [0.0]},
            "driver": {"type": "fbm", "hurst": 0.45, "seed": 6, "scale": 0.25},
            "nodes": 129,
            "gamma": 0.4,
            "initial": {"type": "trig", "dim": 1, "modes": [{"k": [1], "re": [0.0], "im": [-0.5]}]},
            "test_function": {"center": [0.0], "radius": 1.0}
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.kind(), "transport-residual");
    }

    #[test]
    fn validation_catches_dimension_mismatch() {
        let text = r#"{
            "kind": "flow",
            "field": {"type": "linear", "matrix": [[0.0, 1.0], [-1.0, 0.0]]},
            "driver": {"type": "sinusoid", "amplitude": 0.5, "frequency": 2.0},
            "nodes": 65,
            "points": [[1.0, 0.0]]
        }"#;
        let err = ExperimentConfig::from_json(text).unwrap_err();
        assert!(err.to_string().contains("dimensions"), "{err}");
    }
}
