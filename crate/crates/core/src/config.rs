//! Experiment configuration: one JSON document, units in field names.
//!
//! [`ExperimentConfig`] is the serialized form. [`Experiment`] is the
//! validated, resolved form that the pipeline stages consume.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::acquisition::{noise_bound, AcquisitionParams, Pairing};
use crate::error::{Error, Result};
use crate::kernels::{f_lipschitz, KernelSpec, LipschitzInfo};
use crate::linalg::{max_abs, symmetric_eigenvalues};
use crate::plant::{BoxSet, Driving, Interval, Nonlinearity, PlantConfig, ReferenceSpec, RegistryContext};
use crate::synthesis::{GainSet, MAX_LYAPUNOV_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSection,
    pub kernel: KernelSection,
    pub rkhs_bound: f64,
    pub reference: ReferenceSection,
    pub poles: PoleSection,
    pub q: QSpec,
    pub acquisition: AcquisitionSection,
    pub simulation: SimulationSection,
    pub grid_per_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub order: usize,
    pub step_seconds: f64,
    /// Registry name: `zero`, `paper_sim` or `rkhs_sample:<seed>`.
    pub nonlinearity: String,
    pub noise_bound: f64,
    pub domain: BoxSet,
    pub safe_set: BoxSet,
    pub input_set: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub sigma_f: f64,
    pub length_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    /// `zero`, `paper_sine` or `constant:<value>`.
    pub driving: String,
    pub initial_state: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pole {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl From<Pole> for Complex64 {
    fn from(p: Pole) -> Self {
        Complex64::new(p.re, p.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleSection {
    pub controller: Vec<Pole>,
    pub observer: Vec<Pole>,
}

/// Weight `Q` of the Lyapunov equation, of size `2n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QSpec {
    Identity,
    ScaledIdentity {
        scale: f64,
    },
    /// Row-major.
    Matrix {
        rows: Vec<Vec<f64>>,
    },
}

impl QSpec {
    pub fn matrix(&self, dim: usize) -> Result<DMatrix<f64>> {
        let q = match self {
            QSpec::Identity => DMatrix::identity(dim, dim),
            QSpec::ScaledIdentity { scale } => DMatrix::identity(dim, dim) * *scale,
            QSpec::Matrix { rows } => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::config("q.rows", format!("must be {dim}x{dim}")));
                }
                DMatrix::from_fn(dim, dim, |i, j| rows[i][j])
            }
        };
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("q", "entries must be finite"));
        }
        if max_abs(&(&q - q.transpose())) > 1e-12 * max_abs(&q).max(1.0) {
            return Err(Error::config("q", "must be symmetric"));
        }
        if symmetric_eigenvalues(&q)[0] <= 0.0 {
            return Err(Error::config("q", "must be positive definite"));
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSection {
    pub max_episodes: usize,
    pub max_episode_steps: usize,
    pub target_samples: Option<usize>,
    pub seed: u64,
    pub pairing: Pairing,
    /// Fixed episode start; uniform over the safe set when absent.
    pub reset_state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub steps: usize,
    pub initial_state: Vec<f64>,
    /// Observer start `x̂(0)`; the reference start `s(0)` when absent.
    pub initial_estimate: Option<Vec<f64>>,
    pub seeds: Vec<u64>,
    pub steady_window_steps: usize,
}

impl ExperimentConfig {
    /// The reproduction experiment shipped with the tool.
    pub fn paper() -> Self {
        let s0 = vec![0.0, 50.0 * 0.1f64.sin()];
        let domain = BoxSet {
            lower: vec![-12.0, -6.0],
            upper: vec![12.0, 6.0],
        };
        let safe_set = domain.shrink(0.05).expect("valid box");
        Self {
            plant: PlantSection {
                order: 2,
                step_seconds: 0.2,
                nonlinearity: "paper_sim".into(),
                noise_bound: 0.01,
                domain,
                safe_set,
                input_set: Interval {
                    lower: -20.0,
                    upper: 20.0,
                },
            },
            kernel: KernelSection {
                sigma_f: 0.5,
                length_scale: 5.0,
            },
            rkhs_bound: 0.3,
            reference: ReferenceSection {
                driving: "paper_sine".into(),
                initial_state: s0.clone(),
            },
            poles: PoleSection {
                controller: vec![Pole { re: 0.8, im: 0.0 }, Pole { re: 0.7, im: 0.0 }],
                observer: vec![Pole { re: 0.01, im: 0.0 }, Pole { re: 0.02, im: 0.0 }],
            },
            q: QSpec::Identity,
            acquisition: AcquisitionSection {
                max_episodes: 20,
                max_episode_steps: 100,
                target_samples: Some(200),
                seed: 0,
                pairing: Pairing::Corrected,
                reset_state: None,
            },
            simulation: SimulationSection {
                steps: 200,
                initial_state: s0,
                initial_estimate: None,
                seeds: (0..20).collect(),
                steady_window_steps: 50,
            },
            grid_per_dim: 101,
        }
    }

    /// Parses JSON; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." || path == "?" {
                "<root>".to_string()
            } else {
                path
            };
            Error::config(field, e.into_inner().to_string())
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    /// Checks every precondition and resolves the experiment.
    pub fn resolve(&self) -> Result<Experiment> {
        Experiment::new(self.clone())
    }
}

/// A validated configuration with its derived quantities.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub plant: PlantConfig,
    pub kernel: KernelSpec,
    pub reference: ReferenceSpec,
    pub gains: GainSet,
    pub q: DMatrix<f64>,
    pub lipschitz: LipschitzInfo,
    /// Target-noise bound of the collected dataset.
    pub w_bar: f64,
    pub initial_state: DVector<f64>,
    pub initial_estimate: DVector<f64>,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn with_field<T>(field: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::config(field, other.to_string()),
    })
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let c = &config;
        let n = c.plant.order;
        if n == 0 {
            return Err(Error::config("plant.order", "must be at least 1"));
        }
        if 2 * n > MAX_LYAPUNOV_DIM {
            return Err(Error::config(
                "plant.order",
                format!("at most {} supported", MAX_LYAPUNOV_DIM / 2),
            ));
        }
        positive("plant.step_seconds", c.plant.step_seconds)?;
        if !(c.plant.noise_bound >= 0.0) || !c.plant.noise_bound.is_finite() {
            return Err(Error::config("plant.noise_bound", "must be non-negative and finite"));
        }
        let domain = with_field(
            "plant.domain",
            BoxSet::new(c.plant.domain.lower.clone(), c.plant.domain.upper.clone()),
        )?;
        let safe_set = with_field(
            "plant.safe_set",
            BoxSet::new(c.plant.safe_set.lower.clone(), c.plant.safe_set.upper.clone()),
        )?;
        if domain.dim() != n {
            return Err(Error::config("plant.domain", format!("must have dimension {n}")));
        }
        if safe_set.dim() != n {
            return Err(Error::config("plant.safe_set", format!("must have dimension {n}")));
        }
        let input_set = with_field(
            "plant.input_set",
            Interval::new(c.plant.input_set.lower, c.plant.input_set.upper),
        )?;

        positive("kernel.sigma_f", c.kernel.sigma_f)?;
        positive("kernel.length_scale", c.kernel.length_scale)?;
        let kernel = with_field("kernel", KernelSpec::new(c.kernel.sigma_f, c.kernel.length_scale, n))?;
        positive("rkhs_bound", c.rkhs_bound)?;

        let ctx = RegistryContext {
            kernel,
            domain: domain.clone(),
            rkhs_bound: c.rkhs_bound,
        };
        let f = with_field(
            "plant.nonlinearity",
            Nonlinearity::lookup(&c.plant.nonlinearity, n, Some(&ctx)),
        )?;
        let plant = PlantConfig::new(
            n,
            c.plant.step_seconds,
            f,
            c.plant.noise_bound,
            domain.clone(),
            safe_set,
            input_set,
        )?;

        let driving = with_field("reference.driving", Driving::parse(&c.reference.driving))?;
        if c.reference.initial_state.len() != n {
            return Err(Error::config(
                "reference.initial_state",
                format!("must have length {n}"),
            ));
        }
        let reference = ReferenceSpec::new(driving, c.reference.initial_state.clone(), c.plant.step_seconds)?;

        if c.poles.controller.len() != n {
            return Err(Error::config("poles.controller", format!("need exactly {n} poles")));
        }
        if c.poles.observer.len() != n {
            return Err(Error::config("poles.observer", format!("need exactly {n} poles")));
        }
        let ctrl: Vec<Complex64> = c.poles.controller.iter().map(|&p| p.into()).collect();
        let obs: Vec<Complex64> = c.poles.observer.iter().map(|&p| p.into()).collect();
        if ctrl.iter().chain(&obs).any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(Error::config("poles", "must be finite"));
        }
        let gains = GainSet::synthesize(n, c.plant.step_seconds, &ctrl, &obs).map_err(|e| match e {
            Error::Synthesis(m) => Error::config("poles", m),
            other => other,
        })?;
        let q = c.q.matrix(2 * n)?;

        if c.acquisition.target_samples == Some(0) {
            return Err(Error::config(
                "acquisition.target_samples",
                "must be positive when given",
            ));
        }
        if let Some(x0) = &c.acquisition.reset_state {
            if x0.len() != n || !plant.in_safe_set(x0) {
                return Err(Error::config(
                    "acquisition.reset_state",
                    format!("must be {n} values inside the safe set"),
                ));
            }
        }
        if c.simulation.steps == 0 {
            return Err(Error::config("simulation.steps", "must be at least 1"));
        }
        if c.simulation.seeds.is_empty() {
            return Err(Error::config("simulation.seeds", "must not be empty"));
        }
        if c.simulation.steady_window_steps == 0 {
            return Err(Error::config("simulation.steady_window_steps", "must be at least 1"));
        }
        if c.simulation.initial_state.len() != n || c.simulation.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(
                "simulation.initial_state",
                format!("must be {n} finite values"),
            ));
        }
        let initial_estimate = match &c.simulation.initial_estimate {
            Some(v) if v.len() != n || v.iter().any(|x| !x.is_finite()) => {
                return Err(Error::config(
                    "simulation.initial_estimate",
                    format!("must be {n} finite values"),
                ))
            }
            Some(v) => DVector::from_column_slice(v),
            None => reference.initial_state.clone(),
        };
        if c.grid_per_dim < 2 {
            return Err(Error::config("grid_per_dim", "must be at least 2"));
        }

        let lipschitz = f_lipschitz(&kernel, c.rkhs_bound)?;
        let w_bar = noise_bound(n, c.plant.step_seconds, c.plant.noise_bound, lipschitz.f_lipschitz)?;
        let initial_state = DVector::from_column_slice(&c.simulation.initial_state);
        Ok(Self {
            plant,
            kernel,
            reference,
            gains,
            q,
            lipschitz,
            w_bar,
            initial_state,
            initial_estimate,
            config,
        })
    }

    pub fn acquisition_params(&self) -> AcquisitionParams {
        let a = &self.config.acquisition;
        AcquisitionParams {
            max_episodes: a.max_episodes,
            max_episode_steps: a.max_episode_steps,
            target_samples: a.target_samples,
            pairing: a.pairing,
            w_bar: self.w_bar,
            reset_state: a.reset_state.clone(),
        }
    }
}
