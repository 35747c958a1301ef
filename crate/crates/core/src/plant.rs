//! Ground-truth integrator-chain plant, reference generator, bounded output
//! noise and the registry of test nonlinearities.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{gram_matrix, Kernel, KernelSpec};

/// Axis-aligned box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::Input("box must have at least one dimension".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(Error::Input(format!(
                    "box axis {i}: lower {l} must not exceed upper {u}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn contains_box(&self, other: &BoxSet) -> bool {
        other.dim() == self.dim()
            && other.lower.iter().zip(&self.lower).all(|(a, b)| a >= b)
            && other.upper.iter().zip(&self.upper).all(|(a, b)| a <= b)
    }

    /// Euclidean distance from `x` to the box (zero inside).
    pub fn distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| {
                let d = if v < l {
                    l - v
                } else if v > u {
                    v - u
                } else {
                    0.0
                };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Shrinks each axis by `fraction` of its width on both sides.
    pub fn shrink(&self, fraction: f64) -> Result<Self> {
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let m = (u - l) * fraction;
                (l + m, u - m)
            })
            .unzip();
        Self::new(lower, upper)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| if l == u { *l } else { rng.random_range(*l..=*u) })
            .collect()
    }

    /// Tensor grid with `per_dim` evenly spaced points per axis, endpoints
    /// included. Axis 0 varies fastest.
    pub fn grid(&self, per_dim: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let per_dim = per_dim.max(1);
        let total = per_dim.pow(d as u32);
        let axis = |i: usize, j: usize| {
            if per_dim == 1 {
                0.5 * (self.lower[i] + self.upper[i])
            } else {
                self.lower[i] + (self.upper[i] - self.lower[i]) * j as f64 / (per_dim - 1) as f64
            }
        };
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|i| {
                        let j = idx % per_dim;
                        idx /= per_dim;
                        axis(i, j)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Closed interval of admissible inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::Input(format!(
                "interval lower {lower} must not exceed upper {upper}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

/// Finite kernel expansion `f(·) = Σ_j a_j κ(c_j, ·)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelExpansion {
    pub kernel: KernelSpec,
    pub centers: Vec<Vec<f64>>,
    pub coeffs: Vec<f64>,
}

impl KernelExpansion {
    pub fn new(kernel: KernelSpec, centers: Vec<Vec<f64>>, coeffs: Vec<f64>) -> Result<Self> {
        check_dim("expansion coefficients", centers.len(), coeffs.len())?;
        for c in &centers {
            check_dim("expansion center", kernel.input_dim(), c.len())?;
        }
        Ok(Self {
            kernel,
            centers,
            coeffs,
        })
    }

    /// Draws `count` centers uniformly in `domain` and Gaussian coefficients,
    /// rescaled so the RKHS norm equals `norm`.
    pub fn sample<R: Rng>(kernel: KernelSpec, domain: &BoxSet, count: usize, norm: f64, rng: &mut R) -> Result<Self> {
        check_dim("expansion domain", kernel.input_dim(), domain.dim())?;
        let centers: Vec<Vec<f64>> = (0..count).map(|_| domain.sample(rng)).collect();
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let raw: Vec<f64> = (0..count).map(|_| normal.sample(rng)).collect();
        let mut f = Self::new(kernel, centers, raw)?;
        let current = f.rkhs_norm()?;
        if current > 0.0 {
            let s = norm / current;
            f.coeffs.iter_mut().for_each(|a| *a *= s);
        }
        Ok(f)
    }

    /// `‖f‖_κ = √(aᵀ K_C a)`.
    pub fn rkhs_norm(&self) -> Result<f64> {
        let k = gram_matrix(&self.kernel, &self.centers)?;
        let a = DVector::from_column_slice(&self.coeffs);
        Ok(a.dot(&(k * &a)).max(0.0).sqrt())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.coeffs)
            .map(|(c, a)| a * self.kernel.eval_unchecked(c, x))
            .sum()
    }
}

/// Registered unknown dynamics `f: X → R`.
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    Zero,
    /// `0.5 (sin(0.2 x₁) − 1) + 1 / (1 + exp(x₂))`.
    PaperSim,
    Rkhs(KernelExpansion),
}

/// What `rkhs_sample:<seed>` needs to build its expansion.
#[derive(Debug, Clone)]
pub struct RegistryContext {
    pub kernel: KernelSpec,
    pub domain: BoxSet,
    pub rkhs_bound: f64,
}

/// Number of centers in a registry-drawn RKHS sample.
pub const RKHS_SAMPLE_CENTERS: usize = 8;

impl Nonlinearity {
    /// Resolves a registry name: `zero`, `paper_sim`, `rkhs_sample:<seed>`.
    pub fn lookup(name: &str, order: usize, ctx: Option<&RegistryContext>) -> Result<Self> {
        let f = match name {
            "zero" => Nonlinearity::Zero,
            "paper_sim" => {
                if order < 2 {
                    return Err(Error::config(
                        "plant.nonlinearity",
                        "paper_sim needs a plant of order at least 2",
                    ));
                }
                Nonlinearity::PaperSim
            }
            other => {
                let Some(seed) = other.strip_prefix("rkhs_sample:") else {
                    return Err(Error::config(
                        "plant.nonlinearity",
                        format!("unknown nonlinearity `{other}`"),
                    ));
                };
                let seed: u64 = seed
                    .parse()
                    .map_err(|_| Error::config("plant.nonlinearity", format!("bad seed in `{other}`")))?;
                let ctx =
                    ctx.ok_or_else(|| Error::config("plant.nonlinearity", "rkhs_sample needs a kernel context"))?;
                if ctx.kernel.input_dim() != order {
                    return Err(Error::config(
                        "plant.nonlinearity",
                        "kernel input dimension must equal the plant order",
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let norm = ctx.rkhs_bound * rng.random_range(0.5..1.0);
                Nonlinearity::Rkhs(KernelExpansion::sample(
                    ctx.kernel,
                    &ctx.domain,
                    RKHS_SAMPLE_CENTERS,
                    norm,
                    &mut rng,
                )?)
            }
        };
        Ok(f)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::PaperSim => 0.5 * ((0.2 * x[0]).sin() - 1.0) + 1.0 / (1.0 + x[1].exp()),
            Nonlinearity::Rkhs(e) => e.eval(x),
        }
    }

    /// Exact RKHS norm, when the function is a finite kernel expansion.
    pub fn rkhs_norm(&self) -> Option<f64> {
        match self {
            Nonlinearity::Zero => Some(0.0),
            Nonlinearity::PaperSim => None,
            Nonlinearity::Rkhs(e) => e.rkhs_norm().ok(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantConfig {
    pub order: usize,
    pub step: f64,
    pub f: Nonlinearity,
    pub v_bar: f64,
    pub domain: BoxSet,
    pub safe_set: BoxSet,
    pub input_set: Interval,
}

impl PlantConfig {
    pub fn new(
        order: usize,
        step: f64,
        f: Nonlinearity,
        v_bar: f64,
        domain: BoxSet,
        safe_set: BoxSet,
        input_set: Interval,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::config("plant.order", "must be at least 1"));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::config("plant.step_seconds", "must be positive"));
        }
        if !(v_bar >= 0.0) || !v_bar.is_finite() {
            return Err(Error::config("plant.noise_bound", "must be non-negative"));
        }
        if domain.dim() != order {
            return Err(Error::config("plant.domain", "dimension must equal the order"));
        }
        if !domain.contains_box(&safe_set) {
            return Err(Error::config("plant.safe_set", "must lie inside the domain"));
        }
        Ok(Self {
            order,
            step,
            f,
            v_bar,
            domain,
            safe_set,
            input_set,
        })
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.domain.contains(x)
    }

    pub fn in_safe_set(&self, x: &[f64]) -> bool {
        self.safe_set.contains(x)
    }
}

/// One step of the chain `x_i ← x_i + T x_{i+1}` (i < n), `x_n ← top`.
pub fn chain_step(x: &DVector<f64>, top: f64, step: f64) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(n, |i, _| if i + 1 < n { x[i] + x[i + 1] * step } else { top })
}

pub fn plant_step(cfg: &PlantConfig, x: &DVector<f64>, u: f64) -> Result<DVector<f64>> {
    check_dim("plant state", cfg.order, x.len())?;
    if !u.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fault("plant state or input".into()));
    }
    let top = cfg.f.eval(x.as_slice()) + u;
    let next = chain_step(x, top, cfg.step);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fault("plant successor state".into()));
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseKind {
    /// i.i.d. uniform on `[−v̄, v̄]`.
    Uniform,
    /// Zero-mean Gaussian with standard deviation `sigma_fraction · v̄`,
    /// rejection-truncated to `[−v̄, v̄]`.
    TruncatedGaussian { sigma_fraction: f64 },
}

/// Seeded bounded noise. One source per trajectory.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    bound: f64,
    kind: NoiseKind,
}

impl NoiseSource {
    pub fn new(seed: u64, bound: f64) -> Self {
        Self::with_kind(seed, bound, NoiseKind::Uniform)
    }

    pub fn with_kind(seed: u64, bound: f64, kind: NoiseKind) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            bound: bound.max(0.0),
            kind,
        }
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn sample(&mut self) -> f64 {
        if self.bound == 0.0 {
            return 0.0;
        }
        match self.kind {
            NoiseKind::Uniform => self.rng.random_range(-self.bound..=self.bound),
            NoiseKind::TruncatedGaussian { sigma_fraction } => {
                let sd = (sigma_fraction * self.bound).max(f64::MIN_POSITIVE);
                let normal = Normal::new(0.0, sd).expect("finite standard deviation");
                loop {
                    let v = normal.sample(&mut self.rng);
                    if v.abs() <= self.bound {
                        break v;
                    }
                }
            }
        }
    }
}

/// `y = x₁ + v`, returning `(y, v)`.
pub fn measure(x: &DVector<f64>, noise: &mut NoiseSource) -> (f64, f64) {
    let v = noise.sample();
    (x[0] + v, v)
}

/// Top-level drive `r(t_k)` of the reference chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Driving {
    Zero,
    Constant(f64),
    /// `50 (sin(0.1 k + 0.2) − sin(0.1 k + 0.1))`.
    PaperSine,
}

impl Driving {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(Driving::Zero),
            "paper_sine" => Ok(Driving::PaperSine),
            other => other
                .strip_prefix("constant:")
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .map(Driving::Constant)
                .ok_or_else(|| Error::config("reference.driving", format!("unknown driving function `{other}`"))),
        }
    }

    pub fn eval(&self, k: usize) -> f64 {
        match *self {
            Driving::Zero => 0.0,
            Driving::Constant(c) => c,
            Driving::PaperSine => {
                let k = k as f64;
                50.0 * ((0.1 * k + 0.2).sin() - (0.1 * k + 0.1).sin())
            }
        }
    }
}

impl fmt::Display for Driving {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Driving::Zero => write!(f, "zero"),
            Driving::Constant(c) => write!(f, "constant:{c}"),
            Driving::PaperSine => write!(f, "paper_sine"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpec {
    pub driving: Driving,
    pub initial_state: DVector<f64>,
    pub step: f64,
}

impl ReferenceSpec {
    pub fn new(driving: Driving, initial_state: Vec<f64>, step: f64) -> Result<Self> {
        if initial_state.is_empty() {
            return Err(Error::config("reference.initial_state", "must not be empty"));
        }
        if !(step > 0.0) {
            return Err(Error::config("plant.step_seconds", "must be positive"));
        }
        Ok(Self {
            driving,
            initial_state: DVector::from_vec(initial_state),
            step,
        })
    }

    /// The reference of the reproduction experiment: `s(0) = (0, 50 sin 0.1)`.
    pub fn paper(step: f64) -> Self {
        Self {
            driving: Driving::PaperSine,
            initial_state: DVector::from_column_slice(&[0.0, 50.0 * 0.1f64.sin()]),
            step,
        }
    }

    pub fn r(&self, k: usize) -> f64 {
        self.driving.eval(k)
    }
}

pub fn reference_step(spec: &ReferenceSpec, s: &DVector<f64>, k: usize) -> DVector<f64> {
    chain_step(s, spec.r(k), spec.step)
}

/// Reference states `s(t_0), …, s(t_steps)`.
pub fn reference_trajectory(spec: &ReferenceSpec, steps: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = spec.initial_state.clone();
    out.push(s.clone());
    for k in 0..steps {
        s = reference_step(spec, &s, k);
        out.push(s.clone());
    }
    out
}

/// `K_C` as an owned matrix, exposed for norm oracles.
pub fn expansion_gram(e: &KernelExpansion) -> Result<DMatrix<f64>> {
    gram_matrix(&e.kernel, &e.centers)
}
