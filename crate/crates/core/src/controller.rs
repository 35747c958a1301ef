//! Learning-based tracking law, observer and closed-loop engine.
//!
//! Per step, with `x̂` the observer state:
//!
//! ```text
//! u   = −μ(x̂) + r + φᵀ(x̂ − s)
//! x̂⁺ = (A + bφᵀ)(x̂ − s) + s⁺ + θ(x̂₁ − y)
//! ```
//!
//! A closed-loop step runs measure → control → plant → observer → reference,
//! in that order. The errors `e = x − s` and `ê = x̂ − x` then obey the
//! concatenated recursion `ẽ⁺ = Ãẽ + b̃(f(x) − μ(x̂)) − θ̃v`, which
//! [`run_error_dynamics`] iterates independently of the plant.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::acquisition::ExplorationPolicy;
use crate::error::{check_dim, Error, Result};
use crate::krr::KrrModel;
use crate::plant::{measure, plant_step, reference_step, NoiseSource, Nonlinearity, PlantConfig, ReferenceSpec};
use crate::synthesis::GainSet;

/// Source of the feed-forward term `μ`.
#[derive(Debug, Clone)]
pub enum ModelHandle {
    /// `μ ≡ 0`.
    None,
    Krr(Box<KrrModel>),
    /// Ground-truth `f`; only for the exact-cancellation baseline.
    Exact(Nonlinearity),
}

impl ModelHandle {
    pub fn label(&self) -> &'static str {
        match self {
            ModelHandle::None => "without_krr",
            ModelHandle::Krr(_) => "with_krr",
            ModelHandle::Exact(_) => "exact",
        }
    }

    pub fn mu(&self, x: &[f64]) -> Result<f64> {
        match self {
            ModelHandle::None => Ok(0.0),
            ModelHandle::Krr(m) => m.predict(x),
            ModelHandle::Exact(f) => Ok(f.eval(x)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControllerState {
    pub x_hat: DVector<f64>,
    pub gains: GainSet,
    pub model: ModelHandle,
}

impl ControllerState {
    pub fn new(gains: GainSet, model: ModelHandle, x_hat: DVector<f64>) -> Result<Self> {
        check_dim("observer state", gains.order(), x_hat.len())?;
        if x_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("initial observer state must be finite".into()));
        }
        Ok(Self { x_hat, gains, model })
    }

    /// `u = −μ(x̂) + r_k + φᵀ(x̂ − s)`.
    pub fn control(&self, s: &DVector<f64>, r_k: f64) -> Result<f64> {
        check_dim("reference state", self.x_hat.len(), s.len())?;
        let mu = self.model.mu(self.x_hat.as_slice())?;
        if !mu.is_finite() {
            return Err(Error::Fault(format!("non-finite prediction {mu}")));
        }
        let u = -mu + r_k + self.gains.phi.dot(&(&self.x_hat - s));
        if !u.is_finite() {
            return Err(Error::Fault(format!("non-finite control {u}")));
        }
        Ok(u)
    }

    /// Advances and stores `x̂`.
    pub fn observer_step(&mut self, s_k: &DVector<f64>, s_next: &DVector<f64>, y_k: f64) -> Result<&DVector<f64>> {
        let n = self.x_hat.len();
        check_dim("reference state", n, s_k.len())?;
        check_dim("next reference state", n, s_next.len())?;
        let innovation = self.x_hat[0] - y_k;
        let next = self.gains.closed_loop() * (&self.x_hat - s_k) + s_next + &self.gains.theta * innovation;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fault("non-finite observer state".into()));
        }
        self.x_hat = next;
        Ok(&self.x_hat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub s: Vec<f64>,
    pub u: f64,
    pub y: f64,
    /// Realized measurement noise `v = y − x₁`.
    pub v: f64,
    /// Realized model residual `f(x) − μ(x̂)`.
    pub residual: f64,
    pub e: Vec<f64>,
    pub e_hat: Vec<f64>,
    pub e_norm: f64,
    pub e_hat_norm: f64,
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl TraceRecord {
    /// True when the stored errors and norms agree with the stored states.
    pub fn is_consistent(&self) -> bool {
        let e = sub(&self.x, &self.s);
        let e_hat = sub(&self.x_hat, &self.x);
        e == self.e && e_hat == self.e_hat && norm(&e) == self.e_norm && norm(&e_hat) == self.e_hat_norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub variant: String,
    pub seed: u64,
    pub order: usize,
    pub records: Vec<TraceRecord>,
    /// Set when a fault stopped the run early; `records` holds the prefix.
    pub fault: Option<String>,
}

/// Runs the closed loop for `steps` iterations, recording `k = 0..steps−1`.
#[allow(clippy::too_many_arguments)]
pub fn run_closed_loop(
    cfg: &PlantConfig,
    reference: &ReferenceSpec,
    gains: &GainSet,
    model: ModelHandle,
    x0: &DVector<f64>,
    x_hat0: &DVector<f64>,
    steps: usize,
    seed: u64,
) -> Result<SimulationTrace> {
    if steps == 0 {
        return Err(Error::Input("steps must be at least 1".into()));
    }
    let n = cfg.order;
    check_dim("initial state", n, x0.len())?;
    check_dim("reference initial state", n, reference.initial_state.len())?;
    check_dim("gain order", n, gains.order())?;
    let variant = model.label().to_string();
    let mut ctrl = ControllerState::new(gains.clone(), model, x_hat0.clone())?;
    let mut noise = NoiseSource::new(seed, cfg.v_bar);
    let mut x = x0.clone();
    let mut s = reference.initial_state.clone();
    let mut records = Vec::with_capacity(steps);
    let mut fault = None;

    for k in 0..steps {
        let (y, v) = measure(&x, &mut noise);
        let step = (|| -> Result<(f64, f64, DVector<f64>)> {
            let u = ctrl.control(&s, reference.r(k))?;
            let residual = cfg.f.eval(x.as_slice()) - ctrl.model.mu(ctrl.x_hat.as_slice())?;
            let next = plant_step(cfg, &x, u)?;
            Ok((u, residual, next))
        })();
        let (u, residual, next) = match step {
            Ok(v) => v,
            Err(e) => {
                fault = Some(format!("step {k}: {e}"));
                break;
            }
        };
        let e = sub(x.as_slice(), s.as_slice());
        let e_hat = sub(ctrl.x_hat.as_slice(), x.as_slice());
        records.push(TraceRecord {
            k,
            t: k as f64 * cfg.step,
            x: x.as_slice().to_vec(),
            x_hat: ctrl.x_hat.as_slice().to_vec(),
            s: s.as_slice().to_vec(),
            u,
            y,
            v,
            residual,
            e_norm: norm(&e),
            e_hat_norm: norm(&e_hat),
            e,
            e_hat,
        });
        let s_next = reference_step(reference, &s, k);
        if let Err(e) = ctrl.observer_step(&s, &s_next, y) {
            fault = Some(format!("step {k}: {e}"));
            break;
        }
        x = next;
        s = s_next;
    }
    if let Some(f) = &fault {
        log::warn!("closed loop stopped early: {f}");
    }
    Ok(SimulationTrace {
        variant,
        seed,
        order: n,
        records,
        fault,
    })
}

/// Iterates `ẽ⁺ = Ãẽ + b̃·residual − θ̃·v`, returning `ẽ(t_0), …, ẽ(t_steps)`.
pub fn run_error_dynamics(
    gains: &GainSet,
    residuals: &[f64],
    noise: &[f64],
    e0: &DVector<f64>,
    steps: usize,
) -> Result<Vec<DVector<f64>>> {
    check_dim("concatenated error", 2 * gains.order(), e0.len())?;
    if residuals.len() < steps || noise.len() < steps {
        return Err(Error::Input(format!(
            "need {steps} residual and noise samples, got {} and {}",
            residuals.len(),
            noise.len()
        )));
    }
    let mut out = Vec::with_capacity(steps + 1);
    let mut e = e0.clone();
    out.push(e.clone());
    for k in 0..steps {
        e = &gains.a_tilde * &e + &gains.b_tilde * residuals[k] - &gains.theta_tilde * noise[k];
        out.push(e.clone());
    }
    Ok(out)
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(e; ê)` at step `k`.
    pub fn stacked_error(&self, k: usize) -> DVector<f64> {
        let r = &self.records[k];
        DVector::from_iterator(2 * self.order, r.e.iter().chain(&r.e_hat).copied())
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    pub fn noise(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.v).collect()
    }

    /// Largest per-step deviation from the concatenated error recursion.
    pub fn error_dynamics_mismatch(&self, gains: &GainSet) -> Result<f64> {
        if self.records.is_empty() {
            return Ok(0.0);
        }
        let steps = self.records.len() - 1;
        let replay = run_error_dynamics(gains, &self.residuals(), &self.noise(), &self.stacked_error(0), steps)?;
        Ok((0..=steps)
            .map(|k| (&replay[k] - self.stacked_error(k)).amax())
            .fold(0.0, f64::max))
    }

    pub fn header(order: usize) -> Vec<String> {
        let mut h = vec!["k".to_string(), "t".to_string()];
        for prefix in ["x", "x_hat", "s"] {
            h.extend((1..=order).map(|i| format!("{prefix}_{i}")));
        }
        h.push("u".into());
        h.push("y".into());
        for prefix in ["e", "e_hat"] {
            h.extend((1..=order).map(|i| format!("{prefix}_{i}")));
        }
        h.push("e_norm".into());
        h.push("e_hat_norm".into());
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(self.order))?;
        for r in &self.records {
            let mut row = vec![r.k.to_string(), r.t.to_string()];
            for v in r.x.iter().chain(&r.x_hat).chain(&r.s) {
                row.push(v.to_string());
            }
            row.push(r.u.to_string());
            row.push(r.y.to_string());
            for v in r.e.iter().chain(&r.e_hat) {
                row.push(v.to_string());
            }
            row.push(r.e_norm.to_string());
            row.push(r.e_hat_norm.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(Path::new("<trace>"), e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Smallest `k` from which both error norms stay at or below `bound`.
    pub fn observed_k_bar(&self, bound: f64) -> Option<usize> {
        let mut k_bar = None;
        for r in self.records.iter().rev() {
            if r.e_norm <= bound && r.e_hat_norm <= bound {
                k_bar = Some(r.k);
            } else {
                break;
            }
        }
        k_bar
    }

    pub fn summarize(&self, steady_window: usize, bound: Option<f64>) -> TraceSummary {
        let start = self.records.len().saturating_sub(steady_window);
        let tail = &self.records[start..];
        let e: Vec<f64> = tail.iter().map(|r| r.e_norm).collect();
        let e_hat: Vec<f64> = tail.iter().map(|r| r.e_hat_norm).collect();
        let (k_bar, violations) = match bound {
            Some(b) => (
                self.observed_k_bar(b),
                Some(tail.iter().filter(|r| r.e_norm > b || r.e_hat_norm > b).count()),
            ),
            None => (None, None),
        };
        TraceSummary {
            variant: self.variant.clone(),
            seed: self.seed,
            steps: self.records.len(),
            steady_window: tail.len(),
            median_e_norm: median(&e),
            median_e_hat_norm: median(&e_hat),
            max_e_norm: e.iter().copied().fold(0.0, f64::max),
            max_e_hat_norm: e_hat.iter().copied().fold(0.0, f64::max),
            bound,
            observed_k_bar: k_bar,
            steady_violations: violations,
            fault: self.fault.clone(),
        }
    }
}

/// Steady-state statistics over the last `steady_window` records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub variant: String,
    pub seed: u64,
    pub steps: usize,
    pub steady_window: usize,
    pub median_e_norm: f64,
    pub median_e_hat_norm: f64,
    pub max_e_norm: f64,
    pub max_e_hat_norm: f64,
    pub bound: Option<f64>,
    pub observed_k_bar: Option<usize>,
    /// Steady-window steps where either norm exceeds the bound.
    pub steady_violations: Option<usize>,
    pub fault: Option<String>,
}

impl TraceSummary {
    /// Bound available, and the steady window lies entirely after `k̄`.
    pub fn contained(&self) -> bool {
        matches!(self.steady_violations, Some(0))
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// The tracking controller run as an exploration policy during data
/// collection: the reference restarts at its initial state and
/// `x̂(0) = s(0)` at every episode.
#[derive(Debug, Clone)]
pub struct TrackingPolicy {
    ctrl: ControllerState,
    reference: ReferenceSpec,
    s: DVector<f64>,
}

impl TrackingPolicy {
    pub fn new(gains: GainSet, model: ModelHandle, reference: ReferenceSpec) -> Result<Self> {
        let s = reference.initial_state.clone();
        let ctrl = ControllerState::new(gains, model, s.clone())?;
        Ok(Self { ctrl, reference, s })
    }
}

impl ExplorationPolicy for TrackingPolicy {
    fn reset(&mut self) {
        self.s = self.reference.initial_state.clone();
        self.ctrl.x_hat = self.s.clone();
    }

    fn act(&mut self, k: usize, y: f64) -> Result<f64> {
        let u = self.ctrl.control(&self.s, self.reference.r(k))?;
        let s_next = reference_step(&self.reference, &self.s, k);
        self.ctrl.observer_step(&self.s, &s_next, y)?;
        self.s = s_next;
        Ok(u)
    }
}
