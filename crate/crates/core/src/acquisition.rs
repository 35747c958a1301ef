//! Training-data acquisition from first-state output measurements only.
//!
//! Each episode starts inside the safe set `S`, runs an exploration policy
//! until the state leaves `S` (index `k*`) or a step cap is hit, then turns
//! the recorded outputs into auxiliary states by repeated divided
//! differences:
//!
//! ```text
//! x̃₁(t_k) = y(t_k),   x̃_{i+1}(t_k) = (x̃_i(t_{k+1}) − x̃_i(t_k)) / T
//! ```
//!
//! Targets are paired as `z(t_k) = x̃_n(t_{k+1}) − u(t_k)`, which satisfies
//! `z(t_k) − f(x(t_k)) = v_n(t_k)`. The pairing `z(t_k) = x̃_n(t_k) − u(t_k)`
//! is available as [`Pairing::Literal`] for comparison; it does not satisfy
//! that identity for `n ≥ 2`.

use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krr::Dataset;
use crate::plant::{measure, plant_step, NoiseSource, PlantConfig};

/// Recorded outputs and inputs of one episode, aligned on `k = 0 … k*`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionRun {
    pub outputs: Vec<f64>,
    pub inputs: Vec<f64>,
    /// True states, kept for diagnostics and plotting; not used for learning.
    pub states: Vec<DVector<f64>>,
    pub exit_index: usize,
    /// `false` when the episode hit the step cap without leaving `S`.
    pub exited: bool,
    pub step: f64,
}

impl AcquisitionRun {
    pub fn from_measurements(outputs: Vec<f64>, inputs: Vec<f64>, step: f64) -> Result<Self> {
        if outputs.len() != inputs.len() || outputs.is_empty() {
            return Err(Error::Input(format!(
                "outputs ({}) and inputs ({}) must be aligned and non-empty",
                outputs.len(),
                inputs.len()
            )));
        }
        Ok(Self {
            exit_index: outputs.len() - 1,
            outputs,
            inputs,
            states: Vec::new(),
            exited: true,
            step,
        })
    }
}

/// Rows `x̃(t_k)` of the divided-difference table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuxiliaryStates {
    pub rows: Vec<Vec<f64>>,
}

impl AuxiliaryStates {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// How targets are paired with auxiliary states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// `z(t_k) = x̃_n(t_{k+1}) − u(t_k)`.
    #[default]
    Corrected,
    /// `z(t_k) = x̃_n(t_k) − u(t_k)`.
    Literal,
}

/// Builds `x̃(t_k)` for every `k` the recorded outputs support
/// (`k = 0 … k* − n + 1`). Runs with `k* < n` give an empty table.
pub fn auxiliary_states(run: &AcquisitionRun, order: usize) -> AuxiliaryStates {
    let len = run.outputs.len();
    if order == 0 || run.exit_index < order || len < order + 1 {
        return AuxiliaryStates::default();
    }
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(order);
    levels.push(run.outputs.clone());
    for i in 1..order {
        let prev = &levels[i - 1];
        let next: Vec<f64> = prev.windows(2).map(|w| (w[1] - w[0]) / run.step).collect();
        levels.push(next);
    }
    let rows = len - order + 1;
    AuxiliaryStates {
        rows: (0..rows)
            .map(|k| levels.iter().map(|level| level[k]).collect())
            .collect(),
    }
}

/// Data pairs for `k = 0 … k* − n`.
pub fn build_dataset(run: &AcquisitionRun, order: usize, w_bar: f64, pairing: Pairing) -> Result<Dataset> {
    let aux = auxiliary_states(run, order);
    if run.exit_index < order || aux.is_empty() {
        return Dataset::empty(order, w_bar);
    }
    let count = run.exit_index - order + 1;
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for k in 0..count {
        let top = match pairing {
            Pairing::Corrected => aux.rows[k + 1][order - 1],
            Pairing::Literal => aux.rows[k][order - 1],
        };
        inputs.push(aux.rows[k].clone());
        targets.push(top - run.inputs[k]);
    }
    Dataset::new(order, inputs, targets, w_bar)
}

/// `Σ_{i=1}^{n} (2/T)^{2(i−1)}`, the squared state-reconstruction factor.
pub fn geometric_factor(order: usize, step: f64) -> f64 {
    let q = (2.0 / step).powi(2);
    if (q - 1.0).abs() < 1e-12 {
        order as f64
    } else {
        (1.0 - q.powi(order as i32)) / (1.0 - q)
    }
}

/// Bound on `‖x(t_k) − x̃(t_k)‖`.
pub fn state_error_radius(order: usize, step: f64, v_bar: f64) -> f64 {
    geometric_factor(order, step).sqrt() * v_bar
}

/// `w̄ = ((2/T)^{n−1} + L_f √(Σ (2/T)^{2(i−1)})) v̄`.
pub fn noise_bound(order: usize, step: f64, v_bar: f64, f_lipschitz: f64) -> Result<f64> {
    if order == 0 {
        return Err(Error::Input("order must be at least 1".into()));
    }
    if !(step > 0.0) || !(v_bar >= 0.0) || !(f_lipschitz >= 0.0) {
        return Err(Error::Input(format!(
            "noise bound needs T > 0, v̄ ≥ 0, L_f ≥ 0 (got {step}, {v_bar}, {f_lipschitz})"
        )));
    }
    let differencing = (2.0 / step).powi(order as i32 - 1);
    Ok((differencing + f_lipschitz * geometric_factor(order, step).sqrt()) * v_bar)
}

/// An exploration control law driven by output measurements.
pub trait ExplorationPolicy {
    /// Called at the start of every episode.
    fn reset(&mut self);

    /// Control `u(t_k)` given the measurement `y(t_k)`.
    fn act(&mut self, k: usize, y: f64) -> Result<f64>;
}

/// Constant-input policy; mainly useful in tests.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub f64);

impl ExplorationPolicy for ConstantPolicy {
    fn reset(&mut self) {}

    fn act(&mut self, _k: usize, _y: f64) -> Result<f64> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionParams {
    pub max_episodes: usize,
    /// Episodes that stay inside `S` are cut at this index and treated as
    /// if `k*` were reached there.
    pub max_episode_steps: usize,
    pub target_samples: Option<usize>,
    pub pairing: Pairing,
    pub w_bar: f64,
    /// Episode start; drawn uniformly from `S` when absent.
    pub reset_state: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: usize,
    pub noise_seed: u64,
    pub reset_state: Vec<f64>,
    pub exit_index: usize,
    pub exited: bool,
    /// Index range `[start, end)` of this episode's pairs in the dataset.
    pub sample_range: (usize, usize),
    pub clamped_inputs: usize,
    /// Steps at which the state left the domain without having left `S`
    /// the step before; non-zero means `S` is not one-step safe.
    pub safety_violations: usize,
}

#[derive(Debug, Clone)]
pub struct Collection {
    pub dataset: Dataset,
    pub episodes: Vec<EpisodeRecord>,
    pub runs: Vec<AcquisitionRun>,
}

/// Runs one episode from `x0` until the state leaves `S` or the cap.
pub fn run_episode<P: ExplorationPolicy + ?Sized>(
    cfg: &PlantConfig,
    policy: &mut P,
    x0: DVector<f64>,
    noise: &mut NoiseSource,
    max_steps: usize,
) -> Result<(AcquisitionRun, usize, usize)> {
    policy.reset();
    let mut x = x0;
    let mut outputs = Vec::new();
    let mut inputs = Vec::new();
    let mut states = Vec::new();
    let mut clamped = 0;
    let mut violations = 0;
    let mut k = 0;
    let exited = loop {
        let (y, _) = measure(&x, noise);
        let raw = policy.act(k, y)?;
        if !raw.is_finite() {
            return Err(Error::Fault(format!("exploration input at step {k}")));
        }
        let u = cfg.input_set.clamp(raw);
        if u != raw {
            clamped += 1;
        }
        outputs.push(y);
        inputs.push(u);
        states.push(x.clone());
        if !cfg.in_safe_set(x.as_slice()) {
            break true;
        }
        if k == max_steps {
            break false;
        }
        let next = plant_step(cfg, &x, u)?;
        if !cfg.in_domain(next.as_slice()) {
            // x was in S; S should guarantee the successor stays in X.
            violations += 1;
        }
        x = next;
        k += 1;
    };
    if clamped > 0 {
        warn!("{clamped} exploration inputs clamped to the admissible set");
    }
    if violations > 0 {
        warn!("state left the domain directly from the safe set {violations} time(s)");
    }
    Ok((
        AcquisitionRun {
            exit_index: outputs.len() - 1,
            outputs,
            inputs,
            states,
            exited,
            step: cfg.step,
        },
        clamped,
        violations,
    ))
}

/// Repeats episodes, concatenating their pairs in episode order, until
/// `max_episodes` or the target sample count is reached.
pub fn collect<P: ExplorationPolicy + ?Sized>(
    cfg: &PlantConfig,
    policy: &mut P,
    params: &AcquisitionParams,
    seed: u64,
) -> Result<Collection> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut dataset = Dataset::empty(cfg.order, params.w_bar)?;
    let mut episodes = Vec::new();
    let mut runs = Vec::new();
    for index in 0..params.max_episodes {
        if params.target_samples.is_some_and(|t| dataset.len() >= t) {
            break;
        }
        let reset = match &params.reset_state {
            Some(x0) => x0.clone(),
            None => cfg.safe_set.sample(&mut master),
        };
        let noise_seed = master.next_u64();
        let mut noise = NoiseSource::new(noise_seed, cfg.v_bar);
        let (run, clamped, violations) = run_episode(
            cfg,
            policy,
            DVector::from_column_slice(&reset),
            &mut noise,
            params.max_episode_steps,
        )?;
        let start = dataset.len();
        let pairs = build_dataset(&run, cfg.order, params.w_bar, params.pairing)?;
        dataset.extend(pairs)?;
        if let Some(t) = params.target_samples {
            dataset.truncate(t);
        }
        episodes.push(EpisodeRecord {
            index,
            noise_seed,
            reset_state: reset,
            exit_index: run.exit_index,
            exited: run.exited,
            sample_range: (start, dataset.len()),
            clamped_inputs: clamped,
            safety_violations: violations,
        });
        runs.push(run);
    }
    Ok(Collection {
        dataset,
        episodes,
        runs,
    })
}

/// JSON metadata written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub order: usize,
    pub step_seconds: f64,
    pub v_bar: f64,
    pub w_bar: f64,
    pub f_lipschitz: f64,
    pub seed: u64,
    pub pairing: Pairing,
    pub samples: usize,
    pub episodes: Vec<EpisodeRecord>,
}

pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=data.input_dim()).map(|i| format!("x_tilde_{i}")).collect();
    header.push("z".into());
    w.write_record(&header)?;
    for (x, z) in data.inputs().iter().zip(data.targets()) {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        rec.push(z.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_dataset_csv(path: &Path, order: usize, w_bar: f64) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width != order + 1 {
        return Err(Error::config(
            "dataset",
            format!("expected {} columns for order {order}, found {width}", order + 1),
        ));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::config("dataset", format!("bad number `{s}`")))
            })
            .collect::<Result<_>>()?;
        targets.push(vals[order]);
        inputs.push(vals[..order].to_vec());
    }
    Dataset::new(order, inputs, targets, w_bar)
}

/// Per-step acquisition trajectories: `episode,k,t,x_1…x_n,u,y`.
pub fn write_runs_csv(path: &Path, runs: &[AcquisitionRun]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let order = runs.iter().find_map(|r| r.states.first().map(|s| s.len())).unwrap_or(0);
    let mut header = vec!["episode".to_string(), "k".into(), "t".into()];
    header.extend((1..=order).map(|i| format!("x_{i}")));
    header.extend(["u".to_string(), "y".into()]);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for (e, run) in runs.iter().enumerate() {
        for (k, x) in run.states.iter().enumerate() {
            let mut rec = vec![e.to_string(), k.to_string(), (k as f64 * run.step).to_string()];
            rec.extend(x.iter().map(|v| v.to_string()));
            rec.push(run.inputs[k].to_string());
            rec.push(run.outputs[k].to_string());
            writeln!(out, "{}", rec.join(",")).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{BoxSet, Interval, Nonlinearity};
    use approx::assert_relative_eq;

    fn plant(f: Nonlinearity, v_bar: f64) -> PlantConfig {
        let domain = BoxSet::new(vec![-12.0, -6.0], vec![12.0, 6.0]).unwrap();
        PlantConfig::new(
            2,
            0.2,
            f,
            v_bar,
            domain.clone(),
            domain.shrink(0.05).unwrap(),
            Interval::new(-20.0, 20.0).unwrap(),
        )
        .unwrap()
    }

    /// Simulates the plant with a fixed input sequence and returns the run.
    fn open_loop(cfg: &PlantConfig, x0: &[f64], us: &[f64], seed: u64) -> AcquisitionRun {
        let mut noise = NoiseSource::new(seed, cfg.v_bar);
        let mut x = DVector::from_column_slice(x0);
        let mut run = AcquisitionRun {
            outputs: vec![],
            inputs: vec![],
            states: vec![],
            exit_index: us.len() - 1,
            exited: true,
            step: cfg.step,
        };
        for &u in us {
            run.outputs.push(measure(&x, &mut noise).0);
            run.inputs.push(u);
            run.states.push(x.clone());
            x = plant_step(cfg, &x, u).unwrap();
        }
        run
    }

    fn wavy_inputs(len: usize, phase: f64) -> Vec<f64> {
        (0..len).map(|k| 0.8 * (0.3 * k as f64 + phase).sin()).collect()
    }

    #[test]
    fn finite_difference_example() {
        let run = AcquisitionRun::from_measurements(vec![0.0, 0.2, 0.6], vec![0.0; 3], 0.2).unwrap();
        let aux = auxiliary_states(&run, 2);
        assert_eq!(aux.len(), 2);
        assert_relative_eq!(aux.rows[0][1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(aux.rows[1][1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_outputs_have_zero_derivatives() {
        let run = AcquisitionRun::from_measurements(vec![3.0; 8], vec![0.0; 8], 0.1).unwrap();
        let aux = auxiliary_states(&run, 4);
        assert_eq!(aux.len(), 5);
        for row in &aux.rows {
            assert_eq!(row[0], 3.0);
            assert!(row[1..].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn short_runs_are_skipped() {
        let run = AcquisitionRun::from_measurements(vec![1.0, 2.0], vec![0.0; 2], 0.2).unwrap();
        assert!(auxiliary_states(&run, 2).is_empty());
        assert!(build_dataset(&run, 2, 0.1, Pairing::Corrected).unwrap().is_empty());
    }

    #[test]
    fn noiseless_reconstruction_is_exact() {
        for order in 1..=4 {
            let domain = BoxSet::new(vec![-1e3; order], vec![1e3; order]).unwrap();
            let cfg = PlantConfig::new(
                order,
                0.2,
                Nonlinearity::Zero,
                0.0,
                domain.clone(),
                domain,
                Interval::new(-5.0, 5.0).unwrap(),
            )
            .unwrap();
            let x0: Vec<f64> = (0..order).map(|i| 0.3 * i as f64 - 0.2).collect();
            let run = open_loop(&cfg, &x0, &wavy_inputs(30, 0.4), 0);
            let aux = auxiliary_states(&run, order);
            for (k, row) in aux.rows.iter().enumerate() {
                for (aux, truth) in row.iter().zip(&run.states[k]) {
                    assert!((aux - truth).abs() <= 1e-9 * truth.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn zero_dynamics_give_zero_targets() {
        let cfg = plant(Nonlinearity::Zero, 0.0);
        let run = open_loop(&cfg, &[0.5, -0.5], &wavy_inputs(40, 0.0), 0);
        let d = build_dataset(&run, 2, 0.1, Pairing::Corrected).unwrap();
        assert_eq!(d.len(), 38);
        assert!(d.targets().iter().all(|z| z.abs() < 1e-12));
    }

    #[test]
    fn noiseless_targets_equal_f() {
        let cfg = plant(Nonlinearity::PaperSim, 0.0);
        let run = open_loop(&cfg, &[1.0, 2.0], &wavy_inputs(60, 1.0), 0);
        let d = build_dataset(&run, 2, 0.1, Pairing::Corrected).unwrap();
        for (k, z) in d.targets().iter().enumerate() {
            let f = Nonlinearity::PaperSim.eval(run.states[k].as_slice());
            assert!((z - f).abs() < 1e-12, "k={k}: {z} vs {f}");
        }
        // The literal pairing misses f by x₂(t_k) − x₂(t_{k+1}).
        let lit = build_dataset(&run, 2, 0.1, Pairing::Literal).unwrap();
        let worst = lit
            .targets()
            .iter()
            .enumerate()
            .map(|(k, z)| (z - Nonlinearity::PaperSim.eval(run.states[k].as_slice())).abs())
            .fold(0.0, f64::max);
        assert!(worst > 0.1);
    }

    #[test]
    fn delay_property() {
        let run = AcquisitionRun::from_measurements((0..10).map(f64::from).collect(), vec![0.0; 10], 0.2).unwrap();
        for order in 1..=4 {
            let d = build_dataset(&run, order, 0.1, Pairing::Corrected).unwrap();
            assert_eq!(d.len(), run.exit_index - order + 1);
        }
    }

    #[test]
    fn noise_bound_examples() {
        for &lf in &[0.0, 0.3, 2.0] {
            assert_relative_eq!(
                noise_bound(1, 0.2, 0.01, lf).unwrap(),
                (1.0 + lf) * 0.01,
                epsilon = 1e-15
            );
        }
        let lf = 0.073_883_529_540_850_3;
        let expected = (10.0 + lf * 101f64.sqrt()) * 0.01;
        assert_relative_eq!(noise_bound(2, 0.2, 0.01, lf).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(
            noise_bound(2, 0.2, 0.01, lf).unwrap(),
            0.107_425_202_823_349_6,
            epsilon = 1e-12
        );
        assert_eq!(noise_bound(3, 0.2, 0.0, lf).unwrap(), 0.0);
        // T = 2: ratio one, the geometric sum has n unit terms.
        assert_relative_eq!(
            noise_bound(3, 2.0, 0.1, 0.5).unwrap(),
            (1.0 + 0.5 * 3f64.sqrt()) * 0.1,
            epsilon = 1e-15
        );
        assert!(noise_bound(0, 0.2, 0.01, 0.1).is_err());
        assert!(noise_bound(2, 0.0, 0.01, 0.1).is_err());
    }

    #[test]
    fn geometric_factor_matches_summation() {
        for order in 1..=6 {
            for &t in &[0.05, 0.2, 1.0, 1.9, 2.0, 3.5] {
                let q: f64 = 2.0 / t;
                let direct: f64 = (0..order).map(|i| q.powi(2 * i as i32)).sum();
                let g = geometric_factor(order, t);
                assert!((g - direct).abs() <= 1e-12 * direct, "n={order} T={t}: {g} vs {direct}");
            }
        }
    }

    #[test]
    fn noisy_targets_within_bound() {
        let cfg = plant(Nonlinearity::PaperSim, 0.01);
        let lf = 0.073_883_529_540_850_3;
        let w_bar = noise_bound(2, 0.2, 0.01, lf).unwrap();
        let radius = state_error_radius(2, 0.2, 0.01);
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let run = open_loop(&cfg, &[0.5, 1.0], &wavy_inputs(120, seed as f64), seed);
            let d = build_dataset(&run, 2, w_bar, Pairing::Corrected).unwrap();
            for (k, (x, z)) in d.inputs().iter().zip(d.targets()).enumerate() {
                worst = worst.max((z - Nonlinearity::PaperSim.eval(x)).abs());
                let err: Vec<f64> = x.iter().zip(run.states[k].iter()).map(|(a, b)| a - b).collect();
                assert!(err[0].abs() <= 0.01 + 1e-15);
                assert!(err[1].abs() <= 10.0 * 0.01 + 1e-12);
                assert!((err[0].powi(2) + err[1].powi(2)).sqrt() <= radius + 1e-12);
            }
        }
        assert!(worst <= w_bar, "{worst} > {w_bar}");
    }

    #[test]
    fn zero_episodes_give_empty_dataset() {
        let cfg = plant(Nonlinearity::PaperSim, 0.01);
        let params = AcquisitionParams {
            max_episodes: 0,
            max_episode_steps: 50,
            target_samples: None,
            pairing: Pairing::Corrected,
            reset_state: None,
            w_bar: 0.1,
        };
        let c = collect(&cfg, &mut ConstantPolicy(0.0), &params, 1).unwrap();
        assert!(c.dataset.is_empty());
        assert!(c.episodes.is_empty());
    }

    #[test]
    fn episodes_stop_on_leaving_safe_set() {
        let cfg = plant(Nonlinearity::Zero, 0.0);
        let params = AcquisitionParams {
            max_episodes: 3,
            max_episode_steps: 500,
            target_samples: None,
            pairing: Pairing::Corrected,
            reset_state: None,
            w_bar: 0.1,
        };
        let c = collect(&cfg, &mut ConstantPolicy(3.0), &params, 9).unwrap();
        assert_eq!(c.episodes.len(), 3);
        for (ep, run) in c.episodes.iter().zip(&c.runs) {
            assert!(ep.exited);
            let last = run.states.last().unwrap();
            assert!(!cfg.in_safe_set(last.as_slice()));
            assert!(run.states[..run.exit_index]
                .iter()
                .all(|x| cfg.in_safe_set(x.as_slice())));
            assert_eq!(run.outputs.len(), run.exit_index + 1);
            assert_eq!(ep.sample_range.1 - ep.sample_range.0, run.exit_index.saturating_sub(1));
        }
        let again = collect(&cfg, &mut ConstantPolicy(3.0), &params, 9).unwrap();
        assert_eq!(again.dataset, c.dataset);
    }

    #[test]
    fn input_clamping_counts() {
        let cfg = plant(Nonlinearity::Zero, 0.0);
        let params = AcquisitionParams {
            max_episodes: 1,
            max_episode_steps: 5,
            target_samples: None,
            pairing: Pairing::Corrected,
            reset_state: None,
            w_bar: 0.1,
        };
        let c = collect(&cfg, &mut ConstantPolicy(100.0), &params, 2).unwrap();
        assert!(c.episodes[0].clamped_inputs > 0);
        assert!(c.runs[0].inputs.iter().all(|u| *u == 20.0));
    }

    #[test]
    fn dataset_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let d = Dataset::new(2, vec![vec![0.1, -2.5], vec![1.0 / 3.0, 7.0]], vec![0.25, -1e-17], 0.1).unwrap();
        write_dataset_csv(&p, &d).unwrap();
        assert_eq!(read_dataset_csv(&p, 2, 0.1).unwrap(), d);
        assert!(read_dataset_csv(&p, 3, 0.1).is_err());
        let empty = Dataset::empty(2, 0.1).unwrap();
        write_dataset_csv(&p, &empty).unwrap();
        assert!(read_dataset_csv(&p, 2, 0.1).unwrap().is_empty());
    }
}
