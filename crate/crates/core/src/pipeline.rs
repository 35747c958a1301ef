//! Experiment stages shared by the command-line tool and the tests:
//! collect, train, analyze, simulate, and the full reproduction bundle.

use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    collect as collect_episodes, write_dataset_csv, write_runs_csv, Collection, DatasetSidecar, Pairing,
};
use crate::config::Experiment;
use crate::controller::{median, run_closed_loop, ModelHandle, SimulationTrace, TraceSummary, TrackingPolicy};
use crate::error::{Error, Result};
use crate::kernels::LipschitzInfo;
use crate::krr::{Dataset, KrrModel};
use crate::synthesis::{certificate, power_sup, CertificateInputs, PoleErrors, PowerSup, StabilityCertificate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    WithoutKrr,
    WithKrr,
    Exact,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::WithoutKrr, Variant::WithKrr, Variant::Exact];

    pub fn name(self) -> &'static str {
        match self {
            Variant::WithoutKrr => "without_krr",
            Variant::WithKrr => "with_krr",
            Variant::Exact => "exact",
        }
    }
}

/// Data collection with the tracking controller (`μ ≡ 0`) as the
/// exploration policy.
pub fn collect(exp: &Experiment, seed: u64, pairing: Pairing) -> Result<(Collection, DatasetSidecar)> {
    let mut policy = TrackingPolicy::new(exp.gains.clone(), ModelHandle::None, exp.reference.clone())?;
    let mut params = exp.acquisition_params();
    params.pairing = pairing;
    let collection = collect_episodes(&exp.plant, &mut policy, &params, seed)?;
    if let Some(t) = params.target_samples {
        if collection.dataset.len() < t && params.max_episodes > 0 {
            warn!("collected {} of {t} requested samples", collection.dataset.len());
        }
    }
    let sidecar = DatasetSidecar {
        order: exp.plant.order,
        step_seconds: exp.plant.step,
        v_bar: exp.plant.v_bar,
        w_bar: exp.w_bar,
        f_lipschitz: exp.lipschitz.f_lipschitz,
        seed,
        pairing,
        samples: collection.dataset.len(),
        episodes: collection.episodes.clone(),
    };
    Ok((collection, sidecar))
}

pub fn write_collection(dir_or_csv: &Path, collection: &Collection, sidecar: &DatasetSidecar) -> Result<()> {
    write_dataset_csv(dir_or_csv, &collection.dataset)?;
    let json = dir_or_csv.with_extension("json");
    fs::write(&json, serde_json::to_string_pretty(sidecar)? + "\n").map_err(|e| Error::io(&json, e))
}

pub fn train(exp: &Experiment, data: &Dataset) -> Result<KrrModel> {
    if data.is_empty() {
        warn!("empty dataset: the model predicts zero everywhere");
    }
    let model = KrrModel::fit(&exp.kernel, data, exp.config.rkhs_bound)?;
    info!(
        "trained on {} samples: beta = {}, fit residual = {:e}",
        model.len(),
        model.beta(),
        model.fit_residual()
    );
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub pole_errors: PoleErrors,
    pub lipschitz: LipschitzInfo,
    pub w_bar: f64,
    pub samples: usize,
    pub beta: f64,
    pub beta_clamped: bool,
    pub power: PowerSup,
    pub certificate: StabilityCertificate,
}

/// Certificate for the configured gains and `Q` with `β`, `P̄` from `model`.
pub fn analyze(exp: &Experiment, model: &KrrModel, grid_per_dim: usize) -> Result<AnalysisReport> {
    let power = power_sup(model, &exp.plant.domain, grid_per_dim)?;
    let inputs = CertificateInputs {
        f_lipschitz: exp.lipschitz.f_lipschitz,
        beta: model.beta(),
        v_bar: exp.plant.v_bar,
        p_bar: power.p_bar,
    };
    let cert = certificate(&exp.gains, &exp.q, inputs)?;
    Ok(AnalysisReport {
        phi: exp.gains.phi.iter().copied().collect(),
        theta: exp.gains.theta.iter().copied().collect(),
        pole_errors: exp.gains.pole_errors(),
        lipschitz: exp.lipschitz,
        w_bar: exp.w_bar,
        samples: model.len(),
        beta: model.beta(),
        beta_clamped: model.beta_clamped(),
        power,
        certificate: cert,
    })
}

pub fn model_handle(exp: &Experiment, variant: Variant, model: Option<&KrrModel>) -> Result<ModelHandle> {
    Ok(match variant {
        Variant::WithoutKrr => ModelHandle::None,
        Variant::Exact => ModelHandle::Exact(exp.plant.f.clone()),
        Variant::WithKrr => ModelHandle::Krr(Box::new(
            model
                .ok_or_else(|| Error::Input("the with_krr variant needs a trained model".into()))?
                .clone(),
        )),
    })
}

pub fn simulate(
    exp: &Experiment,
    variant: Variant,
    model: Option<&KrrModel>,
    seed: u64,
    steps: usize,
) -> Result<SimulationTrace> {
    run_closed_loop(
        &exp.plant,
        &exp.reference,
        &exp.gains,
        model_handle(exp, variant, model)?,
        &exp.initial_state,
        &exp.initial_estimate,
        steps,
        seed,
    )
}

pub fn write_trace(dir: &Path, trace: &SimulationTrace, summary: &TraceSummary) -> Result<()> {
    let stem = format!("{}_seed{}", trace.variant, trace.seed);
    trace.save_csv(&dir.join(format!("{stem}.csv")))?;
    let json = dir.join(format!("{stem}.summary.json"));
    fs::write(&json, serde_json::to_string_pretty(summary)? + "\n").map_err(|e| Error::io(&json, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: Variant,
    pub seeds: usize,
    /// Medians over seeds of the per-run steady-state medians.
    pub median_e_norm: f64,
    pub median_e_hat_norm: f64,
    /// Runs whose steady window exceeds the bound; `None` without a bound.
    pub bound_violating_runs: Option<usize>,
    pub faults: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionSummary {
    pub samples: usize,
    pub w_bar: f64,
    pub beta: f64,
    pub p_bar: f64,
    pub xi0: f64,
    pub feasible: bool,
    pub bound: Option<f64>,
    pub rows: Vec<VariantRow>,
    /// Without-learning over with-learning steady-state median `‖e‖`.
    pub improvement_ratio: f64,
    pub estimation_improvement_ratio: f64,
    /// True when every with-learning run stays inside the bound over its
    /// steady window; false also when no bound is available.
    pub with_krr_contained: bool,
    pub runs: Vec<TraceSummary>,
}

impl ReproductionSummary {
    pub fn row(&self, v: Variant) -> Option<&VariantRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<12} {:>6} {:>16} {:>16} {:>12}\n",
            "variant", "seeds", "median |e|", "median |e_hat|", "violations"
        );
        for r in &self.rows {
            let viol = r.bound_violating_runs.map_or("n/a".to_string(), |v| v.to_string());
            s += &format!(
                "{:<12} {:>6} {:>16.6e} {:>16.6e} {:>12}\n",
                r.variant.name(),
                r.seeds,
                r.median_e_norm,
                r.median_e_hat_norm,
                viol
            );
        }
        s += &format!(
            "samples N = {}, w_bar = {:.6}, beta = {:.6}, P_bar = {:.6}\n",
            self.samples, self.w_bar, self.beta, self.p_bar
        );
        s += &format!("xi0 = {:.6}, feasible = {}\n", self.xi0, self.feasible);
        match self.bound {
            Some(b) => s += &format!("certificate bound = {b:.6}\n"),
            None => s += "certificate bound = unavailable\n",
        }
        s += &format!(
            "improvement ratio (tracking) = {:.3}, (estimation) = {:.3}\n",
            self.improvement_ratio, self.estimation_improvement_ratio
        );
        s += &format!("with_krr contained in bound: {}\n", self.with_krr_contained);
        s
    }
}

/// Everything `reproduce-paper` produces, kept in memory.
#[derive(Debug, Clone)]
pub struct Reproduction {
    pub collection: Collection,
    pub sidecar: DatasetSidecar,
    pub model: KrrModel,
    pub analysis: AnalysisReport,
    pub traces: Vec<SimulationTrace>,
    pub summary: ReproductionSummary,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.inspect_err(|_| log::error!("stage `{name}` failed"))
}

pub fn summarize(exp: &Experiment, analysis: &AnalysisReport, traces: &[SimulationTrace]) -> ReproductionSummary {
    let window = exp.config.simulation.steady_window_steps;
    let bound = analysis.certificate.tracking_bound;
    let runs: Vec<TraceSummary> = traces.iter().map(|t| t.summarize(window, bound)).collect();
    let rows: Vec<VariantRow> = Variant::ALL
        .iter()
        .filter_map(|&v| {
            let mine: Vec<&TraceSummary> = runs.iter().filter(|r| r.variant == v.name()).collect();
            if mine.is_empty() {
                return None;
            }
            let e: Vec<f64> = mine.iter().map(|r| r.median_e_norm).collect();
            let eh: Vec<f64> = mine.iter().map(|r| r.median_e_hat_norm).collect();
            Some(VariantRow {
                variant: v,
                seeds: mine.len(),
                median_e_norm: median(&e),
                median_e_hat_norm: median(&eh),
                bound_violating_runs: bound.map(|_| mine.iter().filter(|r| !r.contained()).count()),
                faults: mine.iter().filter(|r| r.fault.is_some()).count(),
            })
        })
        .collect();
    let pick = |v: Variant| rows.iter().find(|r| r.variant == v);
    let ratio = |f: fn(&VariantRow) -> f64| match (pick(Variant::WithoutKrr), pick(Variant::WithKrr)) {
        (Some(a), Some(b)) => f(a) / f(b),
        _ => f64::NAN,
    };
    ReproductionSummary {
        samples: analysis.samples,
        w_bar: analysis.w_bar,
        beta: analysis.beta,
        p_bar: analysis.power.p_bar,
        xi0: analysis.certificate.xi0,
        feasible: analysis.certificate.feasible,
        bound,
        improvement_ratio: ratio(|r| r.median_e_norm),
        estimation_improvement_ratio: ratio(|r| r.median_e_hat_norm),
        with_krr_contained: pick(Variant::WithKrr).is_some_and(|r| r.bound_violating_runs == Some(0)),
        rows,
        runs,
    }
}

/// collect → train → analyze → simulate every variant and seed → summary.
pub fn reproduce(exp: &Experiment) -> Result<Reproduction> {
    let acq = &exp.config.acquisition;
    let (collection, sidecar) = stage("collect", collect(exp, acq.seed, acq.pairing))?;
    let model = stage("train", train(exp, &collection.dataset))?;
    let analysis = stage("analyze", analyze(exp, &model, exp.config.grid_per_dim))?;
    let sim = &exp.config.simulation;
    let mut traces = Vec::new();
    for &variant in &Variant::ALL {
        for &seed in &sim.seeds {
            traces.push(stage(
                "simulate",
                simulate(exp, variant, Some(&model), seed, sim.steps),
            )?);
        }
    }
    let summary = summarize(exp, &analysis, &traces);
    Ok(Reproduction {
        collection,
        sidecar,
        model,
        analysis,
        traces,
        summary,
    })
}

/// Writes the reproduction bundle into `dir`.
pub fn write_bundle(dir: &Path, exp: &Experiment, rep: &Reproduction) -> Result<()> {
    let traces_dir = dir.join("traces");
    fs::create_dir_all(&traces_dir).map_err(|e| Error::io(&traces_dir, e))?;
    exp.config.save(&dir.join("config.json"))?;
    write_collection(&dir.join("dataset.csv"), &rep.collection, &rep.sidecar)?;
    write_runs_csv(&dir.join("acquisition_trace.csv"), &rep.collection.runs)?;
    rep.model.save(&dir.join("model.json"))?;
    let cert = dir.join("certificate.json");
    fs::write(&cert, serde_json::to_string_pretty(&rep.analysis)? + "\n").map_err(|e| Error::io(&cert, e))?;
    for (trace, summary) in rep.traces.iter().zip(&rep.summary.runs) {
        write_trace(&traces_dir, trace, summary)?;
    }
    let summary = dir.join("summary.json");
    fs::write(&summary, serde_json::to_string_pretty(&rep.summary)? + "\n").map_err(|e| Error::io(&summary, e))?;
    let table = dir.join("summary.txt");
    fs::write(&table, rep.summary.table()).map_err(|e| Error::io(&table, e))
}
