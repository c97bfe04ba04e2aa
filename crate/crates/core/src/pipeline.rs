//! Seeded, parallel characterization and mitigation studies.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{CliffordError, CliffordLayer};
use crate::experiment::{characterize, ExperimentError, LowBaseline, RecordSet};
use crate::fit::{distance_metrics, FitError, Fitter, RowSigmas};
use crate::learnability::{plan_mlcb, LearnError, MlcbPlan, DEFAULT_RESTARTS};
use crate::pec::{pec_observable, sample_circuit, BetaSampling, PecError, PecRun};
use crate::seed::{derive_seed, rng_from_seed};
use crate::spl::{four_layers, model_set, random_model, GeneratorSet, LayerConfig, ModelSet, RandomModelParams, SplError, SplModel, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Spl(#[from] SplError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Pec(#[from] PecError),
}

/// Topology, layers and the MLCB plan shared by every model of a study.
#[derive(Clone, Debug)]
pub struct Study {
    pub name: String,
    pub generators: Arc<GeneratorSet>,
    pub layers: Vec<CliffordLayer>,
    pub plan: MlcbPlan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub n_models: usize,
    pub master_seed: u64,
    pub sigma: f64,
    pub baseline: LowBaseline,
    #[serde(default)]
    pub random: RandomModelParams,
    #[serde(default)]
    pub weighting: Weighting,
}

/// Row weighting of the least-squares fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Every log-fidelity row counts equally.
    #[default]
    Uniform,
    /// Rows weighted by `4 / sigma^2`; low rows use `sigma'`, or `10 sigma` for the
    /// symmetry baseline whose error is a bias rather than noise.
    InverseVariance,
}

pub fn row_sigmas(sigma: f64, baseline: LowBaseline, weighting: Weighting) -> RowSigmas {
    match weighting {
        Weighting::Uniform => RowSigmas { high: 0.0, low: 0.0 },
        Weighting::InverseVariance => {
            let low = match baseline {
                LowBaseline::Symmetry => 10.0 * sigma,
                LowBaseline::UnitDepth { sigma_prime } => sigma_prime,
            };
            RowSigmas { high: sigma, low }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutcome {
    pub index: usize,
    pub seed: u64,
    pub truth: ModelSet,
    pub conventional: ModelSet,
    pub mlcb: ModelSet,
    pub delta_c: f64,
    pub delta_m: f64,
    pub ratio: f64,
}

/// One CSV row of a fit sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub seed: u64,
    pub config: String,
    pub delta_c: f64,
    pub delta_m: f64,
    pub r: f64,
}

impl ModelOutcome {
    pub fn row(&self, config: &str) -> FitRow {
        FitRow { seed: self.seed, config: config.to_string(), delta_c: self.delta_c, delta_m: self.delta_m, r: self.ratio }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PecParams {
    pub n_circuits: usize,
    pub depth: usize,
    pub weights: Vec<usize>,
    pub sampling: BetaSampling,
}

impl Study {
    pub fn new(name: impl Into<String>, generators: Arc<GeneratorSet>, layers: Vec<CliffordLayer>, plan_seed: u64) -> Result<Self, PipelineError> {
        let plan = plan_mlcb(&layers, &generators, plan_seed, DEFAULT_RESTARTS)?;
        if !plan.failures.is_empty() {
            log::warn!("{} ratios could not be certified; those qubits keep conventional estimates", plan.failures.len());
        }
        Ok(Study { name: name.into(), generators, layers, plan })
    }

    /// Study without MLCB ratios; only the conventional pipeline is meaningful.
    pub fn without_plan(name: impl Into<String>, generators: Arc<GeneratorSet>, layers: Vec<CliffordLayer>) -> Self {
        Study { name: name.into(), generators, layers, plan: MlcbPlan::default() }
    }

    /// Four-layer study on a lattice with weight-two SPL generators.
    pub fn lattice(topology: &Topology, config: LayerConfig, plan_seed: u64) -> Result<Self, PipelineError> {
        let generators = Arc::new(GeneratorSet::new(topology, 2)?);
        let layers = four_layers(topology, config)?;
        Self::new(format!("{}-{}", topology.name, config_name(config)), generators, layers, plan_seed)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.label()).collect()
    }

    /// Random model set for a seed.
    pub fn sample_models(&self, seed: u64, params: &RandomModelParams) -> Result<ModelSet, PipelineError> {
        let mut rng = rng_from_seed(seed);
        let models = self
            .layers
            .iter()
            .map(|l| random_model(&self.generators, l, params, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(model_set(models))
    }

    pub fn records(&self, models: &ModelSet, sigma: f64, baseline: LowBaseline, seed: u64) -> Result<RecordSet, PipelineError> {
        let mut rng = rng_from_seed(seed);
        Ok(characterize(models, &self.layers, &self.generators, Some(&self.plan), sigma, baseline, &mut rng)?)
    }

    /// Per-layer systems for a baseline; reused across every model of a sweep.
    pub fn fitter(&self, sigmas: RowSigmas, baseline: LowBaseline) -> Result<Fitter, PipelineError> {
        let zero = model_set(self.layers.iter().map(|l| SplModel::zero(l.label(), self.generators.clone())));
        let template = self.records(&zero, 0.0, LowBaseline::UnitDepth { sigma_prime: 0.0 }, 0)?;
        let template = match baseline {
            LowBaseline::Symmetry => RecordSet { low: self.records(&zero, 0.0, LowBaseline::Symmetry, 0)?.low, ..template },
            _ => template,
        };
        Ok(Fitter::new(&self.generators, &self.layers, self.plan.clone(), &template, sigmas)?)
    }

    pub fn run_model(&self, fitter: &Fitter, params: &FitParams, index: usize) -> Result<ModelOutcome, PipelineError> {
        let seed = derive_seed(params.master_seed, index as u64);
        let truth = self.sample_models(seed, &params.random)?;
        let records = self.records(&truth, params.sigma, params.baseline, derive_seed(seed, 1))?;
        let conventional = fitter.fit_conventional(&records)?.models(&self.generators)?;
        let mlcb = fitter.fit_mlcb(&records)?.models(&self.generators)?;
        let (delta_c, delta_m, ratio) = distance_metrics(&truth, &conventional, &mlcb)?;
        Ok(ModelOutcome { index, seed, truth, conventional, mlcb, delta_c, delta_m, ratio })
    }

    /// Every model of the sweep, in index order regardless of thread count.
    pub fn fit_sweep(&self, params: &FitParams) -> Result<Vec<ModelOutcome>, PipelineError> {
        let fitter = self.fitter(row_sigmas(params.sigma, params.baseline, params.weighting), params.baseline)?;
        (0..params.n_models).into_par_iter().map(|i| self.run_model(&fitter, params, i)).collect()
    }

    /// Mitigated observables for fresh circuits per model and weight.
    pub fn pec_sweep(&self, outcomes: &[ModelOutcome], params: &PecParams) -> Result<Vec<PecRun>, PipelineError> {
        let per_model: Vec<Result<Vec<PecRun>, PipelineError>> = outcomes
            .par_iter()
            .map(|o| {
                let mut runs = Vec::new();
                for &w in &params.weights {
                    for c in 0..params.n_circuits {
                        let circuit_seed = derive_seed(derive_seed(o.seed, 2 + w as u64), c as u64);
                        let (circuit, beta0) = sample_circuit(&self.layers, params.depth, w, circuit_seed, params.sampling)?;
                        runs.push(PecRun {
                            model_seed: o.seed,
                            circuit_seed,
                            weight: w,
                            o_c: pec_observable(&o.truth, &o.conventional, &circuit, &beta0)?,
                            o_m: pec_observable(&o.truth, &o.mlcb, &circuit, &beta0)?,
                            beta0,
                        });
                    }
                }
                Ok(runs)
            })
            .collect();
        let mut out = Vec::new();
        for r in per_model {
            out.extend(r?);
        }
        Ok(out)
    }
}

pub fn config_name(c: LayerConfig) -> &'static str {
    match c {
        LayerConfig::ClosedSquares => "closed-squares",
        LayerConfig::OpenChains => "open-chains",
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Study {
        let t = Topology::square(3, 2);
        Study::lattice(&t, LayerConfig::ClosedSquares, 5).unwrap()
    }

    #[test]
    fn sweep_is_deterministic_and_noiseless_exact() {
        let s = small();
        let params = FitParams {
            n_models: 3,
            master_seed: 11,
            sigma: 0.0,
            baseline: LowBaseline::UnitDepth { sigma_prime: 0.0 },
            random: Default::default(),
            weighting: Weighting::InverseVariance,
        };
        let a = s.fit_sweep(&params).unwrap();
        let b = s.fit_sweep(&params).unwrap();
        assert_eq!(a, b);
        for o in &a {
            assert!(o.delta_c < 1e-8 && o.delta_m < 1e-8, "{} {}", o.delta_c, o.delta_m);
        }
        let pec = s
            .pec_sweep(&a, &PecParams { n_circuits: 3, depth: 10, weights: vec![2], sampling: BetaSampling::Conditional })
            .unwrap();
        assert_eq!(pec.len(), 9);
        assert!(pec.iter().all(|r| (r.o_c - 1.0).abs() < 1e-6 && (r.o_m - 1.0).abs() < 1e-6));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let s = small();
        let params = FitParams {
            n_models: 4,
            master_seed: 2,
            sigma: 1e-4,
            baseline: LowBaseline::Symmetry,
            random: Default::default(),
            weighting: Weighting::InverseVariance,
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| s.fit_sweep(&params).unwrap());
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| s.fit_sweep(&params).unwrap());
        assert_eq!(one, three);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
