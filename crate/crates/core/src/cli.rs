//! Command-line front end: config loading, commands and output files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clifford::{CliffordError, CliffordLayer, LayerSpec};
use crate::experiment::{ExperimentError, LowBaseline};
use crate::fit::{l1_distance, FitError};
use crate::learnability::{learnability_report, LearnError};
use crate::pec::{summarize, BetaSampling, PecError, PecSummary};
use crate::pipeline::{config_name, row_sigmas, FitParams, FitRow, PecParams, PipelineError, Study, Weighting};
use crate::seed::derive_seed;
use crate::spl::{four_layers, GeneratorSet, LayerConfig, ModelFile, ModelSet, RandomModelParams, SplError, Topology};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl CliError {
    /// 2 for configuration problems, 3 for rank deficiency or infeasibility, 4 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Pipeline(p) => match p {
                PipelineError::Spl(_) | PipelineError::Clifford(_) => 2,
                PipelineError::Learn(e) => learn_code(e),
                PipelineError::Fit(e) => fit_code(e),
                PipelineError::Experiment(e) => match e {
                    ExperimentError::InvalidDepth | ExperimentError::EmptyBlock(_) | ExperimentError::UnknownLayer(_) | ExperimentError::InvalidSpam(_) | ExperimentError::InvalidSigma(_) => 2,
                    ExperimentError::NotPairProduct(_) => 3,
                    _ => 4,
                },
                PipelineError::Pec(e) => match e {
                    PecError::WeightTooLarge { .. } | PecError::NoLayers | PecError::UnknownLayer(_) => 2,
                    PecError::BudgetExhausted(_) => 3,
                    PecError::ZeroFidelity { .. } => 4,
                },
            },
        }
    }
}

fn learn_code(e: &LearnError) -> i32 {
    match e {
        LearnError::NotEquivalent(_) | LearnError::MissingCertificate { .. } | LearnError::OutsideRegion(_) => 3,
        LearnError::CoefficientOverflow => 4,
        _ => 2,
    }
}

fn fit_code(e: &FitError) -> i32 {
    match e {
        FitError::RankDeficient { .. } | FitError::MissingRecord(_) => 3,
        FitError::Learn(l) => learn_code(l),
        FitError::Spl(_) | FitError::MissingLayer(_) | FitError::OrderingMismatch(_) => 2,
        FitError::IterationCap(_) | FitError::Empty | FitError::NonPositive(_) => 4,
    }
}

// ---------------------------------------------------------------------------
// Config

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    #[default]
    Garnet,
    Square { width: usize, height: usize },
    Line { n: usize },
    Explicit {
        n: usize,
        edges: Vec<[usize; 2]>,
        #[serde(default)]
        coords: Option<Vec<[i32; 2]>>,
    },
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology, CliError> {
        Ok(match self {
            TopologySpec::Garnet => Topology::garnet(),
            TopologySpec::Square { width, height } => {
                if *width == 0 || *height == 0 {
                    return Err(CliError::Config("square lattice needs positive width and height".into()));
                }
                Topology::square(*width, *height)
            }
            TopologySpec::Line { n } => Topology::line(*n),
            TopologySpec::Explicit { n, edges, coords } => {
                let e: Vec<(usize, usize)> = edges.iter().map(|p| (p[0], p[1])).collect();
                let mut t = Topology::new("explicit", *n, &e).map_err(|e| CliError::Config(e.to_string()))?;
                if let Some(c) = coords {
                    if c.len() != *n {
                        return Err(CliError::Config(format!("{} coordinates for {n} qubits", c.len())));
                    }
                    t.coords = Some(c.iter().map(|p| (p[0], p[1])).collect());
                }
                t
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayersSpec {
    /// One of the four-layer arrangements of a coordinate-embedded topology.
    Preset { config: LayerConfig },
    Explicit { layers: Vec<LayerSpec> },
}

impl Default for LayersSpec {
    fn default() -> Self {
        LayersSpec::Preset { config: LayerConfig::ClosedSquares }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Pipelines {
    Conventional,
    Mlcb,
    #[default]
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub master: u64,
    pub plan: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { master: 1, plan: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub n_models: usize,
    pub n_circuits: usize,
    pub depth: usize,
    pub weights: Vec<usize>,
    pub sampling: BetaSampling,
    /// Multiples of `sigma` used for the unit-depth accuracy sweep.
    pub sigma_prime_factors: Vec<f64>,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep {
            n_models: 200,
            n_circuits: 10,
            depth: 40,
            weights: vec![2, 20],
            sampling: BetaSampling::Conditional,
            sigma_prime_factors: vec![1.0, 10.0, 100.0],
        }
    }
}

fn default_sigma() -> f64 {
    1e-4
}

fn default_baseline() -> LowBaseline {
    LowBaseline::Symmetry
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub topology: TopologySpec,
    #[serde(default)]
    pub layers: LayersSpec,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_baseline")]
    pub baseline: LowBaseline,
    #[serde(default)]
    pub pipelines: Pipelines,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub random: RandomModelParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let c: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and non-negative, got {}", self.sigma));
        }
        if let LowBaseline::UnitDepth { sigma_prime } = self.baseline {
            if !(sigma_prime >= 0.0 && sigma_prime.is_finite()) {
                return bad(format!("sigma_prime must be finite and non-negative, got {sigma_prime}"));
            }
        }
        if self.sweep.n_models == 0 {
            return bad("sweep.n_models must be positive".into());
        }
        if self.sweep.weights.is_empty() || self.sweep.weights.contains(&0) {
            return bad("sweep.weights must be a non-empty list of positive weights".into());
        }
        if self.sweep.sigma_prime_factors.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return bad("sweep.sigma_prime_factors must be finite and non-negative".into());
        }
        let r = &self.random;
        let all = [r.inactive_mean, r.inactive_std, r.gate_mean_mean, r.gate_mean_std, r.active_std];
        if all.iter().flatten().any(|v| !v.is_finite()) || [r.inactive_std, r.gate_mean_std, r.active_std].iter().flatten().any(|v| *v < 0.0) {
            return bad("random model parameters must be finite with non-negative spreads".into());
        }
        let n = self.topology.build()?.n;
        if let LayersSpec::Explicit { layers } = &self.layers {
            if layers.is_empty() {
                return bad("explicit layer list is empty".into());
            }
            if let Some(l) = layers.iter().find(|l| l.n != n) {
                return bad(format!("layer {:?} has {} qubits, topology has {n}", l.label, l.n));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn build_layers(&self, topology: &Topology) -> Result<Vec<CliffordLayer>, CliError> {
        match &self.layers {
            LayersSpec::Preset { config } => four_layers(topology, *config).map_err(|e| CliError::Config(e.to_string())),
            LayersSpec::Explicit { layers } => {
                let built = layers.iter().map(LayerSpec::build).collect::<Result<Vec<_>, CliffordError>>().map_err(|e| CliError::Config(e.to_string()))?;
                for l in &built {
                    if let Some(&(a, b)) = l.cz_pairs().iter().find(|&&(a, b)| !topology.has_edge(a, b)) {
                        return Err(CliError::Config(format!("layer {:?} uses ({a},{b}), which is not a coupler", l.label())));
                    }
                }
                let mut labels: Vec<&str> = built.iter().map(|l| l.label()).collect();
                labels.sort_unstable();
                if labels.windows(2).any(|w| w[0] == w[1]) {
                    return Err(CliError::Config("layer labels must be unique".into()));
                }
                Ok(built)
            }
        }
    }

    fn fit_params(&self, baseline: LowBaseline) -> FitParams {
        FitParams {
            n_models: self.sweep.n_models,
            master_seed: self.seeds.master,
            sigma: self.sigma,
            baseline,
            random: self.random.clone(),
            weighting: self.weighting,
        }
    }

    fn pec_params(&self) -> PecParams {
        PecParams {
            n_circuits: self.sweep.n_circuits,
            depth: self.sweep.depth,
            weights: self.sweep.weights.clone(),
            sampling: self.sweep.sampling,
        }
    }
}

// ---------------------------------------------------------------------------
// Output

/// Self-describing JSON wrapper of every output structure.
#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema: u32,
    pub kind: String,
    pub config_digest: String,
    pub config: RunConfig,
    pub data: T,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

pub struct Output {
    pub dir: PathBuf,
    pub config: RunConfig,
    digest: String,
}

impl Output {
    pub fn new(dir: PathBuf, config: RunConfig) -> Self {
        let digest = config.digest();
        Output { dir, config, digest }
    }

    pub fn json<T: Serialize>(&self, rel: &str, kind: &str, data: &T) -> Result<PathBuf, CliError> {
        let env = Envelope { schema: SCHEMA_VERSION, kind: kind.to_string(), config_digest: self.digest.clone(), config: self.config.clone(), data };
        let mut bytes = serde_json::to_vec_pretty(&env).expect("output serializes");
        bytes.push(b'\n');
        let path = self.dir.join(rel);
        write_atomic(&path, &bytes)?;
        Ok(path)
    }

    /// CSV with two leading comment lines carrying schema and config digest.
    pub fn csv<T: Serialize>(&self, rel: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let mut bytes = format!("# schema={SCHEMA_VERSION}\n# config_sha256={}\n", self.digest).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut bytes);
            for r in rows {
                w.serialize(r).map_err(|e| CliError::Config(format!("csv: {e}")))?;
            }
            w.flush().map_err(io_err(Path::new(rel)))?;
        }
        let path = self.dir.join(rel);
        write_atomic(&path, &bytes)?;
        Ok(path)
    }
}

fn model_files(models: &ModelSet) -> Vec<ModelFile> {
    models.values().map(|m| m.to_file()).collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FittedModels {
    pub seed: u64,
    pub conventional: Option<Vec<ModelFile>>,
    pub mlcb: Option<Vec<ModelFile>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UnitDepthRow {
    pub seed: u64,
    pub config: String,
    pub sigma_prime: f64,
    pub delta_c: f64,
    pub delta_m: f64,
    pub r: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PecCsvRow {
    pub model_seed: u64,
    pub circuit_seed: u64,
    #[serde(rename = "W")]
    pub weight: usize,
    #[serde(rename = "O_c")]
    pub o_c: f64,
    #[serde(rename = "O_m")]
    pub o_m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConventionalRow {
    pub seed: u64,
    pub config: String,
    pub delta_c: f64,
}

// ---------------------------------------------------------------------------
// Commands

#[derive(Debug, Parser)]
#[command(name = "mlcb", version, about = "Pauli noise characterization, MLCB fitting and PEC bias studies")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReproStudy {
    /// Distance ratio with the symmetry baseline, both Garnet configurations.
    Fig5a,
    /// Distance ratio against the unit-depth accuracy, closed squares.
    Fig5b,
    /// PEC observable spread, open chains.
    Fig6,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes one random model per layer for every model index.
    GenerateModel,
    /// Orbit counts, unlearnable DOF and MLCB recovery.
    Learnability {
        /// Skip the MLCB planning step.
        #[arg(long)]
        no_mlcb: bool,
    },
    /// Simulated fidelity records for every model.
    Characterize,
    /// Fitted models and L1 metrics.
    Fit,
    /// PEC bias sweep.
    Pec,
    /// Canned Garnet sweep.
    Repro {
        #[arg(value_enum)]
        study: ReproStudy,
    },
}

fn study(cfg: &RunConfig, need_plan: bool) -> Result<Study, CliError> {
    let topology = cfg.topology.build()?;
    let layers = cfg.build_layers(&topology)?;
    let gens = Arc::new(GeneratorSet::new(&topology, 2).map_err(|e: SplError| CliError::Config(e.to_string()))?);
    let name = match &cfg.layers {
        LayersSpec::Preset { config } => format!("{}-{}", topology.name, config_name(*config)),
        LayersSpec::Explicit { .. } => format!("{}-explicit", topology.name),
    };
    if need_plan {
        log::info!("planning MLCB ratios for {name}");
        Ok(Study::new(name, gens, layers, cfg.seeds.plan)?)
    } else {
        Ok(Study::without_plan(name, gens, layers))
    }
}

fn preset_study(cfg: &RunConfig, config: LayerConfig) -> Result<Study, CliError> {
    let mut c = cfg.clone();
    c.layers = LayersSpec::Preset { config };
    study(&c, true)
}

fn model_seed(cfg: &RunConfig, i: usize) -> u64 {
    derive_seed(cfg.seeds.master, i as u64)
}

fn cmd_generate(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let s = study(cfg, false)?;
    for i in 0..cfg.sweep.n_models {
        let models = s.sample_models(model_seed(cfg, i), &cfg.random)?;
        for m in models.values() {
            out.json(&format!("models/{i:04}/{}.json", m.label()), "spl_model", &m.to_file())?;
        }
    }
    println!("wrote {} model sets of {} layers ({} generators each) to {}", cfg.sweep.n_models, s.layers.len(), s.generators.len(), out.dir.display());
    Ok(())
}

fn cmd_learnability(cfg: &RunConfig, out: &Output, mlcb: bool) -> Result<(), CliError> {
    let s = study(cfg, false)?;
    let report = learnability_report(&s.layers, &s.generators, mlcb, cfg.seeds.plan)?;
    for l in &report.layers {
        println!(
            "layer {}: {} generators, rank {}, unlearnable {}, standard singletons {}, dressed singletons {}",
            l.label, l.generators, l.rank, l.unlearnable_dof, l.standard_singletons, l.dressed_singletons
        );
    }
    println!("unlearnable DOF: {}", report.unlearnable_dof);
    println!("expected recovered by MLCB: {}", report.expected_recovered);
    if let Some(r) = report.mlcb_recovered {
        println!("recovered by MLCB: {r} ({} ratios, {} failures)", report.ratios.len(), report.failures.len());
    }
    out.json("learnability.json", "learnability_report", &report)?;
    Ok(())
}

fn cmd_characterize(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let s = study(cfg, cfg.pipelines != Pipelines::Conventional)?;
    for i in 0..cfg.sweep.n_models {
        let seed = model_seed(cfg, i);
        let truth = s.sample_models(seed, &cfg.random)?;
        let records = s.records(&truth, cfg.sigma, cfg.baseline, derive_seed(seed, 1))?;
        out.json(&format!("records/{i:04}.json"), "record_set", &records)?;
    }
    println!("wrote {} record sets to {}", cfg.sweep.n_models, out.dir.display());
    Ok(())
}

fn cmd_fit(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    if cfg.pipelines == Pipelines::Conventional {
        let s = study(cfg, false)?;
        let fitter = s.fitter(row_sigmas(cfg.sigma, cfg.baseline, cfg.weighting), cfg.baseline)?;
        let mut rows = Vec::new();
        for i in 0..cfg.sweep.n_models {
            let seed = model_seed(cfg, i);
            let truth = s.sample_models(seed, &cfg.random)?;
            let records = s.records(&truth, cfg.sigma, cfg.baseline, derive_seed(seed, 1))?;
            let conv = fitter.fit_conventional(&records)?.models(&s.generators)?;
            rows.push(ConventionalRow { seed, config: s.name.clone(), delta_c: l1_distance(&truth, &conv)? });
            out.json(&format!("fits/{i:04}.json"), "fitted_models", &FittedModels { seed, conventional: Some(model_files(&conv)), mlcb: None })?;
        }
        out.csv("metrics.csv", &rows)?;
        println!("conventional fits for {} models written to {}", rows.len(), out.dir.display());
        return Ok(());
    }
    let s = study(cfg, true)?;
    let outcomes = s.fit_sweep(&cfg.fit_params(cfg.baseline))?;
    for o in &outcomes {
        let data = FittedModels {
            seed: o.seed,
            conventional: (cfg.pipelines == Pipelines::Both).then(|| model_files(&o.conventional)),
            mlcb: Some(model_files(&o.mlcb)),
        };
        out.json(&format!("fits/{:04}.json", o.index), "fitted_models", &data)?;
    }
    let rows: Vec<FitRow> = outcomes.iter().map(|o| o.row(&s.name)).collect();
    out.csv("metrics.csv", &rows)?;
    print_ratio_summary(&s.name, &rows);
    Ok(())
}

fn print_ratio_summary(name: &str, rows: &[FitRow]) {
    let r: Vec<f64> = rows.iter().map(|r| r.r).collect();
    let below = r.iter().filter(|&&x| x < 1.0).count();
    println!(
        "{name}: {} models, median r {:.4}, mean r {:.4}, r < 1 for {below}",
        r.len(),
        crate::pipeline::median(&r),
        r.iter().sum::<f64>() / r.len().max(1) as f64
    );
}

fn print_pec_summary(summaries: &[PecSummary]) {
    for s in summaries {
        println!(
            "W={}: {} runs, std(O_c) {:.4}, std(O_m) {:.4}, mean bias c {:.4}, m {:.4}",
            s.weight, s.runs, s.conventional.std, s.mlcb.std, s.conventional.mean_bias, s.mlcb.mean_bias
        );
    }
}

fn pec_rows(runs: &[crate::pec::PecRun]) -> Vec<PecCsvRow> {
    runs.iter().map(|r| PecCsvRow { model_seed: r.model_seed, circuit_seed: r.circuit_seed, weight: r.weight, o_c: r.o_c, o_m: r.o_m }).collect()
}

fn run_pec(cfg: &RunConfig, s: &Study, out: &Output, stem: &str) -> Result<(), CliError> {
    let n = s.generators.num_qubits();
    if let Some(&w) = cfg.sweep.weights.iter().find(|&&w| w > n) {
        return Err(CliError::Config(format!("PEC weight {w} exceeds {n} qubits")));
    }
    let outcomes = s.fit_sweep(&cfg.fit_params(cfg.baseline))?;
    let runs = s.pec_sweep(&outcomes, &cfg.pec_params())?;
    out.csv(&format!("{stem}.csv"), &pec_rows(&runs))?;
    let summary = summarize(&runs);
    out.json(&format!("{stem}_summary.json"), "pec_summary", &summary)?;
    print_pec_summary(&summary);
    Ok(())
}

fn cmd_pec(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let s = study(cfg, true)?;
    run_pec(cfg, &s, out, "pec")
}

fn cmd_repro(cfg: &RunConfig, out: &Output, study: ReproStudy) -> Result<(), CliError> {
    match study {
        ReproStudy::Fig5a => {
            let mut rows = Vec::new();
            for config in [LayerConfig::ClosedSquares, LayerConfig::OpenChains] {
                let s = preset_study(cfg, config)?;
                let outcomes = s.fit_sweep(&cfg.fit_params(LowBaseline::Symmetry))?;
                let part: Vec<FitRow> = outcomes.iter().map(|o| o.row(config_name(config))).collect();
                print_ratio_summary(config_name(config), &part);
                rows.extend(part);
            }
            out.csv("fig5a.csv", &rows)?;
        }
        ReproStudy::Fig5b => {
            let s = preset_study(cfg, LayerConfig::ClosedSquares)?;
            let mut rows = Vec::new();
            for &factor in &cfg.sweep.sigma_prime_factors {
                let sigma_prime = factor * cfg.sigma;
                let outcomes = s.fit_sweep(&cfg.fit_params(LowBaseline::UnitDepth { sigma_prime }))?;
                let part: Vec<FitRow> = outcomes.iter().map(|o| o.row(config_name(LayerConfig::ClosedSquares))).collect();
                print_ratio_summary(&format!("sigma'={sigma_prime:e}"), &part);
                rows.extend(part.into_iter().map(|r| UnitDepthRow { seed: r.seed, config: r.config, sigma_prime, delta_c: r.delta_c, delta_m: r.delta_m, r: r.r }));
            }
            out.csv("fig5b.csv", &rows)?;
        }
        ReproStudy::Fig6 => {
            let mut c = cfg.clone();
            c.baseline = LowBaseline::Symmetry;
            let s = preset_study(&c, LayerConfig::OpenChains)?;
            run_pec(&c, &s, out, "fig6")?;
        }
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds.master = seed;
    }
    cfg.validate()?;
    let out = Output::new(cli.out.clone(), cfg.clone());
    let work = || match cli.command {
        Command::GenerateModel => cmd_generate(&cfg, &out),
        Command::Learnability { no_mlcb } => cmd_learnability(&cfg, &out, !no_mlcb),
        Command::Characterize => cmd_characterize(&cfg, &out),
        Command::Fit => cmd_fit(&cfg, &out),
        Command::Pec => cmd_pec(&cfg, &out),
        Command::Repro { study } => cmd_repro(&cfg, &out, study),
    };
    match cli.parallel {
        Some(0) => Err(CliError::Config("--parallel must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Config(e.to_string()))?.install(work),
        None => work(),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
