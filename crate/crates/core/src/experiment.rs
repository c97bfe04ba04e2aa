//! Simulated cycle-benchmarking experiments on exact SPL models.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{orbit, CliffordLayer};
use crate::learnability::{layer_orbits, FidelityFunction, MlcbPlan};
use crate::pauli::{Pauli, PauliError, PauliString};
use crate::seed::rng_from_seed;
use crate::spl::{GeneratorSet, ModelSet, SplError};

/// Depth grid in periods of the block.
pub const DEFAULT_DEPTHS: [usize; 5] = [2, 4, 8, 16, 32];
pub const SPAM_RANGE: (f64, f64) = (0.85, 1.0);
const PERIOD_GUARD: usize = 1 << 12;
const MIN_FIDELITY: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Spl(#[from] SplError),
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
    #[error("instance {0:?} has an empty block")]
    EmptyBlock(String),
    #[error("depths must be positive")]
    InvalidDepth,
    #[error("spam prefactor {0} outside (0, 1]")]
    InvalidSpam(f64),
    #[error("decay fit needs at least two distinct depths")]
    DegenerateDepths,
    #[error("decay fit did not converge")]
    FitFailed,
    #[error("record {0} is not a two-element orbit product")]
    NotPairProduct(String),
    #[error("noise level {0} is negative")]
    InvalidSigma(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Standard,
    Interleaved,
    Mlcb,
    UnitDepth,
}

/// One layer of the repeated block; `dressed` adds S on every CZ qubit after the layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStep {
    pub layer: CliffordLayer,
    pub dressed: bool,
}

impl BlockStep {
    pub fn effective(&self) -> CliffordLayer {
        if self.dressed {
            self.layer.s_dressed()
        } else {
            self.layer.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbInstance {
    pub id: String,
    pub kind: InstanceKind,
    pub block: Vec<BlockStep>,
    pub prep: PauliString,
    pub depths: Vec<usize>,
}

impl CbInstance {
    pub fn new(id: impl Into<String>, kind: InstanceKind, block: Vec<BlockStep>, prep: PauliString) -> Result<Self, ExperimentError> {
        let id = id.into();
        if block.is_empty() {
            return Err(ExperimentError::EmptyBlock(id));
        }
        for s in &block {
            if s.layer.num_qubits() != prep.num_qubits() {
                return Err(PauliError::DimensionMismatch(s.layer.num_qubits(), prep.num_qubits()).into());
            }
        }
        let mut inst = CbInstance { id, kind, block, prep: prep.unsigned(), depths: Vec::new() };
        inst.depths = match kind {
            InstanceKind::UnitDepth => vec![1],
            _ => {
                let p = inst.period();
                DEFAULT_DEPTHS.iter().map(|d| d * p).collect()
            }
        };
        Ok(inst)
    }

    pub fn standard(layer: &CliffordLayer, prep: &PauliString) -> Result<Self, ExperimentError> {
        let id = format!("cb-{}-{}", layer.label(), prep.letters());
        Self::new(id, InstanceKind::Standard, vec![BlockStep { layer: layer.clone(), dressed: false }], prep.clone())
    }

    pub fn interleaved(layer: &CliffordLayer, prep: &PauliString) -> Result<Self, ExperimentError> {
        let id = format!("icb-{}-{}", layer.label(), prep.letters());
        Self::new(id, InstanceKind::Interleaved, vec![BlockStep { layer: layer.clone(), dressed: true }], prep.clone())
    }

    /// Alternates `first` and `second`.
    pub fn mlcb(first: &CliffordLayer, second: &CliffordLayer, prep: &PauliString) -> Result<Self, ExperimentError> {
        let id = format!("mlcb-{}{}-{}", first.label(), second.label(), prep.letters());
        let block = vec![BlockStep { layer: first.clone(), dressed: false }, BlockStep { layer: second.clone(), dressed: false }];
        Self::new(id, InstanceKind::Mlcb, block, prep.clone())
    }

    pub fn unit_depth(layer: &CliffordLayer, prep: &PauliString) -> Result<Self, ExperimentError> {
        let id = format!("unit-{}-{}", layer.label(), prep.letters());
        Self::new(id, InstanceKind::UnitDepth, vec![BlockStep { layer: layer.clone(), dressed: false }], prep.clone())
    }

    pub fn with_depths(mut self, depths: Vec<usize>) -> Result<Self, ExperimentError> {
        if depths.is_empty() || depths.contains(&0) {
            return Err(ExperimentError::InvalidDepth);
        }
        self.depths = depths;
        Ok(self)
    }

    fn layers(&self) -> Vec<CliffordLayer> {
        self.block.iter().map(|s| s.effective()).collect()
    }

    /// Block repetitions after which the prepared string returns (up to sign).
    pub fn period(&self) -> usize {
        let layers = self.layers();
        let mut cur = self.prep.clone();
        for k in 1..=PERIOD_GUARD {
            for l in &layers {
                l.conjugate_in_place(&mut cur);
            }
            if cur.unsigned() == self.prep {
                return k;
            }
        }
        PERIOD_GUARD
    }

    /// Measured string after `d` repetitions, with sign.
    pub fn meas(&self, d: usize) -> PauliString {
        let mut cur = self.prep.clone();
        let layers = self.layers();
        for _ in 0..d {
            for l in &layers {
                l.conjugate_in_place(&mut cur);
            }
        }
        cur
    }

    /// `(label, string)` for each layer application over one period.
    pub fn period_targets(&self) -> Vec<(String, PauliString)> {
        let layers = self.layers();
        let mut cur = self.prep.clone();
        let mut out = Vec::new();
        for _ in 0..self.period() {
            for (step, l) in self.block.iter().zip(&layers) {
                out.push((step.layer.label().to_string(), cur.unsigned()));
                l.conjugate_in_place(&mut cur);
            }
        }
        out
    }

    /// Fidelity product measured per period.
    pub fn product(&self) -> FidelityFunction {
        FidelityFunction::product_of(&self.period_targets())
    }
}

fn log_fidelity(models: &ModelSet, label: &str, p: &PauliString) -> Result<f64, ExperimentError> {
    let m = models.get(label).ok_or_else(|| ExperimentError::UnknownLayer(label.to_string()))?;
    if m.generators().num_qubits() != p.num_qubits() {
        return Err(PauliError::DimensionMismatch(m.generators().num_qubits(), p.num_qubits()).into());
    }
    Ok(m.log_fidelity(p))
}

/// `spam * prod_j f^{L(j)}_{alpha_j}` over `d` repetitions of the block.
pub fn exact_expectation(models: &ModelSet, inst: &CbInstance, d: usize, spam: f64) -> Result<f64, ExperimentError> {
    if !(spam > 0.0 && spam <= 1.0) {
        return Err(ExperimentError::InvalidSpam(spam));
    }
    let layers = inst.layers();
    let period = inst.period();
    let mut per_period = 0.0;
    let mut cur = inst.prep.clone();
    for _ in 0..period {
        for (s, l) in inst.block.iter().zip(&layers) {
            per_period += log_fidelity(models, s.layer.label(), &cur)?;
            l.conjugate_in_place(&mut cur);
        }
    }
    let mut acc = per_period * (d / period) as f64;
    let mut cur = inst.prep.clone();
    for _ in 0..d % period {
        for (s, l) in inst.block.iter().zip(&layers) {
            acc += log_fidelity(models, s.layer.label(), &cur)?;
            l.conjugate_in_place(&mut cur);
        }
    }
    Ok(spam * acc.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisySample {
    pub depth: usize,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Independent Gaussian noise on every depth.
    PerDepthGaussian { sigma: f64 },
    /// One Gaussian perturbation of the per-period product, propagated to every depth.
    SigmaOnProducts { sigma: f64 },
}

impl NoiseSpec {
    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseSpec::PerDepthGaussian { sigma } | NoiseSpec::SigmaOnProducts { sigma } => sigma,
        }
    }
}

/// Samples at every depth of `inst`. A missing `spam` is drawn from [`SPAM_RANGE`].
pub fn simulate(
    models: &ModelSet,
    inst: &CbInstance,
    noise: NoiseSpec,
    spam: Option<f64>,
    seed: u64,
) -> Result<Vec<NoisySample>, ExperimentError> {
    let sigma = noise.sigma();
    if !(sigma >= 0.0) {
        return Err(ExperimentError::InvalidSigma(sigma));
    }
    let mut rng = rng_from_seed(seed);
    let spam = match spam {
        Some(a) => a,
        None => rng.gen_range(SPAM_RANGE.0..=SPAM_RANGE.1),
    };
    match noise {
        NoiseSpec::PerDepthGaussian { sigma } => inst
            .depths
            .iter()
            .map(|&d| {
                let v = exact_expectation(models, inst, d, spam)?;
                let e: f64 = rng.sample(StandardNormal);
                Ok(NoisySample { depth: d, value: v + sigma * e, sigma })
            })
            .collect(),
        NoiseSpec::SigmaOnProducts { sigma } => {
            let p = inst.period();
            let product = exact_expectation(models, inst, p, 1.0)?;
            let e: f64 = rng.sample(StandardNormal);
            let noisy = product + sigma * e;
            Ok(inst
                .depths
                .iter()
                .map(|&d| {
                    let k = d as f64 / p as f64;
                    let value = spam * noisy.abs().powf(k) * noisy.signum().powi(d as i32 / p as i32);
                    let sd = spam * k * noisy.abs().powf(k - 1.0) * sigma;
                    NoisySample { depth: d, value, sigma: sd }
                })
                .collect())
        }
    }
}

/// `O_d = spam * rate^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub spam: f64,
    pub rate: f64,
    pub stderr: f64,
}

fn distinct_depths(samples: &[NoisySample]) -> usize {
    let mut d: Vec<usize> = samples.iter().map(|s| s.depth).collect();
    d.sort_unstable();
    d.dedup();
    d.len()
}

// weighted least squares for y = a + b x; returns (a, b, se_b)
fn weighted_line(x: &[f64], y: &[f64], w: &[f64], known_sigma: bool) -> (f64, f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * (x - mx) * (x - mx)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let se = if known_sigma {
        (1.0 / sxx).sqrt()
    } else if x.len() > 2 {
        let rss: f64 = x.iter().zip(y).zip(w).map(|((x, y), w)| w * (y - a - b * x).powi(2)).sum();
        (rss / (x.len() as f64 - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (a, b, se)
}

/// Fits `O_d = A f^d`: weighted log-linear least squares, or damped Gauss-Newton when
/// some samples are not positive.
pub fn decay_fit(samples: &[NoisySample]) -> Result<DecayFit, ExperimentError> {
    if distinct_depths(samples) < 2 {
        return Err(ExperimentError::DegenerateDepths);
    }
    let known_sigma = samples.iter().all(|s| s.sigma > 0.0);
    if samples.iter().all(|s| s.value > 0.0) {
        let x: Vec<f64> = samples.iter().map(|s| s.depth as f64).collect();
        let y: Vec<f64> = samples.iter().map(|s| s.value.ln()).collect();
        let w: Vec<f64> =
            samples.iter().map(|s| if known_sigma { (s.value / s.sigma).powi(2) } else { 1.0 }).collect();
        let (a, b, se) = weighted_line(&x, &y, &w, known_sigma);
        let rate = b.exp();
        return Ok(DecayFit { spam: a.exp(), rate, stderr: rate * se });
    }
    nonlinear_fit(samples, known_sigma)
}

fn nonlinear_fit(samples: &[NoisySample], known_sigma: bool) -> Result<DecayFit, ExperimentError> {
    let pos: Vec<NoisySample> = samples.iter().copied().filter(|s| s.value > 0.0).collect();
    let (mut a, mut f) = if distinct_depths(&pos) >= 2 {
        let g = decay_fit(&pos)?;
        (g.spam, g.rate.min(1.0))
    } else {
        (samples.iter().map(|s| s.value.abs()).fold(0.0, f64::max).max(1e-3), 0.9)
    };
    let w: Vec<f64> = samples.iter().map(|s| if known_sigma { 1.0 / (s.sigma * s.sigma) } else { 1.0 }).collect();
    let cost = |a: f64, f: f64| -> f64 {
        samples.iter().zip(&w).map(|(s, w)| w * (s.value - a * f.powi(s.depth as i32)).powi(2)).sum()
    };
    let mut lambda = 1e-3;
    let mut c = cost(a, f);
    let mut jtj = [[0.0; 2]; 2];
    for _ in 0..200 {
        jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for (s, w) in samples.iter().zip(&w) {
            let d = s.depth as i32;
            let m = a * f.powi(d);
            let j = [f.powi(d), a * d as f64 * f.powi(d - 1)];
            let r = s.value - m;
            for p in 0..2 {
                jtr[p] += w * j[p] * r;
                for q in 0..2 {
                    jtj[p][q] += w * j[p] * j[q];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let m00 = jtj[0][0] * (1.0 + lambda);
            let m11 = jtj[1][1] * (1.0 + lambda);
            let det = m00 * m11 - jtj[0][1] * jtj[1][0];
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let da = (m11 * jtr[0] - jtj[0][1] * jtr[1]) / det;
            let df = (m00 * jtr[1] - jtj[1][0] * jtr[0]) / det;
            let (na, nf) = (a + da, f + df);
            let nc = cost(na, nf);
            if nc.is_finite() && nc <= c {
                let done = (c - nc) <= 1e-15 * c.max(1e-300);
                a = na;
                f = nf;
                c = nc;
                lambda = (lambda / 10.0).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if !(a.is_finite() && f.is_finite()) {
        return Err(ExperimentError::FitFailed);
    }
    let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
    let mut var_f = if det.abs() > 0.0 { jtj[0][0] / det } else { 0.0 };
    if !known_sigma && samples.len() > 2 {
        var_f *= c / (samples.len() as f64 - 2.0);
    }
    Ok(DecayFit { spam: a, rate: f, stderr: var_f.max(0.0).sqrt() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accuracy {
    High,
    Low,
}

/// Estimate of a fidelity product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityRecord {
    pub targets: Vec<(String, PauliString)>,
    pub estimate: f64,
    pub sigma: f64,
    pub accuracy: Accuracy,
    pub source: String,
}

impl FidelityRecord {
    pub fn function(&self) -> FidelityFunction {
        FidelityFunction::product_of(&self.targets)
    }

    /// Per-period product from a decay fit over `inst`.
    pub fn from_fit(inst: &CbInstance, fit: &DecayFit) -> Self {
        let p = inst.period() as i32;
        FidelityRecord {
            targets: inst.period_targets(),
            estimate: fit.rate.powi(p),
            sigma: p as f64 * fit.rate.powi(p - 1) * fit.stderr,
            accuracy: Accuracy::High,
            source: inst.id.clone(),
        }
    }
}

/// `f_alpha ~ sqrt(f_alpha f_beta)` from a two-element orbit product.
pub fn symmetry_estimate(pair: &FidelityRecord) -> Result<FidelityRecord, ExperimentError> {
    if pair.targets.len() != 2 {
        return Err(ExperimentError::NotPairProduct(pair.function().to_string()));
    }
    let mut product = pair.estimate;
    if product > 1.0 {
        log::warn!("pair product {product} above one clamped for {}", pair.source);
        product = 1.0;
    }
    let product = product.max(MIN_FIDELITY);
    let f = product.sqrt();
    Ok(FidelityRecord {
        targets: vec![pair.targets[0].clone()],
        estimate: f,
        sigma: pair.sigma / (2.0 * f),
        accuracy: Accuracy::Low,
        source: format!("symmetry:{}", pair.source),
    })
}

/// `f_alpha + N(0, sigma'^2)` clamped to (0, 1].
pub fn unit_depth_estimate<R: Rng + ?Sized>(
    models: &ModelSet,
    layer: &str,
    alpha: &PauliString,
    sigma_prime: f64,
    rng: &mut R,
) -> Result<FidelityRecord, ExperimentError> {
    if !(sigma_prime >= 0.0) {
        return Err(ExperimentError::InvalidSigma(sigma_prime));
    }
    let f = log_fidelity(models, layer, alpha)?.exp();
    let e: f64 = rng.sample(StandardNormal);
    Ok(FidelityRecord {
        targets: vec![(layer.to_string(), alpha.unsigned())],
        estimate: (f + sigma_prime * e).clamp(MIN_FIDELITY, 1.0),
        sigma: sigma_prime,
        accuracy: Accuracy::Low,
        source: format!("unit:{layer}-{}", alpha.letters()),
    })
}

/// How the unlearnable single-X fidelities are estimated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LowBaseline {
    Symmetry,
    UnitDepth { sigma_prime: f64 },
}

/// All records of one simulated characterization.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordSet {
    pub high: Vec<FidelityRecord>,
    pub mlcb: Vec<FidelityRecord>,
    pub low: Vec<FidelityRecord>,
}

impl RecordSet {
    pub fn all(&self) -> impl Iterator<Item = &FidelityRecord> {
        self.high.iter().chain(&self.mlcb).chain(&self.low)
    }

    /// Value of the high-accuracy or MLCB record with this product.
    pub fn lookup(&self) -> HashMap<FidelityFunction, f64> {
        self.high.iter().chain(&self.mlcb).map(|r| (r.function(), r.estimate)).collect()
    }
}

fn noisy_record<R: Rng + ?Sized>(
    models: &ModelSet,
    targets: Vec<(String, PauliString)>,
    sigma: f64,
    source: String,
    rng: &mut R,
) -> Result<FidelityRecord, ExperimentError> {
    let mut log = 0.0;
    for (l, p) in &targets {
        log += log_fidelity(models, l, p)?;
    }
    let e: f64 = rng.sample(StandardNormal);
    Ok(FidelityRecord {
        targets,
        estimate: (log.exp() + sigma * e).max(MIN_FIDELITY),
        sigma,
        accuracy: Accuracy::High,
        source,
    })
}

/// Noisy records for every orbit product of every layer, every planned MLCB product and
/// one low-accuracy estimate per single-X unlearnable fidelity.
pub fn characterize<R: Rng + ?Sized>(
    models: &ModelSet,
    layers: &[CliffordLayer],
    generators: &GeneratorSet,
    plan: Option<&MlcbPlan>,
    sigma: f64,
    baseline: LowBaseline,
    rng: &mut R,
) -> Result<RecordSet, ExperimentError> {
    if !(sigma >= 0.0) {
        return Err(ExperimentError::InvalidSigma(sigma));
    }
    let mut out = RecordSet::default();
    for layer in layers {
        let label = layer.label().to_string();
        for o in layer_orbits(layer, generators, None) {
            let targets = o.elements.iter().map(|p| (label.clone(), p.clone())).collect();
            let source = format!("{}cb:{label}-{}", if o.dressed { "i" } else { "" }, o.elements[0].letters());
            out.high.push(noisy_record(models, targets, sigma, source, rng)?);
        }
    }
    if let Some(plan) = plan {
        let mut seen = HashSet::new();
        for r in &plan.ratios {
            if seen.insert(r.certificate.f2.clone()) {
                let source = format!("mlcb:{}", r.target.name);
                out.mlcb.push(noisy_record(models, r.target.sequence.clone(), sigma, source, rng)?);
            }
        }
    }
    let index: HashMap<FidelityFunction, usize> = out.high.iter().enumerate().map(|(i, r)| (r.function(), i)).collect();
    let n = generators.num_qubits();
    for layer in layers {
        let label = layer.label().to_string();
        for q in layer.support() {
            let x = PauliString::single(n, q, Pauli::X)?;
            let rec = match baseline {
                LowBaseline::UnitDepth { sigma_prime } => unit_depth_estimate(models, &label, &x, sigma_prime, rng)?,
                LowBaseline::Symmetry => {
                    let el = orbit(layer, &x, None);
                    let key = FidelityFunction::product(&label, &el);
                    let pair = index
                        .get(&key)
                        .map(|&i| &out.high[i])
                        .ok_or_else(|| ExperimentError::NotPairProduct(key.to_string()))?;
                    let pair = FidelityRecord {
                        targets: el.iter().map(|p| (label.clone(), p.clone())).collect(),
                        ..pair.clone()
                    };
                    symmetry_estimate(&pair)?
                }
            };
            out.low.push(rec);
        }
    }
    Ok(out)
}

/// Packs generator-indexed orbits of a layer into shared preparations. Orbits are combined
/// when their supports are disjoint, so each product can be read from a marginal.
pub fn plan_instances(layer: &CliffordLayer, generators: &GeneratorSet) -> Result<Vec<CbInstance>, ExperimentError> {
    let n = layer.num_qubits();
    let dressed = layer.s_dressed();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for interleaved in [false, true] {
        let l = if interleaved { &dressed } else { layer };
        let mut packs: Vec<(PauliString, Vec<bool>)> = Vec::new();
        for alpha in generators.strings() {
            let el = orbit(l, alpha, None);
            let mut key = el.clone();
            key.sort();
            if !seen.insert(key) {
                continue;
            }
            let mut used = vec![false; n];
            for p in &el {
                for q in p.support() {
                    used[q] = true;
                }
            }
            let slot = packs.iter().position(|(_, u)| u.iter().zip(&used).all(|(a, b)| !(*a && *b)));
            match slot {
                Some(i) => {
                    let (prep, u) = &mut packs[i];
                    *prep = prep.xor(&alpha.unsigned())?;
                    for (a, b) in u.iter_mut().zip(&used) {
                        *a |= b;
                    }
                }
                None => packs.push((alpha.unsigned(), used)),
            }
        }
        for (prep, _) in packs {
            out.push(if interleaved { CbInstance::interleaved(layer, &prep)? } else { CbInstance::standard(layer, &prep)? });
        }
    }
    Ok(out)
}
