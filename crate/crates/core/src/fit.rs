//! Constraint assembly, non-negative least squares and the two fitting pipelines.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::CliffordLayer;
use crate::experiment::{Accuracy, FidelityRecord, RecordSet};
use crate::learnability::{covering_layers, log_mu, ColumnSpace, FidelityFunction, LearnError, MlcbPlan};
use crate::linalg::{RowSpace, SparseRow};
use crate::pauli::{Pauli, PauliString};
use crate::spl::{GeneratorSet, ModelSet, SplError, SplModel};

const CHOLESKY_EPS: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Spl(#[from] SplError),
    #[error("rank {rank} of {columns} columns; unconstrained: {}", missing.join(", "))]
    RankDeficient { rank: usize, columns: usize, missing: Vec<String> },
    #[error("nnls exceeded {0} iterations")]
    IterationCap(usize),
    #[error("system has no rows")]
    Empty,
    #[error("record value {0} is not positive")]
    NonPositive(f64),
    #[error("layer {0:?} missing from one of the model sets")]
    MissingLayer(String),
    #[error("generator orderings differ for layer {0:?}")]
    OrderingMismatch(String),
    #[error("no record for {0}")]
    MissingRecord(String),
}

// ---------------------------------------------------------------------------
// NNLS

#[derive(Clone, Debug, PartialEq)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
}

/// Lower-triangular factor of `G[P, P]` for a growing and shrinking passive set `P`.
struct Factor {
    rows: Vec<Vec<f64>>,
}

impl Factor {
    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; b.len()];
        for i in 0..b.len() {
            let r = &self.rows[i];
            let s: f64 = (0..i).map(|k| r[k] * y[k]).sum();
            y[i] = (b[i] - s) / r[i];
        }
        y
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut z = self.forward(b);
        let p = z.len();
        for i in (0..p).rev() {
            let s: f64 = (i + 1..p).map(|k| self.rows[k][i] * z[k]).sum();
            z[i] = (z[i] - s) / self.rows[i][i];
        }
        z
    }

    /// Appends a column; `None` when it is numerically dependent on the current set.
    fn push(&mut self, cross: &[f64], diag: f64) -> Option<()> {
        let y = self.forward(cross);
        let d2 = diag - y.iter().map(|v| v * v).sum::<f64>();
        if d2 <= CHOLESKY_EPS * diag.abs().max(f64::MIN_POSITIVE) {
            return None;
        }
        let mut row = y;
        row.push(d2.sqrt());
        self.rows.push(row);
        Some(())
    }

    fn remove(&mut self, k: usize) {
        self.rows.remove(k);
        let p = self.rows.len();
        for r in k..p {
            // rows[r] has one extra entry at column r + 1
            let (a, b) = (self.rows[r][r], self.rows[r][r + 1]);
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for row in self.rows[r..].iter_mut() {
                let (u, v) = (row[r], row[r + 1]);
                row[r] = c * u + s * v;
                row[r + 1] = -s * u + c * v;
            }
            self.rows[r].truncate(r + 1);
        }
    }
}

/// `min_x 1/2 x'Gx - h'x` subject to `x >= 0`, i.e. NNLS on the normal equations
/// `G = A'WA`, `h = A'Wb`. `gram` is dense row-major `n x n`.
pub fn nnls_normal(gram: &[f64], h: &[f64]) -> Result<NnlsSolution, FitError> {
    let n = h.len();
    assert_eq!(gram.len(), n * n, "gram must be n x n");
    let g = |i: usize, j: usize| gram[i * n + j];
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = 1e-14 * scale * (n as f64).max(1.0);
    let cap = 5 * n + 20;

    let mut x = vec![0.0; n];
    let mut passive: Vec<usize> = Vec::new();
    let mut in_p = vec![false; n];
    let mut blocked = vec![false; n];
    let mut factor = Factor { rows: Vec::new() };
    let gradient = |x: &[f64], passive: &[usize]| -> Vec<f64> {
        (0..n).map(|i| h[i] - passive.iter().map(|&j| g(i, j) * x[j]).sum::<f64>()).collect()
    };
    let mut w = gradient(&x, &passive);
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > cap {
            return Err(FitError::IterationCap(cap));
        }
        let cand = (0..n).filter(|&j| !in_p[j] && !blocked[j]).max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = cand.filter(|&j| w[j] > tol) else { break };
        let cross: Vec<f64> = passive.iter().map(|&i| g(i, j)).collect();
        if factor.push(&cross, g(j, j)).is_none() {
            blocked[j] = true;
            continue;
        }
        passive.push(j);
        in_p[j] = true;
        loop {
            let hp: Vec<f64> = passive.iter().map(|&i| h[i]).collect();
            let z = factor.solve(&hp);
            if z.iter().all(|&v| v > 0.0) {
                for (&i, &v) in passive.iter().zip(&z) {
                    x[i] = v;
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (&i, &v) in passive.iter().zip(&z) {
                if v <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - v));
                }
            }
            for (&i, &v) in passive.iter().zip(&z) {
                x[i] += alpha * (v - x[i]);
            }
            let mut k = passive.len();
            while k > 0 {
                k -= 1;
                let i = passive[k];
                if x[i] <= 0.0 || (z[k] <= 0.0 && x[i] <= 1e-15 * scale) {
                    x[i] = 0.0;
                    factor.remove(k);
                    passive.remove(k);
                    in_p[i] = false;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
        if in_p[j] {
            blocked.iter_mut().for_each(|b| *b = false);
        } else {
            blocked[j] = true;
        }
        w = gradient(&x, &passive);
    }
    Ok(NnlsSolution { x, iterations })
}

/// Largest KKT violation relative to `max(1, |h|_inf)`.
pub fn kkt_residual(gram: &[f64], h: &[f64], x: &[f64]) -> f64 {
    let n = h.len();
    let scale = h.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for i in 0..n {
        let grad = (0..n).map(|j| gram[i * n + j] * x[j]).sum::<f64>() - h[i];
        let v = if x[i] > 0.0 { grad.abs() } else { (-grad).max(0.0) };
        worst = worst.max(v).max((-x[i]).max(0.0));
    }
    worst / scale
}

/// Dense NNLS `min |A x - b|_2, x >= 0` with optional row weights.
pub fn nnls(a: &[Vec<f64>], b: &[f64], weights: Option<&[f64]>) -> Result<NnlsSolution, FitError> {
    let n = a.first().map_or(0, |r| r.len());
    let mut gram = vec![0.0; n * n];
    let mut h = vec![0.0; n];
    for (k, row) in a.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[k]);
        for i in 0..n {
            if row[i] == 0.0 {
                continue;
            }
            h[i] += w * row[i] * b[k];
            for j in 0..n {
                gram[i * n + j] += w * row[i] * row[j];
            }
        }
    }
    nnls_normal(&gram, &h)
}

// ---------------------------------------------------------------------------
// Constraint systems

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Joint,
    LayerwiseConstrained,
    Conventional,
}

/// Weighted system `M lambda = -log(xi) / 2` over the columns of a [`ColumnSpace`].
/// Rows and weights are fixed at assembly; values can be swapped cheaply.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    columns: ColumnSpace,
    functions: Arc<Vec<FidelityFunction>>,
    rows: Arc<Vec<SparseRow<f64>>>,
    weights: Arc<Vec<f64>>,
    gram: Arc<OnceLock<Vec<f64>>>,
    rank: usize,
    missing: Vec<String>,
    rhs: Vec<f64>,
}

fn log_rhs(value: f64) -> Result<f64, FitError> {
    if value > 0.0 {
        Ok(-value.ln() / 2.0)
    } else {
        Err(FitError::NonPositive(value))
    }
}

impl ConstraintSystem {
    /// Rows for the given functions. A row's weight is `4 / sigma^2` (first order in the
    /// log domain near unit fidelity) when every sigma is positive, otherwise 1.
    pub fn assemble_functions(
        generators: &Arc<GeneratorSet>,
        layers: &[&str],
        functions: Vec<FidelityFunction>,
        sigmas: &[f64],
    ) -> Result<Self, FitError> {
        if functions.is_empty() {
            return Err(FitError::Empty);
        }
        let columns = ColumnSpace::global(generators, layers);
        let mut rows = Vec::with_capacity(functions.len());
        let mut space = RowSpace::new();
        for f in &functions {
            let m = columns.m_vector(f)?;
            space.insert(&columns.integer_row(f)?);
            rows.push(m.into_iter().map(|(c, v)| (c, crate::learnability::ratio_to_f64(&v))).collect());
        }
        let weights = if sigmas.iter().all(|&s| s > 0.0) {
            sigmas.iter().map(|s| 4.0 / (s * s)).collect()
        } else {
            vec![1.0; functions.len()]
        };
        let mut pivot = vec![false; columns.len()];
        for p in space.pivots() {
            pivot[p] = true;
        }
        let missing = (0..columns.len())
            .filter(|&c| !pivot[c])
            .map(|c| {
                let (l, p) = columns.column(c);
                format!("{l}:{p}")
            })
            .collect();
        let n_rows = functions.len();
        Ok(ConstraintSystem {
            columns,
            functions: Arc::new(functions),
            rows: Arc::new(rows),
            weights: Arc::new(weights),
            gram: Arc::new(OnceLock::new()),
            rank: space.rank(),
            missing,
            rhs: vec![0.0; n_rows],
        })
    }

    /// System from records, with their values as right-hand side.
    pub fn assemble(records: &[FidelityRecord], generators: &Arc<GeneratorSet>, layers: &[&str]) -> Result<Self, FitError> {
        let functions = records.iter().map(|r| r.function()).collect();
        let sigmas: Vec<f64> = records.iter().map(|r| r.sigma).collect();
        let sys = Self::assemble_functions(generators, layers, functions, &sigmas)?;
        let values: Vec<f64> = records.iter().map(|r| r.estimate).collect();
        sys.with_values(&values)
    }

    /// Same rows and weights with new measured values.
    pub fn with_values(&self, values: &[f64]) -> Result<Self, FitError> {
        assert_eq!(values.len(), self.functions.len(), "one value per row");
        let rhs = values.iter().map(|&v| log_rhs(v)).collect::<Result<Vec<_>, _>>()?;
        Ok(ConstraintSystem { rhs, ..self.clone() })
    }

    pub fn columns(&self) -> &ColumnSpace {
        &self.columns
    }

    pub fn functions(&self) -> &[FidelityFunction] {
        &self.functions
    }

    pub fn rows(&self) -> &[SparseRow<f64>] {
        &self.rows
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.columns.len()
    }

    /// Column labels `layer:generator` left free by the rows.
    pub fn unconstrained(&self) -> &[String] {
        &self.missing
    }

    pub fn require_full_rank(&self) -> Result<(), FitError> {
        if self.is_full_rank() {
            Ok(())
        } else {
            Err(FitError::RankDeficient { rank: self.rank, columns: self.columns.len(), missing: self.missing.clone() })
        }
    }

    /// Index range of each layer's rates in the concatenated vector.
    pub fn layer_slices(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let w = self.columns.generators().len();
        self.columns.layers().iter().enumerate().map(|(i, l)| (l.clone(), i * w..(i + 1) * w)).collect()
    }

    pub fn gram(&self) -> &[f64] {
        self.gram.get_or_init(|| {
            let n = self.columns.len();
            let mut g = vec![0.0; n * n];
            for (row, w) in self.rows.iter().zip(self.weights.iter()) {
                for &(i, a) in row {
                    for &(j, b) in row {
                        g[i * n + j] += w * a * b;
                    }
                }
            }
            g
        })
    }

    pub fn weighted_rhs(&self) -> Vec<f64> {
        let mut h = vec![0.0; self.columns.len()];
        for ((row, w), b) in self.rows.iter().zip(self.weights.iter()).zip(&self.rhs) {
            for &(i, a) in row {
                h[i] += w * a * b;
            }
        }
        h
    }

    /// `|W^(1/2) (M lambda - rhs)|_2`.
    pub fn residual_norm(&self, lambdas: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(self.weights.iter())
            .zip(&self.rhs)
            .map(|((row, w), b)| {
                let r: f64 = row.iter().map(|&(i, a)| a * lambdas[i]).sum::<f64>() - b;
                w * r * r
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn nnls(&self, method: FitMethod) -> Result<FitResult, FitError> {
        self.require_full_rank()?;
        let h = self.weighted_rhs();
        let sol = nnls_normal(self.gram(), &h)?;
        let kkt = kkt_residual(self.gram(), &h, &sol.x);
        Ok(FitResult {
            residual_norm: self.residual_norm(&sol.x),
            kkt,
            iterations: sol.iterations,
            layers: self.layer_slices().into_iter().map(|(l, r)| (l, sol.x[r].to_vec())).collect(),
            method,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Fitted rates per layer label.
    pub layers: BTreeMap<String, Vec<f64>>,
    pub residual_norm: f64,
    pub kkt: f64,
    pub iterations: usize,
    pub method: FitMethod,
}

impl FitResult {
    pub fn models(&self, generators: &Arc<GeneratorSet>) -> Result<ModelSet, FitError> {
        let mut out = ModelSet::new();
        for (l, lam) in &self.layers {
            out.insert(l.clone(), SplModel::new(l.clone(), generators.clone(), lam.clone())?);
        }
        Ok(out)
    }

    fn merge(parts: Vec<FitResult>, method: FitMethod) -> FitResult {
        let mut out = FitResult { layers: BTreeMap::new(), residual_norm: 0.0, kkt: 0.0, iterations: 0, method };
        let mut sq = 0.0;
        for p in parts {
            sq += p.residual_norm * p.residual_norm;
            out.kkt = out.kkt.max(p.kkt);
            out.iterations += p.iterations;
            out.layers.extend(p.layers);
        }
        out.residual_norm = sq.sqrt();
        out
    }
}

// ---------------------------------------------------------------------------
// Pipelines

/// Chain refinement of single-X fidelities `f_1..f_l` from their low-accuracy
/// estimates and the ratios `mu_j = f_j / f_{j+1}`: the closed-form minimiser `u` of
/// `sum_j (est_j - u c_j)^2` with `c_1 = 1`, `c_{j+1} = c_j / mu_j`, returning `u c_j`.
pub fn refine_chain(estimates: &[f64], ratios: &[f64]) -> Vec<f64> {
    assert_eq!(ratios.len() + 1, estimates.len(), "one ratio per consecutive pair");
    let mut c = vec![1.0];
    for m in ratios {
        c.push(c.last().unwrap() / m);
    }
    let num: f64 = estimates.iter().zip(&c).map(|(f, c)| f * c).sum();
    let den: f64 = c.iter().map(|c| c * c).sum();
    let u = num / den;
    c.iter().map(|c| u * c).collect()
}

/// Weights used for the per-layer systems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowSigmas {
    pub high: f64,
    pub low: f64,
}

/// Per-layer systems built once and reused for every record set of a study.
pub struct Fitter {
    generators: Arc<GeneratorSet>,
    layers: Vec<CliffordLayer>,
    plan: MlcbPlan,
    systems: Vec<ConstraintSystem>,
    joint: OnceLock<Result<ConstraintSystem, FitError>>,
    sigmas: RowSigmas,
}

impl Fitter {
    /// `template` fixes which functions form the rows; its values are ignored.
    pub fn new(
        generators: &Arc<GeneratorSet>,
        layers: &[CliffordLayer],
        plan: MlcbPlan,
        template: &RecordSet,
        sigmas: RowSigmas,
    ) -> Result<Self, FitError> {
        let mut systems = Vec::with_capacity(layers.len());
        for layer in layers {
            let (functions, s) = Self::layer_rows(layer.label(), template, sigmas);
            let sys = ConstraintSystem::assemble_functions(generators, &[layer.label()], functions, &s)?;
            sys.require_full_rank()?;
            systems.push(sys);
        }
        Ok(Fitter {
            generators: generators.clone(),
            layers: layers.to_vec(),
            plan,
            systems,
            joint: OnceLock::new(),
            sigmas,
        })
    }

    fn layer_rows(label: &str, records: &RecordSet, sigmas: RowSigmas) -> (Vec<FidelityFunction>, Vec<f64>) {
        let mut f = Vec::new();
        let mut s = Vec::new();
        for r in records.high.iter().chain(&records.low) {
            if r.targets.iter().all(|(l, _)| l == label) {
                f.push(r.function());
                s.push(if r.accuracy == Accuracy::High { sigmas.high } else { sigmas.low });
            }
        }
        (f, s)
    }

    pub fn generators(&self) -> &Arc<GeneratorSet> {
        &self.generators
    }

    pub fn plan(&self) -> &MlcbPlan {
        &self.plan
    }

    pub fn systems(&self) -> &[ConstraintSystem] {
        &self.systems
    }

    fn values(sys: &ConstraintSystem, values: &HashMap<FidelityFunction, f64>) -> Result<Vec<f64>, FitError> {
        sys.functions()
            .iter()
            .map(|f| values.get(f).copied().ok_or_else(|| FitError::MissingRecord(f.to_string())))
            .collect()
    }

    fn fit_with(&self, values: &HashMap<FidelityFunction, f64>, method: FitMethod) -> Result<FitResult, FitError> {
        let parts = self
            .systems
            .iter()
            .map(|sys| sys.with_values(&Self::values(sys, values)?)?.nnls(method))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FitResult::merge(parts, method))
    }

    fn base_values(records: &RecordSet) -> HashMap<FidelityFunction, f64> {
        records.all().map(|r| (r.function(), r.estimate)).collect()
    }

    /// Per-layer fit from orbit products and the low-accuracy estimates.
    pub fn fit_conventional(&self, records: &RecordSet) -> Result<FitResult, FitError> {
        self.fit_with(&Self::base_values(records), FitMethod::Conventional)
    }

    /// Estimated ratios `f^Li / f^Lj` keyed by qubit and layer pair.
    pub fn mu_estimates(&self, records: &RecordSet) -> BTreeMap<(usize, (String, String)), f64> {
        let lookup = records.lookup();
        let mut out = BTreeMap::new();
        for r in &self.plan.ratios {
            let cert = &r.certificate;
            let Some(&o) = lookup.get(&cert.f2) else {
                log::warn!("no record for measured product {}", cert.f2);
                continue;
            };
            let basis: Option<Vec<f64>> = cert.learnable_basis.iter().map(|f| lookup.get(f).copied()).collect();
            match basis {
                Some(b) => {
                    out.insert((r.qubit, r.layers.clone()), cert.estimate(o, &b));
                }
                None => log::warn!("certificate for qubit {} uses an unrecorded product", r.qubit),
            }
        }
        out
    }

    /// Low-accuracy single-X values replaced by chain-refined ones wherever every ratio
    /// along a qubit's covering layers is available.
    pub fn refined_values(&self, records: &RecordSet) -> Result<HashMap<FidelityFunction, f64>, FitError> {
        let mut values = Self::base_values(records);
        let mus = self.mu_estimates(records);
        let n = self.generators.num_qubits();
        for q in 0..n {
            let cov = covering_layers(&self.layers, q);
            if cov.len() < 2 {
                continue;
            }
            let keys: Vec<FidelityFunction> = cov
                .iter()
                .map(|&i| {
                    let l = &self.layers[i];
                    let p = l.partner(q).expect("covering layer has a partner");
                    PauliString::single(n, p, Pauli::X).map(|x| FidelityFunction::fidelity(l.label(), &x))
                })
                .collect::<Result<_, _>>()
                .map_err(LearnError::from)?;
            let est: Option<Vec<f64>> = keys.iter().map(|k| values.get(k).copied()).collect();
            let ratios: Option<Vec<f64>> = cov
                .windows(2)
                .map(|w| mus.get(&(q, (self.layers[w[0]].label().to_string(), self.layers[w[1]].label().to_string()))).copied())
                .collect();
            match (est, ratios) {
                (Some(est), Some(ratios)) => {
                    for (k, v) in keys.into_iter().zip(refine_chain(&est, &ratios)) {
                        values.insert(k, v.clamp(1e-12, 1.0));
                    }
                }
                (None, _) => return Err(FitError::MissingRecord(keys[0].to_string())),
                (_, None) => log::debug!("qubit {q} keeps its conventional estimates"),
            }
        }
        Ok(values)
    }

    /// Per-layer fit after refining the low-accuracy inputs with the MLCB ratios.
    pub fn fit_mlcb(&self, records: &RecordSet) -> Result<FitResult, FitError> {
        self.fit_with(&self.refined_values(records)?, FitMethod::LayerwiseConstrained)
    }

    /// One fit over all layers with MLCB products as extra rows.
    pub fn fit_joint(&self, records: &RecordSet) -> Result<FitResult, FitError> {
        let sys = self
            .joint
            .get_or_init(|| {
                let labels: Vec<&str> = self.layers.iter().map(|l| l.label()).collect();
                let mut f = Vec::new();
                let mut s = Vec::new();
                for r in records.high.iter().chain(&records.mlcb).chain(&records.low) {
                    f.push(r.function());
                    s.push(if r.accuracy == Accuracy::High { self.sigmas.high } else { self.sigmas.low });
                }
                ConstraintSystem::assemble_functions(&self.generators, &labels, f, &s)
            })
            .as_ref()
            .map_err(|e| e.clone())?;
        let values = Self::base_values(records);
        sys.with_values(&Self::values(sys, &values)?)?.nnls(FitMethod::Joint)
    }

    /// Log-ratio expression of every planned ratio, for inspection.
    pub fn ratio_functions(&self) -> Result<Vec<FidelityFunction>, FitError> {
        self.plan
            .ratios
            .iter()
            .map(|r| {
                let li = self.layers.iter().find(|l| l.label() == r.layers.0).ok_or_else(|| FitError::MissingLayer(r.layers.0.clone()))?;
                let lj = self.layers.iter().find(|l| l.label() == r.layers.1).ok_or_else(|| FitError::MissingLayer(r.layers.1.clone()))?;
                Ok(log_mu(r.qubit, li, lj)?)
            })
            .collect()
    }
}

/// `sum_L |lambda^L - fitted^L|_1`.
pub fn l1_distance(truth: &ModelSet, fitted: &ModelSet) -> Result<f64, FitError> {
    let mut acc = 0.0;
    for (l, m) in truth {
        let f = fitted.get(l).ok_or_else(|| FitError::MissingLayer(l.clone()))?;
        if f.generators().strings() != m.generators().strings() {
            return Err(FitError::OrderingMismatch(l.clone()));
        }
        acc += m.lambdas().iter().zip(f.lambdas()).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(acc)
}

/// `(delta_c, delta_m, delta_m / delta_c)`.
pub fn distance_metrics(truth: &ModelSet, conventional: &ModelSet, mlcb: &ModelSet) -> Result<(f64, f64, f64), FitError> {
    let dc = l1_distance(truth, conventional)?;
    let dm = l1_distance(truth, mlcb)?;
    Ok((dc, dm, dm / dc))
}

#[cfg(test)]
mod tests;
