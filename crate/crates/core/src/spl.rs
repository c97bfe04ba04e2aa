//! Sparse Pauli-Lindblad noise models on a qubit topology.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{CliffordError, CliffordLayer};
use crate::pauli::{Pauli, PauliError, PauliString};

pub const MODEL_SCHEMA: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplError {
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error("edge ({0},{1}) is invalid for a {2}-qubit topology")]
    InvalidEdge(usize, usize, usize),
    #[error("generator weight {0} is not supported (only 1 and 2)")]
    UnsupportedWeight(usize),
    #[error("unknown layer label {0:?}")]
    UnknownLayer(String),
    #[error("expected {expected} rates, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("rate {index} is negative or not finite: {value}")]
    InvalidRate { index: usize, value: f64 },
    #[error("topology {0:?} has no coordinates")]
    NoCoordinates(String),
    #[error("generator orderings differ between models")]
    OrderingMismatch,
}

/// Qubit connectivity graph, optionally embedded on integer coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub name: String,
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<(i32, i32)>>,
}

// Garnet layout: qubit k sits at GARNET_COORDS[k]; couplers join unit-distance pairs.
const GARNET_COORDS: [(i32, i32); 20] = [
    (1, 0),
    (2, 0),
    (0, 1),
    (1, 1),
    (2, 1),
    (3, 1),
    (4, 1),
    (0, 2),
    (1, 2),
    (2, 2),
    (3, 2),
    (4, 2),
    (0, 3),
    (1, 3),
    (2, 3),
    (3, 3),
    (4, 3),
    (1, 4),
    (2, 4),
    (3, 4),
];

impl Topology {
    pub fn new(name: impl Into<String>, n: usize, edges: &[(usize, usize)]) -> Result<Self, SplError> {
        let mut out = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b || a >= n || b >= n {
                return Err(SplError::InvalidEdge(a, b, n));
            }
            out.push((a.min(b), a.max(b)));
        }
        out.sort_unstable();
        out.dedup();
        Ok(Topology { name: name.into(), n, edges: out, coords: None })
    }

    fn from_coords(name: &str, coords: Vec<(i32, i32)>) -> Self {
        let n = coords.len();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let (dx, dy) = (coords[a].0 - coords[b].0, coords[a].1 - coords[b].1);
                if dx.abs() + dy.abs() == 1 {
                    edges.push((a, b));
                }
            }
        }
        Topology { name: name.to_string(), n, edges, coords: Some(coords) }
    }

    /// W×H square lattice; qubit `y*w + x` sits at (x, y).
    pub fn square(w: usize, h: usize) -> Self {
        let coords = (0..h).flat_map(|y| (0..w).map(move |x| (x as i32, y as i32))).collect();
        Self::from_coords(&format!("square-{w}x{h}"), coords)
    }

    /// The 20-qubit Garnet layout.
    pub fn garnet() -> Self {
        Self::from_coords("garnet", GARNET_COORDS.to_vec())
    }

    pub fn line(n: usize) -> Self {
        Self::from_coords(&format!("line-{n}"), (0..n as i32).map(|x| (x, 0)).collect())
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// Induced subgraph on `qubits`, relabelled to `0..qubits.len()` in the given order.
    pub fn induced(&self, qubits: &[usize]) -> Topology {
        let pos: HashMap<usize, usize> = qubits.iter().enumerate().map(|(i, &q)| (q, i)).collect();
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter_map(|(a, b)| Some((*pos.get(a)?, *pos.get(b)?)))
            .collect();
        Topology::new(format!("{}-sub", self.name), qubits.len(), &edges).expect("valid subgraph")
    }
}

/// The ordered set of generators of an SPL model.
///
/// Order: weight-one strings by qubit, each in X, Y, Z order; then for every edge
/// (sorted) the nine two-qubit strings with the lower qubit's Pauli varying slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSet {
    topology: Topology,
    w_max: usize,
    strings: Vec<PauliString>,
    supports: Vec<Vec<usize>>,
    index: HashMap<PauliString, usize>,
}

impl GeneratorSet {
    pub fn new(topology: &Topology, w_max: usize) -> Result<Self, SplError> {
        if !(1..=2).contains(&w_max) {
            return Err(SplError::UnsupportedWeight(w_max));
        }
        let n = topology.n;
        let mut strings = Vec::with_capacity(3 * n + 9 * topology.edges.len());
        let mut supports = Vec::with_capacity(strings.capacity());
        for q in 0..n {
            for p in Pauli::NON_IDENTITY {
                strings.push(PauliString::single(n, q, p)?);
                supports.push(vec![q]);
            }
        }
        if w_max == 2 {
            for &(a, b) in &topology.edges {
                for pa in Pauli::NON_IDENTITY {
                    for pb in Pauli::NON_IDENTITY {
                        strings.push(PauliString::from_sparse(n, &[(a, pa), (b, pb)])?);
                        supports.push(vec![a, b]);
                    }
                }
            }
        }
        let index = strings.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(GeneratorSet { topology: topology.clone(), w_max, strings, supports, index })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn num_qubits(&self) -> usize {
        self.topology.n
    }

    pub fn w_max(&self) -> usize {
        self.w_max
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    pub fn strings(&self) -> &[PauliString] {
        &self.strings
    }

    pub fn get(&self, i: usize) -> &PauliString {
        &self.strings[i]
    }

    pub fn support(&self, i: usize) -> &[usize] {
        &self.supports[i]
    }

    pub fn index_of(&self, p: &PauliString) -> Option<usize> {
        self.index.get(&p.unsigned()).copied()
    }

    /// Indices of generators whose support lies inside `qubits`.
    pub fn within(&self, qubits: &[usize]) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.supports[i].iter().all(|q| qubits.contains(q))).collect()
    }

    /// Row of the symplectic matrix: entry k is 1 when `alpha` anticommutes with generator k.
    pub fn row(&self, alpha: &PauliString) -> Vec<u8> {
        self.strings.iter().map(|k| alpha.anticommutes(k) as u8).collect()
    }
}

/// Rates of one layer's SPL noise model.
#[derive(Clone, Debug, PartialEq)]
pub struct SplModel {
    label: String,
    generators: Arc<GeneratorSet>,
    lambdas: Vec<f64>,
}

impl SplModel {
    pub fn new(label: impl Into<String>, generators: Arc<GeneratorSet>, lambdas: Vec<f64>) -> Result<Self, SplError> {
        if lambdas.len() != generators.len() {
            return Err(SplError::WrongLength { expected: generators.len(), got: lambdas.len() });
        }
        if let Some((i, &v)) = lambdas.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(SplError::InvalidRate { index: i, value: v });
        }
        Ok(SplModel { label: label.into(), generators, lambdas })
    }

    pub fn zero(label: impl Into<String>, generators: Arc<GeneratorSet>) -> Self {
        let k = generators.len();
        SplModel { label: label.into(), generators, lambdas: vec![0.0; k] }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn generators(&self) -> &Arc<GeneratorSet> {
        &self.generators
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// -2 sum_k <alpha,k> lambda_k
    pub fn log_fidelity(&self, alpha: &PauliString) -> f64 {
        let mut acc = 0.0;
        for (k, l) in self.generators.strings.iter().zip(&self.lambdas) {
            if alpha.anticommutes(k) {
                acc += l;
            }
        }
        -2.0 * acc
    }

    pub fn fidelity(&self, alpha: &PauliString) -> f64 {
        self.log_fidelity(alpha).exp()
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            schema: MODEL_SCHEMA,
            label: self.label.clone(),
            topology: self.generators.topology.clone(),
            w_max: self.generators.w_max,
            lambdas: self.lambdas.clone(),
        }
    }
}

/// On-disk representation of an [`SplModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: u32,
    pub label: String,
    pub topology: Topology,
    pub w_max: usize,
    pub lambdas: Vec<f64>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<SplModel, SplError> {
        let gens = Arc::new(GeneratorSet::new(&self.topology, self.w_max)?);
        SplModel::new(self.label, gens, self.lambdas)
    }
}

/// Models keyed by layer label.
pub type ModelSet = BTreeMap<String, SplModel>;

/// Product of fidelities over (layer, string) targets.
pub fn fidelity_product(models: &ModelSet, targets: &[(String, PauliString)]) -> Result<f64, SplError> {
    let mut acc = 0.0;
    for (label, p) in targets {
        let m = models.get(label).ok_or_else(|| SplError::UnknownLayer(label.clone()))?;
        acc += m.log_fidelity(p);
    }
    Ok(acc.exp())
}

/// Gaussian parameters for random model generation; index 0 is weight one, 1 weight two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomModelParams {
    pub inactive_mean: [f64; 2],
    pub inactive_std: [f64; 2],
    pub gate_mean_mean: [f64; 2],
    pub gate_mean_std: [f64; 2],
    pub active_std: [f64; 2],
    pub active_rule: ActiveRule,
}

/// Which generators draw from the per-gate active distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveRule {
    /// Support inside one gate of the layer.
    #[default]
    SingleGate,
    /// Support inside the union of the layer's gates, so crosstalk between two
    /// neighbouring gates is active too.
    LayerSupport,
}

impl Default for RandomModelParams {
    fn default() -> Self {
        RandomModelParams {
            inactive_mean: [2e-4, 1.5e-4],
            inactive_std: [8e-4, 1e-3],
            gate_mean_mean: [1e-3, 2e-3],
            gate_mean_std: [7.5e-4, 1.5e-3],
            active_std: [1e-3, 2e-3],
            active_rule: ActiveRule::SingleGate,
        }
    }
}

impl RandomModelParams {
    pub fn zero() -> Self {
        RandomModelParams {
            inactive_mean: [0.0; 2],
            inactive_std: [0.0; 2],
            gate_mean_mean: [0.0; 2],
            gate_mean_std: [0.0; 2],
            active_std: [0.0; 2],
            active_rule: ActiveRule::SingleGate,
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + std * z
}

/// Draws a random model for `layer`.
///
/// Each gate first draws its own mean rate per weight. Which generators count as active
/// is set by [`ActiveRule`]; under `LayerSupport` a generator spanning two gates uses the
/// average of their means. Negative draws are set to zero.
pub fn random_model<R: Rng + ?Sized>(
    generators: &Arc<GeneratorSet>,
    layer: &CliffordLayer,
    params: &RandomModelParams,
    rng: &mut R,
) -> Result<SplModel, SplError> {
    if layer.num_qubits() != generators.num_qubits() {
        return Err(PauliError::DimensionMismatch(layer.num_qubits(), generators.num_qubits()).into());
    }
    let mut gate_of = vec![usize::MAX; layer.num_qubits()];
    let mut gate_means = Vec::with_capacity(layer.cz_pairs().len());
    for (g, &(a, b)) in layer.cz_pairs().iter().enumerate() {
        gate_of[a] = g;
        gate_of[b] = g;
        gate_means.push([
            normal(rng, params.gate_mean_mean[0], params.gate_mean_std[0]),
            normal(rng, params.gate_mean_mean[1], params.gate_mean_std[1]),
        ]);
    }
    let mut lambdas = Vec::with_capacity(generators.len());
    for i in 0..generators.len() {
        let support = generators.support(i);
        let w = support.len() - 1;
        let active = match params.active_rule {
            ActiveRule::SingleGate => support.iter().all(|&q| gate_of[q] != usize::MAX && gate_of[q] == gate_of[support[0]]),
            ActiveRule::LayerSupport => support.iter().all(|&q| gate_of[q] != usize::MAX),
        };
        let v = if active {
            let mean = support.iter().map(|&q| gate_means[gate_of[q]][w]).sum::<f64>() / support.len() as f64;
            normal(rng, mean, params.active_std[w])
        } else {
            normal(rng, params.inactive_mean[w], params.inactive_std[w])
        };
        lambdas.push(v.max(0.0));
    }
    SplModel::new(layer.label(), generators.clone(), lambdas)
}

/// Quasiprobability weights w_k = (1 - exp(-2(beta-1) lambda_k)) / 2.
pub fn pec_weights(model: &SplModel, beta: f64) -> Vec<f64> {
    model.lambdas.iter().map(|l| 0.5 * (1.0 - (-2.0 * (beta - 1.0) * l).exp())).collect()
}

/// Layer arrangements covering all edges of a coordinate-embedded topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerConfig {
    /// Consecutive layer pairs form closed squares.
    ClosedSquares,
    /// Consecutive layer pairs form open rows, staircases and columns.
    OpenChains,
}

pub const CONFIG_LABELS: [&str; 4] = ["B", "G", "R", "O"];

/// Four CZ layers labelled B, G, R, O that together cover every edge once.
pub fn four_layers(topology: &Topology, config: LayerConfig) -> Result<Vec<CliffordLayer>, SplError> {
    let coords = topology.coords.as_ref().ok_or_else(|| SplError::NoCoordinates(topology.name.clone()))?;
    let mut pairs: [Vec<(usize, usize)>; 4] = Default::default();
    for &(a, b) in &topology.edges {
        let (ca, cb) = (coords[a], coords[b]);
        let horizontal = ca.1 == cb.1;
        let start = (ca.0.min(cb.0), ca.1.min(cb.1));
        let slot = match config {
            LayerConfig::ClosedSquares => match (horizontal, horizontal.then_some(start.0).unwrap_or(start.1).rem_euclid(2)) {
                (true, 0) => 0,
                (false, 0) => 1,
                (true, _) => 2,
                (false, _) => 3,
            },
            LayerConfig::OpenChains => match (horizontal, (start.0 + start.1).rem_euclid(2)) {
                (true, 0) => 0,
                (true, _) => 1,
                (false, 0) => 2,
                (false, _) => 3,
            },
        };
        pairs[slot].push((a, b));
    }
    pairs
        .iter()
        .zip(CONFIG_LABELS)
        .map(|(p, l)| CliffordLayer::cz_only(l, topology.n, p).map_err(SplError::from))
        .collect()
}

/// Builds the set of models from (label, lambdas) pairs sharing one generator set.
pub fn model_set(models: impl IntoIterator<Item = SplModel>) -> ModelSet {
    models.into_iter().map(|m| (m.label.clone(), m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::chain_decomposition;
    use crate::pauli::{ps, walsh_hadamard, FidelityVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gens(t: &Topology) -> Arc<GeneratorSet> {
        Arc::new(GeneratorSet::new(t, 2).unwrap())
    }

    #[test]
    fn generator_counts() {
        for t in [Topology::square(3, 3), Topology::square(20, 20), Topology::garnet(), Topology::line(7)] {
            let g = GeneratorSet::new(&t, 2).unwrap();
            assert_eq!(g.len(), 3 * t.n + 9 * t.num_edges());
            for i in 0..g.len() {
                let s = g.support(i);
                assert!(s.len() == 1 || t.has_edge(s[0], s[1]));
            }
        }
        assert_eq!(GeneratorSet::new(&Topology::line(3), 2).unwrap().len(), 27);
        assert_eq!(GeneratorSet::new(&Topology::line(3), 1).unwrap().len(), 9);
        assert!(GeneratorSet::new(&Topology::line(3), 3).is_err());
    }

    #[test]
    fn garnet_layout() {
        let t = Topology::garnet();
        assert_eq!(t.n, 20);
        assert_eq!(t.num_edges(), 30);
        assert!(t.has_edge(0, 1) && t.has_edge(0, 3) && t.has_edge(18, 19) && t.has_edge(13, 17));
        assert!(!t.has_edge(1, 2));
    }

    #[test]
    fn generator_order() {
        let g = GeneratorSet::new(&Topology::line(3), 2).unwrap();
        let names: Vec<String> = g.strings().iter().map(|s| s.to_string()).collect();
        assert_eq!(&names[..4], &["XII", "YII", "ZII", "IXI"]);
        assert_eq!(&names[9..12], &["XXI", "XYI", "XZI"]);
        assert_eq!(names[26], "IZZ");
    }

    #[test]
    fn fidelity_examples() {
        let t = Topology::new("one", 1, &[]).unwrap();
        let g = gens(&t);
        let m = SplModel::new("L", g.clone(), vec![0.01, 0.0, 0.0]).unwrap();
        assert_eq!(m.fidelity(&ps("I")), 1.0);
        assert!((m.fidelity(&ps("Z")) - (-0.02f64).exp()).abs() < 1e-15);
        assert_eq!(m.fidelity(&ps("X")), 1.0);
        let z = SplModel::zero("L", g);
        assert_eq!(z.fidelity(&ps("Y")), 1.0);
        assert!(SplModel::new("L", gens(&t), vec![-1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn fidelity_product_examples() {
        let t = Topology::line(3);
        let g = gens(&t);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = CliffordLayer::cz_only("B", 3, &[(0, 1)]).unwrap();
        let gl = CliffordLayer::cz_only("G", 3, &[(1, 2)]).unwrap();
        let p = RandomModelParams::default();
        let models = model_set([random_model(&g, &b, &p, &mut rng).unwrap(), random_model(&g, &gl, &p, &mut rng).unwrap()]);
        assert_eq!(fidelity_product(&models, &[]).unwrap(), 1.0);
        let o3 = fidelity_product(&models, &[("B".into(), ps("XIX")), ("G".into(), ps("XZX"))]).unwrap();
        let direct = models["B"].fidelity(&ps("XIX")) * models["G"].fidelity(&ps("XZX"));
        assert!((o3 - direct).abs() < 1e-15);
        let single = fidelity_product(&models, &[("B".into(), ps("ZZI"))]).unwrap();
        assert!((single - models["B"].fidelity(&ps("ZZI"))).abs() < 1e-15);
        assert!(matches!(fidelity_product(&models, &[("Q".into(), ps("ZZI"))]), Err(SplError::UnknownLayer(_))));
    }

    #[test]
    fn random_model_zero_and_determinism() {
        let t = Topology::garnet();
        let g = gens(&t);
        let layers = four_layers(&t, LayerConfig::ClosedSquares).unwrap();
        let zero = random_model(&g, &layers[0], &RandomModelParams::zero(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(zero.lambdas().iter().all(|&l| l == 0.0));
        let a = random_model(&g, &layers[0], &RandomModelParams::default(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = random_model(&g, &layers[0], &RandomModelParams::default(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.lambdas().iter().all(|&l| l >= 0.0));
    }

    // E[max(0, X)] for X ~ N(mu, s^2), with the gate-mean spread folded into s.
    fn clamped_mean(mu: f64, s: f64) -> f64 {
        let z = mu / s;
        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        // Phi via erfc series-free approximation: integrate pdf numerically
        let cdf = {
            let steps = 20000;
            let lo = -12.0;
            let h = (z - lo) / steps as f64;
            let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let mut acc = 0.5 * (f(lo) + f(z));
            for i in 1..steps {
                acc += f(lo + i as f64 * h);
            }
            acc * h
        };
        mu * cdf + s * pdf
    }

    #[test]
    fn random_model_active_weight_two_mean() {
        // one CZ on two qubits: 9 active weight-two generators per draw
        let t = Topology::line(2);
        let g = gens(&t);
        let layer = CliffordLayer::cz_only("B", 2, &[(0, 1)]).unwrap();
        let p = RandomModelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut vals = Vec::new();
        for _ in 0..4000 {
            let m = random_model(&g, &layer, &p, &mut rng).unwrap();
            // average over the nine generators of one draw: they share the gate mean
            vals.push(m.lambdas()[6..].iter().sum::<f64>() / 9.0);
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        let se = (var / vals.len() as f64).sqrt();
        // the clamp acts per generator on N(m, 2e-3) with m ~ N(2e-3, 1.5e-3): total std 2.5e-3
        let expect = clamped_mean(2e-3, (2e-3f64.powi(2) + 1.5e-3f64.powi(2)).sqrt());
        assert!((mean - expect).abs() < 3.0 * se, "mean {mean} expect {expect} se {se}");
        // unclamped mean sits below the clamped one
        assert!(mean > 2e-3);
    }

    #[test]
    fn pec_weight_examples() {
        let t = Topology::new("one", 1, &[]).unwrap();
        let m = SplModel::new("L", gens(&t), vec![0.01, 0.0, 0.03]).unwrap();
        assert!(pec_weights(&m, 1.0).iter().all(|&w| w == 0.0));
        let w = pec_weights(&m, 0.0);
        assert!((w[0] - (1.0 - 0.02f64.exp()) / 2.0).abs() < 1e-15);
        assert!((w[0] + 0.0101).abs() < 1e-4);
        assert_eq!(w[1], 0.0);
        assert_eq!(pec_weights(&m, 3.5)[1], 0.0);
    }

    #[test]
    fn model_file_roundtrip_is_exact() {
        let t = Topology::garnet();
        let g = gens(&t);
        let layers = four_layers(&t, LayerConfig::OpenChains).unwrap();
        let m = random_model(&g, &layers[2], &RandomModelParams::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let json = serde_json::to_string(&m.to_file()).unwrap();
        let back: ModelFile = serde_json::from_str(&json).unwrap();
        let m2 = back.into_model().unwrap();
        assert_eq!(m.lambdas(), m2.lambdas());
        assert_eq!(serde_json::to_string(&m2.to_file()).unwrap(), json);
    }

    #[test]
    fn layer_configs_cover_edges() {
        for cfg in [LayerConfig::ClosedSquares, LayerConfig::OpenChains] {
            for t in [Topology::garnet(), Topology::square(6, 5)] {
                let layers = four_layers(&t, cfg).unwrap();
                let total: usize = layers.iter().map(|l| l.cz_pairs().len()).sum();
                assert_eq!(total, t.num_edges());
                for w in layers.windows(2) {
                    let chains = chain_decomposition(&w[0], &w[1]).unwrap();
                    for c in chains {
                        match cfg {
                            LayerConfig::OpenChains => assert_eq!(c.kind, crate::clifford::ChainKind::Open),
                            LayerConfig::ClosedSquares => assert!(c.len() <= 4),
                        }
                    }
                }
            }
        }
        let t = Topology::square(6, 6);
        let layers = four_layers(&t, LayerConfig::ClosedSquares).unwrap();
        let closed = chain_decomposition(&layers[0], &layers[1])
            .unwrap()
            .into_iter()
            .filter(|c| c.kind == crate::clifford::ChainKind::Closed)
            .count();
        assert_eq!(closed, 9);
    }

    // Oracle: compose single-generator channels rho -> (1-p) rho + p P rho P with
    // p = (1 - exp(-2 lambda))/2 on the dense probability vector.
    fn oracle_probs(m: &SplModel) -> Vec<f64> {
        let n = m.generators().num_qubits();
        let all = PauliString::all(n).unwrap();
        let mut probs = vec![0.0; all.len()];
        probs[0] = 1.0;
        for (k, &l) in m.generators().strings().iter().zip(m.lambdas()) {
            let p = 0.5 * (1.0 - (-2.0 * l).exp());
            let mut next = vec![0.0; probs.len()];
            for (i, a) in all.iter().enumerate() {
                let j = a.xor(k).unwrap().dense_index();
                next[i] += (1.0 - p) * probs[i];
                next[j] += p * probs[i];
            }
            probs = next;
        }
        probs
    }

    proptest! {
        #[test]
        fn walsh_hadamard_matches_channel_oracle(seed in any::<u64>(), n in 1usize..=3) {
            let t = Topology::line(n);
            let g = gens(&t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lambdas: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.0..0.05)).collect();
            let m = SplModel::new("L", g, lambdas).unwrap();
            let f = FidelityVector::from_fn(n, |p| m.fidelity(p)).unwrap();
            let d = walsh_hadamard(&f).unwrap();
            let probs = oracle_probs(&m);
            prop_assert!((d.total() - 1.0).abs() < 1e-12);
            for (p, v) in d.iter() {
                prop_assert!(v >= -1e-12);
                prop_assert!((v - probs[p.dense_index()]).abs() < 1e-12);
            }
        }

        #[test]
        fn log_fidelity_is_linear(seed in any::<u64>()) {
            let t = Topology::square(2, 2);
            let g = gens(&t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l1: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.0..0.01)).collect();
            let l2: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.0..0.01)).collect();
            let sum: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| a + b).collect();
            let (m1, m2, m3) = (
                SplModel::new("L", g.clone(), l1).unwrap(),
                SplModel::new("L", g.clone(), l2).unwrap(),
                SplModel::new("L", g, sum).unwrap(),
            );
            for p in PauliString::all(4).unwrap().iter().step_by(7) {
                prop_assert!((m3.log_fidelity(p) - m1.log_fidelity(p) - m2.log_fidelity(p)).abs() < 1e-14);
            }
        }
    }
}
