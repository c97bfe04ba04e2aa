//! Error-mitigation bias of reconstructed noise models on random Clifford circuits.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{CliffordLayer, SingleQubitClifford};
use crate::pauli::{Pauli, PauliString};
use crate::seed::rng_from_seed;
use crate::spl::ModelSet;

pub const REJECTION_BUDGET: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PecError {
    #[error("target weight {weight} exceeds {n} qubits")]
    WeightTooLarge { weight: usize, n: usize },
    #[error("no layers to sample from")]
    NoLayers,
    #[error("rejection budget of {0} attempts exhausted")]
    BudgetExhausted(usize),
    #[error("layer {0:?} missing from a model set")]
    UnknownLayer(String),
    #[error("fitted fidelity of {pauli} on layer {layer:?} vanishes")]
    ZeroFidelity { layer: String, pauli: String },
}

/// One composite layer: a base layer followed by random single-qubit Cliffords.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitStep {
    pub base: String,
    pub layer: CliffordLayer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliffordCircuit {
    pub steps: Vec<CircuitStep>,
    pub seed: u64,
}

impl CliffordCircuit {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Unsigned strings entering each step, then the final one.
    pub fn trajectory(&self, beta0: &PauliString) -> Vec<PauliString> {
        let mut cur = beta0.unsigned();
        let mut out = Vec::with_capacity(self.steps.len() + 1);
        for s in &self.steps {
            out.push(cur.clone());
            s.layer.conjugate_in_place(&mut cur);
            cur = cur.unsigned();
        }
        out.push(cur);
        out
    }

    pub fn propagate(&self, beta0: &PauliString) -> PauliString {
        self.trajectory(beta0).pop().expect("trajectory is never empty")
    }

    pub fn pull_back(&self, final_string: &PauliString) -> PauliString {
        let mut cur = final_string.unsigned();
        for s in self.steps.iter().rev() {
            s.layer.conjugate_inverse_in_place(&mut cur);
        }
        cur.unsigned()
    }
}

/// How the initial string is chosen for a target final weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSampling {
    /// Uniform initial strings until the final weight matches.
    Rejection { budget: usize },
    /// Uniform final string of the target weight, propagated backwards. Same
    /// distribution as rejection, without its vanishing acceptance at low weight.
    Conditional,
}

fn random_string<R: Rng + ?Sized>(n: usize, weight: usize, rng: &mut R) -> PauliString {
    let mut p = PauliString::identity(n);
    for q in sample(rng, n, weight) {
        let op = [Pauli::X, Pauli::Y, Pauli::Z][rng.gen_range(0..3)];
        p.set(q, op).expect("index in range");
    }
    p
}

fn random_nonidentity<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PauliString {
    loop {
        let mut p = PauliString::identity(n);
        for q in 0..n {
            p.set(q, [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][rng.gen_range(0..4)]).expect("index in range");
        }
        if !p.is_identity() {
            return p;
        }
    }
}

/// `depth` composite layers with uniformly drawn base layers and single-qubit gates, and
/// an initial string whose image has weight `weight`.
pub fn sample_circuit(
    layers: &[CliffordLayer],
    depth: usize,
    weight: usize,
    seed: u64,
    method: BetaSampling,
) -> Result<(CliffordCircuit, PauliString), PecError> {
    let first = layers.first().ok_or(PecError::NoLayers)?;
    let n = first.num_qubits();
    if weight > n {
        return Err(PecError::WeightTooLarge { weight, n });
    }
    let mut rng = rng_from_seed(seed);
    let steps = (0..depth)
        .map(|_| {
            let base = &layers[rng.gen_range(0..layers.len())];
            let gates: Vec<(usize, SingleQubitClifford)> =
                (0..n).map(|q| (q, SingleQubitClifford::from_index(rng.gen_range(0..24)))).collect();
            CircuitStep { base: base.label().to_string(), layer: base.then_single_qubit(&gates) }
        })
        .collect();
    let circuit = CliffordCircuit { steps, seed };
    let beta0 = match method {
        BetaSampling::Conditional => {
            if weight == 0 {
                PauliString::identity(n)
            } else {
                circuit.pull_back(&random_string(n, weight, &mut rng))
            }
        }
        BetaSampling::Rejection { budget } => {
            let mut found = None;
            for _ in 0..budget {
                let b = random_nonidentity(n, &mut rng);
                if circuit.propagate(&b).weight() == weight {
                    found = Some(b);
                    break;
                }
            }
            found.ok_or(PecError::BudgetExhausted(budget))?
        }
    };
    Ok((circuit, beta0))
}

/// `prod_i f^L(beta_i) / f^L_t(beta_i)` along the circuit.
pub fn pec_observable(truth: &ModelSet, fitted: &ModelSet, circuit: &CliffordCircuit, beta0: &PauliString) -> Result<f64, PecError> {
    let mut log = 0.0;
    let traj = circuit.trajectory(beta0);
    for (s, beta) in circuit.steps.iter().zip(&traj) {
        let t = truth.get(&s.base).ok_or_else(|| PecError::UnknownLayer(s.base.clone()))?;
        let f = fitted.get(&s.base).ok_or_else(|| PecError::UnknownLayer(s.base.clone()))?;
        let lf = f.log_fidelity(beta);
        if !lf.is_finite() {
            return Err(PecError::ZeroFidelity { layer: s.base.clone(), pauli: beta.to_string() });
        }
        log += t.log_fidelity(beta) - lf;
    }
    Ok(log.exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PecRun {
    pub model_seed: u64,
    pub circuit_seed: u64,
    pub weight: usize,
    pub beta0: PauliString,
    pub o_c: f64,
    pub o_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub mean_bias: f64,
}

impl Moments {
    /// Sample moments; `std` uses the `n - 1` denominator.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Moments {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Moments { mean, std: var.sqrt(), mean_bias: 1.0 - mean }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PecSummary {
    pub weight: usize,
    pub runs: usize,
    pub conventional: Moments,
    pub mlcb: Moments,
}

/// Summary per final weight, in increasing weight order.
pub fn summarize(runs: &[PecRun]) -> Vec<PecSummary> {
    let mut weights: Vec<usize> = runs.iter().map(|r| r.weight).collect();
    weights.sort_unstable();
    weights.dedup();
    weights
        .into_iter()
        .map(|w| {
            let sel: Vec<&PecRun> = runs.iter().filter(|r| r.weight == w).collect();
            PecSummary {
                weight: w,
                runs: sel.len(),
                conventional: Moments::of(sel.iter().map(|r| r.o_c)),
                mlcb: Moments::of(sel.iter().map(|r| r.o_m)),
            }
        })
        .collect()
}
