//! Learnability of fidelity functions, equivalence certificates and layer-pair targets.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{chain_decomposition, orbit, Chain, ChainKind, CliffordError, CliffordLayer};
use crate::linalg::{solve_combination, RowSpace, SparseRow};
use crate::pauli::{Pauli, PauliError, PauliString};
use crate::seed::{derive_seed, rng_from_seed};
use crate::spl::{GeneratorSet, ModelSet, SplError};

/// Random elimination orders tried by the certificate search.
pub const DEFAULT_RESTARTS: usize = 32;
/// Largest qubit count for the general pattern-transfer count.
pub const PATTERN_MAX_QUBITS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error(transparent)]
    Spl(#[from] SplError),
    #[error("layer {0:?} is not part of the column space")]
    UnknownLayer(String),
    #[error("{0} is not supported inside the analysed region")]
    OutsideRegion(String),
    #[error("functions are not equivalent ({0:?})")]
    NotEquivalent(Equivalence),
    #[error("coefficient does not fit in a 64-bit rational")]
    CoefficientOverflow,
    #[error("general pattern counting supports at most {max} qubits, got {n}")]
    TooManyQubits { n: usize, max: usize },
    #[error("no certificate for qubit {qubit} and layers {layers:?}")]
    MissingCertificate { qubit: usize, layers: (String, String) },
    #[error("invalid coefficient {0:?}")]
    ParseCoefficient(String),
}

pub fn format_ratio(r: &Rational64) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn parse_ratio(s: &str) -> Result<Rational64, LearnError> {
    let err = || LearnError::ParseCoefficient(s.to_string());
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().map_err(|_| err())?;
            let d: i64 = d.trim().parse().map_err(|_| err())?;
            if d == 0 {
                return Err(err());
            }
            Ok(Rational64::new(n, d))
        }
        None => Ok(Rational64::from_integer(s.parse().map_err(|_| err())?)),
    }
}

mod ratio_str {
    use super::*;
    pub fn serialize<S: serde::Serializer>(r: &Rational64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_ratio(r))
    }
    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Rational64, D::Error> {
        let s = String::deserialize(d)?;
        parse_ratio(&s).map_err(serde::de::Error::custom)
    }
}

mod ratio_seq {
    use super::*;
    pub fn serialize<S: serde::Serializer>(v: &[Rational64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(format_ratio))
    }
    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<Rational64>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter().map(|s| parse_ratio(s).map_err(serde::de::Error::custom)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Term {
    pub layer: String,
    pub pauli: PauliString,
    #[serde(with = "ratio_str")]
    pub coeff: Rational64,
}

/// Linear combination of log-fidelities, `sum coeff * log f^layer_pauli`.
/// Terms are kept merged, sorted and free of zero coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FidelityFunction {
    terms: Vec<Term>,
}

impl FidelityFunction {
    pub fn new<S: Into<String>>(terms: impl IntoIterator<Item = (S, PauliString, Rational64)>) -> Self {
        let mut acc: BTreeMap<(String, PauliString), Rational64> = BTreeMap::new();
        for (l, p, c) in terms {
            *acc.entry((l.into(), p.unsigned())).or_insert_with(Rational64::zero) += c;
        }
        let terms = acc
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|((layer, pauli), coeff)| Term { layer, pauli, coeff })
            .collect();
        FidelityFunction { terms }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// `log f^layer_pauli`
    pub fn fidelity(layer: &str, pauli: &PauliString) -> Self {
        Self::new([(layer, pauli.clone(), Rational64::one())])
    }

    /// Log of a product of fidelities of one layer.
    pub fn product(layer: &str, paulis: &[PauliString]) -> Self {
        Self::new(paulis.iter().map(|p| (layer, p.clone(), Rational64::one())))
    }

    pub fn product_of(targets: &[(String, PauliString)]) -> Self {
        Self::new(targets.iter().map(|(l, p)| (l.clone(), p.clone(), Rational64::one())))
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(&self, c: Rational64) -> Self {
        Self::new(self.terms.iter().map(|t| (t.layer.clone(), t.pauli.clone(), t.coeff * c)))
    }

    pub fn plus(&self, other: &FidelityFunction) -> Self {
        Self::new(self.terms.iter().chain(&other.terms).map(|t| (t.layer.clone(), t.pauli.clone(), t.coeff)))
    }

    pub fn minus(&self, other: &FidelityFunction) -> Self {
        self.plus(&other.scaled(-Rational64::one()))
    }

    pub fn layers(&self) -> BTreeSet<&str> {
        self.terms.iter().map(|t| t.layer.as_str()).collect()
    }

    pub fn qubits(&self) -> BTreeSet<usize> {
        self.terms.iter().flat_map(|t| t.pauli.support()).collect()
    }

    /// Expands to a list of factors when every coefficient is a positive integer.
    pub fn as_product(&self) -> Option<Vec<(String, PauliString)>> {
        let mut out = Vec::new();
        for t in &self.terms {
            if !t.coeff.is_integer() || t.coeff <= Rational64::zero() {
                return None;
            }
            for _ in 0..t.coeff.to_integer() {
                out.push((t.layer.clone(), t.pauli.clone()));
            }
        }
        Some(out)
    }

    pub fn evaluate_log(&self, models: &ModelSet) -> Result<f64, LearnError> {
        let mut acc = 0.0;
        for t in &self.terms {
            let m = models.get(&t.layer).ok_or_else(|| LearnError::UnknownLayer(t.layer.clone()))?;
            if m.generators().num_qubits() != t.pauli.num_qubits() {
                return Err(PauliError::DimensionMismatch(m.generators().num_qubits(), t.pauli.num_qubits()).into());
            }
            acc += ratio_to_f64(&t.coeff) * m.log_fidelity(&t.pauli);
        }
        Ok(acc)
    }

    /// Evaluates with a lookup for individual log-fidelities.
    pub fn evaluate_with(&self, mut log_f: impl FnMut(&str, &PauliString) -> Option<f64>) -> Option<f64> {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += ratio_to_f64(&t.coeff) * log_f(&t.layer, &t.pauli)?;
        }
        Some(acc)
    }
}

pub fn ratio_to_f64(r: &Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl fmt::Display for FidelityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        if self.as_product().is_some() {
            let parts: Vec<String> = self
                .terms
                .iter()
                .map(|t| {
                    let base = format!("f^{}_{}", t.layer, t.pauli.letters());
                    if t.coeff.is_one() {
                        base
                    } else {
                        format!("({base})^{}", t.coeff)
                    }
                })
                .collect();
            return write!(f, "{}", parts.join("·"));
        }
        for (i, t) in self.terms.iter().enumerate() {
            let neg = t.coeff < Rational64::zero();
            let mag = t.coeff.abs();
            match (i, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            if !mag.is_one() {
                write!(f, "{mag} ")?;
            }
            write!(f, "log f^{}_{}", t.layer, t.pauli.letters())?;
        }
        Ok(())
    }
}

/// Columns `(layer, generator)` of a joint rate vector, optionally restricted to a region.
#[derive(Clone, Debug)]
pub struct ColumnSpace {
    generators: Arc<GeneratorSet>,
    layers: Vec<String>,
    region: Option<Vec<usize>>,
    local: Vec<usize>,
    by_qubit: HashMap<usize, Vec<usize>>,
}

impl ColumnSpace {
    pub fn global(generators: &Arc<GeneratorSet>, layers: &[&str]) -> Self {
        Self::build(generators, layers, None)
    }

    /// Only generators supported inside `region`; functions must also live there.
    pub fn local(generators: &Arc<GeneratorSet>, layers: &[&str], region: &[usize]) -> Self {
        let mut r = region.to_vec();
        r.sort_unstable();
        r.dedup();
        Self::build(generators, layers, Some(r))
    }

    fn build(generators: &Arc<GeneratorSet>, layers: &[&str], region: Option<Vec<usize>>) -> Self {
        let local: Vec<usize> = match &region {
            Some(r) => generators.within(r),
            None => (0..generators.len()).collect(),
        };
        let mut by_qubit: HashMap<usize, Vec<usize>> = HashMap::new();
        for (pos, &g) in local.iter().enumerate() {
            for &q in generators.support(g) {
                by_qubit.entry(q).or_default().push(pos);
            }
        }
        ColumnSpace {
            generators: generators.clone(),
            layers: layers.iter().map(|s| s.to_string()).collect(),
            region,
            local,
            by_qubit,
        }
    }

    pub fn generators(&self) -> &Arc<GeneratorSet> {
        &self.generators
    }

    pub fn layers(&self) -> &[String] {
        &self.layers
    }

    pub fn region(&self) -> Option<&[usize]> {
        self.region.as_deref()
    }

    pub fn len(&self) -> usize {
        self.layers.len() * self.local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, col: usize) -> (&str, &PauliString) {
        let (l, g) = (col / self.local.len(), col % self.local.len());
        (&self.layers[l], self.generators.get(self.local[g]))
    }

    pub fn layer_index(&self, label: &str) -> Option<usize> {
        self.layers.iter().position(|l| l == label)
    }

    /// Entry (L, k) is `sum over terms of layer L of coeff * <alpha, k>`.
    pub fn m_vector(&self, f: &FidelityFunction) -> Result<SparseRow<Rational64>, LearnError> {
        let width = self.local.len();
        let mut acc: BTreeMap<usize, Rational64> = BTreeMap::new();
        for t in f.terms() {
            let li = self.layer_index(&t.layer).ok_or_else(|| LearnError::UnknownLayer(t.layer.clone()))?;
            if t.pauli.num_qubits() != self.generators.num_qubits() {
                return Err(PauliError::DimensionMismatch(self.generators.num_qubits(), t.pauli.num_qubits()).into());
            }
            let support = t.pauli.support();
            if let Some(r) = &self.region {
                if !support.iter().all(|q| r.binary_search(q).is_ok()) {
                    return Err(LearnError::OutsideRegion(t.pauli.to_string()));
                }
            }
            let mut cand: Vec<usize> =
                support.iter().filter_map(|q| self.by_qubit.get(q)).flatten().copied().collect();
            cand.sort_unstable();
            cand.dedup();
            for pos in cand {
                if t.pauli.anticommutes(self.generators.get(self.local[pos])) {
                    *acc.entry(li * width + pos).or_insert_with(Rational64::zero) += t.coeff;
                }
            }
        }
        Ok(acc.into_iter().filter(|(_, c)| !c.is_zero()).collect())
    }

    /// m-vector scaled to integers; fine for rank and span tests.
    pub fn integer_row(&self, f: &FidelityFunction) -> Result<SparseRow<i128>, LearnError> {
        let m = self.m_vector(f)?;
        let l = m.iter().fold(1i64, |acc, (_, c)| acc.lcm(c.denom()));
        Ok(m.into_iter().map(|(c, x)| (c, (*x.numer() as i128) * ((l / x.denom()) as i128))).collect())
    }

    pub fn rational_row(&self, f: &FidelityFunction) -> Result<SparseRow<BigRational>, LearnError> {
        Ok(self
            .m_vector(f)?
            .into_iter()
            .map(|(c, x)| (c, BigRational::new(BigInt::from(*x.numer()), BigInt::from(*x.denom()))))
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equivalence {
    Equivalent,
    Independent,
    ALearnable,
    BLearnable,
}

/// Span of the learnable rows over a column space.
#[derive(Clone, Debug)]
pub struct LearnableSpace {
    columns: ColumnSpace,
    rows: Vec<FidelityFunction>,
    int_rows: Vec<SparseRow<i128>>,
    span: RowSpace,
}

impl LearnableSpace {
    pub fn new(columns: ColumnSpace, rows: Vec<FidelityFunction>) -> Result<Self, LearnError> {
        let int_rows = rows.iter().map(|r| columns.integer_row(r)).collect::<Result<Vec<_>, _>>()?;
        let mut span = RowSpace::new();
        for r in &int_rows {
            span.insert(r);
        }
        Ok(LearnableSpace { columns, rows, int_rows, span })
    }

    pub fn columns(&self) -> &ColumnSpace {
        &self.columns
    }

    pub fn rows(&self) -> &[FidelityFunction] {
        &self.rows
    }

    pub fn rank(&self) -> usize {
        self.span.rank()
    }

    /// Column count minus rank.
    pub fn unlearnable_dof(&self) -> usize {
        self.columns.len() - self.rank()
    }

    pub fn is_learnable(&self, f: &FidelityFunction) -> Result<bool, LearnError> {
        let v = self.columns.integer_row(f)?;
        Ok(self.span.clone().contains(&v))
    }

    /// Rank of the learnable rows extended by `extra`.
    pub fn rank_with(&self, extra: &[FidelityFunction]) -> Result<usize, LearnError> {
        let mut s = self.span.clone();
        for f in extra {
            s.insert(&self.columns.integer_row(f)?);
        }
        Ok(s.rank())
    }

    pub fn equivalence(&self, a: &FidelityFunction, b: &FidelityFunction) -> Result<Equivalence, LearnError> {
        let va = self.columns.integer_row(a)?;
        let vb = self.columns.integer_row(b)?;
        let r = self.rank();
        let mut sa = self.span.clone();
        sa.insert(&va);
        let r_a = sa.rank();
        let mut sb = self.span.clone();
        sb.insert(&vb);
        let r_b = sb.rank();
        sa.insert(&vb);
        let r_ab = sa.rank();
        Ok(if r_a == r {
            Equivalence::ALearnable
        } else if r_b == r {
            Equivalence::BLearnable
        } else if r_ab == r_a && r_ab == r_b {
            Equivalence::Equivalent
        } else {
            Equivalence::Independent
        })
    }

    fn spans_target(&self, anchor: Option<&SparseRow<i128>>, chosen: &[usize], target: &SparseRow<i128>) -> bool {
        let mut s = RowSpace::new();
        if let Some(a) = anchor {
            s.insert(a);
        }
        for &i in chosen {
            s.insert(&self.int_rows[i]);
        }
        s.contains(target)
    }

    fn search_once(&self, anchor: Option<&SparseRow<i128>>, target: &SparseRow<i128>, seed: u64) -> Vec<usize> {
        let mut rng = rng_from_seed(seed);
        let mut order: Vec<usize> = (0..self.rows.len()).collect();
        order.shuffle(&mut rng);
        let mut s = RowSpace::new();
        if let Some(a) = anchor {
            s.insert(a);
        }
        let mut chosen = Vec::new();
        for i in order {
            if s.contains(target) {
                break;
            }
            if s.insert(&self.int_rows[i]) {
                chosen.push(i);
            }
        }
        // drop rows the target does not need
        let mut k = chosen.len();
        while k > 0 {
            k -= 1;
            let mut trial = chosen.clone();
            trial.remove(k);
            if self.spans_target(anchor, &trial, target) {
                chosen = trial;
            }
        }
        chosen
    }

    /// Writes `target = epsilon * anchor + sum sigma_i F_i` with learnable rows `F_i`,
    /// keeping the shortest expansion over `restarts` random elimination orders.
    pub fn express(
        &self,
        target: &FidelityFunction,
        anchor: Option<&FidelityFunction>,
        seed: u64,
        restarts: usize,
    ) -> Result<EquivalenceCertificate, LearnError> {
        let t = self.columns.integer_row(target)?;
        let learnable = self.span.clone().contains(&t);
        let anchor_row = if learnable {
            None
        } else {
            let a = anchor.ok_or(LearnError::NotEquivalent(Equivalence::Independent))?;
            let eq = self.equivalence(target, a)?;
            if eq != Equivalence::Equivalent {
                return Err(LearnError::NotEquivalent(eq));
            }
            Some(self.columns.integer_row(a)?)
        };
        let mut best: Option<Vec<usize>> = None;
        for r in 0..restarts.max(1) {
            let chosen = self.search_once(anchor_row.as_ref(), &t, derive_seed(seed, r as u64));
            if best.as_ref().is_none_or(|b| chosen.len() < b.len()) {
                best = Some(chosen);
            }
        }
        let mut chosen = best.unwrap_or_default();
        chosen.sort_unstable();

        let mut vectors = Vec::new();
        if anchor_row.is_some() {
            vectors.push(self.columns.rational_row(anchor.expect("anchor checked"))?);
        }
        for &i in &chosen {
            vectors.push(self.columns.rational_row(&self.rows[i])?);
        }
        let coeffs = solve_combination(&vectors, &self.columns.rational_row(target)?)
            .expect("chosen rows span the target by construction");
        let mut it = coeffs.iter();
        let epsilon = if anchor_row.is_some() { to_ratio64(it.next().expect("anchor coefficient"))? } else { Rational64::zero() };
        let mut sigma = Vec::new();
        let mut basis = Vec::new();
        for (&i, c) in chosen.iter().zip(it) {
            if !c.is_zero() {
                sigma.push(to_ratio64(c)?);
                basis.push(self.rows[i].clone());
            }
        }
        Ok(EquivalenceCertificate {
            f1: target.clone(),
            f2: if anchor_row.is_some() { anchor.cloned().unwrap_or_default() } else { FidelityFunction::zero() },
            epsilon,
            sigma,
            learnable_basis: basis,
        })
    }
}

fn to_ratio64(x: &BigRational) -> Result<Rational64, LearnError> {
    let n = x.numer().to_i64().ok_or(LearnError::CoefficientOverflow)?;
    let d = x.denom().to_i64().ok_or(LearnError::CoefficientOverflow)?;
    Ok(Rational64::new(n, d))
}

/// Rank comparison of two functions against the learnable rows.
pub fn equivalence_test(a: &FidelityFunction, b: &FidelityFunction, space: &LearnableSpace) -> Result<Equivalence, LearnError> {
    space.equivalence(a, b)
}

/// Shortest certificate found over [`DEFAULT_RESTARTS`] seeded orders.
pub fn express_search(
    target: &FidelityFunction,
    anchor: &FidelityFunction,
    space: &LearnableSpace,
    seed: u64,
) -> Result<EquivalenceCertificate, LearnError> {
    space.express(target, Some(anchor), seed, DEFAULT_RESTARTS)
}

/// `f1 = epsilon * f2 + sum sigma_i * learnable_basis[i]` in log space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceCertificate {
    pub f1: FidelityFunction,
    pub f2: FidelityFunction,
    #[serde(with = "ratio_str")]
    pub epsilon: Rational64,
    #[serde(with = "ratio_seq")]
    pub sigma: Vec<Rational64>,
    pub learnable_basis: Vec<FidelityFunction>,
}

impl EquivalenceCertificate {
    pub fn expansion(&self) -> FidelityFunction {
        let mut acc = self.f2.scaled(self.epsilon);
        for (s, f) in self.sigma.iter().zip(&self.learnable_basis) {
            acc = acc.plus(&f.scaled(*s));
        }
        acc
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Symbolic check: both sides have the same m-vector over all generators.
    pub fn verify_exact(&self, generators: &Arc<GeneratorSet>) -> Result<bool, LearnError> {
        let expansion = self.expansion();
        let diff = self.f1.minus(&expansion);
        let labels: BTreeSet<&str> = self.f1.layers().into_iter().chain(expansion.layers()).collect();
        let labels: Vec<&str> = labels.into_iter().collect();
        let cols = ColumnSpace::global(generators, &labels);
        Ok(cols.m_vector(&diff)?.is_empty())
    }

    pub fn residual(&self, models: &ModelSet) -> Result<f64, LearnError> {
        Ok((self.f1.evaluate_log(models)? - self.expansion().evaluate_log(models)?).abs())
    }

    /// Evaluates `f1` from a value of `f2` and values of the learnable basis
    /// (all as plain fidelities, not logs).
    pub fn estimate(&self, f2_value: f64, basis_values: &[f64]) -> f64 {
        let mut acc = ratio_to_f64(&self.epsilon) * f2_value.ln();
        for (s, v) in self.sigma.iter().zip(basis_values) {
            acc += ratio_to_f64(s) * v.ln();
        }
        acc.exp()
    }
}

/// One orbit of a layer (or its S-dressed variant).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Orbit {
    pub elements: Vec<PauliString>,
    pub dressed: bool,
}

impl Orbit {
    pub fn product(&self, layer: &str) -> FidelityFunction {
        FidelityFunction::product(layer, &self.elements)
    }
}

/// Distinct standard and S-dressed orbits of generator-indexed strings. With a
/// region, only orbits staying inside it are kept.
pub fn layer_orbits(layer: &CliffordLayer, generators: &GeneratorSet, region: Option<&[usize]>) -> Vec<Orbit> {
    let dressed = layer.s_dressed();
    let alphas: Vec<usize> = match region {
        Some(r) => generators.within(r),
        None => (0..generators.len()).collect(),
    };
    let inside = |o: &[PauliString]| region.is_none_or(|r| o.iter().all(|p| p.supported_within(r)));
    let mut seen: HashSet<Vec<PauliString>> = HashSet::new();
    let mut out = Vec::new();
    for pass in [false, true] {
        for &a in &alphas {
            let el = if pass { orbit(&dressed, generators.get(a), None) } else { orbit(layer, generators.get(a), None) };
            if !inside(&el) {
                continue;
            }
            let mut key = el.clone();
            key.sort();
            if seen.insert(key) {
                out.push(Orbit { elements: el, dressed: pass });
            }
        }
    }
    out
}

/// Orbit-product functions measurable with standard and S-interleaved cycle benchmarking.
pub fn orbit_learnables(layer: &CliffordLayer, generators: &GeneratorSet) -> Vec<FidelityFunction> {
    layer_orbits(layer, generators, None).iter().map(|o| o.product(layer.label())).collect()
}

pub fn orbit_learnables_within(layer: &CliffordLayer, generators: &GeneratorSet, region: &[usize]) -> Vec<FidelityFunction> {
    layer_orbits(layer, generators, Some(region)).iter().map(|o| o.product(layer.label())).collect()
}

/// Per-layer learnability summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerLearnability {
    pub label: String,
    pub generators: usize,
    pub rank: usize,
    pub unlearnable_dof: usize,
    pub standard_singletons: usize,
    /// Singletons of the dressed layer that are not already standard singletons.
    pub dressed_singletons: usize,
    pub unlearnable_basis: Vec<PauliString>,
    pub learnable_products: Vec<FidelityFunction>,
}

pub fn analyze_layer(layer: &CliffordLayer, generators: &Arc<GeneratorSet>) -> Result<LayerLearnability, LearnError> {
    if layer.num_qubits() != generators.num_qubits() {
        return Err(PauliError::DimensionMismatch(generators.num_qubits(), layer.num_qubits()).into());
    }
    let orbits = layer_orbits(layer, generators, None);
    let standard: HashSet<&PauliString> =
        orbits.iter().filter(|o| !o.dressed && o.elements.len() == 1).map(|o| &o.elements[0]).collect();
    let dressed_singletons = orbits
        .iter()
        .filter(|o| o.dressed && o.elements.len() == 1 && !standard.contains(&o.elements[0]))
        .count();
    let rows: Vec<FidelityFunction> = orbits.iter().map(|o| o.product(layer.label())).collect();
    let space = LearnableSpace::new(ColumnSpace::global(generators, &[layer.label()]), rows.clone())?;
    let n = layer.num_qubits();
    let basis = layer.support().into_iter().map(|q| PauliString::single(n, q, Pauli::X)).collect::<Result<Vec<_>, _>>()?;
    Ok(LayerLearnability {
        label: layer.label().to_string(),
        generators: generators.len(),
        rank: space.rank(),
        unlearnable_dof: space.unlearnable_dof(),
        standard_singletons: standard.len(),
        dressed_singletons,
        unlearnable_basis: basis,
        learnable_products: rows,
    })
}

/// Sum over layers of `2^n - c`, with `c` the number of components of the graph joining
/// the support pattern of every Pauli string to that of its image.
pub fn pattern_transfer_unlearnable(layers: &[CliffordLayer], n: usize) -> Result<usize, LearnError> {
    if n > PATTERN_MAX_QUBITS {
        return Err(LearnError::TooManyQubits { n, max: PATTERN_MAX_QUBITS });
    }
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let patterns = 1usize << n;
    let mut total = 0;
    for layer in layers {
        if layer.num_qubits() != n {
            return Err(PauliError::DimensionMismatch(n, layer.num_qubits()).into());
        }
        let mut parent: Vec<usize> = (0..patterns).collect();
        let mask = patterns - 1;
        for idx in 0..patterns * patterns {
            let p = PauliString::from_dense_index(n, idx);
            let q = layer.conjugate(&p)?;
            let a = (idx & mask) | (idx >> n);
            let qi = q.dense_index();
            let b = (qi & mask) | (qi >> n);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        let c = (0..patterns).filter(|&i| find(&mut parent, i) == i).count();
        total += patterns - c;
    }
    Ok(total)
}

/// Unlearnable rate combinations summed over layers, counting only generator-indexed orbits.
pub fn spl_unlearnable(layers: &[CliffordLayer], generators: &Arc<GeneratorSet>) -> Result<usize, LearnError> {
    layers.iter().map(|l| analyze_layer(l, generators).map(|a| a.unlearnable_dof)).sum()
}

/// A layer-pair preparation and the fidelity product it measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlcbTarget {
    pub qubit: usize,
    pub name: String,
    /// Layer applied first, then the other.
    pub order: (String, String),
    pub prep: PauliString,
    pub sequence: Vec<(String, PauliString)>,
    pub product: FidelityFunction,
    /// Chain qubits used for the local analysis.
    pub window: Vec<usize>,
}

impl MlcbTarget {
    pub fn region(&self) -> Vec<usize> {
        let mut r: BTreeSet<usize> = self.window.iter().copied().collect();
        r.insert(self.qubit);
        for (_, p) in &self.sequence {
            r.extend(p.support());
        }
        r.into_iter().collect()
    }
}

const SEQUENCE_GUARD: usize = 64;

/// Alternates `first`, `second` from `prep` until the string returns after a full pair.
pub fn alternating_sequence(first: &CliffordLayer, second: &CliffordLayer, prep: &PauliString) -> Vec<(String, PauliString)> {
    let start = prep.unsigned();
    let mut cur = start.clone();
    let mut seq = Vec::new();
    for step in 0..SEQUENCE_GUARD {
        let l = if step % 2 == 0 { first } else { second };
        seq.push((l.label().to_string(), cur.unsigned()));
        l.conjugate_in_place(&mut cur);
        if step % 2 == 1 && cur.unsigned() == start {
            break;
        }
    }
    seq
}

fn chain_layer(chain: &Chain, label: &str, n: usize) -> Result<CliffordLayer, LearnError> {
    let pairs: Vec<(usize, usize)> = chain.edges.iter().filter(|e| e.label == label).map(|e| e.pair).collect();
    Ok(CliffordLayer::cz_only(label, n, &pairs)?)
}

fn chain_window(chain: &Chain, q: usize) -> Vec<usize> {
    let len = chain.qubits.len();
    let pos = chain.qubits.iter().position(|&x| x == q).expect("qubit in chain");
    let mut w: Vec<usize> = match chain.kind {
        ChainKind::Closed if len <= 4 => chain.qubits.clone(),
        ChainKind::Closed => (0..len)
            .filter(|&i| {
                let d = (i + len - pos) % len;
                d.min(len - d) <= 2
            })
            .map(|i| chain.qubits[i])
            .collect(),
        ChainKind::Open => (pos.saturating_sub(2)..(pos + 3).min(len)).map(|i| chain.qubits[i]).collect(),
    };
    w.sort_unstable();
    w
}

fn chain_neighbours(chain: &Chain, q: usize) -> Vec<usize> {
    let len = chain.qubits.len();
    let pos = chain.qubits.iter().position(|&x| x == q).expect("qubit in chain");
    let mut out = Vec::new();
    match chain.kind {
        ChainKind::Open => {
            if pos > 0 {
                out.push(chain.qubits[pos - 1]);
            }
            if pos + 1 < len {
                out.push(chain.qubits[pos + 1]);
            }
        }
        ChainKind::Closed => {
            out.push(chain.qubits[(pos + len - 1) % len]);
            out.push(chain.qubits[(pos + 1) % len]);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn default_prep(chain: &Chain, q: usize, n: usize) -> Result<PauliString, LearnError> {
    let xs: Vec<usize> = match (chain.kind, chain.len()) {
        (ChainKind::Closed, 2 | 4) => chain.qubits.iter().copied().filter(|&x| x != q).collect(),
        _ => chain_neighbours(chain, q),
    };
    let ops: Vec<(usize, Pauli)> = xs.into_iter().map(|x| (x, Pauli::X)).collect();
    Ok(PauliString::from_sparse(n, &ops)?)
}

fn target_name(chain: &Chain, q: usize, window: &[usize]) -> String {
    match (chain.kind, chain.len()) {
        (ChainKind::Closed, 2) if chain.qubits[0] == q => "c_2".into(),
        (ChainKind::Closed, 2) => "c'_2".into(),
        (ChainKind::Closed, 4) => "c_4".into(),
        _ => format!("o_{}", window.len()),
    }
}

fn build_target(
    chain: &Chain,
    q: usize,
    n: usize,
    prep: PauliString,
    first_is_a: bool,
) -> Result<MlcbTarget, LearnError> {
    let a = chain_layer(chain, &chain.layers.0, n)?;
    let b = chain_layer(chain, &chain.layers.1, n)?;
    let (first, second) = if first_is_a { (&a, &b) } else { (&b, &a) };
    let sequence = alternating_sequence(first, second, &prep);
    let window = chain_window(chain, q);
    Ok(MlcbTarget {
        qubit: q,
        name: target_name(chain, q, &window),
        order: (first.label().to_string(), second.label().to_string()),
        product: FidelityFunction::product_of(&sequence),
        prep,
        sequence,
        window,
    })
}

/// Default preparation and measured product for each bulk qubit of a chain.
pub fn mlcb_targets(chain: &Chain, n: usize) -> Result<Vec<MlcbTarget>, LearnError> {
    chain.bulk().into_iter().map(|q| build_target(chain, q, n, default_prep(chain, q, n)?, true)).collect()
}

/// `log f^{L_i}_{X on L_i-partner of q} - log f^{L_j}_{X on L_j-partner of q}`
pub fn log_mu(qubit: usize, li: &CliffordLayer, lj: &CliffordLayer) -> Result<FidelityFunction, LearnError> {
    let n = li.num_qubits();
    let missing = || LearnError::MissingCertificate { qubit, layers: (li.label().to_string(), lj.label().to_string()) };
    let pi = li.partner(qubit).ok_or_else(missing)?;
    let pj = lj.partner(qubit).ok_or_else(missing)?;
    let num = PauliString::single(n, pi, Pauli::X)?;
    let den = PauliString::single(n, pj, Pauli::X)?;
    Ok(FidelityFunction::fidelity(li.label(), &num).minus(&FidelityFunction::fidelity(lj.label(), &den)))
}

/// Ratio of two unlearnable fidelities and its certificate in terms of a measured product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuRatio {
    pub qubit: usize,
    pub layers: (String, String),
    pub target: MlcbTarget,
    /// `f1` is the log-ratio, `f2` the measured product.
    pub certificate: EquivalenceCertificate,
}

impl MuRatio {
    pub fn log_mu(&self) -> &FidelityFunction {
        &self.certificate.f1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanFailure {
    pub qubit: usize,
    pub layers: (String, String),
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MlcbPlan {
    pub ratios: Vec<MuRatio>,
    pub failures: Vec<PlanFailure>,
}

impl MlcbPlan {
    /// log-ratio expressions keyed by qubit and layer pair.
    pub fn mu_ratios(&self) -> BTreeMap<(usize, (String, String)), FidelityFunction> {
        self.ratios.iter().map(|r| ((r.qubit, r.layers.clone()), r.certificate.expansion())).collect()
    }
}

/// Indices of layers covering `q`, in the given order.
pub fn covering_layers(layers: &[CliffordLayer], q: usize) -> Vec<usize> {
    (0..layers.len()).filter(|&i| layers[i].in_support(q)).collect()
}

/// `sum_q (l_q - 1)` over qubits covered by at least one layer.
pub fn expected_recovered(layers: &[CliffordLayer]) -> usize {
    let n = layers.first().map_or(0, |l| l.num_qubits());
    (0..n).map(|q| covering_layers(layers, q).len().saturating_sub(1)).sum()
}

fn local_space(gens: &Arc<GeneratorSet>, li: &CliffordLayer, lj: &CliffordLayer, region: &[usize]) -> Result<LearnableSpace, LearnError> {
    let cols = ColumnSpace::local(gens, &[li.label(), lj.label()], region);
    let mut rows = orbit_learnables_within(li, gens, region);
    rows.extend(orbit_learnables_within(lj, gens, region));
    LearnableSpace::new(cols, rows)
}

fn prep_candidates(window: &[usize], q: usize, n: usize) -> Result<Vec<PauliString>, LearnError> {
    let others: Vec<usize> = window.iter().copied().filter(|&x| x != q).collect();
    let ops = [Pauli::I, Pauli::X, Pauli::Y];
    let mut out = Vec::new();
    let total = 3usize.pow(others.len() as u32);
    for code in 1..total {
        let mut c = code;
        let mut sparse = Vec::new();
        for &x in &others {
            if ops[c % 3] != Pauli::I {
                sparse.push((x, ops[c % 3]));
            }
            c /= 3;
        }
        out.push(PauliString::from_sparse(n, &sparse)?);
    }
    out.sort_by_key(|p| p.weight());
    Ok(out)
}

/// Finds a measured product equivalent to the ratio for `q` on `(li, lj)` and certifies it.
pub fn certify_ratio(
    gens: &Arc<GeneratorSet>,
    li: &CliffordLayer,
    lj: &CliffordLayer,
    chain: &Chain,
    q: usize,
    seed: u64,
    restarts: usize,
) -> Result<MuRatio, LearnError> {
    let n = li.num_qubits();
    let mu = log_mu(q, li, lj)?;
    let mut cache: HashMap<Vec<usize>, LearnableSpace> = HashMap::new();
    let mut attempt = |t: MlcbTarget| -> Result<Option<MuRatio>, LearnError> {
        let region = t.region();
        if !cache.contains_key(&region) {
            cache.insert(region.clone(), local_space(gens, li, lj, &region)?);
        }
        let space = &cache[&region];
        match space.equivalence(&mu, &t.product)? {
            Equivalence::Equivalent => {
                let certificate = space.express(&mu, Some(&t.product), seed, restarts)?;
                Ok(Some(MuRatio { qubit: q, layers: (li.label().to_string(), lj.label().to_string()), target: t, certificate }))
            }
            _ => Ok(None),
        }
    };
    let prep = default_prep(chain, q, n)?;
    for first_is_a in [true, false] {
        if let Some(r) = attempt(build_target(chain, q, n, prep.clone(), first_is_a)?)? {
            return Ok(r);
        }
    }
    let window = chain_window(chain, q);
    for p in prep_candidates(&window, q, n)? {
        for first_is_a in [true, false] {
            if let Some(r) = attempt(build_target(chain, q, n, p.clone(), first_is_a)?)? {
                return Ok(r);
            }
        }
    }
    Err(LearnError::MissingCertificate { qubit: q, layers: (li.label().to_string(), lj.label().to_string()) })
}

/// Certified ratios for consecutive covering layers of every qubit, in layer order.
pub fn plan_mlcb(layers: &[CliffordLayer], gens: &Arc<GeneratorSet>, seed: u64, restarts: usize) -> Result<MlcbPlan, LearnError> {
    let n = gens.num_qubits();
    let mut tasks: Vec<(usize, usize, usize)> = Vec::new();
    for q in 0..n {
        let cov = covering_layers(layers, q);
        for w in cov.windows(2) {
            tasks.push((q, w[0], w[1]));
        }
    }
    let mut chains: HashMap<(usize, usize), Vec<Chain>> = HashMap::new();
    for &(_, i, j) in &tasks {
        if let std::collections::hash_map::Entry::Vacant(e) = chains.entry((i, j)) {
            e.insert(chain_decomposition(&layers[i], &layers[j])?);
        }
    }
    let results: Vec<Result<MuRatio, LearnError>> = tasks
        .par_iter()
        .enumerate()
        .map(|(k, &(q, i, j))| {
            let chain = chains[&(i, j)].iter().find(|c| c.qubits.contains(&q)).expect("covered qubit lies on a chain");
            certify_ratio(gens, &layers[i], &layers[j], chain, q, derive_seed(seed, k as u64), restarts)
        })
        .collect();
    let mut plan = MlcbPlan::default();
    for (r, &(q, i, j)) in results.into_iter().zip(&tasks) {
        match r {
            Ok(m) => plan.ratios.push(m),
            Err(LearnError::MissingCertificate { .. }) => plan.failures.push(PlanFailure {
                qubit: q,
                layers: (layers[i].label().to_string(), layers[j].label().to_string()),
                reason: "no equivalent preparation found".into(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(plan)
}

/// Exact rank of all layers' learnable rows, without and with the measured products.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankGain {
    pub columns: usize,
    pub without: usize,
    pub with: usize,
}

impl RankGain {
    pub fn recovered(&self) -> usize {
        self.with - self.without
    }
    pub fn unlearnable_without(&self) -> usize {
        self.columns - self.without
    }
    pub fn unlearnable_with(&self) -> usize {
        self.columns - self.with
    }
}

pub fn mlcb_rank_gain(layers: &[CliffordLayer], gens: &Arc<GeneratorSet>, plan: &MlcbPlan) -> Result<RankGain, LearnError> {
    let labels: Vec<&str> = layers.iter().map(|l| l.label()).collect();
    let cols = ColumnSpace::global(gens, &labels);
    let rows: Vec<FidelityFunction> = layers.iter().flat_map(|l| orbit_learnables(l, gens)).collect();
    let space = LearnableSpace::new(cols, rows)?;
    let products: Vec<FidelityFunction> = plan.ratios.iter().map(|r| r.target.product.clone()).collect();
    Ok(RankGain { columns: space.columns().len(), without: space.rank(), with: space.rank_with(&products)? })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnabilityReport {
    pub layers: Vec<LayerLearnability>,
    pub unlearnable_dof: usize,
    pub expected_recovered: usize,
    pub mlcb_recovered: Option<usize>,
    pub ratios: Vec<MuRatio>,
    pub failures: Vec<PlanFailure>,
}

pub fn learnability_report(
    layers: &[CliffordLayer],
    gens: &Arc<GeneratorSet>,
    mlcb: bool,
    seed: u64,
) -> Result<LearnabilityReport, LearnError> {
    let per_layer = layers.iter().map(|l| analyze_layer(l, gens)).collect::<Result<Vec<_>, _>>()?;
    let unlearnable_dof = per_layer.iter().map(|l| l.unlearnable_dof).sum();
    let (recovered, ratios, failures) = if mlcb {
        let plan = plan_mlcb(layers, gens, seed, DEFAULT_RESTARTS)?;
        let gain = mlcb_rank_gain(layers, gens, &plan)?;
        (Some(gain.recovered()), plan.ratios, plan.failures)
    } else {
        (None, Vec::new(), Vec::new())
    };
    Ok(LearnabilityReport {
        layers: per_layer,
        unlearnable_dof,
        expected_recovered: expected_recovered(layers),
        mlcb_recovered: recovered,
        ratios,
        failures,
    })
}
