//! Symplectic Pauli strings and dense fidelity vectors.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest qubit count accepted by dense 4^n routines.
pub const DENSE_MAX_QUBITS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PauliError {
    #[error("dimension mismatch: {0} vs {1} qubits")]
    DimensionMismatch(usize, usize),
    #[error("invalid Pauli character {0:?} in {1:?}")]
    Parse(char, String),
    #[error("qubit {qubit} out of range for {n} qubits")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("dense operation requested for {0} qubits (limit {DENSE_MAX_QUBITS})")]
    TooManyQubits(usize),
    #[error("fidelity vector is missing {0}")]
    Incomplete(String),
}

/// Single-qubit Pauli operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const NON_IDENTITY: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn from_bits(x: bool, z: bool) -> Pauli {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

fn words(n: usize) -> usize {
    n.div_ceil(64).max(1)
}

/// An n-qubit Pauli operator with a ±1 sign.
///
/// Equality, ordering and hashing consider the sign; use [`PauliString::unsigned`]
/// before using a string as a fidelity index.
#[derive(Clone, Debug)]
pub struct PauliString {
    n: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    negative: bool,
}

impl PartialEq for PauliString {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.negative == other.negative && self.x == other.x && self.z == other.z
    }
}

impl Eq for PauliString {}

impl Hash for PauliString {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.n.hash(state);
        self.x.hash(state);
        self.z.hash(state);
        self.negative.hash(state);
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PauliString {
    /// Orders by qubit count, then qubit by qubit in I < X < Y < Z order, then sign.
    fn cmp(&self, other: &Self) -> Ordering {
        self.n
            .cmp(&other.n)
            .then_with(|| {
                for q in 0..self.n.min(other.n) {
                    let c = self.get(q).cmp(&other.get(q));
                    if c != Ordering::Equal {
                        return c;
                    }
                }
                Ordering::Equal
            })
            .then(self.negative.cmp(&other.negative))
    }
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        let w = words(n);
        PauliString { n, x: vec![0; w], z: vec![0; w], negative: false }
    }

    /// Builds a string from (qubit, Pauli) pairs; later pairs overwrite earlier ones.
    pub fn from_sparse(n: usize, ops: &[(usize, Pauli)]) -> Result<Self, PauliError> {
        let mut p = Self::identity(n);
        for &(q, op) in ops {
            p.set(q, op)?;
        }
        Ok(p)
    }

    /// Single-qubit operator `op` on qubit `q`.
    pub fn single(n: usize, q: usize, op: Pauli) -> Result<Self, PauliError> {
        Self::from_sparse(n, &[(q, op)])
    }

    pub fn from_paulis(ops: &[Pauli]) -> Self {
        let mut p = Self::identity(ops.len());
        for (q, &op) in ops.iter().enumerate() {
            p.set_unchecked(q, op);
        }
        p
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn is_negative(&self) -> bool {
        self.negative
    }

    pub fn sign(&self) -> i8 {
        if self.negative {
            -1
        } else {
            1
        }
    }

    pub fn with_sign(mut self, negative: bool) -> Self {
        self.negative = negative;
        self
    }

    pub fn negated(mut self) -> Self {
        self.negative = !self.negative;
        self
    }

    /// Copy with the sign reset to +1.
    pub fn unsigned(&self) -> Self {
        let mut p = self.clone();
        p.negative = false;
        p
    }

    pub fn x_bit(&self, q: usize) -> bool {
        (self.x[q / 64] >> (q % 64)) & 1 == 1
    }

    pub fn z_bit(&self, q: usize) -> bool {
        (self.z[q / 64] >> (q % 64)) & 1 == 1
    }

    pub fn x_words(&self) -> &[u64] {
        &self.x
    }

    pub fn z_words(&self) -> &[u64] {
        &self.z
    }

    pub fn get(&self, q: usize) -> Pauli {
        Pauli::from_bits(self.x_bit(q), self.z_bit(q))
    }

    pub fn set(&mut self, q: usize, op: Pauli) -> Result<(), PauliError> {
        if q >= self.n {
            return Err(PauliError::QubitOutOfRange { qubit: q, n: self.n });
        }
        self.set_unchecked(q, op);
        Ok(())
    }

    pub(crate) fn set_unchecked(&mut self, q: usize, op: Pauli) {
        let (xb, zb) = op.bits();
        let (w, b) = (q / 64, 1u64 << (q % 64));
        if xb {
            self.x[w] |= b;
        } else {
            self.x[w] &= !b;
        }
        if zb {
            self.z[w] |= b;
        } else {
            self.z[w] &= !b;
        }
    }

    pub(crate) fn set_negative(&mut self, negative: bool) {
        self.negative = negative;
    }

    pub(crate) fn flip_z(&mut self, q: usize) {
        self.z[q / 64] ^= 1u64 << (q % 64);
    }

    pub fn is_identity(&self) -> bool {
        self.x.iter().all(|&w| w == 0) && self.z.iter().all(|&w| w == 0)
    }

    pub fn weight(&self) -> usize {
        self.x.iter().zip(&self.z).map(|(a, b)| (a | b).count_ones() as usize).sum()
    }

    /// Qubits carrying a non-identity operator, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| self.x_bit(q) || self.z_bit(q)).collect()
    }

    /// True when every non-identity qubit of `self` lies in `qubits`.
    pub fn supported_within(&self, qubits: &[usize]) -> bool {
        self.support().iter().all(|q| qubits.contains(q))
    }

    pub fn symplectic_inner(&self, other: &PauliString) -> Result<bool, PauliError> {
        if self.n != other.n {
            return Err(PauliError::DimensionMismatch(self.n, other.n));
        }
        Ok(self.anticommutes(other))
    }

    /// Symplectic inner product without the dimension check.
    pub fn anticommutes(&self, other: &PauliString) -> bool {
        let mut acc = 0u32;
        for i in 0..self.x.len() {
            acc ^= ((self.x[i] & other.z[i]) ^ (self.z[i] & other.x[i])).count_ones() & 1;
        }
        acc == 1
    }

    /// Signed product `self · other`. The boolean is true when the product
    /// carries an extra factor of i, in which case the returned sign is the sign of
    /// the ±i prefactor.
    pub fn multiply(&self, other: &PauliString) -> Result<(PauliString, bool), PauliError> {
        if self.n != other.n {
            return Err(PauliError::DimensionMismatch(self.n, other.n));
        }
        let mut exp: i32 = 0;
        for q in 0..self.n {
            let (x1, z1) = (self.x_bit(q), self.z_bit(q));
            let (x2, z2) = (other.x_bit(q) as i32, other.z_bit(q) as i32);
            exp += match (x1, z1) {
                (false, false) => 0,
                (true, true) => z2 - x2,
                (true, false) => z2 * (2 * x2 - 1),
                (false, true) => x2 * (1 - 2 * z2),
            };
        }
        exp += 2 * (self.negative as i32 + other.negative as i32);
        let exp = exp.rem_euclid(4);
        let mut out = PauliString {
            n: self.n,
            x: self.x.iter().zip(&other.x).map(|(a, b)| a ^ b).collect(),
            z: self.z.iter().zip(&other.z).map(|(a, b)| a ^ b).collect(),
            negative: false,
        };
        out.negative = exp >= 2;
        Ok((out, exp % 2 == 1))
    }

    /// Unsigned product (XOR of the bit masks).
    pub fn xor(&self, other: &PauliString) -> Result<PauliString, PauliError> {
        Ok(self.multiply(other)?.0.unsigned())
    }

    /// Restriction to the listed qubits, in the listed order.
    pub fn restrict(&self, qubits: &[usize]) -> PauliString {
        let ops: Vec<Pauli> = qubits.iter().map(|&q| self.get(q)).collect();
        PauliString::from_paulis(&ops)
    }

    /// Embeds a local string into `n` qubits, placing local qubit i on `qubits[i]`.
    pub fn embed(&self, n: usize, qubits: &[usize]) -> Result<PauliString, PauliError> {
        if qubits.len() != self.n {
            return Err(PauliError::DimensionMismatch(self.n, qubits.len()));
        }
        let mut p = PauliString::identity(n);
        for (i, &q) in qubits.iter().enumerate() {
            p.set(q, self.get(i))?;
        }
        p.negative = self.negative;
        Ok(p)
    }

    /// Index into dense 4^n arrays: x bits in the low half, z bits in the high half.
    pub fn dense_index(&self) -> usize {
        debug_assert!(self.n <= DENSE_MAX_QUBITS);
        (self.x[0] as usize) | ((self.z[0] as usize) << self.n)
    }

    pub fn from_dense_index(n: usize, idx: usize) -> PauliString {
        let mask = (1usize << n) - 1;
        let mut p = PauliString::identity(n);
        p.x[0] = (idx & mask) as u64;
        p.z[0] = ((idx >> n) & mask) as u64;
        p
    }

    /// All 4^n unsigned strings in dense-index order.
    pub fn all(n: usize) -> Result<Vec<PauliString>, PauliError> {
        if n > DENSE_MAX_QUBITS {
            return Err(PauliError::TooManyQubits(n));
        }
        Ok((0..1usize << (2 * n)).map(|i| PauliString::from_dense_index(n, i)).collect())
    }

    /// Text form without sign.
    pub fn letters(&self) -> String {
        (0..self.n).map(|q| self.get(q).to_char()).collect()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negative {
            write!(f, "-")?;
        }
        write!(f, "{}", self.letters())
    }
}

impl FromStr for PauliString {
    type Err = PauliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let mut ops = Vec::with_capacity(body.len());
        for c in body.chars() {
            ops.push(Pauli::from_char(c).ok_or_else(|| PauliError::Parse(c, s.to_string()))?);
        }
        Ok(PauliString::from_paulis(&ops).with_sign(negative))
    }
}

impl Serialize for PauliString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a string literal, panicking on malformed input. Meant for fixtures.
pub fn ps(s: &str) -> PauliString {
    s.parse().unwrap_or_else(|e| panic!("bad Pauli literal {s:?}: {e}"))
}

/// Pauli fidelities indexed by unsigned strings.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelityVector {
    n: usize,
    values: HashMap<PauliString, f64>,
}

impl FidelityVector {
    pub fn new(n: usize) -> Self {
        FidelityVector { n, values: HashMap::new() }
    }

    /// Dense vector with `f(P)` for every string.
    pub fn from_fn(n: usize, f: impl Fn(&PauliString) -> f64) -> Result<Self, PauliError> {
        let mut v = Self::new(n);
        for p in PauliString::all(n)? {
            let val = f(&p);
            v.values.insert(p, val);
        }
        Ok(v)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, p: &PauliString, value: f64) -> Result<(), PauliError> {
        if p.num_qubits() != self.n {
            return Err(PauliError::DimensionMismatch(self.n, p.num_qubits()));
        }
        self.values.insert(p.unsigned(), value);
        Ok(())
    }

    pub fn get(&self, p: &PauliString) -> Option<f64> {
        if p.is_negative() {
            self.values.get(&p.unsigned()).copied()
        } else {
            self.values.get(p).copied()
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn dense(&self) -> Result<Vec<f64>, PauliError> {
        if self.n > DENSE_MAX_QUBITS {
            return Err(PauliError::TooManyQubits(self.n));
        }
        let mut out = vec![0.0; 1 << (2 * self.n)];
        for (i, slot) in out.iter_mut().enumerate() {
            let p = PauliString::from_dense_index(self.n, i);
            *slot = self.get(&p).ok_or_else(|| PauliError::Incomplete(p.to_string()))?;
        }
        Ok(out)
    }
}

/// Error probabilities of a Pauli channel, indexed by unsigned strings.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliDistribution {
    n: usize,
    probs: Vec<f64>,
}

impl PauliDistribution {
    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn get(&self, p: &PauliString) -> f64 {
        self.probs[p.dense_index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (PauliString, f64)> + '_ {
        self.probs.iter().enumerate().map(|(i, &v)| (PauliString::from_dense_index(self.n, i), v))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn from_fn(n: usize, f: impl Fn(&PauliString) -> f64) -> Result<Self, PauliError> {
        let probs = PauliString::all(n)?.iter().map(f).collect();
        Ok(PauliDistribution { n, probs })
    }
}

/// In-place unnormalized Walsh-Hadamard transform over 2n bits.
fn fwht(v: &mut [f64]) {
    let mut h = 1;
    while h < v.len() {
        for i in (0..v.len()).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Swaps the x and z halves of a dense index, turning the bitwise dot product into
/// the symplectic one.
fn swap_halves(idx: usize, n: usize) -> usize {
    let mask = (1usize << n) - 1;
    ((idx & mask) << n) | (idx >> n)
}

/// Error probabilities p_a = 4^-n sum_b f_b (-1)^<a,b> of the channel with fidelities `f`.
pub fn walsh_hadamard(f: &FidelityVector) -> Result<PauliDistribution, PauliError> {
    let n = f.n;
    let mut v = f.dense()?;
    fwht(&mut v);
    let scale = 0.25f64.powi(n as i32);
    let probs = (0..v.len()).map(|i| v[swap_halves(i, n)] * scale).collect();
    Ok(PauliDistribution { n, probs })
}

/// Inverse of [`walsh_hadamard`]: fidelities f_b = sum_a p_a (-1)^<a,b>.
pub fn fidelities_from_distribution(p: &PauliDistribution) -> FidelityVector {
    let n = p.n;
    let mut v = p.probs.clone();
    fwht(&mut v);
    let mut out = FidelityVector::new(n);
    for i in 0..v.len() {
        out.values.insert(PauliString::from_dense_index(n, i), v[swap_halves(i, n)]);
    }
    out
}
