//! Clifford layers made of parallel CZ gates and single-qubit Cliffords.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{Pauli, PauliError, PauliString};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CliffordError {
    #[error(transparent)]
    Pauli(#[from] PauliError),
    #[error("unknown single-qubit Clifford {0:?}")]
    UnknownGate(String),
    #[error("qubit {0} is used by more than one CZ in layer {1}")]
    OverlappingGates(usize, String),
    #[error("CZ on ({0},{0}) is not a two-qubit gate")]
    SelfLoop(usize),
    #[error("qubit {qubit} out of range for {n}-qubit layer")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("layer {0} carries single-qubit gates; chain analysis needs CZ-only layers")]
    NotCzOnly(String),
}

type Image = (Pauli, bool);

struct CliffordTable {
    // images of X, Y, Z
    images: Vec<[Image; 3]>,
    names: Vec<Option<&'static str>>,
    index: HashMap<(Image, Image), u8>,
}

const CATALOG: [(&str, Image, Image); 9] = [
    ("I", (Pauli::X, false), (Pauli::Z, false)),
    ("S", (Pauli::Y, false), (Pauli::Z, false)),
    ("Sdg", (Pauli::Y, true), (Pauli::Z, false)),
    ("SX", (Pauli::X, false), (Pauli::Y, true)),
    ("SXdg", (Pauli::X, false), (Pauli::Y, false)),
    ("H", (Pauli::Z, false), (Pauli::X, false)),
    ("X", (Pauli::X, false), (Pauli::Z, true)),
    ("Y", (Pauli::X, true), (Pauli::Z, true)),
    ("Z", (Pauli::X, true), (Pauli::Z, false)),
];

fn y_image(ix: Image, iz: Image) -> Image {
    // Y = i X Z, so g(Y) = i g(X) g(Z)
    let a = PauliString::from_paulis(&[ix.0]).with_sign(ix.1);
    let b = PauliString::from_paulis(&[iz.0]).with_sign(iz.1);
    let (prod, imag) = a.multiply(&b).expect("single-qubit");
    debug_assert!(imag, "images of X and Z must anticommute");
    // i * (±i) = ∓1
    (prod.get(0), !prod.is_negative())
}

fn apply_image(images: &[Image; 3], p: Image) -> Image {
    match p.0 {
        Pauli::I => (Pauli::I, p.1),
        Pauli::X => (images[0].0, images[0].1 ^ p.1),
        Pauli::Y => (images[1].0, images[1].1 ^ p.1),
        Pauli::Z => (images[2].0, images[2].1 ^ p.1),
    }
}

fn table() -> &'static CliffordTable {
    static TABLE: OnceLock<CliffordTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let full = |ix: Image, iz: Image| [ix, y_image(ix, iz), iz];
        let gens = [full(CATALOG[5].1, CATALOG[5].2), full(CATALOG[1].1, CATALOG[1].2)];
        let mut images = Vec::new();
        let mut index = HashMap::new();
        let mut queue = VecDeque::new();
        let id = full(CATALOG[0].1, CATALOG[0].2);
        index.insert((id[0], id[2]), 0u8);
        images.push(id);
        queue.push_back(id);
        while let Some(g) = queue.pop_front() {
            for h in &gens {
                let ix = apply_image(h, g[0]);
                let iz = apply_image(h, g[2]);
                if let std::collections::hash_map::Entry::Vacant(e) = index.entry((ix, iz)) {
                    e.insert(images.len() as u8);
                    let el = full(ix, iz);
                    images.push(el);
                    queue.push_back(el);
                }
            }
        }
        let mut names = vec![None; images.len()];
        for (name, ix, iz) in CATALOG {
            names[index[&(ix, iz)] as usize] = Some(name);
        }
        CliffordTable { images, names, index }
    })
}

/// Element of the 24-element single-qubit Clifford group (modulo phase).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SingleQubitClifford(u8);

impl SingleQubitClifford {
    pub const GROUP_ORDER: usize = 24;

    pub fn identity() -> Self {
        SingleQubitClifford(0)
    }

    pub fn named(name: &str) -> Result<Self, CliffordError> {
        let canonical = match name {
            "S†" | "Sdag" => "Sdg",
            "√X" | "sqrtX" => "SX",
            "√X†" | "sqrtXdg" | "SX†" => "SXdg",
            other => other,
        };
        let t = table();
        CATALOG
            .iter()
            .find(|c| c.0 == canonical)
            .map(|(_, ix, iz)| SingleQubitClifford(t.index[&(*ix, *iz)]))
            .ok_or_else(|| CliffordError::UnknownGate(name.to_string()))
    }

    pub fn s() -> Self {
        Self::named("S").expect("catalog")
    }

    /// Group element by index in `0..24`.
    pub fn from_index(i: usize) -> Self {
        assert!(i < Self::GROUP_ORDER);
        SingleQubitClifford(i as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = SingleQubitClifford> {
        (0..table().images.len()).map(|i| SingleQubitClifford(i as u8))
    }

    /// Catalog name, or `C<k>` for group elements outside the catalog.
    pub fn name(self) -> String {
        match table().names[self.0 as usize] {
            Some(n) => n.to_string(),
            None => format!("C{}", self.0),
        }
    }

    pub fn is_identity(self) -> bool {
        self.0 == 0
    }

    /// Signed image of a single-qubit Pauli (`negative` is the image sign).
    pub fn image(self, p: Pauli) -> (Pauli, bool) {
        apply_image(&table().images[self.0 as usize], (p, false))
    }

    pub fn inverse(self) -> SingleQubitClifford {
        SingleQubitClifford::all().find(|h| self.then(*h).is_identity()).expect("group element has an inverse")
    }

    /// `then ∘ self`: apply `self` first.
    pub fn then(self, then: SingleQubitClifford) -> SingleQubitClifford {
        let t = table();
        let g = &t.images[self.0 as usize];
        let h = &t.images[then.0 as usize];
        let key = (apply_image(h, g[0]), apply_image(h, g[2]));
        SingleQubitClifford(t.index[&key])
    }
}

impl fmt::Display for SingleQubitClifford {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl FromStr for SingleQubitClifford {
    type Err = CliffordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(k) = s.strip_prefix('C').and_then(|r| r.parse::<usize>().ok()) {
            if k < Self::GROUP_ORDER {
                return Ok(SingleQubitClifford(k as u8));
            }
        }
        Self::named(s)
    }
}

/// A layer of parallel CZ gates followed by single-qubit Cliffords.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliffordLayer {
    label: String,
    n: usize,
    cz: Vec<(usize, usize)>,
    sq: BTreeMap<usize, SingleQubitClifford>,
    partner: Vec<Option<usize>>,
}

impl CliffordLayer {
    pub fn new(
        label: impl Into<String>,
        n: usize,
        cz: &[(usize, usize)],
        sq: BTreeMap<usize, SingleQubitClifford>,
    ) -> Result<Self, CliffordError> {
        let label = label.into();
        let mut partner = vec![None; n];
        let mut pairs = Vec::with_capacity(cz.len());
        for &(a, b) in cz {
            if a == b {
                return Err(CliffordError::SelfLoop(a));
            }
            for q in [a, b] {
                if q >= n {
                    return Err(CliffordError::QubitOutOfRange { qubit: q, n });
                }
                if partner[q].is_some() {
                    return Err(CliffordError::OverlappingGates(q, label));
                }
            }
            partner[a] = Some(b);
            partner[b] = Some(a);
            pairs.push((a.min(b), a.max(b)));
        }
        pairs.sort_unstable();
        if let Some(&q) = sq.keys().find(|&&q| q >= n) {
            return Err(CliffordError::QubitOutOfRange { qubit: q, n });
        }
        let sq = sq.into_iter().filter(|(_, g)| !g.is_identity()).collect();
        Ok(CliffordLayer { label, n, cz: pairs, sq, partner })
    }

    pub fn cz_only(label: impl Into<String>, n: usize, cz: &[(usize, usize)]) -> Result<Self, CliffordError> {
        Self::new(label, n, cz, BTreeMap::new())
    }

    pub fn identity(label: impl Into<String>, n: usize) -> Self {
        Self::cz_only(label, n, &[]).expect("empty layer")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn cz_pairs(&self) -> &[(usize, usize)] {
        &self.cz
    }

    pub fn sq_gates(&self) -> &BTreeMap<usize, SingleQubitClifford> {
        &self.sq
    }

    pub fn is_cz_only(&self) -> bool {
        self.sq.is_empty()
    }

    pub fn partner(&self, q: usize) -> Option<usize> {
        self.partner.get(q).copied().flatten()
    }

    /// Qubits acted on by a CZ, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&q| self.partner[q].is_some()).collect()
    }

    pub fn in_support(&self, q: usize) -> bool {
        self.partner(q).is_some()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Same layer followed by an S gate on every CZ qubit. The label is kept, since the
    /// extra gates are recompiled into the twirl and carry no noise of their own.
    pub fn s_dressed(&self) -> CliffordLayer {
        let mut out = self.clone();
        let s = SingleQubitClifford::s();
        for q in self.support() {
            let g = out.sq.get(&q).copied().unwrap_or_else(SingleQubitClifford::identity);
            let composed = g.then(s);
            if composed.is_identity() {
                out.sq.remove(&q);
            } else {
                out.sq.insert(q, composed);
            }
        }
        out
    }

    /// Composes a single-qubit layer after this one.
    pub fn then_single_qubit(&self, gates: &[(usize, SingleQubitClifford)]) -> CliffordLayer {
        let mut out = self.clone();
        for &(q, g2) in gates {
            let g = out.sq.get(&q).copied().unwrap_or_else(SingleQubitClifford::identity);
            let c = g.then(g2);
            if c.is_identity() {
                out.sq.remove(&q);
            } else {
                out.sq.insert(q, c);
            }
        }
        out
    }

    /// Conjugates in place without a dimension check.
    pub fn conjugate_in_place(&self, p: &mut PauliString) {
        let mut negative = p.is_negative();
        for &(a, b) in &self.cz {
            let (xa, za) = (p.x_bit(a), p.z_bit(a));
            let (xb, zb) = (p.x_bit(b), p.z_bit(b));
            if xa && xb && (za ^ zb) {
                negative = !negative;
            }
            if xb {
                p.flip_z(a);
            }
            if xa {
                p.flip_z(b);
            }
        }
        for (&q, g) in &self.sq {
            let op = p.get(q);
            if op != Pauli::I {
                let (img, neg) = g.image(op);
                p.set_unchecked(q, img);
                negative ^= neg;
            }
        }
        p.set_negative(negative);
    }

    /// U† P U in place: undoes [`Self::conjugate_in_place`].
    pub fn conjugate_inverse_in_place(&self, p: &mut PauliString) {
        let mut negative = p.is_negative();
        for (&q, g) in &self.sq {
            let op = p.get(q);
            if op != Pauli::I {
                let (img, neg) = g.inverse().image(op);
                p.set_unchecked(q, img);
                negative ^= neg;
            }
        }
        p.set_negative(negative);
        CliffordLayer { sq: BTreeMap::new(), ..self.clone() }.conjugate_in_place(p);
    }

    /// U P U† as a signed string.
    pub fn conjugate(&self, p: &PauliString) -> Result<PauliString, CliffordError> {
        if p.num_qubits() != self.n {
            return Err(PauliError::DimensionMismatch(self.n, p.num_qubits()).into());
        }
        let mut out = p.clone();
        self.conjugate_in_place(&mut out);
        Ok(out)
    }

    pub fn to_spec(&self) -> LayerSpec {
        LayerSpec {
            label: self.label.clone(),
            n: self.n,
            cz: self.cz.iter().map(|&(a, b)| [a, b]).collect(),
            sq: self.sq.iter().map(|(q, g)| (q.to_string(), g.name())).collect(),
        }
    }
}

/// Serializable layer description.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub label: String,
    pub n: usize,
    #[serde(default)]
    pub cz: Vec<[usize; 2]>,
    #[serde(default)]
    pub sq: BTreeMap<String, String>,
}

impl LayerSpec {
    pub fn build(&self) -> Result<CliffordLayer, CliffordError> {
        let cz: Vec<(usize, usize)> = self.cz.iter().map(|p| (p[0], p[1])).collect();
        let mut sq = BTreeMap::new();
        for (q, g) in &self.sq {
            let qi: usize = q.parse().map_err(|_| CliffordError::UnknownGate(format!("qubit key {q:?}")))?;
            sq.insert(qi, g.parse()?);
        }
        CliffordLayer::new(self.label.clone(), self.n, &cz, sq)
    }
}

impl Serialize for CliffordLayer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CliffordLayer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        LayerSpec::deserialize(d)?.build().map_err(serde::de::Error::custom)
    }
}

const ORBIT_GUARD: usize = 1 << 16;

/// Unsigned strings reached by repeated conjugation, in visit order. With a dressing,
/// each step applies `layer` and then `dressing`.
pub fn orbit(layer: &CliffordLayer, p: &PauliString, dressing: Option<&CliffordLayer>) -> Vec<PauliString> {
    let start = p.unsigned();
    let mut out = vec![start.clone()];
    let mut cur = start.clone();
    for _ in 0..ORBIT_GUARD {
        layer.conjugate_in_place(&mut cur);
        if let Some(d) = dressing {
            d.conjugate_in_place(&mut cur);
        }
        let u = cur.unsigned();
        if u == start {
            break;
        }
        out.push(u);
    }
    out
}

/// Conjugation by the first `m` layers of the cyclic sequence `layers[0], layers[1], ...`.
pub fn alternating_conjugation(layers: &[CliffordLayer], p: &PauliString, m: usize) -> Result<PauliString, CliffordError> {
    let mut cur = p.clone();
    if layers.is_empty() {
        return Ok(cur);
    }
    for l in layers {
        if l.num_qubits() != p.num_qubits() {
            return Err(PauliError::DimensionMismatch(l.num_qubits(), p.num_qubits()).into());
        }
    }
    for k in 0..m {
        layers[k % layers.len()].conjugate_in_place(&mut cur);
    }
    Ok(cur)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Open,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainEdge {
    pub pair: (usize, usize),
    pub label: String,
}

/// Connected component of the two-colour gate graph of a layer pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    /// Qubits in path order.
    pub qubits: Vec<usize>,
    /// Edges in path order; `edges[i]` joins `qubits[i]` and `qubits[i+1]` (cyclically for
    /// closed chains).
    pub edges: Vec<ChainEdge>,
    pub kind: ChainKind,
    /// Labels of the two layers in the order they were given.
    pub layers: (String, String),
}

impl Chain {
    /// Qubits touched by both layers, in path order.
    pub fn bulk(&self) -> Vec<usize> {
        self.qubits
            .iter()
            .copied()
            .filter(|&q| {
                let labels: Vec<&str> = self
                    .edges
                    .iter()
                    .filter(|e| e.pair.0 == q || e.pair.1 == q)
                    .map(|e| e.label.as_str())
                    .collect();
                labels.contains(&self.layers.0.as_str()) && labels.contains(&self.layers.1.as_str())
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    /// Partner of `q` along the edge with the given label.
    pub fn partner(&self, q: usize, label: &str) -> Option<usize> {
        self.edges.iter().find_map(|e| {
            if e.label != label {
                None
            } else if e.pair.0 == q {
                Some(e.pair.1)
            } else if e.pair.1 == q {
                Some(e.pair.0)
            } else {
                None
            }
        })
    }
}

/// Splits the union of two CZ layers into alternating open and closed chains.
pub fn chain_decomposition(a: &CliffordLayer, b: &CliffordLayer) -> Result<Vec<Chain>, CliffordError> {
    if a.n != b.n {
        return Err(PauliError::DimensionMismatch(a.n, b.n).into());
    }
    for l in [a, b] {
        if !l.is_cz_only() {
            return Err(CliffordError::NotCzOnly(l.label.clone()));
        }
    }
    let layers = (a.label.clone(), b.label.clone());
    let mut seen = vec![false; a.n];
    let mut chains = Vec::new();
    let step = |q: usize, use_a: bool| if use_a { a.partner(q) } else { b.partner(q) };
    let edge = |p: usize, q: usize, use_a: bool| ChainEdge {
        pair: (p.min(q), p.max(q)),
        label: if use_a { a.label.clone() } else { b.label.clone() },
    };

    // open chains start from endpoints so that every path is walked from one end
    for q0 in 0..a.n {
        if seen[q0] {
            continue;
        }
        let ends = (a.partner(q0).is_some(), b.partner(q0).is_some());
        if ends.0 == ends.1 {
            continue;
        }
        let mut use_a = ends.0;
        let mut qubits = vec![q0];
        let mut edges = Vec::new();
        seen[q0] = true;
        let mut cur = q0;
        while let Some(nxt) = step(cur, use_a) {
            edges.push(edge(cur, nxt, use_a));
            qubits.push(nxt);
            seen[nxt] = true;
            cur = nxt;
            use_a = !use_a;
        }
        chains.push(Chain { qubits, edges, kind: ChainKind::Open, layers: layers.clone() });
    }

    for q0 in 0..a.n {
        if seen[q0] || a.partner(q0).is_none() {
            continue;
        }
        let mut qubits = vec![q0];
        let mut edges = Vec::new();
        seen[q0] = true;
        let mut cur = q0;
        let mut use_a = true;
        loop {
            let nxt = step(cur, use_a).expect("closed chains have both partners");
            edges.push(edge(cur, nxt, use_a));
            use_a = !use_a;
            if nxt == q0 {
                break;
            }
            qubits.push(nxt);
            seen[nxt] = true;
            cur = nxt;
        }
        chains.push(Chain { qubits, edges, kind: ChainKind::Closed, layers: layers.clone() });
    }
    chains.sort_by_key(|c| c.qubits.iter().copied().min());
    Ok(chains)
}
