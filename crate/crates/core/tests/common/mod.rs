//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use mlcb::clifford::CliffordLayer;
use mlcb::learnability::{orbit_learnables, ColumnSpace, Equivalence, EquivalenceCertificate, FidelityFunction, LearnableSpace};
use mlcb::pauli::{ps, PauliString};
use mlcb::spl::{model_set, random_model, GeneratorSet, ModelSet, RandomModelParams, SplModel, Topology};
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

pub fn gens(t: &Topology) -> Arc<GeneratorSet> {
    Arc::new(GeneratorSet::new(t, 2).unwrap())
}

pub fn cz(label: &str, n: usize, pairs: &[(usize, usize)]) -> CliffordLayer {
    CliffordLayer::cz_only(label, n, pairs).unwrap()
}

/// "AB CD" -> log(f_AB f_CD)
pub fn prod(layer: &str, s: &str) -> FidelityFunction {
    FidelityFunction::product(layer, &s.split_whitespace().map(ps).collect::<Vec<_>>())
}

pub fn line_with(n: usize, extra: &[(usize, usize)]) -> Topology {
    let mut e: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    e.extend_from_slice(extra);
    Topology::new("fixture", n, &e).unwrap()
}

pub fn square4() -> Topology {
    Topology::new("square", 4, &[(0, 1), (2, 3), (0, 2), (1, 3)]).unwrap()
}

/// Models with every rate independently uniform in [0, 0.01).
pub fn uniform_models(labels: &[&str], g: &Arc<GeneratorSet>, seed: u64) -> ModelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model_set(labels.iter().map(|l| {
        let lam: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(0.0..0.01)).collect();
        SplModel::new(*l, g.clone(), lam).unwrap()
    }))
}

pub fn random_models(layers: &[CliffordLayer], g: &Arc<GeneratorSet>, seed: u64) -> ModelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model_set(layers.iter().map(|l| random_model(g, l, &RandomModelParams::default(), &mut rng).unwrap()))
}

/// One reference single-layer certificate row.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub layer: &'static str,
    pub f1: &'static str,
    pub f2: &'static str,
    pub eps: Rational64,
    pub sigma: Vec<Rational64>,
    pub basis: Vec<&'static str>,
}

impl Fixture {
    pub fn certificate(&self) -> EquivalenceCertificate {
        EquivalenceCertificate {
            f1: prod(self.layer, self.f1),
            f2: prod(self.layer, self.f2),
            epsilon: self.eps,
            sigma: self.sigma.clone(),
            learnable_basis: self.basis.iter().map(|b| prod(self.layer, b)).collect(),
        }
    }
}

fn q(v: &[f64]) -> Vec<Rational64> {
    v.iter().map(|x| Rational64::new((x * 4.0).round() as i64, 4)).collect()
}

pub struct TableCase {
    pub name: String,
    pub topology: Topology,
    pub layer: CliffordLayer,
    pub fixture: Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureCheck {
    pub exact: bool,
    pub basis_learnable: bool,
    pub equivalent: bool,
    pub max_residual: f64,
}

impl FixtureCheck {
    pub fn ok(&self, tol: f64) -> bool {
        self.exact && self.basis_learnable && self.equivalent && self.max_residual < tol
    }
}

/// Symbolic identity, learnability of the basis and the numerical residual on `models` random models.
pub fn check_case(case: &TableCase, models: u64) -> FixtureCheck {
    let g = gens(&case.topology);
    let c = case.fixture.certificate();
    let space = LearnableSpace::new(ColumnSpace::global(&g, &[case.fixture.layer]), orbit_learnables(&case.layer, &g)).unwrap();
    let basis_learnable = c.learnable_basis.iter().all(|f| space.is_learnable(f).unwrap());
    let equivalent = space.equivalence(&c.f1, &c.f2).unwrap() == Equivalence::Equivalent;
    let max_residual = (0..models).map(|s| c.residual(&uniform_models(&[case.fixture.layer], &g, s)).unwrap()).fold(0.0, f64::max);
    FixtureCheck { exact: c.verify_exact(&g).unwrap(), basis_learnable, equivalent, max_residual }
}

fn four_open() -> Vec<(Fixture, Fixture)> {
    vec![
        (
            Fixture { layer: "B", f1: "XIII", f2: "XIXI XIXZ", eps: r(1, 2), sigma: q(&[-0.5]), basis: vec!["IIXZ IIXI"] },
            Fixture {
                layer: "G",
                f1: "IIXI",
                f2: "XZXZ XZXI",
                eps: r(-1, 2),
                sigma: q(&[0.5, -0.5, 0.25, 0.75]),
                basis: vec!["XZII XZII", "IZII IZII", "IIXZ IZXZ", "IZXI IIXI"],
            },
        ),
        (
            Fixture {
                layer: "B",
                f1: "XIII",
                f2: "XIXI XIXZ",
                eps: r(1, 2),
                sigma: q(&[0.25, -0.5, 0.25, -0.25]),
                basis: vec!["IIIZ IIIZ", "IIXZ IIXI", "XZII XIII", "XIIZ XZIZ"],
            },
            Fixture {
                layer: "G",
                f1: "IIXI",
                f2: "XZXZ XZXI",
                eps: r(-1, 2),
                sigma: q(&[-0.5, 0.25, 0.75, -0.25, 0.5, -0.25, 0.25]),
                basis: vec![
                    "IZII IZII",
                    "IIXZ IZXZ",
                    "IIXI IZXI",
                    "IIIZ IIIZ",
                    "XZII XZII",
                    "XIII XIII",
                    "XIIZ XIIZ",
                ],
            },
        ),
    ]
}

/// Green-blue-green rows with the green target corrected to this layer ordering.
pub fn four_open_green_first() -> Vec<(Fixture, Fixture)> {
    vec![
        (
            Fixture {
                layer: "B",
                f1: "IXII",
                f2: "IXIX ZXIX",
                eps: r(1, 2),
                sigma: q(&[-0.25, 0.25, -0.5]),
                basis: vec!["ZXII ZXZI", "IXZI IXII", "IIIX IIIX"],
            },
            Fixture {
                layer: "G",
                f1: "IIIX",
                f2: "IXZX ZXZX",
                eps: r(-1, 2),
                sigma: q(&[-0.5, 0.5, 1.0]),
                basis: vec!["IIZI IIZI", "IXZI ZXZI", "IIZX IIIX"],
            },
        ),
        (
            Fixture {
                layer: "B",
                f1: "IXII",
                f2: "IXIX ZXIX",
                eps: r(1, 2),
                sigma: q(&[0.25, -0.25, -0.25, 0.25, -0.25]),
                basis: vec!["ZIII ZIII", "IIIX IIIX", "ZXII ZXZI", "IXZI IXII", "ZIIX ZIIX"],
            },
            Fixture {
                layer: "G",
                f1: "IIIX",
                f2: "IXZX ZXZX",
                eps: r(-1, 2),
                sigma: q(&[-0.25, 0.25, 0.5, -0.5, 0.75]),
                basis: vec!["ZIII ZIII", "ZIIX ZIZX", "IXZI ZXZI", "IIZI IIZI", "IIZX IIIX"],
            },
        ),
    ]
}

fn five_open() -> Vec<(Fixture, Fixture)> {
    let fb = |sigma: &[f64], basis: Vec<&'static str>| Fixture {
        layer: "B",
        f1: "IXIII",
        f2: "IXIXI ZXIXZ",
        eps: r(1, 2),
        sigma: q(sigma),
        basis,
    };
    let fg = |sigma: &[f64], basis: Vec<&'static str>| Fixture {
        layer: "G",
        f1: "IIIXI",
        f2: "IXZXZ ZXZXI",
        eps: r(-1, 2),
        sigma: q(sigma),
        basis,
    };
    vec![
        (
            fb(&[-0.25, 0.25, -0.5], vec!["ZXIII ZXZII", "IXIII IXZII", "IIIXI IIIXZ"]),
            fg(&[-0.5, 0.75, 0.25, 0.5], vec!["IIZII IIZII", "IIZXI IIIXI", "IIIXZ IIZXZ", "IXZII ZXZII"]),
        ),
        (
            fb(
                &[0.25, -0.25, -0.25, 0.25, -0.25],
                vec!["IXZII IXIII", "ZIIXI ZIIXZ", "ZXIII ZXZII", "ZIIII ZIIII", "IIIXZ IIIXI"],
            ),
            fg(
                &[0.25, 0.25, -0.5, 0.5, -0.25, 0.5],
                vec!["IIIXZ IIZXZ", "ZIIXI ZIZXI", "IIZII IIZII", "IXZII ZXZII", "ZIIII ZIIII", "IIIXI IIZXI"],
            ),
        ),
        (
            fb(
                &[0.5, -0.5, -0.25, -0.25, 0.25],
                vec!["IXZII IXIII", "IIIXI IIIXZ", "IXIIZ IXZIZ", "ZXIII ZXZII", "IIIIZ IIIIZ"],
            ),
            fg(
                &[0.25, 0.5, -0.25, 0.25, 0.75, -0.25, -0.5],
                vec![
                    "IXIIZ ZXIIZ",
                    "IXZII ZXZII",
                    "ZXIII IXIII",
                    "IIIXZ IIZXZ",
                    "IIIXI IIZXI",
                    "IIIIZ IIIIZ",
                    "IIZII IIZII",
                ],
            ),
        ),
    ]
}

fn four_closed() -> (Fixture, Fixture) {
    let fb = Fixture {
        layer: "B",
        f1: "IXII",
        f2: "IXXX IYYX",
        eps: r(1, 2),
        sigma: q(&[0.25, -0.5, -0.25, -0.25, -0.25, -0.25, -0.25, 0.5, 0.25, 0.25, 0.5, -0.25]),
        basis: vec![
            "IIXY IIXY",
            "IIXY IIYX",
            "IXIX ZXZX",
            "ZIII ZIII",
            "IIXX IIXX",
            "IYIX ZYZX",
            "IIZI IIZI",
            "IIZX IIIX",
            "ZIZI ZIZI",
            "IXII ZXII",
            "IXII ZYII",
            "ZYII IYII",
        ],
    };
    let fg = Fixture {
        layer: "G",
        f1: "IIXI",
        f2: "ZXYY ZYXY",
        eps: r(-1, 2),
        sigma: q(&[
            -0.25, 0.25, 0.25, -0.25, 0.25, 0.25, 0.5, -0.25, -0.25, 0.25, 0.5, -0.25, 0.25, -0.5, -0.25, 0.25,
        ]),
        basis: vec![
            "ZZII ZZII",
            "IXIY IXIY",
            "IIXY ZZXY",
            "IIYI ZIYI",
            "ZXII ZXIZ",
            "ZYII ZYIZ",
            "IXIX IYIY",
            "IXIZ IXII",
            "ZIII ZIII",
            "IZII IZII",
            "IIXI ZIYI",
            "IXIX IXIX",
            "ZIXI IIXI",
            "IIIY IZIY",
            "IYII IYIZ",
            "IIYY ZZYY",
        ],
    };
    (fb, fg)
}

fn push_pairs(out: &mut Vec<TableCase>, name: &str, rows: Vec<(Fixture, Fixture)>, topologies: &[Topology], b: &CliffordLayer, g: &CliffordLayer) {
    for (i, ((fb, fg), t)) in rows.into_iter().zip(topologies).enumerate() {
        out.push(TableCase { name: format!("{name} row {} blue", i + 1), topology: t.clone(), layer: b.clone(), fixture: fb });
        out.push(TableCase { name: format!("{name} row {} green", i + 1), topology: t.clone(), layer: g.clone(), fixture: fg });
    }
}

/// Every reference (Σ, F) row, each paired with the layer and topology it refers to.
pub fn table_cases() -> Vec<TableCase> {
    let mut out = Vec::new();
    let t4 = [line_with(4, &[]), line_with(4, &[(0, 3)])];
    push_pairs(&mut out, "4-qubit open BGB", four_open(), &t4, &cz("B", 4, &[(0, 1), (2, 3)]), &cz("G", 4, &[(1, 2)]));
    push_pairs(&mut out, "4-qubit open GBG", four_open_green_first(), &t4, &cz("B", 4, &[(1, 2)]), &cz("G", 4, &[(0, 1), (2, 3)]));
    let t5 = [line_with(5, &[]), line_with(5, &[(0, 3)]), line_with(5, &[(1, 4)])];
    push_pairs(&mut out, "5-qubit open", five_open(), &t5, &cz("B", 5, &[(1, 2), (3, 4)]), &cz("G", 5, &[(0, 1), (2, 3)]));
    let (fb, fg) = four_closed();
    push_pairs(&mut out, "4-qubit closed", vec![(fb, fg)], &[square4()], &cz("B", 4, &[(0, 1), (2, 3)]), &cz("G", 4, &[(0, 2), (1, 3)]));
    out
}

pub fn closed_chain_learnable_count() -> usize {
    let (fb, fg) = four_closed();
    fb.basis.len() + fg.basis.len()
}

/// Layer pair, ratio qubit and expected default preparation for each chain type.
pub struct ChainCase {
    pub name: &'static str,
    /// Name the planner gives the measured product.
    pub target: &'static str,
    pub topology: Topology,
    pub first: CliffordLayer,
    pub second: CliffordLayer,
    pub qubit: usize,
    pub prep: PauliString,
}

pub fn chain_cases() -> Vec<ChainCase> {
    let c = |name: &'static str, topology, first, second, qubit, prep: &str| ChainCase {
        name,
        target: if name == "o'_4" { "o_4" } else { name },
        topology,
        first,
        second,
        qubit,
        prep: ps(prep),
    };
    vec![
        c("o_3", Topology::line(3), cz("B", 3, &[(0, 1)]), cz("G", 3, &[(1, 2)]), 1, "XIX"),
        c("o_4", Topology::line(4), cz("B", 4, &[(0, 1), (2, 3)]), cz("G", 4, &[(1, 2)]), 1, "XIXI"),
        c("o'_4", Topology::line(4), cz("B", 4, &[(1, 2)]), cz("G", 4, &[(0, 1), (2, 3)]), 2, "IXIX"),
        c("o_5", Topology::line(5), cz("B", 5, &[(1, 2), (3, 4)]), cz("G", 5, &[(0, 1), (2, 3)]), 2, "IXIXI"),
        c("c_2", Topology::line(2), cz("B", 2, &[(0, 1)]), cz("G", 2, &[(0, 1)]), 0, "IX"),
        c("c'_2", Topology::line(2), cz("B", 2, &[(0, 1)]), cz("G", 2, &[(0, 1)]), 1, "XI"),
        c("c_4", square4(), cz("B", 4, &[(0, 1), (2, 3)]), cz("G", 4, &[(0, 2), (1, 3)]), 0, "IXXX"),
    ]
}
