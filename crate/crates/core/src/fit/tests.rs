use super::*;
use crate::experiment::{characterize, LowBaseline};
use crate::learnability::{layer_orbits, plan_mlcb};
use crate::pauli::ps;
use crate::seed::rng_from_seed;
use crate::spl::{model_set, random_model, RandomModelParams, Topology};
use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::Rng;

fn dense_lstsq(a: &[Vec<f64>], b: &[f64], cols: &[usize]) -> Option<Vec<f64>> {
    // normal equations with Gaussian elimination on the chosen columns
    let p = cols.len();
    let mut m = vec![vec![0.0; p + 1]; p];
    for (row, &bv) in a.iter().zip(b) {
        for i in 0..p {
            for j in 0..p {
                m[i][j] += row[cols[i]] * row[cols[j]];
            }
            m[i][p] += row[cols[i]] * bv;
        }
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))?;
        if m[piv][c].abs() < 1e-12 {
            return None;
        }
        m.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..=p {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    Some((0..p).map(|i| m[i][p] / m[i][i]).collect())
}

fn objective(a: &[Vec<f64>], b: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(b).map(|(r, bv)| (r.iter().zip(x).map(|(u, v)| u * v).sum::<f64>() - bv).powi(2)).sum()
}

/// Best feasible point over all passive sets.
fn enumerate_nnls(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = a[0].len();
    let mut best = (objective(a, b, &vec![0.0; n]), vec![0.0; n]);
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        if let Some(z) = dense_lstsq(a, b, &cols) {
            if z.iter().all(|&v| v >= 0.0) {
                let mut x = vec![0.0; n];
                for (&c, v) in cols.iter().zip(z) {
                    x[c] = v;
                }
                let o = objective(a, b, &x);
                if o < best.0 {
                    best = (o, x);
                }
            }
        }
    }
    best.1
}

fn random_system(seed: u64, rows: usize, cols: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    let a = (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let b = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (a, b)
}

#[test]
fn two_generator_toy_matches_enumeration() {
    // second fidelity overestimated above one: its row pulls the rate negative
    let a = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]];
    let b = vec![-(0.99f64.ln()) / 2.0, -(0.985f64.ln()) / 2.0, -(1.01f64.ln()) / 2.0];
    let sol = nnls(&a, &b, None).unwrap();
    let want = enumerate_nnls(&a, &b);
    assert_eq!(sol.x[1], 0.0);
    for (u, v) in sol.x.iter().zip(&want) {
        assert!((u - v).abs() < 1e-14, "{:?} {:?}", sol.x, want);
    }
}

#[test]
fn zero_rhs_gives_zero() {
    let (a, _) = random_system(1, 6, 4);
    let sol = nnls(&a, &[0.0; 6], None).unwrap();
    assert!(sol.x.iter().all(|&v| v == 0.0));
}

#[test]
fn kkt_on_random_systems() {
    let mut worst = 0.0f64;
    for s in 0..1000u64 {
        let rows = 3 + (s % 6) as usize;
        let cols = 1 + (s % 5) as usize;
        let (a, b) = random_system(s, rows.max(cols), cols);
        let sol = nnls(&a, &b, None).unwrap();
        let mut gram = vec![0.0; cols * cols];
        let mut h = vec![0.0; cols];
        for (r, bv) in a.iter().zip(&b) {
            for i in 0..cols {
                h[i] += r[i] * bv;
                for j in 0..cols {
                    gram[i * cols + j] += r[i] * r[j];
                }
            }
        }
        worst = worst.max(kkt_residual(&gram, &h, &sol.x));
    }
    assert!(worst < 1e-10, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn nnls_matches_enumeration(seed in 0u64..100_000, rows in 2usize..8, cols in 1usize..6) {
        let (a, b) = random_system(seed, rows.max(cols), cols);
        let sol = nnls(&a, &b, None).unwrap();
        let want = enumerate_nnls(&a, &b);
        let (o1, o2) = (objective(&a, &b, &sol.x), objective(&a, &b, &want));
        prop_assert!(o1 <= o2 + 1e-12 * (1.0 + o2), "{} {}", o1, o2);
        prop_assert!(sol.x.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn nnls_beats_clamped_least_squares(seed in 0u64..100_000, rows in 4usize..10, cols in 1usize..5) {
        let (a, b) = random_system(seed, rows, cols);
        let all: Vec<usize> = (0..cols).collect();
        if let Some(z) = dense_lstsq(&a, &b, &all) {
            let clamped: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            let sol = nnls(&a, &b, None).unwrap();
            prop_assert!(objective(&a, &b, &sol.x) <= objective(&a, &b, &clamped) + 1e-12);
        }
    }
}

fn single_cz() -> (Arc<GeneratorSet>, CliffordLayer) {
    let g = Arc::new(GeneratorSet::new(&Topology::line(2), 2).unwrap());
    (g, CliffordLayer::cz_only("B", 2, &[(0, 1)]).unwrap())
}

fn exact_record(models: &ModelSet, targets: Vec<(String, PauliString)>, acc: Accuracy) -> FidelityRecord {
    let v: f64 = targets.iter().map(|(l, p)| models[l].log_fidelity(p)).sum::<f64>().exp();
    FidelityRecord { targets, estimate: v, sigma: 0.0, accuracy: acc, source: "exact".into() }
}

#[test]
fn single_cz_rank_examples() {
    let (g, l) = single_cz();
    let mut rng = rng_from_seed(3);
    let m = random_model(&g, &l, &RandomModelParams::default(), &mut rng).unwrap();
    let truth = m.lambdas().to_vec();
    let models = model_set([m]);

    let all: Vec<FidelityRecord> =
        g.strings().iter().map(|p| exact_record(&models, vec![("B".into(), p.clone())], Accuracy::Low)).collect();
    let sys = ConstraintSystem::assemble(&all, &g, &["B"]).unwrap();
    assert_eq!(sys.rows().len(), 15);
    assert_eq!(sys.rank(), 15);
    let fit = sys.nnls(FitMethod::Conventional).unwrap();
    for (a, b) in fit.layers["B"].iter().zip(&truth) {
        assert!((a - b).abs() < 1e-8);
    }

    let learnable: Vec<FidelityRecord> = layer_orbits(&l, &g, None)
        .into_iter()
        .map(|o| exact_record(&models, o.elements.iter().map(|p| ("B".to_string(), p.clone())).collect(), Accuracy::High))
        .collect();
    let sys = ConstraintSystem::assemble(&learnable, &g, &["B"]).unwrap();
    assert_eq!(sys.rank(), 13);
    assert_eq!(sys.unconstrained().len(), 2);
    match sys.nnls(FitMethod::Conventional) {
        Err(FitError::RankDeficient { rank: 13, columns: 15, missing }) => assert_eq!(missing.len(), 2),
        other => panic!("{other:?}"),
    }
}

fn three_qubit() -> (Arc<GeneratorSet>, Vec<CliffordLayer>) {
    let g = Arc::new(GeneratorSet::new(&Topology::line(3), 2).unwrap());
    let layers = vec![
        CliffordLayer::cz_only("B", 3, &[(0, 1)]).unwrap(),
        CliffordLayer::cz_only("G", 3, &[(1, 2)]).unwrap(),
    ];
    (g, layers)
}

fn random_models(g: &Arc<GeneratorSet>, layers: &[CliffordLayer], seed: u64) -> ModelSet {
    let mut rng = rng_from_seed(seed);
    model_set(layers.iter().map(|l| random_model(g, l, &RandomModelParams::default(), &mut rng).unwrap()))
}

#[test]
fn mlcb_record_adds_one_rank() {
    let (g, layers) = three_qubit();
    let plan = plan_mlcb(&layers, &g, 1, 8).unwrap();
    assert_eq!(plan.ratios.len(), 1);
    let models = random_models(&g, &layers, 1);
    let recs = characterize(&models, &layers, &g, Some(&plan), 0.0, LowBaseline::UnitDepth { sigma_prime: 0.0 }, &mut rng_from_seed(0)).unwrap();
    let high = ConstraintSystem::assemble(&recs.high, &g, &["B", "G"]).unwrap();
    let mut with: Vec<FidelityRecord> = recs.high.clone();
    with.extend(recs.mlcb.iter().cloned());
    let plus = ConstraintSystem::assemble(&with, &g, &["B", "G"]).unwrap();
    assert_eq!(plus.rank(), high.rank() + 1);
    assert_eq!(high.columns().len() - high.rank(), 4);
}

#[test]
fn refine_chain_examples() {
    assert_eq!(refine_chain(&[0.97], &[]), vec![0.97]);
    let f = [0.99, 0.985, 0.992];
    let mu = [f[0] / f[1], f[1] / f[2]];
    for (a, b) in refine_chain(&f, &mu).iter().zip(&f) {
        assert!((a - b).abs() < 1e-15);
    }
    // symmetric perturbation averages out for l = 2
    let (f1, f2, d) = (0.99, 0.985, 1e-3);
    let r = refine_chain(&[f1 + d, f2 - d], &[f1 / f2]);
    assert!((r[0] - f1).abs() <= d / 2f64.sqrt());
    // oracle: brute-force minimiser of the squared residues
    let c2 = f2 / f1;
    let s = |u: f64| (f1 + d - u).powi(2) + (f2 - d - u * c2).powi(2);
    let (mut lo, mut hi) = (0.9, 1.1);
    for _ in 0..200 {
        let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        if s(m1) < s(m2) { hi = m2 } else { lo = m1 }
    }
    assert!((r[0] - (lo + hi) / 2.0).abs() < 1e-7);
}

fn fitter(g: &Arc<GeneratorSet>, layers: &[CliffordLayer], recs: &RecordSet, plan: MlcbPlan) -> Fitter {
    Fitter::new(g, layers, plan, recs, RowSigmas { high: 1e-4, low: 1e-3 }).unwrap()
}

#[test]
fn noiseless_pipelines_recover_model() {
    let (g, layers) = three_qubit();
    let plan = plan_mlcb(&layers, &g, 1, 8).unwrap();
    for seed in 0..5 {
        let models = random_models(&g, &layers, seed);
        let recs = characterize(&models, &layers, &g, Some(&plan), 0.0, LowBaseline::UnitDepth { sigma_prime: 0.0 }, &mut rng_from_seed(seed)).unwrap();
        let f = fitter(&g, &layers, &recs, plan.clone());
        let c = f.fit_conventional(&recs).unwrap().models(&g).unwrap();
        let m = f.fit_mlcb(&recs).unwrap().models(&g).unwrap();
        let j = f.fit_joint(&recs).unwrap().models(&g).unwrap();
        assert!(l1_distance(&models, &c).unwrap() < 1e-8);
        assert!(l1_distance(&models, &m).unwrap() < 1e-8);
        assert!(l1_distance(&m, &j).unwrap() < 1e-8);
        let mus = f.mu_estimates(&recs);
        let want = models["B"].fidelity(&ps("XII")) / models["G"].fidelity(&ps("IIX"));
        assert!((mus[&(1, ("B".to_string(), "G".to_string()))] - want).abs() < 1e-12);
    }
}

#[test]
fn symmetry_baseline_examples() {
    let (g, l) = single_cz();
    let sym = |k: &str| ["ZI", "IZ", "ZZ"].contains(&k);
    let lam: Vec<f64> = g.strings().iter().map(|p| if sym(&p.letters()) { 1e-3 } else { 0.0 }).collect();
    let models = model_set([SplModel::new("B", g.clone(), lam).unwrap()]);
    let layers = vec![l.clone()];
    let recs = characterize(&models, &layers, &g, None, 0.0, LowBaseline::Symmetry, &mut rng_from_seed(0)).unwrap();
    let f = fitter(&g, &layers, &recs, MlcbPlan::default());
    let c = f.fit_conventional(&recs).unwrap().models(&g).unwrap();
    assert!(l1_distance(&models, &c).unwrap() < 1e-10);

    // asymmetric: a rate on IX separates f_XI from f_XZ
    let lam: Vec<f64> = g.strings().iter().map(|p| if p.letters() == "IX" { 3e-3 } else { 1e-3 }).collect();
    let models = model_set([SplModel::new("B", g.clone(), lam).unwrap()]);
    let recs = characterize(&models, &layers, &g, None, 0.0, LowBaseline::Symmetry, &mut rng_from_seed(0)).unwrap();
    let c = f.fit_conventional(&recs).unwrap().models(&g).unwrap();
    let d = l1_distance(&models, &c).unwrap();
    assert!(d > 1e-4, "{d} {:?}", c["B"].lambdas());
}

#[test]
fn distance_examples() {
    let (g, l) = single_cz();
    let mut rng = rng_from_seed(9);
    let m = random_model(&g, &l, &RandomModelParams::default(), &mut rng).unwrap();
    let truth = model_set([m.clone()]);
    assert_eq!(l1_distance(&truth, &truth).unwrap(), 0.0);
    let mut lam = m.lambdas().to_vec();
    lam[3] += 1e-4;
    let off = model_set([SplModel::new("B", g.clone(), lam).unwrap()]);
    assert!((l1_distance(&truth, &off).unwrap() - 1e-4).abs() < 1e-15);
    let other = Arc::new(GeneratorSet::new(&Topology::line(2), 1).unwrap());
    let mismatched = model_set([SplModel::zero("B", other)]);
    assert!(matches!(l1_distance(&truth, &mismatched), Err(FitError::OrderingMismatch(_))));
}

#[test]
fn noisy_mlcb_helps_with_unit_depth_baseline() {
    let (g, layers) = three_qubit();
    let plan = plan_mlcb(&layers, &g, 1, 8).unwrap();
    let mut ratios = Vec::new();
    for seed in 0..40 {
        let models = random_models(&g, &layers, 100 + seed);
        let recs = characterize(&models, &layers, &g, Some(&plan), 1e-4, LowBaseline::UnitDepth { sigma_prime: 1e-2 }, &mut rng_from_seed(seed)).unwrap();
        let f = fitter(&g, &layers, &recs, plan.clone());
        let c = f.fit_conventional(&recs).unwrap().models(&g).unwrap();
        let m = f.fit_mlcb(&recs).unwrap().models(&g).unwrap();
        ratios.push(distance_metrics(&models, &c, &m).unwrap().2);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(mean < 1.0, "{mean}");
}
