//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::time::{Duration, Instant};

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use venndec_core::assemblies::{self, AssemblyParams, AssociationGraph};
use venndec_core::decomp::{self, FactorMatrix, EIGEN_TOL};
use venndec_core::echelon::{self, BranchingSpec, SubspaceBasis};
use venndec_core::experiment::{self, ExperimentConfig, GraphSpec, RoundtripConfig, SigmaMinConfig, SoftModelConfig};
use venndec_core::perturb::{derive_seed, PerturbationModel};
use venndec_core::tensor::Tensor;
use venndec_core::venn::SplitMode;

type Criterion = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gaussian_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn sigma_min_of(rows: usize, cols: &[Vec<f64>]) -> f64 {
    let m = DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i]);
    m.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Distance from `x` to the column span of `basis` by least squares, not
/// assuming orthonormality.
fn projection_distance(basis: &[Vec<f64>], x: &[f64]) -> f64 {
    let rows = x.len();
    if basis.is_empty() {
        return x.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let a = DMatrix::from_fn(rows, basis.len(), |i, j| basis[j][i]);
    let b = DVector::from_column_slice(x);
    let coef = a.clone().svd(true, true).solve(&b, 1e-14).expect("svd solve");
    (b - a * coef).norm()
}

fn check_leaves(tree: &venndec_core::EchelonTree64) -> Result<(), String> {
    for (label, t) in tree.leaf_tensors() {
        let inf = t.max_abs();
        let pivot = t.get(label);
        if (inf - 1.0).abs() > 1e-12 || (pivot.abs() - 1.0).abs() > 1e-12 {
            return Err(format!("leaf {label:?}: sup {inf}, pivot {pivot}"));
        }
    }
    Ok(())
}

fn built_trees() -> Vec<venndec_core::EchelonTree64> {
    let spec = BranchingSpec::uniform(0.5, 3);
    (0..20u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(1, i));
            let w = SubspaceBasis::<f64>::random(vec![6, 6, 6], 189, &mut rng).unwrap();
            echelon::build_echelon_tree(&w, &spec).unwrap().0
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let spec = BranchingSpec::uniform(0.5, 3);
    for i in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(1, i));
        let w = SubspaceBasis::<f64>::random(vec![6, 6, 6], 189, &mut rng).unwrap();
        let tree = match echelon::build_echelon_tree(&w, &spec) {
            Ok((t, _)) => t,
            Err(e) => return outcome(false, format!("trial {i}: build failed: {e}")),
        };
        let report = echelon::verify_echelon(&tree, 1e-9);
        if !report.ok {
            return outcome(false, format!("trial {i}: {:?}", report.violations.first()));
        }
        for level in 1..=3 {
            let k = tree.tree().min_children(level);
            if k < 3 {
                return outcome(false, format!("trial {i}: level {level} has a node with {k} children"));
            }
        }
        if let Err(e) = check_leaves(&tree) {
            return outcome(false, format!("trial {i}: {e}"));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        elapsed < Duration::from_secs(30),
        format!("20 trees verified in {:.2} s", elapsed.as_secs_f64()),
    )
}

fn criterion_2() -> Outcome {
    let mut worst_sigma = f64::INFINITY;
    for (i, tree) in built_trees().iter().enumerate() {
        for level in 1..tree.height() {
            let c = echelon::collapse(tree, level).unwrap();
            if !echelon::verify_echelon(&c, 1e-9).ok {
                return outcome(false, format!("tree {i}: collapse at level {level} fails verification"));
            }
        }
        let flat = echelon::collapse_fully(tree).unwrap();
        if flat.height() != 1 || !echelon::verify_echelon(&flat, 1e-9).ok {
            return outcome(false, format!("tree {i}: full collapse fails verification"));
        }
        let vectors: Vec<Vec<f64>> = flat.leaf_tensors().values().map(|t| t.entries().to_vec()).collect();
        worst_sigma = worst_sigma.min(sigma_min_of(216, &vectors));
    }
    outcome(worst_sigma > 1e-8, format!("smallest σ_min of collapsed leaves {worst_sigma:.3e}"))
}

fn criterion_3() -> Outcome {
    let mut exceptions = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let dim_v = rng.random_range(0..=8usize);
        let v = SubspaceBasis::<f64>::random(vec![4, 4], dim_v, &mut rng).unwrap();
        let w = echelon::orthogonal_complement(&v).unwrap();
        let alpha = 1.0 - (dim_v as f64 / 16.0).sqrt();
        let (tree, _) = echelon::build_echelon_tree(&w, &BranchingSpec::uniform(alpha, 2)).unwrap();
        let chis: Vec<Vec<f64>> = if rng.random_bool(0.5) {
            (0..2)
                .map(|_| (0..4).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect())
                .collect()
        } else {
            (0..2).map(|_| gaussian_vec(4, &mut rng)).collect()
        };
        let cert = echelon::certify_distance(&tree, &chis).unwrap();
        let x = Tensor::outer(&chis).unwrap();
        let exact = projection_distance(v.vectors(), x.entries());
        worst_gap = worst_gap.max(cert - exact);
        if cert > exact + 1e-9 {
            exceptions += 1;
        }
    }
    outcome(
        exceptions == 0,
        format!("{exceptions} exceptions in 1000; max certificate − exact {worst_gap:.3e}"),
    )
}

fn rank3_instance(seed: u64) -> (Tensor<f64>, Vec<Tensor<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<Tensor<f64>> = (0..6)
        .map(|_| {
            let f: Vec<Vec<f64>> = (0..3).map(|_| gaussian_vec(8, &mut rng)).collect();
            Tensor::outer(&f).unwrap()
        })
        .collect();
    let mut t = Tensor::zeros(vec![8, 8, 8]).unwrap();
    for term in &terms {
        t = t.add_scaled(term, 1.0).unwrap();
    }
    (t, terms)
}

/// Largest relative error under the best one-to-one matching.
fn matched_error(truth: &[Tensor<f64>], found: &[Tensor<f64>]) -> f64 {
    if truth.len() != found.len() {
        return f64::INFINITY;
    }
    let err: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| {
            found
                .iter()
                .map(|f| t.add_scaled(f, -1.0).unwrap().frobenius() / t.frobenius())
                .collect()
        })
        .collect();
    (0..found.len())
        .permutations(found.len())
        .map(|perm| perm.iter().enumerate().map(|(i, &j)| err[i][j]).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut clean_ok = 0;
    let mut noisy_ok = 0;
    let mut worst_noisy = 0.0f64;
    for trial in 0..100u64 {
        let (t, truth) = rank3_instance(derive_seed(4, trial));
        if let Ok(r) = decomp::jennrich(&t, 6, derive_seed(40, trial), EIGEN_TOL) {
            let found: Vec<Tensor<f64>> = r.terms.iter().map(|x| x.to_tensor()).collect();
            if matched_error(&truth, &found) <= 1e-6 {
                clean_ok += 1;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(41, trial));
        let noise: Vec<f64> = (0..512).map(|_| rng.random_range(-1e-6..=1e-6)).collect();
        let noisy = t.add_scaled(&Tensor::new(vec![8, 8, 8], noise).unwrap(), 1.0).unwrap();
        if let Ok(r) = decomp::jennrich(&noisy, 6, derive_seed(42, trial), EIGEN_TOL) {
            worst_noisy = worst_noisy.max(r.residual);
            if r.residual <= 1e-3 {
                noisy_ok += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        clean_ok >= 99 && noisy_ok >= 95 && elapsed < Duration::from_secs(60),
        format!(
            "clean {clean_ok}/100, noisy {noisy_ok}/100 (max residual {worst_noisy:.2e}), {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    for i in 0..200 {
        let (rows, m) = match i {
            0 | 1 => (3600, 900),
            _ if i < 10 => (rng.random_range(900..=3600), rng.random_range(100..=900)),
            _ => {
                let m = rng.random_range(1..=60);
                (rng.random_range(m..=200), m)
            }
        };
        let cols: Vec<Vec<f64>> = (0..m).map(|_| gaussian_vec(rows, &mut rng)).collect();
        let r = decomp::condition_report(&FactorMatrix::new(rows, cols).unwrap(), None).unwrap();
        let upper = (m as f64).sqrt() * r.sigma_min;
        if r.sigma_min > r.leave_one_out + 1e-9 || r.leave_one_out > upper + 1e-9 {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations} violations in 200 matrices"))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let cfg = SigmaMinConfig {
        n: 60,
        l: 2,
        m: 900,
        c: 0.5,
        model: PerturbationModel::BitFlip { q: 0.5 },
        delta: None,
        trials: 50,
        seed: 6,
    };
    let r = experiment::run_sigma_min_experiment(&cfg).unwrap();
    let smallest = r.records.iter().map(|x| x.statistic).fold(f64::INFINITY, f64::min);
    let elapsed = start.elapsed();
    outcome(
        r.summary.failures <= 2 && elapsed < Duration::from_secs(600),
        format!(
            "{} events in 50 (bound {:.5}); smallest σ_min {smallest:.3e} vs threshold {:.3e}; {:.1} s",
            r.summary.failures,
            r.summary.bound.unwrap_or(f64::NAN),
            r.records[0].threshold,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let base = RoundtripConfig {
        n: 30,
        l: 3,
        m: 20,
        model: PerturbationModel::BitFlip { q: 0.2 },
        epsilon: 0.0,
        m_max: None,
        split: SplitMode::Auto,
        trials: 50,
        seed: 7,
    };
    let clean = experiment::run_roundtrip_experiment(&base).unwrap();
    let exact = clean.records.iter().filter(|r| !r.failure).count();
    let noisy = experiment::run_roundtrip_experiment(&RoundtripConfig {
        epsilon: 1e-8,
        ..base
    })
    .unwrap();
    let matched: Vec<f64> = noisy
        .records
        .iter()
        .filter(|r| r.detail["patterns_match"] == true)
        .map(|r| r.statistic)
        .collect();
    let worst = matched.iter().copied().fold(0.0, f64::max);
    let elapsed = start.elapsed();
    outcome(
        exact * 100 >= 95 * 50 && worst <= 1e-4 && elapsed < Duration::from_secs(900),
        format!(
            "exact {exact}/50; noisy patterns matched {}/50 with max weight L1 {worst:.2e}; {:.1} s",
            matched.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let p = AssemblyParams {
        n: 1_000_000,
        k: 1000,
        a: 80,
        b: 40,
    };
    let max_degree = p.k / p.a;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..50 {
        let vertices = rng.random_range(2..=60);
        let edge_prob = rng.random_range(0.0..=1.0);
        let g = AssociationGraph::random(vertices, edge_prob, max_degree, &mut rng);
        let fam = match assemblies::represent_graph(&g, &p) {
            Ok(f) => f,
            Err(e) => return outcome(false, format!("graph {i}: {e}")),
        };
        let report = assemblies::verify_representation(&g, &fam, &p).unwrap();
        if !report.ok {
            return outcome(false, format!("graph {i}: {:?}", report.violations.first()));
        }
        // Recount intersections directly from the sets.
        let sets: Vec<std::collections::BTreeSet<usize>> =
            fam.sets.iter().map(|s| s.iter().copied().collect()).collect();
        for u in 0..vertices {
            if sets[u].len() != p.k {
                return outcome(false, format!("graph {i}: |S_{u}| = {}", sets[u].len()));
            }
            for v in u + 1..vertices {
                let overlap = sets[u].intersection(&sets[v]).count();
                let ok = if g.has_edge(u, v) { overlap >= p.a } else { overlap <= p.b };
                if !ok {
                    return outcome(false, format!("graph {i}: pair ({u}, {v}) overlap {overlap}"));
                }
            }
        }
    }
    outcome(true, "50 graphs represented with zero violations")
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let cfg = SoftModelConfig {
        graph: GraphSpec::Cycle { vertices: 10 },
        params: AssemblyParams {
            n: 1_000_000,
            k: 1000,
            a: 80,
            b: 40,
        },
        margin: assemblies::DEFAULT_MARGIN,
        trials: 100,
        seed: 9,
    };
    let r = experiment::run_soft_model_experiment(&cfg).unwrap();
    let ok = cfg.trials - r.summary.failures;
    let elapsed = start.elapsed();
    outcome(
        ok >= 95 && elapsed < Duration::from_secs(300),
        format!("{ok}/100 trials satisfy every constraint; {:.1} s", elapsed.as_secs_f64()),
    )
}

fn criterion_10() -> Outcome {
    let configs = vec![
        ExperimentConfig::SigmaMin(SigmaMinConfig {
            n: 10,
            l: 2,
            m: 20,
            c: 0.5,
            model: PerturbationModel::Gaussian { rho: 0.5 },
            delta: Some(0.05),
            trials: 5,
            seed: 100,
        }),
        ExperimentConfig::Echelon(experiment::EchelonConfig {
            n: 4,
            l: 2,
            c: 0.5,
            model: PerturbationModel::BitFlip { q: 0.5 },
            delta: None,
            dim_v: None,
            trials: 5,
            seed: 101,
        }),
        ExperimentConfig::Roundtrip(RoundtripConfig {
            n: 15,
            l: 3,
            m: 4,
            model: PerturbationModel::BitFlip { q: 0.2 },
            epsilon: 1e-8,
            m_max: None,
            split: SplitMode::Auto,
            trials: 5,
            seed: 102,
        }),
        ExperimentConfig::SoftModel(SoftModelConfig {
            graph: GraphSpec::Edges {
                vertices: 4,
                edges: vec![(1, 2), (2, 3)],
            },
            params: AssemblyParams {
                n: 1_000_000,
                k: 1000,
                a: 80,
                b: 40,
            },
            margin: assemblies::DEFAULT_MARGIN,
            trials: 5,
            seed: 103,
        }),
    ];
    for cfg in configs {
        let first = serde_json::to_string(&experiment::run(&cfg).unwrap()).unwrap();
        let emitted: experiment::ExperimentReport = serde_json::from_str(&first).unwrap();
        let second = serde_json::to_string(&experiment::run(&emitted.config).unwrap()).unwrap();
        if first != second {
            return outcome(false, format!("report differs on re-run for {cfg:?}"));
        }
    }
    outcome(true, "4 experiment kinds reproduce byte-for-byte from emitted configs")
}

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("echelon construction", criterion_1),
        ("collapse preserves echelon form", criterion_2),
        ("distance certificate soundness", criterion_3),
        ("jennrich roundtrip", criterion_4),
        ("leave-one-out sandwich", criterion_5),
        ("sigma_min monte carlo", criterion_6),
        ("venn roundtrip", criterion_7),
        ("exact representability", criterion_8),
        ("soft model", criterion_9),
        ("reproducibility", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} ({name}): {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
