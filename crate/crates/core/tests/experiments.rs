use venndec_core::assemblies::AssemblyParams;
use venndec_core::experiment::{
    self, BoundStatus, EchelonConfig, GraphSpec, RoundtripConfig, SigmaMinConfig, SoftModelConfig,
};
use venndec_core::perturb::PerturbationModel;
use venndec_core::venn::SplitMode;

fn assembly_params() -> AssemblyParams {
    AssemblyParams {
        n: 1_000_000,
        k: 1000,
        a: 80,
        b: 40,
    }
}

#[test]
fn echelon_experiment_branches_at_least_three() {
    let cfg = EchelonConfig {
        n: 6,
        l: 3,
        c: 0.5,
        model: PerturbationModel::BitFlip { q: 0.5 },
        delta: None,
        dim_v: None,
        trials: 5,
        seed: 21,
    };
    let r = experiment::run_echelon_experiment(&cfg).unwrap();
    assert_eq!(r.summary.extra["dim_v"], 27);
    assert!(r.summary.extra["min_children"].as_u64().unwrap() >= 3);
    assert_eq!(r.summary.extra["unsound"], 0);
    // (1 + 6 + 36)/8 > 1
    assert_eq!(r.summary.bound_status, BoundStatus::Vacuous);
}

#[test]
fn empty_v_certifies_nonzero_points() {
    let cfg = EchelonConfig {
        n: 5,
        l: 2,
        c: 0.5,
        model: PerturbationModel::BitFlip { q: 0.5 },
        delta: None,
        dim_v: Some(0),
        trials: 30,
        seed: 22,
    };
    let r = experiment::run_echelon_experiment(&cfg).unwrap();
    for rec in &r.records {
        let exact = rec.detail["exact_distance"].as_f64().unwrap();
        assert!(rec.statistic <= exact + 1e-12);
        assert_eq!(exact > 0.0, rec.statistic > 0.0);
    }
}

#[test]
fn sigma_min_bound_is_vacuous_at_small_n() {
    let cfg = SigmaMinConfig {
        n: 40,
        l: 2,
        m: 50,
        c: 0.5,
        model: PerturbationModel::BitFlip { q: 0.5 },
        delta: None,
        trials: 3,
        seed: 23,
    };
    let r = experiment::run_sigma_min_experiment(&cfg).unwrap();
    // 40⁴ · 2⁻²⁰
    let bound = r.summary.bound.unwrap();
    assert!((bound - 2_560_000.0 / 1_048_576.0).abs() < 1e-12);
    assert_eq!(r.summary.bound_status, BoundStatus::Vacuous);
    assert_eq!(r.summary.failures, 0);
}

#[test]
fn unperturbed_roundtrip_collapses_to_one_region() {
    let cfg = RoundtripConfig {
        n: 12,
        l: 3,
        m: 3,
        model: PerturbationModel::BitFlip { q: 0.0 },
        epsilon: 0.0,
        m_max: None,
        split: SplitMode::Auto,
        trials: 4,
        seed: 24,
    };
    let r = experiment::run_roundtrip_experiment(&cfg).unwrap();
    // Identical patterns are one region: the three requested regions are
    // never seen as distinct, only their merged weight is.
    for rec in &r.records {
        assert_eq!(rec.detail["regions"], 1);
        assert_eq!(rec.detail["rank"], 1);
    }
}

#[test]
fn recovery_rate_does_not_increase_with_noise() {
    let rates: Vec<f64> = [0.0, 1e-8, 1e-6, 1e-4]
        .iter()
        .map(|&epsilon| {
            let cfg = RoundtripConfig {
                n: 30,
                l: 3,
                m: 20,
                model: PerturbationModel::BitFlip { q: 0.2 },
                epsilon,
                m_max: None,
                split: SplitMode::Auto,
                trials: 20,
                seed: 25,
            };
            let r = experiment::run_roundtrip_experiment(&cfg).unwrap();
            1.0 - r.summary.failure_rate
        })
        .collect();
    for w in rates.windows(2) {
        assert!(w[1] <= w[0], "rates {rates:?}");
    }
}

#[test]
fn edgeless_graph_has_no_overlap_violations() {
    let cfg = SoftModelConfig {
        graph: GraphSpec::Edgeless { vertices: 20 },
        params: assembly_params(),
        margin: 0.25,
        trials: 20,
        seed: 26,
    };
    let r = experiment::run_soft_model_experiment(&cfg).unwrap();
    assert_eq!(r.summary.extra["non_edge_rate"], 1.0);
}

#[test]
fn degree_bound_is_enforced() {
    let cfg = SoftModelConfig {
        graph: GraphSpec::Edges {
            vertices: 6,
            edges: vec![(1, 2), (1, 3), (1, 4), (1, 5), (1, 6)],
        },
        params: AssemblyParams {
            k: 200,
            ..assembly_params()
        },
        margin: 0.25,
        trials: 1,
        seed: 27,
    };
    assert!(experiment::run_soft_model_experiment(&cfg).is_err());
}

#[test]
fn csv_has_one_row_per_trial() {
    let cfg = experiment::ExperimentConfig::SoftModel(SoftModelConfig {
        graph: GraphSpec::Cycle { vertices: 4 },
        params: assembly_params(),
        margin: 0.25,
        trials: 7,
        seed: 28,
    });
    let csv = experiment::run(&cfg).unwrap().to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 8);
    assert_eq!(lines[0], "trial,seed,statistic,threshold,failure");
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 5));
}
