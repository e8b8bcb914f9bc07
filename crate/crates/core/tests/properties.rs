mod common;

use common::*;
use ctrlscore::centrality::{observability_scores, score, vcs};
use ctrlscore::oracle::gramian_quadrature;
use ctrlscore::simplex::{is_member, project};
use ctrlscore::{
    GramianBasis, Horizon, NetworkSystem, NetworkSystemF32, ObjectiveKind, OptimizerConfig, ScoreConfig, StopReason,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const KINDS: [ObjectiveKind; 2] = [ObjectiveKind::Volumetric, ObjectiveKind::AverageEnergy];

fn tight() -> ScoreConfig<f64> {
    ScoreConfig { optimizer: OptimizerConfig { epsilon: 1e-10, ..Default::default() }, ..Default::default() }
}

#[test]
fn scores_follow_node_relabeling() {
    let sys = random_stable(6, 11, 0.5);
    let perm = [3, 0, 5, 1, 4, 2];
    let moved = sys.permuted(&perm).unwrap();
    let cfg = tight();
    for kind in KINDS {
        let p = score(&sys, kind, Horizon::Infinite, &cfg).unwrap().point.p;
        let q = score(&moved, kind, Horizon::Infinite, &cfg).unwrap().point.p;
        for (i, &k) in perm.iter().enumerate() {
            assert!((q[i] - p[k]).abs() < 1e-6, "{kind:?} node {i}: {} vs {}", q[i], p[k]);
        }
    }
}

#[test]
fn observability_of_symmetric_dynamics_matches_controllability() {
    let sys = laplacian_path(4);
    let cfg = ScoreConfig::default();
    for kind in KINDS {
        let c = score(&sys, kind, Horizon::Finite(1.0), &cfg).unwrap().point.p;
        let (o, _) = observability_scores(&sys, kind, Horizon::Finite(1.0), &cfg).unwrap();
        assert!((c - o).amax() < 1e-12);
    }
}

#[test]
fn observability_of_chain_reverses_roles() {
    let cfg = tight();
    let (o, _) = observability_scores(&chain(), ObjectiveKind::Volumetric, Horizon::Infinite, &cfg).unwrap();
    assert!((o[1] - 2.0 / 3.0).abs() < 1e-6, "{o}");
}

#[test]
fn single_precision_pipeline_tracks_double() {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0f32, 0.0, 1.0, -1.0]);
    let sys = NetworkSystemF32::from_matrix(a).unwrap();
    let (p, diag) = vcs(&sys, Horizon::Infinite, &ScoreConfig::<f32>::default()).unwrap();
    assert_eq!(diag.stop_reason, StopReason::EpsilonStationary);
    assert!((p[0] - 2.0 / 3.0).abs() < 1e-3, "{p}");
    assert!((p.sum() - 1.0).abs() < 1e-6);
}

#[test]
fn cache_round_trip_preserves_basis() {
    let sys = random_stable(5, 21, 0.3);
    let b = basis(&sys, Horizon::Infinite);
    let mut buf = Vec::new();
    b.save_cache(&mut buf).unwrap();
    let back = GramianBasis::load_cache(&sys, buf.as_slice()).unwrap();
    for i in 0..5 {
        assert_eq!(b.gramian(i).unwrap(), back.gramian(i).unwrap());
    }
    let other = random_stable(5, 22, 0.3);
    assert!(GramianBasis::load_cache(&other, buf.as_slice()).is_err());
    buf.truncate(buf.len() / 2);
    assert!(GramianBasis::load_cache(&sys, buf.as_slice()).is_err());
}

#[test]
fn quadrature_approaches_infinite_gramian_at_long_horizon() {
    for seed in 0..3 {
        let sys = random_stable(4, 31 + seed, 1.0);
        let b = basis(&sys, Horizon::Infinite);
        for i in 0..4 {
            let q = gramian_quadrature(sys.a(), i, 30.0, 6000).unwrap();
            let w = b.gramian(i).unwrap();
            assert!((q - &w).amax() / w.amax() < 1e-5);
        }
    }
}

#[test]
fn laplacian_scores_do_not_depend_on_start() {
    let sys = laplacian_path(5);
    let b = basis(&sys, Horizon::Finite(1.0));
    let mut r = rng(41);
    let reference = ctrlscore::optimizer::solve(ObjectiveKind::Volumetric, &b, &OptimizerConfig::default())
        .unwrap()
        .point
        .p;
    for _ in 0..5 {
        let start = random_simplex_point(&mut r, 5);
        let cfg = OptimizerConfig { start: Some(start), ..Default::default() };
        let p = ctrlscore::optimizer::solve(ObjectiveKind::Volumetric, &b, &cfg).unwrap().point.p;
        assert!((p - &reference).amax() < 1e-3);
    }
}

#[test]
fn unstable_system_needs_finite_horizon() {
    let sys = NetworkSystem::from_matrix(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 1.0, -1.0])).unwrap();
    assert!(score(&sys, ObjectiveKind::Volumetric, Horizon::Infinite, &ScoreConfig::default()).is_err());
    let s = score(&sys, ObjectiveKind::Volumetric, Horizon::Finite(2.0), &ScoreConfig::default()).unwrap();
    assert!(is_member(&s.point.p, 1e-12));
}

proptest! {
    #[test]
    fn projection_lands_on_simplex(v in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let q = DVector::from_vec(v);
        let p = project(&q).p;
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
        let again = project(&p).p;
        prop_assert!((again - &p).amax() <= 1e-12);
    }

    #[test]
    fn projection_is_translation_invariant(v in prop::collection::vec(-5.0f64..5.0, 2..20), c in -10.0f64..10.0) {
        let q = DVector::from_vec(v);
        let p = project(&q).p;
        let shifted = project(&q.add_scalar(c)).p;
        prop_assert!((p - shifted).amax() <= 1e-9);
    }

    #[test]
    fn gramians_are_symmetric_psd(seed in 0u64..500, n in 2usize..7) {
        let b = basis(&random_stable(n, seed, 0.2), Horizon::Infinite);
        for i in 0..n {
            let w = b.gramian(i).unwrap();
            prop_assert!((&w - w.transpose()).amax() <= 1e-12 * w.amax().max(1.0));
            let min = w.symmetric_eigenvalues().min();
            prop_assert!(min >= -1e-10 * w.amax());
        }
    }
}
