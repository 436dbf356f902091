mod common;

use memkit_core::index::{
    analyze, q_bar, q_bar_structural, q_hat, q_hat_structural, schur_index_one, schur_index_two,
    AnalysisOptions, PointSource,
};
use memkit_core::linalg::{Vector, DEFAULT_RANK_TOL};
use memkit_core::sim::{consistent_init, simulate, SimError};
use memkit_core::topology::{
    ilm_cutset_exists, ilm_rank_deficient, vcm_loop_exists, vcm_rank_deficient,
};
use memkit_core::{assemble, parse_netlist, SolverConfig, TractabilityIndex};

use common::{all_fixtures, fixture, DEGENERATE, NONDEGENERATE};

#[test]
fn fixtures_round_trip_through_the_canonical_netlist() {
    for (name, circuit) in all_fixtures() {
        let text = circuit.to_netlist();
        let again = parse_netlist(&text).unwrap_or_else(|e| panic!("{name}: {e}\n{text}"));
        assert_eq!(again.nodes(), circuit.nodes(), "{name}");
        assert_eq!(
            again.initial_conditions(),
            circuit.initial_conditions(),
            "{name}"
        );
        for (a, b) in again.branches().iter().zip(circuit.branches()) {
            assert_eq!(
                (&a.device, a.from, a.to),
                (&b.device, b.from, b.to),
                "{name}"
            );
        }
        assert_eq!(again.to_netlist(), text, "{name}");
    }
}

#[test]
fn graph_search_agrees_with_incidence_rank() {
    for (name, circuit) in all_fixtures() {
        assert_eq!(
            vcm_loop_exists(&circuit).is_some(),
            vcm_rank_deficient(&circuit),
            "{name}"
        );
        assert_eq!(
            ilm_cutset_exists(&circuit).is_some(),
            ilm_rank_deficient(&circuit),
            "{name}"
        );
    }
}

#[test]
fn schur_matrices_track_the_index() {
    for name in NONDEGENERATE {
        let dae = assemble(&fixture(name));
        let report = analyze(&dae, None, &AnalysisOptions::default()).unwrap();
        assert_eq!(report.point_source, PointSource::Consistent, "{name}");
        let s = schur_index_one(&dae, &report.point, DEFAULT_RANK_TOL).unwrap();
        assert!(s.nonsingular, "{name}");
    }
    for name in DEGENERATE {
        let dae = assemble(&fixture(name));
        let report = analyze(&dae, None, &AnalysisOptions::default()).unwrap();
        let s = schur_index_two(&dae, &report.point, DEFAULT_RANK_TOL).unwrap();
        assert!(s.nonsingular, "{name}");
        assert_eq!(report.tractability_index(), TractabilityIndex::Two);
    }
}

#[test]
fn structural_projectors_match_the_svd_ones() {
    for (name, circuit) in all_fixtures() {
        let dae = assemble(&circuit);
        let gap = (q_bar(&dae, DEFAULT_RANK_TOL) - q_bar_structural(&dae)).norm();
        let gap_hat = (q_hat(&dae, DEFAULT_RANK_TOL) - q_hat_structural(&dae)).norm();
        assert!(gap < 1e-9 && gap_hat < 1e-9, "{name}: {gap:e} {gap_hat:e}");
    }
}

#[test]
fn backward_euler_on_rc_matches_the_discrete_recursion() {
    // q' = -q with q(0) = 1 gives q_n = (1 + h)^-n exactly under backward Euler.
    let dae = assemble(&fixture("rc.ckt"));
    let h = 0.05;
    let trace = simulate(
        &dae,
        &dae.initial_dynamic(),
        0.0,
        1.0,
        &SolverConfig {
            h,
            ..Default::default()
        },
    )
    .unwrap();
    let q = trace.column("q(C1)").unwrap();
    for (n, qn) in q.iter().enumerate() {
        let expected = (1.0 + h).powi(-(n as i32));
        assert!(
            (qn - expected).abs() < 1e-12,
            "step {n}: {qn} vs {expected}"
        );
    }
}

#[test]
fn degenerate_fixtures_are_refused_by_the_simulator() {
    for name in DEGENERATE {
        let dae = assemble(&fixture(name));
        let err = consistent_init(&dae, &dae.initial_dynamic(), 0.0, &SolverConfig::default())
            .unwrap_err();
        assert!(matches!(err, SimError::IndexTwo { .. }), "{name}: {err}");
    }
}

#[test]
fn consistent_initial_values_satisfy_the_constraints() {
    for name in NONDEGENERATE {
        let dae = assemble(&fixture(name));
        let config = SolverConfig::default();
        let z = consistent_init(&dae, &dae.initial_dynamic(), 0.0, &config).unwrap();
        let r = dae.dynamic_len();
        let g = dae.residual(&z, 0.0).unwrap();
        let worst = g.rows(r, dae.dim() - r).amax();
        assert!(worst <= config.newton_tol * 10.0, "{name}: {worst:e}");
    }
}

#[test]
fn a_zero_point_is_still_analysable() {
    let dae = assemble(&fixture("chua_m_driven.ckt"));
    let report = analyze(
        &dae,
        Some(Vector::zeros(dae.dim())),
        &AnalysisOptions::default(),
    )
    .unwrap();
    assert_eq!(report.point_source, PointSource::User);
    assert!(report.index_one);
}
