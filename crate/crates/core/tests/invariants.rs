mod common;

use memkit_core::index::{
    analyze, kronecker_oracle, tractability_chain, AnalysisOptions, Pencil, ProjectorKind,
};
use memkit_core::linalg::{Vector, DEFAULT_RANK_TOL};
use memkit_core::random::random_linear_circuit;
use memkit_core::topology::{degeneracy_report, ilm_rank_deficient, vcm_rank_deficient};
use memkit_core::{assemble, parse_netlist, Circuit};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{fd_jacobian, max_relative_error};

fn circuit(seed: u64, size: usize) -> Circuit {
    random_linear_circuit(&mut ChaCha8Rng::seed_from_u64(seed), size)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_one_iff_nondegenerate(seed in any::<u64>(), size in 2usize..12) {
        let c = circuit(seed, size);
        let report = analyze(&assemble(&c), None, &AnalysisOptions::default()).unwrap();
        prop_assert_eq!(report.index_one, report.degeneracy.nondegenerate);
        let expected = if report.index_one { [0, 1] } else { [2, 2] };
        prop_assert!(report.chain.index.as_number().is_some_and(|k| expected.contains(&k)));
    }

    #[test]
    fn chain_matches_oracle(seed in any::<u64>(), size in 2usize..12) {
        let dae = assemble(&circuit(seed, size));
        let jac = dae.jacobian(&Vector::zeros(dae.dim()), 0.0).unwrap();
        let pencil = Pencil::new(dae.e_matrix(), jac.f);
        let chain = tractability_chain(&pencil, DEFAULT_RANK_TOL, ProjectorKind::Orthogonal);
        prop_assert_eq!(chain.index.as_number(), kronecker_oracle(&pencil, DEFAULT_RANK_TOL).ok());
        prop_assert!(chain.residuals.max() <= 1e-10);
        let oblique = tractability_chain(&pencil, DEFAULT_RANK_TOL, ProjectorKind::Oblique(seed));
        prop_assert_eq!(oblique.index, chain.index);
        prop_assert!(oblique.residuals.max() <= 1e-10);
    }

    #[test]
    fn witnesses_agree_with_incidence_rank(seed in any::<u64>(), size in 2usize..14) {
        let c = circuit(seed, size);
        let report = degeneracy_report(&c).unwrap();
        prop_assert_eq!(report.vcm_loop.is_some(), vcm_rank_deficient(&c));
        prop_assert_eq!(report.ilm_cutset.is_some(), ilm_rank_deficient(&c));
    }

    #[test]
    fn netlists_round_trip(seed in any::<u64>(), size in 2usize..12) {
        let c = circuit(seed, size);
        let text = c.to_netlist();
        let again = parse_netlist(&text).unwrap();
        prop_assert_eq!(again.to_netlist(), text);
    }

    #[test]
    fn jacobian_matches_differences(seed in any::<u64>(), size in 2usize..10, t in 0.0f64..5.0) {
        let dae = assemble(&circuit(seed, size));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
        let z = Vector::from_fn(dae.dim(), |_, _| rand::Rng::gen_range(&mut rng, -2.0..2.0));
        let exact = dae.jacobian(&z, t).unwrap().f;
        prop_assert!(max_relative_error(&exact, &fd_jacobian(&dae, &z, t)) <= 1e-6);
    }
}
