mod props;

macro_rules! checks {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                let n = props::$name().unwrap_or_else(|e| panic!("{e}"));
                assert!(n >= 100);
            }
        )*
    };
}

checks!(
    normalize_idempotent,
    normalize_preserves_values,
    diff_linear_and_leibniz,
    diff_matches_central_differences,
    substitute_commutes_with_normalize,
    print_parse_round_trip,
    diagnostic_spans_inside_source,
    total_derivatives_commute,
    prolongation_linear_in_field,
    prolongation_leibniz,
    evolutionary_identity,
    discrete_involution,
    restrict_idempotent,
    point_and_evolutionary_paths_agree,
    commutator_equals_restricted_step,
    strong_bounds_standard,
    exactness_detection,
    symbolic_numeric_coherence,
    orbit_closure,
    series_tail_vanishes,
    rk4_fourth_order,
    fd_matches_symbolic,
    non_invariance_witness,
    frechet_is_prolongation,
);

#[test]
fn every_check_is_listed() {
    assert_eq!(props::ALL.len(), 24);
}
