mod common;
mod invariants;

macro_rules! properties {
    ($($name:ident)*) => {
        $(
            #[test]
            fn $name() {
                invariants::run(stringify!($name));
            }
        )*

        #[test]
        fn every_property_runs_here() {
            let listed = [$(stringify!($name)),*];
            assert_eq!(listed.len(), invariants::PROPERTIES.len());
        }
    };
}

properties! {
    bilateral_keeps_constant_images
    bilateral_stays_within_window
    sobel_of_inverse_flips_sign
    imagery_is_pure
    matches_respect_epipolar_geometry
    self_matches_have_zero_disparity
    detection_is_translation_covariant
    lsf_is_a_global_minimum
    ransac_without_outliers_equals_lsf
    search_range_is_bounded
    horizon_is_a_root
    seeded_matches_full_search_inside_its_band
    disparities_stay_in_range
    matching_is_deterministic
    v_disparity_conserves_mass
    likelihood_bounded_by_gradient
    road_mask_is_monotone_in_mu
    histogram_conserves_votes
    peak_pairs_are_disjoint_and_sorted
    synthesis_is_deterministic_and_consistent
    right_view_is_the_warped_left
}
