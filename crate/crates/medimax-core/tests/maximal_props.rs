//! Properties of the median maximal operator: the level-set identity against
//! shared enumerations, the refinement sandwich, engine-versus-definition
//! equality, and order/homogeneity laws. Dyadic instances keep every
//! comparison exact.

mod common;

use common::*;
use medimax_core::basis::{countable_refinement, BasisFamily, BasisKind};
use medimax_core::maximal::{
    abs_value_grid, average_maximal, indicator_superlevel, median_maximal,
    median_maximal_field, median_maximal_sampled, restricted_median_maximal, EngineOpts,
};
use medimax_core::median::gamma_median;
use medimax_core::{Error, Field, Gamma, Space};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const FULL: usize = 1 << 17;

fn small_space(r: &mut ChaCha8Rng) -> Space {
    if r.gen::<bool>() {
        dyadic_grid_1d(r, 12, 28)
    } else {
        dyadic_grid_2d(r, 4, 7)
    }
}

fn small_family(r: &mut ChaCha8Rng, dim: usize) -> BasisFamily {
    let kind = match r.gen_range(0..4u32) {
        0 => BasisKind::Balls,
        1 => BasisKind::Cubes,
        2 if dim == 2 => BasisKind::AxisRects {
            max_eccentricity: r.gen_range(2..=4),
        },
        _ => BasisKind::DyadicCubes,
    };
    let k_min = r.gen_range(0..=1);
    let k_max = k_min + r.gen_range(2..=3);
    BasisFamily::new(kind, k_min, k_max, r.gen()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The median superlevel set {M f > lambda} coincides with the set of
    /// points owning a family set where {|f| > lambda} fills a gamma
    /// fraction, and the engine reproduces both over the same enumeration.
    #[test]
    fn superlevel_matches_indicator_enlargement(seed in any::<u64>()) {
        let mut r = rng(seed);
        let space = small_space(&mut r);
        let family = small_family(&mut r, space.dim());
        let f = dyadic_field(&mut r, &space);
        let gamma = dyadic_gamma(&mut r);
        let abs = f.abs();
        let lam = match r.gen_range(0..3u32) {
            0 => 0.0,
            1 => abs.value(r.gen_range(0..space.len())),
            _ => abs.value(r.gen_range(0..space.len())) + 1.0 / 512.0,
        };
        let s_lam = abs.super_level(&space, lam);
        let (t, _) = indicator_superlevel(
            &space, &s_lam, &family, gamma, family.coarsest(), &EngineOpts::default(),
        )
        .unwrap();
        for x in 0..space.len() {
            let sets = family_sets_through(&space, &family, x);
            let median_side = sets
                .iter()
                .any(|b| gamma_median(&space, &abs, b, gamma).unwrap() > lam);
            let mass_side = sets.iter().any(|b| {
                let hit: f64 = b
                    .iter()
                    .filter(|i| s_lam.contains(*i))
                    .map(|i| space.weight(i))
                    .sum();
                hit >= gamma.get() * space.measure(b)
            });
            prop_assert_eq!(median_side, mass_side);
            prop_assert_eq!(t.contains(x), mass_side);
        }
    }

    /// Trimming refinement sits between the base operator at gamma and the
    /// base operator at gamma / 2, pointwise.
    #[test]
    fn refinement_is_sandwiched(seed in any::<u64>()) {
        let mut r = rng(seed);
        let space = small_space(&mut r);
        let kind = if r.gen::<bool>() { BasisKind::Balls } else { BasisKind::Cubes };
        let base = BasisFamily::new(kind, 0, 3, r.gen()).unwrap();
        let fine = countable_refinement(&base);
        let f = dyadic_field(&mut r, &space);
        let gamma = dyadic_gamma(&mut r);
        let half = gamma.scaled_down(2.0).unwrap();
        for x in 0..space.len() {
            let m_base = median_maximal(&space, &f, &base, x, gamma, FULL).unwrap();
            let m_fine = median_maximal(&space, &f, &fine, x, gamma, FULL).unwrap();
            let m_half = median_maximal(&space, &f, &base, x, half, FULL).unwrap();
            prop_assert!(m_base <= m_fine);
            prop_assert!(m_fine <= m_half);
        }
    }

    /// The quantized field engine reproduces the pointwise definition when
    /// given the full value grid.
    #[test]
    fn quantized_field_reproduces_pointwise_values(seed in any::<u64>()) {
        let mut r = rng(seed);
        let space = small_space(&mut r);
        let family = small_family(&mut r, space.dim());
        let f = dyadic_field(&mut r, &space);
        let gamma = dyadic_gamma(&mut r);
        let grid = abs_value_grid(&f);
        let mf = median_maximal_field(&space, &f, &family, gamma, &grid, &EngineOpts::default())
            .unwrap();
        for x in 0..space.len() {
            let direct = median_maximal(&space, &f, &family, x, gamma, FULL).unwrap();
            prop_assert_eq!(mf.values.value(x), direct);
        }
    }
}

proptest! {
    /// Lowering gamma raises the maximal function pointwise.
    #[test]
    fn maximal_is_antitone_in_gamma(seed in any::<u64>()) {
        let mut r = rng(seed);
        let space = small_space(&mut r);
        let family = small_family(&mut r, space.dim());
        let f = dyadic_field(&mut r, &space);
        let g1 = r.gen_range(1..=63u32);
        let g2 = r.gen_range(g1..=63u32);
        let x = r.gen_range(0..space.len());
        let lo = median_maximal(&space, &f, &family, x, Gamma::new(g1 as f64 / 64.0).unwrap(), FULL).unwrap();
        let hi = median_maximal(&space, &f, &family, x, Gamma::new(g2 as f64 / 64.0).unwrap(), FULL).unwrap();
        prop_assert!(lo >= hi);
    }

    /// Positive scaling passes through the maximal operator.
    #[test]
    fn maximal_is_positively_homogeneous(seed in any::<u64>()) {
        let mut r = rng(seed);
        let space = small_space(&mut r);
        let family = small_family(&mut r, space.dim());
        let f = dyadic_field(&mut r, &space);
        let gamma = dyadic_gamma(&mut r);
        let c = r.gen_range(1..=64u32) as f64 / 16.0;
        let scaled = Field::new(&space, f.values().iter().map(|v| c * v).collect()).unwrap();
        let x = r.gen_range(0..space.len());
        let m = median_maximal(&space, &f, &family, x, gamma, FULL).unwrap();
        let mc = median_maximal(&space, &scaled, &family, x, gamma, FULL).unwrap();
        prop_assert_eq!(mc, c * m);
    }

    /// Scaled average maximal functions of |f|^p dominate the median maximal
    /// function over the same enumeration (cross-multiplied, exact).
    #[test]
    fn average_maximal_dominates(seed in any::<u64>()) {
        let mut r = rng(seed);
        let space = small_space(&mut r);
        let family = small_family(&mut r, space.dim());
        let f = dyadic_field(&mut r, &space);
        let gamma = dyadic_gamma(&mut r);
        let x = r.gen_range(0..space.len());
        let m = median_maximal(&space, &f, &family, x, gamma, FULL).unwrap();
        let sq = Field::new(&space, f.values().iter().map(|v| v * v).collect()).unwrap();
        let a1 = average_maximal(&space, &f, &family, x, FULL).unwrap();
        let a2 = average_maximal(&space, &sq, &family, x, FULL).unwrap();
        prop_assert!(m * gamma.get() <= a1);
        prop_assert!(m * m * gamma.get() <= a2);
    }

    /// A cell-budgeted scan never exceeds the exhaustive value.
    #[test]
    fn sampled_maximal_is_a_lower_bound(seed in any::<u64>()) {
        let mut r = rng(seed);
        let space = small_space(&mut r);
        let family = small_family(&mut r, space.dim());
        let f = dyadic_field(&mut r, &space);
        let gamma = dyadic_gamma(&mut r);
        let x = r.gen_range(0..space.len());
        let exact = median_maximal(&space, &f, &family, x, gamma, FULL).unwrap();
        let sampled = median_maximal_sampled(&space, &f, &family, x, gamma, 64).unwrap();
        prop_assert!(sampled <= exact);
    }
}

/// Radii below the finest family scale are refused rather than silently
/// rounded.
#[test]
fn restriction_below_the_finest_scale_errors() {
    let space = Space::grid(&[16], 0.125).unwrap();
    let family = BasisFamily::new(BasisKind::Balls, 0, 3, 7).unwrap();
    let f = Field::constant(&space, 1.0).unwrap();
    let gamma = Gamma::new(0.25).unwrap();
    let err = restricted_median_maximal(&space, &f, &family, 0, gamma, family.finest() / 2.0, FULL);
    assert!(matches!(err, Err(Error::ResolutionExhausted { .. })));
}
