use std::f64::consts::PI;

use dpdo_core::comparison::lemma1_gap;
use dpdo_core::lattice::{
    discrete_fourier, inverse_discrete_fourier, sobolev_norm_1d, sobolev_norm_2d, zeta, FrequencyGrid,
    IndexBox, LatticeFunction, SpectralFunction,
};
use dpdo_core::operators::apply_multiplier;
use dpdo_core::symbols::{periodize, ContinuousSymbol, PeriodicSymbol};
use dpdo_core::system::{canonical_traces, reconstruct_solution, Monomial, TraceProfiles};
use dpdo_core::symbols::{builtin_factor_family, FactorFamily};
use dpdo_core::Complex64;
use proptest::prelude::*;

fn mesh() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![1.0, 0.5, 0.25, 0.125])
}

fn lattice_values(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| Complex64::new(a, b)), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval(h in mesh(), x0 in -4i64..4, y0 in -4i64..4, vals in lattice_values(20)) {
        let u = LatticeFunction::new(h, IndexBox::new(x0..x0 + 4, y0..y0 + 5), vals).unwrap();
        let grid = FrequencyGrid::two_d(h, 16).unwrap();
        let f = discrete_fourier(&u, &grid).unwrap();
        let spectral = sobolev_norm_2d(&f, 0.0).unwrap().powi(2) / (4.0 * PI * PI);
        prop_assert!((spectral - u.energy()).abs() <= 1e-10 * u.energy().max(1e-300));
    }

    #[test]
    fn transform_round_trip(h in mesh(), vals in lattice_values(12)) {
        let support = IndexBox::new(0..3, -1..3);
        let u = LatticeFunction::new(h, support.clone(), vals).unwrap();
        let grid = FrequencyGrid::two_d(h, 8).unwrap();
        let back = inverse_discrete_fourier(&discrete_fourier(&u, &grid).unwrap(), support).unwrap();
        for (a, b) in u.values().iter().zip(back.values()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn multiplier_is_linear(
        h in mesh(),
        u in lattice_values(64),
        v in lattice_values(64),
        alpha in (-2.0f64..2.0, -2.0f64..2.0),
    ) {
        let grid = FrequencyGrid::two_d(h, 8).unwrap();
        let alpha = Complex64::new(alpha.0, alpha.1);
        let fu = SpectralFunction::new(grid.clone(), u.clone()).unwrap();
        let fv = SpectralFunction::new(grid.clone(), v.clone()).unwrap();
        let sum: Vec<Complex64> = u.iter().zip(&v).map(|(a, b)| a * alpha + b).collect();
        let fs = SpectralFunction::new(grid, sum).unwrap();
        let sym = PeriodicSymbol::zeta_power(h, 0, 1).product(&PeriodicSymbol::shift(h, 0, 1));
        let window = IndexBox::new(0..3, 0..3);
        let a = apply_multiplier(&sym, &fu, window.clone()).unwrap();
        let b = apply_multiplier(&sym, &fv, window.clone()).unwrap();
        let c = apply_multiplier(&sym, &fs, window).unwrap();
        for ((x, y), z) in a.values().iter().zip(b.values()).zip(c.values()) {
            prop_assert!((x * alpha + y - z).norm() < 1e-10);
        }
    }

    #[test]
    fn periodized_symbols_are_periodic(h in mesh(), x in -10.0f64..10.0, y in -10.0f64..10.0, m in -3i32..3) {
        let p = periodize(&ContinuousSymbol::bessel(1.5), h);
        let shift = 2.0 * PI / h * m as f64;
        let a = p.eval([x, y]);
        let b = p.eval([x + shift, y - shift]);
        prop_assert!((a - b).norm() <= 1e-9 * a.norm());
        let z = zeta(x, h);
        prop_assert!((z - zeta(x + shift, h)).norm() <= 1e-9 * (1.0 + z.norm()));
    }

    #[test]
    fn sobolev_norm_increases_with_s(h in mesh(), vals in lattice_values(16), s in -3.0f64..3.0, ds in 0.0f64..2.0) {
        let axis = FrequencyGrid::one_d(h, 16).unwrap();
        let f = SpectralFunction::new(axis, vals).unwrap();
        prop_assert!(sobolev_norm_1d(&f, s).unwrap() <= sobolev_norm_1d(&f, s + ds).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn lemma1_gap_within_bound(h in mesh(), t in -1.0f64..=1.0, k in 1u32..=4) {
        let g = lemma1_gap(t * PI / h, k, h);
        prop_assert!(g.gap <= g.bound);
    }

    #[test]
    fn gauge_leaves_the_solution_unchanged(seed in 0u64..1000, h in prop::sample::select(vec![1.0, 0.5])) {
        let grid = FrequencyGrid::two_d(h, 16).unwrap();
        let fac = builtin_factor_family(FactorFamily::Geometric { a: 0.4, p: 1.0, q: 1.0 }, h).unwrap();
        let t = TraceProfiles::random(seed, 1, PI).sample(&grid.axis_nodes());
        let canon = canonical_traces(&t, &grid.rule(), Monomial::Zeta { h }).unwrap();
        let u1 = reconstruct_solution(&t, &fac, &grid).unwrap();
        let u2 = reconstruct_solution(&canon, &fac, &grid).unwrap();
        for (a, b) in u1.values().iter().zip(u2.values()) {
            prop_assert!((a - b).norm() < 1e-10 * (1.0 + a.norm()));
        }
    }
}
