use hodgelab::calculus::{mass_norm, multiplication_operator, Calculus};
use hodgelab::complex::{build_circle, build_torus2};
use hodgelab::index::euler_index;
use hodgelab::linalg::to_complex;
use hodgelab::spectral::{kernel_norm_l1_linf, singular_values_desc};
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// The Euler index is a topological invariant of the edge lengths.
    #[test]
    fn index_ignores_edge_lengths(factors in prop::collection::vec(0.85f64..1.15, 48)) {
        let cx = build_torus2(4).unwrap();
        let lengths: Vec<f64> = cx.geometry().edge_lengths.iter().zip(&factors).map(|(l, f)| l * f).collect();
        if let Ok(p) = cx.with_edge_lengths(lengths) {
            let calc = Calculus::new(&p).unwrap();
            prop_assert_eq!(euler_index(&calc).unwrap().index, 0);
        }
    }

    /// `D` is symmetric in the mass inner product and `d² = 0`.
    #[test]
    fn dirac_structure(n in 3usize..12) {
        let calc = Calculus::new(&build_circle(n).unwrap()).unwrap();
        let m = calc.metric.stacked_mass();
        let md = &m * &calc.dirac.matrix;
        prop_assert!((&md - md.transpose()).amax() < 1e-10 * md.amax());
        prop_assert!((&calc.d.matrix * &calc.d.matrix).amax() == 0.0);
    }

    /// Multiplication by a vertex function commutes with `D` exactly when
    /// the function is constant.
    #[test]
    fn constant_multipliers_commute(c in -5.0f64..5.0) {
        let cx = build_torus2(3).unwrap();
        let calc = Calculus::new(&cx).unwrap();
        let mf = multiplication_operator(&vec![c; cx.n_vertices()], &cx).unwrap();
        let comm = &calc.dirac.matrix * &mf.matrix - &mf.matrix * &calc.dirac.matrix;
        prop_assert!(mass_norm(&to_complex(&comm), &calc.metric).unwrap() == 0.0);
    }

    /// The fibered kernel norm dominates every entry and scales linearly.
    #[test]
    fn kernel_norm_bounds_entries(entries in prop::collection::vec(-1.0f64..1.0, 36), s in 0.1f64..10.0) {
        let k = DMatrix::from_vec(6, 6, entries);
        let fibers = vec![vec![0, 1], vec![2], vec![3, 4, 5]];
        let a = kernel_norm_l1_linf(&k, &fibers);
        prop_assert!(k.amax() <= a + 1e-15);
        prop_assert!((kernel_norm_l1_linf(&(&k * s), &fibers) - s * a).abs() <= 1e-12 * s * a.max(1e-300));
        prop_assert!(a <= singular_values_desc(&k)[0] + 1e-12);
    }
}
