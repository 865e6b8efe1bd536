mod common;

use common::{physical_cm, symplectic_from_generator, symmetric, two_mode_cm};
use nalgebra::DMatrix;
use optomech_core::gaussian::{
    log_negativity, partial_transpose, symplectic_eigenvalues, symplectic_spectrum_2mode, Mode,
};
use optomech_core::CovarianceMatrix;
use proptest::prelude::*;

fn conjugate_mode(v: &CovarianceMatrix, pos: usize, s: &DMatrix<f64>) -> CovarianceMatrix {
    let d = v.dim();
    let mut full = DMatrix::<f64>::identity(d, d);
    full.view_mut((2 * pos, 2 * pos), (2, 2)).copy_from(s);
    CovarianceMatrix::new(&full * &v.entries * full.transpose(), v.modes.clone()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn closed_form_matches_eigensolver(v in two_mode_cm()) {
        for pt in [false, true] {
            let (lo, hi) = symplectic_spectrum_2mode(&v, pt).unwrap();
            let target = if pt { partial_transpose(&v, Mode::B).unwrap() } else { v.clone() };
            let nu = symplectic_eigenvalues(&target).unwrap();
            prop_assert!((lo - nu[0]).abs() < 1e-10 * nu[1].max(1.0), "{lo} vs {}", nu[0]);
            prop_assert!((hi - nu[1]).abs() < 1e-10 * nu[1].max(1.0), "{hi} vs {}", nu[1]);
        }
    }

    #[test]
    fn negativity_is_locally_symplectic_invariant(
        v in two_mode_cm(),
        g in prop::collection::vec(-0.8..0.8f64, 3),
        which in 0usize..2,
    ) {
        let s = symplectic_from_generator(&symmetric(2, &g));
        prop_assert!((s.determinant() - 1.0).abs() < 1e-12);
        let w = conjugate_mode(&v, which, &s);
        let e0 = log_negativity(&v).unwrap();
        let e1 = log_negativity(&w).unwrap();
        prop_assert!((e0 - e1).abs() < 1e-8, "{e0} vs {e1}");
    }

    #[test]
    fn physical_states_respect_uncertainty(
        g in prop::collection::vec(-0.5..0.5f64, 21),
        e in prop::collection::vec(0.0..2.0f64, 3),
    ) {
        let v = physical_cm(&g, &e, Mode::ALL.to_vec());
        let nu = symplectic_eigenvalues(&v).unwrap();
        prop_assert!(nu[0] >= 0.5 - 1e-9);
        prop_assert!(nu.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn product_across_cut_has_zero_negativity(
        g1 in prop::collection::vec(-0.8..0.8f64, 3),
        g2 in prop::collection::vec(-0.8..0.8f64, 3),
        e in prop::collection::vec(0.0..2.0f64, 2),
    ) {
        let a = physical_cm(&g1, &e[..1], vec![Mode::A]);
        let b = physical_cm(&g2, &e[1..], vec![Mode::B]);
        let mut m = DMatrix::zeros(4, 4);
        m.view_mut((0, 0), (2, 2)).copy_from(&a.entries);
        m.view_mut((2, 2), (2, 2)).copy_from(&b.entries);
        let v = CovarianceMatrix::new(m, vec![Mode::A, Mode::B]).unwrap();
        let en = log_negativity(&v).unwrap();
        prop_assert!(en.is_finite() && en == 0.0);
    }
}
