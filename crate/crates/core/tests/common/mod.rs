#![allow(dead_code)]

use nalgebra::DMatrix;
use optomech_core::gaussian::{symplectic_form, Mode};
use optomech_core::CovarianceMatrix;
use proptest::prelude::*;

/// `exp(Ω H)` is symplectic for any symmetric `H`.
pub fn symplectic_from_generator(h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows() / 2;
    (symplectic_form(n) * h).exp()
}

pub fn symmetric(n: usize, entries: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = entries[k];
            m[(j, i)] = entries[k];
            k += 1;
        }
    }
    m
}

/// Williamson form `S diag(ν, ν) Sᵀ` with every ν ≥ 1/2.
pub fn physical_cm(generator: &[f64], excess: &[f64], modes: Vec<Mode>) -> CovarianceMatrix {
    let d = 2 * modes.len();
    let s = symplectic_from_generator(&symmetric(d, generator));
    let mut diag = DMatrix::zeros(d, d);
    for (k, &e) in excess.iter().enumerate() {
        diag[(2 * k, 2 * k)] = 0.5 + e;
        diag[(2 * k + 1, 2 * k + 1)] = 0.5 + e;
    }
    let v = &s * diag * s.transpose();
    CovarianceMatrix::new((&v + v.transpose()) * 0.5, modes).unwrap()
}

/// Random two-mode physical CM with moderate squeezing.
pub fn two_mode_cm() -> impl Strategy<Value = CovarianceMatrix> {
    (
        prop::collection::vec(-0.6..0.6f64, 10),
        prop::collection::vec(0.0..3.0f64, 2),
    )
        .prop_map(|(g, e)| physical_cm(&g, &e, vec![Mode::A, Mode::B]))
}
