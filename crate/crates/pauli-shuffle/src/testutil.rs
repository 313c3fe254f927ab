//! Shared helpers for unit tests.

use crate::bloch::DenseOperator;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

/// Random Hermitian matrix with entries of order one.
pub(crate) fn random_hermitian(rng: &mut impl Rng, k: usize) -> DenseOperator {
    let dim = 1usize << k;
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    DenseOperator::new(h).unwrap()
}

/// Random full-rank density matrix `G G^dag / Tr(G G^dag)` with complex
/// Gaussian-ish entries.
pub(crate) fn random_density(rng: &mut impl Rng, k: usize) -> DenseOperator {
    let dim = 1usize << k;
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let gg = &g * g.adjoint();
    let tr = gg.trace().re;
    DenseOperator::new(gg / Complex64::new(tr, 0.0)).unwrap()
}
