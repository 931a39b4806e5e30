#![allow(dead_code)]

use choitomo::qcore::{c, ComplexMatrix, DensityMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        c(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn random_density<R: Rng>(d: usize, rng: &mut R) -> DensityMatrix {
    let g = gaussian_matrix(d, d, rng);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::new(m.unscale(tr)).expect("normalized Gram matrix")
}

pub fn random_hermitian<R: Rng>(d: usize, rng: &mut R) -> ComplexMatrix {
    let g = gaussian_matrix(d, d, rng);
    (&g + g.adjoint()).scale(0.5)
}

/// Kraus operators cut from a random isometry `C^d → C^{kd}`.
pub fn random_kraus<R: Rng>(d: usize, k: usize, rng: &mut R) -> Vec<ComplexMatrix> {
    let q = gaussian_matrix(k * d, d, rng).qr().q();
    (0..k).map(|i| q.rows(i * d, d).into_owned()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
