//! Mutually unbiased bases in prime dimension and the generalized Pauli
//! channel built on them.
//!
//! For prime `d` the eigenbases of `X`, `Z`, `ZX`, `ZX²`, …, `ZX^{d−1}` are
//! `d+1` mutually unbiased bases, with `X|i⟩ = |i+1 mod d⟩` and
//! `Z|i⟩ = ω^i |i⟩`, `ω = exp(2πi/d)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{choi_from_map, AffineChoiModel, ClosedFormExtraction};
use crate::error::{Error, Result};
use crate::qcore::{identity, ComplexMatrix, ComplexVector, DensityMatrix, ONE};

/// Orthonormal basis as a list of unit vectors.
pub type Basis = Vec<ComplexVector>;

fn is_prime(d: usize) -> bool {
    d >= 2 && (2..d).take_while(|k| k * k <= d).all(|k| !d.is_multiple_of(k))
}

fn shift(d: usize) -> ComplexMatrix {
    let mut x = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        x[((i + 1) % d, i)] = ONE;
    }
    x
}

fn clock(d: usize) -> ComplexMatrix {
    let mut z = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        z[(i, i)] = Complex64::from_polar(1.0, 2.0 * PI * i as f64 / d as f64);
    }
    z
}

/// Eigenbasis of a unitary `U` with `U^d ∝ I` and nondegenerate spectrum.
///
/// The eigenvalues are the `d` roots of the scalar `U^d`; each eigenvector is
/// read off the spectral projector `Π_{n≠m}(U − λₙ)/(λₘ − λₙ)`.
fn unitary_eigenbasis(u: &ComplexMatrix) -> Basis {
    let d = u.nrows();
    let power = (0..d).fold(identity(d), |acc, _| acc * u);
    let scalar = power[(0, 0)];
    let root = scalar.powf(1.0 / d as f64);
    let eigenvalues: Vec<Complex64> = (0..d)
        .map(|m| root * Complex64::from_polar(1.0, 2.0 * PI * m as f64 / d as f64))
        .collect();
    eigenvalues
        .iter()
        .enumerate()
        .map(|(m, &lm)| {
            let mut proj = identity(d);
            for (n, &ln) in eigenvalues.iter().enumerate() {
                if n != m {
                    proj = proj * (u - identity(d) * ln) / (lm - ln);
                }
            }
            let best = (0..d)
                .max_by(|&a, &b| proj.column(a).norm().total_cmp(&proj.column(b).norm()))
                .expect("d >= 2");
            let v: ComplexVector = proj.column(best).into_owned();
            fix_phase(v.unscale(v.norm()))
        })
        .collect()
}

/// First component with nonzero modulus made real and positive.
fn fix_phase(v: ComplexVector) -> ComplexVector {
    match v.iter().find(|z| z.norm() > 1e-12) {
        Some(z) => {
            let phase = z.conj() / z.norm();
            v * phase
        }
        None => v,
    }
}

/// The `d+1` mutually unbiased bases, ordered as eigenbases of `X, Z, ZX, …, ZX^{d−1}`.
pub fn mub_bases(d: usize) -> Result<Vec<Basis>> {
    if !is_prime(d) {
        return Err(Error::NotPrime(d));
    }
    let x = shift(d);
    let z = clock(d);
    let mut out = vec![unitary_eigenbasis(&x), unitary_eigenbasis(&z)];
    let mut xk = identity(d);
    for _ in 1..d {
        xk = &xk * &x;
        out.push(unitary_eigenbasis(&(&z * &xk)));
    }
    Ok(out)
}

/// Hilbert–Schmidt projection onto the algebra diagonal in `basis`.
fn project(basis: &Basis, a: &ComplexMatrix) -> ComplexMatrix {
    let d = a.nrows();
    let mut out = ComplexMatrix::zeros(d, d);
    for v in basis {
        let weight = (v.adjoint() * a * v)[(0, 0)];
        out += (v * v.adjoint()) * weight;
    }
    out
}

fn check_params(lambda: &[f64], bases: &[Basis]) -> Result<usize> {
    if lambda.len() != bases.len() {
        return Err(Error::LengthMismatch {
            what: "generalized Pauli weights",
            expected: bases.len(),
            found: lambda.len(),
        });
    }
    Ok(bases.first().map_or(0, |b| b.len()))
}

fn apply_raw(a: &ComplexMatrix, lambda: &[f64], bases: &[Basis]) -> ComplexMatrix {
    let d = a.nrows();
    let total: f64 = lambda.iter().sum();
    let tr: Complex64 = a.diagonal().iter().sum();
    let mut out = identity(d) * (tr * ((1.0 - total) / d as f64));
    for (l, b) in lambda.iter().zip(bases) {
        out += project(b, a).scale(*l);
    }
    out
}

/// `E(ρ) = (1 − Σλᵢ) Tr(ρ)/d · I + Σ λᵢ Eᵢ(ρ)`.
pub fn gen_pauli_apply(rho: &DensityMatrix, lambda: &[f64], bases: &[Basis]) -> Result<DensityMatrix> {
    let d = check_params(lambda, bases)?;
    if rho.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: format!("dimension {d}"),
            found: format!("dimension {}", rho.dim()),
        });
    }
    if !gen_pauli_cp_condition(lambda, d) {
        return Err(Error::CpViolation(lambda.to_vec()));
    }
    DensityMatrix::new(crate::qcore::hermitian_part(&apply_raw(rho.matrix(), lambda, bases)))
}

/// `1 + dλᵢ ≥ Σⱼλⱼ ≥ −1/(d−1)` for every `i`.
pub fn gen_pauli_cp_condition(lambda: &[f64], d: usize) -> bool {
    const TOL: f64 = 1e-12;
    let total: f64 = lambda.iter().sum();
    let lower = -1.0 / (d as f64 - 1.0);
    total >= lower - TOL && lambda.iter().all(|&l| 1.0 + d as f64 * l >= total - TOL)
}

fn identity_map(x: &[f64]) -> Vec<f64> {
    x.to_vec()
}

fn extract(h: &[f64]) -> ClosedFormExtraction {
    ClosedFormExtraction {
        theta: h.to_vec(),
        unidentifiable: vec![],
    }
}

fn cp_qutrit(lambda: &[f64]) -> bool {
    gen_pauli_cp_condition(lambda, 3)
}

/// Generalized Pauli channel on all `d+1` MUB; `hᵢ = λᵢ`.
///
/// `H₀ = I/d` (completely depolarizing) and `Hᵢ = C(Eᵢ) − I/d`, with `C(Eᵢ)`
/// the Choi matrix of the projection onto the `i`-th basis algebra.
pub fn gen_pauli_model(d: usize) -> Result<AffineChoiModel> {
    // only the qutrit instance ships, so the fn-pointer CP test is fixed at d = 3
    if d != 3 {
        return Err(Error::InvalidModel(format!(
            "generalized Pauli model is provided for d = 3, got {d}"
        )));
    }
    let bases = mub_bases(d)?;
    let n = d * d;
    let depolarizing = identity(n).unscale(d as f64);
    let basis: Vec<ComplexMatrix> = bases
        .iter()
        .map(|b| {
            let choi = choi_from_map(d, |a| project(b, a));
            crate::qcore::hermitian_part(&(choi - &depolarizing))
        })
        .collect();
    let u = bases.len();
    let model = AffineChoiModel {
        id: format!("gen_pauli_{d}"),
        d,
        h0: depolarizing,
        basis,
        variable_names: (1..=u).map(|i| format!("lambda{i}")).collect(),
        convex_relations: vec![],
        independent_set: (0..u).collect(),
        param_names: (1..=u).map(|i| format!("lambda{i}")).collect(),
        h_of_theta: identity_map,
        extract_closed_form: Some(extract),
        cp_condition: cp_qutrit,
        interior_point: vec![0.0; u],
        param_box: vec![(-0.5, 1.0); u],
        independent_measurements: true,
    };
    model.validate()?;
    Ok(model)
}
