//! Unital qubit Pauli channels in the T-representation, `h = (α, β, γ)`.

use super::{AffineChoiModel, ClosedFormExtraction};
use crate::qcore::real_matrix;

/// Positivity of the T-representation Choi matrix.
///
/// The spectrum is `(1+γ ± (α+β))/2` and `(1−γ ± (α−β))/2`, so the
/// condition pairs signs: `1+γ ≥ |α+β|` and `1−γ ≥ |α−β|`.
pub fn pauli_t_cp_condition(theta: &[f64]) -> bool {
    const TOL: f64 = 1e-12;
    let (a, b, g) = (theta[0], theta[1], theta[2]);
    1.0 + g >= (a + b).abs() - TOL && 1.0 - g >= (a - b).abs() - TOL
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

pub fn pauli_t_model() -> AffineChoiModel {
    let h0 = real_matrix(4, 4, &[
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ]);
    let h1 = real_matrix(4, 4, &[
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        1.0, 0.0, 0.0, 0.0,
    ]);
    let h2 = real_matrix(4, 4, &[
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, -1.0, 0.0,
        0.0, -1.0, 0.0, 0.0,
        1.0, 0.0, 0.0, 0.0,
    ]);
    let h3 = real_matrix(4, 4, &[
        1.0, 0.0, 0.0, 0.0,
        0.0, -1.0, 0.0, 0.0,
        0.0, 0.0, -1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ]);
    let model = AffineChoiModel {
        id: "pauli_t".into(),
        d: 2,
        h0: h0.scale(0.5),
        basis: vec![h1.scale(0.5), h2.scale(0.5), h3.scale(0.5)],
        variable_names: vec!["alpha".into(), "beta".into(), "gamma".into()],
        convex_relations: vec![],
        independent_set: vec![0, 1, 2],
        param_names: vec!["alpha".into(), "beta".into(), "gamma".into()],
        h_of_theta: identity_map,
        extract_closed_form: Some(extract),
        cp_condition: pauli_t_cp_condition,
        interior_point: vec![0.0, 0.0, 0.0],
        param_box: vec![(-1.0, 1.0); 3],
        independent_measurements: true,
    };
    model.validate().expect("shipped Pauli model is valid");
    model
}
