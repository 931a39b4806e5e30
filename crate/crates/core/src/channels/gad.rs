//! Generalized amplitude damping.
//!
//! Variables `h = (γ, pγ, sqrt(1−γ))`, linked by the convex relation
//! `h₃² + h₁ − 1 ≤ 0`, which is saturated on the model surface.

use nalgebra::{DMatrix, DVector};

use super::{AffineChoiModel, ClosedFormExtraction, ConvexRelation};
use crate::qcore::{c, real_matrix, ComplexMatrix};

/// Below this `|h₁|` the bias `p` drops out of the Choi matrix.
pub const GAD_IDENTIFIABILITY_FLOOR: f64 = 1e-6;

fn h_of_theta(theta: &[f64]) -> Vec<f64> {
    let (gamma, p) = (theta[0], theta[1]);
    vec![gamma, p * gamma, (1.0 - gamma).max(0.0).sqrt()]
}

fn extract(h: &[f64]) -> ClosedFormExtraction {
    let gamma = h[0];
    if gamma.abs() <= GAD_IDENTIFIABILITY_FLOOR {
        // p is not observable; report the box midpoint.
        return ClosedFormExtraction {
            theta: vec![gamma, 0.5],
            unidentifiable: vec![1],
        };
    }
    ClosedFormExtraction {
        theta: vec![gamma, h[1] / gamma],
        unidentifiable: vec![],
    }
}

fn cp_condition(theta: &[f64]) -> bool {
    theta.iter().all(|t| (-1e-12..=1.0 + 1e-12).contains(t))
}

pub fn gad_model() -> AffineChoiModel {
    let h0 = real_matrix(4, 4, &[
        1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ]);
    let h1 = real_matrix(4, 4, &[
        -1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
    ]);
    let h2 = real_matrix(4, 4, &[
        1.0, 0.0, 0.0, 0.0,
        0.0, -1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, -1.0,
    ]);
    let h3 = real_matrix(4, 4, &[
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        1.0, 0.0, 0.0, 0.0,
    ]);
    let relation = ConvexRelation::new(
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 1.0])),
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
        -1.0,
    )
    .expect("diagonal PSD quadratic");
    let model = AffineChoiModel {
        id: "gad".into(),
        d: 2,
        h0,
        basis: vec![h1, h2, h3],
        variable_names: vec!["gamma".into(), "p*gamma".into(), "sqrt(1-gamma)".into()],
        convex_relations: vec![relation],
        independent_set: vec![0, 1],
        param_names: vec!["gamma".into(), "p".into()],
        h_of_theta,
        extract_closed_form: Some(extract),
        cp_condition,
        interior_point: vec![0.5, 0.25, 0.6],
        param_box: vec![(0.0, 1.0), (0.0, 1.0)],
        independent_measurements: false,
    };
    model.validate().expect("shipped GAD model is valid");
    model
}

/// Standard Kraus set of generalized amplitude damping.
pub fn gad_kraus(gamma: f64, p: f64) -> Vec<ComplexMatrix> {
    let sp = p.sqrt();
    let sq = (1.0 - p).sqrt();
    let sg = gamma.sqrt();
    let sd = (1.0 - gamma).sqrt();
    let m = |a: f64, b: f64, cc: f64, d: f64| {
        ComplexMatrix::from_row_slice(2, 2, &[c(a, 0.0), c(b, 0.0), c(cc, 0.0), c(d, 0.0)])
    };
    vec![
        m(sp, 0.0, 0.0, sp * sd),
        m(0.0, sp * sg, 0.0, 0.0),
        m(sq * sd, 0.0, 0.0, sq),
        m(0.0, 0.0, sq * sg, 0.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::choi_from_kraus;
    use crate::qcore::{hs_norm, partial_trace, identity, TensorFactor};

    #[test]
    fn identity_at_zero_damping() {
        let model = gad_model();
        let h = (model.h_of_theta)(&[0.0, 0.37]);
        assert_eq!(h, vec![0.0, 0.0, 1.0]);
        let x = model.evaluate_choi(&h).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if [0, 3].contains(&i) && [0, 3].contains(&j) { 1.0 } else { 0.0 };
                assert_eq!(x.matrix()[(i, j)].re, expected);
            }
        }
    }

    #[test]
    fn substitution_example() {
        let model = gad_model();
        let h = (model.h_of_theta)(&[0.7, 0.3]);
        assert!((h[0] - 0.7).abs() < 1e-15);
        assert!((h[1] - 0.21).abs() < 1e-15);
        assert!((h[2] - 0.547_722_557_505_166_1).abs() < 1e-15);
        let x = model.evaluate_choi(&[0.7, 0.21, 0.3f64.sqrt()]).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| x.matrix()[(i, i)].re).collect();
        for (got, want) in diag.iter().zip([0.51, 0.49, 0.21, 0.79]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((x.matrix()[(0, 3)].re - 0.3f64.sqrt()).abs() < 1e-15);
        assert!((x.matrix()[(3, 0)].re - 0.3f64.sqrt()).abs() < 1e-15);
        let reduced = partial_trace(x.matrix(), TensorFactor::Second, 2).unwrap();
        assert!(hs_norm(&(reduced - identity(2))) < 1e-12);
    }

    #[test]
    fn closed_form_extraction() {
        let model = gad_model();
        let ex = (model.extract_closed_form.unwrap())(&[0.7, 0.21, 0.5]);
        assert!((ex.theta[0] - 0.7).abs() < 1e-15 && (ex.theta[1] - 0.3).abs() < 1e-15);
        assert!(ex.unidentifiable.is_empty());
        let ex = (model.extract_closed_form.unwrap())(&[1e-9, 1e-10, 1.0]);
        assert_eq!(ex.theta[0], 1e-9);
        assert_eq!(ex.unidentifiable, vec![1]);
    }

    #[test]
    fn kraus_matches_affine_model() {
        let model = gad_model();
        let x = choi_from_kraus(&gad_kraus(0.7, 0.3)).unwrap();
        let y = model.choi_from_theta(&[0.7, 0.3]).unwrap();
        assert!(hs_norm(&(x.matrix() - y.matrix())) < 1e-12);
    }

    #[test]
    fn interior_point_and_relation() {
        let model = gad_model();
        let rel = &model.convex_relations[0];
        let h = DVector::from_vec(vec![0.5, 0.25, 0.6]);
        assert!((rel.value(&h) + 0.14).abs() < 1e-15);
        let on_surface = DVector::from_vec((model.h_of_theta)(&[0.7, 0.3]));
        assert!(rel.value(&on_surface).abs() < 1e-15);
        assert_eq!(rel.tightening_objective().as_slice(), &[-1.0, 0.0, 0.0]);
    }
}
