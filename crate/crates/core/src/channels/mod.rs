//! Channel model families with an affine Choi parametrization
//! `X(h) = H₀ + Σₖ hₖ Hₖ`, the three shipped families, and Kraus/action
//! based constructions used to cross-check them.

mod gad;
mod gen_pauli;
mod pauli_t;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::qcore::{
    self, hermitian_deviation, identity, kron, partial_trace, vec_outer, ChoiMatrix,
    ComplexMatrix, DensityMatrix, TensorFactor, ZERO,
};

pub use gad::{gad_kraus, gad_model};
pub use gen_pauli::{gen_pauli_apply, gen_pauli_cp_condition, gen_pauli_model, mub_bases, Basis};
pub use pauli_t::{pauli_t_cp_condition, pauli_t_model};

/// Identifiers accepted by [`model_by_id`].
pub const MODEL_IDS: [&str; 3] = ["gad", "pauli_t", "gen_pauli_3"];

/// Choi-level tolerance used when checking estimated (solver-produced) channels.
pub const SOLVER_CPTP_TOL: f64 = 1e-7;

pub fn model_by_id(id: &str) -> Result<AffineChoiModel> {
    match id {
        "gad" => Ok(gad_model()),
        "pauli_t" => Ok(pauli_t_model()),
        "gen_pauli_3" => Ok(gen_pauli_model(3)?),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

/// Convex quadratic constraint `hᵀQh + cᵀh + r ≤ 0` with `Q ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexRelation {
    pub quadratic: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl ConvexRelation {
    pub fn new(quadratic: DMatrix<f64>, linear: DVector<f64>, constant: f64) -> Result<Self> {
        let m = linear.len();
        if quadratic.shape() != (m, m) {
            return Err(Error::InvalidModel(format!(
                "relation quadratic part is {:?}, expected {m}x{m}",
                quadratic.shape()
            )));
        }
        let sym = (&quadratic + quadratic.transpose()) * 0.5;
        if m > 0 {
            let min_eig = sym.clone().symmetric_eigen().eigenvalues.min();
            if min_eig < -1e-12 {
                return Err(Error::InvalidModel(format!(
                    "relation quadratic part is not PSD (min eigenvalue {min_eig:e})"
                )));
            }
        }
        Ok(Self {
            quadratic: sym,
            linear,
            constant,
        })
    }

    pub fn value(&self, h: &DVector<f64>) -> f64 {
        h.dot(&(&self.quadratic * h)) + self.linear.dot(h) + self.constant
    }

    pub fn gradient(&self, h: &DVector<f64>) -> DVector<f64> {
        &self.quadratic * h * 2.0 + &self.linear
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        &self.quadratic * 2.0
    }

    /// Linear functional whose minimization pushes `q(h)` up toward zero.
    pub fn tightening_objective(&self) -> DVector<f64> {
        -&self.linear
    }
}

/// Result of a model's closed-form parameter extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormExtraction {
    pub theta: Vec<f64>,
    /// Indices of parameters the variables carry no information about.
    pub unidentifiable: Vec<usize>,
}

/// A channel family `X(h) = H₀ + Σₖ hₖ Hₖ` together with the map from
/// physical parameters θ to the affine variables h.
#[derive(Debug, Clone)]
pub struct AffineChoiModel {
    pub id: String,
    pub d: usize,
    pub h0: ComplexMatrix,
    pub basis: Vec<ComplexMatrix>,
    pub variable_names: Vec<String>,
    pub convex_relations: Vec<ConvexRelation>,
    /// Zero-based indices of the variables that enter parameter extraction.
    pub independent_set: Vec<usize>,
    pub param_names: Vec<String>,
    pub h_of_theta: fn(&[f64]) -> Vec<f64>,
    pub extract_closed_form: Option<fn(&[f64]) -> ClosedFormExtraction>,
    /// Algebraic complete-positivity test on θ.
    pub cp_condition: fn(&[f64]) -> bool,
    pub interior_point: Vec<f64>,
    pub param_box: Vec<(f64, f64)>,
    /// Whether the standard measurements estimate each parameter independently
    /// (diagonal empirical covariance).
    pub independent_measurements: bool,
}

impl AffineChoiModel {
    pub fn num_variables(&self) -> usize {
        self.basis.len()
    }

    pub fn num_params(&self) -> usize {
        self.param_names.len()
    }

    /// `H₀ + Σ hₖHₖ`; positivity is not guaranteed.
    pub fn evaluate_choi(&self, h: &[f64]) -> Result<ChoiMatrix> {
        if h.len() != self.num_variables() {
            return Err(Error::LengthMismatch {
                what: "affine variables",
                expected: self.num_variables(),
                found: h.len(),
            });
        }
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        ChoiMatrix::new(self.affine_sum(h), self.d)
    }

    pub(crate) fn affine_sum(&self, h: &[f64]) -> ComplexMatrix {
        let mut x = self.h0.clone();
        for (hk, basis) in h.iter().zip(&self.basis) {
            x += basis.scale(*hk);
        }
        x
    }

    pub fn h_from_theta(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        Ok((self.h_of_theta)(theta))
    }

    pub fn choi_from_theta(&self, theta: &[f64]) -> Result<ChoiMatrix> {
        self.evaluate_choi(&self.h_from_theta(theta)?)
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::LengthMismatch {
                what: "channel parameters",
                expected: self.num_params(),
                found: theta.len(),
            });
        }
        Ok(())
    }

    pub fn is_cp(&self, theta: &[f64]) -> bool {
        theta.len() == self.num_params() && (self.cp_condition)(theta)
    }

    pub fn in_box(&self, theta: &[f64]) -> bool {
        theta
            .iter()
            .zip(&self.param_box)
            .all(|(t, (lo, hi))| *t >= lo - 1e-12 && *t <= hi + 1e-12)
    }

    /// Checks the structural invariants: Hermitian terms, well-formed
    /// relations and a strictly feasible interior point.
    pub fn validate(&self) -> Result<()> {
        let n = self.d * self.d;
        let m = self.num_variables();
        for (k, term) in std::iter::once(&self.h0).chain(&self.basis).enumerate() {
            if term.shape() != (n, n) {
                return Err(Error::InvalidModel(format!("H{k} has shape {:?}", term.shape())));
            }
            let dev = hermitian_deviation(term);
            if dev > 1e-12 {
                return Err(Error::InvalidModel(format!("H{k} is not Hermitian ({dev:e})")));
            }
        }
        if self.variable_names.len() != m || self.interior_point.len() != m {
            return Err(Error::InvalidModel("variable labels or interior point have wrong length".into()));
        }
        if self.param_box.len() != self.num_params() {
            return Err(Error::InvalidModel("parameter box has wrong length".into()));
        }
        if self.independent_set.iter().any(|&l| l >= m) {
            return Err(Error::InvalidModel("independent set index out of range".into()));
        }
        for rel in &self.convex_relations {
            if rel.linear.len() != m {
                return Err(Error::InvalidModel("relation has wrong arity".into()));
            }
        }
        let min_eig = qcore::min_eigenvalue(&self.affine_sum(&self.interior_point))?;
        if min_eig <= 1e-6 {
            return Err(Error::InvalidInteriorPoint(format!(
                "min eigenvalue of X(h0) is {min_eig:e}"
            )));
        }
        let h = DVector::from_column_slice(&self.interior_point);
        for (k, rel) in self.convex_relations.iter().enumerate() {
            let q = rel.value(&h);
            if q >= -1e-6 {
                return Err(Error::InvalidInteriorPoint(format!("relation {k} has slack {}", -q)));
            }
        }
        Ok(())
    }

    /// Largest trace-preservation defect of `X(h(θ))` on a regular grid over the
    /// parameter box (all points, CP or not: TP must hold everywhere).
    pub fn max_tp_defect_on_grid(&self, points_per_axis: usize) -> f64 {
        grid_points(&self.param_box, points_per_axis)
            .into_iter()
            .map(|theta| {
                let x = ChoiMatrix::new(self.affine_sum(&(self.h_of_theta)(&theta)), self.d)
                    .expect("model terms are Hermitian");
                x.tp_deviation()
            })
            .fold(0.0, f64::max)
    }
}

/// Cartesian grid with `points_per_axis` evenly spaced values per box axis.
pub fn grid_points(bounds: &[(f64, f64)], points_per_axis: usize) -> Vec<Vec<f64>> {
    let axis = |&(lo, hi): &(f64, f64)| -> Vec<f64> {
        if points_per_axis <= 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..points_per_axis)
            .map(|i| lo + (hi - lo) * i as f64 / (points_per_axis - 1) as f64)
            .collect()
    };
    let mut out = vec![Vec::new()];
    for b in bounds {
        let values = axis(b);
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Choi matrix of a linear map on `d×d` matrices, `X[(b1,a1),(b2,a2)] = E(|b1⟩⟨b2|)[(a1,a2)]`.
pub fn choi_from_map(d: usize, map: impl Fn(&ComplexMatrix) -> ComplexMatrix) -> ComplexMatrix {
    let mut x = ComplexMatrix::zeros(d * d, d * d);
    for b1 in 0..d {
        for b2 in 0..d {
            let mut unit = ComplexMatrix::zeros(d, d);
            unit[(b1, b2)] = qcore::ONE;
            let image = map(&unit);
            for a1 in 0..d {
                for a2 in 0..d {
                    x[(b1 * d + a1, b2 * d + a2)] = image[(a1, a2)];
                }
            }
        }
    }
    x
}

/// `Σₖ |Eₖ⟩⟩⟨⟨Eₖ|` for a trace-preserving Kraus set.
pub fn choi_from_kraus(kraus: &[ComplexMatrix]) -> Result<ChoiMatrix> {
    let first = kraus
        .first()
        .ok_or_else(|| Error::InvalidModel("empty Kraus set".into()))?;
    let d = qcore::ensure_square(first)?;
    let mut gram = ComplexMatrix::zeros(d, d);
    let mut x = ComplexMatrix::zeros(d * d, d * d);
    for k in kraus {
        if k.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: format!("{d}x{d}"),
                found: format!("{}x{}", k.nrows(), k.ncols()),
            });
        }
        gram += k.adjoint() * k;
        x += vec_outer(k, k)?;
    }
    let deviation = (gram - identity(d)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if deviation > qcore::TRACE_TOL {
        return Err(Error::NotTracePreserving { deviation });
    }
    ChoiMatrix::new(qcore::hermitian_part(&x), d)
}

/// Channel output `Tr₁((ρᵀ ⊗ I) X)`.
pub fn apply_choi(x: &ChoiMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let d = x.dim();
    if rho.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: format!("dimension {d}"),
            found: format!("dimension {}", rho.dim()),
        });
    }
    let tp = x.tp_deviation();
    if tp > SOLVER_CPTP_TOL {
        return Err(Error::NotTracePreserving { deviation: tp });
    }
    let min_eig = x.min_eigenvalue();
    if min_eig < -SOLVER_CPTP_TOL {
        return Err(Error::NotPsd { min_eig });
    }
    let lifted = kron(&rho.matrix().transpose(), &identity(d)) * x.matrix();
    let out = partial_trace(&lifted, TensorFactor::First, d)?;
    Ok(DensityMatrix::new_unchecked(out))
}

/// Kraus-form action `Σ Eᵢ ρ Eᵢ†`, used as an oracle for the Choi path.
pub fn apply_kraus(kraus: &[ComplexMatrix], rho: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::from_element(rho.nrows(), rho.ncols(), ZERO);
    for k in kraus {
        out += k * rho * k.adjoint();
    }
    out
}
