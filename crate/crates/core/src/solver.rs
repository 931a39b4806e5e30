//! Log-det barrier path following for least-squares problems over the
//! affine Choi variables `h`.
//!
//! Each barrier stage minimizes `t·f₀(h) + φ(h)` with `t = 1/μ` by damped
//! Newton steps, where
//! `φ = −log det X(h) − Σ log(−qₖ(h)) − log(budget − V(h))`.
//! The main problem uses `f₀ = V`; auxiliary stages use a linear `f₀` and
//! keep `V` below a relaxed budget.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::channels::{AffineChoiModel, ConvexRelation};
use crate::error::{Error, Result};
use crate::qcore::{self, ComplexMatrix};
use crate::tomography::{FrequencyTable, TomographyConfiguration};

/// `V(h) = ‖Ah − b‖²` with one row per `(configuration, outcome)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub design: DMatrix<f64>,
    pub offset: DVector<f64>,
    /// `(γ, α)` for each row.
    pub rows: Vec<(usize, usize)>,
}

impl QuadraticObjective {
    pub fn new(design: DMatrix<f64>, offset: DVector<f64>, rows: Vec<(usize, usize)>) -> Result<Self> {
        if design.nrows() != offset.len() || rows.len() != offset.len() {
            return Err(Error::LengthMismatch {
                what: "objective rows",
                expected: design.nrows(),
                found: offset.len().min(rows.len()),
            });
        }
        if design.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { design, offset, rows })
    }

    pub fn num_variables(&self) -> usize {
        self.design.ncols()
    }

    pub fn residual(&self, h: &DVector<f64>) -> DVector<f64> {
        &self.design * h - &self.offset
    }

    pub fn value(&self, h: &DVector<f64>) -> f64 {
        self.residual(h).norm_squared()
    }

    pub fn gradient(&self, h: &DVector<f64>) -> DVector<f64> {
        self.design.tr_mul(&self.residual(h)) * 2.0
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        self.design.tr_mul(&self.design) * 2.0
    }

    /// `V(h + step) − V(h)` without cancellation.
    fn increment(&self, h: &DVector<f64>, step: &DVector<f64>) -> f64 {
        let r = self.residual(h);
        let dr = &self.design * step;
        dr.dot(&(&r * 2.0 + &dr))
    }

    /// Columns with no entry above `tol` in magnitude.
    pub fn empty_columns(&self, tol: f64) -> Vec<usize> {
        (0..self.design.ncols())
            .filter(|&k| self.design.column(k).amax() <= tol)
            .collect()
    }
}

/// Assembles `A[(α,γ),k] = Tr(R Hₖ)` and `b[(α,γ)] = p̂ − Tr(R H₀)`.
pub fn build_objective(
    model: &AffineChoiModel,
    configs: &[TomographyConfiguration],
    freqs: &FrequencyTable,
) -> Result<QuadraticObjective> {
    if freqs.len() != configs.len() {
        return Err(Error::MissingFrequencies(freqs.len().min(configs.len())));
    }
    let mut rows = Vec::new();
    let mut design_rows: Vec<f64> = Vec::new();
    let mut offset = Vec::new();
    let m = model.num_variables();
    let real_trace = |a: &ComplexMatrix, b: &ComplexMatrix| -> Result<f64> {
        let t = trace_product(a, b);
        if t.im.abs() >= 1e-10 {
            return Err(Error::InvalidModel(format!(
                "Tr(R H) has imaginary part {:e}",
                t.im
            )));
        }
        Ok(t.re)
    };
    for (g, (cfg, row)) in configs.iter().zip(freqs).enumerate() {
        if row.len() != cfg.povm.num_outcomes() {
            return Err(Error::MissingFrequencies(g));
        }
        if cfg.rho.dim() != model.d {
            return Err(Error::DimensionMismatch {
                expected: format!("configuration of dimension {}", model.d),
                found: format!("dimension {}", cfg.rho.dim()),
            });
        }
        for (a, (r, &p)) in cfg.r_operators().iter().zip(row).enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite);
            }
            rows.push((g, a));
            for hk in &model.basis {
                design_rows.push(real_trace(r, hk)?);
            }
            offset.push(p - real_trace(r, &model.h0)?);
        }
    }
    let design = DMatrix::from_row_slice(rows.len(), m, &design_rows);
    QuadraticObjective::new(design, DVector::from_vec(offset), rows)
}

fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> num_complex::Complex64 {
    let n = a.nrows();
    let mut acc = qcore::ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub mu_initial: f64,
    pub mu_factor: f64,
    pub mu_min: f64,
    /// Stage stops once `λ²/2` falls below this.
    pub newton_tol: f64,
    /// A stage whose line search stalls is accepted if `λ²/2` is below this.
    pub stall_tol: f64,
    pub max_newton_steps: usize,
    pub ls_slope: f64,
    pub ls_shrink: f64,
    /// Multiplicative relaxation of the auxiliary budget `V ≤ v*(1 + ε)`.
    pub aux_relaxation: f64,
    /// Additive floor on the auxiliary budget slack.
    pub aux_abs_slack: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mu_initial: 1.0,
            mu_factor: 10.0,
            mu_min: 1e-9,
            newton_tol: 1e-10,
            stall_tol: 1e-6,
            max_newton_steps: 200,
            ls_slope: 0.01,
            ls_shrink: 0.5,
            aux_relaxation: 1e-6,
            aux_abs_slack: 1e-12,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.mu_initial,
            self.mu_min,
            self.newton_tol,
            self.stall_tol,
            self.ls_slope,
            self.ls_shrink,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || self.aux_relaxation < 0.0
            || self.aux_abs_slack < 0.0
        {
            return Err(Error::Config("solver options must be positive".into()));
        }
        if self.mu_factor <= 1.0 || self.mu_min >= self.mu_initial {
            return Err(Error::Config("barrier schedule must decrease".into()));
        }
        if self.ls_slope >= 0.5 || self.ls_shrink >= 1.0 || self.max_newton_steps == 0 {
            return Err(Error::Config("invalid line-search parameters".into()));
        }
        Ok(())
    }

    fn schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut mu = self.mu_initial;
        while mu > self.mu_min * (1.0 + 1e-9) {
            out.push(mu);
            mu /= self.mu_factor;
        }
        out.push(self.mu_min);
        out
    }
}

/// One barrier stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    /// 0 for the main problem, `k` for the `k`-th auxiliary pass.
    pub pass: usize,
    pub mu: f64,
    pub newton_steps: usize,
    /// `f₀` at the end of the stage.
    pub objective: f64,
    pub min_eig: f64,
    /// Final `λ²/2`.
    pub decrement: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub h_star: Vec<f64>,
    /// `V(h*)` for least-squares problems, otherwise the linear objective.
    pub objective_value: f64,
    pub min_choi_eig: f64,
    pub relation_values: Vec<f64>,
    /// `‖∇f₀ + μ∇φ‖` at the last stage.
    pub kkt_residual: f64,
    pub stages: Vec<StageRecord>,
    pub converged: bool,
}

impl SolveOutcome {
    pub fn iterations(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.newton_steps).collect()
    }

    pub fn write_log_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "pass,mu,newton_steps,objective,min_eig")?;
        for s in &self.stages {
            writeln!(
                out,
                "{},{:e},{},{:e},{:e}",
                s.pass, s.mu, s.newton_steps, s.objective, s.min_eig
            )?;
        }
        Ok(())
    }
}

/// `h ↦ H₀ + Σ hₖHₖ`.
#[derive(Debug, Clone, Copy)]
pub struct AffineLmi<'a> {
    pub h0: &'a ComplexMatrix,
    pub basis: &'a [ComplexMatrix],
}

impl<'a> AffineLmi<'a> {
    pub fn from_model(model: &'a AffineChoiModel) -> Self {
        Self {
            h0: &model.h0,
            basis: &model.basis,
        }
    }

    pub fn evaluate(&self, h: &DVector<f64>) -> ComplexMatrix {
        let mut x = self.h0.clone();
        for (hk, &v) in self.basis.iter().zip(h.iter()) {
            x += hk.scale(v);
        }
        x
    }
}

/// `V(h) ≤ bound`.
#[derive(Debug, Clone, Copy)]
pub struct BudgetConstraint<'a> {
    pub objective: &'a QuadraticObjective,
    pub bound: f64,
}

/// Minimize `quadratic + linear` over `X(h) ≻ 0`, `qₖ(h) < 0` and the budget.
#[derive(Debug, Clone, Copy)]
pub struct BarrierProblem<'a> {
    pub quadratic: Option<&'a QuadraticObjective>,
    pub linear: Option<&'a DVector<f64>>,
    pub lmi: AffineLmi<'a>,
    pub relations: &'a [ConvexRelation],
    pub budget: Option<BudgetConstraint<'a>>,
}

struct Point {
    h: DVector<f64>,
    /// Lower Cholesky factor of `X(h)`.
    chol: ComplexMatrix,
    log_det: f64,
    relation_values: Vec<f64>,
    budget_slack: Option<f64>,
}

impl<'a> BarrierProblem<'a> {
    fn dim(&self) -> usize {
        self.lmi.basis.len()
    }

    fn f0(&self, h: &DVector<f64>) -> f64 {
        self.quadratic.map_or(0.0, |q| q.value(h)) + self.linear.map_or(0.0, |c| c.dot(h))
    }

    fn f0_increment(&self, h: &DVector<f64>, step: &DVector<f64>) -> f64 {
        self.quadratic.map_or(0.0, |q| q.increment(h, step)) + self.linear.map_or(0.0, |c| c.dot(step))
    }

    fn f0_gradient(&self, h: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        if let Some(q) = self.quadratic {
            g += q.gradient(h);
        }
        if let Some(c) = self.linear {
            g += c;
        }
        g
    }

    fn f0_hessian(&self) -> DMatrix<f64> {
        self.quadratic
            .map_or_else(|| DMatrix::zeros(self.dim(), self.dim()), |q| q.hessian())
    }

    /// `None` outside the strict domain of the barrier.
    fn point(&self, h: DVector<f64>) -> Option<Point> {
        if h.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let relation_values: Vec<f64> = self.relations.iter().map(|r| r.value(&h)).collect();
        if relation_values.iter().any(|&q| q >= 0.0) {
            return None;
        }
        let budget_slack = match self.budget {
            Some(b) => {
                let s = b.bound - b.objective.value(&h);
                if s <= 0.0 {
                    return None;
                }
                Some(s)
            }
            None => None,
        };
        let chol = cholesky_lower(&self.lmi.evaluate(&h))?;
        let log_det = 2.0 * chol.diagonal().iter().map(|z| z.re.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return None;
        }
        Some(Point {
            h,
            chol,
            log_det,
            relation_values,
            budget_slack,
        })
    }

    /// `φ(new) − φ(old)` for `new = old + step`.
    fn barrier_increment(&self, old: &Point, new: &Point, step: &DVector<f64>) -> f64 {
        let mut delta = -(new.log_det - old.log_det);
        for (rel, &q_old) in self.relations.iter().zip(&old.relation_values) {
            let dq = step.dot(&(&rel.quadratic * (&old.h * 2.0 + step))) + rel.linear.dot(step);
            delta -= (dq / q_old).ln_1p();
        }
        if let (Some(b), Some(s_old)) = (self.budget, old.budget_slack) {
            let dv = b.objective.increment(&old.h, step);
            delta -= (-dv / s_old).ln_1p();
        }
        delta
    }

    /// Gradient and Hessian of `φ`.
    fn barrier_derivatives(&self, p: &Point) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.dim();
        let mut grad = DVector::zeros(m);
        let mut hess = DMatrix::zeros(m, m);
        let l = &p.chol;
        let whitened: Vec<ComplexMatrix> = self
            .lmi
            .basis
            .iter()
            .map(|hk| {
                let y = l.solve_lower_triangular(hk).expect("Cholesky factor is nonsingular");
                l.solve_lower_triangular(&y.adjoint())
                    .expect("Cholesky factor is nonsingular")
            })
            .collect();
        for k in 0..m {
            grad[k] = -qcore::trace(&whitened[k]).re;
            for j in 0..=k {
                let v: f64 = whitened[k]
                    .iter()
                    .zip(whitened[j].iter())
                    .map(|(a, b)| (a * b.conj()).re)
                    .sum();
                hess[(k, j)] = v;
                hess[(j, k)] = v;
            }
        }
        for (rel, &q) in self.relations.iter().zip(&p.relation_values) {
            let gq = rel.gradient(&p.h);
            grad += &gq / -q;
            hess += rel.hessian() / -q + &gq * gq.transpose() / (q * q);
        }
        if let (Some(b), Some(s)) = (self.budget, p.budget_slack) {
            let gv = b.objective.gradient(&p.h);
            grad += &gv / s;
            hess += b.objective.hessian() / s + &gv * gv.transpose() / (s * s);
        }
        (grad, hess)
    }

    fn min_eig(&self, h: &DVector<f64>) -> f64 {
        qcore::min_eigenvalue(&self.lmi.evaluate(h)).unwrap_or(f64::NAN)
    }
}

/// Lower factor `L` with `X = L L†`, or `None` unless `X` is positive definite.
fn cholesky_lower(x: &ComplexMatrix) -> Option<ComplexMatrix> {
    let n = x.nrows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = x[(j, j)].re;
        for k in 0..j {
            diag -= l[(j, k)].norm_sqr();
        }
        if !(diag > 0.0) {
            return None;
        }
        let pivot = diag.sqrt();
        l[(j, j)] = qcore::c(pivot, 0.0);
        for i in j + 1..n {
            let mut v = x[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / pivot;
        }
    }
    Some(l)
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = Cholesky::new(hess.clone()) {
        return Some(-ch.solve(grad));
    }
    let scale = hess.diagonal().amax().max(1.0);
    let mut ridge = scale * 1e-14;
    while ridge < scale {
        let shifted = hess + DMatrix::identity(hess.nrows(), hess.ncols()) * ridge;
        if let Some(ch) = Cholesky::new(shifted) {
            return Some(-ch.solve(grad));
        }
        ridge *= 100.0;
    }
    None
}

enum StageEnd {
    Converged,
    Stalled,
}

/// Runs the barrier path from a strictly feasible `start`.
///
/// `pass` only labels the stage records.
pub fn barrier_solve(
    problem: &BarrierProblem<'_>,
    start: &[f64],
    opts: &SolverOptions,
    pass: usize,
) -> Result<SolveOutcome> {
    opts.validate()?;
    let m = problem.dim();
    if start.len() != m {
        return Err(Error::LengthMismatch {
            what: "start point",
            expected: m,
            found: start.len(),
        });
    }
    let mut current = problem.point(DVector::from_column_slice(start)).ok_or_else(|| {
        Error::InvalidInteriorPoint(format!("{start:?} is not strictly feasible"))
    })?;
    let f0_hess = problem.f0_hessian();
    let mut stages = Vec::new();
    let mut kkt_residual = 0.0;
    let mut all_converged = true;

    for mu in opts.schedule() {
        let t = 1.0 / mu;
        let mut steps = 0;
        let mut decrement = 0.0;
        let end = loop {
            let (bg, bh) = problem.barrier_derivatives(&current);
            let grad = problem.f0_gradient(&current.h) * t + bg;
            if m == 0 {
                break StageEnd::Converged;
            }
            let hess = &f0_hess * t + bh;
            let Some(dir) = newton_direction(&hess, &grad) else {
                break StageEnd::Stalled;
            };
            let slope = grad.dot(&dir);
            decrement = -slope / 2.0;
            if decrement <= opts.newton_tol {
                break StageEnd::Converged;
            }
            if steps >= opts.max_newton_steps {
                break StageEnd::Stalled;
            }
            let mut s = 1.0;
            let mut accepted = None;
            for _ in 0..80 {
                let step = &dir * s;
                if let Some(candidate) = problem.point(&current.h + &step) {
                    let change = t * problem.f0_increment(&current.h, &step)
                        + problem.barrier_increment(&current, &candidate, &step);
                    if change <= opts.ls_slope * s * slope {
                        accepted = Some(candidate);
                        break;
                    }
                }
                s *= opts.ls_shrink;
            }
            steps += 1;
            match accepted {
                Some(p) => current = p,
                None => break StageEnd::Stalled,
            }
        };
        let converged = match end {
            StageEnd::Converged => true,
            StageEnd::Stalled => decrement <= opts.stall_tol,
        };
        let (bg, _) = problem.barrier_derivatives(&current);
        kkt_residual = (problem.f0_gradient(&current.h) + bg * mu).norm();
        stages.push(StageRecord {
            pass,
            mu,
            newton_steps: steps,
            objective: problem.f0(&current.h),
            min_eig: problem.min_eig(&current.h),
            decrement,
            converged,
        });
        if !converged {
            all_converged = false;
            break;
        }
    }

    let outcome = SolveOutcome {
        objective_value: problem.f0(&current.h),
        min_choi_eig: problem.min_eig(&current.h),
        relation_values: current.relation_values.clone(),
        h_star: current.h.as_slice().to_vec(),
        kkt_residual,
        stages,
        converged: all_converged,
    };
    if !all_converged {
        return Err(Error::NotConverged(Box::new(outcome)));
    }
    Ok(outcome)
}

/// Least-squares fit over the model's feasible set from its interior point.
pub fn solve_main(
    model: &AffineChoiModel,
    objective: &QuadraticObjective,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    if objective.num_variables() != model.num_variables() {
        return Err(Error::LengthMismatch {
            what: "objective columns",
            expected: model.num_variables(),
            found: objective.num_variables(),
        });
    }
    let problem = BarrierProblem {
        quadratic: Some(objective),
        linear: None,
        lmi: AffineLmi::from_model(model),
        relations: &model.convex_relations,
        budget: None,
    };
    barrier_solve(&problem, &model.interior_point, opts, 0)
}

/// One pass per convex relation, each minimizing the relation's tightening
/// direction while keeping `V` within the relaxed budget of the previous pass.
pub fn solve_auxiliary_sequence(
    model: &AffineChoiModel,
    objective: &QuadraticObjective,
    main: &SolveOutcome,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    if !main.converged {
        return Err(Error::InfeasibleStage {
            stage: 0,
            reason: "main problem did not converge".into(),
        });
    }
    let mut result = main.clone();
    for (k, relation) in model.convex_relations.iter().enumerate() {
        let direction = relation.tightening_objective();
        let v_prev = objective.value(&DVector::from_column_slice(&result.h_star));
        let problem = BarrierProblem {
            quadratic: None,
            linear: Some(&direction),
            lmi: AffineLmi::from_model(model),
            relations: &model.convex_relations,
            budget: Some(BudgetConstraint {
                objective,
                bound: v_prev * (1.0 + opts.aux_relaxation) + opts.aux_abs_slack,
            }),
        };
        let stage = match barrier_solve(&problem, &result.h_star, opts, k + 1) {
            Ok(s) => s,
            Err(Error::InvalidInteriorPoint(reason)) => {
                return Err(Error::InfeasibleStage { stage: k + 1, reason })
            }
            Err(Error::NotConverged(mut partial)) => {
                let mut stages = result.stages;
                stages.append(&mut partial.stages);
                partial.stages = stages;
                return Err(Error::NotConverged(partial));
            }
            Err(e) => return Err(e),
        };
        let mut stages = result.stages;
        stages.extend(stage.stages);
        result = SolveOutcome {
            objective_value: objective.value(&DVector::from_column_slice(&stage.h_star)),
            stages,
            ..stage
        };
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{gad_model, model_by_id, pauli_t_model};
    use crate::tomography::{exact_frequencies, standard_configs, standard_qubit_configs};

    fn exact_objective(model: &AffineChoiModel, theta: &[f64]) -> QuadraticObjective {
        let configs = standard_configs(model.d, 3000).unwrap();
        let x = model.choi_from_theta(theta).unwrap();
        let freqs = exact_frequencies(&x, &configs).unwrap();
        build_objective(model, &configs, &freqs).unwrap()
    }

    fn direct_misfit(
        model: &AffineChoiModel,
        configs: &[TomographyConfiguration],
        freqs: &FrequencyTable,
        h: &[f64],
    ) -> f64 {
        let x = model.affine_sum(h);
        let mut total = 0.0;
        for (cfg, row) in configs.iter().zip(freqs) {
            for (r, p) in cfg.r_operators().iter().zip(row) {
                let pred = qcore::trace(&(r * &x)).re;
                total += (p - pred).powi(2);
            }
        }
        total
    }

    #[test]
    fn objective_matches_direct_evaluation() {
        for id in ["gad", "pauli_t", "gen_pauli_3"] {
            let model = model_by_id(id).unwrap();
            let configs = standard_configs(model.d, 900).unwrap();
            let freqs: FrequencyTable = configs
                .iter()
                .enumerate()
                .map(|(g, c)| {
                    let k = c.povm.num_outcomes();
                    (0..k).map(|a| ((g * 7 + a * 3) % 5) as f64 / 10.0).collect()
                })
                .collect();
            let obj = build_objective(&model, &configs, &freqs).unwrap();
            let h: Vec<f64> = (0..model.num_variables()).map(|k| 0.1 * k as f64 - 0.05).collect();
            let v = obj.value(&DVector::from_column_slice(&h));
            assert!((v - direct_misfit(&model, &configs, &freqs, &h)).abs() < 1e-12, "{id}");
        }
    }

    #[test]
    fn identity_data_zeroes_pauli_residual() {
        let model = pauli_t_model();
        let obj = exact_objective(&model, &[1.0, 1.0, 1.0]);
        assert!(obj.value(&DVector::from_vec(vec![1.0, 1.0, 1.0])) < 1e-28);
    }

    #[test]
    fn degenerate_single_row() {
        let model = AffineChoiModel {
            basis: vec![],
            variable_names: vec![],
            convex_relations: vec![],
            independent_set: vec![],
            interior_point: vec![],
            ..pauli_t_model()
        };
        let configs = &standard_qubit_configs(10)[..1];
        let freqs = vec![vec![0.3, 0.7]];
        let obj = build_objective(&model, configs, &freqs).unwrap();
        let r = &configs[0].r_operators()[0];
        let expected = (0.3 - qcore::trace(&(r * &model.h0)).re).powi(2)
            + (0.7 - qcore::trace(&(&configs[0].r_operators()[1] * &model.h0)).re).powi(2);
        assert!((obj.value(&DVector::zeros(0)) - expected).abs() < 1e-15);
        let out = solve_main(&model, &obj, &SolverOptions::default()).unwrap();
        assert!(out.converged && out.h_star.is_empty());
    }

    #[test]
    fn gad_exact_objective_is_minimal_at_truth() {
        let model = gad_model();
        let obj = exact_objective(&model, &[0.7, 0.3]);
        let h = DVector::from_vec(model.h_from_theta(&[0.7, 0.3]).unwrap());
        assert!(obj.value(&h) < 1e-20);
        for k in 0..3 {
            let mut moved = h.clone();
            moved[k] += 1e-3;
            assert!(obj.value(&moved) > obj.value(&h));
        }
    }

    #[test]
    fn missing_frequencies_rejected() {
        let model = gad_model();
        let configs = standard_qubit_configs(300);
        let freqs = vec![vec![0.5, 0.5]; configs.len() - 1];
        assert!(matches!(
            build_objective(&model, &configs, &freqs),
            Err(Error::MissingFrequencies(_))
        ));
        let mut freqs = vec![vec![0.5, 0.5]; configs.len()];
        freqs[1] = vec![1.0];
        assert!(matches!(
            build_objective(&model, &configs, &freqs),
            Err(Error::MissingFrequencies(1))
        ));
    }

    #[test]
    fn pauli_noiseless_recovery() {
        let model = pauli_t_model();
        let obj = exact_objective(&model, &[0.3, -0.1, 0.1]);
        let out = solve_main(&model, &obj, &SolverOptions::default()).unwrap();
        assert!(out.converged);
        assert!(out.objective_value < 1e-9);
        for (got, want) in out.h_star.iter().zip([0.3, -0.1, 0.1]) {
            assert!((got - want).abs() < 1e-5);
        }
    }

    #[test]
    fn gad_noiseless_main_and_auxiliary() {
        let model = gad_model();
        let obj = exact_objective(&model, &[0.7, 0.3]);
        let opts = SolverOptions::default();
        let main = solve_main(&model, &obj, &opts).unwrap();
        assert!(main.objective_value < 1e-9);
        let aux = solve_auxiliary_sequence(&model, &obj, &main, &opts).unwrap();
        let h = &aux.h_star;
        assert!((h[2] * h[2] - (1.0 - h[0])).abs() < 1e-5);
        assert!((h[0] - 0.7).abs() < 1e-4 && (h[1] - 0.21).abs() < 1e-4);
        assert!(aux.min_choi_eig >= -1e-7);
        assert!(aux.relation_values.iter().all(|&q| q <= 1e-7));
        assert!(aux.stages.iter().any(|s| s.pass == 1));
    }

    #[test]
    fn no_relations_leaves_main_unchanged() {
        let model = pauli_t_model();
        let obj = exact_objective(&model, &[0.5, 0.3, 0.2]);
        let opts = SolverOptions::default();
        let main = solve_main(&model, &obj, &opts).unwrap();
        let aux = solve_auxiliary_sequence(&model, &obj, &main, &opts).unwrap();
        assert_eq!(main, aux);
    }

    #[test]
    fn normal_equations_oracle() {
        // Unconstrained optimum well inside the T-rep feasible set.
        let model = pauli_t_model();
        let configs = standard_configs(2, 600).unwrap();
        let x = model.choi_from_theta(&[0.2, -0.1, 0.15]).unwrap();
        let mut freqs = exact_frequencies(&x, &configs).unwrap();
        freqs[0][0] += 0.01;
        freqs[0][1] -= 0.01;
        freqs[2][1] += 0.02;
        freqs[2][0] -= 0.02;
        let obj = build_objective(&model, &configs, &freqs).unwrap();
        let ata = obj.design.tr_mul(&obj.design);
        let atb = obj.design.tr_mul(&obj.offset);
        let h_ls = ata.lu().solve(&atb).unwrap();
        let out = solve_main(&model, &obj, &SolverOptions::default()).unwrap();
        for (got, want) in out.h_star.iter().zip(h_ls.iter()) {
            assert!((got - want).abs() < 1e-7, "{got} vs {want}");
        }
        assert!(out.kkt_residual <= 1e-6 * (1.0 + obj.gradient(&h_ls).norm()));
    }

    #[test]
    fn objective_decreases_along_path() {
        let model = pauli_t_model();
        let configs = standard_configs(2, 600).unwrap();
        let freqs: FrequencyTable = vec![
            vec![0.95, 0.05],
            vec![0.1, 0.9],
            vec![0.6, 0.4],
        ];
        let obj = build_objective(&model, &configs, &freqs).unwrap();
        let out = solve_main(&model, &obj, &SolverOptions::default()).unwrap();
        for w in out.stages.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-10);
        }
        assert!(out.min_choi_eig >= -1e-7);
    }

    #[test]
    fn linear_objective_reaches_damping_boundary() {
        let model = gad_model();
        let direction = model.convex_relations[0].tightening_objective();
        let problem = BarrierProblem {
            quadratic: None,
            linear: Some(&direction),
            lmi: AffineLmi::from_model(&model),
            relations: &model.convex_relations,
            budget: None,
        };
        let out = barrier_solve(&problem, &model.interior_point, &SolverOptions::default(), 0).unwrap();
        let h = &out.h_star;
        assert!(out.converged);
        assert!((h[0] - 1.0).abs() < 1e-6);
        // The relation h₃² + h₁ ≤ 1 binds first; X itself stays interior.
        assert!(out.relation_values[0] <= 1e-7 && out.relation_values[0] > -1e-6);
        assert!(out.min_choi_eig >= -1e-7);
    }

    #[test]
    fn no_information_returns_interior_point() {
        let model = pauli_t_model();
        let obj = QuadraticObjective::new(
            DMatrix::zeros(4, 3),
            DVector::from_vec(vec![0.1, -0.2, 0.0, 0.3]),
            vec![(0, 0), (0, 1), (1, 0), (1, 1)],
        )
        .unwrap();
        let out = solve_main(&model, &obj, &SolverOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.objective_value - 0.14).abs() < 1e-15);
        assert!(out.h_star.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(obj.empty_columns(0.0), vec![0, 1, 2]);
    }

    #[test]
    fn bad_interior_point_rejected() {
        let model = AffineChoiModel {
            interior_point: vec![2.0, 0.0, 0.0],
            ..pauli_t_model()
        };
        let obj = exact_objective(&pauli_t_model(), &[0.1, 0.1, 0.1]);
        assert!(matches!(
            solve_main(&model, &obj, &SolverOptions::default()),
            Err(Error::InvalidInteriorPoint(_))
        ));
    }

    #[test]
    fn deterministic() {
        let model = gad_model();
        let obj = exact_objective(&model, &[0.4, 0.8]);
        let opts = SolverOptions::default();
        let a = solve_main(&model, &obj, &opts).unwrap();
        let b = solve_main(&model, &obj, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_has_one_row_per_stage() {
        let model = pauli_t_model();
        let obj = exact_objective(&model, &[0.3, -0.1, 0.1]);
        let out = solve_main(&model, &obj, &SolverOptions::default()).unwrap();
        let mut buf = Vec::new();
        out.write_log_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), out.stages.len() + 1);
        assert_eq!(out.stages.len(), 10);
        assert_eq!(out.iterations().len(), 10);
    }
}
