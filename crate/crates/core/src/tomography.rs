//! Tomography configurations, the probability model `p = Tr(R X)` with
//! `R = ρᵀ ⊗ M`, and Monte-Carlo generation of measurement records.
//!
//! Sampling uses `ChaCha8Rng` seeded from a `u64`. Counts within a
//! configuration are drawn by sequential conditional binomials, and
//! configurations consume one generator stream in order.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::channels::{mub_bases, SOLVER_CPTP_TOL};
use crate::error::{Error, Result};
use crate::qcore::{
    self, c, hermitian_deviation, identity, kron, sigma_x, sigma_y, sigma_z, ChoiMatrix,
    ComplexMatrix, ComplexVector, DensityMatrix,
};

/// Relative frequencies (or exact probabilities), indexed `[configuration][outcome]`.
pub type FrequencyTable = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    elements: Vec<ComplexMatrix>,
}

impl Povm {
    pub fn new(elements: Vec<ComplexMatrix>) -> Result<Self> {
        let first = elements
            .first()
            .ok_or_else(|| Error::InvalidPovm("no elements".into()))?;
        let d = qcore::ensure_square(first)?;
        let mut sum = ComplexMatrix::zeros(d, d);
        for (k, m) in elements.iter().enumerate() {
            if m.shape() != (d, d) {
                return Err(Error::InvalidPovm(format!("element {k} has shape {:?}", m.shape())));
            }
            if hermitian_deviation(m) > 1e-10 {
                return Err(Error::InvalidPovm(format!("element {k} is not Hermitian")));
            }
            let min_eig = qcore::min_eigenvalue(m)?;
            if min_eig < -1e-10 {
                return Err(Error::InvalidPovm(format!(
                    "element {k} has eigenvalue {min_eig:e}"
                )));
            }
            sum += m;
        }
        let dev = (sum - identity(d)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > 1e-10 {
            return Err(Error::InvalidPovm(format!("elements sum to I only within {dev:e}")));
        }
        Ok(Self { elements })
    }

    /// Rank-one projectors onto an orthonormal basis.
    pub fn projective(basis: &[ComplexVector]) -> Result<Self> {
        Self::new(basis.iter().map(|v| v * v.adjoint()).collect())
    }

    /// Two-outcome POVM `{(I + P)/2, (I − P)/2}` of a Pauli observable.
    pub fn from_observable_pm(p: &ComplexMatrix) -> Result<Self> {
        let d = p.nrows();
        Self::new(vec![
            (identity(d) + p).scale(0.5),
            (identity(d) - p).scale(0.5),
        ])
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn num_outcomes(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomographyConfiguration {
    pub rho: DensityMatrix,
    pub povm: Povm,
    pub n_shots: u64,
}

impl TomographyConfiguration {
    pub fn new(rho: DensityMatrix, povm: Povm, n_shots: u64) -> Result<Self> {
        if rho.dim() != povm.dim() {
            return Err(Error::DimensionMismatch {
                expected: format!("input state of dimension {}", povm.dim()),
                found: format!("dimension {}", rho.dim()),
            });
        }
        Ok(Self { rho, povm, n_shots })
    }

    /// The `R` operators of every outcome.
    pub fn r_operators(&self) -> Vec<ComplexMatrix> {
        self.povm
            .elements()
            .iter()
            .map(|m| kron(&self.rho.matrix().transpose(), m))
            .collect()
    }
}

/// Outcome counts `c[γ][α]`; per-configuration totals are the row sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementRecord {
    counts: Vec<Vec<u64>>,
}

impl MeasurementRecord {
    pub fn new(counts: Vec<Vec<u64>>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn totals(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    /// Writes `gamma,alpha,count` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "gamma,alpha,count")?;
        for (g, row) in self.counts.iter().enumerate() {
            for (a, count) in row.iter().enumerate() {
                writeln!(out, "{g},{a},{count}")?;
            }
        }
        Ok(())
    }
}

/// `R = ρᵀ ⊗ M` for a Hermitian measurement operator `M`.
pub fn r_operator(rho: &DensityMatrix, m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if m.shape() != (rho.dim(), rho.dim()) {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", rho.dim()),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(kron(&rho.matrix().transpose(), m))
}

/// `Tr(R X)` for each outcome, clamped to `[0, 1]` and renormalized.
pub fn outcome_probs(x: &ChoiMatrix, config: &TomographyConfiguration) -> Result<Vec<f64>> {
    if x.dim() != config.rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("channel on dimension {}", config.rho.dim()),
            found: format!("dimension {}", x.dim()),
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
    let raw: Vec<f64> = config
        .r_operators()
        .iter()
        .map(|r| qcore::trace(&(r * x.matrix())).re.clamp(0.0, 1.0))
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|p| p / total).collect())
}

/// Exact outcome probabilities for every configuration.
pub fn exact_frequencies(x: &ChoiMatrix, configs: &[TomographyConfiguration]) -> Result<FrequencyTable> {
    configs.iter().map(|cfg| outcome_probs(x, cfg)).collect()
}

/// Multinomial draw of `n` trials by sequential conditional binomials.
pub fn sample_multinomial<R: rand::Rng>(probs: &[f64], n: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut mass: f64 = probs.iter().sum();
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == probs.len() {
            counts[k] = remaining;
            break;
        }
        let conditional = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining, conditional)
            .expect("conditional probability lies in [0, 1]")
            .sample(rng);
        counts[k] = draw;
        remaining -= draw;
        mass -= p;
    }
    counts
}

pub fn simulate_record(
    x: &ChoiMatrix,
    configs: &[TomographyConfiguration],
    rng_seed: u64,
) -> Result<MeasurementRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut counts = Vec::with_capacity(configs.len());
    for cfg in configs {
        let probs = outcome_probs(x, cfg)?;
        counts.push(sample_multinomial(&probs, cfg.n_shots, &mut rng));
    }
    Ok(MeasurementRecord::new(counts))
}

/// `p̂_γ(α) = c_{α,γ} / n_γ`.
pub fn relative_frequencies(record: &MeasurementRecord) -> Result<FrequencyTable> {
    record
        .counts()
        .iter()
        .enumerate()
        .map(|(g, row)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                return Err(Error::ZeroShots(g));
            }
            Ok(row.iter().map(|&c| c as f64 / total as f64).collect())
        })
        .collect()
}

/// Equal split of `n_total` shots; the remainder goes to the earliest configurations.
pub fn split_shots(n_total: u64, k: usize) -> Vec<u64> {
    let k64 = k as u64;
    (0..k64)
        .map(|i| n_total / k64 + u64::from(i < n_total % k64))
        .collect()
}

/// Pure qubit state with Bloch vector `(1,1,1)/√3`.
pub fn qubit_input_state() -> DensityMatrix {
    let r = 1.0 / 3f64.sqrt();
    DensityMatrix::from_bloch([r, r, r]).expect("unit Bloch vector")
}

/// Three configurations measuring `σ₁, σ₂, σ₃` on the shared qubit input.
pub fn standard_qubit_configs(n_total: u64) -> Vec<TomographyConfiguration> {
    let rho = qubit_input_state();
    [sigma_x(), sigma_y(), sigma_z()]
        .iter()
        .zip(split_shots(n_total, 3))
        .map(|(p, n)| {
            let povm = Povm::from_observable_pm(p).expect("Pauli POVM is valid");
            TomographyConfiguration::new(rho.clone(), povm, n).expect("qubit dims agree")
        })
        .collect()
}

/// Qutrit input `|Ψ⟩ ∝ Σᵢ |ψ_{i,1}⟩` over the first vector of each MUB,
/// together with the norm of the unnormalized sum.
pub fn qutrit_input_state() -> Result<(DensityMatrix, f64)> {
    let bases = mub_bases(3)?;
    let mut psi = ComplexVector::from_element(3, c(0.0, 0.0));
    for b in &bases {
        psi += &b[0];
    }
    let norm = psi.norm();
    if norm < 1e-12 {
        return Err(Error::Config("degenerate qutrit input superposition".into()));
    }
    Ok((DensityMatrix::from_pure(&psi)?, norm))
}

/// Four configurations, one projective measurement per MUB, shared qutrit input.
pub fn standard_qutrit_configs(n_total: u64) -> Result<Vec<TomographyConfiguration>> {
    let (rho, _) = qutrit_input_state()?;
    let bases = mub_bases(3)?;
    bases
        .iter()
        .zip(split_shots(n_total, bases.len()))
        .map(|(b, n)| TomographyConfiguration::new(rho.clone(), Povm::projective(b)?, n))
        .collect()
}

/// Standard configurations for a system dimension (2 or 3).
pub fn standard_configs(d: usize, n_total: u64) -> Result<Vec<TomographyConfiguration>> {
    match d {
        2 => Ok(standard_qubit_configs(n_total)),
        3 => standard_qutrit_configs(n_total),
        _ => Err(Error::Config(format!("no standard configurations for dimension {d}"))),
    }
}

/// Standard configurations with `n_per_config` shots in each.
pub fn standard_configs_per_setting(d: usize, n_per_config: u64) -> Result<Vec<TomographyConfiguration>> {
    let k = standard_configs(d, 0)?.len() as u64;
    standard_configs(d, n_per_config.saturating_mul(k))
}
