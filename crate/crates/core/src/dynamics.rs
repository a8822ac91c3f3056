//! Master-equation dynamics induced by a generator, used to check reductions
//! against the unreduced evolution.
//!
//! Density matrices are vectorized column by column, so
//! `vec(A rho B) = (B^T ⊗ A) vec(rho)`.

use crate::blockmat::{frobenius, svd, ComplexMatrix, C64};
use crate::error::{Error, Result};
use crate::generator::{identity, ItoGeneratorMatrix, ScaledGeneratorFamily};
use crate::reduce::adiabatic_eliminate;
use crate::report::DEFAULT_TOL;

/// Trace tolerance for a freshly constructed state.
pub const STATE_TRACE_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted for a freshly constructed state.
pub const STATE_EIGEN_TOL: f64 = 1e-10;
/// Largest trace drift accepted after propagation.
pub const PROPAGATION_TRACE_TOL: f64 = 1e-8;
/// Smallest eigenvalue accepted after propagation.
pub const PROPAGATION_EIGEN_TOL: f64 = 1e-8;
/// Trace-preservation tolerance of a superoperator.
pub const TRACE_PRESERVATION_TOL: f64 = 1e-10;

/// Errors at or below this are treated as exactly zero by the monotonicity
/// test of a convergence table.
pub const ZERO_ERROR: f64 = 1e-12;

fn min_eigenvalue(h: &ComplexMatrix) -> f64 {
    if h.nrows() == 0 {
        return 0.0;
    }
    h.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(rho: ComplexMatrix) -> Result<Self> {
        if rho.nrows() != rho.ncols() || rho.nrows() == 0 {
            return Err(Error::InvalidState(format!("shape {:?}", rho.shape())));
        }
        crate::blockmat::ensure_finite(&rho, "density matrix")?;
        let herm = frobenius(&(&rho - rho.adjoint()));
        if herm > STATE_TRACE_TOL * frobenius(&rho).max(1.0) {
            return Err(Error::InvalidState(format!("not Hermitian (residual {herm:e})")));
        }
        let rho = hermitian_part(&rho);
        let tr = rho.trace().re;
        if (tr - 1.0).abs() > STATE_TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let min = min_eigenvalue(&rho);
        if min < -STATE_EIGEN_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { rho })
    }

    /// `|j><j|` in dimension `d`.
    pub fn basis_state(d: usize, j: usize) -> Result<Self> {
        if j >= d {
            return Err(Error::InvalidState(format!("basis index {j} out of range for dimension {d}")));
        }
        let mut rho = ComplexMatrix::zeros(d, d);
        rho[(j, j)] = C64::new(1.0, 0.0);
        Ok(Self { rho })
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let v = ComplexMatrix::from_column_slice(psi.len(), 1, psi);
        let norm2 = v.norm_squared();
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return Err(Error::InvalidState("zero or non-finite state vector".into()));
        }
        Self::new(&v * v.adjoint() / C64::new(norm2, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn population(&self, j: usize) -> f64 {
        self.rho[(j, j)].re
    }
}

/// Linear map on column-vectorized `d x d` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    d: usize,
    matrix: ComplexMatrix,
}

impl Superoperator {
    /// Accepts only trace-preserving generators: `vec(I)^*` must be a left
    /// null vector.
    pub fn new(d: usize, matrix: ComplexMatrix) -> Result<Self> {
        if matrix.shape() != (d * d, d * d) {
            return Err(Error::DimensionMismatch(format!(
                "superoperator of shape {:?} for d = {d}",
                matrix.shape()
            )));
        }
        let residual = trace_leak(d, &matrix);
        let limit = TRACE_PRESERVATION_TOL * frobenius(&matrix).max(1.0);
        if residual > limit {
            return Err(Error::InvalidState(format!(
                "superoperator does not preserve trace (residual {residual:e} > {limit:e})"
            )));
        }
        Ok(Self { d, matrix })
    }

    pub fn zero(d: usize) -> Self {
        Self {
            d,
            matrix: ComplexMatrix::zeros(d * d, d * d),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    /// Apply to an arbitrary `d x d` matrix.
    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let v = ComplexMatrix::from_column_slice(self.d * self.d, 1, x.as_slice());
        let out = &self.matrix * v;
        ComplexMatrix::from_column_slice(self.d, self.d, out.as_slice())
    }
}

fn trace_leak(d: usize, m: &ComplexMatrix) -> f64 {
    let vec_id = ComplexMatrix::from_column_slice(d * d, 1, identity(d).as_slice());
    frobenius(&(vec_id.adjoint() * m))
}

/// Generator of `d rho / dt = -i[H, rho] + sum_j (c_j rho c_j^* - {c_j^* c_j, rho} / 2)`
/// with `c_j = L_j^*` and `H = (K - K^*) / (2i)`. In terms of the generator
/// blocks this is `K^* rho + rho K + sum_j L_j^* rho L_j`.
pub fn lindblad_generator(g: &ItoGeneratorMatrix) -> Result<Superoperator> {
    let hp = crate::generator::validate_hp(g, DEFAULT_TOL);
    if !hp.passed {
        return Err(Error::HpViolation(hp.describe_failures()));
    }
    let d = g.dim();
    let id = identity(d);
    let k = g.k();
    let mut sop = id.kronecker(&k.adjoint()) + k.transpose().kronecker(&id);
    for j in 0..g.channels() {
        let l = g.l_block(j);
        sop += l.transpose().kronecker(&l.adjoint());
    }
    Superoperator::new(d, sop)
}

/// `exp(t L) rho0`. Fails if the result drifts in trace by more than
/// [`PROPAGATION_TRACE_TOL`] or acquires an eigenvalue below
/// `-PROPAGATION_EIGEN_TOL`. The trace is never renormalized.
pub fn propagate(sop: &Superoperator, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidState(format!("propagation time must be finite and non-negative, got {t}")));
    }
    if rho0.dim() != sop.d {
        return Err(Error::DimensionMismatch(format!(
            "state of dimension {} for superoperator on dimension {}",
            rho0.dim(),
            sop.d
        )));
    }
    let rho = propagate_raw(sop, rho0.matrix(), t);
    let rho = hermitian_part(&rho);
    let drift = (rho.trace().re - 1.0).abs();
    if drift > PROPAGATION_TRACE_TOL {
        return Err(Error::PropagationAccuracy {
            drift,
            limit: PROPAGATION_TRACE_TOL,
        });
    }
    let min = min_eigenvalue(&rho);
    if min < -PROPAGATION_EIGEN_TOL {
        return Err(Error::InvalidState(format!("propagated state has eigenvalue {min:e}")));
    }
    Ok(DensityMatrix { rho })
}

/// `exp(t L)` applied to any matrix, with no state checks.
pub fn propagate_raw(sop: &Superoperator, x: &ComplexMatrix, t: f64) -> ComplexMatrix {
    if t == 0.0 {
        return x.clone();
    }
    let d = sop.d;
    let prop = (&sop.matrix * C64::new(t, 0.0)).exp();
    let v = ComplexMatrix::from_column_slice(d * d, 1, x.as_slice());
    ComplexMatrix::from_column_slice(d, d, (prop * v).as_slice())
}

/// The propagator `exp(t L)` as a superoperator matrix.
pub fn propagator(sop: &Superoperator, t: f64) -> ComplexMatrix {
    (&sop.matrix * C64::new(t, 0.0)).exp()
}

/// Half the trace norm (sum of singular values) of `a - b`.
pub fn trace_norm_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(0.5 * svd(&(a - b)).singular_values.iter().sum::<f64>())
}

pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    trace_norm_distance(a.matrix(), b.matrix())
}

/// One row of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub k: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub t: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// True when every error is strictly below the previous one, counting two
    /// errors at or below [`ZERO_ERROR`] as equal and acceptable. `None` for
    /// fewer than two rows.
    pub fn is_monotone(&self) -> Option<bool> {
        if self.rows.len() < 2 {
            return None;
        }
        Some(self.rows.windows(2).all(|w| {
            let (a, b) = (w[0].error, w[1].error);
            b < a || (a <= ZERO_ERROR && b <= ZERO_ERROR)
        }))
    }

    /// `e(k_i) / e(k_{i+1})` for consecutive rows; `None` where the later error
    /// is numerically zero.
    pub fn ratios(&self) -> Vec<Option<f64>> {
        self.rows
            .windows(2)
            .map(|w| (w[1].error > ZERO_ERROR).then(|| w[0].error / w[1].error))
            .collect()
    }
}

/// Compare the slow-subspace evolution of the full family at each `k` with
/// the evolution under the adiabatically eliminated generator.
///
/// `rho0_slow` lives on the slow subspace (in slow-basis coordinates). The
/// full state is compressed back with `V_s^* rho V_s` before comparison, so
/// population leaking into the fast space counts as error.
pub fn convergence_study(
    fam: &ScaledGeneratorFamily,
    rho0_slow: &DensityMatrix,
    t: f64,
    k_values: &[f64],
) -> Result<ConvergenceTable> {
    let vs = fam.decomposition().slow_basis();
    if rho0_slow.dim() != vs.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "initial state of dimension {} for slow dimension {}",
            rho0_slow.dim(),
            vs.ncols()
        )));
    }
    let reduced = adiabatic_eliminate(fam)?;
    let reference = propagate(&lindblad_generator(&reduced)?, rho0_slow, t)?;
    let embedded = DensityMatrix::new(vs * rho0_slow.matrix() * vs.adjoint())?;
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let full = propagate(&lindblad_generator(&fam.instantiate(k)?)?, &embedded, t)?;
        let compressed = vs.adjoint() * full.matrix() * vs;
        rows.push(ConvergenceRow {
            k,
            error: trace_norm_distance(&compressed, reference.matrix())?,
        });
    }
    Ok(ConvergenceTable { t, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{from_slh, real_matrix, SlhTriple};

    fn damping(gamma: f64) -> ItoGeneratorMatrix {
        // basis (g, e); c = sqrt(gamma) |g><e|
        let c = real_matrix(2, 2, &[0.0, gamma.sqrt(), 0.0, 0.0]);
        from_slh(&SlhTriple::unscattered(vec![c], ComplexMatrix::zeros(2, 2)).unwrap()).unwrap()
    }

    #[test]
    fn trivial_generator_gives_zero_superoperator() {
        let sop = lindblad_generator(&ItoGeneratorMatrix::trivial(3, 2)).unwrap();
        assert_eq!(sop.matrix(), Superoperator::zero(3).matrix());
    }

    #[test]
    fn amplitude_damping_closed_form() {
        let sop = lindblad_generator(&damping(1.0)).unwrap();
        let excited = DensityMatrix::basis_state(2, 1).unwrap();
        for t in [1.0, 2.0] {
            let rho = propagate(&sop, &excited, t).unwrap();
            assert!((rho.population(1) - (-t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let sop = lindblad_generator(&damping(0.3)).unwrap();
        let rho = DensityMatrix::pure(&[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        assert_eq!(propagate(&sop, &rho, 0.0).unwrap(), rho);
        assert_eq!(propagate(&Superoperator::zero(2), &rho, 5.0).unwrap().matrix(), rho.matrix());
        assert!(propagate(&sop, &rho, -1.0).is_err());
    }

    #[test]
    fn trace_distance_cases() {
        let a = DensityMatrix::basis_state(2, 0).unwrap();
        let b = DensityMatrix::basis_state(2, 1).unwrap();
        assert_eq!(trace_distance(&a, &a).unwrap(), 0.0);
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let eps = 0.125;
        let mix = DensityMatrix::new(a.matrix() * C64::new(1.0 - eps, 0.0) + b.matrix() * C64::new(eps, 0.0)).unwrap();
        assert!((trace_distance(&a, &mix).unwrap() - eps).abs() < 1e-15);
        assert!(trace_distance(&a, &DensityMatrix::basis_state(3, 0).unwrap()).is_err());
    }

    #[test]
    fn state_constructor_rejects_invalid() {
        assert!(DensityMatrix::new(real_matrix(2, 2, &[0.5, 0.0, 0.0, 0.6])).is_err());
        assert!(DensityMatrix::new(real_matrix(2, 2, &[1.5, 0.0, 0.0, -0.5])).is_err());
        assert!(DensityMatrix::new(real_matrix(2, 2, &[0.5, 0.1, 0.0, 0.5])).is_err());
    }

    #[test]
    fn non_trace_preserving_map_rejected() {
        assert!(Superoperator::new(1, real_matrix(1, 1, &[-1.0])).is_err());
    }

    #[test]
    fn monotonicity_rule() {
        let table = |e: &[f64]| ConvergenceTable {
            t: 1.0,
            rows: e.iter().enumerate().map(|(i, &error)| ConvergenceRow { k: i as f64, error }).collect(),
        };
        assert_eq!(table(&[0.1]).is_monotone(), None);
        assert_eq!(table(&[0.1, 0.05]).is_monotone(), Some(true));
        assert_eq!(table(&[0.1, 0.1]).is_monotone(), Some(false));
        assert_eq!(table(&[0.0, 1e-15, 0.0]).is_monotone(), Some(true));
        assert_eq!(table(&[0.4, 0.2]).ratios(), vec![Some(2.0)]);
    }
}
