//! Dense complex block-matrix algebra.
//!
//! Every generator matrix in this crate is carried as a [`BlockOperatorMatrix`]:
//! a dense complex matrix plus a labeled square block partition. Reductions are
//! Schur complements over label sets, so this module is the numerical core the
//! rest of the crate is written against.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;

/// A pivot counts as invertible iff its SVD condition number is below this.
pub const MAX_PIVOT_CONDITION: f64 = 1e12;

/// Relative residual above which a subspace inclusion is declared false.
pub const INCLUSION_TOL: f64 = 1e-9;

/// Default relative rank tolerance, `max(rows, cols) * eps`. Singular values
/// below `rank_tol * sigma_max` are treated as zero.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols).max(1) as f64 * f64::EPSILON
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.norm()
}

pub fn ensure_finite(m: &ComplexMatrix, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Thin singular value decomposition `a = u diag(sigma) v^*`, with singular
/// values in decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub singular_values: Vec<f64>,
    pub v: ComplexMatrix,
}

/// Thin SVD read off the Hermitian eigendecomposition of `[[0, a], [a^*, 0]]`,
/// whose eigenvalues are `+-sigma` with eigenvectors `(u, +-v) / sqrt(2)`.
///
/// nalgebra's bidiagonal SVD loses accuracy badly on some rank-deficient
/// inputs (reconstruction errors of order one), while its Hermitian
/// eigensolver stays backward stable. Singular vectors belonging to singular
/// values at roundoff level are not meaningful.
pub fn svd(a: &ComplexMatrix) -> Svd {
    let (m, n) = a.shape();
    let p = m.min(n);
    if p == 0 {
        return Svd {
            u: ComplexMatrix::zeros(m, 0),
            singular_values: Vec::new(),
            v: ComplexMatrix::zeros(n, 0),
        };
    }
    let mut h = ComplexMatrix::zeros(m + n, m + n);
    h.view_mut((0, m), (m, n)).copy_from(a);
    h.view_mut((m, 0), (n, m)).copy_from(&a.adjoint());
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..m + n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    order.truncate(p);
    let scale = C64::new(std::f64::consts::SQRT_2, 0.0);
    let u = ComplexMatrix::from_fn(m, p, |r, c| eig.eigenvectors[(r, order[c])] * scale);
    let v = ComplexMatrix::from_fn(n, p, |r, c| eig.eigenvectors[(m + r, order[c])] * scale);
    let singular_values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    Svd { u, singular_values, v }
}

/// 2-norm condition number `sigma_max / sigma_min`; infinite for singular or
/// non-square input, 1 for the empty matrix.
pub fn condition_number(m: &ComplexMatrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = svd(m).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve `a x = b` by partial-pivot LU after screening `a` with the
/// invertibility policy.
pub fn solve_checked(a: &ComplexMatrix, b: &ComplexMatrix, context: &str) -> Result<ComplexMatrix> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{context}: cannot solve {}x{} system with {}x{} right-hand side",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Ok(ComplexMatrix::zeros(0, b.ncols()));
    }
    let condition = condition_number(a);
    if !(condition < MAX_PIVOT_CONDITION) {
        return Err(Error::SingularPivot {
            context: context.to_string(),
            condition,
            limit: MAX_PIVOT_CONDITION,
        });
    }
    a.clone().lu().solve(b).ok_or_else(|| Error::SingularPivot {
        context: context.to_string(),
        condition: f64::INFINITY,
        limit: MAX_PIVOT_CONDITION,
    })
}

/// Inverse under the invertibility policy.
pub fn inverse_checked(a: &ComplexMatrix, context: &str) -> Result<ComplexMatrix> {
    solve_checked(a, &ComplexMatrix::identity(a.nrows(), a.nrows()), context)
}

/// Moore-Penrose pseudoinverse. Singular values at or below
/// `rank_tol * sigma_max` are dropped.
pub fn generalized_inverse(a: &ComplexMatrix, rank_tol: f64) -> Result<ComplexMatrix> {
    ensure_finite(a, "generalized_inverse input")?;
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return Ok(ComplexMatrix::zeros(c, r));
    }
    let dec = svd(a);
    let sigma_max = dec.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = rank_tol * sigma_max;
    let mut out = ComplexMatrix::zeros(c, r);
    for (i, &s) in dec.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (dec.v.column(i) * dec.u.column(i).adjoint()) * C64::new(1.0 / s, 0.0);
        }
    }
    Ok(out)
}

/// Orthonormal basis (as columns) of the column space of `m`.
fn range_basis(m: &ComplexMatrix, rank_tol: f64) -> ComplexMatrix {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return ComplexMatrix::zeros(r, 0);
    }
    let dec = svd(m);
    let sigma_max = dec.singular_values.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = dec
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > rank_tol * sigma_max && s > 0.0)
        .map(|(i, _)| i)
        .collect();
    let basis = ComplexMatrix::from_fn(r, keep.len(), |i, j| dec.u[(i, keep[j])]);
    // re-orthonormalize against eigenvector splitting error
    if keep.is_empty() {
        basis
    } else {
        basis.qr().q()
    }
}

/// Orthonormal basis (as columns) of the orthogonal complement of the column
/// space of `basis` inside `C^dim`.
///
/// Built by pivoted Gram-Schmidt over the standard basis vectors, so the
/// result is a deterministic function of `basis`; for a coordinate `basis`
/// it is exactly the remaining coordinate vectors, in index order.
pub fn orthonormal_complement(basis: &ComplexMatrix, rank_tol: f64) -> ComplexMatrix {
    let dim = basis.nrows();
    let gram = if basis.ncols() == 0 {
        0.0
    } else {
        frobenius(&(basis.adjoint() * basis - ComplexMatrix::identity(basis.ncols(), basis.ncols())))
    };
    let start = if gram <= 1e-12 {
        basis.clone()
    } else {
        range_basis(basis, rank_tol)
    };
    let mut q: Vec<DVector<C64>> = start.column_iter().map(|c| c.into_owned()).collect();
    let floor = rank_tol.max(1e-8);
    let mut used = vec![false; dim];
    while q.len() < dim {
        let residual = |j: usize| {
            let mut r = DVector::<C64>::zeros(dim);
            r[j] = C64::new(1.0, 0.0);
            // two passes of classical Gram-Schmidt
            for _ in 0..2 {
                for v in &q {
                    let c = v.dotc(&r);
                    if c != C64::new(0.0, 0.0) {
                        r -= v * c;
                    }
                }
            }
            r
        };
        let best = (0..dim)
            .filter(|&j| !used[j])
            .map(|j| (j, residual(j)))
            .fold(None::<(usize, DVector<C64>, f64)>, |acc, (j, r)| {
                let n = r.norm();
                match acc {
                    Some((_, _, bn)) if bn >= n => acc,
                    _ => Some((j, r, n)),
                }
            });
        match best {
            Some((j, r, n)) if n > floor => {
                used[j] = true;
                q.push(r / C64::new(n, 0.0));
            }
            _ => break,
        }
    }
    let extra = q.split_off(start.ncols());
    ComplexMatrix::from_fn(dim, extra.len(), |i, j| extra[j][i])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InclusionMode {
    /// `im(sub) ⊆ im(ambient)`
    Image,
    /// `ker(ambient) ⊆ ker(sub)`
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionCheck {
    pub included: bool,
    pub residual: f64,
    pub threshold: f64,
}

/// Numerical subspace inclusion test used by the generalized Schur complement.
pub fn inclusion_check(
    sub: &ComplexMatrix,
    ambient: &ComplexMatrix,
    mode: InclusionMode,
    rank_tol: f64,
) -> Result<InclusionCheck> {
    let residual = match mode {
        InclusionMode::Image => {
            if sub.nrows() != ambient.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "image inclusion needs equal row counts, got {} and {}",
                    sub.nrows(),
                    ambient.nrows()
                )));
            }
            let u = range_basis(ambient, rank_tol);
            let projected = &u * (u.adjoint() * sub);
            frobenius(&(sub - projected))
        }
        InclusionMode::Kernel => {
            if sub.ncols() != ambient.ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "kernel inclusion needs equal column counts, got {} and {}",
                    sub.ncols(),
                    ambient.ncols()
                )));
            }
            // row space of ambient = range of ambient^*; its complement is the kernel
            let v = range_basis(&ambient.adjoint(), rank_tol);
            let projected = (sub * &v) * v.adjoint();
            frobenius(&(sub - projected))
        }
    };
    let threshold = INCLUSION_TOL * frobenius(sub).max(1.0);
    Ok(InclusionCheck {
        included: residual <= threshold,
        residual,
        threshold,
    })
}

/// Block inverse of `[[p, q], [r, s]]` from `p^-1` and the inverse of
/// `s - r p^-1 q`. Fails when either is singular under the invertibility policy.
pub fn banachiewicz_inverse(
    p: &ComplexMatrix,
    q: &ComplexMatrix,
    r: &ComplexMatrix,
    s: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let (np, ns) = (p.nrows(), s.nrows());
    if p.ncols() != np || s.ncols() != ns || q.shape() != (np, ns) || r.shape() != (ns, np) {
        return Err(Error::DimensionMismatch("banachiewicz blocks".into()));
    }
    let p_inv = inverse_checked(p, "Banachiewicz leading block")?;
    let schur = s - r * &p_inv * q;
    let schur_inv = inverse_checked(&schur, "Banachiewicz Schur complement")?;
    let p_inv_q = &p_inv * q;
    let r_p_inv = r * &p_inv;
    let top_left = &p_inv + &p_inv_q * &schur_inv * &r_p_inv;
    let top_right = -(&p_inv_q * &schur_inv);
    let bottom_left = -(&schur_inv * &r_p_inv);
    let mut out = ComplexMatrix::zeros(np + ns, np + ns);
    out.view_mut((0, 0), (np, np)).copy_from(&top_left);
    out.view_mut((0, np), (np, ns)).copy_from(&top_right);
    out.view_mut((np, 0), (ns, np)).copy_from(&bottom_left);
    out.view_mut((np, np), (ns, ns)).copy_from(&schur_inv);
    Ok(out)
}

/// Gather `m[rows, cols]` into a new matrix.
pub fn select(m: &ComplexMatrix, rows: &[usize], cols: &[usize]) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockGroup {
    pub label: String,
    pub indices: Vec<usize>,
}

/// Labeled square block partition. The same groups index rows and columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    groups: Vec<BlockGroup>,
    dim: usize,
}

impl BlockPartition {
    pub fn new(groups: Vec<BlockGroup>) -> Result<Self> {
        let dim: usize = groups.iter().map(|g| g.indices.len()).sum();
        let mut seen = vec![false; dim];
        for (i, g) in groups.iter().enumerate() {
            if groups[..i].iter().any(|h| h.label == g.label) {
                return Err(Error::InvalidPartition(format!("duplicate label `{}`", g.label)));
            }
            for &idx in &g.indices {
                if idx >= dim || seen[idx] {
                    return Err(Error::InvalidPartition(format!(
                        "index {idx} in `{}` is out of range or repeated",
                        g.label
                    )));
                }
                seen[idx] = true;
            }
        }
        Ok(Self { groups, dim })
    }

    /// Partition into consecutive ranges of the given sizes.
    pub fn contiguous<S: AsRef<str>>(sizes: &[(S, usize)]) -> Result<Self> {
        let mut start = 0;
        let groups = sizes
            .iter()
            .map(|(label, size)| {
                let g = BlockGroup {
                    label: label.as_ref().to_string(),
                    indices: (start..start + size).collect(),
                };
                start += size;
                g
            })
            .collect();
        Self::new(groups)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn groups(&self) -> &[BlockGroup] {
        &self.groups
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|g| g.label.as_str())
    }

    pub fn contains(&self, label: &str) -> bool {
        self.groups.iter().any(|g| g.label == label)
    }

    pub fn indices(&self, label: &str) -> Result<&[usize]> {
        self.groups
            .iter()
            .find(|g| g.label == label)
            .map(|g| g.indices.as_slice())
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    fn gather(&self, labels: &[&str]) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for l in labels {
            out.extend_from_slice(self.indices(l)?);
        }
        Ok(out)
    }

    /// Groups not named in `labels`, in partition order.
    fn complement(&self, labels: &[&str]) -> Vec<&BlockGroup> {
        self.groups
            .iter()
            .filter(|g| !labels.contains(&g.label.as_str()))
            .collect()
    }
}

/// A dense complex matrix with a labeled block structure.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperatorMatrix {
    matrix: ComplexMatrix,
    partition: BlockPartition,
}

impl BlockOperatorMatrix {
    pub fn new(matrix: ComplexMatrix, partition: BlockPartition) -> Result<Self> {
        if matrix.nrows() != partition.dim() || matrix.ncols() != partition.dim() {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, partition covers {}",
                matrix.nrows(),
                matrix.ncols(),
                partition.dim()
            )));
        }
        ensure_finite(&matrix, "block operator matrix")?;
        Ok(Self { matrix, partition })
    }

    /// Assemble from a square grid of blocks. `blocks[i][j]` is the (i, j)
    /// block; row `i` of the grid must have height `sizes[i].1`.
    pub fn from_blocks<S: AsRef<str>>(sizes: &[(S, usize)], blocks: &[Vec<ComplexMatrix>]) -> Result<Self> {
        let partition = BlockPartition::contiguous(sizes)?;
        let dim = partition.dim();
        let mut m = ComplexMatrix::zeros(dim, dim);
        if blocks.len() != sizes.len() {
            return Err(Error::DimensionMismatch("block grid height".into()));
        }
        let mut row0 = 0;
        for (i, row) in blocks.iter().enumerate() {
            if row.len() != sizes.len() {
                return Err(Error::DimensionMismatch("block grid width".into()));
            }
            let mut col0 = 0;
            for (j, b) in row.iter().enumerate() {
                if b.shape() != (sizes[i].1, sizes[j].1) {
                    return Err(Error::DimensionMismatch(format!(
                        "block ({}, {}) is {:?}, expected {:?}",
                        sizes[i].0.as_ref(),
                        sizes[j].0.as_ref(),
                        b.shape(),
                        (sizes[i].1, sizes[j].1)
                    )));
                }
                m.view_mut((row0, col0), b.shape()).copy_from(b);
                col0 += sizes[j].1;
            }
            row0 += sizes[i].1;
        }
        Self::new(m, partition)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn block(&self, row_label: &str, col_label: &str) -> Result<ComplexMatrix> {
        let rows = self.partition.indices(row_label)?;
        let cols = self.partition.indices(col_label)?;
        Ok(select(&self.matrix, rows, cols))
    }

    /// Sub-matrix over label sets (rows from `row_labels`, columns from `col_labels`).
    pub fn blocks(&self, row_labels: &[&str], col_labels: &[&str]) -> Result<ComplexMatrix> {
        let rows = self.partition.gather(row_labels)?;
        let cols = self.partition.gather(col_labels)?;
        Ok(select(&self.matrix, &rows, &cols))
    }

    fn check_pivot(&self, pivot: &[&str]) -> Result<()> {
        for (i, l) in pivot.iter().enumerate() {
            if !self.partition.contains(l) {
                return Err(Error::UnknownLabel(l.to_string()));
            }
            if pivot[..i].contains(l) {
                return Err(Error::InvalidPartition(format!("pivot label `{l}` repeated")));
            }
        }
        Ok(())
    }

    fn split(&self, pivot: &[&str]) -> Result<(Vec<usize>, Vec<usize>, BlockPartition)> {
        self.check_pivot(pivot)?;
        let piv = self.partition.gather(pivot)?;
        let rest_groups = self.partition.complement(pivot);
        let rest: Vec<usize> = rest_groups.iter().flat_map(|g| g.indices.iter().copied()).collect();
        let sizes: Vec<(&str, usize)> = rest_groups
            .iter()
            .map(|g| (g.label.as_str(), g.indices.len()))
            .collect();
        Ok((piv, rest, BlockPartition::contiguous(&sizes)?))
    }

    /// Ordinary Schur complement with respect to the diagonal pivot block
    /// over `pivot`. The result carries the remaining labels, in order, as
    /// contiguous blocks.
    pub fn schur_complement(&self, pivot: &[&str]) -> Result<BlockOperatorMatrix> {
        let (piv, rest, partition) = self.split(pivot)?;
        let x_pp = select(&self.matrix, &piv, &piv);
        let x_pc = select(&self.matrix, &piv, &rest);
        let x_cp = select(&self.matrix, &rest, &piv);
        let x_cc = select(&self.matrix, &rest, &rest);
        let context = format!("[{}]", pivot.join(", "));
        let z = solve_checked(&x_pp, &x_pc, &context)?;
        BlockOperatorMatrix::new(x_cc - x_cp * z, partition)
    }

    /// `X_{I1^c, I2^c} - X_{I1^c, I2} X_{I1, I2}^-1 X_{I1, I2^c}` for row pivot
    /// labels `I1` and column pivot labels `I2`. The result has no square
    /// labeled structure in general, so a plain matrix is returned.
    pub fn schur_complement_offdiag(&self, row_pivot: &[&str], col_pivot: &[&str]) -> Result<ComplexMatrix> {
        let (r_piv, r_rest, _) = self.split(row_pivot)?;
        let (c_piv, c_rest, _) = self.split(col_pivot)?;
        if r_piv.len() != c_piv.len() {
            return Err(Error::DimensionMismatch("off-diagonal pivot is not square".into()));
        }
        let x_pp = select(&self.matrix, &r_piv, &c_piv);
        let x_pc = select(&self.matrix, &r_piv, &c_rest);
        let x_cp = select(&self.matrix, &r_rest, &c_piv);
        let x_cc = select(&self.matrix, &r_rest, &c_rest);
        let context = format!("[{}] x [{}]", row_pivot.join(", "), col_pivot.join(", "));
        let z = solve_checked(&x_pp, &x_pc, &context)?;
        Ok(x_cc - x_cp * z)
    }

    /// Generalized Schur complement `G11 - G12 G22^+ G21`, refused unless
    /// `im(G21) ⊆ im(G22)` and `ker(G22) ⊆ ker(G12)` hold numerically.
    pub fn generalized_schur_complement(&self, pivot: &[&str], rank_tol: Option<f64>) -> Result<BlockOperatorMatrix> {
        let (piv, rest, partition) = self.split(pivot)?;
        let g22 = select(&self.matrix, &piv, &piv);
        let g12 = select(&self.matrix, &rest, &piv);
        let g21 = select(&self.matrix, &piv, &rest);
        let g11 = select(&self.matrix, &rest, &rest);
        let tol = rank_tol.unwrap_or_else(|| default_rank_tol(g22.nrows(), g22.ncols()));
        let image = inclusion_check(&g21, &g22, InclusionMode::Image, tol)?;
        if !image.included {
            return Err(Error::IllDefinedComplement {
                inclusion: "image",
                residual: image.residual,
                threshold: image.threshold,
            });
        }
        let kernel = inclusion_check(&g12, &g22, InclusionMode::Kernel, tol)?;
        if !kernel.included {
            return Err(Error::IllDefinedComplement {
                inclusion: "kernel",
                residual: kernel.residual,
                threshold: kernel.threshold,
            });
        }
        let g22_inv = generalized_inverse(&g22, tol)?;
        BlockOperatorMatrix::new(g11 - g12 * g22_inv * g21, partition)
    }

    /// `G11 - G12 W G21` for a caller-supplied generalized inverse `W` of the
    /// pivot block. No inclusion checks: this is the comparison path for
    /// inverse-independence tests.
    pub fn schur_complement_with_inverse(&self, pivot: &[&str], pivot_inverse: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (piv, rest, _) = self.split(pivot)?;
        if pivot_inverse.shape() != (piv.len(), piv.len()) {
            return Err(Error::DimensionMismatch("pivot inverse shape".into()));
        }
        let g12 = select(&self.matrix, &rest, &piv);
        let g21 = select(&self.matrix, &piv, &rest);
        let g11 = select(&self.matrix, &rest, &rest);
        Ok(g11 - g12 * pivot_inverse * g21)
    }

    /// `(X / X_first) / (X / X_first)_second`. Errors name the failing stage.
    pub fn successive_schur(&self, first: &[&str], second: &[&str]) -> Result<BlockOperatorMatrix> {
        if let Some(l) = first.iter().find(|l| second.contains(l)) {
            return Err(Error::InvalidPartition(format!("pivot sets share label `{l}`")));
        }
        let staged = |stage: usize, e: Error| match e {
            Error::SingularPivot { context, condition, limit } => Error::SingularPivot {
                context: format!("stage {stage} {context}"),
                condition,
                limit,
            },
            other => other,
        };
        let intermediate = self.schur_complement(first).map_err(|e| staged(1, e))?;
        intermediate.schur_complement(second).map_err(|e| staged(2, e))
    }
}
