//! Ito generator matrices and the k-scaled generator families they are
//! reduced from.
//!
//! Conventions: a generator on initial dimension `d` with `n` channels stores
//! `K` as `d x d`, the row `L = [L_1 .. L_n]` as one `d x nd` matrix, the
//! column `M` as `nd x d` and the scattering grid `N` as `nd x nd`, so the full
//! generator is `[[K, L], [M, N - I]]` of size `d (n + 1)`. Generators are
//! right generators: the adjoint of the usual left (SLH) coefficient matrix.
//! A physical coupling `c_j` therefore enters as `L_j = c_j^*`, the physical
//! scattering `S` as `N = S^*`, and `K = -L L^* / 2 + i H` with `H` the
//! physical Hamiltonian, so `H = (K - K^*) / (2i)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::blockmat::{
    condition_number, ensure_finite, frobenius, orthonormal_complement, BlockOperatorMatrix, ComplexMatrix, C64,
    MAX_PIVOT_CONDITION,
};
use crate::error::{Error, Result};
use crate::report::{Check, ValidationFragment, DEFAULT_TOL};

/// Largest `d1 * d2 * (n1 + n2 + 1)` that [`concatenate`] will build.
pub const DEFAULT_DIMENSION_CAP: usize = 4096;

/// Orthonormality tolerance for subspace bases.
pub const BASIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelRole {
    External,
    Internal,
}

pub(crate) fn i() -> C64 {
    C64::new(0.0, 1.0)
}

pub(crate) fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub(crate) fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

/// Block `j` of a `d x nd` row of operators.
pub(crate) fn row_block(row: &ComplexMatrix, d: usize, j: usize) -> ComplexMatrix {
    row.columns(j * d, d).into_owned()
}

/// Block `(i, j)` of an `nd x nd` grid of operators.
pub(crate) fn grid_block(grid: &ComplexMatrix, d: usize, i: usize, j: usize) -> ComplexMatrix {
    grid.view((i * d, j * d), (d, d)).into_owned()
}

/// Concatenate `d x d` blocks side by side.
pub(crate) fn hstack(blocks: &[ComplexMatrix], rows: usize) -> ComplexMatrix {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        out.view_mut((0, c0), b.shape()).copy_from(b);
        c0 += b.ncols();
    }
    out
}

/// `I_n ⊗ x`, i.e. `x` repeated down the diagonal of an `n x n` grid.
pub(crate) fn channel_diag(x: &ComplexMatrix, n: usize) -> ComplexMatrix {
    identity(n).kronecker(x)
}

pub(crate) fn unitarity_residuals(u: &ComplexMatrix) -> (f64, f64) {
    let id = identity(u.nrows());
    (
        frobenius(&(u * u.adjoint() - &id)),
        frobenius(&(u.adjoint() * u - &id)),
    )
}

fn threshold(tol: f64, scale: f64) -> f64 {
    tol * scale.max(1.0)
}

/// `N`, `L`, `M` grids share `d`; index order inside a grid is channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ItoGeneratorMatrix {
    d: usize,
    n: usize,
    k: ComplexMatrix,
    l: ComplexMatrix,
    m: ComplexMatrix,
    scattering: ComplexMatrix,
    roles: Vec<ChannelRole>,
}

impl ItoGeneratorMatrix {
    /// Build and check the Hudson-Parthasarathy conditions at [`DEFAULT_TOL`].
    pub fn new(
        k: ComplexMatrix,
        l: ComplexMatrix,
        m: ComplexMatrix,
        scattering: ComplexMatrix,
        roles: Vec<ChannelRole>,
    ) -> Result<Self> {
        let g = Self::new_unchecked(k, l, m, scattering, roles)?;
        let hp = validate_hp(&g, DEFAULT_TOL);
        if !hp.passed {
            return Err(Error::HpViolation(hp.describe_failures()));
        }
        Ok(g)
    }

    /// Shape and finiteness checks only. Exists for negative tests.
    pub fn new_unchecked(
        k: ComplexMatrix,
        l: ComplexMatrix,
        m: ComplexMatrix,
        scattering: ComplexMatrix,
        roles: Vec<ChannelRole>,
    ) -> Result<Self> {
        let d = k.nrows();
        let n = roles.len();
        let shapes_ok = k.ncols() == d
            && l.shape() == (d, n * d)
            && m.shape() == (n * d, d)
            && scattering.shape() == (n * d, n * d);
        if !shapes_ok {
            return Err(Error::DimensionMismatch(format!(
                "generator with d = {d}, n = {n}: K {:?}, L {:?}, M {:?}, N {:?}",
                k.shape(),
                l.shape(),
                m.shape(),
                scattering.shape()
            )));
        }
        for (what, x) in [("K", &k), ("L", &l), ("M", &m), ("N", &scattering)] {
            ensure_finite(x, what)?;
        }
        Ok(Self {
            d,
            n,
            k,
            l,
            m,
            scattering,
            roles,
        })
    }

    /// `K = 0`, `L = M = 0`, `N = I`.
    pub fn trivial(d: usize, n: usize) -> Self {
        Self {
            d,
            n,
            k: ComplexMatrix::zeros(d, d),
            l: ComplexMatrix::zeros(d, n * d),
            m: ComplexMatrix::zeros(n * d, d),
            scattering: identity(n * d),
            roles: vec![ChannelRole::External; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn channels(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> &ComplexMatrix {
        &self.k
    }

    pub fn l(&self) -> &ComplexMatrix {
        &self.l
    }

    pub fn m(&self) -> &ComplexMatrix {
        &self.m
    }

    pub fn scattering(&self) -> &ComplexMatrix {
        &self.scattering
    }

    pub fn roles(&self) -> &[ChannelRole] {
        &self.roles
    }

    pub fn l_block(&self, j: usize) -> ComplexMatrix {
        row_block(&self.l, self.d, j)
    }

    pub fn m_block(&self, j: usize) -> ComplexMatrix {
        self.m.rows(j * self.d, self.d).into_owned()
    }

    pub fn n_block(&self, i: usize, j: usize) -> ComplexMatrix {
        grid_block(&self.scattering, self.d, i, j)
    }

    pub fn internal_channels(&self) -> Vec<usize> {
        (0..self.n).filter(|&j| self.roles[j] == ChannelRole::Internal).collect()
    }

    pub fn external_channels(&self) -> Vec<usize> {
        (0..self.n).filter(|&j| self.roles[j] == ChannelRole::External).collect()
    }

    pub fn with_roles(mut self, roles: Vec<ChannelRole>) -> Result<Self> {
        if roles.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "{} roles for {} channels",
                roles.len(),
                self.n
            )));
        }
        self.roles = roles;
        Ok(self)
    }

    /// Physical Hamiltonian `(K - K^*) / (2i)`.
    pub fn hamiltonian(&self) -> ComplexMatrix {
        (&self.k - self.k.adjoint()) * (real(0.5) / i())
    }

    /// Label of channel `j` in [`Self::to_block_matrix`].
    pub fn channel_label(j: usize) -> String {
        format!("ch{j}")
    }

    /// `[[K, L], [M, N - I]]` with blocks `sys`, `ch0`, `ch1`, ...
    pub fn to_block_matrix(&self) -> BlockOperatorMatrix {
        let d = self.d;
        let size = d * (self.n + 1);
        let mut g = ComplexMatrix::zeros(size, size);
        g.view_mut((0, 0), (d, d)).copy_from(&self.k);
        g.view_mut((0, d), (d, self.n * d)).copy_from(&self.l);
        g.view_mut((d, 0), (self.n * d, d)).copy_from(&self.m);
        g.view_mut((d, d), (self.n * d, self.n * d))
            .copy_from(&(&self.scattering - identity(self.n * d)));
        let mut sizes = vec![("sys".to_string(), d)];
        sizes.extend((0..self.n).map(|j| (Self::channel_label(j), d)));
        BlockOperatorMatrix::new(g, crate::blockmat::BlockPartition::contiguous(&sizes).expect("fresh labels"))
            .expect("shapes are consistent")
    }

    /// Read a generator back from a block matrix with blocks `sys` and the
    /// given channel labels, in order. No HP check.
    pub(crate) fn from_block_matrix(
        bm: &BlockOperatorMatrix,
        channel_labels: &[String],
        roles: Vec<ChannelRole>,
    ) -> Result<Self> {
        let k = bm.block("sys", "sys")?;
        let d = k.nrows();
        let n = channel_labels.len();
        let mut l = ComplexMatrix::zeros(d, n * d);
        let mut m = ComplexMatrix::zeros(n * d, d);
        let mut scattering = ComplexMatrix::zeros(n * d, n * d);
        for (a, la) in channel_labels.iter().enumerate() {
            l.view_mut((0, a * d), (d, d)).copy_from(&bm.block("sys", la)?);
            m.view_mut((a * d, 0), (d, d)).copy_from(&bm.block(la, "sys")?);
            for (b, lb) in channel_labels.iter().enumerate() {
                let mut blk = bm.block(la, lb)?;
                if a == b {
                    blk += identity(d);
                }
                scattering.view_mut((a * d, b * d), (d, d)).copy_from(&blk);
            }
        }
        Self::new_unchecked(k, l, m, scattering, roles)
    }

    /// Compress every operator entry to the subspace spanned by the
    /// orthonormal columns of `basis`: `X -> V^* X V`.
    pub(crate) fn compress(&self, basis: &ComplexMatrix) -> Result<Self> {
        let n = self.n;
        let w = channel_diag(basis, n);
        let k = basis.adjoint() * &self.k * basis;
        let l = basis.adjoint() * &self.l * &w;
        let m = w.adjoint() * &self.m * basis;
        let scattering = w.adjoint() * &self.scattering * &w;
        Self::new_unchecked(k, l, m, scattering, self.roles.clone())
    }

    /// Full generator matrix, for comparisons.
    pub fn to_matrix(&self) -> ComplexMatrix {
        self.to_block_matrix().into_matrix()
    }
}

/// Residuals of `N N^* = I`, `N^* N = I`, `K + K^* = -L L^*`, `M = -N L^*`.
pub fn validate_hp(g: &ItoGeneratorMatrix, tol: f64) -> ValidationFragment {
    let (uu, uu_rev) = unitarity_residuals(&g.scattering);
    let l_star = g.l.adjoint();
    let ll = &g.l * &l_star;
    let k_res = frobenius(&(&g.k + g.k.adjoint() + &ll));
    let nl = &g.scattering * &l_star;
    let m_res = frobenius(&(&g.m + &nl));
    let unit_scale = ((g.n * g.d) as f64).sqrt();
    ValidationFragment::new(
        "hp",
        vec![
            Check::at_most("N N* - I", uu, threshold(tol, unit_scale)),
            Check::at_most("N* N - I", uu_rev, threshold(tol, unit_scale)),
            Check::at_most(
                "K + K* + L L*",
                k_res,
                threshold(tol, 2.0 * frobenius(&g.k) + frobenius(&ll)),
            ),
            Check::at_most("M + N L*", m_res, threshold(tol, frobenius(&g.m) + frobenius(&nl))),
        ],
    )
}

/// Scattering / coupling / Hamiltonian triple in the usual left convention.
#[derive(Debug, Clone, PartialEq)]
pub struct SlhTriple {
    s: ComplexMatrix,
    c: Vec<ComplexMatrix>,
    h: ComplexMatrix,
}

impl SlhTriple {
    /// `s` is the `nd x nd` scattering grid, `c` the `n` coupling operators,
    /// `h` the Hamiltonian. Checks unitarity and Hermiticity at [`DEFAULT_TOL`].
    pub fn new(s: ComplexMatrix, c: Vec<ComplexMatrix>, h: ComplexMatrix) -> Result<Self> {
        let d = h.nrows();
        let n = c.len();
        if h.ncols() != d || s.shape() != (n * d, n * d) || c.iter().any(|x| x.shape() != (d, d)) {
            return Err(Error::DimensionMismatch(format!("SLH triple with d = {d}, n = {n}")));
        }
        ensure_finite(&s, "S")?;
        ensure_finite(&h, "H")?;
        for x in &c {
            ensure_finite(x, "C")?;
        }
        let (uu, uu_rev) = unitarity_residuals(&s);
        let unit = threshold(DEFAULT_TOL, ((n * d) as f64).sqrt());
        if uu > unit || uu_rev > unit {
            return Err(Error::NotUnitary {
                what: "S".into(),
                residual: uu.max(uu_rev),
            });
        }
        let herm = frobenius(&(&h - h.adjoint()));
        if herm > threshold(DEFAULT_TOL, frobenius(&h)) {
            return Err(Error::NotHermitian {
                what: "H".into(),
                residual: herm,
            });
        }
        Ok(Self { s, c, h })
    }

    /// `S = I`, the given couplings and Hamiltonian.
    pub fn unscattered(c: Vec<ComplexMatrix>, h: ComplexMatrix) -> Result<Self> {
        let nd = c.len() * h.nrows();
        Self::new(identity(nd), c, h)
    }

    pub fn s(&self) -> &ComplexMatrix {
        &self.s
    }

    pub fn c(&self) -> &[ComplexMatrix] {
        &self.c
    }

    pub fn h(&self) -> &ComplexMatrix {
        &self.h
    }
}

/// Right generator of an SLH triple: `L_j = C_j^*`, `N = S^*`,
/// `K = -L L^* / 2 + i H`, `M = -N L^*`.
pub fn from_slh(t: &SlhTriple) -> Result<ItoGeneratorMatrix> {
    let d = t.h.nrows();
    let n = t.c.len();
    let adjoints: Vec<ComplexMatrix> = t.c.iter().map(|c| c.adjoint()).collect();
    let l = hstack(&adjoints, d);
    let scattering = t.s.adjoint();
    let k = &l * l.adjoint() * real(-0.5) + &t.h * i();
    let m = -(&scattering * l.adjoint());
    ItoGeneratorMatrix::new(k, l, m, scattering, vec![ChannelRole::External; n])
}

/// Joint generator of two independent components on `h1 ⊗ h2`, with the
/// channels of `g1` first.
pub fn concatenate(g1: &ItoGeneratorMatrix, g2: &ItoGeneratorMatrix) -> Result<ItoGeneratorMatrix> {
    concatenate_with_cap(g1, g2, DEFAULT_DIMENSION_CAP)
}

pub fn concatenate_with_cap(g1: &ItoGeneratorMatrix, g2: &ItoGeneratorMatrix, cap: usize) -> Result<ItoGeneratorMatrix> {
    let (d1, d2) = (g1.d, g2.d);
    let (n1, n2) = (g1.n, g2.n);
    let requested = d1
        .checked_mul(d2)
        .and_then(|d| d.checked_mul(n1 + n2 + 1))
        .unwrap_or(usize::MAX);
    if requested > cap {
        return Err(Error::DimensionCap { requested, cap });
    }
    let d = d1 * d2;
    let n = n1 + n2;
    let (id1, id2) = (identity(d1), identity(d2));
    let left = |x: &ComplexMatrix| x.kronecker(&id2);
    let right = |x: &ComplexMatrix| id1.kronecker(x);

    let k = left(&g1.k) + right(&g2.k);
    let mut l_blocks: Vec<ComplexMatrix> = (0..n1).map(|j| left(&g1.l_block(j))).collect();
    l_blocks.extend((0..n2).map(|j| right(&g2.l_block(j))));
    let l = hstack(&l_blocks, d);
    let mut m = ComplexMatrix::zeros(n * d, d);
    for j in 0..n1 {
        m.view_mut((j * d, 0), (d, d)).copy_from(&left(&g1.m_block(j)));
    }
    for j in 0..n2 {
        m.view_mut(((n1 + j) * d, 0), (d, d)).copy_from(&right(&g2.m_block(j)));
    }
    let mut scattering = ComplexMatrix::zeros(n * d, n * d);
    for a in 0..n1 {
        for b in 0..n1 {
            scattering.view_mut((a * d, b * d), (d, d)).copy_from(&left(&g1.n_block(a, b)));
        }
    }
    for a in 0..n2 {
        for b in 0..n2 {
            scattering
                .view_mut(((n1 + a) * d, (n1 + b) * d), (d, d))
                .copy_from(&right(&g2.n_block(a, b)));
        }
    }
    let mut roles = g1.roles.clone();
    roles.extend_from_slice(&g2.roles);
    ItoGeneratorMatrix::new_unchecked(k, l, m, scattering, roles)
}

fn check_permutation(permutation: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if permutation.len() != n {
        return Err(Error::InvalidPermutation(format!(
            "length {} for {n} channels",
            permutation.len()
        )));
    }
    for &p in permutation {
        if p >= n || seen[p] {
            return Err(Error::InvalidPermutation(format!("{permutation:?}")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Reorder channels so that new channel `j` is old channel `permutation[j]`,
/// and assign `roles` (in the new order).
pub fn relabel_channels(
    g: &ItoGeneratorMatrix,
    permutation: &[usize],
    roles: Vec<ChannelRole>,
) -> Result<ItoGeneratorMatrix> {
    let (d, n) = (g.d, g.n);
    check_permutation(permutation, n)?;
    if roles.len() != n {
        return Err(Error::DimensionMismatch(format!("{} roles for {n} channels", roles.len())));
    }
    let l = hstack(&permutation.iter().map(|&p| g.l_block(p)).collect::<Vec<_>>(), d);
    let mut m = ComplexMatrix::zeros(n * d, d);
    let mut scattering = ComplexMatrix::zeros(n * d, n * d);
    for (a, &pa) in permutation.iter().enumerate() {
        m.view_mut((a * d, 0), (d, d)).copy_from(&g.m_block(pa));
        for (b, &pb) in permutation.iter().enumerate() {
            scattering.view_mut((a * d, b * d), (d, d)).copy_from(&g.n_block(pa, pb));
        }
    }
    ItoGeneratorMatrix::new_unchecked(g.k.clone(), l, m, scattering, roles)
}

/// Orthogonal splitting of the initial space into slow and fast parts, held
/// as orthonormal bases.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceDecomposition {
    slow: ComplexMatrix,
    fast: ComplexMatrix,
}

impl SubspaceDecomposition {
    pub fn new(slow: ComplexMatrix, fast: ComplexMatrix) -> Result<Self> {
        let d = slow.nrows();
        if fast.nrows() != d || slow.ncols() + fast.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "slow basis {:?} and fast basis {:?} do not split C^{d}",
                slow.shape(),
                fast.shape()
            )));
        }
        let joint = crate::generator::hstack(&[slow.clone(), fast.clone()], d);
        let gram = joint.adjoint() * &joint - identity(d);
        let residual = frobenius(&gram);
        if residual > BASIS_TOL {
            return Err(Error::Structure(format!(
                "slow/fast bases are not orthonormal and complementary (Gram residual {residual:e})"
            )));
        }
        Ok(Self { slow, fast })
    }

    /// Fast basis is the orthonormal complement of `slow`.
    pub fn from_slow_basis(slow: ComplexMatrix) -> Result<Self> {
        let d = slow.nrows();
        let gram = frobenius(&(slow.adjoint() * &slow - identity(slow.ncols())));
        if gram > BASIS_TOL {
            return Err(Error::Structure(format!("slow basis is not orthonormal (Gram residual {gram:e})")));
        }
        let fast = orthonormal_complement(&slow, 1e-8);
        if fast.ncols() + slow.ncols() != d {
            return Err(Error::Structure("could not complete the slow basis".into()));
        }
        Self::new(slow, fast)
    }

    /// Slow subspace spanned by the listed coordinate vectors.
    pub fn coordinate(d: usize, slow_indices: &[usize]) -> Result<Self> {
        if slow_indices.iter().any(|&i| i >= d) {
            return Err(Error::DimensionMismatch(format!("slow index out of range for d = {d}")));
        }
        let fast_indices: Vec<usize> = (0..d).filter(|i| !slow_indices.contains(i)).collect();
        let unit = |idx: &[usize]| ComplexMatrix::from_fn(d, idx.len(), |r, c| real(if r == idx[c] { 1.0 } else { 0.0 }));
        Self::new(unit(slow_indices), unit(&fast_indices))
    }

    pub fn dim(&self) -> usize {
        self.slow.nrows()
    }

    pub fn slow_dim(&self) -> usize {
        self.slow.ncols()
    }

    pub fn fast_dim(&self) -> usize {
        self.fast.ncols()
    }

    pub fn slow_basis(&self) -> &ComplexMatrix {
        &self.slow
    }

    pub fn fast_basis(&self) -> &ComplexMatrix {
        &self.fast
    }

    pub fn p_slow(&self) -> ComplexMatrix {
        &self.slow * self.slow.adjoint()
    }

    pub fn p_fast(&self) -> ComplexMatrix {
        &self.fast * self.fast.adjoint()
    }
}

/// The family `K(k) = k^2 Y + k A + B`, `L(k) = k F + G`, fixed `N`, together
/// with its slow/fast decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledGeneratorFamily {
    y: ComplexMatrix,
    a: ComplexMatrix,
    b: ComplexMatrix,
    f: ComplexMatrix,
    g: ComplexMatrix,
    scattering: ComplexMatrix,
    decomp: SubspaceDecomposition,
    roles: Vec<ChannelRole>,
}

#[allow(clippy::too_many_arguments)]
impl ScaledGeneratorFamily {
    /// Checks shapes, unitarity of `N` and the component identities
    /// `B + B^* = -G G^*`, `A + A^* = -(F G^* + G F^*)`, `Y + Y^* = -F F^*`.
    /// Structural conditions are checked by [`validate_structure`].
    pub fn new(
        y: ComplexMatrix,
        a: ComplexMatrix,
        b: ComplexMatrix,
        f: ComplexMatrix,
        g: ComplexMatrix,
        scattering: ComplexMatrix,
        decomp: SubspaceDecomposition,
        roles: Vec<ChannelRole>,
    ) -> Result<Self> {
        let fam = Self::new_unchecked(y, a, b, f, g, scattering, decomp, roles)?;
        let fragment = component_identities(&fam, DEFAULT_TOL);
        if !fragment.passed {
            return Err(Error::HpViolation(fragment.describe_failures()));
        }
        Ok(fam)
    }

    pub fn new_unchecked(
        y: ComplexMatrix,
        a: ComplexMatrix,
        b: ComplexMatrix,
        f: ComplexMatrix,
        g: ComplexMatrix,
        scattering: ComplexMatrix,
        decomp: SubspaceDecomposition,
        roles: Vec<ChannelRole>,
    ) -> Result<Self> {
        let d = decomp.dim();
        let n = roles.len();
        let square = [&y, &a, &b].iter().all(|x| x.shape() == (d, d));
        if !square || f.shape() != (d, n * d) || g.shape() != (d, n * d) || scattering.shape() != (n * d, n * d) {
            return Err(Error::DimensionMismatch(format!("scaled family with d = {d}, n = {n}")));
        }
        for (what, x) in [("Y", &y), ("A", &a), ("B", &b), ("F", &f), ("G", &g), ("N", &scattering)] {
            ensure_finite(x, what)?;
        }
        Ok(Self {
            y,
            a,
            b,
            f,
            g,
            scattering,
            decomp,
            roles,
        })
    }

    /// Build from the Hamiltonian coefficients of `H(k) = h0 + k h1 + k^2 h2`
    /// with `K(k) = -L(k) L(k)^* / 2 + i H(k)`.
    pub fn from_hamiltonians(
        h0: &ComplexMatrix,
        h1: &ComplexMatrix,
        h2: &ComplexMatrix,
        f: ComplexMatrix,
        g: ComplexMatrix,
        scattering: ComplexMatrix,
        decomp: SubspaceDecomposition,
        roles: Vec<ChannelRole>,
    ) -> Result<Self> {
        let half = real(-0.5);
        let y = &f * f.adjoint() * half + h2 * i();
        let a = (&f * g.adjoint() + &g * f.adjoint()) * half + h1 * i();
        let b = &g * g.adjoint() * half + h0 * i();
        Self::new(y, a, b, f, g, scattering, decomp, roles)
    }

    pub fn dim(&self) -> usize {
        self.decomp.dim()
    }

    pub fn channels(&self) -> usize {
        self.roles.len()
    }

    pub fn y(&self) -> &ComplexMatrix {
        &self.y
    }

    pub fn a(&self) -> &ComplexMatrix {
        &self.a
    }

    pub fn b(&self) -> &ComplexMatrix {
        &self.b
    }

    pub fn f(&self) -> &ComplexMatrix {
        &self.f
    }

    pub fn g(&self) -> &ComplexMatrix {
        &self.g
    }

    pub fn scattering(&self) -> &ComplexMatrix {
        &self.scattering
    }

    pub fn decomposition(&self) -> &SubspaceDecomposition {
        &self.decomp
    }

    pub fn roles(&self) -> &[ChannelRole] {
        &self.roles
    }

    pub fn internal_channels(&self) -> Vec<usize> {
        (0..self.channels()).filter(|&j| self.roles[j] == ChannelRole::Internal).collect()
    }

    pub fn external_channels(&self) -> Vec<usize> {
        (0..self.channels()).filter(|&j| self.roles[j] == ChannelRole::External).collect()
    }

    pub fn with_roles(mut self, roles: Vec<ChannelRole>) -> Result<Self> {
        if roles.len() != self.channels() {
            return Err(Error::DimensionMismatch("role count".into()));
        }
        self.roles = roles;
        Ok(self)
    }

    /// `(H0, H1, H2)` with `Hj = (Xj - Xj^*) / (2i)` for `X = B, A, Y`.
    pub fn hamiltonian_components(&self) -> (ComplexMatrix, ComplexMatrix, ComplexMatrix) {
        let herm = |x: &ComplexMatrix| (x - x.adjoint()) * (real(0.5) / i());
        (herm(&self.b), herm(&self.a), herm(&self.y))
    }

    /// The generator at coupling strength `k > 0`.
    pub fn instantiate(&self, k: f64) -> Result<ItoGeneratorMatrix> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Structure(format!("coupling strength must be positive, got {k}")));
        }
        let kk = real(k);
        let big_k = &self.y * real(k * k) + &self.a * kk + &self.b;
        let l = &self.f * kk + &self.g;
        let m = -(&self.scattering * l.adjoint());
        ItoGeneratorMatrix::new(big_k, l, m, self.scattering.clone(), self.roles.clone())
    }

    /// `Y_ff` as a `f x f` matrix in the fast basis.
    pub fn y_ff(&self) -> ComplexMatrix {
        let vf = self.decomp.fast_basis();
        vf.adjoint() * &self.y * vf
    }
}

fn component_identities(fam: &ScaledGeneratorFamily, tol: f64) -> ValidationFragment {
    let (f, g) = (&fam.f, &fam.g);
    let gg = g * g.adjoint();
    let fg = f * g.adjoint() + g * f.adjoint();
    let ff = f * f.adjoint();
    let (uu, uu_rev) = unitarity_residuals(&fam.scattering);
    let unit_scale = (fam.scattering.nrows() as f64).sqrt();
    ValidationFragment::new(
        "component_identities",
        vec![
            Check::at_most(
                "B + B* + G G*",
                frobenius(&(&fam.b + fam.b.adjoint() + &gg)),
                threshold(tol, 2.0 * frobenius(&fam.b) + frobenius(&gg)),
            ),
            Check::at_most(
                "A + A* + F G* + G F*",
                frobenius(&(&fam.a + fam.a.adjoint() + &fg)),
                threshold(tol, 2.0 * frobenius(&fam.a) + frobenius(&fg)),
            ),
            Check::at_most(
                "Y + Y* + F F*",
                frobenius(&(&fam.y + fam.y.adjoint() + &ff)),
                threshold(tol, 2.0 * frobenius(&fam.y) + frobenius(&ff)),
            ),
            Check::at_most("N N* - I", uu, threshold(tol, unit_scale)),
            Check::at_most("N* N - I", uu_rev, threshold(tol, unit_scale)),
        ],
    )
}

/// Structural conditions on a scaled family: `P_s F = 0`, `Y = P_f Y P_f`
/// with `Y_ff` invertible, `P_s H1 P_s = 0`, `P_s H2 = H2 P_s = 0`,
/// `P_s A P_s = 0`, plus the component identities.
pub fn validate_structure(fam: &ScaledGeneratorFamily, tol: f64) -> ValidationFragment {
    let d = fam.dim();
    let n = fam.channels();
    let ps = fam.decomp.p_slow();
    let pf = fam.decomp.p_fast();
    let (_, h1, h2) = fam.hamiltonian_components();
    let ps_f = &ps * &fam.f;
    let y_off = &fam.y - &pf * &fam.y * &pf;
    let a_ss = &ps * &fam.a * &ps;
    let h1_ss = &ps * &h1 * &ps;
    let mut checks = vec![
        Check::at_most("P_s F", frobenius(&ps_f), threshold(tol, frobenius(&fam.f))),
        Check::at_most("Y - P_f Y P_f", frobenius(&y_off), threshold(tol, frobenius(&fam.y))),
        Check::below("cond(Y_ff)", condition_number(&fam.y_ff()), MAX_PIVOT_CONDITION),
        Check::at_most("P_s A P_s", frobenius(&a_ss), threshold(tol, frobenius(&fam.a))),
        Check::at_most("P_s H1 P_s", frobenius(&h1_ss), threshold(tol, frobenius(&h1))),
        Check::at_most("P_s H2", frobenius(&(&ps * &h2)), threshold(tol, frobenius(&h2))),
        Check::at_most("H2 P_s", frobenius(&(&h2 * &ps)), threshold(tol, frobenius(&h2))),
    ];
    debug_assert_eq!(fam.f.shape(), (d, n * d));
    checks.extend(component_identities(fam, tol).checks);
    ValidationFragment::new("structure", checks)
}

/// Hatted blocks of the fast-eliminated family, in full-dimensional form:
/// `Lhat = P_s (G - A P_f Y_ff^-1 F_f)` and `Nhat = N + N F_f^* Y_ff^-1 F_f`.
#[derive(Debug, Clone)]
pub struct FastEliminated {
    pub l_hat: ComplexMatrix,
    pub n_hat: ComplexMatrix,
}

pub(crate) fn fast_eliminated(fam: &ScaledGeneratorFamily) -> Result<FastEliminated> {
    let vf = fam.decomp.fast_basis();
    let n = fam.channels();
    let ps = fam.decomp.p_slow();
    let y_ff = fam.y_ff();
    let f_f = vf.adjoint() * &fam.f; // f x nd
    let a_sf = &ps * &fam.a * vf; // d x f
    let y_inv_f = crate::blockmat::solve_checked(&y_ff, &f_f, "Y_ff")?;
    let l_hat = &ps * (&fam.g - &a_sf * &y_inv_f);
    let n_hat = &fam.scattering + &fam.scattering * f_f.adjoint() * &y_inv_f;
    debug_assert_eq!(n_hat.shape(), (n * fam.dim(), n * fam.dim()));
    Ok(FastEliminated { l_hat, n_hat })
}

/// Norms of `Lhat_f`, `Nhat_sf`, `Nhat_fs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastResiduals {
    pub l_fast: f64,
    pub n_sf: f64,
    pub n_fs: f64,
    pub n_ss_unitarity: f64,
    pub n_ff_unitarity: f64,
}

pub(crate) fn fast_residuals(fam: &ScaledGeneratorFamily) -> Result<FastResiduals> {
    let hat = fast_eliminated(fam)?;
    let n = fam.channels();
    let ws = channel_diag(fam.decomp.slow_basis(), n);
    let wf = channel_diag(fam.decomp.fast_basis(), n);
    let ps = fam.decomp.p_slow();
    let l_fast = frobenius(&(&ps * &hat.l_hat * &wf));
    let n_sf = frobenius(&(ws.adjoint() * &hat.n_hat * &wf));
    let n_fs = frobenius(&(wf.adjoint() * &hat.n_hat * &ws));
    let n_ss = ws.adjoint() * &hat.n_hat * &ws;
    let n_ff = wf.adjoint() * &hat.n_hat * &wf;
    let (a, b) = unitarity_residuals(&n_ss);
    let (c, e) = unitarity_residuals(&n_ff);
    Ok(FastResiduals {
        l_fast,
        n_sf,
        n_fs,
        n_ss_unitarity: a.max(b),
        n_ff_unitarity: c.max(e),
    })
}

/// The decoupling condition `Lhat_f = Nhat_sf = Nhat_fs = 0` and unitarity
/// of `Nhat_ss`, `Nhat_ff`.
pub fn validate_fast_decoupling(fam: &ScaledGeneratorFamily, tol: f64) -> ValidationFragment {
    let r = match fast_residuals(fam) {
        Ok(r) => r,
        Err(_) => {
            return ValidationFragment::new(
                "fast_decoupling",
                vec![Check::below("cond(Y_ff)", condition_number(&fam.y_ff()), MAX_PIVOT_CONDITION)],
            )
        }
    };
    let scale = frobenius(&fam.g) + frobenius(&fam.f) + frobenius(&fam.a);
    let unit = (fam.scattering.nrows() as f64).sqrt();
    ValidationFragment::new(
        "fast_decoupling",
        vec![
            Check::at_most("|L_f|", r.l_fast, threshold(tol, scale)),
            Check::at_most("|N_sf|", r.n_sf, threshold(tol, unit)),
            Check::at_most("|N_fs|", r.n_fs, threshold(tol, unit)),
            Check::at_most("N_ss unitarity", r.n_ss_unitarity, threshold(tol, unit)),
            Check::at_most("N_ff unitarity", r.n_ff_unitarity, threshold(tol, unit)),
        ],
    )
}

/// Dense `d x d` matrix from real row-major data.
pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> ComplexMatrix {
    DMatrix::from_row_slice(rows, cols, &data.iter().map(|&x| real(x)).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigma_minus() -> ComplexMatrix {
        // basis (g, e): sigma_- = |g><e|
        real_matrix(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }

    fn decay_generator(flip_m: bool) -> ItoGeneratorMatrix {
        let l1 = sigma_minus().adjoint();
        let k = &l1 * l1.adjoint() * real(-0.5);
        let m = if flip_m { l1.adjoint() } else { -l1.adjoint() };
        ItoGeneratorMatrix::new_unchecked(k, l1, m, identity(2), vec![ChannelRole::External]).unwrap()
    }

    #[test]
    fn trivial_generator_passes_hp() {
        let hp = validate_hp(&ItoGeneratorMatrix::trivial(3, 2), 1e-9);
        assert!(hp.passed);
        assert!(hp.checks.iter().all(|c| c.residual == 0.0));
    }

    #[test]
    fn qubit_decay_passes_and_flipped_m_fails() {
        assert!(validate_hp(&decay_generator(false), 1e-9).passed);
        let bad = validate_hp(&decay_generator(true), 1e-9);
        assert!(!bad.passed);
        let expected = 2.0 * frobenius(&sigma_minus());
        let res = bad.check("M + N L*").unwrap().residual;
        assert!((res - expected).abs() < 1e-14);
        assert!(bad.check("K + K* + L L*").unwrap().passed);
    }

    #[test]
    fn checked_constructor_rejects_flipped_m() {
        let g = decay_generator(true);
        let r = ItoGeneratorMatrix::new(g.k.clone(), g.l.clone(), g.m.clone(), g.scattering.clone(), g.roles.clone());
        assert!(matches!(r, Err(Error::HpViolation(_))));
    }

    #[test]
    fn from_slh_trivial_and_hamiltonian() {
        let t = SlhTriple::unscattered(vec![ComplexMatrix::zeros(2, 2)], ComplexMatrix::zeros(2, 2)).unwrap();
        let g = from_slh(&t).unwrap();
        assert_eq!(g.to_matrix(), ItoGeneratorMatrix::trivial(2, 1).to_matrix());

        let sz = real_matrix(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let g = from_slh(&SlhTriple::new(ComplexMatrix::zeros(0, 0), vec![], sz.clone()).unwrap()).unwrap();
        assert!((g.k() - &sz * i()).norm() < 1e-15);
        assert!((g.hamiltonian() - sz).norm() < 1e-15);
    }

    #[test]
    fn slh_rejects_bad_inputs() {
        let h = real_matrix(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            SlhTriple::unscattered(vec![], h),
            Err(Error::NotHermitian { .. })
        ));
        let s = real_matrix(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(
            SlhTriple::new(s, vec![ComplexMatrix::zeros(1, 1); 2], ComplexMatrix::zeros(1, 1)),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn concatenate_two_qubits() {
        let g = decay_generator(false);
        let joint = concatenate(&g, &g).unwrap();
        assert_eq!((joint.dim(), joint.channels()), (4, 2));
        assert!(validate_hp(&joint, 1e-9).passed);
        let triv = concatenate(&ItoGeneratorMatrix::trivial(1, 0), &g).unwrap();
        assert_eq!(triv.to_matrix(), g.to_matrix());
        assert!(matches!(
            concatenate_with_cap(&g, &g, 11),
            Err(Error::DimensionCap { requested: 12, cap: 11 })
        ));
    }

    #[test]
    fn concatenate_keeps_roles_in_order() {
        let a = decay_generator(false).with_roles(vec![ChannelRole::Internal]).unwrap();
        let b = ItoGeneratorMatrix::trivial(1, 2);
        let joint = concatenate(&a, &b).unwrap();
        assert_eq!(
            joint.roles(),
            &[ChannelRole::Internal, ChannelRole::External, ChannelRole::External]
        );
    }

    #[test]
    fn relabel_identity_and_involution() {
        let g = concatenate(&decay_generator(false), &ItoGeneratorMatrix::trivial(1, 1)).unwrap();
        let same = relabel_channels(&g, &[0, 1], g.roles().to_vec()).unwrap();
        assert_eq!(same, g);
        let once = relabel_channels(&g, &[1, 0], g.roles().to_vec()).unwrap();
        let twice = relabel_channels(&once, &[1, 0], g.roles().to_vec()).unwrap();
        assert_eq!(twice, g);
        assert!(relabel_channels(&g, &[0, 0], g.roles().to_vec()).is_err());
        assert!(relabel_channels(&g, &[0, 2], g.roles().to_vec()).is_err());
    }

    #[test]
    fn decomposition_from_slow_basis() {
        let slow = real_matrix(3, 1, &[1.0, 0.0, 0.0]);
        let dec = SubspaceDecomposition::from_slow_basis(slow).unwrap();
        assert_eq!(dec.fast_dim(), 2);
        let sum = dec.p_slow() + dec.p_fast();
        assert!((sum - identity(3)).norm() < 1e-12);
        assert!((dec.p_slow() * dec.p_fast()).norm() < 1e-12);
        let bad = real_matrix(2, 1, &[1.0, 1.0]);
        assert!(SubspaceDecomposition::from_slow_basis(bad).is_err());
    }

    fn two_level_family(f_slow_row: f64, y_fast: bool) -> ScaledGeneratorFamily {
        // d = 2: slow = e0, fast = e1; F maps slow -> fast, one channel
        let f = real_matrix(2, 2, &[0.0, f_slow_row, 1.0, 0.0]);
        let g = ComplexMatrix::zeros(2, 2);
        let h2 = if y_fast {
            real_matrix(2, 2, &[0.0, 0.0, 0.0, 0.3])
        } else {
            ComplexMatrix::zeros(2, 2)
        };
        let f = if y_fast { f } else { ComplexMatrix::zeros(2, 2) };
        ScaledGeneratorFamily::from_hamiltonians(
            &ComplexMatrix::zeros(2, 2),
            &ComplexMatrix::zeros(2, 2),
            &h2,
            f,
            g,
            identity(2),
            SubspaceDecomposition::coordinate(2, &[0]).unwrap(),
            vec![ChannelRole::External],
        )
        .unwrap()
    }

    #[test]
    fn structure_flags_slow_row_of_f() {
        let ok = two_level_family(0.0, true);
        assert!(validate_structure(&ok, 1e-9).passed, "{:?}", validate_structure(&ok, 1e-9));
        let bad = two_level_family(0.7, true);
        let frag = validate_structure(&bad, 1e-9);
        let c = frag.check("P_s F").unwrap();
        assert!(!c.passed);
        assert!((c.residual - 0.7).abs() < 1e-14);
    }

    #[test]
    fn zero_fast_block_is_singular() {
        let fam = two_level_family(0.0, false);
        let frag = validate_structure(&fam, 1e-9);
        let c = frag.check("cond(Y_ff)").unwrap();
        assert!(!c.passed && c.residual.is_infinite());
    }

    #[test]
    fn unscaled_family_instantiates_k_independently() {
        let g = real_matrix(2, 2, &[0.0, 0.0, 0.5, 0.1]);
        let h0 = real_matrix(2, 2, &[1.0, 0.2, 0.2, -1.0]);
        let z = ComplexMatrix::zeros(2, 2);
        let fam = ScaledGeneratorFamily::from_hamiltonians(
            &h0,
            &z,
            &z,
            z.clone(),
            g,
            identity(2),
            SubspaceDecomposition::coordinate(2, &[0]).unwrap(),
            vec![ChannelRole::External],
        )
        .unwrap();
        let g1 = fam.instantiate(1.0).unwrap();
        let g9 = fam.instantiate(9.0).unwrap();
        assert_eq!(g1.to_matrix(), g9.to_matrix());
        assert!(fam.instantiate(0.0).is_err());
    }

    #[test]
    fn k_one_substitution() {
        let fam = two_level_family(0.0, true);
        let g = fam.instantiate(1.0).unwrap();
        assert!((g.k() - (fam.y() + fam.a() + fam.b())).norm() < 1e-15);
        assert!((g.l() - (fam.f() + fam.g())).norm() < 1e-15);
    }

    #[test]
    fn fast_decoupling_with_zero_f() {
        // F = 0: L_f = G_sf, so decoupling holds iff G has no fast -> slow block
        let z = ComplexMatrix::zeros(2, 2);
        let h2 = real_matrix(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let build = |g: ComplexMatrix| {
            ScaledGeneratorFamily::from_hamiltonians(
                &z,
                &z,
                &h2,
                z.clone(),
                g,
                identity(2),
                SubspaceDecomposition::coordinate(2, &[0]).unwrap(),
                vec![ChannelRole::External],
            )
            .unwrap()
        };
        let good = build(real_matrix(2, 2, &[0.3, 0.0, 0.4, 0.1]));
        assert!(validate_fast_decoupling(&good, 1e-9).passed);
        let bad = build(real_matrix(2, 2, &[0.3, 0.25, 0.0, 0.0]));
        let frag = validate_fast_decoupling(&bad, 1e-9);
        let c = frag.check("|L_f|").unwrap();
        assert!(!c.passed && (c.residual - 0.25).abs() < 1e-14);
    }
}
