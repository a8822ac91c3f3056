//! Random matrices and random scaled families satisfying every reduction
//! precondition, for property tests and benchmarks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::blockmat::{condition_number, BlockOperatorMatrix, BlockPartition, ComplexMatrix, C64};
use crate::generator::{
    channel_diag, fast_eliminated, grid_block, hstack, identity, ChannelRole, ScaledGeneratorFamily, SubspaceDecomposition,
};
use crate::reduce::feedback_family;

/// Complex Gaussian matrix with independent standard normal real and
/// imaginary parts scaled by `1/sqrt(2)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexMatrix {
    let x = complex_gaussian(rng, d, d);
    (&x + x.adjoint()) * C64::new(0.5, 0.0)
}

/// Haar-distributed unitary (QR of a Ginibre matrix with phase fix).
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> ComplexMatrix {
    if d == 0 {
        return ComplexMatrix::zeros(0, 0);
    }
    let qr = complex_gaussian(rng, d, d).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = ComplexMatrix::from_fn(d, d, |i, j| {
        if i == j && r[(i, i)].norm() > 0.0 {
            r[(i, i)] / r[(i, i)].norm()
        } else if i == j {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    q * phases
}

/// Random `rows x cols` matrix of the given rank.
pub fn random_rank<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, rank: usize) -> ComplexMatrix {
    complex_gaussian(rng, rows, rank) * complex_gaussian(rng, rank, cols)
}

/// Random square matrix with a labeled partition into three blocks of the
/// given sizes (labels `a`, `b`, `c`).
pub fn random_three_block<R: Rng + ?Sized>(rng: &mut R, sizes: [usize; 3]) -> BlockOperatorMatrix {
    let dim: usize = sizes.iter().sum();
    let partition = BlockPartition::contiguous(&[("a", sizes[0]), ("b", sizes[1]), ("c", sizes[2])]).expect("fixed labels");
    BlockOperatorMatrix::new(complex_gaussian(rng, dim, dim), partition).expect("finite")
}

/// Two-block matrix `[[X11, X12], [X21, X22]]` with a rank-deficient pivot
/// `X22` (labels `keep`, `pivot`). When `compatible`, `X21 = X22 P` and
/// `X12 = Q X22`, so both inclusions hold; otherwise `X21` is generic and the
/// image inclusion fails.
pub fn rank_deficient_instance<R: Rng + ?Sized>(
    rng: &mut R,
    keep: usize,
    pivot: usize,
    rank: usize,
    compatible: bool,
) -> BlockOperatorMatrix {
    let x22 = random_rank(rng, pivot, pivot, rank);
    let x11 = complex_gaussian(rng, keep, keep);
    let (x12, x21) = if compatible {
        (
            complex_gaussian(rng, keep, pivot) * &x22,
            &x22 * complex_gaussian(rng, pivot, keep),
        )
    } else {
        (complex_gaussian(rng, keep, pivot) * &x22, complex_gaussian(rng, pivot, keep))
    };
    BlockOperatorMatrix::from_blocks(&[("keep", keep), ("pivot", pivot)], &[vec![x11, x12], vec![x21, x22]])
        .expect("consistent shapes")
}

/// A generalized inverse of `a` other than the pseudoinverse:
/// `a^+ + (I - a^+ a) Z1 + Z2 (I - a a^+)` for random `Z1`, `Z2`.
pub fn perturbed_generalized_inverse<R: Rng + ?Sized>(
    rng: &mut R,
    a: &ComplexMatrix,
    pinv: &ComplexMatrix,
) -> ComplexMatrix {
    let (r, c) = a.shape();
    let z1 = complex_gaussian(rng, c, r);
    let z2 = complex_gaussian(rng, c, r);
    pinv + (identity(c) - pinv * a) * z1 + z2 * (identity(r) - a * pinv)
}

/// Size limits and conditioning screen for [`random_family`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomFamilyConfig {
    pub max_dim: usize,
    pub max_fast: usize,
    pub max_channels: usize,
    /// Every pivot that any reduction order inverts must have a condition
    /// number below this.
    pub max_condition: f64,
}

impl Default for RandomFamilyConfig {
    fn default() -> Self {
        Self {
            max_dim: 6,
            max_fast: 3,
            max_channels: 4,
            max_condition: 1e6,
        }
    }
}

/// A random family meeting the structural, fast-decoupling and kernel
/// conditions, with at least one internal channel.
///
/// Built in a random orthonormal basis `[V_s, V_f]`: `F_j = V_f C_j V_s^*`
/// couples slow to fast only, `G_j` has no fast-to-slow block, `H2` lives on
/// the fast space, `H1` has no slow block, and `N` maps the slow (fast) part
/// of every channel into slow (fast) parts. These make every hatted
/// off-diagonal block vanish identically, before and after closing loops.
pub fn random_family<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomFamilyConfig) -> ScaledGeneratorFamily {
    loop {
        if let Some(fam) = try_random_family(rng, cfg) {
            return fam;
        }
    }
}

fn try_random_family<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomFamilyConfig) -> Option<ScaledGeneratorFamily> {
    let nf = rng.random_range(1..=cfg.max_fast.min(cfg.max_dim - 1));
    let ns = rng.random_range(1..=cfg.max_dim - nf);
    let d = ns + nf;
    let n = rng.random_range(1..=cfg.max_channels);
    let n_internal = rng.random_range(1..=n);
    let mut roles = vec![ChannelRole::External; n];
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    for &j in &order[..n_internal] {
        roles[j] = ChannelRole::Internal;
    }

    let v = random_unitary(rng, d);
    let vs = v.columns(0, ns).into_owned();
    let vf = v.columns(ns, nf).into_owned();
    let ps = &vs * vs.adjoint();
    let pf = &vf * vf.adjoint();

    let f_blocks: Vec<ComplexMatrix> = (0..n)
        .map(|_| &vf * complex_gaussian(rng, nf, ns) * vs.adjoint())
        .collect();
    let g_blocks: Vec<ComplexMatrix> = (0..n)
        .map(|_| {
            let g = complex_gaussian(rng, d, d);
            &g - &ps * &g * &pf
        })
        .collect();
    let f = hstack(&f_blocks, d);
    let g = hstack(&g_blocks, d);

    let h0 = random_hermitian(rng, d);
    let h1_raw = random_hermitian(rng, d);
    let h1 = &h1_raw - &ps * &h1_raw * &ps;
    let h2 = &vf * random_hermitian(rng, nf) * vf.adjoint();

    let w = hstack(&[channel_diag(&vs, n), channel_diag(&vf, n)], n * d);
    let mut u = ComplexMatrix::zeros(n * d, n * d);
    u.view_mut((0, 0), (n * ns, n * ns)).copy_from(&random_unitary(rng, n * ns));
    u.view_mut((n * ns, n * ns), (n * nf, n * nf)).copy_from(&random_unitary(rng, n * nf));
    let scattering = &w * u * w.adjoint();

    // the fast basis is re-derived from the slow one, as a spec file does
    let decomp = SubspaceDecomposition::from_slow_basis(vs).ok()?;
    let fam = ScaledGeneratorFamily::from_hamiltonians(&h0, &h1, &h2, f, g, scattering, decomp, roles).ok()?;
    well_conditioned(&fam, cfg.max_condition).then_some(fam)
}

fn internal_pivot(scattering: &ComplexMatrix, d: usize, internal: &[usize]) -> ComplexMatrix {
    let ni = internal.len();
    let mut out = ComplexMatrix::zeros(ni * d, ni * d);
    for (a, &p) in internal.iter().enumerate() {
        for (b, &q) in internal.iter().enumerate() {
            out.view_mut((a * d, b * d), (d, d)).copy_from(&grid_block(scattering, d, p, q));
        }
    }
    out - identity(ni * d)
}

fn well_conditioned(fam: &ScaledGeneratorFamily, limit: f64) -> bool {
    let internal = fam.internal_channels();
    let d = fam.dim();
    if condition_number(&fam.y_ff()) >= limit || condition_number(&internal_pivot(fam.scattering(), d, &internal)) >= limit
    {
        return false;
    }
    let Ok(hat) = fast_eliminated(fam) else { return false };
    if condition_number(&internal_pivot(&hat.n_hat, d, &internal)) >= limit {
        return false;
    }
    match feedback_family(fam) {
        Ok(fb) => condition_number(&fb.y_ff()) < limit,
        Err(_) => false,
    }
}
