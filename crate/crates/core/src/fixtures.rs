//! Canonical generators and families used by the examples, the tests and the
//! shipped fixture files.
//!
//! Qubit-mode models use the product basis `|q, n>` at index `q * m + n`, with
//! `q = 0` the ground and `q = 1` the excited qubit state and `m` the mode
//! truncation.

use crate::blockmat::{ComplexMatrix, C64};
use crate::error::Result;
use crate::generator::{
    from_slh, hstack, identity, real, real_matrix, ChannelRole, ItoGeneratorMatrix, ScaledGeneratorFamily, SlhTriple,
    SubspaceDecomposition,
};

/// `|g><e|` in the basis `(g, e)`.
pub fn sigma_minus() -> ComplexMatrix {
    real_matrix(2, 2, &[0.0, 1.0, 0.0, 0.0])
}

/// `|e><e| - |g><g|`.
pub fn sigma_z() -> ComplexMatrix {
    real_matrix(2, 2, &[-1.0, 0.0, 0.0, 1.0])
}

/// Mode lowering operator truncated to `m` levels.
pub fn lowering(m: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(m, m, |r, c| if c == r + 1 { real((c as f64).sqrt()) } else { real(0.0) })
}

fn beam_splitter(theta: f64) -> ComplexMatrix {
    let (s, c) = theta.sin_cos();
    real_matrix(2, 2, &[c, -s, s, c])
}

/// Zero generator on `d` dimensions with `n` channels.
pub fn trivial() -> ItoGeneratorMatrix {
    ItoGeneratorMatrix::trivial(2, 1)
}

/// One-dimensional system, two channels swapped by the scattering matrix,
/// the second channel internal.
pub fn swap_scattering() -> ItoGeneratorMatrix {
    ItoGeneratorMatrix::new(
        ComplexMatrix::zeros(1, 1),
        ComplexMatrix::zeros(1, 2),
        ComplexMatrix::zeros(2, 1),
        real_matrix(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        vec![ChannelRole::External, ChannelRole::Internal],
    )
    .expect("valid generator")
}

/// A loop with `N = I`: closing it is ill-posed.
pub fn identity_loop() -> ItoGeneratorMatrix {
    ItoGeneratorMatrix::trivial(2, 1)
        .with_roles(vec![ChannelRole::Internal])
        .expect("one role")
}

/// Qubit decaying at rate `gamma`, basis `(g, e)`.
pub fn amplitude_damping(gamma: f64) -> ItoGeneratorMatrix {
    let c = sigma_minus() * real(gamma.sqrt());
    from_slh(&SlhTriple::unscattered(vec![c], ComplexMatrix::zeros(2, 2)).expect("valid triple")).expect("valid generator")
}

/// Amplitude damping with the sign of `M` flipped, so `M = +N L^*`.
pub fn flipped_m_sign() -> ItoGeneratorMatrix {
    let g = amplitude_damping(1.0);
    ItoGeneratorMatrix::new_unchecked(
        g.k().clone(),
        g.l().clone(),
        -g.m(),
        g.scattering().clone(),
        g.roles().to_vec(),
    )
    .expect("shapes")
}

/// Two-level truncated cavity with two mirrors; the second port is fed back
/// into the first through a beam splitter, and is internal.
pub fn cavity_loop() -> ItoGeneratorMatrix {
    let a = lowering(2);
    let (k1, k2, delta, theta): (f64, f64, f64, f64) = (1.0, 0.5, 0.2, std::f64::consts::FRAC_PI_3);
    let h = a.adjoint() * &a * real(delta);
    let s = beam_splitter(theta).kronecker(&identity(2));
    let triple = SlhTriple::new(s, vec![&a * real(k1.sqrt()), &a * real(k2.sqrt())], h).expect("valid triple");
    from_slh(&triple)
        .expect("valid generator")
        .with_roles(vec![ChannelRole::External, ChannelRole::Internal])
        .expect("two roles")
}

/// Parameters of the qubit-cavity family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastCavity {
    /// Mode truncation.
    pub levels: usize,
    /// Qubit-mode exchange coupling.
    pub coupling: f64,
    /// Cavity decay rates of the cavity ports; all but the first are fed
    /// through the loop scattering when `loop_angle` is set.
    pub cavity_rates: [f64; 2],
    /// Direct qubit decay rate.
    pub qubit_rate: f64,
    /// Cavity detuning, scaled by `k^2`.
    pub detuning: f64,
    /// Qubit splitting.
    pub qubit_splitting: f64,
    /// Beam-splitter angle and internal phase of the loop; `None` gives a
    /// single cavity port.
    pub loop_angle: Option<(f64, f64)>,
}

impl Default for FastCavity {
    fn default() -> Self {
        Self {
            levels: 3,
            coupling: 0.5,
            cavity_rates: [1.0, 0.0],
            qubit_rate: 0.2,
            detuning: 0.3,
            qubit_splitting: 1.0,
            loop_angle: None,
        }
    }
}

impl FastCavity {
    /// Two cavity ports, the second internal, closed through a beam splitter
    /// at angle `pi / 3` with internal phase `pi / 4`.
    pub fn with_loop() -> Self {
        Self {
            cavity_rates: [0.5, 0.5],
            loop_angle: Some((std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_4)),
            ..Self::default()
        }
    }

    /// The family `K(k) = -L L^*/2 + i H(k)` with `L(k) = k F + G`:
    /// cavity ports carry `F = sqrt(kappa) (I ⊗ a^*)`, the qubit port carries
    /// `G = sqrt(gamma) (sigma_+ ⊗ I)`, `H(k) = w sigma_z / 2 + k g (sigma_+ a
    /// + sigma_- a^*) + k^2 delta a^* a`. The slow space is `|g,0>, |e,0>`.
    pub fn family(&self) -> Result<ScaledGeneratorFamily> {
        let m = self.levels;
        let d = 2 * m;
        let a = lowering(m);
        let id_q = identity(2);
        let id_m = identity(m);
        let sp = sigma_minus().adjoint();
        let big_a = id_q.kronecker(&a);
        let sp_full = sp.kronecker(&id_m);

        let mut f_blocks = vec![big_a.adjoint() * real(self.cavity_rates[0].sqrt())];
        let mut g_blocks = vec![ComplexMatrix::zeros(d, d)];
        let mut roles = vec![ChannelRole::External];
        if self.loop_angle.is_some() {
            f_blocks.push(big_a.adjoint() * real(self.cavity_rates[1].sqrt()));
            g_blocks.push(ComplexMatrix::zeros(d, d));
            roles.push(ChannelRole::Internal);
        }
        f_blocks.push(ComplexMatrix::zeros(d, d));
        g_blocks.push(&sp_full * real(self.qubit_rate.sqrt()));
        roles.push(ChannelRole::External);
        let n = roles.len();

        let h0 = sigma_z().kronecker(&id_m) * real(0.5 * self.qubit_splitting);
        let exchange = sp.kronecker(&a) + sigma_minus().kronecker(&a.adjoint());
        let h1 = exchange * real(self.coupling);
        let h2 = id_q.kronecker(&(a.adjoint() * &a)) * real(self.detuning);

        let scattering = match self.loop_angle {
            None => identity(n * d),
            Some((theta, phi)) => {
                let mut s = ComplexMatrix::identity(3, 3);
                s.view_mut((0, 0), (2, 2)).copy_from(&beam_splitter(theta));
                let phase = C64::from_polar(1.0, phi);
                for c in 0..3 {
                    s[(1, c)] *= phase;
                }
                s.kronecker(&identity(d))
            }
        };
        let decomp = SubspaceDecomposition::coordinate(d, &[0, m])?;
        ScaledGeneratorFamily::from_hamiltonians(
            &h0,
            &h1,
            &h2,
            hstack(&f_blocks, d),
            hstack(&g_blocks, d),
            scattering,
            decomp,
            roles,
        )
    }
}

pub fn fast_cavity() -> ScaledGeneratorFamily {
    FastCavity::default().family().expect("valid family")
}

pub fn fast_cavity_loop() -> ScaledGeneratorFamily {
    FastCavity::with_loop().family().expect("valid family")
}

/// Three levels, slow `{0, 1}` and fast `{2}`, with `F = A = 0`: the fast
/// level is detached and adiabatic elimination is exact restriction. The
/// second channel is internal and only touches the slow space.
pub fn decoupled_family() -> ScaledGeneratorFamily {
    let d = 3;
    let mut g0 = ComplexMatrix::zeros(d, d);
    g0[(0, 1)] = real(0.4);
    let mut g1 = ComplexMatrix::zeros(d, d);
    g1[(1, 0)] = real(0.3);
    let h0 = real_matrix(3, 3, &[0.5, 0.1, 0.0, 0.1, -0.5, 0.0, 0.0, 0.0, 0.7]);
    let mut h2 = ComplexMatrix::zeros(d, d);
    h2[(2, 2)] = real(1.2);
    let z = ComplexMatrix::zeros(d, d);
    let scattering = beam_splitter(std::f64::consts::FRAC_PI_4).kronecker(&identity(d));
    ScaledGeneratorFamily::from_hamiltonians(
        &h0,
        &z,
        &h2,
        ComplexMatrix::zeros(d, 2 * d),
        hstack(&[g0, g1], d),
        scattering,
        SubspaceDecomposition::coordinate(d, &[0, 1]).expect("valid indices"),
        vec![ChannelRole::External, ChannelRole::Internal],
    )
    .expect("valid family")
}

/// Slow level `0`, fast level `1`, and `G` coupling the fast level into the
/// slow one: the eliminated coupling keeps a fast component.
pub fn fast_violation() -> ScaledGeneratorFamily {
    let z = ComplexMatrix::zeros(2, 2);
    let mut g = ComplexMatrix::zeros(2, 2);
    g[(0, 1)] = real(0.25);
    g[(0, 0)] = real(0.3);
    let mut h2 = ComplexMatrix::zeros(2, 2);
    h2[(1, 1)] = real(1.0);
    ScaledGeneratorFamily::from_hamiltonians(
        &z,
        &z,
        &h2,
        z.clone(),
        g,
        identity(2),
        SubspaceDecomposition::coordinate(2, &[0]).expect("valid indices"),
        vec![ChannelRole::External],
    )
    .expect("valid family")
}

/// A fast level `1` decaying into the slow level `0` through a loop with
/// phase `pi / 2`, tuned so that closing the loop first leaves the `k^2`
/// block singular on the fast space. A spectator fast level `2` keeps the
/// singularity visible to the condition-number test.
pub fn closed_loop_singular_family() -> ScaledGeneratorFamily {
    let d = 3;
    let kappa = 1.0;
    let phi = std::f64::consts::FRAC_PI_2;
    // Yhat_ff on level 1 is i (delta - kappa/2 cot(phi/2))
    let delta = 0.5 * kappa / (0.5 * phi).tan();
    let mut f = ComplexMatrix::zeros(d, d);
    f[(1, 0)] = real(kappa.sqrt());
    let mut h1 = ComplexMatrix::zeros(d, d);
    h1[(0, 1)] = real(0.4);
    h1[(1, 0)] = real(0.4);
    let mut h2 = ComplexMatrix::zeros(d, d);
    h2[(1, 1)] = real(delta);
    h2[(2, 2)] = real(1.0);
    let h0 = real_matrix(3, 3, &[0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let scattering = identity(d) * C64::from_polar(1.0, phi);
    ScaledGeneratorFamily::from_hamiltonians(
        &h0,
        &h1,
        &h2,
        f,
        ComplexMatrix::zeros(d, d),
        scattering,
        SubspaceDecomposition::coordinate(d, &[0]).expect("valid indices"),
        vec![ChannelRole::Internal],
    )
    .expect("valid family")
}

/// `H = sigma_z`, no channels.
pub fn pure_hamiltonian() -> ItoGeneratorMatrix {
    from_slh(&SlhTriple::new(ComplexMatrix::zeros(0, 0), vec![], sigma_z()).expect("valid triple")).expect("valid generator")
}
