//! Feedback elimination, adiabatic elimination and their compositions, all
//! expressed as Schur complements of generator matrices.

use crate::blockmat::{condition_number, frobenius, solve_checked, BlockOperatorMatrix, ComplexMatrix, MAX_PIVOT_CONDITION};
use crate::error::{Error, Result};
use crate::generator::{
    channel_diag, fast_residuals, grid_block, identity, validate_fast_decoupling, validate_hp, validate_structure,
    ChannelRole, ItoGeneratorMatrix, ScaledGeneratorFamily,
};
use crate::report::{Check, Fingerprint, ReductionReport, ValidationFragment, DEFAULT_TOL};

/// Relative agreement demanded between a nested-complement reduction and its
/// operational two-step counterpart.
pub const PATH_TOL: f64 = 1e-9;

pub const SYS: &str = "sys";
pub const FAST: &str = "fast";

/// `|a - b|_F / max(1, |a|_F)`, or infinity on shape mismatch.
pub fn relative_deviation(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    frobenius(&(a - b)) / frobenius(a).max(1.0)
}

/// Deviation between two generators, compared as full generator matrices.
pub fn generator_deviation(a: &ItoGeneratorMatrix, b: &ItoGeneratorMatrix) -> f64 {
    relative_deviation(&a.to_matrix(), &b.to_matrix())
}

fn labels(channels: &[usize]) -> Vec<String> {
    channels.iter().map(|&j| ItoGeneratorMatrix::channel_label(j)).collect()
}

fn as_strs(v: &[String]) -> Vec<&str> {
    v.iter().map(|s| s.as_str()).collect()
}

/// Gather the internal-internal scattering block as one square matrix.
fn internal_block(scattering: &ComplexMatrix, d: usize, internal: &[usize]) -> ComplexMatrix {
    let ni = internal.len();
    let mut out = ComplexMatrix::zeros(ni * d, ni * d);
    for (a, &p) in internal.iter().enumerate() {
        for (b, &q) in internal.iter().enumerate() {
            out.view_mut((a * d, b * d), (d, d)).copy_from(&grid_block(scattering, d, p, q));
        }
    }
    out
}

fn feedback_pivot_check(scattering: &ComplexMatrix, d: usize, internal: &[usize]) -> Result<()> {
    let pivot = internal_block(scattering, d, internal) - identity(internal.len() * d);
    let condition = condition_number(&pivot);
    if condition < MAX_PIVOT_CONDITION {
        Ok(())
    } else {
        Err(Error::IllPosedFeedback { condition })
    }
}

/// Close every channel tagged internal, leaving a generator on the external
/// channels (in their original order). With no internal channels the input is
/// returned unchanged.
pub fn feedback_eliminate(g: &ItoGeneratorMatrix) -> Result<ItoGeneratorMatrix> {
    let internal = g.internal_channels();
    if internal.is_empty() {
        return Ok(g.clone());
    }
    feedback_pivot_check(g.scattering(), g.dim(), &internal)?;
    let internal_labels = labels(&internal);
    let reduced = g.to_block_matrix().schur_complement(&as_strs(&internal_labels))?;
    let external = g.external_channels();
    ItoGeneratorMatrix::from_block_matrix(
        &reduced,
        &labels(&external),
        vec![ChannelRole::External; external.len()],
    )
}

/// [`feedback_eliminate`] with validation of input and output.
pub fn feedback_report(g: &ItoGeneratorMatrix, tol: f64) -> ReductionReport {
    let mut report = ReductionReport::new("feedback");
    report.input = Some(generator_fingerprint(g));
    let mut input_hp = validate_hp(g, tol);
    input_hp.name = "input_hp".into();
    let input_ok = input_hp.passed;
    report.push_fragment(input_hp);
    if !input_ok {
        return report;
    }
    let internal = g.internal_channels();
    if internal.is_empty() {
        report.notes.push("no internal channels: generator returned unchanged".into());
    } else {
        let pivot = internal_block(g.scattering(), g.dim(), &internal) - identity(internal.len() * g.dim());
        report.residuals.insert("cond(N_ii - I)".into(), condition_number(&pivot));
    }
    match feedback_eliminate(g) {
        Ok(out) => {
            let mut hp = validate_hp(&out, tol);
            hp.name = "output_hp".into();
            report.push_fragment(hp);
            report.outputs.push(("reduced".into(), out));
        }
        Err(e) => report.push_error("feedback", e),
    }
    report
}

pub fn generator_fingerprint(g: &ItoGeneratorMatrix) -> Fingerprint {
    Fingerprint::new(
        g.dim(),
        g.channels(),
        None,
        g.roles(),
        [g.k(), g.l(), g.m(), g.scattering()],
    )
}

pub fn family_fingerprint(fam: &ScaledGeneratorFamily) -> Fingerprint {
    Fingerprint::new(
        fam.dim(),
        fam.channels(),
        Some(fam.decomposition().slow_dim()),
        fam.roles(),
        [
            fam.y(),
            fam.a(),
            fam.b(),
            fam.f(),
            fam.g(),
            fam.scattering(),
            fam.decomposition().slow_basis(),
        ],
    )
}

/// The extended generator `[[B, A_sf, G], [A_f, Y_ff, F_f], [-N G^*, -N F_f^*, N - I]]`
/// with blocks labeled `sys` (full initial space), `fast` (fast coordinates)
/// and `ch0`, `ch1`, ... (one per channel).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedGeneratorMatrix {
    blocks: BlockOperatorMatrix,
    family: ScaledGeneratorFamily,
}

impl ExtendedGeneratorMatrix {
    pub fn blocks(&self) -> &BlockOperatorMatrix {
        &self.blocks
    }

    pub fn family(&self) -> &ScaledGeneratorFamily {
        &self.family
    }

    pub fn channel_labels(&self) -> Vec<String> {
        labels(&(0..self.family.channels()).collect::<Vec<_>>())
    }

    pub fn internal_labels(&self) -> Vec<String> {
        labels(&self.family.internal_channels())
    }

    pub fn external_labels(&self) -> Vec<String> {
        labels(&self.family.external_channels())
    }

    /// Complement over `pivot`, read back as a generator on the remaining
    /// channels and compressed to the slow subspace.
    fn reduce_over(&self, stages: &[Vec<&str>], roles_left: &[usize]) -> Result<ItoGeneratorMatrix> {
        let mut current = self.blocks.clone();
        for (i, stage) in stages.iter().enumerate() {
            current = current.schur_complement(stage).map_err(|e| stage_error(i + 1, stages.len(), e))?;
        }
        let full = ItoGeneratorMatrix::from_block_matrix(
            &current,
            &labels(roles_left),
            vec![ChannelRole::External; roles_left.len()],
        )?;
        full.compress(self.family.decomposition().slow_basis())
    }
}

fn stage_error(stage: usize, of: usize, e: Error) -> Error {
    match e {
        Error::SingularPivot {
            context,
            condition,
            limit,
        } if of > 1 => Error::SingularPivot {
            context: format!("stage {stage} {context}"),
            condition,
            limit,
        },
        other => other,
    }
}

/// Assemble the extended generator of a structurally valid family.
pub fn build_extended_generator(fam: &ScaledGeneratorFamily) -> Result<ExtendedGeneratorMatrix> {
    let structure = validate_structure(fam, DEFAULT_TOL);
    if !structure.passed {
        return Err(Error::Structure(structure.describe_failures()));
    }
    Ok(build_extended_unchecked(fam))
}

fn build_extended_unchecked(fam: &ScaledGeneratorFamily) -> ExtendedGeneratorMatrix {
    let d = fam.dim();
    let n = fam.channels();
    let dec = fam.decomposition();
    let vf = dec.fast_basis();
    let nf = dec.fast_dim();
    let ps = dec.p_slow();
    let a_sf = &ps * fam.a() * vf;
    let a_f = vf.adjoint() * fam.a();
    let f_f = vf.adjoint() * fam.f();
    let y_ff = fam.y_ff();
    let scat = fam.scattering();
    let bottom_left = -(scat * fam.g().adjoint());
    let bottom_mid = -(scat * f_f.adjoint());
    let bottom_right = scat - identity(n * d);

    let size = d + nf + n * d;
    let mut m = ComplexMatrix::zeros(size, size);
    let mut put = |r: usize, c: usize, x: &ComplexMatrix| m.view_mut((r, c), x.shape()).copy_from(x);
    put(0, 0, fam.b());
    put(0, d, &a_sf);
    put(0, d + nf, fam.g());
    put(d, 0, &a_f);
    put(d, d, &y_ff);
    put(d, d + nf, &f_f);
    put(d + nf, 0, &bottom_left);
    put(d + nf, d, &bottom_mid);
    put(d + nf, d + nf, &bottom_right);

    let mut sizes = vec![(SYS.to_string(), d), (FAST.to_string(), nf)];
    sizes.extend((0..n).map(|j| (ItoGeneratorMatrix::channel_label(j), d)));
    let blocks = BlockOperatorMatrix::new(m, crate::blockmat::BlockPartition::contiguous(&sizes).expect("fresh labels"))
        .expect("consistent shapes");
    ExtendedGeneratorMatrix {
        blocks,
        family: fam.clone(),
    }
}

fn require_adiabatic_preconditions(fam: &ScaledGeneratorFamily, tol: f64) -> Result<()> {
    let structure = validate_structure(fam, tol);
    if !structure.passed {
        return Err(Error::Structure(structure.describe_failures()));
    }
    let fast = validate_fast_decoupling(fam, tol);
    if !fast.passed {
        let r = fast_residuals(fam)?;
        return Err(Error::FastDecoupling {
            l_fast: r.l_fast,
            n_sf: r.n_sf,
            n_fs: r.n_fs,
        });
    }
    Ok(())
}

/// Strong-coupling limit of the family: the extended generator
/// complemented over its fast block, compressed to the slow subspace.
pub fn adiabatic_eliminate(fam: &ScaledGeneratorFamily) -> Result<ItoGeneratorMatrix> {
    require_adiabatic_preconditions(fam, DEFAULT_TOL)?;
    let ext = build_extended_unchecked(fam);
    let out = ext.reduce_over(&[vec![FAST]], &(0..fam.channels()).collect::<Vec<_>>())?;
    out.with_roles(fam.roles().to_vec())
}

/// [`adiabatic_eliminate`] with all precondition residuals recorded.
pub fn adiabatic_report(fam: &ScaledGeneratorFamily, tol: f64) -> ReductionReport {
    let mut report = ReductionReport::new("adiabatic");
    report.input = Some(family_fingerprint(fam));
    report.push_fragment(validate_structure(fam, tol));
    report.push_fragment(validate_fast_decoupling(fam, tol));
    if !report.passed {
        return report;
    }
    match adiabatic_eliminate(fam) {
        Ok(out) => {
            let mut hp = validate_hp(&out, tol);
            hp.name = "output_hp".into();
            report.push_fragment(hp);
            report.outputs.push(("reduced".into(), out));
        }
        Err(e) => report.push_error("adiabatic", e),
    }
    report
}

/// The family obtained by closing the internal channels at every `k`:
/// with `X = (N_ii - I)^-1`,
/// `Y' = Y + F_i X N_i F^*`, `A' = A + F_i X N_i G^* + G_i X N_i F^*`,
/// `B' = B + G_i X N_i G^*`, `F' = F_e - F_i X N_ie`, `G' = G_e - G_i X N_ie`,
/// `N' = N_ee - N_ei X N_ie`.
pub fn feedback_family(fam: &ScaledGeneratorFamily) -> Result<ScaledGeneratorFamily> {
    let internal = fam.internal_channels();
    if internal.is_empty() {
        return Ok(fam.clone());
    }
    let external = fam.external_channels();
    let d = fam.dim();
    let scat = fam.scattering();
    feedback_pivot_check(scat, d, &internal)?;

    let cols = |x: &ComplexMatrix, chans: &[usize]| {
        let mut out = ComplexMatrix::zeros(x.nrows(), chans.len() * d);
        for (a, &j) in chans.iter().enumerate() {
            out.view_mut((0, a * d), (x.nrows(), d)).copy_from(&x.columns(j * d, d));
        }
        out
    };
    let rows = |x: &ComplexMatrix, chans: &[usize]| {
        let mut out = ComplexMatrix::zeros(chans.len() * d, x.ncols());
        for (a, &j) in chans.iter().enumerate() {
            out.view_mut((a * d, 0), (d, x.ncols())).copy_from(&x.rows(j * d, d));
        }
        out
    };

    let pivot = internal_block(scat, d, &internal) - identity(internal.len() * d);
    let n_i = rows(scat, &internal); // internal rows, all columns
    let x_n_i = solve_checked(&pivot, &n_i, "N_ii - I")?;
    let f_i = cols(fam.f(), &internal);
    let g_i = cols(fam.g(), &internal);
    let (f_star, g_star) = (fam.f().adjoint(), fam.g().adjoint());

    let y = fam.y() + &f_i * &x_n_i * &f_star;
    let a = fam.a() + &f_i * &x_n_i * &g_star + &g_i * &x_n_i * &f_star;
    let b = fam.b() + &g_i * &x_n_i * &g_star;
    let x_n_ie = cols(&x_n_i, &external);
    let f = cols(fam.f(), &external) - &f_i * &x_n_ie;
    let g = cols(fam.g(), &external) - &g_i * &x_n_ie;
    let n_ee = cols(&rows(scat, &external), &external);
    let n_ei = cols(&rows(scat, &external), &internal);
    let scattering = n_ee - n_ei * x_n_ie;
    ScaledGeneratorFamily::new_unchecked(
        y,
        a,
        b,
        f,
        g,
        scattering,
        fam.decomposition().clone(),
        vec![ChannelRole::External; external.len()],
    )
}

/// Residuals of the condition that closing the loops keeps the `k^2` block
/// on the fast space: `|P_s Yhat|`, `|Yhat P_s|` and `cond(Yhat_ff)`.
pub fn kernel_condition(fam: &ScaledGeneratorFamily, tol: f64) -> Result<ValidationFragment> {
    let fb = feedback_family(fam)?;
    let ps = fam.decomposition().p_slow();
    let scale = frobenius(fb.y());
    Ok(ValidationFragment::new(
        "kernel_condition",
        vec![
            Check::at_most("|P_s Yhat|", frobenius(&(&ps * fb.y())), tol * scale.max(1.0)),
            Check::at_most("|Yhat P_s|", frobenius(&(fb.y() * &ps)), tol * scale.max(1.0)),
            Check::below("cond(Yhat_ff)", condition_number(&fb.y_ff()), MAX_PIVOT_CONDITION),
        ],
    ))
}

fn require_kernel_condition(fam: &ScaledGeneratorFamily) -> Result<()> {
    let frag = kernel_condition(fam, DEFAULT_TOL)?;
    if frag.passed {
        return Ok(());
    }
    let get = |name: &str| frag.check(name).map(|c| c.residual).unwrap_or(f64::NAN);
    Err(Error::KernelCondition {
        slow_left: get("|P_s Yhat|"),
        slow_right: get("|Yhat P_s|"),
        fast_condition: get("cond(Yhat_ff)"),
    })
}

/// A composed reduction computed two ways.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    /// Nested Schur complement of the extended generator.
    pub nested: ItoGeneratorMatrix,
    /// The two reductions applied one after the other.
    pub two_step: ItoGeneratorMatrix,
    /// Relative deviation between the two.
    pub discrepancy: f64,
}

fn finish(path: &'static str, nested: ItoGeneratorMatrix, two_step: ItoGeneratorMatrix) -> Result<Composition> {
    let discrepancy = generator_deviation(&nested, &two_step);
    if !(discrepancy <= PATH_TOL) {
        return Err(Error::PathMismatch {
            path,
            deviation: discrepancy,
            threshold: PATH_TOL,
        });
    }
    Ok(Composition {
        nested,
        two_step,
        discrepancy,
    })
}

/// Adiabatic elimination followed by feedback elimination, computed as
/// `(G_E / fast) / internal` and as `feedback_eliminate(adiabatic_eliminate(fam))`.
pub fn compose_fa_paths(fam: &ScaledGeneratorFamily) -> Result<Composition> {
    require_adiabatic_preconditions(fam, DEFAULT_TOL)?;
    let ext = build_extended_unchecked(fam);
    let internal = ext.internal_labels();
    let external = fam.external_channels();
    let nested = if internal.is_empty() {
        ext.reduce_over(&[vec![FAST]], &external)?
    } else {
        // the loop pivot of the adiabatic limit is Nhat_ii - I
        let eliminated = ext.blocks.schur_complement(&[FAST])?;
        let nhat = ItoGeneratorMatrix::from_block_matrix(
            &eliminated,
            &ext.channel_labels(),
            vec![ChannelRole::External; fam.channels()],
        )?;
        feedback_pivot_check(nhat.scattering(), fam.dim(), &fam.internal_channels())?;
        ext.reduce_over(&[vec![FAST], as_strs(&internal)], &external)?
    };
    let two_step = feedback_eliminate(&adiabatic_eliminate(fam)?)?;
    finish("feedback after adiabatic elimination", nested, two_step)
}

pub fn compose_fa(fam: &ScaledGeneratorFamily) -> Result<ItoGeneratorMatrix> {
    compose_fa_paths(fam).map(|c| c.nested)
}

/// Feedback elimination followed by adiabatic elimination, computed as
/// `(G_E / internal) / fast` and as `adiabatic_eliminate(feedback_family(fam))`.
pub fn compose_af_paths(fam: &ScaledGeneratorFamily) -> Result<Composition> {
    require_adiabatic_preconditions(fam, DEFAULT_TOL)?;
    let ext = build_extended_unchecked(fam);
    let internal = ext.internal_labels();
    let external = fam.external_channels();
    let nested = if internal.is_empty() {
        ext.reduce_over(&[vec![FAST]], &external)?
    } else {
        feedback_pivot_check(fam.scattering(), fam.dim(), &fam.internal_channels())?;
        require_kernel_condition(fam)?;
        ext.reduce_over(&[as_strs(&internal), vec![FAST]], &external)?
    };
    let two_step = adiabatic_eliminate(&feedback_family(fam)?)?;
    finish("adiabatic after feedback elimination", nested, two_step)
}

pub fn compose_af(fam: &ScaledGeneratorFamily) -> Result<ItoGeneratorMatrix> {
    compose_af_paths(fam).map(|c| c.nested)
}

/// Complement of the extended generator over the fast block and all internal
/// channels at once.
pub fn one_shot(fam: &ScaledGeneratorFamily) -> Result<ItoGeneratorMatrix> {
    require_adiabatic_preconditions(fam, DEFAULT_TOL)?;
    let ext = build_extended_unchecked(fam);
    let internal = ext.internal_labels();
    let mut pivot = vec![FAST];
    pivot.extend(as_strs(&internal));
    ext.reduce_over(&[pivot], &fam.external_channels())
}

/// Compute both composition orders and the one-shot complement, and compare
/// them pairwise. Stage failures are recorded in the report, never raised.
pub fn check_commutativity(fam: &ScaledGeneratorFamily, tol: f64) -> ReductionReport {
    let mut report = ReductionReport::new("commute");
    report.input = Some(family_fingerprint(fam));
    report.push_fragment(validate_structure(fam, tol));
    report.push_fragment(validate_fast_decoupling(fam, tol));
    if !fam.internal_channels().is_empty() {
        match kernel_condition(fam, tol) {
            Ok(frag) => report.push_fragment(frag),
            Err(e) => report.push_error("kernel_condition", e),
        }
    } else {
        report.notes.push("no internal channels: feedback elimination is the identity".into());
    }

    let mut results: Vec<(&str, ItoGeneratorMatrix)> = Vec::new();
    match compose_fa_paths(fam) {
        Ok(c) => {
            report.residuals.insert("fa: nested vs two-step".into(), c.discrepancy);
            results.push(("fa", c.nested));
        }
        Err(e) => report.push_error("fa", e),
    }
    match compose_af_paths(fam) {
        Ok(c) => {
            report.residuals.insert("af: nested vs two-step".into(), c.discrepancy);
            results.push(("af", c.nested));
        }
        Err(e) => report.push_error("af", e),
    }
    match one_shot(fam) {
        Ok(g) => results.push(("one_shot", g)),
        Err(e) => report.push_error("one_shot", e),
    }

    for (i, (na, a)) in results.iter().enumerate() {
        for (nb, b) in &results[i + 1..] {
            let dev = generator_deviation(a, b);
            report.residuals.insert(format!("{na} vs {nb}"), dev);
        }
    }
    let pairwise: Vec<Check> = report
        .residuals
        .iter()
        .filter(|(k, _)| k.contains(" vs ") && !k.contains(':'))
        .map(|(k, &v)| Check::at_most(k.clone(), v, tol))
        .collect();
    if !pairwise.is_empty() {
        report.push_fragment(ValidationFragment::new("commutativity", pairwise));
    }
    for (name, g) in results {
        let mut hp = validate_hp(&g, tol);
        hp.name = format!("{name}_hp");
        report.push_fragment(hp);
        report.outputs.push((name.to_string(), g));
    }
    report
}

/// Expand a slow-dimensional operator back into the full initial space.
pub fn embed_slow(fam: &ScaledGeneratorFamily, x: &ComplexMatrix) -> ComplexMatrix {
    let vs = fam.decomposition().slow_basis();
    vs * x * vs.adjoint()
}

/// `I_n ⊗ V_s`, the isometry the compressions use on channel grids.
pub fn slow_channel_isometry(fam: &ScaledGeneratorFamily) -> ComplexMatrix {
    channel_diag(fam.decomposition().slow_basis(), fam.channels())
}
