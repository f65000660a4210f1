//! Closed-form integrals of the Kahan maps, their HK-basis coefficient
//! functions and invariant-measure densities.
//!
//! Bilinear ("J0-class") quantities are evaluated on the pair `(x, x~)` with
//! `x~` the forward Kahan step from `x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadfield::StateVector;
use crate::systems::{
    m, p, ClebschParams, KirchhoffParams, LagrangeParams, Model, PlanarFamilyParams, SystemDescriptor, CYCLIC,
};

/// Denominators smaller than this in magnitude are reported as zero.
pub const DENOMINATOR_TOL: f64 = 1e-12;

fn nonzero(what: &'static str, value: f64) -> Result<f64> {
    if value.abs() < DENOMINATOR_TOL || !value.is_finite() {
        Err(Error::DenominatorZero { what, value })
    } else {
        Ok(value)
    }
}

fn forward(desc: &SystemDescriptor, x: &[f64], eps: f64) -> Result<StateVector> {
    Ok(desc.field.kahan_step(x, eps)?.next)
}

fn unsupported(desc: &SystemDescriptor, what: &str) -> Error {
    Error::Unsupported {
        system: desc.kind.to_string(),
        what: what.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffKind {
    /// Coefficients built from `x` alone (`c_i`, or `r, s`).
    SmallC,
    /// Coefficients built from `(x, x~)` (`C_i`, or `R, S`).
    BigC,
}

// ---------------------------------------------------------------------------
// First Clebsch flow

fn first_small(omega: [f64; 3], x: &[f64], eps: f64) -> [f64; 4] {
    let e2 = eps * eps;
    let sq = [0, 1, 2].map(|i| x[p(i)] * x[p(i)]);
    let mut c = [0.0; 4];
    for (i, j, k) in CYCLIC {
        c[i] = 1.0 + e2 * (omega[i] - omega[j]) * sq[j] + e2 * (omega[i] - omega[k]) * sq[k];
    }
    c[3] = sq.iter().sum();
    c
}

fn first_big(omega: [f64; 3], x: &[f64], xt: &[f64], eps: f64) -> [f64; 4] {
    let e2 = eps * eps;
    let pp = [0, 1, 2].map(|i| x[p(i)] * xt[p(i)]);
    let mut c = [0.0; 4];
    for (i, j, k) in CYCLIC {
        c[i] = 1.0 + e2 * (omega[j] - omega[i]) * pp[j] + e2 * (omega[k] - omega[i]) * pp[k];
    }
    c[3] = pp.iter().sum();
    c
}

fn first_i0(omega: [f64; 3], x: &[f64], eps: f64) -> Result<f64> {
    let num: f64 = (0..3).map(|i| x[p(i)] * x[p(i)]).sum();
    let den = 1.0 - eps * eps * (0..3).map(|i| omega[i] * x[p(i)] * x[p(i)]).sum::<f64>();
    Ok(num / nonzero("I0", den)?)
}

fn first_j0_den(omega: [f64; 3], x: &[f64], xt: &[f64], eps: f64) -> f64 {
    1.0 + eps * eps * (0..3).map(|i| omega[i] * x[p(i)] * xt[p(i)]).sum::<f64>()
}

fn first_j0(omega: [f64; 3], x: &[f64], xt: &[f64], eps: f64) -> Result<f64> {
    let num: f64 = (0..3).map(|i| x[p(i)] * xt[p(i)]).sum();
    Ok(num / nonzero("J0", first_j0_den(omega, x, xt, eps))?)
}

/// `K = sum_i (C_i / C_0) (m_i p_i) / c_0` for the first Clebsch flow.
pub fn eval_k(x: &[f64], eps: f64, omega: [f64; 3]) -> Result<f64> {
    let desc = crate::systems::build_system(&crate::systems::SystemConfig::FirstClebsch { omega })?;
    let xt = forward(&desc, x, eps)?;
    first_k(omega, x, &xt, eps)
}

fn first_k(omega: [f64; 3], x: &[f64], xt: &[f64], eps: f64) -> Result<f64> {
    let c = first_small(omega, x, eps);
    let big = first_big(omega, x, xt, eps);
    let c0 = nonzero("c0", c[3])?;
    let big0 = nonzero("C0", big[3])?;
    Ok((0..3).map(|i| big[i] / big0 * x[m(i)] * x[p(i)] / c0).sum())
}

/// Null vectors of the first-Clebsch bases written through the integrals:
/// `[1 + eps^2 w_i I0 : -I0]` for `SmallC`, `[1 - eps^2 w_i J0 : -J0]` for
/// `BigC`.
pub fn first_clebsch_closed_form(omega: [f64; 3], x: &[f64], eps: f64, kind: CoeffKind) -> Result<[f64; 4]> {
    let desc = crate::systems::build_system(&crate::systems::SystemConfig::FirstClebsch { omega })?;
    let e2 = eps * eps;
    let (value, sign) = match kind {
        CoeffKind::SmallC => (first_i0(omega, x, eps)?, 1.0),
        CoeffKind::BigC => {
            let xt = forward(&desc, x, eps)?;
            (first_j0(omega, x, &xt, eps)?, -1.0)
        }
    };
    Ok([
        1.0 + sign * e2 * omega[0] * value,
        1.0 + sign * e2 * omega[1] * value,
        1.0 + sign * e2 * omega[2] * value,
        -value,
    ])
}

// ---------------------------------------------------------------------------
// General Clebsch flow

fn clebsch_beta(params: &ClebschParams) -> Result<f64> {
    match params.beta {
        Some(b) if b != 0.0 && b.is_finite() => Ok(b),
        _ => Err(Error::Degenerate("Clebsch integrals need a finite nonzero beta".into())),
    }
}

/// `G_i(x, y) = p_i y_{p_i} + beta a_i / (a_j a_k) m_i y_{m_i}`; `g_i` is
/// the diagonal `G_i(x, x)`.
pub fn clebsch_g(params: &ClebschParams, x: &[f64], y: &[f64]) -> Result<[f64; 3]> {
    let beta = clebsch_beta(params)?;
    let a = params.a;
    Ok(CYCLIC.map(|(i, j, k)| x[p(i)] * y[p(i)] + beta * a[i] / (a[j] * a[k]) * x[m(i)] * y[m(i)]))
}

/// `c_i` (sign +1, from `g`) or `C_i` (sign -1, from `G`), followed by the
/// common `c_0`/`C_0`.
fn clebsch_coeffs(params: &ClebschParams, g: [f64; 3], eps: f64, sign: f64) -> [f64; 4] {
    let (a, b, w) = (params.a, params.b, params.wcoef);
    let e2 = sign * eps * eps;
    let mut c = [0.0; 4];
    for (i, j, k) in CYCLIC {
        c[i] = w[i] + e2 * w[k] * a[i] * (b[i] - b[j]) * g[j] + e2 * w[j] * a[i] * (b[i] - b[k]) * g[k];
        c[3] += w[i] * a[j] * a[k] * g[i];
    }
    c
}

fn clebsch_lambda(params: &ClebschParams) -> Result<f64> {
    let a = params.a;
    Ok(a[0] * a[1] * a[2] / clebsch_beta(params)?)
}

fn clebsch_i0(params: &ClebschParams, x: &[f64], eps: f64) -> Result<f64> {
    let g = clebsch_g(params, x, x)?;
    let c = clebsch_coeffs(params, g, eps, 1.0);
    let den = 1.0 + eps * eps * clebsch_lambda(params)? * g.iter().sum::<f64>();
    Ok(c[3] / nonzero("I0", den)?)
}

fn clebsch_j0_den(params: &ClebschParams, x: &[f64], xt: &[f64], eps: f64) -> Result<f64> {
    let big_g = clebsch_g(params, x, xt)?;
    Ok(1.0 - eps * eps * clebsch_lambda(params)? * big_g.iter().sum::<f64>())
}

fn clebsch_j0(params: &ClebschParams, x: &[f64], xt: &[f64], eps: f64) -> Result<f64> {
    let big_g = clebsch_g(params, x, xt)?;
    let c = clebsch_coeffs(params, big_g, eps, -1.0);
    Ok(c[3] / nonzero("J0", clebsch_j0_den(params, x, xt, eps)?)?)
}

// ---------------------------------------------------------------------------
// Kirchhoff case

fn kirchhoff_small(k: &KirchhoffParams, x: &[f64], eps: f64) -> [f64; 2] {
    let KirchhoffParams { a1, a3, b1, b3 } = *k;
    let e2 = eps * eps;
    let c1 = 1.0 + e2 * a3 * (a1 - a3) * x[2] * x[2] + e2 * a1 * (b1 - b3) * x[5] * x[5];
    let c3 = 2.0 * a3 / a1 - 1.0
        + e2 * a1 * (a3 - a1) * (x[0] * x[0] + x[1] * x[1])
        + e2 * a3 * (b3 - b1) * (x[3] * x[3] + x[4] * x[4]);
    [c1, c3]
}

fn kirchhoff_big(k: &KirchhoffParams, x: &[f64], xt: &[f64], eps: f64) -> [f64; 2] {
    let KirchhoffParams { a1, a3, b1, b3 } = *k;
    let e2 = eps * eps;
    let big1 = 1.0 - e2 * a3 * (a1 - a3) * x[2] * x[2] - e2 * a1 * (b1 - b3) * x[5] * xt[5];
    let big3 = 2.0 * a3 / a1
        - 1.0
        - e2 * a1 * (a3 - a1) * (x[0] * xt[0] + x[1] * xt[1])
        - e2 * a3 * (b3 - b1) * (x[3] * xt[3] + x[4] * xt[4]);
    [big1, big3]
}

// ---------------------------------------------------------------------------
// Lagrange top

fn lagrange_m3(x: &[f64]) -> Result<f64> {
    nonzero("m3", x[2])
}

fn lagrange_small(l: &LagrangeParams, x: &[f64], eps: f64) -> Result<[f64; 2]> {
    let LagrangeParams { alpha, gamma } = *l;
    let e2 = eps * eps;
    let m3 = lagrange_m3(x)?;
    let r = (2.0 * alpha - 1.0)
        + e2 * (alpha - 1.0) * (x[0] * x[0] + x[1] * x[1])
        + e2 * gamma / m3 * (x[0] * x[3] + x[1] * x[4]);
    let s = 1.0 + e2 * alpha * (1.0 - alpha) * m3 * m3 - e2 * gamma * x[5];
    Ok([r, s])
}

fn lagrange_big(l: &LagrangeParams, x: &[f64], xt: &[f64], eps: f64) -> Result<[f64; 2]> {
    let LagrangeParams { alpha, gamma } = *l;
    let e2 = eps * eps;
    let m3 = lagrange_m3(x)?;
    let big_r = (2.0 * alpha - 1.0)
        - e2 * (alpha - 1.0) * (x[0] * xt[0] + x[1] * xt[1])
        - e2 * gamma / (2.0 * m3) * (xt[0] * x[3] + x[0] * xt[3] + xt[1] * x[4] + x[1] * xt[4]);
    let big_s = 1.0 - e2 * alpha * (1.0 - alpha) * m3 * m3 + 0.5 * e2 * gamma * (x[5] + xt[5]);
    Ok([big_r, big_s])
}

// ---------------------------------------------------------------------------
// Planar family

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanarVariant {
    F,
    Fhat,
}

fn planar_f(pf: &PlanarFamilyParams, x: &[f64], eps: f64) -> Result<f64> {
    check_len(x, pf.dim())?;
    let ell = pf.ell_at(x);
    let den = 1.0 + eps * eps * pf.discriminant() * ell * ell;
    Ok(pf.form(x, x) / nonzero("F", den)?)
}

fn planar_fhat(pf: &PlanarFamilyParams, x: &[f64], xt: &[f64], eps: f64) -> Result<f64> {
    let den = 1.0 - eps * eps * pf.discriminant() * pf.ell_at(x) * pf.ell_at(xt);
    Ok(pf.form(x, xt) / nonzero("Fhat", den)?)
}

fn check_len(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        Err(Error::DimensionMismatch {
            expected: n,
            actual: x.len(),
        })
    } else {
        Ok(())
    }
}

/// `F = (a x1^2 + 2b x1 x2 + c x2^2) / (1 + eps^2 (ac - b^2) l(x)^2)` and
/// its polarization `Fhat` evaluated on `(x, x~)`.
pub fn eval_planar_f(params: &PlanarFamilyParams, x: &[f64], eps: f64, variant: PlanarVariant) -> Result<f64> {
    match variant {
        PlanarVariant::F => planar_f(params, x, eps),
        PlanarVariant::Fhat => {
            check_len(x, params.dim())?;
            let xt = params.field()?.kahan_step(x, eps)?.next;
            planar_fhat(params, x, &xt, eps)
        }
    }
}

// ---------------------------------------------------------------------------
// Dispatch

/// The quadratic-fractional integral of the map.
pub fn eval_i0(desc: &SystemDescriptor, x: &[f64], eps: f64) -> Result<f64> {
    check_len(x, desc.dim())?;
    match &desc.model {
        Model::FirstClebsch(fc) => first_i0(fc.omega, x, eps),
        Model::Clebsch(c) => clebsch_i0(c, x, eps),
        Model::Kirchhoff(k) => {
            let [c1, c3] = kirchhoff_small(k, x, eps);
            Ok(c3 / nonzero("c1", c1)?)
        }
        Model::Lagrange(l) => {
            let [r, s] = lagrange_small(l, x, eps)?;
            Ok(r / nonzero("s", s)?)
        }
        Model::Planar(_) => Err(unsupported(desc, "I0 (use F)")),
    }
}

/// The bilinear-fractional integral, evaluated on `(x, x~)`.
pub fn eval_j0(desc: &SystemDescriptor, x: &[f64], eps: f64) -> Result<f64> {
    check_len(x, desc.dim())?;
    if matches!(desc.model, Model::Planar(_)) {
        return Err(unsupported(desc, "J0 (use Fhat)"));
    }
    let xt = forward(desc, x, eps)?;
    j0_on_pair(desc, x, &xt, eps)
}

fn j0_on_pair(desc: &SystemDescriptor, x: &[f64], xt: &[f64], eps: f64) -> Result<f64> {
    match &desc.model {
        Model::FirstClebsch(fc) => first_j0(fc.omega, x, xt, eps),
        Model::Clebsch(c) => clebsch_j0(c, x, xt, eps),
        Model::Kirchhoff(k) => {
            let [big1, big3] = kirchhoff_big(k, x, xt, eps);
            Ok(big3 / nonzero("C1", big1)?)
        }
        Model::Lagrange(l) => {
            let [big_r, big_s] = lagrange_big(l, x, xt, eps)?;
            Ok(big_r / nonzero("S", big_s)?)
        }
        Model::Planar(pf) => planar_fhat(pf, x, xt, eps),
    }
}

/// Coefficient vector of the HK-basis null space, exactly as printed:
/// Clebsch systems `(c1, c2, c3, c0)`, Kirchhoff `(c1, c3)`, Lagrange
/// `(r, s)`, and the capitalized bilinear versions for `BigC`.
pub fn eval_coeffs(desc: &SystemDescriptor, x: &[f64], eps: f64, kind: CoeffKind) -> Result<Vec<f64>> {
    check_len(x, desc.dim())?;
    let xt = match kind {
        CoeffKind::SmallC => None,
        CoeffKind::BigC => Some(forward(desc, x, eps)?),
    };
    coeffs_on_pair(desc, x, xt.as_deref(), eps)
}

fn coeffs_on_pair(desc: &SystemDescriptor, x: &[f64], xt: Option<&[f64]>, eps: f64) -> Result<Vec<f64>> {
    Ok(match (&desc.model, xt) {
        (Model::FirstClebsch(fc), None) => first_small(fc.omega, x, eps).to_vec(),
        (Model::FirstClebsch(fc), Some(xt)) => first_big(fc.omega, x, xt, eps).to_vec(),
        (Model::Clebsch(c), None) => clebsch_coeffs(c, clebsch_g(c, x, x)?, eps, 1.0).to_vec(),
        (Model::Clebsch(c), Some(xt)) => clebsch_coeffs(c, clebsch_g(c, x, xt)?, eps, -1.0).to_vec(),
        (Model::Kirchhoff(k), None) => kirchhoff_small(k, x, eps).to_vec(),
        (Model::Kirchhoff(k), Some(xt)) => kirchhoff_big(k, x, xt, eps).to_vec(),
        (Model::Lagrange(l), None) => lagrange_small(l, x, eps)?.to_vec(),
        (Model::Lagrange(l), Some(xt)) => lagrange_big(l, x, xt, eps)?.to_vec(),
        (Model::Planar(_), _) => return Err(unsupported(desc, "HK coefficients")),
    })
}

/// Null-space direction of the Wronskian basis `(W_1, W_2, W_3)` predicted
/// by the closed forms: `[c1 : c2 : c3]` for Clebsch systems and
/// `[c1 : c1 : c3]` for the Kirchhoff and Lagrange cases (or the `BigC`
/// versions).
pub fn wronskian_null_direction(desc: &SystemDescriptor, x: &[f64], eps: f64, kind: CoeffKind) -> Result<[f64; 3]> {
    let c = eval_coeffs(desc, x, eps, kind)?;
    Ok(match desc.model {
        Model::FirstClebsch(_) | Model::Clebsch(_) => [c[0], c[1], c[2]],
        Model::Kirchhoff(_) => [c[0], c[0], c[1]],
        // [1 : 1 : r/s]
        Model::Lagrange(_) => [c[1], c[1], c[0]],
        Model::Planar(_) => unreachable!(),
    })
}

/// Numerator of an invariant density: a bilinear coefficient function
/// multiplied by its common denominator `Delta(x; eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityValue {
    pub value: f64,
}

/// `phi(x; eps)` for one of the descriptor's declared densities.
pub fn eval_density(desc: &SystemDescriptor, x: &[f64], eps: f64, which: &str) -> Result<DensityValue> {
    check_len(x, desc.dim())?;
    let step = desc.field.kahan_step(x, eps)?;
    let coefficient = bilinear_coefficient(desc, x, &step.next, eps, which)?;
    Ok(DensityValue {
        value: coefficient * step.delta,
    })
}

fn bilinear_coefficient(desc: &SystemDescriptor, x: &[f64], xt: &[f64], eps: f64, which: &str) -> Result<f64> {
    if !desc.density_names().contains(&which) {
        return Err(Error::UnknownName(format!("density `{which}` for {}", desc.kind)));
    }
    match (&desc.model, which) {
        (Model::FirstClebsch(fc), "J0den") => Ok(first_j0_den(fc.omega, x, xt, eps)),
        (Model::Clebsch(c), "J0den") => clebsch_j0_den(c, x, xt, eps),
        _ => {
            let big = coeffs_on_pair(desc, x, Some(xt), eps)?;
            let names = big_names(desc);
            let idx = names.iter().position(|n| *n == which).unwrap();
            Ok(big[idx])
        }
    }
}

fn small_names(desc: &SystemDescriptor) -> &'static [&'static str] {
    match desc.model {
        Model::FirstClebsch(_) | Model::Clebsch(_) => &["c1", "c2", "c3", "c0"],
        Model::Kirchhoff(_) => &["c1", "c3"],
        Model::Lagrange(_) => &["r", "s"],
        Model::Planar(_) => &[],
    }
}

fn big_names(desc: &SystemDescriptor) -> &'static [&'static str] {
    match desc.model {
        Model::FirstClebsch(_) | Model::Clebsch(_) => &["C1", "C2", "C3", "C0"],
        Model::Kirchhoff(_) => &["C1", "C3"],
        Model::Lagrange(_) => &["R", "S"],
        Model::Planar(_) => &[],
    }
}

/// Evaluates any named quantity attached to the system: integrals (`I0`,
/// `J0`, `K`, `F`, `Fhat`, `m3`), coefficient functions (`c1`, `C0`, `r`,
/// ...), ratios such as `c1/c0`, and `density_<name>`.
pub fn eval_named(desc: &SystemDescriptor, name: &str, x: &[f64], eps: f64) -> Result<f64> {
    check_len(x, desc.dim())?;
    let xt = forward(desc, x, eps)?;
    named_on_pair(desc, name, x, &xt, eps)
}

/// Like [`eval_named`] with the forward iterate `xt` supplied by the caller.
pub fn named_on_pair(desc: &SystemDescriptor, name: &str, x: &[f64], xt: &[f64], eps: f64) -> Result<f64> {
    if let Some((num, den)) = name.split_once('/') {
        let n = named_on_pair(desc, num, x, xt, eps)?;
        let d = named_on_pair(desc, den, x, xt, eps)?;
        return Ok(n / nonzero("ratio", d)?);
    }
    if let Some(density) = name.strip_prefix("density_") {
        let coefficient = bilinear_coefficient(desc, x, xt, eps, density)?;
        return Ok(coefficient * desc.field.delta(x, eps)?);
    }
    match (&desc.model, name) {
        (Model::Planar(pf), "F") => planar_f(pf, x, eps),
        (Model::Planar(pf), "Fhat") => planar_fhat(pf, x, xt, eps),
        (Model::Planar(_), _) => Err(Error::UnknownName(format!("{name} for {}", desc.kind))),
        (_, "I0") => eval_i0(desc, x, eps),
        (_, "J0") => j0_on_pair(desc, x, xt, eps),
        (Model::FirstClebsch(fc), "K") => first_k(fc.omega, x, xt, eps),
        (Model::Kirchhoff(_) | Model::Lagrange(_), "m3") => Ok(x[2]),
        _ => {
            if let Some(i) = small_names(desc).iter().position(|n| *n == name) {
                Ok(coeffs_on_pair(desc, x, None, eps)?[i])
            } else if let Some(i) = big_names(desc).iter().position(|n| *n == name) {
                Ok(coeffs_on_pair(desc, x, Some(xt), eps)?[i])
            } else {
                Err(Error::UnknownName(format!("{name} for {}", desc.kind)))
            }
        }
    }
}

/// Every denominator the system's closed forms divide by at `x`, including
/// those of the coefficient ratios.
pub fn denominators(desc: &SystemDescriptor, x: &[f64], eps: f64) -> Result<Vec<(&'static str, f64)>> {
    check_len(x, desc.dim())?;
    let xt = forward(desc, x, eps)?;
    let e2 = eps * eps;
    Ok(match &desc.model {
        Model::FirstClebsch(fc) => {
            let den = 1.0 - e2 * (0..3).map(|i| fc.omega[i] * x[p(i)] * x[p(i)]).sum::<f64>();
            vec![
                ("I0", den),
                ("J0", first_j0_den(fc.omega, x, &xt, eps)),
                ("c0", first_small(fc.omega, x, eps)[3]),
                ("C0", first_big(fc.omega, x, &xt, eps)[3]),
            ]
        }
        Model::Clebsch(c) => {
            let g = clebsch_g(c, x, x)?;
            let big_g = clebsch_g(c, x, &xt)?;
            vec![
                ("I0", 1.0 + e2 * clebsch_lambda(c)? * g.iter().sum::<f64>()),
                ("J0", clebsch_j0_den(c, x, &xt, eps)?),
                ("c0", clebsch_coeffs(c, g, eps, 1.0)[3]),
                ("C0", clebsch_coeffs(c, big_g, eps, -1.0)[3]),
            ]
        }
        Model::Kirchhoff(k) => vec![
            ("c1", kirchhoff_small(k, x, eps)[0]),
            ("C1", kirchhoff_big(k, x, &xt, eps)[0]),
        ],
        Model::Lagrange(l) => {
            if x[2].abs() < DENOMINATOR_TOL {
                vec![("m3", x[2])]
            } else {
                vec![
                    ("m3", x[2]),
                    ("s", lagrange_small(l, x, eps)?[1]),
                    ("S", lagrange_big(l, x, &xt, eps)?[1]),
                ]
            }
        }
        Model::Planar(pf) => {
            let d = pf.discriminant();
            vec![
                ("F", 1.0 + e2 * d * pf.ell_at(x) * pf.ell_at(x)),
                ("Fhat", 1.0 - e2 * d * pf.ell_at(x) * pf.ell_at(&xt)),
            ]
        }
    })
}

/// Named values of every column attached to a system at one point; entries
/// are `None` where a denominator vanishes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralSuiteResult {
    pub values: Vec<(String, Option<f64>)>,
}

impl IntegralSuiteResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).and_then(|(_, v)| *v)
    }
}

pub fn integral_suite(desc: &SystemDescriptor, x: &[f64], eps: f64) -> Result<IntegralSuiteResult> {
    check_len(x, desc.dim())?;
    let xt = forward(desc, x, eps)?;
    let mut values = Vec::new();
    for name in desc.column_names() {
        values.push((name.to_string(), named_on_pair(desc, name, x, &xt, eps).ok()));
    }
    if let Model::Clebsch(c) = &desc.model {
        let g = clebsch_g(c, x, x)?;
        let big_g = clebsch_g(c, x, &xt)?;
        for (i, v) in g.iter().enumerate() {
            values.push((format!("g{}", i + 1), Some(*v)));
        }
        for (i, v) in big_g.iter().enumerate() {
            values.push((format!("G{}", i + 1), Some(*v)));
        }
    }
    Ok(IntegralSuiteResult { values })
}

// ---------------------------------------------------------------------------
// Polarization of quadratic polynomials

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monomial {
    Constant,
    Linear(usize),
    Quadratic(usize, usize),
}

/// `coeff[0] + coeff[1] eps^2 + coeff[2] eps^4 + ...` times a monomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub monomial: Monomial,
    pub coeff: Vec<f64>,
}

/// Polynomial of degree at most two in `x` with coefficients polynomial in
/// `eps^2`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadraticPolynomial {
    pub dim: usize,
    pub terms: Vec<PolyTerm>,
}

fn poly_in(coeff: &[f64], t: f64) -> f64 {
    coeff.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

impl QuadraticPolynomial {
    pub fn new(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn with(mut self, monomial: Monomial, coeff: &[f64]) -> Self {
        self.terms.push(PolyTerm {
            monomial,
            coeff: coeff.to_vec(),
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (t, term) in self.terms.iter().enumerate() {
            if term.coeff.is_empty() {
                return Err(Error::MalformedPolynomial(format!("term {t} has no coefficients")));
            }
            if term.coeff.iter().any(|c| !c.is_finite()) {
                return Err(Error::MalformedPolynomial(format!(
                    "term {t} has a non-finite coefficient"
                )));
            }
            let in_range = match term.monomial {
                Monomial::Constant => true,
                Monomial::Linear(i) => i < self.dim,
                Monomial::Quadratic(i, j) => i < self.dim && j < self.dim,
            };
            if !in_range {
                return Err(Error::MalformedPolynomial(format!(
                    "term {t} indexes outside dimension {}",
                    self.dim
                )));
            }
        }
        Ok(())
    }

    fn evaluate_with(&self, x: &[f64], y: &[f64], e2: f64) -> Result<f64> {
        self.validate()?;
        check_len(x, self.dim)?;
        check_len(y, self.dim)?;
        Ok(self
            .terms
            .iter()
            .map(|term| {
                let mono = match term.monomial {
                    Monomial::Constant => 1.0,
                    Monomial::Linear(i) => 0.5 * (x[i] + y[i]),
                    Monomial::Quadratic(i, j) => 0.5 * (x[i] * y[j] + y[i] * x[j]),
                };
                poly_in(&term.coeff, e2) * mono
            })
            .sum())
    }

    /// `P(x; eps^2)`.
    pub fn eval(&self, x: &[f64], eps: f64) -> Result<f64> {
        self.evaluate_with(x, x, eps * eps)
    }

    /// `P^(x, y; -eps^2)`: every monomial polarized, `eps^2 -> -eps^2`.
    pub fn polarize_eval(&self, x: &[f64], y: &[f64], eps: f64) -> Result<f64> {
        self.evaluate_with(x, y, -eps * eps)
    }
}

/// Polarizes `poly` across `(x, xt)` with `eps^2 -> -eps^2`.
pub fn polarize_integral(poly: &QuadraticPolynomial, x: &[f64], xt: &[f64], eps: f64) -> Result<f64> {
    poly.polarize_eval(x, xt, eps)
}

/// Numerator and denominator of the quadratic-fractional integral as
/// polynomials, where the system admits that form.
pub fn quadratic_fractional_parts(desc: &SystemDescriptor) -> Result<(QuadraticPolynomial, QuadraticPolynomial)> {
    use Monomial::*;
    let n = desc.dim();
    match &desc.model {
        Model::FirstClebsch(fc) => {
            let mut num = QuadraticPolynomial::new(n);
            let mut den = QuadraticPolynomial::new(n).with(Constant, &[1.0]);
            for i in 0..3 {
                num = num.with(Quadratic(p(i), p(i)), &[1.0]);
                den = den.with(Quadratic(p(i), p(i)), &[0.0, -fc.omega[i]]);
            }
            Ok((num, den))
        }
        Model::Clebsch(c) => {
            let beta = clebsch_beta(c)?;
            let lambda = clebsch_lambda(c)?;
            let (a, w) = (c.a, c.wcoef);
            let mut num = QuadraticPolynomial::new(n);
            let mut den = QuadraticPolynomial::new(n).with(Constant, &[1.0]);
            for (i, j, k) in CYCLIC {
                let weight = beta * a[i] / (a[j] * a[k]);
                let scale = w[i] * a[j] * a[k];
                num = num
                    .with(Quadratic(p(i), p(i)), &[scale])
                    .with(Quadratic(m(i), m(i)), &[scale * weight]);
                den = den
                    .with(Quadratic(p(i), p(i)), &[0.0, lambda])
                    .with(Quadratic(m(i), m(i)), &[0.0, lambda * weight]);
            }
            Ok((num, den))
        }
        Model::Kirchhoff(k) => {
            let KirchhoffParams { a1, a3, b1, b3 } = *k;
            let c3 = QuadraticPolynomial::new(n)
                .with(Constant, &[2.0 * a3 / a1 - 1.0])
                .with(Quadratic(0, 0), &[0.0, a1 * (a3 - a1)])
                .with(Quadratic(1, 1), &[0.0, a1 * (a3 - a1)])
                .with(Quadratic(3, 3), &[0.0, a3 * (b3 - b1)])
                .with(Quadratic(4, 4), &[0.0, a3 * (b3 - b1)]);
            let c1 = QuadraticPolynomial::new(n)
                .with(Constant, &[1.0])
                .with(Quadratic(2, 2), &[0.0, a3 * (a1 - a3)])
                .with(Quadratic(5, 5), &[0.0, a1 * (b1 - b3)]);
            Ok((c3, c1))
        }
        Model::Planar(pf) => {
            let num = QuadraticPolynomial::new(n)
                .with(Quadratic(0, 0), &[pf.a])
                .with(Quadratic(0, 1), &[2.0 * pf.b])
                .with(Quadratic(1, 1), &[pf.c]);
            let d = pf.discriminant();
            let mut den = QuadraticPolynomial::new(n).with(Constant, &[1.0, d * pf.ell0 * pf.ell0]);
            for (j, wj) in pf.ell.iter().enumerate() {
                den = den.with(Linear(j), &[0.0, 2.0 * d * pf.ell0 * wj]);
                for (k, wk) in pf.ell.iter().enumerate() {
                    den = den.with(Quadratic(j, k), &[0.0, d * wj * wk]);
                }
            }
            Ok((num, den))
        }
        Model::Lagrange(_) => Err(unsupported(desc, "polynomial form of I0 (r carries 1/m3)")),
    }
}

/// Outcome of checking the hypotheses of the invariant-measure construction
/// for a bilinear expression `P^` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BilinearHypothesisReport {
    /// `|P^(x, y) - P^(y, x)|` relative to `1 + |P^(x, y)| + |P^(y, x)|`.
    pub symmetry_violation: f64,
    /// Relative difference of `P^(x, Phi(x, e)) Delta(x; e)` at `e = +eps` and `e = -eps`.
    pub evenness_violation: f64,
    pub symmetric: bool,
    pub even: bool,
}

pub const HYPOTHESIS_TOL: f64 = 1e-11;

/// `phat(x, y; eps)`, a candidate bilinear integral.
pub type BilinearFn<'a> = dyn Fn(&[f64], &[f64], f64) -> f64 + 'a;

/// Checks that `phat` is symmetric (probed at `y`) and that
/// `phat(x, x~; eps) * Delta(x; eps)` depends on `eps` only through `eps^2`.
pub fn bilinear_hypothesis_check(
    desc: &SystemDescriptor,
    phat: &BilinearFn,
    x: &[f64],
    y: &[f64],
    eps: f64,
) -> Result<BilinearHypothesisReport> {
    check_len(x, desc.dim())?;
    check_len(y, desc.dim())?;
    let xy = phat(x, y, eps);
    let yx = phat(y, x, eps);
    let symmetry_violation = (xy - yx).abs() / (1.0 + xy.abs() + yx.abs());

    let plus = desc.field.kahan_step(x, eps)?;
    let minus = desc.field.kahan_step(x, -eps)?;
    let up = phat(x, &plus.next, eps) * plus.delta;
    let down = phat(x, &minus.next, eps) * minus.delta;
    let evenness_violation = (up - down).abs() / (1.0 + up.abs() + down.abs());
    Ok(BilinearHypothesisReport {
        symmetry_violation,
        evenness_violation,
        symmetric: symmetry_violation <= HYPOTHESIS_TOL,
        even: evenness_violation <= HYPOTHESIS_TOL,
    })
}
