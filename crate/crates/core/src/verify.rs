//! Seeded property checks over random phase-space points.
//!
//! Trial `t` of a check draws from `ChaCha8Rng::seed_from_u64(seed)` on
//! stream `t`, so results do not depend on scheduling. Trials run on the
//! rayon pool and are reduced in index order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hkbasis::{
    default_window, eval_integral, functional_rank, hk_nullspace, iterate_orbit, wronskian_observables,
    HKNullSpaceReport, Integral, Observable,
};
use crate::integrals::{
    bilinear_hypothesis_check, denominators, eval_coeffs, eval_density, first_clebsch_closed_form, named_on_pair,
    quadratic_fractional_parts, wronskian_null_direction, CoeffKind,
};
use crate::quadfield::{max_norm, QuadraticVectorField, StateVector};
use crate::systems::{
    build_system, continuous_invariants, continuous_wronskian_residual, m, p, poisson_bracket_e3, Model,
    PlanarFamilyParams, SystemConfig, SystemDescriptor,
};

/// Points whose needed denominators fall below this are redrawn.
pub const REGULARITY_FLOOR: f64 = 1e-6;

/// Redraws allowed before a trial counts as skipped.
const MAX_DRAWS: usize = 200;

pub const TOL_STEP_RESIDUAL: f64 = 1e-12;
pub const TOL_REVERSIBILITY: f64 = 1e-10;
pub const TOL_JACOBIAN_IDENTITY: f64 = 1e-11;
pub const TOL_CONSERVATION: f64 = 1e-8;
pub const TOL_EXACT_M3: f64 = 1e-14;
pub const TOL_MEASURE: f64 = 1e-10;
pub const TOL_IDENTITIES: f64 = 1e-12;
pub const TOL_CLOSED_FORMS: f64 = 1e-11;
pub const TOL_HK_GAP: f64 = 1e-6;
pub const TOL_HK_COEFFS: f64 = 1e-8;
pub const TOL_CONTINUOUS_WRONSKIAN: f64 = 1e-13;
pub const TOL_BRACKETS: f64 = 1e-6;
pub const TOL_PLANAR: f64 = 1e-12;
pub const TOL_POLARIZATION: f64 = 1e-12;
pub const TOL_HYPOTHESES: f64 = 1e-11;

/// Step size at which functional independence is tested. The discrete
/// integrals separate from functions of one another only at order
/// `eps^2`, so small steps push the fourth singular value into
/// finite-difference noise.
pub const RANK_EPS: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub name: String,
    pub trials: usize,
    pub skipped: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub worst_case_input: StateVector,
    pub eps: f64,
    pub seed: u64,
}

/// Uniform draw from the unit ball in `R^n`.
pub fn sample_ball(rng: &mut ChaCha8Rng, n: usize) -> StateVector {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
            return v;
        }
    }
}

/// True when the step at `+-eps` is regular and every closed-form
/// denominator is at least [`REGULARITY_FLOOR`] in magnitude.
pub fn is_regular(desc: &SystemDescriptor, x: &[f64], eps: f64) -> bool {
    let steps_ok = [eps, -eps].iter().all(|&e| {
        desc.field
            .kahan_step(x, e)
            .is_ok_and(|s| s.delta.abs() >= REGULARITY_FLOOR)
    });
    steps_ok
        && denominators(desc, x, eps).is_ok_and(|d| d.iter().all(|(_, v)| v.abs() >= REGULARITY_FLOOR && v.is_finite()))
}

/// A regular unit-ball point, or `None` after [`MAX_DRAWS`] rejections.
pub fn sample_regular(rng: &mut ChaCha8Rng, desc: &SystemDescriptor, eps: f64) -> Option<StateVector> {
    (0..MAX_DRAWS)
        .map(|_| sample_ball(rng, desc.dim()))
        .find(|x| is_regular(desc, x, eps))
}

/// Outcome of one trial: `None` when skipped, else the violation and the
/// input that produced it.
pub type TrialOutcome = Option<(f64, StateVector)>;

/// Runs `trials` independent trials and folds them into a report.
pub fn run_trials<F>(
    name: impl Into<String>,
    trials: usize,
    tolerance: f64,
    eps: f64,
    seed: u64,
    trial: F,
) -> PropertyReport
where
    F: Fn(&mut ChaCha8Rng) -> TrialOutcome + Sync,
{
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            trial(&mut rng)
        })
        .collect();
    let mut skipped = 0;
    let mut worst: Option<(f64, StateVector)> = None;
    for outcome in outcomes {
        match outcome {
            None => skipped += 1,
            Some((v, x)) => {
                // NaN is treated as the largest possible violation.
                let v = if v.is_nan() { f64::MAX } else { v.min(f64::MAX) };
                if worst.as_ref().is_none_or(|(w, _)| v > *w) {
                    worst = Some((v, x));
                }
            }
        }
    }
    let (max_violation, worst_case_input) = worst.unwrap_or((0.0, Vec::new()));
    PropertyReport {
        name: name.into(),
        trials,
        skipped,
        max_violation,
        tolerance,
        // A check with no completed trial has shown nothing.
        passed: max_violation <= tolerance && skipped < trials,
        worst_case_input,
        eps,
        seed,
    }
}

fn trial<T>(x: StateVector, body: impl FnOnce(&[f64]) -> Result<T>) -> Option<(T, StateVector)> {
    body(&x).ok().map(|v| (v, x))
}

/// Residual of the defining relation at the computed step.
pub fn check_step_residual(desc: &SystemDescriptor, trials: usize, eps: f64, seed: u64) -> PropertyReport {
    run_trials("kahan_residual", trials, TOL_STEP_RESIDUAL, eps, seed, |rng| {
        let x = sample_regular(rng, desc, eps)?;
        trial(x, |x| Ok(desc.field.kahan_step(x, eps)?.residual))
    })
}

/// `|Phi(Phi(x, eps), -eps) - x| / (1 + |x|)`.
pub fn check_reversibility(desc: &SystemDescriptor, trials: usize, eps: f64, seed: u64) -> PropertyReport {
    check_reversibility_of(&desc.field, "reversibility", trials, eps, seed)
}

/// Reversibility for a bare field, sampling the unit ball.
pub fn check_reversibility_of(
    field: &QuadraticVectorField,
    name: &str,
    trials: usize,
    eps: f64,
    seed: u64,
) -> PropertyReport {
    run_trials(name, trials, TOL_REVERSIBILITY, eps, seed, |rng| {
        let x = sample_ball(rng, field.dim());
        trial(x, |x| {
            let there = field.kahan_step(x, eps)?.next;
            let back = field.kahan_step(&there, -eps)?.next;
            let err = back.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            Ok(err / (1.0 + max_norm(x)))
        })
    })
}

/// `|det(dPhi) Delta(x; eps) - Delta(x~; -eps)|` relative to the operands.
pub fn check_jacobian_identity(desc: &SystemDescriptor, trials: usize, eps: f64, seed: u64) -> PropertyReport {
    run_trials("jacobian_identity", trials, TOL_JACOBIAN_IDENTITY, eps, seed, |rng| {
        let x = sample_regular(rng, desc, eps)?;
        trial(x, |x| {
            let step = desc.field.kahan_step(x, eps)?;
            let det = desc.field.map_jacobian(x, eps)?.determinant();
            let lhs = det * step.delta;
            let rhs = desc.field.delta(&step.next, -eps)?;
            Ok((lhs - rhs).abs() / (1.0 + lhs.abs() + rhs.abs()))
        })
    })
}

/// Largest relative drift `|X(x_k) - X(x_0)| / (1 + |X(x_0)|)` of a named
/// quantity over `steps` steps.
pub fn check_conservation(
    desc: &SystemDescriptor,
    name: &str,
    trials: usize,
    steps: usize,
    eps: f64,
    seed: u64,
) -> PropertyReport {
    let label = format!("conservation[{name}]");
    run_trials(label, trials, TOL_CONSERVATION, eps, seed, |rng| {
        let x = sample_regular(rng, desc, eps)?;
        trial(x, |x| {
            // One extra state so bilinear quantities can use x_{k+1}.
            let orbit = iterate_orbit(&desc.field, x, eps, steps + 1)?;
            if orbit.pole_at().is_some() {
                return Err(crate::Error::PoleInWindow(orbit.len() - 1));
            }
            let s = &orbit.states;
            let v0 = named_on_pair(desc, name, &s[0], &s[1], eps)?;
            let mut worst: f64 = 0.0;
            for k in 1..=steps {
                let v = named_on_pair(desc, name, &s[k], &s[k + 1], eps)?;
                worst = worst.max((v - v0).abs() / (1.0 + v0.abs()));
            }
            Ok(worst)
        })
    })
}

/// Conservation of an arbitrary function of the state.
pub fn check_conservation_with(
    desc: &SystemDescriptor,
    label: &str,
    f: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    trials: usize,
    steps: usize,
    eps: f64,
    seed: u64,
) -> PropertyReport {
    run_trials(
        format!("conservation[{label}]"),
        trials,
        TOL_CONSERVATION,
        eps,
        seed,
        |rng| {
            let x = sample_regular(rng, desc, eps)?;
            trial(x, |x| {
                let orbit = iterate_orbit(&desc.field, x, eps, steps)?;
                let v0 = f(&orbit.states[0])?;
                let mut worst: f64 = 0.0;
                for s in &orbit.states[1..] {
                    worst = worst.max((f(s)? - v0).abs() / (1.0 + v0.abs()));
                }
                Ok(worst)
            })
        },
    )
}

/// Largest per-step `|m3~ - m3|` (Kirchhoff and Lagrange).
pub fn check_exact_m3(desc: &SystemDescriptor, trials: usize, steps: usize, eps: f64, seed: u64) -> PropertyReport {
    run_trials("exact_m3", trials, TOL_EXACT_M3, eps, seed, |rng| {
        let x = sample_regular(rng, desc, eps)?;
        trial(x, |x| {
            let orbit = iterate_orbit(&desc.field, x, eps, steps)?;
            Ok(orbit
                .states
                .windows(2)
                .map(|w| (w[1][2] - w[0][2]).abs())
                .fold(0.0, f64::max))
        })
    })
}

/// `|phi(x~)/phi(x) - det dPhi(x)| / |det dPhi(x)|` for a declared density.
pub fn check_measure(desc: &SystemDescriptor, density: &str, trials: usize, eps: f64, seed: u64) -> PropertyReport {
    let phi = |x: &[f64]| Ok(eval_density(desc, x, eps, density)?.value);
    check_measure_with(desc, &format!("measure[{density}]"), &phi, trials, eps, seed)
}

/// Transformation law for an arbitrary candidate density.
pub fn check_measure_with(
    desc: &SystemDescriptor,
    label: &str,
    phi: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    trials: usize,
    eps: f64,
    seed: u64,
) -> PropertyReport {
    run_trials(label, trials, TOL_MEASURE, eps, seed, |rng| {
        let x = (0..MAX_DRAWS).find_map(|_| {
            let x = sample_regular(rng, desc, eps)?;
            phi(&x).is_ok_and(|v| v.abs() >= REGULARITY_FLOOR).then_some(x)
        })?;
        trial(x, |x| {
            let next = desc.field.kahan_step(x, eps)?.next;
            let det = desc.field.map_jacobian(x, eps)?.determinant();
            let ratio = phi(&next)? / phi(x)?;
            Ok((ratio - det).abs() / det.abs())
        })
    })
}

fn first_clebsch(omega: [f64; 3]) -> Result<SystemDescriptor> {
    build_system(&SystemConfig::FirstClebsch { omega })
}

/// The four one-step identities between `c_i`, `C_i` and the products
/// `m_i p_i` of the first Clebsch flow; `perturb` is added to `c_1`.
pub fn check_identities_clebsch1_perturbed(
    omega: [f64; 3],
    trials: usize,
    eps: f64,
    seed: u64,
    perturb: f64,
) -> Result<PropertyReport> {
    let desc = first_clebsch(omega)?;
    let desc = &desc;
    let name = if perturb == 0.0 {
        "identities".to_string()
    } else {
        format!("identities[c1+{perturb:e}]")
    };
    Ok(run_trials(name, trials, TOL_IDENTITIES, eps, seed, |rng| {
        let x = sample_regular(rng, desc, eps)?;
        trial(x, |x| {
            let xt = desc.field.kahan_step(x, eps)?.next;
            let mut c = eval_coeffs(desc, x, eps, CoeffKind::SmallC)?;
            let mut ct = eval_coeffs(desc, &xt, eps, CoeffKind::SmallC)?;
            let big = eval_coeffs(desc, x, eps, CoeffKind::BigC)?;
            c[0] += perturb;
            ct[0] += perturb;
            // (coefficients, left m, left p, right m, right p)
            let sides: [[&[f64]; 5]; 4] = [
                [&c, &xt, x, x, x],
                [&c, x, &xt, x, x],
                [&ct, x, &xt, &xt, &xt],
                [&ct, &xt, x, &xt, &xt],
            ];
            let mut worst: f64 = 0.0;
            for [coef, lm, lp, rm, rp] in sides {
                let terms_l = (0..3).map(|i| coef[i] * lm[m(i)] * lp[p(i)]);
                let terms_r = (0..3).map(|i| big[i] * rm[m(i)] * rp[p(i)]);
                let scale =
                    1.0 + terms_l.clone().map(f64::abs).sum::<f64>() + terms_r.clone().map(f64::abs).sum::<f64>();
                let diff = terms_l.sum::<f64>() - terms_r.sum::<f64>();
                worst = worst.max(diff.abs() / scale);
            }
            Ok(worst)
        })
    }))
}

pub fn check_identities_clebsch1(omega: [f64; 3], trials: usize, eps: f64, seed: u64) -> Result<PropertyReport> {
    check_identities_clebsch1_perturbed(omega, trials, eps, seed, 0.0)
}

fn projective_distance(a: &[f64], b: &[f64]) -> f64 {
    let k = (0..a.len()).fold(0, |best, i| if a[i].abs() > a[best].abs() { i } else { best });
    if b[k] == 0.0 || a[k] == 0.0 {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x / a[k] - y / b[k]).abs())
        .fold(0.0, f64::max)
}

/// The null vectors `[1 + eps^2 w_i I0 : -I0]` and `[1 - eps^2 w_i J0 : -J0]`
/// against `(c_1, c_2, c_3, -c_0)` and `(C_1, C_2, C_3, -C_0)`.
pub fn check_closed_forms_clebsch1(omega: [f64; 3], trials: usize, eps: f64, seed: u64) -> Result<PropertyReport> {
    let desc = first_clebsch(omega)?;
    let desc = &desc;
    Ok(run_trials(
        "closed_form_null_vectors",
        trials,
        TOL_CLOSED_FORMS,
        eps,
        seed,
        |rng| {
            let x = sample_regular(rng, desc, eps)?;
            trial(x, |x| {
                let mut worst: f64 = 0.0;
                for kind in [CoeffKind::SmallC, CoeffKind::BigC] {
                    let closed = first_clebsch_closed_form(omega, x, eps, kind)?;
                    let mut c = eval_coeffs(desc, x, eps, kind)?;
                    c[3] = -c[3];
                    worst = worst.max(projective_distance(&closed, &c));
                }
                Ok(worst)
            })
        },
    ))
}

fn hk_report_on(desc: &SystemDescriptor, observables: &[Observable], x: &[f64], eps: f64) -> Result<HKNullSpaceReport> {
    let window = default_window(observables.len());
    let lookahead = observables.iter().map(|o| o.lookahead).max().unwrap_or(0);
    let orbit = iterate_orbit(&desc.field, x, eps, window + lookahead)?;
    hk_nullspace(&orbit, observables, window)
}

/// HK-basis quality: `1/gap` when the null space is one-dimensional, else
/// `1 + |d - 1|`.
fn basis_violation(report: &HKNullSpaceReport) -> f64 {
    match (report.null_dim, report.gap_ratio) {
        (1, Some(gap)) => 1.0 / gap,
        (d, _) => 1.0 + (d as f64 - 1.0).abs(),
    }
}

/// Order-`ell` Wronskians form an HK basis with a one-dimensional null
/// space and a singular-value gap of at least `1/TOL_HK_GAP`.
pub fn check_hk_basis(
    desc: &SystemDescriptor,
    ell: usize,
    trials: usize,
    eps: f64,
    seed: u64,
) -> Result<PropertyReport> {
    let observables = wronskian_observables(desc, ell)?;
    let observables = &observables;
    Ok(run_trials(
        format!("hk_basis[W{ell}]"),
        trials,
        TOL_HK_GAP,
        eps,
        seed,
        |rng| {
            let x = sample_regular(rng, desc, eps)?;
            trial(x, |x| Ok(basis_violation(&hk_report_on(desc, observables, x, eps)?)))
        },
    ))
}

/// The quadratic basis `(p1^2, p2^2, p3^2, 1)` of the first Clebsch flow,
/// whose null vector is `(c1, c2, c3, -c0)`.
pub fn check_quadratic_basis_clebsch1(omega: [f64; 3], trials: usize, eps: f64, seed: u64) -> Result<PropertyReport> {
    let desc = first_clebsch(omega)?;
    let desc = &desc;
    let mut observables: Vec<Observable> = (0..3)
        .map(|i| Observable::point(format!("p{}^2", i + 1), move |x| x[p(i)] * x[p(i)]))
        .collect();
    observables.push(Observable::constant("1", 1.0));
    let observables = &observables;
    Ok(run_trials("hk_basis[p^2,1]", trials, TOL_HK_COEFFS, eps, seed, |rng| {
        let x = sample_regular(rng, desc, eps)?;
        trial(x, |x| {
            let report = hk_report_on(desc, observables, x, eps)?;
            if report.null_dim != 1 {
                return Ok(basis_violation(&report));
            }
            let mut c = eval_coeffs(desc, x, eps, CoeffKind::SmallC)?;
            c[3] = -c[3];
            Ok(projective_distance(&c, &report.coeff_vectors[0]))
        })
    }))
}

/// Order-1 (or order-2) Wronskian null vectors against the closed-form
/// coefficients at the window's base point.
pub fn check_hk_coefficients(
    desc: &SystemDescriptor,
    ell: usize,
    trials: usize,
    eps: f64,
    seed: u64,
) -> Result<PropertyReport> {
    let kind = match ell {
        1 => CoeffKind::SmallC,
        2 => CoeffKind::BigC,
        _ => {
            return Err(crate::Error::InvalidParams(format!(
                "closed-form coefficients exist for orders 1 and 2, not {ell}"
            )))
        }
    };
    let observables = wronskian_observables(desc, ell)?;
    let observables = &observables;
    Ok(run_trials(
        format!("hk_coefficients[W{ell}]"),
        trials,
        TOL_HK_COEFFS,
        eps,
        seed,
        |rng| {
            let x = sample_regular(rng, desc, eps)?;
            trial(x, |x| {
                let report = hk_report_on(desc, observables, x, eps)?;
                if report.null_dim != 1 {
                    return Ok(basis_violation(&report));
                }
                let predicted = wronskian_null_direction(desc, x, eps, kind)?;
                Ok(projective_distance(&predicted, &report.coeff_vectors[0]))
            })
        },
    ))
}

/// `|rank - expected|` of the gradients of the named integrals.
pub fn check_functional_rank(
    desc: &SystemDescriptor,
    names: &[&str],
    expected: usize,
    trials: usize,
    eps: f64,
    seed: u64,
) -> PropertyReport {
    let label = format!("rank{{{}}}", names.join(","));
    run_trials(label, trials, 0.0, eps, seed, |rng| {
        let x = sample_regular(rng, desc, eps)?;
        let fns: Vec<Box<Integral<'_>>> = names
            .iter()
            .map(|name| {
                Box::new(move |y: &[f64]| eval_integral(desc, name, y, eps)) as Box<dyn Fn(&[f64]) -> Result<f64>>
            })
            .collect();
        let refs: Vec<&Integral<'_>> = fns.iter().map(|f| f.as_ref()).collect();
        trial(x, |x| Ok((functional_rank(&refs, x)? as f64 - expected as f64).abs()))
    })
}

/// The weighted Wronskian combination of the continuous vector field.
pub fn check_continuous_wronskian(desc: &SystemDescriptor, trials: usize, seed: u64) -> PropertyReport {
    run_trials(
        "continuous_wronskian",
        trials,
        TOL_CONTINUOUS_WRONSKIAN,
        0.0,
        seed,
        |rng| {
            let x = sample_ball(rng, desc.dim());
            trial(x, |x| Ok(continuous_wronskian_residual(desc, x)?.abs()))
        },
    )
}

/// Pairwise Lie-Poisson brackets of the continuous integrals and the
/// brackets of the Casimirs with every coordinate.
pub fn check_brackets(desc: &SystemDescriptor, trials: usize, seed: u64) -> PropertyReport {
    let invariants = continuous_invariants(desc);
    let invariants = &invariants;
    run_trials("poisson_brackets", trials, TOL_BRACKETS, 0.0, seed, |rng| {
        let x = sample_ball(rng, desc.dim());
        trial(x, |x| {
            let mut worst: f64 = 0.0;
            for (a, (_, f)) in invariants.iter().enumerate() {
                for (_, g) in &invariants[a + 1..] {
                    worst = worst.max(poisson_bracket_e3(f, g, x)?.abs());
                }
            }
            for casimir in [
                crate::systems::casimir_k1 as fn(&[f64]) -> f64,
                crate::systems::casimir_k2,
            ] {
                for i in 0..6 {
                    worst = worst.max(poisson_bracket_e3(casimir, |y: &[f64]| y[i], x)?.abs());
                }
            }
            Ok(worst)
        })
    })
}

/// Random planar-family parameters; odd trials are forced indefinite.
pub fn sample_planar_params(rng: &mut ChaCha8Rng, indefinite: bool) -> PlanarFamilyParams {
    loop {
        let params = PlanarFamilyParams {
            a: rng.random_range(-1.0..1.0),
            b: rng.random_range(-1.0..1.0),
            c: rng.random_range(-1.0..1.0),
            ell: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            ell0: rng.random_range(-1.0..1.0),
            extra: Vec::new(),
        };
        if (params.discriminant() < 0.0) == indefinite {
            return params;
        }
    }
}

/// Largest `|Fhat - F| / scale` over consecutive pairs of one orbit, where
/// `scale = 1 + sum over both quotients of (|N| + |q| |D|~) / |D|` with `|N|`
/// and `|D|~` the numerator and denominator evaluated on absolute values.
/// Orbits of indefinite forms run far out, where both numerators cancel.
fn planar_orbit_violation(params: &PlanarFamilyParams, orbit: &[StateVector], eps: f64) -> f64 {
    let abs_form = |x: &[f64], y: &[f64]| {
        params.a.abs() * (x[0] * y[0]).abs()
            + params.b.abs() * ((x[0] * y[1]).abs() + (y[0] * x[1]).abs())
            + params.c.abs() * (x[1] * y[1]).abs()
    };
    let abs_ell = |x: &[f64]| params.ell0.abs() + params.ell.iter().zip(x).map(|(w, v)| (w * v).abs()).sum::<f64>();
    let disc = params.discriminant();
    let e2 = eps * eps;
    let mut worst: f64 = 0.0;
    for w in orbit.windows(2) {
        let (x, y) = (&w[0], &w[1]);
        let (lx, ly) = (params.ell_at(x), params.ell_at(y));
        let (den, den_hat) = (1.0 + e2 * disc * lx * lx, 1.0 - e2 * disc * lx * ly);
        let (f, fhat) = (params.form(x, x) / den, params.form(x, y) / den_hat);
        let spread =
            |num: f64, q: f64, ell_prod: f64, d: f64| (num + q.abs() * (1.0 + e2 * disc.abs() * ell_prod)) / d.abs();
        let scale = 1.0
            + spread(abs_form(x, x), f, abs_ell(x) * abs_ell(x), den)
            + spread(abs_form(x, y), fhat, abs_ell(x) * abs_ell(y), den_hat);
        let v = (fhat - f).abs() / scale;
        worst = worst.max(if v.is_nan() { f64::MAX } else { v });
    }
    worst
}

/// `Fhat = F` on consecutive pairs along orbits of one planar system.
pub fn check_planar_identity(
    desc: &SystemDescriptor,
    trials: usize,
    steps: usize,
    eps: f64,
    seed: u64,
) -> PropertyReport {
    run_trials("planar_fhat_equals_f", trials, TOL_PLANAR, eps, seed, |rng| {
        let Model::Planar(params) = &desc.model else {
            return None;
        };
        let x = sample_regular(rng, desc, eps)?;
        trial(x, |x| {
            let orbit = iterate_orbit(&desc.field, x, eps, steps + 1)?;
            Ok(planar_orbit_violation(params, &orbit.states, eps))
        })
    })
}

/// [`check_planar_identity`] over random two-dimensional planar systems,
/// about half of them with indefinite forms.
pub fn check_planar_orbits(draws: usize, steps: usize, eps: f64, seed: u64) -> PropertyReport {
    run_trials("planar_fhat_equals_f[random]", draws, TOL_PLANAR, eps, seed, |rng| {
        let indefinite = rng.random_bool(0.5);
        let params = sample_planar_params(rng, indefinite);
        let desc = build_system(&SystemConfig::PlanarFamily(params.clone())).ok()?;
        let x = sample_regular(rng, &desc, eps)?;
        trial(x, |x| {
            let orbit = iterate_orbit(&desc.field, x, eps, steps + 1)?;
            Ok(planar_orbit_violation(&params, &orbit.states, eps))
        })
    })
}

/// The polarized quadratic-fractional integral against the closed-form
/// bilinear one.
pub fn check_polarization(desc: &SystemDescriptor, trials: usize, eps: f64, seed: u64) -> Result<PropertyReport> {
    let (num, den) = quadratic_fractional_parts(desc)?;
    let target = if matches!(desc.model, Model::Planar(_)) {
        "Fhat"
    } else {
        "J0"
    };
    let (num, den) = (&num, &den);
    Ok(run_trials("polarization", trials, TOL_POLARIZATION, eps, seed, |rng| {
        let x = sample_regular(rng, desc, eps)?;
        trial(x, |x| {
            let xt = desc.field.kahan_step(x, eps)?.next;
            let polarized = num.polarize_eval(x, &xt, eps)? / den.polarize_eval(x, &xt, eps)?;
            let direct = named_on_pair(desc, target, x, &xt, eps)?;
            Ok((polarized - direct).abs() / (1.0 + direct.abs()))
        })
    }))
}

/// Symmetry and `eps`-evenness of the polarized numerator and denominator.
pub fn check_bilinear_hypotheses(
    desc: &SystemDescriptor,
    trials: usize,
    eps: f64,
    seed: u64,
) -> Result<PropertyReport> {
    let (num, den) = quadratic_fractional_parts(desc)?;
    let (num, den) = (&num, &den);
    Ok(run_trials(
        "bilinear_hypotheses",
        trials,
        TOL_HYPOTHESES,
        eps,
        seed,
        |rng| {
            let x = sample_regular(rng, desc, eps)?;
            let y = sample_ball(rng, desc.dim());
            trial(x, |x| {
                let mut worst: f64 = 0.0;
                for poly in [num, den] {
                    let phat = |a: &[f64], b: &[f64], e: f64| poly.polarize_eval(a, b, e).unwrap_or(f64::NAN);
                    let r = bilinear_hypothesis_check(desc, &phat, x, &y, eps)?;
                    worst = worst.max(r.symmetry_violation).max(r.evenness_violation);
                }
                Ok(worst)
            })
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub eps: f64,
    /// Trials for pointwise checks.
    pub trials: usize,
    /// Orbits per conservation check.
    pub orbits: usize,
    /// Steps per conservation orbit.
    pub steps: usize,
    /// Points per functional-rank check.
    pub rank_points: usize,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            eps: 0.05,
            trials: 200,
            orbits: 10,
            steps: 1000,
            rank_points: 20,
            seed: 42,
        }
    }
}

/// Integral sets asserted to be functionally independent, with their rank.
pub fn independence_claims(desc: &SystemDescriptor) -> Vec<(Vec<&'static str>, usize)> {
    match desc.model {
        Model::FirstClebsch(_) | Model::Clebsch(_) => vec![
            (vec!["I0", "J0", "J1", "J2"], 4),
            (vec!["I0", "J0", "J3", "J4"], 4),
            (vec!["J1", "J2", "J3", "J4"], 4),
        ],
        Model::Kirchhoff(_) => vec![(vec!["I0", "J0", "J1", "m3"], 4)],
        Model::Lagrange(_) | Model::Planar(_) => Vec::new(),
    }
}

/// Highest Wronskian order with an asserted HK basis.
pub fn max_wronskian_order(desc: &SystemDescriptor) -> usize {
    match desc.model {
        Model::FirstClebsch(_) | Model::Clebsch(_) => 4,
        Model::Kirchhoff(_) | Model::Lagrange(_) => 3,
        Model::Planar(_) => 0,
    }
}

/// Every check that applies to `desc`, in a fixed order.
pub fn run_suite(desc: &SystemDescriptor, opts: &SuiteOptions) -> Result<Vec<PropertyReport>> {
    let SuiteOptions {
        eps,
        trials,
        orbits,
        steps,
        rank_points,
        seed,
    } = *opts;
    let mut reports = vec![
        check_step_residual(desc, trials, eps, seed),
        check_reversibility(desc, trials, eps, seed),
        check_jacobian_identity(desc, trials, eps, seed),
    ];
    for name in desc.conserved_names() {
        reports.push(check_conservation(desc, name, orbits, steps, eps, seed));
    }
    if matches!(desc.model, Model::Kirchhoff(_) | Model::Lagrange(_)) {
        reports.push(check_exact_m3(desc, orbits, steps, eps, seed));
    }
    for density in desc.density_names() {
        reports.push(check_measure(desc, density, trials, eps, seed));
    }
    if let Model::FirstClebsch(fc) = &desc.model {
        reports.push(check_identities_clebsch1(fc.omega, trials, eps, seed)?);
        reports.push(check_closed_forms_clebsch1(fc.omega, trials, eps, seed)?);
        reports.push(check_quadratic_basis_clebsch1(fc.omega, trials, eps, seed)?);
    }
    if !matches!(desc.model, Model::Lagrange(_)) {
        reports.push(check_polarization(desc, trials, eps, seed)?);
    }
    if !matches!(desc.model, Model::Lagrange(_) | Model::Planar(_)) {
        reports.push(check_bilinear_hypotheses(desc, trials, eps, seed)?);
    }
    if matches!(desc.model, Model::Planar(_)) {
        reports.push(check_planar_identity(desc, orbits, steps, eps, seed));
    }
    for ell in 1..=max_wronskian_order(desc) {
        reports.push(check_hk_basis(desc, ell, trials, eps, seed)?);
    }
    if max_wronskian_order(desc) > 0 {
        reports.push(check_hk_coefficients(desc, 1, trials, eps, seed)?);
        reports.push(check_hk_coefficients(desc, 2, trials, eps, seed)?);
        reports.push(check_continuous_wronskian(desc, trials, seed));
        reports.push(check_brackets(desc, trials, seed));
    }
    for (names, expected) in independence_claims(desc) {
        reports.push(check_functional_rank(
            desc,
            &names,
            expected,
            rank_points,
            RANK_EPS,
            seed,
        ));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::SystemKind;

    fn first() -> SystemDescriptor {
        build_system(&SystemConfig::default_for(SystemKind::FirstClebsch)).unwrap()
    }

    #[test]
    fn zero_step_checks_are_exact() {
        let d = first();
        assert_eq!(check_reversibility(&d, 20, 0.0, 1).max_violation, 0.0);
        let r = check_measure(&d, "C0", 20, 0.0, 1);
        assert_eq!(r.max_violation, 0.0);
    }

    #[test]
    fn linear_field_is_reversible() {
        let mut f = QuadraticVectorField::zeros(3);
        f.add_linear(0, 1, 1.0);
        f.add_linear(1, 0, -2.0);
        f.add_linear(2, 2, 0.5);
        let r = check_reversibility_of(&f, "linear", 100, 0.2, 3);
        assert!(r.passed && r.max_violation < 1e-15, "{r:?}");
    }

    #[test]
    fn reports_are_deterministic() {
        let d = first();
        let a = check_jacobian_identity(&d, 50, 0.1, 9);
        let b = check_jacobian_identity(&d, 50, 0.1, 9);
        assert_eq!(a, b);
        let c = check_jacobian_identity(&d, 50, 0.1, 10);
        assert_ne!(a.worst_case_input, c.worst_case_input);
    }

    #[test]
    fn negative_controls_fail() {
        let d = first();
        let m1 = |x: &[f64]| Ok(x[0]);
        assert!(!check_conservation_with(&d, "m1", &m1, 4, 200, 0.05, 1).passed);
        let poly = |x: &[f64]| Ok(1.0 + x[0] * x[0] + 0.5 * x[4]);
        assert!(!check_measure_with(&d, "poly", &poly, 50, 0.1, 1).passed);
        let r = check_identities_clebsch1_perturbed([1.0, 2.0, 3.0], 50, 0.1, 1, 1e-6).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn identities_vanish_without_momentum() {
        // every term carries a factor p_i
        let d = first();
        let x = [0.3, -0.2, 0.4, 0.0, 0.0, 0.0];
        let xt = d.field.kahan_step(&x, 0.1).unwrap().next;
        assert!(xt[3..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn skipped_trials_do_not_pass() {
        let r = run_trials("nothing", 3, 1.0, 0.1, 0, |_| None);
        assert_eq!(r.skipped, 3);
        assert!(!r.passed);
    }

    #[test]
    fn planar_metric_rejects_non_consecutive_pairs() {
        let d = build_system(&SystemConfig::default_for(crate::systems::SystemKind::PlanarFamily)).unwrap();
        let Model::Planar(params) = &d.model else {
            unreachable!()
        };
        let x = [0.2, -0.3, 0.1];
        let orbit = iterate_orbit(&d.field, &x, 0.1, 6).unwrap();
        assert!(planar_orbit_violation(params, &orbit.states, 0.1) < TOL_PLANAR);
        let skipped: Vec<StateVector> = orbit.states.iter().step_by(2).cloned().collect();
        assert!(planar_orbit_violation(params, &skipped, 0.1) > 1e-6);
    }

    #[test]
    fn planar_params_respect_sign_request() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for indefinite in [true, false, true] {
            let p = sample_planar_params(&mut rng, indefinite);
            assert_eq!(p.discriminant() < 0.0, indefinite);
        }
    }
}
