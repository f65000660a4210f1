//! Orbits, discrete Wronskians and numerical detection of Hirota–Kimura
//! bases.
//!
//! A set of functions `phi_1..phi_m` is an HK basis for the map if some
//! nonzero `c` satisfies `sum_s c_s phi_s(Phi^r x) = 0` for every `r`. On a
//! finite window this is a null vector of the matrix
//! `M[r][s] = phi_s(Phi^r x)`, found here from its singular spectrum.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrals::{eval_i0, named_on_pair};
use crate::numdiff;
use crate::quadfield::{QuadraticVectorField, StateVector};
use crate::systems::{Model, SystemDescriptor};

/// `sigma < NULL_THRESHOLD * sigma_max` counts as zero.
pub const NULL_THRESHOLD: f64 = 1e-9;

/// Gradient singular values above `RANK_THRESHOLD * sigma_max` count.
pub const RANK_THRESHOLD: f64 = 1e-7;

/// Relative tolerance for a ratio sequence to count as constant.
pub const CONSTANCY_TOL: f64 = 1e-9;

/// Normalized pivot coefficients below this are degenerate.
pub const PIVOT_TOL: f64 = 1e-8;

/// Iterates of the Kahan map from `x0`.
///
/// `deltas[k]` and `pole_flags[k]` describe the attempted step out of
/// `states[k]`; if the last flag is set the orbit stopped there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitRecord {
    pub states: Vec<StateVector>,
    pub eps: f64,
    pub deltas: Vec<f64>,
    pub pole_flags: Vec<bool>,
}

impl OrbitRecord {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Index of the state from which the orbit could not continue.
    pub fn pole_at(&self) -> Option<usize> {
        self.pole_flags.iter().position(|&p| p)
    }
}

/// Applies `steps` Kahan steps from `x0`, stopping early at a pole.
pub fn iterate_orbit(f: &QuadraticVectorField, x0: &[f64], eps: f64, steps: usize) -> Result<OrbitRecord> {
    if steps == 0 {
        return Err(Error::InvalidParams("orbit needs at least one step".into()));
    }
    if x0.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            actual: x0.len(),
        });
    }
    let mut orbit = OrbitRecord {
        states: vec![x0.to_vec()],
        eps,
        deltas: Vec::with_capacity(steps),
        pole_flags: Vec::with_capacity(steps),
    };
    for k in 0..steps {
        let current = orbit.states.last().unwrap();
        match f.kahan_step(current, eps) {
            Ok(step) => {
                orbit.deltas.push(step.delta);
                orbit.pole_flags.push(false);
                orbit.states.push(step.next);
            }
            Err(Error::SingularStep { delta, .. }) if k > 0 => {
                orbit.deltas.push(delta);
                orbit.pole_flags.push(true);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(orbit)
}

/// `W^(ell)_ij = x_i^(base+ell) x_j^(base) - x_i^(base) x_j^(base+ell)`.
pub fn discrete_wronskian(orbit: &OrbitRecord, ell: usize, pair: (usize, usize), base: usize) -> Result<f64> {
    let far = base
        .checked_add(ell)
        .filter(|&k| k < orbit.len())
        .ok_or_else(|| Error::IndexOutOfRange(format!("state {base}+{ell} of an orbit with {} states", orbit.len())))?;
    let (x, y) = (&orbit.states[base], &orbit.states[far]);
    let (i, j) = pair;
    if i >= x.len() || j >= x.len() {
        return Err(Error::IndexOutOfRange(format!(
            "pair ({i}, {j}) in dimension {}",
            x.len()
        )));
    }
    Ok(y[i] * x[j] - x[i] * y[j])
}

type ObservableFn = dyn Fn(&[StateVector]) -> f64 + Send + Sync;

/// A scalar function of a base state and its next `lookahead` iterates.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    pub lookahead: usize,
    f: Arc<ObservableFn>,
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("lookahead", &self.lookahead)
            .finish()
    }
}

impl Observable {
    pub fn new(
        name: impl Into<String>,
        lookahead: usize,
        f: impl Fn(&[StateVector]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            lookahead,
            f: Arc::new(f),
        }
    }

    /// A function of the base state only.
    pub fn point(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(name, 0, move |states| f(&states[0]))
    }

    pub fn constant(name: impl Into<String>, value: f64) -> Self {
        Self::point(name, move |_| value)
    }

    /// `W^(ell)_ij` evaluated at the base state.
    pub fn wronskian(ell: usize, i: usize, j: usize) -> Self {
        Self::new(format!("W{ell}_{i}{j}"), ell, move |s| {
            let (x, y) = (&s[0], &s[ell]);
            y[i] * x[j] - x[i] * y[j]
        })
    }

    /// `states` starts at the base state and holds at least `lookahead + 1`
    /// entries.
    pub fn eval(&self, states: &[StateVector]) -> f64 {
        (self.f)(states)
    }
}

/// The Wronskian observables `W^(ell)` over the system's index pairs.
pub fn wronskian_observables(desc: &SystemDescriptor, ell: usize) -> Result<Vec<Observable>> {
    if ell == 0 {
        return Err(Error::InvalidParams("Wronskian order must be at least 1".into()));
    }
    Ok(desc
        .wronskian_pairs()
        .ok_or_else(|| Error::Unsupported {
            system: desc.kind.to_string(),
            what: "Wronskian bases".into(),
        })?
        .into_iter()
        .map(|(i, j)| Observable::wronskian(ell, i, j))
        .collect())
}

/// Singular spectrum and null space of the HK matrix on one window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HKNullSpaceReport {
    pub observables: Vec<String>,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub null_dim: usize,
    /// Null-space basis, each scaled so its largest-magnitude entry is +1.
    pub coeff_vectors: Vec<Vec<f64>>,
    /// `(start, length)` in orbit indices.
    pub window: (usize, usize),
    /// `sigma_{m-d} / sigma_{m-d+1}` (1-based); `None` when `d` is 0 or `m`.
    /// A vanishing null singular value is floored at `eps_mach * sigma_max`.
    pub gap_ratio: Option<f64>,
    /// `max_v |M v|_inf / |M|_inf` over the reported null vectors.
    pub residual: f64,
}

/// Window length used when none is specified: `2m + 4`.
pub fn default_window(observables: usize) -> usize {
    2 * observables + 4
}

/// Null space of the HK matrix on rows `0..window`.
pub fn hk_nullspace(orbit: &OrbitRecord, observables: &[Observable], window: usize) -> Result<HKNullSpaceReport> {
    hk_nullspace_at(orbit, observables, 0, window)
}

/// Evaluation matrix `M[r][s] = phi_s(Phi^(start + r) x)`.
pub fn hk_matrix(orbit: &OrbitRecord, observables: &[Observable], start: usize, window: usize) -> Result<DMatrix<f64>> {
    let m = observables.len();
    if m == 0 {
        return Err(Error::InvalidParams("no observables".into()));
    }
    if window < m + 2 {
        return Err(Error::WindowTooShort {
            window,
            observables: m,
            needed: m + 2,
        });
    }
    let lookahead = observables.iter().map(|o| o.lookahead).max().unwrap_or(0);
    let needed = start + window + lookahead;
    if needed > orbit.len() {
        return Err(match orbit.pole_at() {
            Some(k) => Error::PoleInWindow(k),
            None => Error::IndexOutOfRange(format!("window needs {needed} states, orbit has {}", orbit.len())),
        });
    }
    Ok(DMatrix::from_fn(window, m, |r, s| {
        observables[s].eval(&orbit.states[start + r..])
    }))
}

fn normalize_largest(v: &mut [f64]) {
    let mut best = 0;
    for (k, value) in v.iter().enumerate() {
        if value.abs() > v[best].abs() {
            best = k;
        }
    }
    let scale = v[best];
    if scale != 0.0 {
        v.iter_mut().for_each(|value| *value /= scale);
    }
}

/// Null space of the HK matrix on rows `start..start + window`.
pub fn hk_nullspace_at(
    orbit: &OrbitRecord,
    observables: &[Observable],
    start: usize,
    window: usize,
) -> Result<HKNullSpaceReport> {
    let matrix = hk_matrix(orbit, observables, start, window)?;
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("non-finite observable value in window".into()));
    }
    let m = observables.len();
    let svd = matrix.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let sigma_max = sigma[0];
    let null_dim = if sigma_max == 0.0 {
        m
    } else {
        sigma.iter().filter(|&&s| s < NULL_THRESHOLD * sigma_max).count()
    };
    let coeff_vectors: Vec<Vec<f64>> = order[m - null_dim..]
        .iter()
        .map(|&k| {
            let mut v: Vec<f64> = v_t.row(k).iter().copied().collect();
            normalize_largest(&mut v);
            v
        })
        .collect();
    let gap_ratio = (null_dim > 0 && null_dim < m)
        .then(|| sigma[m - null_dim - 1] / sigma[m - null_dim].max(f64::EPSILON * sigma_max));
    let norm = matrix
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let residual = coeff_vectors
        .iter()
        .map(|v| {
            let prod = &matrix * nalgebra::DVector::from_column_slice(v);
            prod.amax() / norm.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    Ok(HKNullSpaceReport {
        observables: observables.iter().map(|o| o.name.clone()).collect(),
        singular_values: sigma,
        null_dim,
        coeff_vectors,
        window: (start, window),
        gap_ratio,
        residual,
    })
}

/// Coefficient ratios `c_i / c_pivot` recomputed on sliding windows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioSequences {
    /// `ratios[i][w]`: ratio for coefficient `i` on window `w`.
    pub ratios: Vec<Vec<f64>>,
    /// Largest `|r_w - r_0| / (1 + |r_0|)` per coefficient.
    pub max_deviation: Vec<f64>,
    pub constant: bool,
}

/// Slides the window of `report` forward `windows` times and tracks the
/// ratios of its single null vector against entry `pivot`.
pub fn extract_integral_ratios(
    report: &HKNullSpaceReport,
    orbit: &OrbitRecord,
    observables: &[Observable],
    pivot: usize,
    windows: usize,
) -> Result<RatioSequences> {
    if report.null_dim != 1 {
        return Err(Error::NullDimension(report.null_dim));
    }
    let m = observables.len();
    if pivot >= m {
        return Err(Error::IndexOutOfRange(format!("pivot {pivot} among {m} coefficients")));
    }
    let (start, length) = report.window;
    let mut ratios = vec![Vec::with_capacity(windows); m];
    for w in 0..windows.max(1) {
        let current = hk_nullspace_at(orbit, observables, start + w, length)?;
        if current.null_dim != 1 {
            return Err(Error::NullDimension(current.null_dim));
        }
        let v = &current.coeff_vectors[0];
        if v[pivot].abs() < PIVOT_TOL {
            return Err(Error::PivotDegenerate {
                window: start + w,
                value: v[pivot].abs(),
            });
        }
        for i in 0..m {
            ratios[i].push(v[i] / v[pivot]);
        }
    }
    let max_deviation: Vec<f64> = ratios
        .iter()
        .map(|seq| {
            let r0 = seq[0];
            seq.iter()
                .map(|r| (r - r0).abs() / (1.0 + r0.abs()))
                .fold(0.0, f64::max)
        })
        .collect();
    let constant = max_deviation.iter().all(|&d| d <= CONSTANCY_TOL);
    Ok(RatioSequences {
        ratios,
        max_deviation,
        constant,
    })
}

/// A fallible scalar function of the state.
pub type Integral<'a> = dyn Fn(&[f64]) -> Result<f64> + 'a;

/// Numerical rank of the gradient matrix of `integrals` at `x`.
pub fn functional_rank(integrals: &[&Integral], x: &[f64]) -> Result<usize> {
    let sv = gradient_singular_values(integrals, x)?;
    let max = sv.first().copied().unwrap_or(0.0);
    Ok(sv.iter().filter(|&&s| max > 0.0 && s > RANK_THRESHOLD * max).count())
}

/// Descending singular values of the central-difference gradient matrix
/// with each row scaled to unit length.
pub fn gradient_singular_values(integrals: &[&Integral], x: &[f64]) -> Result<Vec<f64>> {
    if integrals.is_empty() {
        return Ok(Vec::new());
    }
    let mut rows = Vec::with_capacity(integrals.len() * x.len());
    for f in integrals {
        rows.extend(numdiff::gradient(f, x)?);
    }
    let mut grad = DMatrix::from_row_slice(integrals.len(), x.len(), &rows);
    // Unit rows: rescaling an integral does not change the rank.
    for mut row in grad.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let mut sv: Vec<f64> = grad.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Integrals read off the null vector of the order-`ell` Wronskian basis on
/// the orbit through `x`: `[v1/v3, v2/v3]` for Clebsch systems, `[v3/v1]`
/// for the Kirchhoff and Lagrange cases.
pub fn wronskian_integrals(desc: &SystemDescriptor, x: &[f64], eps: f64, ell: usize) -> Result<Vec<f64>> {
    let observables = wronskian_observables(desc, ell)?;
    let window = default_window(observables.len());
    let orbit = iterate_orbit(&desc.field, x, eps, window + ell)?;
    let report = hk_nullspace(&orbit, &observables, window)?;
    if report.null_dim != 1 {
        return Err(Error::NullDimension(report.null_dim));
    }
    let v = &report.coeff_vectors[0];
    let ratio = |num: usize, den: usize| -> Result<f64> {
        if v[den].abs() < PIVOT_TOL {
            return Err(Error::PivotDegenerate {
                window: 0,
                value: v[den],
            });
        }
        Ok(v[num] / v[den])
    };
    match desc.model {
        Model::Kirchhoff(_) | Model::Lagrange(_) => Ok(vec![ratio(2, 0)?]),
        Model::FirstClebsch(_) | Model::Clebsch(_) => Ok(vec![ratio(0, 2)?, ratio(1, 2)?]),
        Model::Planar(_) => Err(Error::Unsupported {
            system: desc.kind.to_string(),
            what: "Wronskian bases".into(),
        }),
    }
}

/// Evaluates a named integral, extending the closed forms with the
/// Wronskian-derived `J1..J4` (`J1, J2` from order 3, `J3, J4` from order 4;
/// Kirchhoff and Lagrange have a single `J1` from order 3).
pub fn eval_integral(desc: &SystemDescriptor, name: &str, x: &[f64], eps: f64) -> Result<f64> {
    let clebsch = matches!(desc.model, Model::FirstClebsch(_) | Model::Clebsch(_));
    match name {
        "J1" | "J2" if clebsch => Ok(wronskian_integrals(desc, x, eps, 3)?[(name == "J2") as usize]),
        "J3" | "J4" if clebsch => Ok(wronskian_integrals(desc, x, eps, 4)?[(name == "J4") as usize]),
        "J1" => Ok(wronskian_integrals(desc, x, eps, 3)?[0]),
        "I0" => eval_i0(desc, x, eps),
        _ => {
            let xt = desc.field.kahan_step(x, eps)?.next;
            named_on_pair(desc, name, x, &xt, eps)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{build_system, SystemConfig, SystemKind};

    fn square() -> QuadraticVectorField {
        let mut f = QuadraticVectorField::zeros(1);
        f.add_quadratic(0, 0, 0, 1.0);
        f
    }

    #[test]
    fn scalar_orbit_recursion() {
        // x~ = x / (1 - 2 eps x)
        let orbit = iterate_orbit(&square(), &[1.0], 0.1, 2).unwrap();
        assert!((orbit.states[1][0] - 1.25).abs() < 1e-15);
        assert!((orbit.states[2][0] - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(orbit.pole_flags, vec![false, false]);
    }

    #[test]
    fn orbit_stops_at_pole() {
        // 1 -> 1.25 -> 5/3 -> 2.5 -> 5 (pole of the next step)
        let orbit = iterate_orbit(&square(), &[1.0], 0.1, 10).unwrap();
        assert_eq!(orbit.len(), 5);
        assert_eq!(orbit.pole_at(), Some(4));
        assert!(iterate_orbit(&square(), &[5.0], 0.1, 3).is_err());
        assert!(iterate_orbit(&square(), &[1.0], 0.1, 0).is_err());
    }

    #[test]
    fn zero_step_orbit_is_constant() {
        let d = build_system(&SystemConfig::default_for(SystemKind::FirstClebsch)).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let orbit = iterate_orbit(&d.field, &x, 0.0, 5).unwrap();
        assert!(orbit.states.iter().all(|s| s == &x.to_vec()));
        assert_eq!(discrete_wronskian(&orbit, 3, (0, 3), 1).unwrap(), 0.0);
    }

    #[test]
    fn wronskian_antisymmetry_and_range() {
        let d = build_system(&SystemConfig::default_for(SystemKind::Kirchhoff)).unwrap();
        let orbit = iterate_orbit(&d.field, &[0.3, -0.2, 0.5, 0.1, 0.4, -0.3], 0.1, 4).unwrap();
        assert_eq!(discrete_wronskian(&orbit, 2, (1, 1), 0).unwrap(), 0.0);
        let a = discrete_wronskian(&orbit, 2, (0, 3), 1).unwrap();
        let b = discrete_wronskian(&orbit, 2, (3, 0), 1).unwrap();
        assert_eq!(a, -b);
        assert!(discrete_wronskian(&orbit, 4, (0, 3), 1).is_err());
        assert!(discrete_wronskian(&orbit, 1, (0, 9), 0).is_err());
    }

    #[test]
    fn duplicated_constant_observables() {
        let orbit = iterate_orbit(&square(), &[0.1], 0.1, 6).unwrap();
        let obs = [Observable::constant("one", 1.0), Observable::constant("also one", 1.0)];
        let report = hk_nullspace(&orbit, &obs, 4).unwrap();
        assert_eq!(report.null_dim, 1);
        let v = &report.coeff_vectors[0];
        assert!((v[0] - 1.0).abs() < 1e-15 && (v[1] + 1.0).abs() < 1e-15);
        let seq = extract_integral_ratios(&report, &orbit, &obs, 1, 3).unwrap();
        assert!(seq.constant);
        assert!(seq.ratios[0].iter().all(|r| (r + 1.0).abs() < 1e-15));
    }

    #[test]
    fn window_validation() {
        let orbit = iterate_orbit(&square(), &[0.1], 0.1, 3).unwrap();
        let obs = [Observable::constant("a", 1.0), Observable::point("x", |x| x[0])];
        assert!(matches!(
            hk_nullspace(&orbit, &obs, 3),
            Err(Error::WindowTooShort { needed: 4, .. })
        ));
        assert!(matches!(hk_nullspace(&orbit, &obs, 10), Err(Error::IndexOutOfRange(_))));
        let short = iterate_orbit(&square(), &[1.0], 0.1, 10).unwrap();
        assert!(matches!(hk_nullspace(&short, &obs, 8), Err(Error::PoleInWindow(4))));
    }

    #[test]
    fn ratio_extraction_needs_one_dimensional_null_space() {
        let orbit = iterate_orbit(&square(), &[0.1], 0.1, 8).unwrap();
        let obs = [Observable::constant("a", 1.0), Observable::point("x", |x| x[0])];
        let report = hk_nullspace(&orbit, &obs, 4).unwrap();
        assert_eq!(report.null_dim, 0);
        assert_eq!(report.gap_ratio, None);
        assert!(matches!(
            extract_integral_ratios(&report, &orbit, &obs, 0, 2),
            Err(Error::NullDimension(0))
        ));
    }

    #[test]
    fn rank_of_duplicates_and_coordinates() {
        let f = |x: &[f64]| -> Result<f64> { Ok(x[0] * x[0] + x[1]) };
        let g = |x: &[f64]| -> Result<f64> { Ok(x[2]) };
        let x = [0.3, 0.4, 0.5];
        assert_eq!(functional_rank(&[&f, &f], &x).unwrap(), 1);
        assert_eq!(functional_rank(&[&f, &g], &x).unwrap(), 2);
    }
}
