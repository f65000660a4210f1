//! Catalog of quadratic systems on `e(3)*` and the planar family.
//!
//! Six-dimensional systems use the phase-space layout `x = (m1, m2, m3, p1, p2, p3)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numdiff;
use crate::quadfield::{max_norm, QuadraticVectorField};

/// Index of `m_i` (0-based `i`) in the six-dimensional layout.
pub const fn m(i: usize) -> usize {
    i
}

/// Index of `p_i` (0-based `i`) in the six-dimensional layout.
pub const fn p(i: usize) -> usize {
    i + 3
}

/// Cyclic triples `(i, j, k)` of `(0, 1, 2)`.
pub const CYCLIC: [(usize, usize, usize); 3] = [(0, 1, 2), (1, 2, 0), (2, 0, 1)];

const CLEBSCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    GeneralClebsch,
    FirstClebsch,
    SecondClebsch,
    Kirchhoff,
    Lagrange,
    PlanarFamily,
}

impl SystemKind {
    pub const ALL: [SystemKind; 6] = [
        SystemKind::GeneralClebsch,
        SystemKind::FirstClebsch,
        SystemKind::SecondClebsch,
        SystemKind::Kirchhoff,
        SystemKind::Lagrange,
        SystemKind::PlanarFamily,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::GeneralClebsch => "general_clebsch",
            SystemKind::FirstClebsch => "first_clebsch",
            SystemKind::SecondClebsch => "second_clebsch",
            SystemKind::Kirchhoff => "kirchhoff",
            SystemKind::Lagrange => "lagrange",
            SystemKind::PlanarFamily => "planar_family",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::UnknownName(format!("system kind `{name}`")))
    }
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Derived constants of a Clebsch-type system `H = <m,Am>/2 + <p,Bp>/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClebschParams {
    pub a: [f64; 3],
    pub b: [f64; 3],
    /// `None` when all three ratios defining it are degenerate.
    pub beta: Option<f64>,
    /// Wronskian coefficients `A_i`.
    pub wcoef: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstClebschParams {
    pub omega: [f64; 3],
}

impl FirstClebschParams {
    /// True when two of the `omega_i` coincide.
    pub fn is_degenerate(&self) -> bool {
        let w = self.omega;
        w[0] == w[1] || w[1] == w[2] || w[0] == w[2]
    }
}

/// Kirchhoff case `a1 = a2`, `b1 = b2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KirchhoffParams {
    pub a1: f64,
    pub a3: f64,
    pub b1: f64,
    pub b3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangeParams {
    pub alpha: f64,
    pub gamma: f64,
}

/// One component `x^T Q x + l.x + c` of a quadratic field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub quad: Vec<Vec<f64>>,
    pub lin: Vec<f64>,
    #[serde(rename = "const", default)]
    pub constant: f64,
}

/// `x1' = l(x)(b x1 + c x2)`, `x2' = -l(x)(a x1 + b x2)`, with the remaining
/// components given by `extra`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarFamilyParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Linear part of the affine functional `l(x) = ell . x + ell0`.
    pub ell: Vec<f64>,
    #[serde(default)]
    pub ell0: f64,
    /// Rows for components `3..=n`.
    #[serde(default)]
    pub extra: Vec<FieldRow>,
}

impl PlanarFamilyParams {
    pub fn dim(&self) -> usize {
        self.ell.len()
    }

    /// `l(x)`.
    pub fn ell_at(&self, x: &[f64]) -> f64 {
        self.ell0 + self.ell.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
    }

    /// `a x1^2 + 2 b x1 x2 + c x2^2`, twice the quadratic form `H`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        self.a * x[0] * y[0] + self.b * (x[0] * y[1] + y[0] * x[1]) + self.c * x[1] * y[1]
    }

    /// `ac - b^2`.
    pub fn discriminant(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n < 2 {
            return Err(Error::InvalidParams("planar family needs ell of length n >= 2".into()));
        }
        if self.extra.len() != n - 2 {
            return Err(Error::InvalidParams(format!(
                "planar family of dimension {n} needs {} extra rows, got {}",
                n - 2,
                self.extra.len()
            )));
        }
        for (r, row) in self.extra.iter().enumerate() {
            if row.lin.len() != n || row.quad.len() != n || row.quad.iter().any(|q| q.len() != n) {
                return Err(Error::InvalidParams(format!(
                    "extra row {r} has wrong shape for dimension {n}"
                )));
            }
        }
        let finite = [self.a, self.b, self.c, self.ell0]
            .iter()
            .chain(&self.ell)
            .chain(self.extra.iter().flat_map(|r| {
                r.quad
                    .iter()
                    .flatten()
                    .chain(&r.lin)
                    .chain(std::iter::once(&r.constant))
            }))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite planar coefficient".into()));
        }
        Ok(())
    }

    pub fn field(&self) -> Result<QuadraticVectorField> {
        self.validate()?;
        let n = self.dim();
        let mut f = QuadraticVectorField::zeros(n);
        // l(x) (b x1 + c x2) and -l(x) (a x1 + b x2)
        let rows = [(0, self.b, self.c), (1, -self.a, -self.b)];
        for (i, u, v) in rows {
            for (j, w) in self.ell.iter().enumerate() {
                f.add_quadratic(i, j, 0, w * u);
                f.add_quadratic(i, j, 1, w * v);
            }
            f.add_linear(i, 0, self.ell0 * u);
            f.add_linear(i, 1, self.ell0 * v);
        }
        for (r, row) in self.extra.iter().enumerate() {
            let i = r + 2;
            for j in 0..n {
                for k in 0..n {
                    if j == k {
                        f.add_quadratic(i, j, j, row.quad[j][j]);
                    } else {
                        // x^T Q x counts (j,k) and (k,j) separately
                        f.add_quadratic(i, j, k, row.quad[j][k]);
                    }
                }
                f.add_linear(i, j, row.lin[j]);
            }
            f.add_constant(i, row.constant);
        }
        Ok(f)
    }
}

/// Input description of a catalog system: `{"kind": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum SystemConfig {
    GeneralClebsch { a: [f64; 3], b: [f64; 3] },
    FirstClebsch { omega: [f64; 3] },
    SecondClebsch { omega: [f64; 3] },
    Kirchhoff(KirchhoffParams),
    Lagrange(LagrangeParams),
    PlanarFamily(PlanarFamilyParams),
}

impl SystemConfig {
    pub fn kind(&self) -> SystemKind {
        match self {
            SystemConfig::GeneralClebsch { .. } => SystemKind::GeneralClebsch,
            SystemConfig::FirstClebsch { .. } => SystemKind::FirstClebsch,
            SystemConfig::SecondClebsch { .. } => SystemKind::SecondClebsch,
            SystemConfig::Kirchhoff(_) => SystemKind::Kirchhoff,
            SystemConfig::Lagrange(_) => SystemKind::Lagrange,
            SystemConfig::PlanarFamily(_) => SystemKind::PlanarFamily,
        }
    }

    /// Representative parameters for each kind.
    pub fn default_for(kind: SystemKind) -> Self {
        match kind {
            // alpha = 1/2, beta = 1, omega = (1, 2, 3)
            SystemKind::GeneralClebsch => SystemConfig::GeneralClebsch {
                a: [1.5, 2.5, 3.5],
                b: [-5.5, -2.0, -0.5],
            },
            SystemKind::FirstClebsch => SystemConfig::FirstClebsch { omega: [1.0, 2.0, 3.0] },
            SystemKind::SecondClebsch => SystemConfig::SecondClebsch { omega: [1.0, 2.0, 3.0] },
            SystemKind::Kirchhoff => SystemConfig::Kirchhoff(KirchhoffParams {
                a1: 1.0,
                a3: 2.0,
                b1: 0.5,
                b3: 1.5,
            }),
            SystemKind::Lagrange => SystemConfig::Lagrange(LagrangeParams { alpha: 2.0, gamma: 1.0 }),
            SystemKind::PlanarFamily => SystemConfig::PlanarFamily(PlanarFamilyParams {
                a: 1.0,
                b: 0.25,
                c: 0.5,
                ell: vec![0.3, -0.2, 0.4],
                ell0: 1.0,
                extra: vec![FieldRow {
                    quad: vec![vec![0.1, 0.0, 0.2], vec![0.0, -0.3, 0.0], vec![0.0, 0.1, 0.0]],
                    lin: vec![0.0, 0.5, -0.2],
                    constant: 0.1,
                }],
            }),
        }
    }
}

/// Resolved system parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// General and second Clebsch flows.
    Clebsch(ClebschParams),
    FirstClebsch(FirstClebschParams),
    Kirchhoff(KirchhoffParams),
    Lagrange(LagrangeParams),
    Planar(PlanarFamilyParams),
}

/// A built system: its vector field plus what is attached to it.
#[derive(Debug, Clone)]
pub struct SystemDescriptor {
    pub kind: SystemKind,
    pub config: SystemConfig,
    pub model: Model,
    pub field: QuadraticVectorField,
}

impl SystemDescriptor {
    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    /// Conserved quantities checked along orbits.
    pub fn conserved_names(&self) -> &'static [&'static str] {
        match self.model {
            Model::FirstClebsch(_) => &["I0", "J0", "K", "c1/c0", "c2/c0", "c3/c0", "C1/C0", "C2/C0", "C3/C0"],
            Model::Clebsch(_) => &["I0", "J0", "c1/c0", "c2/c0", "c3/c0", "C1/C0", "C2/C0", "C3/C0"],
            Model::Kirchhoff(_) | Model::Lagrange(_) => &["I0", "J0", "m3"],
            Model::Planar(_) => &["F", "Fhat"],
        }
    }

    /// Integral and coefficient columns of the orbit CSV, in order.
    pub fn column_names(&self) -> &'static [&'static str] {
        match self.model {
            Model::FirstClebsch(_) => &["I0", "J0", "K", "c1", "c2", "c3", "c0", "C1", "C2", "C3", "C0"],
            Model::Clebsch(_) => &["I0", "J0", "c1", "c2", "c3", "c0", "C1", "C2", "C3", "C0"],
            Model::Kirchhoff(_) => &["I0", "J0", "c1", "c3", "C1", "C3"],
            Model::Lagrange(_) => &["I0", "J0", "r", "s", "R", "S"],
            Model::Planar(_) => &["F", "Fhat"],
        }
    }

    /// Coefficient functions whose numerator is an invariant density.
    pub fn density_names(&self) -> &'static [&'static str] {
        match self.model {
            Model::FirstClebsch(_) | Model::Clebsch(_) => &["C0", "C1", "C2", "C3", "J0den"],
            Model::Kirchhoff(_) => &["C1", "C3"],
            Model::Lagrange(_) => &["R", "S"],
            Model::Planar(_) => &[],
        }
    }

    /// Constant coefficients of the continuous Wronskian relation.
    pub fn wronskian_coefficients(&self) -> Option<[f64; 3]> {
        match &self.model {
            Model::FirstClebsch(_) => Some([1.0, 1.0, 1.0]),
            Model::Clebsch(c) => Some(c.wcoef),
            Model::Kirchhoff(k) => Some([1.0, 1.0, 2.0 * k.a3 / k.a1 - 1.0]),
            Model::Lagrange(l) => Some([1.0, 1.0, 2.0 * l.alpha - 1.0]),
            Model::Planar(_) => None,
        }
    }

    /// Index pairs `(m_i, p_i)` entering the Wronskians.
    pub fn wronskian_pairs(&self) -> Option<[(usize, usize); 3]> {
        self.wronskian_coefficients()
            .map(|_| [(m(0), p(0)), (m(1), p(1)), (m(2), p(2))])
    }

    fn unsupported(&self, what: &str) -> Error {
        Error::Unsupported {
            system: self.kind.to_string(),
            what: what.to_string(),
        }
    }
}

/// `(b1-b2)/a3 + (b2-b3)/a1 + (b3-b1)/a2`.
pub fn clebsch_condition_residual(a: [f64; 3], b: [f64; 3]) -> Result<f64> {
    if a.contains(&0.0) {
        return Err(Error::InvalidParams("Clebsch condition needs all a_i != 0".into()));
    }
    Ok((b[0] - b[1]) / a[2] + (b[1] - b[2]) / a[0] + (b[2] - b[0]) / a[1])
}

fn clebsch_scale(a: [f64; 3], b: [f64; 3]) -> f64 {
    let amin = a.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    1.0 + max_norm(&b) / amin
}

/// The three expressions that must share the value `1/beta`, as
/// `(numerator, denominator)` pairs.
pub fn beta_ratios(a: [f64; 3], b: [f64; 3]) -> [(f64, f64); 3] {
    CYCLIC.map(|(i, j, k)| (b[i] - b[j], a[k] * (a[i] - a[j])))
}

/// Wronskian coefficients `A_i = 1/a_j + 1/a_k - 1/a_i`.
pub fn wronskian_coefficients(a: [f64; 3]) -> [f64; 3] {
    let inv = a.map(|v| 1.0 / v);
    CYCLIC.map(|(i, j, k)| inv[j] + inv[k] - inv[i])
}

/// Validates the Clebsch condition and derives `beta` and `A_i`.
pub fn clebsch_derived_params(a: [f64; 3], b: [f64; 3]) -> Result<ClebschParams> {
    if a.iter().chain(&b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams("non-finite Clebsch parameter".into()));
    }
    let residual = clebsch_condition_residual(a, b)?;
    let tolerance = CLEBSCH_TOL * clebsch_scale(a, b);
    if residual.abs() > tolerance {
        return Err(Error::ClebschCondition { residual, tolerance });
    }
    // Largest-magnitude denominator avoids 0/0 for partially degenerate a.
    let ratios = beta_ratios(a, b);
    let (num, den) = ratios
        .into_iter()
        .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
        .unwrap();
    let a_scale = max_norm(&a);
    let beta = if den.abs() <= 1e-14 * a_scale * a_scale || num == 0.0 {
        None
    } else {
        Some(den / num)
    };
    Ok(ClebschParams {
        a,
        b,
        beta,
        wcoef: wronskian_coefficients(a),
    })
}

/// Solutions `(alpha, omega)` of `a_i = alpha + beta omega_i`,
/// `b_i = alpha omega_i - beta omega_j omega_k`.
///
/// Substituting `omega_i = (a_i - alpha)/beta` gives
/// `2 alpha^2 - (a_1 + a_2 + a_3) alpha + a_j a_k + beta b_i = 0`, the same
/// quadratic for every `i` once the Clebsch condition holds.
pub fn decompose_clebsch(params: &ClebschParams) -> Result<Vec<(f64, [f64; 3])>> {
    let beta = params.beta.ok_or_else(|| Error::Degenerate("beta undefined".into()))?;
    if beta == 0.0 {
        return Err(Error::Degenerate("beta = 0".into()));
    }
    let (a, b) = (params.a, params.b);
    let sum = a[0] + a[1] + a[2];
    let constant = CYCLIC.iter().map(|&(i, j, k)| a[j] * a[k] + beta * b[i]).sum::<f64>() / 3.0;
    let disc = sum * sum - 8.0 * constant;
    let scale = sum * sum + 8.0 * constant.abs();
    if disc < -1e-12 * scale {
        return Err(Error::NoRealRoot(format!(
            "discriminant {disc:.3e} of the alpha quadratic is negative"
        )));
    }
    let root = disc.max(0.0).sqrt();
    let mut alphas = vec![(sum + root) / 4.0];
    if root > 0.0 {
        // Vieta for the second root avoids cancellation.
        let first = alphas[0];
        alphas.push(if first != 0.0 {
            constant / (2.0 * first)
        } else {
            (sum - root) / 4.0
        });
    }
    let b_scale = 1.0 + max_norm(&b);
    let mut out = Vec::new();
    for alpha in alphas {
        let omega = a.map(|ai| (ai - alpha) / beta);
        let ok = CYCLIC.iter().all(|&(i, j, k)| {
            let bi = alpha * omega[i] - beta * omega[j] * omega[k];
            (bi - b[i]).abs() <= 1e-10 * b_scale
        });
        if ok {
            out.push((alpha, omega));
        }
    }
    if out.is_empty() {
        return Err(Error::NoRealRoot("no root reproduces b; inputs inconsistent".into()));
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(out)
}

fn clebsch_field(a: [f64; 3], b: [f64; 3]) -> QuadraticVectorField {
    let mut f = QuadraticVectorField::zeros(6);
    for (i, j, k) in CYCLIC {
        // m_i' = (a_k - a_j) m_j m_k + (b_k - b_j) p_j p_k
        f.add_quadratic(m(i), m(j), m(k), a[k] - a[j]);
        f.add_quadratic(m(i), p(j), p(k), b[k] - b[j]);
        // p_i' = a_k m_k p_j - a_j m_j p_k
        f.add_quadratic(p(i), m(k), p(j), a[k]);
        f.add_quadratic(p(i), m(j), p(k), -a[j]);
    }
    f
}

fn first_clebsch_field(omega: [f64; 3]) -> QuadraticVectorField {
    let mut f = QuadraticVectorField::zeros(6);
    let w = omega;
    f.add_quadratic(0, 4, 5, w[2] - w[1]);
    f.add_quadratic(1, 5, 3, w[0] - w[2]);
    f.add_quadratic(2, 3, 4, w[1] - w[0]);
    f.add_quadratic(3, 2, 4, 1.0);
    f.add_quadratic(3, 1, 5, -1.0);
    f.add_quadratic(4, 0, 5, 1.0);
    f.add_quadratic(4, 2, 3, -1.0);
    f.add_quadratic(5, 1, 3, 1.0);
    f.add_quadratic(5, 0, 4, -1.0);
    f
}

fn kirchhoff_field(k: &KirchhoffParams) -> QuadraticVectorField {
    let KirchhoffParams { a1, a3, b1, b3 } = *k;
    let mut f = QuadraticVectorField::zeros(6);
    f.add_quadratic(0, 1, 2, a3 - a1);
    f.add_quadratic(0, 4, 5, b3 - b1);
    f.add_quadratic(1, 0, 2, a1 - a3);
    f.add_quadratic(1, 3, 5, b1 - b3);
    f.add_quadratic(3, 4, 2, a3);
    f.add_quadratic(3, 5, 1, -a1);
    f.add_quadratic(4, 5, 0, a1);
    f.add_quadratic(4, 3, 2, -a3);
    f.add_quadratic(5, 3, 1, a1);
    f.add_quadratic(5, 4, 0, -a1);
    f
}

fn lagrange_field(l: &LagrangeParams) -> QuadraticVectorField {
    let LagrangeParams { alpha, gamma } = *l;
    let mut f = QuadraticVectorField::zeros(6);
    f.add_quadratic(0, 1, 2, alpha - 1.0);
    f.add_linear(0, 4, gamma);
    f.add_quadratic(1, 0, 2, 1.0 - alpha);
    f.add_linear(1, 3, -gamma);
    f.add_quadratic(3, 4, 2, alpha);
    f.add_quadratic(3, 5, 1, -1.0);
    f.add_quadratic(4, 5, 0, 1.0);
    f.add_quadratic(4, 3, 2, -alpha);
    f.add_quadratic(5, 3, 1, 1.0);
    f.add_quadratic(5, 4, 0, -1.0);
    f
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("non-finite {what} parameter")))
    }
}

/// Builds the vector field and descriptor for a catalog system.
pub fn build_system(config: &SystemConfig) -> Result<SystemDescriptor> {
    let (model, field) = match config {
        SystemConfig::GeneralClebsch { a, b } => {
            let params = clebsch_derived_params(*a, *b)?;
            (Model::Clebsch(params), clebsch_field(*a, *b))
        }
        SystemConfig::SecondClebsch { omega } => {
            check_finite(omega, "second Clebsch")?;
            let w = *omega;
            let a = w;
            let b = [-w[1] * w[2], -w[2] * w[0], -w[0] * w[1]];
            let params = clebsch_derived_params(a, b)?;
            (Model::Clebsch(params), clebsch_field(a, b))
        }
        SystemConfig::FirstClebsch { omega } => {
            check_finite(omega, "first Clebsch")?;
            (
                Model::FirstClebsch(FirstClebschParams { omega: *omega }),
                first_clebsch_field(*omega),
            )
        }
        SystemConfig::Kirchhoff(k) => {
            check_finite(&[k.a1, k.a3, k.b1, k.b3], "Kirchhoff")?;
            if k.a1 == 0.0 {
                return Err(Error::InvalidParams("Kirchhoff case needs a1 != 0".into()));
            }
            (Model::Kirchhoff(*k), kirchhoff_field(k))
        }
        SystemConfig::Lagrange(l) => {
            check_finite(&[l.alpha, l.gamma], "Lagrange")?;
            (Model::Lagrange(*l), lagrange_field(l))
        }
        SystemConfig::PlanarFamily(pf) => {
            let field = pf.field()?;
            (Model::Planar(pf.clone()), field)
        }
    };
    Ok(SystemDescriptor {
        kind: config.kind(),
        config: config.clone(),
        model,
        field,
    })
}

/// `sum_i A_i (m_i' p_i - m_i p_i')` with `x' = f(x)`.
pub fn continuous_wronskian_residual(desc: &SystemDescriptor, x: &[f64]) -> Result<f64> {
    let coef = desc
        .wronskian_coefficients()
        .ok_or_else(|| desc.unsupported("Wronskian relation"))?;
    let v = desc.field.evaluate(x)?;
    Ok((0..3).map(|i| coef[i] * (v[m(i)] * x[p(i)] - x[m(i)] * v[p(i)])).sum())
}

fn cross(u: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

fn dot(u: [f64; 3], v: [f64; 3]) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

/// Lie-Poisson bracket of `e(3)*`, with gradients from central differences.
pub fn poisson_bracket_e3(f: impl Fn(&[f64]) -> f64, g: impl Fn(&[f64]) -> f64, x: &[f64]) -> Result<f64> {
    if x.len() != 6 {
        return Err(Error::DimensionMismatch {
            expected: 6,
            actual: x.len(),
        });
    }
    let df = numdiff::gradient_of(f, x);
    let dg = numdiff::gradient_of(g, x);
    let split = |d: &[f64]| ([d[0], d[1], d[2]], [d[3], d[4], d[5]]);
    let (fm, fp) = split(&df);
    let (gm, gp) = split(&dg);
    let mm = [x[0], x[1], x[2]];
    let pp = [x[3], x[4], x[5]];
    let mixed = cross(fm, gp);
    let mixed_back = cross(gm, fp);
    Ok(dot(mm, cross(fm, gm))
        + dot(
            pp,
            [
                mixed[0] - mixed_back[0],
                mixed[1] - mixed_back[1],
                mixed[2] - mixed_back[2],
            ],
        ))
}

/// Casimir `K1 = |p|^2`.
pub fn casimir_k1(x: &[f64]) -> f64 {
    x[3] * x[3] + x[4] * x[4] + x[5] * x[5]
}

/// Casimir `K2 = m . p`.
pub fn casimir_k2(x: &[f64]) -> f64 {
    x[0] * x[3] + x[1] * x[4] + x[2] * x[5]
}

/// `H1 = |m|^2 + sum omega_i p_i^2`.
pub fn clebsch_h1(omega: [f64; 3], x: &[f64]) -> f64 {
    (0..3).map(|i| x[m(i)] * x[m(i)] + omega[i] * x[p(i)] * x[p(i)]).sum()
}

/// `H2 = sum omega_i m_i^2 - omega_j omega_k p_i^2`.
pub fn clebsch_h2(omega: [f64; 3], x: &[f64]) -> f64 {
    CYCLIC
        .iter()
        .map(|&(i, j, k)| omega[i] * x[m(i)] * x[m(i)] - omega[j] * omega[k] * x[p(i)] * x[p(i)])
        .sum()
}

/// `H = <m, Am>/2 + <p, Bp>/2`.
pub fn clebsch_hamiltonian(a: [f64; 3], b: [f64; 3], x: &[f64]) -> f64 {
    0.5 * (0..3)
        .map(|i| a[i] * x[m(i)] * x[m(i)] + b[i] * x[p(i)] * x[p(i)])
        .sum::<f64>()
}

/// Lagrange top `H1 = m1^2 + m2^2 + alpha m3^2 + 2 gamma p3`.
pub fn lagrange_h1(l: &LagrangeParams, x: &[f64]) -> f64 {
    x[0] * x[0] + x[1] * x[1] + l.alpha * x[2] * x[2] + 2.0 * l.gamma * x[5]
}

pub type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Named first integrals of the continuous flow.
pub fn continuous_invariants(desc: &SystemDescriptor) -> Vec<(&'static str, ScalarFn)> {
    let mut out: Vec<(&'static str, ScalarFn)> = Vec::new();
    match &desc.model {
        Model::FirstClebsch(fc) => {
            let w = fc.omega;
            out.push(("H1", Box::new(move |x| clebsch_h1(w, x))));
            out.push(("H2", Box::new(move |x| clebsch_h2(w, x))));
        }
        Model::Clebsch(c) => {
            let (a, b) = (c.a, c.b);
            out.push(("H", Box::new(move |x| clebsch_hamiltonian(a, b, x))));
        }
        Model::Kirchhoff(k) => {
            let (a, b) = ([k.a1, k.a1, k.a3], [k.b1, k.b1, k.b3]);
            out.push(("H", Box::new(move |x| clebsch_hamiltonian(a, b, x))));
            out.push(("m3", Box::new(|x| x[2])));
        }
        Model::Lagrange(l) => {
            let l = *l;
            out.push(("lagrangeH1", Box::new(move |x| lagrange_h1(&l, x))));
            out.push(("m3", Box::new(|x| x[2])));
        }
        Model::Planar(pf) => {
            let pf = pf.clone();
            out.push(("H", Box::new(move |x| 0.5 * pf.form(x, x))));
            return out;
        }
    }
    out.push(("K1", Box::new(casimir_k1)));
    out.push(("K2", Box::new(casimir_k2)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn condition_residual_examples() {
        assert_eq!(clebsch_condition_residual([1.0, 2.0, 3.0], [4.0; 3]).unwrap(), 0.0);
        let r = clebsch_condition_residual([1.0, 2.0, 3.0], [-6.0, -3.0, -2.0]).unwrap();
        assert!(r.abs() < 1e-15);
        let r = clebsch_condition_residual([1.0, 2.0, 3.0], [1.0, 0.0, 0.0]).unwrap();
        // 1/3 + 0 - 1/2
        assert!(close(r, -1.0 / 6.0, 1e-15));
        assert!(clebsch_condition_residual([0.0, 1.0, 1.0], [0.0; 3]).is_err());
    }

    #[test]
    fn derived_params_examples() {
        let p = clebsch_derived_params([1.0, 2.0, 3.0], [-6.0, -3.0, -2.0]).unwrap();
        let expect = [-1.0 / 6.0, 5.0 / 6.0, 7.0 / 6.0];
        for i in 0..3 {
            assert!(close(p.wcoef[i], expect[i], 1e-15));
        }
        assert!(close(p.beta.unwrap(), 1.0, 1e-15));

        let sym = clebsch_derived_params([1.0; 3], [1.0, 2.0, 3.0]).unwrap();
        assert_eq!(sym.wcoef, [1.0; 3]);
        assert_eq!(sym.beta, None);

        let err = clebsch_derived_params([1.0, 2.0, 3.0], [1.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::ClebschCondition { .. }));
    }

    #[test]
    fn wronskian_coefficients_solve_linear_system() {
        let a = [1.5, 2.5, 3.5];
        let w = wronskian_coefficients(a);
        let rows = [
            w[0] * (a[2] - a[1]) + w[1] * a[2] - w[2] * a[1],
            -w[0] * a[2] + w[1] * (a[0] - a[2]) + w[2] * a[0],
            w[0] * a[1] - w[1] * a[0] + w[2] * (a[1] - a[0]),
        ];
        for r in rows {
            assert!(r.abs() < 1e-14);
        }
        let b = [-5.5, -2.0, -0.5];
        let eq_a = w[0] * (b[2] - b[1]) + w[1] * (b[0] - b[2]) + w[2] * (b[1] - b[0]);
        assert!(eq_a.abs() < 1e-13);
    }

    #[test]
    fn beta_from_all_ratios_agrees() {
        let p = clebsch_derived_params([1.5, 2.5, 3.5], [-5.5, -2.0, -0.5]).unwrap();
        let beta = p.beta.unwrap();
        for (num, den) in beta_ratios(p.a, p.b) {
            assert!(close(den / num, beta, 1e-12));
        }
    }

    #[test]
    fn decomposition_recovers_second_flow() {
        let p = clebsch_derived_params([1.0, 2.0, 3.0], [-6.0, -3.0, -2.0]).unwrap();
        let roots = decompose_clebsch(&p).unwrap();
        assert_eq!(roots.len(), 2);
        let (alpha, omega) = roots[0];
        assert!(alpha.abs() < 1e-15);
        assert_eq!(omega, [1.0, 2.0, 3.0]);
        for (alpha, omega) in roots {
            for (i, j, k) in CYCLIC {
                assert!((p.a[i] - (alpha + omega[i])).abs() < 1e-14);
                let bi = alpha * omega[i] - omega[j] * omega[k];
                assert!((bi - p.b[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn decomposition_errors() {
        let sym = clebsch_derived_params([1.0; 3], [1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(decompose_clebsch(&sym), Err(Error::Degenerate(_))));
        let mut zero = clebsch_derived_params([1.0, 2.0, 3.0], [-6.0, -3.0, -2.0]).unwrap();
        zero.beta = Some(0.0);
        assert!(decompose_clebsch(&zero).is_err());
    }

    #[test]
    fn first_clebsch_field_values() {
        let d = build_system(&SystemConfig::FirstClebsch { omega: [1.0, 2.0, 3.0] }).unwrap();
        let v = d.field.evaluate(&[0.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let v = d.field.evaluate(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn kirchhoff_m3_is_frozen() {
        let d = build_system(&SystemConfig::default_for(SystemKind::Kirchhoff)).unwrap();
        for x in [[0.3, -0.2, 0.9, 0.1, 0.5, -0.7], [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]] {
            assert_eq!(d.field.evaluate(&x).unwrap()[2], 0.0);
        }
        let KirchhoffParams { a1, a3, b1, b3 } = match d.model {
            Model::Kirchhoff(k) => k,
            _ => unreachable!(),
        };
        let r = clebsch_condition_residual([a1, a1, a3], [b1, b1, b3]).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = SystemConfig::Kirchhoff(KirchhoffParams {
            a1: 0.0,
            a3: 1.0,
            b1: 0.0,
            b3: 0.0,
        });
        assert!(build_system(&bad).is_err());
        let bad = SystemConfig::PlanarFamily(PlanarFamilyParams {
            a: 1.0,
            b: 0.0,
            c: 1.0,
            ell: vec![0.0, 0.0, 1.0],
            ell0: 1.0,
            extra: vec![],
        });
        assert!(build_system(&bad).is_err());
        let bad = SystemConfig::Lagrange(LagrangeParams {
            alpha: f64::NAN,
            gamma: 1.0,
        });
        assert!(build_system(&bad).is_err());
    }

    #[test]
    fn wronskian_residual_at_origin() {
        for kind in SystemKind::ALL {
            let d = build_system(&SystemConfig::default_for(kind)).unwrap();
            if kind == SystemKind::PlanarFamily {
                assert!(continuous_wronskian_residual(&d, &[0.0; 3]).is_err());
            } else {
                assert_eq!(continuous_wronskian_residual(&d, &[0.0; 6]).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn bracket_of_coordinates() {
        let x = [0.3, -0.5, 0.7, 1.1, -1.3, 0.2];
        let b = poisson_bracket_e3(|y| y[0], |y| y[1], &x).unwrap();
        assert!((b - x[2]).abs() < 1e-9);
        let b = poisson_bracket_e3(|y| y[0], |y| y[4], &x).unwrap();
        assert!((b - x[5]).abs() < 1e-9);
        let f = |y: &[f64]| y[0] * y[4] + y[2].powi(2);
        assert_eq!(poisson_bracket_e3(f, f, &x).unwrap(), 0.0);
    }

    #[test]
    fn config_json_shape() {
        let cfg = SystemConfig::default_for(SystemKind::Lagrange);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(text, r#"{"kind":"lagrange","params":{"alpha":2.0,"gamma":1.0}}"#);
        let err = serde_json::from_str::<SystemConfig>(r#"{"kind":"first_clebsch","params":{}}"#).unwrap_err();
        assert!(err.to_string().contains("omega"), "{err}");
    }
}
