//! Quadratic vector fields `f(x) = Q(x) + Bx + c` and their Kahan map.
//!
//! The Kahan discretization with step `2 eps` replaces every quadratic
//! monomial by its symmetric polarization across the two time levels:
//!
//! ```text
//! (x~ - x) / (2 eps) = Q(x, x~) + B(x + x~)/2 + c
//! ```
//!
//! which is linear in `x~`. The explicit solution is
//! `x~ = x + 2 eps (I - eps f'(x))^{-1} f(x)`, and every component of `x~`
//! shares the denominator `det(I - eps f'(x))`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in phase space.
pub type StateVector = Vec<f64>;

/// Relative tolerance for the `Q[i][j][k] = Q[i][k][j]` check on load.
const SYMMETRY_TOL: f64 = 1e-12;

/// `|delta|` below `POLE_SCALE * (1 + ||eps f'(x)||_inf)^n` is a pole.
const POLE_SCALE: f64 = 1e-13;

/// Coefficients of `f(x) = Q(x) + Bx + c` on `R^n`.
///
/// The quadratic tensor is stored fully symmetric in its last two indices,
/// so component `i` of `Q(x)` is `sum_{j,k} Q[i][j][k] x_j x_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldDocument", into = "FieldDocument")]
pub struct QuadraticVectorField {
    dim: usize,
    quad: Vec<f64>,
    lin: Vec<f64>,
    constant: Vec<f64>,
}

/// Result of one Kahan step.
#[derive(Debug, Clone, PartialEq)]
pub struct KahanStep {
    pub next: StateVector,
    /// `det(I - eps f'(x))`.
    pub delta: f64,
    /// Max-norm defect of the defining relation, relative to `1 + |x| + |x~|`.
    pub residual: f64,
}

/// JSON layout: `{"dim": n, "quad": [[[..]]], "lin": [[..]], "const": [..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FieldDocument {
    dim: usize,
    quad: Vec<Vec<Vec<f64>>>,
    lin: Vec<Vec<f64>>,
    #[serde(rename = "const")]
    constant: Vec<f64>,
}

impl QuadraticVectorField {
    /// The zero field on `R^dim`.
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            quad: vec![0.0; dim * dim * dim],
            lin: vec![0.0; dim * dim],
            constant: vec![0.0; dim],
        }
    }

    /// Builds a field from nested arrays, validating shape, finiteness and
    /// symmetry of the quadratic tensor.
    pub fn from_parts(quad: Vec<Vec<Vec<f64>>>, lin: Vec<Vec<f64>>, constant: Vec<f64>) -> Result<Self> {
        FieldDocument {
            dim: constant.len(),
            quad,
            lin,
            constant,
        }
        .try_into()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn quad(&self, i: usize, j: usize, k: usize) -> f64 {
        self.quad[(i * self.dim + j) * self.dim + k]
    }

    #[inline]
    pub fn lin(&self, i: usize, j: usize) -> f64 {
        self.lin[i * self.dim + j]
    }

    #[inline]
    pub fn constant(&self, i: usize) -> f64 {
        self.constant[i]
    }

    /// Adds `coef * x_j * x_k` to component `i`, split symmetrically.
    pub fn add_quadratic(&mut self, i: usize, j: usize, k: usize, coef: f64) {
        let n = self.dim;
        if j == k {
            self.quad[(i * n + j) * n + j] += coef;
        } else {
            self.quad[(i * n + j) * n + k] += 0.5 * coef;
            self.quad[(i * n + k) * n + j] += 0.5 * coef;
        }
    }

    /// Adds `coef * x_j` to component `i`.
    pub fn add_linear(&mut self, i: usize, j: usize, coef: f64) {
        self.lin[i * self.dim + j] += coef;
    }

    /// Adds the constant `coef` to component `i`.
    pub fn add_constant(&mut self, i: usize, coef: f64) {
        self.constant[i] += coef;
    }

    /// The same field with constant and linear parts removed.
    pub fn quadratic_part(&self) -> Self {
        Self {
            dim: self.dim,
            quad: self.quad.clone(),
            lin: vec![0.0; self.dim * self.dim],
            constant: vec![0.0; self.dim],
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// `f(x) = Q(x) + Bx + c`.
    pub fn evaluate(&self, x: &[f64]) -> Result<StateVector> {
        self.polarize(x, x)
    }

    /// The polarization `Q(x, y) + B(x + y)/2 + c`; symmetric in `x, y`
    /// and equal to `f(x)` on the diagonal.
    pub fn polarize(&self, x: &[f64], y: &[f64]) -> Result<StateVector> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let n = self.dim;
        let mut out = self.constant.clone();
        for (i, out_i) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                let row = &self.quad[(i * n + j) * n..(i * n + j + 1) * n];
                // Symmetrize explicitly so swapping x and y is bit-exact.
                let mut inner = 0.0;
                for k in 0..n {
                    inner += row[k] * (x[j] * y[k] + y[j] * x[k]);
                }
                acc += 0.5 * inner;
                acc += 0.5 * self.lin(i, j) * (x[j] + y[j]);
            }
            *out_i += acc;
        }
        Ok(out)
    }

    /// Exact Jacobian `f'(x)[i][j] = 2 sum_k Q[i][j][k] x_k + B[i][j]`.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let n = self.dim;
        Ok(DMatrix::from_fn(n, n, |i, j| {
            let row = &self.quad[(i * n + j) * n..(i * n + j + 1) * n];
            let q: f64 = row.iter().zip(x).map(|(q, xk)| q * xk).sum();
            2.0 * q + self.lin(i, j)
        }))
    }

    /// `I - eps f'(x)`.
    fn step_matrix(&self, x: &[f64], eps: f64) -> Result<DMatrix<f64>> {
        let jac = self.jacobian(x)?;
        Ok(DMatrix::identity(self.dim, self.dim) - jac * eps)
    }

    fn pole_threshold(&self, x: &[f64], eps: f64) -> Result<f64> {
        let jac = self.jacobian(x)?;
        let norm = jac
            .row_iter()
            .map(|r| r.iter().map(|v| (eps * v).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(POLE_SCALE * (1.0 + norm).powi(self.dim as i32))
    }

    /// The common denominator `det(I - eps f'(x))`.
    pub fn delta(&self, x: &[f64], eps: f64) -> Result<f64> {
        Ok(self.step_matrix(x, eps)?.lu().determinant())
    }

    /// One step of the Kahan map `x -> x~`.
    pub fn kahan_step(&self, x: &[f64], eps: f64) -> Result<KahanStep> {
        let matrix = self.step_matrix(x, eps)?;
        let lu = matrix.lu();
        let delta = lu.determinant();
        let threshold = self.pole_threshold(x, eps)?;
        if delta.is_nan() || delta.abs() < threshold {
            return Err(Error::SingularStep { delta, threshold });
        }
        let rhs = DVector::from_vec(self.evaluate(x)?);
        let sol = lu.solve(&rhs).ok_or(Error::SingularStep { delta, threshold })?;
        let next: StateVector = x.iter().zip(sol.iter()).map(|(xi, si)| xi + 2.0 * eps * si).collect();
        let residual = self.step_residual(x, &next, eps)?;
        Ok(KahanStep { next, delta, residual })
    }

    /// Max-norm defect of `(x~ - x) = 2 eps (Q(x, x~) + B(x + x~)/2 + c)`
    /// relative to `1 + |x| + |x~|`.
    pub fn step_residual(&self, x: &[f64], next: &[f64], eps: f64) -> Result<f64> {
        let rhs = self.polarize(x, next)?;
        let defect = x
            .iter()
            .zip(next)
            .zip(&rhs)
            .map(|((xi, ni), ri)| ((ni - xi) - 2.0 * eps * ri).abs())
            .fold(0.0, f64::max);
        Ok(defect / (1.0 + max_norm(x) + max_norm(next)))
    }

    /// Jacobian of the Kahan map, `(I - eps f'(x))^{-1} (I + eps f'(x~))`.
    pub fn map_jacobian(&self, x: &[f64], eps: f64) -> Result<DMatrix<f64>> {
        let step = self.kahan_step(x, eps)?;
        let lu = self.step_matrix(x, eps)?.lu();
        let forward = DMatrix::identity(self.dim, self.dim) + self.jacobian(&step.next)? * eps;
        lu.solve(&forward).ok_or(Error::SingularStep {
            delta: step.delta,
            threshold: 0.0,
        })
    }
}

pub(crate) fn max_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

impl TryFrom<FieldDocument> for QuadraticVectorField {
    type Error = Error;

    fn try_from(doc: FieldDocument) -> Result<Self> {
        let n = doc.dim;
        if n == 0 {
            return Err(Error::InvalidField("dim must be positive".into()));
        }
        let shape_err = |what: &str| Error::InvalidField(format!("{what} has wrong shape for dim {n}"));
        if doc.constant.len() != n {
            return Err(shape_err("const"));
        }
        if doc.lin.len() != n || doc.lin.iter().any(|r| r.len() != n) {
            return Err(shape_err("lin"));
        }
        if doc.quad.len() != n || doc.quad.iter().any(|m| m.len() != n || m.iter().any(|r| r.len() != n)) {
            return Err(shape_err("quad"));
        }
        let quad: Vec<f64> = doc.quad.into_iter().flatten().flatten().collect();
        let lin: Vec<f64> = doc.lin.into_iter().flatten().collect();
        if quad.iter().chain(&lin).chain(&doc.constant).any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite coefficient".into()));
        }
        let scale = 1.0 + max_norm(&quad);
        for i in 0..n {
            for j in 0..n {
                for k in (j + 1)..n {
                    let a = quad[(i * n + j) * n + k];
                    let b = quad[(i * n + k) * n + j];
                    if (a - b).abs() > SYMMETRY_TOL * scale {
                        return Err(Error::InvalidField(format!(
                            "quad[{i}][{j}][{k}] = {a} differs from quad[{i}][{k}][{j}] = {b}"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            dim: n,
            quad,
            lin,
            constant: doc.constant,
        })
    }
}

impl From<QuadraticVectorField> for FieldDocument {
    fn from(f: QuadraticVectorField) -> Self {
        let n = f.dim;
        FieldDocument {
            dim: n,
            quad: (0..n)
                .map(|i| (0..n).map(|j| (0..n).map(|k| f.quad(i, j, k)).collect()).collect())
                .collect(),
            lin: (0..n).map(|i| (0..n).map(|j| f.lin(i, j)).collect()).collect(),
            constant: f.constant,
        }
    }
}
