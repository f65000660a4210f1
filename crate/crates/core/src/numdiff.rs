//! Central finite differences.

/// Relative step: `h = STEP * (1 + |x|_inf)`.
pub const STEP: f64 = 1e-6;

pub fn step_size(x: &[f64]) -> f64 {
    STEP * (1.0 + crate::quadfield::max_norm(x))
}

/// Central-difference gradient of a fallible scalar function.
pub fn gradient<F, E>(f: F, x: &[f64]) -> Result<Vec<f64>, E>
where
    F: Fn(&[f64]) -> Result<f64, E>,
{
    let h = step_size(x);
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Infallible convenience wrapper around [`gradient`].
pub fn gradient_of(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    gradient::<_, std::convert::Infallible>(|y| Ok(f(y)), x).unwrap()
}
