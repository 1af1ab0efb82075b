//! Finite-difference oracle for gradient checks.

/// Components whose magnitude is below this are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h` for every component.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest componentwise `|a − b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(RELATIVE_FLOOR))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_squared_norm_gradient_is_identity() {
        let x = [0.5, -2.0, 3.25, 0.0];
        let fd = central_difference(&x, 1e-5, |p| 0.5 * p.iter().map(|v| v * v).sum::<f64>());
        assert!(max_relative_error(&fd, &x) < 1e-9);
    }
}
