//! One-dimensional quadrature rules on `[-1, 1]`.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights for `n` points.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite trapezoid nodes and weights on `[-1, 1]` with `n` panels.
pub fn trapezoid(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 / n as f64;
    let nodes = (0..=n).map(|k| -1.0 + k as f64 * h).collect();
    let weights = (0..=n)
        .map(|k| if k == 0 || k == n { h / 2.0 } else { h })
        .collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // Degree 15 is the highest exact degree for 8 points.
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((integral - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_64_on_a_smooth_integrand() {
        let (x, w) = gauss_legendre(64);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.exp()).sum();
        assert!((integral - (1f64.exp() - (-1f64).exp())).abs() < 1e-13);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn trapezoid_is_second_order() {
        let err = |n| {
            let (x, w) = trapezoid(n);
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.exp()).sum();
            (s - (1f64.exp() - (-1f64).exp())).abs()
        };
        let ratio = err(32) / err(64);
        assert!((ratio - 4.0).abs() < 0.05);
    }
}
