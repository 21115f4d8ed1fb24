//! Small numeric kernels shared across modules: deterministic pairwise summation,
//! Gauss-Legendre nodes, the Kolmogorov distribution, and erf re-exports.

/// Pairwise (cascade) summation. Deterministic for a fixed input order regardless
/// of chunking elsewhere, and accurate to O(log n) rounding growth.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Error function (1-ulp quality via libm).
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Newton iteration on the Legendre polynomial; standard construction, accurate
/// to machine precision for the orders used here (<= 128).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P'_n(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            dp = (n as f64) * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integrate `f` over [a, b] with an n-point Gauss-Legendre rule.
pub fn integrate_gl(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(n);
    let c = 0.5 * (b - a);
    let d = 0.5 * (a + b);
    let mut s = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        s += w * f(c * x + d);
    }
    c * s
}

/// Asymptotic Kolmogorov-Smirnov p-value for the one-sample statistic `d` at
/// sample size `n`, with the Stephens small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    kolmogorov_sf(lambda)
}

/// Survival function of the Kolmogorov distribution, Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut s = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS statistic of `xs` against the cdf `f` (xs need not be sorted).
pub fn ks_statistic(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let c = cdf(x);
        d = d.max((i as f64 + 1.0) / n - c).max(c - i as f64 / n);
    }
    d
}

/// Spectral radius of a 2x2 nonnegative matrix.
pub fn spectral_radius_2x2(m: [[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    (0.5 * (tr + disc)).abs().max((0.5 * (tr - disc)).abs())
}

/// Mean and sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (pairwise_sum(&sq) / (n - 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_smooth_data() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // 16-point rule is exact through degree 31.
        let v = integrate_gl(|x| x.powi(6) - 2.0 * x.powi(3) + 1.0, -1.0, 3.0, 16);
        // antiderivative: x^7/7 - x^4/2 + x
        let exact = |x: f64| x.powi(7) / 7.0 - x.powi(4) / 2.0 + x;
        assert!((v - (exact(3.0) - exact(-1.0))).abs() < 1e-10);
    }

    #[test]
    fn gauss_legendre_gaussian_mass() {
        // integral of exp(-x^2) over R is sqrt(pi); [-8, 8] captures it to ~1e-28.
        let v = integrate_gl(|x| (-x * x).exp(), -8.0, 8.0, 64);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_sf_reference_values() {
        // Q(0.5) = 0.9639..., Q(1.0) = 0.2700..., Q(2.0) = 0.00067...
        assert!((kolmogorov_sf(1.0) - 0.270_000).abs() < 1e-4);
        assert!(kolmogorov_sf(0.5) > 0.95);
        assert!(kolmogorov_sf(2.0) < 1e-3);
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius_2x2([[0.5, 0.0], [0.0, 0.2]]) - 0.5).abs() < 1e-15);
        // row-tied matrix [[a,a],[b,b]] has eigenvalues {0, a+b}
        assert!((spectral_radius_2x2([[0.4, 0.4], [0.1, 0.1]]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn erf_reference() {
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-15);
    }
}
