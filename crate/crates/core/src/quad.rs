//! One-dimensional quadrature rules and the Bessel function J0.
//!
//! Gauss-Legendre serves smooth integrands on segments and arcs; tanh-sinh
//! handles endpoint singularities (the logarithmic kernel of the boundary
//! operator). J0 enters the closed-form Fourier transform of the truncated
//! Cauchy kernel.

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Newton iteration on the Legendre recurrence; accurate to ~1e-15 for the
/// orders used here (n <= 512).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Tricomi initial guess
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n(t) and P_n'(t)
            let mut p0 = 1.0;
            let mut p1 = t;
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Integrate `f` over [a, b] with an `n`-point Gauss-Legendre rule.
pub fn integrate_gl<F: FnMut(f64) -> num_complex::Complex64>(
    a: f64,
    b: f64,
    n: usize,
    mut f: F,
) -> num_complex::Complex64 {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = num_complex::Complex64::new(0.0, 0.0);
    for (xi, wi) in x.iter().zip(&w) {
        acc += f(c + h * xi) * *wi;
    }
    acc * h
}

/// Tanh-sinh (double-exponential) quadrature over [a, b].
///
/// Robust to integrable endpoint singularities; `eps` is the target on the
/// level-to-level increment.
pub fn integrate_tanh_sinh<F: FnMut(f64) -> num_complex::Complex64>(
    a: f64,
    b: f64,
    eps: f64,
    mut f: F,
) -> num_complex::Complex64 {
    use num_complex::Complex64;
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let tmax = 3.8; // exp(-pi/2*sinh(3.8)) ~ 1e-30, past f64 underflow of weights that matter
    let eval = |t: f64, f: &mut F| -> Complex64 {
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let x = u.tanh();
        let dx = std::f64::consts::FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        if !dx.is_finite() || dx == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let point = c + r * x;
        // clamp interior: the map can land exactly on an endpoint in f64
        if point <= a.min(b) || point >= a.max(b) {
            return Complex64::new(0.0, 0.0);
        }
        f(point) * dx
    };
    let mut h = 1.0;
    let mut sum = eval(0.0, &mut f);
    let mut k = 1;
    while (k as f64) * h <= tmax {
        let t = k as f64 * h;
        sum += eval(t, &mut f) + eval(-t, &mut f);
        k += 1;
    }
    let mut result = sum * h;
    for _level in 0..10 {
        h *= 0.5;
        let mut add = num_complex::Complex64::new(0.0, 0.0);
        let mut t = h;
        while t <= tmax {
            add += eval(t, &mut f) + eval(-t, &mut f);
            t += 2.0 * h;
        }
        let new_result = result * 0.5 + add * h;
        let delta = (new_result - result).norm();
        result = new_result;
        if delta < eps * (1.0 + result.norm()) {
            break;
        }
    }
    result * r
}

/// Bessel function of the first kind, order zero.
///
/// Power series up to |x| = 12, Hankel asymptotic expansion beyond.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 12.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            term *= -q / ((k * k) as f64);
            sum += term;
            if term.abs() < 1e-18 * sum.abs().max(1.0) {
                break;
            }
        }
        sum
    } else {
        let z = 8.0 / ax;
        let z2 = z * z;
        let p = 1.0
            + z2 * (-0.1098628627e-2
                + z2 * (0.2734510407e-4 + z2 * (-0.2073370639e-5 + z2 * 0.2093887211e-6)));
        let q = z * (-0.1562499995e-1
            + z2 * (0.1430488765e-3
                + z2 * (-0.6911147651e-5 + z2 * (0.7621095161e-6 + z2 * -0.934935152e-7))));
        let chi = ax - std::f64::consts::FRAC_PI_4;
        (2.0 / (std::f64::consts::PI * ax)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}
