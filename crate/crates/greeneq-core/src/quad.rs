//! One-dimensional integration helpers: exact polynomial and
//! polynomial-times-log antiderivatives, Gauss-Legendre rules, adaptive
//! Simpson, and closed forms for double logarithmic integrals over boxes.

/// Horner evaluation of `sum c_k t^k`.
pub fn poly_eval(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// Exact `int_a^b p(t) dt`.
pub fn poly_integral(coeffs: &[f64], a: f64, b: f64) -> f64 {
    let anti = |t: f64| -> f64 {
        let mut acc = 0.0;
        for (k, &c) in coeffs.iter().enumerate().rev() {
            acc = acc * t + c / ((k + 1) as f64);
        }
        acc * t
    };
    anti(b) - anti(a)
}

/// Antiderivative of `u^k ln|u|`, continuous through `u = 0`.
fn monomial_log_anti(k: usize, u: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    let kp1 = (k + 1) as f64;
    u.powi(k as i32 + 1) / kp1 * (u.abs().ln() - 1.0 / kp1)
}

/// Exact `int_a^b p(t) ln|x - t| dt` for a polynomial `p`.
///
/// The integrand has an integrable singularity at `t = x`; the antiderivative
/// used here is continuous through it, so `x` inside `[a, b]` is fine.
pub fn poly_log_integral(coeffs: &[f64], a: f64, b: f64, x: f64) -> f64 {
    // shift to q(u) = p(u + x), then integrate q(u) ln|u| over [a-x, b-x]
    let n = coeffs.len();
    let mut q = vec![0.0; n];
    for (j, &c) in coeffs.iter().enumerate() {
        // c * (u + x)^j expanded via binomials
        let mut binom = 1.0;
        for k in (0..=j).rev() {
            q[k] += c * binom * x.powi((j - k) as i32);
            // next binomial C(j, k-1) = C(j, k) * k / (j - k + 1)
            if k > 0 {
                binom = binom * (k as f64) / ((j - k + 1) as f64);
            }
        }
    }
    let (lo, hi) = (a - x, b - x);
    q.iter()
        .enumerate()
        .map(|(k, &c)| c * (monomial_log_anti(k, hi) - monomial_log_anti(k, lo)))
        .sum()
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
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
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss-Legendre integral of `f` over `[a, b]` with `n` points.
pub fn gauss_integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(n);
    let c = 0.5 * (b - a);
    let d = 0.5 * (a + b);
    nodes.iter().zip(&weights).map(|(&x, &w)| w * f(c * x + d)).sum::<f64>() * c
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson quadrature with absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, b - a);
    adaptive_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Second antiderivative of `ln|u|`: `B(u) = u^2/2 ln|u| - 3 u^2 / 4`, `B(0) = 0`.
fn double_log_anti(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        0.5 * u * u * u.abs().ln() - 0.75 * u * u
    }
}

/// Exact `int_a^b int_c^d ln|x - y| dy dx`.
pub fn box_log_diff(a: f64, b: f64, c: f64, d: f64) -> f64 {
    double_log_anti(b - c) - double_log_anti(b - d) - double_log_anti(a - c)
        + double_log_anti(a - d)
}

/// Exact `int_a^b int_c^d ln(x + y) dy dx` (requires `x + y > 0` on the box).
pub fn box_log_sum(a: f64, b: f64, c: f64, d: f64) -> f64 {
    double_log_anti(b + d) - double_log_anti(b + c) - double_log_anti(a + d)
        + double_log_anti(a + c)
}
