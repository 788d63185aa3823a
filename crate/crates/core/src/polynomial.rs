//! Dense real polynomials in ascending-power form: `c[0] + c[1] x + ...`.

use alloc::vec;
use alloc::vec::Vec;

/// Horner evaluation.
pub fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

/// Drops leading (highest-power) coefficients that are negligible relative
/// to the largest one.
fn trimmed(coeffs: &[f64]) -> &[f64] {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut n = coeffs.len();
    while n > 0 && coeffs[n - 1].abs() <= scale * 1e-14 {
        n -= 1;
    }
    &coeffs[..n]
}

/// All real roots of the polynomial in `[lo, hi]`, ascending.
///
/// The critical points (roots of the derivative, found recursively) split
/// the interval into monotone pieces; each sign change is then refined by
/// bisection. Touching roots are reported when the polynomial vanishes at a
/// critical point to within rounding.
pub fn real_roots_in(coeffs: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let c = trimmed(coeffs);
    match c.len() {
        0 | 1 => return Vec::new(),
        2 => {
            let r = -c[0] / c[1];
            return if (lo..=hi).contains(&r) { vec![r] } else { Vec::new() };
        }
        _ => {}
    }
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = scale * 1e-13;

    let mut knots = vec![lo];
    knots.extend(real_roots_in(&derivative(c), lo, hi));
    knots.push(hi);

    let mut roots: Vec<f64> = Vec::new();
    let push = |r: f64, roots: &mut Vec<f64>| {
        if roots.last().is_none_or(|&last| (r - last).abs() > 1e-12) {
            roots.push(r);
        }
    };
    for pair in knots.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (fa, fb) = (eval(c, a), eval(c, b));
        if fa.abs() <= tol {
            push(a, &mut roots);
        }
        if fa.abs() > tol && fb.abs() > tol && (fa < 0.0) != (fb < 0.0) {
            push(bisect(c, a, b, fa), &mut roots);
        }
    }
    if eval(c, hi).abs() <= tol {
        push(hi, &mut roots);
    }
    roots
}

fn bisect(c: &[f64], mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = eval(c, m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Least-squares polynomial fit of the given degree via Householder QR of
/// the Vandermonde matrix. Returns ascending coefficients.
///
/// The caller guarantees at least `degree + 1` distinct abscissae.
pub fn least_squares_fit(xs: &[f64], ys: &[f64], degree: usize) -> Vec<f64> {
    let m = xs.len();
    let n = degree + 1;
    debug_assert!(m >= n && ys.len() == m);
    // Column-major Vandermonde.
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|k| xs.iter().map(|&x| powi(x, k)).collect())
        .collect();
    let mut b = ys.to_vec();

    for k in 0..n {
        let norm = libm::sqrt(a[k][k..].iter().map(|v| v * v).sum::<f64>());
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(k) {
            let dot: f64 = v.iter().zip(&col[k..]).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            col[k..].iter_mut().zip(&v).for_each(|(x, vi)| *x -= f * vi);
        }
        let dot: f64 = v.iter().zip(&b[k..]).map(|(p, q)| p * q).sum();
        let f = 2.0 * dot / vnorm2;
        b[k..].iter_mut().zip(&v).for_each(|(x, vi)| *x -= f * vi);
    }

    // Back substitution on the upper triangle R.
    let mut coeffs = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[j][i] * coeffs[j]).sum();
        coeffs[i] = (b[i] - s) / a[i][i];
    }
    coeffs
}

fn powi(x: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, _| acc * x)
}
