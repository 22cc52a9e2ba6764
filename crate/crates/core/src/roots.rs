//! Scalar root finding and bounded maximization.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ScalarOptions {
    pub xtol: f64,
    pub max_iter: usize,
}

impl Default for ScalarOptions {
    fn default() -> Self {
        Self {
            xtol: 1e-13,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootResult {
    pub root: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn check_bracket(a: f64, b: f64, fa: f64, fb: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite() && fa.is_finite() && fb.is_finite()) {
        return Err(Error::domain("non-finite bracket"));
    }
    if fa.signum() == fb.signum() && fa != 0.0 && fb != 0.0 {
        return Err(Error::domain(format!(
            "no sign change on [{a}, {b}]: f(a) = {fa}, f(b) = {fb}"
        )));
    }
    Ok(())
}

/// Brent's method on a sign-changing bracket.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    opts: ScalarOptions,
) -> Result<RootResult> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    check_bracket(a, b, fa, fb)?;
    if fa == 0.0 {
        return Ok(RootResult { root: a, residual: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(RootResult { root: b, residual: 0.0, iterations: 0 });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for it in 1..=opts.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * opts.xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(RootResult { root: b, residual: fb, iterations: it });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Ok(RootResult { root: b, residual: fb, iterations: opts.max_iter })
}

/// Plain bisection; slower than [`brent`] but trivially robust.
pub fn bisect<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    opts: ScalarOptions,
) -> Result<RootResult> {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let fb = f(b);
    check_bracket(a, b, fa, fb)?;
    if fa == 0.0 {
        return Ok(RootResult { root: a, residual: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(RootResult { root: b, residual: 0.0, iterations: 0 });
    }
    let mut mid = 0.5 * (a + b);
    let mut fm = f(mid);
    for it in 1..=opts.max_iter {
        mid = 0.5 * (a + b);
        fm = f(mid);
        if fm == 0.0 || 0.5 * (b - a) < opts.xtol {
            return Ok(RootResult { root: mid, residual: fm, iterations: it });
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(RootResult { root: mid, residual: fm, iterations: opts.max_iter })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxResult {
    pub argmax: f64,
    pub value: f64,
}

/// Golden-section search for a maximum of a unimodal function on `[lo, hi]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, xtol: f64) -> MaxResult {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > xtol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        MaxResult { argmax: x1, value: f1 }
    } else {
        MaxResult { argmax: x2, value: f2 }
    }
}

/// Uniform scan over `[lo, hi]` with `points` nodes, then golden-section
/// refinement inside the best node's neighbourhood. Endpoints are kept if
/// they beat the refined interior point.
pub fn scan_then_golden<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    points: usize,
    xtol: f64,
) -> MaxResult {
    let points = points.max(3);
    let h = (hi - lo) / (points - 1) as f64;
    let mut best = MaxResult { argmax: lo, value: f(lo) };
    for i in 1..points {
        let x = lo + h * i as f64;
        let v = f(x);
        if v > best.value {
            best = MaxResult { argmax: x, value: v };
        }
    }
    let a = (best.argmax - h).max(lo);
    let b = (best.argmax + h).min(hi);
    let refined = golden_max(&mut f, a, b, xtol);
    if refined.value > best.value {
        refined
    } else {
        best
    }
}
