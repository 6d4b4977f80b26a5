use thiserror::Error;

#[derive(Debug, Clone, Copy, Error, PartialEq)]
pub enum RootError {
    #[error("f({lo}) and f({hi}) have the same sign")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("invalid bracket ({lo}, {hi})")]
    InvalidBracket { lo: f64, hi: f64 },
}

/// Brent's method on a sign-changing bracket.
///
/// Stops when `|f(root)| <= tol` or the bracket is narrower than `tol`.
/// Every iteration keeps a valid bracket, so the method never does worse
/// than bisection.
pub fn solve_scalar_root<F>(mut f: F, bracket: (f64, f64), tol: f64) -> Result<f64, RootError>
where
    F: FnMut(f64) -> f64,
{
    let (lo, hi) = bracket;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(RootError::InvalidBracket { lo, hi });
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(RootError::NoSignChange { lo, hi });
    }

    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
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
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if fb.abs() <= tol || xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // Inverse quadratic interpolation, or secant when only two
            // distinct points are available.
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Ok(b)
}
