//! Scalar and small-system root finding used throughout the wave construction.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("no sign change over bracket [{0}, {1}]")]
    NoSignChange(f64, f64),
    #[error("root iteration failed to converge after {0} iterations")]
    NoConvergence(usize),
    #[error("objective evaluation failed at {at}: {msg}")]
    EvalFailed { at: f64, msg: String },
}

/// Brent's method on a bracketing interval. `f(a)` and `f(b)` must have
/// opposite signs. Converges to `tol` absolute plus machine-relative slack.
pub fn brent<F: FnMut(f64) -> Result<f64, String>>(
    mut f: F,
    a0: f64,
    b0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64, RootError> {
    let (mut a, mut b) = (a0, b0);
    let mut fa = f(a).map_err(|msg| RootError::EvalFailed { at: a, msg })?;
    let mut fb = f(b).map_err(|msg| RootError::EvalFailed { at: b, msg })?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoSignChange(a0, b0));
    }
    let (mut c, mut fc) = (a, fa);
    let (mut d, mut e) = (b - a, b - a);
    for _ in 0..max_iter {
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
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic / secant step
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
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
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b).map_err(|msg| RootError::EvalFailed { at: b, msg })?;
    }
    Err(RootError::NoConvergence(max_iter))
}

/// Plain bisection; tolerant of `f` being merely sign-consistent.
pub fn bisect<F: FnMut(f64) -> Result<f64, String>>(
    mut f: F,
    a0: f64,
    b0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64, RootError> {
    let (mut a, mut b) = (a0, b0);
    let fa = f(a).map_err(|msg| RootError::EvalFailed { at: a, msg })?;
    let fb = f(b).map_err(|msg| RootError::EvalFailed { at: b, msg })?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoSignChange(a0, b0));
    }
    let sa = fa.signum();
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol {
            return Ok(m);
        }
        let fm = f(m).map_err(|msg| RootError::EvalFailed { at: m, msg })?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Bisection on a boolean predicate: returns the boundary between a `true`
/// region containing `a0` and a `false` region containing `b0`.
pub fn bisect_predicate<F: FnMut(f64) -> bool>(
    mut pred: F,
    a0: f64,
    b0: f64,
    tol: f64,
) -> f64 {
    let (mut a, mut b) = (a0, b0);
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        if pred(m) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Scan `[a, b]` on a uniform grid and return the first subinterval with a
/// sign change; evaluation failures are skipped.
pub fn scan_for_bracket<F: FnMut(f64) -> Option<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    n: usize,
) -> Option<(f64, f64)> {
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let x = a + (b - a) * i as f64 / n as f64;
        if let Some(fx) = f(x) {
            if let Some((xp, fp)) = prev {
                if fp.signum() != fx.signum() {
                    return Some((xp, x));
                }
            }
            prev = Some((x, fx));
        }
    }
    None
}

/// Damped Newton iteration on a 2D system with finite-difference Jacobian.
pub fn newton2<F: FnMut(f64, f64) -> Result<(f64, f64), String>>(
    mut f: F,
    x0: (f64, f64),
    scale: (f64, f64),
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64), RootError> {
    let mut x = x0;
    for it in 0..max_iter {
        let (f1, f2) = f(x.0, x.1).map_err(|msg| RootError::EvalFailed { at: x.0, msg })?;
        let r = (f1 * f1 + f2 * f2).sqrt();
        if r < tol {
            return Ok(x);
        }
        let h1 = 1e-7 * scale.0.max(x.0.abs() * 1e-7);
        let h2 = 1e-7 * scale.1.max(x.1.abs() * 1e-7);
        let (g1, g2) = f(x.0 + h1, x.1).map_err(|msg| RootError::EvalFailed { at: x.0, msg })?;
        let (k1, k2) = f(x.0, x.1 + h2).map_err(|msg| RootError::EvalFailed { at: x.1, msg })?;
        let j11 = (g1 - f1) / h1;
        let j21 = (g2 - f2) / h1;
        let j12 = (k1 - f1) / h2;
        let j22 = (k2 - f2) / h2;
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-300 {
            return Err(RootError::NoConvergence(it));
        }
        let dx1 = -(f1 * j22 - f2 * j12) / det;
        let dx2 = -(j11 * f2 - j21 * f1) / det;
        // backtracking line search
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = (x.0 + lam * dx1, x.1 + lam * dx2);
            if let Ok((c1, c2)) = f(cand.0, cand.1) {
                if (c1 * c1 + c2 * c2).sqrt() < r * (1.0 - 0.25 * lam) + tol {
                    x = cand;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            x = (x.0 + lam * dx1, x.1 + lam * dx2);
        }
    }
    Err(RootError::NoConvergence(max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent(|x| Ok(x * x * x - 2.0), 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((r - 2f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn brent_rejects_bad_bracket() {
        assert!(matches!(
            brent(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12, 100),
            Err(RootError::NoSignChange(_, _))
        ));
    }

    #[test]
    fn newton2_solves_coupled_system() {
        let (x, y) = newton2(
            |x, y| Ok((x * x + y - 3.0, x - y + 1.0)),
            (0.5, 0.5),
            (1.0, 1.0),
            1e-12,
            100,
        )
        .unwrap();
        assert!((x * x + y - 3.0).abs() < 1e-10);
        assert!((x - y + 1.0).abs() < 1e-10);
    }

    #[test]
    fn predicate_bisection_locates_boundary() {
        let b = bisect_predicate(|x| x < std::f64::consts::PI, 0.0, 6.0, 1e-9);
        assert!((b - std::f64::consts::PI).abs() < 1e-8);
    }
}
