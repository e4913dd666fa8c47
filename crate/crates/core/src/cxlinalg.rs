//! Small complex linear algebra: eigen-decomposition of 4x4 matrices via the
//! characteristic polynomial, and a scale-normalised matrix exponential for
//! Mobius (graph-coordinate) transfer of 2-planes.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat2c = Matrix2<C64>;
pub type Mat4c = Matrix4<C64>;
pub type Vec4c = Vector4<C64>;

/// Characteristic polynomial coefficients of a 4x4 matrix by the
/// Faddeev-LeVerrier recursion; ascending order, `p[4]` = 1.
pub fn char_poly(m: &Mat4c) -> [C64; 5] {
    let one = C64::new(1.0, 0.0);
    let id = Mat4c::identity();
    let mut c = [C64::new(0.0, 0.0); 5];
    c[4] = one;
    let mut mk = *m;
    let c3 = -mk.trace();
    c[3] = c3;
    mk = m * (mk + id * c3);
    let c2 = -mk.trace() / C64::new(2.0, 0.0);
    c[2] = c2;
    mk = m * (mk + id * c2);
    let c1 = -mk.trace() / C64::new(3.0, 0.0);
    c[1] = c1;
    mk = m * (mk + id * c1);
    c[0] = -mk.trace() / C64::new(4.0, 0.0);
    c
}

/// Durand-Kerner iteration for all roots of a monic polynomial given in
/// ascending coefficients (leading coefficient must be nonzero).
pub fn poly_roots(coeffs: &[C64]) -> Vec<C64> {
    let n = coeffs.len() - 1;
    assert!(n >= 1);
    let lead = coeffs[n];
    let monic: Vec<C64> = coeffs.iter().map(|c| c / lead).collect();
    let eval = |z: C64| -> C64 {
        monic.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
    };
    // Fujiwara root bound for the starting circle
    let radius = 2.0
        * (0..n)
            .map(|k| monic[n - 1 - k].norm().powf(1.0 / (k + 1) as f64))
            .fold(1e-3_f64, f64::max);
    let mut z: Vec<C64> = (0..n)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64 + 0.35;
            C64::from_polar(radius * 0.7, th)
        })
        .collect();
    for _ in 0..500 {
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let mut denom = C64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                continue;
            }
            let step = eval(z[i]) / denom;
            z[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-14 * radius {
            break;
        }
    }
    // Newton polish
    let dmonic: Vec<C64> = monic
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, &c)| c * C64::new(i as f64, 0.0))
        .collect();
    let deval = |zz: C64| -> C64 {
        dmonic.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * zz + c)
    };
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let d = deval(*zi);
            if d.norm() > 1e-300 {
                *zi -= eval(*zi) / d;
            }
        }
    }
    z
}

/// Eigenvalues of a 4x4 complex matrix.
pub fn eigenvalues4(m: &Mat4c) -> [C64; 4] {
    let p = char_poly(m);
    let r = poly_roots(&p);
    [r[0], r[1], r[2], r[3]]
}

/// Unit-norm null vector of a (numerically singular) 4x4 matrix via Gaussian
/// elimination with full pivoting.
pub fn null_vector(m: &Mat4c) -> Vec4c {
    let mut a = *m;
    let mut col_perm = [0usize, 1, 2, 3];
    let mut rank = 0usize;
    for k in 0..4 {
        // full pivot search in the trailing block
        let (mut pi, mut pj, mut pmax) = (k, k, 0.0_f64);
        for i in k..4 {
            for j in k..4 {
                let v = a[(i, j)].norm();
                if v > pmax {
                    pmax = v;
                    pi = i;
                    pj = j;
                }
            }
        }
        if pmax < 1e-10 * (1.0 + a.iter().map(|c| c.norm()).fold(0.0_f64, f64::max)) {
            break;
        }
        a.swap_rows(k, pi);
        a.swap_columns(k, pj);
        col_perm.swap(k, pj);
        for i in (k + 1)..4 {
            let factor = a[(i, k)] / a[(k, k)];
            for j in k..4 {
                let v = a[(k, j)];
                a[(i, j)] -= factor * v;
            }
        }
        rank += 1;
    }
    let free = rank.min(3);
    // back substitution with x[free] = 1, x[j] = 0 for j > free
    let mut x = [C64::new(0.0, 0.0); 4];
    x[free] = C64::new(1.0, 0.0);
    for i in (0..free).rev() {
        let mut s = C64::new(0.0, 0.0);
        for j in (i + 1)..4 {
            s += a[(i, j)] * x[j];
        }
        x[i] = -s / a[(i, i)];
    }
    let mut out = Vec4c::zeros();
    for k in 0..4 {
        out[col_perm[k]] = x[k];
    }
    let n = out.norm();
    out / C64::new(n, 0.0)
}

/// Eigenvector for a given eigenvalue.
pub fn eigenvector4(m: &Mat4c, mu: C64) -> Vec4c {
    null_vector(&(m - Mat4c::identity() * mu))
}

/// exp(M) up to an arbitrary positive scalar factor, computed by scaling and
/// squaring with per-squaring renormalisation. Only valid for use through
/// scale-invariant (Mobius/graph) actions.
pub fn expm_normalized(m: &Mat4c) -> Mat4c {
    // centre the spectrum: the dropped scalar exp(tr/4) is irrelevant
    let mu = m.trace() / C64::new(4.0, 0.0);
    let a = m - Mat4c::identity() * mu;
    let norm = a.iter().map(|c| c.norm()).fold(0.0_f64, f64::max) * 4.0;
    let s = if norm > 0.5 {
        ((norm / 0.5).log2().ceil() as i32).clamp(0, 400)
    } else {
        0
    };
    let a_small = a / C64::new(2.0_f64.powi(s), 0.0);
    // Pade(6,6) approximant of exp
    let mut num = Mat4c::identity();
    let mut den = Mat4c::identity();
    let mut term = Mat4c::identity();
    // coefficients c_k = (6!)^2-free Pade(6) coefficients via recursion
    let mut ck = 1.0;
    for k in 1..=6 {
        ck *= (7.0 - k as f64) / (k as f64 * (13.0 - k as f64));
        term *= a_small;
        let t = term * C64::new(ck, 0.0);
        num += t;
        if k % 2 == 0 {
            den += t;
        } else {
            den -= t;
        }
    }
    let mut g = den.try_inverse().expect("Pade denominator invertible") * num;
    for _ in 0..s {
        g *= g;
        let gn = g.iter().map(|c| c.norm()).fold(0.0_f64, f64::max);
        if gn > 0.0 {
            g /= C64::new(gn, 0.0);
        }
    }
    g
}

/// 2x2 blocks of a 4x4 matrix in (top-left, top-right, bottom-left,
/// bottom-right) order.
pub fn blocks(m: &Mat4c) -> (Mat2c, Mat2c, Mat2c, Mat2c) {
    let a = Mat2c::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let b = Mat2c::new(m[(0, 2)], m[(0, 3)], m[(1, 2)], m[(1, 3)]);
    let c = Mat2c::new(m[(2, 0)], m[(2, 1)], m[(3, 0)], m[(3, 1)]);
    let d = Mat2c::new(m[(2, 2)], m[(2, 3)], m[(3, 2)], m[(3, 3)]);
    (a, b, c, d)
}

pub fn from_blocks(a: &Mat2c, b: &Mat2c, c: &Mat2c, d: &Mat2c) -> Mat4c {
    let mut m = Mat4c::zeros();
    for i in 0..2 {
        for j in 0..2 {
            m[(i, j)] = a[(i, j)];
            m[(i, j + 2)] = b[(i, j)];
            m[(i + 2, j)] = c[(i, j)];
            m[(i + 2, j + 2)] = d[(i, j)];
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cr(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn char_poly_matches_diagonal() {
        let m = Mat4c::from_diagonal(&Vec4c::new(cr(1.0), cr(2.0), cr(-3.0), cr(0.5)));
        let p = char_poly(&m);
        // (x-1)(x-2)(x+3)(x-0.5): check a couple of evaluations
        let eval = |x: f64| {
            p.iter()
                .rev()
                .fold(C64::new(0.0, 0.0), |acc, &c| acc * cr(x) + c)
        };
        assert_relative_eq!(eval(1.0).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(eval(4.0).re, 3.0 * 2.0 * 7.0 * 3.5, epsilon = 1e-10);
    }

    #[test]
    fn eigen_recovers_spectrum_and_vectors() {
        // companion-style matrix with known eigenvalues
        let m = Mat4c::new(
            cr(0.0), cr(1.0), cr(0.0), cr(0.0),
            cr(0.0), cr(0.0), cr(1.0), cr(0.0),
            cr(0.0), cr(0.0), cr(0.0), cr(1.0),
            cr(-24.0), cr(50.0), cr(-35.0), cr(10.0),
        );
        // char poly x^4 -10x^3 +35x^2 -50x +24 = (x-1)(x-2)(x-3)(x-4)
        let mut eigs: Vec<f64> = eigenvalues4(&m).iter().map(|z| z.re).collect();
        eigs.sort_by(f64::total_cmp);
        for (e, want) in eigs.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert_relative_eq!(*e, want, epsilon = 1e-8);
        }
        for want in [1.0, 2.0, 3.0, 4.0] {
            let v = eigenvector4(&m, cr(want));
            let r = m * v - v * cr(want);
            assert!(r.norm() < 1e-8, "eigen residual {}", r.norm());
        }
    }

    #[test]
    fn expm_normalized_matches_series_direction() {
        // For a small matrix, expm_normalized differs from exp(M) by a scalar.
        let m = Mat4c::new(
            cr(0.1), cr(0.2), cr(0.0), cr(0.0),
            cr(-0.3), cr(0.05), cr(0.0), cr(0.0),
            cr(0.0), cr(0.0), cr(-0.2), cr(0.1),
            cr(0.0), cr(0.0), cr(0.0), cr(0.3),
        );
        let g = expm_normalized(&m);
        // brute-force series for exp(M)
        let mut e = Mat4c::identity();
        let mut term = Mat4c::identity();
        for k in 1..30 {
            term = term * m / cr(k as f64);
            e += term;
        }
        // ratio of corresponding entries must be a constant scalar
        let ratio = e[(0, 0)] / g[(0, 0)];
        for i in 0..4 {
            for j in 0..4 {
                assert!((e[(i, j)] - g[(i, j)] * ratio).norm() < 1e-10);
            }
        }
    }
}
