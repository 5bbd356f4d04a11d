//! Eigenvalues of a real 4x4 matrix: Faddeev-LeVerrier characteristic
//! polynomial, Durand-Kerner root iteration, Newton polishing.

use num_complex::Complex64;

use crate::dynamics::Mat4;

/// Monic characteristic polynomial coefficients `[c3, c2, c1, c0]` of
/// `s^4 + c3 s^3 + c2 s^2 + c1 s + c0`.
pub(crate) fn char_poly4(a: &Mat4) -> [f64; 4] {
    let mut coeffs = [0.0; 4];
    // M_k = A M_{k-1} + c_{n-k+1} I, c_{n-k} = -tr(A M_k) / k
    let mut m = [[0.0; 4]; 4];
    let mut c_prev = 1.0;
    for k in 1..=4 {
        let mut next = mat_mul(a, &m);
        for (i, row) in next.iter_mut().enumerate() {
            row[i] += c_prev;
        }
        m = next;
        let am = mat_mul(a, &m);
        let tr: f64 = (0..4).map(|i| am[i][i]).sum();
        c_prev = -tr / k as f64;
        coeffs[k - 1] = c_prev;
    }
    coeffs
}

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn horner(coeffs: &[f64; 4], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(1.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

pub(crate) fn eigenvalues4(a: &Mat4) -> [Complex64; 4] {
    let coeffs = char_poly4(a);
    // Cauchy bound on root magnitude
    let bound = 1.0 + coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let seed = Complex64::new(0.4, 0.9);
    let mut roots = [Complex64::new(0.0, 0.0); 4];
    let mut z = Complex64::new(1.0, 0.0);
    for r in roots.iter_mut() {
        *r = z * bound * 0.5;
        z *= seed;
    }

    for _ in 0..1000 {
        let mut delta = 0.0f64;
        for i in 0..4 {
            let (p, _) = horner(&coeffs, roots[i]);
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..4 {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() == 0.0 {
                continue;
            }
            let step = p / denom;
            roots[i] -= step;
            delta = delta.max(step.norm() / roots[i].norm().max(1.0));
        }
        if delta < 1e-15 {
            break;
        }
    }

    for r in roots.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(&coeffs, *r);
            if dp.norm() < 1e-300 {
                break;
            }
            let step = p / dp;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            *r -= step;
        }
    }

    // A real polynomial has real roots or conjugate pairs; enforce that
    // exactly so callers can rely on it.
    let tol = 1e-9 * bound;
    let mut used = [false; 4];
    for i in 0..4 {
        if used[i] {
            continue;
        }
        if roots[i].im.abs() <= tol {
            roots[i].im = 0.0;
            used[i] = true;
            continue;
        }
        let partner = (0..4)
            .filter(|&j| j != i && !used[j])
            .min_by(|&j, &k| {
                let dj = (roots[j] - roots[i].conj()).norm();
                let dk = (roots[k] - roots[i].conj()).norm();
                dj.total_cmp(&dk)
            });
        if let Some(j) = partner {
            let re = 0.5 * (roots[i].re + roots[j].re);
            let im = 0.5 * (roots[i].im.abs() + roots[j].im.abs());
            roots[i] = Complex64::new(re, im);
            roots[j] = Complex64::new(re, -im);
            used[j] = true;
        }
        used[i] = true;
    }

    roots.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    roots
}
