//! Real nonsymmetric eigenvalues: Hessenberg reduction and Francis
//! double-shift QR, with an inverse-iteration residual check per eigenvalue.

use num_complex::Complex64;

use crate::{Error, Result};

pub const MAX_EIGEN_DIM: usize = 32;
const MAX_SWEEPS: usize = 60;
const RESIDUAL_TOL: f64 = 1e-8;

fn dump(a: &[f64], m: usize) -> String {
    let rows: Vec<String> = a
        .chunks_exact(m)
        .map(|r| format!("[{}]", r.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Eigenvalues of a row-major `m×m` real matrix, each verified by recovering
/// an eigenvector with `‖Av − λv‖ < 1e-8 · max(1, ‖A‖)`.
pub fn eigen_spectrum(a: &[f64], m: usize) -> Result<Vec<Complex64>> {
    if m == 0 || m > MAX_EIGEN_DIM || a.len() != m * m {
        return Err(Error::shape(
            "eigen_spectrum",
            format!("need 1 ≤ m ≤ {MAX_EIGEN_DIM} and m² entries, got m={m}, {}", a.len()),
        ));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric { op: "eigen_spectrum", detail: format!("non-finite matrix {}", dump(a, m)) });
    }
    let mut h: Vec<Vec<f64>> = a.chunks_exact(m).map(<[f64]>::to_vec).collect();
    hessenberg(&mut h);
    let (wr, wi) = hqr(&mut h).ok_or_else(|| Error::NoConvergence { iterations: MAX_SWEEPS, matrix: dump(a, m) })?;
    let eig: Vec<Complex64> = wr.into_iter().zip(wi).map(|(re, im)| Complex64::new(re, im)).collect();
    let scale = a.chunks_exact(m).map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(1.0, f64::max);
    for &lambda in &eig {
        let res = eigenpair_residual(a, m, lambda);
        if !(res < RESIDUAL_TOL * scale) {
            return Err(Error::Numeric {
                op: "eigen_spectrum",
                detail: format!("eigenpair residual {res:e} for λ = {lambda} of {}", dump(a, m)),
            });
        }
    }
    Ok(eig)
}

/// Similarity reduction to upper Hessenberg form by stabilized elimination.
fn hessenberg(a: &mut [Vec<f64>]) {
    let n = a.len();
    for m in 1..n.saturating_sub(1) {
        let mut x = 0.0f64;
        let mut piv = m;
        for j in m..n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                piv = j;
            }
        }
        if piv != m {
            a.swap(piv, m);
            for row in a.iter_mut() {
                row.swap(piv, m);
            }
        }
        if x != 0.0 {
            for i in m + 1..n {
                let y = a[i][m - 1] / x;
                if y != 0.0 {
                    for j in m..n {
                        a[i][j] -= y * a[m][j];
                    }
                    for row in a.iter_mut() {
                        row[m] += y * row[i];
                    }
                }
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        for x in row.iter_mut().take(i.saturating_sub(1)) {
            *x = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Francis double-shift QR on a Hessenberg matrix. `None` if some eigenvalue
/// needs more than `MAX_SWEEPS` sweeps.
#[allow(clippy::many_single_char_names, unused_assignments)]
fn hqr(a: &mut [Vec<f64>]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = a.len();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    let (mut p, mut q, mut r) = (0.0f64, 0.0f64, 0.0f64);
    while nn >= 0 {
        let nu = nn as usize;
        let mut its = 0;
        loop {
            let mut l = nu;
            while l >= 1 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[nu - 1][nu - 1];
            let mut w = a[nu][nu - 1] * a[nu - 1][nu];
            if l == nu - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[nu - 1] = x + z;
                    wr[nu] = if z != 0.0 { x - w / z } else { x + z };
                    wi[nu - 1] = 0.0;
                    wi[nu] = 0.0;
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == MAX_SWEEPS {
                return None;
            }
            if its > 0 && its % 10 == 0 {
                // Exceptional shift.
                t += x;
                for i in 0..=nu {
                    a[i][i] -= x;
                }
                let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nu - 2;
            let mut z;
            loop {
                z = a[m][m];
                let rr = x - z;
                let s = y - z;
                p = (rr * s - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - rr - s;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = if k != nu - 1 { a[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[k][j] + q * a[k + 1][j];
                        if k != nu - 1 {
                            pp += r * a[k + 2][j];
                            a[k + 2][j] -= pp * z;
                        }
                        a[k + 1][j] -= pp * y;
                        a[k][j] -= pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for row in a.iter_mut().take(mmin + 1).skip(l) {
                        let mut pp = x * row[k] + y * row[k + 1];
                        if k != nu - 1 {
                            pp += z * row[k + 2];
                            row[k + 2] -= pp * r;
                        }
                        row[k + 1] -= pp * q;
                        row[k] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Some((wr, wi))
}

/// Smallest `‖Av − λv‖` found by a few inverse-iteration steps at shift `λ`, `‖v‖ = 1`.
fn eigenpair_residual(a: &[f64], m: usize, lambda: Complex64) -> f64 {
    let tiny = f64::EPSILON * a.iter().map(|x| x.abs()).fold(1.0, f64::max);
    let mut lu: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    for i in 0..m {
        lu[i * m + i] -= lambda;
    }
    let mut perm: Vec<usize> = (0..m).collect();
    for c in 0..m {
        let piv = (c..m).max_by(|&i, &j| lu[i * m + c].norm().total_cmp(&lu[j * m + c].norm())).unwrap();
        if piv != c {
            for j in 0..m {
                lu.swap(piv * m + j, c * m + j);
            }
            perm.swap(piv, c);
        }
        if lu[c * m + c].norm() < tiny {
            lu[c * m + c] = Complex64::new(tiny, 0.0);
        }
        for i in c + 1..m {
            let f = lu[i * m + c] / lu[c * m + c];
            lu[i * m + c] = f;
            for j in c + 1..m {
                let u = lu[c * m + j];
                lu[i * m + j] -= f * u;
            }
        }
    }
    let solve = |rhs: &[Complex64]| -> Vec<Complex64> {
        let mut x: Vec<Complex64> = perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..m {
            for j in 0..i {
                let l = lu[i * m + j];
                let xj = x[j];
                x[i] -= l * xj;
            }
        }
        for i in (0..m).rev() {
            for j in i + 1..m {
                let u = lu[i * m + j];
                let xj = x[j];
                x[i] -= u * xj;
            }
            x[i] /= lu[i * m + i];
        }
        x
    };
    let normalize = |v: &mut Vec<Complex64>| {
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|z| *z /= n);
    };
    let residual = |v: &[Complex64]| {
        (0..m)
            .map(|i| {
                let av: Complex64 = (0..m).map(|j| v[j] * a[i * m + j]).sum();
                (av - lambda * v[i]).norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut v: Vec<Complex64> = (0..m).map(|i| Complex64::new(1.0 + 0.1 * i as f64, 0.05 * i as f64)).collect();
    let mut best = f64::INFINITY;
    for _ in 0..4 {
        v = solve(&v);
        if v.iter().any(|z| !z.is_finite()) {
            break;
        }
        normalize(&mut v);
        best = best.min(residual(&v));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn sorted(mut e: Vec<Complex64>) -> Vec<Complex64> {
        e.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        e
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn swap_matrix() {
        let e = sorted(eigen_spectrum(&[0.0, 1.0, 1.0, 0.0], 2).unwrap());
        assert!(close(e[0], Complex64::new(-1.0, 0.0), 1e-12));
        assert!(close(e[1], Complex64::new(1.0, 0.0), 1e-12));
    }

    #[test]
    fn companion_with_imaginary_pair() {
        // λ² + 0.25 = 0
        let e = sorted(eigen_spectrum(&[0.0, -0.25, 1.0, 0.0], 2).unwrap());
        assert!(close(e[0], Complex64::new(0.0, -0.5), 1e-12));
        assert!(close(e[1], Complex64::new(0.0, 0.5), 1e-12));
    }

    #[test]
    fn scalar_and_triangular() {
        assert_eq!(eigen_spectrum(&[0.3], 1).unwrap(), vec![Complex64::new(0.3, 0.0)]);
        let e = sorted(eigen_spectrum(&[1.0, 5.0, -2.0, 0.0, 2.0, 7.0, 0.0, 0.0, 3.0], 3).unwrap());
        for (z, want) in e.iter().zip([1.0, 2.0, 3.0]) {
            assert!(close(*z, Complex64::new(want, 0.0), 1e-12));
        }
    }

    #[test]
    fn nilpotent_block_converges() {
        let mut a = vec![0.0; 16];
        for i in 1..4 {
            a[i * 4 + i - 1] = 1.0;
        }
        let e = eigen_spectrum(&a, 4).unwrap();
        assert!(e.iter().all(|z| z.norm() < 1e-3));
    }

    /// Characteristic polynomial by Faddeev–LeVerrier; returns c with
    /// χ(λ) = λ^m + c[1] λ^{m−1} + … + c[m].
    fn charpoly(a: &[f64], m: usize) -> Vec<f64> {
        let mut c = vec![1.0];
        let mut mk = vec![0.0; m * m];
        for k in 1..=m {
            // M_k = A M_{k−1} + c_{k−1} I
            let mut next = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    next[i * m + j] = (0..m).map(|l| a[i * m + l] * mk[l * m + j]).sum::<f64>();
                }
                next[i * m + i] += c[k - 1];
            }
            mk = next;
            let tr: f64 = (0..m).map(|i| (0..m).map(|l| a[i * m + l] * mk[l * m + i]).sum::<f64>()).sum();
            c.push(-tr / k as f64);
        }
        c
    }

    #[test]
    fn eigenvalues_are_roots_of_characteristic_polynomial() {
        let mut rng = Rng::new(21);
        for m in 1..=8 {
            for _ in 0..20 {
                let a: Vec<f64> = (0..m * m).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let e = eigen_spectrum(&a, m).unwrap();
                assert_eq!(e.len(), m);
                let c = charpoly(&a, m);
                for z in &e {
                    let val = c.iter().fold(Complex64::new(0.0, 0.0), |acc, &ci| acc * z + ci);
                    assert!(val.norm() < 1e-9, "m={m} χ({z}) = {val}");
                }
                let trace: f64 = (0..m).map(|i| a[i * m + i]).sum();
                let sum: Complex64 = e.iter().sum();
                assert!((sum.re - trace).abs() < 1e-10 && sum.im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn companion_roots_match_polynomial() {
        // companion(a) has χ(λ) = λ^m − a_1 λ^{m−1} − … − a_m
        let mut rng = Rng::new(5);
        for m in 1..=4 {
            let coef: Vec<f64> = (0..m).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let mut a = vec![0.0; m * m];
            a[..m].copy_from_slice(&coef);
            for i in 1..m {
                a[i * m + i - 1] = 1.0;
            }
            for z in eigen_spectrum(&a, m).unwrap() {
                let tail: Complex64 = coef.iter().enumerate().map(|(i, &c)| z.powu((m - 1 - i) as u32) * c).sum();
                let val = z.powu(m as u32) - tail;
                assert!(val.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(eigen_spectrum(&[1.0, 2.0, 3.0], 2), Err(Error::Shape { .. })));
        assert!(matches!(eigen_spectrum(&[f64::NAN], 1), Err(Error::Numeric { .. })));
        assert!(eigen_spectrum(&vec![0.0; 33 * 33], 33).is_err());
    }
}
