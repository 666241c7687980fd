//! Spherical Bessel and Hankel functions.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BesselKind {
    J,
    Y,
    H2,
}

/// `j_0..=j_n_max` at `x >= 0` by Miller's downward recurrence.
pub fn spherical_jn(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let m = (n_max as f64).max(x.ceil());
    let start = (m + 30.0 + (40.0 * m).sqrt()) as usize;
    let (mut hi, mut cur) = (0.0f64, 1e-300f64);
    let mut j0_raw = 0.0;
    let mut j1_raw = 0.0;
    for n in (0..=start).rev() {
        if n <= n_max {
            out[n] = cur;
        }
        if n == 1 {
            j1_raw = cur;
        }
        if n == 0 {
            j0_raw = cur;
            break;
        }
        let next = (2 * n + 1) as f64 / x * cur - hi;
        hi = cur;
        cur = next;
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            hi *= 1e-250;
            j1_raw *= 1e-250;
            for v in out.iter_mut().skip(n) {
                *v *= 1e-250;
            }
        }
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    let scale = if j0.abs() >= j1.abs() { j0 / j0_raw } else { j1 / j1_raw };
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// `y_0..=y_n_max` by upward recurrence; singular at zero.
pub fn spherical_yn(n_max: usize, x: f64) -> Result<Vec<f64>> {
    if x == 0.0 {
        return Err(Error::Singularity("y_n is singular at x = 0".into()));
    }
    let (s, c) = x.sin_cos();
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(-c / x);
    if n_max >= 1 {
        out.push(-c / (x * x) - s / x);
    }
    for n in 1..n_max {
        let v = (2 * n + 1) as f64 / x * out[n] - out[n - 1];
        out.push(v);
    }
    Ok(out)
}

/// `h2_n = j_n - i y_n`.
pub fn spherical_h2n(n_max: usize, x: f64) -> Result<Vec<Complex64>> {
    let j = spherical_jn(n_max, x);
    let y = spherical_yn(n_max, x).map_err(|_| Error::Singularity("h2_n is singular at x = 0".into()))?;
    Ok(j.iter().zip(&y).map(|(a, b)| Complex64::new(*a, -b)).collect())
}

/// Dispatch over the three kinds, complex-valued for uniformity.
pub fn spherical_bessel(kind: BesselKind, n_max: usize, x: f64) -> Result<Vec<Complex64>> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Argument(format!("argument {x} must be finite and non-negative")));
    }
    Ok(match kind {
        BesselKind::J => spherical_jn(n_max, x).into_iter().map(Complex64::from).collect(),
        BesselKind::Y => spherical_yn(n_max, x)?.into_iter().map(Complex64::from).collect(),
        BesselKind::H2 => spherical_h2n(n_max, x)?,
    })
}

/// Derivatives from values `f_0..=f_{n_max+1}`: `f_n' = f_{n-1} - (n+1)/x f_n`,
/// `f_0' = -f_1`.
pub fn derivative<T>(f: &[T], x: f64) -> Vec<T>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::Neg<Output = T>,
{
    let n_max = f.len() - 2;
    (0..=n_max)
        .map(|n| {
            if n == 0 {
                -f[1]
            } else {
                f[n - 1] - f[n] * ((n + 1) as f64 / x)
            }
        })
        .collect()
}

/// Legendre polynomials `P_0..=P_n_max` at `t`.
pub fn legendre_p(n_max: usize, t: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(n_max + 1);
    p.push(1.0);
    if n_max >= 1 {
        p.push(t);
    }
    for n in 1..n_max {
        let v = ((2 * n + 1) as f64 * t * p[n] - n as f64 * p[n - 1]) / (n + 1) as f64;
        p.push(v);
    }
    p
}
