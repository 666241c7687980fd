//! Rotation of real SH coefficient vectors.
//!
//! Angles follow the intrinsic z-y-z convention: `R = Rz(alpha) Ry(beta) Rz(gamma)`.
//! A matrix `D(R)` maps coefficients of `f` to coefficients of the rotated
//! field `g(x) = f(R^-1 x)`, so `D(R1) D(R2) = D(R1 R2)`.
//!
//! The complex Wigner `d` is evaluated through Jacobi polynomials and moved
//! into the real basis by a fixed unitary change of basis per degree.

use std::sync::OnceLock;

use ndarray::{s, Array2, ArrayViewMut2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sh::basis::n_coeffs;
use crate::signal::{SignalData, SpaceDomain, SpatialSignal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerZyz {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerZyz {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn azimuth(alpha: f64) -> Self {
        Self::new(alpha, 0.0, 0.0)
    }

    /// Rotation matrix `Rz(alpha) Ry(beta) Rz(gamma)`.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        mat_mul(mat_mul(rot_z(self.alpha), rot_y(self.beta)), rot_z(self.gamma))
    }

    /// Angles of `R^-1 = Rz(-gamma) Ry(-beta) Rz(-alpha)`.
    pub fn inverse(&self) -> Self {
        Self::new(-self.gamma, -self.beta, -self.alpha)
    }
}

pub fn rot_z(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

pub fn rot_y(b: f64) -> [[f64; 3]; 3] {
    let (s, c) = b.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

pub fn mat_mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_vec(a: [[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

/// Block-diagonal real rotation matrix for SH coefficients up to `order`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerDMatrix {
    order: usize,
    euler: EulerZyz,
    /// One `(2n+1) x (2n+1)` block per degree `n`.
    blocks: Vec<Array2<f64>>,
}

impl WignerDMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn euler(&self) -> EulerZyz {
        self.euler
    }

    pub fn block(&self, n: usize) -> &Array2<f64> {
        &self.blocks[n]
    }

    /// Dense `((order+1)^2, (order+1)^2)` matrix; off-block entries are zero.
    pub fn matrix(&self) -> Array2<f64> {
        let q = n_coeffs(self.order);
        let mut m = Array2::zeros((q, q));
        for (n, b) in self.blocks.iter().enumerate() {
            let lo = n * n;
            let hi = lo + 2 * n + 1;
            m.slice_mut(s![lo..hi, lo..hi]).assign(b);
        }
        m
    }

    pub fn transpose(&self) -> Self {
        Self {
            order: self.order,
            euler: self.euler.inverse(),
            blocks: self.blocks.iter().map(|b| b.t().to_owned()).collect(),
        }
    }

    /// Left-multiplies every column of `coeffs` (rows = SH channels) in place.
    pub fn apply_real(&self, mut coeffs: ArrayViewMut2<f64>) {
        for (n, b) in self.blocks.iter().enumerate() {
            if n == 0 {
                let g = b[[0, 0]];
                if g != 1.0 {
                    coeffs.row_mut(0).mapv_inplace(|v| v * g);
                }
                continue;
            }
            let lo = n * n;
            let hi = lo + 2 * n + 1;
            let mut view = coeffs.slice_mut(s![lo..hi, ..]);
            let rotated = b.dot(&view);
            view.assign(&rotated);
        }
    }

    pub fn apply_complex(&self, mut coeffs: ArrayViewMut2<Complex64>) {
        for (n, b) in self.blocks.iter().enumerate() {
            let lo = n * n;
            let hi = lo + 2 * n + 1;
            let mut view = coeffs.slice_mut(s![lo..hi, ..]);
            let re = b.dot(&view.mapv(|c| c.re));
            let im = b.dot(&view.mapv(|c| c.im));
            ndarray::Zip::from(&mut view)
                .and(&re)
                .and(&im)
                .for_each(|o, &r, &i| *o = Complex64::new(r, i));
        }
    }

    pub fn apply_vec(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut a = Array2::from_shape_vec((coeffs.len(), 1), coeffs.to_vec())
            .expect("column vector");
        self.apply_real(a.view_mut());
        a.into_raw_vec_and_offset().0
    }
}

/// Rotates every `(channel, frame)` coefficient vector of an SH signal in
/// place. Works in either time or frequency domain.
pub fn rotate_sh(sig: &mut SpatialSignal, d: &WignerDMatrix) -> Result<()> {
    if sig.space_domain() != SpaceDomain::Sh {
        return Err(Error::Dimension("rotation needs an SH-domain signal".into()));
    }
    if sig.sh_order() != d.order() {
        return Err(Error::Dimension(format!(
            "signal order {} does not match rotation order {}",
            sig.sh_order(),
            d.order()
        )));
    }
    match sig.data() {
        SignalData::Real(_) => {
            let x = sig.real_mut().expect("real data");
            for mut ch in x.outer_iter_mut() {
                d.apply_real(ch.view_mut());
            }
        }
        SignalData::Complex(_) => {
            let x = sig.spectrum_mut().expect("complex data");
            for mut ch in x.outer_iter_mut() {
                d.apply_complex(ch.view_mut());
            }
        }
    }
    Ok(())
}

/// Real Wigner-D matrix for the rotation `Rz(alpha) Ry(beta) Rz(gamma)`.
pub fn wigner_d_matrix(order: usize, alpha: f64, beta: f64, gamma: f64) -> WignerDMatrix {
    let euler = EulerZyz::new(alpha, beta, gamma);
    if beta == 0.0 {
        return azimuth_rotation(order, alpha + gamma, euler);
    }
    let blocks = (0..=order)
        .map(|n| real_block(n, alpha, beta, gamma))
        .collect();
    WignerDMatrix {
        order,
        euler,
        blocks,
    }
}

/// Closed-form rotation about z: mixes the `cos(m az)` / `sin(m az)` pair of
/// each `|m|`.
pub fn wigner_d_azimuth(order: usize, alpha: f64) -> WignerDMatrix {
    azimuth_rotation(order, alpha, EulerZyz::azimuth(alpha))
}

fn azimuth_rotation(order: usize, angle: f64, euler: EulerZyz) -> WignerDMatrix {
    let blocks = (0..=order)
        .map(|n| {
            let mut b = Array2::zeros((2 * n + 1, 2 * n + 1));
            b[[n, n]] = 1.0;
            for m in 1..=n {
                let (s, c) = (m as f64 * angle).sin_cos();
                let p = n + m; // cos term
                let q = n - m; // sin term
                b[[p, p]] = c;
                b[[p, q]] = -s;
                b[[q, p]] = s;
                b[[q, q]] = c;
            }
            b
        })
        .collect();
    WignerDMatrix {
        order,
        euler,
        blocks,
    }
}

fn real_block(n: usize, alpha: f64, beta: f64, gamma: f64) -> Array2<f64> {
    let dim = 2 * n + 1;
    let ni = n as i64;
    // complex D^n_{m'm} = e^{-i m' alpha} d^n_{m'm}(beta) e^{-i m gamma}
    let mut dc = Array2::<Complex64>::zeros((dim, dim));
    for mp in -ni..=ni {
        for m in -ni..=ni {
            let d = wigner_small_d(n, mp, m, beta);
            let phase = -(mp as f64) * alpha - (m as f64) * gamma;
            dc[[(mp + ni) as usize, (m + ni) as usize]] = Complex64::from_polar(d, phase);
        }
    }
    let u = real_from_complex(n);
    // real = conj(U) D U^T
    let ucj = u.mapv(|c| c.conj());
    let ut = u.t().to_owned();
    let r = ucj.dot(&dc).dot(&ut);
    r.mapv(|c| c.re)
}

/// Unitary `U` with `Y_real = U Y_complex` for degree `n`, where the complex
/// harmonics follow the Condon-Shortley convention.
fn real_from_complex(n: usize) -> Array2<Complex64> {
    let dim = 2 * n + 1;
    let ni = n as i64;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut u = Array2::<Complex64>::zeros((dim, dim));
    u[[n, n]] = Complex64::new(1.0, 0.0);
    for m in 1..=ni {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let pos = (ni + m) as usize;
        let neg = (ni - m) as usize;
        u[[pos, pos]] = Complex64::new(sign * h, 0.0);
        u[[pos, neg]] = Complex64::new(h, 0.0);
        u[[neg, pos]] = Complex64::new(0.0, -sign * h);
        u[[neg, neg]] = Complex64::new(0.0, h);
    }
    u
}

fn ln_factorial(k: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        let mut v = vec![0.0; 512];
        for i in 1..v.len() {
            v[i] = v[i - 1] + (i as f64).ln();
        }
        v
    });
    match t.get(k) {
        Some(v) => *v,
        None => (1..=k).map(|i| (i as f64).ln()).sum(),
    }
}

/// Jacobi polynomial `P_k^{(a,b)}(x)` by three-term recurrence.
fn jacobi(k: usize, a: f64, b: f64, x: f64) -> f64 {
    let mut p0 = 1.0;
    if k == 0 {
        return p0;
    }
    let mut p1 = (a + 1.0) + (a + b + 2.0) * (x - 1.0) / 2.0;
    for n in 2..=k {
        let n = n as f64;
        let c = 2.0 * n + a + b;
        let a1 = 2.0 * n * (n + a + b) * (c - 2.0);
        let a2 = (c - 1.0) * (c * (c - 2.0) * x + a * a - b * b);
        let a3 = 2.0 * (n + a - 1.0) * (n + b - 1.0) * c;
        let p2 = (a2 * p1 - a3 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Wigner small-d `d^j_{m'm}(beta)`.
pub fn wigner_small_d(j: usize, mp: i64, m: i64, beta: f64) -> f64 {
    let ji = j as i64;
    debug_assert!(mp.abs() <= ji && m.abs() <= ji);
    let mu = (m - mp).unsigned_abs() as usize;
    let nu = (m + mp).unsigned_abs() as usize;
    let s = j - (mu + nu) / 2;
    let xi = if m >= mp || (mp - m) % 2 == 0 { 1.0 } else { -1.0 };
    let ln_norm = 0.5
        * (ln_factorial(s) + ln_factorial(s + mu + nu) - ln_factorial(s + mu) - ln_factorial(s + nu));
    let (sh, ch) = (beta / 2.0).sin_cos();
    xi * ln_norm.exp()
        * sh.powi(mu as i32)
        * ch.powi(nu as i32)
        * jacobi(s, mu as f64, nu as f64, beta.cos())
}
