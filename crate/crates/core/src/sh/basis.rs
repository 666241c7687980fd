//! Real spherical harmonics: ACN ordering, N3D (orthonormal) normalisation,
//! no Condon-Shortley phase.
//!
//! `Y_n^m` for `m > 0` carries `cos(m az)`, for `m < 0` it carries
//! `sin(|m| az)`. Channel `n^2 + n + m` holds degree `n`, order `m`.

use std::f64::consts::PI;
use std::ops::{AddAssign, Mul};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::grid::DirectionGrid;

pub fn n_coeffs(order: usize) -> usize {
    (order + 1) * (order + 1)
}

pub fn acn(n: usize, m: i64) -> usize {
    ((n * n + n) as i64 + m) as usize
}

/// Inverse of [`acn`]: `(degree, order)` of channel `k`.
pub fn degree_order(k: usize) -> (usize, i64) {
    let n = (k as f64).sqrt() as usize;
    // guard against rounding in the square root
    let n = if (n + 1) * (n + 1) <= k { n + 1 } else { n };
    let n = if n * n > k { n - 1 } else { n };
    (n, k as i64 - (n * n + n) as i64)
}

/// Order supported by a channel count, if it is a perfect square.
pub fn order_from_channels(q: usize) -> Option<usize> {
    let n = (q as f64).sqrt().round() as usize;
    (n * n == q && n > 0).then(|| n - 1)
}

/// Orthonormal associated Legendre values `sqrt((2n+1)/4pi (n-m)!/(n+m)!) P_n^m`
/// for `0 <= m <= n <= order`, packed at `n(n+1)/2 + m`.
///
/// `x = cos(colatitude)`, `s = sin(colatitude) >= 0`.
fn normalized_legendre(order: usize, x: f64, s: f64, out: &mut Vec<f64>) {
    let len = (order + 1) * (order + 2) / 2;
    out.clear();
    out.resize(len, 0.0);
    let idx = |n: usize, m: usize| n * (n + 1) / 2 + m;
    let mut sector = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=order {
        if m > 0 {
            let mf = m as f64;
            sector *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
        }
        out[idx(m, m)] = sector;
        if m < order {
            out[idx(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * sector;
        }
        for n in (m + 2)..=order {
            let nf = n as f64;
            let mf = m as f64;
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
            let b = (((nf - 1.0) * (nf - 1.0) - mf * mf) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0))
                .sqrt();
            out[idx(n, m)] = a * (x * out[idx(n - 1, m)] - b * out[idx(n - 2, m)]);
        }
    }
}

/// Evaluates all `(order+1)^2` real SH at one direction into `out`.
pub fn sh_vector_into(order: usize, azimuth: f64, elevation: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), n_coeffs(order));
    let mut leg = Vec::new();
    normalized_legendre(order, elevation.sin(), elevation.cos().max(0.0), &mut leg);
    let sqrt2 = std::f64::consts::SQRT_2;
    for n in 0..=order {
        let base = n * (n + 1) / 2;
        out[acn(n, 0)] = leg[base];
        for m in 1..=n {
            let (sm, cm) = (m as f64 * azimuth).sin_cos();
            let p = sqrt2 * leg[base + m];
            out[acn(n, m as i64)] = p * cm;
            out[acn(n, -(m as i64))] = p * sm;
        }
    }
}

pub fn sh_vector(order: usize, azimuth: f64, elevation: f64) -> Vec<f64> {
    let mut v = vec![0.0; n_coeffs(order)];
    sh_vector_into(order, azimuth, elevation, &mut v);
    v
}

/// SH values sampled on a grid, one row per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ShBasisMatrix {
    matrix: Array2<f64>,
    order: usize,
}

impl ShBasisMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Shape `(n_dirs, (order+1)^2)`.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn n_dirs(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.matrix
    }
}

pub fn sh_basis(grid: &DirectionGrid, order: usize) -> ShBasisMatrix {
    let q = n_coeffs(order);
    let mut matrix = Array2::zeros((grid.n_dirs(), q));
    let mut row = vec![0.0; q];
    for (p, mut out) in matrix.rows_mut().into_iter().enumerate() {
        let (az, el) = grid.direction(p);
        sh_vector_into(order, az, el, &mut row);
        out.iter_mut().zip(&row).for_each(|(o, v)| *o = *v);
    }
    ShBasisMatrix { matrix, order }
}

pub(crate) fn check_grid_resolves(grid: &DirectionGrid, order: usize) -> Result<()> {
    let needed = n_coeffs(order);
    if grid.n_dirs() < needed {
        return Err(Error::UnderdeterminedGrid {
            n_dirs: grid.n_dirs(),
            order,
            needed,
        });
    }
    Ok(())
}

/// Quadrature projection onto SH: `coeff[q, c] = sum_p w_p Y_q(dir_p) values[p, c]`.
///
/// `values` has one row per grid direction. Exact when the grid integrates
/// products up to degree `2 * order`.
pub fn sh_analysis<T>(values: ArrayView2<T>, grid: &DirectionGrid, order: usize) -> Result<Array2<T>>
where
    T: Copy + Default + AddAssign + Mul<f64, Output = T>,
{
    if values.nrows() != grid.n_dirs() {
        return Err(Error::Shape(format!(
            "{} value rows for a grid of {} directions",
            values.nrows(),
            grid.n_dirs()
        )));
    }
    check_grid_resolves(grid, order)?;
    let basis = sh_basis(grid, order);
    Ok(analysis_with_basis(values, &basis, grid.weights()))
}

pub(crate) fn analysis_with_basis<T>(values: ArrayView2<T>, basis: &ShBasisMatrix, weights: &[f64]) -> Array2<T>
where
    T: Copy + Default + AddAssign + Mul<f64, Output = T>,
{
    let q = basis.matrix.ncols();
    let cols = values.ncols();
    let mut out = Array2::from_elem((q, cols), T::default());
    for (p, row) in values.rows().into_iter().enumerate() {
        let w = weights[p];
        for k in 0..q {
            let yw = basis.matrix[[p, k]] * w;
            if yw == 0.0 {
                continue;
            }
            for (o, v) in out.row_mut(k).iter_mut().zip(row.iter()) {
                *o += *v * yw;
            }
        }
    }
    out
}

/// Synthesis `value[p, c] = sum_q Y_q(dir_p) coeff[q, c]`.
pub fn sh_synthesis<T>(coeffs: ArrayView2<T>, grid: &DirectionGrid, order: usize) -> Result<Array2<T>>
where
    T: Copy + Default + AddAssign + Mul<f64, Output = T>,
{
    if coeffs.nrows() != n_coeffs(order) {
        return Err(Error::Shape(format!(
            "{} coefficient rows for order {order}",
            coeffs.nrows()
        )));
    }
    let basis = sh_basis(grid, order);
    Ok(synthesis_with_basis(coeffs, &basis))
}

pub(crate) fn synthesis_with_basis<T>(coeffs: ArrayView2<T>, basis: &ShBasisMatrix) -> Array2<T>
where
    T: Copy + Default + AddAssign + Mul<f64, Output = T>,
{
    let cols = coeffs.ncols();
    let mut out = Array2::from_elem((basis.n_dirs(), cols), T::default());
    for (p, mut orow) in out.rows_mut().into_iter().enumerate() {
        for (k, crow) in coeffs.rows().into_iter().enumerate() {
            let y = basis.matrix[[p, k]];
            if y == 0.0 {
                continue;
            }
            for (o, c) in orow.iter_mut().zip(crow.iter()) {
                *o += *c * y;
            }
        }
    }
    out
}
