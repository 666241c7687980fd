//! HRTF sets: container I/O, resampling, SH projection and MagLS.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::{s, Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::DirectionGrid;
use crate::sh::basis::check_grid_resolves;
use crate::sh::{n_coeffs, sh_basis};

pub const MAGIC: &[u8; 4] = b"SHRM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct HrtfSet {
    grid: Arc<DirectionGrid>,
    irs: Array3<f64>,
    fs: f64,
}

impl HrtfSet {
    /// `irs` has shape `(n_dirs, 2, taps)`, left ear first.
    pub fn new(grid: Arc<DirectionGrid>, irs: Array3<f64>, fs: f64) -> Result<Self> {
        let (d, ears, taps) = irs.dim();
        if d != grid.n_dirs() {
            return Err(Error::Shape(format!(
                "{d} impulse responses for a grid of {} directions",
                grid.n_dirs()
            )));
        }
        if ears != 2 {
            return Err(Error::Shape(format!("{ears} ears, expected 2")));
        }
        if taps == 0 {
            return Err(Error::Argument("impulse responses have no taps".into()));
        }
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(Error::Argument(format!("sample rate {fs} must be positive")));
        }
        Ok(Self { grid, irs, fs })
    }

    pub fn grid(&self) -> &Arc<DirectionGrid> {
        &self.grid
    }

    pub fn irs(&self) -> &Array3<f64> {
        &self.irs
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn n_dirs(&self) -> usize {
        self.irs.dim().0
    }

    pub fn taps(&self) -> usize {
        self.irs.dim().2
    }

    /// Transfer functions `(n_dirs, 2, nfft/2+1)`.
    pub fn spectra(&self, nfft: usize) -> Result<Array3<Complex64>> {
        if nfft < self.taps() {
            return Err(Error::Argument(format!(
                "nfft {nfft} is shorter than {} taps",
                self.taps()
            )));
        }
        let bins = fft::n_bins(nfft);
        let mut out = Array3::zeros((self.n_dirs(), 2, bins));
        let mut buf = vec![Complex64::default(); bins];
        for p in 0..self.n_dirs() {
            for e in 0..2 {
                let ir: Vec<f64> = self.irs.slice(s![p, e, ..]).to_vec();
                fft::rfft_into(&ir, nfft, &mut buf);
                out.slice_mut(s![p, e, ..])
                    .iter_mut()
                    .zip(&buf)
                    .for_each(|(o, v)| *o = *v);
            }
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.n_dirs();
        let taps = self.taps();
        let mut out = Vec::with_capacity(HEADER_LEN + 24 * d + 8 * d * taps);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.fs.round() as u32).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&(taps as u32).to_le_bytes());
        for v in self.grid.azimuths().iter().chain(self.grid.elevations()).chain(self.grid.weights()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.irs.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_hrtf(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::format(
                self.pos,
                format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            )),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let start = self.pos;
        let raw = self.take(n * 8, what)?;
        let vals: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(start + 8 * i, format!("non-finite {what} value")));
        }
        Ok(vals)
    }
}

/// Parses an HRTF container (little-endian, see [`HrtfSet::to_bytes`]).
pub fn load_hrtf(bytes: &[u8]) -> Result<HrtfSet> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected SHRM"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let fs = r.u32("sample rate")?;
    if fs == 0 {
        return Err(Error::format(8, "sample rate is zero"));
    }
    let d = r.u32("direction count")? as usize;
    if d == 0 {
        return Err(Error::format(12, "no directions"));
    }
    let taps = r.u32("tap count")? as usize;
    if taps == 0 {
        return Err(Error::format(16, "no taps"));
    }
    let az = r.f64s(d, "azimuth")?;
    let el = r.f64s(d, "elevation")?;
    let weights_at = r.pos;
    let w = r.f64s(d, "weight")?;
    let n_ir = d
        .checked_mul(2 * taps)
        .ok_or_else(|| Error::format(r.pos, "impulse response block too large"))?;
    let ir_at = r.pos;
    let raw = r.take(
        n_ir.checked_mul(4)
            .ok_or_else(|| Error::format(r.pos, "impulse response block too large"))?,
        "impulse responses",
    )?;
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let mut irs = Vec::with_capacity(n_ir);
    for (i, c) in raw.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(c.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(ir_at + 4 * i, "non-finite impulse response sample"));
        }
        irs.push(v as f64);
    }
    let grid = DirectionGrid::new(az, el, w).map_err(|e| Error::format(weights_at, e.to_string()))?;
    let irs = Array3::from_shape_vec((d, 2, taps), irs).expect("length checked");
    HrtfSet::new(Arc::new(grid), irs, fs as f64)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Band-limited resampling preserving each transfer function below the
/// lower Nyquist frequency. Output length is `ceil(taps * ratio)`.
pub fn resample_hrtf(set: &HrtfSet, desired_fs: f64) -> Result<HrtfSet> {
    if !(desired_fs > 0.0) || !desired_fs.is_finite() {
        return Err(Error::Argument(format!("target rate {desired_fs} must be positive")));
    }
    if desired_fs == set.fs {
        return Ok(set.clone());
    }
    let (fin, fout) = (set.fs.round(), desired_fs.round());
    if (fin - set.fs).abs() > 1e-9 || (fout - desired_fs).abs() > 1e-9 {
        return Err(Error::Argument("resampling needs integer sample rates".into()));
    }
    let g = gcd(fin as u64, fout as u64);
    let (p, q) = ((fout as u64 / g) as usize, (fin as u64 / g) as usize);
    let taps = set.taps();
    let new_taps = (taps as f64 * desired_fs / set.fs).ceil() as usize;
    // padded lengths in ratio p:q with room against circular wrap
    let mut n_in = (2 * taps).div_ceil(q) * q;
    while n_in % 2 != 0 || (n_in / q * p) % 2 != 0 {
        n_in += q;
    }
    let n_out = n_in / q * p;
    let (bins_in, bins_out) = (fft::n_bins(n_in), fft::n_bins(n_out));
    let common = bins_in.min(bins_out);
    let mut irs = Array3::zeros((set.n_dirs(), 2, new_taps));
    let mut spec_out = vec![Complex64::default(); bins_out];
    let mut time = vec![0.0; n_out];
    for dir in 0..set.n_dirs() {
        for e in 0..2 {
            let ir: Vec<f64> = set.irs.slice(s![dir, e, ..]).to_vec();
            let spec = fft::rfft(&ir, n_in);
            spec_out.iter_mut().for_each(|v| *v = Complex64::default());
            spec_out[..common].copy_from_slice(&spec[..common]);
            if bins_out < bins_in {
                // new Nyquist bin keeps only its real part
                spec_out[bins_out - 1].im = 0.0;
            }
            fft::irfft_into(&spec_out, n_out, &mut time);
            irs.slice_mut(s![dir, e, ..])
                .iter_mut()
                .zip(&time)
                .for_each(|(o, v)| *o = *v);
        }
    }
    HrtfSet::new(set.grid.clone(), irs, desired_fs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShHrtfMode {
    Ls,
    MagLs { fc: f64 },
}

/// SH-domain HRTF coefficients `((N+1)^2, 2, nfft/2+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShHrtf {
    coeffs: Array3<Complex64>,
    order: usize,
    mode: ShHrtfMode,
    nfft: usize,
    fs: f64,
}

impl ShHrtf {
    pub fn new(coeffs: Array3<Complex64>, order: usize, mode: ShHrtfMode, nfft: usize, fs: f64) -> Result<Self> {
        let (q, ears, bins) = coeffs.dim();
        if q != n_coeffs(order) || ears != 2 || bins != fft::n_bins(nfft) {
            return Err(Error::Shape(format!(
                "coefficients {q}x{ears}x{bins} do not fit order {order}, nfft {nfft}"
            )));
        }
        Ok(Self {
            coeffs,
            order,
            mode,
            nfft,
            fs,
        })
    }

    pub fn coeffs(&self) -> &Array3<Complex64> {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn mode(&self) -> ShHrtfMode {
        self.mode
    }

    pub fn nfft(&self) -> usize {
        self.nfft
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn n_bins(&self) -> usize {
        self.coeffs.dim().2
    }

    pub fn bin_frequencies(&self) -> Vec<f64> {
        fft::bin_frequencies(self.nfft, self.fs)
    }

    /// Keeps the first `(order+1)^2` coefficients.
    pub fn truncate(&self, order: usize) -> Result<Self> {
        if order > self.order {
            return Err(Error::Dimension(format!(
                "cannot raise HRTF order {} to {order}",
                self.order
            )));
        }
        Ok(Self {
            coeffs: self.coeffs.slice(s![..n_coeffs(order), .., ..]).to_owned(),
            order,
            ..self.clone()
        })
    }

    /// Transfer functions `(n_dirs, 2, bins)` synthesised on `grid`.
    pub fn synthesize(&self, grid: &DirectionGrid) -> Array3<Complex64> {
        let y = sh_basis(grid, self.order).into_inner();
        let mut out = Array3::zeros((grid.n_dirs(), 2, self.n_bins()));
        for e in 0..2 {
            let c = self.coeffs.index_axis(Axis(1), e);
            let (re, im) = split(c.view());
            let (ore, oim) = (y.dot(&re), y.dot(&im));
            let mut dst = out.index_axis_mut(Axis(1), e);
            ndarray::Zip::from(&mut dst)
                .and(&ore)
                .and(&oim)
                .for_each(|o, &a, &b| *o = Complex64::new(a, b));
        }
        out
    }
}

fn split(x: ndarray::ArrayView2<Complex64>) -> (Array2<f64>, Array2<f64>) {
    (x.mapv(|v| v.re), x.mapv(|v| v.im))
}

/// Weighted least-squares projector `(Y^T W Y)^{-1} Y^T W`, shape `(Q, D)`,
/// together with the basis `Y` `(D, Q)`.
pub(crate) fn wls_projector(grid: &DirectionGrid, order: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    check_grid_resolves(grid, order)?;
    let y = sh_basis(grid, order).into_inner();
    let mut ytw = y.t().to_owned();
    for (mut col, w) in ytw.columns_mut().into_iter().zip(grid.weights()) {
        col.mapv_inplace(|v| v * w);
    }
    let gram = ytw.dot(&y);
    let q = gram.nrows();
    let g = DMatrix::from_fn(q, q, |i, j| gram[[i, j]]);
    let chol = g.cholesky().ok_or_else(|| {
        Error::IllConditioned(format!("grid does not resolve order {order}: Gram matrix is singular"))
    })?;
    let rhs = DMatrix::from_fn(q, ytw.ncols(), |i, j| ytw[[i, j]]);
    let sol = chol.solve(&rhs);
    let proj = Array2::from_shape_fn((q, ytw.ncols()), |(i, j)| sol[(i, j)]);
    Ok((proj, y))
}

/// Decode-side sign convention of the binaural inner product. With real
/// SH the conjugate basis equals the basis, so the coefficient map is the
/// identity; it is kept as the single place where the convention lives.
fn apply_decode_convention(_coeffs: &mut Array3<Complex64>) {}

/// Weighted least-squares SH projection of the HRTF at every bin.
pub fn project_ls(set: &HrtfSet, order: usize, nfft: usize) -> Result<ShHrtf> {
    let (proj, _) = wls_projector(set.grid(), order)?;
    let spectra = set.spectra(nfft)?;
    let mut coeffs = project_spectra(&proj, &spectra);
    apply_decode_convention(&mut coeffs);
    ShHrtf::new(coeffs, order, ShHrtfMode::Ls, nfft, set.fs)
}

fn project_spectra(proj: &Array2<f64>, spectra: &Array3<Complex64>) -> Array3<Complex64> {
    let (_, _, bins) = spectra.dim();
    let mut coeffs = Array3::zeros((proj.nrows(), 2, bins));
    let ears: Vec<Array2<Complex64>> = (0..2)
        .into_par_iter()
        .map(|e| {
            let h = spectra.index_axis(Axis(1), e);
            let (re, im) = split(h);
            let (a, b) = (proj.dot(&re), proj.dot(&im));
            ndarray::Zip::from(&a).and(&b).map_collect(|&x, &y| Complex64::new(x, y))
        })
        .collect();
    for (e, c) in ears.into_iter().enumerate() {
        coeffs.index_axis_mut(Axis(1), e).assign(&c);
    }
    coeffs
}

/// Crossover defaults per order; other orders follow `N c / (2 pi a)`
/// with a = 8.5 cm, clamped to [1.2, 5.0] kHz.
pub fn default_fc(order: usize) -> f64 {
    match order {
        1 => 1200.0,
        3 => 2000.0,
        5 => 3500.0,
        7 => 4800.0,
        9 => 5000.0,
        n => (n as f64 * crate::ism::DEFAULT_SPEED_OF_SOUND / (2.0 * std::f64::consts::PI * 0.085))
            .clamp(1200.0, 5000.0),
    }
}

/// Magnitude least squares: LS up to `fc`, then ascending-frequency phase
/// continuation. The Nyquist bin stays LS since it must be real.
pub fn magls(set: &HrtfSet, order: usize, fc: f64, nfft: usize) -> Result<ShHrtf> {
    if !(fc > 0.0 && fc < set.fs / 2.0) {
        return Err(Error::Argument(format!(
            "crossover {fc} Hz outside (0, {})",
            set.fs / 2.0
        )));
    }
    let (proj, y) = wls_projector(set.grid(), order)?;
    let spectra = set.spectra(nfft)?;
    let mut coeffs = project_spectra(&proj, &spectra);
    let freqs = fft::bin_frequencies(nfft, set.fs);
    let bins = freqs.len();
    let first = freqs.iter().position(|&f| f > fc).unwrap_or(bins);
    let last = bins - 1;
    if first >= 1 && first < last {
        let ears: Vec<Vec<(usize, Vec<Complex64>)>> = (0..2)
            .into_par_iter()
            .map(|e| {
                let mut h: Vec<Complex64> = coeffs.slice(s![.., e, first - 1]).to_vec();
                let mut out = Vec::with_capacity(last - first);
                let d = y.nrows();
                let mut target = vec![Complex64::default(); d];
                for k in first..last {
                    for (p, t) in target.iter_mut().enumerate() {
                        let est: Complex64 = y.row(p).iter().zip(&h).map(|(a, b)| b * *a).sum();
                        let mag = spectra[[p, e, k]].norm();
                        *t = if est.norm() > 0.0 {
                            Complex64::from_polar(mag, est.arg())
                        } else {
                            Complex64::new(mag, 0.0)
                        };
                    }
                    h = proj
                        .rows()
                        .into_iter()
                        .map(|row| row.iter().zip(&target).map(|(a, t)| t * *a).sum())
                        .collect();
                    out.push((k, h.clone()));
                }
                out
            })
            .collect();
        for (e, rows) in ears.into_iter().enumerate() {
            for (k, h) in rows {
                coeffs
                    .slice_mut(s![.., e, k])
                    .iter_mut()
                    .zip(h)
                    .for_each(|(o, v)| *o = v);
            }
        }
    }
    apply_decode_convention(&mut coeffs);
    ShHrtf::new(coeffs, order, ShHrtfMode::MagLs { fc }, nfft, set.fs)
}

/// Weighted magnitude error `sum_p w_p (|H~_p| - |H_p|)^2 / 4pi` per ear and bin.
pub fn magnitude_error(set: &HrtfSet, sh: &ShHrtf) -> Result<Array2<f64>> {
    let spectra = set.spectra(sh.nfft())?;
    let approx = sh.synthesize(set.grid());
    let w = set.grid().weights();
    let mut out = Array2::zeros((2, sh.n_bins()));
    for p in 0..set.n_dirs() {
        for e in 0..2 {
            for k in 0..sh.n_bins() {
                let d = approx[[p, e, k]].norm() - spectra[[p, e, k]].norm();
                out[[e, k]] += w[p] * d * d / (4.0 * std::f64::consts::PI);
            }
        }
    }
    Ok(out)
}
