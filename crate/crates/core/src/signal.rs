//! The canonical multichannel container and its domain conversions.
//!
//! Data is a `(n_channels, n_spatial, n_frames)` tensor. Time-domain data is
//! real; frequency-domain data keeps the `nfft / 2 + 1` nonnegative bins.
//! Conversions happen in place.

use std::sync::Arc;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::DirectionGrid;
use crate::sh::basis::{analysis_with_basis, check_grid_resolves, n_coeffs, sh_basis, synthesis_with_basis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeDomain {
    Time,
    Freq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceDomain {
    Space,
    Sh,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalData {
    Real(Array3<f64>),
    Complex(Array3<Complex64>),
}

impl SignalData {
    pub fn dim(&self) -> (usize, usize, usize) {
        match self {
            SignalData::Real(a) => a.dim(),
            SignalData::Complex(a) => a.dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSignal {
    data: SignalData,
    fs: f64,
    time_domain: TimeDomain,
    space_domain: SpaceDomain,
    sh_order: usize,
    grid: Option<Arc<DirectionGrid>>,
    nfft: Option<usize>,
    n_samples: usize,
}

impl SpatialSignal {
    /// Time-domain signal over spatial channels (optionally tied to a grid).
    pub fn time_space(data: Array3<f64>, fs: f64, grid: Option<Arc<DirectionGrid>>) -> Result<Self> {
        check_fs(fs)?;
        if let Some(g) = &grid {
            if g.n_dirs() != data.dim().1 {
                return Err(Error::Shape(format!(
                    "{} spatial channels for a grid of {} directions",
                    data.dim().1,
                    g.n_dirs()
                )));
            }
        }
        let n_samples = data.dim().2;
        Ok(Self {
            data: SignalData::Real(data),
            fs,
            time_domain: TimeDomain::Time,
            space_domain: SpaceDomain::Space,
            sh_order: 0,
            grid,
            nfft: None,
            n_samples,
        })
    }

    /// Time-domain SH signal; the spatial axis must hold `(order+1)^2` channels.
    pub fn time_sh(data: Array3<f64>, fs: f64, order: usize) -> Result<Self> {
        check_fs(fs)?;
        check_sh_channels(data.dim().1, order)?;
        let n_samples = data.dim().2;
        Ok(Self {
            data: SignalData::Real(data),
            fs,
            time_domain: TimeDomain::Time,
            space_domain: SpaceDomain::Sh,
            sh_order: order,
            grid: None,
            nfft: None,
            n_samples,
        })
    }

    /// Frequency-domain signal. Without `nfft` it cannot be brought back to time.
    pub fn from_spectrum(
        data: Array3<Complex64>,
        fs: f64,
        nfft: Option<usize>,
        n_samples: usize,
        space_domain: SpaceDomain,
        sh_order: usize,
        grid: Option<Arc<DirectionGrid>>,
    ) -> Result<Self> {
        check_fs(fs)?;
        if let Some(n) = nfft {
            if fft::n_bins(n) != data.dim().2 {
                return Err(Error::MalformedSignal(format!(
                    "{} bins recorded for nfft {n}",
                    data.dim().2
                )));
            }
            if n_samples > n {
                return Err(Error::MalformedSignal(format!(
                    "{n_samples} samples exceed nfft {n}"
                )));
            }
        }
        if space_domain == SpaceDomain::Sh {
            check_sh_channels(data.dim().1, sh_order)?;
        }
        Ok(Self {
            data: SignalData::Complex(data),
            fs,
            time_domain: TimeDomain::Freq,
            space_domain,
            sh_order,
            grid,
            nfft,
            n_samples,
        })
    }

    pub fn data(&self) -> &SignalData {
        &self.data
    }

    pub fn into_data(self) -> SignalData {
        self.data
    }

    /// Time-domain samples; `None` in the frequency domain.
    pub fn real(&self) -> Option<&Array3<f64>> {
        match &self.data {
            SignalData::Real(a) => Some(a),
            SignalData::Complex(_) => None,
        }
    }

    pub fn real_mut(&mut self) -> Option<&mut Array3<f64>> {
        match &mut self.data {
            SignalData::Real(a) => Some(a),
            SignalData::Complex(_) => None,
        }
    }

    pub fn spectrum(&self) -> Option<&Array3<Complex64>> {
        match &self.data {
            SignalData::Complex(a) => Some(a),
            SignalData::Real(_) => None,
        }
    }

    pub fn spectrum_mut(&mut self) -> Option<&mut Array3<Complex64>> {
        match &mut self.data {
            SignalData::Complex(a) => Some(a),
            SignalData::Real(_) => None,
        }
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn time_domain(&self) -> TimeDomain {
        self.time_domain
    }

    pub fn space_domain(&self) -> SpaceDomain {
        self.space_domain
    }

    pub fn sh_order(&self) -> usize {
        self.sh_order
    }

    pub fn grid(&self) -> Option<&Arc<DirectionGrid>> {
        self.grid.as_ref()
    }

    pub fn nfft(&self) -> Option<usize> {
        self.nfft
    }

    /// Length in samples of the time-domain representation.
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_spatial(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_frames(&self) -> usize {
        self.data.dim().2
    }

    /// Converts to `target`; a no-op when already there.
    pub fn transform_time_freq(&mut self, target: TimeDomain) -> Result<&mut Self> {
        match (self.time_domain, target) {
            (TimeDomain::Time, TimeDomain::Freq) => {
                let nfft = fft::next_pow2(self.n_samples);
                self.to_freq_with_nfft(nfft)?;
            }
            (TimeDomain::Freq, TimeDomain::Time) => {
                self.to_time()?;
            }
            _ => {}
        }
        Ok(self)
    }

    /// Forward transform at an explicit size (`nfft >= n_samples`).
    pub fn to_freq_with_nfft(&mut self, nfft: usize) -> Result<&mut Self> {
        let SignalData::Real(x) = &self.data else {
            return Ok(self);
        };
        if nfft < self.n_samples {
            return Err(Error::Argument(format!(
                "nfft {nfft} shorter than {} samples",
                self.n_samples
            )));
        }
        let (c, s, _) = x.dim();
        let bins = fft::n_bins(nfft);
        let mut out = Array3::<Complex64>::zeros((c, s, bins));
        let mut row = vec![0.0; self.n_samples];
        for ci in 0..c {
            for si in 0..s {
                row.iter_mut()
                    .zip(x.slice(ndarray::s![ci, si, ..]).iter())
                    .for_each(|(r, v)| *r = *v);
                let spec = fft::rfft(&row, nfft);
                out.slice_mut(ndarray::s![ci, si, ..])
                    .iter_mut()
                    .zip(spec)
                    .for_each(|(o, v)| *o = v);
            }
        }
        fft::count_forward_pass();
        self.data = SignalData::Complex(out);
        self.nfft = Some(nfft);
        self.time_domain = TimeDomain::Freq;
        Ok(self)
    }

    fn to_time(&mut self) -> Result<&mut Self> {
        let SignalData::Complex(x) = &self.data else {
            return Ok(self);
        };
        let nfft = self.nfft.ok_or_else(|| {
            Error::MalformedSignal("frequency-domain signal has no recorded nfft".into())
        })?;
        let (c, s, _) = x.dim();
        let n = self.n_samples;
        let mut out = Array3::<f64>::zeros((c, s, n));
        let mut spec = Vec::with_capacity(x.dim().2);
        for ci in 0..c {
            for si in 0..s {
                spec.clear();
                spec.extend(x.slice(ndarray::s![ci, si, ..]).iter().copied());
                let t = fft::irfft(&spec, nfft);
                out.slice_mut(ndarray::s![ci, si, ..])
                    .iter_mut()
                    .zip(&t[..n])
                    .for_each(|(o, v)| *o = *v);
            }
        }
        fft::count_inverse_pass();
        self.data = SignalData::Real(out);
        self.time_domain = TimeDomain::Time;
        Ok(self)
    }

    /// Changes the time-domain length reported after an inverse transform.
    /// Only valid in the frequency domain and up to `nfft`.
    pub fn set_output_length(&mut self, n: usize) -> Result<()> {
        match self.nfft {
            Some(nfft) if self.time_domain == TimeDomain::Freq && n <= nfft => {
                self.n_samples = n;
                Ok(())
            }
            _ => Err(Error::MalformedSignal(format!(
                "cannot set output length {n} on this signal"
            ))),
        }
    }

    /// Converts between SH coefficients and values on `grid`.
    ///
    /// SPACE to SH projects with the quadrature weights of the signal's own
    /// grid when it has one, otherwise of `grid`; SH to SPACE synthesises on
    /// `grid`.
    pub fn transform_space_sh(
        &mut self,
        target: SpaceDomain,
        order: usize,
        grid: &Arc<DirectionGrid>,
    ) -> Result<&mut Self> {
        match (self.space_domain, target) {
            (SpaceDomain::Space, SpaceDomain::Sh) => {
                let g = self.grid.clone().unwrap_or_else(|| grid.clone());
                if g.n_dirs() != self.n_spatial() {
                    return Err(Error::Shape(format!(
                        "{} spatial channels for a grid of {} directions",
                        self.n_spatial(),
                        g.n_dirs()
                    )));
                }
                check_grid_resolves(&g, order)?;
                let basis = sh_basis(&g, order);
                let w = g.weights();
                self.map_spatial(n_coeffs(order), |m| analysis_with_basis(m, &basis, w), |m| {
                    analysis_with_basis(m, &basis, w)
                });
                self.space_domain = SpaceDomain::Sh;
                self.sh_order = order;
                self.grid = None;
            }
            (SpaceDomain::Sh, SpaceDomain::Space) => {
                let basis = sh_basis(grid, self.sh_order);
                self.map_spatial(grid.n_dirs(), |m| synthesis_with_basis(m, &basis), |m| {
                    synthesis_with_basis(m, &basis)
                });
                self.space_domain = SpaceDomain::Space;
                self.grid = Some(grid.clone());
            }
            _ => {}
        }
        Ok(self)
    }

    fn map_spatial(
        &mut self,
        new_spatial: usize,
        fr: impl Fn(ndarray::ArrayView2<f64>) -> Array2<f64>,
        fc: impl Fn(ndarray::ArrayView2<Complex64>) -> Array2<Complex64>,
    ) {
        fn go<T: Clone + Default>(
            x: &Array3<T>,
            new_spatial: usize,
            f: impl Fn(ndarray::ArrayView2<T>) -> Array2<T>,
        ) -> Array3<T> {
            let (c, _, n) = x.dim();
            let mut out = Array3::from_elem((c, new_spatial, n), T::default());
            for ci in 0..c {
                let mapped = f(x.index_axis(Axis(0), ci));
                out.index_axis_mut(Axis(0), ci).assign(&mapped);
            }
            out
        }
        self.data = match &self.data {
            SignalData::Real(x) => SignalData::Real(go(x, new_spatial, fr)),
            SignalData::Complex(x) => SignalData::Complex(go(x, new_spatial, fc)),
        };
    }

    /// Sum of squared magnitudes across all channels, in the time domain
    /// equivalent (Parseval-weighted in the frequency domain).
    pub fn energy(&self) -> f64 {
        match &self.data {
            SignalData::Real(x) => x.iter().map(|v| v * v).sum(),
            SignalData::Complex(x) => {
                let nfft = self.nfft.unwrap_or(2 * (x.dim().2.max(1) - 1));
                let bins = x.dim().2;
                let mut total = 0.0;
                for lane in x.lanes(Axis(2)) {
                    for (k, v) in lane.iter().enumerate() {
                        let weight = if k == 0 || (nfft % 2 == 0 && k == bins - 1) {
                            1.0
                        } else {
                            2.0
                        };
                        total += weight * v.norm_sqr();
                    }
                }
                total / nfft as f64
            }
        }
    }
}

fn check_fs(fs: f64) -> Result<()> {
    if fs > 0.0 && fs.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("sample rate {fs} must be positive")))
    }
}

fn check_sh_channels(n_spatial: usize, order: usize) -> Result<()> {
    if n_spatial != n_coeffs(order) {
        return Err(Error::Shape(format!(
            "{n_spatial} spatial channels for SH order {order} (expected {})",
            n_coeffs(order)
        )));
    }
    Ok(())
}
