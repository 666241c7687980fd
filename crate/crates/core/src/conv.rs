//! Multichannel FIR convolution with overlap-add selection.
//!
//! Overlap-add is used when `n_fir * 8 < n_signal`; otherwise the direct
//! form. Both produce the full linear convolution of length
//! `n_signal + n_fir - 1`.

use ndarray::{s, Array3, ArrayView3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::signal::{SpaceDomain, SpatialSignal, TimeDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    Direct,
    OverlapAdd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvPlan {
    pub mode: ConvMode,
    /// Input samples per overlap-add block (0 for direct).
    pub block: usize,
    /// Transform size per block (0 for direct).
    pub nfft: usize,
}

impl ConvPlan {
    pub fn new(n_signal: usize, n_fir: usize) -> Self {
        if n_fir.saturating_mul(8) < n_signal {
            let block = 4 * fft::next_pow2(n_fir);
            ConvPlan {
                mode: ConvMode::OverlapAdd,
                block,
                nfft: fft::next_pow2(block + n_fir - 1),
            }
        } else {
            ConvPlan {
                mode: ConvMode::Direct,
                block: 0,
                nfft: 0,
            }
        }
    }
}

pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (o, &hv) in y[i..i + h.len()].iter_mut().zip(h) {
            *o += xv * hv;
        }
    }
    y
}

/// Overlap-add with a precomputed filter spectrum.
fn convolve_ola_with(x: &[f64], h_len: usize, h_spec: &[Complex64], plan: ConvPlan) -> Vec<f64> {
    let mut y = vec![0.0; x.len() + h_len - 1];
    let mut spec = vec![Complex64::new(0.0, 0.0); fft::n_bins(plan.nfft)];
    let mut time = vec![0.0; plan.nfft];
    for start in (0..x.len()).step_by(plan.block) {
        let end = (start + plan.block).min(x.len());
        fft::rfft_into(&x[start..end], plan.nfft, &mut spec);
        spec.iter_mut().zip(h_spec).for_each(|(a, b)| *a *= b);
        fft::irfft_into(&spec, plan.nfft, &mut time);
        let n_out = (end - start + h_len - 1).min(y.len() - start);
        for (o, v) in y[start..start + n_out].iter_mut().zip(&time) {
            *o += v;
        }
    }
    y
}

pub fn convolve_ola(x: &[f64], h: &[f64], plan: ConvPlan) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let h_spec = fft::rfft(h, plan.nfft);
    convolve_ola_with(x, h.len(), &h_spec, plan)
}

/// Full linear convolution of two sequences, planned on their lengths.
pub fn convolve_slices(x: &[f64], h: &[f64]) -> Vec<f64> {
    let (long, short) = if x.len() >= h.len() { (x, h) } else { (h, x) };
    if let [g] = short {
        return long.iter().map(|v| v * g).collect();
    }
    let plan = ConvPlan::new(long.len(), short.len());
    match plan.mode {
        ConvMode::Direct => convolve_direct(long, short),
        ConvMode::OverlapAdd => convolve_ola(long, short, plan),
    }
}

/// Convolves every lane of a time-domain signal.
///
/// `fir` has shape `(1, 1, taps)` (one filter for all lanes) or
/// `(n_channels, n_spatial, taps)` (one per lane).
pub fn convolve(signal: &SpatialSignal, fir: ArrayView3<f64>) -> Result<SpatialSignal> {
    let x = signal
        .real()
        .ok_or_else(|| Error::Argument("convolution needs a time-domain signal".into()))?;
    let (c, sp, n) = x.dim();
    let (fc, fs_, taps) = fir.dim();
    let shared = (fc, fs_) == (1, 1);
    if !shared && (fc, fs_) != (c, sp) {
        return Err(Error::Shape(format!(
            "filter bank {fc}x{fs_} does not match signal {c}x{sp}"
        )));
    }
    if taps == 0 || n == 0 {
        return Err(Error::Argument("empty signal or filter".into()));
    }
    let plan = ConvPlan::new(n, taps);
    let out_len = n + taps - 1;
    let mut out = Array3::<f64>::zeros((c, sp, out_len));
    let shared_spec = (shared && plan.mode == ConvMode::OverlapAdd)
        .then(|| fft::rfft(&fir.slice(s![0, 0, ..]).to_vec(), plan.nfft));
    for ci in 0..c {
        for si in 0..sp {
            let lane: Vec<f64> = x.slice(s![ci, si, ..]).to_vec();
            let h: Vec<f64> = if shared {
                fir.slice(s![0, 0, ..]).to_vec()
            } else {
                fir.slice(s![ci, si, ..]).to_vec()
            };
            let y = match (plan.mode, &shared_spec) {
                (ConvMode::Direct, _) => convolve_direct(&lane, &h),
                (ConvMode::OverlapAdd, Some(spec)) => convolve_ola_with(&lane, taps, spec, plan),
                (ConvMode::OverlapAdd, None) => convolve_ola(&lane, &h, plan),
            };
            out.slice_mut(s![ci, si, ..])
                .iter_mut()
                .zip(y)
                .for_each(|(o, v)| *o = v);
        }
    }
    debug_assert_eq!(signal.time_domain(), TimeDomain::Time);
    match signal.space_domain() {
        SpaceDomain::Sh => SpatialSignal::time_sh(out, signal.fs(), signal.sh_order()),
        SpaceDomain::Space => SpatialSignal::time_space(out, signal.fs(), signal.grid().cloned()),
    }
}
