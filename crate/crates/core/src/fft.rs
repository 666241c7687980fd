//! Real-input FFT helpers and per-thread operation counters.
//!
//! Spectra keep the nonnegative bins only (`nfft / 2 + 1`), with the forward
//! transform unscaled and the inverse scaled by `1 / nfft`.

use std::cell::{Cell, RefCell};

use num_complex::Complex64;
use realfft::RealFftPlanner;

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
    static COUNTERS: Cell<OpCounts> = const { Cell::new(OpCounts::ZERO) };
}

/// Operation counts accumulated on the current thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    /// Whole-signal time-to-frequency conversions.
    pub forward_passes: u64,
    /// Whole-signal frequency-to-time conversions.
    pub inverse_passes: u64,
    /// Individual 1-D transforms of either direction.
    pub transforms: u64,
    /// Complex multiply-accumulates in frequency-domain kernels.
    pub kernel_macs: u64,
}

impl OpCounts {
    const ZERO: Self = Self {
        forward_passes: 0,
        inverse_passes: 0,
        transforms: 0,
        kernel_macs: 0,
    };

    pub fn since(self, earlier: OpCounts) -> OpCounts {
        OpCounts {
            forward_passes: self.forward_passes - earlier.forward_passes,
            inverse_passes: self.inverse_passes - earlier.inverse_passes,
            transforms: self.transforms - earlier.transforms,
            kernel_macs: self.kernel_macs - earlier.kernel_macs,
        }
    }
}

pub fn op_counts() -> OpCounts {
    COUNTERS.with(|c| c.get())
}

fn bump(f: impl FnOnce(&mut OpCounts)) {
    COUNTERS.with(|c| {
        let mut v = c.get();
        f(&mut v);
        c.set(v);
    });
}

pub(crate) fn count_forward_pass() {
    bump(|c| c.forward_passes += 1);
}

pub(crate) fn count_inverse_pass() {
    bump(|c| c.inverse_passes += 1);
}

pub(crate) fn count_kernel_macs(n: u64) {
    bump(|c| c.kernel_macs += n);
}

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

pub fn n_bins(nfft: usize) -> usize {
    nfft / 2 + 1
}

/// Bin centre frequencies for a real spectrum of size `nfft` at rate `fs`.
pub fn bin_frequencies(nfft: usize, fs: f64) -> Vec<f64> {
    (0..n_bins(nfft))
        .map(|k| k as f64 * fs / nfft as f64)
        .collect()
}

/// Forward transform of `input` zero-padded (or truncated) to `nfft`.
pub fn rfft(input: &[f64], nfft: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n_bins(nfft)];
    rfft_into(input, nfft, &mut out);
    out
}

pub fn rfft_into(input: &[f64], nfft: usize, out: &mut [Complex64]) {
    let mut buf = vec![0.0; nfft];
    let n = input.len().min(nfft);
    buf[..n].copy_from_slice(&input[..n]);
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(nfft));
    fft.process(&mut buf, out).expect("buffer sizes match plan");
    bump(|c| c.transforms += 1);
}

/// Inverse transform; returns `nfft` samples.
pub fn irfft(spectrum: &[Complex64], nfft: usize) -> Vec<f64> {
    let mut out = vec![0.0; nfft];
    irfft_into(spectrum, nfft, &mut out);
    out
}

pub fn irfft_into(spectrum: &[Complex64], nfft: usize, out: &mut [f64]) {
    let mut buf = spectrum.to_vec();
    buf.resize(n_bins(nfft), Complex64::new(0.0, 0.0));
    // DC and (even-size) Nyquist bins of a real signal are real.
    buf[0].im = 0.0;
    if nfft % 2 == 0 {
        let last = buf.len() - 1;
        buf[last].im = 0.0;
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(nfft));
    fft.process(&mut buf, out).expect("buffer sizes match plan");
    let scale = 1.0 / nfft as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    bump(|c| c.transforms += 1);
}
