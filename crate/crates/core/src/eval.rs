//! Spectral error metrics and reference renderers.

use ndarray::{s, Array3, ArrayView2, Axis};
use num_complex::Complex64;

use crate::decoders::{BinauralDecoder, Processor};
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{angles_to_cartesian, nearest_of};
use crate::hrtf::{HrtfSet, ShHrtf};
use crate::ism::{compute_images, image_direction};
use crate::room::{compute_arir, fractional_delay_kernel, Scene};
use crate::sh::rotation::{mat_vec, EulerZyz};
use crate::sh::{n_coeffs, sh_vector_into};
use crate::signal::{SpaceDomain, SpatialSignal, TimeDomain};

pub const DEFAULT_F_LO: f64 = 200.0;
pub const DEFAULT_F_HI: f64 = 20000.0;
pub const DEFAULT_FRACTION: f64 = 1.0 / 6.0;
pub const MAGNITUDE_FLOOR: f64 = 1e-12;
/// Impulse responses are zero-padded to at least this many samples before
/// their spectra are compared.
pub const MIN_LSD_NFFT: usize = 4096;

/// Each spectrum is smoothed on its own, then the two are differenced.
pub const SMOOTHING_METHOD: &str = "smooth-spectra-then-difference";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsdOptions {
    pub f_lo: f64,
    pub f_hi: f64,
    /// Octave fraction; zero disables smoothing.
    pub fraction: f64,
    pub floor: f64,
}

impl Default for LsdOptions {
    fn default() -> Self {
        Self {
            f_lo: DEFAULT_F_LO,
            f_hi: DEFAULT_F_HI,
            fraction: DEFAULT_FRACTION,
            floor: MAGNITUDE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsdReport {
    pub lsd_left: f64,
    pub lsd_right: f64,
    pub lsd_avg: f64,
    pub f_lo: f64,
    /// Upper band edge actually used (clipped at Nyquist).
    pub f_hi: f64,
    pub smoothing: f64,
    pub method: &'static str,
    pub n_bins: usize,
}

/// Power mean of the bins within `+-fraction/2` octave of each bin. Bins at
/// or below 0 Hz are left untouched.
pub fn octave_smooth(mag: &[f64], freqs: &[f64], fraction: f64) -> Vec<f64> {
    assert_eq!(mag.len(), freqs.len());
    if fraction <= 0.0 {
        return mag.to_vec();
    }
    let half = 2f64.powf(fraction / 2.0);
    let mut prefix = Vec::with_capacity(mag.len() + 1);
    prefix.push(0.0);
    for m in mag {
        prefix.push(prefix.last().unwrap() + m * m);
    }
    let (mut lo, mut hi) = (0usize, 0usize);
    mag.iter()
        .zip(freqs)
        .enumerate()
        .map(|(i, (&m, &f))| {
            if f <= 0.0 {
                return m;
            }
            let (a, b) = (f / half, f * half);
            while freqs[lo] < a {
                lo += 1;
            }
            hi = hi.max(i);
            while hi + 1 < freqs.len() && freqs[hi + 1] <= b {
                hi += 1;
            }
            ((prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64).sqrt()
        })
        .collect()
}

/// LSD between two-ear spectra `(2, n_bins)` sampled at `freqs`.
pub fn lsd_spectra(
    h_hat: ArrayView2<Complex64>,
    h_ref: ArrayView2<Complex64>,
    freqs: &[f64],
    opts: &LsdOptions,
) -> Result<LsdReport> {
    if h_hat.dim() != h_ref.dim() || h_hat.nrows() != 2 || h_hat.ncols() != freqs.len() {
        return Err(Error::Shape(format!(
            "LSD needs two (2, {}) spectra, got {:?} and {:?}",
            freqs.len(),
            h_hat.dim(),
            h_ref.dim()
        )));
    }
    if !(opts.f_lo < opts.f_hi) {
        return Err(Error::Argument(format!("empty band [{}, {}]", opts.f_lo, opts.f_hi)));
    }
    let nyquist = *freqs.last().unwrap_or(&0.0);
    let f_hi = opts.f_hi.min(nyquist);
    let band: Vec<usize> = (0..freqs.len())
        .filter(|&k| freqs[k] >= opts.f_lo && freqs[k] <= f_hi)
        .collect();
    if band.is_empty() {
        return Err(Error::Argument(format!("no bins in [{}, {f_hi}] Hz", opts.f_lo)));
    }
    let db = |row: ndarray::ArrayView1<Complex64>| -> Vec<f64> {
        let mag: Vec<f64> = row.iter().map(|v| v.norm()).collect();
        octave_smooth(&mag, freqs, opts.fraction)
            .into_iter()
            .map(|m| 20.0 * m.max(opts.floor).log10())
            .collect()
    };
    let mut ears = [0.0; 2];
    for (e, out) in ears.iter_mut().enumerate() {
        let a = db(h_hat.row(e));
        let b = db(h_ref.row(e));
        let ms = band.iter().map(|&k| (a[k] - b[k]).powi(2)).sum::<f64>() / band.len() as f64;
        *out = ms.sqrt();
    }
    Ok(LsdReport {
        lsd_left: ears[0],
        lsd_right: ears[1],
        lsd_avg: 0.5 * (ears[0] + ears[1]),
        f_lo: opts.f_lo,
        f_hi,
        smoothing: opts.fraction,
        method: SMOOTHING_METHOD,
        n_bins: band.len(),
    })
}

/// LSD between two-ear impulse responses `(2, len)` at a shared transform
/// size.
pub fn lsd(h_hat: ArrayView2<f64>, h_ref: ArrayView2<f64>, fs: f64, opts: &LsdOptions) -> Result<LsdReport> {
    if h_hat.nrows() != 2 || h_ref.nrows() != 2 {
        return Err(Error::Shape("LSD needs two-ear impulse responses".into()));
    }
    let nfft = fft::next_pow2(h_hat.ncols().max(h_ref.ncols()).max(MIN_LSD_NFFT));
    let spec = |h: ArrayView2<f64>| {
        let mut out = ndarray::Array2::zeros((2, fft::n_bins(nfft)));
        for e in 0..2 {
            let row: Vec<f64> = h.row(e).to_vec();
            out.row_mut(e).assign(&ndarray::Array1::from(fft::rfft(&row, nfft)));
        }
        out
    };
    let freqs = fft::bin_frequencies(nfft, fs);
    lsd_spectra(spec(h_hat).view(), spec(h_ref).view(), &freqs, opts)
}

/// LSD between the first channels of two binaural time signals.
pub fn lsd_signals(h_hat: &SpatialSignal, h_ref: &SpatialSignal, opts: &LsdOptions) -> Result<LsdReport> {
    if (h_hat.fs() - h_ref.fs()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "sample rates differ: {} vs {}",
            h_hat.fs(),
            h_ref.fs()
        )));
    }
    let view = |s: &SpatialSignal| -> Result<ndarray::Array2<f64>> {
        if s.space_domain() != SpaceDomain::Space || s.n_spatial() != 2 {
            return Err(Error::Dimension("LSD needs two-ear SPACE signals".into()));
        }
        let mut s = s.clone();
        s.transform_time_freq(TimeDomain::Time)?;
        Ok(s.real().unwrap().index_axis(Axis(0), 0).to_owned())
    };
    lsd(view(h_hat)?.view(), view(h_ref)?.view(), h_hat.fs(), opts)
}

/// Sums per-source channels of an ARIR into one channel.
pub fn mix_sources(arir: &SpatialSignal) -> Result<SpatialSignal> {
    let x = arir
        .real()
        .ok_or_else(|| Error::MalformedSignal("mixing needs a time-domain signal".into()))?;
    let mixed = x.sum_axis(Axis(0)).insert_axis(Axis(0));
    SpatialSignal::time_sh(mixed, arir.fs(), arir.sh_order())
}

/// ARIR of every source, mixed, then binaurally decoded: `(1, 2, len)`.
pub fn render_brir(scene: &Scene, decoder: &BinauralDecoder) -> Result<SpatialSignal> {
    let arir = mix_sources(&compute_arir(scene)?)?;
    decoder.process(&arir)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRender {
    /// `(1, 2, len)` BRIR summed over sources.
    pub brir: SpatialSignal,
    pub accumulations: usize,
}

fn check_rates(scene: &Scene, fs: f64) -> Result<()> {
    if (scene.room.fs - fs).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "scene rate {} differs from HRTF rate {fs}",
            scene.room.fs
        )));
    }
    Ok(())
}

/// Adds `gain * (kernel * ir)` into `out` starting at the kernel offset.
fn accumulate(out: &mut [f64], ir: &[f64], delay: f64, gain: f64, kernel_len: usize) -> Result<()> {
    let k = fractional_delay_kernel(delay, kernel_len)?;
    for (ti, &t) in k.taps.iter().enumerate() {
        let start = k.offset + ti as i64;
        for (j, &h) in ir.iter().enumerate() {
            let idx = start + j as i64;
            if idx >= 0 && (idx as usize) < out.len() {
                out[idx as usize] += gain * t * h;
            }
        }
    }
    Ok(())
}

/// Arrival direction of each image in the head frame, as a unit vector.
fn head_direction(az: f64, el: f64, head: Option<EulerZyz>) -> [f64; 3] {
    let v = angles_to_cartesian(az, el);
    match head {
        Some(r) => mat_vec(r.inverse().matrix(), v),
        None => v,
    }
}

/// Image sources rendered with the nearest measured HRIR pair.
pub fn nn_baseline_render(scene: &Scene, set: &HrtfSet) -> Result<BaselineRender> {
    nn_baseline_render_oriented(scene, set, None)
}

/// As [`nn_baseline_render`] for a head rotated by `head`.
pub fn nn_baseline_render_oriented(scene: &Scene, set: &HrtfSet, head: Option<EulerZyz>) -> Result<BaselineRender> {
    scene.validate()?;
    check_rates(scene, set.fs())?;
    let len = scene.arir_len()? + set.taps() - 1;
    let mut out = Array3::<f64>::zeros((1, 2, len));
    let mut count = 0;
    let units = set.grid().unit_vectors();
    for src in &scene.sources {
        for img in compute_images(&scene.room, src.position, scene.receiver)? {
            let (az, el) = image_direction(&img, scene.receiver)?;
            let p = nearest_of(&units, head_direction(az, el, head));
            for e in 0..2 {
                let ir = set.irs().slice(s![p, e, ..]).to_vec();
                let mut row = out.slice_mut(s![0, e, ..]);
                accumulate(row.as_slice_mut().unwrap(), &ir, img.delay_samples, img.amplitude, scene.kernel_len)?;
            }
            count += 1;
        }
    }
    Ok(BaselineRender {
        brir: SpatialSignal::time_space(out, set.fs(), None)?,
        accumulations: count,
    })
}

/// Image sources rendered with SH-interpolated HRIRs evaluated per image.
pub fn sh_baseline_render(scene: &Scene, hrtf: &ShHrtf) -> Result<BaselineRender> {
    scene.validate()?;
    check_rates(scene, hrtf.fs())?;
    let dec = BinauralDecoder::new(hrtf);
    let filters = dec.filters();
    let taps = dec.filter_len();
    let q = n_coeffs(hrtf.order());
    let len = scene.arir_len()? + taps - 1;
    let mut out = Array3::<f64>::zeros((1, 2, len));
    let mut y = vec![0.0; q];
    let mut count = 0;
    for src in &scene.sources {
        for img in compute_images(&scene.room, src.position, scene.receiver)? {
            let (az, el) = image_direction(&img, scene.receiver)?;
            sh_vector_into(hrtf.order(), az, el, &mut y);
            for e in 0..2 {
                let mut ir = vec![0.0; taps];
                for (qi, yq) in y.iter().enumerate() {
                    let f = filters.slice(s![qi, e, ..]);
                    ir.iter_mut().zip(f.iter()).for_each(|(o, v)| *o += yq * v);
                }
                let mut row = out.slice_mut(s![0, e, ..]);
                accumulate(row.as_slice_mut().unwrap(), &ir, img.delay_samples, img.amplitude, scene.kernel_len)?;
            }
            count += 1;
        }
    }
    Ok(BaselineRender {
        brir: SpatialSignal::time_space(out, hrtf.fs(), None)?,
        accumulations: count,
    })
}
