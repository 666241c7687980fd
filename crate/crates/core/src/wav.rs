//! WAV interchange for time-domain signals.
//!
//! A signal with `C` channels and `S` spatial components is stored as
//! `C * S` WAV channels in spatial-major order: WAV channel `s * C + c`
//! carries channel `c` of spatial component `s`. The spatial meaning of the
//! channels lives in a sidecar, not in the WAV.

use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::signal::SpatialSignal;

/// Deinterleaved WAV payload.
#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    /// `(n_wav_channels, n_frames)`.
    pub samples: Array2<f64>,
    pub fs: u32,
}

fn wav_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::format(0, format!("wav: {other}")),
    }
}

/// Spatial-major `(C * S, frames)` view of a time-domain signal.
pub fn to_wav_channels(sig: &SpatialSignal) -> Result<Array2<f64>> {
    let x = sig
        .real()
        .ok_or_else(|| Error::MalformedSignal("only time-domain signals can be written".into()))?;
    let (c, s, t) = x.dim();
    let mut out = Array2::zeros((c * s, t));
    for si in 0..s {
        for ci in 0..c {
            out.row_mut(si * c + ci).assign(&x.slice(ndarray::s![ci, si, ..]));
        }
    }
    Ok(out)
}

/// Inverse of [`to_wav_channels`].
pub fn from_wav_channels(samples: &Array2<f64>, n_channels: usize) -> Result<Array3<f64>> {
    let (w, t) = samples.dim();
    if n_channels == 0 || w % n_channels != 0 {
        return Err(Error::Shape(format!(
            "{w} WAV channels do not split into {n_channels} signal channels"
        )));
    }
    let s = w / n_channels;
    Ok(Array3::from_shape_fn((n_channels, s, t), |(c, si, k)| samples[[si * n_channels + c, k]]))
}

pub fn write_wav_to<W: Write + Seek>(samples: &Array2<f64>, fs: u32, w: W) -> Result<()> {
    let (n_ch, n) = samples.dim();
    if n_ch == 0 || n_ch > u16::MAX as usize {
        return Err(Error::Shape(format!("{n_ch} channels cannot be stored in a WAV file")));
    }
    let spec = hound::WavSpec {
        channels: n_ch as u16,
        sample_rate: fs,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut wr = hound::WavWriter::new(w, spec).map_err(wav_err)?;
    for k in 0..n {
        for ch in 0..n_ch {
            wr.write_sample(samples[[ch, k]] as f32).map_err(wav_err)?;
        }
    }
    wr.finalize().map_err(wav_err)
}

/// 32-bit float WAV bytes.
pub fn wav_bytes(samples: &Array2<f64>, fs: u32) -> Result<Vec<u8>> {
    let mut cur = Cursor::new(Vec::new());
    write_wav_to(samples, fs, &mut cur)?;
    Ok(cur.into_inner())
}

pub fn write_wav(path: impl AsRef<Path>, samples: &Array2<f64>, fs: u32) -> Result<()> {
    std::fs::write(path, wav_bytes(samples, fs)?)?;
    Ok(())
}

/// Writes a time-domain signal; the sample rate must be integral.
pub fn write_signal_wav(path: impl AsRef<Path>, sig: &SpatialSignal) -> Result<()> {
    write_wav(path, &to_wav_channels(sig)?, integral_rate(sig.fs())?)
}

pub fn integral_rate(fs: f64) -> Result<u32> {
    if fs.fract() != 0.0 || fs < 1.0 || fs > u32::MAX as f64 {
        return Err(Error::Config(format!("sample rate {fs} is not a valid WAV rate")));
    }
    Ok(fs as u32)
}

/// Reads float or integer PCM; integers are scaled to `[-1, 1)`.
pub fn read_wav_from<R: Read>(r: R) -> Result<WavData> {
    let mut rd = hound::WavReader::new(r).map_err(wav_err)?;
    let spec = rd.spec();
    if spec.channels == 0 {
        return Err(Error::format(0, "wav: zero channels"));
    }
    if spec.sample_rate == 0 {
        return Err(Error::format(24, "wav: zero sample rate"));
    }
    let n_ch = spec.channels as usize;
    let flat: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(Error::format(34, format!("wav: {}-bit float", spec.bits_per_sample)));
            }
            rd.samples::<f32>()
                .map(|v| v.map(f64::from))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?
        }
        hound::SampleFormat::Int => {
            let bits = spec.bits_per_sample;
            if bits == 0 || bits > 32 {
                return Err(Error::format(34, format!("wav: {bits}-bit integer")));
            }
            let scale = 2f64.powi(bits as i32 - 1);
            rd.samples::<i32>()
                .map(|v| v.map(|s| s as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?
        }
    };
    let frames = flat.len() / n_ch;
    let samples = Array2::from_shape_fn((n_ch, frames), |(c, k)| flat[k * n_ch + c]);
    Ok(WavData {
        samples,
        fs: spec.sample_rate,
    })
}

pub fn read_wav_bytes(bytes: &[u8]) -> Result<WavData> {
    read_wav_from(Cursor::new(bytes))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<WavData> {
    let f = std::fs::File::open(path)?;
    read_wav_from(std::io::BufReader::new(f))
}
