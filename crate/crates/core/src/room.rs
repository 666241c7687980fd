//! Ambisonic room impulse responses from image sources.

use std::f64::consts::PI;

use ndarray::{s, Array3};
use rayon::prelude::*;

use crate::conv::convolve_slices;
use crate::error::{Error, Result};
use crate::ism::{compute_images, image_direction, RoomSpec};
use crate::sh::{n_coeffs, sh_vector_into};
use crate::signal::SpatialSignal;

pub const DEFAULT_KERNEL_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct FractionalDelay {
    pub taps: Vec<f64>,
    /// Sample index of `taps[0]`; may be negative for short delays.
    pub offset: i64,
}

/// Hann-windowed sinc centred at `len/2 - 1 + frac`, normalised to unit DC
/// gain. Integer delays collapse to a single unit tap.
pub fn fractional_delay_kernel(delay: f64, len: usize) -> Result<FractionalDelay> {
    if !(delay >= 0.0) || !delay.is_finite() {
        return Err(Error::Argument(format!("delay {delay} must be non-negative")));
    }
    if len < 2 {
        return Err(Error::Argument("kernel needs at least two taps".into()));
    }
    let whole = delay.floor();
    let frac = delay - whole;
    if frac == 0.0 {
        return Ok(FractionalDelay {
            taps: vec![1.0],
            offset: whole as i64,
        });
    }
    let centre = (len / 2 - 1) as f64;
    let l = len as f64;
    let mut taps: Vec<f64> = (0..len)
        .map(|t| {
            let x = t as f64 - centre - frac;
            let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
            sinc * 0.5 * (1.0 + (2.0 * PI * x / l).cos())
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|v| *v /= sum);
    Ok(FractionalDelay {
        taps,
        offset: whole as i64 - (len / 2 - 1) as i64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSource {
    pub position: [f64; 3],
    pub signal: Option<Vec<f64>>,
}

impl SceneSource {
    pub fn at(position: [f64; 3]) -> Self {
        Self {
            position,
            signal: None,
        }
    }

    pub fn with_signal(position: [f64; 3], signal: Vec<f64>) -> Self {
        Self {
            position,
            signal: Some(signal),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub room: RoomSpec,
    pub sources: Vec<SceneSource>,
    pub receiver: [f64; 3],
    pub sh_order: usize,
    pub kernel_len: usize,
}

impl Scene {
    pub fn new(room: RoomSpec, sources: Vec<SceneSource>, receiver: [f64; 3], sh_order: usize) -> Result<Self> {
        let scene = Self {
            room,
            sources,
            receiver,
            sh_order,
            kernel_len: DEFAULT_KERNEL_LEN,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        if self.sources.is_empty() {
            return Err(Error::Argument("a scene needs at least one source".into()));
        }
        self.room.check_inside(self.receiver, "receiver")?;
        for (i, src) in self.sources.iter().enumerate() {
            self.room.check_inside(src.position, &format!("source {i}"))?;
        }
        if self.kernel_len < 2 {
            return Err(Error::Argument("kernel length must be at least 2".into()));
        }
        Ok(())
    }

    /// Samples needed to hold every image of every source.
    pub fn arir_len(&self) -> Result<usize> {
        let mut max_delay: f64 = 0.0;
        for src in &self.sources {
            for img in compute_images(&self.room, src.position, self.receiver)? {
                max_delay = max_delay.max(img.delay_samples);
            }
        }
        Ok(max_delay.ceil() as usize + self.kernel_len + 1)
    }
}

/// `(n_coeffs, len)` ARIR of one source.
fn source_arir(scene: &Scene, position: [f64; 3], len: usize) -> Result<ndarray::Array2<f64>> {
    let q = n_coeffs(scene.sh_order);
    let mut out = ndarray::Array2::<f64>::zeros((q, len));
    let mut y = vec![0.0; q];
    for img in compute_images(&scene.room, position, scene.receiver)? {
        let (az, el) = image_direction(&img, scene.receiver)?;
        sh_vector_into(scene.sh_order, az, el, &mut y);
        let k = fractional_delay_kernel(img.delay_samples, scene.kernel_len)?;
        let skip = (-k.offset).max(0) as usize;
        if skip >= k.taps.len() {
            continue;
        }
        let start = (k.offset + skip as i64) as usize;
        let taps = &k.taps[skip..];
        for (ch, &yc) in y.iter().enumerate() {
            let g = img.amplitude * yc;
            let mut row = out.slice_mut(s![ch, start..start + taps.len()]);
            row.iter_mut().zip(taps).for_each(|(o, t)| *o += g * t);
        }
    }
    Ok(out)
}

/// Per-source ARIRs as an `(n_sources, (N+1)^2, len)` SH signal.
pub fn compute_arir(scene: &Scene) -> Result<SpatialSignal> {
    scene.validate()?;
    let len = scene.arir_len()?;
    let per_source: Vec<_> = scene
        .sources
        .par_iter()
        .map(|src| source_arir(scene, src.position, len))
        .collect::<Result<_>>()?;
    let mut data = Array3::<f64>::zeros((scene.sources.len(), n_coeffs(scene.sh_order), len));
    for (i, a) in per_source.into_iter().enumerate() {
        data.slice_mut(s![i, .., ..]).assign(&a);
    }
    SpatialSignal::time_sh(data, scene.room.fs, scene.sh_order)
}

/// Every source's ARIR convolved with its dry signal and summed into one
/// `(1, (N+1)^2, len)` SH stream.
pub fn compute_amb(scene: &Scene) -> Result<SpatialSignal> {
    scene.validate()?;
    let dry: Vec<&Vec<f64>> = scene
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.signal
                .as_ref()
                .filter(|d| !d.is_empty())
                .ok_or_else(|| Error::IncompleteScene(format!("source {i} has no dry signal")))
        })
        .collect::<Result<_>>()?;
    let arir = compute_arir(scene)?;
    let a = arir.real().expect("time-domain ARIR");
    let len = a.dim().2 + dry.iter().map(|d| d.len()).max().unwrap_or(1) - 1;
    let q = a.dim().1;
    let channels: Vec<Vec<f64>> = (0..q)
        .into_par_iter()
        .map(|ch| {
            let mut acc = vec![0.0; len];
            for (si, d) in dry.iter().enumerate() {
                let h = a.slice(s![si, ch, ..]).to_vec();
                let y = convolve_slices(d, &h);
                acc.iter_mut().zip(y).for_each(|(o, v)| *o += v);
            }
            acc
        })
        .collect();
    let mut data = Array3::<f64>::zeros((1, q, len));
    for (ch, v) in channels.into_iter().enumerate() {
        data.slice_mut(s![0, ch, ..])
            .iter_mut()
            .zip(v)
            .for_each(|(o, x)| *o = x);
    }
    SpatialSignal::time_sh(data, scene.room.fs, scene.sh_order)
}
