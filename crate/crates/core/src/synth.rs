//! Analytic rigid-sphere HRTFs for dataset-free testing.
//!
//! Each ear is a point on a rigid sphere (left at azimuth 90°, right at
//! 270°, both on the horizontal plane). The pressure for a unit plane wave
//! from direction `s` is the modal sum `sum_n B_n(ka) (2n+1)/(4 pi) P_n(e.s)`,
//! truncated at `max_order` so the set is exactly band-limited in SH.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::array::{radial_at, Sphere};
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{angles_to_cartesian, DirectionGrid};
use crate::hrtf::HrtfSet;
use crate::ism::DEFAULT_SPEED_OF_SOUND;
use crate::special::legendre_p;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticHrtfParams {
    pub radius: f64,
    pub grid: Arc<DirectionGrid>,
    pub taps: usize,
    pub fs: f64,
    pub max_order: usize,
    /// Whole-sample delay so the response is causal within `taps`.
    pub bulk_delay: usize,
    pub c: f64,
}

impl Default for SyntheticHrtfParams {
    fn default() -> Self {
        Self {
            radius: 0.0875,
            grid: Arc::new(DirectionGrid::for_order(30)),
            taps: 128,
            fs: 48000.0,
            max_order: 30,
            bulk_delay: 32,
            c: DEFAULT_SPEED_OF_SOUND,
        }
    }
}

pub const LEFT_EAR_AZIMUTH: f64 = PI / 2.0;
pub const RIGHT_EAR_AZIMUTH: f64 = 3.0 * PI / 2.0;

pub fn generate_synthetic_hrtf(params: &SyntheticHrtfParams) -> Result<HrtfSet> {
    if !(params.radius > 0.0) {
        return Err(Error::Geometry(format!("head radius {} must be positive", params.radius)));
    }
    if params.taps < 2 || params.bulk_delay >= params.taps {
        return Err(Error::Argument("bulk delay must fit inside the taps".into()));
    }
    let nfft = params.taps;
    let freqs = fft::bin_frequencies(nfft, params.fs);
    let n_max = params.max_order;
    let radial: Vec<Vec<Complex64>> = freqs
        .iter()
        .map(|f| radial_at(Sphere::Rigid, params.radius, 2.0 * PI * f / params.c, None, n_max))
        .collect::<Result<_>>()?;
    let ears = [
        angles_to_cartesian(LEFT_EAR_AZIMUTH, 0.0),
        angles_to_cartesian(RIGHT_EAR_AZIMUTH, 0.0),
    ];
    let grid = &params.grid;
    let rows: Vec<[Vec<f64>; 2]> = (0..grid.n_dirs())
        .into_par_iter()
        .map(|p| {
            let sdir = grid.unit_vector(p);
            ears.map(|e| {
                let t = (e[0] * sdir[0] + e[1] * sdir[1] + e[2] * sdir[2]).clamp(-1.0, 1.0);
                let leg: Vec<f64> = legendre_p(n_max, t)
                    .into_iter()
                    .enumerate()
                    .map(|(n, v)| v * (2 * n + 1) as f64 / (4.0 * PI))
                    .collect();
                let spec: Vec<Complex64> = freqs
                    .iter()
                    .zip(&radial)
                    .map(|(f, b)| {
                        let h: Complex64 = b.iter().zip(&leg).map(|(bn, l)| bn * *l).sum();
                        let delay = -2.0 * PI * f * params.bulk_delay as f64 / params.fs;
                        h * Complex64::from_polar(1.0, delay)
                    })
                    .collect();
                fft::irfft(&spec, nfft)
            })
        })
        .collect();
    let mut irs = Array3::zeros((grid.n_dirs(), 2, params.taps));
    for (p, pair) in rows.into_iter().enumerate() {
        for (e, ir) in pair.into_iter().enumerate() {
            irs.slice_mut(s![p, e, ..])
                .iter_mut()
                .zip(ir)
                .for_each(|(o, v)| *o = v);
        }
    }
    HrtfSet::new(grid.clone(), irs, params.fs)
}
