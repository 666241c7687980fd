//! Shoebox image sources.
//!
//! Images are indexed by an integer lattice `(i, j, k)`: along each axis an
//! even index `2n` places the image at `p + 2nL`, an odd index `2n - 1` at
//! `-p + 2nL`. `|i|` is the number of wall hits along that axis, so the
//! reflection order of an image is `|i| + |j| + |k|`.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::grid::cartesian_to_angles;

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

static ISM_RUNS: AtomicU64 = AtomicU64::new(0);

/// Process-wide number of [`compute_images`] calls so far.
pub fn ism_runs() -> u64 {
    ISM_RUNS.load(Ordering::Relaxed)
}

/// Per-wall energy absorption in `[0, 1)`, ordered
/// `[x=0, x=Lx, y=0, y=Ly, z=0, z=Lz]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Absorption(pub [f64; 6]);

impl Absorption {
    pub fn uniform(alpha: f64) -> Self {
        Self([alpha; 6])
    }

    /// Pressure reflection coefficients `sqrt(1 - alpha)`.
    pub fn reflection(&self) -> [f64; 6] {
        self.0.map(|a| (1.0 - a).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomSpec {
    pub dimensions: [f64; 3],
    pub absorption: Absorption,
    pub max_ism_order: usize,
    pub fs: f64,
    pub c: f64,
}

impl RoomSpec {
    pub fn new(dimensions: [f64; 3], absorption: Absorption, max_ism_order: usize, fs: f64) -> Result<Self> {
        let room = Self {
            dimensions,
            absorption,
            max_ism_order,
            fs,
            c: DEFAULT_SPEED_OF_SOUND,
        };
        room.validate()?;
        Ok(room)
    }

    pub fn with_speed_of_sound(mut self, c: f64) -> Result<Self> {
        self.c = c;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::Geometry(format!(
                "room dimensions {:?} must be positive",
                self.dimensions
            )));
        }
        if let Some(a) = self.absorption.0.iter().find(|a| !(0.0..1.0).contains(*a)) {
            return Err(Error::Argument(format!("absorption {a} outside [0, 1)")));
        }
        if !(self.fs > 0.0) || !(self.c > 0.0) {
            return Err(Error::Argument("fs and c must be positive".into()));
        }
        Ok(())
    }

    /// Fails unless `p` lies strictly inside the box.
    pub fn check_inside(&self, p: [f64; 3], what: &str) -> Result<()> {
        for (axis, (&v, &l)) in p.iter().zip(&self.dimensions).enumerate() {
            if !(v > 0.0 && v < l) {
                return Err(Error::Geometry(format!(
                    "{what} at {p:?} is not strictly inside the room (axis {axis}, extent {l})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSource {
    pub lattice: [i64; 3],
    pub position: [f64; 3],
    pub reflection_order: usize,
    pub amplitude: f64,
    pub distance: f64,
    /// `distance * fs / c`, fractional.
    pub delay_samples: f64,
}

/// Image position and `(hits on low wall, hits on high wall)` along one axis.
fn axis_image(index: i64, p: f64, l: f64) -> (f64, u32, u32) {
    let pos = if index % 2 == 0 {
        p + index as f64 * l
    } else {
        -p + (index + 1) as f64 * l
    };
    let a = index.unsigned_abs() as u32;
    let (low, high) = if index >= 0 {
        (a / 2, a.div_ceil(2))
    } else {
        (a.div_ceil(2), a / 2)
    };
    (pos, low, high)
}

/// All images with reflection order up to `room.max_ism_order`, ordered
/// lexicographically by lattice index.
pub fn compute_images(room: &RoomSpec, source: [f64; 3], receiver: [f64; 3]) -> Result<Vec<ImageSource>> {
    ISM_RUNS.fetch_add(1, Ordering::Relaxed);
    room.validate()?;
    room.check_inside(source, "source")?;
    room.check_inside(receiver, "receiver")?;
    let r = room.max_ism_order as i64;
    let beta = room.absorption.reflection();
    let mut out = Vec::with_capacity(image_count(room.max_ism_order));
    for i in -r..=r {
        let ri = r - i.abs();
        for j in -ri..=ri {
            let rj = ri - j.abs();
            for k in -rj..=rj {
                let idx = [i, j, k];
                let mut position = [0.0; 3];
                let mut gain = 1.0;
                for axis in 0..3 {
                    let (pos, low, high) = axis_image(idx[axis], source[axis], room.dimensions[axis]);
                    position[axis] = pos;
                    gain *= beta[2 * axis].powi(low as i32) * beta[2 * axis + 1].powi(high as i32);
                }
                let distance = dist(position, receiver);
                out.push(ImageSource {
                    lattice: idx,
                    position,
                    reflection_order: (i.abs() + j.abs() + k.abs()) as usize,
                    amplitude: gain / distance,
                    distance,
                    delay_samples: distance * room.fs / room.c,
                });
            }
        }
    }
    Ok(out)
}

/// Number of lattice points with `|i| + |j| + |k| <= order`.
pub fn image_count(order: usize) -> usize {
    let r = order;
    (2 * r + 1) * (2 * r * r + 2 * r + 3) / 3
}

/// Arrival direction of an image at the receiver: `(azimuth, elevation)`.
pub fn image_direction(img: &ImageSource, receiver: [f64; 3]) -> Result<(f64, f64)> {
    let v = [
        img.position[0] - receiver[0],
        img.position[1] - receiver[1],
        img.position[2] - receiver[2],
    ];
    if v == [0.0; 3] {
        return Err(Error::Geometry("image coincides with the receiver".into()));
    }
    Ok(cartesian_to_angles(v))
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
