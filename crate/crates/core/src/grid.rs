//! Direction grids on the unit sphere with quadrature weights.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

const FOUR_PI: f64 = 4.0 * PI;

/// A set of directions with quadrature weights summing to 4π.
///
/// Azimuth is measured counter-clockwise from +x in the horizontal plane,
/// elevation upward from the horizontal plane.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionGrid {
    azimuths: Vec<f64>,
    elevations: Vec<f64>,
    weights: Vec<f64>,
}

impl DirectionGrid {
    pub fn new(azimuths: Vec<f64>, elevations: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if azimuths.len() != elevations.len() || azimuths.len() != weights.len() {
            return Err(Error::InvalidGrid(format!(
                "length mismatch: {} azimuths, {} elevations, {} weights",
                azimuths.len(),
                elevations.len(),
                weights.len()
            )));
        }
        if azimuths.is_empty() {
            return Err(Error::InvalidGrid("grid has no directions".into()));
        }
        let mut az_out = Vec::with_capacity(azimuths.len());
        for (i, (&az, &el)) in azimuths.iter().zip(&elevations).enumerate() {
            if !az.is_finite() || !el.is_finite() {
                return Err(Error::InvalidGrid(format!("direction {i} is not finite")));
            }
            if !(-PI / 2.0 - 1e-12..=PI / 2.0 + 1e-12).contains(&el) {
                return Err(Error::InvalidGrid(format!(
                    "direction {i} has elevation {el} outside [-pi/2, pi/2]"
                )));
            }
            az_out.push(wrap_azimuth(az));
        }
        let elevations = elevations
            .into_iter()
            .map(|e| e.clamp(-PI / 2.0, PI / 2.0))
            .collect();
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "weight {i} is not strictly positive"
            )));
        }
        let total: f64 = weights.iter().sum();
        if ((total - FOUR_PI) / FOUR_PI).abs() > 1e-6 {
            return Err(Error::InvalidGrid(format!(
                "weights sum to {total}, expected 4*pi"
            )));
        }
        Ok(Self {
            azimuths: az_out,
            elevations,
            weights,
        })
    }

    /// Equal-weight grid over the given directions.
    pub fn equal_weights(azimuths: Vec<f64>, elevations: Vec<f64>) -> Result<Self> {
        let n = azimuths.len().max(1);
        let weights = vec![FOUR_PI / n as f64; azimuths.len()];
        Self::new(azimuths, elevations, weights)
    }

    pub fn single(azimuth: f64, elevation: f64) -> Result<Self> {
        Self::new(vec![azimuth], vec![elevation], vec![FOUR_PI])
    }

    /// Gauss-Legendre nodes in `sin(elevation)` times equiangular azimuths.
    ///
    /// Exact for spherical polynomials of degree `min(2*n_theta - 1, n_phi - 1)`.
    pub fn gauss_legendre(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::Argument("gauss-legendre grid needs n_theta, n_phi >= 1".into()));
        }
        let (nodes, gl_weights) = gauss_legendre_nodes(n_theta);
        let dphi = TAU / n_phi as f64;
        let n = n_theta * n_phi;
        let mut az = Vec::with_capacity(n);
        let mut el = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for (x, gw) in nodes.iter().zip(&gl_weights) {
            for j in 0..n_phi {
                az.push(j as f64 * dphi);
                el.push(x.asin());
                w.push(gw * dphi);
            }
        }
        Self::new(az, el, w)
    }

    /// Smallest Gauss-Legendre product grid exact to degree `2 * order`.
    pub fn for_order(order: usize) -> Self {
        Self::gauss_legendre(order + 1, 2 * order + 1).expect("non-empty grid")
    }

    /// 32 directions at the vertices of an icosahedron (12) and its dual
    /// dodecahedron (20), i.e. the face centres of a truncated icosahedron.
    pub fn icosadodecahedral32() -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut pts: Vec<[f64; 3]> = Vec::with_capacity(32);
        for &a in &[-1.0, 1.0] {
            for &b in &[-phi, phi] {
                pts.push([0.0, a, b]);
                pts.push([a, b, 0.0]);
                pts.push([b, 0.0, a]);
            }
        }
        let inv = 1.0 / phi;
        for &a in &[-1.0, 1.0] {
            for &b in &[-1.0, 1.0] {
                for &c in &[-1.0, 1.0] {
                    pts.push([a, b, c]);
                }
                pts.push([0.0, a * inv, b * phi]);
                pts.push([a * inv, b * phi, 0.0]);
                pts.push([a * phi, 0.0, b * inv]);
            }
        }
        let (az, el): (Vec<f64>, Vec<f64>) = pts.iter().map(|p| cartesian_to_angles(*p)).unzip();
        Self::equal_weights(az, el).expect("valid polyhedral grid")
    }

    pub fn n_dirs(&self) -> usize {
        self.azimuths.len()
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn direction(&self, i: usize) -> (f64, f64) {
        (self.azimuths[i], self.elevations[i])
    }

    pub fn unit_vector(&self, i: usize) -> [f64; 3] {
        angles_to_cartesian(self.azimuths[i], self.elevations[i])
    }

    pub fn unit_vectors(&self) -> Vec<[f64; 3]> {
        (0..self.n_dirs()).map(|i| self.unit_vector(i)).collect()
    }

    /// Index of the direction with the largest dot product to `v`; ties go
    /// to the lower index.
    pub fn nearest(&self, v: [f64; 3]) -> usize {
        nearest_of(&self.unit_vectors(), v)
    }
}

/// [`DirectionGrid::nearest`] over precomputed unit vectors.
pub fn nearest_of(units: &[[f64; 3]], v: [f64; 3]) -> usize {
    let mut best = 0;
    let mut best_dot = f64::NEG_INFINITY;
    for (i, u) in units.iter().enumerate() {
        let d = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
        if d > best_dot {
            best_dot = d;
            best = i;
        }
    }
    best
}

pub fn wrap_azimuth(az: f64) -> f64 {
    let w = az.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

pub fn angles_to_cartesian(azimuth: f64, elevation: f64) -> [f64; 3] {
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    [ce * ca, ce * sa, se]
}

/// `(azimuth, elevation)` of a non-zero vector. Azimuth is 0 on the poles.
pub fn cartesian_to_angles(v: [f64; 3]) -> (f64, f64) {
    let horiz = v[0].hypot(v[1]);
    let el = v[2].atan2(horiz);
    let az = if horiz == 0.0 {
        0.0
    } else {
        wrap_azimuth(v[1].atan2(v[0]))
    };
    (az, el)
}

/// Gauss-Legendre nodes (ascending) and weights on [-1, 1].
pub fn gauss_legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
