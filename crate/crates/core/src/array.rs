//! Spherical microphone arrays: modal steering matrices and the ASM / BSM
//! matching encoders.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::{s, Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{angles_to_cartesian, cartesian_to_angles, DirectionGrid};
use crate::hrtf::{magls, HrtfSet};
use crate::ism::DEFAULT_SPEED_OF_SOUND;
use crate::sh::{n_coeffs, sh_basis};
use crate::special::{derivative, legendre_p, spherical_h2n, spherical_jn};

const FOUR_PI: f64 = 4.0 * PI;
const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sphere {
    Rigid,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceModel {
    PlaneWave,
    PointSource,
}

/// Smooth order cut-off `1 / (1 + exp(slope (n - ka - offset)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidMask {
    pub slope: f64,
    pub offset: f64,
}

impl Default for SigmoidMask {
    fn default() -> Self {
        Self {
            slope: 5.0,
            offset: 1.0,
        }
    }
}

impl SigmoidMask {
    pub fn weight(&self, n: usize, ka: f64) -> f64 {
        1.0 / (1.0 + (self.slope * (n as f64 - ka - self.offset)).exp())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArraySpec {
    pub capsules: Arc<DirectionGrid>,
    pub radius: f64,
    pub sphere: Sphere,
    pub source_model: SourceModel,
    pub sm_order: usize,
    pub fs: f64,
    pub c: f64,
    pub mask: Option<SigmoidMask>,
}

impl ArraySpec {
    pub fn new(
        capsules: Arc<DirectionGrid>,
        radius: f64,
        sphere: Sphere,
        source_model: SourceModel,
        sm_order: usize,
        fs: f64,
    ) -> Result<Self> {
        let spec = Self {
            capsules,
            radius,
            sphere,
            source_model,
            sm_order,
            fs,
            c: DEFAULT_SPEED_OF_SOUND,
            mask: Some(SigmoidMask::default()),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_mask(mut self, mask: Option<SigmoidMask>) -> Self {
        self.mask = mask;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Geometry(format!("array radius {} must be positive", self.radius)));
        }
        if !(self.fs > 0.0) || !(self.c > 0.0) {
            return Err(Error::Argument("fs and c must be positive".into()));
        }
        Ok(())
    }

    pub fn n_capsules(&self) -> usize {
        self.capsules.n_dirs()
    }

    /// `N c / (2 pi a)`.
    pub fn aliasing_frequency(&self, order: usize) -> f64 {
        aliasing_frequency(order, self.radius, self.c)
    }
}

pub fn aliasing_frequency(order: usize, radius: f64, c: f64) -> f64 {
    order as f64 * c / (2.0 * PI * radius)
}

/// Modal radial coefficients `B_n` per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialTerm {
    /// Shape `(n_bins, N_SM + 1)`.
    pub b: Array2<Complex64>,
    pub freqs: Vec<f64>,
    pub sphere: Sphere,
    pub source_model: SourceModel,
    pub source_distance: Option<f64>,
}

fn i_pow(n: usize) -> Complex64 {
    match n % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// `B_0..=B_n_max` at wavenumber `k`.
pub fn radial_at(
    sphere: Sphere,
    radius: f64,
    k: f64,
    source_distance: Option<f64>,
    n_max: usize,
) -> Result<Vec<Complex64>> {
    if let Some(rs) = source_distance {
        if !(rs > radius) || !rs.is_finite() {
            return Err(Error::Geometry(format!(
                "point source at {rs} m must lie outside the array radius {radius} m"
            )));
        }
    }
    if k == 0.0 {
        return Ok((0..=n_max)
            .map(|n| {
                let v = match (source_distance, sphere) {
                    (None, _) => {
                        if n == 0 {
                            FOUR_PI
                        } else {
                            0.0
                        }
                    }
                    (Some(rs), Sphere::Open) => FOUR_PI * (radius / rs).powi(n as i32) / (2 * n + 1) as f64,
                    (Some(rs), Sphere::Rigid) => FOUR_PI * (radius / rs).powi(n as i32) / (n + 1) as f64,
                };
                Complex64::new(v, 0.0)
            })
            .collect());
    }
    let x = k * radius;
    let j = spherical_jn(n_max + 1, x);
    let mut b: Vec<Complex64> = match sphere {
        Sphere::Open => (0..=n_max).map(|n| i_pow(n) * FOUR_PI * j[n]).collect(),
        Sphere::Rigid => {
            let jd = derivative(&j, x);
            let h = spherical_h2n(n_max + 1, x)?;
            let hd = derivative(&h, x);
            (0..=n_max)
                .map(|n| {
                    let mut den = hd[n];
                    if den.norm() < DENOMINATOR_FLOOR {
                        den = if den.norm() == 0.0 {
                            Complex64::new(DENOMINATOR_FLOOR, 0.0)
                        } else {
                            den / den.norm() * DENOMINATOR_FLOOR
                        };
                    }
                    i_pow(n) * FOUR_PI * (j[n] - jd[n] / den * h[n])
                })
                .collect()
        }
    };
    if let Some(rs) = source_distance {
        let kr = k * rs;
        let h = spherical_h2n(n_max, kr)?;
        let centre = Complex64::from_polar(1.0, kr);
        for (n, v) in b.iter_mut().enumerate() {
            let green = Complex64::new(0.0, -1.0) * kr * h[n] * centre;
            *v = *v / i_pow(n) * green;
        }
    }
    Ok(b)
}

pub fn radial_coefficient(spec: &ArraySpec, source_distance: Option<f64>, nfft: usize) -> Result<RadialTerm> {
    spec.validate()?;
    let distance = match spec.source_model {
        SourceModel::PlaneWave => None,
        SourceModel::PointSource => Some(source_distance.ok_or_else(|| {
            Error::Config("point-source model needs a source distance".into())
        })?),
    };
    let freqs = fft::bin_frequencies(nfft, spec.fs);
    let mut b = Array2::zeros((freqs.len(), spec.sm_order + 1));
    for (i, f) in freqs.iter().enumerate() {
        let k = 2.0 * PI * f / spec.c;
        let row = radial_at(spec.sphere, spec.radius, k, distance, spec.sm_order)?;
        b.row_mut(i).iter_mut().zip(row).for_each(|(o, v)| *o = v);
    }
    Ok(RadialTerm {
        b,
        freqs,
        sphere: spec.sphere,
        source_model: spec.source_model,
        source_distance: distance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SteeringSources {
    /// Far-field directions (a design grid when used for encoder design).
    Directions(Arc<DirectionGrid>),
    /// Positions relative to the array centre, in metres.
    Positions(Vec<[f64; 3]>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringMatrix {
    /// Shape `(n_bins, M, S)`.
    pub v: Array3<Complex64>,
    pub freqs: Vec<f64>,
    pub nfft: usize,
    pub fs: f64,
    /// Source directions with quadrature weights, when sources form a grid.
    pub grid: Option<Arc<DirectionGrid>>,
}

impl SteeringMatrix {
    pub fn from_parts(v: Array3<Complex64>, nfft: usize, fs: f64, grid: Option<Arc<DirectionGrid>>) -> Result<Self> {
        if v.dim().0 != fft::n_bins(nfft) {
            return Err(Error::Shape(format!("{} bins for nfft {nfft}", v.dim().0)));
        }
        if let Some(g) = &grid {
            if g.n_dirs() != v.dim().2 {
                return Err(Error::Shape(format!(
                    "{} sources for a grid of {} directions",
                    v.dim().2,
                    g.n_dirs()
                )));
            }
        }
        Ok(Self {
            v,
            freqs: fft::bin_frequencies(nfft, fs),
            nfft,
            fs,
            grid,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.v.dim().0
    }

    pub fn n_capsules(&self) -> usize {
        self.v.dim().1
    }

    pub fn n_sources(&self) -> usize {
        self.v.dim().2
    }
}

/// Dense source grid for encoder design at `max(order, sm_order) + 2`.
pub fn design_grid(order: usize, sm_order: usize) -> DirectionGrid {
    DirectionGrid::for_order(order.max(sm_order) + 2)
}

/// `V[f, p, s] = sum_n w_n(ka) B_n (2n+1)/(4 pi) P_n(x_p . x_s)`, the
/// addition-theorem form of the double sum over real SH.
pub fn steering_matrix(spec: &ArraySpec, sources: &SteeringSources, nfft: usize) -> Result<SteeringMatrix> {
    spec.validate()?;
    let (dirs, distances, grid): (Vec<[f64; 3]>, Vec<Option<f64>>, _) = match sources {
        SteeringSources::Directions(g) => {
            if spec.source_model == SourceModel::PointSource {
                return Err(Error::Config("point-source model needs source positions".into()));
            }
            (
                (0..g.n_dirs()).map(|i| g.unit_vector(i)).collect(),
                vec![None; g.n_dirs()],
                Some(g.clone()),
            )
        }
        SteeringSources::Positions(ps) => {
            let mut dirs = Vec::with_capacity(ps.len());
            let mut dists = Vec::with_capacity(ps.len());
            for p in ps {
                let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                if r == 0.0 {
                    return Err(Error::Geometry("source at the array centre".into()));
                }
                let (az, el) = cartesian_to_angles(*p);
                dirs.push(angles_to_cartesian(az, el));
                dists.push(match spec.source_model {
                    SourceModel::PlaneWave => None,
                    SourceModel::PointSource => Some(r),
                });
            }
            (dirs, dists, None)
        }
    };
    if dirs.is_empty() {
        return Err(Error::Argument("no sources".into()));
    }
    let n_max = spec.sm_order;
    let m = spec.n_capsules();
    let s_count = dirs.len();
    let mut legendre = Array3::<f64>::zeros((m, s_count, n_max + 1));
    for p in 0..m {
        let xp = spec.capsules.unit_vector(p);
        for (si, xs) in dirs.iter().enumerate() {
            let t = (xp[0] * xs[0] + xp[1] * xs[1] + xp[2] * xs[2]).clamp(-1.0, 1.0);
            for (n, v) in legendre_p(n_max, t).into_iter().enumerate() {
                legendre[[p, si, n]] = v * (2 * n + 1) as f64 / FOUR_PI;
            }
        }
    }
    let freqs = fft::bin_frequencies(nfft, spec.fs);
    let rows: Vec<Array2<Complex64>> = freqs
        .par_iter()
        .map(|&f| {
            let k = 2.0 * PI * f / spec.c;
            let ka = k * spec.radius;
            let mut per_source: Vec<Vec<Complex64>> = Vec::with_capacity(s_count);
            let mut shared: Option<Vec<Complex64>> = None;
            for d in &distances {
                let b = match (d, &shared) {
                    (None, Some(b)) => b.clone(),
                    _ => {
                        let mut b = radial_at(spec.sphere, spec.radius, k, *d, n_max)?;
                        if let Some(mask) = spec.mask {
                            for (n, v) in b.iter_mut().enumerate() {
                                *v *= mask.weight(n, ka);
                            }
                        }
                        if d.is_none() {
                            shared = Some(b.clone());
                        }
                        b
                    }
                };
                per_source.push(b);
            }
            let mut out = Array2::zeros((m, s_count));
            for p in 0..m {
                for si in 0..s_count {
                    let lp = legendre.slice(s![p, si, ..]);
                    out[[p, si]] = per_source[si].iter().zip(lp.iter()).map(|(b, l)| b * *l).sum();
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut v = Array3::zeros((freqs.len(), m, s_count));
    for (i, r) in rows.into_iter().enumerate() {
        v.slice_mut(s![i, .., ..]).assign(&r);
    }
    SteeringMatrix::from_parts(v, nfft, spec.fs, grid)
}

/// Tikhonov damping of `V diag(w) V^H + eps I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Damping {
    /// `eps = lambda * trace(V diag(w) V^H) / M` per bin.
    Relative(f64),
    Absolute(f64),
}

impl Default for Damping {
    fn default() -> Self {
        Damping::Relative(1e-3)
    }
}

fn to_dmatrix(a: ndarray::ArrayView2<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Solves `(V diag(w) V^H + eps I) X = V diag(w) R` for one bin and
/// returns `X^H` (shape `(rhs_cols, M)`).
fn matched_solve(
    v: ndarray::ArrayView2<Complex64>,
    w: &[f64],
    rhs: &DMatrix<Complex64>,
    damping: Damping,
) -> Result<DMatrix<Complex64>> {
    let vm = to_dmatrix(v);
    let mut vw = vm.clone();
    for (j, wj) in w.iter().enumerate() {
        vw.column_mut(j).scale_mut(*wj);
    }
    let mut a = &vw * vm.adjoint();
    let m = a.nrows();
    let eps = match damping {
        Damping::Relative(lambda) => lambda * a.trace().re / m as f64,
        Damping::Absolute(e) => e,
    };
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Argument(format!("damping {eps} must be non-negative")));
    }
    for i in 0..m {
        a[(i, i)] += Complex64::new(eps, 0.0);
    }
    let chol = a.cholesky().ok_or_else(|| {
        Error::IllConditioned("V V^H + eps I is singular; use eps > 0".into())
    })?;
    let diag: Vec<f64> = (0..m).map(|i| chol.l_dirty()[(i, i)].re).collect();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(l, h), d| (l.min(*d), h.max(*d)));
    if eps == 0.0 && !(lo > hi * 1e-7) {
        return Err(Error::IllConditioned(
            "V V^H is numerically singular; use eps > 0".into(),
        ));
    }
    let x = chol.solve(&(vw * rhs));
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::IllConditioned("non-finite encoder filter".into()));
    }
    Ok(x.adjoint())
}

fn grid_weights(v: &SteeringMatrix) -> Result<Arc<DirectionGrid>> {
    v.grid
        .clone()
        .ok_or_else(|| Error::Config("encoder design needs a steering matrix over a direction grid".into()))
}

/// ASM encoder `W = Y^T diag(w) V^H (V diag(w) V^H + eps I)^{-1}` per bin,
/// shape `(n_bins, (N+1)^2, M)`.
pub fn asm_filters(v: &SteeringMatrix, order: usize, damping: Damping) -> Result<Array3<Complex64>> {
    let grid = grid_weights(v)?;
    let y = sh_basis(&grid, order).into_inner();
    let q = n_coeffs(order);
    let rhs = DMatrix::from_fn(y.nrows(), q, |i, j| Complex64::new(y[[i, j]], 0.0));
    let per_bin: Vec<DMatrix<Complex64>> = (0..v.n_bins())
        .into_par_iter()
        .map(|b| matched_solve(v.v.slice(s![b, .., ..]), grid.weights(), &rhs, damping))
        .collect::<Result<_>>()?;
    let mut out = Array3::zeros((v.n_bins(), q, v.n_capsules()));
    for (b, w) in per_bin.into_iter().enumerate() {
        for i in 0..q {
            for j in 0..v.n_capsules() {
                out[[b, i, j]] = w[(i, j)];
            }
        }
    }
    Ok(out)
}

fn same_grid(a: &DirectionGrid, b: &DirectionGrid) -> bool {
    a.n_dirs() == b.n_dirs()
        && (0..a.n_dirs()).all(|i| {
            let (u, v) = (a.unit_vector(i), b.unit_vector(i));
            (u[0] - v[0]).abs() < 1e-9 && (u[1] - v[1]).abs() < 1e-9 && (u[2] - v[2]).abs() < 1e-9
        })
}

/// BSM filters `W^{L/R} = H diag(w) V^H (V diag(w) V^H + eps I)^{-1}`,
/// shape `(2, n_bins, M)`. With `magls_pre = Some((order, fc))` the HRTF
/// above `fc` is replaced by its order-`order` MagLS fit.
pub fn bsm_filters(
    v: &SteeringMatrix,
    hrtf: &HrtfSet,
    damping: Damping,
    magls_pre: Option<(usize, f64)>,
) -> Result<Array3<Complex64>> {
    let grid = grid_weights(v)?;
    if !same_grid(&grid, hrtf.grid()) {
        return Err(Error::Config(
            "HRTF directions differ from the steering design grid".into(),
        ));
    }
    if (hrtf.fs() - v.fs).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "HRTF rate {} differs from array rate {}",
            hrtf.fs(),
            v.fs
        )));
    }
    let mut h = hrtf.spectra(v.nfft)?;
    if let Some((order, fc)) = magls_pre {
        let fit = magls(hrtf, order, fc, v.nfft)?.synthesize(hrtf.grid());
        for (b, f) in v.freqs.iter().enumerate() {
            if *f > fc {
                h.slice_mut(s![.., .., b]).assign(&fit.slice(s![.., .., b]));
            }
        }
    }
    let per_bin: Vec<DMatrix<Complex64>> = (0..v.n_bins())
        .into_par_iter()
        .map(|b| {
            let rhs = DMatrix::from_fn(hrtf.n_dirs(), 2, |p, e| h[[p, e, b]].conj());
            matched_solve(v.v.slice(s![b, .., ..]), grid.weights(), &rhs, damping)
        })
        .collect::<Result<_>>()?;
    let mut out = Array3::zeros((2, v.n_bins(), v.n_capsules()));
    for (b, w) in per_bin.into_iter().enumerate() {
        for e in 0..2 {
            for j in 0..v.n_capsules() {
                out[[e, b, j]] = w[(e, j)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sh::sh_vector;

    fn open_spec(grid: DirectionGrid, radius: f64, sm_order: usize) -> ArraySpec {
        ArraySpec::new(Arc::new(grid), radius, Sphere::Open, SourceModel::PlaneWave, sm_order, 48000.0)
            .unwrap()
            .with_mask(None)
    }

    #[test]
    fn open_plane_zero_crossing() {
        let b = radial_at(Sphere::Open, 1.0, PI, None, 0).unwrap();
        assert!(b[0].norm() < 1e-14);
    }

    #[test]
    fn rigid_terms_decay_above_ka() {
        let b = radial_at(Sphere::Rigid, 1.0, 1.0, None, 10).unwrap();
        for n in 2..10 {
            assert!(b[n + 1].norm() < 0.5 * b[n].norm(), "n={n}");
        }
    }

    #[test]
    fn rigid_wronskian_closed_form() {
        // j_n - j_n'/h_n' h_n = -i / (x^2 h_n'(x))
        let x = 1.7;
        let b = radial_at(Sphere::Rigid, 1.0, x, None, 6).unwrap();
        let h = spherical_h2n(7, x).unwrap();
        let hd = derivative(&h, x);
        for n in 0..=6 {
            let expected = i_pow(n) * FOUR_PI * Complex64::new(0.0, -1.0) / (x * x * hd[n]);
            assert!((b[n] - expected).norm() < 1e-10 * expected.norm(), "n={n}");
        }
    }

    #[test]
    fn point_source_far_field() {
        let k = 2.0 / 0.042;
        for sphere in [Sphere::Open, Sphere::Rigid] {
            let plane = radial_at(sphere, 0.042, k, None, 8).unwrap();
            let point = radial_at(sphere, 0.042, k, Some(100.0), 8).unwrap();
            let num: f64 = plane.iter().zip(&point).map(|(a, b)| (a - b).norm_sqr()).sum();
            let den: f64 = plane.iter().map(|a| a.norm_sqr()).sum();
            assert!((num / den).sqrt() < 1e-2);
        }
        assert!(matches!(
            radial_at(Sphere::Open, 0.042, k, Some(0.04), 3),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn point_source_dc_limit() {
        for sphere in [Sphere::Open, Sphere::Rigid] {
            let dc = radial_at(sphere, 0.05, 0.0, Some(0.5), 4).unwrap();
            let near = radial_at(sphere, 0.05, 1e-4, Some(0.5), 4).unwrap();
            for n in 0..=4 {
                assert!((dc[n] - near[n]).norm() < 1e-5 * FOUR_PI, "{sphere:?} n={n}");
            }
        }
    }

    #[test]
    fn plane_wave_expansion_oracle() {
        // one capsule facing the source: V -> exp(i ka)
        let a = 0.05;
        let grid = DirectionGrid::single(0.4, 0.2).unwrap();
        let spec = open_spec(grid.clone(), a, 20);
        let v = steering_matrix(&spec, &SteeringSources::Directions(Arc::new(grid)), 64).unwrap();
        for (b, f) in v.freqs.iter().enumerate() {
            let ka = 2.0 * PI * f / spec.c * a;
            if ka <= 3.0 {
                let expected = Complex64::from_polar(1.0, ka);
                assert!((v.v[[b, 0, 0]] - expected).norm() < 1e-3, "ka={ka}");
            }
        }
    }

    #[test]
    fn expansion_converges_in_order() {
        let a = 0.08;
        let caps = DirectionGrid::icosadodecahedral32();
        let src = SteeringSources::Directions(Arc::new(DirectionGrid::single(1.0, -0.3).unwrap()));
        let exact = |p: usize, ka: f64| {
            let xp = caps.unit_vector(p);
            let xs = angles_to_cartesian(1.0, -0.3);
            Complex64::from_polar(1.0, ka * (xp[0] * xs[0] + xp[1] * xs[1] + xp[2] * xs[2]))
        };
        let nfft = 128;
        let freqs = fft::bin_frequencies(nfft, 48000.0);
        let k = freqs.iter().position(|f| 2.0 * PI * f / 343.0 * a > 4.0).unwrap();
        let ka = 2.0 * PI * freqs[k] / 343.0 * a;
        let err = |extra: usize| {
            let spec = open_spec(caps.clone(), a, ka.ceil() as usize + extra);
            let v = steering_matrix(&spec, &src, nfft).unwrap();
            (0..32).map(|p| (v.v[[k, p, 0]] - exact(p, ka)).norm()).fold(0.0, f64::max)
        };
        assert!(err(8) <= 0.5 * err(4));
    }

    #[test]
    fn zeroth_order_is_rank_one() {
        let spec = open_spec(DirectionGrid::icosadodecahedral32(), 0.042, 0);
        let src = SteeringSources::Directions(Arc::new(DirectionGrid::for_order(2)));
        let v = steering_matrix(&spec, &src, 32).unwrap();
        let freqs = fft::bin_frequencies(32, 48000.0);
        for (b, f) in freqs.iter().enumerate() {
            let b0 = radial_at(Sphere::Open, 0.042, 2.0 * PI * f / 343.0, None, 0).unwrap()[0];
            for v in v.v.slice(s![b, .., ..]) {
                assert!((v - b0 / FOUR_PI).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn reciprocity_open_plane() {
        let g1 = DirectionGrid::for_order(2);
        let g2 = DirectionGrid::icosadodecahedral32();
        let v12 = steering_matrix(&open_spec(g1.clone(), 0.05, 6), &SteeringSources::Directions(Arc::new(g2.clone())), 32).unwrap();
        let v21 = steering_matrix(&open_spec(g2, 0.05, 6), &SteeringSources::Directions(Arc::new(g1)), 32).unwrap();
        for b in 0..v12.n_bins() {
            for p in 0..v12.n_capsules() {
                for s_ in 0..v12.n_sources() {
                    assert!((v12.v[[b, p, s_]] - v21.v[[b, s_, p]]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn steering_matches_sh_double_sum() {
        let caps = DirectionGrid::icosadodecahedral32();
        let spec = ArraySpec::new(Arc::new(caps.clone()), 0.042, Sphere::Rigid, SourceModel::PlaneWave, 4, 48000.0).unwrap();
        let src = DirectionGrid::single(2.0, 0.5).unwrap();
        let v = steering_matrix(&spec, &SteeringSources::Directions(Arc::new(src)), 16).unwrap();
        let ys = sh_vector(4, 2.0, 0.5);
        let b = 5;
        let f = v.freqs[b];
        let k = 2.0 * PI * f / 343.0;
        let radial = radial_at(Sphere::Rigid, 0.042, k, None, 4).unwrap();
        let mask = SigmoidMask::default();
        for p in 0..32 {
            let (az, el) = caps.direction(p);
            let yp = sh_vector(4, az, el);
            let mut acc = Complex64::default();
            for q in 0..25 {
                let (n, _) = crate::sh::degree_order(q);
                acc += radial[n] * mask.weight(n, k * 0.042) * yp[q] * ys[q];
            }
            assert!((acc - v.v[[b, p, 0]]).norm() < 1e-12);
        }
    }

    #[test]
    fn ideal_array_inverts() {
        // capsules carry the SH coefficients themselves: V = Y^T
        let order = 3;
        let grid = Arc::new(design_grid(order, order));
        let y = sh_basis(&grid, order).into_inner();
        let q = n_coeffs(order);
        let nfft = 4;
        let mut v = Array3::zeros((fft::n_bins(nfft), q, grid.n_dirs()));
        for b in 0..fft::n_bins(nfft) {
            for i in 0..q {
                for p in 0..grid.n_dirs() {
                    v[[b, i, p]] = Complex64::new(y[[p, i]], 0.0);
                }
            }
        }
        let sm = SteeringMatrix::from_parts(v, nfft, 48000.0, Some(grid)).unwrap();
        let w = asm_filters(&sm, order, Damping::Absolute(1e-12)).unwrap();
        for b in 0..fft::n_bins(nfft) {
            for i in 0..q {
                for j in 0..q {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((w[[b, i, j]] - e).norm() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn damping_shrinks_filters() {
        let spec = ArraySpec::new(
            Arc::new(DirectionGrid::icosadodecahedral32()),
            0.042,
            Sphere::Rigid,
            SourceModel::PlaneWave,
            4,
            48000.0,
        )
        .unwrap();
        let grid = Arc::new(design_grid(3, 4));
        let v = steering_matrix(&spec, &SteeringSources::Directions(grid), 64).unwrap();
        let mut prev: Option<Vec<f64>> = None;
        for lambda in [1e-6, 1e-3, 1e-1, 10.0, 1e4] {
            let w = asm_filters(&v, 3, Damping::Relative(lambda)).unwrap();
            assert!(w.iter().all(|x| x.re.is_finite() && x.im.is_finite()));
            let norms: Vec<f64> = (0..v.n_bins())
                .map(|b| w.slice(s![b, .., ..]).iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
                .collect();
            if let Some(p) = &prev {
                for (a, b) in norms.iter().zip(p) {
                    assert!(*a <= b * (1.0 + 1e-9));
                }
            }
            prev = Some(norms);
        }
        assert!(prev.unwrap().iter().all(|n| *n < 1e-2));
    }

    #[test]
    fn singular_without_damping() {
        let spec = open_spec(DirectionGrid::icosadodecahedral32(), 0.042, 1);
        let v = steering_matrix(&spec, &SteeringSources::Directions(Arc::new(design_grid(1, 1))), 16).unwrap();
        assert!(matches!(
            asm_filters(&v, 1, Damping::Absolute(0.0)),
            Err(Error::IllConditioned(_))
        ));
    }

    #[test]
    fn identity_steering_bsm_returns_hrtf() {
        let grid = Arc::new(DirectionGrid::for_order(2));
        let d = grid.n_dirs();
        let nfft = 8;
        let mut v = Array3::zeros((fft::n_bins(nfft), d, d));
        for b in 0..fft::n_bins(nfft) {
            for p in 0..d {
                v[[b, p, p]] = Complex64::new(1.0, 0.0);
            }
        }
        let sm = SteeringMatrix::from_parts(v, nfft, 48000.0, Some(grid.clone())).unwrap();
        let irs = Array3::from_shape_fn((d, 2, 8), |(p, e, t)| ((p * 7 + e * 3 + t) % 5) as f64 - 2.0);
        let set = HrtfSet::new(grid, irs, 48000.0).unwrap();
        let w = bsm_filters(&sm, &set, Damping::Absolute(1e-12), None).unwrap();
        let h = set.spectra(nfft).unwrap();
        for e in 0..2 {
            for b in 0..fft::n_bins(nfft) {
                for p in 0..d {
                    assert!((w[[e, b, p]] - h[[p, e, b]]).norm() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn bsm_rejects_foreign_grid() {
        let spec = open_spec(DirectionGrid::icosadodecahedral32(), 0.042, 1);
        let v = steering_matrix(&spec, &SteeringSources::Directions(Arc::new(design_grid(1, 1))), 16).unwrap();
        let other = Arc::new(DirectionGrid::for_order(5));
        let set = HrtfSet::new(other.clone(), Array3::zeros((other.n_dirs(), 2, 4)), 48000.0).unwrap();
        assert!(matches!(bsm_filters(&v, &set, Damping::default(), None), Err(Error::Config(_))));
    }
}
