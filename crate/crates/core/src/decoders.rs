//! Processors over [`SpatialSignal`]s and kernel-collapsing chains.
//!
//! Every processor here is linear and time-invariant, described by a
//! per-bin transfer matrix `(n_out, n_in)`. Time-domain inputs are padded by
//! the processor's tail, transformed once, multiplied and transformed back.
//! Frequency-domain inputs are multiplied in place at their own `nfft`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use ndarray::{s, Array2, Array3};
use num_complex::Complex64;

use crate::array::{asm_filters, bsm_filters, design_grid, steering_matrix, ArraySpec, Damping, SteeringSources};
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::DirectionGrid;
use crate::hrtf::{HrtfSet, ShHrtf};
use crate::sh::{degree_order, n_coeffs, sh_vector, WignerDMatrix};
use crate::signal::{SignalData, SpaceDomain, SpatialSignal, TimeDomain};

/// Spatial layout of a processor's input or output.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub space: SpaceDomain,
    pub n_spatial: usize,
    pub sh_order: usize,
    pub grid: Option<Arc<DirectionGrid>>,
    pub fs: f64,
}

impl Layout {
    pub fn of(sig: &SpatialSignal) -> Self {
        Self {
            space: sig.space_domain(),
            n_spatial: sig.n_spatial(),
            sh_order: sig.sh_order(),
            grid: sig.grid().cloned(),
            fs: sig.fs(),
        }
    }

    fn sh(order: usize, fs: f64) -> Self {
        Self {
            space: SpaceDomain::Sh,
            n_spatial: n_coeffs(order),
            sh_order: order,
            grid: None,
            fs,
        }
    }

    fn space(n: usize, grid: Option<Arc<DirectionGrid>>, fs: f64) -> Self {
        Self {
            space: SpaceDomain::Space,
            n_spatial: n,
            sh_order: 0,
            grid,
            fs,
        }
    }
}

/// Frequency-domain transfer matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `(n_bins, n_out, n_in)`.
    PerBin(Array3<Complex64>),
    /// Frequency-independent real `(n_out, n_in)`.
    Constant(Array2<f64>),
}

impl Kernel {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Kernel::PerBin(k) => (k.dim().1, k.dim().2),
            Kernel::Constant(k) => k.dim(),
        }
    }

    /// `self` after `first`: per-bin product `self * first`.
    pub fn compose(&self, first: &Kernel) -> Kernel {
        match (self, first) {
            (Kernel::Constant(a), Kernel::Constant(b)) => Kernel::Constant(a.dot(b)),
            (a, b) => {
                let bins = match (a, b) {
                    (Kernel::PerBin(k), _) | (_, Kernel::PerBin(k)) => k.dim().0,
                    _ => unreachable!(),
                };
                let (o, _) = a.shape();
                let (_, i) = b.shape();
                let mut out = Array3::zeros((bins, o, i));
                for bin in 0..bins {
                    let prod = a.at(bin).dot(&b.at(bin));
                    out.slice_mut(s![bin, .., ..]).assign(&prod);
                }
                Kernel::PerBin(out)
            }
        }
    }

    fn at(&self, bin: usize) -> Array2<Complex64> {
        match self {
            Kernel::PerBin(k) => k.slice(s![bin, .., ..]).to_owned(),
            Kernel::Constant(k) => k.mapv(|v| Complex64::new(v, 0.0)),
        }
    }

    /// `y[c, o, b] = sum_i K[b, o, i] x[c, i, b]`.
    pub fn apply(&self, x: &Array3<Complex64>) -> Array3<Complex64> {
        let (c, n_in, bins) = x.dim();
        let (n_out, k_in) = self.shape();
        debug_assert_eq!(n_in, k_in);
        let mut y = Array3::<Complex64>::zeros((c, n_out, bins));
        for ci in 0..c {
            for o in 0..n_out {
                for i in 0..n_in {
                    match self {
                        Kernel::PerBin(k) => {
                            for b in 0..bins {
                                y[[ci, o, b]] += k[[b, o, i]] * x[[ci, i, b]];
                            }
                        }
                        Kernel::Constant(k) => {
                            let g = k[[o, i]];
                            if g != 0.0 {
                                for b in 0..bins {
                                    y[[ci, o, b]] += x[[ci, i, b]] * g;
                                }
                            }
                        }
                    }
                }
            }
        }
        fft::count_kernel_macs((c * n_out * n_in * bins) as u64);
        y
    }
}

pub trait Processor: Send + Sync {
    fn name(&self) -> String;

    /// Expected input space domain.
    fn input_space(&self) -> SpaceDomain;

    fn output_space(&self) -> SpaceDomain;

    /// Output layout for a given input; rejects incompatible inputs.
    fn output_layout(&self, input: &Layout) -> Result<Layout>;

    /// Transfer matrices at `nfft` for a given input.
    fn kernel(&self, input: &Layout, nfft: usize) -> Result<Kernel>;

    /// Samples appended to time-domain outputs.
    fn tail(&self) -> usize {
        0
    }

    fn process(&self, x: &SpatialSignal) -> Result<SpatialSignal> {
        run_linear(&[self], x)
    }
}

fn check_space(p: &dyn Processor, input: &Layout) -> Result<()> {
    if input.space != p.input_space() {
        return Err(Error::Dimension(format!(
            "{} expects {:?} input, got {:?}",
            p.name(),
            p.input_space(),
            input.space
        )));
    }
    Ok(())
}

/// Applies a sequence of linear processors with one forward and one
/// inverse transform for time-domain inputs.
fn run_linear<P: Processor + ?Sized>(stages: &[&P], x: &SpatialSignal) -> Result<SpatialSignal> {
    let mut layouts = vec![Layout::of(x)];
    for p in stages {
        let next = p.output_layout(layouts.last().unwrap())?;
        layouts.push(next);
    }
    let tail: usize = stages.iter().map(|p| p.tail()).sum();
    let mut sig = x.clone();
    let was_time = sig.time_domain() == TimeDomain::Time;
    let (nfft, out_len) = if was_time {
        let len = sig.n_samples() + tail;
        let nfft = fft::next_pow2(len.max(1));
        sig.to_freq_with_nfft(nfft)?;
        (nfft, len)
    } else {
        let nfft = sig
            .nfft()
            .ok_or_else(|| Error::MalformedSignal("frequency-domain input without nfft".into()))?;
        (nfft, (sig.n_samples() + tail).min(nfft))
    };
    let mut kernel: Option<Kernel> = None;
    for (p, layout) in stages.iter().zip(&layouts) {
        let k = p.kernel(layout, nfft)?;
        kernel = Some(match kernel {
            None => k,
            Some(prev) => k.compose(&prev),
        });
    }
    let spec = sig.spectrum().expect("frequency domain");
    let y = match kernel {
        Some(k) => k.apply(spec),
        None => spec.clone(),
    };
    let out = layouts.last().unwrap();
    let mut result = SpatialSignal::from_spectrum(
        y,
        sig.fs(),
        Some(nfft),
        out_len,
        out.space,
        out.sh_order,
        out.grid.clone(),
    )?;
    if was_time {
        result.transform_time_freq(TimeDomain::Time)?;
    }
    Ok(result)
}

/// SH to two ears by per-bin inner products with SH-domain HRTF filters.
pub struct BinauralDecoder {
    order: usize,
    fs: f64,
    /// SH-domain filters `((N+1)^2, 2, len)`.
    filters: Array3<f64>,
    cache: Mutex<HashMap<(usize, usize), Arc<Array3<Complex64>>>>,
}

impl BinauralDecoder {
    pub fn new(hrtf: &ShHrtf) -> Self {
        let (q, _, _) = hrtf.coeffs().dim();
        let nfft = hrtf.nfft();
        let mut filters = Array3::zeros((q, 2, nfft));
        for qi in 0..q {
            for e in 0..2 {
                let spec: Vec<Complex64> = hrtf.coeffs().slice(s![qi, e, ..]).to_vec();
                let t = fft::irfft(&spec, nfft);
                filters.slice_mut(s![qi, e, ..]).assign(&ndarray::Array1::from(t));
            }
        }
        Self {
            order: hrtf.order(),
            fs: hrtf.fs(),
            filters,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn filter_len(&self) -> usize {
        self.filters.dim().2
    }

    pub fn filters(&self) -> &Array3<f64> {
        &self.filters
    }
}

impl Processor for BinauralDecoder {
    fn name(&self) -> String {
        "BinauralDecoder".into()
    }

    fn input_space(&self) -> SpaceDomain {
        SpaceDomain::Sh
    }

    fn output_space(&self) -> SpaceDomain {
        SpaceDomain::Space
    }

    fn output_layout(&self, input: &Layout) -> Result<Layout> {
        check_space(self, input)?;
        if input.sh_order > self.order {
            return Err(Error::Dimension(format!(
                "signal order {} exceeds HRTF order {}",
                input.sh_order, self.order
            )));
        }
        if (input.fs - self.fs).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "signal rate {} differs from HRTF rate {}",
                input.fs, self.fs
            )));
        }
        Ok(Layout::space(2, None, input.fs))
    }

    fn kernel(&self, input: &Layout, nfft: usize) -> Result<Kernel> {
        self.output_layout(input)?;
        if nfft < self.filter_len() {
            return Err(Error::Argument(format!(
                "nfft {nfft} shorter than the {}-sample decoder filters",
                self.filter_len()
            )));
        }
        let q = n_coeffs(input.sh_order);
        let key = (nfft, q);
        let cached = self.cache.lock().unwrap().get(&key).cloned();
        let k = match cached {
            Some(k) => k,
            None => {
                let bins = fft::n_bins(nfft);
                let mut k = Array3::zeros((bins, 2, q));
                for qi in 0..q {
                    for e in 0..2 {
                        let t: Vec<f64> = self.filters.slice(s![qi, e, ..]).to_vec();
                        for (b, v) in fft::rfft(&t, nfft).into_iter().enumerate() {
                            k[[b, e, qi]] = v;
                        }
                    }
                }
                let k = Arc::new(k);
                self.cache.lock().unwrap().insert(key, k.clone());
                k
            }
        };
        Ok(Kernel::PerBin((*k).clone()))
    }

    fn tail(&self) -> usize {
        self.filter_len() - 1
    }
}

/// SH to capsule signals of a spherical array: `K[p, q] = w_n B_n Y_q(x_p)`.
pub struct ArrayDecoder {
    spec: ArraySpec,
    order: usize,
    tail: usize,
}

impl ArrayDecoder {
    pub fn new(spec: ArraySpec, order: usize) -> Self {
        Self {
            spec,
            order,
            tail: 64,
        }
    }

    pub fn with_tail(mut self, tail: usize) -> Self {
        self.tail = tail;
        self
    }
}

impl Processor for ArrayDecoder {
    fn name(&self) -> String {
        "ArrayDecoder".into()
    }

    fn input_space(&self) -> SpaceDomain {
        SpaceDomain::Sh
    }

    fn output_space(&self) -> SpaceDomain {
        SpaceDomain::Space
    }

    fn output_layout(&self, input: &Layout) -> Result<Layout> {
        check_space(self, input)?;
        if input.sh_order != self.order {
            return Err(Error::Dimension(format!(
                "array decoder of order {} given order {}",
                self.order, input.sh_order
            )));
        }
        Ok(Layout::space(
            self.spec.n_capsules(),
            Some(self.spec.capsules.clone()),
            input.fs,
        ))
    }

    fn kernel(&self, input: &Layout, nfft: usize) -> Result<Kernel> {
        self.output_layout(input)?;
        let q = n_coeffs(self.order);
        let m = self.spec.n_capsules();
        let ys: Vec<Vec<f64>> = (0..m)
            .map(|p| {
                let (az, el) = self.spec.capsules.direction(p);
                sh_vector(self.order, az, el)
            })
            .collect();
        let freqs = fft::bin_frequencies(nfft, input.fs);
        let mut k = Array3::zeros((freqs.len(), m, q));
        for (b, f) in freqs.iter().enumerate() {
            let kk = 2.0 * std::f64::consts::PI * f / self.spec.c;
            let mut radial =
                crate::array::radial_at(self.spec.sphere, self.spec.radius, kk, None, self.order)?;
            if let Some(mask) = self.spec.mask {
                for (n, v) in radial.iter_mut().enumerate() {
                    *v *= mask.weight(n, kk * self.spec.radius);
                }
            }
            for (p, y) in ys.iter().enumerate() {
                for (qi, yv) in y.iter().enumerate() {
                    k[[b, p, qi]] = radial[degree_order(qi).0] * *yv;
                }
            }
        }
        Ok(Kernel::PerBin(k))
    }

    fn tail(&self) -> usize {
        self.tail
    }
}

/// Capsule signals to SH by Tikhonov-regularised signal matching.
pub struct AsmEncoder {
    spec: ArraySpec,
    order: usize,
    damping: Damping,
    tail: usize,
}

impl AsmEncoder {
    pub fn new(spec: ArraySpec, order: usize, damping: Damping) -> Self {
        Self {
            spec,
            order,
            damping,
            tail: 64,
        }
    }

    pub fn with_tail(mut self, tail: usize) -> Self {
        self.tail = tail;
        self
    }
}

fn check_capsules(name: &str, spec: &ArraySpec, input: &Layout) -> Result<()> {
    if input.n_spatial != spec.n_capsules() {
        return Err(Error::Dimension(format!(
            "{name} expects {} capsule channels, got {}",
            spec.n_capsules(),
            input.n_spatial
        )));
    }
    if (input.fs - spec.fs).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "signal rate {} differs from array rate {}",
            input.fs, spec.fs
        )));
    }
    Ok(())
}

impl Processor for AsmEncoder {
    fn name(&self) -> String {
        "AsmEncoder".into()
    }

    fn input_space(&self) -> SpaceDomain {
        SpaceDomain::Space
    }

    fn output_space(&self) -> SpaceDomain {
        SpaceDomain::Sh
    }

    fn output_layout(&self, input: &Layout) -> Result<Layout> {
        check_space(self, input)?;
        check_capsules("AsmEncoder", &self.spec, input)?;
        Ok(Layout::sh(self.order, input.fs))
    }

    fn kernel(&self, input: &Layout, nfft: usize) -> Result<Kernel> {
        self.output_layout(input)?;
        let grid = Arc::new(design_grid(self.order, self.spec.sm_order));
        let v = steering_matrix(&self.spec, &SteeringSources::Directions(grid), nfft)?;
        Ok(Kernel::PerBin(asm_filters(&v, self.order, self.damping)?))
    }

    fn tail(&self) -> usize {
        self.tail
    }
}

/// Capsule signals straight to two ears.
pub struct BsmEncoder {
    spec: ArraySpec,
    hrtf: HrtfSet,
    damping: Damping,
    magls_pre: Option<(usize, f64)>,
    tail: usize,
}

impl BsmEncoder {
    /// `hrtf` must be sampled on [`design_grid`] for the given order.
    pub fn new(spec: ArraySpec, hrtf: HrtfSet, damping: Damping, magls_pre: Option<(usize, f64)>) -> Self {
        let tail = hrtf.taps();
        Self {
            spec,
            hrtf,
            damping,
            magls_pre,
            tail,
        }
    }
}

impl Processor for BsmEncoder {
    fn name(&self) -> String {
        "BsmEncoder".into()
    }

    fn input_space(&self) -> SpaceDomain {
        SpaceDomain::Space
    }

    fn output_space(&self) -> SpaceDomain {
        SpaceDomain::Space
    }

    fn output_layout(&self, input: &Layout) -> Result<Layout> {
        check_space(self, input)?;
        check_capsules("BsmEncoder", &self.spec, input)?;
        Ok(Layout::space(2, None, input.fs))
    }

    fn kernel(&self, input: &Layout, nfft: usize) -> Result<Kernel> {
        self.output_layout(input)?;
        let v = steering_matrix(&self.spec, &SteeringSources::Directions(self.hrtf.grid().clone()), nfft)?;
        let w = bsm_filters(&v, &self.hrtf, self.damping, self.magls_pre)?;
        let (_, bins, m) = w.dim();
        let mut k = Array3::zeros((bins, 2, m));
        for e in 0..2 {
            k.slice_mut(s![.., e, ..]).assign(&w.slice(s![e, .., ..]));
        }
        Ok(Kernel::PerBin(k))
    }

    fn tail(&self) -> usize {
        self.tail
    }
}

/// Wigner-D rotation of SH signals as a constant kernel.
pub struct Rotation {
    d: WignerDMatrix,
}

impl Rotation {
    pub fn new(d: WignerDMatrix) -> Self {
        Self { d }
    }
}

impl Processor for Rotation {
    fn name(&self) -> String {
        "Rotation".into()
    }

    fn input_space(&self) -> SpaceDomain {
        SpaceDomain::Sh
    }

    fn output_space(&self) -> SpaceDomain {
        SpaceDomain::Sh
    }

    fn output_layout(&self, input: &Layout) -> Result<Layout> {
        check_space(self, input)?;
        if input.sh_order != self.d.order() {
            return Err(Error::Dimension(format!(
                "rotation of order {} given order {}",
                self.d.order(),
                input.sh_order
            )));
        }
        Ok(input.clone())
    }

    fn kernel(&self, input: &Layout, _nfft: usize) -> Result<Kernel> {
        self.output_layout(input)?;
        Ok(Kernel::Constant(self.d.matrix()))
    }
}

/// Sequential processors collapsed into one kernel.
pub struct ProcessorChain {
    stages: Vec<Box<dyn Processor>>,
}

impl ProcessorChain {
    pub fn new(stages: Vec<Box<dyn Processor>>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Config("a chain needs at least one processor".into()));
        }
        for w in stages.windows(2) {
            if w[0].output_space() != w[1].input_space() {
                return Err(Error::Config(format!(
                    "{} produces {:?} but {} expects {:?}",
                    w[0].name(),
                    w[0].output_space(),
                    w[1].name(),
                    w[1].input_space()
                )));
            }
        }
        Ok(Self { stages })
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

pub fn chain(stages: Vec<Box<dyn Processor>>) -> Result<ProcessorChain> {
    ProcessorChain::new(stages)
}

impl Processor for ProcessorChain {
    fn name(&self) -> String {
        let names: Vec<String> = self.stages.iter().map(|p| p.name()).collect();
        format!("Chain[{}]", names.join(", "))
    }

    fn input_space(&self) -> SpaceDomain {
        self.stages[0].input_space()
    }

    fn output_space(&self) -> SpaceDomain {
        self.stages.last().unwrap().output_space()
    }

    fn output_layout(&self, input: &Layout) -> Result<Layout> {
        let mut l = input.clone();
        for p in &self.stages {
            l = p.output_layout(&l)?;
        }
        Ok(l)
    }

    fn kernel(&self, input: &Layout, nfft: usize) -> Result<Kernel> {
        let mut l = input.clone();
        let mut k: Option<Kernel> = None;
        for p in &self.stages {
            let next = p.kernel(&l, nfft)?;
            k = Some(match k {
                None => next,
                Some(prev) => next.compose(&prev),
            });
            l = p.output_layout(&l)?;
        }
        Ok(k.unwrap())
    }

    fn tail(&self) -> usize {
        self.stages.iter().map(|p| p.tail()).sum()
    }

    fn process(&self, x: &SpatialSignal) -> Result<SpatialSignal> {
        if self.stages.len() == 1 {
            return self.stages[0].process(x);
        }
        let stages: Vec<&dyn Processor> = self.stages.iter().map(|p| p.as_ref()).collect();
        run_linear(&stages, x)
    }
}

/// Convenience: binaural decode of an SH signal.
pub fn binaural_decode(amb: &SpatialSignal, hrtf: &ShHrtf) -> Result<SpatialSignal> {
    BinauralDecoder::new(hrtf).process(amb)
}

/// Real part of a complex signal tensor, for tests and diagnostics.
pub fn real_data(sig: &SpatialSignal) -> Option<&Array3<f64>> {
    match sig.data() {
        SignalData::Real(x) => Some(x),
        SignalData::Complex(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{Sphere, SourceModel};
    use crate::hrtf::{project_ls, ShHrtfMode};
    use crate::sh::wigner_d_matrix;
    use rand::{rngs::StdRng, Rng, SeedableRng};
    use std::f64::consts::PI;

    fn noise(shape: (usize, usize, usize), seed: u64) -> Array3<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        Array3::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    fn max_diff(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
        assert_eq!(a.dim(), b.dim());
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn flat_order0_hrtf(nfft: usize) -> ShHrtf {
        let mut c = Array3::zeros((1, 2, fft::n_bins(nfft)));
        c.fill(Complex64::new(1.0, 0.0));
        ShHrtf::new(c, 0, ShHrtfMode::Ls, nfft, 48000.0).unwrap()
    }

    #[test]
    fn order_zero_passthrough() {
        let x = noise((1, 1, 300), 1);
        let sig = SpatialSignal::time_sh(x.clone(), 48000.0, 0).unwrap();
        let out = binaural_decode(&sig, &flat_order0_hrtf(16)).unwrap();
        let y = out.real().unwrap();
        assert_eq!(y.dim(), (1, 2, 315));
        for e in 0..2 {
            for t in 0..300 {
                assert!((y[[0, e, t]] - x[[0, 0, t]]).abs() < 1e-12);
            }
            for t in 300..315 {
                assert!(y[[0, e, t]].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decode_is_linear() {
        let set = crate::synth::generate_synthetic_hrtf(&crate::synth::SyntheticHrtfParams {
            grid: Arc::new(DirectionGrid::for_order(4)),
            max_order: 4,
            taps: 64,
            bulk_delay: 16,
            ..Default::default()
        })
        .unwrap();
        let hrtf = project_ls(&set, 3, 64).unwrap();
        let dec = BinauralDecoder::new(&hrtf);
        let a = noise((2, 16, 200), 2);
        let b = noise((2, 16, 200), 3);
        let mix = &a * 0.7 - &b * 1.3;
        let run = |x: Array3<f64>| dec.process(&SpatialSignal::time_sh(x, 48000.0, 3).unwrap()).unwrap();
        let ya = run(a);
        let yb = run(b);
        let ym = run(mix);
        let expected = ya.real().unwrap() * 0.7 - yb.real().unwrap() * 1.3;
        assert!(max_diff(ym.real().unwrap(), &expected) < 1e-10);
        // truncation of a higher-order HRTF is silent, the converse is an error
        let low = SpatialSignal::time_sh(noise((1, 4, 50), 4), 48000.0, 1).unwrap();
        assert!(dec.process(&low).is_ok());
        let high = SpatialSignal::time_sh(noise((1, 25, 50), 5), 48000.0, 4).unwrap();
        assert!(matches!(dec.process(&high), Err(Error::Dimension(_))));
        let other_fs = SpatialSignal::time_sh(noise((1, 16, 50), 6), 44100.0, 3).unwrap();
        assert!(matches!(dec.process(&other_fs), Err(Error::Config(_))));
    }

    #[test]
    fn repeated_decode_reuses_kernel() {
        let dec = BinauralDecoder::new(&flat_order0_hrtf(16));
        let sig = SpatialSignal::time_sh(noise((1, 1, 500), 7), 48000.0, 0).unwrap();
        let before = fft::op_counts();
        dec.process(&sig).unwrap();
        let first = fft::op_counts().since(before);
        let before = fft::op_counts();
        dec.process(&sig).unwrap();
        let one = fft::op_counts().since(before);
        let before = fft::op_counts();
        dec.process(&sig).unwrap();
        let two = fft::op_counts().since(before);
        assert_eq!(one, two);
        assert!(first.transforms > one.transforms);
        assert_eq!((one.forward_passes, one.inverse_passes), (1, 1));
    }

    fn rigid_spec(order: usize) -> ArraySpec {
        ArraySpec::new(
            Arc::new(DirectionGrid::icosadodecahedral32()),
            0.042,
            Sphere::Rigid,
            SourceModel::PlaneWave,
            order,
            48000.0,
        )
        .unwrap()
    }

    #[test]
    fn array_decoder_order_zero() {
        let spec = ArraySpec::new(
            Arc::new(DirectionGrid::icosadodecahedral32()),
            0.042,
            Sphere::Open,
            SourceModel::PlaneWave,
            0,
            48000.0,
        )
        .unwrap()
        .with_mask(None);
        let dec = ArrayDecoder::new(spec, 0);
        let k = dec.kernel(&Layout::sh(0, 48000.0), 32).unwrap();
        let Kernel::PerBin(k) = k else { panic!() };
        let y00 = 1.0 / (4.0 * PI).sqrt();
        // DC: B_0 = 4 pi
        for p in 0..32 {
            assert!((k[[0, p, 0]] - 4.0 * PI * y00).norm() < 1e-12);
        }
    }

    #[test]
    fn array_decoder_matches_steering() {
        let spec = rigid_spec(3);
        let dec = ArrayDecoder::new(spec.clone(), 3);
        let nfft = 64;
        let (az, el) = (0.7, 0.3);
        let src = Arc::new(DirectionGrid::single(az, el).unwrap());
        let v = steering_matrix(&spec, &SteeringSources::Directions(src), nfft).unwrap();
        let a = sh_vector(3, az, el);
        let data = Array3::from_shape_fn((1, 16, fft::n_bins(nfft)), |(_, q, _)| Complex64::new(a[q], 0.0));
        let sig = SpatialSignal::from_spectrum(data, 48000.0, Some(nfft), nfft, SpaceDomain::Sh, 3, None).unwrap();
        let out = dec.process(&sig).unwrap();
        let y = out.spectrum().unwrap();
        for b in 0..fft::n_bins(nfft) {
            for p in 0..32 {
                assert!((y[[0, p, b]] - v.v[[b, p, 0]]).norm() < 1e-6);
            }
        }
        let wrong = SpatialSignal::time_sh(noise((1, 9, 10), 1), 48000.0, 2).unwrap();
        assert!(matches!(dec.process(&wrong), Err(Error::Dimension(_))));
    }

    #[test]
    fn single_stage_chain_is_identity_wrapper() {
        let sig = SpatialSignal::time_sh(noise((1, 1, 100), 8), 48000.0, 0).unwrap();
        let direct = BinauralDecoder::new(&flat_order0_hrtf(16)).process(&sig).unwrap();
        let c = chain(vec![Box::new(BinauralDecoder::new(&flat_order0_hrtf(16)))]).unwrap();
        assert_eq!(c.process(&sig).unwrap(), direct);
    }

    #[test]
    fn array_then_asm_collapses() {
        let spec = rigid_spec(3);
        let build = || -> Vec<Box<dyn Processor>> {
            vec![
                Box::new(ArrayDecoder::new(spec.clone(), 3)),
                Box::new(AsmEncoder::new(spec.clone(), 3, Damping::default())),
            ]
        };
        let x = noise((1, 16, 400), 9);
        let sig = SpatialSignal::time_sh(x, 48000.0, 3).unwrap();

        // sequential in the frequency domain at the chain's transform size
        let c = chain(build()).unwrap();
        let nfft = fft::next_pow2(400 + c.tail());
        let mut freq = sig.clone();
        freq.to_freq_with_nfft(nfft).unwrap();
        let stages = build();
        let mut seq = stages[0].process(&freq).unwrap();
        seq = stages[1].process(&seq).unwrap();
        seq.set_output_length(400 + c.tail()).unwrap();
        seq.transform_time_freq(TimeDomain::Time).unwrap();

        let before = fft::op_counts();
        let collapsed = c.process(&sig).unwrap();
        let used = fft::op_counts().since(before);
        assert_eq!((used.forward_passes, used.inverse_passes), (1, 1));
        assert!(max_diff(collapsed.real().unwrap(), seq.real().unwrap()) < 1e-10);
        assert_eq!(collapsed.space_domain(), SpaceDomain::Sh);
    }

    #[test]
    fn incompatible_chain_rejected() {
        let spec = rigid_spec(3);
        let r = chain(vec![
            Box::new(AsmEncoder::new(spec.clone(), 3, Damping::default())),
            Box::new(AsmEncoder::new(spec, 3, Damping::default())),
        ]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn rotation_kernel_matches_rotate_sh() {
        let d = wigner_d_matrix(2, 0.3, 0.9, -1.2);
        let x = noise((2, 9, 64), 10);
        let sig = SpatialSignal::time_sh(x, 48000.0, 2).unwrap();
        let mut expected = sig.clone();
        crate::sh::rotate_sh(&mut expected, &d).unwrap();
        let out = Rotation::new(d).process(&sig).unwrap();
        assert!(max_diff(out.real().unwrap(), expected.real().unwrap()) < 1e-12);
    }
}
