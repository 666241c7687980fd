//! Scaling and head-rotation benchmarks over the 6 x 5 x 3 m test room.
//!
//! Timed regions cover impulse-response computation only; dry-signal
//! convolution is never timed. Each cell runs warm-up passes followed by
//! `trials` timed passes.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use crate::decoders::{BinauralDecoder, Processor};
use crate::error::{Error, Result};
use crate::eval::{mix_sources, nn_baseline_render_oriented, sh_baseline_render};
use crate::hrtf::{project_ls, HrtfSet};
use crate::ism::{compute_images, image_count, ism_runs, Absorption, RoomSpec};
use crate::room::{compute_arir, Scene, SceneSource};
use crate::sh::rotation::EulerZyz;
use crate::sh::{n_coeffs, rotate_sh, wigner_d_azimuth, wigner_d_matrix, WignerDMatrix};
use crate::signal::{SpatialSignal, TimeDomain};
use crate::synth::{generate_synthetic_hrtf, SyntheticHrtfParams};

pub const ROOM_DIMENSIONS: [f64; 3] = [6.0, 5.0, 3.0];
pub const ROOM_ABSORPTION: f64 = 0.4;
pub const SOURCE_POSITION: [f64; 3] = [4.0, 4.0, 1.5];
pub const RECEIVER_POSITION: [f64; 3] = [2.0, 2.0, 1.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchSuite {
    ShOrder,
    IsmOrder,
    Sources,
    Rotation,
}

impl BenchSuite {
    pub const ALL: [BenchSuite; 4] = [Self::ShOrder, Self::IsmOrder, Self::Sources, Self::Rotation];

    pub fn name(self) -> &'static str {
        match self {
            Self::ShOrder => "sh_order",
            Self::IsmOrder => "ism_order",
            Self::Sources => "sources",
            Self::Rotation => "rotation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown bench suite '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub trials: usize,
    pub warmup: usize,
    pub sh_orders: Vec<usize>,
    pub ism_orders: Vec<usize>,
    pub source_counts: Vec<usize>,
    pub rotation_frames: usize,
    /// SH order for the ISM, source and rotation suites.
    pub sh_order: usize,
    /// ISM order for the SH, source and rotation suites.
    pub ism_order: usize,
    /// Run timed regions on the global thread pool instead of one thread.
    pub parallel: bool,
    /// Rotation frames use a full z-y-z rotation instead of pure yaw.
    pub full_euler: bool,
    /// Include the per-frame re-rendering baselines in the rotation suite.
    pub rotation_baselines: bool,
    pub hrtf: Option<HrtfSet>,
    pub fs: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trials: 10,
            warmup: 1,
            sh_orders: vec![1, 3, 5, 7, 9, 12],
            ism_orders: (1..=8).collect(),
            source_counts: vec![1, 2, 4, 8],
            rotation_frames: 600,
            sh_order: 3,
            ism_order: 5,
            parallel: false,
            full_euler: false,
            rotation_baselines: true,
            hrtf: None,
            fs: 48000.0,
        }
    }
}

/// Mean, sample standard deviation and median in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub trials: usize,
}

impl Timing {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n.max(1) as f64;
        let std = if n > 1 {
            (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = match n {
            0 => 0.0,
            _ if n % 2 == 1 => sorted[n / 2],
            _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
        };
        Self {
            mean,
            std,
            median,
            trials: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Count(u64),
    Time(Timing),
    Ratio(f64),
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub suite: BenchSuite,
    pub scenario: String,
    pub cells: Vec<(String, Cell)>,
}

impl BenchResult {
    fn new(suite: BenchSuite, scenario: impl Into<String>) -> Self {
        Self {
            suite,
            scenario: scenario.into(),
            cells: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, cell: Cell) -> &mut Self {
        self.cells.push((name.to_string(), cell));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Cell> {
        self.cells.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn count(&self, name: &str) -> Option<u64> {
        match self.get(name) {
            Some(Cell::Count(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn timing(&self, name: &str) -> Option<Timing> {
        match self.get(name) {
            Some(Cell::Time(t)) => Some(*t),
            _ => None,
        }
    }

    pub fn ratio(&self, name: &str) -> Option<f64> {
        match self.get(name) {
            Some(Cell::Ratio(v)) => Some(*v),
            _ => None,
        }
    }
}

pub fn test_room(ism_order: usize, fs: f64) -> Result<RoomSpec> {
    RoomSpec::new(ROOM_DIMENSIONS, Absorption::uniform(ROOM_ABSORPTION), ism_order, fs)
}

/// `k` sources at the same distance from the receiver as the first one,
/// fanned out in azimuth so transform sizes stay comparable.
pub fn source_positions(k: usize) -> Vec<[f64; 3]> {
    let d = [
        SOURCE_POSITION[0] - RECEIVER_POSITION[0],
        SOURCE_POSITION[1] - RECEIVER_POSITION[1],
    ];
    let r = d[0].hypot(d[1]);
    let base = d[1].atan2(d[0]);
    (0..k)
        .map(|i| {
            let a = base + i as f64 * PI / 16.0;
            [
                RECEIVER_POSITION[0] + r * a.cos(),
                RECEIVER_POSITION[1] + r * a.sin(),
                SOURCE_POSITION[2],
            ]
        })
        .collect()
}

pub fn test_scene(ism_order: usize, sh_order: usize, n_sources: usize, fs: f64) -> Result<Scene> {
    let sources = source_positions(n_sources).into_iter().map(SceneSource::at).collect();
    Scene::new(test_room(ism_order, fs)?, sources, RECEIVER_POSITION, sh_order)
}

struct Runner {
    trials: usize,
    warmup: usize,
}

impl Runner {
    fn time<T>(&self, mut f: impl FnMut() -> Result<T>) -> Result<Timing> {
        for _ in 0..self.warmup {
            f()?;
        }
        let mut samples = Vec::with_capacity(self.trials);
        for _ in 0..self.trials {
            let t = Instant::now();
            std::hint::black_box(f()?);
            samples.push(t.elapsed().as_secs_f64());
        }
        Ok(Timing::from_samples(&samples))
    }
}

fn arir_mixed(scene: &Scene) -> Result<SpatialSignal> {
    mix_sources(&compute_arir(scene)?)
}

/// One pass of the SH pipeline with separately measured stages.
fn pipeline_stages(scene: &Scene, hrtf: &crate::hrtf::ShHrtf) -> Result<(f64, f64)> {
    let t = Instant::now();
    let arir = arir_mixed(scene)?;
    let t_arir = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let out = BinauralDecoder::new(hrtf).process(&arir)?;
    std::hint::black_box(out);
    Ok((t_arir, t.elapsed().as_secs_f64()))
}

fn stage_timings(runner: &Runner, scene: &Scene, hrtf: &crate::hrtf::ShHrtf) -> Result<(Timing, Timing, Timing)> {
    for _ in 0..runner.warmup {
        pipeline_stages(scene, hrtf)?;
    }
    let mut a = Vec::new();
    let mut d = Vec::new();
    let mut tot = Vec::new();
    for _ in 0..runner.trials {
        let (x, y) = pipeline_stages(scene, hrtf)?;
        a.push(x);
        d.push(y);
        tot.push(x + y);
    }
    Ok((Timing::from_samples(&a), Timing::from_samples(&d), Timing::from_samples(&tot)))
}

fn hrtf_for(config: &BenchConfig) -> Result<HrtfSet> {
    match &config.hrtf {
        Some(h) => Ok(h.clone()),
        None => generate_synthetic_hrtf(&SyntheticHrtfParams {
            fs: config.fs,
            ..Default::default()
        }),
    }
}

fn sh_nfft(set: &HrtfSet) -> usize {
    crate::fft::next_pow2(set.taps())
}

fn suite_sh_order(config: &BenchConfig, set: &HrtfSet, runner: &Runner) -> Result<Vec<BenchResult>> {
    let mut rows = Vec::new();
    let nn_scene = test_scene(config.ism_order, 0, 1, config.fs)?;
    let nn = runner.time(|| nn_baseline_render_oriented(&nn_scene, set, None))?;
    for &n in &config.sh_orders {
        let hrtf = project_ls(set, n, sh_nfft(set))?;
        let scene = test_scene(config.ism_order, n, 1, config.fs)?;
        let (arir, decode, total) = stage_timings(runner, &scene, &hrtf)?;
        let sh_base = runner.time(|| sh_baseline_render(&scene, &hrtf))?;
        let mut r = BenchResult::new(BenchSuite::ShOrder, format!("N={n}"));
        r.push("n", Cell::Count(n as u64))
            .push("channels", Cell::Count(n_coeffs(n) as u64))
            .push("images", Cell::Count(image_count(config.ism_order) as u64))
            .push("arir", Cell::Time(arir))
            .push("decode", Cell::Time(decode))
            .push("sh_pipeline", Cell::Time(total))
            .push("sh_baseline", Cell::Time(sh_base))
            .push("nn_baseline", Cell::Time(nn))
            .push("sh_pipeline_over_nn", Cell::Ratio(total.mean / nn.mean));
        rows.push(r);
    }
    Ok(rows)
}

fn suite_ism_order(config: &BenchConfig, set: &HrtfSet, runner: &Runner) -> Result<Vec<BenchResult>> {
    let hrtf = project_ls(set, config.sh_order, sh_nfft(set))?;
    let mut rows = Vec::new();
    for &order in &config.ism_orders {
        let scene = test_scene(order, config.sh_order, 1, config.fs)?;
        let images = compute_images(&scene.room, scene.sources[0].position, scene.receiver)?.len();
        let (_, _, total) = stage_timings(runner, &scene, &hrtf)?;
        let sh_base = runner.time(|| sh_baseline_render(&scene, &hrtf))?;
        let nn = runner.time(|| nn_baseline_render_oriented(&scene, set, None))?;
        let mut r = BenchResult::new(BenchSuite::IsmOrder, format!("order={order}"));
        r.push("order", Cell::Count(order as u64))
            .push("images", Cell::Count(images as u64))
            .push("sh_pipeline", Cell::Time(total))
            .push("sh_baseline", Cell::Time(sh_base))
            .push("nn_baseline", Cell::Time(nn))
            .push("sh_pipeline_over_nn", Cell::Ratio(total.mean / nn.mean));
        rows.push(r);
    }
    Ok(rows)
}

/// Cells of this suite are compared against each other, so trials are
/// interleaved across `K` to spread machine drift evenly.
fn suite_sources(config: &BenchConfig, set: &HrtfSet, runner: &Runner) -> Result<Vec<BenchResult>> {
    let hrtf = project_ls(set, config.sh_order, sh_nfft(set))?;
    let scenes: Vec<Scene> = config
        .source_counts
        .iter()
        .map(|&k| test_scene(config.ism_order, config.sh_order, k, config.fs))
        .collect::<Result<_>>()?;
    for scene in &scenes {
        for _ in 0..runner.warmup {
            pipeline_stages(scene, &hrtf)?;
        }
    }
    let n = scenes.len();
    let (mut arir, mut decode, mut total) = (vec![Vec::new(); n], vec![Vec::new(); n], vec![Vec::new(); n]);
    for _ in 0..runner.trials {
        for (i, scene) in scenes.iter().enumerate() {
            let (a, d) = pipeline_stages(scene, &hrtf)?;
            arir[i].push(a);
            decode[i].push(d);
            total[i].push(a + d);
        }
    }
    let mut rows = Vec::new();
    for (i, (&k, scene)) in config.source_counts.iter().zip(&scenes).enumerate() {
        let total_t = Timing::from_samples(&total[i]);
        let sh_base = runner.time(|| sh_baseline_render(scene, &hrtf))?;
        let nn = runner.time(|| nn_baseline_render_oriented(scene, set, None))?;
        let mut r = BenchResult::new(BenchSuite::Sources, format!("K={k}"));
        r.push("sources", Cell::Count(k as u64))
            .push("images", Cell::Count((k * image_count(config.ism_order)) as u64))
            .push("arir", Cell::Time(Timing::from_samples(&arir[i])))
            .push("decode", Cell::Time(Timing::from_samples(&decode[i])))
            .push("sh_pipeline", Cell::Time(total_t))
            .push("sh_baseline", Cell::Time(sh_base))
            .push("nn_baseline", Cell::Time(nn))
            .push("sh_pipeline_over_nn", Cell::Ratio(total_t.mean / nn.mean));
        rows.push(r);
    }
    Ok(rows)
}

fn frame_rotation(config: &BenchConfig, f: usize) -> EulerZyz {
    let yaw = 2.0 * PI * f as f64 / config.rotation_frames.max(1) as f64;
    if config.full_euler {
        EulerZyz::new(yaw, 0.25 * yaw.sin(), 0.5 * yaw)
    } else {
        EulerZyz::azimuth(yaw)
    }
}

fn build_d(order: usize, r: EulerZyz, full: bool) -> WignerDMatrix {
    if full {
        wigner_d_matrix(order, r.alpha, r.beta, r.gamma)
    } else {
        wigner_d_azimuth(order, r.alpha)
    }
}

/// Sound field seen by a head rotated by `head`: `D(head^-1)`.
pub fn head_d(order: usize, head: EulerZyz, full: bool) -> WignerDMatrix {
    build_d(order, head.inverse(), full)
}

/// Build `D`, then transform, rotate per bin and transform back.
pub fn rotate_build_apply(arir: &SpatialSignal, order: usize, head: EulerZyz, full: bool) -> Result<SpatialSignal> {
    let d = head_d(order, head, full);
    let mut x = arir.clone();
    x.transform_time_freq(TimeDomain::Freq)?;
    rotate_sh(&mut x, &d)?;
    x.transform_time_freq(TimeDomain::Time)?;
    Ok(x)
}

/// Apply an already built `D` to the time-domain ARIR.
pub fn rotate_cached(arir: &SpatialSignal, d: &WignerDMatrix) -> Result<SpatialSignal> {
    let mut x = arir.clone();
    rotate_sh(&mut x, d)?;
    Ok(x)
}

fn per_frame<T>(
    runner: &Runner,
    frames: usize,
    mut f: impl FnMut(usize) -> Result<T>,
) -> Result<(Timing, Timing)> {
    for w in 0..runner.warmup {
        f(w % frames.max(1))?;
    }
    let mut per = Vec::with_capacity(frames * runner.trials);
    let mut sweeps = Vec::with_capacity(runner.trials);
    for _ in 0..runner.trials {
        let sweep = Instant::now();
        for i in 0..frames {
            let t = Instant::now();
            std::hint::black_box(f(i)?);
            per.push(t.elapsed().as_secs_f64());
        }
        sweeps.push(sweep.elapsed().as_secs_f64());
    }
    Ok((Timing::from_samples(&per), Timing::from_samples(&sweeps)))
}

fn suite_rotation(config: &BenchConfig, set: &HrtfSet, runner: &Runner) -> Result<Vec<BenchResult>> {
    let n = config.sh_order;
    let frames = config.rotation_frames;
    let full = config.full_euler;
    let scene = test_scene(config.ism_order, n, 1, config.fs)?;
    let mut rows = Vec::new();

    let init = runner.time(|| arir_mixed(&scene))?;
    let arir = arir_mixed(&scene)?;
    let (frame_build, sweep_build) = per_frame(runner, frames, |i| {
        rotate_build_apply(&arir, n, frame_rotation(config, i), full)
    })?;
    let d = head_d(n, frame_rotation(config, frames / 8), full);
    let ism_before = ism_runs();
    let (frame_cached, sweep_cached) = per_frame(runner, frames, |_| rotate_cached(&arir, &d))?;
    let ism_during_cached = ism_runs() - ism_before;
    let mut r = BenchResult::new(BenchSuite::Rotation, format!("SH pipeline N={n}"));
    r.push("frames", Cell::Count(frames as u64))
        .push("channels", Cell::Count(n_coeffs(n) as u64))
        .push("images", Cell::Count(image_count(config.ism_order) as u64))
        .push("init", Cell::Time(init))
        .push("frame_build_apply", Cell::Time(frame_build))
        .push("frame_cached", Cell::Time(frame_cached))
        .push("sweep_build_apply", Cell::Time(sweep_build))
        .push("sweep_cached", Cell::Time(sweep_cached))
        .push("build_over_cached", Cell::Ratio(frame_build.mean / frame_cached.mean))
        .push("ism_runs_during_cached", Cell::Count(ism_during_cached));
    rows.push(r);

    if config.rotation_baselines {
        let hrtf = project_ls(set, n, sh_nfft(set))?;
        let nn_init = runner.time(|| compute_images(&scene.room, scene.sources[0].position, scene.receiver))?;
        let (nn_frame, nn_sweep) = per_frame(runner, frames, |i| {
            nn_baseline_render_oriented(&scene, set, Some(frame_rotation(config, i)))
        })?;
        let sh_init = runner.time(|| Ok(BinauralDecoder::new(&hrtf)))?;
        let (sh_frame, sh_sweep) = per_frame(runner, frames, |i| {
            sh_baseline_rotated(&scene, &hrtf, frame_rotation(config, i), full)
        })?;
        for (name, init, frame, sweep) in [
            (format!("NN baseline (ISM {})", config.ism_order), nn_init, nn_frame, nn_sweep),
            (format!("SH baseline N={n} (ISM {})", config.ism_order), sh_init, sh_frame, sh_sweep),
        ] {
            let mut r = BenchResult::new(BenchSuite::Rotation, name);
            r.push("frames", Cell::Count(frames as u64))
                .push("channels", Cell::Count(n_coeffs(n) as u64))
                .push("images", Cell::Count(image_count(config.ism_order) as u64))
                .push("init", Cell::Time(init))
                .push("frame_build_apply", Cell::Time(frame))
                .push("frame_cached", Cell::Missing)
                .push("sweep_build_apply", Cell::Time(sweep))
                .push("sweep_cached", Cell::Missing)
                .push("build_over_cached", Cell::Missing)
                .push("ism_runs_during_cached", Cell::Missing);
            rows.push(r);
        }
    }
    Ok(rows)
}

/// SH-interpolated re-render with the head rotated: the HRTF coefficients
/// are rotated with the head, then every image is re-accumulated.
fn sh_baseline_rotated(scene: &Scene, hrtf: &crate::hrtf::ShHrtf, head: EulerZyz, full: bool) -> Result<SpatialSignal> {
    let d = build_d(hrtf.order(), head, full);
    let mut coeffs = hrtf.coeffs().clone();
    for e in 0..2 {
        let mut view = coeffs.index_axis_mut(ndarray::Axis(1), e);
        d.apply_complex(view.view_mut());
    }
    let rotated = crate::hrtf::ShHrtf::new(coeffs, hrtf.order(), hrtf.mode(), hrtf.nfft(), hrtf.fs())?;
    Ok(sh_baseline_render(scene, &rotated)?.brir)
}

pub fn run_bench(suites: &[BenchSuite], config: &BenchConfig) -> Result<Vec<BenchResult>> {
    if config.trials == 0 {
        return Err(Error::Config("at least one timed trial is needed".into()));
    }
    let set = hrtf_for(config)?;
    if (set.fs() - config.fs).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "HRTF rate {} differs from bench rate {}",
            set.fs(),
            config.fs
        )));
    }
    let runner = Runner {
        trials: config.trials,
        warmup: config.warmup,
    };
    let go = || -> Result<Vec<BenchResult>> {
        let mut out = Vec::new();
        for s in suites {
            out.extend(match s {
                BenchSuite::ShOrder => suite_sh_order(config, &set, &runner)?,
                BenchSuite::IsmOrder => suite_ism_order(config, &set, &runner)?,
                BenchSuite::Sources => suite_sources(config, &set, &runner)?,
                BenchSuite::Rotation => suite_rotation(config, &set, &runner)?,
            });
        }
        Ok(out)
    };
    if config.parallel {
        go()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(go)
    }
}

/// Host description attached to every report row.
pub fn hardware_metadata(config: &BenchConfig) -> Vec<(String, String)> {
    let threads = if config.parallel {
        rayon::current_num_threads()
    } else {
        1
    };
    vec![
        ("arch".into(), std::env::consts::ARCH.into()),
        ("os".into(), std::env::consts::OS.into()),
        (
            "cpus".into(),
            std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1).to_string(),
        ),
        ("threads".into(), threads.to_string()),
        ("trials".into(), config.trials.to_string()),
    ]
}

fn header(row: &BenchResult) -> Vec<String> {
    let mut h = vec!["suite".to_string(), "scenario".to_string()];
    for (name, cell) in &row.cells {
        match cell {
            Cell::Time(_) => {
                h.push(format!("{name}_mean_s"));
                h.push(format!("{name}_std_s"));
                h.push(format!("{name}_median_s"));
            }
            _ => h.push(name.clone()),
        }
    }
    h
}

fn fields(row: &BenchResult, schema: &[(String, Cell)]) -> Vec<String> {
    let mut f = vec![row.suite.name().to_string(), row.scenario.clone()];
    for (name, template) in schema {
        let cell = row.get(name).unwrap_or(&Cell::Missing);
        let time_slot = matches!(template, Cell::Time(_)) || matches!(cell, Cell::Time(_));
        match cell {
            Cell::Time(t) => {
                f.push(format!("{:.9}", t.mean));
                f.push(format!("{:.9}", t.std));
                f.push(format!("{:.9}", t.median));
            }
            Cell::Count(v) => f.push(v.to_string()),
            Cell::Ratio(v) => f.push(format!("{v:.4}")),
            Cell::Text(s) => f.push(s.clone()),
            Cell::Missing if time_slot => f.extend([String::new(), String::new(), String::new()]),
            Cell::Missing => f.push(String::new()),
        }
    }
    f
}

/// Column schema of a suite: names in first-seen order, preferring the
/// richest cell kind seen for each name.
fn schema(rows: &[&BenchResult]) -> Vec<(String, Cell)> {
    let mut out: Vec<(String, Cell)> = Vec::new();
    for r in rows {
        for (name, cell) in &r.cells {
            match out.iter_mut().find(|(n, _)| n == name) {
                Some(slot) => {
                    if matches!(slot.1, Cell::Missing) {
                        slot.1 = cell.clone();
                    }
                }
                None => out.push((name.clone(), cell.clone())),
            }
        }
    }
    out
}

/// One CSV block per suite, each with its own header.
pub fn write_csv<W: Write>(results: &[BenchResult], config: &BenchConfig, w: W) -> Result<()> {
    let meta = hardware_metadata(config);
    let mut wr = csv::WriterBuilder::new().flexible(true).from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    for suite in BenchSuite::ALL {
        let rows: Vec<&BenchResult> = results.iter().filter(|r| r.suite == suite).collect();
        if rows.is_empty() {
            continue;
        }
        let schema = schema(&rows);
        let template = BenchResult {
            suite,
            scenario: String::new(),
            cells: schema.clone(),
        };
        let mut h = header(&template);
        h.extend(meta.iter().map(|(k, _)| k.clone()));
        wr.write_record(&h).map_err(csv_err)?;
        for r in rows {
            let mut f = fields(r, &schema);
            f.extend(meta.iter().map(|(_, v)| v.clone()));
            wr.write_record(&f).map_err(csv_err)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Plain-text tables with `mean ± std` timings.
pub fn format_table(results: &[BenchResult]) -> String {
    let mut out = String::new();
    for suite in BenchSuite::ALL {
        let rows: Vec<&BenchResult> = results.iter().filter(|r| r.suite == suite).collect();
        if rows.is_empty() {
            continue;
        }
        let schema = schema(&rows);
        let mut table: Vec<Vec<String>> = Vec::new();
        let mut head = vec!["scenario".to_string()];
        head.extend(schema.iter().map(|(n, c)| match c {
            Cell::Time(_) => format!("{n} (s)"),
            _ => n.clone(),
        }));
        table.push(head);
        for r in rows {
            let mut line = vec![r.scenario.clone()];
            for (name, _) in &schema {
                line.push(match r.get(name).unwrap_or(&Cell::Missing) {
                    Cell::Time(t) => format!("{:.4} ± {:.4}", t.mean, t.std),
                    Cell::Count(v) => v.to_string(),
                    Cell::Ratio(v) => format!("×{v:.1}"),
                    Cell::Text(s) => s.clone(),
                    Cell::Missing => "-".into(),
                });
            }
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let _ = writeln!(out, "[{}]", suite.name());
        for line in table {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:>w$}", w = *w))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  "));
        }
        out.push('\n');
    }
    out
}
