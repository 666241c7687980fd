//! Command implementations behind the `ambiroom` binary.

pub mod config;
pub mod sidecar;

use std::path::{Path, PathBuf};
use std::time::Instant;

use ambiroom::array::Damping;
use ambiroom::bench::{format_table, head_d, rotate_build_apply, rotate_cached, run_bench, write_csv, BenchConfig};
use ambiroom::decoders::{ArrayDecoder, AsmEncoder, BinauralDecoder, BsmEncoder, Processor};
use ambiroom::eval::{lsd_signals, mix_sources, render_brir, LsdOptions, LsdReport};
use ambiroom::fft::next_pow2;
use ambiroom::hrtf::{magls, project_ls, resample_hrtf, HrtfSet, ShHrtf, ShHrtfMode};
use ambiroom::room::{compute_amb, compute_arir, Scene};
use ambiroom::sh::{rotate_sh, wigner_d_matrix, EulerZyz};
use ambiroom::synth::{generate_synthetic_hrtf, SyntheticHrtfParams};
use ambiroom::wav::{from_wav_channels, integral_rate, read_wav, to_wav_channels, write_wav};
use ambiroom::{Error, ErrorCategory, Result, SpaceDomain, SpatialSignal};
use ndarray::s;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{load_config, parse_config, ScenarioConfig};
pub use sidecar::{parse_sidecar, read_sidecar, write_sidecar, Sidecar, SpaceName};

pub const DEFAULT_SEED: u64 = 0;

pub fn exit_code(e: &Error) -> i32 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Geometry => 3,
        ErrorCategory::Format => 4,
        ErrorCategory::Numerical => 5,
    }
}

pub fn category_name(e: &Error) -> &'static str {
    match e.category() {
        ErrorCategory::Config => "config",
        ErrorCategory::Geometry => "geometry",
        ErrorCategory::Format => "format",
        ErrorCategory::Numerical => "numerical",
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Common {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        load_config(&self.config)
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(self.out_dir.join(name))
    }

    fn config_dir(&self) -> PathBuf {
        self.config.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// Dry signals per source, or `None` when no source carries one.
fn dry_signals(cfg: &ScenarioConfig, base: &Path, seed: u64) -> Result<Option<Vec<Vec<f64>>>> {
    let any = cfg.sources.iter().any(|s| s.wav.is_some() || s.noise_samples.is_some());
    if !any {
        return Ok(None);
    }
    let mut out = Vec::with_capacity(cfg.sources.len());
    for (i, s) in cfg.sources.iter().enumerate() {
        if let Some(p) = &s.wav {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            let w = read_wav(&path)?;
            if w.fs as f64 != cfg.room.fs {
                return Err(Error::Config(format!(
                    "{} is at {} Hz, the room runs at {} Hz",
                    path.display(),
                    w.fs,
                    cfg.room.fs
                )));
            }
            if w.samples.nrows() != 1 {
                return Err(Error::Config(format!("{} must be mono", path.display())));
            }
            out.push(w.samples.row(0).to_vec());
        } else if let Some(n) = s.noise_samples {
            out.push(seeded_noise(seed.wrapping_add(i as u64), n));
        } else {
            return Err(Error::IncompleteScene(format!("source {i} has no dry signal while others do")));
        }
    }
    Ok(Some(out))
}

fn sh_sidecar(sig: &SpatialSignal, content: &str) -> Result<Sidecar> {
    let fs = integral_rate(sig.fs())?;
    let mut sc = match sig.space_domain() {
        SpaceDomain::Sh => Sidecar::new(SpaceName::Sh, sig.sh_order(), sig.n_channels(), sig.n_spatial(), fs, content),
        SpaceDomain::Space => Sidecar::new(SpaceName::Space, 0, sig.n_channels(), sig.n_spatial(), fs, content),
    };
    sc.grid_dirs = sig.grid().map(|g| g.n_dirs());
    Ok(sc)
}

/// Writes the WAV and its sidecar.
pub fn write_output(path: &Path, sig: &SpatialSignal, sidecar: &Sidecar) -> Result<()> {
    write_wav(path, &to_wav_channels(sig)?, sidecar.fs)?;
    write_sidecar(path, sidecar)
}

/// Reads a WAV and interprets it through its sidecar.
pub fn read_output(path: &Path) -> Result<(SpatialSignal, Sidecar)> {
    let sc = read_sidecar(path)?;
    let w = read_wav(path)?;
    if w.samples.nrows() != sc.n_wav_channels() || w.fs != sc.fs {
        return Err(Error::Config(format!(
            "{} holds {} channels at {} Hz, its sidecar says {} at {} Hz",
            path.display(),
            w.samples.nrows(),
            w.fs,
            sc.n_wav_channels(),
            sc.fs
        )));
    }
    let data = from_wav_channels(&w.samples, sc.n_channels)?;
    let sig = match sc.domain {
        SpaceName::Sh => SpatialSignal::time_sh(data, sc.fs as f64, sc.sh_order)?,
        SpaceName::Space => SpatialSignal::time_space(data, sc.fs as f64, None)?,
    };
    Ok((sig, sc))
}

/// HRTF set at the room rate.
pub fn load_hrtf_set(cfg: &ScenarioConfig, base: &Path) -> Result<HrtfSet> {
    let h = cfg.hrtf_section();
    let set = match &h.path {
        Some(p) => {
            let path = if p.is_absolute() { p.clone() } else { base.join(p) };
            HrtfSet::load(&path)?
        }
        None => generate_synthetic_hrtf(&SyntheticHrtfParams {
            fs: cfg.room.fs,
            ..Default::default()
        })?,
    };
    if (set.fs() - cfg.room.fs).abs() > 1e-9 {
        if !h.resample {
            return Err(Error::Config(format!(
                "HRTF rate {} differs from room rate {}; set hrtf.resample = true to convert",
                set.fs(),
                cfg.room.fs
            )));
        }
        return resample_hrtf(&set, cfg.room.fs);
    }
    Ok(set)
}

pub fn hrtf_nfft(cfg: &ScenarioConfig, set: &HrtfSet) -> usize {
    cfg.hrtf_section().nfft.unwrap_or_else(|| next_pow2(set.taps()))
}

pub fn sh_hrtf(cfg: &ScenarioConfig, set: &HrtfSet, order: usize, mode: config::HrtfModeName) -> Result<ShHrtf> {
    let nfft = hrtf_nfft(cfg, set);
    match mode {
        config::HrtfModeName::Ls => project_ls(set, order, nfft),
        config::HrtfModeName::Magls => magls(set, order, cfg.fc_for(order), nfft),
    }
}

fn tag_hrtf(sc: &mut Sidecar, h: &ShHrtf) {
    match h.mode() {
        ShHrtfMode::Ls => sc.hrtf_mode = Some("ls".into()),
        ShHrtfMode::MagLs { fc } => {
            sc.hrtf_mode = Some("magls".into());
            sc.magls_fc = Some(fc);
        }
    }
}

fn tag_damping(sc: &mut Sidecar, d: Damping) {
    let (name, eps) = match d {
        Damping::Relative(e) => ("relative", e),
        Damping::Absolute(e) => ("absolute", e),
    };
    sc.damping = Some(name.into());
    sc.damping_eps = Some(eps);
}

/// The simulated SH stream: reverberant mix when dry signals exist,
/// otherwise the per-source ARIRs.
fn simulate_sh(cfg: &ScenarioConfig, common: &Common) -> Result<(Scene, SpatialSignal, &'static str)> {
    let dry = dry_signals(cfg, &common.config_dir(), common.seed)?;
    let has_dry = dry.is_some();
    let scene = cfg.scene(None, dry)?;
    if has_dry {
        Ok((scene.clone(), compute_amb(&scene)?, "amb"))
    } else {
        Ok((scene.clone(), compute_arir(&scene)?, "arir"))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimulateArgs {
    pub per_source: bool,
}

/// Returns every file written.
pub fn cmd_simulate(common: &Common, args: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let cfg = common.load()?;
    let (scene, sig, content) = simulate_sh(&cfg, common)?;
    let array = cfg.array_spec()?;
    let mut written = Vec::new();
    let mut emit = |name: &str, sig: &SpatialSignal, sc: Sidecar| -> Result<()> {
        let p = common.out(name)?;
        write_output(&p, sig, &sc)?;
        written.push(p);
        Ok(())
    };
    let mut sc = sh_sidecar(&sig, content)?;
    sc.fractional_delay_taps = scene.kernel_len;
    if content == "amb" {
        sc.seed = Some(common.seed);
    }
    emit(&format!("{content}.wav"), &sig, sc.clone())?;
    if args.per_source {
        let arir = if content == "arir" { sig.clone() } else { compute_arir(&scene)? };
        let x = arir.real().expect("time-domain ARIR");
        for i in 0..x.dim().0 {
            let one = SpatialSignal::time_sh(x.slice(s![i..i + 1, .., ..]).to_owned(), arir.fs(), arir.sh_order())?;
            let mut sc = sh_sidecar(&one, "arir")?;
            sc.fractional_delay_taps = scene.kernel_len;
            emit(&format!("arir_source{i}.wav"), &one, sc)?;
        }
    }
    if let Some(spec) = array {
        let capsules = ArrayDecoder::new(spec.clone(), scene.sh_order).process(&sig)?;
        emit("array.wav", &capsules, sh_sidecar(&capsules, &format!("array-{content}"))?)?;
        if let Some(enc) = &cfg.encoder {
            let damping = cfg.damping();
            match enc.kind {
                config::EncoderKind::Asm => {
                    let order = enc.order.unwrap_or(scene.sh_order);
                    let out = AsmEncoder::new(spec, order, damping).process(&capsules)?;
                    let mut sc = sh_sidecar(&out, "asm")?;
                    tag_damping(&mut sc, damping);
                    emit("asm.wav", &out, sc)?;
                }
                config::EncoderKind::Bsm => {
                    let set = load_hrtf_set(&cfg, &common.config_dir())?;
                    let pre = enc.magls_pre.map(|n| (n, cfg.fc_for(n)));
                    let out = BsmEncoder::new(spec, set, damping, pre).process(&capsules)?;
                    let mut sc = sh_sidecar(&out, "bsm")?;
                    tag_damping(&mut sc, damping);
                    if let Some((_, fc)) = pre {
                        sc.hrtf_mode = Some("magls".into());
                        sc.magls_fc = Some(fc);
                    }
                    emit("bsm.wav", &out, sc)?;
                }
            }
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Default)]
pub struct RenderArgs {
    /// SH WAV with sidecar; simulated from the config when absent.
    pub input: Option<PathBuf>,
    /// Overrides `hrtf.mode`.
    pub mode: Option<config::HrtfModeName>,
    /// Output file name inside the output directory.
    pub output: Option<String>,
}

fn sh_input(cfg: &ScenarioConfig, common: &Common, input: &Option<PathBuf>) -> Result<SpatialSignal> {
    match input {
        Some(p) => {
            let (sig, sc) = read_output(p)?;
            if sc.domain != SpaceName::Sh {
                return Err(Error::Config(format!("{} is not an SH signal", p.display())));
            }
            Ok(sig)
        }
        None => {
            let (_, sig, _) = simulate_sh(cfg, common)?;
            mix_sources(&sig)
        }
    }
}

fn binaural(cfg: &ScenarioConfig, common: &Common, sig: &SpatialSignal, mode: config::HrtfModeName) -> Result<(SpatialSignal, ShHrtf)> {
    if (sig.fs() - cfg.room.fs).abs() > 1e-9 {
        return Err(Error::Config(format!("signal rate {} differs from room rate {}", sig.fs(), cfg.room.fs)));
    }
    let set = load_hrtf_set(cfg, &common.config_dir())?;
    let h = sh_hrtf(cfg, &set, sig.sh_order(), mode)?;
    let out = BinauralDecoder::new(&h).process(sig)?;
    Ok((out, h))
}

pub fn cmd_render(common: &Common, args: &RenderArgs) -> Result<PathBuf> {
    let cfg = common.load()?;
    let mode = args.mode.unwrap_or(cfg.hrtf_section().mode);
    // the HRTF is checked before any simulation
    load_hrtf_set(&cfg, &common.config_dir())?;
    let sig = sh_input(&cfg, common, &args.input)?;
    let (out, h) = binaural(&cfg, common, &sig, mode)?;
    let mut sc = sh_sidecar(&out, "binaural")?;
    tag_hrtf(&mut sc, &h);
    sc.sh_order = h.order();
    let path = common.out(args.output.as_deref().unwrap_or("binaural.wav"))?;
    write_output(&path, &out, &sc)?;
    Ok(path)
}

#[derive(Debug, Clone, Default)]
pub struct RotateArgs {
    pub input: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    /// Order the rotation is built for; must match the signal.
    pub order: Option<usize>,
    /// Also decode the rotated stream binaurally.
    pub binaural: bool,
    /// Yaw sweep length; overrides `rotation.frames`.
    pub frames: Option<usize>,
    pub cache_d: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub cached: bool,
    pub frames: usize,
    pub channels: usize,
    pub total_s: f64,
}

pub fn cmd_rotate(common: &Common, args: &RotateArgs) -> Result<Vec<PathBuf>> {
    let cfg = common.load()?;
    let rot = cfg.rotation.clone();
    let alpha = args.alpha.or(rot.as_ref().map(|r| r.alpha)).unwrap_or(0.0);
    let beta = args.beta.or(rot.as_ref().map(|r| r.beta)).unwrap_or(0.0);
    let gamma = args.gamma.or(rot.as_ref().map(|r| r.gamma)).unwrap_or(0.0);
    if ![alpha, beta, gamma].iter().all(|v| v.is_finite()) {
        return Err(Error::Config("rotation angles must be finite".into()));
    }
    let sig = sh_input(&cfg, common, &args.input)?;
    let order = sig.sh_order();
    if let Some(n) = args.order {
        if n != order {
            return Err(Error::Dimension(format!("rotation order {n} does not match signal order {order}")));
        }
    }
    let mut written = Vec::new();
    let d = wigner_d_matrix(order, alpha, beta, gamma);
    let mut rotated = sig.clone();
    rotate_sh(&mut rotated, &d)?;
    let mut sc = sh_sidecar(&rotated, "rotated")?;
    sc.rotation = Some([alpha, beta, gamma]);
    let p = common.out("rotated.wav")?;
    write_output(&p, &rotated, &sc)?;
    written.push(p);
    if args.binaural {
        let (out, h) = binaural(&cfg, common, &rotated, cfg.hrtf_section().mode)?;
        let mut sc = sh_sidecar(&out, "binaural-rotated")?;
        tag_hrtf(&mut sc, &h);
        sc.sh_order = h.order();
        sc.rotation = Some([alpha, beta, gamma]);
        let p = common.out("binaural_rotated.wav")?;
        write_output(&p, &out, &sc)?;
        written.push(p);
    }
    if let Some(frames) = args.frames.or(rot.and_then(|r| r.frames)) {
        let rep = rotation_sweep(&sig, frames, args.cache_d)?;
        let p = common.out("rotation_sweep.csv")?;
        let mut w = csv::Writer::from_path(&p).map_err(csv_err)?;
        w.write_record(["mode", "frames", "channels", "total_s", "per_frame_s"]).map_err(csv_err)?;
        w.write_record([
            if rep.cached { "cached" } else { "build_apply" }.to_string(),
            rep.frames.to_string(),
            rep.channels.to_string(),
            format!("{:.6e}", rep.total_s),
            format!("{:.6e}", rep.total_s / rep.frames.max(1) as f64),
        ])
        .map_err(csv_err)?;
        w.flush()?;
        written.push(p);
    }
    Ok(written)
}

/// Yaw sweep over `frames` head orientations. With `cached` every frame's
/// `D` is built before the clock starts.
pub fn rotation_sweep(sig: &SpatialSignal, frames: usize, cached: bool) -> Result<SweepReport> {
    if frames == 0 {
        return Err(Error::Config("a sweep needs at least one frame".into()));
    }
    let order = sig.sh_order();
    let heads: Vec<EulerZyz> = (0..frames)
        .map(|i| EulerZyz::azimuth(2.0 * std::f64::consts::PI * i as f64 / frames as f64))
        .collect();
    let t = if cached {
        let ds: Vec<_> = heads.iter().map(|&h| head_d(order, h, false)).collect();
        let t = Instant::now();
        for d in &ds {
            std::hint::black_box(rotate_cached(sig, d)?);
        }
        t.elapsed()
    } else {
        let t = Instant::now();
        for &h in &heads {
            std::hint::black_box(rotate_build_apply(sig, order, h, false)?);
        }
        t.elapsed()
    };
    Ok(SweepReport {
        cached,
        frames,
        channels: sig.n_spatial(),
        total_s: t.as_secs_f64(),
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    /// Binaural WAV to score; with `reference` this skips the config sweep.
    pub estimate: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsdRow {
    pub method: String,
    pub order: usize,
    pub report: LsdReport,
}

fn binaural_from_file(p: &Path) -> Result<SpatialSignal> {
    let (sig, sc) = read_output(p)?;
    if sc.domain != SpaceName::Space || sc.n_spatial != 2 {
        return Err(Error::Config(format!("{} is not a two-ear signal", p.display())));
    }
    Ok(sig)
}

/// LS and MagLS BRIRs at every configured order against the reference order.
pub fn lsd_table(cfg: &ScenarioConfig, common: &Common) -> Result<Vec<LsdRow>> {
    let ev = cfg.eval.clone().ok_or_else(|| {
        Error::Config("no reference: add an [eval] section or pass --reference with --estimate".into())
    })?;
    let opts = ev.lsd_options();
    let set = load_hrtf_set(cfg, &common.config_dir())?;
    let ref_scene = cfg.scene(Some(ev.reference_order), None)?;
    let ref_h = sh_hrtf(cfg, &set, ev.reference_order, config::HrtfModeName::Ls)?;
    let reference = render_brir(&ref_scene, &BinauralDecoder::new(&ref_h))?;
    let mut rows = vec![LsdRow {
        method: "reference".into(),
        order: ev.reference_order,
        report: lsd_signals(&reference, &reference, &opts)?,
    }];
    for &n in &ev.orders {
        let scene = cfg.scene(Some(n), None)?;
        for (name, mode) in [("ls", config::HrtfModeName::Ls), ("magls", config::HrtfModeName::Magls)] {
            let h = sh_hrtf(cfg, &set, n, mode)?;
            let brir = render_brir(&scene, &BinauralDecoder::new(&h))?;
            rows.push(LsdRow {
                method: name.into(),
                order: n,
                report: lsd_signals(&brir, &reference, &opts)?,
            });
        }
    }
    Ok(rows)
}

pub fn write_lsd_csv(rows: &[LsdRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["method", "order", "lsd_left_db", "lsd_right_db", "lsd_avg_db", "f_lo", "f_hi", "smoothing", "n_bins"])
        .map_err(csv_err)?;
    for r in rows {
        let p = &r.report;
        w.write_record([
            r.method.clone(),
            r.order.to_string(),
            format!("{:.4}", p.lsd_left),
            format!("{:.4}", p.lsd_right),
            format!("{:.4}", p.lsd_avg),
            format!("{}", p.f_lo),
            format!("{}", p.f_hi),
            format!("{}", p.smoothing),
            p.n_bins.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_eval(common: &Common, args: &EvalArgs) -> Result<PathBuf> {
    let cfg = common.load()?;
    let rows = match (&args.estimate, &args.reference) {
        (Some(est), Some(reference)) => {
            let opts = cfg.eval.as_ref().map(|e| e.lsd_options()).unwrap_or_else(LsdOptions::default);
            let report = lsd_signals(&binaural_from_file(est)?, &binaural_from_file(reference)?, &opts)?;
            let order = read_sidecar(est)?.sh_order;
            vec![LsdRow {
                method: "file".into(),
                order,
                report,
            }]
        }
        (Some(_), None) => return Err(Error::Config("--estimate needs a --reference".into())),
        (None, Some(_)) => return Err(Error::Config("--reference needs an --estimate".into())),
        (None, None) => lsd_table(&cfg, common)?,
    };
    let path = common.out("lsd.csv")?;
    write_lsd_csv(&rows, &path)?;
    Ok(path)
}

#[derive(Debug, Clone, Default)]
pub struct BenchArgs {
    pub trials: Option<usize>,
    pub suites: Option<Vec<String>>,
}

/// Writes `bench.csv` and returns it with the printable table.
pub fn cmd_bench(common: &Common, args: &BenchArgs) -> Result<(PathBuf, String)> {
    let cfg = common.load()?;
    let section = cfg.bench.clone().unwrap_or_default();
    let mut bc = BenchConfig {
        fs: cfg.room.fs,
        sh_order: cfg.room.sh_order,
        ism_order: cfg.room.max_ism_order,
        ..Default::default()
    };
    section.apply(&mut bc);
    if let Some(t) = args.trials {
        bc.trials = t;
    }
    let suites = match &args.suites {
        Some(v) => v.iter().map(|s| ambiroom::bench::BenchSuite::parse(s)).collect::<Result<Vec<_>>>()?,
        None => section.suites()?,
    };
    if cfg.hrtf.as_ref().is_some_and(|h| h.path.is_some()) {
        bc.hrtf = Some(load_hrtf_set(&cfg, &common.config_dir())?);
    }
    let results = run_bench(&suites, &bc)?;
    let path = common.out("bench.csv")?;
    let f = std::fs::File::create(&path)?;
    write_csv(&results, &bc, f)?;
    Ok((path, format_table(&results)))
}

/// Noise of `n` samples from `seed`, as used for `noise_samples` sources.
pub fn seeded_noise(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}
