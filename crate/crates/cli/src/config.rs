//! Scenario files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ambiroom::array::{ArraySpec, Damping, SigmoidMask, SourceModel, Sphere};
use ambiroom::bench::{BenchConfig, BenchSuite};
use ambiroom::eval::LsdOptions;
use ambiroom::grid::DirectionGrid;
use ambiroom::hrtf::default_fc;
use ambiroom::ism::{Absorption, RoomSpec, DEFAULT_SPEED_OF_SOUND};
use ambiroom::room::{Scene, SceneSource, DEFAULT_KERNEL_LEN};
use ambiroom::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub room: RoomSection,
    #[serde(default)]
    pub sources: Vec<SourceSection>,
    pub receiver: ReceiverSection,
    pub hrtf: Option<HrtfSection>,
    pub array: Option<ArraySection>,
    pub encoder: Option<EncoderSection>,
    pub rotation: Option<RotationSection>,
    pub eval: Option<EvalSection>,
    pub bench: Option<BenchSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AbsorptionValue {
    Uniform(f64),
    Walls([f64; 6]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSection {
    pub dimensions: [f64; 3],
    pub absorption: AbsorptionValue,
    pub max_ism_order: usize,
    pub sh_order: usize,
    pub fs: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_kernel_len")]
    pub kernel_len: usize,
}

fn default_c() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

fn default_kernel_len() -> usize {
    DEFAULT_KERNEL_LEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub position: [f64; 3],
    /// Dry signal, relative to the scenario file.
    pub wav: Option<PathBuf>,
    /// Seeded white noise of this many samples, instead of a file.
    pub noise_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSection {
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HrtfModeName {
    Ls,
    Magls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HrtfSection {
    /// HRTF container; when absent the analytic rigid-sphere set is used.
    pub path: Option<PathBuf>,
    #[serde(default = "default_mode")]
    pub mode: HrtfModeName,
    pub fc: Option<f64>,
    pub nfft: Option<usize>,
    /// Resample the set to the room rate instead of rejecting a mismatch.
    #[serde(default)]
    pub resample: bool,
}

fn default_mode() -> HrtfModeName {
    HrtfModeName::Magls
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapsuleLayout {
    Icosadodecahedral32,
    GaussLegendre,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    #[serde(default = "default_layout")]
    pub capsules: CapsuleLayout,
    /// Order resolved by a Gauss-Legendre capsule layout.
    pub capsule_order: Option<usize>,
    pub radius: f64,
    #[serde(default = "default_sphere")]
    pub sphere: SphereName,
    #[serde(default = "default_source_model")]
    pub source_model: SourceModelName,
    pub sm_order: Option<usize>,
    #[serde(default = "yes")]
    pub mask: bool,
}

fn default_layout() -> CapsuleLayout {
    CapsuleLayout::Icosadodecahedral32
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SphereName {
    Rigid,
    Open,
}

fn default_sphere() -> SphereName {
    SphereName::Rigid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceModelName {
    Plane,
    Point,
}

fn default_source_model() -> SourceModelName {
    SourceModelName::Plane
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Asm,
    Bsm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DampingMode {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub kind: EncoderKind,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_damping_mode")]
    pub damping: DampingMode,
    /// BSM only: MagLS-preprocess the HRTF at this order.
    pub magls_pre: Option<usize>,
    /// ASM output order; defaults to the room order.
    pub order: Option<usize>,
}

fn default_eps() -> f64 {
    1e-3
}

fn default_damping_mode() -> DampingMode {
    DampingMode::Relative
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationSection {
    /// Intrinsic z-y-z angles in radians.
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
    /// Yaw sweep length for `rotate --frames`.
    pub frames: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_reference_order")]
    pub reference_order: usize,
    #[serde(default = "default_eval_orders")]
    pub orders: Vec<usize>,
    #[serde(default = "default_f_lo")]
    pub f_lo: f64,
    #[serde(default = "default_f_hi")]
    pub f_hi: f64,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
}

fn default_reference_order() -> usize {
    30
}

fn default_eval_orders() -> Vec<usize> {
    vec![1, 3, 5, 7, 9]
}

fn default_f_lo() -> f64 {
    ambiroom::eval::DEFAULT_F_LO
}

fn default_f_hi() -> f64 {
    ambiroom::eval::DEFAULT_F_HI
}

fn default_smoothing() -> f64 {
    ambiroom::eval::DEFAULT_FRACTION
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            reference_order: default_reference_order(),
            orders: default_eval_orders(),
            f_lo: default_f_lo(),
            f_hi: default_f_hi(),
            smoothing: default_smoothing(),
        }
    }
}

impl EvalSection {
    pub fn lsd_options(&self) -> LsdOptions {
        LsdOptions {
            f_lo: self.f_lo,
            f_hi: self.f_hi,
            fraction: self.smoothing,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub suites: Option<Vec<String>>,
    pub trials: Option<usize>,
    pub warmup: Option<usize>,
    pub sh_orders: Option<Vec<usize>>,
    pub ism_orders: Option<Vec<usize>>,
    pub source_counts: Option<Vec<usize>>,
    pub rotation_frames: Option<usize>,
    pub full_euler: Option<bool>,
    pub rotation_baselines: Option<bool>,
    pub parallel: Option<bool>,
}

impl BenchSection {
    pub fn suites(&self) -> Result<Vec<BenchSuite>> {
        match &self.suites {
            None => Ok(BenchSuite::ALL.to_vec()),
            Some(v) => v.iter().map(|s| BenchSuite::parse(s)).collect(),
        }
    }

    pub fn apply(&self, cfg: &mut BenchConfig) {
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.warmup {
            cfg.warmup = v;
        }
        if let Some(v) = &self.sh_orders {
            cfg.sh_orders = v.clone();
        }
        if let Some(v) = &self.ism_orders {
            cfg.ism_orders = v.clone();
        }
        if let Some(v) = &self.source_counts {
            cfg.source_counts = v.clone();
        }
        if let Some(v) = self.rotation_frames {
            cfg.rotation_frames = v;
        }
        if let Some(v) = self.full_euler {
            cfg.full_euler = v;
        }
        if let Some(v) = self.rotation_baselines {
            cfg.rotation_baselines = v;
        }
        if let Some(v) = self.parallel {
            cfg.parallel = v;
        }
    }
}

/// Parses and validates a scenario; nothing is computed.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Largest SH, sound-field or capsule order a scenario may ask for.
pub const ORDER_LIMIT: usize = 64;
pub const ISM_ORDER_LIMIT: usize = 50;
pub const KERNEL_LIMIT: usize = 4096;
/// Ten minutes at 192 kHz.
pub const SAMPLES_LIMIT: usize = 115_200_000;

fn bounded(v: usize, limit: usize, what: &str) -> Result<()> {
    if v > limit {
        return Err(Error::Config(format!("{what} {v} exceeds {limit}")));
    }
    Ok(())
}

fn finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("{what} must be finite")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::Config("at least one [[sources]] entry is required".into()));
        }
        for (i, s) in self.sources.iter().enumerate() {
            finite(&s.position, &format!("source {i} position"))?;
            if s.wav.is_some() && s.noise_samples.is_some() {
                return Err(Error::Config(format!("source {i}: give either wav or noise_samples")));
            }
            if s.noise_samples == Some(0) {
                return Err(Error::Config(format!("source {i}: noise_samples must be positive")));
            }
            bounded(s.noise_samples.unwrap_or(0), SAMPLES_LIMIT, "noise_samples")?;
        }
        finite(&self.receiver.position, "receiver position")?;
        let r = &self.room;
        finite(&r.dimensions, "room dimensions")?;
        if !(r.fs > 0.0) || r.fs.fract() != 0.0 {
            return Err(Error::Config(format!("fs {} must be a positive integer", r.fs)));
        }
        if !(r.c > 0.0) || !r.c.is_finite() {
            return Err(Error::Config(format!("speed of sound {} must be positive", r.c)));
        }
        if r.kernel_len < 2 {
            return Err(Error::Config("kernel_len must be at least 2".into()));
        }
        bounded(r.kernel_len, KERNEL_LIMIT, "kernel_len")?;
        bounded(r.sh_order, ORDER_LIMIT, "sh_order")?;
        bounded(r.max_ism_order, ISM_ORDER_LIMIT, "max_ism_order")?;
        let walls = self.absorption().0;
        if walls.iter().any(|a| !(0.0..1.0).contains(a)) {
            return Err(Error::Config(format!("absorption {walls:?} must lie in [0, 1)")));
        }
        if let Some(h) = &self.hrtf {
            if let Some(fc) = h.fc {
                if !(fc > 0.0 && fc < r.fs / 2.0) {
                    return Err(Error::Config(format!("fc {fc} must lie in (0, fs/2)")));
                }
            }
            if let Some(n) = h.nfft {
                if n < 2 || n % 2 != 0 {
                    return Err(Error::Config(format!("hrtf nfft {n} must be even")));
                }
                bounded(n, 1 << 20, "hrtf nfft")?;
            }
        }
        if let Some(a) = &self.array {
            if !(a.radius > 0.0) || !a.radius.is_finite() {
                return Err(Error::Config(format!("array radius {} must be positive", a.radius)));
            }
            if a.capsules == CapsuleLayout::GaussLegendre && a.capsule_order.is_none() {
                return Err(Error::Config("gauss-legendre capsules need capsule_order".into()));
            }
            bounded(a.capsule_order.unwrap_or(0), ORDER_LIMIT, "capsule_order")?;
            bounded(a.sm_order.unwrap_or(0), ORDER_LIMIT, "sm_order")?;
        }
        if let Some(e) = &self.encoder {
            if self.array.is_none() {
                return Err(Error::Config("[encoder] needs an [array] section".into()));
            }
            if !(e.eps >= 0.0) || !e.eps.is_finite() {
                return Err(Error::Config(format!("eps {} must be non-negative", e.eps)));
            }
            bounded(e.order.unwrap_or(0), ORDER_LIMIT, "encoder order")?;
            bounded(e.magls_pre.unwrap_or(0), ORDER_LIMIT, "magls_pre")?;
        }
        if let Some(rot) = &self.rotation {
            finite(&[rot.alpha, rot.beta, rot.gamma], "rotation angles")?;
            bounded(rot.frames.unwrap_or(0), 1_000_000, "rotation frames")?;
        }
        if let Some(ev) = &self.eval {
            if !(ev.f_lo < ev.f_hi) || ev.f_lo < 0.0 {
                return Err(Error::Config(format!("LSD band [{}, {}] is empty", ev.f_lo, ev.f_hi)));
            }
            bounded(ev.reference_order, ORDER_LIMIT, "reference_order")?;
            for n in &ev.orders {
                bounded(*n, ORDER_LIMIT, "eval order")?;
            }
            if !(ev.smoothing >= 0.0) {
                return Err(Error::Config("smoothing must be non-negative".into()));
            }
        }
        if let Some(b) = &self.bench {
            b.suites()?;
            if b.trials == Some(0) {
                return Err(Error::Config("bench trials must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn absorption(&self) -> Absorption {
        match self.room.absorption {
            AbsorptionValue::Uniform(a) => Absorption::uniform(a),
            AbsorptionValue::Walls(w) => Absorption(w),
        }
    }

    pub fn room_spec(&self) -> Result<RoomSpec> {
        let r = &self.room;
        RoomSpec::new(r.dimensions, self.absorption(), r.max_ism_order, r.fs)?.with_speed_of_sound(r.c)
    }

    /// Scene at the configured order, or at `order` when given.
    pub fn scene(&self, order: Option<usize>, dry: Option<Vec<Vec<f64>>>) -> Result<Scene> {
        let sources = match dry {
            Some(d) => self
                .sources
                .iter()
                .zip(d)
                .map(|(s, sig)| SceneSource::with_signal(s.position, sig))
                .collect(),
            None => self.sources.iter().map(|s| SceneSource::at(s.position)).collect(),
        };
        let mut scene = Scene::new(
            self.room_spec()?,
            sources,
            self.receiver.position,
            order.unwrap_or(self.room.sh_order),
        )?;
        scene.kernel_len = self.room.kernel_len;
        scene.validate()?;
        Ok(scene)
    }

    pub fn hrtf_section(&self) -> HrtfSection {
        self.hrtf.clone().unwrap_or(HrtfSection {
            path: None,
            mode: HrtfModeName::Magls,
            fc: None,
            nfft: None,
            resample: false,
        })
    }

    pub fn fc_for(&self, order: usize) -> f64 {
        self.hrtf.as_ref().and_then(|h| h.fc).unwrap_or_else(|| default_fc(order))
    }

    pub fn array_spec(&self) -> Result<Option<ArraySpec>> {
        let Some(a) = &self.array else {
            return Ok(None);
        };
        let capsules = match a.capsules {
            CapsuleLayout::Icosadodecahedral32 => DirectionGrid::icosadodecahedral32(),
            CapsuleLayout::GaussLegendre => DirectionGrid::for_order(a.capsule_order.unwrap_or(0)),
        };
        let sphere = match a.sphere {
            SphereName::Rigid => Sphere::Rigid,
            SphereName::Open => Sphere::Open,
        };
        let model = match a.source_model {
            SourceModelName::Plane => SourceModel::PlaneWave,
            SourceModelName::Point => SourceModel::PointSource,
        };
        let mut spec = ArraySpec::new(
            Arc::new(capsules),
            a.radius,
            sphere,
            model,
            a.sm_order.unwrap_or(self.room.sh_order),
            self.room.fs,
        )?;
        spec.c = self.room.c;
        if !a.mask {
            spec = spec.with_mask(None);
        } else if spec.mask.is_none() {
            spec = spec.with_mask(Some(SigmoidMask::default()));
        }
        spec.validate()?;
        Ok(Some(spec))
    }

    pub fn damping(&self) -> Damping {
        match &self.encoder {
            Some(e) => match e.damping {
                DampingMode::Relative => Damping::Relative(e.eps),
                DampingMode::Absolute => Damping::Absolute(e.eps),
            },
            None => Damping::default(),
        }
    }

    pub fn eval_section(&self) -> EvalSection {
        self.eval.clone().unwrap_or_default()
    }
}
