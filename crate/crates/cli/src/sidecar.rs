//! `<name>.meta.toml` files written next to every WAV.

use std::path::{Path, PathBuf};

use ambiroom::room::DEFAULT_KERNEL_LEN;
use ambiroom::sh::order_from_channels;
use ambiroom::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SIDECAR_VERSION: u32 = 1;
pub const LAYOUT: &str = "spatial-major";
pub const SH_ORDERING: &str = "ACN";
pub const SH_NORMALIZATION: &str = "N3D";
pub const EULER: &str = "intrinsic-zyz";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceName {
    Sh,
    Space,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub version: u32,
    pub domain: SpaceName,
    /// Meaningful when `domain = "sh"`.
    pub sh_order: usize,
    pub n_channels: usize,
    pub n_spatial: usize,
    pub fs: u32,
    pub layout: String,
    pub sh_ordering: String,
    pub sh_normalization: String,
    pub condon_shortley_phase: bool,
    pub euler: String,
    pub fractional_delay_taps: usize,
    /// What the file holds, e.g. `arir` or `binaural`.
    pub content: String,
    pub hrtf_mode: Option<String>,
    pub magls_fc: Option<f64>,
    pub damping: Option<String>,
    pub damping_eps: Option<f64>,
    /// `[alpha, beta, gamma]` in radians.
    pub rotation: Option<[f64; 3]>,
    /// Direction count of a SPACE-domain grid.
    pub grid_dirs: Option<usize>,
    pub seed: Option<u64>,
}

impl Sidecar {
    pub fn new(domain: SpaceName, sh_order: usize, n_channels: usize, n_spatial: usize, fs: u32, content: &str) -> Self {
        Self {
            version: SIDECAR_VERSION,
            domain,
            sh_order,
            n_channels,
            n_spatial,
            fs,
            layout: LAYOUT.into(),
            sh_ordering: SH_ORDERING.into(),
            sh_normalization: SH_NORMALIZATION.into(),
            condon_shortley_phase: false,
            euler: EULER.into(),
            fractional_delay_taps: DEFAULT_KERNEL_LEN,
            content: content.into(),
            hrtf_mode: None,
            magls_fc: None,
            damping: None,
            damping_eps: None,
            rotation: None,
            grid_dirs: None,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SIDECAR_VERSION {
            return Err(Error::Config(format!("sidecar version {} is not supported", self.version)));
        }
        if self.layout != LAYOUT {
            return Err(Error::Config(format!("channel layout {:?} is not supported", self.layout)));
        }
        if self.n_channels == 0 || self.n_spatial == 0 || self.fs == 0 {
            return Err(Error::Config("sidecar sizes and rate must be positive".into()));
        }
        if self.domain == SpaceName::Sh {
            if order_from_channels(self.n_spatial) != Some(self.sh_order) {
                return Err(Error::Dimension(format!(
                    "{} SH components do not match order {}",
                    self.n_spatial, self.sh_order
                )));
            }
            if self.sh_ordering != SH_ORDERING || self.sh_normalization != SH_NORMALIZATION || self.condon_shortley_phase {
                return Err(Error::Config(format!(
                    "SH convention {}/{} (CS phase {}) is not supported",
                    self.sh_ordering, self.sh_normalization, self.condon_shortley_phase
                )));
            }
        }
        Ok(())
    }

    pub fn n_wav_channels(&self) -> usize {
        self.n_channels * self.n_spatial
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sidecar fields are all representable")
    }
}

pub fn parse_sidecar(text: &str) -> Result<Sidecar> {
    let s: Sidecar = toml::from_str(text).map_err(|e| Error::Config(format!("sidecar: {e}")))?;
    s.validate()?;
    Ok(s)
}

/// `x/out.wav` -> `x/out.meta.toml`.
pub fn sidecar_path(wav: &Path) -> PathBuf {
    wav.with_extension("meta.toml")
}

pub fn write_sidecar(wav: &Path, s: &Sidecar) -> Result<()> {
    std::fs::write(sidecar_path(wav), s.to_toml())?;
    Ok(())
}

pub fn read_sidecar(wav: &Path) -> Result<Sidecar> {
    let p = sidecar_path(wav);
    let text = std::fs::read_to_string(&p)
        .map_err(|e| Error::Config(format!("cannot read sidecar {}: {e}", p.display())))?;
    parse_sidecar(&text)
}
