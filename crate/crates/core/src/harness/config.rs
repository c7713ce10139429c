//! Experiment configuration: presets, `key = value` files and validation.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::{BlockFading, ChannelConfig};
use crate::ddcore::DdGrid;
use crate::error::{Error, Result};
use crate::jamming::{JammerKind, JammerOverrides};
use crate::receiver::{NoiseVarMode, TurboConfig};
use crate::scma::{PartitionAxis, PartitionScheme, ScmaCodebook};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopMode {
    On,
    Off,
    Both,
}

impl HopMode {
    pub fn flags(self) -> &'static [bool] {
        match self {
            Self::On => &[true],
            Self::Off => &[false],
            Self::Both => &[true, false],
        }
    }
}

impl FromStr for HopMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(Self::On),
            "off" => Ok(Self::Off),
            "both" => Ok(Self::Both),
            _ => Err(Error::Config(format!("hop must be on, off or both, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Desk,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            _ => Err(Error::Config(format!("unknown preset `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JammerConfig {
    /// `None` runs jam-free.
    pub kind: Option<JammerKind>,
    pub count: usize,
    pub target_group: usize,
    pub overrides: JammerOverrides,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub delta_f: f64,
    pub groups: usize,
    pub users_per_group: usize,
    pub channel: ChannelConfig,
    /// Cyclic prefix in samples; derived from the delay spread when unset.
    pub cp_len: Option<usize>,
    pub jammer: JammerConfig,
    pub codebook_path: Option<PathBuf>,
    pub renormalize_codebook: bool,
    pub axis: PartitionAxis,
    pub hop: HopMode,
    /// Seed of the hopping pattern; the master seed when unset.
    pub hop_seed: Option<u64>,
    pub code_n: usize,
    pub code_seed: u64,
    pub code_path: Option<PathBuf>,
    pub rx: TurboConfig,
    pub eb_n0_db: Vec<f64>,
    pub jnr_db: Vec<f64>,
    pub blocks: usize,
    pub master_seed: u64,
}

impl ExperimentConfig {
    /// Full-size setup: 128×16 lattice, 4 groups of 6 users, length-256 code.
    pub fn paper() -> Self {
        Self {
            m: 128,
            n: 16,
            delta_f: 15e3,
            groups: 4,
            users_per_group: 6,
            channel: ChannelConfig::default(),
            cp_len: None,
            jammer: JammerConfig {
                kind: Some(JammerKind::Pin),
                count: 3,
                target_group: 0,
                overrides: JammerOverrides::default(),
            },
            codebook_path: None,
            renormalize_codebook: false,
            axis: PartitionAxis::Delay,
            hop: HopMode::Both,
            hop_seed: None,
            code_n: 256,
            code_seed: 1,
            code_path: None,
            rx: TurboConfig::default(),
            eb_n0_db: vec![0.0, 2.0, 4.0, 6.0, 8.0],
            jnr_db: vec![0.0, 3.0, 6.0],
            blocks: 100,
            master_seed: 1,
        }
    }

    /// Reduced 32×16 lattice with a length-64 code, for quick runs.
    pub fn desk() -> Self {
        Self {
            m: 32,
            code_n: 64,
            blocks: 50,
            ..Self::paper()
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Paper => Self::paper(),
            Preset::Desk => Self::desk(),
        }
    }

    pub fn grid(&self) -> Result<DdGrid> {
        DdGrid::new(self.m, self.n, self.delta_f, self.channel.carrier_hz)
    }

    pub fn users(&self) -> usize {
        self.groups * self.users_per_group
    }

    pub fn hop_seed(&self) -> u64 {
        self.hop_seed.unwrap_or(self.master_seed)
    }

    pub fn load_codebook(&self) -> Result<ScmaCodebook> {
        match &self.codebook_path {
            Some(p) => ScmaCodebook::load(p, self.renormalize_codebook),
            None => Ok(ScmaCodebook::reference()),
        }
    }

    pub fn jammer_label(&self) -> &'static str {
        self.jammer.kind.map_or("none", JammerKind::as_str)
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<f64>> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| num(key, s))
                .collect()
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "on" | "yes" | "1" => Ok(true),
                "false" | "off" | "no" | "0" => Ok(false),
                _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{v}`"))),
            }
        }
        let ov = &mut self.jammer.overrides;
        match key {
            "grid.M" => self.m = num(key, value)?,
            "grid.N" => self.n = num(key, value)?,
            "grid.delta_f" => self.delta_f = num(key, value)?,
            "grid.carrier_hz" | "chan.carrier_hz" => self.channel.carrier_hz = num(key, value)?,
            "grid.cp_len" => self.cp_len = Some(num(key, value)?),
            "users.groups" => self.groups = num(key, value)?,
            "users.per_group" => self.users_per_group = num(key, value)?,
            "chan.paths" => self.channel.paths_per_user = num(key, value)?,
            "chan.tau_max" => self.channel.tau_max_samples = num(key, value)?,
            "chan.velocity_kmh" => self.channel.velocity_kmh = num(key, value)?,
            "chan.fading" => {
                self.channel.block_fading = match value {
                    "per_block" => BlockFading::PerBlock,
                    "fixed" => BlockFading::Fixed,
                    _ => return Err(Error::Config(format!("`{key}`: expected per_block or fixed"))),
                }
            }
            "jam.type" => {
                self.jammer.kind = match value {
                    "none" => None,
                    v => Some(v.parse()?),
                }
            }
            "jam.count" => self.jammer.count = num(key, value)?,
            "jam.target_group" => self.jammer.target_group = num(key, value)?,
            "jam.xi" => ov.xi = Some(num(key, value)?),
            "jam.phi" => ov.phi = Some(num(key, value)?),
            "jam.gamma_phase" => ov.gamma_phase = Some(num(key, value)?),
            "jam.period_samples" => ov.period_samples = Some(num(key, value)?),
            "jam.offset_samples" => ov.offset_samples = Some(num(key, value)?),
            "scma.codebook" => self.codebook_path = Some(PathBuf::from(value)),
            "scma.renormalize" => self.renormalize_codebook = flag(key, value)?,
            "scma.axis" => self.axis = value.parse()?,
            "scma.hop" => self.hop = value.parse()?,
            "scma.hop_seed" => self.hop_seed = Some(num(key, value)?),
            "fec.n" => self.code_n = num(key, value)?,
            "fec.seed" => self.code_seed = num(key, value)?,
            "fec.path" => self.code_path = Some(PathBuf::from(value)),
            "fec.bp_iters" => self.rx.bp_iters = num(key, value)?,
            "rx.turbo_loops" => self.rx.turbo_loops = num(key, value)?,
            "rx.detector_iters" => self.rx.detector_iters = num(key, value)?,
            "rx.damping" => self.rx.damping = num(key, value)?,
            "rx.noise_var_mode" => self.rx.noise_var_mode = value.parse::<NoiseVarMode>()?,
            "rx.prune" => self.rx.prune_threshold = num(key, value)?,
            "rx.early_stop" => self.rx.early_stop = flag(key, value)?,
            "sim.eb_n0_db" => self.eb_n0_db = list(key, value)?,
            "sim.jnr_db" => self.jnr_db = list(key, value)?,
            "sim.blocks" => self.blocks = num(key, value)?,
            "sim.seed" => self.master_seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parse a config file on top of a preset. A leading `preset = ...`
    /// line picks the base; otherwise `base` is used.
    pub fn parse(text: &str, base: Preset) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            entries.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let mut preset = base;
        if let Some((_, _, v)) = entries.iter().find(|(_, k, _)| k == "preset") {
            preset = v.parse()?;
        }
        let mut cfg = Self::preset(preset);
        for (line, k, v) in entries.iter().filter(|(_, k, _)| k != "preset") {
            cfg.set(k, v).map_err(|e| Error::Parse {
                line: *line,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, base: Preset) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, base)
    }

    /// Cross-module consistency, checked before anything runs.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.channel.validate()?;
        self.rx.validate()?;
        let cb = self.load_codebook()?;
        if cb.users() != self.users_per_group {
            return Err(Error::Config(format!(
                "codebook has {} users, config asks for {} per group",
                cb.users(),
                self.users_per_group
            )));
        }
        let scheme = PartitionScheme::new(self.axis, self.groups, &grid)?;
        let coded = scheme.codewords_per_slot(cb.resources())? * cb.bits_per_codeword();
        if coded != self.code_n {
            return Err(Error::Config(format!(
                "each user carries {coded} coded bits per block but the code length is {}",
                self.code_n
            )));
        }
        if let Some(cp) = self.cp_len {
            if cp > grid.len() {
                return Err(Error::Config(format!("cyclic prefix {cp} longer than the block")));
            }
        }
        if self.jammer.kind.is_some() {
            if self.jammer.target_group >= self.groups {
                return Err(Error::Config(format!(
                    "target group {} outside 0..{}",
                    self.jammer.target_group, self.groups
                )));
            }
            if self.jammer.count == 0 {
                return Err(Error::Config("jam.count must be at least 1".into()));
            }
        }
        if self.eb_n0_db.is_empty() || self.jnr_db.is_empty() {
            return Err(Error::Config("sweep lists must not be empty".into()));
        }
        if self.blocks == 0 {
            return Err(Error::Config("sim.blocks must be at least 1".into()));
        }
        if self.eb_n0_db.iter().chain(&self.jnr_db).any(|x| !x.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        Ok(())
    }
}
