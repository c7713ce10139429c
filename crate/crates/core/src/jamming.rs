//! Narrowband (NBI) and periodic impulse (PIN) jammers, their DD-domain
//! footprints and the partition slots they land on.
//!
//! An NBI tone at integer frequency index `ξ` occupies Doppler column
//! `ξ mod N` after demodulation; a PIN train with period `MN` occupies delay
//! row `c_PIN mod M`. Whether a jammer hits one slot or all of them depends
//! on which axis the lattice is partitioned along.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::ddcore::{sfft_rx, DdBlock, DdGrid, C64};
use crate::error::{check_len, Error, Result};
use crate::scma::{PartitionAxis, PartitionScheme};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NbiSpec {
    pub amplitude: f64,
    /// Frequency index; the tone sits at `ξ·Δf/N`.
    pub xi: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinSpec {
    pub gamma: C64,
    pub period_samples: usize,
    pub offset_samples: usize,
}

impl NbiSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.xi.is_finite() || !self.phase.is_finite() {
            return Err(Error::Config(format!("invalid NBI parameters {self:?}")));
        }
        Ok(())
    }
}

impl PinSpec {
    /// One impulse per block at `offset`.
    pub fn per_block(gamma: C64, offset: usize, grid: &DdGrid) -> Self {
        Self {
            gamma,
            period_samples: grid.len(),
            offset_samples: offset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.period_samples == 0 || self.offset_samples >= self.period_samples {
            return Err(Error::Config(format!(
                "PIN offset {} must lie in [0, period {})",
                self.offset_samples, self.period_samples
            )));
        }
        Ok(())
    }
}

/// `n[c] = b·exp(j(2πξc/MN + φ))`, `c = 0..MN`.
pub fn gen_nbi(spec: &NbiSpec, grid: &DdGrid) -> Vec<C64> {
    let mn = grid.len() as f64;
    (0..grid.len())
        .map(|c| C64::from_polar(spec.amplitude, 2.0 * PI * spec.xi * c as f64 / mn + spec.phase))
        .collect()
}

/// Impulse train restricted to block `block_index`. Block `b` covers
/// absolute samples `[b·MN, (b+1)·MN)`; the cyclic prefix is not counted.
pub fn gen_pin(spec: &PinSpec, grid: &DdGrid, block_index: u64) -> Result<Vec<C64>> {
    spec.validate()?;
    let mn = grid.len();
    let period = spec.period_samples as u128;
    let start = (block_index as u128 * mn as u128) % period;
    let first = (spec.offset_samples as u128 + period - start) % period;
    let mut out = vec![C64::new(0.0, 0.0); mn];
    let mut c = first as usize;
    while c < mn {
        out[c] = spec.gamma;
        c += spec.period_samples;
    }
    Ok(out)
}

/// The jammer as seen on the DD lattice after demodulation.
pub fn dd_footprint(time_jam: &[C64], grid: &DdGrid) -> Result<DdBlock> {
    check_len(grid.len(), time_jam.len())?;
    DdBlock::from_vec(grid, sfft_rx(time_jam, grid)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Jammer {
    Nbi(NbiSpec),
    Pin(PinSpec),
}

impl Jammer {
    pub fn samples(&self, grid: &DdGrid, block_index: u64) -> Result<Vec<C64>> {
        match self {
            Self::Nbi(s) => {
                s.validate()?;
                Ok(gen_nbi(s, grid))
            }
            Self::Pin(s) => gen_pin(s, grid, block_index),
        }
    }

    /// Long-run average power per sample.
    pub fn mean_power(&self) -> f64 {
        match self {
            Self::Nbi(s) => s.amplitude * s.amplitude,
            Self::Pin(s) => s.gamma.norm_sqr() / s.period_samples as f64,
        }
    }
}

/// Slots reached by a jammer's footprint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HitSet {
    Slots(BTreeSet<usize>),
    /// Non-integer NBI frequency: energy leaks over every column.
    Spread,
}

impl HitSet {
    pub fn contains(&self, slot: usize) -> bool {
        match self {
            Self::Slots(s) => s.contains(&slot),
            Self::Spread => true,
        }
    }
}

/// Slots whose bins carry jammer energy, without simulating. Under static
/// allocation slot `s` belongs to group `s`.
pub fn predict_hit_set(jammer: &Jammer, scheme: &PartitionScheme, grid: &DdGrid) -> HitSet {
    let all = || HitSet::Slots((0..scheme.groups).collect());
    match (jammer, scheme.axis) {
        (Jammer::Nbi(s), PartitionAxis::Doppler) => {
            if s.xi.fract() != 0.0 {
                return HitSet::Spread;
            }
            let col = (s.xi as i64).rem_euclid(grid.n() as i64) as usize;
            HitSet::Slots([col / scheme.slot_extent()].into())
        }
        (Jammer::Nbi(s), PartitionAxis::Delay) => {
            if s.xi.fract() != 0.0 {
                HitSet::Spread
            } else {
                all()
            }
        }
        (Jammer::Pin(s), PartitionAxis::Delay) => {
            let m = grid.m();
            // Residues mod M of offset + t·period repeat within M steps.
            let rows: BTreeSet<usize> = (0..m)
                .map(|t| (s.offset_samples + t * (s.period_samples % m)) % m)
                .map(|row| row / scheme.slot_extent())
                .collect();
            HitSet::Slots(rows)
        }
        (Jammer::Pin(_), PartitionAxis::Doppler) => all(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JammerKind {
    Nbi,
    Pin,
}

impl std::str::FromStr for JammerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nbi" => Ok(Self::Nbi),
            "pin" => Ok(Self::Pin),
            _ => Err(Error::Config(format!("unknown jammer type `{s}`"))),
        }
    }
}

impl JammerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Nbi => "nbi",
            Self::Pin => "pin",
        }
    }
}

/// Fixed values that replace the randomly drawn ones.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct JammerOverrides {
    pub xi: Option<f64>,
    pub phi: Option<f64>,
    pub gamma_phase: Option<f64>,
    pub period_samples: Option<usize>,
    pub offset_samples: Option<usize>,
}

/// Superposition of jammers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JammerSet {
    pub jammers: Vec<Jammer>,
}

impl JammerSet {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.jammers.is_empty()
    }

    /// Sum of all jammers over block `block_index`.
    pub fn samples(&self, grid: &DdGrid, block_index: u64) -> Result<Vec<C64>> {
        let mut out = vec![C64::new(0.0, 0.0); grid.len()];
        for j in &self.jammers {
            for (o, v) in out.iter_mut().zip(j.samples(grid, block_index)?) {
                *o += v;
            }
        }
        Ok(out)
    }

    pub fn mean_power(&self) -> f64 {
        self.jammers.iter().map(Jammer::mean_power).sum()
    }

    /// Every jammer's power multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let a = factor.max(0.0).sqrt();
        Self {
            jammers: self
                .jammers
                .iter()
                .map(|j| match *j {
                    Jammer::Nbi(s) => Jammer::Nbi(NbiSpec {
                        amplitude: s.amplitude * a,
                        ..s
                    }),
                    Jammer::Pin(s) => Jammer::Pin(PinSpec { gamma: s.gamma * a, ..s }),
                })
                .collect(),
        }
    }

    /// Draw `count` jammers aimed at `target_slot`, splitting `total_power`
    /// (per sample) equally. NBI frequencies are drawn from `[0, M)` with
    /// `ξ mod N` in the slot's columns; PIN offsets from `[0, MN)` with
    /// `offset mod M` in the slot's rows. Distinct columns or rows are used
    /// while the slot has enough of them. When the partition runs along the
    /// other axis, the parameter is drawn without restriction.
    #[allow(clippy::too_many_arguments)]
    pub fn targeting<R: Rng + ?Sized>(
        kind: JammerKind,
        count: usize,
        total_power: f64,
        target_slot: usize,
        scheme: &PartitionScheme,
        grid: &DdGrid,
        overrides: &JammerOverrides,
        rng: &mut R,
    ) -> Result<Self> {
        if target_slot >= scheme.groups {
            return Err(Error::Config(format!(
                "target group {target_slot} outside 0..{}",
                scheme.groups
            )));
        }
        if !(total_power >= 0.0) {
            return Err(Error::Config(format!("invalid jammer power {total_power}")));
        }
        if count == 0 {
            return Ok(Self::none());
        }
        let share = total_power / count as f64;
        let (m, n) = (grid.m(), grid.n());
        let mut jammers = Vec::with_capacity(count);
        match kind {
            JammerKind::Nbi => {
                let columns: Vec<usize> = match scheme.axis {
                    PartitionAxis::Doppler => scheme.slot_range(target_slot).collect(),
                    PartitionAxis::Delay => (0..n).collect(),
                };
                let cols = distinct_draw(&columns, count, rng);
                for col in cols {
                    let xi = match overrides.xi {
                        Some(x) => x,
                        None => {
                            let choices: Vec<usize> = (0..m).filter(|x| x % n == col).collect();
                            if choices.is_empty() {
                                return Err(Error::Config(format!("no frequency index in [0, {m}) maps to column {col}")));
                            }
                            *choices.choose(rng).expect("non-empty") as f64
                        }
                    };
                    let phase = overrides.phi.unwrap_or_else(|| rng.random_range(-PI..PI));
                    let spec = NbiSpec {
                        amplitude: share.sqrt(),
                        xi,
                        phase,
                    };
                    spec.validate()?;
                    jammers.push(Jammer::Nbi(spec));
                }
            }
            JammerKind::Pin => {
                let period = overrides.period_samples.unwrap_or(grid.len());
                let rows: Vec<usize> = match scheme.axis {
                    PartitionAxis::Delay => scheme.slot_range(target_slot).collect(),
                    PartitionAxis::Doppler => (0..m).collect(),
                };
                let picked = distinct_draw(&rows, count, rng);
                for row in picked {
                    let offset = match overrides.offset_samples {
                        Some(o) => o,
                        None => {
                            let choices: Vec<usize> = (0..period).filter(|c| c % m == row).collect();
                            match choices.choose(rng) {
                                Some(&c) => c,
                                None => rng.random_range(0..period.max(1)),
                            }
                        }
                    };
                    let phase = overrides.gamma_phase.unwrap_or_else(|| rng.random_range(-PI..PI));
                    let spec = PinSpec {
                        gamma: C64::from_polar((share * period as f64).sqrt(), phase),
                        period_samples: period,
                        offset_samples: offset,
                    };
                    spec.validate()?;
                    jammers.push(Jammer::Pin(spec));
                }
            }
        }
        Ok(Self { jammers })
    }
}

/// `count` picks from `pool`, without replacement until the pool runs out.
fn distinct_draw<R: Rng + ?Sized>(pool: &[usize], count: usize, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut p = pool.to_vec();
        p.shuffle(rng);
        out.extend(p.into_iter().take(count - out.len()));
    }
    out
}
