//! Turbo receiver: codeword-level detector and LDPC decoder exchanging
//! extrinsic bit LLRs through per-user interleavers.

mod detector;

pub use detector::{
    gaep_detect, map_oracle_detect, DetectionProblem, DetectorOutput, SymbolPosterior, Variable, VariableSpec,
    ORACLE_LIMIT,
};

use rand::seq::SliceRandom;

use crate::channel::StackedChannel;
use crate::ddcore::C64;
use crate::error::{check_len, Error, Result};
use crate::fec::{bp_decode, clip_llr, LdpcCode};
use crate::seed;

/// Seeded permutation of one user's coded bits. `interleave(x)[i] =
/// x[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
}

impl Interleaver {
    pub fn new(seed: u64, user: u64, len: usize) -> Self {
        let mut perm: Vec<usize> = (0..len).collect();
        perm.shuffle(&mut seed::rng_for(seed, &[user]));
        Self { perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave<T: Copy>(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.perm.len(), x.len())?;
        Ok(self.perm.iter().map(|&p| x[p]).collect())
    }

    pub fn deinterleave<T: Copy + Default>(&self, x: &[T]) -> Result<Vec<T>> {
        check_len(self.perm.len(), x.len())?;
        let mut out = vec![T::default(); x.len()];
        for (&p, &v) in self.perm.iter().zip(x) {
            out[p] = v;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseVarMode {
    /// The detector assumes thermal noise only.
    #[default]
    ThermalOnly,
    /// The detector is told the total noise-plus-jamming power.
    GenieTotal,
}

impl std::str::FromStr for NoiseVarMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thermal_only" => Ok(Self::ThermalOnly),
            "genie_total" => Ok(Self::GenieTotal),
            _ => Err(Error::Config(format!("unknown noise variance mode `{s}`"))),
        }
    }
}

impl NoiseVarMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ThermalOnly => "thermal_only",
            Self::GenieTotal => "genie_total",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurboConfig {
    pub turbo_loops: usize,
    pub detector_iters: usize,
    pub damping: f64,
    pub noise_var_mode: NoiseVarMode,
    pub bp_iters: usize,
    /// Channel entries below this fraction of a user's largest entry are
    /// ignored by the detector.
    pub prune_threshold: f64,
    /// Skip the remaining loops once every user's decoder has converged;
    /// later loops then repeat the last decisions.
    pub early_stop: bool,
}

impl Default for TurboConfig {
    fn default() -> Self {
        Self {
            turbo_loops: 3,
            detector_iters: 10,
            damping: 0.5,
            noise_var_mode: NoiseVarMode::ThermalOnly,
            bp_iters: 10,
            prune_threshold: 1e-2,
            early_stop: true,
        }
    }
}

impl TurboConfig {
    pub fn validate(&self) -> Result<()> {
        if self.turbo_loops == 0 || self.detector_iters == 0 || self.bp_iters == 0 {
            return Err(Error::Config("turbo loops and detector/decoder iterations must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping {} outside (0, 1]", self.damping)));
        }
        if !(0.0..1.0).contains(&self.prune_threshold) {
            return Err(Error::Config(format!("prune threshold {} outside [0, 1)", self.prune_threshold)));
        }
        Ok(())
    }

    /// Variance handed to the detector.
    pub fn detector_noise_var(&self, thermal: f64, jam_power: f64) -> f64 {
        match self.noise_var_mode {
            NoiseVarMode::ThermalOnly => thermal,
            NoiseVarMode::GenieTotal => thermal + jam_power,
        }
    }
}

/// Bit-level LLR buffers of the last loop, one vector per user.
///
/// `l_ie` and `l_id` are in transmission (interleaved) order; `l_e` and
/// `l_d` in codeword order. The detector forwards `l_ie − l_id`; the decoder
/// feeds back `l_d − l_e`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LlrMatrices {
    pub l_ie: Vec<Vec<f64>>,
    pub l_id: Vec<Vec<f64>>,
    pub l_e: Vec<Vec<f64>>,
    pub l_d: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurboOutput {
    /// Final information-bit decisions per user.
    pub info_bits: Vec<Vec<u8>>,
    /// Decisions after each loop, `[loop][user]`.
    pub per_loop: Vec<Vec<Vec<u8>>>,
    /// Detector multiply-accumulates in each loop actually run.
    pub detector_ops: Vec<u64>,
    pub loops_run: usize,
    pub converged: Vec<bool>,
    pub llr: LlrMatrices,
    pub posterior: SymbolPosterior,
}

/// Run the detector/decoder exchange for all users in `problem`.
pub fn turbo_receive(
    y: &[C64],
    problem: &DetectionProblem,
    code: &LdpcCode,
    interleavers: &[Interleaver],
    noise_var: f64,
    cfg: &TurboConfig,
) -> Result<TurboOutput> {
    cfg.validate()?;
    let users = problem.users();
    check_len(users, interleavers.len())?;
    for (u, il) in interleavers.iter().enumerate() {
        if problem.bits_of(u) != code.n() || il.len() != code.n() {
            return Err(Error::Config(format!(
                "user {u} carries {} coded bits, code length {}, interleaver {}",
                problem.bits_of(u),
                code.n(),
                il.len()
            )));
        }
    }
    let mut llr = LlrMatrices {
        l_id: vec![vec![0.0; code.n()]; users],
        ..Default::default()
    };
    let mut per_loop = Vec::with_capacity(cfg.turbo_loops);
    let mut detector_ops = Vec::new();
    let mut converged = vec![false; users];
    let mut posterior = None;
    for _ in 0..cfg.turbo_loops {
        let det = gaep_detect(problem, y, &llr.l_id, noise_var, cfg.detector_iters, cfg.damping)?;
        detector_ops.push(det.ops);
        let mut decisions = Vec::with_capacity(users);
        let mut l_e = Vec::with_capacity(users);
        let mut l_d = Vec::with_capacity(users);
        let mut feedback = Vec::with_capacity(users);
        for u in 0..users {
            let le = interleavers[u].deinterleave(&det.extrinsic[u])?;
            let dec = bp_decode(&le, code, cfg.bp_iters)?;
            let fb: Vec<f64> = dec.llr.iter().zip(&le).map(|(d, e)| clip_llr(d - e)).collect();
            feedback.push(interleavers[u].interleave(&fb)?);
            converged[u] = dec.converged;
            decisions.push(dec.info_bits);
            l_e.push(le);
            l_d.push(dec.llr);
        }
        llr.l_ie = det.app_llr;
        llr.l_e = l_e;
        llr.l_d = l_d;
        per_loop.push(decisions);
        posterior = Some(det.posterior);
        if per_loop.len() < cfg.turbo_loops {
            llr.l_id = feedback;
        }
        if cfg.early_stop && converged.iter().all(|&c| c) {
            break;
        }
    }
    let loops_run = per_loop.len();
    let info_bits = per_loop.last().cloned().unwrap_or_default();
    while per_loop.len() < cfg.turbo_loops {
        per_loop.push(info_bits.clone());
    }
    Ok(TurboOutput {
        info_bits,
        per_loop,
        detector_ops,
        loops_run,
        converged,
        llr,
        posterior: posterior.expect("at least one loop"),
    })
}

/// Detector cost next to the channel's sparsity.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityCensus {
    pub ops_per_loop: Vec<u64>,
    /// Entries of the stacked channel above the census threshold.
    pub s_bar: usize,
    /// Channel coefficients the detector actually uses.
    pub detector_nonzeros: usize,
}

pub fn complexity_census(
    output: &TurboOutput,
    problem: &DetectionProblem,
    channel: &StackedChannel,
    rel_threshold: f64,
) -> ComplexityCensus {
    ComplexityCensus {
        ops_per_loop: output.detector_ops.clone(),
        s_bar: channel.sparsity_census(rel_threshold),
        detector_nonzeros: problem.nonzeros(),
    }
}
