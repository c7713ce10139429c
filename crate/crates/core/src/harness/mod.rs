//! Monte Carlo driver: builds every block of the uplink from seeded
//! streams, runs the turbo receiver and tallies bit errors per group.

mod config;

pub use config::{ExperimentConfig, HopMode, JammerConfig, Preset};

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::{sample_channels, BlockFading, ChannelEnsemble, StackedChannel};
use crate::ddcore::{DdGrid, LinearOperator, C64};
use crate::error::{Error, Result};
use crate::fec::{peg_construct, LdpcCode};
use crate::jamming::JammerSet;
use crate::modem::{default_cp_len, OtfsModem};
use crate::receiver::{turbo_receive, DetectionProblem, Interleaver};
use crate::scma::{allocate_user, placement_map, scma_encode, HopState, PartitionScheme, ScmaCodebook};
use crate::seed::{self, role};

/// Quantities that fix the energy per information bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParams {
    /// Mean codeword energy at the transmitter.
    pub codeword_energy: f64,
    pub codewords_per_block: usize,
    pub info_bits_per_block: usize,
    /// Expected channel power gain of one user.
    pub mean_channel_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Powers {
    /// Amplitude applied to every transmitted codeword.
    pub signal_scale: f64,
    /// Received energy per information bit of one user.
    pub eb: f64,
    /// Thermal noise variance per complex sample.
    pub noise_var: f64,
    /// Total jammer power per sample.
    pub jam_power: f64,
}

/// Noise and jammer powers for an operating point. `E_b` is the received
/// energy per information bit of one user; `σ² = E_b / (E_b/N_0)` and the
/// jammers together get `JNR·σ²` per sample.
pub fn calibrate_powers(eb_n0_db: f64, jnr_db: f64, params: &PowerParams) -> Result<Powers> {
    let eb = params.codeword_energy * params.codewords_per_block as f64 * params.mean_channel_gain
        / params.info_bits_per_block as f64;
    if !(eb > 0.0) || !eb.is_finite() || !eb_n0_db.is_finite() || !jnr_db.is_finite() {
        return Err(Error::Config(format!("non-positive or non-finite power (E_b = {eb})")));
    }
    let noise_var = eb / 10f64.powf(eb_n0_db / 10.0);
    Ok(Powers {
        signal_scale: 1.0,
        eb,
        noise_var,
        jam_power: 10f64.powf(jnr_db / 10.0) * noise_var,
    })
}

/// Bit-error tally of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutcome {
    /// Final information-bit errors per user.
    pub errors: Vec<u64>,
    /// Errors per user after each turbo loop, `[loop][user]`.
    pub loop_errors: Vec<Vec<u64>>,
    pub loops_run: usize,
}

/// One row of results.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub eb_n0_db: f64,
    pub jnr_db: f64,
    pub axis: String,
    pub hop: bool,
    pub jammer: String,
    /// The targeted group.
    pub group: usize,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    pub blocks: usize,
    pub seed: u64,
    pub runtime_s: f64,
    /// Totals over all other groups.
    pub bits_other: u64,
    pub errors_other: u64,
    pub ber_other: f64,
    pub group_bits: Vec<u64>,
    pub group_errors: Vec<u64>,
    /// Targeted-group errors after each turbo loop.
    pub loop_errors: Vec<u64>,
}

pub const CSV_HEADER: [&str; 15] = [
    "eb_n0_db",
    "jnr_db",
    "axis",
    "hop",
    "jammer",
    "group",
    "bits",
    "errors",
    "ber",
    "blocks",
    "seed",
    "runtime_s",
    "bits_other",
    "errors_other",
    "ber_other",
];

/// Index of the wall-clock column, the only one allowed to differ between
/// identical runs.
pub const RUNTIME_COLUMN: usize = 11;

fn hop_label(hop: bool) -> &'static str {
    if hop {
        "on"
    } else {
        "off"
    }
}

impl BerRecord {
    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.eb_n0_db.to_string(),
            self.jnr_db.to_string(),
            self.axis.clone(),
            hop_label(self.hop).to_string(),
            self.jammer.clone(),
            self.group.to_string(),
            self.bits.to_string(),
            self.errors.to_string(),
            self.ber.to_string(),
            self.blocks.to_string(),
            self.seed.to_string(),
            format!("{:.3}", self.runtime_s),
            self.bits_other.to_string(),
            self.errors_other.to_string(),
            self.ber_other.to_string(),
        ]
    }

    fn key(&self) -> String {
        point_key(self.eb_n0_db, self.jnr_db, &self.axis, self.hop, &self.jammer, self.seed)
    }

    /// Mean BER of each group.
    pub fn group_ber(&self) -> Vec<f64> {
        self.group_bits
            .iter()
            .zip(&self.group_errors)
            .map(|(&b, &e)| e as f64 / b as f64)
            .collect()
    }
}

fn point_key(eb: f64, jnr: f64, axis: &str, hop: bool, jammer: &str, seed: u64) -> String {
    format!("{eb}|{jnr}|{axis}|{}|{jammer}|{seed}", hop_label(hop))
}

/// Everything that stays fixed over a run.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: ExperimentConfig,
    grid: DdGrid,
    codebook: ScmaCodebook,
    code: LdpcCode,
    scheme: PartitionScheme,
    modem: OtfsModem,
    interleavers: Vec<Interleaver>,
    /// Jammers drawn once per run, scaled to unit total power.
    jammers: JammerSet,
    power_params: PowerParams,
}

impl Simulator {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let codebook = cfg.load_codebook()?;
        let code = match &cfg.code_path {
            Some(p) => LdpcCode::load(p)?,
            None => peg_construct(cfg.code_n, 3, 6, cfg.code_seed)?,
        };
        if code.n() != cfg.code_n {
            return Err(Error::Config(format!("code length {} differs from fec.n = {}", code.n(), cfg.code_n)));
        }
        let scheme = PartitionScheme::new(cfg.axis, cfg.groups, &grid)?;
        let cp = cfg.cp_len.unwrap_or_else(|| default_cp_len(cfg.channel.tau_max_samples));
        let modem = OtfsModem::new(&grid, cp)?;
        let il_seed = seed::derive_seed(cfg.master_seed, &[role::INTERLEAVER]);
        let interleavers = (0..cfg.users() as u64).map(|u| Interleaver::new(il_seed, u, code.n())).collect();
        let jammers = match cfg.jammer.kind {
            None => JammerSet::none(),
            Some(kind) => JammerSet::targeting(
                kind,
                cfg.jammer.count,
                1.0,
                cfg.jammer.target_group,
                &scheme,
                &grid,
                &cfg.jammer.overrides,
                &mut seed::rng_for(cfg.master_seed, &[role::JAMMER]),
            )?,
        };
        let codeword_energy =
            (0..codebook.users()).map(|u| codebook.mean_energy(u)).sum::<f64>() / codebook.users() as f64;
        let power_params = PowerParams {
            codeword_energy,
            codewords_per_block: scheme.codewords_per_slot(codebook.resources())?,
            info_bits_per_block: code.k(),
            mean_channel_gain: cfg.channel.mean_user_gain(cfg.users()),
        };
        Ok(Self {
            cfg: cfg.clone(),
            grid,
            codebook,
            code,
            scheme,
            modem,
            interleavers,
            jammers,
            power_params,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &DdGrid {
        &self.grid
    }

    pub fn code(&self) -> &LdpcCode {
        &self.code
    }

    pub fn scheme(&self) -> &PartitionScheme {
        &self.scheme
    }

    pub fn jammers(&self) -> &JammerSet {
        &self.jammers
    }

    pub fn power_params(&self) -> &PowerParams {
        &self.power_params
    }

    pub fn powers(&self, eb_n0_db: f64, jnr_db: f64) -> Result<Powers> {
        let mut p = calibrate_powers(eb_n0_db, jnr_db, &self.power_params)?;
        if self.jammers.is_empty() {
            p.jam_power = 0.0;
        }
        Ok(p)
    }

    pub fn channels(&self, block: u64) -> Result<ChannelEnsemble> {
        let path: &[u64] = match self.cfg.channel.block_fading {
            BlockFading::PerBlock => &[role::CHANNEL, block],
            BlockFading::Fixed => &[role::CHANNEL],
        };
        let mut rng = seed::rng_for(self.cfg.master_seed, path);
        sample_channels(&self.cfg.channel, &self.grid, self.cfg.groups, self.cfg.users_per_group, &mut rng)
    }

    pub fn info_bits(&self, block: u64, user: usize) -> Vec<u8> {
        let mut rng = seed::rng_for(self.cfg.master_seed, &[role::INFO_BITS, block, user as u64]);
        (0..self.code.k()).map(|_| rng.random_range(0..2u8)).collect()
    }

    pub fn hop_state(&self, block: u64, hop: bool) -> HopState {
        HopState::new(self.cfg.hop_seed(), block, self.cfg.groups, hop)
    }

    /// Simulate one block end to end.
    pub fn run_block(&self, block: u64, powers: &Powers, hop: bool) -> Result<BlockOutcome> {
        let (grid, j) = (&self.grid, self.cfg.users_per_group);
        let ensemble = self.channels(block)?;
        let stacked = StackedChannel::new(&ensemble, grid)?;
        let hop_state = self.hop_state(block, hop);
        let maps = (0..self.cfg.groups)
            .map(|g| placement_map(&self.scheme, &hop_state, g, self.codebook.resources()))
            .collect::<Result<Vec<_>>>()?;
        let checksums: Vec<u64> = maps.iter().map(|m| m.checksum()).collect();

        let mut received = vec![C64::new(0.0, 0.0); grid.len()];
        let mut sent = Vec::with_capacity(self.cfg.users());
        for u in 0..self.cfg.users() {
            let info = self.info_bits(block, u);
            let coded = self.interleavers[u].interleave(&self.code.encode(&info)?)?;
            let mut codewords = scma_encode(&coded, u % j, &self.codebook)?;
            codewords.iter_mut().flatten().for_each(|v| *v *= powers.signal_scale);
            let dd = allocate_user(&codewords, &maps[u / j], grid)?;
            let tx = self.modem.modulate(&dd, block)?;
            let rx = stacked.user(u).time_channel().apply(tx.body())?;
            received.iter_mut().zip(rx).for_each(|(a, b)| *a += b);
            sent.push(info);
        }
        let mut noise_rng = seed::rng_for(self.cfg.master_seed, &[role::NOISE, block]);
        let sigma = (powers.noise_var / 2.0).sqrt();
        for v in received.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut noise_rng);
            let im: f64 = StandardNormal.sample(&mut noise_rng);
            *v += C64::new(re, im) * sigma;
        }
        if powers.jam_power > 0.0 {
            let jam = self.jammers.scaled(powers.jam_power).samples(grid, block)?;
            received.iter_mut().zip(jam).for_each(|(a, b)| *a += b);
        }
        let y = self.modem.demodulate_body(&received)?;

        let problem = DetectionProblem::build(
            &stacked,
            &self.codebook,
            &self.scheme,
            &hop_state,
            self.cfg.rx.prune_threshold,
            Some(&checksums),
        )?;
        let nv = self.cfg.rx.detector_noise_var(powers.noise_var, powers.jam_power);
        let out = turbo_receive(y.as_vec(), &problem, &self.code, &self.interleavers, nv, &self.cfg.rx)?;
        let count = |dec: &[Vec<u8>]| -> Vec<u64> {
            dec.iter()
                .zip(&sent)
                .map(|(d, s)| d.iter().zip(s).filter(|(a, b)| a != b).count() as u64)
                .collect()
        };
        Ok(BlockOutcome {
            errors: count(&out.info_bits),
            loop_errors: out.per_loop.iter().map(|l| count(l)).collect(),
            loops_run: out.loops_run,
        })
    }

    /// All blocks of one operating point, in parallel.
    pub fn run_point(&self, eb_n0_db: f64, jnr_db: f64, hop: bool) -> Result<BerRecord> {
        let start = Instant::now();
        let powers = self.powers(eb_n0_db, jnr_db)?;
        let outcomes = (0..self.cfg.blocks as u64)
            .into_par_iter()
            .map(|b| self.run_block(b, &powers, hop))
            .collect::<Result<Vec<_>>>()?;
        let (groups, j) = (self.cfg.groups, self.cfg.users_per_group);
        let target = self.cfg.jammer.target_group;
        let k = self.code.k() as u64;
        let mut group_errors = vec![0u64; groups];
        let mut loop_errors = vec![0u64; self.cfg.rx.turbo_loops];
        for o in &outcomes {
            for (u, &e) in o.errors.iter().enumerate() {
                group_errors[u / j] += e;
            }
            for (l, per_user) in o.loop_errors.iter().enumerate() {
                loop_errors[l] += per_user[target * j..(target + 1) * j].iter().sum::<u64>();
            }
        }
        let group_bits = vec![k * j as u64 * self.cfg.blocks as u64; groups];
        let bits = group_bits[target];
        let errors = group_errors[target];
        let bits_other: u64 = group_bits.iter().sum::<u64>() - bits;
        let errors_other: u64 = group_errors.iter().sum::<u64>() - errors;
        Ok(BerRecord {
            eb_n0_db,
            jnr_db,
            axis: self.cfg.axis.as_str().to_string(),
            hop,
            jammer: self.cfg.jammer_label().to_string(),
            group: target,
            bits,
            errors,
            ber: errors as f64 / bits as f64,
            blocks: self.cfg.blocks,
            seed: self.cfg.master_seed,
            runtime_s: start.elapsed().as_secs_f64(),
            bits_other,
            errors_other,
            ber_other: if bits_other > 0 {
                errors_other as f64 / bits_other as f64
            } else {
                0.0
            },
            group_bits,
            group_errors,
            loop_errors,
        })
    }
}

pub fn run_point(cfg: &ExperimentConfig, eb_n0_db: f64, jnr_db: f64, hop: bool) -> Result<BerRecord> {
    Simulator::new(cfg)?.run_point(eb_n0_db, jnr_db, hop)
}

/// Keys of the rows already present in a results file.
fn completed_points(path: &Path) -> Result<HashSet<String>> {
    let mut done = HashSet::new();
    if !path.exists() || std::fs::metadata(path)?.len() == 0 {
        return Ok(done);
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("{} has an unexpected header {header:?}", path.display())));
    }
    for row in rdr.records() {
        let row = row?;
        let f = |i: usize| row.get(i).unwrap_or("");
        let parse = |i: usize| -> Result<f64> {
            f(i).parse()
                .map_err(|_| Error::Config(format!("bad number `{}` in {}", f(i), path.display())))
        };
        let seed: u64 = f(10)
            .parse()
            .map_err(|_| Error::Config(format!("bad seed `{}` in {}", f(10), path.display())))?;
        done.insert(point_key(parse(0)?, parse(1)?, f(2), f(3) == "on", f(4), seed));
    }
    Ok(done)
}

/// Every `(Eb/N0, JNR, hop)` combination of the config. With `out`, each
/// finished point is appended to the CSV immediately and points already in
/// the file are skipped. Returns the records computed by this call.
pub fn run_sweep(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<BerRecord>> {
    let sim = Simulator::new(cfg)?;
    let done = match out {
        Some(p) => completed_points(p)?,
        None => HashSet::new(),
    };
    let mut writer = match out {
        Some(p) => {
            let fresh = !p.exists() || std::fs::metadata(p)?.len() == 0;
            let file = OpenOptions::new().create(true).append(true).open(p)?;
            let mut w = csv::Writer::from_writer(file);
            if fresh {
                w.write_record(CSV_HEADER)?;
                w.flush()?;
            }
            Some(w)
        }
        None => None,
    };
    let mut records = Vec::new();
    for &eb in &cfg.eb_n0_db {
        for &jnr in &cfg.jnr_db {
            for &hop in cfg.hop.flags() {
                let key = point_key(eb, jnr, cfg.axis.as_str(), hop, cfg.jammer_label(), cfg.master_seed);
                if done.contains(&key) {
                    continue;
                }
                let rec = sim.run_point(eb, jnr, hop)?;
                debug_assert_eq!(rec.key(), key);
                if let Some(w) = writer.as_mut() {
                    w.write_record(rec.csv_row())?;
                    w.flush()?;
                }
                records.push(rec);
            }
        }
    }
    Ok(records)
}
