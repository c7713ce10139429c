use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use otfs_scma::fec::peg_construct;
use otfs_scma::harness::{run_sweep, ExperimentConfig, HopMode, Preset};
use otfs_scma::jamming::{dd_footprint, predict_hit_set, HitSet, Jammer, NbiSpec, PinSpec};
use otfs_scma::scma::{PartitionAxis, PartitionScheme, ScmaCodebook};
use otfs_scma::{DdGrid, C64};

#[derive(Parser)]
#[command(name = "otfs-scma", version, about = "OTFS-SCMA uplink simulator with delay-Doppler resource hopping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an Eb/N0 x JNR sweep and append results to a CSV.
    Simulate {
        /// key = value config file, applied on top of the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "desk")]
        preset: String,
        /// on, off or both.
        #[arg(long)]
        hop: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        blocks: Option<usize>,
    },
    /// Print the delay-Doppler footprint of one jammer and the slots it hits.
    AnalyzeJammer {
        #[arg(long = "type", value_enum)]
        kind: Kind,
        /// Comma-separated key=value pairs. NBI: amplitude, xi, phase.
        /// PIN: gamma, gamma_phase, period, offset, block.
        #[arg(long, default_value = "")]
        params: String,
        /// Lattice as MxN.
        #[arg(long, default_value = "16x16")]
        grid: String,
        #[arg(long, default_value_t = 4)]
        groups: usize,
        /// Partition axis for the hit set; defaults to the axis the jammer
        /// concentrates on.
        #[arg(long)]
        axis: Option<String>,
    },
    /// Build a (3,6)-regular PEG LDPC code and save its adjacency list.
    MakeCode {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check an SCMA codebook file and summarize it.
    ValidateCodebook {
        file: PathBuf,
        #[arg(long)]
        renormalize: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Nbi,
    Pin,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            config,
            preset,
            hop,
            out,
            seed,
            blocks,
        } => simulate(config, &preset, hop, out, seed, blocks),
        Command::AnalyzeJammer {
            kind,
            params,
            grid,
            groups,
            axis,
        } => analyze_jammer(kind, &params, &grid, groups, axis),
        Command::MakeCode { n, seed, out } => {
            let code = peg_construct(n, 3, 6, seed)?;
            code.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "n={} k={} checks={} girth={} -> {}",
                code.n(),
                code.k(),
                code.check_count(),
                code.girth(),
                out.display()
            );
            Ok(())
        }
        Command::ValidateCodebook { file, renormalize } => {
            let cb = ScmaCodebook::load(&file, renormalize).with_context(|| format!("reading {}", file.display()))?;
            println!(
                "users={} resources={} size={} nonzeros={} resource_degree={}",
                cb.users(),
                cb.resources(),
                cb.size(),
                cb.nonzeros(),
                cb.resource_degree()
            );
            for u in 0..cb.users() {
                println!("user {u}: support {:?} mean energy {:.6}", cb.support(u), cb.mean_energy(u));
            }
            Ok(())
        }
    }
}

fn simulate(
    config: Option<PathBuf>,
    preset: &str,
    hop: Option<String>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    blocks: Option<usize>,
) -> Result<()> {
    let base: Preset = preset.parse()?;
    let mut cfg = match &config {
        Some(p) => ExperimentConfig::load(p, base).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::preset(base),
    };
    if let Some(h) = hop {
        cfg.hop = h.parse::<HopMode>()?;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(b) = blocks {
        cfg.blocks = b;
    }
    let records = run_sweep(&cfg, out.as_deref())?;
    if records.is_empty() {
        eprintln!("every point is already in the output file");
    }
    for r in &records {
        println!(
            "eb_n0={:>5} jnr={:>4} hop={:<3} group {} ber={:.3e} others ber={:.3e} ({} blocks, {:.1}s)",
            r.eb_n0_db,
            r.jnr_db,
            if r.hop { "on" } else { "off" },
            r.group,
            r.ber,
            r.ber_other,
            r.blocks,
            r.runtime_s
        );
    }
    Ok(())
}

fn parse_grid(s: &str) -> Result<DdGrid> {
    let Some((m, n)) = s.split_once(['x', 'X']) else {
        bail!("grid must look like 16x16, got `{s}`");
    };
    Ok(DdGrid::new(m.trim().parse()?, n.trim().parse()?, 15e3, 4e9)?)
}

fn analyze_jammer(kind: Kind, params: &str, grid: &str, groups: usize, axis: Option<String>) -> Result<()> {
    let grid = parse_grid(grid)?;
    let mut kv = std::collections::HashMap::new();
    for pair in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let Some((k, v)) = pair.split_once('=') else {
            bail!("expected key=value, got `{pair}`");
        };
        let v: f64 = v.trim().parse().with_context(|| format!("value of `{k}`"))?;
        kv.insert(k.trim().to_string(), v);
    }
    let get = |k: &str, d: f64| kv.get(k).copied().unwrap_or(d);
    let known: &[&str] = match kind {
        Kind::Nbi => &["amplitude", "xi", "phase"],
        Kind::Pin => &["gamma", "gamma_phase", "period", "offset", "block"],
    };
    if let Some(k) = kv.keys().find(|k| !known.contains(&k.as_str())) {
        bail!("unknown parameter `{k}`; expected one of {known:?}");
    }

    let (jammer, block, default_axis) = match kind {
        Kind::Nbi => {
            let spec = NbiSpec {
                amplitude: get("amplitude", 1.0),
                xi: get("xi", 0.0),
                phase: get("phase", 0.0),
            };
            (Jammer::Nbi(spec), 0, PartitionAxis::Doppler)
        }
        Kind::Pin => {
            let spec = PinSpec {
                gamma: C64::from_polar(get("gamma", 1.0), get("gamma_phase", 0.0)),
                period_samples: get("period", grid.len() as f64) as usize,
                offset_samples: get("offset", 0.0) as usize,
            };
            (Jammer::Pin(spec), get("block", 0.0) as u64, PartitionAxis::Delay)
        }
    };
    let axis = match axis {
        Some(a) => a.parse()?,
        None => default_axis,
    };
    let fp = dd_footprint(&jammer.samples(&grid, block)?, &grid)?;
    let total = fp.energy();
    println!("{} on {}x{}: footprint energy {:.6}", kind_name(kind), grid.m(), grid.n(), total);
    let rows: Vec<usize> = (0..grid.m()).filter(|&a| fp.row_energy(a) > 1e-9 * total).collect();
    let cols: Vec<usize> = (0..grid.n()).filter(|&b| fp.column_energy(b) > 1e-9 * total).collect();
    println!("delay rows with energy: {rows:?}");
    println!("Doppler columns with energy: {cols:?}");
    if rows.len() * cols.len() <= 64 {
        for &a in &rows {
            for &b in &cols {
                let v = fp.get(a, b);
                if v.norm() > 1e-9 {
                    println!("  [{a:>3},{b:>3}] |x|={:.6} arg={:+.4}", v.norm(), v.arg());
                }
            }
        }
    }
    let scheme = PartitionScheme::new(axis, groups, &grid)?;
    match predict_hit_set(&jammer, &scheme, &grid) {
        HitSet::Slots(s) => println!("{} partition, {groups} slots: hits {:?}", axis.as_str(), s),
        HitSet::Spread => println!("{} partition, {groups} slots: energy spread over every slot", axis.as_str()),
    }
    Ok(())
}

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Nbi => "NBI",
        Kind::Pin => "PIN",
    }
}
