//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,4,6` restricts the run; `ACCEPTANCE_STRICT=1` turns any
//! FAIL into a non-zero exit status.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use otfs_scma::channel::{sample_channels, ChannelConfig, ChannelEnsemble, ChannelPath, DdChannel, StackedChannel, UserChannel};
use otfs_scma::ddcore::{DdBlock, DdGrid, LinearOperator, C64};
use otfs_scma::fec::{bp_decode, peg_construct};
use otfs_scma::harness::{run_sweep, BerRecord, ExperimentConfig, HopMode, Simulator, CSV_HEADER, RUNTIME_COLUMN};
use otfs_scma::jamming::{dd_footprint, gen_nbi, gen_pin, JammerKind, NbiSpec, PinSpec};
use otfs_scma::modem::OtfsModem;
use otfs_scma::receiver::{gaep_detect, map_oracle_detect, DetectionProblem};
use otfs_scma::scma::{HopState, PartitionAxis, PartitionScheme, ScmaCodebook};

// Pinned tolerances.
const NBI_LEAK: f64 = 1e-18;
const FOOTPRINT_TOL: f64 = 1e-10;
const CHANNEL_TOL: f64 = 1e-9;
const MODEM_TOL: f64 = 1e-12;
const TV_MAX: f64 = 0.05;
const AGREE_MIN: f64 = 0.95;
const LOCALITY_FACTOR: f64 = 3.0;
const HOP_FACTOR: f64 = 0.5;
/// One-sided 95% normal quantile.
const Z95: f64 = 1.645;
const R2_MIN: f64 = 0.95;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn cn(rng: &mut ChaCha8Rng, var: f64) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * (var / 2.0).sqrt()
}

fn c1_nbi_footprint() -> Outcome {
    let grid = DdGrid::new(16, 16, 15e3, 4e9).unwrap();
    let spec = NbiSpec {
        amplitude: 1.0,
        xi: 2.0,
        phase: 0.0,
    };
    let fp = dd_footprint(&gen_nbi(&spec, &grid), &grid).unwrap();
    let total = fp.energy();
    let leak = (total - fp.column_energy(2)) / total;
    let worst = (0..16).map(|a| (fp.get(a, 2).norm() - 4.0).abs()).fold(0.0, f64::max);
    outcome(
        leak <= NBI_LEAK && worst <= FOOTPRINT_TOL,
        format!("leak {leak:.1e}, max |x|-4 {worst:.1e}"),
    )
}

fn c2_pin_footprint() -> Outcome {
    let grid = DdGrid::new(16, 16, 15e3, 4e9).unwrap();
    let offset = 37;
    let spec = PinSpec {
        gamma: C64::new(1.0, 0.0),
        period_samples: grid.len(),
        offset_samples: offset,
    };
    let mut rows = Vec::new();
    let mut leak: f64 = 0.0;
    let mut worst: f64 = 0.0;
    let mut magnitude = 0.0;
    for block in 0..10 {
        let fp = dd_footprint(&gen_pin(&spec, &grid, block).unwrap(), &grid).unwrap();
        let total = fp.energy();
        let row = (0..16).max_by(|&a, &b| fp.row_energy(a).total_cmp(&fp.row_energy(b))).unwrap();
        rows.push(row);
        leak = leak.max((total - fp.row_energy(row)) / total);
        for b in 0..16 {
            magnitude = fp.get(row, b).norm();
            worst = worst.max((magnitude - 1.0).abs());
        }
    }
    let same_row = rows.iter().all(|&r| r == offset % 16);
    outcome(
        same_row && leak <= NBI_LEAK && worst <= FOOTPRINT_TOL,
        format!("row {} in all blocks: {same_row}, leak {leak:.1e}, element magnitude {magnitude:.6} (target 1.0)", rows[0]),
    )
}

/// Unitary `F_N ⊗ I_M` with column-stacked index `α + βM`.
fn dense_sfft(m: usize, n: usize) -> DMatrix<C64> {
    let s = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(m * n, m * n, |r, c| {
        let (a, k) = (r % m, r / m);
        let (b, l) = (c % m, c / m);
        if a != b {
            C64::new(0.0, 0.0)
        } else {
            C64::from_polar(s, -2.0 * PI * ((k * l) % n) as f64 / n as f64)
        }
    })
}

/// Fractional cyclic shift `Π^x` built from its eigen-decomposition.
fn dense_shift(x: f64, size: usize) -> DMatrix<C64> {
    let f = DMatrix::from_fn(size, size, |r, c| {
        C64::from_polar(1.0 / (size as f64).sqrt(), -2.0 * PI * ((r * c) % size) as f64 / size as f64)
    });
    let d = DMatrix::from_fn(size, size, |r, c| {
        if r == c {
            C64::from_polar(1.0, -2.0 * PI * x * r as f64 / size as f64)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    f.adjoint() * d * f
}

fn dense_doppler(x: f64, size: usize) -> DMatrix<C64> {
    DMatrix::from_fn(size, size, |r, c| {
        if r == c {
            C64::from_polar(1.0, 2.0 * PI * x * r as f64 / size as f64)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn c3_channel_equivalence() -> Outcome {
    let grid = DdGrid::new(8, 4, 15e3, 4e9).unwrap();
    let (m, n) = (grid.m(), grid.n());
    let mn = m * n;
    let cfg = ChannelConfig::default();
    let modem = OtfsModem::new(&grid, 3).unwrap();
    let fwd = dense_sfft(m, n);
    let inv = fwd.adjoint();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_dense, mut worst_time) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let ens = sample_channels(&cfg, &grid, 1, 1, &mut rng).unwrap();
        let user = &ens.users[0];
        let mut oracle = DMatrix::zeros(mn, mn);
        for p in &user.paths {
            oracle += (dense_shift(p.delay_taps, mn) * dense_doppler(p.doppler_taps, mn)) * p.gain;
        }
        let oracle = &fwd * oracle * &inv;
        let h = DdChannel::new(user, &grid).unwrap();
        let mut fast = DMatrix::zeros(mn, mn);
        for c in 0..mn {
            let mut e = vec![C64::new(0.0, 0.0); mn];
            e[c] = C64::new(1.0, 0.0);
            let col = h.apply(&e).unwrap();
            fast.column_mut(c).copy_from_slice(&col);
        }
        worst_dense = worst_dense.max(rel_err(fast.as_slice(), oracle.as_slice()));

        let x: Vec<C64> = (0..mn).map(|_| cn(&mut rng, 1.0)).collect();
        let tx = modem.modulate(&DdBlock::from_vec(&grid, x.clone()).unwrap(), 0).unwrap();
        let body = otfs_scma::channel::apply_channel_time(&tx, user, &grid).unwrap();
        let via_time = modem.demodulate_body(&body).unwrap();
        worst_time = worst_time.max(rel_err(via_time.as_vec(), &h.apply(&x).unwrap()));
    }
    outcome(
        worst_dense <= CHANNEL_TOL && worst_time <= CHANNEL_TOL,
        format!("FFT vs dense {worst_dense:.1e}, time vs DD {worst_time:.1e}"),
    )
}

fn c4_modem_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let (m, n) = [(8, 4), (16, 16), (32, 16), (128, 16)][i % 4];
        let grid = DdGrid::new(m, n, 15e3, 4e9).unwrap();
        let modem = OtfsModem::new(&grid, rng.random_range(0..8)).unwrap();
        let x: Vec<C64> = (0..grid.len()).map(|_| cn(&mut rng, 1.0)).collect();
        let tx = modem.modulate(&DdBlock::from_vec(&grid, x.clone()).unwrap(), i as u64).unwrap();
        let back = modem.demodulate(&tx).unwrap();
        worst = worst.max(rel_err(back.as_vec(), &x));
    }
    outcome(worst <= MODEM_TOL, format!("max relative error {worst:.1e}"))
}

fn c5_ldpc() -> Outcome {
    let code = peg_construct(256, 3, 6, 1).unwrap();
    let degrees = code.column_weights().iter().all(|&w| w == 3) && code.row_weights().iter().all(|&w| w == 6);
    let no_4_cycles = !code.has_4_cycles();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut exact = 0;
    for _ in 0..1000 {
        let info: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2)).collect();
        let word = code.encode(&info).unwrap();
        let llr: Vec<f64> = word.iter().map(|&b| if b == 0 { 30.0 } else { -30.0 }).collect();
        let out = bp_decode(&llr, &code, 10).unwrap();
        exact += usize::from(out.info_bits == info && out.converged);
    }
    let rate = code.k() as f64 / code.n() as f64;
    let words = 100_000usize.div_ceil(code.k());
    let mut bers = Vec::new();
    for eb_n0_db in [1.0, 2.0, 3.0, 4.0] {
        let s2 = 1.0 / (2.0 * rate * 10f64.powf(eb_n0_db / 10.0));
        let mut errors = 0usize;
        for _ in 0..words {
            let info: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2)).collect();
            let word = code.encode(&info).unwrap();
            let llr: Vec<f64> = word
                .iter()
                .map(|&b| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let y = if b == 0 { 1.0 } else { -1.0 } + s2.sqrt() * noise;
                    2.0 * y / s2
                })
                .collect();
            let out = bp_decode(&llr, &code, 10).unwrap();
            errors += out.info_bits.iter().zip(&info).filter(|(a, b)| a != b).count();
        }
        bers.push(errors as f64 / (words * code.k()) as f64);
    }
    let monotone = bers.windows(2).all(|w| w[1] < w[0]);
    outcome(
        degrees && no_4_cycles && exact == 1000 && monotone,
        format!(
            "degrees exact {degrees}, 4-cycle free {no_4_cycles}, noiseless exact {exact}/1000, BER {:?}",
            bers.iter().map(|b| format!("{b:.2e}")).collect::<Vec<_>>()
        ),
    )
}

fn c6_detector_oracle() -> Outcome {
    let grid = DdGrid::new(4, 2, 15e3, 4e9).unwrap();
    let cb = ScmaCodebook::reference().subset(&[0, 1]).unwrap();
    let scheme = PartitionScheme::new(PartitionAxis::Delay, 1, &grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s2 = 0.1;
    let draws = 200;
    let (mut tv, mut agree, mut total) = (0.0, 0usize, 0usize);
    for _ in 0..draws {
        let users = (0..2)
            .map(|u| UserChannel {
                group: 0,
                user: u,
                paths: (0..2)
                    .map(|_| ChannelPath {
                        gain: cn(&mut rng, 0.5),
                        delay_taps: rng.random_range(0..4) as f64,
                        doppler_taps: rng.random_range(0..2) as f64,
                    })
                    .collect(),
            })
            .collect();
        let ens = ChannelEnsemble {
            groups: 1,
            users_per_group: 2,
            users,
        };
        let h = StackedChannel::new(&ens, &grid).unwrap();
        let p = DetectionProblem::build(&h, &cb, &scheme, &HopState::identity(1), 1e-9, None).unwrap();
        let labels: Vec<usize> = (0..p.variables().len()).map(|_| rng.random_range(0..4)).collect();
        let mut y = p.synthesize(&labels).unwrap();
        y.iter_mut().for_each(|v| *v += cn(&mut rng, s2));
        let priors: Vec<Vec<f64>> = (0..p.users()).map(|u| vec![0.0; p.bits_of(u)]).collect();
        let exact = map_oracle_detect(&p, &y, &priors, s2).unwrap();
        let approx = gaep_detect(&p, &y, &priors, s2, 10, 0.5).unwrap();
        tv += approx.posterior.mean_tv_distance(&exact.posterior);
        let (a, b) = (approx.posterior.hard_decisions(), exact.posterior.hard_decisions());
        agree += a.iter().zip(&b).filter(|(x, y)| x == y).count();
        total += a.len();
    }
    let tv = tv / draws as f64;
    let agreement = agree as f64 / total as f64;
    outcome(
        tv <= TV_MAX && agreement >= AGREE_MIN,
        format!("mean TV {tv:.4}, agreement {:.1}%", 100.0 * agreement),
    )
}

fn scenario(kind: JammerKind, axis: PartitionAxis, blocks: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk();
    c.jammer.kind = Some(kind);
    c.axis = axis;
    c.blocks = blocks;
    c
}

fn c7_locality(static_pin_jnr6: &BerRecord) -> Outcome {
    let r = static_pin_jnr6;
    let others: Vec<f64> = r
        .group_ber()
        .iter()
        .enumerate()
        .filter(|&(g, _)| g != r.group)
        .map(|(_, &b)| b)
        .collect();
    let mean_other = others.iter().sum::<f64>() / others.len() as f64;
    outcome(
        r.ber > LOCALITY_FACTOR * mean_other,
        format!(
            "{} blocks: targeted {:.4} vs untargeted mean {:.4} (ratio {:.2}, need > {LOCALITY_FACTOR})",
            r.blocks,
            r.ber,
            mean_other,
            r.ber / mean_other
        ),
    )
}

/// One-sided z statistic for `p_static > p_hop`.
fn z_static_above_hop(st: &BerRecord, hp: &BerRecord) -> f64 {
    let (n1, n2) = (st.bits as f64, hp.bits as f64);
    let pooled = (st.errors + hp.errors) as f64 / (n1 + n2);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)).sqrt();
    if se == 0.0 {
        return if st.ber > hp.ber { f64::INFINITY } else { 0.0 };
    }
    (st.ber - hp.ber) / se
}

fn c8_hopping(results: &[(JammerKind, f64, BerRecord, BerRecord)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (kind, jnr, st, hp) in results {
        let z = z_static_above_hop(st, hp);
        let ratio = hp.ber / st.ber;
        let ok = z >= Z95 && (*jnr != 6.0 || ratio <= HOP_FACTOR);
        pass &= ok;
        parts.push(format!(
            "{} {jnr}dB static {:.4} hop {:.4} ratio {ratio:.2} z {z:.1}",
            kind.as_str(),
            st.ber,
            hp.ber
        ));
    }
    outcome(pass, parts.join("; "))
}

fn ops_for(m: usize, seed: u64, iterations: usize) -> (usize, u64) {
    let grid = DdGrid::new(m, 8, 15e3, 4e9).unwrap();
    let cb = ScmaCodebook::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = (0..6)
        .map(|u| UserChannel {
            group: 0,
            user: u,
            paths: (0..5)
                .map(|_| ChannelPath {
                    gain: cn(&mut rng, 0.2),
                    delay_taps: rng.random_range(0..3) as f64,
                    doppler_taps: rng.random_range(-1i32..=1) as f64,
                })
                .collect(),
        })
        .collect();
    let ens = ChannelEnsemble {
        groups: 1,
        users_per_group: 6,
        users,
    };
    let h = StackedChannel::new(&ens, &grid).unwrap();
    let scheme = PartitionScheme::new(PartitionAxis::Delay, 1, &grid).unwrap();
    let p = DetectionProblem::build(&h, &cb, &scheme, &HopState::identity(1), 1e-6, None).unwrap();
    let labels: Vec<usize> = (0..p.variables().len()).map(|_| rng.random_range(0..4)).collect();
    let y = p.synthesize(&labels).unwrap();
    let priors: Vec<Vec<f64>> = (0..p.users()).map(|u| vec![0.0; p.bits_of(u)]).collect();
    let out = gaep_detect(&p, &y, &priors, 0.1, iterations, 0.5).unwrap();
    (h.sparsity_census(1e-6), out.ops)
}

fn c9_complexity() -> Outcome {
    let mut pts = Vec::new();
    let mut doubling = true;
    for m in [8, 16, 32] {
        for seed in 0..3 {
            let (s_bar, ops) = ops_for(m, 100 * m as u64 + seed, 10);
            let (_, ops20) = ops_for(m, 100 * m as u64 + seed, 20);
            doubling &= ops20 == 2 * ops;
            let (_, ops0) = ops_for(m, 100 * m as u64 + seed, 0);
            doubling &= ops0 == 0;
            pts.push((s_bar as f64, ops as f64));
        }
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    outcome(
        r2 > R2_MIN && doubling,
        format!(
            "R^2 {r2:.5} over S-bar {:.0}..{:.0}, count exactly proportional to iterations: {doubling}",
            pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
            pts.iter().map(|p| p.0).fold(0.0, f64::max)
        ),
    )
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = scenario(JammerKind::Pin, PartitionAxis::Delay, 20);
    cfg.eb_n0_db = vec![4.0];
    cfg.jnr_db = vec![6.0];
    cfg.hop = HopMode::Both;
    let read = |name: &str| -> Vec<Vec<String>> {
        let path = dir.path().join(name);
        run_sweep(&cfg, Some(&path)).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
        rdr.records()
            .map(|r| {
                let r = r.unwrap();
                r.iter().enumerate().filter(|&(i, _)| i != RUNTIME_COLUMN).map(|(_, v)| v.to_string()).collect()
            })
            .collect()
    };
    let (a, b) = (read("a.csv"), read("b.csv"));
    outcome(a == b && a.len() == 2, format!("{} rows compared, identical: {}", a.len(), a == b))
}

type Criterion = (usize, &'static str, Duration);

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let wanted = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut failures = 0;
    // `prior` is time already spent computing shared inputs.
    let mut report = |(id, name, limit): Criterion, prior: Duration, run: &mut dyn FnMut() -> Outcome| {
        if !wanted(id) {
            return;
        }
        let start = Instant::now();
        let o = run();
        let took = start.elapsed() + prior;
        let pass = o.pass && took <= limit;
        failures += usize::from(!pass);
        println!(
            "criterion {id:>2} {name}: {} ({}; {:.1}s of {}s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    };
    let min = |m: u64| Duration::from_secs(60 * m);

    report((1, "NBI footprint", Duration::from_secs(1)), Duration::ZERO, &mut c1_nbi_footprint);
    report((2, "PIN footprint", Duration::from_secs(1)), Duration::ZERO, &mut c2_pin_footprint);
    report((3, "channel operator equivalence", Duration::from_secs(30)), Duration::ZERO, &mut c3_channel_equivalence);
    report((4, "modem identity", Duration::from_secs(5)), Duration::ZERO, &mut c4_modem_identity);
    report((5, "LDPC properties", min(2)), Duration::ZERO, &mut c5_ldpc);
    report((6, "detector vs exact MAP", min(1)), Duration::ZERO, &mut c6_detector_oracle);

    // Criteria 7 and 8 share the static PIN point at 6 dB.
    let blocks = 500;
    let mut sweep: Vec<(JammerKind, f64, BerRecord, BerRecord)> = Vec::new();
    if wanted(7) || wanted(8) {
        let start = Instant::now();
        let sim = Simulator::new(&scenario(JammerKind::Pin, PartitionAxis::Delay, blocks)).unwrap();
        let st = sim.run_point(4.0, 6.0, false).unwrap();
        let static_time = start.elapsed();
        report((7, "jamming locality", min(30)), static_time, &mut || c7_locality(&st));
        if wanted(8) {
            for (kind, axis) in [(JammerKind::Pin, PartitionAxis::Delay), (JammerKind::Nbi, PartitionAxis::Doppler)] {
                let sim = Simulator::new(&scenario(kind, axis, blocks)).unwrap();
                for jnr in [0.0, 3.0, 6.0] {
                    let s = if kind == JammerKind::Pin && jnr == 6.0 {
                        st.clone()
                    } else {
                        sim.run_point(4.0, jnr, false).unwrap()
                    };
                    sweep.push((kind, jnr, s, sim.run_point(4.0, jnr, true).unwrap()));
                }
            }
            report((8, "hopping benefit", min(240)), start.elapsed(), &mut || c8_hopping(&sweep));
        }
    }
    report((9, "detector complexity scaling", min(10)), Duration::ZERO, &mut c9_complexity);
    report((10, "determinism", min(10)), Duration::ZERO, &mut c10_determinism);

    println!("{failures} criterion(s) failed");
    if strict && failures > 0 {
        std::process::exit(1);
    }
}
