//! End-to-end properties of the simulated uplink at desk scale.

use otfs_scma::harness::{ExperimentConfig, Simulator};
use otfs_scma::jamming::JammerKind;
use otfs_scma::scma::PartitionAxis;

fn desk(blocks: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk();
    c.blocks = blocks;
    c.jammer.kind = None;
    c
}

#[test]
fn groups_are_symmetric_without_jamming() {
    // 60 blocks give 11520 information bits per group.
    let sim = Simulator::new(&desk(60)).unwrap();
    let r = sim.run_point(4.0, 0.0, false).unwrap();
    assert!(r.group_bits.iter().all(|&b| b >= 10_000));
    let ber = r.group_ber();
    let (lo, hi) = ber.iter().fold((f64::MAX, 0.0f64), |(l, h), &b| (l.min(b), h.max(b)));
    assert!(lo > 0.0 && hi / lo <= 2.0, "group BER {ber:?}");
}

#[test]
fn high_snr_jammed_group_matches_the_rest() {
    // Residual errors arrive in bursts inside a block, so compare the rates
    // of errored (user, block) frames, which are independent trials.
    let c = desk(40);
    let sim = Simulator::new(&c).unwrap();
    let powers = sim.powers(12.0, 0.0).unwrap();
    let j = c.users_per_group;
    let (mut bad, mut bad_other) = (0u64, 0u64);
    for b in 0..c.blocks as u64 {
        let o = sim.run_block(b, &powers, true).unwrap();
        for (u, &e) in o.errors.iter().enumerate() {
            if e > 0 {
                if u / j == c.jammer.target_group {
                    bad += 1;
                } else {
                    bad_other += 1;
                }
            }
        }
    }
    let n1 = (c.blocks * j) as f64;
    let n2 = (c.blocks * (c.users() - j)) as f64;
    let (p1, p2) = (bad as f64 / n1, bad_other as f64 / n2);
    let pooled = (bad + bad_other) as f64 / (n1 + n2);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)).sqrt();
    assert!((p1 - p2).abs() <= 1.96 * se + 1e-12, "frame error rates {p1} vs {p2}");
}

#[test]
fn a_single_jammer_hurts_its_target_most() {
    for (kind, axis) in [(JammerKind::Pin, PartitionAxis::Delay), (JammerKind::Nbi, PartitionAxis::Doppler)] {
        let mut c = desk(40);
        c.jammer.kind = Some(kind);
        c.jammer.count = 1;
        c.jammer.target_group = 2;
        c.axis = axis;
        let r = Simulator::new(&c).unwrap().run_point(4.0, 6.0, false).unwrap();
        let ber = r.group_ber();
        for (g, &b) in ber.iter().enumerate() {
            if g != 2 {
                assert!(ber[2] > b, "{}: group BER {ber:?}", kind.as_str());
            }
        }
    }
}

#[test]
fn turbo_loops_do_not_hurt() {
    let mut c = desk(100);
    c.rx.early_stop = false;
    let sim = Simulator::new(&c).unwrap();
    let powers = sim.powers(6.0, 0.0).unwrap();
    let mut per_loop = vec![0u64; c.rx.turbo_loops];
    let mut bits = 0u64;
    for b in 0..c.blocks as u64 {
        let o = sim.run_block(b, &powers, false).unwrap();
        for (l, e) in o.loop_errors.iter().enumerate() {
            per_loop[l] += e.iter().sum::<u64>();
        }
        bits += (o.errors.len() * sim.code().k()) as u64;
    }
    let ber: Vec<f64> = per_loop.iter().map(|&e| e as f64 / bits as f64).collect();
    for w in ber.windows(2) {
        assert!(w[1] <= w[0] + 1e-3, "per-loop BER {ber:?}");
    }
}
