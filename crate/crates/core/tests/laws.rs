//! Distributional and structural laws of the simulators and couplings,
//! checked on small synthetic networks where exact answers are cheap.

use inhomog_core::coupling::{
    couple_crn, couple_crn_with, couple_extrande_thinning, couple_independent_with,
    couple_stacked, couple_stacked_with, PairObserver,
};
use inhomog_core::exact::{
    simulate_extrande, simulate_extrande_with, simulate_hitting_time, ExtrandeOptions, SimError,
};
use inhomog_core::network::{
    PropensitySpec, ReactionChannel, ReactionNetwork, State, StateFactor, TimeRate,
};
use inhomog_core::path::{Endpoint, NullObserver, PathObserver, Recorder};
use inhomog_core::rng::{role, RandomStream, StreamId};
use inhomog_core::stats;

fn single_channel(rate: TimeRate) -> ReactionNetwork {
    ReactionNetwork::new(
        1,
        vec![ReactionChannel::from_stoichiometry(1, &[], &[(0, 1)], rate)],
    )
    .unwrap()
}

fn birth_death(birth: f64, death: f64) -> ReactionNetwork {
    ReactionNetwork::new(
        1,
        vec![
            ReactionChannel::from_stoichiometry(1, &[], &[(0, 1)], TimeRate::Constant(birth)),
            ReactionChannel::from_stoichiometry(1, &[(0, 1)], &[], TimeRate::Constant(death)),
        ],
    )
    .unwrap()
}

// a small time-dependent two-species network exercising thinning slack
fn sine_network(amplitude: f64) -> ReactionNetwork {
    ReactionNetwork::new(
        2,
        vec![
            ReactionChannel::from_stoichiometry(
                2,
                &[],
                &[(0, 1)],
                TimeRate::Sinusoid { base: 4.0, amplitude, period: 3.0, phase: 0.0 },
            ),
            ReactionChannel::from_stoichiometry(2, &[(0, 1)], &[], TimeRate::Constant(1.0)),
            ReactionChannel::from_stoichiometry(
                2,
                &[(0, 1)],
                &[(0, 1), (1, 1)],
                TimeRate::Constant(2.0),
            ),
            ReactionChannel::from_stoichiometry(2, &[(1, 1)], &[], TimeRate::Constant(0.7)),
        ],
    )
    .unwrap()
}

fn poisson_expected(mean: f64, n: usize, bins: usize) -> Vec<f64> {
    let mut expected = vec![0.0f64; bins + 1];
    let mut cum = 0.0;
    for (k, e) in expected.iter_mut().enumerate().take(bins) {
        let p = (-mean + k as f64 * mean.ln()
            - (1..=k as u64).map(|v| (v as f64).ln()).sum::<f64>())
        .exp();
        *e = p * n as f64;
        cum += p;
    }
    expected[bins] = (1.0 - cum) * n as f64;
    expected
}

#[test]
fn extrande_constant_rate_counts_are_poisson() {
    // single channel, rate 2, T = 5: zero phantoms and Poisson(10) jumps
    let net = single_channel(TimeRate::Constant(2.0));
    let x0 = State::new(vec![0]).unwrap();
    let n = 10_000;
    let bins = 25;
    let mut observed = vec![0u64; bins + 1];
    for i in 0..n {
        let mut s = RandomStream::new(31, StreamId::new(0, i as u64, role::MAIN));
        let mut counters = inhomog_core::path::SimCounters::default();
        let mut rec = Endpoint::new();
        counters = simulate_extrande_with(
            &net,
            None,
            &x0,
            5.0,
            &mut s,
            ExtrandeOptions::default(),
            &mut rec,
        )
        .unwrap();
        assert_eq!(counters.phantoms, 0, "tight constant bound never thins");
        observed[(rec.state()[0] as usize).min(bins)] += 1;
    }
    let expected = poisson_expected(10.0, n, bins);
    assert!(stats::chi_square_gof_passes(&observed, &expected, 0.001));
}

#[test]
fn extrande_zero_rate_network_never_jumps() {
    let net = single_channel(TimeRate::Constant(0.0));
    let x0 = State::new(vec![3]).unwrap();
    let mut s = RandomStream::new(1, StreamId::new(0, 0, role::MAIN));
    let path = simulate_extrande(&net, &x0, 10.0, &mut s).unwrap();
    assert_eq!(path.jump_count(), 0);
    assert_eq!(path.final_state(), &[3]);
}

#[test]
fn extrande_law_invariant_to_window_escapes() {
    // windowed certification escapes advance time without corrupting the law
    let net = sine_network(3.0);
    let x0 = State::new(vec![0, 0]).unwrap();
    let t_end = 6.0;
    let n = 4000;
    let mut full: Vec<f64> = Vec::new();
    let mut windowed: Vec<f64> = Vec::new();
    for i in 0..n {
        let mut s = RandomStream::new(77, StreamId::new(0, i as u64, role::MAIN));
        let mut e = Endpoint::new();
        simulate_extrande_with(&net, None, &x0, t_end, &mut s, ExtrandeOptions::default(), &mut e)
            .unwrap();
        full.push(e.state()[0] as f64);

        let mut s = RandomStream::new(78, StreamId::new(0, i as u64, role::MAIN));
        let mut e = Endpoint::new();
        let counters = simulate_extrande_with(
            &net,
            None,
            &x0,
            t_end,
            &mut s,
            ExtrandeOptions { window: Some(0.05) },
            &mut e,
        )
        .unwrap();
        if i == 0 {
            assert!(counters.escapes >= 5, "short window must escape repeatedly");
        }
        windowed.push(e.state()[0] as f64);
    }
    let d = stats::ks_two_sample(&mut full, &mut windowed);
    assert!(d < stats::ks_two_sample_threshold(n, n, 0.001), "KS {d}");
}

#[test]
fn hitting_time_matches_extrande_endpoint_law() {
    let net = sine_network(3.0);
    let x0 = State::new(vec![0, 0]).unwrap();
    let t_end = 6.0;
    let n = 4000;
    for species in 0..2 {
        let mut a: Vec<f64> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        for i in 0..n {
            let mut s = RandomStream::new(5, StreamId::new(0, i as u64, role::MAIN));
            let p = simulate_extrande(&net, &x0, t_end, &mut s).unwrap();
            a.push(p.final_state()[species] as f64);
            let mut s = RandomStream::new(6, StreamId::new(1, i as u64, role::MAIN));
            let p = simulate_hitting_time(&net, &x0, t_end, &mut s, 1e-10).unwrap();
            b.push(p.final_state()[species] as f64);
        }
        let d = stats::ks_two_sample(&mut a, &mut b);
        assert!(
            d < stats::ks_two_sample_threshold(n, n, 0.001),
            "species {species}: KS {d}"
        );
    }
}

#[test]
fn trajectory_state_updates_match_change_vectors() {
    let net = sine_network(2.0);
    let x0 = State::new(vec![1, 0]).unwrap();
    let mut s = RandomStream::new(12, StreamId::new(0, 0, role::MAIN));
    let path = simulate_extrande(&net, &x0, 4.0, &mut s).unwrap();
    assert!(path.jump_count() > 10);
    let mut prev = path.initial_state.clone();
    for i in 0..path.jump_count() {
        let ch = path.channel_indices[i];
        let mut expect = prev.clone();
        for (e, d) in expect.iter_mut().zip(&net.channels()[ch].change) {
            *e += d;
        }
        assert_eq!(path.state_after(i), expect.as_slice());
        assert!(path.state_after(i).iter().all(|&v| v >= 0));
        prev = expect;
        if i > 0 {
            assert!(path.jump_times[i] > path.jump_times[i - 1]);
        }
    }
}

#[test]
fn independent_coupling_rejects_identical_streams() {
    let net = birth_death(2.0, 1.0);
    let x0 = State::new(vec![0]).unwrap();
    let s = RandomStream::new(3, StreamId::new(0, 0, role::MAIN));
    let err = couple_independent_with(
        &net,
        &net,
        None,
        None,
        &x0,
        &x0,
        1.0,
        s.clone(),
        s,
        ExtrandeOptions::default(),
        &mut NullObserver,
        &mut NullObserver,
    )
    .unwrap_err();
    assert_eq!(err, SimError::StreamsNotDistinct);
}

#[test]
fn independent_coupling_variance_adds() {
    // Var(fX - fZ) = Var fX + Var fZ for independent components
    let net = birth_death(5.0, 1.0);
    let x0 = State::new(vec![0]).unwrap();
    let n = 100_000;
    let mut diff = stats::Moments::new();
    let mut fx = stats::Moments::new();
    let mut fz = stats::Moments::new();
    for i in 0..n {
        let sx = RandomStream::new(9, StreamId::new(0, i, role::MAIN));
        let sz = RandomStream::new(9, StreamId::new(0, i, role::PARTNER));
        let mut ex = Endpoint::new();
        let mut ez = Endpoint::new();
        couple_independent_with(
            &net,
            &net,
            None,
            None,
            &x0,
            &x0,
            10.0,
            sx,
            sz,
            ExtrandeOptions::default(),
            &mut ex,
            &mut ez,
        )
        .unwrap();
        let (a, b) = (ex.state()[0] as f64, ez.state()[0] as f64);
        diff.push(a - b);
        fx.push(a);
        fz.push(b);
    }
    let sum = fx.variance() + fz.variance();
    assert!(
        (diff.variance() - sum).abs() < 0.05 * sum,
        "{} vs {}",
        diff.variance(),
        sum
    );
    // identical networks: the mean difference vanishes
    assert!(diff.mean().abs() <= 3.0 * diff.sem(), "{} vs {}", diff.mean(), diff.sem());
}

#[test]
fn crn_identical_inputs_identical_paths() {
    let net = sine_network(2.5);
    let x0 = State::new(vec![0, 0]).unwrap();
    let s = RandomStream::new(21, StreamId::new(0, 0, role::MAIN));
    let pair = couple_crn(&net, &net, &x0, &x0, 5.0, s).unwrap();
    assert_eq!(pair.path_x, pair.path_z);
    assert!(pair.path_x.jump_count() > 5);
}

#[test]
fn crn_jump_times_differ_between_rates() {
    // constant rates 1 vs 2: same randomness, different jump-time sets
    let net_x = single_channel(TimeRate::Constant(1.0));
    let net_z = single_channel(TimeRate::Constant(2.0));
    let x0 = State::new(vec![0]).unwrap();
    let s = RandomStream::new(4, StreamId::new(0, 0, role::MAIN));
    let pair = couple_crn(&net_x, &net_z, &x0, &x0, 8.0, s).unwrap();
    assert!(!pair.path_x.jump_times.is_empty());
    assert_ne!(pair.path_x.jump_times, pair.path_z.jump_times);
}

#[test]
fn thinning_identical_inputs_identical_paths() {
    let net = sine_network(2.5);
    let x0 = State::new(vec![0, 0]).unwrap();
    let s = RandomStream::new(22, StreamId::new(0, 0, role::MAIN));
    let pair = couple_extrande_thinning(&net, &net, &x0, &x0, 5.0, s).unwrap();
    assert_eq!(pair.path_x, pair.path_z);
}

#[test]
fn thinning_joint_classification_frequencies() {
    // two constant channels with swapped rates; the shared uniform lands the
    // processes in regions whose probabilities are interval overlaps of the
    // two partitions
    let make = |r1: f64, r2: f64| {
        ReactionNetwork::new(
            1,
            vec![
                ReactionChannel::from_stoichiometry(1, &[], &[(0, 1)], TimeRate::Constant(r1)),
                ReactionChannel::from_stoichiometry(1, &[], &[(0, 1)], TimeRate::Constant(r2)),
            ],
        )
        .unwrap()
    };
    // X partition [0,3) ch0, [3,4) ch1; Z partition [0,1) ch0, [1,4) ch1
    let net_x = make(3.0, 1.0);
    let net_z = make(1.0, 3.0);
    let x0 = State::new(vec![0]).unwrap();

    struct Counts {
        both0: u64,
        x0_z1: u64,
        both1: u64,
        total: u64,
    }
    impl PairObserver for Counts {
        fn on_event(
            &mut self,
            _t: f64,
            fx: Option<usize>,
            fz: Option<usize>,
            _x: &[i64],
            _z: &[i64],
        ) {
            self.total += 1;
            match (fx, fz) {
                (Some(0), Some(0)) => self.both0 += 1,
                (Some(0), Some(1)) => self.x0_z1 += 1,
                (Some(1), Some(1)) => self.both1 += 1,
                (Some(1), Some(0)) => panic!("impossible region"),
                _ => {}
            }
        }
    }
    // both totals sit at 4 forever, so the partitions are exact
    let mut counts = Counts { both0: 0, x0_z1: 0, both1: 0, total: 0 };
    let mut s = RandomStream::new(15, StreamId::new(0, 0, role::MAIN));
    inhomog_core::coupling::couple_extrande_thinning_with(
        &net_x,
        &net_z,
        None,
        &x0,
        &x0,
        4000.0,
        &mut s,
        ExtrandeOptions::default(),
        &mut counts,
    )
    .unwrap();
    let n = counts.total as f64;
    assert!(n > 10_000.0);
    // overlaps: both ch0 on [0,1): 1/4; X ch0, Z ch1 on [1,3): 1/2; both ch1
    // on [3,4): 1/4
    let tol = 3.0 * (0.25f64 * 0.75 / n).sqrt() + 3.0 * (0.5f64 * 0.5 / n).sqrt();
    assert!((counts.both0 as f64 / n - 0.25).abs() < tol);
    assert!((counts.x0_z1 as f64 / n - 0.5).abs() < tol);
    assert!((counts.both1 as f64 / n - 0.25).abs() < tol);
}

#[test]
fn stacked_identical_inputs_identical_paths() {
    let net = sine_network(2.5);
    let x0 = State::new(vec![0, 0]).unwrap();
    let s = RandomStream::new(23, StreamId::new(0, 0, role::MAIN));
    let pair = couple_stacked(&net, &net, &x0, &x0, 5.0, s).unwrap();
    assert_eq!(pair.path_x, pair.path_z);
}

#[test]
fn stacked_simultaneous_fires_share_channel_and_hit_min_rate() {
    // rates 2 vs 3 on one channel: strip height 3, double-fire chance 2/3
    let net_x = single_channel(TimeRate::Constant(2.0));
    let net_z = single_channel(TimeRate::Constant(3.0));
    let x0 = State::new(vec![0]).unwrap();
    let s = RandomStream::new(8, StreamId::new(0, 0, role::MAIN));
    let pair = couple_stacked(&net_x, &net_z, &x0, &x0, 40_000.0, s).unwrap();
    let log = pair.shared_event_log.as_ref().unwrap();
    assert!(log.len() >= 100_000, "{} events", log.len());
    let mut double = 0u64;
    for ev in log {
        if let (Some(a), Some(b)) = (ev.channel_x, ev.channel_z) {
            assert_eq!(a, b, "simultaneous firings must share the channel");
            double += 1;
        }
    }
    let frac = double as f64 / log.len() as f64;
    let tol = 3.0 * (2.0f64 / 3.0 * 1.0 / 3.0 / log.len() as f64).sqrt();
    assert!((frac - 2.0 / 3.0).abs() < tol, "double-fire fraction {frac}");
}

#[test]
fn coupling_components_keep_the_marginal_law() {
    // every strategy's components match plain thinning, two-sample KS
    let net_x = sine_network(3.0);
    let net_z = sine_network(1.5);
    let x0 = State::new(vec![0, 0]).unwrap();
    let t_end = 6.0;
    let n = 4000usize;

    let mut ref_x: Vec<f64> = Vec::new();
    let mut ref_z: Vec<f64> = Vec::new();
    for i in 0..n {
        let mut s = RandomStream::new(100, StreamId::new(7, i as u64, role::MAIN));
        let p = simulate_extrande(&net_x, &x0, t_end, &mut s).unwrap();
        ref_x.push(p.final_state()[0] as f64);
        let mut s = RandomStream::new(101, StreamId::new(7, i as u64, role::MAIN));
        let p = simulate_extrande(&net_z, &x0, t_end, &mut s).unwrap();
        ref_z.push(p.final_state()[0] as f64);
    }

    for strategy in inhomog_core::coupling::CouplingStrategy::ALL {
        let mut xs: Vec<f64> = Vec::new();
        let mut zs: Vec<f64> = Vec::new();
        for i in 0..n {
            let main = RandomStream::new(200, StreamId::new(8, i as u64, role::MAIN));
            let partner = RandomStream::new(200, StreamId::new(8, i as u64, role::PARTNER));
            let mut ex = Endpoint::new();
            let mut ez = Endpoint::new();
            inhomog_core::coupling::couple_pair_with(
                strategy,
                &net_x,
                &net_z,
                None,
                &x0,
                &x0,
                t_end,
                main,
                partner,
                ExtrandeOptions::default(),
                &mut ex,
                &mut ez,
            )
            .unwrap();
            xs.push(ex.state()[0] as f64);
            zs.push(ez.state()[0] as f64);
        }
        let crit = stats::ks_two_sample_threshold(n, n, 0.001);
        let dx = stats::ks_two_sample(&mut xs, &mut ref_x.clone());
        let dz = stats::ks_two_sample(&mut zs, &mut ref_z.clone());
        assert!(dx < crit, "{strategy:?} X component: KS {dx} vs {crit}");
        assert!(dz < crit, "{strategy:?} Z component: KS {dz} vs {crit}");
    }
}

#[test]
fn stacked_variance_is_smallest_on_a_perturbed_pair() {
    // small sensitivity-style pair: base 4 vs 4.4 sinusoid amplitude
    let x0 = State::new(vec![0, 0]).unwrap();
    let t_end = 6.0;
    let n = 6000;
    let mut vars = std::collections::HashMap::new();
    for strategy in inhomog_core::coupling::CouplingStrategy::ALL {
        let mut acc = stats::Moments::new();
        for i in 0..n {
            let main = RandomStream::new(55, StreamId::new(9, i, role::MAIN));
            let partner = RandomStream::new(55, StreamId::new(9, i, role::PARTNER));
            let mut ex = Endpoint::new();
            let mut ez = Endpoint::new();
            inhomog_core::coupling::couple_pair_with(
                strategy,
                &sine_network(3.3),
                &sine_network(2.7),
                None,
                &x0,
                &x0,
                t_end,
                main,
                partner,
                ExtrandeOptions::default(),
                &mut ex,
                &mut ez,
            )
            .unwrap();
            acc.push(ex.state()[0] as f64 - ez.state()[0] as f64);
        }
        vars.insert(strategy.name(), acc.variance());
    }
    let stacked = vars["stacked"];
    for (name, v) in &vars {
        assert!(stacked <= *v * 1.05, "stacked {stacked} vs {name} {v}");
    }
    assert!(
        stacked < vars["independent"] / 2.0,
        "stacked {stacked} vs independent {}",
        vars["independent"]
    );
}

#[test]
fn crn_uses_one_stream_replayed() {
    // the pair never consumes more than each component's own replay
    let net = sine_network(1.0);
    let x0 = State::new(vec![0, 0]).unwrap();
    let s = RandomStream::new(2, StreamId::new(0, 0, role::MAIN));
    let mut rec_x = Recorder::new();
    let mut rec_z = Recorder::new();
    let outcome = couple_crn_with(
        &net,
        &net,
        None,
        &x0,
        &x0,
        3.0,
        s,
        ExtrandeOptions::default(),
        &mut rec_x,
        &mut rec_z,
    )
    .unwrap();
    // identical nets consume identical draws, so the pair total is even
    assert_eq!(outcome.draws.total() % 2, 0);
    assert!(outcome.draws.total() > 0);
}

#[test]
fn stacked_skips_zero_height_strips() {
    // a channel with zero rate on both sides contributes no strip mass and
    // never fires
    let make = |mid: f64| {
        ReactionNetwork::new(
            1,
            vec![
                ReactionChannel::from_stoichiometry(1, &[], &[(0, 1)], TimeRate::Constant(2.0)),
                ReactionChannel::from_stoichiometry(1, &[], &[(0, 1)], TimeRate::Constant(mid)),
                ReactionChannel::from_stoichiometry(1, &[(0, 1)], &[], TimeRate::Constant(1.0)),
            ],
        )
        .unwrap()
    };
    let net = make(0.0);
    let x0 = State::new(vec![0]).unwrap();
    let s = RandomStream::new(77, StreamId::new(0, 1, role::MAIN));
    let pair = couple_stacked(&net, &net, &x0, &x0, 200.0, s).unwrap();
    assert!(pair.path_x.jump_count() > 100);
    assert!(pair.path_x.channel_indices.iter().all(|&c| c != 1));
}

#[test]
fn bound_violation_is_reported_with_channel() {
    // a modulated rate whose claimed level maximum understates the realized
    // level breaks its certificate; every thinning loop must notice and name
    // the channel
    let net = ReactionNetwork::new(
        1,
        vec![
            ReactionChannel::from_stoichiometry(1, &[], &[(0, 1)], TimeRate::Constant(1.0)),
            ReactionChannel::from_stoichiometry(
                1,
                &[],
                &[(0, 1)],
                TimeRate::Modulated { scale: 1.0 },
            ),
        ],
    )
    .unwrap();
    let x0 = State::new(vec![0]).unwrap();
    let env = inhomog_core::env::EnvironmentPath::constant(5.0, 100.0).with_claimed_level_max(2.0);

    let mut s = RandomStream::new(5, StreamId::new(0, 0, role::MAIN));
    let err = simulate_extrande_with(
        &net,
        Some(&env),
        &x0,
        10.0,
        &mut s,
        ExtrandeOptions::default(),
        &mut NullObserver,
    )
    .unwrap_err();
    assert!(
        matches!(err, SimError::BoundViolation { channel: 1, .. }),
        "{err:?}"
    );

    let mut s = RandomStream::new(5, StreamId::new(0, 1, role::MAIN));
    struct Sink;
    impl PairObserver for Sink {}
    let err = couple_stacked_with(
        &net,
        &net,
        Some(&env),
        &x0,
        &x0,
        10.0,
        &mut s,
        ExtrandeOptions::default(),
        &mut Sink,
    )
    .unwrap_err();
    assert!(
        matches!(err, SimError::BoundViolation { channel: 1, .. }),
        "{err:?}"
    );

    let mut s = RandomStream::new(5, StreamId::new(0, 2, role::MAIN));
    let err = inhomog_core::coupling::couple_extrande_thinning_with(
        &net,
        &net,
        Some(&env),
        &x0,
        &x0,
        10.0,
        &mut s,
        ExtrandeOptions::default(),
        &mut Sink,
    )
    .unwrap_err();
    assert!(
        matches!(err, SimError::BoundViolation { channel: 1, .. }),
        "{err:?}"
    );
}

#[test]
fn phantom_fraction_bounded_by_certificate_slack() {
    // dimer: only the transcription channel's bound (75) has slack over its
    // rate (60 on average), so phantoms are at most ~15/75 of that
    // channel's candidate share
    let sys = inhomog_core::models::CatalogId::Dimer.build_default();
    struct ChannelCount(u64);
    impl PathObserver for ChannelCount {
        fn on_jump(&mut self, _t: f64, channel: usize, _x: &[i64]) {
            if channel == 0 {
                self.0 += 1;
            }
        }
    }
    let mut phantoms = 0u64;
    let mut r1_fires = 0u64;
    for i in 0..20 {
        let mut s = RandomStream::new(321, StreamId::new(0, i, role::MAIN));
        let mut obs = ChannelCount(0);
        let counters = simulate_extrande_with(
            &sys.network,
            None,
            &sys.initial,
            20.0,
            &mut s,
            ExtrandeOptions::default(),
            &mut obs,
        )
        .unwrap();
        phantoms += counters.phantoms;
        r1_fires += obs.0;
    }
    let candidates = phantoms + r1_fires;
    let frac = phantoms as f64 / candidates as f64;
    assert!(candidates > 10_000);
    assert!(frac <= 0.25, "phantom fraction {frac} of transcription candidates");
}
