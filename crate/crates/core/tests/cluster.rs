use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spacdc::cluster::{
    collusion_audit, AuditConfig, Cluster, ClusterConfig, Endpoint, TaskFunction, TaskSpec, Timing, WaitPolicy,
    WirePayload,
};
use spacdc::codec::{self, CodecConfig, ReturnedResult};
use spacdc::ecc::U256;
use spacdc::{Error, RealMatrix};

fn random(rows: usize, cols: usize, seed: u64) -> RealMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RealMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn spec(function: TaskFunction, input: RealMatrix, codec: CodecConfig, wait_policy: WaitPolicy) -> TaskSpec {
    TaskSpec { function, input, codec, wait_policy, mask_scale: 1.0 }
}

fn cluster(n: usize, stragglers: &[usize], colluders: &[usize], config: ClusterConfig) -> Cluster {
    Cluster::with_roles(config, n, stragglers, colluders, Timing::default(), 7).unwrap()
}

#[test]
fn identity_job_matches_codec_reference() {
    let x = random(8, 3, 1);
    let cfg = CodecConfig::default_anchors(6, 2, 1).unwrap();
    let seed = 11;
    let c = cluster(6, &[], &[], ClusterConfig::default());
    let (out, report) = c.run_job(&spec(TaskFunction::Identity, x.clone(), cfg.clone(), WaitPolicy::All), seed).unwrap();
    assert_eq!(report.returned_set, (0..6).collect::<Vec<_>>());

    // Reference: encode directly and decode every share, with the same
    // fixed-point rounding the wire applies on both legs.
    let blocks = x.partition_rows(2).unwrap();
    let q = |m: &RealMatrix| m.quantize(24).unwrap().dequantize();
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let masks = codec::gen_masks_with(1, 4, 3, 1.0, &mut rng);
    let shares = codec::encode(&blocks, &masks, &cfg).unwrap();
    let results: Vec<ReturnedResult> = shares
        .iter()
        .map(|s| ReturnedResult { worker_index: s.worker_index, payload: q(&q(&s.payload)) })
        .collect();
    let want = codec::recover(&results, &cfg).unwrap();
    assert_eq!(out, want);
    for (j, e) in report.decode_targets_error.iter().enumerate() {
        let exact = spacdc::cluster::relative_error(&want[j], &blocks[j]).unwrap();
        assert_eq!(*e, exact);
    }
}

#[test]
fn small_worked_scenario_end_to_end() {
    let x = random(6, 4, 2);
    let cfg = CodecConfig::default_anchors(8, 2, 1).unwrap();
    let base = cluster(8, &[], &[], ClusterConfig::default());
    let slow = cluster(8, &[3], &[], ClusterConfig::default());
    let (_, r0) = base.run_job(&spec(TaskFunction::Gram, x.clone(), cfg.clone(), WaitPolicy::All), 5).unwrap();
    let (out, r1) = slow.run_job(&spec(TaskFunction::Gram, x, cfg, WaitPolicy::FirstR(7)), 5).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[0].shape(), (3, 3));
    assert!(!r1.returned_set.contains(&3));
    assert!(r1.max_decode_error() < 10.0 * r0.max_decode_error());
}

#[test]
fn same_seed_same_report() {
    let x = random(5, 2, 3);
    let cfg = CodecConfig::default_anchors(5, 2, 1).unwrap();
    let config = ClusterConfig { capture_wire: true, ..ClusterConfig::default() };
    let c = cluster(5, &[1], &[0], config);
    let s = spec(TaskFunction::Square, x, cfg, WaitPolicy::FirstR(4));
    let a = c.run_job(&s, 9).unwrap();
    let b = c.run_job(&s, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.1, c.run_job(&s, 10).unwrap().1);
}

#[test]
fn wire_carries_only_ciphertext() {
    let x = random(6, 3, 4);
    let cfg = CodecConfig::default_anchors(5, 2, 1).unwrap();
    let on = cluster(5, &[], &[0, 1, 2, 3, 4], ClusterConfig { capture_wire: true, ..ClusterConfig::default() });
    let (out_on, report) = on.run_job(&spec(TaskFunction::Gram, x.clone(), cfg.clone(), WaitPolicy::All), 1).unwrap();
    assert_eq!(report.wire_log.len(), 10);
    let q = *on.config().curve.q();
    for msg in &report.wire_log {
        let WirePayload::Cipher(ct) = &msg.payload else { panic!("plaintext on the wire: {msg:?}") };
        if let Endpoint::Worker(i) = msg.to {
            let share = report.colluder_views.iter().find(|v| v.worker_index == i).unwrap();
            let plain = share.payload.quantize(24).unwrap();
            let lifted: Vec<U256> = plain
                .entries()
                .iter()
                .map(|&e| {
                    let mag = U256::from_u128(e.unsigned_abs());
                    if e >= 0 { mag } else { q.wrapping_sub(&mag) }
                })
                .collect();
            assert_eq!(lifted.len(), ct.masked.len());
            assert!(lifted.iter().zip(&ct.masked).all(|(a, b)| a != b), "share {i} visible on the wire");
        }
    }
    let off = cluster(5, &[], &[], ClusterConfig { encrypt: false, ..ClusterConfig::default() });
    let (out_off, _) = off.run_job(&spec(TaskFunction::Gram, x, cfg, WaitPolicy::All), 1).unwrap();
    assert_eq!(out_on, out_off);
}

#[test]
fn stragglers_are_not_waited_for() {
    let x = random(8, 2, 5);
    let cfg = CodecConfig::default_anchors(10, 2, 1).unwrap();
    let stragglers = [2, 5, 9];
    let c = cluster(10, &stragglers, &[], ClusterConfig::default());
    let (_, fast) = c.run_job(&spec(TaskFunction::Identity, x.clone(), cfg.clone(), WaitPolicy::FirstR(7)), 3).unwrap();
    let (_, slow) = c.run_job(&spec(TaskFunction::Identity, x.clone(), cfg.clone(), WaitPolicy::All), 3).unwrap();
    assert!(stragglers.iter().all(|s| !fast.returned_set.contains(s)));
    assert!(fast.wall_clock_ms < slow.wall_clock_ms);
    for &i in &fast.returned_set {
        assert!(fast.wall_clock_ms >= fast.per_worker_elapsed[i]);
    }
    // One result is enough to decode.
    let (out, one) = c.run_job(&spec(TaskFunction::Identity, x.clone(), cfg.clone(), WaitPolicy::FirstR(1)), 3).unwrap();
    assert_eq!(one.returned_set.len(), 1);
    assert!(out.iter().all(RealMatrix::is_finite));
    let none = c.run_job(&spec(TaskFunction::Identity, x, cfg, WaitPolicy::Deadline(1.0)), 3);
    assert!(matches!(none, Err(Error::JobFailed(_))));
}

#[test]
fn arrival_order_does_not_matter() {
    let x = random(6, 2, 6);
    let cfg = CodecConfig::default_anchors(6, 2, 0).unwrap();
    let blocks = x.partition_rows(2).unwrap();
    let shares = codec::encode(&blocks, &[], &cfg).unwrap();
    let mut results: Vec<ReturnedResult> = shares
        .into_iter()
        .map(|s| ReturnedResult { worker_index: s.worker_index, payload: s.payload })
        .collect();
    let a = codec::recover(&results, &cfg).unwrap();
    results.swap(0, 5);
    results.swap(2, 3);
    assert_eq!(a, codec::recover(&results, &cfg).unwrap());
}

#[test]
fn uncoded_job_is_exact_up_to_quantization() {
    let x = random(7, 3, 8);
    let c = cluster(4, &[1], &[], ClusterConfig::default());
    let (blocks, report) = c.run_uncoded_job(&TaskFunction::Square, &x, 2).unwrap();
    assert_eq!(report.returned_set, vec![0, 1, 2, 3]);
    let got = RealMatrix::vstack(&blocks).unwrap().truncate_rows(7).unwrap();
    let want = x.map(|v| v * v);
    assert!(got.sub(&want).unwrap().max_abs() < 1e-6);
    assert!(report.wall_clock_ms >= 100.0);
}

#[test]
fn real_sleep_mode_runs() {
    let x = random(4, 2, 9);
    let cfg = CodecConfig::default_anchors(4, 2, 0).unwrap();
    let config = ClusterConfig { real_sleep: true, jitter_ms: 0.0, ..ClusterConfig::default() };
    let c = Cluster::with_roles(config, 4, &[3], &[], Timing { base_delay_ms: 1.0, straggler_delay_ms: 200.0 }, 1).unwrap();
    let (out, report) = c.run_job(&spec(TaskFunction::Identity, x, cfg, WaitPolicy::FirstR(3)), 1).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(report.returned_set, vec![0, 1, 2]);
    assert!(report.wall_clock_ms < 200.0);
}

#[test]
fn mismatched_cluster_size_rejected() {
    let c = cluster(4, &[], &[], ClusterConfig::default());
    let cfg = CodecConfig::default_anchors(5, 1, 0).unwrap();
    let err = c.run_job(&spec(TaskFunction::Identity, random(2, 2, 1), cfg, WaitPolicy::All), 0);
    assert!(matches!(err, Err(Error::InvalidConfig(_))));
    assert!(Cluster::with_roles(ClusterConfig::default(), 3, &[3], &[], Timing::default(), 0).is_err());
}

#[test]
fn audit_flags_too_many_colluders() {
    let x = random(4, 2, 10);
    let audit = AuditConfig { trials: 200, mask_scale: 1e3 * x.max_abs(), ..AuditConfig::default() };
    let cfg = CodecConfig::default_anchors(8, 2, 1).unwrap();
    let two = collusion_audit(&x, &cfg, &[3, 4], &audit, 1).unwrap();
    assert!(two.bound_exceeded && !two.pass);
    let cfg0 = CodecConfig::default_anchors(8, 2, 0).unwrap();
    let zero = collusion_audit(&x, &cfg0, &[3], &audit, 1).unwrap();
    assert!(zero.bound_exceeded && !zero.pass);
    assert_eq!(collusion_audit(&x, &cfg, &[3], &audit, 1).unwrap(), collusion_audit(&x, &cfg, &[3], &audit, 1).unwrap());
}

#[test]
fn audit_detects_unmasked_shares() {
    // With no mask weight at all the two inputs are trivially told apart.
    let x = random(4, 2, 11);
    let cfg = CodecConfig::default_anchors(8, 2, 1).unwrap();
    let audit = AuditConfig { trials: 2000, mask_scale: 0.0, ..AuditConfig::default() };
    let r = collusion_audit(&x, &cfg, &[4], &audit, 2).unwrap();
    assert!(!r.pass);
    assert!(r.max_statistic > 0.9);
}
