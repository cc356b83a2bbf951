use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use spacdc::cluster::{
    collusion_audit, relative_error, Cluster, ClusterReport, SealedTask, TaskSpec, WirePayload,
};
use spacdc::codec::{self, ReturnedResult};
use spacdc::dl::{train, Algorithm, Dataset};
use spacdc::ecc::CipherMatrix;
use spacdc::stats::{linear_fit, median};
use spacdc::RealMatrix;

use crate::config::Config;
use crate::error::{CliError, Result};

const MANIFEST: &str = "manifest.txt";

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn build_cluster(cfg: &Config) -> Result<Cluster> {
    Ok(Cluster::with_roles(
        cfg.cluster_config()?,
        cfg.n(),
        &cfg.stragglers()?,
        &cfg.colluders()?,
        cfg.timing(),
        cfg.seed(),
    )?)
}

fn task_spec(cfg: &Config) -> Result<TaskSpec> {
    Ok(TaskSpec {
        function: cfg.function()?,
        input: cfg.input()?,
        codec: cfg.codec()?,
        wait_policy: cfg.wait_policy()?,
        mask_scale: cfg.mask_scale(),
    })
}

fn join<T: ToString>(values: &[T], sep: &str) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

fn input_digest(x: &RealMatrix) -> String {
    hex::encode(Sha256::digest(x.to_text().as_bytes()))
}

fn share_name(i: usize) -> String {
    format!("share_{i}.hex")
}

/// Encodes and encrypts the configured input, writing one share file per
/// worker and a manifest.
pub fn encode(cfg: &Config) -> Result<()> {
    if cfg.get("cluster.encrypt") != "true" {
        return Err(CliError::Config("share files hold ciphertexts; cluster.encrypt must be true".into()));
    }
    let cluster = build_cluster(cfg)?;
    let spec = task_spec(cfg)?;
    let (blocks, sealed) = cluster.seal_job(&spec, cfg.seed())?;
    let header = cfg.header("encode");
    let dir = cfg.output_dir();
    for (i, task) in sealed.iter().enumerate() {
        let WirePayload::Cipher(ct) = &task.share else { unreachable!("encryption is on") };
        write_file(dir, &share_name(i), &format!("{header}{}\n", hex::encode(ct.to_bytes())))?;
    }
    let codec = &spec.codec;
    let mut manifest = header;
    let mut line = |k: &str, v: String| manifest.push_str(&format!("{k}={v}\n"));
    line("config_hash", cfg.hash());
    line("seed", cfg.seed().to_string());
    line("curve", cluster.config().curve.name().to_string());
    line("function", spec.function.name().to_string());
    line("n", codec.n.to_string());
    line("k", codec.k.to_string());
    line("t", codec.t.to_string());
    line("beta", join(&codec.beta, ","));
    line("alpha", join(&codec.alpha, ","));
    line("input_shape", format!("{}x{}", spec.input.rows(), spec.input.cols()));
    line("block_shape", format!("{}x{}", blocks[0].rows(), blocks[0].cols()));
    line("input_sha256", input_digest(&spec.input));
    line("shares", join(&(0..codec.n).map(share_name).collect::<Vec<_>>(), ","));
    write_file(dir, MANIFEST, &manifest)?;
    println!("wrote {} shares and {MANIFEST} to {}", codec.n, dir.display());
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn parse_manifest(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Loads shares written by [`encode`], checking that they were produced for
/// the same seed, curve, code and input as the current configuration.
fn load_shares(dir: &Path, cfg: &Config, spec: &TaskSpec, cluster: &Cluster) -> Result<Vec<SealedTask>> {
    let manifest = parse_manifest(&read_text(&dir.join(MANIFEST))?);
    let field = |k: &str| -> Result<&str> {
        manifest
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| CliError::Config(format!("{}: missing '{k}'", dir.join(MANIFEST).display())))
    };
    let codec = &spec.codec;
    let expected = [
        ("seed", cfg.seed().to_string()),
        ("curve", cluster.config().curve.name().to_string()),
        ("n", codec.n.to_string()),
        ("k", codec.k.to_string()),
        ("t", codec.t.to_string()),
        ("beta", join(&codec.beta, ",")),
        ("alpha", join(&codec.alpha, ",")),
        ("input_sha256", input_digest(&spec.input)),
    ];
    for (k, want) in expected {
        if field(k)? != want {
            return Err(CliError::Config(format!(
                "shares in {} were encoded with {k}={}, current config has {k}={want}",
                dir.display(),
                field(k)?
            )));
        }
    }
    field("shares")?
        .split(',')
        .map(|name| {
            let path = dir.join(name);
            let text = read_text(&path)?;
            let body: String = text.lines().filter(|l| !l.starts_with('#')).collect();
            let bytes = hex::decode(body.trim())
                .map_err(|e| CliError::Config(format!("{}: not hex ({e})", path.display())))?;
            Ok(SealedTask { share: WirePayload::Cipher(CipherMatrix::from_bytes(&bytes)?), operand: None })
        })
        .collect()
}

fn write_run_outputs(cfg: &Config, decoded: &[RealMatrix], report: &ClusterReport) -> Result<()> {
    let header = cfg.header("run");
    let dir = cfg.output_dir();
    for (j, y) in decoded.iter().enumerate() {
        write_file(dir, &format!("result_{j}.txt"), &format!("{header}{}", y.to_text()))?;
    }
    write_file(dir, "report.csv", &format!("{header}{}", report.to_csv()))?;
    let mut errors = format!("{header}block,relative_error\n");
    for (j, e) in report.decode_targets_error.iter().enumerate() {
        errors.push_str(&format!("{j},{e:.9e}\n"));
    }
    write_file(dir, "errors.csv", &errors)?;
    Ok(())
}

/// Runs one coded job, either end to end or from previously encoded shares.
pub fn run(cfg: &Config, from_shares: Option<&Path>) -> Result<()> {
    let cluster = build_cluster(cfg)?;
    let spec = task_spec(cfg)?;
    let (decoded, report) = match from_shares {
        None => cluster.run_job(&spec, cfg.seed())?,
        Some(dir) => {
            let sealed = load_shares(dir, cfg, &spec, &cluster)?;
            let (decoded, mut report) =
                cluster.run_sealed(&sealed, &spec.function, spec.wait_policy, &spec.codec, cfg.seed())?;
            let blocks = spec.input.partition_rows(spec.codec.k)?;
            report.decode_targets_error = blocks
                .iter()
                .zip(&decoded)
                .map(|(b, y)| relative_error(y, &spec.function.apply(b)?))
                .collect::<spacdc::Result<_>>()?;
            (decoded, report)
        }
    };
    write_run_outputs(cfg, &decoded, &report)?;
    println!(
        "returned={} wait_policy={} wall_clock_ms={:.3} max_relative_error={:.3e}",
        report.returned_set.len(),
        spec.wait_policy,
        report.wall_clock_ms,
        report.max_decode_error()
    );
    Ok(())
}

fn datasets(cfg: &Config) -> Result<(Dataset, Dataset)> {
    let seed = cfg.seed();
    Ok(match cfg.dataset() {
        "blobs" => {
            let m = cfg.train_samples();
            (Dataset::blobs(m, seed), Dataset::blobs(m, seed.wrapping_add(1)))
        }
        "digits1k" => Dataset::digits1k().split(0.8, seed),
        path => Dataset::parse_csv(&read_text(Path::new(path))?)?.split(0.8, seed),
    })
}

/// Trains with the coded delta computation, the uncoded baseline, or both
/// from the same seed.
pub fn train_cmd(cfg: &Config, algo: Option<&str>) -> Result<()> {
    let algo = algo.unwrap_or(cfg.train_algo());
    let algos = match algo {
        "both" => vec![Algorithm::Spacdc, Algorithm::Conv],
        other => vec![Algorithm::parse(other)?],
    };
    let train_cfg = cfg.train_config()?;
    let (train_set, test_set) = datasets(cfg)?;
    let header = cfg.header("train");
    for a in algos {
        let (_, trace) = train(&train_set, Some(&test_set), &train_cfg, a)?;
        let body = format!("{header}# algo={} initial_loss={:.9}\n{}", a.name(), trace.initial_loss, trace.to_csv());
        write_file(cfg.output_dir(), &format!("trace_{}.csv", a.name()), &body)?;
        let epochs = trace.loss.len() as f64;
        println!(
            "{}: epochs={} initial_loss={:.6} final_loss={:.6} accuracy={} mean_epoch_ms={:.3}",
            a.name(),
            trace.loss.len(),
            trace.initial_loss,
            trace.loss.last().copied().unwrap_or(f64::NAN),
            trace.accuracy.last().copied().flatten().map(|v| format!("{v:.4}")).unwrap_or_default(),
            trace.epoch_ms.iter().sum::<f64>() / epochs
        );
    }
    Ok(())
}

/// One audit row per colluder count from 1 to `T + 1`.
pub fn audit(cfg: &Config) -> Result<()> {
    let x = cfg.input()?;
    let codec = cfg.codec()?;
    let audit_cfg = cfg.audit_config(&x)?;
    let order = cfg.colluder_order()?;
    let mut out = format!("{}colluder_count,colluders,t,bound_exceeded,max_statistic,min_p_value,pass\n", cfg.header("audit"));
    for count in 1..=(codec.t + 1).min(codec.n) {
        let mut group = order[..count].to_vec();
        group.sort_unstable();
        let r = collusion_audit(&x, &codec, &group, &audit_cfg, cfg.seed())?;
        out.push_str(&format!(
            "{count},{},{},{},{:.6},{:.6},{}\n",
            join(&group, ";"),
            r.t,
            r.bound_exceeded,
            r.max_statistic,
            r.min_p_value,
            r.pass
        ));
        println!(
            "colluders={} bound_exceeded={} max_ks={:.4} min_p={:.4} pass={}",
            join(&group, ";"),
            r.bound_exceeded,
            r.max_statistic,
            r.min_p_value,
            r.pass
        );
    }
    write_file(cfg.output_dir(), "audit.csv", &out)?;
    Ok(())
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Median over `repeats` of the time per call of `f`, in nanoseconds, with
/// `inner` calls per repetition.
fn time_ns<T>(repeats: usize, inner: usize, mut f: impl FnMut() -> T) -> f64 {
    std::hint::black_box(f());
    let samples: Vec<f64> = (0..repeats)
        .map(|_| {
            let start = Instant::now();
            for _ in 0..inner {
                std::hint::black_box(f());
            }
            start.elapsed().as_nanos() as f64 / inner as f64
        })
        .collect();
    median(&samples).unwrap_or(f64::NAN)
}

/// Times decoding against the number of returned results and encoding
/// against the number of workers, with a least-squares line through each.
pub fn bench(cfg: &Config) -> Result<()> {
    let (rows, cols) = cfg.bench_shape();
    let repeats = cfg.bench_repeats();
    let (k, t) = (cfg.codec()?.k, cfg.codec()?.t);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed());
    let header = cfg.header("bench");

    let sizes = cfg.bench_sizes();
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(CliError::Config("bench.sizes must list positive sizes".into()));
    }
    let n_max = *sizes.iter().max().unwrap();
    let codec_cfg = spacdc::codec::CodecConfig::default_anchors(n_max, k, t)?;
    let results: Vec<ReturnedResult> = (0..n_max)
        .map(|i| ReturnedResult { worker_index: i, payload: random_matrix(rows, cols, &mut rng) })
        .collect();
    let mut decode_rows = Vec::new();
    for &s in &sizes {
        // Spread the returned workers over the whole node set.
        let subset: Vec<ReturnedResult> = (0..s).map(|i| results[i * n_max / s].clone()).collect();
        let inner = (4096 / s).max(1);
        let ns = time_ns(repeats, inner, || codec::recover(&subset, &codec_cfg).expect("nonempty subset"));
        decode_rows.push((s as f64, ns / k as f64));
    }

    let mut encode_rows = Vec::new();
    for &n in &cfg.bench_encode_sizes() {
        let enc_cfg = spacdc::codec::CodecConfig::default_anchors(n, k, t)?;
        let blocks: Vec<RealMatrix> = (0..k).map(|_| random_matrix(rows, cols, &mut rng)).collect();
        let masks: Vec<RealMatrix> = (0..t).map(|_| random_matrix(rows, cols, &mut rng)).collect();
        let ns = time_ns(repeats, 1, || codec::encode(&blocks, &masks, &enc_cfg).expect("valid encoding"));
        encode_rows.push((n as f64, ns));
    }

    let dir = cfg.output_dir();
    let mut csv = format!("{header}results,ns_per_target\n");
    for (s, ns) in &decode_rows {
        csv.push_str(&format!("{s},{ns:.1}\n"));
    }
    write_file(dir, "bench_decode.csv", &csv)?;
    let mut csv = format!("{header}workers,ns_per_encode\n");
    for (n, ns) in &encode_rows {
        csv.push_str(&format!("{n},{ns:.1}\n"));
    }
    write_file(dir, "bench_encode.csv", &csv)?;

    let mut fit = format!("{header}series,slope_ns,intercept_ns,r2\n");
    for (name, rows) in [("decode", &decode_rows), ("encode", &encode_rows)] {
        let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().copied().unzip();
        if let Some((slope, intercept, r2)) = linear_fit(&x, &y) {
            fit.push_str(&format!("{name},{slope:.3},{intercept:.3},{r2:.6}\n"));
            println!("{name}: slope={slope:.3} ns intercept={intercept:.3} ns r2={r2:.4}");
        }
    }
    write_file(dir, "bench_fit.csv", &fit)?;
    Ok(())
}
