//! Flat `key=value` experiment configuration.
//!
//! Every known key has a default. Layers are applied in order (defaults,
//! config file, scenario preset, `--set` overrides, dedicated flags) and
//! unknown keys are rejected at every layer. The resolved set of keys,
//! minus `output.dir`, is what gets hashed and echoed into output headers.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use spacdc::cluster::{AuditConfig, ClusterConfig, TaskFunction, Timing, WaitPolicy};
use spacdc::codec::CodecConfig;
use spacdc::dl::TrainConfig;
use spacdc::ecc::{CurveParams, U256};
use spacdc::RealMatrix;

use crate::error::{CliError, Result};

/// RNG streams (of `ChaCha20Rng::seed_from_u64(seed)`) used by the driver.
/// They sit far away from the streams the library uses for a job.
pub const STRAGGLER_STREAM: u64 = 1 << 62;
pub const COLLUDER_STREAM: u64 = (1 << 62) + 1;
pub const INPUT_STREAM: u64 = (1 << 62) + 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Int,
    Float,
    Bool,
    IntList,
    FloatList,
    Text,
}

const KEYS: &[(&str, Kind, &str)] = &[
    ("seed", Kind::Int, "1"),
    ("codec.n", Kind::Int, "8"),
    ("codec.k", Kind::Int, "2"),
    ("codec.t", Kind::Int, "1"),
    ("codec.alpha", Kind::FloatList, ""),
    ("codec.beta", Kind::FloatList, ""),
    ("codec.mask_scale", Kind::Float, "1"),
    ("cluster.n", Kind::Int, "8"),
    ("cluster.stragglers", Kind::IntList, ""),
    ("cluster.colluders", Kind::IntList, ""),
    ("cluster.straggler_count", Kind::Int, "0"),
    ("cluster.colluder_count", Kind::Int, "0"),
    ("cluster.base_delay_ms", Kind::Float, "10"),
    ("cluster.straggler_delay_ms", Kind::Float, "100"),
    ("cluster.jitter_ms", Kind::Float, "1"),
    ("cluster.wait_policy", Kind::Text, ""),
    ("cluster.function", Kind::Text, "identity"),
    ("cluster.encrypt", Kind::Bool, "true"),
    ("cluster.scale_bits", Kind::Int, "24"),
    ("cluster.real_sleep", Kind::Bool, "false"),
    ("curve.profile", Kind::Text, "p256"),
    ("curve.q", Kind::Text, ""),
    ("curve.a", Kind::Text, ""),
    ("curve.b", Kind::Text, ""),
    ("curve.gx", Kind::Text, ""),
    ("curve.gy", Kind::Text, ""),
    ("curve.n", Kind::Text, ""),
    ("input.matrix", Kind::Text, ""),
    ("input.rows", Kind::Int, "8"),
    ("input.cols", Kind::Int, "4"),
    ("output.dir", Kind::Text, "out"),
    ("train.lr", Kind::Float, "0.05"),
    ("train.epochs", Kind::Int, "30"),
    ("train.batch", Kind::Int, "20"),
    ("train.layers", Kind::IntList, "16"),
    ("train.dataset", Kind::Text, "blobs"),
    ("train.samples", Kind::Int, "200"),
    ("train.algo", Kind::Text, "spacdc"),
    ("audit.trials", Kind::Int, "10000"),
    ("audit.mask_factor", Kind::Float, "1000"),
    ("audit.significance", Kind::Float, "0.01"),
    ("bench.sizes", Kind::IntList, "4,8,16,32,64,128,256"),
    ("bench.encode_sizes", Kind::IntList, "8,16,32,64,128"),
    ("bench.repeats", Kind::Int, "15"),
    ("bench.rows", Kind::Int, "16"),
    ("bench.cols", Kind::Int, "16"),
];

/// Keys left out of the hash and header: they say where results go, not
/// what the experiment is.
const UNHASHED: &[&str] = &["output.dir"];

fn kind_of(key: &str) -> Option<Kind> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, kind, _)| *kind)
}

fn bad(key: &str, value: &str, what: &str) -> CliError {
    CliError::Config(format!("{key}={value}: expected {what}"))
}

fn check(key: &str, kind: Kind, value: &str) -> Result<()> {
    let ok = match kind {
        Kind::Int => value.parse::<u64>().is_ok(),
        Kind::Float => value.parse::<f64>().map(f64::is_finite).unwrap_or(false),
        Kind::Bool => matches!(value, "true" | "false"),
        Kind::IntList => split_list(value).all(|v| v.parse::<u64>().is_ok()),
        Kind::FloatList => split_list(value).all(|v| v.parse::<f64>().map(f64::is_finite).unwrap_or(false)),
        Kind::Text => true,
    };
    if ok {
        Ok(())
    } else {
        let what = match kind {
            Kind::Int => "a nonnegative integer",
            Kind::Float => "a finite number",
            Kind::Bool => "true or false",
            Kind::IntList => "a comma-separated list of nonnegative integers",
            Kind::FloatList => "a comma-separated list of numbers",
            Kind::Text => unreachable!(),
        };
        Err(bad(key, value, what))
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|v| !v.is_empty())
}

/// Scenario presets: 30 workers, 4 data blocks, 3 masks (and 3 colluders),
/// with 0, 3, 5 and 7 stragglers.
pub fn scenario(name: &str) -> Result<Vec<(&'static str, String)>> {
    let stragglers = match name {
        "s1" => 0,
        "s2" => 3,
        "s3" => 5,
        "s4" => 7,
        other => return Err(CliError::Config(format!("unknown scenario '{other}' (expected s1..s4)"))),
    };
    Ok(vec![
        ("codec.n", "30".into()),
        ("codec.k", "4".into()),
        ("codec.t", "3".into()),
        ("cluster.straggler_count", stragglers.to_string()),
        ("cluster.colluder_count", "3".into()),
    ])
}

/// A seeded permutation of `0..n`, drawn from `stream` of `seed`.
pub fn worker_order(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// The first `count` workers of [`worker_order`], ascending.
pub fn pick_workers(n: usize, count: usize, seed: u64, stream: u64) -> Result<Vec<usize>> {
    if count > n {
        return Err(CliError::Config(format!("cannot pick {count} of {n} workers")));
    }
    let mut picked = worker_order(n, seed, stream)[..count].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Uniform `[-1, 1]` test input derived from the seed.
pub fn generated_input(rows: usize, cols: usize, seed: u64) -> RealMatrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(INPUT_STREAM);
    RealMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..=1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<&'static str, String>,
}

impl Default for Config {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|(k, _, v)| (*k, v.to_string())).collect() }
    }
}

impl Config {
    /// Sets one key after checking its syntax. `cluster.n` and `codec.n`
    /// are the same setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let kind = kind_of(key).ok_or_else(|| CliError::Config(format!("unknown key '{key}'")))?;
        check(key, kind, value)?;
        let key = KEYS.iter().find(|(k, _, _)| *k == key).unwrap().0;
        self.values.insert(key, value.to_string());
        match key {
            "codec.n" => self.values.insert("cluster.n", value.to_string()),
            "cluster.n" => self.values.insert("codec.n", value.to_string()),
            _ => None,
        };
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment, blank lines are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key=value", lineno + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {}", lineno + 1, strip(e))))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_scenario(&mut self, name: &str) -> Result<()> {
        for (k, v) in scenario(name)? {
            self.set(k, &v)?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override '{assignment}' is not key=value")))?;
        self.set(key.trim(), value)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }

    /// Resolved `key=value` lines that define the experiment, sorted by key.
    pub fn resolved_lines(&self) -> Vec<String> {
        self.values
            .iter()
            .filter(|(k, _)| !UNHASHED.contains(k))
            .map(|(k, v)| format!("{k}={v}"))
            .collect()
    }

    /// SHA-256 over the resolved lines, newline-joined, as hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.resolved_lines().join("\n").as_bytes());
        hex::encode(digest)
    }

    /// Comment block that opens every output file.
    pub fn header(&self, command: &str) -> String {
        let mut out = format!("# spacdc {command}\n# config_hash={} seed={}\n", self.hash(), self.seed());
        for line in self.resolved_lines() {
            out.push_str("# ");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    fn int(&self, key: &str) -> u64 {
        self.get(key).parse().expect("checked on set")
    }

    fn usize(&self, key: &str) -> usize {
        self.int(key) as usize
    }

    fn float(&self, key: &str) -> f64 {
        self.get(key).parse().expect("checked on set")
    }

    fn flag(&self, key: &str) -> bool {
        self.get(key) == "true"
    }

    fn ints(&self, key: &str) -> Vec<usize> {
        split_list(self.get(key)).map(|v| v.parse().expect("checked on set")).collect()
    }

    fn floats(&self, key: &str) -> Vec<f64> {
        split_list(self.get(key)).map(|v| v.parse().expect("checked on set")).collect()
    }

    pub fn seed(&self) -> u64 {
        self.int("seed")
    }

    pub fn n(&self) -> usize {
        self.usize("codec.n")
    }

    pub fn output_dir(&self) -> &Path {
        Path::new(self.get("output.dir"))
    }

    pub fn curve(&self) -> Result<CurveParams> {
        if self.get("curve.q").is_empty() {
            let name = self.get("curve.profile");
            return CurveParams::profile(name)
                .ok_or_else(|| CliError::Config(format!("unknown curve profile '{name}' (expected p256 or toy17)")));
        }
        let num = |key: &str| -> Result<U256> {
            let v = self.get(key);
            if v.is_empty() {
                return Err(CliError::Config(format!("custom curve needs {key}")));
            }
            U256::parse(v).ok_or_else(|| bad(key, v, "a decimal or 0x-hex integer below 2^256"))
        };
        let order = if self.get("curve.n").is_empty() { None } else { Some(num("curve.n")?) };
        Ok(CurveParams::new(
            "custom",
            num("curve.q")?,
            num("curve.a")?,
            num("curve.b")?,
            (num("curve.gx")?, num("curve.gy")?),
            order,
        )?)
    }

    pub fn codec(&self) -> Result<CodecConfig> {
        let (n, k, t) = (self.n(), self.usize("codec.k"), self.usize("codec.t"));
        let (alpha, beta) = (self.floats("codec.alpha"), self.floats("codec.beta"));
        if alpha.is_empty() && beta.is_empty() {
            return Ok(CodecConfig::default_anchors(n, k, t)?);
        }
        let defaults = CodecConfig::default_anchors(n, k, t)?;
        let alpha = if alpha.is_empty() { defaults.alpha } else { alpha };
        let beta = if beta.is_empty() { defaults.beta } else { beta };
        if alpha.len() != n || beta.len() != k + t {
            return Err(CliError::Config(format!(
                "need {n} alpha and {} beta values, got {} and {}",
                k + t,
                alpha.len(),
                beta.len()
            )));
        }
        Ok(CodecConfig::new(n, k, t, beta, alpha)?)
    }

    pub fn mask_scale(&self) -> f64 {
        self.float("codec.mask_scale")
    }

    fn role(&self, list_key: &str, count_key: &str, stream: u64) -> Result<Vec<usize>> {
        let n = self.n();
        let mut list = self.ints(list_key);
        let count = self.usize(count_key);
        if list.is_empty() {
            return pick_workers(n, count, self.seed(), stream);
        }
        list.sort_unstable();
        list.dedup();
        if count != 0 && count != list.len() {
            return Err(CliError::Config(format!("{list_key} names {} workers but {count_key}={count}", list.len())));
        }
        if let Some(bad) = list.iter().find(|&&i| i >= n) {
            return Err(CliError::Config(format!("{list_key}: worker {bad} out of range for N={n}")));
        }
        Ok(list)
    }

    /// Straggler indices: the explicit list, or a seeded random choice of
    /// `cluster.straggler_count` workers.
    pub fn stragglers(&self) -> Result<Vec<usize>> {
        self.role("cluster.stragglers", "cluster.straggler_count", STRAGGLER_STREAM)
    }

    pub fn colluders(&self) -> Result<Vec<usize>> {
        self.role("cluster.colluders", "cluster.colluder_count", COLLUDER_STREAM)
    }

    /// Every worker in the order colluders are recruited: the explicit list
    /// first, then the rest in seeded order.
    pub fn colluder_order(&self) -> Result<Vec<usize>> {
        let mut order = if self.ints("cluster.colluders").is_empty() { Vec::new() } else { self.colluders()? };
        for i in worker_order(self.n(), self.seed(), COLLUDER_STREAM) {
            if !order.contains(&i) {
                order.push(i);
            }
        }
        Ok(order)
    }

    pub fn timing(&self) -> Timing {
        Timing {
            base_delay_ms: self.float("cluster.base_delay_ms"),
            straggler_delay_ms: self.float("cluster.straggler_delay_ms"),
        }
    }

    pub fn cluster_config(&self) -> Result<ClusterConfig> {
        let scale_bits = self.int("cluster.scale_bits");
        if !(1..=96).contains(&scale_bits) {
            return Err(bad("cluster.scale_bits", self.get("cluster.scale_bits"), "a value in 1..=96"));
        }
        Ok(ClusterConfig {
            curve: self.curve()?,
            encrypt: self.flag("cluster.encrypt"),
            scale_bits: scale_bits as u32,
            jitter_ms: self.float("cluster.jitter_ms"),
            capture_wire: false,
            real_sleep: self.flag("cluster.real_sleep"),
        })
    }

    /// The configured policy, if one was given.
    pub fn explicit_wait_policy(&self) -> Result<Option<WaitPolicy>> {
        let v = self.get("cluster.wait_policy");
        if v.is_empty() {
            Ok(None)
        } else {
            Ok(Some(WaitPolicy::parse(v)?))
        }
    }

    /// The configured policy, defaulting to waiting for the first `N − S` results.
    pub fn wait_policy(&self) -> Result<WaitPolicy> {
        match self.explicit_wait_policy()? {
            Some(p) => Ok(p),
            None => {
                let s = self.stragglers()?.len();
                if s >= self.n() {
                    return Err(CliError::Config(format!("{s} stragglers leave no worker out of {}", self.n())));
                }
                Ok(WaitPolicy::FirstR(self.n() - s))
            }
        }
    }

    pub fn function(&self) -> Result<TaskFunction> {
        Ok(TaskFunction::parse(self.get("cluster.function"))?)
    }

    /// The job input: the matrix file if one is configured, otherwise a
    /// seeded uniform matrix of `input.rows × input.cols`.
    pub fn input(&self) -> Result<RealMatrix> {
        let path = self.get("input.matrix");
        if path.is_empty() {
            let (rows, cols) = (self.usize("input.rows"), self.usize("input.cols"));
            if rows == 0 || cols == 0 {
                return Err(CliError::Config("input.rows and input.cols must be positive".into()));
            }
            return Ok(generated_input(rows, cols, self.seed()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Ok(RealMatrix::parse_text(&text)?)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            lr: self.float("train.lr"),
            epochs: self.usize("train.epochs"),
            batch: self.usize("train.batch"),
            hidden_layers: self.ints("train.layers"),
            n: self.n(),
            k: self.usize("codec.k"),
            t: self.usize("codec.t"),
            stragglers: self.stragglers()?,
            colluders: self.colluders()?,
            timing: self.timing(),
            mask_scale: self.mask_scale(),
            wait_policy: self.explicit_wait_policy()?,
            cluster: self.cluster_config()?,
            seed: self.seed(),
        };
        if cfg.hidden_layers.contains(&0) {
            return Err(CliError::Config("train.layers entries must be positive".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dataset(&self) -> &str {
        self.get("train.dataset")
    }

    pub fn train_samples(&self) -> usize {
        self.usize("train.samples")
    }

    pub fn train_algo(&self) -> &str {
        self.get("train.algo")
    }

    /// Audit settings for input `x`: masks scaled to `audit.mask_factor · ‖x‖∞`.
    pub fn audit_config(&self, x: &RealMatrix) -> Result<AuditConfig> {
        let significance = self.float("audit.significance");
        if !(significance > 0.0 && significance < 1.0) {
            return Err(bad("audit.significance", self.get("audit.significance"), "a value in (0, 1)"));
        }
        let trials = self.usize("audit.trials");
        if trials == 0 {
            return Err(CliError::Config("audit.trials must be positive".into()));
        }
        Ok(AuditConfig {
            trials,
            mask_scale: self.float("audit.mask_factor").abs() * x.max_abs(),
            significance,
            scale_bits: self.cluster_config()?.scale_bits,
        })
    }

    pub fn bench_sizes(&self) -> Vec<usize> {
        self.ints("bench.sizes")
    }

    pub fn bench_encode_sizes(&self) -> Vec<usize> {
        self.ints("bench.encode_sizes")
    }

    pub fn bench_repeats(&self) -> usize {
        self.usize("bench.repeats").max(1)
    }

    pub fn bench_shape(&self) -> (usize, usize) {
        (self.usize("bench.rows").max(1), self.usize("bench.cols").max(1))
    }
}

fn strip(e: CliError) -> String {
    match e {
        CliError::Config(msg) => msg,
        other => other.to_string(),
    }
}
