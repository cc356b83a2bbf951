//! Simulated master/worker runtime.
//!
//! A job runs the full three-phase protocol: the master partitions and
//! encodes the input, encrypts one share per worker, workers decrypt, compute
//! and encrypt their result back to the master, and the master decodes from
//! whichever results arrived under the wait policy. Time is virtual by
//! default: each worker's completion time is sampled from its profile, and the
//! returned set is determined by those times rather than by the OS scheduler.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::codec::{self, CodecConfig, EncodedShare, ReturnedResult};
use crate::ecc::{keygen_from_seed, mea_decrypt, mea_encrypt_with, CipherMatrix, CurveParams, CurvePoint, KeyPair};
use crate::error::{Error, Result};
use crate::realmat::{QuantizedMatrix, RealMatrix};
use crate::stats::{ks_two_sample, KsResult};

/// Function applied by every worker to its share.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskFunction {
    Identity,
    /// `X·Xᵀ`
    Gram,
    /// Entrywise square.
    Square,
    /// `B ↦ B·δ`, the product used for hidden-layer deltas. `δ` is broadcast
    /// to every worker alongside its share.
    BackpropDelta { delta_next: RealMatrix },
}

impl TaskFunction {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Self::Identity),
            "gram" => Ok(Self::Gram),
            "square" => Ok(Self::Square),
            other => Err(Error::InvalidConfig(format!("unknown function '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Gram => "gram",
            Self::Square => "square",
            Self::BackpropDelta { .. } => "backprop-delta",
        }
    }

    /// Evaluates the function with its own broadcast operand.
    pub fn apply(&self, x: &RealMatrix) -> Result<RealMatrix> {
        self.apply_with(x, self.broadcast())
    }

    fn apply_with(&self, x: &RealMatrix, operand: Option<&RealMatrix>) -> Result<RealMatrix> {
        match self {
            Self::Identity => Ok(x.clone()),
            Self::Gram => x.matmul(&x.transpose()),
            Self::Square => Ok(x.map(|v| v * v)),
            Self::BackpropDelta { .. } => {
                let d = operand.ok_or_else(|| Error::Protocol("missing broadcast operand".into()))?;
                x.matmul(d)
            }
        }
    }

    fn broadcast(&self) -> Option<&RealMatrix> {
        match self {
            Self::BackpropDelta { delta_next } => Some(delta_next),
            _ => None,
        }
    }

    pub fn output_shape(&self, (rows, cols): (usize, usize)) -> (usize, usize) {
        match self {
            Self::Identity | Self::Square => (rows, cols),
            Self::Gram => (rows, rows),
            Self::BackpropDelta { delta_next } => (rows, delta_next.cols()),
        }
    }
}

/// When the master stops waiting and decodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WaitPolicy {
    All,
    /// The first `r` results to complete.
    FirstR(usize),
    /// Every result completed by this many milliseconds.
    Deadline(f64),
}

impl WaitPolicy {
    /// Parses `all`, `first_r(R)` or `deadline(MS)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all" {
            return Ok(Self::All);
        }
        let arg = |prefix: &str| {
            s.strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('('))
                .and_then(|rest| rest.strip_suffix(')'))
                .map(str::trim)
        };
        if let Some(r) = arg("first_r") {
            return r
                .parse()
                .map(Self::FirstR)
                .map_err(|_| Error::InvalidConfig(format!("bad result count in '{s}'")));
        }
        if let Some(t) = arg("deadline") {
            return match t.parse::<f64>() {
                Ok(ms) if ms.is_finite() && ms >= 0.0 => Ok(Self::Deadline(ms)),
                _ => Err(Error::InvalidConfig(format!("bad deadline in '{s}'"))),
            };
        }
        Err(Error::InvalidConfig(format!("unknown wait policy '{s}'")))
    }
}

impl fmt::Display for WaitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::All => write!(f, "all"),
            Self::FirstR(r) => write!(f, "first_r({r})"),
            Self::Deadline(ms) => write!(f, "deadline({ms})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub function: TaskFunction,
    pub input: RealMatrix,
    pub codec: CodecConfig,
    pub wait_policy: WaitPolicy,
    /// Masks are uniform on `[-mask_scale, mask_scale]`.
    pub mask_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkerProfile {
    pub index: usize,
    pub keypair: KeyPair,
    pub base_compute_delay_ms: f64,
    pub straggler: bool,
    pub straggler_extra_delay_ms: f64,
    pub colluder: bool,
}

/// Runtime switches shared by every job on a cluster.
#[derive(Clone, Debug)]
pub struct ClusterConfig {
    pub curve: CurveParams,
    /// When false, payloads still go through the quantized representation but
    /// are sent in the clear.
    pub encrypt: bool,
    pub scale_bits: u32,
    /// Completion times get an extra uniform `[0, jitter_ms]` delay.
    pub jitter_ms: f64,
    /// Record every message that crosses the master/worker boundary.
    pub capture_wire: bool,
    /// Sleep for the sampled delays on worker threads instead of using
    /// virtual time. Returned sets then depend on the scheduler.
    pub real_sleep: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            curve: CurveParams::p256(),
            encrypt: true,
            scale_bits: 24,
            jitter_ms: 1.0,
            capture_wire: false,
            real_sleep: false,
        }
    }
}

/// Delay profile used to build a cluster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    pub base_delay_ms: f64,
    pub straggler_delay_ms: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self { base_delay_ms: 10.0, straggler_delay_ms: 100.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Endpoint {
    Master,
    Worker(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum WirePayload {
    Cipher(CipherMatrix),
    Plain(QuantizedMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WireMessage {
    pub from: Endpoint,
    pub to: Endpoint,
    pub payload: WirePayload,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterReport {
    pub seed: u64,
    /// Indices of the results used for decoding, ascending.
    pub returned_set: Vec<usize>,
    /// Completion time of every worker, in milliseconds.
    pub per_worker_elapsed: Vec<f64>,
    /// Relative Frobenius error of each decoded block against the exact
    /// `f(X_j)`; one entry per block.
    pub decode_targets_error: Vec<f64>,
    pub wall_clock_ms: f64,
    pub stragglers: Vec<usize>,
    pub colluders: Vec<usize>,
    /// Decrypted shares as seen by colluding workers.
    pub colluder_views: Vec<EncodedShare>,
    pub wire_log: Vec<WireMessage>,
}

impl ClusterReport {
    /// CSV with one row per worker and a trailing summary row
    /// `summary,<wall_clock_ms>,<|F|>,<stragglers>,<colluders>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,elapsed_ms,returned,straggler,colluder\n");
        for (i, t) in self.per_worker_elapsed.iter().enumerate() {
            out.push_str(&format!(
                "{i},{t:.6},{},{},{}\n",
                self.returned_set.binary_search(&i).is_ok() as u8,
                self.stragglers.contains(&i) as u8,
                self.colluders.contains(&i) as u8,
            ));
        }
        out.push_str(&format!(
            "summary,{:.6},{},{},{}\n",
            self.wall_clock_ms,
            self.returned_set.len(),
            self.stragglers.len(),
            self.colluders.len()
        ));
        out
    }

    pub fn max_decode_error(&self) -> f64 {
        self.decode_targets_error.iter().copied().fold(0.0, f64::max)
    }
}

/// Completion times `base (+ extra if straggler) + U[0, jitter_ms]`.
pub fn simulate_delays(profiles: &[WorkerProfile], jitter_ms: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, DELAY_STREAM);
    profiles
        .iter()
        .map(|p| {
            let jitter = if jitter_ms > 0.0 { rng.gen_range(0.0..=jitter_ms) } else { 0.0 };
            p.base_compute_delay_ms + if p.straggler { p.straggler_extra_delay_ms } else { 0.0 } + jitter
        })
        .collect()
}

const MASK_STREAM: u64 = 0;
const DELAY_STREAM: u64 = 1;

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn master_stream(seed: u64, worker: usize) -> ChaCha20Rng {
    stream(seed, 2 + 2 * worker as u64)
}

fn worker_stream(seed: u64, worker: usize) -> ChaCha20Rng {
    stream(seed, 3 + 2 * worker as u64)
}

/// Relative Frobenius error, absolute when the reference is zero.
pub fn relative_error(approx: &RealMatrix, exact: &RealMatrix) -> Result<f64> {
    let diff = approx.sub(exact)?.frobenius();
    let norm = exact.frobenius();
    Ok(if norm > 0.0 { diff / norm } else { diff })
}

/// What the master sends to one worker: its share and, for functions that
/// need one, the broadcast operand.
#[derive(Clone, Debug, PartialEq)]
pub struct SealedTask {
    pub share: WirePayload,
    pub operand: Option<WirePayload>,
}

struct WorkerOutput {
    index: usize,
    view: RealMatrix,
    result: WirePayload,
}

pub struct Cluster {
    config: ClusterConfig,
    master: KeyPair,
    profiles: Vec<WorkerProfile>,
}

impl Cluster {
    pub fn new(config: ClusterConfig, master: KeyPair, profiles: Vec<WorkerProfile>) -> Result<Self> {
        for (pos, p) in profiles.iter().enumerate() {
            if p.index != pos {
                return Err(Error::InvalidConfig(format!("profile {pos} carries index {}", p.index)));
            }
            if !(p.base_compute_delay_ms >= 0.0 && p.straggler_extra_delay_ms >= 0.0) {
                return Err(Error::InvalidConfig(format!("worker {pos}: negative or NaN delay")));
            }
        }
        if !(config.jitter_ms >= 0.0) {
            return Err(Error::InvalidConfig("jitter must be nonnegative".into()));
        }
        Ok(Self { config, master, profiles })
    }

    /// Builds `n` workers with keys generated from `seed` (trusted setup).
    pub fn with_roles(
        config: ClusterConfig,
        n: usize,
        stragglers: &[usize],
        colluders: &[usize],
        timing: Timing,
        seed: u64,
    ) -> Result<Self> {
        if let Some(&bad) = stragglers.iter().chain(colluders).find(|&&i| i >= n) {
            return Err(Error::InvalidConfig(format!("worker index {bad} out of range for N={n}")));
        }
        let mut keys = stream(seed, u64::MAX);
        let master = keygen_from_seed(&config.curve, keys.gen());
        let profiles = (0..n)
            .map(|i| WorkerProfile {
                index: i,
                keypair: keygen_from_seed(&config.curve, keys.gen()),
                base_compute_delay_ms: timing.base_delay_ms,
                straggler: stragglers.contains(&i),
                straggler_extra_delay_ms: timing.straggler_delay_ms,
                colluder: colluders.contains(&i),
            })
            .collect();
        Self::new(config, master, profiles)
    }

    pub fn n(&self) -> usize {
        self.profiles.len()
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn profiles(&self) -> &[WorkerProfile] {
        &self.profiles
    }

    pub fn master_public(&self) -> &CurvePoint {
        &self.master.pk
    }

    pub fn stragglers(&self) -> Vec<usize> {
        self.profiles.iter().filter(|p| p.straggler).map(|p| p.index).collect()
    }

    pub fn colluders(&self) -> Vec<usize> {
        self.profiles.iter().filter(|p| p.colluder).map(|p| p.index).collect()
    }

    fn seal<R: Rng + ?Sized>(&self, m: &RealMatrix, pk: &CurvePoint, rng: &mut R) -> Result<WirePayload> {
        let q = m.quantize(self.config.scale_bits)?;
        if self.config.encrypt {
            Ok(WirePayload::Cipher(mea_encrypt_with(&q, pk, &self.config.curve, rng)?))
        } else {
            Ok(WirePayload::Plain(q))
        }
    }

    fn open(&self, p: &WirePayload, keys: &KeyPair) -> Result<RealMatrix> {
        match p {
            WirePayload::Cipher(c) => Ok(mea_decrypt(c, &keys.sk, &self.config.curve)?.dequantize()),
            WirePayload::Plain(q) => Ok(q.dequantize()),
        }
    }

    fn worker_step(&self, index: usize, msg: &SealedTask, function: &TaskFunction, seed: u64) -> Result<WorkerOutput> {
        let keys = &self.profiles[index].keypair;
        let view = self.open(&msg.share, keys)?;
        let operand = msg.operand.as_ref().map(|p| self.open(p, keys)).transpose()?;
        let y = function.apply_with(&view, operand.as_ref())?;
        let result = self.seal(&y, &self.master.pk, &mut worker_stream(seed, index))?;
        Ok(WorkerOutput { index, view, result })
    }

    /// Encrypts `shares[i]` (and the function's broadcast operand) for worker `i`.
    /// The ephemeral scalars come from per-worker streams of `seed`.
    pub fn seal_shares(&self, shares: &[RealMatrix], function: &TaskFunction, seed: u64) -> Result<Vec<SealedTask>> {
        if shares.len() != self.n() {
            return Err(Error::InvalidConfig(format!("{} shares for {} workers", shares.len(), self.n())));
        }
        shares
            .par_iter()
            .enumerate()
            .map(|(i, share)| {
                let pk = &self.profiles[i].keypair.pk;
                let mut rng = master_stream(seed, i);
                let share = self.seal(share, pk, &mut rng)?;
                let operand = function.broadcast().map(|d| self.seal(d, pk, &mut rng)).transpose()?;
                Ok(SealedTask { share, operand })
            })
            .collect()
    }

    /// Indices that make it under the policy, and the time the master stops waiting.
    fn select(policy: WaitPolicy, completion: &[f64]) -> Result<(Vec<usize>, f64)> {
        let n = completion.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| completion[a].total_cmp(&completion[b]).then(a.cmp(&b)));
        let take = match policy {
            WaitPolicy::All => n,
            WaitPolicy::FirstR(r) => {
                if r == 0 || r > n {
                    return Err(Error::InvalidConfig(format!("first_r({r}) with N={n}")));
                }
                r
            }
            WaitPolicy::Deadline(t) => order.iter().take_while(|&&i| completion[i] <= t).count(),
        };
        if take == 0 {
            return Err(Error::JobFailed(format!("no result arrived under {policy}")));
        }
        let mut chosen = order[..take].to_vec();
        let mut wall = completion[order[take - 1]];
        if let WaitPolicy::Deadline(t) = policy {
            if take < n {
                wall = t;
            }
        }
        chosen.sort_unstable();
        Ok((chosen, wall))
    }

    /// Runs workers on threads that sleep for their sampled delay; the master
    /// takes results in arrival order until the policy is satisfied.
    fn run_real(
        &self,
        outbound: &[SealedTask],
        function: &TaskFunction,
        policy: WaitPolicy,
        completion: &[f64],
        seed: u64,
    ) -> Result<(Vec<WorkerOutput>, Vec<f64>, f64)> {
        let n = self.n();
        let want = match policy {
            WaitPolicy::All => n,
            WaitPolicy::FirstR(r) if r >= 1 && r <= n => r,
            WaitPolicy::FirstR(r) => return Err(Error::InvalidConfig(format!("first_r({r}) with N={n}"))),
            WaitPolicy::Deadline(_) => n,
        };
        let deadline = match policy {
            WaitPolicy::Deadline(ms) => Some(Duration::from_secs_f64(ms / 1e3)),
            _ => None,
        };
        let cancel = AtomicBool::new(false);
        let start = Instant::now();
        let (tx, rx) = mpsc::channel();
        let mut elapsed = vec![f64::NAN; n];
        let mut outputs = Vec::new();
        let mut failure = None;
        std::thread::scope(|scope| {
            for (i, msg) in outbound.iter().enumerate() {
                let tx = tx.clone();
                let cancel = &cancel;
                let delay = Duration::from_secs_f64(completion[i] / 1e3);
                scope.spawn(move || {
                    let out = self.worker_step(i, msg, function, seed);
                    while start.elapsed() < delay {
                        if cancel.load(Ordering::Relaxed) {
                            return;
                        }
                        std::thread::sleep((delay - start.elapsed()).min(Duration::from_millis(1)));
                    }
                    let _ = tx.send((out, start.elapsed()));
                });
            }
            drop(tx);
            while outputs.len() < want {
                let msg = match deadline {
                    Some(d) => match d.checked_sub(start.elapsed()) {
                        Some(left) => rx.recv_timeout(left).ok(),
                        None => None,
                    },
                    None => rx.recv().ok(),
                };
                let Some((out, at)) = msg else { break };
                match out {
                    Ok(o) => {
                        elapsed[o.index] = at.as_secs_f64() * 1e3;
                        outputs.push(o);
                    }
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
            cancel.store(true, Ordering::Relaxed);
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if outputs.is_empty() {
            return Err(Error::JobFailed(format!("no result arrived under {policy}")));
        }
        let wall = start.elapsed().as_secs_f64() * 1e3;
        outputs.sort_by_key(|o| o.index);
        Ok((outputs, elapsed, wall))
    }

    /// Delivers `outbound[i]` to worker `i`, collects results under `policy`,
    /// and returns the decrypted results with the partially filled report.
    fn dispatch(
        &self,
        outbound: &[SealedTask],
        function: &TaskFunction,
        policy: WaitPolicy,
        seed: u64,
    ) -> Result<(Vec<ReturnedResult>, ClusterReport)> {
        let n = self.n();
        if outbound.len() != n {
            return Err(Error::InvalidConfig(format!("{} tasks for {n} workers", outbound.len())));
        }
        let completion = simulate_delays(&self.profiles, self.config.jitter_ms, seed);

        let (outputs, per_worker_elapsed, wall_clock_ms) = if self.config.real_sleep {
            self.run_real(outbound, function, policy, &completion, seed)?
        } else {
            let (chosen, wall) = Self::select(policy, &completion)?;
            let outputs = chosen
                .par_iter()
                .map(|&i| self.worker_step(i, &outbound[i], function, seed))
                .collect::<Result<Vec<_>>>()?;
            (outputs, completion, wall)
        };

        let expected = outputs.first().map(|o| function.output_shape(o.view.shape()));
        let results = outputs
            .par_iter()
            .map(|o| {
                let payload = self.open(&o.result, &self.master)?;
                let expected = expected.unwrap_or_default();
                if o.view.shape() != outputs[0].view.shape() {
                    return Err(Error::Protocol(format!(
                        "worker {}: share shape {}x{} differs from worker {}",
                        o.index,
                        o.view.rows(),
                        o.view.cols(),
                        outputs[0].index
                    )));
                }
                if payload.shape() != expected {
                    return Err(Error::Protocol(format!(
                        "worker {}: result shape {}x{}, expected {}x{}",
                        o.index,
                        payload.rows(),
                        payload.cols(),
                        expected.0,
                        expected.1
                    )));
                }
                Ok(ReturnedResult { worker_index: o.index, payload })
            })
            .collect::<Result<Vec<_>>>()?;

        let colluders = self.colluders();
        let colluder_views = outputs
            .iter()
            .filter(|o| colluders.contains(&o.index))
            .map(|o| EncodedShare { worker_index: o.index, payload: o.view.clone() })
            .collect::<Vec<_>>();
        // Colluders that did not return still saw their share.
        let mut colluder_views = colluder_views;
        for &c in &colluders {
            if !colluder_views.iter().any(|v| v.worker_index == c) {
                let view = self.open(&outbound[c].share, &self.profiles[c].keypair)?;
                colluder_views.push(EncodedShare { worker_index: c, payload: view });
            }
        }
        colluder_views.sort_by_key(|v| v.worker_index);

        let mut wire_log = Vec::new();
        if self.config.capture_wire {
            for (i, msg) in outbound.iter().enumerate() {
                for payload in std::iter::once(&msg.share).chain(&msg.operand) {
                    wire_log.push(WireMessage { from: Endpoint::Master, to: Endpoint::Worker(i), payload: payload.clone() });
                }
            }
            for o in &outputs {
                wire_log.push(WireMessage { from: Endpoint::Worker(o.index), to: Endpoint::Master, payload: o.result.clone() });
            }
        }

        let report = ClusterReport {
            seed,
            returned_set: results.iter().map(|r| r.worker_index).collect(),
            per_worker_elapsed,
            decode_targets_error: Vec::new(),
            wall_clock_ms,
            stragglers: self.stragglers(),
            colluders,
            colluder_views,
            wire_log,
        };
        Ok((results, report))
    }

    /// Phase one of a job: partitions the input, draws the masks, encodes
    /// and seals one share per worker. Returns the data blocks alongside.
    pub fn seal_job(&self, spec: &TaskSpec, seed: u64) -> Result<(Vec<RealMatrix>, Vec<SealedTask>)> {
        let cfg = &spec.codec;
        cfg.validate()?;
        if cfg.n != self.n() {
            return Err(Error::InvalidConfig(format!("code has N={} but the cluster has {} workers", cfg.n, self.n())));
        }
        if !(spec.mask_scale >= 0.0 && spec.mask_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("mask scale {} must be finite and nonnegative", spec.mask_scale)));
        }
        let blocks = spec.input.partition_rows(cfg.k)?;
        let (rows, cols) = blocks[0].shape();
        let masks = codec::gen_masks_with(cfg.t, rows, cols, spec.mask_scale, &mut stream(seed, MASK_STREAM));
        let shares: Vec<RealMatrix> = codec::encode(&blocks, &masks, cfg)?.into_iter().map(|s| s.payload).collect();
        let sealed = self.seal_shares(&shares, &spec.function, seed)?;
        Ok((blocks, sealed))
    }

    /// Runs one coded job. Returns the decoded approximation of `f(X_j)` for
    /// each of the `K` row blocks of the input.
    pub fn run_job(&self, spec: &TaskSpec, seed: u64) -> Result<(Vec<RealMatrix>, ClusterReport)> {
        let (blocks, sealed) = self.seal_job(spec, seed)?;
        let (decoded, mut report) = self.run_sealed(&sealed, &spec.function, spec.wait_policy, &spec.codec, seed)?;
        report.decode_targets_error = blocks
            .iter()
            .zip(&decoded)
            .map(|(b, h)| relative_error(h, &spec.function.apply(b)?))
            .collect::<Result<_>>()?;
        Ok((decoded, report))
    }

    /// Runs a job whose shares were already encoded and sealed, decoding the
    /// `K` block results. The report's decode errors are left empty since
    /// the master has no plaintext reference here.
    pub fn run_sealed(
        &self,
        sealed: &[SealedTask],
        function: &TaskFunction,
        policy: WaitPolicy,
        cfg: &CodecConfig,
        seed: u64,
    ) -> Result<(Vec<RealMatrix>, ClusterReport)> {
        cfg.validate()?;
        if cfg.n != self.n() {
            return Err(Error::InvalidConfig(format!("code has N={} but the cluster has {} workers", cfg.n, self.n())));
        }
        let (results, report) = self.dispatch(sealed, function, policy, seed)?;
        Ok((codec::recover(&results, cfg)?, report))
    }

    /// Uncoded baseline: the input is split into `N` row blocks, one per
    /// worker, and the master waits for all of them. Returns one result per
    /// block.
    pub fn run_uncoded_job(&self, function: &TaskFunction, input: &RealMatrix, seed: u64) -> Result<(Vec<RealMatrix>, ClusterReport)> {
        let blocks = input.partition_rows(self.n())?;
        let sealed = self.seal_shares(&blocks, function, seed)?;
        let (results, mut report) = self.dispatch(&sealed, function, WaitPolicy::All, seed)?;
        let out: Vec<RealMatrix> = results.into_iter().map(|r| r.payload).collect();
        report.decode_targets_error = blocks
            .iter()
            .zip(&out)
            .map(|(b, y)| relative_error(y, &function.apply(b)?))
            .collect::<Result<_>>()?;
        Ok((out, report))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditConfig {
    pub trials: usize,
    pub mask_scale: f64,
    pub significance: f64,
    pub scale_bits: u32,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { trials: 10_000, mask_scale: 1e3, significance: 0.01, scale_bits: 24 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditRecord {
    pub colluders: Vec<usize>,
    pub t: usize,
    /// More colluders than masks: no privacy claim applies.
    pub bound_exceeded: bool,
    /// KS result per colluder, comparing entry (0, 0) of its share under two inputs.
    pub tests: Vec<KsResult>,
    pub max_statistic: f64,
    pub min_p_value: f64,
    pub pass: bool,
}

/// Statistical stand-in for the privacy guarantee: for each colluder,
/// samples entry `(0, 0)` of its share over `trials` fresh mask draws for
/// `x` and for a second, independent input of the same shape and range,
/// and runs a two-sample KS test between them. Shares pass through the same
/// fixed-point representation they have on the wire.
pub fn collusion_audit(
    x: &RealMatrix,
    cfg: &CodecConfig,
    colluders: &[usize],
    audit: &AuditConfig,
    seed: u64,
) -> Result<AuditRecord> {
    cfg.validate()?;
    if let Some(&bad) = colluders.iter().find(|&&i| i >= cfg.n) {
        return Err(Error::InvalidArgument(format!("colluder {bad} out of range for N={}", cfg.n)));
    }
    let bound_exceeded = colluders.len() > cfg.t;
    let mut rng = stream(seed, u64::MAX - 1);
    let range = x.max_abs().max(f64::MIN_POSITIVE);
    let other = RealMatrix::from_fn(x.rows(), x.cols(), |_, _| rng.gen_range(-range..=range));

    let blocks_x = x.partition_rows(cfg.k)?;
    let blocks_o = other.partition_rows(cfg.k)?;
    let (rows, cols) = blocks_x[0].shape();
    let quant = 2f64.powi(audit.scale_bits as i32);
    let mut samples = vec![(Vec::with_capacity(audit.trials), Vec::with_capacity(audit.trials)); colluders.len()];
    let weights: Vec<Vec<f64>> = colluders
        .iter()
        .map(|&c| codec::encoder_weights(&cfg.beta, cfg.alpha[c]))
        .collect::<Result<_>>()?;
    // Only entry (0, 0) is sampled, so the share entry is formed directly from
    // the (0, 0) entries of the blocks and the masks.
    let entry = |blocks: &[RealMatrix], masks: &[RealMatrix], w: &[f64]| -> f64 {
        let v: f64 = blocks
            .iter()
            .chain(masks)
            .zip(w)
            .map(|(m, wj)| wj * m.get(0, 0))
            .sum();
        (v * quant).round() / quant
    };
    for _ in 0..audit.trials {
        let mx = codec::gen_masks_with(cfg.t, rows.min(1), cols.min(1), audit.mask_scale, &mut rng);
        let mo = codec::gen_masks_with(cfg.t, rows.min(1), cols.min(1), audit.mask_scale, &mut rng);
        for (s, w) in samples.iter_mut().zip(&weights) {
            s.0.push(entry(&blocks_x, &mx, w));
            s.1.push(entry(&blocks_o, &mo, w));
        }
    }
    let tests: Vec<KsResult> = samples.iter().map(|(a, b)| ks_two_sample(a, b)).collect();
    let max_statistic = tests.iter().map(|t| t.statistic).fold(0.0, f64::max);
    let min_p_value = tests.iter().map(|t| t.p_value).fold(1.0, f64::min);
    let pass = !bound_exceeded && !colluders.is_empty() && min_p_value >= audit.significance;
    Ok(AuditRecord { colluders: colluders.to_vec(), t: cfg.t, bound_exceeded, tests, max_statistic, min_p_value, pass })
}

/// Audits the colluders recorded in a job report.
pub fn audit_report(report: &ClusterReport, x: &RealMatrix, cfg: &CodecConfig, audit: &AuditConfig) -> Result<AuditRecord> {
    collusion_audit(x, cfg, &report.colluders, audit, report.seed)
}
