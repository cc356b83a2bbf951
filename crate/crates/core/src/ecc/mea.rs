//! Matrix encryption over an elliptic curve.
//!
//! A recipient publishes `pk = sk·G`. The sender picks a fresh ephemeral
//! scalar `k`, ships `k·G`, and adds the x-coordinate of `k·pk` to every
//! entry of the integer matrix mod q. The recipient recomputes the same point
//! as `sk·(k·G)` and subtracts. The cipher has no authentication: decrypting
//! with the wrong key silently yields a different matrix.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::curve::{CurveParams, CurvePoint};
use super::field::U256;
use crate::error::{Error, Result};
use crate::realmat::QuantizedMatrix;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub sk: U256,
    pub pk: CurvePoint,
}

/// Samples `sk` uniformly from `[1, n)` (or `[1, q)` when the order is unknown).
pub fn keygen<R: RngCore + ?Sized>(curve: &CurveParams, rng: &mut R) -> KeyPair {
    let sk = U256::random_range(rng, &U256::ONE, &curve.scalar_bound());
    let pk = curve
        .scalar_mul(&sk, &curve.generator())
        .expect("generator is on the curve");
    KeyPair { sk, pk }
}

/// Deterministic key generation from a 64-bit seed.
pub fn keygen_from_seed(curve: &CurveParams, seed: u64) -> KeyPair {
    keygen(curve, &mut ChaCha20Rng::seed_from_u64(seed))
}

/// Shared point `sk_own · pk_peer`.
pub fn derive_shared(sk_own: &U256, pk_peer: &CurvePoint, curve: &CurveParams) -> Result<CurvePoint> {
    let shared = curve.scalar_mul(sk_own, pk_peer)?;
    if shared.is_infinity() {
        return Err(Error::Protocol("shared point is at infinity (degenerate peer key)".into()));
    }
    Ok(shared)
}

/// Ciphertext: ephemeral point plus the masked entries, each reduced into `[0, q)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CipherMatrix {
    pub ephemeral: CurvePoint,
    pub rows: usize,
    pub cols: usize,
    pub scale_bits: u32,
    pub masked: Vec<U256>,
}

/// Samples an ephemeral scalar from `[2, min(q, n))`.
pub fn sample_ephemeral<R: RngCore + ?Sized>(curve: &CurveParams, rng: &mut R) -> U256 {
    let hi = (*curve.q()).min(curve.scalar_bound());
    U256::random_range(rng, &U256::from_u64(2), &hi)
}

/// Checks `4|e| < q` for every entry (q odd).
pub fn check_headroom(m: &QuantizedMatrix, q: &U256) -> Result<()> {
    let limit = q.wrapping_sub(&U256::ONE).shr1().shr1();
    for (pos, e) in m.entries().iter().enumerate() {
        if U256::from_u128(e.unsigned_abs()) > limit {
            return Err(Error::Range(format!(
                "entry ({}, {}) = {e} exceeds the q/4 headroom",
                pos / m.cols().max(1),
                pos % m.cols().max(1)
            )));
        }
    }
    Ok(())
}

fn lift(e: i128, curve: &CurveParams) -> U256 {
    let mag = U256::from_u128(e.unsigned_abs());
    let f = curve.field();
    let mag = f.reduce(&mag);
    if e < 0 {
        f.neg(&mag)
    } else {
        mag
    }
}

/// Encrypts `m` for `pk_recipient` with ephemeral scalar `k`, `1 < k < q`.
pub fn mea_encrypt(
    m: &QuantizedMatrix,
    pk_recipient: &CurvePoint,
    k: &U256,
    curve: &CurveParams,
) -> Result<CipherMatrix> {
    if *k <= U256::ONE || k >= curve.q() {
        return Err(Error::InvalidArgument(format!("ephemeral scalar {k} outside (1, q)")));
    }
    check_headroom(m, curve.q())?;
    let shared = curve.scalar_mul(k, pk_recipient)?;
    let mask = *shared
        .x()
        .ok_or_else(|| Error::Protocol("k·pk is the point at infinity".into()))?;
    let ephemeral = curve.scalar_mul(k, &curve.generator())?;
    if ephemeral.is_infinity() {
        return Err(Error::Protocol("k·G is the point at infinity".into()));
    }
    let f = curve.field();
    let masked = m.entries().iter().map(|&e| f.add(&lift(e, curve), &mask)).collect();
    Ok(CipherMatrix {
        ephemeral,
        rows: m.rows(),
        cols: m.cols(),
        scale_bits: m.scale_bits(),
        masked,
    })
}

/// Encrypts with a fresh ephemeral scalar drawn from `rng`.
pub fn mea_encrypt_with<R: RngCore + ?Sized>(
    m: &QuantizedMatrix,
    pk_recipient: &CurvePoint,
    curve: &CurveParams,
    rng: &mut R,
) -> Result<CipherMatrix> {
    let k = sample_ephemeral(curve, rng);
    mea_encrypt(m, pk_recipient, &k, curve)
}

/// Removes the mask and re-centres each entry into `(-q/2, q/2]`.
///
/// Fails with a range error when a re-centred entry does not fit in `i128`,
/// which happens for a wrong key on a large curve.
pub fn mea_decrypt(c: &CipherMatrix, sk_recipient: &U256, curve: &CurveParams) -> Result<QuantizedMatrix> {
    if c.ephemeral.is_infinity() {
        return Err(Error::Protocol("ciphertext ephemeral point is at infinity".into()));
    }
    if c.masked.len() != c.rows * c.cols {
        return Err(Error::Protocol(format!(
            "ciphertext holds {} entries for a {}x{} matrix",
            c.masked.len(),
            c.rows,
            c.cols
        )));
    }
    let shared = curve.scalar_mul(sk_recipient, &c.ephemeral)?;
    let mask = *shared
        .x()
        .ok_or_else(|| Error::Protocol("sk·(k·G) is the point at infinity".into()))?;
    let f = curve.field();
    let q = curve.q();
    let half = q.shr1();
    let mut data = Vec::with_capacity(c.masked.len());
    for (pos, v) in c.masked.iter().enumerate() {
        if v >= q {
            return Err(Error::Protocol(format!("ciphertext entry {pos} is not reduced mod q")));
        }
        let plain = f.sub(v, &mask);
        let signed = if plain > half {
            q.wrapping_sub(&plain).to_u128().filter(|m| *m <= i128::MAX as u128).map(|m| -(m as i128))
        } else {
            plain.to_u128().filter(|m| *m <= i128::MAX as u128).map(|m| m as i128)
        };
        data.push(signed.ok_or_else(|| {
            Error::Range(format!("decrypted entry {pos} does not fit a signed 128-bit integer"))
        })?);
    }
    QuantizedMatrix::new(c.rows, c.cols, c.scale_bits, data)
}

fn put_field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn field(&mut self) -> Result<&'a [u8]> {
        let malformed = || Error::Protocol("truncated ciphertext".into());
        if self.buf.len() < 4 {
            return Err(malformed());
        }
        let len = u32::from_be_bytes(self.buf[..4].try_into().unwrap()) as usize;
        let rest = &self.buf[4..];
        if rest.len() < len {
            return Err(malformed());
        }
        self.buf = &rest[len..];
        Ok(&rest[..len])
    }

    fn uint(&mut self) -> Result<U256> {
        U256::from_be_bytes(self.field()?)
            .ok_or_else(|| Error::Protocol("ciphertext integer wider than 256 bits".into()))
    }

    fn small(&mut self) -> Result<u64> {
        self.uint()?
            .to_u128()
            .and_then(|v| u64::try_from(v).ok())
            .ok_or_else(|| Error::Protocol("ciphertext header field out of range".into()))
    }
}

impl CipherMatrix {
    /// Wire layout, every field prefixed by its byte length as a big-endian
    /// `u32`: ephemeral x, ephemeral y, scale_bits, rows, cols, then the
    /// masked entries in row-major order. Integers are unsigned big-endian
    /// with leading zero bytes stripped.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.masked.len() * 36);
        let (x, y) = match self.ephemeral {
            CurvePoint::Affine { x, y } => (x, y),
            CurvePoint::Infinity => (U256::ZERO, U256::ZERO),
        };
        put_field(&mut out, &x.to_be_bytes_minimal());
        put_field(&mut out, &y.to_be_bytes_minimal());
        put_field(&mut out, &U256::from_u64(self.scale_bits as u64).to_be_bytes_minimal());
        put_field(&mut out, &U256::from_u64(self.rows as u64).to_be_bytes_minimal());
        put_field(&mut out, &U256::from_u64(self.cols as u64).to_be_bytes_minimal());
        for v in &self.masked {
            put_field(&mut out, &v.to_be_bytes_minimal());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes };
        let x = r.uint()?;
        let y = r.uint()?;
        let scale_bits = u32::try_from(r.small()?)
            .map_err(|_| Error::Protocol("scale_bits out of range".into()))?;
        let rows = r.small()? as usize;
        let cols = r.small()? as usize;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Protocol("ciphertext shape overflows".into()))?;
        let mut masked = Vec::with_capacity(count.min(bytes.len()));
        for _ in 0..count {
            masked.push(r.uint()?);
        }
        if !r.buf.is_empty() {
            return Err(Error::Protocol("trailing bytes after ciphertext".into()));
        }
        Ok(Self { ephemeral: CurvePoint::affine(x, y), rows, cols, scale_bits, masked })
    }
}
