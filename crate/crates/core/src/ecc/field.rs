//! 256-bit unsigned integers and Montgomery arithmetic modulo an odd prime.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;
use rand::RngCore;

/// Unsigned 256-bit integer, four little-endian 64-bit limbs.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct U256(pub(crate) [u64; 4]);

#[inline(always)]
fn adc(a: u64, b: u64, carry: u64) -> (u64, u64) {
    let t = a as u128 + b as u128 + carry as u128;
    (t as u64, (t >> 64) as u64)
}

#[inline(always)]
fn sbb(a: u64, b: u64, borrow: u64) -> (u64, u64) {
    let t = (a as u128).wrapping_sub(b as u128 + borrow as u128);
    (t as u64, (t >> 127) as u64)
}

/// `a + b * c + carry`, returned as (low, high).
#[inline(always)]
fn mac(a: u64, b: u64, c: u64, carry: u64) -> (u64, u64) {
    let t = a as u128 + (b as u128) * (c as u128) + carry as u128;
    (t as u64, (t >> 64) as u64)
}

impl U256 {
    pub const ZERO: Self = Self([0; 4]);
    pub const ONE: Self = Self([1, 0, 0, 0]);

    pub const fn from_u64(v: u64) -> Self {
        Self([v, 0, 0, 0])
    }

    pub const fn from_u128(v: u128) -> Self {
        Self([v as u64, (v >> 64) as u64, 0, 0])
    }

    /// Parses a decimal string or a `0x`-prefixed hexadecimal string.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let big = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            Some(hex) => BigUint::parse_bytes(hex.replace('_', "").as_bytes(), 16)?,
            None => BigUint::parse_bytes(s.replace('_', "").as_bytes(), 10)?,
        };
        Self::from_biguint(&big)
    }

    pub fn from_biguint(v: &BigUint) -> Option<Self> {
        Self::from_be_bytes(&v.to_bytes_be())
    }

    pub fn to_biguint(&self) -> BigUint {
        BigUint::from_bytes_be(&self.to_be_bytes())
    }

    /// Accepts any big-endian byte string whose value fits in 256 bits.
    pub fn from_be_bytes(bytes: &[u8]) -> Option<Self> {
        let first = bytes.iter().position(|&b| b != 0).unwrap_or(bytes.len());
        let bytes = &bytes[first..];
        if bytes.len() > 32 {
            return None;
        }
        let mut buf = [0u8; 32];
        buf[32 - bytes.len()..].copy_from_slice(bytes);
        let mut limbs = [0u64; 4];
        for (i, limb) in limbs.iter_mut().enumerate() {
            let start = 32 - 8 * (i + 1);
            *limb = u64::from_be_bytes(buf[start..start + 8].try_into().unwrap());
        }
        Some(Self(limbs))
    }

    pub fn to_be_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, limb) in self.0.iter().enumerate() {
            let start = 32 - 8 * (i + 1);
            out[start..start + 8].copy_from_slice(&limb.to_be_bytes());
        }
        out
    }

    /// Big-endian bytes without leading zeros; zero encodes as a single `0x00`.
    pub fn to_be_bytes_minimal(&self) -> Vec<u8> {
        let full = self.to_be_bytes();
        let first = full.iter().position(|&b| b != 0).unwrap_or(31);
        full[first..].to_vec()
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 4]
    }

    pub fn bits(&self) -> u32 {
        for i in (0..4).rev() {
            if self.0[i] != 0 {
                return 64 * i as u32 + (64 - self.0[i].leading_zeros());
            }
        }
        0
    }

    pub fn bit(&self, i: u32) -> bool {
        (self.0[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    pub fn low_u128(&self) -> u128 {
        self.0[0] as u128 | (self.0[1] as u128) << 64
    }

    /// Value as `u128` when it fits.
    pub fn to_u128(&self) -> Option<u128> {
        (self.0[2] == 0 && self.0[3] == 0).then(|| self.low_u128())
    }

    pub fn overflowing_add(&self, rhs: &Self) -> (Self, bool) {
        let mut out = [0u64; 4];
        let mut carry = 0;
        for i in 0..4 {
            (out[i], carry) = adc(self.0[i], rhs.0[i], carry);
        }
        (Self(out), carry != 0)
    }

    pub fn overflowing_sub(&self, rhs: &Self) -> (Self, bool) {
        let mut out = [0u64; 4];
        let mut borrow = 0;
        for i in 0..4 {
            (out[i], borrow) = sbb(self.0[i], rhs.0[i], borrow);
        }
        (Self(out), borrow != 0)
    }

    pub fn wrapping_sub(&self, rhs: &Self) -> Self {
        self.overflowing_sub(rhs).0
    }

    pub fn shr1(&self) -> Self {
        let mut out = [0u64; 4];
        for i in 0..4 {
            out[i] = self.0[i] >> 1;
            if i < 3 {
                out[i] |= self.0[i + 1] << 63;
            }
        }
        Self(out)
    }

    /// Uniform sample from `[0, bound)` by rejection. `bound` must be nonzero.
    pub fn random_below<R: RngCore + ?Sized>(rng: &mut R, bound: &Self) -> Self {
        assert!(!bound.is_zero(), "random_below: zero bound");
        let bits = bound.bits();
        loop {
            let mut limbs = [0u64; 4];
            for limb in limbs.iter_mut() {
                *limb = rng.next_u64();
            }
            for (i, limb) in limbs.iter_mut().enumerate() {
                let lo = 64 * i as u32;
                if bits <= lo {
                    *limb = 0;
                } else if bits < lo + 64 {
                    *limb &= (1u64 << (bits - lo)) - 1;
                }
            }
            let candidate = Self(limbs);
            if candidate < *bound {
                return candidate;
            }
        }
    }

    /// Uniform sample from `[lo, hi)`; requires `lo < hi`.
    pub fn random_range<R: RngCore + ?Sized>(rng: &mut R, lo: &Self, hi: &Self) -> Self {
        let width = hi.wrapping_sub(lo);
        Self::random_below(rng, &width).overflowing_add(lo).0
    }
}

impl Ord for U256 {
    fn cmp(&self, other: &Self) -> Ordering {
        for i in (0..4).rev() {
            match self.0[i].cmp(&other.0[i]) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }
}

impl PartialOrd for U256 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl From<u64> for U256 {
    fn from(v: u64) -> Self {
        Self::from_u64(v)
    }
}

impl fmt::Display for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_biguint())
    }
}

impl fmt::Debug for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_biguint().to_str_radix(16))
    }
}

/// Arithmetic in `Z/qZ` for an odd modulus `q < 2^256`.
///
/// Elements passed to `mul`/`sqr`/`pow`/`inv` are in Montgomery form
/// (`a·R mod q`, `R = 2^256`); `add`/`sub`/`neg` work in either form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct MontField {
    q: U256,
    /// `R^2 mod q`
    r2: U256,
    /// `R mod q`, the Montgomery image of 1
    one: U256,
    /// `-q^{-1} mod 2^64`
    n0: u64,
}

impl MontField {
    pub fn new(q: U256) -> Self {
        assert!(q.0[0] & 1 == 1, "Montgomery modulus must be odd");
        let big_q = q.to_biguint();
        let r = BigUint::from(1u8) << 256;
        let one = U256::from_biguint(&(&r % &big_q)).unwrap();
        let r2 = U256::from_biguint(&((&r * &r) % &big_q)).unwrap();
        // Newton iteration doubles the number of correct low bits each round.
        let mut inv: u64 = 1;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(q.0[0].wrapping_mul(inv)));
        }
        Self { q, r2, one, n0: inv.wrapping_neg() }
    }

    pub fn one(&self) -> U256 {
        self.one
    }

    /// Reduces an arbitrary 256-bit value mod q.
    pub fn reduce(&self, a: &U256) -> U256 {
        // a·R·R^{-1}: Montgomery multiply by 1 then back, valid for any a < 2^256
        // because mont_mul only requires a·b < q·R.
        let m = self.mul(a, &self.r2);
        self.from_mont(&m)
    }

    pub fn add(&self, a: &U256, b: &U256) -> U256 {
        let (sum, carry) = a.overflowing_add(b);
        if carry || sum >= self.q {
            sum.wrapping_sub(&self.q)
        } else {
            sum
        }
    }

    pub fn sub(&self, a: &U256, b: &U256) -> U256 {
        let (diff, borrow) = a.overflowing_sub(b);
        if borrow {
            diff.overflowing_add(&self.q).0
        } else {
            diff
        }
    }

    pub fn neg(&self, a: &U256) -> U256 {
        if a.is_zero() {
            *a
        } else {
            self.q.wrapping_sub(a)
        }
    }

    pub fn double(&self, a: &U256) -> U256 {
        self.add(a, a)
    }

    /// Montgomery product `a·b·R^{-1} mod q` (CIOS).
    pub fn mul(&self, a: &U256, b: &U256) -> U256 {
        let (a, b, q) = (&a.0, &b.0, &self.q.0);
        let mut t = [0u64; 6];
        for &bi in b.iter() {
            let mut carry = 0;
            for j in 0..4 {
                (t[j], carry) = mac(t[j], a[j], bi, carry);
            }
            let (s, c) = adc(t[4], carry, 0);
            t[4] = s;
            t[5] = c;

            let m = t[0].wrapping_mul(self.n0);
            let (_, mut carry) = mac(t[0], m, q[0], 0);
            for j in 1..4 {
                (t[j - 1], carry) = mac(t[j], m, q[j], carry);
            }
            let (s, c) = adc(t[4], carry, 0);
            t[3] = s;
            t[4] = t[5] + c;
            t[5] = 0;
        }
        let r = U256([t[0], t[1], t[2], t[3]]);
        if t[4] != 0 || r >= self.q {
            r.wrapping_sub(&self.q)
        } else {
            r
        }
    }

    pub fn sqr(&self, a: &U256) -> U256 {
        self.mul(a, a)
    }

    /// Converts a value `< q` into Montgomery form.
    pub fn to_mont(&self, a: &U256) -> U256 {
        self.mul(a, &self.r2)
    }

    pub fn from_mont(&self, a: &U256) -> U256 {
        self.mul(a, &U256::ONE)
    }

    /// `a^e` with `a` in Montgomery form.
    pub fn pow(&self, a: &U256, e: &U256) -> U256 {
        let mut acc = self.one;
        for i in (0..e.bits()).rev() {
            acc = self.sqr(&acc);
            if e.bit(i) {
                acc = self.mul(&acc, a);
            }
        }
        acc
    }

    /// Inverse by Fermat's little theorem; `q` must be prime and `a ≠ 0`.
    pub fn inv(&self, a: &U256) -> U256 {
        let e = self.q.wrapping_sub(&U256::from_u64(2));
        self.pow(a, &e)
    }
}
