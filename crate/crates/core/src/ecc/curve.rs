//! Short-Weierstrass curves `y^2 = x^3 + a x + b (mod q)`.

use std::sync::{Arc, OnceLock};

use num_bigint::BigUint;

use super::field::{MontField, U256};
use crate::error::{Error, Result};

/// A curve point: the point at infinity or an affine pair with coordinates in `[0, q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CurvePoint {
    Infinity,
    Affine { x: U256, y: U256 },
}

impl CurvePoint {
    pub fn affine(x: U256, y: U256) -> Self {
        CurvePoint::Affine { x, y }
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, CurvePoint::Infinity)
    }

    /// The x-coordinate, used as the additive cipher mask.
    pub fn x(&self) -> Option<&U256> {
        match self {
            CurvePoint::Infinity => None,
            CurvePoint::Affine { x, .. } => Some(x),
        }
    }
}

/// Jacobian point `(X : Y : Z)` with coordinates in Montgomery form; `Z = 0` is infinity.
#[derive(Clone, Copy)]
struct Jacobian {
    x: U256,
    y: U256,
    z: U256,
}

/// Domain parameters of a curve over a prime field.
#[derive(Clone, Debug)]
pub struct CurveParams {
    name: String,
    q: U256,
    a: U256,
    b: U256,
    g: CurvePoint,
    n: Option<U256>,
    field: MontField,
    a_mont: U256,
    b_mont: U256,
    /// `2^i · G` for `i` in `0..bits(order bound)`, built on first use.
    g_table: Arc<OnceLock<Vec<CurvePoint>>>,
}

impl PartialEq for CurveParams {
    fn eq(&self, other: &Self) -> bool {
        (self.q, self.a, self.b, self.g, self.n) == (other.q, other.a, other.b, other.g, other.n)
    }
}

fn is_probable_prime(q: &U256) -> bool {
    let n = q.to_biguint();
    let one = BigUint::from(1u8);
    let two = BigUint::from(2u8);
    if n < two {
        return false;
    }
    for p in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let p = BigUint::from(p);
        if n == p {
            return true;
        }
        if (&n % &p) == BigUint::from(0u8) {
            return false;
        }
    }
    let n1 = &n - &one;
    let s = n1.trailing_zeros().unwrap_or(0);
    let d = &n1 >> s;
    'witness: for a in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = BigUint::from(a).modpow(&d, &n);
        if x == one || x == n1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, &n);
            if x == n1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

impl CurveParams {
    /// Validates and builds curve parameters. `q` must be an odd prime above 3,
    /// `a, b < q`, the discriminant `4a^3 + 27b^2` nonzero mod q, and `G` on
    /// the curve.
    pub fn new(
        name: impl Into<String>,
        q: U256,
        a: U256,
        b: U256,
        g: (U256, U256),
        n: Option<U256>,
    ) -> Result<Self> {
        if q <= U256::from_u64(3) || !is_probable_prime(&q) {
            return Err(Error::InvalidConfig(format!("curve modulus {q} is not an odd prime > 3")));
        }
        if a >= q || b >= q {
            return Err(Error::InvalidConfig("curve coefficients must be below q".into()));
        }
        if let Some(n) = n {
            if n <= U256::from_u64(2) {
                return Err(Error::InvalidConfig("group order must exceed 2".into()));
            }
        }
        let field = MontField::new(q);
        let a_mont = field.to_mont(&a);
        let b_mont = field.to_mont(&b);
        let a3 = field.mul(&field.sqr(&a_mont), &a_mont);
        let b2 = field.sqr(&b_mont);
        let four = field.to_mont(&U256::from_u64(4));
        let c27 = field.to_mont(&U256::from_u64(27));
        let disc = field.add(&field.mul(&four, &a3), &field.mul(&c27, &b2));
        if disc.is_zero() {
            return Err(Error::InvalidConfig("singular curve: 4a^3 + 27b^2 = 0 mod q".into()));
        }
        let curve = Self {
            name: name.into(),
            q,
            a,
            b,
            g: CurvePoint::affine(g.0, g.1),
            n,
            field,
            a_mont,
            b_mont,
            g_table: Arc::new(OnceLock::new()),
        };
        if g.0 >= q || g.1 >= q || !curve.is_on_curve(&curve.g) {
            return Err(Error::InvalidConfig("generator is not on the curve".into()));
        }
        Ok(curve)
    }

    /// `y^2 = x^3 + 2x + 2 (mod 17)` with `G = (5, 1)`: a cyclic group of 19 points.
    pub fn toy17() -> Self {
        Self::new(
            "toy17",
            U256::from_u64(17),
            U256::from_u64(2),
            U256::from_u64(2),
            (U256::from_u64(5), U256::ONE),
            Some(U256::from_u64(19)),
        )
        .expect("toy curve parameters are valid")
    }

    /// NIST P-256 (secp256r1).
    pub fn p256() -> Self {
        let h = |s: &str| U256::parse(s).expect("valid constant");
        Self::new(
            "p256",
            h("0xffffffff00000001000000000000000000000000ffffffffffffffffffffffff"),
            h("0xffffffff00000001000000000000000000000000fffffffffffffffffffffffc"),
            h("0x5ac635d8aa3a93e7b3ebbd55769886bc651d06b0cc53b0f63bce3c3e27d2604b"),
            (
                h("0x6b17d1f2e12c4247f8bce6e563a440f277037d812deb33a0f4a13945d898c296"),
                h("0x4fe342e2fe1a7f9b8ee7eb4a7c0f9e162bce33576b315ececbb6406837bf51f5"),
            ),
            Some(h("0xffffffff00000000ffffffffffffffffbce6faada7179e84f3b9cac2fc632551")),
        )
        .expect("P-256 parameters are valid")
    }

    /// Looks up a built-in profile by name.
    pub fn profile(name: &str) -> Option<Self> {
        match name {
            "toy17" => Some(Self::toy17()),
            "p256" => Some(Self::p256()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn q(&self) -> &U256 {
        &self.q
    }

    pub fn a(&self) -> &U256 {
        &self.a
    }

    pub fn b(&self) -> &U256 {
        &self.b
    }

    pub fn generator(&self) -> CurvePoint {
        self.g
    }

    pub fn order(&self) -> Option<&U256> {
        self.n.as_ref()
    }

    /// Exclusive upper bound for secret scalars: `n` when known, else `q`.
    pub fn scalar_bound(&self) -> U256 {
        self.n.unwrap_or(self.q)
    }

    pub(crate) fn field(&self) -> &MontField {
        &self.field
    }

    pub fn is_on_curve(&self, p: &CurvePoint) -> bool {
        match p {
            CurvePoint::Infinity => true,
            CurvePoint::Affine { x, y } => {
                if *x >= self.q || *y >= self.q {
                    return false;
                }
                let f = &self.field;
                let xm = f.to_mont(x);
                let ym = f.to_mont(y);
                let rhs = f.add(
                    &f.add(&f.mul(&f.sqr(&xm), &xm), &f.mul(&self.a_mont, &xm)),
                    &self.b_mont,
                );
                f.sqr(&ym) == rhs
            }
        }
    }

    fn check(&self, p: &CurvePoint) -> Result<()> {
        if self.is_on_curve(p) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("point {p:?} is not on curve {}", self.name)))
        }
    }

    pub fn negate(&self, p: &CurvePoint) -> CurvePoint {
        match p {
            CurvePoint::Infinity => CurvePoint::Infinity,
            CurvePoint::Affine { x, y } => CurvePoint::affine(*x, self.field.neg(y)),
        }
    }

    /// Affine group law: chord slope for distinct points, tangent slope for
    /// doubling, and the identity/inverse cases.
    pub fn point_add(&self, p: &CurvePoint, q: &CurvePoint) -> Result<CurvePoint> {
        self.check(p)?;
        self.check(q)?;
        Ok(self.add_unchecked(p, q))
    }

    fn add_unchecked(&self, p: &CurvePoint, q: &CurvePoint) -> CurvePoint {
        let (x1, y1, x2, y2) = match (p, q) {
            (CurvePoint::Infinity, _) => return *q,
            (_, CurvePoint::Infinity) => return *p,
            (CurvePoint::Affine { x: x1, y: y1 }, CurvePoint::Affine { x: x2, y: y2 }) => {
                (x1, y1, x2, y2)
            }
        };
        let f = &self.field;
        let (x1m, y1m, x2m, y2m) = (f.to_mont(x1), f.to_mont(y1), f.to_mont(x2), f.to_mont(y2));
        let lambda = if x1 == x2 {
            if f.add(&y1m, &y2m).is_zero() {
                // Q = -P, including the doubling of a point with y = 0.
                return CurvePoint::Infinity;
            }
            let three = f.to_mont(&U256::from_u64(3));
            let num = f.add(&f.mul(&three, &f.sqr(&x1m)), &self.a_mont);
            let den = f.double(&y1m);
            f.mul(&num, &f.inv(&den))
        } else {
            let num = f.sub(&y2m, &y1m);
            let den = f.sub(&x2m, &x1m);
            f.mul(&num, &f.inv(&den))
        };
        let x3 = f.sub(&f.sub(&f.sqr(&lambda), &x1m), &x2m);
        let y3 = f.sub(&f.mul(&lambda, &f.sub(&x1m, &x3)), &y1m);
        CurvePoint::affine(f.from_mont(&x3), f.from_mont(&y3))
    }

    /// `k · P` by left-to-right double-and-add in Jacobian coordinates.
    pub fn scalar_mul(&self, k: &U256, p: &CurvePoint) -> Result<CurvePoint> {
        self.check(p)?;
        if *p == self.g {
            return Ok(self.mul_generator(k));
        }
        Ok(self.mul_variable(k, p))
    }

    fn mul_variable(&self, k: &U256, p: &CurvePoint) -> CurvePoint {
        let (px, py) = match p {
            CurvePoint::Infinity => return CurvePoint::Infinity,
            CurvePoint::Affine { x, y } => (self.field.to_mont(x), self.field.to_mont(y)),
        };
        let mut acc = self.jac_infinity();
        for i in (0..k.bits()).rev() {
            acc = self.jac_double(&acc);
            if k.bit(i) {
                acc = self.jac_add_affine(&acc, &px, &py);
            }
        }
        self.to_affine(&acc)
    }

    /// Fixed-base multiplication using the cached powers-of-two table of `G`.
    fn mul_generator(&self, k: &U256) -> CurvePoint {
        let table = self.g_table.get_or_init(|| {
            let bits = self.scalar_bound().bits().max(self.q.bits()) + 1;
            let mut out = Vec::with_capacity(bits as usize);
            let mut cur = self.g;
            for _ in 0..bits {
                out.push(cur);
                cur = self.add_unchecked(&cur, &cur);
            }
            out
        });
        if k.bits() as usize > table.len() {
            return self.mul_variable(k, &self.g);
        }
        let f = &self.field;
        let mut acc = self.jac_infinity();
        for i in 0..k.bits() {
            if k.bit(i) {
                if let CurvePoint::Affine { x, y } = &table[i as usize] {
                    acc = self.jac_add_affine(&acc, &f.to_mont(x), &f.to_mont(y));
                }
            }
        }
        self.to_affine(&acc)
    }

    fn jac_infinity(&self) -> Jacobian {
        Jacobian { x: self.field.one(), y: self.field.one(), z: U256::ZERO }
    }

    fn jac_double(&self, p: &Jacobian) -> Jacobian {
        let f = &self.field;
        if p.z.is_zero() || p.y.is_zero() {
            return self.jac_infinity();
        }
        let xx = f.sqr(&p.x);
        let yy = f.sqr(&p.y);
        let yyyy = f.sqr(&yy);
        let zz = f.sqr(&p.z);
        // S = 4·X·Y^2
        let s = f.double(&f.double(&f.mul(&p.x, &yy)));
        // M = 3·X^2 + a·Z^4
        let m = f.add(&f.add(&f.double(&xx), &xx), &f.mul(&self.a_mont, &f.sqr(&zz)));
        let x3 = f.sub(&f.sqr(&m), &f.double(&s));
        let eight_yyyy = f.double(&f.double(&f.double(&yyyy)));
        let y3 = f.sub(&f.mul(&m, &f.sub(&s, &x3)), &eight_yyyy);
        let z3 = f.double(&f.mul(&p.y, &p.z));
        Jacobian { x: x3, y: y3, z: z3 }
    }

    /// Mixed addition of a Jacobian point and an affine point (Montgomery form).
    fn jac_add_affine(&self, p: &Jacobian, x2: &U256, y2: &U256) -> Jacobian {
        let f = &self.field;
        if p.z.is_zero() {
            return Jacobian { x: *x2, y: *y2, z: f.one() };
        }
        let z1z1 = f.sqr(&p.z);
        let u2 = f.mul(x2, &z1z1);
        let s2 = f.mul(y2, &f.mul(&p.z, &z1z1));
        let h = f.sub(&u2, &p.x);
        let r = f.sub(&s2, &p.y);
        if h.is_zero() {
            return if r.is_zero() { self.jac_double(p) } else { self.jac_infinity() };
        }
        let hh = f.sqr(&h);
        let hhh = f.mul(&h, &hh);
        let v = f.mul(&p.x, &hh);
        let x3 = f.sub(&f.sub(&f.sqr(&r), &hhh), &f.double(&v));
        let y3 = f.sub(&f.mul(&r, &f.sub(&v, &x3)), &f.mul(&p.y, &hhh));
        let z3 = f.mul(&p.z, &h);
        Jacobian { x: x3, y: y3, z: z3 }
    }

    fn to_affine(&self, p: &Jacobian) -> CurvePoint {
        if p.z.is_zero() {
            return CurvePoint::Infinity;
        }
        let f = &self.field;
        let zinv = f.inv(&p.z);
        let zinv2 = f.sqr(&zinv);
        let x = f.mul(&p.x, &zinv2);
        let y = f.mul(&p.y, &f.mul(&zinv2, &zinv));
        CurvePoint::affine(f.from_mont(&x), f.from_mont(&y))
    }
}
