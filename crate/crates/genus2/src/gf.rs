//! Finite fields GF(p^k) and univariate polynomials over them.
//!
//! Elements are `u64` values in `[0, q)`; an element of GF(p^k) is the
//! integer whose base-p digits are its coefficients over the defining
//! modulus (low degree first). The same encoding is used by the forms
//! file format.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

pub type Rng64 = Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> Rng64 {
    Rng64::seed_from_u64(seed)
}

/// Largest accepted characteristic unless a caller asks for another bound.
pub const DEFAULT_P_LIMIT: u64 = 1 << 61;

const TABLE_LIMIT: u64 = 1 << 22;

struct Inner {
    p: u64,
    k: u32,
    q: u64,
    /// Monic modulus over GF(p), low degree first, length k+1. Empty for k = 1.
    modulus: Vec<u64>,
    exp: Vec<u64>,
    log: Vec<u32>,
}

/// Shared, immutable description of GF(p^k).
#[derive(Clone)]
pub struct FieldCtx {
    inner: Arc<Inner>,
}

impl PartialEq for FieldCtx {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.p == other.inner.p
                && self.inner.k == other.inner.k
                && self.inner.modulus == other.inner.modulus)
    }
}
impl Eq for FieldCtx {}

impl fmt::Debug for FieldCtx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.inner.k == 1 {
            write!(f, "GF({})", self.inner.p)
        } else {
            write!(f, "GF({}^{}; {:?})", self.inner.p, self.inner.k, self.inner.modulus)
        }
    }
}

#[inline]
fn mulmod(a: u64, b: u64, p: u64) -> u64 {
    if p <= (1 << 32) {
        a * b % p
    } else {
        ((a as u128 * b as u128) % p as u128) as u64
    }
}

fn powmod(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1 % p;
    a %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = mulmod(r, a, p);
        }
        a = mulmod(a, a, p);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for sp in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % sp == 0 {
            return n == sp;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'outer: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

pub(crate) fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut f = 2u64;
    while f.saturating_mul(f) <= n {
        if n % f == 0 {
            out.push(f);
            while n % f == 0 {
                n /= f;
            }
        }
        f += if f == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Build GF(p^k). The modulus is found by seeded random search.
pub fn field_make(p: u64, k: u32, seed: u64) -> Result<FieldCtx> {
    field_make_with_limit(p, k, seed, DEFAULT_P_LIMIT)
}

pub fn field_make_with_limit(p: u64, k: u32, seed: u64, limit: u64) -> Result<FieldCtx> {
    if !is_prime(p) {
        return Err(Error::NotPrime(p));
    }
    if p > limit {
        return Err(Error::CharTooLarge { p, limit });
    }
    if k == 0 {
        return Err(Error::Invalid("extension degree must be at least 1".into()));
    }
    let prime = FieldCtx::prime_unchecked(p);
    if k == 1 {
        return Ok(prime);
    }
    let mut r = rng(seed);
    loop {
        let mut m: Vec<u64> = (0..k).map(|_| r.gen_range(0..p)).collect();
        m.push(1);
        if m[0] == 0 {
            continue;
        }
        if upoly::is_irreducible(&prime, &m) {
            return FieldCtx::with_modulus(p, &m);
        }
    }
}

impl FieldCtx {
    fn prime_unchecked(p: u64) -> FieldCtx {
        FieldCtx {
            inner: Arc::new(Inner { p, k: 1, q: p, modulus: Vec::new(), exp: Vec::new(), log: Vec::new() }),
        }
    }

    pub fn prime(p: u64) -> Result<FieldCtx> {
        field_make(p, 1, 0)
    }

    /// GF(p^k) with an explicit monic modulus over GF(p) (low degree first).
    pub fn with_modulus(p: u64, modulus: &[u64]) -> Result<FieldCtx> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        let k = modulus.len().saturating_sub(1) as u32;
        if k <= 1 {
            return Ok(Self::prime_unchecked(p));
        }
        if *modulus.last().unwrap() != 1 || modulus.iter().any(|&c| c >= p) {
            return Err(Error::Invalid("modulus must be monic with reduced coefficients".into()));
        }
        let prime = Self::prime_unchecked(p);
        if !upoly::is_irreducible(&prime, modulus) {
            return Err(Error::Invalid("modulus is reducible".into()));
        }
        let mut q: u64 = 1;
        for _ in 0..k {
            q = q.checked_mul(p).filter(|&v| v < (1 << 63)).ok_or(Error::FieldTooLarge)?;
        }
        let plain = FieldCtx { inner: Arc::new(Inner { p, k, q, modulus: modulus.to_vec(), exp: Vec::new(), log: Vec::new() }) };
        if q > TABLE_LIMIT {
            return Ok(plain);
        }
        let facs = prime_factors(q - 1);
        let mut g = 2;
        while g < q {
            if facs.iter().all(|&r| plain.pow(g, (q - 1) / r) != 1) {
                break;
            }
            g += 1;
        }
        let mut exp = vec![0u64; 2 * (q as usize - 1)];
        let mut log = vec![0u32; q as usize];
        let mut x = 1u64;
        for i in 0..(q as usize - 1) {
            exp[i] = x;
            exp[i + q as usize - 1] = x;
            log[x as usize] = i as u32;
            x = plain.mul(x, g);
        }
        let inner = Inner { p, k, q, modulus: modulus.to_vec(), exp, log };
        Ok(FieldCtx { inner: Arc::new(inner) })
    }

    #[inline]
    pub fn p(&self) -> u64 {
        self.inner.p
    }
    #[inline]
    pub fn k(&self) -> u32 {
        self.inner.k
    }
    #[inline]
    pub fn q(&self) -> u64 {
        self.inner.q
    }
    #[inline]
    pub fn is_prime_field(&self) -> bool {
        self.inner.k == 1
    }
    /// Modulus over GF(p), low degree first; `None` for prime fields.
    pub fn modulus(&self) -> Option<&[u64]> {
        if self.inner.k == 1 {
            None
        } else {
            Some(&self.inner.modulus)
        }
    }
    pub fn prime_subfield(&self) -> FieldCtx {
        Self::prime_unchecked(self.inner.p)
    }

    /// Digits of an element over GF(p), length k.
    pub fn digits(&self, mut a: u64) -> Vec<u64> {
        let p = self.inner.p;
        (0..self.inner.k)
            .map(|_| {
                let d = a % p;
                a /= p;
                d
            })
            .collect()
    }

    pub fn from_digits(&self, d: &[u64]) -> u64 {
        let p = self.inner.p;
        d.iter().rev().fold(0u64, |acc, &x| acc * p + x % p)
    }

    /// Embed an integer through the prime subfield.
    #[inline]
    pub fn from_int(&self, c: i64) -> u64 {
        let p = self.inner.p as i64;
        (((c % p) + p) % p) as u64
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let inn = &*self.inner;
        if inn.k == 1 {
            let s = a + b;
            if s >= inn.p {
                s - inn.p
            } else {
                s
            }
        } else {
            self.digitwise(a, b, |x, y, p| if x + y >= p { x + y - p } else { x + y })
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        let inn = &*self.inner;
        if inn.k == 1 {
            if a >= b {
                a - b
            } else {
                a + inn.p - b
            }
        } else {
            self.digitwise(a, b, |x, y, p| if x >= y { x - y } else { x + p - y })
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        self.sub(0, a)
    }

    fn digitwise(&self, mut a: u64, mut b: u64, f: impl Fn(u64, u64, u64) -> u64) -> u64 {
        let p = self.inner.p;
        if p == 2 {
            return a ^ b;
        }
        let mut out = 0u64;
        let mut place = 1u64;
        for _ in 0..self.inner.k {
            out += f(a % p, b % p, p) * place;
            a /= p;
            b /= p;
            place = place.wrapping_mul(p);
        }
        out
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        let inn = &*self.inner;
        if inn.k == 1 {
            return mulmod(a, b, inn.p);
        }
        if a == 0 || b == 0 {
            return 0;
        }
        if !inn.log.is_empty() {
            return inn.exp[inn.log[a as usize] as usize + inn.log[b as usize] as usize];
        }
        self.mul_slow(a, b)
    }

    fn mul_slow(&self, a: u64, b: u64) -> u64 {
        let p = self.inner.p;
        let k = self.inner.k as usize;
        let da = self.digits(a);
        let db = self.digits(b);
        let mut prod = vec![0u64; 2 * k - 1];
        for i in 0..k {
            if da[i] == 0 {
                continue;
            }
            for j in 0..k {
                prod[i + j] = (prod[i + j] + mulmod(da[i], db[j], p)) % p;
            }
        }
        let m = &self.inner.modulus;
        for i in (k..prod.len()).rev() {
            let c = prod[i];
            if c == 0 {
                continue;
            }
            for j in 0..k {
                prod[i - k + j] = (prod[i - k + j] + p - mulmod(c, m[j], p)) % p;
            }
            prod[i] = 0;
        }
        self.from_digits(&prod[..k])
    }

    pub fn pow(&self, mut a: u64, mut e: u64) -> u64 {
        let mut r = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                r = self.mul(r, a);
            }
            a = self.mul(a, a);
            e >>= 1;
        }
        r
    }

    /// Multiplicative inverse; panics on zero.
    pub fn inv(&self, a: u64) -> u64 {
        assert!(a != 0, "inverse of zero");
        let inn = &*self.inner;
        if inn.k == 1 {
            // extended Euclid
            let (mut r0, mut r1) = (inn.p as i128, a as i128);
            let (mut s0, mut s1) = (0i128, 1i128);
            while r1 != 0 {
                let t = r0 / r1;
                (r0, r1) = (r1, r0 - t * r1);
                (s0, s1) = (s1, s0 - t * s1);
            }
            let p = inn.p as i128;
            return (((s0 % p) + p) % p) as u64;
        }
        if !inn.log.is_empty() {
            let l = inn.log[a as usize] as usize;
            return inn.exp[(inn.q as usize - 1 - l) % (inn.q as usize - 1)];
        }
        self.pow(a, inn.q - 2)
    }

    #[inline]
    pub fn div(&self, a: u64, b: u64) -> u64 {
        self.mul(a, self.inv(b))
    }

    /// a^(p^t), the t-th power of the Frobenius automorphism.
    pub fn frob(&self, a: u64, t: u32) -> u64 {
        let k = self.inner.k;
        let t = t % k;
        if k == 1 || t == 0 {
            return a;
        }
        let mut x = a;
        for _ in 0..t {
            x = self.pow(x, self.inner.p);
        }
        x
    }

    pub fn random(&self, r: &mut Rng64) -> u64 {
        r.gen_range(0..self.inner.q)
    }

    pub fn random_nonzero(&self, r: &mut Rng64) -> u64 {
        r.gen_range(1..self.inner.q)
    }

    /// Iterator over all field elements (only sensible for small q).
    pub fn elements(&self) -> std::ops::Range<u64> {
        0..self.inner.q
    }

    /// A fixed primitive element.
    pub fn primitive_element(&self) -> u64 {
        let inn = &*self.inner;
        if !inn.exp.is_empty() {
            return inn.exp[1];
        }
        let facs = prime_factors(inn.q - 1);
        let mut g = 1;
        loop {
            g += 1;
            if g >= inn.q {
                return 1;
            }
            if facs.iter().all(|&r| self.pow(g, (inn.q - 1) / r) != 1) {
                return g;
            }
        }
    }
}

/// Operations shared by `FieldCtx` and residue extensions, enough for
/// polynomial arithmetic, factorization and root finding.
pub trait FieldLike {
    type E: Clone + PartialEq + fmt::Debug;
    fn zero(&self) -> Self::E;
    fn one(&self) -> Self::E;
    fn fadd(&self, a: &Self::E, b: &Self::E) -> Self::E;
    fn fsub(&self, a: &Self::E, b: &Self::E) -> Self::E;
    fn fmul(&self, a: &Self::E, b: &Self::E) -> Self::E;
    fn finv(&self, a: &Self::E) -> Self::E;
    fn fis_zero(&self, a: &Self::E) -> bool;
    /// Characteristic.
    fn char_p(&self) -> u64;
    /// |F| = p^abs_degree.
    fn abs_degree(&self) -> u32;
    fn frandom(&self, r: &mut Rng64) -> Self::E;
    fn from_prime(&self, c: u64) -> Self::E;
    fn fpow_p(&self, a: &Self::E) -> Self::E;
    /// Inverse of x ↦ x^p.
    fn pth_root(&self, a: &Self::E) -> Self::E {
        let mut x = a.clone();
        for _ in 1..self.abs_degree() {
            x = self.fpow_p(&x);
        }
        x
    }
}

impl FieldLike for FieldCtx {
    type E = u64;
    fn zero(&self) -> u64 {
        0
    }
    fn one(&self) -> u64 {
        1
    }
    fn fadd(&self, a: &u64, b: &u64) -> u64 {
        self.add(*a, *b)
    }
    fn fsub(&self, a: &u64, b: &u64) -> u64 {
        self.sub(*a, *b)
    }
    fn fmul(&self, a: &u64, b: &u64) -> u64 {
        self.mul(*a, *b)
    }
    fn finv(&self, a: &u64) -> u64 {
        self.inv(*a)
    }
    fn fis_zero(&self, a: &u64) -> bool {
        *a == 0
    }
    fn char_p(&self) -> u64 {
        self.p()
    }
    fn abs_degree(&self) -> u32 {
        self.k()
    }
    fn frandom(&self, r: &mut Rng64) -> u64 {
        self.random(r)
    }
    fn from_prime(&self, c: u64) -> u64 {
        c % self.p()
    }
    fn fpow_p(&self, a: &u64) -> u64 {
        self.pow(*a, self.p())
    }
}

/// The residue field L = k[x]/(a) for an irreducible a over a `FieldCtx`,
/// with elements stored as coefficient vectors of length deg a.
#[derive(Clone, Debug)]
pub struct ExtField {
    pub base: FieldCtx,
    pub modulus: Vec<u64>,
}

impl ExtField {
    pub fn new(base: &FieldCtx, modulus: &[u64]) -> ExtField {
        let m = upoly::monic(base, modulus);
        ExtField { base: base.clone(), modulus: m }
    }
    pub fn degree(&self) -> usize {
        self.modulus.len() - 1
    }
    /// Reduce an arbitrary polynomial over the base into L.
    pub fn reduce(&self, a: &[u64]) -> Vec<u64> {
        let r = upoly::rem(&self.base, a, &self.modulus);
        self.pad(r)
    }
    fn pad(&self, mut r: Vec<u64>) -> Vec<u64> {
        r.resize(self.degree(), 0);
        r
    }
    /// The class of x.
    pub fn gen(&self) -> Vec<u64> {
        self.reduce(&[0, 1])
    }
}

impl FieldLike for ExtField {
    type E = Vec<u64>;
    fn zero(&self) -> Vec<u64> {
        vec![0; self.degree()]
    }
    fn one(&self) -> Vec<u64> {
        self.reduce(&[1])
    }
    fn fadd(&self, a: &Vec<u64>, b: &Vec<u64>) -> Vec<u64> {
        a.iter().zip(b).map(|(x, y)| self.base.add(*x, *y)).collect()
    }
    fn fsub(&self, a: &Vec<u64>, b: &Vec<u64>) -> Vec<u64> {
        a.iter().zip(b).map(|(x, y)| self.base.sub(*x, *y)).collect()
    }
    fn fmul(&self, a: &Vec<u64>, b: &Vec<u64>) -> Vec<u64> {
        self.reduce(&upoly::mul(&self.base, a, b))
    }
    fn finv(&self, a: &Vec<u64>) -> Vec<u64> {
        let (g, s, _) = upoly::ext_gcd(&self.base, a, &self.modulus);
        assert!(g.len() == 1, "inverse of a non-unit in residue field");
        let c = self.base.inv(g[0]);
        self.reduce(&upoly::scale(&self.base, &s, c))
    }
    fn fis_zero(&self, a: &Vec<u64>) -> bool {
        a.iter().all(|&c| c == 0)
    }
    fn char_p(&self) -> u64 {
        self.base.p()
    }
    fn abs_degree(&self) -> u32 {
        self.base.k() * self.degree() as u32
    }
    fn frandom(&self, r: &mut Rng64) -> Vec<u64> {
        (0..self.degree()).map(|_| self.base.random(r)).collect()
    }
    fn from_prime(&self, c: u64) -> Vec<u64> {
        self.reduce(&[c % self.base.p()])
    }
    fn fpow_p(&self, a: &Vec<u64>) -> Vec<u64> {
        let mut r = self.one();
        let mut b = a.clone();
        let mut e = self.base.p();
        while e > 0 {
            if e & 1 == 1 {
                r = self.fmul(&r, &b);
            }
            b = self.fmul(&b, &b);
            e >>= 1;
        }
        r
    }
}

/// Polynomial routines on coefficient slices (low degree first) over any
/// `FieldLike`. Results are trimmed (no trailing zeros).
pub mod upoly {
    use super::*;

    pub fn trim<F: FieldLike>(f: &F, mut a: Vec<F::E>) -> Vec<F::E> {
        while a.last().map_or(false, |c| f.fis_zero(c)) {
            a.pop();
        }
        a
    }

    pub fn deg<E>(a: &[E]) -> Option<usize> {
        if a.is_empty() {
            None
        } else {
            Some(a.len() - 1)
        }
    }

    pub fn add<F: FieldLike>(f: &F, a: &[F::E], b: &[F::E]) -> Vec<F::E> {
        let n = a.len().max(b.len());
        let z = f.zero();
        let out = (0..n).map(|i| f.fadd(a.get(i).unwrap_or(&z), b.get(i).unwrap_or(&z))).collect();
        trim(f, out)
    }

    pub fn sub<F: FieldLike>(f: &F, a: &[F::E], b: &[F::E]) -> Vec<F::E> {
        let n = a.len().max(b.len());
        let z = f.zero();
        let out = (0..n).map(|i| f.fsub(a.get(i).unwrap_or(&z), b.get(i).unwrap_or(&z))).collect();
        trim(f, out)
    }

    pub fn scale<F: FieldLike>(f: &F, a: &[F::E], c: F::E) -> Vec<F::E> {
        trim(f, a.iter().map(|x| f.fmul(x, &c)).collect())
    }

    pub fn mul<F: FieldLike>(f: &F, a: &[F::E], b: &[F::E]) -> Vec<F::E> {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let mut out = vec![f.zero(); a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            if f.fis_zero(x) {
                continue;
            }
            for (j, y) in b.iter().enumerate() {
                out[i + j] = f.fadd(&out[i + j], &f.fmul(x, y));
            }
        }
        trim(f, out)
    }

    pub fn monic<F: FieldLike>(f: &F, a: &[F::E]) -> Vec<F::E> {
        let a = trim(f, a.to_vec());
        match a.last() {
            None => a,
            Some(l) => {
                let li = f.finv(l);
                a.iter().map(|c| f.fmul(c, &li)).collect()
            }
        }
    }

    /// Quotient and remainder; panics if b is zero.
    pub fn divrem<F: FieldLike>(f: &F, a: &[F::E], b: &[F::E]) -> (Vec<F::E>, Vec<F::E>) {
        let b = trim(f, b.to_vec());
        assert!(!b.is_empty(), "division by zero polynomial");
        let mut r = trim(f, a.to_vec());
        if r.len() < b.len() {
            return (Vec::new(), r);
        }
        let db = b.len() - 1;
        let li = f.finv(&b[db]);
        let mut q = vec![f.zero(); r.len() - db];
        while r.len() > db && !r.is_empty() {
            let dr = r.len() - 1;
            let c = f.fmul(&r[dr], &li);
            let shift = dr - db;
            for (j, bj) in b.iter().enumerate() {
                r[shift + j] = f.fsub(&r[shift + j], &f.fmul(&c, bj));
            }
            q[shift] = c;
            r.pop();
            r = trim(f, r);
        }
        (trim(f, q), r)
    }

    pub fn rem<F: FieldLike>(f: &F, a: &[F::E], b: &[F::E]) -> Vec<F::E> {
        divrem(f, a, b).1
    }

    pub fn gcd<F: FieldLike>(f: &F, a: &[F::E], b: &[F::E]) -> Vec<F::E> {
        let mut x = trim(f, a.to_vec());
        let mut y = trim(f, b.to_vec());
        while !y.is_empty() {
            let r = rem(f, &x, &y);
            x = y;
            y = r;
        }
        monic(f, &x)
    }

    /// (g, s, t) with s·a + t·b = g, g monic.
    pub fn ext_gcd<F: FieldLike>(f: &F, a: &[F::E], b: &[F::E]) -> (Vec<F::E>, Vec<F::E>, Vec<F::E>) {
        let (mut r0, mut r1) = (trim(f, a.to_vec()), trim(f, b.to_vec()));
        let (mut s0, mut s1) = (vec![f.one()], Vec::new());
        let (mut t0, mut t1) = (Vec::new(), vec![f.one()]);
        while !r1.is_empty() {
            let (q, r) = divrem(f, &r0, &r1);
            let s2 = sub(f, &s0, &mul(f, &q, &s1));
            let t2 = sub(f, &t0, &mul(f, &q, &t1));
            r0 = r1;
            r1 = r;
            s0 = s1;
            s1 = s2;
            t0 = t1;
            t1 = t2;
        }
        match r0.last() {
            None => (r0, s0, t0),
            Some(l) => {
                let li = f.finv(l);
                (scale(f, &r0, li.clone()), scale(f, &s0, li.clone()), scale(f, &t0, li))
            }
        }
    }

    pub fn derivative<F: FieldLike>(f: &F, a: &[F::E]) -> Vec<F::E> {
        let out = a.iter().enumerate().skip(1).map(|(i, c)| f.fmul(c, &f.from_prime(i as u64))).collect();
        trim(f, out)
    }

    pub fn eval<F: FieldLike>(f: &F, a: &[F::E], x: &F::E) -> F::E {
        a.iter().rev().fold(f.zero(), |acc, c| f.fadd(&f.fmul(&acc, x), c))
    }

    pub fn mulmod<F: FieldLike>(f: &F, a: &[F::E], b: &[F::E], m: &[F::E]) -> Vec<F::E> {
        rem(f, &mul(f, a, b), m)
    }

    pub fn powmod<F: FieldLike>(f: &F, a: &[F::E], mut e: u64, m: &[F::E]) -> Vec<F::E> {
        let mut r = rem(f, &[f.one()], m);
        let mut b = rem(f, a, m);
        while e > 0 {
            if e & 1 == 1 {
                r = mulmod(f, &r, &b, m);
            }
            b = mulmod(f, &b, &b, m);
            e >>= 1;
        }
        r
    }

    /// a^(|F|^j) mod m, computed by repeated p-th powering.
    pub fn pow_q_iter<F: FieldLike>(f: &F, a: &[F::E], j: u64, m: &[F::E]) -> Vec<F::E> {
        let mut r = rem(f, a, m);
        for _ in 0..(j * f.abs_degree() as u64) {
            r = powmod(f, &r, f.char_p(), m);
        }
        r
    }

    /// a^((|F|^r - 1)/2) mod m for odd characteristic, or the absolute
    /// trace a + a^2 + ... + a^(2^(r·deg - 1)) in characteristic 2.
    fn splitter<F: FieldLike>(f: &F, a: &[F::E], r: usize, m: &[F::E]) -> Vec<F::E> {
        let p = f.char_p();
        let steps = r * f.abs_degree() as usize;
        if p == 2 {
            let mut acc = rem(f, a, m);
            let mut cur = acc.clone();
            for _ in 1..steps {
                cur = mulmod(f, &cur, &cur, m);
                acc = add(f, &acc, &cur);
            }
            acc
        } else {
            let h = powmod(f, a, (p - 1) / 2, m);
            let mut acc = h.clone();
            let mut cur = h;
            for _ in 1..steps {
                cur = powmod(f, &cur, p, m);
                acc = mulmod(f, &acc, &cur, m);
            }
            acc
        }
    }

    /// Rabin-style irreducibility test.
    pub fn is_irreducible<F: FieldLike>(f: &F, a: &[F::E]) -> bool {
        let a = monic(f, a);
        let n = match deg(&a) {
            None | Some(0) => return false,
            Some(n) => n,
        };
        if n == 1 {
            return true;
        }
        let x = vec![f.zero(), f.one()];
        let mut h = rem(f, &x, &a);
        for _ in 1..=n / 2 {
            h = pow_q_iter(f, &h, 1, &a);
            let g = gcd(f, &sub(f, &h, &x), &a);
            if g.len() > 1 {
                return false;
            }
        }
        true
    }

    /// Square-free decomposition: list of (square-free factor, multiplicity).
    pub fn squarefree<F: FieldLike>(f: &F, a: &[F::E]) -> Vec<(Vec<F::E>, usize)> {
        let a = monic(f, a);
        let mut out = Vec::new();
        if a.len() <= 1 {
            return out;
        }
        let p = f.char_p() as usize;
        let da = derivative(f, &a);
        let mut c = gcd(f, &a, &da);
        let mut w = divrem(f, &a, &c).0;
        let mut i = 1;
        while w.len() > 1 {
            let y = gcd(f, &w, &c);
            let fac = divrem(f, &w, &y).0;
            if fac.len() > 1 {
                out.push((monic(f, &fac), i));
            }
            w = y;
            c = divrem(f, &c, &w).0;
            i += 1;
        }
        if c.len() > 1 {
            let root: Vec<F::E> = c.iter().step_by(p).map(|x| f.pth_root(x)).collect();
            for (g, m) in squarefree(f, &root) {
                out.push((g, m * p));
            }
        }
        out
    }

    /// Distinct-degree factorization of a monic square-free polynomial.
    pub fn ddf<F: FieldLike>(f: &F, a: &[F::E]) -> Vec<(Vec<F::E>, usize)> {
        let mut out = Vec::new();
        let mut rest = monic(f, a);
        let x = vec![f.zero(), f.one()];
        let mut h = rem(f, &x, &rest);
        let mut r = 0;
        while rest.len() > 1 {
            r += 1;
            if 2 * r > rest.len() - 1 {
                out.push((rest.clone(), rest.len() - 1));
                break;
            }
            h = pow_q_iter(f, &h, 1, &rest);
            let g = gcd(f, &sub(f, &h, &x), &rest);
            if g.len() > 1 {
                rest = divrem(f, &rest, &g).0;
                h = rem(f, &h, &rest);
                out.push((g, r));
            }
        }
        out
    }

    /// Equal-degree splitting of a product of distinct irreducibles of degree r.
    pub fn edf<F: FieldLike>(f: &F, a: &[F::E], r: usize, rng: &mut Rng64) -> Vec<Vec<F::E>> {
        let a = monic(f, a);
        let n = a.len() - 1;
        if n == r {
            return vec![a];
        }
        loop {
            let t: Vec<F::E> = trim(f, (0..n).map(|_| f.frandom(rng)).collect());
            if t.len() <= 1 {
                continue;
            }
            let mut s = splitter(f, &t, r, &a);
            if f.char_p() != 2 {
                s = sub(f, &s, &[f.one()]);
            }
            let g = gcd(f, &s, &a);
            if g.len() > 1 && g.len() < a.len() {
                let h = divrem(f, &a, &g).0;
                let mut out = edf(f, &g, r, rng);
                out.extend(edf(f, &h, r, rng));
                return out;
            }
        }
    }

    /// Full factorization into monic irreducibles with multiplicities,
    /// sorted by (degree, coefficients low-first).
    pub fn factor<F: FieldLike>(f: &F, a: &[F::E], rng: &mut Rng64) -> Vec<(Vec<F::E>, usize)>
    where
        F::E: Ord,
    {
        let mut out = Vec::new();
        for (sf, m) in squarefree(f, a) {
            for (g, r) in ddf(f, &sf) {
                for h in edf(f, &g, r, rng) {
                    out.push((h, m));
                }
            }
        }
        out.sort_by(|x, y| x.0.len().cmp(&y.0.len()).then_with(|| x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
        out
    }

    /// All roots of a in F.
    pub fn roots<F: FieldLike>(f: &F, a: &[F::E], rng: &mut Rng64) -> Vec<F::E> {
        let a = monic(f, a);
        if a.len() <= 1 {
            return Vec::new();
        }
        let x = vec![f.zero(), f.one()];
        let h = pow_q_iter(f, &x, 1, &a);
        let g = gcd(f, &sub(f, &h, &x), &a);
        if g.len() <= 1 {
            return Vec::new();
        }
        edf(f, &g, 1, rng).into_iter().map(|lin| f.fsub(&f.zero(), &lin[0])).collect()
    }
}

/// Polynomial over a `FieldCtx`, coefficients low degree first.
#[derive(Clone, PartialEq, Eq)]
pub struct Poly {
    pub ctx: FieldCtx,
    pub coeffs: Vec<u64>,
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match (i, c) {
                (0, _) => write!(f, "{}", c)?,
                (1, 1) => write!(f, "x")?,
                (1, _) => write!(f, "{}x", c)?,
                (_, 1) => write!(f, "x^{}", i)?,
                _ => write!(f, "{}x^{}", c, i)?,
            }
        }
        Ok(())
    }
}

impl Poly {
    pub fn new(ctx: &FieldCtx, coeffs: Vec<u64>) -> Poly {
        let q = ctx.q();
        let c = coeffs.into_iter().map(|x| x % q).collect();
        Poly { ctx: ctx.clone(), coeffs: upoly::trim(ctx, c) }
    }
    pub fn from_ints(ctx: &FieldCtx, coeffs: &[i64]) -> Poly {
        Poly::new(ctx, coeffs.iter().map(|&c| ctx.from_int(c)).collect())
    }
    pub fn zero(ctx: &FieldCtx) -> Poly {
        Poly { ctx: ctx.clone(), coeffs: Vec::new() }
    }
    pub fn one(ctx: &FieldCtx) -> Poly {
        Poly::new(ctx, vec![1])
    }
    pub fn x(ctx: &FieldCtx) -> Poly {
        Poly::new(ctx, vec![0, 1])
    }
    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
    pub fn degree(&self) -> Option<usize> {
        upoly::deg(&self.coeffs)
    }
    pub fn deg(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }
    pub fn coeff(&self, i: usize) -> u64 {
        self.coeffs.get(i).copied().unwrap_or(0)
    }
    pub fn lead(&self) -> u64 {
        self.coeffs.last().copied().unwrap_or(0)
    }
    fn wrap(&self, c: Vec<u64>) -> Poly {
        Poly { ctx: self.ctx.clone(), coeffs: c }
    }
    pub fn add(&self, o: &Poly) -> Poly {
        self.wrap(upoly::add(&self.ctx, &self.coeffs, &o.coeffs))
    }
    pub fn sub(&self, o: &Poly) -> Poly {
        self.wrap(upoly::sub(&self.ctx, &self.coeffs, &o.coeffs))
    }
    pub fn mul(&self, o: &Poly) -> Poly {
        self.wrap(upoly::mul(&self.ctx, &self.coeffs, &o.coeffs))
    }
    pub fn scale(&self, c: u64) -> Poly {
        self.wrap(upoly::scale(&self.ctx, &self.coeffs, c))
    }
    pub fn pow(&self, e: usize) -> Poly {
        let mut r = Poly::one(&self.ctx);
        for _ in 0..e {
            r = r.mul(self);
        }
        r
    }
    pub fn divrem(&self, o: &Poly) -> (Poly, Poly) {
        let (q, r) = upoly::divrem(&self.ctx, &self.coeffs, &o.coeffs);
        (self.wrap(q), self.wrap(r))
    }
    pub fn rem(&self, o: &Poly) -> Poly {
        self.divrem(o).1
    }
    pub fn gcd(&self, o: &Poly) -> Poly {
        self.wrap(upoly::gcd(&self.ctx, &self.coeffs, &o.coeffs))
    }
    pub fn monic(&self) -> Poly {
        self.wrap(upoly::monic(&self.ctx, &self.coeffs))
    }
    pub fn eval(&self, x: u64) -> u64 {
        upoly::eval(&self.ctx, &self.coeffs, &x)
    }
    pub fn derivative(&self) -> Poly {
        self.wrap(upoly::derivative(&self.ctx, &self.coeffs))
    }
    pub fn is_irreducible(&self) -> bool {
        upoly::is_irreducible(&self.ctx, &self.coeffs)
    }
    /// Apply the Frobenius power t to every coefficient.
    pub fn frob(&self, t: u32) -> Poly {
        self.wrap(self.coeffs.iter().map(|&c| self.ctx.frob(c, t)).collect())
    }
    /// Lexicographic key with coefficients compared low degree first.
    pub fn sort_key(&self) -> (usize, Vec<u64>) {
        (self.coeffs.len(), self.coeffs.clone())
    }
}

/// Factor a nonzero polynomial into monic irreducibles with multiplicities.
/// Las Vegas: the seed only affects running time, never the output.
pub fn poly_factor(f: &Poly) -> Result<Vec<(Poly, usize)>> {
    poly_factor_seeded(f, 0x9e37_79b9_7f4a_7c15)
}

pub fn poly_factor_seeded(f: &Poly, seed: u64) -> Result<Vec<(Poly, usize)>> {
    if f.is_zero() {
        return Err(Error::ZeroPoly);
    }
    let mut r = rng(seed);
    Ok(upoly::factor(&f.ctx, &f.coeffs, &mut r).into_iter().map(|(g, m)| (Poly { ctx: f.ctx.clone(), coeffs: g }, m)).collect())
}

/// Roots of f in the field `ext`, which must be f's own field or an
/// extension of the prime field f lives over.
/// Uniformly random monic irreducible polynomial of the given degree.
pub fn random_irreducible(ctx: &FieldCtx, deg: usize, r: &mut Rng64) -> Poly {
    assert!(deg >= 1);
    loop {
        let mut c: Vec<u64> = (0..deg).map(|_| r.gen_range(0..ctx.q())).collect();
        c.push(1);
        let f = Poly::new(ctx, c);
        if f.is_irreducible() {
            return f;
        }
    }
}

pub fn poly_roots(f: &Poly, ext: &FieldCtx) -> Result<Vec<u64>> {
    if f.is_zero() {
        return Err(Error::ZeroPoly);
    }
    let embedded: Vec<u64> = if ext == &f.ctx {
        f.coeffs.clone()
    } else if f.ctx.is_prime_field() && ext.p() == f.ctx.p() {
        f.coeffs.clone()
    } else {
        return Err(Error::FieldMismatch);
    };
    let mut r = rng(0x5eed);
    let mut out = upoly::roots(ext, &embedded, &mut r);
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primes() {
        assert!(is_prime(2) && is_prime(3) && is_prime(1_000_000_007));
        assert!(!is_prime(1) && !is_prime(4) && !is_prime(561));
        assert!(is_prime((1 << 61) - 1));
    }

    #[test]
    fn make_fields() {
        let f = field_make(5, 1, 0).unwrap();
        assert_eq!(f.q(), 5);
        assert!(f.modulus().is_none());
        assert_eq!(field_make(4, 1, 0), Err(Error::NotPrime(4)));
        let g = field_make(3, 2, 7).unwrap();
        assert_eq!(g.q(), 9);
        let m = g.modulus().unwrap().to_vec();
        // no root over GF(3)
        let f3 = FieldCtx::prime(3).unwrap();
        for x in 0..3 {
            assert_ne!(upoly::eval(&f3, &m, &x), 0);
        }
    }

    fn check_axioms(f: &FieldCtx, seed: u64) {
        let mut r = rng(seed);
        for _ in 0..1000 {
            let (a, b, c) = (f.random(&mut r), f.random(&mut r), f.random(&mut r));
            assert_eq!(f.add(a, b), f.add(b, a));
            assert_eq!(f.mul(a, b), f.mul(b, a));
            assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
            assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
            assert_eq!(f.add(a, f.neg(a)), 0);
            if a != 0 {
                assert_eq!(f.mul(a, f.inv(a)), 1);
            }
        }
    }

    #[test]
    fn field_axioms() {
        check_axioms(&field_make(7, 1, 0).unwrap(), 1);
        check_axioms(&field_make(2, 5, 0).unwrap(), 2);
        check_axioms(&field_make(3, 4, 0).unwrap(), 3);
        check_axioms(&field_make((1 << 61) - 1, 1, 0).unwrap(), 4);
        // no tables: q > 2^22
        check_axioms(&field_make(101, 4, 1).unwrap(), 5);
    }

    #[test]
    fn frobenius_order() {
        for (p, k) in [(2, 3), (3, 2), (3, 4), (5, 3)] {
            let f = field_make(p, k, 11).unwrap();
            let mut r = rng(3);
            for _ in 0..50 {
                let a = f.random(&mut r);
                let b = f.random(&mut r);
                assert_eq!(f.frob(f.mul(a, b), 1), f.mul(f.frob(a, 1), f.frob(b, 1)));
                assert_eq!(f.frob(f.add(a, b), 1), f.add(f.frob(a, 1), f.frob(b, 1)));
                assert_eq!(f.frob(a, k), a);
            }
            // order exactly k: some element moves under every smaller power
            for t in 1..k {
                assert!(f.elements().any(|a| f.frob(a, t) != a));
            }
        }
    }

    #[test]
    fn factor_examples() {
        let f3 = FieldCtx::prime(3).unwrap();
        let a = Poly::from_ints(&f3, &[1, 0, 1, 1, 1]);
        let fac = poly_factor(&a).unwrap();
        assert_eq!(fac, vec![(a.clone(), 1)]);
        let f5 = FieldCtx::prime(5).unwrap();
        let x2 = Poly::from_ints(&f5, &[0, 0, 1]);
        assert_eq!(poly_factor(&x2).unwrap(), vec![(Poly::x(&f5), 2)]);
        assert_eq!(poly_factor(&Poly::zero(&f5)), Err(Error::ZeroPoly));
    }

    #[test]
    fn x4_plus_1_mod_5_against_quadratic_scan() {
        let f5 = FieldCtx::prime(5).unwrap();
        let f = Poly::from_ints(&f5, &[1, 0, 0, 0, 1]);
        let fac = poly_factor(&f).unwrap();
        let mut prod = Poly::one(&f5);
        for (g, m) in &fac {
            assert!(g.is_irreducible());
            prod = prod.mul(&g.pow(*m));
        }
        assert_eq!(prod, f);
        // brute force: monic quadratic divisors
        let mut quad = Vec::new();
        for b in 0..5 {
            for c in 0..5 {
                let g = Poly::new(&f5, vec![c, b, 1]);
                if f.rem(&g).is_zero() {
                    quad.push(g);
                }
            }
        }
        // x^4+1 = (x^2+2)(x^2+3) over GF(5); both irreducible
        assert_eq!(quad.len(), 2);
        assert_eq!(fac.len(), 2);
        for (g, _) in &fac {
            assert!(quad.contains(g));
        }
    }

    #[test]
    fn factor_round_trip_random() {
        let mut r = rng(99);
        for (p, k) in [(2, 1), (3, 1), (2, 2), (3, 2), (7, 1), (5, 2)] {
            let f = field_make(p, k, 1).unwrap();
            for _ in 0..20 {
                let n = r.gen_range(1..9);
                let mut c: Vec<u64> = (0..=n).map(|_| f.random(&mut r)).collect();
                c[n] = f.random_nonzero(&mut r);
                // force repeated factors sometimes
                let mut g = Poly::new(&f, c);
                if r.gen_bool(0.5) {
                    g = g.mul(&g.rem(&Poly::new(&f, vec![1, 1, 1])).add(&Poly::x(&f)));
                }
                if g.is_zero() {
                    continue;
                }
                let fac = poly_factor(&g).unwrap();
                let mut prod = Poly::one(&f);
                for (h, m) in &fac {
                    assert!(h.is_irreducible(), "{:?}", h);
                    prod = prod.mul(&h.pow(*m));
                }
                assert_eq!(prod, g.monic());
            }
        }
    }

    #[test]
    fn roots_examples() {
        let f3 = FieldCtx::prime(3).unwrap();
        let f9 = field_make(3, 2, 4).unwrap();
        let a = Poly::from_ints(&f3, &[1, 0, 1]);
        let r9 = poly_roots(&a, &f9).unwrap();
        assert_eq!(r9.len(), 2);
        let scan: Vec<u64> = f9.elements().filter(|&x| f9.add(f9.mul(x, x), 1) == 0).collect();
        assert_eq!(r9, scan);
        assert!(poly_roots(&a, &f3).unwrap().is_empty());
        let f7 = FieldCtx::prime(7).unwrap();
        assert_eq!(poly_roots(&Poly::from_ints(&f7, &[-1, 1]), &f7).unwrap(), vec![1]);
        assert_eq!(poly_roots(&a, &f7), Err(Error::FieldMismatch));
    }

    #[test]
    fn ext_field_roots() {
        let f3 = FieldCtx::prime(3).unwrap();
        // two different irreducible quartics define the same GF(81)
        let a = [1u64, 0, 1, 1, 1];
        let b = [2u64, 0, 2, 0, 1];
        let l = ExtField::new(&f3, &a);
        let mut r = rng(1);
        let bl: Vec<Vec<u64>> = b.iter().map(|&c| l.from_prime(c)).collect();
        let rts = upoly::roots(&l, &bl, &mut r);
        assert_eq!(rts.len(), 4);
        for t in &rts {
            assert!(l.fis_zero(&upoly::eval(&l, &bl, t)));
        }
    }
}
