//! Countable dense subsets of the real line as explicit enumerations.
//!
//! Values are exact rationals; indices are arbitrary-precision because the
//! smallest-index element of a narrow interval can sit very deep in the
//! enumeration. The `cap` argument of [`Enumeration::find_in_interval`] bounds
//! that depth: tree depth in bits for Calkin-Wilf, level for dyadics, and the
//! number of scanned entries for explicit lists.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SEARCH_CAP: usize = 4096;

/// Descriptor of an enumerated set, as it appears in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SetKind {
    SignedCalkinWilf,
    Dyadic,
    AffineImage {
        base: Box<SetKind>,
        scale: f64,
        shift: f64,
    },
    ExplicitList {
        values: Vec<f64>,
    },
}

impl SetKind {
    /// Whether the kind is guaranteed to meet every open interval.
    pub fn is_dense(&self) -> bool {
        match self {
            SetKind::SignedCalkinWilf | SetKind::Dyadic => true,
            SetKind::AffineImage { base, .. } => base.is_dense(),
            SetKind::ExplicitList { .. } => false,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SetKind::SignedCalkinWilf | SetKind::Dyadic => Ok(()),
            SetKind::AffineImage { base, scale, shift } => {
                if *scale == 0.0 || !scale.is_finite() || !shift.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "affine image needs finite nonzero scale and finite shift, got {scale}, {shift}"
                    )));
                }
                base.validate()
            }
            SetKind::ExplicitList { values } => {
                let mut seen = BTreeSet::new();
                for &v in values {
                    let r = exact(v)?;
                    if !seen.insert(r) {
                        return Err(Error::InvalidInput(format!("explicit list repeats {v}")));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn nth(&self, n: &BigUint) -> Result<BigRational> {
        if n.is_zero() {
            return Err(Error::InvalidInput("enumeration indices start at 1".into()));
        }
        match self {
            SetKind::SignedCalkinWilf => Ok(signed_cw_nth(n)),
            SetKind::Dyadic => Ok(dyadic_nth(n)),
            SetKind::AffineImage { base, scale, shift } => {
                Ok(base.nth(n)? * exact(*scale)? + exact(*shift)?)
            }
            SetKind::ExplicitList { values } => {
                let i = n
                    .to_usize()
                    .filter(|&i| i <= values.len())
                    .ok_or_else(|| Error::IndexOutOfRange {
                        index: n.to_string(),
                        len: values.len(),
                    })?;
                exact(values[i - 1])
            }
        }
    }

    /// Index of `v` if it belongs to the set.
    pub fn index_of(&self, v: &BigRational) -> Option<BigUint> {
        self.index_within(v, usize::MAX)
    }

    /// Index of `v` if it belongs to the set at depth at most `cap`.
    pub fn index_within(&self, v: &BigRational, cap: usize) -> Option<BigUint> {
        match self {
            SetKind::SignedCalkinWilf => {
                (v.is_zero() || cw_depth(&v.abs()) <= BigInt::from(cap)).then(|| signed_cw_index(v))
            }
            SetKind::Dyadic => dyadic_level(v).filter(|&m| m <= cap).and_then(|_| dyadic_index(v)),
            SetKind::AffineImage { base, scale, shift } => {
                let (s, t) = (exact(*scale).ok()?, exact(*shift).ok()?);
                base.index_within(&((v - t) / s), cap)
            }
            SetKind::ExplicitList { values } => values
                .iter()
                .position(|&x| exact(x).map(|r| &r == v).unwrap_or(false))
                .map(|i| BigUint::from(i + 1)),
        }
    }

    /// Smallest-index member of the open interval `(lo, hi)`.
    fn min_in_open(&self, lo: &BigRational, hi: &BigRational, cap: usize) -> Result<Option<(BigUint, BigRational)>> {
        match self {
            SetKind::SignedCalkinWilf => signed_cw_min(lo, hi, cap).map(Some),
            SetKind::Dyadic => dyadic_min(lo, hi, cap).map(Some),
            SetKind::AffineImage { base, scale, shift } => {
                let (s, t) = (exact(*scale)?, exact(*shift)?);
                let a = (lo - &t) / &s;
                let b = (hi - &t) / &s;
                let (a, b) = if s.is_negative() { (b, a) } else { (a, b) };
                Ok(base
                    .min_in_open(&a, &b, cap)?
                    .map(|(i, v)| (i, v * &s + &t)))
            }
            SetKind::ExplicitList { values } => {
                for (i, &x) in values.iter().enumerate().take(cap) {
                    let r = exact(x)?;
                    if &r > lo && &r < hi {
                        return Ok(Some((BigUint::from(i + 1), r)));
                    }
                }
                if values.len() > cap {
                    Err(Error::CapExceeded(format!("explicit list scan beyond {cap} entries")))
                } else {
                    Ok(None)
                }
            }
        }
    }
}

/// Exact rational value of a finite binary64 number.
pub fn exact(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or(Error::NonFiniteSample { re: x, im: 0.0 })
}

/// Correctly rounded binary64 value of a rational.
pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementRef {
    pub index: BigUint,
    pub value: BigRational,
}

impl ElementRef {
    pub fn value_f64(&self) -> f64 {
        to_f64(&self.value)
    }
}

/// An enumerated set together with the indices consumed so far.
#[derive(Clone, Debug)]
pub struct Enumeration {
    kind: SetKind,
    used: BTreeSet<BigUint>,
}

impl Enumeration {
    pub fn new(kind: SetKind) -> Result<Self> {
        kind.validate()?;
        Ok(Self {
            kind,
            used: BTreeSet::new(),
        })
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn nth(&self, n: &BigUint) -> Result<BigRational> {
        self.kind.nth(n)
    }

    pub fn nth_u64(&self, n: u64) -> Result<BigRational> {
        self.kind.nth(&BigUint::from(n))
    }

    pub fn index_of(&self, v: &BigRational) -> Option<BigUint> {
        self.kind.index_of(v)
    }

    pub fn index_within(&self, v: &BigRational, cap: usize) -> Option<BigUint> {
        self.kind.index_within(v, cap)
    }

    pub fn is_used(&self, index: &BigUint) -> bool {
        self.used.contains(index)
    }

    pub fn used(&self) -> &BTreeSet<BigUint> {
        &self.used
    }

    pub fn mark_used(&mut self, index: BigUint) {
        self.used.insert(index);
    }

    /// Smallest unused index. Does not mark it.
    pub fn first_unused(&self) -> Result<ElementRef> {
        let mut n = BigUint::one();
        for u in &self.used {
            if *u != n {
                break;
            }
            n += 1u32;
        }
        if let SetKind::ExplicitList { values } = &self.kind {
            if n > BigUint::from(values.len()) {
                return Err(Error::Exhausted);
            }
        }
        let value = self.kind.nth(&n)?;
        Ok(ElementRef { index: n, value })
    }

    /// Smallest-index member of `(lo, hi)` whose value is not in `exclude`.
    pub fn find_in_interval(
        &self,
        lo: &BigRational,
        hi: &BigRational,
        exclude: &BTreeSet<BigRational>,
        cap: usize,
    ) -> Result<ElementRef> {
        if lo >= hi {
            return Err(Error::DegenerateInterval {
                lo: to_f64(lo),
                hi: to_f64(hi),
            });
        }
        // The excluded points split the interval into open pieces; the answer
        // is the best of the per-piece minima.
        let mut cuts = vec![lo.clone()];
        cuts.extend(exclude.iter().filter(|v| *v > lo && *v < hi).cloned());
        cuts.push(hi.clone());
        let mut best: Option<(BigUint, BigRational)> = None;
        let mut overflow = None;
        for w in cuts.windows(2) {
            match self.kind.min_in_open(&w[0], &w[1], cap) {
                Ok(Some((i, v))) => {
                    if best.as_ref().map_or(true, |(b, _)| i < *b) {
                        best = Some((i, v));
                    }
                }
                Ok(None) => {}
                Err(e @ Error::CapExceeded(_)) => overflow = Some(e),
                Err(e) => return Err(e),
            }
        }
        // A capped piece could hide a smaller index only if nothing was found.
        match (best, overflow) {
            (Some((index, value)), _) => Ok(ElementRef { index, value }),
            (None, Some(e)) => Err(e),
            (None, None) => Err(Error::CapExceeded("no member of the set in the interval".into())),
        }
    }
}

#[cfg(test)]
fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

// ---- Calkin-Wilf ----

/// The Calkin-Wilf sequence: 1, 1/2, 2, 1/3, 3/2, 2/3, 3, ...
pub fn cw_nth(k: &BigUint) -> BigRational {
    let (mut a, mut b) = (BigInt::one(), BigInt::one());
    let bits = k.bits();
    for i in (0..bits.saturating_sub(1)).rev() {
        if k.bit(i) {
            a += &b;
        } else {
            b += &a;
        }
    }
    BigRational::new(a, b)
}

/// Calkin-Wilf runs of `p/q > 0` from the node upward, as (bit, length).
fn cw_runs(v: &BigRational) -> Vec<(bool, BigInt)> {
    let (mut p, mut q) = (v.numer().clone(), v.denom().clone());
    let mut runs = Vec::new();
    while p != q {
        if p < q {
            let k = (&q - 1u32) / &p;
            q -= &k * &p;
            runs.push((false, k));
        } else {
            let k = (&p - 1u32) / &q;
            p -= &k * &q;
            runs.push((true, k));
        }
    }
    runs
}

fn cw_depth(v: &BigRational) -> BigInt {
    cw_runs(v).into_iter().map(|(_, k)| k).sum()
}

pub fn cw_index(v: &BigRational) -> BigUint {
    let mut idx = BigUint::one();
    for (bit, k) in cw_runs(v).into_iter().rev() {
        let k = k.to_usize().expect("run length checked against cap");
        idx <<= k;
        if bit {
            idx += (BigUint::one() << k) - 1u32;
        }
    }
    idx
}

fn signed_cw_nth(n: &BigUint) -> BigRational {
    if n.is_one() {
        return BigRational::zero();
    }
    let (k, odd) = n.div_rem(&BigUint::from(2u32));
    let v = cw_nth(&k);
    if odd.is_zero() {
        v
    } else {
        -v
    }
}

fn signed_cw_index(v: &BigRational) -> BigUint {
    if v.is_zero() {
        return BigUint::one();
    }
    let base = cw_index(&v.abs()) << 1usize;
    if v.is_negative() {
        base + 1u32
    } else {
        base
    }
}

/// Simplest rational (least denominator, then least numerator) in `(lo, hi)`
/// with `0 <= lo < hi`; `hi = None` stands for infinity.
fn simplest_positive(lo: &BigRational, hi: Option<&BigRational>) -> BigRational {
    // Continued-fraction descent: accumulate partial quotients, then fold.
    let mut quotients: Vec<BigInt> = Vec::new();
    let mut lo = lo.clone();
    let mut hi = hi.cloned();
    loop {
        let fl = lo.floor().to_integer();
        let next = &fl + BigInt::one();
        let next_r = BigRational::from_integer(next.clone());
        if hi.as_ref().map_or(true, |h| next_r < *h) {
            quotients.push(next);
            break;
        }
        let flr = BigRational::from_integer(fl.clone());
        let h = hi.expect("finite upper end here");
        let new_lo = (&h - &flr).recip();
        let new_hi = if lo == flr { None } else { Some((&lo - &flr).recip()) };
        quotients.push(fl);
        lo = new_lo;
        hi = new_hi;
    }
    let mut acc = BigRational::from_integer(quotients.pop().expect("nonempty"));
    while let Some(q) = quotients.pop() {
        acc = BigRational::from_integer(q) + acc.recip();
    }
    acc
}

fn signed_cw_min(lo: &BigRational, hi: &BigRational, cap: usize) -> Result<(BigUint, BigRational)> {
    let zero = BigRational::zero();
    let v = if lo < &zero && hi > &zero {
        return Ok((BigUint::one(), zero));
    } else if lo >= &zero {
        simplest_positive(lo, Some(hi))
    } else {
        -simplest_positive(&-hi, Some(&-lo))
    };
    let depth = cw_depth(&v.abs());
    if depth > BigInt::from(cap) {
        return Err(Error::CapExceeded(format!(
            "Calkin-Wilf depth {depth} exceeds cap {cap}"
        )));
    }
    Ok((signed_cw_index(&v), v))
}

// ---- Dyadic rationals ----
//
// Level m holds the points of 2^-m Z with |v| <= m + 1 that are not already in
// level m - 1. Within a level, order is by |v| with the positive value first.

fn pow2(m: usize) -> BigInt {
    BigInt::one() << m
}

fn level_count(m: usize) -> BigUint {
    if m == 0 {
        BigUint::from(3u32)
    } else {
        BigUint::from(m + 2) << m
    }
}

/// Number of elements in levels below `m`.
fn levels_before(m: usize) -> BigUint {
    if m == 0 {
        BigUint::zero()
    } else {
        (BigUint::from(m) << m) + 1u32
    }
}

/// Positive numerators `j` (value `j / 2^m`) belonging to level `m >= 1`,
/// counted below `j`.
fn positive_rank(m: usize, j: &BigInt) -> BigInt {
    let inner = BigInt::from(m) << m;
    if j <= &inner {
        (j - 1) / 2
    } else {
        (BigInt::from(m) << (m - 1)) + (j - inner - 1)
    }
}

fn positive_at_rank(m: usize, r: &BigInt) -> BigInt {
    let odd_count = BigInt::from(m) << (m - 1);
    if r < &odd_count {
        2 * r + 1
    } else {
        (BigInt::from(m) << m) + (r - odd_count) + 1
    }
}

fn level_member(m: usize, j: &BigInt) -> bool {
    let a = j.abs();
    if a.is_zero() || a > (BigInt::from(m + 1) << m) {
        return false;
    }
    m == 0 || a.is_odd() || a > (BigInt::from(m) << m)
}

fn dyadic_nth(n: &BigUint) -> BigRational {
    let mut rem = n - 1u32;
    if rem.is_zero() {
        return BigRational::zero();
    }
    rem -= 1u32;
    let mut m = 0usize;
    loop {
        let c = if m == 0 { BigUint::from(2u32) } else { level_count(m) };
        if rem < c {
            break;
        }
        rem -= c;
        m += 1;
    }
    let rem = BigInt::from(rem);
    let (r, neg) = rem.div_rem(&BigInt::from(2));
    let j = if m == 0 { BigInt::one() } else { positive_at_rank(m, &r) };
    let j = if neg.is_zero() { j } else { -j };
    BigRational::new(j, pow2(m))
}

fn dyadic_level(v: &BigRational) -> Option<usize> {
    let d = v.denom();
    if d.is_zero() || (d & (d - 1u32)) != BigInt::zero() {
        return None;
    }
    let m0 = (d.bits() - 1) as usize;
    let c = v.abs().ceil().to_integer();
    let from_size = (c - BigInt::one()).max(BigInt::zero()).to_usize()?;
    Some(m0.max(from_size))
}

fn dyadic_index(v: &BigRational) -> Option<BigUint> {
    if v.is_zero() {
        return Some(BigUint::one());
    }
    let m = dyadic_level(v)?;
    let j = (v * BigRational::from_integer(pow2(m))).to_integer();
    let rank = if m == 0 { BigInt::zero() } else { positive_rank(m, &j.abs()) };
    let pos: BigInt = 2 * rank + if v.is_negative() { 1 } else { 0 };
    let offset = if m == 0 { BigUint::one() } else { levels_before(m) };
    Some(BigUint::one() + offset + pos.to_biguint()?)
}

fn dyadic_min(lo: &BigRational, hi: &BigRational, cap: usize) -> Result<(BigUint, BigRational)> {
    let zero = BigRational::zero();
    if lo < &zero && hi > &zero {
        return Ok((BigUint::one(), zero));
    }
    for m in 0..=cap {
        let scale = BigRational::from_integer(pow2(m));
        // Strictly inside (lo, hi) on the 2^-m grid.
        let jlo = (lo * &scale).floor().to_integer() + BigInt::one();
        let jhi = (hi * &scale).ceil().to_integer() - BigInt::one();
        if jlo > jhi {
            continue;
        }
        // All candidates share a sign, so the smallest |j| member wins.
        let ascending = jlo.is_positive();
        let mut j = if ascending { jlo.clone() } else { jhi.clone() };
        let mut steps = 0;
        while j >= jlo && j <= jhi && steps < 4 {
            if level_member(m, &j) {
                let v = BigRational::new(j, pow2(m));
                let idx = dyadic_index(&v).expect("level member is dyadic");
                return Ok((idx, v));
            }
            j = if ascending { j + 1 } else { j - 1 };
            steps += 1;
        }
    }
    Err(Error::CapExceeded(format!("dyadic level cap {cap} reached")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ix(n: u64) -> BigUint {
        BigUint::from(n)
    }

    fn dyadic() -> Enumeration {
        Enumeration::new(SetKind::Dyadic).unwrap()
    }

    fn cw() -> Enumeration {
        Enumeration::new(SetKind::SignedCalkinWilf).unwrap()
    }

    #[test]
    fn signed_cw_prefix() {
        let e = cw();
        let got: Vec<_> = (1..=8).map(|n| e.nth_u64(n).unwrap()).collect();
        let want = vec![rat(0, 1), rat(1, 1), rat(-1, 1), rat(1, 2), rat(-1, 2), rat(2, 1), rat(-2, 1), rat(1, 3)];
        assert_eq!(got, want);
    }

    #[test]
    fn dyadic_prefix() {
        let e = dyadic();
        let got: Vec<_> = (1..=12).map(|n| e.nth_u64(n).unwrap()).collect();
        let want = vec![
            rat(0, 1),
            rat(1, 1),
            rat(-1, 1),
            rat(1, 2),
            rat(-1, 2),
            rat(3, 2),
            rat(-3, 2),
            rat(2, 1),
            rat(-2, 1),
            rat(1, 4),
            rat(-1, 4),
            rat(3, 4),
        ];
        assert_eq!(got, want);
    }

    /// Brute-force oracle: build each level by filtering a grid and sorting.
    fn dyadic_brute(levels: usize) -> Vec<BigRational> {
        let mut out = vec![rat(0, 1), rat(1, 1), rat(-1, 1)];
        for m in 1..=levels {
            let d = 1i64 << m;
            let mut lvl: Vec<BigRational> = Vec::new();
            for k in -((m as i64 + 1) * d)..=((m as i64 + 1) * d) {
                let v = rat(k, d);
                let prev = v.denom() < &BigInt::from(d) && v.abs() <= rat(m as i64, 1);
                if !prev && !v.is_zero() {
                    lvl.push(v);
                }
            }
            lvl.sort_by(|a, b| a.abs().cmp(&b.abs()).then(b.cmp(a)));
            out.extend(lvl);
        }
        out
    }

    #[test]
    fn dyadic_matches_brute_force() {
        let e = dyadic();
        for (i, v) in dyadic_brute(6).iter().enumerate() {
            let n = ix(i as u64 + 1);
            assert_eq!(&e.nth(&n).unwrap(), v, "index {n}");
            assert_eq!(e.index_of(v), Some(n));
        }
    }

    #[test]
    fn affine_image_shift() {
        let root2 = std::f64::consts::SQRT_2;
        let e = Enumeration::new(SetKind::AffineImage {
            base: Box::new(SetKind::Dyadic),
            scale: 1.0,
            shift: root2,
        })
        .unwrap();
        assert_eq!(e.nth_u64(2).unwrap(), rat(1, 1) + exact(root2).unwrap());
        assert!(e.kind().is_dense());
        assert!(Enumeration::new(SetKind::AffineImage {
            base: Box::new(SetKind::Dyadic),
            scale: 0.0,
            shift: 0.0
        })
        .is_err());
    }

    #[test]
    fn explicit_list_limits() {
        let mut e = Enumeration::new(SetKind::ExplicitList { values: vec![5.0] }).unwrap();
        assert!(!e.kind().is_dense());
        assert!(matches!(e.nth_u64(2), Err(Error::IndexOutOfRange { .. })));
        e.mark_used(ix(1));
        assert_eq!(e.first_unused(), Err(Error::Exhausted));
        assert!(Enumeration::new(SetKind::ExplicitList { values: vec![1.0, 1.0] }).is_err());
    }

    #[test]
    fn first_unused_examples() {
        let mut e = cw();
        assert_eq!(e.first_unused().unwrap(), ElementRef { index: ix(1), value: rat(0, 1) });
        e.mark_used(ix(1));
        e.mark_used(ix(2));
        assert_eq!(e.first_unused().unwrap(), ElementRef { index: ix(3), value: rat(-1, 1) });
        e.mark_used(ix(5));
        assert_eq!(e.first_unused().unwrap().index, ix(3));
    }

    #[test]
    fn find_examples() {
        let e = dyadic();
        let none = BTreeSet::new();
        let r = e.find_in_interval(&rat(0, 1), &rat(1, 1), &none, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(r.value, rat(1, 2));
        let r = e.find_in_interval(&rat(3, 10), &rat(4, 10), &none, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(r.value, rat(3, 8));
        assert!(matches!(
            e.find_in_interval(&rat(1, 1), &rat(1, 1), &none, DEFAULT_SEARCH_CAP),
            Err(Error::DegenerateInterval { .. })
        ));
    }

    fn scan_oracle(e: &Enumeration, lo: &BigRational, hi: &BigRational, ex: &BTreeSet<BigRational>, limit: u64) -> Option<BigRational> {
        (1..=limit)
            .map(|n| e.nth_u64(n).unwrap())
            .find(|v| v > lo && v < hi && !ex.contains(v))
    }

    #[test]
    fn find_matches_scan_with_exclusions() {
        for e in [dyadic(), cw()] {
            let cases = [(rat(1, 10), rat(9, 10)), (rat(-7, 3), rat(-1, 5)), (rat(3, 10), rat(4, 10)), (rat(-1, 2), rat(5, 2))];
            for (lo, hi) in cases {
                let mut ex = BTreeSet::new();
                for _ in 0..4 {
                    let got = e.find_in_interval(&lo, &hi, &ex, DEFAULT_SEARCH_CAP).unwrap();
                    let want = scan_oracle(&e, &lo, &hi, &ex, 20_000).unwrap();
                    assert_eq!(got.value, want);
                    assert_eq!(e.nth(&got.index).unwrap(), got.value);
                    ex.insert(got.value);
                }
            }
        }
    }

    #[test]
    fn cw_cap_is_reported() {
        let e = cw();
        let lo = rat(1, 1_000_000_000);
        let hi = rat(2, 1_000_000_000);
        assert!(matches!(
            e.find_in_interval(&lo, &hi, &BTreeSet::new(), 64),
            Err(Error::CapExceeded(_))
        ));
    }

    #[test]
    fn injective_prefixes() {
        for e in [dyadic(), cw()] {
            let vals: BTreeSet<_> = (1..=10_000).map(|n| e.nth_u64(n).unwrap()).collect();
            assert_eq!(vals.len(), 10_000);
        }
    }

    #[test]
    fn cw_coverage() {
        // The integer n sits at Calkin-Wilf position 2^n - 1, so the signed
        // index of -20 is 2^21 - 1 and the bound below is tight.
        let e = cw();
        let bound = ix((1 << 21) - 1);
        let prefix: BTreeSet<_> = (1..=100_000).map(|n| e.nth_u64(n).unwrap()).collect();
        let mut worst = BigUint::zero();
        for q in 1..=20i64 {
            for p in -20..=20i64 {
                if p.gcd(&q) != 1 && p != 0 {
                    continue;
                }
                let v = rat(p, q);
                let n = e.index_of(&v).unwrap();
                assert_eq!(e.nth(&n).unwrap(), v);
                if n <= ix(100_000) {
                    assert!(prefix.contains(&v));
                }
                worst = worst.max(n);
            }
        }
        assert_eq!(worst, bound);
        assert_eq!(e.nth(&bound).unwrap(), rat(-20, 1));
    }

    proptest! {
        #[test]
        fn index_round_trip(n in 1u64..1_000_000) {
            for e in [dyadic(), cw()] {
                let v = e.nth_u64(n).unwrap();
                prop_assert_eq!(e.index_of(&v), Some(ix(n)));
            }
        }

        #[test]
        fn find_lands_inside(a in -50.0f64..50.0, w in 1e-9f64..3.0, excl in 0usize..4) {
            let lo = exact(a).unwrap();
            let hi = exact(a + w).unwrap();
            prop_assume!(lo < hi);
            let e = dyadic();
            let mut ex = BTreeSet::new();
            for _ in 0..=excl {
                let r = e.find_in_interval(&lo, &hi, &ex, DEFAULT_SEARCH_CAP).unwrap();
                prop_assert!(r.value > lo && r.value < hi);
                prop_assert!(!ex.contains(&r.value));
                ex.insert(r.value);
            }
        }
    }
}
