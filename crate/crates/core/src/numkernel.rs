//! Polynomial and Gaussian-product evaluation, plus sampled sup-norm bounds.
//!
//! Sup bounds are carried as natural logarithms. The disk bounds used by the
//! back-and-forth engine grow like `e^{n^2}` and leave the binary64 range
//! after a few dozen steps, so every comparison against them happens in log
//! space.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAFETY: f64 = 1.25;
pub const DEFAULT_DISK_SAMPLES: usize = 4096;
pub const DEFAULT_REAL_GRID: usize = 8192;
/// Angular directions scanned by [`growth_cap`].
const GROWTH_DIRECTIONS: usize = 64;

/// Real polynomial `p(z) = sum c_k (z / scale)^k`.
///
/// The scale keeps high-degree fits on large compacts representable; with
/// `scale == 1` the coefficients are the plain monomial ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealPoly {
    coeffs: Vec<f64>,
    scale: f64,
}

impl RealPoly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self::with_scale(coeffs, 1.0)
    }

    pub fn with_scale(mut coeffs: Vec<f64>, scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite(), "scale must be positive");
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs, scale }
    }

    pub fn zero() -> Self {
        Self::new(Vec::new())
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// The identity polynomial `z`.
    pub fn identity() -> Self {
        Self::new(vec![0.0, 1.0])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, with the zero polynomial reported as 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let u = z / self.scale;
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * u + c;
        }
        acc
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        let u = x / self.scale;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    /// Value and derivative by a single Horner pass.
    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let u = z / self.scale;
        let mut val = Complex64::new(0.0, 0.0);
        let mut der = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            der = der * u + val;
            val = val * u + c;
        }
        (val, der / self.scale)
    }

    pub fn eval_real_with_derivative(&self, x: f64) -> (f64, f64) {
        let u = x / self.scale;
        let mut val = 0.0;
        let mut der = 0.0;
        for &c in self.coeffs.iter().rev() {
            der = der * u + val;
            val = val * u + c;
        }
        (val, der / self.scale)
    }

    pub fn derivative(&self) -> RealPoly {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c / self.scale)
            .collect();
        RealPoly::with_scale(coeffs, self.scale)
    }

    /// Antiderivative vanishing at the origin.
    pub fn antiderivative(&self) -> RealPoly {
        let mut coeffs = vec![0.0];
        coeffs.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c * self.scale / (k as f64 + 1.0)),
        );
        RealPoly::with_scale(coeffs, self.scale)
    }

    /// Same polynomial expressed against another scale.
    pub fn rescaled(&self, scale: f64) -> RealPoly {
        let ratio = scale / self.scale;
        let mut factor = 1.0;
        let coeffs = self
            .coeffs
            .iter()
            .map(|&c| {
                let v = c * factor;
                factor *= ratio;
                v
            })
            .collect();
        RealPoly::with_scale(coeffs, scale)
    }

    pub fn add(&self, other: &RealPoly) -> RealPoly {
        let scale = self.scale.max(other.scale);
        let a = self.rescaled(scale);
        let b = other.rescaled(scale);
        let n = a.coeffs.len().max(b.coeffs.len());
        let coeffs = (0..n)
            .map(|k| a.coeffs.get(k).copied().unwrap_or(0.0) + b.coeffs.get(k).copied().unwrap_or(0.0))
            .collect();
        RealPoly::with_scale(coeffs, scale)
    }

    /// Monomial coefficients `c_k / scale^k`. May underflow for large scales.
    pub fn monomial_coeffs(&self) -> Vec<f64> {
        let mut factor = 1.0;
        self.coeffs
            .iter()
            .map(|&c| {
                let v = c * factor;
                factor /= self.scale;
                v
            })
            .collect()
    }
}

/// Complex-coefficient polynomial in the same scaled basis as [`RealPoly`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexPoly {
    pub coeffs: Vec<Complex64>,
    pub scale: f64,
}

impl ComplexPoly {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs, scale: 1.0 }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let u = z / self.scale;
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * u + c;
        }
        acc
    }
}

pub fn poly_eval(p: &RealPoly, z: Complex64) -> Complex64 {
    p.eval(z)
}

/// `(p(z) + conj(p(conj z))) / 2`, which keeps the real part of every
/// coefficient.
pub fn poly_symmetrize(p: &ComplexPoly) -> RealPoly {
    RealPoly::with_scale(p.coeffs.iter().map(|c| c.re).collect(), p.scale)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Warp {
    Identity,
    Phi,
}

/// `e^{-w(z)^2} * prod_k (w(z) - w(root_k))` with `w` the identity or a carrier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussTerm {
    pub roots: Vec<f64>,
    pub warp: Warp,
}

impl GaussTerm {
    pub fn new(roots: Vec<f64>, warp: Warp) -> Self {
        Self { roots, warp }
    }

    /// Resolves the warp once so repeated evaluations skip re-evaluating the
    /// carrier at the roots.
    pub fn prepare<'a>(&self, phi: Option<&'a RealPoly>) -> Result<PreparedTerm<'a>> {
        let carrier = match self.warp {
            Warp::Identity => None,
            Warp::Phi => Some(phi.ok_or(Error::MissingCarrier)?),
        };
        let warped_roots = match carrier {
            None => self.roots.clone(),
            Some(p) => self.roots.iter().map(|&a| p.eval_real(a)).collect(),
        };
        Ok(PreparedTerm {
            warped_roots,
            carrier,
        })
    }
}

#[derive(Clone, Debug)]
pub struct PreparedTerm<'a> {
    warped_roots: Vec<f64>,
    carrier: Option<&'a RealPoly>,
}

impl PreparedTerm<'_> {
    fn warp(&self, z: Complex64) -> (Complex64, Complex64) {
        match self.carrier {
            None => (z, Complex64::new(1.0, 0.0)),
            Some(p) => p.eval_with_derivative(z),
        }
    }

    pub fn eval(&self, z: Complex64) -> (Complex64, Complex64) {
        let (w, dw) = self.warp(z);
        let (p, dp) = product_with_derivative(&self.warped_roots, w);
        let g = (-w * w).exp();
        (g * p, dw * g * (dp - 2.0 * w * p))
    }

    /// `ln |term(z)|`, finite even where the value itself overflows.
    pub fn ln_abs(&self, z: Complex64) -> f64 {
        let (w, _) = self.warp(z);
        -(w * w).re + ln_distance_product(&self.warped_roots, w)
    }

    /// `ln |term'(x)|` on the real line.
    pub fn ln_abs_derivative_real(&self, x: f64) -> f64 {
        let (w, dw) = self.warp(Complex64::new(x, 0.0));
        let (p, dp) = product_with_derivative(&self.warped_roots, w);
        -(w * w).re + dw.norm().ln() + (dp - 2.0 * w * p).norm().ln()
    }

    pub fn warped_roots(&self) -> &[f64] {
        &self.warped_roots
    }
}

/// `sum_k ln |z - root_k|`, taking one logarithm per batch of factors.
pub fn ln_distance_product(roots: &[f64], z: Complex64) -> f64 {
    const LIMIT: f64 = 1e150;
    let mut acc = 0.0;
    let mut prod = 1.0f64;
    for &r in roots {
        let q = (z - r).norm_sqr();
        if !(q.is_normal() && q < LIMIT && q > 1.0 / LIMIT) {
            acc += 2.0 * (z - r).norm().ln();
            continue;
        }
        let next = prod * q;
        if next < LIMIT && next > 1.0 / LIMIT {
            prod = next;
        } else {
            acc += prod.ln();
            prod = q;
        }
    }
    0.5 * (acc + prod.ln())
}

fn product_with_derivative(roots: &[f64], w: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(1.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &r in roots {
        let f = w - r;
        dp = dp * f + p;
        p *= f;
    }
    (p, dp)
}

pub fn term_eval(
    t: &GaussTerm,
    z: Complex64,
    phi: Option<&RealPoly>,
) -> Result<(Complex64, Complex64)> {
    Ok(t.prepare(phi)?.eval(z))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Complex64,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Complex64, radius: f64) -> Self {
        assert!(radius > 0.0, "disk radius must be positive");
        Self { center, radius }
    }

    pub fn centered(radius: f64) -> Self {
        Self::new(Complex64::new(0.0, 0.0), radius)
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm() <= self.radius
    }

    /// `m` equally spaced boundary points starting at angle 0.
    pub fn boundary(&self, m: usize) -> Vec<Complex64> {
        (0..m)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / m as f64;
                self.center + Complex64::from_polar(self.radius, th)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(Error::DegenerateInterval { lo, hi })
        }
    }

    pub fn symmetric(half_width: f64) -> Result<Self> {
        Self::new(-half_width, half_width)
    }

    /// `m` points including both endpoints.
    pub fn grid(&self, m: usize) -> Vec<f64> {
        assert!(m >= 2, "grid needs at least two points");
        let step = (self.hi - self.lo) / (m - 1) as f64;
        (0..m)
            .map(|k| if k == m - 1 { self.hi } else { self.lo + step * k as f64 })
            .collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// A discretized set: closed interval (endpoints included) or disk boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Grid {
    Interval { set: Interval, m: usize },
    Circle { set: Disk, m: usize },
}

impl Grid {
    pub fn points(&self) -> Vec<Complex64> {
        match *self {
            Grid::Interval { set, m } => set.grid(m).into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
            Grid::Circle { set, m } => set.boundary(m),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupMethod {
    BoundarySample,
    WindowPlusTail,
    RadialSample,
}

/// Sampled sup estimate, inflated by `safety`. Not a certified bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupBound {
    /// `ln(raw maximum * safety)`; `-inf` when every sample is zero.
    pub ln_value: f64,
    pub method: SupMethod,
    pub safety: f64,
}

impl SupBound {
    fn from_raw_ln(raw_ln: f64, method: SupMethod, safety: f64) -> Self {
        assert!(safety >= 1.0, "safety margin must be at least 1");
        Self {
            ln_value: raw_ln + safety.ln(),
            method,
            safety,
        }
    }

    pub fn value(&self) -> f64 {
        self.ln_value.exp()
    }

    pub fn raw_ln(&self) -> f64 {
        self.ln_value - self.safety.ln()
    }
}

fn max_ln<I: Iterator<Item = (Complex64, f64)>>(samples: I) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for (z, v) in samples {
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFiniteSample { re: z.re, im: z.im });
        }
        best = best.max(v);
    }
    Ok(best)
}

/// Sup of an entire function over a disk, from `ln|f|` on the boundary circle.
pub fn sup_on_disk_ln(
    ln_abs: impl Fn(Complex64) -> f64,
    d: Disk,
    m: usize,
    safety: f64,
) -> Result<SupBound> {
    if m < 64 {
        return Err(Error::InvalidInput(format!("disk sampling needs m >= 64, got {m}")));
    }
    let raw = max_ln(d.boundary(m).into_iter().map(|z| (z, ln_abs(z))))?;
    Ok(SupBound::from_raw_ln(raw, SupMethod::BoundarySample, safety))
}

pub fn sup_on_disk(
    f: impl Fn(Complex64) -> Complex64,
    d: Disk,
    m: usize,
    safety: f64,
) -> Result<SupBound> {
    sup_on_disk_ln(|z| f(z).norm().ln(), d, m, safety)
}

/// Shape of a `poly(x) e^{-x^2}` integrand: its polynomial degree and the
/// largest root modulus. Beyond `max_root + sqrt(degree + 1)` the modulus is
/// decreasing, which licenses a bounded window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianDecay {
    pub degree: usize,
    pub max_root_abs: f64,
}

impl GaussianDecay {
    pub fn required_half_width(&self) -> f64 {
        self.max_root_abs + ((self.degree + 1) as f64).sqrt()
    }
}

pub fn sup_on_real_ln(
    ln_abs: impl Fn(f64) -> f64,
    decay: GaussianDecay,
    half_width: f64,
    m: usize,
    safety: f64,
) -> Result<SupBound> {
    let required = decay.required_half_width();
    if half_width < required {
        return Err(Error::WindowTooSmall {
            window: half_width,
            required,
        });
    }
    let window = Interval::symmetric(half_width)?;
    let raw = max_ln(
        window
            .grid(m)
            .into_iter()
            .map(|x| (Complex64::new(x, 0.0), ln_abs(x))),
    )?;
    Ok(SupBound::from_raw_ln(raw, SupMethod::WindowPlusTail, safety))
}

pub fn sup_on_real(
    f: impl Fn(f64) -> f64,
    decay: GaussianDecay,
    half_width: f64,
    m: usize,
    safety: f64,
) -> Result<SupBound> {
    sup_on_real_ln(|x| f(x).abs().ln(), decay, half_width, m, safety)
}

/// `sup_z prod_k |z - root_k| e^{-|z|}` by radial sampling.
///
/// The radius is grown until the tail envelope `(max|root| + R)^deg e^{-R}`
/// is past its peak and below the sampled interior maximum.
pub fn growth_cap(roots: &[f64], m: usize, safety: f64) -> Result<SupBound> {
    if roots.is_empty() {
        return Err(Error::InvalidInput("growth cap needs at least one root".into()));
    }
    if m < 2 {
        return Err(Error::InvalidInput("growth cap needs m >= 2".into()));
    }
    let deg = roots.len() as f64;
    let amax = roots.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let ln_at = |z: Complex64| ln_distance_product(roots, z) - z.norm();
    let mut radius = 2.0 * (deg + amax) + 8.0;
    loop {
        let mut best = f64::NEG_INFINITY;
        for k in 0..GROWTH_DIRECTIONS {
            let dir = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / GROWTH_DIRECTIONS as f64);
            for i in 0..m {
                let z = dir * (radius * i as f64 / (m - 1) as f64);
                let v = ln_at(z);
                if !v.is_finite() && v != f64::NEG_INFINITY {
                    return Err(Error::NonFiniteSample { re: z.re, im: z.im });
                }
                best = best.max(v);
            }
        }
        let tail = deg * (amax + radius).ln() - radius;
        let decreasing = radius > deg - amax;
        if decreasing && tail < best {
            return Ok(SupBound::from_raw_ln(best, SupMethod::RadialSample, safety));
        }
        radius *= 2.0;
        if radius > 1e9 {
            return Err(Error::InvariantBreach("growth cap radius diverged".into()));
        }
    }
}
