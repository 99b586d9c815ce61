//! Sampled least-squares surrogates for polynomial approximation on compacts,
//! exact interpolation corrections, and the chaplet patch recursion.
//!
//! Acceptance is always by measured residual on the fixed sample layouts.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{poly_symmetrize, ComplexPoly, Disk, Interval, RealPoly};

pub const CIRCLE_SAMPLES: usize = 256;
pub const SEGMENT_SAMPLES: usize = 256;
/// Sample count for whole real windows, which are much longer than a patch segment.
pub const WINDOW_SAMPLES: usize = 1024;
pub const DEGREE_LADDER: [usize; 6] = [8, 16, 32, 64, 128, 200];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Piece {
    Disk { disk: Disk },
    Segment { interval: Interval },
}

impl Piece {
    pub fn disk(d: Disk) -> Self {
        Piece::Disk { disk: d }
    }

    pub fn segment(lo: f64, hi: f64) -> Result<Self> {
        Ok(Piece::Segment {
            interval: Interval::new(lo, hi)?,
        })
    }

    /// Fixed layout: boundary circle for disks, uniform grid for segments.
    pub fn samples(&self) -> Vec<Complex64> {
        match self {
            Piece::Disk { disk } => disk.boundary(CIRCLE_SAMPLES),
            Piece::Segment { interval } => interval.grid(SEGMENT_SAMPLES).into_iter().map(|x| c(x, 0.0)).collect(),
        }
    }

    fn conj(&self) -> Piece {
        match *self {
            Piece::Disk { disk } => Piece::disk(Disk::new(disk.center.conj(), disk.radius)),
            seg => seg,
        }
    }

    fn max_modulus(&self) -> f64 {
        match self {
            Piece::Disk { disk } => disk.center.norm() + disk.radius,
            Piece::Segment { interval } => interval.lo.abs().max(interval.hi.abs()),
        }
    }
}

/// Whether two closed pieces share interior points. Touching is allowed so
/// that a disk and a segment leaving its boundary form one starlike piece.
fn overlaps(a: &Piece, b: &Piece) -> bool {
    match (a, b) {
        (Piece::Disk { disk: p }, Piece::Disk { disk: q }) => (p.center - q.center).norm() < p.radius + q.radius,
        (Piece::Segment { interval: s }, Piece::Segment { interval: t }) => s.lo.max(t.lo) < s.hi.min(t.hi),
        (Piece::Disk { disk }, Piece::Segment { interval }) | (Piece::Segment { interval }, Piece::Disk { disk }) => {
            let x = disk.center.re.clamp(interval.lo, interval.hi);
            (disk.center - c(x, 0.0)).norm() < disk.radius
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactSpec {
    pub pieces: Vec<Piece>,
    pub symmetric: bool,
}

impl CompactSpec {
    pub fn new(pieces: Vec<Piece>, symmetric: bool) -> Result<Self> {
        for (i, a) in pieces.iter().enumerate() {
            for b in &pieces[i + 1..] {
                if overlaps(a, b) {
                    return Err(Error::InvalidInput(format!("pieces overlap: {a:?} and {b:?}")));
                }
            }
        }
        if symmetric {
            for p in &pieces {
                if !pieces.contains(&p.conj()) {
                    return Err(Error::InvalidInput(format!("{p:?} has no mirror image")));
                }
            }
        }
        Ok(Self { pieces, symmetric })
    }

    pub fn samples(&self) -> Vec<Complex64> {
        self.pieces.iter().flat_map(Piece::samples).collect()
    }

    pub fn max_modulus(&self) -> f64 {
        self.pieces.iter().map(Piece::max_modulus).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    Value,
    Derivative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub point: Complex64,
    pub kind: ConstraintKind,
    pub target: Complex64,
}

impl Constraint {
    pub fn value(point: f64, target: f64) -> Self {
        Self {
            point: c(point, 0.0),
            kind: ConstraintKind::Value,
            target: c(target, 0.0),
        }
    }

    pub fn derivative(point: f64, target: f64) -> Self {
        Self {
            point: c(point, 0.0),
            kind: ConstraintKind::Derivative,
            target: c(target, 0.0),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub items: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new(items: Vec<Constraint>) -> Result<Self> {
        for (i, a) in items.iter().enumerate() {
            if items[i + 1..].iter().any(|b| b.kind == a.kind && b.point == a.point) {
                return Err(Error::SingularConstraints(format!(
                    "two {:?} constraints at {}",
                    a.kind, a.point
                )));
            }
        }
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Largest `|L_j(p) - target_j|`.
    pub fn residual(&self, eval: impl Fn(Complex64) -> (Complex64, Complex64)) -> f64 {
        self.items
            .iter()
            .map(|k| {
                let (v, d) = eval(k.point);
                let got = match k.kind {
                    ConstraintKind::Value => v,
                    ConstraintKind::Derivative => d,
                };
                (got - k.target).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Least squares with column equilibration and a truncated SVD.
fn lstsq_real(mut a: DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let (m, n) = a.shape();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    for (j, &s) in norms.iter().enumerate() {
        if s > 0.0 {
            a.column_mut(j).unscale_mut(s);
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * m.max(n) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let mut x = svd.solve(b, tol).map_err(|e| Error::InvalidInput(e.to_string()))?;
    for (j, &s) in norms.iter().enumerate() {
        x[j] = if s > 0.0 { x[j] / s } else { 0.0 };
    }
    Ok((x, rank))
}

fn lstsq_complex(mut a: DMatrix<Complex64>, b: &DVector<Complex64>) -> Result<(DVector<Complex64>, usize)> {
    let (m, n) = a.shape();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    for (j, &s) in norms.iter().enumerate() {
        if s > 0.0 {
            a.column_mut(j).unscale_mut(s);
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * m.max(n) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let mut x = svd.solve(b, tol).map_err(|e| Error::InvalidInput(e.to_string()))?;
    for (j, &s) in norms.iter().enumerate() {
        x[j] = if s > 0.0 { x[j] / s } else { ZERO };
    }
    Ok((x, rank))
}

/// Powers `u^0 .. u^d`.
fn powers(u: Complex64, d: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(d + 1);
    let mut acc = c(1.0, 0.0);
    for _ in 0..=d {
        out.push(acc);
        acc *= u;
    }
    out
}

/// Real- or complex-coefficient fit.
#[derive(Clone, Debug, PartialEq)]
pub enum Fitted {
    Real(RealPoly),
    Complex(ComplexPoly),
}

impl Fitted {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        match self {
            Fitted::Real(p) => p.eval(z),
            Fitted::Complex(p) => p.eval(z),
        }
    }

    /// Monomial coefficients `c_k / scale^k`.
    pub fn monomials(&self) -> Vec<Complex64> {
        match self {
            Fitted::Real(p) => p.monomial_coeffs().into_iter().map(|v| c(v, 0.0)).collect(),
            Fitted::Complex(p) => {
                let mut f = 1.0;
                p.coeffs
                    .iter()
                    .map(|&v| {
                        let out = v * f;
                        f /= p.scale;
                        out
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergelyanFit {
    pub poly: Fitted,
    pub residual: f64,
}

/// Least-squares polynomial of degree `<= degree` through sampled data.
pub fn mergelyan_fit(samples: &[(Complex64, Complex64)], degree: usize, symmetric: bool) -> Result<MergelyanFit> {
    let mut distinct: Vec<Complex64> = samples.iter().map(|s| s.0).collect();
    distinct.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    distinct.dedup();
    if distinct.len() < degree + 1 {
        return Err(Error::RankDeficient {
            rank: distinct.len(),
            needed: degree + 1,
        });
    }
    let scale = samples.iter().map(|s| s.0.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut a = DMatrix::<Complex64>::zeros(samples.len(), degree + 1);
    let b = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    for (i, s) in samples.iter().enumerate() {
        for (k, p) in powers(s.0 / scale, degree).into_iter().enumerate() {
            a[(i, k)] = p;
        }
    }
    let (x, rank) = lstsq_complex(a, &b)?;
    if rank < degree + 1 {
        return Err(Error::RankDeficient { rank, needed: degree + 1 });
    }
    let cp = ComplexPoly {
        coeffs: x.iter().copied().collect(),
        scale,
    };
    let poly = if symmetric {
        Fitted::Real(poly_symmetrize(&cp))
    } else {
        Fitted::Complex(cp)
    };
    let residual = samples.iter().map(|s| (poly.eval(s.0) - s.1).norm()).fold(0.0, f64::max);
    Ok(MergelyanFit { poly, residual })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalshOutcome {
    pub poly: ComplexPoly,
    pub correction: ComplexPoly,
    /// Sup of the correction on the circle of radius `correction.scale`.
    pub correction_sup: f64,
    pub residual: f64,
}

pub fn complex_eval_with_derivative(p: &ComplexPoly, z: Complex64) -> (Complex64, Complex64) {
    let u = z / p.scale;
    let (mut v, mut d) = (ZERO, ZERO);
    for &a in p.coeffs.iter().rev() {
        d = d * u + v;
        v = v * u + a;
    }
    (v, d / p.scale)
}

fn complex_rescaled(p: &ComplexPoly, scale: f64) -> ComplexPoly {
    let ratio = scale / p.scale;
    let mut f = 1.0;
    ComplexPoly {
        coeffs: p
            .coeffs
            .iter()
            .map(|&a| {
                let out = a * f;
                f *= ratio;
                out
            })
            .collect(),
        scale,
    }
}

fn complex_add(p: &ComplexPoly, q: &ComplexPoly) -> ComplexPoly {
    let scale = p.scale.max(q.scale);
    let (p, q) = (complex_rescaled(p, scale), complex_rescaled(q, scale));
    let n = p.coeffs.len().max(q.coeffs.len());
    ComplexPoly {
        coeffs: (0..n)
            .map(|k| p.coeffs.get(k).copied().unwrap_or(ZERO) + q.coeffs.get(k).copied().unwrap_or(ZERO))
            .collect(),
        scale,
    }
}

fn min_norm_correction(p: &ComplexPoly, cs: &ConstraintSet, degree: usize, scale: f64) -> Result<ComplexPoly> {
    let n = cs.len();
    let mut a = DMatrix::<Complex64>::zeros(n, degree + 1);
    let mut b = DVector::<Complex64>::zeros(n);
    for (i, k) in cs.items.iter().enumerate() {
        let u = k.point / scale;
        let pw = powers(u, degree);
        let (v, d) = complex_eval_with_derivative(p, k.point);
        match k.kind {
            ConstraintKind::Value => {
                for j in 0..=degree {
                    a[(i, j)] = pw[j];
                }
                b[i] = k.target - v;
            }
            ConstraintKind::Derivative => {
                for j in 1..=degree {
                    a[(i, j)] = pw[j - 1] * (j as f64 / scale);
                }
                b[i] = k.target - d;
            }
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * (degree + 1).max(n) as f64 * 16.0;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < n {
        return Err(Error::SingularConstraints(format!("rank {rank} for {n} constraints")));
    }
    let x = svd.solve(&b, tol).map_err(|e| Error::SingularConstraints(e.to_string()))?;
    Ok(ComplexPoly {
        coeffs: x.iter().copied().collect(),
        scale,
    })
}

/// `p` plus the minimum-norm correction of degree `<= degree` meeting every
/// constraint.
pub fn walsh_correct(p: &ComplexPoly, cs: &ConstraintSet, degree: usize) -> Result<WalshOutcome> {
    let scale = cs.items.iter().map(|k| k.point.norm()).fold(1.0, f64::max);
    if cs.is_empty() {
        return Ok(WalshOutcome {
            poly: p.clone(),
            correction: ComplexPoly { coeffs: vec![], scale },
            correction_sup: 0.0,
            residual: 0.0,
        });
    }
    if degree + 1 < cs.len() {
        return Err(Error::SingularConstraints(format!(
            "{} constraints need degree >= {}",
            cs.len(),
            cs.len() - 1
        )));
    }
    let mut correction = min_norm_correction(p, cs, degree, scale)?;
    let mut out = complex_add(p, &correction);
    // One refinement pass absorbs the rounding of the first solve.
    let refine = min_norm_correction(&out, cs, degree, scale)?;
    correction = complex_add(&correction, &refine);
    out = complex_add(&out, &refine);
    let residual = cs.residual(|z| complex_eval_with_derivative(&out, z));
    let correction_sup = Disk::centered(scale)
        .boundary(CIRCLE_SAMPLES)
        .into_iter()
        .map(|z| correction.eval(z).norm())
        .fold(0.0, f64::max);
    Ok(WalshOutcome {
        poly: out,
        correction,
        correction_sup,
        residual,
    })
}

fn to_complex(p: &RealPoly) -> ComplexPoly {
    ComplexPoly {
        coeffs: p.coeffs().iter().map(|&a| c(a, 0.0)).collect(),
        scale: p.scale(),
    }
}

/// Real-coefficient variant for constraints at real points with real targets.
pub fn walsh_correct_real(p: &RealPoly, cs: &ConstraintSet, degree: usize) -> Result<(RealPoly, f64)> {
    if cs.items.iter().any(|k| k.point.im != 0.0 || k.target.im != 0.0) {
        return Err(Error::InvalidInput("real correction needs real points and targets".into()));
    }
    let w = walsh_correct(&to_complex(p), cs, degree)?;
    let real = poly_symmetrize(&w.poly);
    let residual = cs.residual(|z| {
        let (v, d) = real.eval_with_derivative(z);
        (v, d)
    });
    Ok((real, residual))
}

/// Value and derivative of the target on `K`.
pub type Holo<'a> = &'a dyn Fn(Complex64) -> (Complex64, Complex64);
/// Value of the target on `E`.
pub type Plain<'a> = &'a dyn Fn(Complex64) -> Complex64;

#[derive(Clone, Debug, PartialEq)]
pub struct KeOutcome {
    pub poly: RealPoly,
    pub degree: usize,
    /// Max `|p - f|` over samples of `K` and `E`.
    pub value_residual: f64,
    /// Max `|p' - f'|` over samples of `K`.
    pub derivative_residual: f64,
    pub pin_residual: f64,
    pub met: bool,
}

/// Samples split into the upper half plane (used for fitting when the
/// problem is conjugation-symmetric) and all of them (used for measuring).
fn fit_points(points: &[Complex64], symmetric: bool) -> Vec<Complex64> {
    if symmetric {
        points.iter().copied().filter(|z| z.im >= 0.0).collect()
    } else {
        points.to_vec()
    }
}

/// Real-coefficient fit to values on `E` and to values and derivatives on
/// `K`, followed by exact pinning, with degree escalation.
///
/// Derivative rows carry weight `r = max |z|` on `K`, matching the
/// `|q - f'| < eps / r` tolerance that integrates to `eps` along segments
/// from the origin.
pub fn ke_best(
    f_k: Holo<'_>,
    f_e: Plain<'_>,
    k: &CompactSpec,
    e: &CompactSpec,
    pins: &ConstraintSet,
    eps: f64,
    ladder: &[usize],
) -> Result<KeOutcome> {
    let k_pts = k.samples();
    let e_pts = e.samples();
    let symmetric = k.symmetric && (e.symmetric || e.pieces.is_empty());
    let r = k.max_modulus().max(f64::MIN_POSITIVE);
    let scale = k.max_modulus().max(e.max_modulus()).max(1.0);
    let (f0, _) = f_k(ZERO);
    let mut pins = pins.clone();
    if !pins.items.iter().any(|p| p.kind == ConstraintKind::Value && p.point == ZERO) {
        pins.items.push(Constraint {
            point: ZERO,
            kind: ConstraintKind::Value,
            target: f0,
        });
    }
    let fk_fit = fit_points(&k_pts, symmetric);
    let fe_fit = fit_points(&e_pts, symmetric);
    let k_data: Vec<(Complex64, Complex64, Complex64)> = fk_fit.iter().map(|&z| {
        let (v, d) = f_k(z);
        (z, v, d)
    }).collect();
    let e_data: Vec<(Complex64, Complex64)> = fe_fit.iter().map(|&z| (z, f_e(z))).collect();

    let mut best: Option<KeOutcome> = None;
    for &degree in ladder {
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut push = |coeffs: Vec<Complex64>, target: Complex64, real_point: bool| {
            rows.push((coeffs.iter().map(|a| a.re).collect(), target.re));
            if !real_point {
                rows.push((coeffs.iter().map(|a| a.im).collect(), target.im));
            }
        };
        for &(z, v, d) in &k_data {
            let pw = powers(z / scale, degree);
            let real_point = z.im == 0.0;
            push(pw.clone(), v, real_point);
            let dr: Vec<Complex64> = (0..=degree)
                .map(|j| if j == 0 { ZERO } else { pw[j - 1] * (j as f64 * r / scale) })
                .collect();
            push(dr, d * r, real_point);
        }
        for &(z, v) in &e_data {
            push(powers(z / scale, degree), v, z.im == 0.0);
        }
        let m = rows.len();
        if m < degree + 1 {
            return Err(Error::RankDeficient { rank: m, needed: degree + 1 });
        }
        let a = DMatrix::from_fn(m, degree + 1, |i, j| rows[i].0[j]);
        let b = DVector::from_iterator(m, rows.iter().map(|r| r.1));
        let (x, _) = lstsq_real(a, &b)?;
        let fitted = RealPoly::with_scale(x.iter().copied().collect(), scale);
        let (poly, pin_residual) = walsh_correct_real(&fitted, &pins, degree.max(pins.len()))?;

        let value_residual = k_pts
            .iter()
            .map(|&z| (poly.eval(z) - f_k(z).0).norm())
            .chain(e_pts.iter().map(|&z| (poly.eval(z) - f_e(z)).norm()))
            .fold(0.0, nan_max);
        let derivative_residual = k_pts
            .iter()
            .map(|&z| (poly.eval_with_derivative(z).1 - f_k(z).1).norm())
            .fold(0.0, nan_max);
        let met = value_residual < eps && derivative_residual < eps;
        let outcome = KeOutcome {
            poly,
            degree,
            value_residual,
            derivative_residual,
            pin_residual,
            met,
        };
        let score = |o: &KeOutcome| o.value_residual.max(o.derivative_residual);
        if met {
            return Ok(outcome);
        }
        if best.as_ref().map_or(true, |b| score(&outcome) < score(b) || score(b).is_nan()) {
            best = Some(outcome);
        }
    }
    best.ok_or_else(|| Error::InvalidInput("empty degree ladder".into()))
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// [`ke_best`] with the residual targets enforced.
pub fn ke_approx(
    f_k: Holo<'_>,
    f_e: Plain<'_>,
    k: &CompactSpec,
    e: &CompactSpec,
    pins: &ConstraintSet,
    eps: f64,
) -> Result<KeOutcome> {
    let out = ke_best(f_k, f_e, k, e, pins, eps, &DEGREE_LADDER)?;
    if out.met {
        Ok(out)
    } else {
        Err(Error::DegreeCap {
            degree: out.degree,
            residual: out.value_residual.max(out.derivative_residual),
            target: eps,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HoischenOutcome {
    pub poly: RealPoly,
    pub degree: usize,
    /// Max of `|g - f| / eps` over window samples.
    pub value_ratio: f64,
    /// Max of `|g' - f'| / eps` over window samples.
    pub derivative_ratio: f64,
}

/// Real polynomial close to `f` in value and slope on a window, matching
/// `f` and `f'` exactly at the pins.
pub fn hoischen_window(
    f: &dyn Fn(f64) -> (f64, f64),
    window: Interval,
    eps: &dyn Fn(f64) -> f64,
    pins: &[f64],
) -> Result<HoischenOutcome> {
    let xs = window.grid(WINDOW_SAMPLES);
    let data: Vec<(f64, f64, f64, f64)> = xs
        .iter()
        .map(|&x| {
            let (v, d) = f(x);
            (x, v, d, eps(x))
        })
        .collect();
    let eps_min = data.iter().map(|d| d.3).fold(f64::INFINITY, f64::min);
    if !(eps_min > 0.0) {
        return Err(Error::InvalidBudget("tolerance must be positive on the window".into()));
    }
    let scale = window.lo.abs().max(window.hi.abs()).max(1.0);
    let mut constraints = Vec::new();
    for &x in pins {
        if !window.contains(x) {
            return Err(Error::InvalidInput(format!("pin {x} outside the window")));
        }
        let (v, d) = f(x);
        constraints.push(Constraint::value(x, v));
        constraints.push(Constraint::derivative(x, d));
    }
    let cs = ConstraintSet::new(constraints)?;
    let (flo, _) = f(window.lo);

    let mut last = None;
    for &degree in &DEGREE_LADDER {
        let a = DMatrix::from_fn(data.len(), degree + 1, |i, j| (data[i].0 / scale).powi(j as i32));
        let b = DVector::from_iterator(data.len(), data.iter().map(|d| d.2));
        let (x, _) = lstsq_real(a, &b)?;
        let q = RealPoly::with_scale(x.iter().copied().collect(), scale);
        let slope_ok = data.iter().all(|d| (q.eval_real(d.0) - d.2).abs() < eps_min / 2.0);
        let anti = q.antiderivative();
        let shift = flo - anti.eval_real(window.lo);
        let mut g = anti.add(&RealPoly::constant(shift));
        if !cs.is_empty() {
            g = walsh_correct_real(&g, &cs, (degree + 1).max(cs.len()))?.0;
        }
        let (mut vr, mut dr) = (0.0f64, 0.0f64);
        for d in &data {
            let (gv, gd) = g.eval_real_with_derivative(d.0);
            vr = nan_max(vr, (gv - d.1).abs() / d.3);
            dr = nan_max(dr, (gd - d.2).abs() / d.3);
        }
        let out = HoischenOutcome {
            poly: g,
            degree,
            value_ratio: vr,
            derivative_ratio: dr,
        };
        if slope_ok && vr < 1.0 && dr < 1.0 {
            return Ok(out);
        }
        last = Some(out);
    }
    let last = last.expect("nonempty ladder");
    Err(Error::DegreeCap {
        degree: last.degree,
        residual: last.value_ratio.max(last.derivative_ratio) * eps_min,
        target: eps_min,
    })
}

/// Disjoint discs `E_n^+` in the upper half plane with their mirror images,
/// separated by the radii `r_1 < ... < r_{K+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecialChaplet {
    radii: Vec<f64>,
    discs: Vec<Disk>,
}

impl SpecialChaplet {
    pub fn new(radii: Vec<f64>, discs: Vec<Disk>) -> Result<Self> {
        if discs.is_empty() || radii.len() != discs.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "{} discs need {} radii, got {}",
                discs.len(),
                discs.len() + 1,
                radii.len()
            )));
        }
        if radii.windows(2).any(|w| !(w[0] < w[1])) || radii[0] <= 0.0 {
            return Err(Error::InvalidInput("radii must be positive and increasing".into()));
        }
        for (i, d) in discs.iter().enumerate() {
            let m = d.center.norm();
            if !(d.center.im > d.radius) {
                return Err(Error::InvalidInput(format!("disc {} meets the real axis", i + 1)));
            }
            if !(m - d.radius > radii[i] && m + d.radius < radii[i + 1]) {
                return Err(Error::InvalidInput(format!("disc {} leaves its annulus", i + 1)));
            }
            if i > 0 && !(discs[i - 1].radius < d.radius) {
                return Err(Error::InvalidInput("disc radii must increase".into()));
            }
        }
        Ok(Self { radii, discs })
    }

    pub fn count(&self) -> usize {
        self.discs.len()
    }

    /// `r_n` for `1 <= n <= K + 1`.
    pub fn radius(&self, n: usize) -> f64 {
        self.radii[n - 1]
    }

    pub fn upper(&self, n: usize) -> Disk {
        self.discs[n - 1]
    }

    pub fn lower(&self, n: usize) -> Disk {
        let d = self.discs[n - 1];
        Disk::new(d.center.conj(), d.radius)
    }

    /// `K_n = [-r_{n+1}, -r_n] u {|z| <= r_n} u [r_n, r_{n+1}]`.
    pub fn k_set(&self, n: usize) -> Result<CompactSpec> {
        let (a, b) = (self.radius(n), self.radius(n + 1));
        CompactSpec::new(
            vec![Piece::disk(Disk::centered(a)), Piece::segment(a, b)?, Piece::segment(-b, -a)?],
            true,
        )
    }

    /// `E_n = E_n^+ u E_n^-`.
    pub fn e_set(&self, n: usize) -> Result<CompactSpec> {
        CompactSpec::new(vec![Piece::disk(self.upper(n)), Piece::disk(self.lower(n))], true)
    }

    /// Boundary samples of every disc, both halves.
    pub fn all_disc_samples(&self) -> Vec<(usize, Complex64)> {
        (1..=self.count())
            .flat_map(|n| {
                self.upper(n)
                    .boundary(CIRCLE_SAMPLES)
                    .into_iter()
                    .chain(self.lower(n).boundary(CIRCLE_SAMPLES))
                    .map(move |z| (n, z))
            })
            .collect()
    }
}

/// A positive tolerance function known on a real grid (linear in between,
/// constant beyond the ends) and as one constant per chaplet disc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonField {
    pub real_x: Vec<f64>,
    pub real_eps: Vec<f64>,
    pub disc_eps: Vec<f64>,
}

impl EpsilonField {
    pub fn new(real_x: Vec<f64>, real_eps: Vec<f64>, disc_eps: Vec<f64>) -> Result<Self> {
        if real_x.len() != real_eps.len() || real_x.len() < 2 {
            return Err(Error::InvalidInput("real samples and tolerances must pair up".into()));
        }
        if real_x.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("real sample points must increase".into()));
        }
        if real_eps.iter().chain(&disc_eps).any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidBudget("tolerances must be positive and finite".into()));
        }
        Ok(Self { real_x, real_eps, disc_eps })
    }

    pub fn constant(window: f64, real: f64, discs: &[f64]) -> Result<Self> {
        Self::new(vec![-window, window], vec![real, real], discs.to_vec())
    }

    pub fn at_real(&self, x: f64) -> f64 {
        let xs = &self.real_x;
        if x <= xs[0] {
            return self.real_eps[0];
        }
        if x >= xs[xs.len() - 1] {
            return self.real_eps[xs.len() - 1];
        }
        let i = xs.partition_point(|&p| p <= x) - 1;
        let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        self.real_eps[i] * (1.0 - t) + self.real_eps[i + 1] * t
    }

    pub fn on_disc(&self, n: usize) -> f64 {
        self.disc_eps[n - 1]
    }

    /// Minimum over `[lo, hi]`, attained at a sample or an end.
    pub fn min_on_real(&self, lo: f64, hi: f64) -> f64 {
        self.real_x
            .iter()
            .zip(&self.real_eps)
            .filter(|(&x, _)| lo <= x && x <= hi)
            .map(|(_, &e)| e)
            .fold(self.at_real(lo).min(self.at_real(hi)), f64::min)
    }

    /// Minimum over `Q_n = K_n u E_n`.
    pub fn min_on_stage(&self, chaplet: &SpecialChaplet, n: usize) -> f64 {
        let r = chaplet.radius(n + 1);
        self.min_on_real(-r, r).min(self.on_disc(n))
    }
}

/// Stage budgets `eps_1 .. eps_{K+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchSchedule {
    pub eps: Vec<f64>,
}

impl PatchSchedule {
    pub fn new(eps: Vec<f64>) -> Result<Self> {
        if eps.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::InvalidBudget("budgets must be positive".into()));
        }
        for n in 0..eps.len() {
            let tail: f64 = eps[n + 1..].iter().map(|e| 2.0 * e).sum();
            if !(tail < eps[n]) {
                return Err(Error::InvalidBudget(format!(
                    "tail rule fails at n = {}: {tail} >= {}",
                    n + 1,
                    eps[n]
                )));
            }
        }
        Ok(Self { eps })
    }

    /// Geometric budgets `base * ratio^n`, capped below the tolerance field.
    pub fn geometric(base: f64, ratio: f64, chaplet: &SpecialChaplet, field: &EpsilonField) -> Result<Self> {
        let k = chaplet.count();
        let mut eps = Vec::with_capacity(k + 1);
        let mut cap = f64::INFINITY;
        for n in 1..=k + 1 {
            let bound = if n <= k { field.min_on_stage(chaplet, n) } else { cap };
            cap = cap.min(bound);
            eps.push((base * ratio.powi(n as i32)).min(0.5 * cap * ratio.powi(n as i32)));
        }
        let s = Self::new(eps)?;
        s.check_field(chaplet, field)?;
        Ok(s)
    }

    /// `eps_n < min over Q_n` of the tolerance field.
    pub fn check_field(&self, chaplet: &SpecialChaplet, field: &EpsilonField) -> Result<()> {
        for n in 1..=chaplet.count().min(self.eps.len()) {
            let m = field.min_on_stage(chaplet, n);
            if !(self.eps[n - 1] < m) {
                return Err(Error::InvalidBudget(format!(
                    "eps_{n} = {} is not below the field minimum {m}",
                    self.eps[n - 1]
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, n: usize) -> f64 {
        self.eps[n - 1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub degree: usize,
    pub value_residual: f64,
    pub derivative_residual: f64,
    pub budget: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelescopeReport {
    pub from: usize,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchOutcome {
    pub phi: RealPoly,
    pub phi_degree: usize,
    pub polys: Vec<RealPoly>,
    pub stages: Vec<StageReport>,
    pub telescoping: Vec<TelescopeReport>,
}

impl PatchOutcome {
    pub fn result(&self) -> &RealPoly {
        self.polys.last().expect("at least one stage")
    }

    pub fn all_passed(&self) -> bool {
        self.stages.iter().all(|s| s.passed) && self.telescoping.iter().all(|t| t.measured <= t.bound)
    }
}

/// Per-disc targets: `n` and a point of `E_n^+`.
pub type DiscTarget<'a> = &'a dyn Fn(usize, Complex64) -> Complex64;
/// Value and slope on the real line.
pub type RealTarget<'a> = &'a dyn Fn(f64) -> (f64, f64);

/// Runs every stage of the patch recursion, recording the measured residual
/// of each stage even after a budget is missed.
pub fn re_patch_all(
    chaplet: &SpecialChaplet,
    f_e: DiscTarget<'_>,
    f_r: RealTarget<'_>,
    field: &EpsilonField,
    xpins: &[f64],
    schedule: &PatchSchedule,
) -> Result<PatchOutcome> {
    let k = chaplet.count();
    if schedule.eps.len() < k + 1 {
        return Err(Error::InvalidBudget(format!("{k} stages need {} budgets", k + 1)));
    }
    let outer = chaplet.radius(k + 1);
    let window = Interval::symmetric(outer)?;
    let half = |x: f64| field.at_real(x) / 2.0;
    let hoischen = hoischen_window(f_r, window, &half, xpins)?;
    let phi = hoischen.poly;

    let mut polys: Vec<RealPoly> = Vec::with_capacity(k);
    let mut stages = Vec::with_capacity(k);
    for n in 1..=k {
        let rn = chaplet.radius(n);
        let rn1 = chaplet.radius(n + 1);
        let prev = polys.last().unwrap_or(&phi).clone();
        let phi_ref = &phi;
        let f_k = move |z: Complex64| -> (Complex64, Complex64) {
            if z.im == 0.0 && z.re.abs() >= rn {
                phi_ref.eval_with_derivative(z)
            } else {
                prev.eval_with_derivative(z)
            }
        };
        let upper = chaplet.upper(n);
        let f_en = move |z: Complex64| -> Complex64 {
            if upper.contains(z) {
                f_e(n, z)
            } else {
                f_e(n, z.conj()).conj()
            }
        };
        let mut pins = Vec::new();
        for &x in xpins.iter().filter(|&&x| x.abs() <= rn1) {
            let (v, d) = phi.eval_real_with_derivative(x);
            pins.push(Constraint::value(x, v));
            pins.push(Constraint::derivative(x, d));
        }
        for x in [-rn1, rn1] {
            if xpins.contains(&x) {
                continue;
            }
            let (v, d) = phi.eval_real_with_derivative(x);
            pins.push(Constraint::value(x, v));
            pins.push(Constraint::derivative(x, d));
        }
        let pins = ConstraintSet::new(pins)?;
        let budget = schedule.get(n + 1);
        let out = ke_best(&f_k, &f_en, &chaplet.k_set(n)?, &chaplet.e_set(n)?, &pins, budget, &DEGREE_LADDER)?;
        stages.push(StageReport {
            stage: n,
            degree: out.degree,
            value_residual: out.value_residual,
            derivative_residual: out.derivative_residual,
            budget,
            passed: out.value_residual < budget,
        });
        polys.push(out.poly);
    }

    let inner = Disk::centered(chaplet.radius(1)).boundary(CIRCLE_SAMPLES);
    let last = polys.last().expect("k >= 1");
    let telescoping = (1..k)
        .map(|m| TelescopeReport {
            from: m,
            measured: inner
                .iter()
                .map(|&z| (last.eval(z) - polys[m - 1].eval(z)).norm())
                .fold(0.0, nan_max),
            bound: (m..k).map(|j| schedule.get(j + 1)).sum(),
        })
        .collect();
    Ok(PatchOutcome {
        phi,
        phi_degree: hoischen.degree,
        polys,
        stages,
        telescoping,
    })
}

/// The patch recursion with every stage budget enforced.
pub fn re_patch(
    chaplet: &SpecialChaplet,
    f_e: DiscTarget<'_>,
    f_r: RealTarget<'_>,
    field: &EpsilonField,
    xpins: &[f64],
    schedule: &PatchSchedule,
) -> Result<PatchOutcome> {
    let out = re_patch_all(chaplet, f_e, f_r, field, xpins, schedule)?;
    if let Some(s) = out.stages.iter().find(|s| !s.passed) {
        return Err(Error::StageFailure {
            stage: s.stage,
            measured: s.value_residual,
            budget: s.budget,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(m: usize, f: impl Fn(Complex64) -> Complex64) -> Vec<(Complex64, Complex64)> {
        Disk::centered(1.0).boundary(m).into_iter().map(|z| (z, f(z))).collect()
    }

    #[test]
    fn mergelyan_examples() {
        let fit = mergelyan_fit(&circle(64, |z| z * z * z), 5, false).unwrap();
        assert!(fit.residual <= 1e-12);
        let m = fit.poly.monomials();
        for (k, a) in m.iter().enumerate() {
            let want = if k == 3 { 1.0 } else { 0.0 };
            assert!((a - want).norm() < 1e-12, "{k}: {a}");
        }
        let fit = mergelyan_fit(&circle(64, |z| z.exp()), 12, false).unwrap();
        let taylor = 1.0 / (1..=13).map(|k| k as f64).product::<f64>();
        assert!(taylor < 1.7e-10);
        assert!(fit.residual <= 1e-9, "{}", fit.residual);
        let fit = mergelyan_fit(&circle(64, |z| z * z), 4, true).unwrap();
        assert!(matches!(fit.poly, Fitted::Real(_)));
        assert!(fit.residual < 1e-12);
        assert!(matches!(
            mergelyan_fit(&circle(3, |z| z), 5, false),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn walsh_examples() {
        let z = ComplexPoly::new(vec![]);
        let cs = ConstraintSet::new(vec![Constraint::value(0.0, 1.0)]).unwrap();
        let w = walsh_correct(&z, &cs, 0).unwrap();
        assert_eq!(w.poly.coeffs, vec![c(1.0, 0.0)]);
        let cs = ConstraintSet::new(vec![Constraint::value(0.0, 0.0), Constraint::derivative(0.0, 1.0)]).unwrap();
        let w = walsh_correct(&z, &cs, 1).unwrap();
        assert!((w.poly.coeffs[0]).norm() < 1e-15);
        assert!((w.poly.coeffs[1] - 1.0).norm() < 1e-15);
        let p = ComplexPoly::new(vec![c(1.0, 0.0), c(2.0, 0.0)]);
        let cs = ConstraintSet::new(vec![Constraint::value(1.0, 3.0)]).unwrap();
        let w = walsh_correct(&p, &cs, 3).unwrap();
        assert!(w.correction_sup < 1e-14);
        assert!(ConstraintSet::new(vec![Constraint::value(1.0, 3.0), Constraint::value(1.0, 2.0)]).is_err());
    }

    #[test]
    fn ke_identity_and_sine() {
        let k = CompactSpec::new(vec![Piece::disk(Disk::centered(1.0))], true).unwrap();
        let e = CompactSpec::new(vec![], true).unwrap();
        let id = |z: Complex64| (z, c(1.0, 0.0));
        let zero_e = |_: Complex64| ZERO;
        let out = ke_approx(&id, &zero_e, &k, &e, &ConstraintSet::default(), 1e-10).unwrap();
        assert!(out.value_residual < 1e-12 && out.derivative_residual < 1e-12);
        let sine = |z: Complex64| (z.sin(), z.cos());
        let pins = ConstraintSet::new(vec![Constraint::value(0.0, 0.0), Constraint::derivative(0.0, 1.0)]).unwrap();
        let out = ke_approx(&sine, &zero_e, &k, &e, &pins, 1e-8).unwrap();
        let (v, d) = out.poly.eval_real_with_derivative(0.0);
        assert!(v.abs() < 1e-14 && (d - 1.0).abs() < 1e-14);
        assert!(out.value_residual < 1e-8);
    }

    #[test]
    fn hoischen_examples() {
        let w = Interval::symmetric(5.0).unwrap();
        let id = |x: f64| (x, 1.0);
        let g = hoischen_window(&id, w, &|_| 0.01, &[0.5, -2.0]).unwrap();
        for x in [-4.0, 0.3, 2.2] {
            assert!((g.poly.eval_real(x) - x).abs() < 1e-12);
        }
        let sine = |x: f64| (x.sin(), x.cos());
        let g = hoischen_window(&sine, w, &|_| 0.01, &[0.0]).unwrap();
        let (v, d) = g.poly.eval_real_with_derivative(0.0);
        assert!(v.abs() < 1e-13 && (d - 1.0).abs() < 1e-12);
        assert!(g.value_ratio < 1.0 && g.derivative_ratio < 1.0);
    }

    #[test]
    fn walsh_random_sets() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.gen_range(1..=8);
            let mut items = Vec::new();
            while items.len() < n {
                let kind = if rng.gen_bool(0.5) { ConstraintKind::Value } else { ConstraintKind::Derivative };
                let point = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                let target = c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                items.push(Constraint { point, kind, target });
            }
            let cs = ConstraintSet::new(items).unwrap();
            let p = ComplexPoly::new((0..4).map(|_| c(rng.gen_range(-1.0..1.0), 0.0)).collect());
            let w = walsh_correct(&p, &cs, 3 + n).unwrap();
            assert!(w.residual <= 1e-10, "{}", w.residual);
            assert!(cs.residual(|z| complex_eval_with_derivative(&w.poly, z)) <= 1e-10);
        }
    }

    #[test]
    fn ke_reproduces_polynomials() {
        let k = CompactSpec::new(vec![Piece::disk(Disk::centered(1.0)), Piece::segment(1.0, 2.0).unwrap(), Piece::segment(-2.0, -1.0).unwrap()], true).unwrap();
        let e = CompactSpec::new(vec![Piece::disk(Disk::new(c(0.0, 3.0), 0.5)), Piece::disk(Disk::new(c(0.0, -3.0), 0.5))], true).unwrap();
        let p = RealPoly::new(vec![1.0, -2.0, 0.0, 0.5]);
        let pk = p.clone();
        let f_k = move |z: Complex64| pk.eval_with_derivative(z);
        let pe = p.clone();
        let f_e = move |z: Complex64| pe.eval(z);
        let pins = ConstraintSet::new(vec![Constraint::value(0.5, p.eval_real(0.5))]).unwrap();
        let out = ke_approx(&f_k, &f_e, &k, &e, &pins, 1e-10).unwrap();
        assert!(out.value_residual <= 1e-10 && out.derivative_residual <= 1e-10);
    }

    fn small_chaplet(k: usize) -> SpecialChaplet {
        SpecialChaplet::new(
            (1..=k + 1).map(|n| 2f64.powi(n as i32)).collect(),
            (1..=k).map(|n| Disk::new(c(0.0, 1.5 * 2f64.powi(n as i32)), 2f64.powi(n as i32 - 2))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn re_patch_zero_targets() {
        let ch = small_chaplet(6);
        let field = EpsilonField::constant(ch.radius(7), 0.5, &[0.5; 6]).unwrap();
        let sched = PatchSchedule::geometric(0.25, 0.25, &ch, &field).unwrap();
        let out = re_patch(&ch, &|_, _| ZERO, &|_| (0.0, 0.0), &field, &[], &sched).unwrap();
        assert!(out.phi.is_zero());
        assert!(out.polys.iter().all(RealPoly::is_zero));
        assert!(out.all_passed());
    }

    #[test]
    fn re_patch_single_wide_disc() {
        let ch = SpecialChaplet::new(vec![2.0, 16.0], vec![Disk::new(c(0.0, 8.0), 0.5)]).unwrap();
        let field = EpsilonField::constant(16.0, 4.0, &[4.0]).unwrap();
        let sched = PatchSchedule::new(vec![1.0, 0.25]).unwrap();
        let out = re_patch(&ch, &|_, _| ZERO, &|x| (x, 1.0), &field, &[0.0], &sched).unwrap();
        let g = out.result();
        assert!(g.eval_real(0.0).abs() < 1e-12);
        for (_, z) in ch.all_disc_samples() {
            assert!(g.eval(z).norm() < 0.25);
        }
    }

    #[test]
    fn chaplet_validation() {
        let ok = SpecialChaplet::new(vec![2.0, 4.0], vec![Disk::new(c(0.0, 3.0), 0.5)]).unwrap();
        assert_eq!(ok.lower(1).center, c(0.0, -3.0));
        assert!(SpecialChaplet::new(vec![2.0, 4.0], vec![Disk::new(c(0.0, 3.0), 1.5)]).is_err());
        assert!(SpecialChaplet::new(vec![2.0, 4.0], vec![Disk::new(c(3.0, 0.2), 0.5)]).is_err());
    }

    #[test]
    fn compact_spec_rules() {
        assert!(CompactSpec::new(vec![Piece::disk(Disk::centered(1.0)), Piece::segment(1.0, 2.0).unwrap()], false).is_ok());
        assert!(CompactSpec::new(vec![Piece::disk(Disk::centered(1.0)), Piece::segment(0.5, 2.0).unwrap()], false).is_err());
        assert!(CompactSpec::new(vec![Piece::disk(Disk::new(c(0.0, 3.0), 0.5))], true).is_err());
    }

    #[test]
    fn schedule_rules() {
        assert!(PatchSchedule::new(vec![1.0, 0.25, 0.0625]).is_ok());
        assert!(PatchSchedule::new(vec![1.0, 0.5]).is_err());
        let f = EpsilonField::new(vec![-1.0, 0.0, 1.0], vec![0.2, 0.1, 0.3], vec![]).unwrap();
        assert!((f.at_real(0.5) - 0.2).abs() < 1e-15);
        assert_eq!(f.at_real(9.0), 0.3);
        assert_eq!(f.min_on_real(-0.5, 0.5), 0.1);
    }
}
