//! Back-and-forth construction of `f = base + modulator * sum lambda_j h_j`.
//!
//! `h_1 = 1` and, for `j >= 2`, `h_j = e^{-w^2} prod_{k<j} (w - w(alpha_k))`
//! with `w` either the identity or the base carrier. The per-step caps on
//! `lambda` come from an [`EtaModel`]; everything else is shared between the
//! plain and the universal construction.

use std::collections::BTreeSet;
use std::f64::consts::LN_2;

use num_bigint::{BigInt, BigUint};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::densesets::{exact, to_f64, ElementRef, Enumeration, SetKind, DEFAULT_SEARCH_CAP};
use crate::error::{Error, Result};
use crate::numkernel::{GaussTerm, PreparedTerm, RealPoly, Warp};
use crate::report::VerificationReport;
use crate::serde_ext;

/// `base`, `modulator` and the warp of the Gaussian terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Carrier {
    pub base: RealPoly,
    pub modulator: RealPoly,
    pub warp: Warp,
}

impl Carrier {
    /// `base = z`, `modulator = 1`, unwarped terms.
    pub fn identity() -> Self {
        Self {
            base: RealPoly::identity(),
            modulator: RealPoly::constant(1.0),
            warp: Warp::Identity,
        }
    }

    /// `base = phi`, `modulator = h`, terms warped by `phi`.
    pub fn warped(phi: RealPoly, h: RealPoly) -> Self {
        Self {
            base: phi,
            modulator: h,
            warp: Warp::Phi,
        }
    }

    fn warp_real(&self, x: f64) -> (f64, f64) {
        match self.warp {
            Warp::Identity => (x, 1.0),
            Warp::Phi => self.base.eval_real_with_derivative(x),
        }
    }

    fn warp_complex(&self, z: Complex64) -> (Complex64, Complex64) {
        match self.warp {
            Warp::Identity => (z, Complex64::new(1.0, 0.0)),
            Warp::Phi => self.base.eval_with_derivative(z),
        }
    }
}

/// The partial sum with committed roots and coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    carrier: Carrier,
    alphas: Vec<f64>,
    warped: Vec<f64>,
    lambdas: Vec<f64>,
}

impl Series {
    pub fn new(carrier: Carrier) -> Self {
        Self {
            carrier,
            alphas: Vec::new(),
            warped: Vec::new(),
            lambdas: Vec::new(),
        }
    }

    pub fn from_parts(carrier: Carrier, alphas: Vec<f64>, lambdas: Vec<f64>) -> Result<Self> {
        if alphas.len() != lambdas.len() {
            return Err(Error::InvalidInput(format!(
                "{} roots but {} coefficients",
                alphas.len(),
                lambdas.len()
            )));
        }
        let mut s = Self::new(carrier);
        for (a, l) in alphas.into_iter().zip(lambdas) {
            s.push(a, l);
        }
        Ok(s)
    }

    fn push(&mut self, alpha: f64, lambda: f64) {
        let w = self.carrier.warp_real(alpha).0;
        self.alphas.push(alpha);
        self.warped.push(w);
        self.lambdas.push(lambda);
    }

    pub fn carrier(&self) -> &Carrier {
        &self.carrier
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Term `h_n` for `n >= 2`: roots are the first `n - 1` alphas.
    pub fn term(&self, n: usize) -> GaussTerm {
        assert!(n >= 2 && n - 1 <= self.alphas.len(), "term {n} is not defined yet");
        GaussTerm::new(self.alphas[..n - 1].to_vec(), self.carrier.warp)
    }

    pub fn prepared_term(&self, n: usize) -> Result<PreparedTerm<'_>> {
        self.term(n).prepare(Some(&self.carrier.base))
    }

    /// `sum_j lambda_j h_j` and its derivative on the real line.
    fn sum_real(&self, x: f64) -> (f64, f64) {
        let Some(&l1) = self.lambdas.first() else {
            return (0.0, 0.0);
        };
        let (w, dw) = self.carrier.warp_real(x);
        let g = (-w * w).exp();
        let (mut s, mut ds) = (l1, 0.0);
        let (mut p, mut dp) = (1.0, 0.0);
        for (j, &lam) in self.lambdas.iter().enumerate().skip(1) {
            let f = w - self.warped[j - 1];
            dp = dp * f + p;
            p *= f;
            if lam != 0.0 && g != 0.0 {
                s += lam * (g * p);
                ds += lam * (g * (dp - 2.0 * w * p)) * dw;
            }
        }
        (s, ds)
    }

    fn sum_complex(&self, z: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        let Some(&l1) = self.lambdas.first() else {
            return (zero, zero);
        };
        let (w, dw) = self.carrier.warp_complex(z);
        let g = (-w * w).exp();
        let (mut s, mut ds) = (Complex64::new(l1, 0.0), zero);
        let (mut p, mut dp) = (Complex64::new(1.0, 0.0), zero);
        for (j, &lam) in self.lambdas.iter().enumerate().skip(1) {
            let f = w - self.warped[j - 1];
            dp = dp * f + p;
            p *= f;
            if lam != 0.0 && g != zero {
                s += lam * (g * p);
                ds += lam * (g * (dp - 2.0 * w * p)) * dw;
            }
        }
        (s, ds)
    }

    pub fn eval_real(&self, x: f64) -> (f64, f64) {
        let (b, db) = self.carrier.base.eval_real_with_derivative(x);
        let (m, dm) = self.carrier.modulator.eval_real_with_derivative(x);
        let (s, ds) = self.sum_real(x);
        (b + m * s, db + dm * s + m * ds)
    }

    pub fn eval(&self, z: Complex64) -> (Complex64, Complex64) {
        let (b, db) = self.carrier.base.eval_with_derivative(z);
        let (m, dm) = self.carrier.modulator.eval_with_derivative(z);
        let (s, ds) = self.sum_complex(z);
        (b + m * s, db + dm * s + m * ds)
    }

    pub fn value_real(&self, x: f64) -> f64 {
        self.eval_real(x).0
    }

    /// Exact monomial coefficients of `f` while every Gaussian term carries a
    /// zero coefficient, so that `f = base + lambda_1 modulator`.
    pub fn exact_polynomial(&self) -> Option<Vec<BigRational>> {
        if self.lambdas.iter().skip(1).any(|&l| l != 0.0) {
            return None;
        }
        let mut coeffs = exact_monomials(&self.carrier.base)?;
        if let Some(&l1) = self.lambdas.first() {
            let l1 = exact(l1).ok()?;
            for (k, c) in exact_monomials(&self.carrier.modulator)?.into_iter().enumerate() {
                if k >= coeffs.len() {
                    coeffs.push(BigRational::zero());
                }
                coeffs[k] += &l1 * c;
            }
        }
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Some(coeffs)
    }

    /// Root of `f(x) = target` for increasing `f`: doubling bracket from
    /// `x = target`, then bisection down to adjacent floats. Returns the
    /// closer endpoint and its residual.
    pub fn solve_preimage(&self, target: f64) -> Result<(f64, f64)> {
        let f = |x: f64| self.value_real(x);
        let limit = 2f64.powi(60);
        let (mut lo, mut hi) = (target, target);
        let mut step = 1.0;
        while f(lo) > target {
            lo = target - step;
            step *= 2.0;
            if step > limit {
                return Err(Error::BracketOverflow { target });
            }
        }
        step = 1.0;
        while f(hi) < target {
            hi = target + step;
            step *= 2.0;
            if step > limit {
                return Err(Error::BracketOverflow { target });
            }
        }
        while lo < hi {
            let mid = lo + (hi - lo) / 2.0;
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (rl, rh) = ((f(lo) - target).abs(), (f(hi) - target).abs());
        Ok(if rl <= rh { (lo, rl) } else { (hi, rh) })
    }
}

fn exact_monomials(p: &RealPoly) -> Option<Vec<BigRational>> {
    let scale = exact(p.scale()).ok()?;
    let mut factor = BigRational::one();
    let mut out = Vec::with_capacity(p.coeffs().len());
    for &c in p.coeffs() {
        out.push(exact(c).ok()? * &factor);
        factor /= &scale;
    }
    Some(out)
}

pub fn eval_exact(coeffs: &[BigRational], x: &BigRational) -> BigRational {
    coeffs
        .iter()
        .rev()
        .fold(BigRational::zero(), |acc, c| acc * x + c)
}

/// Logs of the per-step cap and of the sup bounds behind it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaRecord {
    #[serde(with = "serde_ext::float")]
    pub ln_eta: f64,
    #[serde(with = "serde_ext::float")]
    pub ln_sup_disk: f64,
    #[serde(with = "serde_ext::float")]
    pub ln_sup_real: f64,
    #[serde(with = "serde_ext::float")]
    pub ln_sup_growth: f64,
}

/// Budgets and sup bounds that decide how small `lambda_n` must be.
pub trait EtaModel {
    /// `epsilon_n`, the budget of step `n`.
    fn epsilon(&self, n: usize) -> f64;

    fn ln_epsilon(&self, n: usize) -> f64 {
        self.epsilon(n).ln()
    }

    /// Budget for the real-line derivative condition (`epsilon_n` by default).
    fn ln_real_budget(&self, n: usize) -> f64 {
        self.ln_epsilon(n)
    }

    /// Bound for the third family of conditions (`2^-n` by default).
    fn ln_growth_budget(&self, n: usize) -> f64 {
        -(n as f64) * LN_2
    }

    /// Caps for step `n >= 2`, whose term has the first `n - 1` roots.
    fn caps(&self, series: &Series, n: usize) -> Result<EtaRecord>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Initial,
    Even,
    Odd,
}

/// Factor multiplying `lambda h(alpha)` in the odd-step linear function.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OddFactor {
    #[default]
    Modulator,
    Base,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub kind: StepKind,
    pub alpha: f64,
    pub alpha_exact: String,
    pub alpha_index: String,
    pub beta: f64,
    pub beta_exact: String,
    pub beta_index: String,
    #[serde(with = "serde_ext::float")]
    pub lambda: f64,
    pub eta: Option<EtaRecord>,
    /// `|f(x_n) - beta_n|` at the preimage of an even step.
    #[serde(with = "serde_ext::opt_float", default)]
    pub solve_residual: Option<f64>,
    /// `|f_n(alpha_n) - beta_n|` after the commit.
    #[serde(with = "serde_ext::float")]
    pub residual: f64,
    pub exact_hit: bool,
}

impl StepTrace {
    pub fn alpha_rational(&self) -> Result<BigRational> {
        parse_rational(&self.alpha_exact)
    }

    pub fn beta_rational(&self) -> Result<BigRational> {
        parse_rational(&self.beta_exact)
    }

    pub fn alpha_index(&self) -> Result<BigUint> {
        parse_index(&self.alpha_index)
    }

    pub fn beta_index(&self) -> Result<BigUint> {
        parse_index(&self.beta_index)
    }
}

fn parse_rational(s: &str) -> Result<BigRational> {
    s.parse()
        .map_err(|_| Error::InvalidInput(format!("not a rational: {s:?}")))
}

fn parse_index(s: &str) -> Result<BigUint> {
    s.parse()
        .map_err(|_| Error::InvalidInput(format!("not an index: {s:?}")))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub prefer_exact_hits: bool,
    pub odd_factor: OddFactor,
    pub search_cap: usize,
    pub max_halvings: usize,
    /// Floats scanned on each side of the preimage for exact hits.
    pub ulp_scan: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            prefer_exact_hits: true,
            odd_factor: OddFactor::Modulator,
            search_cap: DEFAULT_SEARCH_CAP,
            max_halvings: 200,
            ulp_scan: 64,
        }
    }
}

/// Open interval with optional ends.
#[derive(Clone, Debug, Default)]
struct Window {
    lo: Option<BigRational>,
    hi: Option<BigRational>,
}

impl Window {
    fn contains(&self, v: &BigRational) -> bool {
        self.lo.as_ref().map_or(true, |lo| v > lo) && self.hi.as_ref().map_or(true, |hi| v < hi)
    }

    fn clip(&self, lo: BigRational, hi: BigRational) -> (BigRational, BigRational) {
        let lo = match &self.lo {
            Some(w) if *w > lo => w.clone(),
            _ => lo,
        };
        let hi = match &self.hi {
            Some(w) if *w < hi => w.clone(),
            _ => hi,
        };
        (lo, hi)
    }
}

/// Sample offsets inside `(-1, 1)` used to screen a candidate interval.
const SCREEN: [f64; 15] = [
    -0.875, -0.75, -0.625, -0.5, -0.375, -0.25, -0.125, 0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875,
];

/// A construction in progress.
pub struct Construction<M> {
    series: Series,
    model: M,
    a: Enumeration,
    b: Enumeration,
    alphas: Vec<ElementRef>,
    betas: Vec<ElementRef>,
    pending: Option<ElementRef>,
    used_alpha_values: BTreeSet<BigRational>,
    used_beta_values: BTreeSet<BigRational>,
    used_alpha_floats: BTreeSet<u64>,
    trace: Vec<StepTrace>,
    options: EngineOptions,
}

fn float_key(x: f64) -> u64 {
    // +0 and -0 are the same root.
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

/// `ln|x|`, with `ln 0 = -inf`.
fn ln_abs(x: f64) -> f64 {
    x.abs().ln()
}

impl<M: EtaModel> Construction<M> {
    pub fn new(carrier: Carrier, model: M, a: SetKind, b: SetKind, options: EngineOptions) -> Result<Self> {
        Ok(Self {
            series: Series::new(carrier),
            model,
            a: Enumeration::new(a)?,
            b: Enumeration::new(b)?,
            alphas: Vec::new(),
            betas: Vec::new(),
            pending: None,
            used_alpha_values: BTreeSet::new(),
            used_beta_values: BTreeSet::new(),
            used_alpha_floats: BTreeSet::new(),
            trace: Vec::new(),
            options,
        })
    }

    pub fn series(&self) -> &Series {
        &self.series
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn trace(&self) -> &[StepTrace] {
        &self.trace
    }

    pub fn alphas(&self) -> &[ElementRef] {
        &self.alphas
    }

    pub fn betas(&self) -> &[ElementRef] {
        &self.betas
    }

    /// The beta selected for the next even step, if any.
    pub fn pending_beta(&self) -> Option<&ElementRef> {
        self.pending.as_ref()
    }

    pub fn steps(&self) -> usize {
        self.series.len()
    }

    pub fn run(&mut self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidInput("step count must be positive".into()));
        }
        while self.steps() < n {
            self.step()?;
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<()> {
        match self.steps() {
            0 => self.step_initial(),
            k if k % 2 == 1 => self.step_even(),
            _ => self.step_odd(),
        }
    }

    fn select_pending(&mut self) -> Result<()> {
        let next = self.b.first_unused()?;
        self.b.mark_used(next.index.clone());
        self.used_beta_values.insert(next.value.clone());
        self.pending = Some(next);
        Ok(())
    }

    fn commit(
        &mut self,
        kind: StepKind,
        alpha: ElementRef,
        beta: ElementRef,
        lambda: f64,
        eta: Option<EtaRecord>,
        solve_residual: Option<f64>,
        exact_hit: bool,
    ) -> Result<()> {
        let af = alpha.value_f64();
        let bf = beta.value_f64();
        self.a.mark_used(alpha.index.clone());
        self.b.mark_used(beta.index.clone());
        self.used_alpha_values.insert(alpha.value.clone());
        self.used_beta_values.insert(beta.value.clone());
        self.used_alpha_floats.insert(float_key(af));
        self.series.push(af, lambda);
        let residual = (self.series.value_real(af) - bf).abs();
        self.trace.push(StepTrace {
            step: self.series.len(),
            kind,
            alpha: af,
            alpha_exact: alpha.value.to_string(),
            alpha_index: alpha.index.to_string(),
            beta: bf,
            beta_exact: beta.value.to_string(),
            beta_index: beta.index.to_string(),
            lambda,
            eta,
            solve_residual,
            residual,
            exact_hit,
        });
        self.alphas.push(alpha);
        self.betas.push(beta);
        Ok(())
    }

    fn step_initial(&mut self) -> Result<()> {
        let alpha = self.a.first_unused()?;
        let beta = self.b.first_unused()?;
        let (af, bf) = (alpha.value_f64(), beta.value_f64());
        let base = self.series.carrier.base.eval_real(af);
        let modulator = self.series.carrier.modulator.eval_real(af);
        if modulator == 0.0 {
            return Err(Error::InvariantBreach("modulator vanishes at the first root".into()));
        }
        let lambda = (bf - base) / modulator;
        self.commit(StepKind::Initial, alpha, beta, lambda, None, None, false)?;
        self.select_pending()
    }

    /// `modulator(x) h_n(x)` on the real line.
    fn weighted_term(&self, term: &PreparedTerm<'_>, x: f64, factor: OddFactor) -> f64 {
        let h = term.eval(Complex64::new(x, 0.0)).0.re;
        let m = match factor {
            OddFactor::Modulator => self.series.carrier.modulator.eval_real(x),
            OddFactor::Base => self.series.carrier.base.eval_real(x),
        };
        m * h
    }

    /// Floats within `ulp_scan` of `x0` that map exactly onto `target`.
    fn exact_hits(&self, x0: f64, target: f64) -> Vec<f64> {
        let mut hits = Vec::new();
        let mut x = x0;
        for _ in 0..=self.options.ulp_scan {
            if self.series.value_real(x) == target {
                hits.push(x);
            }
            x = x.next_down();
        }
        x = x0.next_up();
        for _ in 0..self.options.ulp_scan {
            if self.series.value_real(x) == target {
                hits.push(x);
            }
            x = x.next_up();
        }
        hits.sort_by(|p, q| (p - x0).abs().total_cmp(&(q - x0).abs()).then(p.total_cmp(q)));
        hits
    }

    /// Exact bounds that keep the pairing increasing: the new partner of
    /// `v` must lie strictly between the partners of its neighbours.
    fn order_window(own: &[ElementRef], other: &[ElementRef], v: &BigRational) -> Window {
        let mut w = Window::default();
        for (o, p) in own.iter().zip(other) {
            if o.value < *v {
                if w.lo.as_ref().map_or(true, |lo| p.value > *lo) {
                    w.lo = Some(p.value.clone());
                }
            } else if o.value > *v && w.hi.as_ref().map_or(true, |hi| p.value < *hi) {
                w.hi = Some(p.value.clone());
            }
        }
        w
    }

    fn alpha_window(&self, beta: &BigRational) -> Window {
        Self::order_window(&self.betas, &self.alphas, beta)
    }

    fn beta_window(&self, alpha: &BigRational) -> Window {
        Self::order_window(&self.alphas, &self.betas, alpha)
    }

    /// Smallest-index unused member whose binary64 rounding is `x`.
    fn simplest_in_cell(
        &self,
        set: &Enumeration,
        x: f64,
        window: &Window,
        used: &BTreeSet<BigRational>,
    ) -> Option<ElementRef> {
        let (lo, hi) = rounding_cell(x)?;
        let (lo, hi) = window.clip(lo, hi);
        if lo >= hi {
            return None;
        }
        set.find_in_interval(&lo, &hi, used, self.options.search_cap).ok()
    }

    fn unused_alpha(&self, v: BigRational, window: &Window) -> Option<ElementRef> {
        if !window.contains(&v) || self.used_alpha_floats.contains(&float_key(to_f64(&v))) {
            return None;
        }
        let index = self.a.index_within(&v, self.options.search_cap)?;
        if self.a.is_used(&index) || self.used_alpha_values.contains(&v) {
            return None;
        }
        Some(ElementRef { index, value: v })
    }

    /// `lambda` putting `f_n(alpha) = beta`, with `ln |lambda|`.
    ///
    /// While `f` is still a polynomial the gap `beta - f(alpha)` is taken in
    /// exact arithmetic; afterwards it is the gap between binary64 values.
    fn solve_lambda(&self, exact_f: Option<&[BigRational]>, alpha: &BigRational, beta: &BigRational, hv: f64) -> (f64, f64) {
        match exact_f {
            Some(c) => {
                let gap = beta - eval_exact(c, alpha);
                if gap.is_zero() {
                    return (0.0, f64::NEG_INFINITY);
                }
                let ln = ln_abs_rational(&gap) - ln_abs(hv);
                let sign = if gap.is_negative() == (hv < 0.0) { 1.0 } else { -1.0 };
                (sign * ln.exp(), ln)
            }
            None => {
                let gap = to_f64(beta) - self.series.value_real(to_f64(alpha));
                (gap / hv, ln_abs(gap) - ln_abs(hv))
            }
        }
    }

    fn step_even(&mut self) -> Result<()> {
        let n = self.steps() + 1;
        let beta = self
            .pending
            .take()
            .ok_or_else(|| Error::InvariantBreach("even step without a selected beta".into()))?;
        let target = beta.value_f64();
        let eta = self.model.caps(&self.series, n)?;
        let (x0, solve_residual) = self.series.solve_preimage(target)?;
        let window = self.alpha_window(&beta.value);
        let exact_f = self.series.exact_polynomial();

        if self.options.prefer_exact_hits {
            let candidate = match &exact_f {
                // Only a linear polynomial has a closed-form rational preimage.
                Some(c) if c.len() == 2 => self.unused_alpha((&beta.value - &c[0]) / &c[1], &window),
                Some(_) => None,
                None => self
                    .exact_hits(x0, target)
                    .into_iter()
                    .filter(|x| !self.used_alpha_floats.contains(&float_key(*x)))
                    .filter_map(|x| self.simplest_in_cell(&self.a, x, &window, &self.used_alpha_values))
                    .min_by(|p, q| p.index.cmp(&q.index)),
            };
            if let Some(alpha) = candidate {
                return self.commit(StepKind::Even, alpha, beta, 0.0, Some(eta), Some(solve_residual), true);
            }
        }

        let term = self.series.prepared_term(n)?;
        if term.eval(Complex64::new(x0, 0.0)).0 == Complex64::new(0.0, 0.0) {
            return Err(Error::InvariantBreach(format!("term {n} vanishes at the preimage {x0}")));
        }
        let center = match &exact_f {
            Some(_) => x0,
            None => self.exact_hits(x0, target).first().copied().unwrap_or(x0),
        };
        let c = exact(center)?;
        let resolvable = 64.0 * (center.abs().max(f64::MIN_POSITIVE)) * f64::EPSILON;
        let mut half = BigRational::one();
        let mut width = 1.0f64;
        for _ in 0..self.options.max_halvings {
            // Screening on binary64 samples is only meaningful above rounding.
            let screened = width < resolvable
                || SCREEN.iter().all(|&t| {
                    let x = center + width * t;
                    let hv = self.weighted_term(&term, x, OddFactor::Modulator);
                    let gap = target - self.series.value_real(x);
                    hv != 0.0 && (gap == 0.0 || ln_abs(gap) - ln_abs(hv) < eta.ln_eta)
                });
            let (lo, hi) = window.clip(&c - &half, &c + &half);
            if screened && lo < hi {
                let found = self.a.find_in_interval(&lo, &hi, &self.used_alpha_values, self.options.search_cap)?;
                let af = found.value_f64();
                let hv = self.weighted_term(&term, af, OddFactor::Modulator);
                if !self.used_alpha_floats.contains(&float_key(af)) && hv != 0.0 && hv.is_finite() {
                    let (lambda, ln) = self.solve_lambda(exact_f.as_deref(), &found.value, &beta.value, hv);
                    if lambda == 0.0 || ln < eta.ln_eta {
                        drop(term);
                        return self.commit(StepKind::Even, found, beta, lambda, Some(eta), Some(solve_residual), false);
                    }
                }
            }
            half /= BigRational::from_integer(BigInt::from(2));
            width /= 2.0;
        }
        Err(Error::CapExceeded(format!(
            "even step {n}: no admissible alpha after {} halvings",
            self.options.max_halvings
        )))
    }

    fn step_odd(&mut self) -> Result<()> {
        let n = self.steps() + 1;
        let alpha = self.a.first_unused()?;
        let af = alpha.value_f64();
        if self.used_alpha_floats.contains(&float_key(af)) {
            return Err(Error::InvariantBreach(format!(
                "alpha {} rounds onto an earlier root",
                alpha.value
            )));
        }
        let eta = self.model.caps(&self.series, n)?;
        let hv = {
            let term = self.series.prepared_term(n)?;
            self.weighted_term(&term, af, self.options.odd_factor)
        };
        if hv == 0.0 || !hv.is_finite() {
            return Err(Error::InvariantBreach(format!("term {n} vanishes at alpha {af}")));
        }
        let exact_f = self.series.exact_polynomial();
        let b0 = match &exact_f {
            Some(c) => eval_exact(c, &alpha.value),
            None => exact(self.series.value_real(af))?,
        };
        let window = self.beta_window(&alpha.value);

        if self.options.prefer_exact_hits {
            let candidate = match &exact_f {
                Some(_) if window.contains(&b0) => self
                    .b
                    .index_within(&b0, self.options.search_cap)
                    .filter(|i| !self.b.is_used(i) && !self.used_beta_values.contains(&b0))
                    .map(|index| ElementRef { index, value: b0.clone() }),
                Some(_) => None,
                None => self.simplest_in_cell(&self.b, to_f64(&b0), &window, &self.used_beta_values),
            };
            if let Some(beta) = candidate {
                self.commit(StepKind::Odd, alpha, beta, 0.0, Some(eta), None, true)?;
                return self.select_pending();
            }
        }

        let ln_delta = eta.ln_eta + ln_abs(hv);
        let mut delta = if ln_delta < -700.0 {
            let k = (-(ln_delta / LN_2).floor()) as usize;
            BigRational::new(BigInt::one(), BigInt::one() << k)
        } else {
            exact(ln_delta.exp())?
        };
        if delta.is_zero() {
            return Err(Error::InvariantBreach(format!("empty search window at step {n}")));
        }
        for _ in 0..self.options.max_halvings {
            let (lo, hi) = window.clip(&b0 - &delta, &b0 + &delta);
            if lo < hi {
                let beta = self.b.find_in_interval(&lo, &hi, &self.used_beta_values, self.options.search_cap)?;
                let (lambda, ln) = self.solve_lambda(exact_f.as_deref(), &alpha.value, &beta.value, hv);
                if lambda == 0.0 || ln < eta.ln_eta {
                    self.commit(StepKind::Odd, alpha, beta, lambda, Some(eta), None, false)?;
                    return self.select_pending();
                }
            }
            delta /= BigRational::from_integer(BigInt::from(2));
        }
        Err(Error::CapExceeded(format!(
            "odd step {n}: no admissible beta after {} halvings",
            self.options.max_halvings
        )))
    }
}

/// Open interval of reals that round to `x`.
fn rounding_cell(x: f64) -> Option<(BigRational, BigRational)> {
    let v = exact(x).ok()?;
    let two = BigRational::from_integer(BigInt::from(2));
    let lo = (&v + exact(x.next_down()).ok()?) / &two;
    let hi = (&v + exact(x.next_up()).ok()?) / &two;
    Some((lo, hi))
}

/// `ln |r|` for rationals far outside the binary64 range.
pub fn ln_abs_rational(r: &BigRational) -> f64 {
    fn ln_big(x: &BigInt) -> f64 {
        let bits = x.bits();
        if bits <= 1000 {
            x.to_f64().map_or(f64::NAN, |v| v.abs().ln())
        } else {
            let shift = bits - 64;
            let top: BigInt = x >> shift;
            top.to_f64().map_or(f64::NAN, |v| v.abs().ln()) + shift as f64 * LN_2
        }
    }
    if r.is_zero() {
        return f64::NEG_INFINITY;
    }
    ln_big(r.numer()) - ln_big(r.denom())
}

/// Data needed by the shared checks, independent of how it was produced.
pub struct Committed<'a> {
    pub series: &'a Series,
    pub alphas: Vec<BigRational>,
    pub betas: Vec<BigRational>,
    pub alpha_indices: Vec<BigUint>,
    pub beta_indices: Vec<BigUint>,
}

impl<'a, M> From<&'a Construction<M>> for Committed<'a> {
    fn from(c: &'a Construction<M>) -> Self {
        Self {
            series: &c.series,
            alphas: c.alphas.iter().map(|e| e.value.clone()).collect(),
            betas: c.betas.iter().map(|e| e.value.clone()).collect(),
            alpha_indices: c.alphas.iter().map(|e| e.index.clone()).collect(),
            beta_indices: c.betas.iter().map(|e| e.index.clone()).collect(),
        }
    }
}

pub const INTERPOLATION_TOLERANCE: f64 = 1e-9;

/// Interpolation, exact order isomorphism and exhaustiveness.
pub fn check_pairing(c: &Committed<'_>, report: &mut VerificationReport) {
    let worst = c
        .series
        .alphas()
        .iter()
        .zip(&c.betas)
        .map(|(&a, b)| (c.series.value_real(a) - to_f64(b)).abs())
        .fold(0.0f64, |m, r| if r.is_nan() { f64::NAN } else { m.max(r) });
    report.push(
        "interpolation",
        INTERPOLATION_TOLERANCE - worst,
        worst <= INTERPOLATION_TOLERANCE,
        format!("max |f(alpha_j) - beta_j| = {worst:e}"),
    );

    let mut pairs: Vec<(&BigRational, &BigRational)> = c.alphas.iter().zip(&c.betas).collect();
    pairs.sort_by(|p, q| p.0.cmp(q.0));
    let violations = pairs
        .windows(2)
        .filter(|w| !(w[0].0 < w[1].0 && w[0].1 < w[1].1))
        .count();
    report.push(
        "order-isomorphism",
        0.0,
        violations == 0,
        format!("{violations} violations among {} exact pairs", pairs.len()),
    );

    let half = c.alphas.len() / 2;
    let covered = |idx: &[BigUint]| {
        let set: BTreeSet<&BigUint> = idx.iter().collect();
        (1..=half as u64).filter(|k| !set.contains(&BigUint::from(*k))).count()
    };
    let (ma, mb) = (covered(&c.alpha_indices), covered(&c.beta_indices));
    report.push(
        "exhaustiveness",
        0.0,
        ma == 0 && mb == 0,
        format!("first {half} of each enumeration: {ma} missing from A, {mb} from B"),
    );
}

/// Deterministic points in the disk `|z| <= radius` (sunflower layout).
pub fn disk_samples(count: usize, radius: f64) -> Vec<Complex64> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let r = radius * ((k as f64 + 0.5) / count as f64).sqrt();
            Complex64::from_polar(r, golden * k as f64)
        })
        .collect()
}

/// `f(conj z) = conj f(z)` to four units in the last place.
pub fn check_symmetry(series: &Series, samples: &[Complex64], report: &mut VerificationReport) {
    let mut worst = 0.0f64;
    for &z in samples {
        let a = series.eval(z.conj()).0;
        let b = series.eval(z).0.conj();
        let scale = a.norm().max(b.norm()).max(f64::MIN_POSITIVE);
        let rel = (a - b).norm() / scale;
        worst = if rel.is_nan() { f64::NAN } else { worst.max(rel) };
    }
    let tol = 4.0 * f64::EPSILON;
    report.push(
        "conjugate-symmetry",
        tol - worst,
        worst <= tol,
        format!("max relative asymmetry {worst:e} on {} samples", samples.len()),
    );
}
