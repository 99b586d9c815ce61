//! Universal carrier, damper and the warped back-and-forth construction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::approxkit::{
    re_patch_all, EpsilonField, PatchSchedule, SpecialChaplet, StageReport, TelescopeReport, CIRCLE_SAMPLES,
    WINDOW_SAMPLES,
};
use crate::densesets::SetKind;
use crate::engine::{
    check_pairing, check_symmetry, disk_samples, Carrier, Committed, Construction, EngineOptions, EtaModel, EtaRecord,
    Series, StepKind, StepTrace,
};
use crate::error::{Error, Result};
use crate::franklin::{check_step_margins, BudgetSchedule};
use crate::numkernel::{sup_on_disk_ln, Disk, Interval, RealPoly, DEFAULT_DISK_SAMPLES, DEFAULT_REAL_GRID, DEFAULT_SAFETY};
use crate::report::VerificationReport;
use crate::serde_ext;

/// `r_n = 2^n`, `E_n^+` centred at `1.5 * 2^n i` with radius `2^(n-2)`.
pub fn default_chaplet(k: usize) -> Result<SpecialChaplet> {
    if k == 0 {
        return Err(Error::InvalidInput("a chaplet needs at least one disc".into()));
    }
    let p = |n: usize| 2f64.powi(n as i32);
    SpecialChaplet::new(
        (1..=k + 1).map(p).collect(),
        (1..=k)
            .map(|n| Disk::new(Complex64::new(0.0, 1.5 * p(n)), p(n) / 4.0))
            .collect(),
    )
}

/// Finitely many target polynomials assigned cyclically to the discs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetCycle {
    pub targets: Vec<RealPoly>,
}

impl TargetCycle {
    pub fn new(targets: Vec<RealPoly>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidInput("target cycle is empty".into()));
        }
        Ok(Self { targets })
    }

    /// `1/2`, `z` and `z^2 - z/4`.
    pub fn default_three() -> Self {
        Self {
            targets: vec![
                RealPoly::constant(0.5),
                RealPoly::identity(),
                RealPoly::new(vec![0.0, -0.25, 1.0]),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Target index of disc `n >= 1`.
    pub fn assignment(&self, n: usize) -> usize {
        (n - 1) % self.targets.len()
    }

    pub fn target_for(&self, n: usize) -> &RealPoly {
        &self.targets[self.assignment(n)]
    }

    pub fn discs_for(&self, target: usize, k: usize) -> Vec<usize> {
        (1..=k).filter(|&n| self.assignment(n) == target).collect()
    }

    /// Every target owns at least two discs.
    pub fn covers_twice(&self, k: usize) -> bool {
        (0..self.len()).all(|t| self.discs_for(t, k).len() >= 2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSettings {
    pub budget_base: f64,
    pub budget_ratio: f64,
    pub window_grid: usize,
}

impl Default for ArtifactSettings {
    fn default() -> Self {
        Self {
            budget_base: 0.25,
            budget_ratio: 0.25,
            window_grid: 10_000,
        }
    }
}

fn grid_min_slope(p: &RealPoly, window: f64, m: usize) -> Result<f64> {
    Ok(Interval::symmetric(window)?
        .grid(m)
        .into_iter()
        .map(|x| p.eval_real_with_derivative(x).1)
        .fold(f64::INFINITY, nan_min))
}

fn nan_min(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.min(b)
    }
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// `max |f(z + a_n) - p(z)|` over the circle `|z| = rho_n`.
fn translate_error(f: &dyn Fn(Complex64) -> Complex64, chaplet: &SpecialChaplet, n: usize, p: &RealPoly) -> f64 {
    let d = chaplet.upper(n);
    Disk::centered(d.radius)
        .boundary(CIRCLE_SAMPLES)
        .into_iter()
        .map(|z| (f(z + d.center) - p.eval(z)).norm())
        .fold(0.0, nan_max)
}

fn patch_check(stages: &[StageReport], telescoping: &[TelescopeReport], report: &mut VerificationReport) {
    let worst = stages
        .iter()
        .map(|s| (s.budget - s.value_residual) / s.budget)
        .fold(f64::INFINITY, nan_min);
    let failed: Vec<usize> = stages.iter().filter(|s| !s.passed).map(|s| s.stage).collect();
    report.push(
        "patch-stages",
        worst,
        failed.is_empty(),
        format!("stages over budget: {failed:?}"),
    );
    let tele = telescoping
        .iter()
        .map(|t| (t.bound - t.measured) / t.bound)
        .fold(f64::INFINITY, nan_min);
    report.push_margin("patch-telescoping", tele, "min relative slack of the telescoping bound on the inner disk");
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiArtifact {
    pub poly: RealPoly,
    pub chaplet: SpecialChaplet,
    pub cycle: TargetCycle,
    pub window: f64,
    #[serde(with = "serde_ext::float")]
    pub derivative_floor: f64,
    /// `max |Phi(z + a_n) - p_{cycle(n)}(z)|` on `|z| = rho_n`, per disc.
    pub disc_errors: Vec<f64>,
    pub stages: Vec<StageReport>,
    pub telescoping: Vec<TelescopeReport>,
}

impl PhiArtifact {
    pub fn report(&self) -> VerificationReport {
        let mut r = VerificationReport::new();
        patch_check(&self.stages, &self.telescoping, &mut r);
        let worst = self
            .disc_errors
            .iter()
            .enumerate()
            .map(|(i, e)| (1.0 / (i + 1) as f64 - e) * (i + 1) as f64)
            .fold(f64::INFINITY, nan_min);
        r.push_margin(
            "disc-approximation",
            worst,
            format!("errors {:?} against 1/n", self.disc_errors),
        );
        r.push_margin(
            "derivative-floor",
            self.derivative_floor,
            format!("min Phi' on the window grid of [-{w}, {w}]", w = self.window),
        );
        real_coefficient_check(&self.poly, &mut r);
        r
    }
}

fn real_coefficient_check(p: &RealPoly, r: &mut VerificationReport) {
    let exact = disk_samples(256, 4.0)
        .into_iter()
        .all(|z| p.eval(z.conj()) == p.eval(z).conj())
        && p.coeffs().iter().all(|c| c.is_finite());
    r.push("real-coefficients", 0.0, exact, "p(conj z) == conj p(z) bitwise on 256 samples");
}

fn schedule_for(chaplet: &SpecialChaplet, field: &EpsilonField, s: &ArtifactSettings) -> Result<PatchSchedule> {
    PatchSchedule::geometric(s.budget_base, s.budget_ratio, chaplet, field)
}

/// Runs the patch recursion for the carrier and measures every invariant,
/// without failing on a missed stage budget.
pub fn assemble_phi(
    chaplet: &SpecialChaplet,
    cycle: &TargetCycle,
    window: f64,
    settings: &ArtifactSettings,
) -> Result<PhiArtifact> {
    let k = chaplet.count();
    if window < chaplet.radius(k + 1) {
        return Err(Error::WindowTooSmall {
            window,
            required: chaplet.radius(k + 1),
        });
    }
    let field = EpsilonField::constant(
        window,
        0.25,
        &(1..=k).map(|n| 0.5 / n as f64).collect::<Vec<_>>(),
    )?;
    let schedule = schedule_for(chaplet, &field, settings)?;
    let centers: Vec<Complex64> = (1..=k).map(|n| chaplet.upper(n).center).collect();
    let f_e = |n: usize, z: Complex64| cycle.target_for(n).eval(z - centers[n - 1]);
    let f_r = |x: f64| (x, 1.0);
    let out = re_patch_all(chaplet, &f_e, &f_r, &field, &[], &schedule)?;
    let poly = out.result().clone();
    let eval = |z: Complex64| poly.eval(z);
    let disc_errors = (1..=k).map(|n| translate_error(&eval, chaplet, n, cycle.target_for(n))).collect();
    Ok(PhiArtifact {
        derivative_floor: grid_min_slope(&poly, window, settings.window_grid)?,
        poly,
        chaplet: chaplet.clone(),
        cycle: cycle.clone(),
        window,
        disc_errors,
        stages: out.stages,
        telescoping: out.telescoping,
    })
}

/// [`assemble_phi`] with the stage budgets enforced.
pub fn build_phi(
    chaplet: &SpecialChaplet,
    cycle: &TargetCycle,
    window: f64,
    settings: &ArtifactSettings,
) -> Result<PhiArtifact> {
    let art = assemble_phi(chaplet, cycle, window, settings)?;
    stage_gate(&art.stages)?;
    Ok(art)
}

fn stage_gate(stages: &[StageReport]) -> Result<()> {
    match stages.iter().find(|s| !s.passed) {
        Some(s) => Err(Error::StageFailure {
            stage: s.stage,
            measured: s.value_residual,
            budget: s.budget,
        }),
        None => Ok(()),
    }
}

pub const DEFAULT_JMAX: usize = 2;

/// `ln` of the root-free bound `e^{-Re w^2} (|w| + 2 r_{K+1})^{j-1}` on `|h_j|`.
fn ln_envelope(w: Complex64, j: usize, reach: f64) -> f64 {
    -(w * w).re + (j - 1) as f64 * (w.norm() + reach).ln()
}

/// Tolerance samples for the damper: on `E_n` below `1/|h_j z|` for
/// `j <= min(n, jmax)`; on the real line below `Phi' / |h_j|` for
/// `j <= min(|x| + 1, jmax)`; everywhere below 1; then halved.
pub fn design_epsilon_h(chaplet: &SpecialChaplet, phi: &RealPoly, jmax: usize, window: f64) -> Result<EpsilonField> {
    if jmax == 0 {
        return Err(Error::InvalidInput("jmax must be at least 1".into()));
    }
    let k = chaplet.count();
    let reach = 2.0 * chaplet.radius(k + 1);
    let xs = Interval::symmetric(window)?.grid(WINDOW_SAMPLES + 1);
    let mut real_eps = Vec::with_capacity(xs.len());
    for &x in &xs {
        let (w, dw) = phi.eval_real_with_derivative(x);
        let top = jmax.min(x.abs().floor() as usize + 1);
        let ln_bound = (1..=top)
            .map(|j| dw.ln() - ln_envelope(Complex64::new(w, 0.0), j, reach))
            .fold(0.0, nan_min);
        let e = 0.5 * ln_bound.exp();
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::InvalidBudget(format!("tolerance at x = {x} is {e} (Phi' = {dw})")));
        }
        real_eps.push(e);
    }
    let mut disc_eps = Vec::with_capacity(k);
    for n in 1..=k {
        let ln_min = chaplet
            .upper(n)
            .boundary(CIRCLE_SAMPLES)
            .into_iter()
            .map(|z| {
                let w = phi.eval(z);
                (1..=jmax.min(n))
                    .map(|j| -(ln_envelope(w, j, reach) + z.norm().ln()))
                    .fold(0.0, nan_min)
            })
            .fold(0.0, nan_min);
        let e = 0.5 * ln_min.exp();
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::InvalidBudget(format!("tolerance on disc {n} is {e}")));
        }
        disc_eps.push(e);
    }
    EpsilonField::new(xs, real_eps, disc_eps)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HArtifact {
    pub poly: RealPoly,
    pub field: EpsilonField,
    pub window: f64,
    #[serde(with = "serde_ext::float")]
    pub min_on_window: f64,
    #[serde(with = "serde_ext::float")]
    pub max_on_window: f64,
    /// Max of `|H - 1| / eps(x)` on the window grid.
    #[serde(with = "serde_ext::float")]
    pub real_ratio: f64,
    /// Max of `|H'| / eps(x)` on the window grid.
    #[serde(with = "serde_ext::float")]
    pub slope_ratio: f64,
    /// Max of `|H| / eps_n` over the disc samples.
    #[serde(with = "serde_ext::float")]
    pub disc_ratio: f64,
    pub stages: Vec<StageReport>,
    pub telescoping: Vec<TelescopeReport>,
}

impl HArtifact {
    pub fn report(&self) -> VerificationReport {
        let mut r = VerificationReport::new();
        patch_check(&self.stages, &self.telescoping, &mut r);
        r.push(
            "between-zero-and-two",
            self.min_on_window.min(2.0 - self.max_on_window),
            self.min_on_window > 0.0 && self.max_on_window < 2.0,
            format!("H ranges over [{}, {}] on the window grid", self.min_on_window, self.max_on_window),
        );
        r.push_margin("near-one-on-reals", 1.0 - self.real_ratio, "1 - max |H - 1| / eps");
        r.push_margin("small-on-discs", 1.0 - self.disc_ratio, "1 - max |H| / eps");
        r.push_margin("flat-on-reals", 1.0 - self.slope_ratio, "1 - max |H'| / eps");
        real_coefficient_check(&self.poly, &mut r);
        r
    }
}

/// Runs the patch recursion for the damper (`0` on the discs, `1` on the
/// line) and measures every invariant, without failing on a missed budget.
pub fn assemble_h(
    chaplet: &SpecialChaplet,
    field: &EpsilonField,
    window: f64,
    settings: &ArtifactSettings,
) -> Result<HArtifact> {
    let k = chaplet.count();
    if window < chaplet.radius(k + 1) {
        return Err(Error::WindowTooSmall {
            window,
            required: chaplet.radius(k + 1),
        });
    }
    let schedule = schedule_for(chaplet, field, settings)?;
    let zero = |_: usize, _: Complex64| Complex64::new(0.0, 0.0);
    let one = |_: f64| (1.0, 0.0);
    let out = re_patch_all(chaplet, &zero, &one, field, &[], &schedule)?;
    let poly = out.result().clone();
    let (mut lo, mut hi, mut rr, mut sr) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    for x in Interval::symmetric(window)?.grid(settings.window_grid) {
        let (v, d) = poly.eval_real_with_derivative(x);
        let e = field.at_real(x);
        lo = nan_min(lo, v);
        hi = nan_max(hi, v);
        rr = nan_max(rr, (v - 1.0).abs() / e);
        sr = nan_max(sr, d.abs() / e);
    }
    let dr = chaplet
        .all_disc_samples()
        .into_iter()
        .map(|(n, z)| poly.eval(z).norm() / field.on_disc(n))
        .fold(0.0, nan_max);
    Ok(HArtifact {
        poly,
        field: field.clone(),
        window,
        min_on_window: lo,
        max_on_window: hi,
        real_ratio: rr,
        slope_ratio: sr,
        disc_ratio: dr,
        stages: out.stages,
        telescoping: out.telescoping,
    })
}

/// [`assemble_h`] with the stage budgets enforced.
pub fn build_h(chaplet: &SpecialChaplet, field: &EpsilonField, window: f64, settings: &ArtifactSettings) -> Result<HArtifact> {
    let art = assemble_h(chaplet, field, window, settings)?;
    stage_gate(&art.stages)?;
    Ok(art)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniversalSettings {
    /// Half-width of the window carrying the slope conditions.
    pub window: f64,
    pub grid: usize,
    pub disk_samples: usize,
    pub real_grid: usize,
    pub safety: f64,
}

impl Default for UniversalSettings {
    fn default() -> Self {
        Self {
            window: 8.0,
            grid: 10_000,
            disk_samples: DEFAULT_DISK_SAMPLES,
            real_grid: DEFAULT_REAL_GRID,
            safety: DEFAULT_SAFETY,
        }
    }
}

/// Caps for the warped series `Phi + H sum lambda_j h_j`.
#[derive(Clone, Debug)]
pub struct UniversalModel {
    pub budgets: BudgetSchedule,
    pub settings: UniversalSettings,
    h: RealPoly,
    chaplet_samples: Vec<Complex64>,
    ln_floor: f64,
}

impl UniversalModel {
    pub fn new(budgets: BudgetSchedule, phi: &RealPoly, h: RealPoly, chaplet: &SpecialChaplet, settings: UniversalSettings) -> Result<Self> {
        budgets.validate()?;
        let floor = grid_min_slope(phi, settings.window, settings.grid)?;
        if !(floor > 0.0) {
            return Err(Error::InvariantBreach(format!("carrier slope floor {floor} is not positive")));
        }
        Ok(Self {
            budgets,
            settings,
            h,
            chaplet_samples: chaplet.all_disc_samples().into_iter().map(|(_, z)| z).collect(),
            ln_floor: floor.ln(),
        })
    }

    pub fn slope_floor(&self) -> f64 {
        self.ln_floor.exp()
    }
}

fn ln_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

fn max_ln(values: impl Iterator<Item = f64>, what: &str) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for v in values {
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::InvariantBreach(format!("non-finite {what} sample")));
        }
        best = best.max(v);
    }
    Ok(best)
}

impl EtaModel for UniversalModel {
    fn epsilon(&self, n: usize) -> f64 {
        self.budgets.epsilon(n)
    }

    fn ln_epsilon(&self, n: usize) -> f64 {
        self.budgets.ln_epsilon(n)
    }

    fn ln_real_budget(&self, n: usize) -> f64 {
        self.ln_epsilon(n) + self.ln_floor
    }

    fn caps(&self, series: &Series, n: usize) -> Result<EtaRecord> {
        let term = series.prepared_term(n)?;
        let h = &self.h;
        let s = &self.settings;
        let ln_safety = s.safety.ln();
        let disk = sup_on_disk_ln(
            |z| h.eval(z).norm().ln() + term.ln_abs(z),
            Disk::centered(n as f64),
            s.disk_samples,
            s.safety,
        )?;
        let xs = Interval::symmetric(s.window)?.grid(s.real_grid);
        let real = max_ln(
            xs.into_iter().map(|x| {
                let (hv, hd) = h.eval_real_with_derivative(x);
                let z = Complex64::new(x, 0.0);
                ln_add(hd.abs().ln() + term.ln_abs(z), hv.abs().ln() + term.ln_abs_derivative_real(x))
            }),
            "real-line",
        )? + ln_safety;
        let chaplet = max_ln(
            self.chaplet_samples
                .iter()
                .map(|&z| h.eval(z).norm().ln() + term.ln_abs(z) + z.norm().ln()),
            "chaplet",
        )? + ln_safety;
        let le = self.ln_epsilon(n);
        let ln_eta = (le - disk.ln_value)
            .min(self.ln_real_budget(n) - real)
            .min(self.ln_growth_budget(n) - chaplet);
        if !ln_eta.is_finite() {
            return Err(Error::InvariantBreach(format!("step {n}: cap is not finite")));
        }
        Ok(EtaRecord {
            ln_eta,
            ln_sup_disk: disk.ln_value,
            ln_sup_real: real,
            ln_sup_growth: chaplet,
        })
    }
}

pub type UniversalState = Construction<UniversalModel>;

#[allow(clippy::too_many_arguments)]
pub fn run_theorem2(
    a: SetKind,
    b: SetKind,
    phi: RealPoly,
    h: RealPoly,
    chaplet: &SpecialChaplet,
    budgets: BudgetSchedule,
    n: usize,
    options: EngineOptions,
    settings: UniversalSettings,
) -> Result<UniversalState> {
    let model = UniversalModel::new(budgets, &phi, h.clone(), chaplet, settings)?;
    let mut state = Construction::new(Carrier::warped(phi, h), model, a, b, options)?;
    state.run(n)?;
    Ok(state)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub target: usize,
    pub disc: usize,
    #[serde(with = "serde_ext::float")]
    pub error: f64,
    #[serde(with = "serde_ext::float")]
    pub tolerance: f64,
    pub passed: bool,
    /// Always true: one disc per target is checked, not a limit.
    pub finite: bool,
}

/// Disc of `target` whose translate is closest to the target relative to
/// `tol(n)`. Fails only when no disc carries the target.
pub fn universality_witness(
    f: &dyn Fn(Complex64) -> Complex64,
    chaplet: &SpecialChaplet,
    cycle: &TargetCycle,
    target: usize,
    tol: &dyn Fn(usize) -> f64,
) -> Result<Witness> {
    let discs = cycle.discs_for(target, chaplet.count());
    let p = cycle
        .targets
        .get(target)
        .ok_or_else(|| Error::IndexOutOfRange {
            index: target.to_string(),
            len: cycle.len(),
        })?;
    discs
        .into_iter()
        .map(|n| {
            let error = translate_error(f, chaplet, n, p);
            let tolerance = tol(n);
            Witness {
                target,
                disc: n,
                error,
                tolerance,
                passed: error <= tolerance,
                finite: true,
            }
        })
        .min_by(|x, y| (x.error - x.tolerance).total_cmp(&(y.error - y.tolerance)))
        .ok_or_else(|| Error::InvalidInput(format!("no disc carries target {target}")))
}

/// `max |f - Phi|` over the samples of `E_n^+`.
pub fn carrier_deviation(series: &Series, chaplet: &SpecialChaplet, n: usize) -> f64 {
    let phi = &series.carrier().base;
    chaplet
        .upper(n)
        .boundary(CIRCLE_SAMPLES)
        .into_iter()
        .map(|z| (series.eval(z).0 - phi.eval(z)).norm())
        .fold(0.0, nan_max)
}

pub fn universal_witnesses(series: &Series, chaplet: &SpecialChaplet, cycle: &TargetCycle) -> Result<Vec<Witness>> {
    let f = |z: Complex64| series.eval(z).0;
    let tol = |n: usize| 1.0 / n as f64 + carrier_deviation(series, chaplet, n);
    (0..cycle.len())
        .map(|t| universality_witness(&f, chaplet, cycle, t, &tol))
        .collect()
}

/// All invariant checks for a committed warped construction.
pub fn verify_universal(
    model: &UniversalModel,
    committed: &Committed<'_>,
    trace: &[StepTrace],
    chaplet: &SpecialChaplet,
    cycle: Option<&TargetCycle>,
) -> VerificationReport {
    let mut report = VerificationReport::new();
    report.note("sup bounds are sampled with a safety factor, not certified");
    report.note("universality is witnessed on finitely many discs");
    let series = committed.series;
    check_pairing(committed, &mut report);

    let s = model.settings;
    let min_slope = Interval::symmetric(s.window)
        .map(|w| {
            w.grid(s.grid)
                .into_iter()
                .map(|x| series.eval_real(x).1)
                .fold(f64::INFINITY, nan_min)
        })
        .unwrap_or(f64::NAN);
    report.push(
        "derivative-positive",
        min_slope,
        min_slope > 0.0,
        format!("min f' = {min_slope} on [-{w}, {w}]", w = s.window),
    );

    check_step_margins(model, trace, "chaplet", &mut report);

    let phi = &series.carrier().base;
    let fidelity = chaplet
        .all_disc_samples()
        .into_iter()
        .map(|(_, z)| (series.eval(z).0 - phi.eval(z)).norm() * z.norm())
        .fold(0.0, nan_max);
    report.push(
        "carrier-fidelity",
        1.0 - fidelity,
        fidelity <= 1.0,
        format!("max |f - Phi| |z| on the chaplet = {fidelity:e}"),
    );

    let mut zeros_ok = true;
    for j in 2..=series.len() {
        match series.prepared_term(j) {
            Ok(t) => {
                zeros_ok &= series.alphas()[..j - 1]
                    .iter()
                    .all(|&a| t.eval(Complex64::new(a, 0.0)).0 == Complex64::new(0.0, 0.0));
            }
            Err(_) => zeros_ok = false,
        }
    }
    report.push("warped-zeros", 0.0, zeros_ok, "term j vanishes exactly at alpha_1 .. alpha_{j-1}");

    check_symmetry(series, &disk_samples(256, 3.0), &mut report);

    if let Some(cycle) = cycle {
        match universal_witnesses(series, chaplet, cycle) {
            Ok(ws) => {
                for w in ws {
                    report.push(
                        format!("universality-witness-{}", w.target),
                        w.tolerance - w.error,
                        w.passed,
                        format!("disc {}: error {:e} against {:e} (finite witness)", w.disc, w.error, w.tolerance),
                    );
                }
            }
            Err(e) => report.push("universality-witness", f64::NAN, false, e.to_string()),
        }
    }
    report
}

pub fn verify_state(state: &UniversalState, chaplet: &SpecialChaplet, cycle: Option<&TargetCycle>) -> VerificationReport {
    verify_universal(state.model(), &Committed::from(state), state.trace(), chaplet, cycle)
}

/// `f_1(alpha_1) = beta_1` holds after the first step.
pub fn first_step_holds(state: &UniversalState) -> bool {
    state
        .trace()
        .first()
        .map_or(false, |t| t.kind == StepKind::Initial && t.residual <= 1e-12 * t.beta.abs().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chaplet_geometry() {
        let ch = default_chaplet(6).unwrap();
        let d = ch.upper(1);
        assert_eq!(d.center, Complex64::new(0.0, 3.0));
        assert_eq!(d.radius, 0.5);
        assert!(d.center.norm() - d.radius > 2.0 && d.center.norm() + d.radius < 4.0);
        assert_eq!(ch.lower(1).center, Complex64::new(0.0, -3.0));
        assert!((2..=6).all(|n| ch.upper(n).radius > ch.upper(n - 1).radius));
        assert!(default_chaplet(0).is_err());
    }

    #[test]
    fn cycle_assignment() {
        let c = TargetCycle::default_three();
        assert_eq!(c.discs_for(0, 6), vec![1, 4]);
        assert_eq!(c.discs_for(2, 6), vec![3, 6]);
        assert!(c.covers_twice(6));
        assert!(!c.covers_twice(5));
    }

    #[test]
    fn epsilon_design_monotone_in_jmax() {
        let ch = default_chaplet(3).unwrap();
        let phi = RealPoly::identity();
        let w = ch.radius(4);
        let e2 = design_epsilon_h(&ch, &phi, 2, w).unwrap();
        let e4 = design_epsilon_h(&ch, &phi, 4, w).unwrap();
        assert!(e2.real_eps.iter().chain(&e2.disc_eps).all(|&e| e <= 0.5));
        for (a, b) in e2.real_eps.iter().zip(&e4.real_eps) {
            assert!(b <= a);
        }
        for (a, b) in e2.disc_eps.iter().zip(&e4.disc_eps) {
            assert!(b <= a);
        }
        assert!(design_epsilon_h(&ch, &RealPoly::new(vec![0.0, -1.0]), 2, w).is_err());
    }

    #[test]
    fn witness_on_exact_translates() {
        let ch = default_chaplet(6).unwrap();
        let cycle = TargetCycle::new(vec![RealPoly::zero()]).unwrap();
        let f = |_: Complex64| Complex64::new(0.0, 0.0);
        let w = universality_witness(&f, &ch, &cycle, 0, &|n| 1.0 / n as f64).unwrap();
        assert!(w.passed && w.error == 0.0);
        assert!(universality_witness(&f, &ch, &cycle, 3, &|_| 1.0).is_err());
    }

    #[test]
    fn warped_run_with_trivial_carrier() {
        // With Phi = z the Gaussian grows like e^{y^2} up the imaginary axis,
        // so only a chaplet close to the origin leaves representable caps.
        let ch = default_chaplet(1).unwrap();
        let b = SetKind::AffineImage {
            base: Box::new(SetKind::Dyadic),
            scale: 1.0,
            shift: std::f64::consts::SQRT_2,
        };
        let state = run_theorem2(
            SetKind::SignedCalkinWilf,
            b,
            RealPoly::identity(),
            RealPoly::constant(1.0),
            &ch,
            BudgetSchedule::default(),
            12,
            EngineOptions::default(),
            UniversalSettings::default(),
        )
        .unwrap();
        assert!(first_step_holds(&state));
        let r = verify_state(&state, &ch, None);
        for c in r.checks.iter().filter(|c| c.name != "carrier-fidelity") {
            assert!(c.passed, "{c:?}");
        }
        // With H = 1 nothing damps the lambda_1 term on the discs.
        let l1 = state.series().lambdas()[0].abs();
        let fid = 1.0 - r.get("carrier-fidelity").unwrap().margin;
        assert!(fid >= l1 * 3.5 * 0.99 && fid <= l1 * 3.5 * 1.01 + 1e-9, "{fid} vs {l1}");
    }
}
