//! The order-isomorphism construction `f(z) = z + sum lambda_j h_j(z)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::densesets::SetKind;
use crate::engine::{
    check_pairing, check_symmetry, disk_samples, Carrier, Committed, Construction, EngineOptions, EtaModel,
    EtaRecord, Series, StepTrace,
};
use crate::error::{Error, Result};
use crate::numkernel::{
    growth_cap, sup_on_disk_ln, sup_on_real_ln, Disk, GaussianDecay, Interval, DEFAULT_DISK_SAMPLES,
    DEFAULT_REAL_GRID, DEFAULT_SAFETY,
};
use crate::report::VerificationReport;

/// `epsilon_n = base * ratio^n`. The default `1/4, 1/4` gives `4^-(n+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetSchedule {
    pub base: f64,
    pub ratio: f64,
}

impl Default for BudgetSchedule {
    fn default() -> Self {
        Self { base: 0.25, ratio: 0.25 }
    }
}

impl BudgetSchedule {
    pub fn new(base: f64, ratio: f64) -> Result<Self> {
        let s = Self { base, ratio };
        s.validate()?;
        Ok(s)
    }

    /// Positive terms summing to less than one.
    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0 && self.base.is_finite()) {
            return Err(Error::InvalidBudget(format!("base must be positive, got {}", self.base)));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidBudget(format!("ratio must lie in (0, 1), got {}", self.ratio)));
        }
        if self.total() >= 1.0 {
            return Err(Error::InvalidBudget(format!("budgets sum to {} >= 1", self.total())));
        }
        Ok(())
    }

    pub fn epsilon(&self, n: usize) -> f64 {
        self.base * self.ratio.powi(n as i32)
    }

    pub fn ln_epsilon(&self, n: usize) -> f64 {
        self.base.ln() + n as f64 * self.ratio.ln()
    }

    /// `sum_{j >= 1} epsilon_j`.
    pub fn total(&self) -> f64 {
        self.base * self.ratio / (1.0 - self.ratio)
    }

    /// `sum_{j=1}^{n} epsilon_j`.
    pub fn partial(&self, n: usize) -> f64 {
        self.base * self.ratio * (1.0 - self.ratio.powi(n as i32)) / (1.0 - self.ratio)
    }

    /// `sum_{k > n} 2 epsilon_k`.
    pub fn doubled_tail(&self, n: usize) -> f64 {
        2.0 * self.epsilon(n) * self.ratio / (1.0 - self.ratio)
    }

    /// `sum_{k > n} 2 epsilon_k < epsilon_n` for every `n`, i.e. `ratio < 1/3`.
    pub fn satisfies_tail_rule(&self) -> bool {
        2.0 * self.ratio < 1.0 - self.ratio
    }
}

/// Sampling parameters for the three sup bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupSettings {
    pub disk_samples: usize,
    pub real_grid: usize,
    pub growth_samples: usize,
    pub safety: f64,
}

impl Default for SupSettings {
    fn default() -> Self {
        Self {
            disk_samples: DEFAULT_DISK_SAMPLES,
            real_grid: DEFAULT_REAL_GRID,
            growth_samples: 512,
            safety: DEFAULT_SAFETY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FranklinModel {
    pub budgets: BudgetSchedule,
    pub sups: SupSettings,
}

impl EtaModel for FranklinModel {
    fn epsilon(&self, n: usize) -> f64 {
        self.budgets.epsilon(n)
    }

    fn ln_epsilon(&self, n: usize) -> f64 {
        self.budgets.ln_epsilon(n)
    }

    fn caps(&self, series: &Series, n: usize) -> Result<EtaRecord> {
        let term = series.prepared_term(n)?;
        let disk = sup_on_disk_ln(
            |z| term.ln_abs(z),
            Disk::centered(n as f64),
            self.sups.disk_samples,
            self.sups.safety,
        )?;
        let roots = &series.alphas()[..n - 1];
        let decay = GaussianDecay {
            degree: n,
            max_root_abs: roots.iter().fold(0.0f64, |m, a| m.max(a.abs())),
        };
        let real = sup_on_real_ln(
            |x| term.ln_abs_derivative_real(x),
            decay,
            decay.required_half_width(),
            self.sups.real_grid,
            self.sups.safety,
        )?;
        let growth = growth_cap(roots, self.sups.growth_samples, self.sups.safety)?;
        let le = self.ln_epsilon(n);
        let ln_eta = (le - disk.ln_value)
            .min(le - real.ln_value)
            .min(self.ln_growth_budget(n) - growth.ln_value);
        if !ln_eta.is_finite() {
            return Err(Error::InvariantBreach(format!("step {n}: cap is not finite")));
        }
        Ok(EtaRecord {
            ln_eta,
            ln_sup_disk: disk.ln_value,
            ln_sup_real: real.ln_value,
            ln_sup_growth: growth.ln_value,
        })
    }
}

pub type FranklinState = Construction<FranklinModel>;

pub fn new_state(a: SetKind, b: SetKind, budgets: BudgetSchedule, options: EngineOptions) -> Result<FranklinState> {
    budgets.validate()?;
    let model = FranklinModel {
        budgets,
        sups: SupSettings::default(),
    };
    Construction::new(Carrier::identity(), model, a, b, options)
}

pub fn run(a: SetKind, b: SetKind, budgets: BudgetSchedule, n: usize, options: EngineOptions) -> Result<FranklinState> {
    let mut s = new_state(a, b, budgets, options)?;
    s.run(n)?;
    Ok(s)
}

/// Cap for step `n >= 2` given the first `n - 1` roots of `series`.
pub fn eta_cap(model: &FranklinModel, series: &Series, n: usize) -> Result<EtaRecord> {
    model.caps(series, n)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySettings {
    pub window: f64,
    pub grid: usize,
    pub growth_samples: usize,
    pub growth_radius: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            window: 5.0,
            grid: 10_000,
            growth_samples: 1000,
            growth_radius: 3.0,
        }
    }
}

/// `epsilon_n - |lambda_n| sup` computed without overflowing the sup.
pub fn margin(budget: f64, lambda: f64, ln_sup: f64) -> f64 {
    if lambda == 0.0 {
        budget
    } else {
        budget - (lambda.abs().ln() + ln_sup).exp()
    }
}

/// Per-step margins of the recorded caps.
pub fn check_step_margins<M: EtaModel>(model: &M, trace: &[StepTrace], growth_label: &str, report: &mut VerificationReport) {
    let mut worst_disk = f64::INFINITY;
    let mut worst_real = f64::INFINITY;
    let mut worst_growth = f64::INFINITY;
    let mut eta_ok = true;
    let mut missing = 0usize;
    for t in trace.iter().filter(|t| t.step >= 2) {
        let Some(e) = t.eta else {
            missing += 1;
            continue;
        };
        let n = t.step;
        // Relative margins so late steps with tiny budgets stay comparable.
        let eps = model.epsilon(n);
        let g = model.ln_growth_budget(n).exp();
        let real = model.ln_real_budget(n).exp();
        worst_disk = worst_disk.min(margin(eps, t.lambda, e.ln_sup_disk) / eps);
        worst_real = worst_real.min(margin(real, t.lambda, e.ln_sup_real) / real);
        worst_growth = worst_growth.min(margin(g, t.lambda, e.ln_sup_growth) / g);
        eta_ok &= t.lambda == 0.0 || t.lambda.abs().ln() < e.ln_eta;
    }
    let detail = |what: &str| format!("min over steps of (budget - |lambda| sup) / budget, {what}");
    report.push_margin("step-margin-disk", worst_disk.min(if missing > 0 { -1.0 } else { f64::INFINITY }), detail("disk"));
    report.push_margin("step-margin-real", worst_real, detail("real line derivative"));
    report.push_margin(format!("step-margin-{growth_label}"), worst_growth, detail(growth_label));
    report.push(
        "lambda-below-eta",
        0.0,
        eta_ok && missing == 0,
        format!("{missing} steps without a recorded cap"),
    );
}

/// All invariant checks for a committed plain construction.
pub fn verify(
    model: &FranklinModel,
    committed: &Committed<'_>,
    trace: &[StepTrace],
    settings: &VerifySettings,
) -> VerificationReport {
    let mut report = VerificationReport::new();
    report.note("sup bounds are sampled with a safety factor, not certified");
    let series = committed.series;
    check_pairing(committed, &mut report);

    let floor = 1.0 - model.budgets.partial(series.len());
    let min_slope = match Interval::symmetric(settings.window) {
        Ok(w) => w
            .grid(settings.grid.max(2))
            .into_iter()
            .map(|x| series.eval_real(x).1)
            .fold(f64::INFINITY, |m, d| if d.is_nan() { f64::NAN } else { m.min(d) }),
        Err(_) => f64::NAN,
    };
    report.push(
        "derivative-floor",
        min_slope - floor,
        min_slope >= floor - 1e-9,
        format!("min f' = {min_slope} against floor {floor}"),
    );

    check_step_margins(model, trace, "growth", &mut report);

    let lambda1 = series.lambdas().first().copied().unwrap_or(0.0).abs();
    let samples = disk_samples(settings.growth_samples, settings.growth_radius);
    let worst = samples
        .iter()
        .map(|&z| {
            let r = z.norm();
            let bound = r + lambda1 + (r * r * r).exp();
            (bound - series.eval(z).0.norm()) / bound
        })
        .fold(f64::INFINITY, |m, v| if v.is_nan() { f64::NAN } else { m.min(v) });
    report.push(
        "growth",
        worst,
        worst >= 0.0,
        format!("min relative slack of |z| + |lambda_1| + e^(|z|^3) over {} samples", samples.len()),
    );

    let sym: Vec<Complex64> = disk_samples(256, settings.growth_radius);
    check_symmetry(series, &sym, &mut report);
    report
}

pub fn verify_state(state: &FranklinState, settings: &VerifySettings) -> VerificationReport {
    verify(state.model(), &Committed::from(state), state.trace(), settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densesets::exact;
    use crate::engine::StepKind;

    fn dyadic() -> SetKind {
        SetKind::Dyadic
    }

    fn shifted(shift: f64) -> SetKind {
        SetKind::AffineImage {
            base: Box::new(SetKind::Dyadic),
            scale: 1.0,
            shift,
        }
    }

    #[test]
    fn default_budgets() {
        let b = BudgetSchedule::default();
        assert_eq!(b.epsilon(1), 1.0 / 16.0);
        assert_eq!(b.epsilon(2), 1.0 / 64.0);
        assert!((b.total() - 1.0 / 12.0).abs() < 1e-16);
        assert!(b.satisfies_tail_rule());
        for n in 1..30 {
            assert!(b.doubled_tail(n) < b.epsilon(n));
            let closed = 2.0 / 3.0 * 4f64.powi(-(n as i32 + 1));
            assert!((b.doubled_tail(n) / closed - 1.0).abs() < 1e-14);
        }
        assert!(BudgetSchedule::new(0.9, 0.6).is_err());
        assert!(!BudgetSchedule::new(0.1, 0.4).unwrap().satisfies_tail_rule());
    }

    #[test]
    fn empty_and_first_step() {
        let mut s = new_state(dyadic(), shifted(1.0), BudgetSchedule::default(), EngineOptions::default()).unwrap();
        assert_eq!(s.series().eval_real(0.7), (0.7, 1.0));
        s.step().unwrap();
        assert_eq!(s.series().lambdas(), &[1.0]);
        assert_eq!(s.series().value_real(3.25), 4.25);
        assert_eq!(s.trace()[0].kind, StepKind::Initial);
    }

    #[test]
    fn eta_cap_disk_factor() {
        let model = FranklinModel {
            budgets: BudgetSchedule::default(),
            sups: SupSettings::default(),
        };
        let series = Series::from_parts(Carrier::identity(), vec![0.0], vec![1.0]).unwrap();
        let e = eta_cap(&model, &series, 2).unwrap();
        let oracle = (1.0 / 64.0) / (2.0 * 4f64.exp() * 1.25);
        let disk = (model.ln_epsilon(2) - e.ln_sup_disk).exp();
        assert!((disk / oracle - 1.0).abs() < 1e-3, "{disk} vs {oracle}");
        assert!(e.ln_eta <= model.ln_epsilon(2) - e.ln_sup_disk);
        assert!(e.ln_eta.is_finite());
        let loose = FranklinModel {
            sups: SupSettings { safety: 2.0, ..SupSettings::default() },
            ..model
        };
        assert!(eta_cap(&loose, &series, 2).unwrap().ln_eta < e.ln_eta);
    }

    #[test]
    fn identity_run() {
        let s = run(dyadic(), dyadic(), BudgetSchedule::default(), 20, EngineOptions::default()).unwrap();
        assert!(s.series().lambdas().iter().all(|&l| l == 0.0));
        for x in [-3.3, 0.0, 1.7] {
            assert_eq!(s.series().eval_real(x), (x, 1.0));
        }
        for (a, b) in s.alphas().iter().zip(s.betas()) {
            assert_eq!(a.value, b.value);
        }
        let r = verify_state(&s, &VerifySettings::default());
        assert!(r.overall_pass, "{:?}", r.failures().collect::<Vec<_>>());
        assert_eq!(r.get("derivative-floor").unwrap().detail.split(' ').nth(3), Some("1"));
    }

    #[test]
    fn shift_run() {
        let s = run(dyadic(), shifted(1.0), BudgetSchedule::default(), 20, EngineOptions::default()).unwrap();
        assert_eq!(s.series().lambdas()[0], 1.0);
        assert!(s.series().lambdas()[1..].iter().all(|&l| l == 0.0));
        for (a, b) in s.alphas().iter().zip(s.betas()) {
            assert_eq!(&a.value + exact(1.0).unwrap(), b.value);
        }
        assert!(verify_state(&s, &VerifySettings::default()).overall_pass);
    }

    #[test]
    fn tampered_lambda_fails_margins() {
        let mut s = run(dyadic(), shifted(0.5), BudgetSchedule::default(), 6, EngineOptions::default()).unwrap();
        let mut trace = s.trace().to_vec();
        let eta = trace[1].eta.unwrap();
        trace[1].lambda = 2.0 * eta.ln_eta.exp();
        let model = *s.model();
        let report = verify(&model, &Committed::from(&s), &trace, &VerifySettings::default());
        assert!(!report.get("lambda-below-eta").unwrap().passed);
        assert!(!report.overall_pass);
        s.run(8).unwrap();
    }

    #[test]
    fn explicit_list_exhausts() {
        let a = SetKind::ExplicitList { values: vec![0.0, 1.0, 2.0] };
        let err = run(a, dyadic(), BudgetSchedule::default(), 10, EngineOptions::default()).err().unwrap();
        assert!(matches!(err, Error::Exhausted | Error::CapExceeded(_)), "{err:?}");
    }

    #[test]
    fn odd_step_search_without_preference() {
        let opts = EngineOptions {
            prefer_exact_hits: false,
            ..EngineOptions::default()
        };
        let s = run(SetKind::SignedCalkinWilf, shifted(0.5), BudgetSchedule::default(), 6, opts).unwrap();
        for t in s.trace().iter().skip(1) {
            let e = t.eta.unwrap();
            assert!(t.lambda == 0.0 || t.lambda.abs().ln() < e.ln_eta);
        }
        let r = verify_state(&s, &VerifySettings::default());
        assert!(r.overall_pass, "{:?}", r.failures().collect::<Vec<_>>());
    }
}
