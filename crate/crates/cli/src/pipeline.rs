//! Runs a configuration and replays a trace.

use serde::{Deserialize, Serialize};

use backforth_core::approxkit::SpecialChaplet;
use backforth_core::birkhoff::{
    build_h, build_phi, default_chaplet, design_epsilon_h, run_theorem2, universal_witnesses, verify_universal,
    UniversalModel, Witness,
};
use backforth_core::engine::{Committed, Series, StepTrace};
use backforth_core::franklin::{self, FranklinModel, SupSettings};
use backforth_core::numkernel::Interval;
use backforth_core::report::VerificationReport;

use crate::config::{Mode, RunConfig};
use crate::error::{CliError, CliResult};
use crate::trace::{Trace, TraceHeader, FORMAT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_sha256: String,
    pub mode: Mode,
    pub verification: VerificationReport,
    #[serde(default)]
    pub phi: Option<VerificationReport>,
    #[serde(default)]
    pub h: Option<VerificationReport>,
    #[serde(default)]
    pub witnesses: Option<Vec<Witness>>,
}

pub struct RunOutput {
    pub trace: Trace,
    pub series: Series,
    pub report: RunReport,
}

fn chaplet_of(cfg: &RunConfig) -> CliResult<SpecialChaplet> {
    let k = cfg
        .chaplet
        .as_ref()
        .ok_or_else(|| CliError::Schema("missing chaplet".into()))?
        .k;
    Ok(default_chaplet(k)?)
}

fn header(cfg: &RunConfig, series: &Series) -> TraceHeader {
    TraceHeader {
        format: FORMAT.into(),
        config_sha256: cfg.hash(),
        config: cfg.clone(),
        carrier: series.carrier().clone(),
    }
}

/// Builds the construction a configuration describes and verifies it.
pub fn execute(cfg: &RunConfig) -> CliResult<RunOutput> {
    match cfg.mode {
        Mode::Theorem1 => {
            let state = franklin::run(cfg.a.clone(), cfg.b.clone(), cfg.budgets(), cfg.steps, cfg.engine_options())?;
            let verification = franklin::verify_state(&state, &cfg.verify_settings());
            let series = state.series().clone();
            Ok(RunOutput {
                trace: Trace {
                    header: header(cfg, &series),
                    steps: state.trace().to_vec(),
                },
                report: RunReport {
                    config_sha256: cfg.hash(),
                    mode: cfg.mode,
                    verification,
                    phi: None,
                    h: None,
                    witnesses: None,
                },
                series,
            })
        }
        Mode::Theorem2 => {
            let chaplet = chaplet_of(cfg)?;
            let cycle = cfg.target_cycle()?;
            let jmax = cfg.chaplet.as_ref().map_or(1, |c| c.jmax);
            let outer = chaplet.radius(chaplet.count() + 1);
            let settings = cfg.artifact_settings();
            let phi = build_phi(&chaplet, &cycle, outer, &settings)?;
            let field = design_epsilon_h(&chaplet, &phi.poly, jmax, outer)?;
            let h = build_h(&chaplet, &field, outer, &settings)?;
            let state = run_theorem2(
                cfg.a.clone(),
                cfg.b.clone(),
                phi.poly.clone(),
                h.poly.clone(),
                &chaplet,
                cfg.budgets(),
                cfg.steps,
                cfg.engine_options(),
                cfg.universal_settings(),
            )?;
            let verification = backforth_core::birkhoff::verify_state(&state, &chaplet, Some(&cycle));
            let series = state.series().clone();
            let witnesses = universal_witnesses(&series, &chaplet, &cycle)?;
            Ok(RunOutput {
                trace: Trace {
                    header: header(cfg, &series),
                    steps: state.trace().to_vec(),
                },
                report: RunReport {
                    config_sha256: cfg.hash(),
                    mode: cfg.mode,
                    verification,
                    phi: Some(phi.report()),
                    h: Some(h.report()),
                    witnesses: Some(witnesses),
                },
                series,
            })
        }
        Mode::VerifyOnly => Err(CliError::Schema("verify-only configs replay an existing trace".into())),
    }
}

/// The series recorded in a trace.
pub fn series_of(trace: &Trace) -> CliResult<Series> {
    let alphas = trace.steps.iter().map(|s| s.alpha).collect();
    let lambdas = trace.steps.iter().map(|s| s.lambda).collect();
    Series::from_parts(trace.header.carrier.clone(), alphas, lambdas).map_err(|e| CliError::Schema(e.to_string()))
}

fn committed<'a>(series: &'a Series, steps: &[StepTrace]) -> CliResult<Committed<'a>> {
    let schema = |e: backforth_core::error::Error| CliError::Schema(e.to_string());
    Ok(Committed {
        series,
        alphas: steps.iter().map(|s| s.alpha_rational()).collect::<Result<_, _>>().map_err(schema)?,
        betas: steps.iter().map(|s| s.beta_rational()).collect::<Result<_, _>>().map_err(schema)?,
        alpha_indices: steps.iter().map(|s| s.alpha_index()).collect::<Result<_, _>>().map_err(schema)?,
        beta_indices: steps.iter().map(|s| s.beta_index()).collect::<Result<_, _>>().map_err(schema)?,
    })
}

/// Checks the invariants on the recorded data, then compares the trace
/// with a fresh rebuild from its own configuration.
pub fn replay(trace: &Trace) -> CliResult<RunReport> {
    let cfg = &trace.header.config;
    cfg.validate()?;
    if cfg.hash() != trace.header.config_sha256 {
        return Err(CliError::Schema("config hash does not match the header".into()));
    }
    let series = series_of(trace)?;
    let c = committed(&series, &trace.steps)?;
    let mut verification = match cfg.mode {
        Mode::Theorem1 => {
            let model = FranklinModel {
                budgets: cfg.budgets(),
                sups: SupSettings::default(),
            };
            franklin::verify(&model, &c, &trace.steps, &cfg.verify_settings())
        }
        Mode::Theorem2 => {
            let chaplet = chaplet_of(cfg)?;
            let cycle = cfg.target_cycle()?;
            let carrier = &trace.header.carrier;
            let model = UniversalModel::new(
                cfg.budgets(),
                &carrier.base,
                carrier.modulator.clone(),
                &chaplet,
                cfg.universal_settings(),
            )?;
            verify_universal(&model, &c, &trace.steps, &chaplet, Some(&cycle))
        }
        Mode::VerifyOnly => return Err(CliError::Schema("a trace cannot record a verify-only run".into())),
    };

    let fresh = execute(cfg)?;
    let same_carrier = fresh.trace.header.carrier == trace.header.carrier;
    let mismatch = trace
        .steps
        .iter()
        .zip(&fresh.trace.steps)
        .position(|(a, b)| serde_json::to_value(a).ok() != serde_json::to_value(b).ok());
    let same_len = trace.steps.len() == fresh.trace.steps.len();
    verification.push(
        "trace-matches-rebuild",
        0.0,
        same_carrier && same_len && mismatch.is_none(),
        match mismatch {
            Some(i) => format!("first differing step: {}", i + 1),
            None if !same_len => format!("{} recorded steps, {} rebuilt", trace.steps.len(), fresh.trace.steps.len()),
            None if !same_carrier => "carrier differs from the rebuild".into(),
            None => "every step record equals the rebuild".into(),
        },
    );
    Ok(RunReport {
        config_sha256: cfg.hash(),
        mode: cfg.mode,
        verification,
        phi: fresh.report.phi,
        h: fresh.report.h,
        witnesses: fresh.report.witnesses,
    })
}

/// `x,f,f_prime` rows at 17 significant digits on a uniform grid.
pub fn samples_csv(series: &Series, window: f64, m: usize) -> CliResult<String> {
    let xs = Interval::symmetric(window)?.grid(m);
    let mut out = String::from("x,f,f_prime\n");
    for x in xs {
        let (f, d) = series.eval_real(x);
        out.push_str(&format!("{x:.16e},{f:.16e},{d:.16e}\n"));
    }
    Ok(out)
}
