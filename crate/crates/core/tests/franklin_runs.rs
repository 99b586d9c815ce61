use std::time::Instant;

use backforth_core::densesets::SetKind;
use backforth_core::engine::EngineOptions;
use backforth_core::franklin::{run, verify_state, BudgetSchedule, VerifySettings};

fn root2_dyadics() -> SetKind {
    SetKind::AffineImage {
        base: Box::new(SetKind::Dyadic),
        scale: 1.0,
        shift: std::f64::consts::SQRT_2,
    }
}

#[test]
fn generic_run_passes_verification() {
    let t = Instant::now();
    let s = run(SetKind::SignedCalkinWilf, root2_dyadics(), BudgetSchedule::default(), 40, EngineOptions::default()).unwrap();
    let report = verify_state(&s, &VerifySettings::default());
    let failed: Vec<_> = report.failures().map(|c| &c.name).collect();
    assert!(report.overall_pass, "failed checks: {failed:?}");
    assert_eq!(s.trace().len(), 40);
    assert!(t.elapsed().as_secs_f64() < 30.0);
}
