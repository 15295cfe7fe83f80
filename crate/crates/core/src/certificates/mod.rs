//! Lyapunov/Foster certificates and their numerical screens.

mod bundle;
mod checks;
mod clarke;
mod comparison;
mod theorem;
mod thresholds;

pub use bundle::{
    compose_foster, CertFn, CertificateBundle, CertificateConfig, CompositeFoster, Constants,
};
pub use checks::{
    check_bound_inequality, check_flow_inequality, check_jump_expectation, jump_expectation,
    CheckContext, CheckId, CheckKind, CheckSettings, Expectation, GridSpec, PointValue,
    ViolationReport,
};
pub use clarke::{
    central_difference, estimate_clarke_gradient, project_bundle, GradientMode, GradientSettings,
};
pub use comparison::{
    scalar_probe, ClassCheck, ComparisonClass, ComparisonFunction, ComparisonSpec,
};
pub use theorem::{
    evaluate_theorem, missing_fields, ChecklistEntry, EntryStatus, LevelSetOutcome,
    TheoremCheckConfig, TheoremChecklist, TheoremId,
};
pub use thresholds::{
    composite_flow_margin, compute_thresholds, quadratic_threshold, FlowConstants, FlowMargin,
    Thresholds,
};
