//! SP-SHDS data model: states, hybrid arcs, set-valued maps, the system
//! definition and its reduced (slow) system.

mod arc;
mod basic;
mod maps;
mod model;
mod reduced;

pub use arc::{ArcSegment, HybridArc, HybridTime, JumpPoint, Node};
pub use basic::{
    validate_basic_conditions, BasicConditionsReport, ProbeFailure, ProbeFailureKind,
    MAX_RECORDED_FAILURES,
};
pub use maps::{
    BundleFn, BundleSpec, GradientClosure, MapBundle, ScalarClosure, ScalarFn, SelectionBundle,
};
pub use model::{
    distance_to_quasi_steady_state, Atom, JumpDistribution, QssDistance, SlowFastState,
    SystemConfig, SystemDefinition,
};
pub(crate) use model::{lattice, validate_set};
pub use reduced::{build_reduced_system, ReducedSystem, ZProbe};
