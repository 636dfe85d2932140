//! Deterministic multi-replica simulation: scripted scenarios, invariant
//! checks, delivery-order enumeration and seeded fuzzing.

mod fuzz;
mod invariants;
mod orders;
mod report;
mod runner;
mod scenario;

pub use fuzz::{
    check_schedule, fuzz, fuzz_catalog, generate, minimize, prefix_orders, replica_ids, FuzzConfig,
    ScheduleCheck, ALL_CHECKS, CHECK_ADDITIVE, CHECK_CAUSAL, CHECK_CONVERGENCE, CHECK_DELIVERY,
    CHECK_LIVENESS, CHECK_MINORITY, CHECK_STEP, FUZZ_SCHEMA,
};
pub use invariants::{check_causal_delivery, check_cluster, check_convergence, check_store, oracle_visibility};
pub use orders::{enumerate_orders, OrderReport, MAX_ENUMERATED};
pub use report::{AssertionResult, Report};
pub use runner::{run, run_with_state, Runner};
pub use scenario::{
    load_scenario, normalize_row, parse_scenario, Assertion, Event, Outcome, Scenario, ScenarioError, Step,
    StepKind, DEFAULT_LOCK_TIMEOUT,
};
