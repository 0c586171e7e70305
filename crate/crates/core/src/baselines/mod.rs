//! Two-stage comparison arm: the policy samples a discrete skeleton, an
//! inner black-box optimizer fits its continuous slots, and the fitted
//! reward trains the skeleton policy. Every inner objective call is
//! charged to the ledger.

mod decoupled;
mod optim;

pub use decoupled::{
    decoupled_train_step, run_decoupled, sample_skeleton, skeleton_string, AuditRow, DecoupledConfig,
    DecoupledRun, InnerOptimizer, Skeleton,
};
pub use optim::{
    optimize_anneal, optimize_devo, optimize_fd_quasi_newton, search_box, InnerResult, InnerSettings,
    UNBOUNDED_BOX,
};
