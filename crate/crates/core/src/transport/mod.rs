//! Wasserstein-2 tools: exact discrete transport, one-dimensional closed
//! forms, Brenier maps, the WJ and `F_N` functionals, and audits of
//! tensorization and marginal superadditivity.

pub mod audits;
pub mod exact;
pub mod fluctuation;
pub mod measure;
pub mod one_d;

pub use audits::{
    block_marginal, is_block_symmetric, marginal_superadditivity_audit, symmetrize, tensor_power,
    tensorization_audit, write_audit_csv, AuditRow,
};
pub use exact::{w2_exact_discrete, w2_exact_discrete_with_cap, OtSolution, DEFAULT_PLAN_CAP};
pub use fluctuation::{f_n_closed_form, f_n_functional, FnEstimate};
pub use measure::DiscreteMeasure;
pub use one_d::{brenier_map_1d, w2_1d, wj_functional_1d, Law1d, MonotoneMap, QuantileFn, WjValue};
