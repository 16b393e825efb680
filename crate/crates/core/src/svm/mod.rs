//! Soft-margin SVM: SMO training, linear/RBF kernels, one-vs-one multiclass.

mod grid;
mod kernel;
mod multiclass;
mod smo;

pub use grid::{fit_svm, grid_search, stratified_cap, stratified_folds, GridResult, KernelKind, SvmConfig};
pub use kernel::KernelSpec;
pub use multiclass::{train_multiclass, MulticlassSvm, PairModel};
pub use smo::{
    kkt_audit, sign_label, smo_solve, smo_solve_with, train_binary, BinarySvm, DualSolution, KktReport,
    KERNEL_CACHE_BYTES, SMO_TOL,
};
