//! Experiment harnesses: attribution losses, baseline sweeps, ablation
//! tests, the non-conservation descent and the shift-invariance check.

mod ablation;
mod invariance;
mod losses;
mod matrix;
mod nonconservation;
mod sweep;

pub use ablation::{
    ablation_indices, classic_ablation, entropy_ablation, entropy_ablation_sweep, AblationConfig, AblationOutcome,
    Fraction, FractionSweep, Substitute, Target,
};
pub use invariance::{
    entropy_phase_gap, linear_transform_test, BaselinePolicy, InvarianceReport, ShiftShape, ShiftSpec, INVARIANCE_TOL,
};
pub use losses::{average_ranks, kl_loss, spearman_loss, spearman_rho};
pub use matrix::{instance_seed, DEFAULT_FRACTION, mean, median, run_matrix, variance, write_matrix, AblationReport, Evaluator};
pub use nonconservation::{nonconservation_demo, DemoReport, DemoTarget, Marker};
pub use sweep::{baseline_sweep, mean_baseline_sweep, min_loss_histogram, ArgminHistogram, LossKind, Reference, SweepCurve, KL_EPS};
