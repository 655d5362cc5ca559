//! Training-side utilities: losses, the learning-rate schedule, weight
//! initialization and finite-difference checks.

pub mod gradcheck;
pub mod init;
pub mod losses;
pub mod overfit;
pub mod schedule;

pub use gradcheck::{central_difference, finite_diff_gradcheck, GradcheckReport, DEFAULT_STEP};
pub use init::{he_init, he_init_params};
pub use losses::{masked_velocity_loss, multitask_loss, weighted_bce, LossBreakdown, LossWeights, Reduction, VelocityMask};
pub use overfit::{batch_loss, overfit_config, toy_overfit, OverfitReport, SyntheticBatch};
pub use schedule::{lr_schedule, ScheduleParams};
