//! Rigid transforms, SVD estimation, classical baselines and error metrics.

mod baselines;
mod metrics;
mod svd;
mod transform;

pub use baselines::{icp, nn_matcher, IcpConfig, IcpResult};
pub use metrics::{aggregate_matching_score, matching_score, transform_errors};
pub use svd::estimate_transform_svd;
pub use transform::{rotation_angle, RigidTransform, RIGID_TOLERANCE};
