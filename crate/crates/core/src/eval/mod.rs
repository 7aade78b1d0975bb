//! Simulation settings and predictive-accuracy metrics.

mod metrics;
mod report;
mod settings;

pub use metrics::{c_index, coverage_probability, ibs, mae, rimse, trapezoid, CensoringSurvival, IbsResult};
pub use report::{assess, AssessOptions, Metrics, Predictor};
pub use settings::{
    box_cox, box_cox_derivative, generate, inverse_box_cox, ErrorLaw, SimData, SimSpec, Setting, Simulation, Truth,
};
