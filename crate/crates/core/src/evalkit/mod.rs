//! Automatic evaluation: loss-ratio curves, prompt-following accuracy,
//! first-frame fidelity, dynamic degree and comparison tables.

mod classify;
mod lossratio;
mod metrics;
mod report;

pub use classify::{classify_flow, direction_of, ClassifierParams, MotionCall};
pub use lossratio::{bucket_bounds, buckets_not_worse, loss_ratio, LossRatioCurve, RatioAccumulator, RatioBucket};
pub use metrics::{dynamic_degree, dynamic_degree_from_flow, first_frame_fidelity, static_baseline, Fidelity, PSNR_CAP};
pub use report::{
    classifiable, compare, evaluate, flag_rows, prompt_accuracy, render_table, Candidate, Comparison, EvalOptions,
    EvalReport, DOMINATED_BY_STATIC, STATIC_PATHOLOGY,
};
