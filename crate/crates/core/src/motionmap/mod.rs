//! Optical flow and motion heatmaps.

mod flow;
mod heatmap;

pub use flow::{estimate_flow, estimate_video_flow, FlowField, FlowParams, FlowProvenance};
pub use heatmap::{
    binarize, downsample_heatmap, flow_intensity, heatmap_for_video, heatmap_from_flow,
    motion_stats, motion_stats_from_flow, normalize_intensity, relative_intensity, HeatmapParams,
    MotionHeatmap, MotionStats,
};
