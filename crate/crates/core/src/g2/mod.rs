//! Correlation images from frame streams: the minus-coordinate projection of
//! G² with consecutive-frame accidental subtraction.

mod accumulator;
mod full;
mod image;
mod xcorr;

pub use accumulator::{
    accumulate_frames, accumulate_range, frame_as_f64, AccumulatorParams, CorrAccumulator,
};
pub use full::{g2_full, G2Tensor, MAX_FULL_SIDE};
pub use image::{interpolate_artifacts, CorrelationImage, Interpolation};
pub use xcorr::{overlap_count, xcorr_lags, LagWindow, XcorrMode};
