//! Shared inputs for the criterion benches.

use biphoton_core::detector::{simulate_exposure, ExposureModel, Frame};
use biphoton_core::g2::{AccumulatorParams, LagWindow};
use biphoton_core::measure::RunTemplate;
use biphoton_core::optics::{OpticsConfig, SlmMask};

/// Flat-mask config1 model at an `n × n` ROI.
pub fn model(n: usize) -> ExposureModel {
    RunTemplate::new(OpticsConfig::config1().with_roi(n, n), 1)
        .model(SlmMask::Flat)
        .expect("preset model is valid")
}

pub fn frames(model: &ExposureModel, count: u64) -> Vec<Frame> {
    (0..count).map(|i| simulate_exposure(model, i).0).collect()
}

/// Accumulator settings for an `n × n` ROI with a `(2·half+1)²` lag window.
pub fn params(n: usize, half: usize, bias: f64) -> AccumulatorParams {
    AccumulatorParams::new((n, n), LagWindow::square(half)).with_offset(bias)
}
