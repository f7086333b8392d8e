//! Setup constants for the two imaging configurations and the detector.
//!
//! Lengths are millimetres unless the name says otherwise.

/// Pump-degenerate photon wavelength.
pub const WAVELENGTH_NM: f64 = 814.0;
/// Camera exposure time per frame.
pub const EXPOSURE_S: f64 = 2e-3;
/// Camera acquisition rate.
pub const FRAME_RATE_HZ: f64 = 100.0;
/// EMCCD pixel pitch.
pub const PIXEL_PITCH_UM: f64 = 16.0;
/// EMCCD amplification gain.
pub const EM_GAIN: f64 = 1000.0;
/// Side of the square region of interest used for correlation images.
pub const ROI_PIXELS: usize = 150;
/// Upper end of the photon-pair flux used in the experiments.
pub const MAX_PAIR_RATE_HZ: f64 = 3e6;
/// Nominal photon-pair flux for simulations.
pub const NOMINAL_PAIR_RATE_HZ: f64 = 1e6;
/// Correlation width of the pairs in the SLM plane.
pub const SLM_CORRELATION_WIDTH_MM: f64 = 0.34;
/// Smallest grating period the SLM can display.
pub const SLM_MIN_PERIOD_MM: f64 = 1.3;
/// Thin-crystal check: smallest allowed ratio of grating period to SLM-plane correlation width.
pub const THIN_CRYSTAL_RATIO: f64 = 3.0;
/// Batching of peak-height measurements: batches x frames per batch.
pub const BATCHES: usize = 4;
pub const FRAMES_PER_BATCH: usize = 1000;

/// Lower-magnification configuration (large entanglement area).
pub mod config1 {
    pub const ENTANGLEMENT_AREA_MM2: f64 = 1.72e-3;
    pub const BEAM_AREA_MM2: f64 = 1.92;
    pub const MAGNIFICATION: f64 = 2.0;
    /// Effective focal length from SLM plane to sample plane (chosen, not measured).
    pub const FOCAL_LENGTH_MM: f64 = 200.0;
}

/// Higher-magnification configuration (small entanglement area).
pub mod config2 {
    pub const ENTANGLEMENT_AREA_MM2: f64 = 69.2e-6;
    pub const BEAM_AREA_MM2: f64 = 0.0432;
    pub const MAGNIFICATION: f64 = 10.0;
    /// Effective focal length from SLM plane to sample plane (chosen, not measured).
    pub const FOCAL_LENGTH_MM: f64 = 40.0;
}

/// Detector defaults. Typical EMCCD figures, overridable per run.
pub mod detector {
    pub const QUANTUM_EFFICIENCY: f64 = 0.7;
    pub const READ_NOISE_COUNTS: f64 = 10.0;
    pub const BIAS_COUNTS: f64 = 100.0;
    pub const SMEAR_FRACTION: f64 = 1e-3;
    pub const SATURATION: u16 = u16::MAX;
}

/// SLM diffraction efficiency that brings the ratio plateau down to about 0.25,
/// for window-area ξ at 5 and 6 √A_e with the unshaped leak's tail included.
pub const TUNED_SLM_EFFICIENCY: f64 = 0.47;

/// ETPA strengths for the two absorber presets (ordinal 1:10).
pub const ETPA_STRENGTH_RH6G: f64 = 0.1;
pub const ETPA_STRENGTH_CDSE: f64 = 1.0;
