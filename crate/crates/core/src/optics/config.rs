use std::f64::consts::PI;

use crate::constants::{self, config1, config2};
use crate::error::{invalid, Result};

/// Source and imaging constants.
///
/// Lengths are in mm except `wavelength_nm` and `pixel_pitch_um`.
/// `roi` is `(nx, ny)` in camera pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticsConfig {
    pub wavelength_nm: f64,
    pub focal_length_mm: f64,
    /// Gaussian variance parameter of the correlation peak.
    pub entanglement_area_mm2: f64,
    /// Gaussian variance parameter of the intensity image.
    pub beam_area_mm2: f64,
    /// Variance parameter of the SLM-plane envelope `exp(-r^2 / (4 Σ_SLM))`.
    pub slm_envelope_area_mm2: f64,
    pub slm_correlation_width_mm: f64,
    pub magnification: f64,
    pub pixel_pitch_um: f64,
    pub roi: (usize, usize),
}

impl OpticsConfig {
    fn preset(a_e: f64, sigma: f64, mag: f64, f: f64) -> Self {
        OpticsConfig {
            wavelength_nm: constants::WAVELENGTH_NM,
            focal_length_mm: f,
            entanglement_area_mm2: a_e,
            beam_area_mm2: sigma,
            slm_envelope_area_mm2: slm_envelope_area(a_e, constants::WAVELENGTH_NM, f),
            slm_correlation_width_mm: constants::SLM_CORRELATION_WIDTH_MM,
            magnification: mag,
            pixel_pitch_um: constants::PIXEL_PITCH_UM,
            roi: (constants::ROI_PIXELS, constants::ROI_PIXELS),
        }
    }

    pub fn config1() -> Self {
        Self::preset(
            config1::ENTANGLEMENT_AREA_MM2,
            config1::BEAM_AREA_MM2,
            config1::MAGNIFICATION,
            config1::FOCAL_LENGTH_MM,
        )
    }

    pub fn config2() -> Self {
        Self::preset(
            config2::ENTANGLEMENT_AREA_MM2,
            config2::BEAM_AREA_MM2,
            config2::MAGNIFICATION,
            config2::FOCAL_LENGTH_MM,
        )
    }

    pub fn with_roi(mut self, nx: usize, ny: usize) -> Self {
        self.roi = (nx, ny);
        self
    }

    /// Re-derive Σ_SLM from A_e, λ and f.
    pub fn with_consistent_envelope(mut self) -> Self {
        self.slm_envelope_area_mm2 =
            slm_envelope_area(self.entanglement_area_mm2, self.wavelength_nm, self.focal_length_mm);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength", self.wavelength_nm),
            ("focal length", self.focal_length_mm),
            ("A_e", self.entanglement_area_mm2),
            ("Sigma", self.beam_area_mm2),
            ("Sigma_SLM", self.slm_envelope_area_mm2),
            ("w_SLM", self.slm_correlation_width_mm),
            ("magnification", self.magnification),
            ("pixel pitch", self.pixel_pitch_um),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.beam_area_mm2 <= self.entanglement_area_mm2 {
            return Err(invalid(format!(
                "Sigma ({}) must exceed A_e ({})",
                self.beam_area_mm2, self.entanglement_area_mm2
            )));
        }
        if self.roi.0 < 2 || self.roi.1 < 2 {
            return Err(invalid(format!("ROI must be at least 2x2, got {:?}", self.roi)));
        }
        Ok(())
    }

    pub fn wavelength_mm(&self) -> f64 {
        self.wavelength_nm * 1e-6
    }

    /// λ·f in mm², the scale from SLM spatial frequency to sample-plane lag.
    pub fn lambda_f(&self) -> f64 {
        self.wavelength_mm() * self.focal_length_mm
    }

    pub fn pixel_pitch_mm(&self) -> f64 {
        self.pixel_pitch_um * 1e-3
    }

    /// Sample-plane length covered by one camera pixel.
    pub fn sample_pixel_mm(&self) -> f64 {
        self.pixel_pitch_mm() / self.magnification
    }

    /// Convert a sample-plane length to camera pixels.
    pub fn mm_to_pixels(&self, len_mm: f64) -> f64 {
        len_mm / self.sample_pixel_mm()
    }

    /// Standard deviation of the correlation peak in lag pixels.
    pub fn correlation_sigma_pixels(&self) -> f64 {
        self.mm_to_pixels(self.entanglement_area_mm2.sqrt())
    }

    pub fn roi_pixels(&self) -> usize {
        self.roi.0 * self.roi.1
    }
}

/// SLM-plane envelope area that makes the flat-mask correlation peak have
/// variance `a_e` when transformed with lag = λf·ν.
///
/// The field `exp(-r²/(4S))` has intensity spectrum `exp(-8π²Sν²)`, i.e.
/// variance `1/(16π²S)` in ν and `(λf)²/(16π²S)` in lag.
pub fn slm_envelope_area(a_e: f64, wavelength_nm: f64, focal_length_mm: f64) -> f64 {
    let lf = wavelength_nm * 1e-6 * focal_length_mm;
    lf * lf / (16.0 * PI * PI * a_e)
}
