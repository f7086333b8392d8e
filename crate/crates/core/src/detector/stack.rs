use std::collections::BTreeMap;

use rayon::prelude::*;

use super::bpf::BpfWriter;
use super::expose::{expose_photons, project_to_pixels, DetectorRngs, DetectorSpec, Frame, Photon, PixelHit};
use crate::error::{Error, Result};
use crate::medium::{apply_medium, MediumSpec, Survivors};
use crate::rng::{stream_rng, Stream};
use crate::sampler::{sample_exposure_pairs, MinusSampler, SourceSpec};

/// Everything needed to produce one exposure.
#[derive(Debug, Clone)]
pub struct ExposureModel {
    pub source: SourceSpec,
    pub sampler: MinusSampler,
    pub medium: MediumSpec,
    pub detector: DetectorSpec,
}

impl ExposureModel {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.sampler.validate()?;
        self.medium.validate()?;
        self.detector.validate()
    }
}

/// Photon bookkeeping for one or more exposures.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExposureTally {
    pub pairs: u64,
    pub surviving_photons: u64,
    pub intact_pairs: u64,
    pub out_of_roi: u64,
}

impl ExposureTally {
    pub fn add(&mut self, o: &ExposureTally) {
        self.pairs += o.pairs;
        self.surviving_photons += o.surviving_photons;
        self.intact_pairs += o.intact_pairs;
        self.out_of_roi += o.out_of_roi;
    }
}

pub fn simulate_exposure(model: &ExposureModel, index: u64) -> (Frame, ExposureTally) {
    let cfg = &model.source.optics;
    let (nx, ny) = cfg.roi;
    let pairs = sample_exposure_pairs(&model.source, &model.sampler, index);
    let mut medium_rng = stream_rng(model.source.seed, index, Stream::Medium);
    let transparent = model.medium.is_transparent();
    let mut tally = ExposureTally {
        pairs: pairs.len() as u64,
        ..Default::default()
    };
    let mut rngs = DetectorRngs::for_exposure(model.source.seed, index);
    let mut photons = Vec::with_capacity(2 * pairs.len());
    for p in &pairs {
        let draws = [rngs.photon_draws(), rngs.photon_draws()];
        let survivors = if transparent {
            Survivors([Some(p.r1), Some(p.r2)])
        } else {
            apply_medium(p, &model.medium, &mut medium_rng)
        };
        if survivors.count() == 2 {
            tally.intact_pairs += 1;
        }
        for (pos, (qe_draw, gain_draw)) in survivors.0.iter().zip(draws) {
            let Some(pos) = pos else { continue };
            tally.surviving_photons += 1;
            match project_to_pixels(*pos, cfg) {
                PixelHit::Inside { row, col } => photons.push(Photon {
                    pixel: row * nx + col,
                    qe_draw,
                    gain_draw,
                }),
                PixelHit::OutOfRoi => tally.out_of_roi += 1,
            }
        }
    }
    (expose_photons(&photons, nx, ny, &model.detector, &mut rngs, index), tally)
}

/// Destination for frames, fed in exposure order.
pub trait FrameSink {
    fn push(&mut self, frame: &Frame) -> Result<()>;
}

impl FrameSink for Vec<Frame> {
    fn push(&mut self, frame: &Frame) -> Result<()> {
        Vec::push(self, frame.clone());
        Ok(())
    }
}

impl FrameSink for BpfWriter {
    fn push(&mut self, frame: &Frame) -> Result<()> {
        self.write_frame(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackSummary {
    pub frames: u64,
    pub tally: ExposureTally,
}

/// Frames generated in parallel per block; the block size does not affect results.
const BLOCK: u64 = 64;

/// Generate exposures `first..first + count` and stream them to `sink` in order.
pub fn simulate_stack(
    model: &ExposureModel,
    first: u64,
    count: u64,
    sink: &mut dyn FrameSink,
) -> Result<StackSummary> {
    if count < 2 {
        return Err(Error::InsufficientFrames { needed: 2, got: count });
    }
    model.validate()?;
    let mut tally = ExposureTally::default();
    let mut start = first;
    let end = first + count;
    while start < end {
        let stop = (start + BLOCK).min(end);
        let block: Vec<(Frame, ExposureTally)> = (start..stop)
            .into_par_iter()
            .map(|i| simulate_exposure(model, i))
            .collect();
        for (frame, t) in &block {
            sink.push(frame)?;
            tally.add(t);
        }
        start = stop;
    }
    Ok(StackSummary { frames: count, tally })
}

/// Provenance block stored in stack headers.
pub fn stack_metadata(model: &ExposureModel, first: u64) -> BTreeMap<String, String> {
    let s = &model.source;
    let o = &s.optics;
    let d = &model.detector;
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        m.insert(k.to_string(), v);
    };
    put("seed", s.seed.to_string());
    put("first_exposure", first.to_string());
    put("pair_rate_hz", s.pair_rate_hz.to_string());
    put("exposure_s", s.exposure_s.to_string());
    put("slm_efficiency", s.slm_efficiency.to_string());
    put("mask", s.mask.label());
    put("geometry", format!("{:?}", s.geometry));
    put("optics.wavelength_nm", o.wavelength_nm.to_string());
    put("optics.focal_length_mm", o.focal_length_mm.to_string());
    put("optics.A_e_mm2", o.entanglement_area_mm2.to_string());
    put("optics.Sigma_mm2", o.beam_area_mm2.to_string());
    put("optics.Sigma_SLM_mm2", o.slm_envelope_area_mm2.to_string());
    put("optics.magnification", o.magnification.to_string());
    put("optics.pixel_pitch_um", o.pixel_pitch_um.to_string());
    put("optics.roi", format!("{}x{}", o.roi.0, o.roi.1));
    put("medium", format!("{:?}", model.medium.elements));
    put("detector.quantum_efficiency", d.quantum_efficiency.to_string());
    put("detector.em_gain", d.em_gain.to_string());
    put("detector.read_noise", d.read_noise.to_string());
    put("detector.smear", d.smear.to_string());
    put("detector.stray_rate", d.stray_rate.to_string());
    put("detector.bias", d.bias.to_string());
    put("detector.saturation", d.saturation.to_string());
    m
}
