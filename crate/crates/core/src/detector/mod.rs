//! EMCCD model: pixelization, quantum efficiency, EM gain, smear, readout noise,
//! and the BPF1 frame-stack format.

mod bpf;
mod expose;
mod stack;

pub(crate) use bpf::temp_path;
pub use bpf::{BpfHeader, BpfReader, BpfWriter, BPF_MAGIC, BPF_VERSION, ENCODING_U16_LE};
pub use expose::{
    apply_smear, expose, expose_photons, remove_smear, project_to_pixels, DetectorRngs, DetectorSpec, Frame, Photon, PixelHit,
};
pub use stack::{
    simulate_exposure, simulate_stack, stack_metadata, ExposureModel, ExposureTally, FrameSink,
    StackSummary,
};
