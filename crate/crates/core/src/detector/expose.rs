use ndarray::ArrayView2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};

use crate::constants::detector as defaults;
use crate::constants::EM_GAIN;
use crate::error::{invalid, Result};
use crate::optics::OpticsConfig;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub quantum_efficiency: f64,
    /// Mean counts per photoelectron.
    pub em_gain: f64,
    /// Readout noise RMS in counts.
    pub read_noise: f64,
    /// Fraction of charge left behind per row during vertical transfer.
    pub smear: f64,
    /// Mean background photons per pixel per exposure.
    pub stray_rate: f64,
    pub bias: f64,
    pub saturation: u16,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec {
            quantum_efficiency: defaults::QUANTUM_EFFICIENCY,
            em_gain: EM_GAIN,
            read_noise: defaults::READ_NOISE_COUNTS,
            smear: defaults::SMEAR_FRACTION,
            stray_rate: 0.0,
            bias: defaults::BIAS_COUNTS,
            saturation: defaults::SATURATION,
        }
    }
}

impl DetectorSpec {
    /// No noise, no smear, no background: counts are gain-amplified photoelectrons plus bias.
    pub fn ideal() -> Self {
        DetectorSpec {
            read_noise: 0.0,
            smear: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0) {
            return Err(invalid(format!(
                "quantum efficiency must lie in (0, 1], got {}",
                self.quantum_efficiency
            )));
        }
        if !(self.em_gain > 0.0 && self.em_gain.is_finite()) {
            return Err(invalid(format!("EM gain must be positive, got {}", self.em_gain)));
        }
        if !(self.read_noise >= 0.0 && self.read_noise.is_finite()) {
            return Err(invalid("readout noise must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.smear) {
            return Err(invalid(format!("smear fraction must lie in [0, 1), got {}", self.smear)));
        }
        if !(self.stray_rate >= 0.0 && self.stray_rate.is_finite()) {
            return Err(invalid("stray-light rate must be non-negative"));
        }
        if !(self.bias.is_finite() && self.bias >= 0.0) {
            return Err(invalid("bias must be non-negative"));
        }
        Ok(())
    }
}

/// One camera frame, row-major `height × width`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
    pub index: u64,
}

impl Frame {
    pub fn filled(width: usize, height: usize, value: u16, index: u64) -> Self {
        Frame {
            width,
            height,
            data: vec![value; width * height],
            index,
        }
    }

    pub fn from_fn(width: usize, height: usize, index: u64, mut f: impl FnMut(usize, usize) -> u16) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Frame {
            width,
            height,
            data,
            index,
        }
    }

    pub fn view(&self) -> ArrayView2<'_, u16> {
        ArrayView2::from_shape((self.height, self.width), &self.data).expect("consistent shape")
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.data[row * self.width + col]
    }

    pub fn total(&self) -> u64 {
        self.data.iter().map(|&v| v as u64).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelHit {
    Inside { row: usize, col: usize },
    OutOfRoi,
}

/// Camera pixel hit by a sample-plane position, for an ROI centred on the optical axis.
pub fn project_to_pixels(position_mm: [f64; 2], cfg: &OpticsConfig) -> PixelHit {
    let p = cfg.pixel_pitch_mm();
    let (nx, ny) = cfg.roi;
    let col = ((position_mm[0] * cfg.magnification + nx as f64 * p / 2.0) / p).floor();
    let row = ((position_mm[1] * cfg.magnification + ny as f64 * p / 2.0) / p).floor();
    if col >= 0.0 && row >= 0.0 && (col as usize) < nx && (row as usize) < ny {
        PixelHit::Inside {
            row: row as usize,
            col: col as usize,
        }
    } else {
        PixelHit::OutOfRoi
    }
}

/// Independent random streams used to read out one exposure.
pub struct DetectorRngs {
    pub quantum_efficiency: ChaCha8Rng,
    pub background: ChaCha8Rng,
    pub gain: ChaCha8Rng,
    pub readout: ChaCha8Rng,
}

impl DetectorRngs {
    pub fn for_exposure(seed: u64, index: u64) -> Self {
        DetectorRngs {
            quantum_efficiency: stream_rng(seed, index, Stream::QuantumEfficiency),
            background: stream_rng(seed, index, Stream::Background),
            gain: stream_rng(seed, index, Stream::Gain),
            readout: stream_rng(seed, index, Stream::Readout),
        }
    }
}

/// Charge smear along columns: `S'(y) = S(y) + β·Σ_{y'<y} S(y')`.
/// `signal` is row-major `height × width`.
pub fn apply_smear(signal: &mut [f64], width: usize, height: usize, beta: f64) {
    assert_eq!(signal.len(), width * height);
    if beta == 0.0 {
        return;
    }
    let mut above = vec![0.0; width];
    for r in 0..height {
        let row = &mut signal[r * width..(r + 1) * width];
        for (v, acc) in row.iter_mut().zip(above.iter_mut()) {
            let own = *v;
            *v = own + beta * *acc;
            *acc += own;
        }
    }
}

/// Inverse of [`apply_smear`].
pub fn remove_smear(signal: &mut [f64], width: usize, height: usize, beta: f64) {
    assert_eq!(signal.len(), width * height);
    if beta == 0.0 {
        return;
    }
    let mut above = vec![0.0; width];
    for r in 0..height {
        let row = &mut signal[r * width..(r + 1) * width];
        for (v, acc) in row.iter_mut().zip(above.iter_mut()) {
            *v -= beta * *acc;
            *acc += *v;
        }
    }
}

/// A photon reaching the detector with its own detection draws, so that the
/// same photon gets the same QE decision and gain in every run sharing a seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Photon {
    pub pixel: usize,
    /// Uniform draw compared against the quantum efficiency.
    pub qe_draw: f64,
    /// Unit-mean exponential multiplying the EM gain.
    pub gain_draw: f64,
}

impl DetectorRngs {
    /// Detection draws for the next photon, `(qe, gain)`. Always consumes one of each.
    pub fn photon_draws(&mut self) -> (f64, f64) {
        (self.quantum_efficiency.random::<f64>(), Exp1.sample(&mut self.gain))
    }
}

/// Read out one exposure. `hits` are row-major pixel indices of photons inside the ROI.
pub fn expose(
    hits: &[usize],
    width: usize,
    height: usize,
    det: &DetectorSpec,
    rngs: &mut DetectorRngs,
    index: u64,
) -> Frame {
    let photons: Vec<Photon> = hits
        .iter()
        .map(|&pixel| {
            let (qe_draw, gain_draw) = rngs.photon_draws();
            Photon {
                pixel,
                qe_draw,
                gain_draw,
            }
        })
        .collect();
    expose_photons(&photons, width, height, det, rngs, index)
}

/// Read out one exposure from photons carrying their detection draws.
pub fn expose_photons(
    photons: &[Photon],
    width: usize,
    height: usize,
    det: &DetectorSpec,
    rngs: &mut DetectorRngs,
    index: u64,
) -> Frame {
    let n = width * height;
    let mut signal = vec![0.0f64; n];
    for p in photons {
        if det.quantum_efficiency >= 1.0 || p.qe_draw < det.quantum_efficiency {
            signal[p.pixel] += det.em_gain * p.gain_draw;
        }
    }
    let bg_mean = det.stray_rate * det.quantum_efficiency * n as f64;
    if bg_mean > 0.0 {
        let total = Poisson::new(bg_mean).expect("positive mean").sample(&mut rngs.background) as u64;
        for _ in 0..total {
            let px = rngs.background.random_range(0..n);
            let g: f64 = Exp1.sample(&mut rngs.background);
            signal[px] += det.em_gain * g;
        }
    }
    apply_smear(&mut signal, width, height, det.smear);
    let sat = det.saturation as f64;
    let data = signal
        .iter()
        .map(|&s| {
            let noise = if det.read_noise > 0.0 {
                det.read_noise * rngs.readout.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            (s + det.bias + noise).round().clamp(0.0, sat) as u16
        })
        .collect();
    Frame {
        width,
        height,
        data,
        index,
    }
}
