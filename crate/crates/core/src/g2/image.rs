use std::fmt::Write as _;

use ndarray::Array2;

use super::xcorr::{overlap_count, LagWindow};
use crate::error::{Error, Result};

/// Replacement of the smear-contaminated δx = 0 column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Leave the image as is.
    #[default]
    Off,
    /// Replace `(0,0)` and `(0,±1)` by the mean of their δx = ±1 neighbours.
    Paper,
    /// Replace the whole δx = 0 column by the mean of its δx = ±1 neighbours.
    FullColumn,
}

impl Interpolation {
    pub fn name(&self) -> &'static str {
        match self {
            Interpolation::Off => "off",
            Interpolation::Paper => "paper",
            Interpolation::FullColumn => "full-column",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "off" => Some(Interpolation::Off),
            "paper" => Some(Interpolation::Paper),
            "full-column" => Some(Interpolation::FullColumn),
            _ => None,
        }
    }
}

/// Minus-coordinate projection of G² over a lag window.
///
/// `values[[δy + half_y, δx + half_x]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationImage {
    pub values: Array2<f64>,
    pub window: LagWindow,
    pub frames: u64,
    /// `(nx, ny)` of the frames.
    pub roi: (usize, usize),
    pub interpolation: Interpolation,
    /// Each lag divided by its number of contributing pixel pairs.
    pub overlap_normalized: bool,
    pub source_hash: Option<String>,
}

impl CorrelationImage {
    pub fn get(&self, dx: i64, dy: i64) -> Option<f64> {
        let c = dx + self.window.half_x as i64;
        let r = dy + self.window.half_y as i64;
        let (rows, cols) = self.values.dim();
        (r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols)
            .then(|| self.values[[r as usize, c as usize]])
    }

    fn set(&mut self, dx: i64, dy: i64, v: f64) {
        let c = (dx + self.window.half_x as i64) as usize;
        let r = (dy + self.window.half_y as i64) as usize;
        self.values[[r, c]] = v;
    }

    /// Divide each lag by `(nx − |δx|)(ny − |δy|)`.
    pub fn per_overlap(&self) -> CorrelationImage {
        if self.overlap_normalized {
            return self.clone();
        }
        let (lx, ly) = (self.window.half_x as i64, self.window.half_y as i64);
        let (nx, ny) = self.roi;
        let mut out = self.clone();
        for ((r, c), v) in out.values.indexed_iter_mut() {
            *v /= overlap_count(nx, ny, c as i64 - lx, r as i64 - ly);
        }
        out.overlap_normalized = true;
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// CSV matrix: first row holds δx values, first column δy values.
    pub fn to_csv(&self) -> String {
        let (lx, ly) = (self.window.half_x as i64, self.window.half_y as i64);
        let mut s = String::from("dy\\dx");
        for dx in -lx..=lx {
            write!(s, ",{dx}").unwrap();
        }
        s.push('\n');
        for (r, row) in self.values.rows().into_iter().enumerate() {
            write!(s, "{}", r as i64 - ly).unwrap();
            for v in row {
                write!(s, ",{v:.9e}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Metadata block written next to the CSV.
    pub fn sidecar(&self) -> String {
        format!(
            "frames={}\nwindow_half_x={}\nwindow_half_y={}\nroi={}x{}\ninterpolation={}\noverlap_normalized={}\nsource_sha256={}\n",
            self.frames,
            self.window.half_x,
            self.window.half_y,
            self.roi.0,
            self.roi.1,
            self.interpolation.name(),
            self.overlap_normalized,
            self.source_hash.as_deref().unwrap_or("none"),
        )
    }
}

/// Replace smear-contaminated lags by the mean of their horizontal neighbours.
pub fn interpolate_artifacts(img: &CorrelationImage, mode: Interpolation) -> Result<CorrelationImage> {
    if mode == Interpolation::Off {
        return Ok(img.clone());
    }
    if img.window.half_x < 1 || (mode == Interpolation::Paper && img.window.half_y < 1) {
        return Err(Error::Window(format!(
            "interpolation needs lags δx = ±1 (and δy = ±1 for paper mode), window is ±({}, {})",
            img.window.half_x, img.window.half_y
        )));
    }
    let mut out = img.clone();
    let rows: Vec<i64> = match mode {
        Interpolation::Paper => vec![-1, 0, 1],
        Interpolation::FullColumn => {
            let ly = img.window.half_y as i64;
            (-ly..=ly).collect()
        }
        Interpolation::Off => unreachable!(),
    };
    for dy in rows {
        let left = img.get(-1, dy).expect("inside window");
        let right = img.get(1, dy).expect("inside window");
        out.set(0, dy, 0.5 * (left + right));
    }
    out.interpolation = mode;
    Ok(out)
}
