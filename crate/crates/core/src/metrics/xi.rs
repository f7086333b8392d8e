use ndarray::Array2;

use super::fit::fit_gaussian_pixels;
use crate::error::{Error, Result};
use crate::g2::CorrelationImage;

/// How a peak is reduced to one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeakMetric {
    /// Maximum inside the window.
    #[default]
    Height,
    /// Sum over the window.
    Area,
}

impl PeakMetric {
    pub fn name(&self) -> &'static str {
        match self {
            PeakMetric::Height => "height",
            PeakMetric::Area => "area",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "height" => Some(PeakMetric::Height),
            "area" => Some(PeakMetric::Area),
            _ => None,
        }
    }
}

/// Peak value in the `(2w+1)²` window centred at lag `center = (δx, δy)` pixels.
pub fn extract_xi(img: &CorrelationImage, center: (i64, i64), w: usize, metric: PeakMetric) -> Result<f64> {
    let w = w as i64;
    let (lx, ly) = (img.window.half_x as i64, img.window.half_y as i64);
    if center.0 - w < -lx || center.0 + w > lx || center.1 - w < -ly || center.1 + w > ly {
        return Err(Error::Window(format!(
            "peak window ±{w} around {center:?} is clipped by the ±({lx}, {ly}) lag grid"
        )));
    }
    let values = (center.1 - w..=center.1 + w)
        .flat_map(|dy| (center.0 - w..=center.0 + w).map(move |dx| (dx, dy)))
        .map(|(dx, dy)| img.get(dx, dy).expect("checked bounds"));
    Ok(match metric {
        PeakMetric::Height => values.fold(f64::NEG_INFINITY, f64::max),
        PeakMetric::Area => values.sum(),
    })
}

/// Sub-pixel δx of the peak near `guess`, from a Gaussian fit over the lags
/// within ±`radius` of `(guess, 0)` (clipped to the lag grid).
pub fn refine_peak_x(img: &CorrelationImage, guess: i64, radius: i64) -> Result<f64> {
    let (lx, ly) = (img.window.half_x as i64, img.window.half_y as i64);
    let (x0, x1) = ((guess - radius).max(-lx), (guess + radius).min(lx));
    let (y0, y1) = (-radius.min(ly), radius.min(ly));
    if x1 - x0 < 2 || y1 - y0 < 2 {
        return Err(Error::Window(format!("fit region around δx = {guess} is outside the lag grid")));
    }
    let sub = Array2::from_shape_fn(((y1 - y0 + 1) as usize, (x1 - x0 + 1) as usize), |(r, c)| {
        img.get(x0 + c as i64, y0 + r as i64).expect("clipped to grid")
    });
    let (p, _, _) = fit_gaussian_pixels(sub.view())?;
    Ok(0.5 * (x0 + x1) as f64 + p[1])
}

/// ξ per batch with its mean and standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct XiMeasurement {
    pub center: (i64, i64),
    pub half_width: usize,
    pub metric: PeakMetric,
    pub per_batch: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over batches divided by √B.
    pub std_error: f64,
}

impl XiMeasurement {
    pub fn from_batches(center: (i64, i64), half_width: usize, metric: PeakMetric, per_batch: Vec<f64>) -> Result<Self> {
        if per_batch.is_empty() || per_batch.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("batch values must be finite and non-empty".into()));
        }
        let b = per_batch.len() as f64;
        let mean = per_batch.iter().sum::<f64>() / b;
        let std_error = if per_batch.len() > 1 {
            let var = per_batch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
            (var / b).sqrt()
        } else {
            0.0
        };
        Ok(XiMeasurement {
            center,
            half_width,
            metric,
            per_batch,
            mean,
            std_error,
        })
    }

    pub fn snr(&self) -> f64 {
        if self.std_error > 0.0 {
            self.mean / self.std_error
        } else {
            f64::INFINITY
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::g2::{Interpolation, LagWindow};

    fn gaussian_image(amp: f64, cx: f64, cy: f64) -> CorrelationImage {
        let w = LagWindow::square(10);
        CorrelationImage {
            values: Array2::from_shape_fn(w.shape(), |(r, c)| {
                let (x, y) = (c as f64 - 10.0, r as f64 - 10.0);
                amp * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * 4.0)).exp()
            }),
            window: w,
            frames: 2,
            roi: (30, 30),
            interpolation: Interpolation::Off,
            overlap_normalized: false,
            source_hash: None,
        }
    }

    #[test]
    fn height_of_centred_peak() {
        let img = gaussian_image(7.0, 0.0, 0.0);
        assert_eq!(extract_xi(&img, (0, 0), 1, PeakMetric::Height).unwrap(), 7.0);
    }

    #[test]
    fn offset_peak_still_captured() {
        let img = gaussian_image(7.0, 1.0, 0.0);
        assert_eq!(extract_xi(&img, (0, 0), 1, PeakMetric::Height).unwrap(), 7.0);
    }

    #[test]
    fn area_sums_window() {
        let mut img = gaussian_image(0.0, 0.0, 0.0);
        img.values.fill(2.0);
        assert_eq!(extract_xi(&img, (3, -2), 2, PeakMetric::Area).unwrap(), 50.0);
    }

    #[test]
    fn clipped_window_errors() {
        let img = gaussian_image(1.0, 0.0, 0.0);
        assert!(matches!(
            extract_xi(&img, (9, 0), 2, PeakMetric::Height),
            Err(Error::Window(_))
        ));
    }

    #[test]
    fn refine_recovers_subpixel_center() {
        let img = gaussian_image(3.0, 2.3, 0.0);
        let x = refine_peak_x(&img, 2, 6).unwrap();
        assert!((x - 2.3).abs() < 1e-9, "{x}");
    }

    #[test]
    fn standard_error_definition() {
        let m = XiMeasurement::from_batches((0, 0), 1, PeakMetric::Height, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((m.std_error - sd / 2.0).abs() < 1e-15);
        let same = XiMeasurement::from_batches((0, 0), 1, PeakMetric::Height, vec![2.0; 4]).unwrap();
        assert_eq!(same.std_error, 0.0);
    }
}
