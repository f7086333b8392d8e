//! 2D FFT helpers built from 1D rustfft / realfft plans.

use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

/// In-place forward 2D FFT of a row-major `rows × cols` buffer.
pub fn fft2_inplace(data: &mut [Complex64], rows: usize, cols: usize) {
    assert_eq!(data.len(), rows * cols);
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(cols);
    row_fft.process(data);
    let mut t = vec![Complex64::default(); rows * cols];
    transpose(data, &mut t, rows, cols);
    let col_fft = planner.plan_fft_forward(rows);
    col_fft.process(&mut t);
    transpose(&t, data, cols, rows);
}

/// Blocked transpose of a row-major `rows × cols` matrix into `dst` (`cols × rows`).
pub fn transpose<T: Copy>(src: &[T], dst: &mut [T], rows: usize, cols: usize) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Real 2D transform on a zero-padded `rows × cols` grid.
///
/// Spectra are stored column-major: `cols/2 + 1` columns of `rows` bins each,
/// so column transforms run on contiguous memory.
pub struct RealFft2 {
    rows: usize,
    cols: usize,
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RealFft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealFft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

/// Per-thread working buffers for [`RealFft2`].
#[derive(Debug, Clone)]
pub struct Fft2Scratch {
    real_row: Vec<f64>,
    spec_row: Vec<Complex64>,
    r2c_scratch: Vec<Complex64>,
    c2r_scratch: Vec<Complex64>,
    col_scratch: Vec<Complex64>,
}

impl RealFft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        RealFft2 {
            rows,
            cols,
            half: cols / 2 + 1,
            r2c: rp.plan_fft_forward(cols),
            c2r: rp.plan_fft_inverse(cols),
            col_fwd: cp.plan_fft_forward(rows),
            col_inv: cp.plan_fft_inverse(rows),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn spectrum_len(&self) -> usize {
        self.half * self.rows
    }

    pub fn scratch(&self) -> Fft2Scratch {
        let col_len = self
            .col_fwd
            .get_inplace_scratch_len()
            .max(self.col_inv.get_inplace_scratch_len());
        Fft2Scratch {
            real_row: vec![0.0; self.cols],
            spec_row: vec![Complex64::default(); self.half],
            r2c_scratch: self.r2c.make_scratch_vec(),
            c2r_scratch: self.c2r.make_scratch_vec(),
            col_scratch: vec![Complex64::default(); col_len],
        }
    }

    /// Forward transform of a row-major `img_rows × img_cols` image placed at the
    /// origin of the padded grid.
    pub fn forward(
        &self,
        image: &[f64],
        img_rows: usize,
        img_cols: usize,
        out: &mut [Complex64],
        s: &mut Fft2Scratch,
    ) {
        assert!(img_rows <= self.rows && img_cols <= self.cols);
        assert_eq!(image.len(), img_rows * img_cols);
        assert_eq!(out.len(), self.spectrum_len());
        out.fill(Complex64::default());
        for r in 0..img_rows {
            s.real_row[..img_cols].copy_from_slice(&image[r * img_cols..(r + 1) * img_cols]);
            s.real_row[img_cols..].fill(0.0);
            self.r2c
                .process_with_scratch(&mut s.real_row, &mut s.spec_row, &mut s.r2c_scratch)
                .expect("buffer sizes fixed by plan");
            for (k, v) in s.spec_row.iter().enumerate() {
                out[k * self.rows + r] = *v;
            }
        }
        self.col_fwd.process_with_scratch(out, &mut s.col_scratch);
    }

    /// Inverse transform, normalized so that `inverse(forward(x)) == x`.
    /// `spec` is consumed as a work buffer.
    pub fn inverse(&self, spec: &mut [Complex64], out: &mut [f64], s: &mut Fft2Scratch) {
        assert_eq!(spec.len(), self.spectrum_len());
        assert_eq!(out.len(), self.rows * self.cols);
        self.col_inv.process_with_scratch(spec, &mut s.col_scratch);
        let norm = 1.0 / (self.rows * self.cols) as f64;
        for r in 0..self.rows {
            for k in 0..self.half {
                s.spec_row[k] = spec[k * self.rows + r];
            }
            // DC and Nyquist bins of a real signal are real
            s.spec_row[0].im = 0.0;
            if self.cols % 2 == 0 {
                s.spec_row[self.half - 1].im = 0.0;
            }
            self.c2r
                .process_with_scratch(&mut s.spec_row, &mut s.real_row, &mut s.c2r_scratch)
                .expect("buffer sizes fixed by plan");
            for (o, v) in out[r * self.cols..(r + 1) * self.cols]
                .iter_mut()
                .zip(&s.real_row)
            {
                *o = v * norm;
            }
        }
    }
}

/// Smallest integer `>= n` whose prime factors are all in {2, 3, 5}.
pub fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}
