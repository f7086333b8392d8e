use std::f64::consts::PI;

/// Normalized sinc, `sin(πx)/(πx)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Exponential Fourier coefficient `a_n` of `sgn(cos u)`.
///
/// `a_n = sinc(n/2)` for odd `n` and 0 for even `n` (the square wave has zero mean).
pub fn square_wave_coeff(n: i64) -> f64 {
    if n % 2 == 0 {
        return 0.0;
    }
    // exact form of sinc(n/2) for odd n
    let m = n.unsigned_abs();
    let sign = if (m / 2) % 2 == 0 { 1.0 } else { -1.0 };
    sign * 2.0 / (PI * m as f64)
}

/// Coefficient `c_n = sinc(n/2)/2` of the `{0, π/2}` grating phase expansion.
pub fn grating_coeff(n: i64) -> f64 {
    0.5 * sinc(n as f64 / 2.0)
}

/// Sum of `a_n²` over `|n| <= n_max`.
pub fn parseval_sum(n_max: i64) -> f64 {
    (-n_max..=n_max).map(|n| square_wave_coeff(n).powi(2)).sum()
}
