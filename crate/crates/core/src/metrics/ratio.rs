use crate::error::{invalid, Result};

/// `ξ/ξ₀` with linear-sum relative errors: `Δr = r·(Δξ₀/ξ₀ + Δξ/ξ)`.
pub fn ratio_with_error(xi: f64, d_xi: f64, xi0: f64, d_xi0: f64) -> Result<(f64, f64)> {
    if !(xi > 0.0 && xi0 > 0.0) {
        return Err(invalid(format!("ratio needs positive peak values, got ξ={xi}, ξ₀={xi0}")));
    }
    let r = xi / xi0;
    Ok((r, r * (d_xi0 / xi0 + d_xi / xi)))
}

/// Quadrature propagation, for comparison only.
pub fn ratio_error_quadrature(xi: f64, d_xi: f64, xi0: f64, d_xi0: f64) -> f64 {
    (xi / xi0) * ((d_xi / xi).powi(2) + (d_xi0 / xi0).powi(2)).sqrt()
}

/// Per-batch ratios `ξ_b/ξ₀_b`.
pub fn batch_ratios(xi: &[f64], xi0: &[f64]) -> Result<Vec<f64>> {
    if xi.len() != xi0.len() || xi.is_empty() {
        return Err(invalid("batch ratio needs matching, non-empty batch lists"));
    }
    if xi0.iter().any(|&v| !(v > 0.0)) {
        return Err(invalid("reference peak values must be positive"));
    }
    Ok(xi.iter().zip(xi0).map(|(a, b)| a / b).collect())
}

/// Mean and standard error of `a_b − b_b` for batch-paired values.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid("paired difference needs at least two matching batches"));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}
