use crate::error::{invalid, Result};

/// Inputs of the two-photon absorption rate model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateModelParams {
    /// Entangled cross-section σ_e in cm².
    pub sigma_e_cm2: f64,
    /// Classical cross-section δ_c in GM (1e-50 cm⁴·s·photon⁻¹).
    pub delta_c_gm: f64,
    /// Entanglement time in s. Carried only as a scalar.
    pub entanglement_time_s: f64,
    /// Multi-pair coefficient κ.
    pub kappa: f64,
    /// Pair flux in pairs/s.
    pub pair_flux: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpaRegime {
    EntangledLowGain,
    Classical,
    Mixed,
}

pub const GM_CM4_S: f64 = 1e-50;

/// Absorption events per second.
///
/// Entangled: `σ_e·φ`; classical: `δ_c·φ²`; mixed: `σ_e·φ + κ·δ_c·φ²`.
/// `δ_c` enters in its numerical GM value, so the quadratic term carries the
/// same unit factor as the caller's convention.
pub fn tpa_rate(p: &RateModelParams, regime: TpaRegime) -> Result<f64> {
    let fields = [
        ("sigma_e", p.sigma_e_cm2),
        ("delta_c", p.delta_c_gm),
        ("T_e", p.entanglement_time_s),
        ("kappa", p.kappa),
        ("flux", p.pair_flux),
    ];
    for (name, v) in fields {
        if !v.is_finite() || v < 0.0 {
            return Err(invalid(format!("{name} must be finite and non-negative, got {v}")));
        }
    }
    let linear = p.sigma_e_cm2 * p.pair_flux;
    let quadratic = p.delta_c_gm * p.pair_flux * p.pair_flux;
    Ok(match regime {
        TpaRegime::EntangledLowGain => linear,
        TpaRegime::Classical => quadratic,
        TpaRegime::Mixed => linear + p.kappa * quadratic,
    })
}

/// Flux at which the linear and quadratic terms of the mixed rate are equal.
pub fn crossover_flux(p: &RateModelParams) -> Result<f64> {
    if !(p.delta_c_gm > 0.0 && p.kappa > 0.0) {
        return Err(invalid("crossover needs positive delta_c and kappa"));
    }
    Ok(p.sigma_e_cm2 / (p.kappa * p.delta_c_gm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(flux: f64) -> RateModelParams {
        RateModelParams {
            sigma_e_cm2: 1e-17,
            delta_c_gm: 1e-20,
            entanglement_time_s: 1e-13,
            kappa: 1.0,
            pair_flux: flux,
        }
    }

    #[test]
    fn entangled_rate() {
        let r = tpa_rate(&params(1e6), TpaRegime::EntangledLowGain).unwrap();
        assert_relative_eq!(r, 1e-11, max_relative = 1e-12);
    }

    #[test]
    fn zero_flux() {
        for regime in [TpaRegime::EntangledLowGain, TpaRegime::Classical, TpaRegime::Mixed] {
            assert_eq!(tpa_rate(&params(0.0), regime).unwrap(), 0.0);
        }
    }

    #[test]
    fn crossover() {
        let p = params(0.0);
        let phi = crossover_flux(&p).unwrap();
        assert_relative_eq!(phi, p.sigma_e_cm2 / p.delta_c_gm, max_relative = 1e-12);
        let at = params(phi);
        let lin = tpa_rate(&at, TpaRegime::EntangledLowGain).unwrap();
        let quad = tpa_rate(&at, TpaRegime::Classical).unwrap();
        assert_relative_eq!(lin, quad, max_relative = 1e-12);
        assert_relative_eq!(tpa_rate(&at, TpaRegime::Mixed).unwrap(), 2.0 * lin, max_relative = 1e-12);
    }

    #[test]
    fn negative_rejected() {
        let mut p = params(1.0);
        p.sigma_e_cm2 = -1.0;
        assert!(tpa_rate(&p, TpaRegime::Mixed).is_err());
    }
}
