//! Sample-plane media acting on pairs and photons.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::sampler::PairEvent;

#[derive(Debug, Clone, PartialEq)]
pub enum MediumElement {
    /// Removes whole pairs with probability `strength·exp(-|d|²/(2w²))`.
    EtpaAbsorber { strength: f64, kernel_width_mm: f64 },
    /// Keeps each photon independently with probability `transmission`.
    LinearLoss { transmission: f64 },
    /// Displaces each photon with probability `probability` by N(0, σ²I).
    Scatterer { probability: f64, displacement_mm: f64 },
    None,
}

impl MediumElement {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            MediumElement::EtpaAbsorber {
                strength,
                kernel_width_mm,
            } => {
                unit("ETPA strength", strength)?;
                positive("ETPA kernel width", kernel_width_mm)
            }
            MediumElement::LinearLoss { transmission } => unit("transmission", transmission),
            MediumElement::Scatterer {
                probability,
                displacement_mm,
            } => {
                unit("scatter probability", probability)?;
                positive("scatter displacement", displacement_mm)
            }
            MediumElement::None => Ok(()),
        }
    }
}

/// Ordered list of medium elements.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MediumSpec {
    pub elements: Vec<MediumElement>,
}

impl MediumSpec {
    pub fn none() -> Self {
        MediumSpec::default()
    }

    pub fn single(e: MediumElement) -> Self {
        MediumSpec { elements: vec![e] }
    }

    pub fn validate(&self) -> Result<()> {
        self.elements.iter().try_for_each(|e| e.validate())
    }

    pub fn is_transparent(&self) -> bool {
        self.elements.iter().all(|e| matches!(e, MediumElement::None))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtpaOutcome {
    BothAbsorbed,
    Survive,
}

pub fn etpa_probability(pair: &PairEvent, strength: f64, kernel_width_mm: f64) -> f64 {
    let d = pair.difference();
    let r2 = d[0] * d[0] + d[1] * d[1];
    strength * (-r2 / (2.0 * kernel_width_mm * kernel_width_mm)).exp()
}

pub fn apply_etpa<R: Rng + ?Sized>(
    pair: &PairEvent,
    strength: f64,
    kernel_width_mm: f64,
    rng: &mut R,
) -> EtpaOutcome {
    let p = etpa_probability(pair, strength, kernel_width_mm);
    if rng.random::<f64>() < p {
        EtpaOutcome::BothAbsorbed
    } else {
        EtpaOutcome::Survive
    }
}

/// Mean absorbed fraction of unshaped pairs (difference variance `a_e` per axis).
pub fn expected_etpa_fraction(strength: f64, kernel_width_mm: f64, a_e: f64) -> f64 {
    let w2 = kernel_width_mm * kernel_width_mm;
    strength * w2 / (w2 + a_e)
}

pub fn apply_linear_loss<R: Rng + ?Sized>(transmission: f64, rng: &mut R) -> bool {
    transmission >= 1.0 || rng.random::<f64>() < transmission
}

pub fn apply_scatter<R: Rng + ?Sized>(
    position: [f64; 2],
    probability: f64,
    displacement_mm: f64,
    rng: &mut R,
) -> [f64; 2] {
    if probability <= 0.0 || rng.random::<f64>() >= probability {
        return position;
    }
    let dx: f64 = rng.sample(StandardNormal);
    let dy: f64 = rng.sample(StandardNormal);
    [
        position[0] + displacement_mm * dx,
        position[1] + displacement_mm * dy,
    ]
}

/// Photons of a pair left after the medium; `None` marks a lost photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Survivors(pub [Option<[f64; 2]>; 2]);

impl Survivors {
    pub fn count(&self) -> usize {
        self.0.iter().filter(|p| p.is_some()).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.0.iter().flatten().copied()
    }
}

/// Apply elements in order. ETPA only acts while both photons survive.
///
/// Every element consumes the same number of random draws whatever the
/// photons' state, so runs that share a seed stay aligned pair by pair.
pub fn apply_medium<R: Rng + ?Sized>(pair: &PairEvent, spec: &MediumSpec, rng: &mut R) -> Survivors {
    let mut photons = [Some(pair.r1), Some(pair.r2)];
    for e in &spec.elements {
        match *e {
            MediumElement::EtpaAbsorber {
                strength,
                kernel_width_mm,
            } => {
                let u: f64 = rng.random();
                if let [Some(a), Some(b)] = photons {
                    let current = PairEvent { r1: a, r2: b };
                    if u < etpa_probability(&current, strength, kernel_width_mm) {
                        photons = [None, None];
                    }
                }
            }
            MediumElement::LinearLoss { transmission } => {
                for p in photons.iter_mut() {
                    let u: f64 = rng.random();
                    if u >= transmission {
                        *p = None;
                    }
                }
            }
            MediumElement::Scatterer {
                probability,
                displacement_mm,
            } => {
                for p in photons.iter_mut() {
                    let u: f64 = rng.random();
                    let dx: f64 = rng.sample(StandardNormal);
                    let dy: f64 = rng.sample(StandardNormal);
                    if let Some(pos) = p {
                        if u < probability {
                            *pos = [pos[0] + displacement_mm * dx, pos[1] + displacement_mm * dy];
                        }
                    }
                }
            }
            MediumElement::None => {}
        }
    }
    Survivors(photons)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unshaped_pair<R: Rng>(a_e: f64, rng: &mut R) -> PairEvent {
        let s = a_e.sqrt();
        let dx: f64 = rng.sample::<f64, _>(StandardNormal) * s;
        let dy: f64 = rng.sample::<f64, _>(StandardNormal) * s;
        PairEvent {
            r1: [dx / 2.0, dy / 2.0],
            r2: [-dx / 2.0, -dy / 2.0],
        }
    }

    #[test]
    fn etpa_probability_examples() {
        let same = PairEvent {
            r1: [0.1, 0.2],
            r2: [0.1, 0.2],
        };
        assert_eq!(etpa_probability(&same, 0.1, 0.04), 0.1);
        let far = PairEvent {
            r1: [0.4, 0.0],
            r2: [0.0, 0.0],
        };
        assert!(etpa_probability(&far, 0.1, 0.04) < 2e-22 * 0.1);
    }

    #[test]
    fn expected_fraction_examples() {
        assert!((expected_etpa_fraction(0.3, 0.1, 0.01) - 0.15).abs() < 1e-15);
        assert!((expected_etpa_fraction(0.3, 0.1, 1e-12) - 0.3).abs() < 1e-9);
        let a = expected_etpa_fraction(0.5, 0.04, 1.72e-3);
        let b = expected_etpa_fraction(0.5, 0.04, 0.86e-3);
        assert!(b > a);
    }

    #[test]
    fn etpa_monte_carlo_matches_closed_form() {
        let cases = [
            (0.1, 0.0415, 1.72e-3),
            (1.0, 0.0415, 1.72e-3),
            (0.5, 0.00832, 69.2e-6),
            (0.3, 0.02, 1.72e-3),
            (0.8, 0.01, 4e-4),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (s, w, a) in cases {
            let n = 1_000_000;
            let absorbed = (0..n)
                .filter(|_| {
                    let p = unshaped_pair(a, &mut rng);
                    apply_etpa(&p, s, w, &mut rng) == EtpaOutcome::BothAbsorbed
                })
                .count() as f64;
            let want = expected_etpa_fraction(s, w, a);
            let sigma = (want * (1.0 - want) / n as f64).sqrt();
            let got = absorbed / n as f64;
            assert!((got - want).abs() < 3.0 * sigma, "{s} {w} {a}: {got} vs {want}");
        }
    }

    #[test]
    fn linear_loss_pair_survival() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = MediumSpec::single(MediumElement::LinearLoss { transmission: 0.5 });
        let p = PairEvent {
            r1: [0.0; 2],
            r2: [0.0; 2],
        };
        let n = 100_000;
        let both = (0..n)
            .filter(|_| apply_medium(&p, &spec, &mut rng).count() == 2)
            .count() as f64
            / n as f64;
        assert!((both - 0.25).abs() < 4.0 * (0.25 * 0.75 / n as f64).sqrt());
        assert!((0..100).all(|_| apply_linear_loss(1.0, &mut rng)));
    }

    #[test]
    fn loss_then_etpa_composition() {
        let (s, w, a, t) = (0.6, 0.0415, 1.72e-3, 0.7);
        let spec = MediumSpec {
            elements: vec![
                MediumElement::LinearLoss { transmission: t },
                MediumElement::EtpaAbsorber {
                    strength: s,
                    kernel_width_mm: w,
                },
            ],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 400_000;
        let kept = (0..n)
            .filter(|_| {
                let p = unshaped_pair(a, &mut rng);
                apply_medium(&p, &spec, &mut rng).count() == 2
            })
            .count() as f64
            / n as f64;
        let want = (1.0 - expected_etpa_fraction(s, w, a)) * t * t;
        assert!((kept - want).abs() < 4.0 * (want * (1.0 - want) / n as f64).sqrt(), "{kept} {want}");
    }

    #[test]
    fn scatter_identity_and_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert_eq!(apply_scatter([0.3, 0.4], 0.0, 1.0, &mut rng), [0.3, 0.4]);
        let a_e: f64 = 1.72e-3;
        let spec = MediumSpec::single(MediumElement::Scatterer {
            probability: 1.0,
            displacement_mm: a_e.sqrt(),
        });
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let p = unshaped_pair(a_e, &mut rng);
            let s = apply_medium(&p, &spec, &mut rng);
            let [Some(a), Some(b)] = s.0 else { panic!() };
            acc += (a[0] - b[0]).powi(2);
        }
        let v = acc / n as f64;
        assert!((v / (3.0 * a_e) - 1.0).abs() < 0.02, "{v}");
    }

    #[test]
    fn etpa_never_removes_one_photon() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = MediumSpec::single(MediumElement::EtpaAbsorber {
            strength: 0.9,
            kernel_width_mm: 0.05,
        });
        for _ in 0..10_000 {
            let p = unshaped_pair(1.72e-3, &mut rng);
            assert_ne!(apply_medium(&p, &spec, &mut rng).count(), 1);
        }
    }

    #[test]
    fn empty_medium_passes_both() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = PairEvent {
            r1: [1.0, 2.0],
            r2: [3.0, 4.0],
        };
        assert_eq!(
            apply_medium(&p, &MediumSpec::none(), &mut rng),
            Survivors([Some(p.r1), Some(p.r2)])
        );
    }

    #[test]
    fn validation() {
        assert!(MediumElement::LinearLoss { transmission: 1.5 }.validate().is_err());
        assert!(MediumElement::EtpaAbsorber {
            strength: 0.5,
            kernel_width_mm: 0.0
        }
        .validate()
        .is_err());
    }
}
