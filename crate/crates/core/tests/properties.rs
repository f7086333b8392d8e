use biphoton_core::detector::{apply_smear, remove_smear, BpfHeader, BpfReader, BpfWriter, Frame};
use biphoton_core::experiment::{parse_config, ExperimentConfig, OpticsPreset};
use biphoton_core::g2::{
    accumulate_frames, overlap_count, xcorr_lags, AccumulatorParams, CorrAccumulator, LagWindow, XcorrMode,
};
use biphoton_core::medium::{apply_medium, MediumElement, MediumSpec};
use biphoton_core::metrics::{ratio_error_quadrature, ratio_with_error};
use biphoton_core::optics::{parseval_sum, peak_separation, period_for_separation};
use biphoton_core::sampler::PairEvent;
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn frames_from(values: &[u16], side: usize, count: usize) -> Vec<Frame> {
    (0..count)
        .map(|m| Frame::from_fn(side, side, m as u64, |r, c| values[(m * side * side + r * side + c) % values.len()]))
        .collect()
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

proptest! {
    #[test]
    fn parseval_partial_sums_increase_towards_one(n in 1i64..400) {
        let a = parseval_sum(n);
        prop_assert!(a <= 1.0 + 1e-12);
        prop_assert!(parseval_sum(n + 1) >= a);
        prop_assert!(parseval_sum(n + 2) > a || n % 2 == 0);
    }

    #[test]
    fn separation_inverts(period in 0.5f64..50.0, f in 10.0f64..5000.0) {
        let dx = peak_separation(period, 814.0, f);
        prop_assert!((period_for_separation(dx, 814.0, f) / period - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_error_bounds_quadrature(xi in 0.01f64..10.0, d in 0.0f64..1.0, xi0 in 0.01f64..10.0, d0 in 0.0f64..1.0) {
        let (r, e) = ratio_with_error(xi, d, xi0, d0).unwrap();
        prop_assert!((r - xi / xi0).abs() <= 1e-12 * r);
        prop_assert!(e + 1e-12 >= ratio_error_quadrature(xi, d, xi0, d0));
        // invariant under a common rescaling of ξ and ξ₀
        let (r2, e2) = ratio_with_error(3.0 * xi, 3.0 * d, 3.0 * xi0, 3.0 * d0).unwrap();
        prop_assert!((r2 - r).abs() <= 1e-12 * r && (e2 - e).abs() <= 1e-9 * (e + 1e-300));
    }

    #[test]
    fn smear_round_trips_and_never_removes_charge(
        values in prop::collection::vec(0.0f64..5000.0, 48),
        beta in 0.0f64..0.05,
    ) {
        let mut s = values.clone();
        apply_smear(&mut s, 6, 8, beta);
        let before: f64 = values.iter().sum();
        let after: f64 = s.iter().sum();
        prop_assert!(after >= before - 1e-9);
        if beta == 0.0 {
            prop_assert_eq!(&s, &values);
        }
        remove_smear(&mut s, 6, 8, beta);
        for (a, b) in s.iter().zip(&values) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn overlap_count_matches_pixel_pairs(nx in 1usize..12, ny in 1usize..12, dx in -12i64..12, dy in -12i64..12) {
        let mut n = 0usize;
        for y in 0..ny as i64 {
            for x in 0..nx as i64 {
                let (xa, ya) = (x + dx, y + dy);
                if xa >= 0 && ya >= 0 && xa < nx as i64 && ya < ny as i64 {
                    n += 1;
                }
            }
        }
        prop_assert_eq!(overlap_count(nx, ny, dx, dy), n as f64);
    }

    #[test]
    fn etpa_takes_both_photons_or_none(
        r1 in prop::array::uniform2(-0.2f64..0.2),
        r2 in prop::array::uniform2(-0.2f64..0.2),
        strength in 0.0f64..1.0,
        w in 0.001f64..0.1,
        seed in any::<u64>(),
    ) {
        let pair = PairEvent { r1, r2 };
        let spec = MediumSpec::single(MediumElement::EtpaAbsorber { strength, kernel_width_mm: w });
        let s = apply_medium(&pair, &spec, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(s.count() != 1);
        if s.count() == 2 {
            prop_assert_eq!(s.0, [Some(r1), Some(r2)]);
        }
    }

    #[test]
    fn loss_and_scatter_act_per_photon(
        r1 in prop::array::uniform2(-0.2f64..0.2),
        r2 in prop::array::uniform2(-0.2f64..0.2),
        t in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let pair = PairEvent { r1, r2 };
        let loss = MediumSpec::single(MediumElement::LinearLoss { transmission: t });
        let s = apply_medium(&pair, &loss, &mut ChaCha8Rng::seed_from_u64(seed));
        // survivors keep their positions
        for (got, want) in s.0.iter().zip([r1, r2]) {
            if let Some(p) = got {
                prop_assert_eq!(*p, want);
            }
        }
        let scatter = MediumSpec::single(MediumElement::Scatterer { probability: 1.0, displacement_mm: 0.01 });
        let s = apply_medium(&pair, &scatter, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(s.count(), 2);
        let [Some(a), Some(b)] = s.0 else { unreachable!() };
        // independent displacements: the pair difference changes
        prop_assert!((a[0] - b[0]) != (r1[0] - r2[0]) || (a[1] - b[1]) != (r1[1] - r2[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fast_correlation_equals_naive(
        values in prop::collection::vec(0.0f64..100.0, 1..200),
        nx in 3usize..20,
        ny in 3usize..20,
        frac in 0.0f64..1.0,
    ) {
        let a = Array2::from_shape_fn((ny, nx), |(r, c)| values[(r * nx + c) % values.len()]);
        let b = Array2::from_shape_fn((ny, nx), |(r, c)| values[(r * nx + c + 7) % values.len()]);
        let half = ((nx.min(ny) - 1) / 2) as f64;
        let window = LagWindow::square((frac * half).round() as usize);
        let fast = xcorr_lags(a.view(), b.view(), window, XcorrMode::Fast).unwrap();
        let naive = xcorr_lags(a.view(), b.view(), window, XcorrMode::Naive).unwrap();
        let scale = max_abs(&naive).max(1.0);
        prop_assert!(max_abs(&(&fast - &naive)) <= 1e-9 * scale);
    }

    #[test]
    fn chunked_merge_equals_single_pass(
        values in prop::collection::vec(0u16..2000, 64..400),
        splits in prop::collection::vec(1usize..29, 1..4),
    ) {
        let frames = frames_from(&values, 8, 30);
        let params = AccumulatorParams::new((8, 8), LagWindow::square(3));
        let whole = accumulate_frames(params, &frames).unwrap().finalize().unwrap();
        let mut cuts: Vec<usize> = splits.clone();
        cuts.sort_unstable();
        cuts.dedup();
        let mut bounds = vec![0];
        bounds.extend(cuts);
        bounds.push(frames.len());
        let mut total: Option<CorrAccumulator> = None;
        for w in bounds.windows(2) {
            let mut acc = CorrAccumulator::new(params).unwrap();
            if w[0] > 0 {
                acc.prime(&frames[w[0] - 1]).unwrap();
            }
            for f in &frames[w[0]..w[1]] {
                acc.accumulate(f).unwrap();
            }
            total = Some(match total {
                None => acc,
                Some(t) => t.merge(acc).unwrap(),
            });
        }
        let merged = total.unwrap().finalize().unwrap();
        let scale = max_abs(&whole.values).max(1.0);
        prop_assert!(max_abs(&(&merged.values - &whole.values)) <= 1e-9 * scale);
    }

    #[test]
    fn bpf_round_trips(values in prop::collection::vec(any::<u16>(), 1..100), w in 1usize..9, h in 1usize..9, count in 2usize..6) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bpf");
        let frames: Vec<Frame> = (0..count)
            .map(|m| Frame::from_fn(w, h, m as u64, |r, c| values[(m * w * h + r * w + c) % values.len()]))
            .collect();
        let header = BpfHeader { width: w as u32, height: h as u32, frame_count: count as u32, metadata: Default::default() };
        let mut writer = BpfWriter::create(&path, header.clone()).unwrap();
        for f in &frames {
            writer.write_frame(f).unwrap();
        }
        let hash = writer.finish().unwrap();
        let mut reader = BpfReader::open(&path).unwrap();
        prop_assert_eq!(reader.header(), &header);
        for f in &frames {
            let got = reader.next_frame().unwrap().unwrap();
            prop_assert_eq!(&got.data, &f.data);
        }
        prop_assert!(reader.next_frame().unwrap().is_none());
        prop_assert_eq!(reader.source_hash(), Some(hash));
    }

    #[test]
    fn config_text_round_trips(
        seed in any::<u64>(),
        rate in 1.0f64..3e6,
        eta in 0.05f64..1.0,
        t in 0.0f64..1.0,
        preset in prop_oneof![Just(OpticsPreset::Config1), Just(OpticsPreset::Config2)],
    ) {
        let mut cfg = ExperimentConfig::new(preset);
        cfg.source.seed = seed;
        cfg.source.pair_rate_hz = rate;
        cfg.source.slm_efficiency = eta;
        cfg.medium.loss_transmission = Some(t);
        cfg.optics = cfg.optics.clone().with_roi(32, 32);
        let text = cfg.serialize();
        let back = parse_config(&text).unwrap().config;
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.serialize(), text);
    }
}
