use fastlink::allocator::{self, FeatureOrder};
use fastlink::codec::{self, FeatureTensor, ImageSample};
use fastlink::fading::{self, FadingSpec, SosParams};
use fastlink::importance::ImportanceVector;
use fastlink::metrics;
use fastlink::mimo;
use fastlink::stats;
use fastlink::{CMatrix, CVector, Complex};
use proptest::collection::vec;
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = Complex> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| Complex::new(re, im))
}

fn cmatrix(r: usize, c: usize) -> impl Strategy<Value = CMatrix> {
    vec(complex(), r * c).prop_map(move |v| CMatrix::from_vec(r, c, v))
}

fn tensor(c: usize, h: usize, w: usize) -> impl Strategy<Value = FeatureTensor> {
    vec(-3.0..3.0f64, c * h * w).prop_map(move |v| FeatureTensor::new(v, c, h, w).unwrap())
}

fn distinct(xs: &[f64]) -> bool {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s.windows(2).all(|p| p[1] - p[0] > 1e-9)
}

/// Assigned importance per block against block quality.
fn assigned(importance: &[f64], eta: &[usize]) -> Vec<f64> {
    eta.iter().map(|&e| importance[e]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn time_allocation_is_invertible(
        a in tensor(8, 2, 2),
        w in vec(0.0..1.0f64, 8),
        h in vec(complex(), 8),
    ) {
        let al = allocator::time_allocate(&a, &w, &h).unwrap();
        al.order.validate().unwrap();
        prop_assert_eq!(allocator::inverse_allocate(&al.tensor, &al.order).unwrap(), a);
    }

    #[test]
    fn time_allocation_matches_ranks(w in vec(0.0..1.0f64, 12), h in vec(complex(), 12)) {
        let q: Vec<f64> = h.iter().map(|v| v.norm()).collect();
        prop_assume!(distinct(&w) && distinct(&q));
        let a = FeatureTensor::zeros(12, 1, 2);
        let al = allocator::time_allocate(&a, &w, &h).unwrap();
        prop_assert_eq!(stats::spearman(&assigned(&w, &al.order.eta), &q), 1.0);
    }

    #[test]
    fn mmse_allocation_is_invertible_and_rank_matched(
        a in tensor(8, 1, 2),
        w in vec(0.0..1.0f64, 8),
        hs in vec(cmatrix(2, 2), 4),
        snr in 0.0..20.0f64,
    ) {
        let nv = codec::noise_var(0.5, snr);
        let al = allocator::st_allocate_mmse(&a, &w, &hs, 0.5, nv).unwrap();
        al.order.validate().unwrap();
        prop_assert_eq!(allocator::inverse_allocate(&al.tensor, &al.order).unwrap(), a);
        if distinct(&w) && distinct(&al.quality.values) {
            prop_assert_eq!(stats::spearman(&assigned(&w, &al.order.eta), &al.quality.values), 1.0);
        }
    }

    #[test]
    fn svd_allocation_is_invertible_and_rank_matched(
        a in tensor(8, 1, 2),
        w in vec(0.0..1.0f64, 8),
        hs in vec(cmatrix(2, 2), 4),
    ) {
        let al = allocator::st_allocate_svd(&a, &w, &hs).unwrap();
        al.order.validate().unwrap();
        prop_assert_eq!(allocator::inverse_allocate(&al.tensor, &al.order).unwrap(), a);
        if distinct(&w) && distinct(&al.quality.values) {
            prop_assert_eq!(stats::spearman(&assigned(&w, &al.order.eta), &al.quality.values), 1.0);
        }
    }

    #[test]
    fn single_antenna_paths_reduce_to_time_domain(
        w in vec(0.0..1.0f64, 6),
        h in vec(complex(), 6),
        snr in -5.0..25.0f64,
    ) {
        let a = FeatureTensor::zeros(6, 1, 2);
        let mats: Vec<CMatrix> = h.iter().map(|v| CMatrix::from_element(1, 1, *v)).collect();
        let t = allocator::time_allocate(&a, &w, &h).unwrap();
        let m = allocator::st_allocate_mmse(&a, &w, &mats, 1.0, codec::noise_var(1.0, snr)).unwrap();
        let s = allocator::st_allocate_svd(&a, &w, &mats).unwrap();
        prop_assert_eq!(&m.order, &t.order);
        prop_assert_eq!(&s.order, &t.order);
    }

    #[test]
    fn corrupted_orders_are_rejected(c in 2usize..20, i in 0usize..20, j in 0usize..20) {
        let mut o = FeatureOrder::identity(c);
        prop_assume!(i % c != j % c);
        o.eta[i % c] = o.eta[j % c];
        prop_assert!(o.validate().is_err());
        prop_assert!(allocator::inverse_allocate(&FeatureTensor::zeros(c, 1, 2), &o).is_err());
    }

    #[test]
    fn normalization_is_idempotent(raw in vec(-5.0..5.0f64, 1..24)) {
        let once = ImportanceVector::from_raw(&raw).unwrap();
        let twice = ImportanceVector::from_raw(&once.scores).unwrap();
        if once.tied {
            prop_assert!(once.scores.iter().all(|v| *v == 0.0));
        } else {
            prop_assert_eq!(&twice.scores, &once.scores);
            let lo = once.scores.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = once.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!((lo, hi), (0.0, 1.0));
        }
    }

    #[test]
    fn symbol_power_is_exact(a in tensor(4, 2, 2), p in 0.01..10.0f64) {
        prop_assume!(a.norm() > 1e-6);
        let b = codec::to_symbols(&a, p).unwrap();
        prop_assert!((b.average_power() - p).abs() < 1e-9 * p.max(1.0));
    }

    #[test]
    fn symbol_pairing_roundtrip(a in tensor(6, 2, 3), p in 0.1..4.0f64) {
        let back = codec::from_symbols(&codec::to_symbols(&a, p).unwrap()).unwrap();
        for (x, y) in back.values.iter().zip(&a.values) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn precoder_preserves_norm(h in cmatrix(3, 2), x in vec(complex(), 2)) {
        let svd = mimo::svd_decompose(&h).unwrap();
        let v = svd.precoder(2).unwrap();
        let x = CVector::from_vec(x);
        prop_assert!(((&v * &x).norm() - x.norm()).abs() < 1e-12);
    }

    #[test]
    fn equalizer_satisfies_its_definition(h in cmatrix(2, 2), nv in 0.05..5.0f64, p in 0.1..4.0f64) {
        let eq = mimo::mmse_equalizer(&h, p, nv).unwrap();
        prop_assert!(eq.residual() < 1e-12, "residual {}", eq.residual());
    }

    #[test]
    fn more_noise_never_raises_sinr(h in cmatrix(2, 2), nv in 0.01..5.0f64, k in 1.0..10.0f64) {
        let lo = mimo::sinr_per_tx(&mimo::mmse_equalizer(&h, 1.0, nv).unwrap());
        let hi = mimo::sinr_per_tx(&mimo::mmse_equalizer(&h, 1.0, nv * k).unwrap());
        for (a, b) in lo.iter().zip(&hi) {
            prop_assert!(*b <= *a * (1.0 + 1e-12));
        }
    }

    #[test]
    fn noiseless_svd_detection_scales_by_singular_values(h in cmatrix(2, 2), x in vec(complex(), 2)) {
        let svd = mimo::svd_decompose(&h).unwrap();
        let x = CVector::from_vec(x);
        let mut quiet = fading::NoiseModel::new(0.0, 1).unwrap();
        let got = mimo::transmit_svd(&x, &svd, &mut quiet).unwrap();
        // Matrix-product oracle: U^H H V x.
        let direct = svd.u.adjoint() * &h * &svd.v * &x;
        for k in 0..2 {
            let want = x[k] * svd.singular_values[k];
            prop_assert!((got[k] - want).norm() < 1e-12);
            prop_assert!((direct[k] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn psnr_is_strictly_decreasing(a in 1e-8..1.0f64, b in 1e-8..1.0f64) {
        prop_assume!((a - b).abs() > 1e-12);
        let (pa, pb) = (metrics::psnr_from_mse(a, 1.0, 100.0), metrics::psnr_from_mse(b, 1.0, 100.0));
        prop_assert_eq!(a < b, pa > pb);
    }

    #[test]
    fn ssim_is_symmetric_and_reflexive(x in vec(0.0..1.0f64, 100), y in vec(0.0..1.0f64, 100)) {
        let x = ImageSample::new(x, 10, 10, 1).unwrap();
        let y = ImageSample::new(y, 10, 10, 1).unwrap();
        let xy = metrics::ssim(&x, &y, 8, 1.0).unwrap();
        prop_assert!((xy - metrics::ssim(&y, &x, 8, 1.0).unwrap()).abs() < 1e-14);
        prop_assert_eq!(metrics::ssim(&x, &x, 8, 1.0).unwrap(), 1.0);
        prop_assert!((-1.0..=1.0).contains(&xy));
    }

    #[test]
    fn scoring_clamps_reconstructions(x in vec(0.0..1.0f64, 64), y in vec(-1.0..2.0f64, 64)) {
        let s = ImageSample::new(x, 8, 8, 1).unwrap();
        let raw = ImageSample { pixels: y, width: 8, height: 8, channels: 1 };
        let q = metrics::QualityReport::score(&s, &raw).unwrap();
        prop_assert_eq!(q.mse, metrics::mse(&s.pixels, &raw.clamped().pixels).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sos_generation_is_deterministic(seed in any::<u64>(), m in 1usize..40, fd in 0.0..500.0f64) {
        let p = SosParams::draw(m, fd, 1e-3, seed).unwrap();
        let a = fading::sos_generate(&p, 64).unwrap();
        let b = fading::sos_generate(&SosParams::draw(m, fd, 1e-3, seed).unwrap(), 64).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn mimo_links_are_sos_streams(seed in any::<u64>()) {
        let spec = FadingSpec::new(16, 100.0, 1e-3).unwrap();
        let seq = fading::mimo_generate(&spec, 20, 2, 3, seed).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                let own = fading::sos_generate(&spec.draw(fading::link_seed(seed, r, c)).unwrap(), 20).unwrap();
                prop_assert_eq!(seq.link(r, c), own.as_siso().unwrap().to_vec());
            }
        }
    }
}
