use proptest::prelude::*;

use spikecodec::encoder::{encode, replay_thresholds, Spike, SpikeTrain, ThresholdParams};
use spikecodec::gram::{beta_d_bound, condition_bounds};
use spikecodec::kernelbank::default_bank;
use spikecodec::metrics::{approx_error_bound, partition_overlap, snr};
use spikecodec::sigio::SpikeFile;

fn train_strategy() -> impl Strategy<Value = (SpikeTrain, ThresholdParams, bool)> {
    (
        prop::collection::vec((0usize..16, 0u64..5000, -10.0f64..10.0), 0..200),
        1e-4f64..1.0,
        0.0f64..1.0,
        1e-4f64..0.1,
        any::<bool>(),
    )
        .prop_map(|(raw, c, m, d, stored)| {
            let mut spikes: Vec<Spike> =
                raw.into_iter().map(|(k, t, v)| Spike { kernel_id: k, sample_index: t, threshold: v }).collect();
            spikes.sort_by_key(|s| (s.sample_index, s.kernel_id));
            spikes.dedup_by_key(|s| (s.sample_index, s.kernel_id));
            let train = SpikeTrain { spikes, fs: 8000, signal_len: 5000, bank_hash: 0xfeed };
            (train, ThresholdParams::new(c, m, d).unwrap(), stored)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spike_file_roundtrip_is_exact((train, params, stored) in train_strategy(), gain in 0.01f64..100.0) {
        let file = SpikeFile { train, params, gain, thresholds_stored: stored };
        let bytes = file.to_bytes().unwrap();
        let back = SpikeFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        prop_assert_eq!(back.train.len(), file.train.len());
        if stored {
            prop_assert_eq!(back, file);
        }
    }

    #[test]
    fn replayed_thresholds_match_the_encoder(
        amps in prop::collection::vec(-1.0f64..1.0, 50..400),
        c in 1e-4f64..1e-2,
        m in 0.0f64..0.3,
        d in 1e-3f64..0.02,
    ) {
        let bank = default_bank(4, 8000).unwrap();
        let p = ThresholdParams::new(c, m, d).unwrap();
        let train = encode(&amps, &bank, &p).unwrap();
        let replay = replay_thresholds(&train, bank.len(), &p);
        for (s, r) in train.spikes.iter().zip(&replay) {
            prop_assert_eq!(s.threshold.to_bits(), r.to_bits());
        }
    }

    #[test]
    fn snr_is_scale_invariant(x in prop::collection::vec(-1.0f64..1.0, 2..64), g in 0.1f64..10.0) {
        let y: Vec<f64> = x.iter().map(|v| v * 0.9 + 0.01).collect();
        let a = snr(&x, &y);
        let xs: Vec<f64> = x.iter().map(|v| v * g).collect();
        let ys: Vec<f64> = y.iter().map(|v| v * g).collect();
        if let (Ok(a), Ok(b)) = (a, snr(&xs, &ys)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn error_bound_grows_with_refractory_and_eta(
        d in 1e-4f64..0.1, gamma in 0.0f64..1.0, lip in 0.0f64..1e4, xm in 0.0f64..2.0, eta in 0.0f64..0.9,
    ) {
        let base = approx_error_bound(d, gamma, lip, xm, eta).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert!(approx_error_bound(d * 1.5, gamma, lip, xm, eta).unwrap() >= base);
        prop_assert!(approx_error_bound(d, gamma, lip, xm, eta + 0.05).unwrap() >= base);
    }

    #[test]
    fn condition_bounds_are_ordered(k in 1usize..200, beta in 0.0f64..0.99) {
        let b = condition_bounds(k, beta).unwrap();
        prop_assert!(b.log10_lower <= b.log10_upper + 1e-12);
        prop_assert!(b.log10_lower >= 0.0);
    }

    #[test]
    fn beta_d_bound_rises_with_distance(beta in 0.01f64..0.99, d in 1usize..100) {
        let a = beta_d_bound(beta, d).unwrap();
        let b = beta_d_bound(beta, d + 1).unwrap();
        prop_assert!((0.0..1.0).contains(&a));
        prop_assert!(b >= a);
    }

    #[test]
    fn overlap_partition_is_valid(amps in prop::collection::vec(-1.0f64..1.0, 100..600), d in 2e-3f64..0.02) {
        let bank = default_bank(6, 8000).unwrap();
        let p = ThresholdParams::new(1e-3, 0.05, d).unwrap();
        let train = encode(&amps, &bank, &p).unwrap();
        let part = partition_overlap(&train, &bank, &p);
        prop_assert!(part.check(&train, &bank).is_ok());
    }
}
