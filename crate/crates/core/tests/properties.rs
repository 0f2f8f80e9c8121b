use proptest::prelude::*;

use fingermi::autodiff::Tape;
use fingermi::dataio::{decode_eegf, encode_eegf, stratified_kfold};
use fingermi::loss::{self, adjust_weights, PredictionHistogram, WeightSchedule};
use fingermi::metrics::ConfusionMatrix;
use fingermi::model::max_norm_rows;
use fingermi::signal::EpochedDataset;
use fingermi::Tensor;

fn dataset() -> impl Strategy<Value = EpochedDataset> {
    (0usize..6, 1usize..4, 1usize..20).prop_flat_map(|(trials, channels, samples)| {
        (
            prop::collection::vec(-1e3f32..1e3, trials * channels * samples),
            prop::collection::vec(0usize..5, trials),
            prop::collection::vec("[A-Za-z0-9]{1,8}", channels),
        )
            .prop_map(move |(data, labels, names)| EpochedDataset {
                fs: 250.0,
                channel_names: names,
                n_samples: samples,
                data: data.into_iter().map(f64::from).collect(),
                labels,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eegf_round_trips(ds in dataset()) {
        let bytes = encode_eegf(&ds).unwrap();
        let back = decode_eegf(&bytes).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(encode_eegf(&back).unwrap(), bytes);
    }

    #[test]
    fn eegf_rejects_every_truncation(ds in dataset(), cut in 0.0f64..1.0) {
        let bytes = encode_eegf(&ds).unwrap();
        let keep = (bytes.len() as f64 * cut) as usize;
        prop_assert!(decode_eegf(&bytes[..keep]).is_err());
    }

    #[test]
    fn folds_partition_and_stratify(per_class in prop::collection::vec(5usize..12, 2..6), k in 2usize..6, seed in any::<u64>()) {
        let labels: Vec<usize> = per_class.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let folds = stratified_kfold(&labels, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = vec![0; labels.len()];
        for f in &folds {
            f.test.iter().for_each(|&i| seen[i] += 1);
            prop_assert_eq!(f.train.len() + f.test.len(), labels.len());
            for (c, &n) in per_class.iter().enumerate() {
                let in_test = f.test.iter().filter(|&&i| labels[i] == c).count();
                prop_assert!(in_test == n / k || in_test == n.div_ceil(k));
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        prop_assert_eq!(&folds, &stratified_kfold(&labels, k, seed).unwrap());
    }

    #[test]
    fn adjusted_weights_stay_in_bounds(counts in prop::collection::vec(0usize..60, 5), rounds in 1usize..120) {
        let hist = PredictionHistogram { counts };
        let schedule = WeightSchedule::default();
        let mut w = vec![1.0; 5];
        for _ in 0..rounds {
            w = adjust_weights(&w, &hist, &schedule);
            prop_assert!(w.iter().all(|&v| (schedule.lower..=schedule.upper).contains(&v)));
        }
    }

    #[test]
    fn weighted_loss_is_homogeneous(
        logits in prop::collection::vec(-5.0f64..5.0, 15),
        labels in prop::collection::vec(0usize..5, 3),
        alpha in prop::collection::vec(0.1f64..3.0, 5),
        c in 0.1f64..10.0,
    ) {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new([3, 5], logits).unwrap());
        let lp = t.log_softmax(x).unwrap();
        let scaled: Vec<f64> = alpha.iter().map(|a| a * c).collect();
        let a = loss::weighted_cross_entropy(&mut t, lp, &labels, &alpha).unwrap();
        let b = loss::weighted_cross_entropy(&mut t, lp, &labels, &scaled).unwrap();
        let (a, b) = (t.value(a).item(), t.value(b).item());
        prop_assert!((b - c * a).abs() <= 1e-12 * (c * a).abs().max(1.0));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn max_norm_caps_rows(data in prop::collection::vec(-3.0f64..3.0, 12), cap in 0.1f64..2.0) {
        let mut t = Tensor::new([4, 3], data.clone()).unwrap();
        max_norm_rows(&mut t, cap);
        for (row, orig) in t.data().chunks(3).zip(data.chunks(3)) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let before = orig.iter().map(|v| v * v).sum::<f64>().sqrt();
            if before > cap {
                prop_assert!((norm - cap).abs() < 1e-12);
            } else {
                prop_assert_eq!(row, orig);
            }
        }
    }

    #[test]
    fn confusion_rows_sum_to_class_counts(pairs in prop::collection::vec((0usize..5, 0usize..5), 0..50)) {
        let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = ConfusionMatrix::from_predictions(5, &truth, &pred).unwrap();
        for (c, &n) in m.row_sums().iter().enumerate() {
            prop_assert_eq!(n, truth.iter().filter(|&&t| t == c).count());
        }
        prop_assert_eq!(m.total(), truth.len());
    }
}
