//! Paired baseline/DDC runs over ten seeds and trainer sanity runs.

use damia_core::da::{train_adda, train_baseline, DaJob, Method};
use damia_core::domain::{synth_two_domains, SynthSpec};
use damia_core::harness::{run_experiment, ExperimentConfig, RunRecord};
use damia_core::metrics::accuracy;
use damia_core::TrainConfig;

const Q1: &str = include_str!("../../../configs/q1.json");

fn paired_records(config: &mut ExperimentConfig) -> Vec<(RunRecord, RunRecord)> {
    config.methods = vec![Method::Baseline, Method::Ddc];
    let out = run_experiment(config).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    for r in &out.records {
        assert!((r.adv_mi_target - (r.mia_acc_target - 0.5).abs() / 0.5).abs() <= 1e-12);
        for v in [r.train_acc_target, r.test_acc_target, r.mia_acc_target] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
    out.records
        .chunks(2)
        .map(|p| {
            assert_eq!((p[0].method.as_str(), p[1].method.as_str()), ("baseline", "ddc"));
            assert_eq!(p[0].seed, p[1].seed);
            (p[0].clone(), p[1].clone())
        })
        .collect()
}

#[test]
fn ddc_narrows_generalization_gap() {
    let pairs = paired_records(&mut ExperimentConfig::from_json(Q1).unwrap());
    assert_eq!(pairs.len(), 10);
    let base_gap: Vec<f64> = pairs.iter().map(|(b, _)| b.mean_gen_error.unwrap()).collect();
    let mean_base_gap = base_gap.iter().sum::<f64>() / base_gap.len() as f64;
    let wins = pairs
        .iter()
        .filter(|(b, d)| d.mean_gen_error.unwrap() < b.mean_gen_error.unwrap())
        .count();
    println!("baseline mean gen error {mean_base_gap:.4}; DDC smaller in {wins}/10");
    assert!(mean_base_gap > 0.1);
    assert!(wins >= 8);
}

/// Histogram L1 over 20 bins is inflated by sampling noise whenever the
/// confidences are spread out, so the comparison is made where the baseline
/// sees a tiny target (5 train samples per class) and both models are
/// accurate.
#[test]
fn ddc_prediction_distributions_are_closer_on_a_tiny_target() {
    let mut config = ExperimentConfig::from_json(Q1).unwrap();
    if let damia_core::harness::DataSource::Synthetic(spec) = &mut config.data {
        spec.n_per_class_target = Some(10);
        spec.noise = 0.2;
    }
    let pairs = paired_records(&mut config);
    let wins = pairs.iter().filter(|(b, d)| d.mean_pred_l1 <= b.mean_pred_l1).count();
    let mean = |f: fn(&(RunRecord, RunRecord)) -> f64| pairs.iter().map(f).sum::<f64>() / pairs.len() as f64;
    println!(
        "mean L1 baseline {:.4}, DDC {:.4}; DDC no larger in {wins}/10",
        mean(|p| p.0.mean_pred_l1),
        mean(|p| p.1.mean_pred_l1)
    );
    assert!(wins >= 8);
}

#[test]
fn well_separated_classes_are_learned() {
    let spec = SynthSpec {
        n_per_class: 30,
        n_classes: 3,
        dim: 8,
        noise: 0.02,
        center_spread: 0.45,
        ..SynthSpec::default()
    };
    let (source, _) = synth_two_domains(&spec).unwrap();
    let d = &source.train;
    let means: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            let rows: Vec<&[f64]> = d
                .features()
                .iter_rows()
                .zip(d.labels().unwrap())
                .filter(|(_, &y)| y == c)
                .map(|(r, _)| r)
                .collect();
            (0..8).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect()
        })
        .collect();
    for a in 0..3 {
        for b in a + 1..3 {
            let dist = means[a].iter().zip(&means[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!(dist >= 6.0 * spec.noise, "class means {a},{b} only {dist} apart");
        }
    }
    let config = TrainConfig { epochs: 200, hidden: vec![16, 16], ..TrainConfig::default() };
    let model = train_baseline(&source, &config).unwrap().model;
    let acc = accuracy(&model, &source.train).unwrap().unwrap();
    assert!(acc >= 0.95, "train accuracy {acc}");
}

#[test]
fn adda_discriminator_history_is_logged() {
    let spec = SynthSpec { n_per_class: 40, domain_shift: 0.3, ..SynthSpec::default() };
    let (source, target) = synth_two_domains(&spec).unwrap();
    let config = TrainConfig { epochs: 30, hidden: vec![32, 16], ..TrainConfig::default() };
    let job = DaJob::new(source, &target, Method::Adda, config).unwrap();
    let out = train_adda(&job).unwrap();
    let accs: Vec<f64> = out
        .artifact
        .history
        .iter()
        .filter_map(|e| e.discriminator_acc)
        .collect();
    // Convergence is not guaranteed for adversarial training, so the trend is
    // reported rather than asserted.
    println!(
        "discriminator accuracy: first {:.3}, last {:.3}",
        accs.first().unwrap(),
        accs.last().unwrap()
    );
    assert!(accs.iter().all(|a| (0.0..=1.0).contains(a)));
}
