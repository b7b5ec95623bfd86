//! Acceptance criteria. Each criterion prints one `PASS` or `FAIL` line; the
//! process exits non-zero when any criterion fails.
//!
//! Expected values either come from published tables (advantage arithmetic,
//! similarity representability) or from oracles written here independently of
//! the library code they check.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use damia_core::attack::{advantage, fit_threshold, ScoreSet};
use damia_core::da::{ddc_objective, drcn_objective, mmd, mmd2, train, DaJob, Decoder, Method};
use damia_core::domain::{perturb, similarity, synth_image_domain, Dataset, Domain, Fingerprint, PerturbKind, Split};
use damia_core::harness::{build_scenario, median, run_and_write, run_experiment, ExperimentConfig, SweepPoint};
use damia_core::{Bandwidth, Kernel, Mat2, MlpModel, Rng, TrainConfig};

const Q1: &str = include_str!("../../../configs/q1.json");

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform(rows: usize, cols: usize, rng: &mut Rng) -> Mat2 {
    Mat2::from_vec(rows, cols, (0..rows * cols).map(|_| rng.uniform()).collect()).unwrap()
}

// 1 -------------------------------------------------------------------------

fn advantage_arithmetic() -> Verdict {
    let table = [
        (0.77324, 0.54648),
        (0.514514926, 0.029029852),
        (0.68003, 0.36006),
        (0.534591195, 0.06918239),
        (0.503727767, 0.007455534),
        (0.503108333, 0.006216666),
    ];
    let worst = table
        .iter()
        .map(|&(p, adv)| (advantage(p).unwrap() - adv).abs())
        .fold(0.0, f64::max);
    check(worst <= 1e-9, format!("max abs error {worst:.3e} over {} rows", table.len()))
}

// 2 -------------------------------------------------------------------------

/// Smallest |pre-activation| of any hidden unit, computed here from the raw
/// parameters. Finite differences are meaningless within a step of a ReLU kink.
fn min_abs_preactivation(model: &MlpModel, x: &Mat2) -> f64 {
    let mut a: Vec<Vec<f64>> = x.iter_rows().map(<[f64]>::to_vec).collect();
    let mut min = f64::INFINITY;
    let n_layers = model.weights().len();
    for (w, b) in model.weights().iter().zip(model.biases()).take(n_layers - 1) {
        a = a
            .iter()
            .map(|row| {
                (0..w.cols())
                    .map(|j| {
                        let z = b[j] + (0..w.rows()).map(|i| row[i] * w[(i, j)]).sum::<f64>();
                        min = min.min(z.abs());
                        z.max(0.0)
                    })
                    .collect()
            })
            .collect();
    }
    min
}

/// Per-coordinate `|a − n| / max(|a|, |n|, 1e-6)`, maximized.
fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

fn central_diff(params: &[f64], f: &mut dyn FnMut(&[f64]) -> f64) -> Vec<f64> {
    const H: f64 = 1e-5;
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + H;
            let up = f(&p);
            p[i] = orig - H;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

struct Trial {
    model: MlpModel,
    xs: Mat2,
    ys: Vec<usize>,
    xt: Mat2,
}

fn random_trial(rng: &mut Rng) -> Trial {
    loop {
        let n_in = 2 + rng.below(3);
        let n_hidden = 1 + rng.below(2);
        let mut dims = vec![n_in];
        dims.extend((0..n_hidden).map(|_| 2 + rng.below(4)));
        dims.push(2 + rng.below(2));
        let mut model = MlpModel::new(&dims, rng.below(n_hidden), rng).unwrap();
        if model.n_params() > 64 {
            continue;
        }
        let params: Vec<f64> = (0..model.n_params()).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        model.set_flat_params(&params).unwrap();
        let xs = uniform(3 + rng.below(3), n_in, rng);
        let xt = uniform(2 + rng.below(4), n_in, rng);
        let margin = min_abs_preactivation(&model, &xs).min(min_abs_preactivation(&model, &xt));
        if margin < 1e-3 {
            continue;
        }
        let n_out = *dims.last().unwrap();
        let ys = (0..xs.rows()).map(|_| rng.below(n_out)).collect();
        return Trial { model, xs, ys, xt };
    }
}

fn gradient_correctness() -> Verdict {
    let mut rng = Rng::new(20_240_601);
    let (mut plain, mut with_mmd, mut with_recon) = (0.0f64, 0.0f64, 0.0f64);
    for trial in 0..100 {
        let Trial { model, xs, ys, xt } = random_trial(&mut rng);
        let p0 = model.flat_params();
        let set = |p: &[f64]| {
            let mut m = model.clone();
            m.set_flat_params(p).unwrap();
            m
        };

        let pass = model.forward(&xs).unwrap();
        let analytic = model.backward(&pass, &ys, None).unwrap().flatten();
        let numeric = central_diff(&p0, &mut |p| set(p).loss(&xs, &ys).unwrap());
        plain = plain.max(max_rel_err(&analytic, &numeric));

        let config = TrainConfig {
            lambda_mmd: rng.uniform_in(0.1, 2.0),
            kernel: if trial % 2 == 0 { Kernel::Linear } else { Kernel::Rbf },
            rbf_bandwidth: Bandwidth::Fixed(rng.uniform_in(0.5, 3.0)),
            recon_weight: rng.uniform_in(0.1, 2.0),
            ..TrainConfig::default()
        };
        let (_, g) = ddc_objective(&model, &xs, &ys, &xt, &config).unwrap();
        let numeric = central_diff(&p0, &mut |p| ddc_objective(&set(p), &xs, &ys, &xt, &config).unwrap().0);
        with_mmd = with_mmd.max(max_rel_err(&g.flatten(), &numeric));

        let decoder = Decoder::new(model.feature_dim(), xs.cols(), &mut rng).unwrap();
        let (_, g, dg) = drcn_objective(&model, &decoder, &xs, &ys, &xt, &config).unwrap();
        let numeric = central_diff(&p0, &mut |p| {
            drcn_objective(&set(p), &decoder, &xs, &ys, &xt, &config).unwrap().0
        });
        with_recon = with_recon.max(max_rel_err(&g.flatten(), &numeric));
        let d0 = decoder.flat_params();
        let numeric = central_diff(&d0, &mut |p| {
            let mut d = decoder.clone();
            d.set_flat_params(p).unwrap();
            drcn_objective(&model, &d, &xs, &ys, &xt, &config).unwrap().0
        });
        with_recon = with_recon.max(max_rel_err(&dg.flatten(), &numeric));
    }
    let worst = plain.max(with_mmd).max(with_recon);
    check(
        worst < 1e-4,
        format!("100 nets; max rel err plain {plain:.2e}, +mmd {with_mmd:.2e}, +recon {with_recon:.2e}"),
    )
}

// 3 -------------------------------------------------------------------------

/// Exhaustive scan: every threshold at or just above an observed score.
fn brute_force_p_inference(members: &[f64], nonmembers: &[f64]) -> f64 {
    let mut ts: Vec<f64> = members.iter().chain(nonmembers).copied().collect();
    ts.push(f64::INFINITY);
    let (m, n) = (members.len() as f64, nonmembers.len() as f64);
    let mut best = f64::NEG_INFINITY;
    for t in ts {
        let tp = members.iter().filter(|&&s| s >= t).count() as f64;
        let tn = nonmembers.iter().filter(|&&s| s < t).count() as f64;
        best = best.max((tp / m + tn / n) / 2.0);
    }
    best
}

fn attack_oracle() -> Verdict {
    let mut rng = Rng::new(77);
    let mut mismatches = 0;
    for i in 0..500 {
        let gridded = i % 2 == 0;
        let mut draw = |n: usize, lift: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let v = (rng.uniform() + lift).min(1.0);
                    if gridded {
                        (v * 1000.0).floor() / 1000.0
                    } else {
                        v
                    }
                })
                .collect()
        };
        let lift = (i % 5) as f64 * 0.1;
        let m = 1 + rng_size(i, 200);
        let n = 1 + rng_size(i * 7 + 3, 200);
        let members = draw(m, lift);
        let nonmembers = draw(n, 0.0);
        let expected = brute_force_p_inference(&members, &nonmembers);
        let got = fit_threshold(&ScoreSet::new(members, nonmembers).unwrap()).unwrap().p_inference;
        if got != expected {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches} mismatches over 500 score sets"))
}

fn rng_size(i: usize, max: usize) -> usize {
    let mut r = Rng::derive(i as u64, 5);
    r.below(max)
}

// 4 -------------------------------------------------------------------------

fn brute_rbf_mmd2(xs: &Mat2, xt: &Mat2, h: f64) -> f64 {
    let k = |a: &Mat2, i: usize, b: &Mat2, j: usize| {
        let mut d = 0.0;
        for c in 0..a.cols() {
            d += (a[(i, c)] - b[(j, c)]).powi(2);
        }
        (-d / h).exp()
    };
    let block = |a: &Mat2, b: &Mat2| {
        let mut s = 0.0;
        for i in 0..a.rows() {
            for j in 0..b.rows() {
                s += k(a, i, b, j);
            }
        }
        s / (a.rows() * b.rows()) as f64
    };
    block(xs, xs) + block(xt, xt) - 2.0 * block(xs, xt)
}

fn brute_median_sq_dist(xs: &Mat2, xt: &Mat2) -> f64 {
    let all = xs.vstack(xt).unwrap();
    let mut d = Vec::new();
    for i in 0..all.rows() {
        for j in 0..i {
            d.push((0..all.cols()).map(|c| (all[(i, c)] - all[(j, c)]).powi(2)).sum::<f64>());
        }
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 { d[n / 2] } else { (d[n / 2 - 1] + d[n / 2]) / 2.0 };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

fn mmd_oracle() -> Verdict {
    let mut rng = Rng::new(4242);
    let mut worst_rbf = 0.0f64;
    for i in 0..100 {
        let dim = 1 + rng.below(6);
        let xs = uniform(1 + rng.below(12), dim, &mut rng);
        let xt = uniform(1 + rng.below(12), dim, &mut rng);
        let (bw, h) = if i % 2 == 0 {
            let h = rng.uniform_in(0.1, 4.0);
            (Bandwidth::Fixed(h), h)
        } else {
            (Bandwidth::MedianHeuristic, brute_median_sq_dist(&xs, &xt))
        };
        let got = mmd2(&xs, &xt, Kernel::Rbf, bw).unwrap();
        worst_rbf = worst_rbf.max((got - brute_rbf_mmd2(&xs, &xt, h)).abs());
    }

    // Linear: the distance between hand-computed means.
    let xs = Mat2::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
    let xt = Mat2::from_rows(&[vec![4.0, 1.0], vec![2.0, 1.0], vec![0.0, 4.0]]).unwrap();
    // means (1, 2) and (2, 2)
    let linear = mmd(&xs, &xt, Kernel::Linear, Bandwidth::MedianHeuristic).unwrap();

    let x = uniform(9, 3, &mut rng);
    let self_lin = mmd(&x, &x, Kernel::Linear, Bandwidth::MedianHeuristic).unwrap();
    let self_rbf = mmd(&x, &x, Kernel::Rbf, Bandwidth::MedianHeuristic).unwrap();
    check(
        worst_rbf <= 1e-12 && (linear - 1.0).abs() <= 1e-12 && self_lin == 0.0 && self_rbf == 0.0,
        format!(
            "rbf max err {worst_rbf:.2e} over 100; linear {linear}; mmd(X,X) linear {self_lin}, rbf {self_rbf}"
        ),
    )
}

// 5 -------------------------------------------------------------------------

fn directional_defense() -> Verdict {
    let mut config = ExperimentConfig::from_json(Q1).unwrap();
    config.methods = vec![Method::Baseline, Method::Ddc];
    let started = Instant::now();
    let out = run_experiment(&config).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    if !out.failures.is_empty() {
        return Err(format!("{} failed runs", out.failures.len()));
    }
    let col = |m: &str, f: fn(&damia_core::RunRecord) -> f64| -> Vec<f64> {
        out.records.iter().filter(|r| r.method == m).map(f).collect()
    };
    let base_adv = median(&col("baseline", |r| r.adv_mi_target));
    let ddc_adv = median(&col("ddc", |r| r.adv_mi_target));
    let ddc_acc = col("ddc", |r| r.test_acc_target);
    let ddc_acc_mean = ddc_acc.iter().sum::<f64>() / ddc_acc.len() as f64;
    let ddc_acc_min = ddc_acc.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        ddc_acc.len() == 10
            && base_adv >= 0.2
            && ddc_adv <= base_adv - 0.1
            && ddc_acc_mean >= 0.6
            && elapsed <= 300.0,
        format!(
            "10 seeds: median adv baseline {base_adv:.4}, DDC {ddc_adv:.4}; DDC test acc mean {ddc_acc_mean:.4} (min {ddc_acc_min:.4}); {elapsed:.1}s"
        ),
    )
}

// 6 -------------------------------------------------------------------------

fn similarity_form() -> Verdict {
    let d = synth_image_domain(16, 3, 10, 0.1, 5).unwrap();
    let same = similarity(&d, &d.clone()).unwrap();

    let mut off_grid = 0;
    for seed in 0..20 {
        let a = synth_image_domain(16, 3, 10, 0.1, seed).unwrap();
        let b = synth_image_domain(16, 3, 10, 0.1, seed + 100).unwrap();
        let s = similarity(&a, &b).unwrap();
        let k = (1.0 - s) * 64.0;
        if k != k.round() || !(0.0..=64.0).contains(&k) {
            off_grid += 1;
        }
    }
    let zero = Fingerprint::from_bits(0);
    let amazon = zero.similarity(&Fingerprint::from_bits((1u64 << 26) - 1));
    let dslr = zero.similarity(&Fingerprint::from_bits((1u64 << 14) - 1));
    check(
        same == 1.0 && off_grid == 0 && amazon == 0.593750 && dslr == 0.781250,
        format!("identical {same}; {off_grid}/20 off the k/64 grid; 26 bits -> {amazon:.6}, 14 bits -> {dslr:.6}"),
    )
}

// 7 -------------------------------------------------------------------------

fn perturbed_domain(d: &Domain, kind: PerturbKind, rng: &mut Rng) -> Domain {
    let sets: Vec<Dataset> = d
        .datasets()
        .iter()
        .map(|x| perturb(x, kind, kind.default_severity(), rng).unwrap())
        .collect();
    Domain::new(sets).unwrap()
}

fn perturbation_similarity() -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for kind in PerturbKind::ALL {
        let mut hits = 0;
        let mut worst = 1.0f64;
        for seed in 0..10 {
            let d = synth_image_domain(16, 4, 20, 0.1, 1000 + seed).unwrap();
            let p = perturbed_domain(&d, kind, &mut Rng::new(seed));
            let s = similarity(&p, &d).unwrap();
            worst = worst.min(s);
            if s >= 0.8 {
                hits += 1;
            }
        }
        ok &= hits >= 9;
        lines.push(format!("{kind} {hits}/10 (min {worst:.4})"));
    }
    check(ok, lines.join(", "))
}

// 8 -------------------------------------------------------------------------

fn determinism() -> Verdict {
    let config = ExperimentConfig::from_json(Q1).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let out = run_and_write(&config, a.path()).unwrap();
    run_and_write(&config, b.path()).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let ra = std::fs::read(a.path().join("records.csv")).unwrap();
    let rb = std::fs::read(b.path().join("records.csv")).unwrap();
    check(
        ra == rb && out.records.len() == config.seeds.len() * config.methods.len() && elapsed <= 300.0,
        format!(
            "{} records, {} bytes, identical: {}; {elapsed:.1}s",
            out.records.len(),
            ra.len(),
            ra == rb
        ),
    )
}

// 9 -------------------------------------------------------------------------

/// Same features, labels permuted.
fn relabeled(split: &Split, rng: &mut Rng) -> Split {
    let shuffle = |d: &Dataset, rng: &mut Rng| {
        let mut labels = d.labels().unwrap().to_vec();
        rng.shuffle(&mut labels);
        for y in &mut labels {
            *y = (*y + 1) % d.n_categories();
        }
        Dataset::new(d.name(), d.features().clone(), Some(labels), d.n_categories(), d.image_shape()).unwrap()
    };
    Split::from_parts(shuffle(&split.train, rng), shuffle(&split.non_train, rng)).unwrap()
}

fn label_hygiene() -> Verdict {
    let mut config = ExperimentConfig::from_json(Q1).unwrap();
    config.train.epochs = 5;
    let scenario = build_scenario(&config, &SweepPoint::Plain, 0).unwrap();
    let source = scenario.source.unwrap();
    let scrambled = relabeled(&scenario.target, &mut Rng::new(9));

    let mut absent = true;
    let mut identical = true;
    for method in [Method::Ddc, Method::Drcn, Method::Adda] {
        let job = DaJob::new(source.clone(), &scenario.target, method, config.train.clone()).unwrap();
        let json = serde_json::to_value(job.trainer_visible_target()).unwrap();
        absent &= json.get("labels").is_none();
        let whole = serde_json::to_string(&job.target).unwrap();
        absent &= !whole.contains("labels");

        let other = DaJob::new(source.clone(), &scrambled, method, config.train.clone()).unwrap();
        let a = train(&job).unwrap().model.flat_params();
        let b = train(&other).unwrap().model.flat_params();
        identical &= a == b;
    }
    check(
        absent && identical,
        format!("labels field absent: {absent}; models bit-identical under scrambled target labels: {identical}"),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 9] = [
        ("advantage arithmetic", advantage_arithmetic),
        ("gradient correctness", gradient_correctness),
        ("attack oracle equivalence", attack_oracle),
        ("mmd oracle equivalence", mmd_oracle),
        ("directional defense", directional_defense),
        ("similarity formula", similarity_form),
        ("perturbation similarity", perturbation_similarity),
        ("determinism", determinism),
        ("label hygiene", label_hygiene),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("PASS [{}] {name}: {d} ({secs:.1}s)", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL [{}] {name}: {d} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
