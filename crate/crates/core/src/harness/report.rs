//! Summary tables over `records.csv`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::records::RunRecord;

/// Aggregate of all seeds for one `(sweep, method)` group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep: String,
    pub method: String,
    pub direction: String,
    pub runs: usize,
    pub mean_train_acc_target: f64,
    pub mean_test_acc_target: f64,
    pub mean_mia_acc_target: f64,
    pub median_adv_mi_target: f64,
    pub mean_adv_mi_source: Option<f64>,
    pub mean_similarity: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Median; mean of the two middle values for even lengths.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let vals: Vec<f64> = v.flatten().collect();
    (!vals.is_empty()).then(|| mean(&vals))
}

/// Groups by `(sweep, method)` in order of first appearance.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in records {
        let k = (r.sweep.clone(), r.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(sweep, method)| {
            let g: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.sweep == sweep && r.method == method)
                .collect();
            let col = |f: fn(&RunRecord) -> f64| g.iter().map(|r| f(r)).collect::<Vec<_>>();
            SummaryRow {
                direction: g[0].direction.clone(),
                runs: g.len(),
                mean_train_acc_target: mean(&col(|r| r.train_acc_target)),
                mean_test_acc_target: mean(&col(|r| r.test_acc_target)),
                mean_mia_acc_target: mean(&col(|r| r.mia_acc_target)),
                median_adv_mi_target: median(&col(|r| r.adv_mi_target)),
                mean_adv_mi_source: mean_opt(g.iter().map(|r| r.adv_mi_source)),
                mean_similarity: mean_opt(g.iter().map(|r| r.similarity)),
                sweep,
                method,
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Markdown table of [`summarize`].
pub fn render_markdown(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "| sweep | method | direction | runs | train acc (target) | test acc (target) | MIA acc (target) | median adv_mi (target) | adv_mi (source) | similarity |\n\
         |---|---|---|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {} | {} |",
            r.sweep,
            r.method,
            r.direction,
            r.runs,
            r.mean_train_acc_target,
            r.mean_test_acc_target,
            r.mean_mia_acc_target,
            r.median_adv_mi_target,
            cell(r.mean_adv_mi_source),
            cell(r.mean_similarity),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn groups_in_first_appearance_order() {
        let rec = |method: &str, seed, adv| RunRecord {
            method: method.into(),
            direction: "s->t".into(),
            train_acc_target: 1.0,
            test_acc_target: 0.5,
            mia_acc_target: 0.5 + adv / 2.0,
            adv_mi_target: adv,
            mia_acc_source: None,
            adv_mi_source: None,
            similarity: None,
            size: None,
            diversity: None,
            seed,
            wall_time: 0.0,
            sweep: "-".into(),
            epochs: 1,
            mean_gen_error: None,
            mean_pred_l1: 0.0,
        };
        let rows = summarize(&[rec("baseline", 0, 0.4), rec("ddc", 0, 0.1), rec("baseline", 1, 0.2)]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method, "baseline");
        assert_eq!(rows[0].runs, 2);
        assert!((rows[0].median_adv_mi_target - 0.3).abs() < 1e-12);
        let md = render_markdown(&rows);
        assert_eq!(md.lines().count(), 4);
    }
}
