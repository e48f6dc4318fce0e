//! Markdown report: column legend, error-vs-n slope fits, diagnostics and
//! dynamics tables.

use std::collections::BTreeMap;
use std::fmt::Write;

use pomdp_ope::diagnostics::ConditionReport;
use pomdp_ope::linalg::linear_fit;
use serde::{Deserialize, Serialize};

use crate::run::{DynamicsRow, ResultRow, CSV_COLUMNS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub estimator: String,
    /// `(n, mean log |error|, rows)` per grid point.
    pub points: Vec<(usize, f64, usize)>,
    /// Least-squares slope of mean log-error on log n; `None` with fewer
    /// than two grid points.
    pub slope: Option<f64>,
}

/// Per-estimator fit of mean log abs error against log n. Rows without an
/// oracle value or with errors are skipped.
pub fn slope_fits(rows: &[ResultRow]) -> Vec<SlopeFit> {
    let mut by_est: BTreeMap<&str, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        if let Some(e) = r.abs_error {
            by_est
                .entry(r.estimator.as_str())
                .or_default()
                .entry(r.n)
                .or_default()
                .push(e.max(f64::MIN_POSITIVE).ln());
        }
    }
    by_est
        .into_iter()
        .map(|(name, grid)| {
            let points: Vec<(usize, f64, usize)> = grid
                .into_iter()
                .map(|(n, v)| (n, v.iter().sum::<f64>() / v.len() as f64, v.len()))
                .collect();
            let usable: Vec<&(usize, f64, usize)> = points.iter().filter(|p| p.0 > 0).collect();
            let slope = (usable.len() >= 2).then(|| {
                let x: Vec<f64> = usable.iter().map(|p| (p.0 as f64).ln()).collect();
                let y: Vec<f64> = usable.iter().map(|p| p.1).collect();
                linear_fit(&x, &y).1
            });
            SlopeFit {
                estimator: name.to_string(),
                points,
                slope,
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.6e}"))
}

pub fn render(
    title: &str,
    rows: &[ResultRow],
    diagnostics: Result<&ConditionReport, String>,
    dynamics: Option<&[DynamicsRow]>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {title}\n");
    let _ = writeln!(s, "## results.csv columns\n");
    let _ = writeln!(s, "| column | meaning |\n|---|---|");
    for (c, m) in CSV_COLUMNS {
        let _ = writeln!(s, "| `{c}` | {m} |");
    }
    let _ = writeln!(
        s,
        "\n`results.jsonl` carries the same rows plus `runtime_ms`, which is kept out of the CSV so reruns are byte-identical.\n"
    );

    let _ = writeln!(s, "## Error vs n\n");
    let fits = slope_fits(rows);
    if fits.is_empty() {
        let _ = writeln!(s, "No rows with oracle values.\n");
    }
    for f in &fits {
        let _ = writeln!(
            s,
            "### {}\n\nslope of mean log|error| on log n: {}\n",
            f.estimator,
            f.slope.map_or("n/a".into(), |v| format!("{v:.4}"))
        );
        let _ = writeln!(s, "| n | mean log abs error | rows |\n|---|---|---|");
        for (n, m, k) in &f.points {
            let _ = writeln!(s, "| {n} | {m:.4} | {k} |");
        }
        let _ = writeln!(s);
    }

    let eq: Vec<&ResultRow> = rows.iter().filter(|r| r.reference_diff.is_some()).collect();
    if !eq.is_empty() {
        let _ = writeln!(s, "## Equivalence rows\n\n| estimator | n | seed | reference diff |\n|---|---|---|---|");
        for r in eq {
            let _ = writeln!(s, "| {} | {} | {} | {} |", r.estimator, r.n, r.seed, opt(r.reference_diff));
        }
        let _ = writeln!(s);
    }
    let failed: Vec<&ResultRow> = rows.iter().filter(|r| r.status != "ok").collect();
    if !failed.is_empty() {
        let _ = writeln!(s, "## Failed rows\n\n| estimator | n | seed | status |\n|---|---|---|---|");
        for r in failed {
            let _ = writeln!(s, "| {} | {} | {} | {} |", r.estimator, r.n, r.seed, r.status);
        }
        let _ = writeln!(s);
    }

    let _ = writeln!(s, "## Diagnostics\n");
    match diagnostics {
        Ok(d) => {
            let r = &d.ranks;
            let c = &d.numbers;
            let _ = writeln!(s, "| quantity | value |\n|---|---|");
            let items: Vec<(&str, String)> = vec![
                ("rank Pr(F̄ | S̄)", r.rank_f_given_s.to_string()),
                ("rank Pr(S̄, H)", r.rank_s_h.to_string()),
                ("rank Pr(F̄, H)", r.rank_f_h.to_string()),
                ("|S̄_b|", r.s_bar_b_size.to_string()),
                ("observability", r.observability.to_string()),
                ("invertibility", r.invertibility.to_string()),
                ("rank iff holds", r.iff_holds.to_string()),
                ("IV1", format!("{:.6e}", c.iv1)),
                ("Dr", format!("{:.6e}", c.dr)),
                ("kappa", format!("{:.6e}", c.kappa)),
                ("max mu", format!("{:.6e}", c.mu_max)),
            ];
            for (k, v) in items {
                let _ = writeln!(s, "| {k} | {v} |");
            }
            if !r.observability {
                let _ = writeln!(
                    s,
                    "\n**Observability fails**: futures cannot separate the reachable latent states, so the value is not identified."
                );
            }
            if !r.invertibility {
                let _ = writeln!(s, "\n**Invertibility fails**: histories do not span the latent states.");
            }
        }
        Err(e) => {
            let _ = writeln!(s, "unavailable: {e}");
        }
    }
    let _ = writeln!(s);

    if let Some(dy) = dynamics {
        let _ = writeln!(
            s,
            "## Dynamics\n\n| source | sequence | truth | spectral | minimax | max predictive error | status |\n|---|---|---|---|---|---|---|"
        );
        for r in dy {
            let pe = r
                .predictive
                .iter()
                .zip(&r.predictive_truth)
                .map(|(a, b)| (a - b).abs())
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
            let _ = writeln!(
                s,
                "| {} | {:?} | {:.6e} | {} | {} | {} | {} |",
                r.source,
                r.sequence,
                r.truth,
                opt(r.spectral),
                opt(r.minimax),
                opt(pe),
                r.status
            );
        }
        let _ = writeln!(s);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(est: &str, n: usize, err: Option<f64>) -> ResultRow {
        ResultRow {
            estimator: est.into(),
            n,
            seed: 0,
            j_hat: Some(1.0),
            j_true: err.map(|_| 1.0),
            abs_error: err,
            reference_diff: None,
            diagnostics_hash: String::new(),
            status: "ok".into(),
            runtime_ms: 0.0,
        }
    }

    #[test]
    fn slope_recovers_power_law() {
        let rows: Vec<ResultRow> = [100usize, 1000, 10000]
            .iter()
            .flat_map(|&n| [row("a", n, Some(3.0 / (n as f64).sqrt())), row("b", n, None)])
            .collect();
        let fits = slope_fits(&rows);
        assert_eq!(fits.len(), 1);
        assert!((fits[0].slope.unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_point_has_no_slope_and_report_renders() {
        let rows = vec![row("a", 10, Some(0.1))];
        assert_eq!(slope_fits(&rows)[0].slope, None);
        let md = render("t", &rows, Err("none".into()), None);
        assert!(md.contains("| `abs_error` |"));
        assert!(md.contains("unavailable: none"));
    }
}
