//! CSV layouts. Column names here are a public contract; change them only
//! together with the header tests at the bottom of this file.

use std::collections::BTreeMap;

use causal_twin::attribution::AttributionReport;
use causal_twin::classifier::{MetricsVector, METRIC_NAMES};
use causal_twin::drift::{BootstrapSummary, BreakingPointEstimate, NoiseContrastRecord, RobustnessCurve, StepRecord, Threshold};
use causal_twin::monitors::MonitorReport;
use causal_twin::scm::Scm;
use causal_twin::validation::ValidationReport;

use crate::output::{flag, num, opt, Table};

fn metric_cells(m: &MetricsVector) -> Vec<String> {
    vec![
        num(m.accuracy),
        num(m.balanced_accuracy),
        num(m.recall),
        num(m.specificity),
        num(m.precision),
        num(m.f1),
        opt(m.auroc),
        opt(m.pr_auc),
    ]
}

pub fn key_values(pairs: &[(&str, String)]) -> Table {
    let mut t = Table::new(["key", "value"]);
    for (k, v) in pairs {
        t.push(vec![k.to_string(), v.clone()]);
    }
    t
}

pub fn fit_diagnostics(scm: &Scm) -> Table {
    let mut t = Table::new([
        "node",
        "mechanism",
        "n_parents",
        "n_parameters",
        "log_likelihood",
        "iterations",
        "residual_std",
        "n_components",
    ]);
    for (node, mech) in scm.mechanisms() {
        let d = &scm.diagnostics()[node];
        t.push(vec![
            node.clone(),
            mech.kind_name().to_string(),
            mech.parents().len().to_string(),
            mech.n_free_parameters().to_string(),
            num(d.log_likelihood),
            d.iterations.to_string(),
            opt(d.residual_std),
            d.n_components.map(|c| c.to_string()).unwrap_or_default(),
        ]);
    }
    t
}

pub fn model_metrics(rows: &[(String, String, MetricsVector)]) -> Table {
    let mut t = Table::new(["model", "split"].into_iter().chain(METRIC_NAMES));
    for (model, split, m) in rows {
        let mut r = vec![model.clone(), split.clone()];
        r.extend(metric_cells(m));
        t.push(r);
    }
    t
}

pub fn validation(report: &ValidationReport) -> Table {
    let mut t = Table::new(["tier", "item", "statistic", "threshold", "pass"]);
    for r in report.rows() {
        t.push(vec![r.tier, r.item, num(r.statistic), num(r.threshold), flag(r.pass)]);
    }
    t
}

pub fn curve(c: &RobustnessCurve) -> Table {
    let mut t = Table::new(
        ["sample_index", "step", "delta", "y_true", "y_pred", "score"]
            .into_iter()
            .chain(METRIC_NAMES),
    );
    let windows: BTreeMap<usize, &MetricsVector> = c.windows.iter().map(|w| (w.end_index, &w.metrics)).collect();
    for s in &c.stream {
        let mut r = vec![
            s.sample_index.to_string(),
            s.step.to_string(),
            num(s.delta),
            flag(s.y_true),
            flag(s.y_pred),
            num(s.score),
        ];
        match windows.get(&s.sample_index) {
            Some(m) => r.extend(metric_cells(m)),
            None => r.extend(std::iter::repeat_n(String::new(), METRIC_NAMES.len())),
        }
        t.push(r);
    }
    t
}

pub fn steps(steps: &[StepRecord]) -> Table {
    let mut t = Table::new(["step", "delta"].into_iter().chain(METRIC_NAMES));
    for s in steps {
        let mut r = vec![s.step.to_string(), num(s.delta)];
        r.extend(metric_cells(&s.metrics));
        t.push(r);
    }
    t
}

pub fn breaking_points(tau: &Threshold, estimates: &[BreakingPointEstimate]) -> Table {
    let mut t = Table::new(["rule", "metric", "tau", "found", "step", "delta_crit"]);
    for e in estimates {
        t.push(vec![
            e.rule.name(),
            tau.metric.clone(),
            num(tau.value),
            flag(e.found),
            e.step.map(|s| s.to_string()).unwrap_or_default(),
            opt(e.delta_crit),
        ]);
    }
    t
}

pub fn bootstrap(summary: &BootstrapSummary, base_seed: u64) -> Table {
    let mut t = Table::new(["replication", "seed", "found", "delta_crit"]);
    for (r, v) in summary.values.iter().enumerate() {
        t.push(vec![r.to_string(), (base_seed + r as u64).to_string(), flag(v.is_some()), opt(*v)]);
    }
    t
}

pub fn bootstrap_summary(summary: &BootstrapSummary) -> Table {
    key_values(&[
        ("mean", opt(summary.mean)),
        ("median", opt(summary.median)),
        ("std", opt(summary.std)),
        ("ci_lower", opt(summary.ci_lower)),
        ("ci_upper", opt(summary.ci_upper)),
        ("n_replications", summary.n_replications.to_string()),
        ("n_found", summary.n_found.to_string()),
    ])
}

pub fn noise(records: &[NoiseContrastRecord]) -> Table {
    let mut t = Table::new([
        "step",
        "fraction",
        "delta",
        "causal_precision",
        "causal_f1",
        "noise_precision",
        "noise_f1",
        "delta_precision",
    ]);
    for r in records {
        t.push(vec![
            r.step.to_string(),
            num(r.fraction),
            num(r.delta),
            num(r.causal.precision),
            num(r.causal.f1),
            num(r.noise.precision),
            num(r.noise.f1),
            num(r.delta_precision),
        ]);
    }
    t
}

/// Fixed summary columns, then `precision_drop` and one `alert_<delay>`
/// column per configured label delay, then per-feature `js:`, `ks_d:` and
/// `ks_p:` columns in feature-name order.
pub fn monitors(report: &MonitorReport) -> Table {
    let features: Vec<String> = report.records.first().map(|r| r.js.keys().cloned().collect()).unwrap_or_default();
    let mut header: Vec<String> = [
        "step",
        "delta",
        "precision",
        "f1",
        "max_js",
        "max_js_feature",
        "js_alert",
        "max_ks_d",
        "min_ks_p",
        "any_ks_p_below_alpha",
        "pca_error",
        "pca_threshold",
        "pca_alert",
        "precision_drop",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(report.supervised.keys().map(|k| format!("alert_{k}")));
    for prefix in ["js", "ks_d", "ks_p"] {
        header.extend(features.iter().map(|f| format!("{prefix}:{f}")));
    }
    let baseline = report.records.first().and_then(|r| r.precision);
    let mut t = Table::new(header);
    for (i, r) in report.records.iter().enumerate() {
        let mut row = vec![
            r.step.to_string(),
            num(r.delta),
            opt(r.precision),
            opt(r.f1),
            num(r.max_js),
            r.max_js_feature.clone(),
            flag(r.js_alert),
            num(r.max_ks_d),
            num(r.min_ks_p),
            flag(r.any_ks_p_below_alpha),
            num(r.pca_error),
            num(report.pca_threshold),
            flag(r.pca_alert),
            opt(baseline.zip(r.precision).map(|(b, p)| b - p)),
        ];
        row.extend(report.supervised.values().map(|alerts| flag(alerts[i])));
        for map in [&r.js, &r.ks_d, &r.ks_p] {
            row.extend(features.iter().map(|f| num(map[f])));
        }
        t.push(row);
    }
    t
}

pub fn attribution(report: &AttributionReport) -> Table {
    let mut t = Table::new([
        "feature",
        "mean_abs_attribution",
        "causal_distance",
        "drift_tested",
        "drifted_parent",
        "drifted_child",
        "delta_crit",
        "rule",
    ]);
    for r in &report.records {
        let (parent, child) = r.drifted_edge.clone().unwrap_or_default();
        t.push(vec![
            r.feature.clone(),
            num(r.mean_abs_attribution),
            r.causal_distance.map(|d| d.to_string()).unwrap_or_else(|| "inf".into()),
            flag(r.drift_tested),
            parent,
            child,
            r.delta_crit_label(),
            r.rule.clone(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use causal_twin::drift::BreakingRule;

    #[test]
    fn stable_headers() {
        let s = steps(&[]);
        assert_eq!(
            s.header.join(","),
            "step,delta,accuracy,balanced_accuracy,recall,specificity,precision,f1,auroc,pr_auc"
        );
        let bp = breaking_points(&Threshold::default(), &[]);
        assert_eq!(bp.header.join(","), "rule,metric,tau,found,step,delta_crit");
        let b = bootstrap(&BootstrapSummary::from_values(vec![]), 0);
        assert_eq!(b.header.join(","), "replication,seed,found,delta_crit");
        assert_eq!(
            noise(&[]).header.join(","),
            "step,fraction,delta,causal_precision,causal_f1,noise_precision,noise_f1,delta_precision"
        );
        assert_eq!(
            attribution(&AttributionReport {
                target: "y".into(),
                records: vec![]
            })
            .header
            .join(","),
            "feature,mean_abs_attribution,causal_distance,drift_tested,drifted_parent,drifted_child,delta_crit,rule"
        );
    }

    #[test]
    fn breaking_point_row() {
        let e = BreakingPointEstimate {
            delta_crit: Some(-0.35),
            step: Some(14),
            rule: BreakingRule::RwaConsistent,
            found: true,
        };
        let t = breaking_points(&Threshold::default(), &[e]);
        assert_eq!(t.rows[0], vec!["rwa_consistent", "precision", "0.7", "1", "14", "-0.35"]);
    }
}
