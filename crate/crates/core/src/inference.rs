//! Posterior summaries, credible intervals and DIC-based model comparison.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ObservationTable;
use crate::design::ParameterLayout;
use crate::error::{Error, Result};
use crate::likelihood::{multinomial_log_coefficient, row_log_likelihood};
use crate::sampler::{ess_chains, split_rhat, PosteriorDraws};

/// Lower and upper tail probabilities of the reported interval.
pub const CI_LEVELS: (f64, f64) = (0.025, 0.975);

/// Sample quantile by linear interpolation between order statistics at
/// position `h = (n - 1) p + 1` (1-based). `sorted` must be ascending.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// NaN when there are too few chains or draws.
    pub rhat: f64,
    pub ess: f64,
    /// Zero lies outside `[ci_low, ci_high]`.
    pub significant: bool,
}

impl ParamSummary {
    /// Summary of a single pooled sample; `rhat` and `ess` are left NaN.
    pub fn from_sample(name: impl Into<String>, sample: &[f64]) -> Result<Self> {
        if sample.len() < 2 {
            return Err(Error::contract("a summary needs at least two draws"));
        }
        let n = sample.len() as f64;
        let mean = sample.iter().sum::<f64>() / n;
        let var = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        let ci_low = quantile(&sorted, CI_LEVELS.0);
        let ci_high = quantile(&sorted, CI_LEVELS.1);
        Ok(Self {
            name: name.into(),
            mean,
            sd: var.sqrt(),
            median: quantile(&sorted, 0.5),
            ci_low,
            ci_high,
            rhat: f64::NAN,
            ess: f64::NAN,
            significant: ci_low > 0.0 || ci_high < 0.0,
        })
    }
}

/// Pooled summaries of every parameter, with split R-hat and ESS.
pub fn summarize(draws: &PosteriorDraws) -> Result<Vec<ParamSummary>> {
    if draws.total_draws() < 2 {
        return Err(Error::contract("a summary needs at least two draws"));
    }
    (0..draws.dim())
        .into_par_iter()
        .map(|k| {
            let mut s = ParamSummary::from_sample(&draws.names()[k], &draws.pooled(k))?;
            let chains = draws.param_chains(k);
            s.rhat = split_rhat(&chains).unwrap_or(f64::NAN);
            s.ess = ess_chains(&chains).map_or(f64::NAN, |e| e.value);
            Ok(s)
        })
        .collect()
}

/// Writes `parameter,mean,sd,median,q2.5,q97.5,rhat,ess,significant`.
pub fn write_summary_csv<W: Write>(summaries: &[ParamSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "parameter", "mean", "sd", "median", "q2.5", "q97.5", "rhat", "ess", "significant",
    ])?;
    for s in summaries {
        w.write_record([
            s.name.clone(),
            s.mean.to_string(),
            s.sd.to_string(),
            s.median.to_string(),
            s.ci_low.to_string(),
            s.ci_high.to_string(),
            s.rhat.to_string(),
            s.ess.to_string(),
            s.significant.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DicReport {
    /// Posterior mean deviance.
    pub dbar: f64,
    /// Deviance at the posterior mean.
    pub dhat: f64,
    pub pd: f64,
    pub dic: f64,
    /// Identifies the table the report was computed on.
    #[serde(skip)]
    pub fingerprint: u64,
}

impl DicReport {
    /// Builds the report from per-draw deviances and the deviance at the
    /// posterior mean.
    pub fn from_deviances(deviances: &[f64], dhat: f64, fingerprint: u64) -> Result<Self> {
        if deviances.is_empty() {
            return Err(Error::contract("DIC needs at least one draw"));
        }
        let dbar = deviances.iter().sum::<f64>() / deviances.len() as f64;
        let pd = dbar - dhat;
        Ok(Self {
            dbar,
            dhat,
            pd,
            dic: dhat + 2.0 * pd,
            fingerprint,
        })
    }

    /// Negative effective parameter counts signal poor mixing or a
    /// multimodal posterior.
    pub fn pd_negative(&self) -> bool {
        self.pd < 0.0
    }
}

fn deviance(layout: &ParameterLayout, table: &ObservationTable, theta: &[f64], constant: f64) -> f64 {
    let mut eta = vec![0.0; table.n_categories()];
    let mut ll = constant;
    for row in table.rows() {
        layout.fill_eta(theta, row.subject, row.week, &mut eta);
        ll += row_log_likelihood(&eta, &row.counts);
    }
    -2.0 * ll
}

fn dic_impl(
    layout: &ParameterLayout,
    table: &ObservationTable,
    draws: &PosteriorDraws,
    constant: f64,
) -> Result<DicReport> {
    if draws.total_draws() == 0 {
        return Err(Error::contract("DIC needs at least one draw"));
    }
    if draws.dim() != layout.total_dim() {
        return Err(Error::contract("draws do not match the parameter layout"));
    }
    let deviances: Vec<f64> = draws
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|theta| deviance(layout, table, theta, constant))
        .collect();
    let mean = draws.mean_state();
    let dhat = deviance(layout, table, &mean, constant);
    if !dhat.is_finite() {
        let mut eta = vec![0.0; table.n_categories()];
        let bad: Vec<String> = table
            .rows()
            .iter()
            .filter(|row| {
                layout.fill_eta(&mean, row.subject, row.week, &mut eta);
                !row_log_likelihood(&eta, &row.counts).is_finite()
            })
            .map(|row| {
                format!(
                    "{}@{}",
                    table.subjects()[row.subject],
                    table.weeks()[row.week]
                )
            })
            .collect();
        return Err(Error::NonFiniteDeviance(bad.join(", ")));
    }
    if let Some(i) = deviances.iter().position(|d| !d.is_finite()) {
        return Err(Error::NonFiniteDeviance(format!("draw {}", i + 1)));
    }
    DicReport::from_deviances(&deviances, dhat, table.fingerprint())
}

/// DIC with deviance `-2 log p(y | θ, u)`, the random intercepts counted
/// among the parameters. The multinomial coefficient is left out; it is
/// the same for every model on one table.
pub fn dic(
    layout: &ParameterLayout,
    table: &ObservationTable,
    draws: &PosteriorDraws,
) -> Result<DicReport> {
    dic_impl(layout, table, draws, 0.0)
}

/// As [`dic`], with the multinomial coefficient included in the deviance.
pub fn dic_with_coefficient(
    layout: &ParameterLayout,
    table: &ObservationTable,
    draws: &PosteriorDraws,
) -> Result<DicReport> {
    dic_impl(layout, table, draws, multinomial_log_coefficient(table))
}

/// Ranks models by ascending DIC, breaking ties by smaller `pd`, then by
/// name. All reports must come from the same table.
pub fn compare(reports: &[(String, DicReport)]) -> Result<Vec<(String, DicReport)>> {
    if reports.len() < 2 {
        return Err(Error::contract("comparison needs at least two models"));
    }
    let fp = reports[0].1.fingerprint;
    if reports.iter().any(|(_, r)| r.fingerprint != fp) {
        return Err(Error::contract("reports were computed on different tables"));
    }
    for (i, (name, _)) in reports.iter().enumerate() {
        if reports[..i].iter().any(|(n, _)| n == name) {
            return Err(Error::contract(format!("model `{name}` listed twice")));
        }
    }
    let mut ranked = reports.to_vec();
    ranked.sort_by(|(na, a), (nb, b)| {
        a.dic
            .total_cmp(&b.dic)
            .then(a.pd.total_cmp(&b.pd))
            .then_with(|| na.cmp(nb))
    });
    Ok(ranked)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub week: String,
    pub category: String,
    /// Level label for factor blocks, empty for the intercept.
    pub level: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalTable {
    pub rows: Vec<IntervalRow>,
    pub note: Option<String>,
}

/// Credible intervals of one block over weeks and categories. `category`
/// restricts to one category and `weeks` to a subset of week labels; `None`
/// means all.
pub fn interval_table(
    summaries: &[ParamSummary],
    layout: &ParameterLayout,
    block: &str,
    category: Option<&str>,
    weeks: Option<&[String]>,
) -> Result<IntervalTable> {
    if summaries.len() != layout.total_dim() {
        return Err(Error::contract("summaries do not match the parameter layout"));
    }
    let term = layout
        .block(block)
        .ok_or_else(|| Error::Schema(format!("unknown block `{block}`")))?;
    let cats = layout.categories();
    let positions: Vec<usize> = match category {
        Some(label) => {
            let j = cats
                .index(label)
                .ok_or_else(|| Error::Schema(format!("unknown category `{label}`")))?;
            match layout.category_position(j) {
                Some(p) => vec![p],
                None => {
                    return Ok(IntervalTable {
                        rows: Vec::new(),
                        note: Some(format!(
                            "`{label}` is the reference category; its coefficients are fixed at 0"
                        )),
                    })
                }
            }
        }
        None => (0..layout.free_categories().len()).collect(),
    };
    let levels: Vec<String> = if term.factors.is_empty() {
        vec![String::new()]
    } else {
        term.level_labels.clone()
    };
    let mut rows = Vec::new();
    for &p in &positions {
        let cat_label = &cats.labels[layout.free_categories()[p]];
        for (w, week) in layout.weeks().iter().enumerate() {
            if weeks.is_some_and(|ws| !ws.contains(week)) {
                continue;
            }
            let slot = layout.slot_of_week(w);
            if !layout.week_stratified() && w > 0 {
                break;
            }
            for (c, level) in levels.iter().enumerate() {
                let s = &summaries[layout.group_start(p, slot) + term.offset + c];
                rows.push(IntervalRow {
                    week: if layout.week_stratified() {
                        week.clone()
                    } else {
                        "all".into()
                    },
                    category: cat_label.clone(),
                    level: level.clone(),
                    mean: s.mean,
                    ci_low: s.ci_low,
                    ci_high: s.ci_high,
                    significant: s.significant,
                });
            }
        }
    }
    Ok(IntervalTable { rows, note: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_of_one_to_hundred() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile(&x, 0.025) - 3.475).abs() < 1e-12);
        assert!((quantile(&x, 0.975) - 97.525).abs() < 1e-12);
        assert_eq!(quantile(&x, 0.5), 50.5);
        assert_eq!(quantile(&x, 0.0), 1.0);
        assert_eq!(quantile(&x, 1.0), 100.0);
        assert_eq!(quantile(&[4.0], 0.3), 4.0);
    }

    #[test]
    fn constant_sample_summary() {
        let s = ParamSummary::from_sample("c", &[2.5; 10]).unwrap();
        assert_eq!((s.mean, s.median, s.ci_low, s.ci_high, s.sd), (2.5, 2.5, 2.5, 2.5, 0.0));
        assert!(s.significant);
        assert!(ParamSummary::from_sample("c", &[1.0]).is_err());
    }

    #[test]
    fn symmetric_sample_is_not_significant() {
        let x: Vec<f64> = (-100..=100).map(|i| f64::from(i) / 100.0).collect();
        let s = ParamSummary::from_sample("x", &x).unwrap();
        assert!(!s.significant);
        assert!(s.ci_low <= s.median && s.median <= s.ci_high);
    }

    #[test]
    fn dic_from_hand_deviances() {
        let r = DicReport::from_deviances(&[10.0, 14.0], 9.0, 0).unwrap();
        assert_eq!((r.dbar, r.pd, r.dic), (12.0, 3.0, 15.0));
        assert_eq!(r.dic, r.dbar + r.pd);
        let r = DicReport::from_deviances(&[7.0; 4], 7.0, 0).unwrap();
        assert_eq!((r.pd, r.dic), (0.0, 7.0));
        assert!(DicReport::from_deviances(&[], 1.0, 0).is_err());
    }

    fn report(dic: f64, pd: f64, fingerprint: u64) -> DicReport {
        DicReport {
            dbar: dic - pd,
            dhat: dic - 2.0 * pd,
            pd,
            dic,
            fingerprint,
        }
    }

    #[test]
    fn compare_ranks_and_breaks_ties() {
        let ranked = compare(&[
            ("Model 1".into(), report(10158.1, 5.0, 1)),
            ("Model 2".into(), report(10154.5, 5.0, 1)),
        ])
        .unwrap();
        assert_eq!(ranked[0].0, "Model 2");

        let ranked = compare(&[
            ("b".into(), report(20.0, 5.0, 1)),
            ("a".into(), report(20.0, 3.0, 1)),
            ("c".into(), report(20.0, 3.0, 1)),
        ])
        .unwrap();
        let order: Vec<&str> = ranked.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(order, ["a", "c", "b"]);
    }

    #[test]
    fn compare_rejections() {
        assert!(compare(&[("a".into(), report(1.0, 1.0, 1))]).is_err());
        assert!(compare(&[("a".into(), report(1.0, 1.0, 1)), ("b".into(), report(1.0, 1.0, 2))]).is_err());
        assert!(compare(&[("a".into(), report(1.0, 1.0, 1)), ("a".into(), report(2.0, 1.0, 1))]).is_err());
    }
}
