//! Synthetic data from known parameters, grid-integration posterior oracles
//! for tiny models, and parameter-recovery trials.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CategorySet, FactorDef, ObservationTable, Row};
use crate::design::{ModelSpec, ParameterLayout, PriorConfig};
use crate::error::{Error, Result};
use crate::inference::summarize;
use crate::likelihood::{log_posterior, probabilities};
use crate::sampler::{run, SamplerConfig};

/// A factor of the simulated design. The reference level defaults to the
/// first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimFactor {
    pub name: String,
    pub levels: Vec<String>,
    #[serde(default)]
    pub reference: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub factors: Vec<SimFactor>,
    pub categories: Vec<String>,
    #[serde(default)]
    pub reference_category: usize,
    /// Number of subjects. Subjects cycle through the level combinations in
    /// order, the last factor varying fastest.
    pub subjects: usize,
    pub weeks: usize,
    /// Multinomial trials per (subject, week).
    pub trials: u64,
}

/// A design, a generating model, its true fixed effects, and a seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub design: SimDesign,
    pub model: ModelSpec,
    /// Fixed-effect coefficients in layout order.
    pub fixed_effects: Vec<f64>,
    /// Variance of the subject intercepts, drawn once per subject. Defaults
    /// to the generating model's `raneff_scale`.
    #[serde(default)]
    pub raneff_variance: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SimDesign {
    /// The design as a table without observations.
    pub fn skeleton(&self) -> Result<ObservationTable> {
        if self.subjects == 0 || self.weeks == 0 || self.trials == 0 {
            return Err(Error::Schema(
                "simulation needs at least one subject, week and trial".into(),
            ));
        }
        let factors = self
            .factors
            .iter()
            .map(|f| FactorDef::new(&f.name, f.levels.clone(), f.reference))
            .collect::<Result<Vec<_>>>()?;
        let categories = CategorySet::new(self.categories.clone(), self.reference_category)?;
        let width = (self.subjects.max(1) as f64).log10().floor() as usize + 1;
        let subjects = (1..=self.subjects).map(|i| format!("s{i:0width$}")).collect();
        let levels = (0..self.subjects)
            .map(|i| {
                let mut rest = i;
                let mut out = vec![0; factors.len()];
                for (k, f) in factors.iter().enumerate().rev() {
                    out[k] = rest % f.n_levels();
                    rest /= f.n_levels();
                }
                out
            })
            .collect();
        let weeks = (1..=self.weeks).map(|t| t.to_string()).collect();
        ObservationTable::new(subjects, levels, weeks, factors, categories, Vec::new())
    }
}

impl SimulationSpec {
    /// Parses a spec, applying the same model normalization as
    /// [`ModelSpec::from_json`].
    pub fn from_json<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut spec: Self = serde_json::from_reader(reader)?;
        spec.model.normalize()?;
        Ok(spec)
    }

    pub fn raneff_variance(&self) -> f64 {
        self.raneff_variance
            .unwrap_or(self.model.priors.raneff_scale)
    }

    pub fn layout(&self) -> Result<ParameterLayout> {
        ParameterLayout::build(&self.model, &self.design.skeleton()?)
    }

    fn validate(&self, layout: &ParameterLayout) -> Result<()> {
        if self.fixed_effects.len() != layout.fixed_dim() {
            return Err(Error::Schema(format!(
                "truth has {} fixed effects, model `{}` needs {}",
                self.fixed_effects.len(),
                self.model.name,
                layout.fixed_dim()
            )));
        }
        if self.fixed_effects.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema("truth contains a non-finite value".into()));
        }
        let v = self.raneff_variance();
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Schema("raneff_variance must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// A generated table together with the full parameter vector behind it.
#[derive(Clone, Debug)]
pub struct Simulated {
    pub table: ObservationTable,
    pub layout: ParameterLayout,
    /// Fixed effects, drawn random intercepts and (if sampled) the log sd.
    pub truth: Vec<f64>,
}

impl Simulated {
    /// Parameter name to true value.
    pub fn truth_map(&self) -> BTreeMap<String, f64> {
        self.layout
            .names()
            .iter()
            .cloned()
            .zip(self.truth.iter().copied())
            .collect()
    }
}

/// Multinomial draw by sequential conditional binomials.
fn multinomial<R: Rng + ?Sized>(n: u64, p: &[f64], rng: &mut R) -> Vec<u64> {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = vec![0; p.len()];
    for (j, &pj) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if j + 1 == p.len() {
            out[j] = left;
            break;
        }
        let q = (pj / mass).clamp(0.0, 1.0);
        let y = Binomial::new(left, q).expect("probability in [0, 1]").sample(rng);
        out[j] = y;
        left -= y;
        mass -= pj;
        if mass <= 0.0 {
            break;
        }
    }
    out
}

/// Draws subject intercepts, then counts for every (subject, week).
pub fn generate(spec: &SimulationSpec) -> Result<Simulated> {
    let skeleton = spec.design.skeleton()?;
    let layout = ParameterLayout::build(&spec.model, &skeleton)?;
    spec.validate(&layout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut truth = vec![0.0; layout.total_dim()];
    truth[..layout.fixed_dim()].copy_from_slice(&spec.fixed_effects);
    let sd = spec.raneff_variance().sqrt();
    for k in layout.raneff_range() {
        let z: f64 = rng.sample(StandardNormal);
        truth[k] = sd * z;
    }
    if let Some(k) = layout.variance_index() {
        truth[k] = sd.max(1e-12).ln();
    }
    let j = skeleton.n_categories();
    let mut rows = Vec::with_capacity(spec.design.subjects * spec.design.weeks);
    let mut eta = vec![0.0; j];
    for subject in 0..spec.design.subjects {
        for week in 0..spec.design.weeks {
            layout.fill_eta(&truth, subject, week, &mut eta);
            let p = probabilities(&eta)?;
            rows.push(Row {
                subject,
                week,
                counts: multinomial(spec.design.trials, &p, &mut rng),
            });
        }
    }
    let table = ObservationTable::new(
        skeleton.subjects().to_vec(),
        (0..spec.design.subjects)
            .map(|i| skeleton.subject_levels(i).to_vec())
            .collect(),
        skeleton.weeks().to_vec(),
        skeleton.factors().to_vec(),
        skeleton.categories().clone(),
        rows,
    )?;
    Ok(Simulated {
        table,
        layout,
        truth,
    })
}

/// Bounds and resolution of an integration grid, one axis per parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: Vec<(f64, f64)>,
    /// Points per axis, including both ends.
    pub points: usize,
}

impl GridSpec {
    /// `prior mean ± 8 prior sd` on every axis.
    pub fn prior_cover(layout: &ParameterLayout, priors: &PriorConfig, points: usize) -> Self {
        let half = 8.0;
        let bounds = (0..layout.total_dim())
            .map(|k| {
                if k < layout.fixed_dim() {
                    let s = half * priors.coef_scale.sqrt();
                    (priors.coef_mean - s, priors.coef_mean + s)
                } else if Some(k) == layout.variance_index() {
                    (-12.0, (half * priors.raneff_hyper_sd).ln())
                } else {
                    let s = half * priors.raneff_scale.sqrt();
                    (-s, s)
                }
            })
            .collect();
        Self { bounds, points }
    }

    fn axis(&self, d: usize) -> Vec<f64> {
        let (lo, hi) = self.bounds[d];
        let step = (hi - lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| lo + step * i as f64).collect()
    }
}

/// Posterior moments by trapezoidal integration over a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPosterior {
    pub axes: Vec<Vec<f64>>,
    /// Density normalized to integrate to 1, row-major over the axes (the
    /// last axis varies fastest).
    pub density: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Exact (to grid resolution) posterior moments of a model with at most
/// two parameters.
pub fn grid_posterior(
    layout: &ParameterLayout,
    table: &ObservationTable,
    priors: &PriorConfig,
    grid: &GridSpec,
) -> Result<GridPosterior> {
    let dim = layout.total_dim();
    if dim == 0 || dim > 2 {
        return Err(Error::contract(format!(
            "grid integration handles 1 or 2 parameters, model has {dim}"
        )));
    }
    if grid.bounds.len() != dim || grid.points < 3 {
        return Err(Error::contract("grid needs one axis per parameter and at least 3 points"));
    }
    if grid.bounds.iter().any(|&(lo, hi)| !(lo < hi)) {
        return Err(Error::contract("grid bounds must be increasing"));
    }
    let axes: Vec<Vec<f64>> = (0..dim).map(|d| grid.axis(d)).collect();
    let steps: Vec<f64> = axes.iter().map(|a| a[1] - a[0]).collect();
    let m = grid.points;
    let n_cells = m.pow(dim as u32);
    let point = |idx: usize| -> (Vec<f64>, f64, bool) {
        let mut theta = vec![0.0; dim];
        let mut weight = 1.0;
        let mut edge = false;
        let mut rest = idx;
        for d in (0..dim).rev() {
            let i = rest % m;
            rest /= m;
            theta[d] = axes[d][i];
            let end = i == 0 || i == m - 1;
            weight *= steps[d] * if end { 0.5 } else { 1.0 };
            edge |= end;
        }
        (theta, weight, edge)
    };
    let mut log_density = Vec::with_capacity(n_cells);
    for idx in 0..n_cells {
        log_density.push(log_posterior(layout, &point(idx).0, table, priors)?);
    }
    let max = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::contract("log-posterior is not finite anywhere on the grid"));
    }
    let density: Vec<f64> = log_density.iter().map(|l| (l - max).exp()).collect();
    let mut mass = 0.0;
    let mut edge_mass = 0.0;
    let mut first = vec![0.0; dim];
    for (idx, &p) in density.iter().enumerate() {
        let (theta, w, edge) = point(idx);
        mass += w * p;
        if edge {
            edge_mass += w * p;
        }
        for d in 0..dim {
            first[d] += w * p * theta[d];
        }
    }
    if edge_mass > 1e-6 * mass {
        return Err(Error::GridTooSmall(format!(
            "{:.3e} of the mass lies on the grid boundary",
            edge_mass / mass
        )));
    }
    let means: Vec<f64> = first.iter().map(|f| f / mass).collect();
    let mut second = vec![0.0; dim];
    for (idx, &p) in density.iter().enumerate() {
        let (theta, w, _) = point(idx);
        for d in 0..dim {
            second[d] += w * p * (theta[d] - means[d]).powi(2);
        }
    }
    Ok(GridPosterior {
        axes,
        density: density.iter().map(|p| p / mass).collect(),
        means,
        variances: second.iter().map(|s| s / mass).collect(),
    })
}

/// A model with at most two parameters, small enough for [`grid_posterior`].
#[derive(Clone, Debug)]
pub struct OracleProblem {
    pub name: &'static str,
    pub table: ObservationTable,
    pub model: ModelSpec,
}

impl OracleProblem {
    pub fn layout(&self) -> ParameterLayout {
        ParameterLayout::build(&self.model, &self.table).expect("problem is well formed")
    }
}

fn oracle_table(
    subjects: &[(&str, usize)],
    factors: Vec<FactorDef>,
    categories: usize,
    weeks: usize,
    rows: Vec<Row>,
) -> ObservationTable {
    let labels = (1..=categories).map(|j| format!("c{j}")).collect();
    ObservationTable::new(
        subjects.iter().map(|(s, _)| s.to_string()).collect(),
        subjects
            .iter()
            .map(|&(_, l)| if factors.is_empty() { vec![] } else { vec![l] })
            .collect(),
        (1..=weeks).map(|t| t.to_string()).collect(),
        factors,
        CategorySet::new(labels, 0).expect("at least two categories"),
        rows,
    )
    .expect("problem is well formed")
}

fn fixed_model(terms: Vec<crate::design::Term>, week_stratified: bool) -> ModelSpec {
    let mut m = ModelSpec::new("oracle", terms).expect("valid terms");
    m.random_effect = crate::design::RandomEffect::None;
    m.week_stratified = week_stratified;
    m
}

/// The standard sampler-versus-grid test problems: prior only, a binomial
/// logit intercept with 7 successes in 10, three-category intercepts, a
/// single subject's random intercept alongside the intercept, and a
/// two-level factor effect.
pub fn oracle_problems() -> Vec<OracleProblem> {
    let row = |subject, week, counts: Vec<u64>| Row {
        subject,
        week,
        counts,
    };
    let sex = || vec![FactorDef::new("sex", vec!["M".into(), "F".into()], 0).expect("valid")];
    let mut random = ModelSpec::new("oracle", vec![]).expect("valid terms");
    random.random_effect = crate::design::RandomEffect::Shared;
    vec![
        OracleProblem {
            name: "prior only",
            table: oracle_table(&[("s", 0)], vec![], 2, 1, vec![]),
            model: fixed_model(vec![], true),
        },
        OracleProblem {
            name: "binomial logit 7/3",
            table: oracle_table(&[("s", 0)], vec![], 2, 1, vec![row(0, 0, vec![3, 7])]),
            model: fixed_model(vec![], true),
        },
        OracleProblem {
            name: "three-category intercepts",
            table: oracle_table(&[("s", 0)], vec![], 3, 1, vec![row(0, 0, vec![5, 3, 2])]),
            model: fixed_model(vec![], true),
        },
        OracleProblem {
            name: "random intercept as offset",
            table: oracle_table(&[("s", 0)], vec![], 2, 1, vec![row(0, 0, vec![8, 12])]),
            model: random,
        },
        OracleProblem {
            name: "two-level factor",
            table: oracle_table(
                &[("m", 0), ("f", 1)],
                sex(),
                2,
                1,
                vec![row(0, 0, vec![3, 7]), row(1, 0, vec![8, 2])],
            ),
            model: fixed_model(vec![crate::design::Term::Main("sex".into())], false),
        },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub name: String,
    pub truth: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub covered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub seed: u64,
    pub entries: Vec<CoverageEntry>,
    /// Fraction of fixed effects whose 95% interval covers the truth.
    pub coverage: f64,
}

/// Generates data from `spec`, fits `model`, and checks 95% interval
/// coverage of every fitted fixed effect. Coefficients absent from the
/// generating model have true value 0.
pub fn recovery_trial(
    spec: &SimulationSpec,
    model: &ModelSpec,
    config: &SamplerConfig,
) -> Result<RecoveryReport> {
    let sim = generate(spec)?;
    let truth = sim.truth_map();
    let layout = ParameterLayout::build(model, &sim.table)?;
    let draws = run(&layout, &sim.table, &model.priors, config)?;
    let summaries = summarize(&draws)?;
    let entries: Vec<CoverageEntry> = summaries[..layout.fixed_dim()]
        .iter()
        .map(|s| {
            let t = truth.get(&s.name).copied().unwrap_or(0.0);
            CoverageEntry {
                name: s.name.clone(),
                truth: t,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                covered: s.ci_low <= t && t <= s.ci_high,
            }
        })
        .collect();
    let coverage = entries.iter().filter(|e| e.covered).count() as f64 / entries.len() as f64;
    Ok(RecoveryReport {
        seed: spec.seed,
        entries,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::RandomEffect;

    fn design(categories: usize, subjects: usize, weeks: usize, trials: u64) -> SimDesign {
        SimDesign {
            factors: vec![],
            categories: (1..=categories).map(|j| format!("c{j}")).collect(),
            reference_category: 0,
            subjects,
            weeks,
            trials,
        }
    }

    fn intercept_model() -> ModelSpec {
        let mut m = ModelSpec::new("m", vec![]).unwrap();
        m.random_effect = RandomEffect::None;
        m
    }

    fn binomial_table(successes: u64, failures: u64) -> ObservationTable {
        let cats = CategorySet::new(vec!["fail".into(), "success".into()], 0).unwrap();
        ObservationTable::new(
            vec!["s".into()],
            vec![vec![]],
            vec!["1".into()],
            vec![],
            cats,
            vec![Row {
                subject: 0,
                week: 0,
                counts: vec![failures, successes],
            }],
        )
        .unwrap()
    }

    #[test]
    fn zero_truth_gives_uniform_proportions() {
        let spec = SimulationSpec {
            design: design(3, 1, 1, 3000),
            model: intercept_model(),
            fixed_effects: vec![0.0, 0.0],
            raneff_variance: None,
            seed: 4,
        };
        let sim = generate(&spec).unwrap();
        for &c in &sim.table.rows()[0].counts {
            assert!((c as f64 / 3000.0 - 1.0 / 3.0).abs() < 0.03);
        }
    }

    #[test]
    fn log_two_gives_two_thirds() {
        let spec = SimulationSpec {
            design: design(2, 1, 1, 9000),
            model: intercept_model(),
            fixed_effects: vec![2f64.ln()],
            raneff_variance: None,
            seed: 8,
        };
        let sim = generate(&spec).unwrap();
        let share = sim.table.rows()[0].counts[1] as f64 / 9000.0;
        assert!((share - 2.0 / 3.0).abs() < 0.02, "{share}");
    }

    #[test]
    fn margins_and_determinism() {
        let mut spec = SimulationSpec {
            design: SimDesign {
                factors: vec![SimFactor {
                    name: "sex".into(),
                    levels: vec!["M".into(), "F".into()],
                    reference: 0,
                }],
                ..design(4, 6, 3, 10)
            },
            model: ModelSpec::new("m", vec![crate::Term::Main("sex".into())]).unwrap(),
            fixed_effects: vec![],
            raneff_variance: Some(0.5),
            seed: 1,
        };
        spec.fixed_effects = (0..spec.layout().unwrap().fixed_dim())
            .map(|k| (k as f64 * 0.37).sin())
            .collect();
        let a = generate(&spec).unwrap();
        assert!(a.table.rows().iter().all(|r| r.total() == 10));
        assert_eq!(a.table.rows().len(), 18);
        let b = generate(&spec).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.table.subject_levels(1), &[1]);

        spec.fixed_effects.pop();
        assert!(matches!(generate(&spec), Err(Error::Schema(_))));
    }

    #[test]
    fn multinomial_handles_zero_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(multinomial(5, &[0.0, 1.0, 0.0], &mut rng), vec![0, 5, 0]);
        assert_eq!(multinomial(5, &[0.0, 0.0, 1.0], &mut rng), vec![0, 0, 5]);
    }

    #[test]
    fn grid_of_prior_only_problem() {
        let cats = CategorySet::new(vec!["a".into(), "b".into()], 0).unwrap();
        let table = ObservationTable::new(
            vec!["s".into()],
            vec![vec![]],
            vec!["1".into()],
            vec![],
            cats,
            vec![],
        )
        .unwrap();
        let layout = ParameterLayout::build(&intercept_model(), &table).unwrap();
        let priors = PriorConfig::default();
        let g = grid_posterior(&layout, &table, &priors, &GridSpec::prior_cover(&layout, &priors, 2001))
            .unwrap();
        assert!(g.means[0].abs() < 1e-3);
        assert!((g.variances[0] - 100.0).abs() < 0.1);
    }

    #[test]
    fn grid_of_binomial_logit() {
        let table = binomial_table(7, 3);
        let layout = ParameterLayout::build(&intercept_model(), &table).unwrap();
        let priors = PriorConfig::default();
        let grid = GridSpec::prior_cover(&layout, &priors, 4001);
        let g = grid_posterior(&layout, &table, &priors, &grid).unwrap();
        let mode = g.axes[0][g
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0];
        // The N(0, 100) prior pulls the mode a hair below logit(0.7).
        assert!((mode - 0.8473).abs() < 0.03, "{mode}");

        let fine = grid_posterior(&layout, &table, &priors, &GridSpec { points: 8001, ..grid }).unwrap();
        assert!((fine.means[0] - g.means[0]).abs() < 1e-4);

        let flipped = binomial_table(3, 7);
        let f = grid_posterior(&layout, &flipped, &priors, &GridSpec::prior_cover(&layout, &priors, 4001))
            .unwrap();
        assert!((f.means[0] + g.means[0]).abs() < 1e-6);
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let table = binomial_table(7, 3);
        let layout = ParameterLayout::build(&intercept_model(), &table).unwrap();
        let grid = GridSpec {
            bounds: vec![(0.0, 1.0)],
            points: 101,
        };
        let err = grid_posterior(&layout, &table, &PriorConfig::default(), &grid).unwrap_err();
        assert!(matches!(err, Error::GridTooSmall(_)));
    }
}
