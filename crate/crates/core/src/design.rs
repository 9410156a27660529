//! Model specification and the flat parameter layout.
//!
//! Every non-reference category `j` and (when week-stratified) every week
//! `t` owns a *group* of fixed-effect coefficients: the intercept followed
//! by the dummy columns of each term. Groups are stored contiguously,
//! category-major then week, so a group is also the unit the sampler
//! updates jointly. Random intercepts follow the fixed effects, then the
//! optional log standard deviation of the random intercepts.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{CategorySet, ObservationTable, Row};
use crate::error::{Error, Result};

/// One additive term of the linear predictor.
///
/// Serialized as a string: `intercept`, `<factor>` or `<factor>:<factor>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Term {
    Intercept,
    Main(String),
    Interaction(String, String),
}

impl Term {
    pub fn factors(&self) -> Vec<&str> {
        match self {
            Term::Intercept => vec![],
            Term::Main(f) => vec![f],
            Term::Interaction(a, b) => vec![a, b],
        }
    }

    fn same_as(&self, other: &Term) -> bool {
        match (self, other) {
            (Term::Interaction(a, b), Term::Interaction(c, d)) => {
                (a == c && b == d) || (a == d && b == c)
            }
            _ => self == other,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => f.write_str("intercept"),
            Term::Main(a) => f.write_str(a),
            Term::Interaction(a, b) => write!(f, "{a}:{b}"),
        }
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Schema("empty term".into()));
        }
        if s == "intercept" || s == "1" {
            return Ok(Term::Intercept);
        }
        match s.split(':').map(str::trim).collect::<Vec<_>>().as_slice() {
            [a] => Ok(Term::Main(a.to_string())),
            [a, b] if !a.is_empty() && !b.is_empty() => {
                Ok(Term::Interaction(a.to_string(), b.to_string()))
            }
            _ => Err(Error::Schema(format!("cannot parse term `{s}`"))),
        }
    }
}

impl TryFrom<String> for Term {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomEffect {
    None,
    /// One intercept per subject, shared by every non-reference category.
    #[default]
    Shared,
    /// One intercept per subject and non-reference category.
    PerCategory,
}

/// How a reported prior scale of `0.01` was turned into a variance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleInterpretation {
    /// `N(mean, precision)`, the BUGS/JAGS convention: variance = 1 / value.
    #[default]
    Precision,
    /// Literal variance.
    Variance,
}

/// Normal priors on every coefficient and random intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub coef_mean: f64,
    /// Prior variance of each fixed-effect coefficient (logit scale).
    pub coef_scale: f64,
    /// Prior variance of each random intercept.
    pub raneff_scale: f64,
    /// Half-normal scale on the random-intercept sd, used only when that
    /// sd is sampled.
    pub raneff_hyper_sd: f64,
    pub scale_interpretation: ScaleInterpretation,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self::from_reported(0.01, ScaleInterpretation::Precision)
    }
}

impl PriorConfig {
    /// Priors with mean 0 whose reported scale is read per `interpretation`.
    pub fn from_reported(value: f64, interpretation: ScaleInterpretation) -> Self {
        let variance = match interpretation {
            ScaleInterpretation::Precision => 1.0 / value,
            ScaleInterpretation::Variance => value,
        };
        Self {
            coef_mean: 0.0,
            coef_scale: variance,
            raneff_scale: variance,
            raneff_hyper_sd: 1.0,
            scale_interpretation: interpretation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !self.coef_mean.is_finite() {
            return Err(Error::Schema("coef_mean must be finite".into()));
        }
        if !ok(self.coef_scale) || !ok(self.raneff_scale) || !ok(self.raneff_hyper_sd) {
            return Err(Error::Schema("prior scales must be positive and finite".into()));
        }
        Ok(())
    }
}

fn default_true() -> bool {
    true
}

/// A linear predictor plus priors, loadable from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub terms: Vec<Term>,
    #[serde(default = "default_true")]
    pub week_stratified: bool,
    #[serde(default)]
    pub random_effect: RandomEffect,
    /// Sample the random-intercept sd under a half-normal hyperprior instead
    /// of fixing the variance at `priors.raneff_scale`.
    #[serde(default)]
    pub hierarchical_variance: bool,
    #[serde(default)]
    pub priors: PriorConfig,
}

impl ModelSpec {
    /// Week-stratified model with a shared random intercept and default
    /// priors. The intercept is prepended if `terms` lacks it.
    pub fn new(name: impl Into<String>, terms: Vec<Term>) -> Result<Self> {
        let mut spec = Self {
            name: name.into(),
            description: String::new(),
            terms,
            week_stratified: true,
            random_effect: RandomEffect::Shared,
            hierarchical_variance: false,
            priors: PriorConfig::default(),
        };
        spec.normalize()?;
        Ok(spec)
    }

    pub fn from_json<R: Read>(reader: R) -> Result<Self> {
        let mut spec: Self = serde_json::from_reader(reader)?;
        spec.normalize()?;
        Ok(spec)
    }

    /// Block, sex and enrichment main effects plus the random intercept.
    pub fn model1() -> Self {
        let mut spec = Self::new(
            "model1",
            vec![
                Term::Intercept,
                Term::Main("block".into()),
                Term::Main("sex".into()),
                Term::Main("enrichment".into()),
            ],
        )
        .expect("preset is valid");
        spec.description = "Sex + Enrichment + Random effect".into();
        spec
    }

    /// `model1` plus the sex × enrichment interaction.
    pub fn model2() -> Self {
        let mut spec = Self::model1();
        spec.name = "model2".into();
        spec.terms
            .push(Term::Interaction("sex".into(), "enrichment".into()));
        spec.description = "Sex \u{00d7} Enrichment + Random effect".into();
        spec
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "model1" => Some(Self::model1()),
            "model2" => Some(Self::model2()),
            _ => None,
        }
    }

    pub(crate) fn normalize(&mut self) -> Result<()> {
        if !self.terms.contains(&Term::Intercept) {
            self.terms.insert(0, Term::Intercept);
        }
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].iter().any(|u| u.same_as(t)) {
                return Err(Error::Schema(format!("duplicate term `{t}`")));
            }
            if let Term::Interaction(a, b) = t {
                if a == b {
                    return Err(Error::Schema(format!("term `{t}` crosses a factor with itself")));
                }
            }
        }
        // Intercept first keeps it at offset 0 of every group.
        let pos = self.terms.iter().position(|t| *t == Term::Intercept).unwrap();
        let intercept = self.terms.remove(pos);
        self.terms.insert(0, intercept);
        if self.description.is_empty() {
            self.description = self.default_description();
        }
        self.priors.validate()
    }

    fn default_description(&self) -> String {
        let mut parts: Vec<String> = self
            .terms
            .iter()
            .filter(|t| **t != Term::Intercept)
            .map(Term::to_string)
            .collect();
        if self.random_effect != RandomEffect::None {
            parts.push("random effect".into());
        }
        if parts.is_empty() {
            "intercept only".into()
        } else {
            parts.join(" + ")
        }
    }
}

/// Column layout of one term inside each coefficient group.
#[derive(Clone, Debug, PartialEq)]
pub struct TermLayout {
    pub name: String,
    /// Indices into the table's factors (empty for the intercept).
    pub factors: Vec<usize>,
    /// One label per column, e.g. `F` or `F:rope`; empty for the intercept.
    pub level_labels: Vec<String>,
    /// Position of the term's first column inside a group.
    pub offset: usize,
}

impl TermLayout {
    pub fn width(&self) -> usize {
        if self.factors.is_empty() {
            1
        } else {
            self.level_labels.len()
        }
    }
}

/// Where every coefficient lives in the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterLayout {
    terms: Vec<TermLayout>,
    categories: CategorySet,
    free_categories: Vec<usize>,
    weeks: Vec<String>,
    week_stratified: bool,
    group_width: usize,
    fixed_dim: usize,
    random_effect: RandomEffect,
    subjects: Vec<String>,
    raneff_count: usize,
    variance_index: Option<usize>,
    subject_active: Vec<Vec<usize>>,
    names: Vec<String>,
}

impl ParameterLayout {
    /// Lays out `spec` against the factors, weeks and subjects of `table`.
    pub fn build(spec: &ModelSpec, table: &ObservationTable) -> Result<Self> {
        let factors = table.factors();
        let mut terms = Vec::with_capacity(spec.terms.len());
        let mut offset = 0;
        for term in &spec.terms {
            let idx = term
                .factors()
                .iter()
                .map(|&name| {
                    table.factor_index(name).ok_or_else(|| {
                        Error::Schema(format!("model term `{term}` uses unknown factor `{name}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            // Row-major over the free levels of each factor in turn.
            let mut labels: Vec<String> = vec![String::new()];
            for &k in &idx {
                let f = &factors[k];
                labels = labels
                    .iter()
                    .flat_map(|prefix| {
                        f.free_levels().map(move |l| {
                            if prefix.is_empty() {
                                f.levels[l].clone()
                            } else {
                                format!("{prefix}:{}", f.levels[l])
                            }
                        })
                    })
                    .collect();
            }
            if idx.is_empty() {
                labels.clear();
            }
            let layout = TermLayout {
                name: term.to_string(),
                factors: idx,
                level_labels: labels,
                offset,
            };
            // A term over a single-level factor has no columns.
            offset += layout.width();
            terms.push(layout);
        }
        let group_width = offset;

        let subject_active = (0..table.subjects().len())
            .map(|i| {
                let levels = table.subject_levels(i);
                terms
                    .iter()
                    .filter_map(|t| term_column(t, factors, levels).map(|c| t.offset + c))
                    .collect()
            })
            .collect();

        let categories = table.categories().clone();
        let free_categories: Vec<usize> = categories.free().collect();
        let weeks = table.weeks().to_vec();
        let n_slots = if spec.week_stratified { weeks.len() } else { 1 };
        let fixed_dim = free_categories.len() * n_slots * group_width;
        let subjects = table.subjects().to_vec();
        let per_subject = match spec.random_effect {
            RandomEffect::None => 0,
            RandomEffect::Shared => 1,
            RandomEffect::PerCategory => free_categories.len(),
        };
        let raneff_count = subjects.len() * per_subject;
        let variance_index = (spec.hierarchical_variance && per_subject > 0)
            .then_some(fixed_dim + raneff_count);

        let mut layout = Self {
            terms,
            categories,
            free_categories,
            weeks,
            week_stratified: spec.week_stratified,
            group_width,
            fixed_dim,
            random_effect: spec.random_effect,
            subjects,
            raneff_count,
            variance_index,
            subject_active,
            names: Vec::new(),
        };
        layout.names = layout.build_names();
        Ok(layout)
    }

    fn build_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.total_dim());
        for &j in &self.free_categories {
            for slot in 0..self.n_slots() {
                for term in &self.terms {
                    let mut key = vec![self.categories.labels[j].clone()];
                    if self.week_stratified {
                        key.push(self.weeks[slot].clone());
                    }
                    if term.factors.is_empty() {
                        names.push(format!("{}[{}]", term.name, key.join("|")));
                    } else {
                        for level in &term.level_labels {
                            names.push(format!("{}[{}|{level}]", term.name, key.join("|")));
                        }
                    }
                }
            }
        }
        for s in &self.subjects {
            match self.random_effect {
                RandomEffect::None => {}
                RandomEffect::Shared => names.push(format!("u[{s}]")),
                RandomEffect::PerCategory => {
                    for &j in &self.free_categories {
                        names.push(format!("u[{s}|{}]", self.categories.labels[j]));
                    }
                }
            }
        }
        if self.variance_index.is_some() {
            names.push("log_sd_u".into());
        }
        names
    }

    pub fn blocks(&self) -> &[TermLayout] {
        &self.terms
    }

    pub fn block(&self, name: &str) -> Option<&TermLayout> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn categories(&self) -> &CategorySet {
        &self.categories
    }

    /// Non-reference category indices; position `p` in this list is the
    /// category's coefficient slot.
    pub fn free_categories(&self) -> &[usize] {
        &self.free_categories
    }

    pub fn category_position(&self, j: usize) -> Option<usize> {
        self.free_categories.iter().position(|&c| c == j)
    }

    pub fn weeks(&self) -> &[String] {
        &self.weeks
    }

    pub fn week_stratified(&self) -> bool {
        self.week_stratified
    }

    /// Number of week slots: the week count when stratified, else 1.
    pub fn n_slots(&self) -> usize {
        if self.week_stratified {
            self.weeks.len()
        } else {
            1
        }
    }

    pub fn slot_of_week(&self, week: usize) -> usize {
        if self.week_stratified {
            week
        } else {
            0
        }
    }

    pub fn n_groups(&self) -> usize {
        self.free_categories.len() * self.n_slots()
    }

    pub fn group_width(&self) -> usize {
        self.group_width
    }

    /// Flat index of the first coefficient of category position `cat_pos`
    /// in week slot `slot`.
    pub fn group_start(&self, cat_pos: usize, slot: usize) -> usize {
        (cat_pos * self.n_slots() + slot) * self.group_width
    }

    pub fn fixed_dim(&self) -> usize {
        self.fixed_dim
    }

    pub fn random_effect(&self) -> RandomEffect {
        self.random_effect
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn raneff_count(&self) -> usize {
        self.raneff_count
    }

    /// Flat index of subject `i`'s random intercept for category position
    /// `cat_pos`, if the model has one.
    pub fn raneff_index(&self, subject: usize, cat_pos: usize) -> Option<usize> {
        match self.random_effect {
            RandomEffect::None => None,
            RandomEffect::Shared => Some(self.fixed_dim + subject),
            RandomEffect::PerCategory => {
                Some(self.fixed_dim + subject * self.free_categories.len() + cat_pos)
            }
        }
    }

    pub fn raneff_range(&self) -> std::ops::Range<usize> {
        self.fixed_dim..self.fixed_dim + self.raneff_count
    }

    /// Index of the sampled log sd of the random intercepts.
    pub fn variance_index(&self) -> Option<usize> {
        self.variance_index
    }

    pub fn total_dim(&self) -> usize {
        self.fixed_dim + self.raneff_count + usize::from(self.variance_index.is_some())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Column offsets (within a group) that are 1 for subject `i`.
    pub fn active_columns(&self, subject: usize) -> &[usize] {
        &self.subject_active[subject]
    }

    /// Flat index of a fixed-effect coefficient addressed by labels. `level`
    /// is ignored for the intercept; `week` is ignored when the layout is not
    /// week-stratified.
    pub fn index_of(&self, block: &str, category: &str, week: &str, level: &str) -> Result<usize> {
        let term = self
            .block(block)
            .ok_or_else(|| Error::Schema(format!("unknown block `{block}`")))?;
        let j = self
            .categories
            .index(category)
            .ok_or_else(|| Error::Schema(format!("unknown category `{category}`")))?;
        let cat_pos = self.category_position(j).ok_or_else(|| {
            Error::Schema(format!("reference category `{category}` has no coefficients"))
        })?;
        let slot = if self.week_stratified {
            self.weeks
                .iter()
                .position(|w| w == week)
                .ok_or_else(|| Error::Schema(format!("unknown week `{week}`")))?
        } else {
            0
        };
        let column = if term.factors.is_empty() {
            0
        } else {
            term.level_labels
                .iter()
                .position(|l| l == level)
                .ok_or_else(|| {
                    Error::Schema(format!("block `{block}` has no coefficient for level `{level}`"))
                })?
        };
        Ok(self.group_start(cat_pos, slot) + term.offset + column)
    }

    /// Writes η for a row into `eta` (length J) without checks.
    pub(crate) fn fill_eta(&self, theta: &[f64], subject: usize, week: usize, eta: &mut [f64]) {
        let slot = self.slot_of_week(week);
        let active = &self.subject_active[subject];
        eta[self.categories.reference] = 0.0;
        for (p, &j) in self.free_categories.iter().enumerate() {
            eta[j] = self.eta_entry(theta, active, subject, p, slot);
        }
    }

    #[inline]
    pub(crate) fn eta_entry(
        &self,
        theta: &[f64],
        active: &[usize],
        subject: usize,
        cat_pos: usize,
        slot: usize,
    ) -> f64 {
        let start = self.group_start(cat_pos, slot);
        let mut sum = 0.0;
        for &c in active {
            sum += theta[start + c];
        }
        if let Some(u) = self.raneff_index(subject, cat_pos) {
            sum += theta[u];
        }
        sum
    }

    fn check_row(&self, theta: &[f64], row: &Row) -> Result<()> {
        if theta.len() != self.total_dim() {
            return Err(Error::contract(format!(
                "parameter vector has length {}, layout needs {}",
                theta.len(),
                self.total_dim()
            )));
        }
        if row.subject >= self.subjects.len()
            || row.week >= self.weeks.len()
            || row.counts.len() != self.categories.len()
        {
            return Err(Error::contract("row does not belong to this layout's table"));
        }
        Ok(())
    }
}

/// Column of `term` switched on by a subject's levels, if any.
fn term_column(
    term: &TermLayout,
    factors: &[crate::data::FactorDef],
    levels: &[usize],
) -> Option<usize> {
    let mut column = 0;
    for &k in &term.factors {
        let f = &factors[k];
        let l = levels[k];
        if l == f.reference {
            return None;
        }
        let rank = l - usize::from(l > f.reference);
        column = column * (f.n_levels() - 1) + rank;
    }
    Some(column)
}

/// Baseline-category linear predictor of one row: η at the reference
/// category is 0, and every other entry sums the row's active coefficients
/// for its week plus the subject's random intercept.
pub fn linear_predictor(layout: &ParameterLayout, theta: &[f64], row: &Row) -> Result<Vec<f64>> {
    layout.check_row(theta, row)?;
    let mut eta = vec![0.0; layout.categories.len()];
    layout.fill_eta(theta, row.subject, row.week, &mut eta);
    Ok(eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FactorDef, ObservationTable};

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    /// The 3 × 2 × 3 design with 7 categories and 12 weeks, one row per
    /// subject in week 1.
    fn pig_design() -> ObservationTable {
        let factors = vec![
            FactorDef::new("block", labels(&["light", "medium", "heavy"]), 0).unwrap(),
            FactorDef::new("sex", labels(&["M", "F"]), 0).unwrap(),
            FactorDef::new("enrichment", labels(&["chain", "rope", "none"]), 0).unwrap(),
        ];
        let cats = CategorySet::new(
            labels(&["Aggr", "Feed", "Calm", "Anim", "Env", "Obj", "Loco"]),
            0,
        )
        .unwrap();
        let mut subjects = Vec::new();
        let mut levels = Vec::new();
        let mut rows = Vec::new();
        for b in 0..3 {
            for s in 0..2 {
                for e in 0..3 {
                    rows.push(Row {
                        subject: subjects.len(),
                        week: 0,
                        counts: vec![1, 0, 0, 0, 0, 0, 0],
                    });
                    subjects.push(format!("pig{}", subjects.len()));
                    levels.push(vec![b, s, e]);
                }
            }
        }
        let weeks = (1..=12).map(|t| t.to_string()).collect();
        ObservationTable::new(subjects, levels, weeks, factors, cats, rows).unwrap()
    }

    #[test]
    fn model2_layout_counts_dummy_columns() {
        let table = pig_design();
        let layout = ParameterLayout::build(&ModelSpec::model2(), &table).unwrap();
        // intercept 1 + block 2 + sex 1 + enrichment 2 + sex:enrichment 1*2
        assert_eq!(layout.group_width(), 8);
        assert_eq!(layout.fixed_dim(), 6 * 12 * 8);
        assert_eq!(layout.fixed_dim(), 576);
        assert_eq!(layout.raneff_count(), 18);
        assert_eq!(layout.total_dim(), 576 + 18);
        assert_eq!(layout.names().len(), layout.total_dim());
    }

    #[test]
    fn model1_layout_counts_dummy_columns() {
        let table = pig_design();
        let layout = ParameterLayout::build(&ModelSpec::model1(), &table).unwrap();
        assert_eq!(layout.group_width(), 6);
        assert_eq!(layout.fixed_dim(), 432);
    }

    #[test]
    fn intercept_only_minimal_layout() {
        let cats = CategorySet::new(labels(&["a", "b"]), 0).unwrap();
        let table = ObservationTable::new(
            vec!["s".into()],
            vec![vec![]],
            vec!["1".into()],
            vec![],
            cats,
            vec![],
        )
        .unwrap();
        let mut spec = ModelSpec::new("m", vec![]).unwrap();
        spec.random_effect = RandomEffect::None;
        let layout = ParameterLayout::build(&spec, &table).unwrap();
        assert_eq!(layout.total_dim(), 1);
        assert_eq!(layout.names(), ["intercept[b|1]"]);
    }

    #[test]
    fn unknown_factor_is_a_schema_error() {
        let table = pig_design();
        let spec = ModelSpec::new("m", vec![Term::Main("weight".into())]).unwrap();
        assert!(matches!(
            ParameterLayout::build(&spec, &table),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn duplicate_and_self_interaction_terms_rejected() {
        let dup = ModelSpec::new(
            "m",
            vec![
                Term::Interaction("a".into(), "b".into()),
                Term::Interaction("b".into(), "a".into()),
            ],
        );
        assert!(dup.is_err());
        assert!(ModelSpec::new("m", vec![Term::Interaction("a".into(), "a".into())]).is_err());
    }

    #[test]
    fn terms_round_trip_through_json() {
        let json = r#"{"name":"m","terms":["sex","sex:enrichment","intercept"]}"#;
        let spec = ModelSpec::from_json(json.as_bytes()).unwrap();
        assert_eq!(spec.terms[0], Term::Intercept);
        assert_eq!(spec.terms[2], Term::Interaction("sex".into(), "enrichment".into()));
        assert_eq!(spec.priors.coef_scale, 100.0);
        let back = serde_json::to_string(&spec).unwrap();
        assert!(back.contains("\"sex:enrichment\""));
    }

    #[test]
    fn eta_reads_off_intercepts() {
        let cats = CategorySet::new(labels(&["a", "b", "c"]), 0).unwrap();
        let row = Row {
            subject: 0,
            week: 0,
            counts: vec![1, 0, 0],
        };
        let table = ObservationTable::new(
            vec!["s".into()],
            vec![vec![]],
            vec!["1".into()],
            vec![],
            cats,
            vec![row.clone()],
        )
        .unwrap();
        let layout = ParameterLayout::build(&ModelSpec::new("m", vec![]).unwrap(), &table).unwrap();
        let eta = linear_predictor(&layout, &[1.0, -1.0, 0.0], &row).unwrap();
        assert_eq!(eta, vec![0.0, 1.0, -1.0]);
        assert!(linear_predictor(&layout, &[1.0], &row).is_err());
    }

    #[test]
    fn reference_levels_activate_only_the_intercept() {
        let table = pig_design();
        let layout = ParameterLayout::build(&ModelSpec::model2(), &table).unwrap();
        // Subject 0 sits at the reference level of every factor.
        assert_eq!(layout.active_columns(0), &[0]);
        // Subject with block=heavy, sex=F, enrichment=none.
        let s = 2 * 6 + 3 + 2;
        assert_eq!(table.subject_levels(s), &[2, 1, 2]);
        let cols = layout.active_columns(s);
        let names: Vec<&str> = cols
            .iter()
            .map(|&c| layout.names()[c].as_str())
            .collect();
        assert_eq!(
            names,
            [
                "intercept[Feed|1]",
                "block[Feed|1|heavy]",
                "sex[Feed|1|F]",
                "enrichment[Feed|1|none]",
                "sex:enrichment[Feed|1|F:none]"
            ]
        );
    }

    #[test]
    fn index_of_matches_names() {
        let table = pig_design();
        let layout = ParameterLayout::build(&ModelSpec::model2(), &table).unwrap();
        let i = layout.index_of("sex:enrichment", "Obj", "7", "F:rope").unwrap();
        assert_eq!(layout.names()[i], "sex:enrichment[Obj|7|F:rope]");
        assert!(layout.index_of("intercept", "Aggr", "1", "").is_err());
        assert!(layout.index_of("weight", "Obj", "1", "").is_err());
    }
}
