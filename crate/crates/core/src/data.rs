//! Long-format observation tables: subjects observed over weeks, each
//! (subject, week) cell holding a vector of category counts.
//!
//! Tables come from two CSV layouts. The *events* layout has one line per
//! observed behaviour (`subject,week,<factors...>,category`) and is
//! aggregated into counts; the *counts* layout already has one line per
//! (subject, week) with a column per category. Factor assignments are
//! between-subject: a subject keeps the same levels in every week.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A categorical covariate with an ordered list of levels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorDef {
    pub name: String,
    pub levels: Vec<String>,
    /// Index of the reference level, which carries no coefficients.
    pub reference: usize,
}

impl FactorDef {
    pub fn new(name: impl Into<String>, levels: Vec<String>, reference: usize) -> Result<Self> {
        let name = name.into();
        if levels.is_empty() {
            return Err(Error::Schema(format!("factor `{name}` has no levels")));
        }
        if let Some(dup) = first_duplicate(&levels) {
            return Err(Error::Schema(format!(
                "factor `{name}` declares level `{dup}` twice"
            )));
        }
        if reference >= levels.len() {
            return Err(Error::Schema(format!(
                "factor `{name}` reference index {reference} out of range"
            )));
        }
        Ok(Self {
            name,
            levels,
            reference,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_index(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }

    /// Non-reference level indices in declaration order.
    pub fn free_levels(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.levels.len()).filter(move |&l| l != self.reference)
    }
}

/// The response categories and the baseline used by the logit link.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySet {
    pub labels: Vec<String>,
    pub reference: usize,
}

impl CategorySet {
    pub fn new(labels: Vec<String>, reference: usize) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Schema(format!(
                "at least two categories are required, got {}",
                labels.len()
            )));
        }
        if let Some(dup) = first_duplicate(&labels) {
            return Err(Error::Schema(format!("category `{dup}` declared twice")));
        }
        if reference >= labels.len() {
            return Err(Error::Schema(format!(
                "reference category index {reference} out of range"
            )));
        }
        Ok(Self { labels, reference })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Category indices other than the reference, in declaration order.
    pub fn free(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.labels.len()).filter(move |&j| j != self.reference)
    }
}

/// One (subject, week) cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub subject: usize,
    pub week: usize,
    pub counts: Vec<u64>,
}

impl Row {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Validated long-format dataset.
///
/// Rows are kept sorted by (subject, week). Subjects may lack some weeks.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationTable {
    subjects: Vec<String>,
    subject_levels: Vec<Vec<usize>>,
    weeks: Vec<String>,
    factors: Vec<FactorDef>,
    categories: CategorySet,
    rows: Vec<Row>,
}

impl ObservationTable {
    /// Builds a table, checking every structural invariant.
    ///
    /// `subject_levels[i][k]` is subject `i`'s level index for factor `k`.
    pub fn new(
        subjects: Vec<String>,
        subject_levels: Vec<Vec<usize>>,
        weeks: Vec<String>,
        factors: Vec<FactorDef>,
        categories: CategorySet,
        mut rows: Vec<Row>,
    ) -> Result<Self> {
        if let Some(dup) = first_duplicate(&subjects) {
            return Err(Error::Consistency(format!("subject `{dup}` listed twice")));
        }
        if let Some(dup) = first_duplicate(&weeks) {
            return Err(Error::Consistency(format!("week `{dup}` listed twice")));
        }
        let names: Vec<String> = factors.iter().map(|f| f.name.clone()).collect();
        if let Some(dup) = first_duplicate(&names) {
            return Err(Error::Schema(format!("factor `{dup}` declared twice")));
        }
        if subject_levels.len() != subjects.len() {
            return Err(Error::contract(
                "subject_levels must have one entry per subject",
            ));
        }
        for (i, levels) in subject_levels.iter().enumerate() {
            if levels.len() != factors.len() {
                return Err(Error::contract(format!(
                    "subject `{}` has {} factor levels, expected {}",
                    subjects[i],
                    levels.len(),
                    factors.len()
                )));
            }
            for (f, &l) in factors.iter().zip(levels) {
                if l >= f.n_levels() {
                    return Err(Error::Schema(format!(
                        "subject `{}` uses undeclared level index {l} of factor `{}`",
                        subjects[i], f.name
                    )));
                }
            }
        }
        let j = categories.len();
        for row in &rows {
            if row.subject >= subjects.len() || row.week >= weeks.len() {
                return Err(Error::contract("row references an unknown subject or week"));
            }
            if row.counts.len() != j {
                return Err(Error::contract(format!(
                    "row has {} counts, expected {j}",
                    row.counts.len()
                )));
            }
            if row.total() == 0 {
                return Err(Error::Consistency(format!(
                    "subject `{}` week `{}` has no observations",
                    subjects[row.subject], weeks[row.week]
                )));
            }
        }
        rows.sort_by_key(|r| (r.subject, r.week));
        for pair in rows.windows(2) {
            if pair[0].subject == pair[1].subject && pair[0].week == pair[1].week {
                return Err(Error::Consistency(format!(
                    "subject `{}` week `{}` appears more than once",
                    subjects[pair[0].subject], weeks[pair[0].week]
                )));
            }
        }
        Ok(Self {
            subjects,
            subject_levels,
            weeks,
            factors,
            categories,
            rows,
        })
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn weeks(&self) -> &[String] {
        &self.weeks
    }

    pub fn factors(&self) -> &[FactorDef] {
        &self.factors
    }

    pub fn categories(&self) -> &CategorySet {
        &self.categories
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Level indices of subject `i`, one per factor.
    pub fn subject_levels(&self, i: usize) -> &[usize] {
        &self.subject_levels[i]
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn grand_total(&self) -> u64 {
        self.rows.iter().map(Row::total).sum()
    }

    /// Order-independent view of the table keyed by labels. Two tables
    /// loaded from permutations of the same input compare equal here.
    pub fn canonical(&self) -> CanonicalTable {
        let mut cells = BTreeMap::new();
        for row in &self.rows {
            let counts: BTreeMap<String, u64> = self
                .categories
                .labels
                .iter()
                .cloned()
                .zip(row.counts.iter().copied())
                .filter(|(_, c)| *c > 0)
                .collect();
            cells.insert(
                (
                    self.subjects[row.subject].clone(),
                    self.weeks[row.week].clone(),
                ),
                counts,
            );
        }
        let assignments = self
            .subjects
            .iter()
            .zip(&self.subject_levels)
            .map(|(s, levels)| {
                let named = self
                    .factors
                    .iter()
                    .zip(levels)
                    .map(|(f, &l)| (f.name.clone(), f.levels[l].clone()))
                    .collect();
                (s.clone(), named)
            })
            .collect();
        CanonicalTable { cells, assignments }
    }

    /// Hash of [`Self::canonical`], used to tell tables apart. Stable within
    /// a build, not across toolchains.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.canonical().hash(&mut h);
        h.finish()
    }

    /// Partitions subjects into the observed level combinations of the named
    /// factors. Groups are ordered lexicographically by level index; an empty
    /// factor list yields a single group `all`.
    pub fn grouping<S: AsRef<str>>(&self, factor_names: &[S]) -> Result<Grouping> {
        let idx = factor_names
            .iter()
            .map(|n| {
                self.factor_index(n.as_ref())
                    .ok_or_else(|| Error::Schema(format!("unknown factor `{}`", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        let keys: Vec<Vec<usize>> = self
            .subject_levels
            .iter()
            .map(|levels| idx.iter().map(|&k| levels[k]).collect())
            .collect();
        let mut observed: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for row in &self.rows {
            observed.insert(keys[row.subject].clone(), 0);
        }
        let mut labels = Vec::with_capacity(observed.len());
        for (g, (key, slot)) in observed.iter_mut().enumerate() {
            *slot = g;
            labels.push(if key.is_empty() {
                "all".to_string()
            } else {
                key.iter()
                    .zip(&idx)
                    .map(|(&l, &k)| self.factors[k].levels[l].as_str())
                    .collect::<Vec<_>>()
                    .join(":")
            });
        }
        let subject_group = keys.iter().map(|k| observed.get(k).copied()).collect();
        Ok(Grouping {
            labels,
            subject_group,
        })
    }

    /// Group × category count matrix.
    pub fn contingency<S: AsRef<str>>(&self, group_by: &[S]) -> Result<Contingency> {
        let grouping = self.grouping(group_by)?;
        let mut counts = Mat::<f64>::zeros(grouping.labels.len(), self.n_categories());
        for row in &self.rows {
            let g = grouping.subject_group[row.subject].expect("observed subject has a group");
            for (j, &c) in row.counts.iter().enumerate() {
                counts[(g, j)] += c as f64;
            }
        }
        Contingency::new(grouping.labels, self.categories.labels.clone(), counts)
    }

    /// Writes one line per observed event.
    pub fn write_events<W: Write>(&self, writer: W) -> Result<()> {
        let cols = ColumnNames::default();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![cols.subject.clone(), cols.week.clone()];
        header.extend(self.factors.iter().map(|f| f.name.clone()));
        header.push(cols.category);
        w.write_record(&header)?;
        for row in &self.rows {
            let prefix = self.record_prefix(row);
            for (j, &c) in row.counts.iter().enumerate() {
                for _ in 0..c {
                    let mut rec = prefix.clone();
                    rec.push(&self.categories.labels[j]);
                    w.write_record(&rec)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes one line per (subject, week) with a column per category.
    pub fn write_counts<W: Write>(&self, writer: W) -> Result<()> {
        let cols = ColumnNames::default();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![cols.subject, cols.week];
        header.extend(self.factors.iter().map(|f| f.name.clone()));
        header.extend(self.categories.labels.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = self
                .record_prefix(row)
                .into_iter()
                .map(str::to_string)
                .collect();
            rec.extend(row.counts.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    fn record_prefix(&self, row: &Row) -> Vec<&str> {
        let mut rec = vec![
            self.subjects[row.subject].as_str(),
            self.weeks[row.week].as_str(),
        ];
        rec.extend(
            self.factors
                .iter()
                .zip(&self.subject_levels[row.subject])
                .map(|(f, &l)| f.levels[l].as_str()),
        );
        rec
    }
}

/// Label-keyed form of a table used for order-independent comparison.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CanonicalTable {
    pub cells: BTreeMap<(String, String), BTreeMap<String, u64>>,
    pub assignments: BTreeMap<String, BTreeMap<String, String>>,
}

/// Assignment of subjects to groups formed by crossing factors.
#[derive(Clone, Debug)]
pub struct Grouping {
    pub labels: Vec<String>,
    /// `None` for subjects that have no rows.
    pub subject_group: Vec<Option<usize>>,
}

/// A labelled two-way table of non-negative counts.
#[derive(Clone, Debug, PartialEq)]
pub struct Contingency {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Mat<f64>,
}

impl Contingency {
    pub fn new(
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        counts: Mat<f64>,
    ) -> Result<Self> {
        if counts.nrows() != row_labels.len() || counts.ncols() != col_labels.len() {
            return Err(Error::contract("contingency labels do not match matrix shape"));
        }
        let bad = (0..counts.nrows())
            .flat_map(|i| (0..counts.ncols()).map(move |j| (i, j)))
            .any(|(i, j)| !(counts[(i, j)] >= 0.0 && counts[(i, j)].is_finite()));
        if bad {
            return Err(Error::contract("contingency counts must be finite and non-negative"));
        }
        Ok(Self {
            row_labels,
            col_labels,
            counts,
        })
    }

    /// Unlabelled table from nested rows; labels are `r1..` and `c1..`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::contract("ragged contingency rows"));
        }
        let counts = Mat::from_fn(nrows, ncols, |i, j| rows[i][j]);
        Self::new(
            (1..=nrows).map(|i| format!("r{i}")).collect(),
            (1..=ncols).map(|j| format!("c{j}")).collect(),
            counts,
        )
    }

    pub fn grand_total(&self) -> f64 {
        self.row_totals().iter().sum()
    }

    pub fn row_totals(&self) -> Vec<f64> {
        (0..self.counts.nrows())
            .map(|i| (0..self.counts.ncols()).map(|j| self.counts[(i, j)]).sum())
            .collect()
    }

    pub fn col_totals(&self) -> Vec<f64> {
        (0..self.counts.ncols())
            .map(|j| (0..self.counts.nrows()).map(|i| self.counts[(i, j)]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        Self {
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
            counts: self.counts.transpose().to_owned(),
        }
    }
}

/// Names of the structural columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnNames {
    pub subject: String,
    pub week: String,
    /// Behaviour column of the events layout.
    pub category: String,
}

impl Default for ColumnNames {
    fn default() -> Self {
        Self {
            subject: "subject".into(),
            week: "week".into(),
            category: "category".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSchema {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySchema {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

/// Column mapping and optional level pinning for the CSV loaders.
///
/// Anything left unset is inferred: factors are the non-structural columns,
/// levels and categories take first-appearance order, weeks sort numerically
/// when every label is an integer, and references default to the first
/// level.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub columns: ColumnNames,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<FactorSchema>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub categories: Option<CategorySchema>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weeks: Option<Vec<String>>,
}

impl Schema {
    pub fn from_json<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(reader)?)
    }

    /// A schema pinning every level, category and week of `table`, so that
    /// reloading its CSV export reproduces the same coding.
    pub fn pinned(table: &ObservationTable) -> Self {
        Self {
            columns: ColumnNames::default(),
            factors: Some(
                table
                    .factors
                    .iter()
                    .map(|f| FactorSchema {
                        name: f.name.clone(),
                        levels: Some(f.levels.clone()),
                        reference: Some(f.levels[f.reference].clone()),
                    })
                    .collect(),
            ),
            categories: Some(CategorySchema {
                labels: Some(table.categories.labels.clone()),
                reference: Some(table.categories.labels[table.categories.reference].clone()),
            }),
            weeks: Some(table.weeks.clone()),
        }
    }
}

/// Maps labels to codes, either from a pinned list or by first appearance.
struct Coder {
    what: String,
    labels: Vec<String>,
    index: HashMap<String, usize>,
    pinned: bool,
}

impl Coder {
    fn new(what: impl Into<String>, pinned: Option<&Vec<String>>) -> Result<Self> {
        let what = what.into();
        let mut coder = Self {
            what,
            labels: Vec::new(),
            index: HashMap::new(),
            pinned: pinned.is_some(),
        };
        for label in pinned.into_iter().flatten() {
            if coder.index.insert(label.clone(), coder.labels.len()).is_some() {
                return Err(Error::Schema(format!(
                    "{} declares `{label}` twice",
                    coder.what
                )));
            }
            coder.labels.push(label.clone());
        }
        Ok(coder)
    }

    fn code(&mut self, label: &str, line: u64) -> Result<usize> {
        if let Some(&i) = self.index.get(label) {
            return Ok(i);
        }
        if self.pinned {
            return Err(Error::data(
                line,
                format!("unknown {} `{label}`", self.what),
            ));
        }
        let i = self.labels.len();
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), i);
        Ok(i)
    }

    fn reference(&self, label: Option<&String>) -> Result<usize> {
        match label {
            None => Ok(0),
            Some(l) => self.index.get(l).copied().ok_or_else(|| {
                Error::Schema(format!("reference `{l}` is not a level of {}", self.what))
            }),
        }
    }
}

/// Accumulates (subject, week) cells from either CSV layout.
struct Builder {
    factor_names: Vec<String>,
    factor_refs: Vec<Option<String>>,
    factors: Vec<Coder>,
    categories: Coder,
    category_ref: Option<String>,
    weeks: Coder,
    subjects: Coder,
    subject_levels: Vec<Vec<usize>>,
    cells: HashMap<(usize, usize), Vec<u64>>,
}

impl Builder {
    fn new(schema: &Schema, factor_names: Vec<String>, pinned_categories: Option<&Vec<String>>) -> Result<Self> {
        let declared: HashMap<&str, &FactorSchema> = schema
            .factors
            .iter()
            .flatten()
            .map(|f| (f.name.as_str(), f))
            .collect();
        let mut factors = Vec::new();
        let mut factor_refs = Vec::new();
        for name in &factor_names {
            let decl = declared.get(name.as_str());
            factors.push(Coder::new(
                format!("level of factor `{name}`"),
                decl.and_then(|d| d.levels.as_ref()),
            )?);
            factor_refs.push(decl.and_then(|d| d.reference.clone()));
        }
        Ok(Self {
            factor_names,
            factor_refs,
            factors,
            categories: Coder::new("category", pinned_categories)?,
            category_ref: schema.categories.as_ref().and_then(|c| c.reference.clone()),
            weeks: Coder::new("week", schema.weeks.as_ref())?,
            subjects: Coder::new("subject", None)?,
            subject_levels: Vec::new(),
            cells: HashMap::new(),
        })
    }

    /// Registers the subject's factor assignment and returns (subject, week).
    fn locate(
        &mut self,
        subject: &str,
        week: &str,
        levels: &[&str],
        line: u64,
    ) -> Result<(usize, usize)> {
        if subject.is_empty() {
            return Err(Error::data(line, "empty subject identifier"));
        }
        let codes = levels
            .iter()
            .zip(self.factors.iter_mut())
            .map(|(l, coder)| coder.code(l, line))
            .collect::<Result<Vec<_>>>()?;
        let s = self.subjects.code(subject, line)?;
        if s == self.subject_levels.len() {
            self.subject_levels.push(codes);
        } else {
            let known = &self.subject_levels[s];
            if let Some(k) = (0..codes.len()).find(|&k| known[k] != codes[k]) {
                return Err(Error::Consistency(format!(
                    "line {line}: subject `{subject}` has factor `{}` = `{}` but was earlier assigned `{}`",
                    self.factor_names[k],
                    self.factors[k].labels[codes[k]],
                    self.factors[k].labels[known[k]],
                )));
            }
        }
        let w = self.weeks.code(week, line)?;
        Ok((s, w))
    }

    fn finish(self) -> Result<ObservationTable> {
        let mut factors = Vec::with_capacity(self.factors.len());
        for ((name, coder), reference) in self
            .factor_names
            .iter()
            .zip(&self.factors)
            .zip(&self.factor_refs)
        {
            let r = coder.reference(reference.as_ref())?;
            factors.push(FactorDef::new(name.clone(), coder.labels.clone(), r)?);
        }
        let cat_ref = self.categories.reference(self.category_ref.as_ref())?;
        let categories = CategorySet::new(self.categories.labels.clone(), cat_ref)?;

        // Integer week labels sort numerically unless the schema pinned them.
        let mut week_order: Vec<usize> = (0..self.weeks.labels.len()).collect();
        if !self.weeks.pinned {
            let numeric: Option<Vec<i64>> = self
                .weeks
                .labels
                .iter()
                .map(|w| w.parse::<i64>().ok())
                .collect();
            if let Some(values) = numeric {
                week_order.sort_by_key(|&w| values[w]);
            }
        }
        let mut week_rank = vec![0; week_order.len()];
        for (rank, &w) in week_order.iter().enumerate() {
            week_rank[w] = rank;
        }
        let weeks = week_order
            .iter()
            .map(|&w| self.weeks.labels[w].clone())
            .collect();

        let j = categories.len();
        let rows = self
            .cells
            .into_iter()
            .map(|((subject, week), mut counts)| {
                counts.resize(j, 0);
                Row {
                    subject,
                    week: week_rank[week],
                    counts,
                }
            })
            .collect();
        ObservationTable::new(
            self.subjects.labels,
            self.subject_levels,
            weeks,
            factors,
            categories,
            rows,
        )
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
}

fn factor_columns(
    headers: &csv::StringRecord,
    schema: &Schema,
    structural: &[&str],
) -> Result<(Vec<String>, Vec<usize>)> {
    match &schema.factors {
        Some(declared) => {
            let idx = declared
                .iter()
                .map(|f| column(headers, &f.name))
                .collect::<Result<Vec<_>>>()?;
            Ok((declared.iter().map(|f| f.name.clone()).collect(), idx))
        }
        None => {
            let (names, idx) = headers
                .iter()
                .enumerate()
                .filter(|(_, h)| !structural.contains(h))
                .map(|(i, h)| (h.to_string(), i))
                .unzip();
            Ok((names, idx))
        }
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Loads the events layout, aggregating repeated events into counts.
pub fn load_events<R: Read>(reader: R, schema: &Schema) -> Result<ObservationTable> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = &schema.columns;
    let subject_col = column(&headers, &cols.subject)?;
    let week_col = column(&headers, &cols.week)?;
    let category_col = column(&headers, &cols.category)?;
    let (factor_names, factor_cols) = factor_columns(
        &headers,
        schema,
        &[&cols.subject, &cols.week, &cols.category],
    )?;
    let pinned = schema.categories.as_ref().and_then(|c| c.labels.as_ref());
    let mut builder = Builder::new(schema, factor_names, pinned)?;

    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = line_of(&record);
        let levels: Vec<&str> = factor_cols.iter().map(|&c| &record[c]).collect();
        let cell = builder.locate(&record[subject_col], &record[week_col], &levels, line)?;
        let category = builder.categories.code(&record[category_col], line)?;
        let counts = builder.cells.entry(cell).or_default();
        if counts.len() <= category {
            counts.resize(category + 1, 0);
        }
        counts[category] += 1;
    }
    builder.finish()
}

/// Loads the counts layout. The category columns must be declared in the
/// schema; every other non-structural column is a factor unless factors are
/// declared too.
pub fn load_counts<R: Read>(reader: R, schema: &Schema) -> Result<ObservationTable> {
    let labels = schema
        .categories
        .as_ref()
        .and_then(|c| c.labels.as_ref())
        .ok_or_else(|| {
            Error::Schema("the counts layout requires category labels in the schema".into())
        })?;
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = &schema.columns;
    let subject_col = column(&headers, &cols.subject)?;
    let week_col = column(&headers, &cols.week)?;
    let count_cols = labels
        .iter()
        .map(|l| column(&headers, l))
        .collect::<Result<Vec<_>>>()?;
    let mut structural: Vec<&str> = vec![&cols.subject, &cols.week];
    structural.extend(labels.iter().map(String::as_str));
    let (factor_names, factor_cols) = factor_columns(&headers, schema, &structural)?;
    let mut builder = Builder::new(schema, factor_names, Some(labels))?;

    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = line_of(&record);
        let levels: Vec<&str> = factor_cols.iter().map(|&c| &record[c]).collect();
        let cell = builder.locate(&record[subject_col], &record[week_col], &levels, line)?;
        let mut counts = Vec::with_capacity(count_cols.len());
        for (&c, label) in count_cols.iter().zip(labels) {
            let raw = &record[c];
            let value: i64 = raw.parse().map_err(|_| {
                Error::data(line, format!("count `{raw}` for `{label}` is not an integer"))
            })?;
            if value < 0 {
                return Err(Error::data(
                    line,
                    format!("negative count {value} for `{label}`"),
                ));
            }
            counts.push(value as u64);
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::data(line, "all counts are zero"));
        }
        if builder.cells.insert(cell, counts).is_some() {
            return Err(Error::data(
                line,
                format!(
                    "subject `{}` week `{}` appears more than once",
                    &record[subject_col], &record[week_col]
                ),
            ));
        }
    }
    builder.finish()
}

fn first_duplicate(labels: &[String]) -> Option<&str> {
    let mut seen = std::collections::HashSet::new();
    labels
        .iter()
        .find(|l| !seen.insert(l.as_str()))
        .map(String::as_str)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BEHAVIOURS: [&str; 7] = [
        "Aggressive",
        "Feeding",
        "Calm",
        "AnimalInteraction",
        "EnvironmentInteraction",
        "ObjectInteraction",
        "Locomotion",
    ];

    fn behaviour_schema() -> Schema {
        Schema {
            categories: Some(CategorySchema {
                labels: Some(BEHAVIOURS.iter().map(|s| s.to_string()).collect()),
                reference: Some("Aggressive".into()),
            }),
            ..Schema::default()
        }
    }

    #[test]
    fn identical_events_aggregate() {
        let csv = "subject,week,block,sex,enrichment,category\n\
                   pig1,w1,light,M,chain,Calm\n\
                   pig1,w1,light,M,chain,Calm\n";
        let table = load_events(csv.as_bytes(), &behaviour_schema()).unwrap();
        assert_eq!(table.rows().len(), 1);
        assert_eq!(table.rows()[0].counts, vec![0, 0, 2, 0, 0, 0, 0]);
        assert_eq!(table.factors().len(), 3);
    }

    #[test]
    fn undeclared_category_is_rejected_with_line() {
        let csv = "subject,week,block,sex,enrichment,category\n\
                   pig1,1,light,M,chain,Calm\n\
                   pig1,2,light,M,chain,Sleeping\n";
        match load_events(csv.as_bytes(), &behaviour_schema()) {
            Err(Error::Data { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("Sleeping"));
            }
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "subject,block,category\np,a,x\n";
        let err = load_events(csv.as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(&err, Error::Schema(m) if m.contains("`week`")), "{err}");
    }

    #[test]
    fn conflicting_subject_assignment() {
        let csv = "subject,week,sex,category\np,1,M,a\np,2,F,b\n";
        let err = load_events(csv.as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }

    #[test]
    fn counts_layout_copies_rows() {
        let csv = "subject,week,block,sex,enrichment,Aggressive,Feeding,Calm,AnimalInteraction,EnvironmentInteraction,ObjectInteraction,Locomotion\n\
                   pig1,w1,light,M,chain,0,1,3,0,0,0,0\n";
        let table = load_counts(csv.as_bytes(), &behaviour_schema()).unwrap();
        assert_eq!(table.rows()[0].total(), 4);
        assert_eq!(table.rows()[0].counts, vec![0, 1, 3, 0, 0, 0, 0]);
    }

    #[test]
    fn counts_layout_rejects_bad_counts() {
        let schema = Schema {
            categories: Some(CategorySchema {
                labels: Some(vec!["a".into(), "b".into()]),
                reference: None,
            }),
            ..Schema::default()
        };
        let neg = "subject,week,a,b\np,1,-1,2\n";
        assert!(matches!(
            load_counts(neg.as_bytes(), &schema),
            Err(Error::Data { line: 2, .. })
        ));
        let zero = "subject,week,a,b\np,1,0,0\n";
        assert!(matches!(
            load_counts(zero.as_bytes(), &schema),
            Err(Error::Data { line: 2, .. })
        ));
        let dup = "subject,week,a,b\np,1,1,0\np,1,0,1\n";
        assert!(matches!(
            load_counts(dup.as_bytes(), &schema),
            Err(Error::Data { line: 3, .. })
        ));
        assert!(matches!(
            load_counts(neg.as_bytes(), &Schema::default()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn numeric_weeks_sort_numerically() {
        let csv = "subject,week,category\np,10,a\np,2,b\np,1,a\n";
        let table = load_events(csv.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(table.weeks(), ["1", "2", "10"]);
    }

    #[test]
    fn schema_pins_reference_level() {
        let csv = "subject,week,sex,category\np,1,M,a\nq,1,F,b\n";
        let schema: Schema = serde_json::from_str(
            r#"{"factors":[{"name":"sex","levels":["F","M"],"reference":"M"}],
                "categories":{"reference":"b"}}"#,
        )
        .unwrap();
        let table = load_events(csv.as_bytes(), &schema).unwrap();
        assert_eq!(table.factors()[0].levels, ["F", "M"]);
        assert_eq!(table.factors()[0].reference, 1);
        assert_eq!(table.categories().reference, 1);
    }

    #[test]
    fn contingency_of_single_row() {
        let csv = "subject,week,category\np,1,a\n";
        let schema = Schema {
            categories: Some(CategorySchema {
                labels: Some(vec!["a".into(), "b".into()]),
                reference: None,
            }),
            ..Schema::default()
        };
        let table = load_events(csv.as_bytes(), &schema).unwrap();
        let ct = table.contingency::<&str>(&[]).unwrap();
        assert_eq!(ct.counts, Mat::from_fn(1, 2, |_, j| [1.0, 0.0][j]));
        assert_eq!(ct.row_labels, ["all"]);
    }

    #[test]
    fn contingency_adds_subjects_in_a_group() {
        let csv = "subject,week,g,category\np,1,x,a\np,1,x,b\nq,1,x,a\nq,1,x,a\n";
        let table = load_events(csv.as_bytes(), &Schema::default()).unwrap();
        let ct = table.contingency(&["g"]).unwrap();
        assert_eq!(ct.counts, Mat::from_fn(1, 2, |_, j| [3.0, 1.0][j]));
        assert!(table.contingency(&["nope"]).is_err());
    }

    #[test]
    fn factor_and_category_invariants() {
        assert!(FactorDef::new("f", vec![], 0).is_err());
        assert!(FactorDef::new("f", vec!["a".into(), "a".into()], 0).is_err());
        assert!(FactorDef::new("f", vec!["a".into()], 1).is_err());
        assert!(CategorySet::new(vec!["a".into()], 0).is_err());
        assert!(CategorySet::new(vec!["a".into(), "b".into()], 2).is_err());
    }
}
