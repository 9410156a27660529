//! Exploratory analyses that precede model fitting: the chi-square test of
//! independence, correspondence analysis and mean behavioural profiles.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::data::{Contingency, ObservationTable};
use crate::error::{Error, Result};
use crate::special::chi_square_sf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Row and column masses of a table with positive margins.
fn masses(table: &Contingency) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let (r, c) = (table.counts.nrows(), table.counts.ncols());
    if r < 2 || c < 2 {
        return Err(Error::DegenerateTable(format!(
            "table is {r} x {c}; at least 2 x 2 is needed"
        )));
    }
    let rows = table.row_totals();
    let cols = table.col_totals();
    if let Some(i) = rows.iter().position(|&v| v <= 0.0) {
        return Err(Error::DegenerateTable(format!(
            "row `{}` has a zero total",
            table.row_labels[i]
        )));
    }
    if let Some(j) = cols.iter().position(|&v| v <= 0.0) {
        return Err(Error::DegenerateTable(format!(
            "column `{}` has a zero total",
            table.col_labels[j]
        )));
    }
    let n: f64 = rows.iter().sum();
    Ok((
        rows.iter().map(|v| v / n).collect(),
        cols.iter().map(|v| v / n).collect(),
        n,
    ))
}

/// Pearson's test of independence between rows and columns.
pub fn chi_square(table: &Contingency) -> Result<ChiSquareResult> {
    let (r, c, n) = masses(table)?;
    let mut statistic = 0.0;
    for i in 0..r.len() {
        for j in 0..c.len() {
            let expected = n * r[i] * c[j];
            let d = table.counts[(i, j)] - expected;
            statistic += d * d / expected;
        }
    }
    let df = (r.len() - 1) * (c.len() - 1);
    Ok(ChiSquareResult {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df as f64),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceResult {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub row_masses: Vec<f64>,
    pub col_masses: Vec<f64>,
    /// Principal coordinates, one row per table row, one column per
    /// dimension.
    pub row_coords: Mat<f64>,
    pub col_coords: Mat<f64>,
    /// Descending; `min(rows, cols) - 1` of them.
    pub singular_values: Vec<f64>,
    pub principal_inertias: Vec<f64>,
    /// Share of total inertia per dimension; all zero when the table is
    /// exactly independent.
    pub inertia_share: Vec<f64>,
    pub total_inertia: f64,
}

impl CorrespondenceResult {
    pub fn dims(&self) -> usize {
        self.singular_values.len()
    }

    /// Principal coordinate of row `i` on dimension `d`; 0 beyond the
    /// solution's dimensions.
    pub fn row_coord(&self, i: usize, d: usize) -> f64 {
        if d < self.dims() {
            self.row_coords[(i, d)]
        } else {
            0.0
        }
    }

    /// Principal coordinate of column `j` on dimension `d`; 0 beyond the
    /// solution's dimensions.
    pub fn col_coord(&self, j: usize, d: usize) -> f64 {
        if d < self.dims() {
            self.col_coords[(j, d)]
        } else {
            0.0
        }
    }

    /// Correspondence matrix rebuilt from the margins and the first `dims`
    /// dimensions: `p_ij = r_i c_j (1 + Σ_d f_id g_jd / σ_d)`.
    pub fn reconstruct(&self, dims: usize) -> Mat<f64> {
        let (nr, nc) = (self.row_masses.len(), self.col_masses.len());
        Mat::from_fn(nr, nc, |i, j| {
            let mut s = 1.0;
            for d in 0..dims.min(self.dims()) {
                let sigma = self.singular_values[d];
                if sigma > 0.0 {
                    s += self.row_coords[(i, d)] * self.col_coords[(j, d)] / sigma;
                }
            }
            self.row_masses[i] * self.col_masses[j] * s
        })
    }
}

/// Simple correspondence analysis with symmetric scaling: rows and columns
/// both in principal coordinates.
pub fn correspondence(table: &Contingency) -> Result<CorrespondenceResult> {
    let (r, c, n) = masses(table)?;
    let (nr, nc) = (r.len(), c.len());
    let s = Mat::from_fn(nr, nc, |i, j| {
        (table.counts[(i, j)] / n - r[i] * c[j]) / (r[i] * c[j]).sqrt()
    });
    let mut total_inertia = 0.0;
    for j in 0..nc {
        for i in 0..nr {
            total_inertia += s[(i, j)] * s[(i, j)];
        }
    }
    let svd = s
        .thin_svd()
        .map_err(|e| Error::DegenerateTable(format!("SVD did not converge: {e:?}")))?;
    let (u, v, sv) = (svd.U(), svd.V(), svd.S().column_vector());
    // Singular values come back in descending order.
    let k = nr.min(nc) - 1;
    let mut row_coords = Mat::zeros(nr, k);
    let mut col_coords = Mat::zeros(nc, k);
    let mut singular_values = Vec::with_capacity(k);
    for d in 0..k {
        let sigma = sv[d];
        let pivot = (0..nr).fold(0, |best, i| if u[(i, d)].abs() > u[(best, d)].abs() { i } else { best });
        let sign = if u[(pivot, d)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..nr {
            row_coords[(i, d)] = sign * u[(i, d)] * sigma / r[i].sqrt();
        }
        for j in 0..nc {
            col_coords[(j, d)] = sign * v[(j, d)] * sigma / c[j].sqrt();
        }
        singular_values.push(sigma);
    }
    let principal_inertias: Vec<f64> = singular_values.iter().map(|s| s * s).collect();
    let explained: f64 = principal_inertias.iter().sum();
    let inertia_share = principal_inertias
        .iter()
        .map(|&l| if explained > 0.0 { l / explained } else { 0.0 })
        .collect();
    Ok(CorrespondenceResult {
        row_labels: table.row_labels.clone(),
        col_labels: table.col_labels.clone(),
        row_masses: r,
        col_masses: c,
        row_coords,
        col_coords,
        singular_values,
        principal_inertias,
        inertia_share,
        total_inertia,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub week: String,
    pub group: String,
    pub category: String,
    pub count: u64,
    /// All counts of the week within the group.
    pub total: u64,
    /// `None` when `total` is zero.
    pub proportion: Option<f64>,
}

/// Category proportions per week and group. Every category appears in every
/// (week, group), including zero counts; a (week, group) without
/// observations yields rows with no proportion.
pub fn mean_profiles<S: AsRef<str>>(
    table: &ObservationTable,
    group_by: &[S],
) -> Result<Vec<ProfileRow>> {
    let grouping = table.grouping(group_by)?;
    let (nw, ng, nj) = (table.weeks().len(), grouping.labels.len(), table.n_categories());
    let mut counts = vec![0u64; nw * ng * nj];
    for row in table.rows() {
        let g = grouping.subject_group[row.subject].expect("observed subject has a group");
        let base = (row.week * ng + g) * nj;
        for (j, &y) in row.counts.iter().enumerate() {
            counts[base + j] += y;
        }
    }
    let mut out = Vec::with_capacity(counts.len());
    for (w, week) in table.weeks().iter().enumerate() {
        for (g, group) in grouping.labels.iter().enumerate() {
            let cell = &counts[(w * ng + g) * nj..(w * ng + g + 1) * nj];
            let total: u64 = cell.iter().sum();
            for (j, &count) in cell.iter().enumerate() {
                out.push(ProfileRow {
                    week: week.clone(),
                    group: group.clone(),
                    category: table.categories().labels[j].clone(),
                    count,
                    total,
                    proportion: (total > 0).then(|| count as f64 / total as f64),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CategorySet, FactorDef, Row};
    use proptest::prelude::*;

    #[test]
    fn two_by_two_hand_values() {
        let t = Contingency::from_rows(&[vec![10.0, 20.0], vec![20.0, 10.0]]).unwrap();
        let chi = chi_square(&t).unwrap();
        assert!((chi.statistic - 20.0 / 3.0).abs() < 1e-12);
        assert_eq!(chi.df, 1);
        assert!((chi.p_value - 0.009_823_274_507_519_247).abs() < 1e-9, "{}", chi.p_value);

        let ca = correspondence(&t).unwrap();
        assert_eq!(ca.dims(), 1);
        assert!((ca.total_inertia - 20.0 / 3.0 / 60.0).abs() < 1e-12);
        assert!((ca.inertia_share[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn proportional_rows_are_independent() {
        let t = Contingency::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]).unwrap();
        let chi = chi_square(&t).unwrap();
        assert!(chi.statistic.abs() < 1e-12);
        assert!((chi.p_value - 1.0).abs() < 1e-12);
        let ca = correspondence(&t).unwrap();
        assert!(ca.total_inertia < 1e-12);
    }

    #[test]
    fn zero_margins_are_named() {
        let t = Contingency::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let err = chi_square(&t).unwrap_err().to_string();
        assert!(err.contains("column `c2`"), "{err}");
        let t = Contingency::from_rows(&[vec![0.0, 0.0], vec![2.0, 1.0]]).unwrap();
        let err = correspondence(&t).unwrap_err().to_string();
        assert!(err.contains("row `r1`"), "{err}");
        let t = Contingency::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(chi_square(&t), Err(Error::DegenerateTable(_))));
    }

    fn profile_table() -> ObservationTable {
        let cats = CategorySet::new(
            ["a", "b", "c", "d", "e", "f", "g"].iter().map(|s| s.to_string()).collect(),
            0,
        )
        .unwrap();
        let factors = vec![FactorDef::new("sex", vec!["M".into(), "F".into()], 0).unwrap()];
        let rows = vec![
            Row { subject: 0, week: 0, counts: vec![3, 1, 0, 0, 0, 0, 0] },
            Row { subject: 1, week: 0, counts: vec![3, 1, 0, 0, 0, 0, 0] },
            Row { subject: 0, week: 1, counts: vec![0, 0, 2, 0, 0, 0, 0] },
        ];
        ObservationTable::new(
            vec!["p1".into(), "p2".into()],
            vec![vec![0], vec![1]],
            vec!["1".into(), "2".into()],
            factors,
            cats,
            rows,
        )
        .unwrap()
    }

    #[test]
    fn profiles_cover_every_category_and_flag_empty_cells() {
        let table = profile_table();
        let all = mean_profiles::<&str>(&table, &[]).unwrap();
        assert_eq!(all.len(), 2 * 7);
        let week1: Vec<f64> = all[..7].iter().map(|r| r.proportion.unwrap()).collect();
        assert_eq!(week1, [0.75, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let by_sex = mean_profiles(&table, &["sex"]).unwrap();
        assert_eq!(by_sex.len(), 2 * 2 * 7);
        assert_eq!(
            by_sex[..7].iter().map(|r| r.proportion).collect::<Vec<_>>(),
            by_sex[7..14].iter().map(|r| r.proportion).collect::<Vec<_>>()
        );
        // Subject p2 (F) has no week-2 row.
        let f_week2 = &by_sex[21..28];
        assert!(f_week2.iter().all(|r| r.group == "F" && r.total == 0 && r.proportion.is_none()));
    }

    fn table_strategy() -> impl Strategy<Value = Contingency> {
        (2usize..=8, 2usize..=8).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::collection::vec(1u32..60, c), r).prop_map(|rows| {
                let rows: Vec<Vec<f64>> = rows
                    .into_iter()
                    .map(|row| row.into_iter().map(f64::from).collect())
                    .collect();
                Contingency::from_rows(&rows).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn correspondence_invariants(t in table_strategy()) {
            let chi = chi_square(&t).unwrap();
            let ca = correspondence(&t).unwrap();
            let n = t.grand_total();
            prop_assert_eq!(ca.dims(), t.counts.nrows().min(t.counts.ncols()) - 1);
            prop_assert!((ca.total_inertia - chi.statistic / n).abs() < 1e-10);
            let explained: f64 = ca.principal_inertias.iter().sum();
            prop_assert!((explained - ca.total_inertia).abs() < 1e-10);
            if ca.total_inertia > 1e-12 {
                let share: f64 = ca.inertia_share.iter().sum();
                prop_assert!((share - 1.0).abs() < 1e-12);
            }
            prop_assert!(ca.singular_values.windows(2).all(|w| w[0] >= w[1]));
            let rebuilt = ca.reconstruct(ca.dims());
            let err = (0..t.counts.nrows())
                .flat_map(|i| (0..t.counts.ncols()).map(move |j| (i, j)))
                .map(|(i, j)| (rebuilt[(i, j)] - t.counts[(i, j)] / n).abs())
                .fold(0.0, f64::max);
            prop_assert!(err < 1e-8, "reconstruction error {}", err);
            for d in 0..ca.dims() {
                let rc: f64 = (0..ca.row_masses.len()).map(|i| ca.row_masses[i] * ca.row_coords[(i, d)]).sum();
                let cc: f64 = (0..ca.col_masses.len()).map(|j| ca.col_masses[j] * ca.col_coords[(j, d)]).sum();
                prop_assert!(rc.abs() < 1e-10 && cc.abs() < 1e-10);
            }
        }

        #[test]
        fn chi_square_is_transpose_symmetric(t in table_strategy()) {
            let a = chi_square(&t).unwrap();
            let b = chi_square(&t.transpose()).unwrap();
            prop_assert_eq!(a.df, b.df);
            prop_assert!((a.statistic - b.statistic).abs() < 1e-9 * (1.0 + a.statistic));
            prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
        }
    }
}
