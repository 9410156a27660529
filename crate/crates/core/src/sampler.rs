//! Adaptive random-walk Metropolis-within-Gibbs.
//!
//! One sweep visits, in order:
//!
//! 1. every fixed-effect group (one non-reference category in one week
//!    slot), updated jointly with a Gaussian random walk;
//! 2. every fixed effect on its own, with its own scale (`site_updates`);
//! 3. every random intercept, updated singly;
//! 4. the log sd of the random intercepts, when it is sampled;
//! 5. one *ridge* move per design column `k`: every random intercept of a
//!    subject with `x_ik = 1` moves by `c` and coefficient `k` of every group
//!    moves by `-c`. The likelihood is invariant along these directions, so
//!    only the priors enter the acceptance ratio. Under a diffuse random
//!    intercept prior they are nearly flat, and the single-site updates alone
//!    crawl along them.
//!
//! Proposal scales follow a Robbins-Monro recursion on `log σ` during
//! burn-in. Group proposals may also learn a covariance shape from burn-in
//! draws. Everything adaptive is frozen when burn-in ends, so the retained
//! draws come from a fixed, reversible kernel.
//!
//! Chains draw from ChaCha8 (`rand_chacha` 0.9) seeded with the run seed,
//! chain `c` using stream `c`. Chains share nothing while running, so the
//! output does not depend on how many run in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::ObservationTable;
use crate::design::{ParameterLayout, PriorConfig, RandomEffect};
use crate::error::{Error, Result};
use crate::likelihood::{
    log_prior, log_sd_prior, normal_log_density, raneff_variance, row_log_likelihood,
};

/// Identifies the generator and substream rule for reproducibility records.
pub const RNG_DESCRIPTION: &str = "ChaCha8Rng (rand_chacha 0.9); seed_from_u64(seed), stream = chain index";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum InitPolicy {
    Zeros,
    /// Independent draws from the prior.
    PriorDraw,
    /// Zeros plus N(0, sd²) noise, different per chain.
    JitteredZeros { sd: f64 },
}

impl Default for InitPolicy {
    fn default() -> Self {
        InitPolicy::JitteredZeros { sd: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub target_acceptance: f64,
    /// Robbins-Monro step is `k^-decay` at the k-th update of a block.
    pub decay: f64,
    pub initial_scale: f64,
    pub min_scale: f64,
    pub max_scale: f64,
    /// Consecutive rejections at `min_scale` that trigger a warning.
    pub window: usize,
    /// Learn a proposal covariance for each fixed-effect group.
    pub covariance: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            target_acceptance: 0.35,
            decay: 0.6,
            initial_scale: 0.1,
            min_scale: 1e-6,
            max_scale: 1e3,
            window: 100,
            covariance: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Post-burn-in iterations per chain.
    pub n_iter: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub init: InitPolicy,
    pub adapt: AdaptConfig,
    /// Include the ridge moves along likelihood-invariant directions.
    pub ridge_moves: bool,
    /// Also update every fixed effect on its own, after the group updates.
    pub site_updates: bool,
    /// Worker threads for running chains; results do not depend on it.
    #[serde(skip)]
    pub jobs: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_iter: 5000,
            n_burnin: 1000,
            thin: 15,
            seed: 1,
            init: InitPolicy::default(),
            adapt: AdaptConfig::default(),
            ridge_moves: true,
            site_updates: true,
            jobs: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 1 {
            return Err(Error::contract("n_chains must be at least 1"));
        }
        if self.thin < 1 || self.n_iter < self.thin {
            return Err(Error::contract("need n_iter >= thin >= 1"));
        }
        let a = &self.adapt;
        if !(a.target_acceptance > 0.0 && a.target_acceptance < 1.0) {
            return Err(Error::contract("target acceptance must lie in (0, 1)"));
        }
        if !(a.min_scale > 0.0 && a.min_scale <= a.initial_scale && a.initial_scale <= a.max_scale)
        {
            return Err(Error::contract("need 0 < min_scale <= initial_scale <= max_scale"));
        }
        if let InitPolicy::JitteredZeros { sd } = self.init {
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::contract("jitter sd must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        self.n_iter / self.thin
    }
}

/// Metropolis acceptance for a log-density difference `delta`.
pub fn accept<R: Rng + ?Sized>(delta: f64, rng: &mut R) -> bool {
    if delta.is_nan() {
        return false;
    }
    if delta >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < delta
}

/// Gaussian random-walk Metropolis step on `coords` of `x` against an
/// arbitrary log-density. `log_density` caches the density at `x`.
pub fn random_walk_update<R, F>(
    x: &mut [f64],
    log_density: &mut f64,
    coords: &[usize],
    scale: f64,
    rng: &mut R,
    target: F,
) -> bool
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    let old: Vec<f64> = coords.iter().map(|&k| x[k]).collect();
    for &k in coords {
        let z: f64 = rng.sample(StandardNormal);
        x[k] += scale * z;
    }
    let proposed = target(x);
    if accept(proposed - *log_density, rng) {
        *log_density = proposed;
        true
    } else {
        for (&k, v) in coords.iter().zip(old) {
            x[k] = v;
        }
        false
    }
}

/// The target density with row indices precomputed for local updates.
pub struct Posterior<'a> {
    layout: &'a ParameterLayout,
    table: &'a ObservationTable,
    priors: &'a PriorConfig,
    rows_by_slot: Vec<Vec<usize>>,
    rows_by_subject: Vec<Vec<usize>>,
    /// Subjects whose design row has a 1 in each column.
    ridge_subjects: Vec<Vec<usize>>,
    /// Rows of each (slot, column) whose subject has that column active.
    rows_by_column: Vec<Vec<usize>>,
}

impl<'a> Posterior<'a> {
    pub fn new(
        layout: &'a ParameterLayout,
        table: &'a ObservationTable,
        priors: &'a PriorConfig,
    ) -> Result<Self> {
        if table.n_categories() != layout.categories().len()
            || table.weeks().len() != layout.weeks().len()
            || table.subjects().len() != layout.subjects().len()
        {
            return Err(Error::contract("table does not match the parameter layout"));
        }
        priors.validate()?;
        let mut rows_by_slot = vec![Vec::new(); layout.n_slots()];
        let mut rows_by_subject = vec![Vec::new(); table.subjects().len()];
        for (r, row) in table.rows().iter().enumerate() {
            rows_by_slot[layout.slot_of_week(row.week)].push(r);
            rows_by_subject[row.subject].push(r);
        }
        let ridge_subjects = (0..layout.group_width())
            .map(|k| {
                (0..table.subjects().len())
                    .filter(|&i| layout.active_columns(i).contains(&k))
                    .collect()
            })
            .collect();
        let width = layout.group_width();
        let mut rows_by_column = vec![Vec::new(); layout.n_slots() * width];
        for (r, row) in table.rows().iter().enumerate() {
            let slot = layout.slot_of_week(row.week);
            for &k in layout.active_columns(row.subject) {
                rows_by_column[slot * width + k].push(r);
            }
        }
        Ok(Self {
            layout,
            table,
            priors,
            rows_by_slot,
            rows_by_subject,
            ridge_subjects,
            rows_by_column,
        })
    }

    pub fn layout(&self) -> &ParameterLayout {
        self.layout
    }

    /// Every block the sweep visits, in sweep order.
    pub fn blocks(&self, ridge_moves: bool, site_updates: bool) -> Vec<BlockId> {
        let l = self.layout;
        let mut blocks = Vec::new();
        for p in 0..l.free_categories().len() {
            for slot in 0..l.n_slots() {
                blocks.push(BlockId::Group { cat_pos: p, slot });
            }
        }
        if site_updates && l.group_width() > 1 {
            for p in 0..l.free_categories().len() {
                for slot in 0..l.n_slots() {
                    for column in 0..l.group_width() {
                        blocks.push(BlockId::Coefficient {
                            cat_pos: p,
                            slot,
                            column,
                        });
                    }
                }
            }
        }
        for s in 0..l.subjects().len() {
            match l.random_effect() {
                RandomEffect::None => {}
                RandomEffect::Shared => blocks.push(BlockId::RandomIntercept {
                    subject: s,
                    cat_pos: None,
                }),
                RandomEffect::PerCategory => {
                    for p in 0..l.free_categories().len() {
                        blocks.push(BlockId::RandomIntercept {
                            subject: s,
                            cat_pos: Some(p),
                        });
                    }
                }
            }
        }
        if l.variance_index().is_some() {
            blocks.push(BlockId::LogSd);
        }
        if ridge_moves {
            match l.random_effect() {
                RandomEffect::None => {}
                RandomEffect::Shared => {
                    for column in 0..l.group_width() {
                        blocks.push(BlockId::Ridge {
                            column,
                            cat_pos: None,
                        });
                    }
                }
                RandomEffect::PerCategory => {
                    for p in 0..l.free_categories().len() {
                        for column in 0..l.group_width() {
                            blocks.push(BlockId::Ridge {
                                column,
                                cat_pos: Some(p),
                            });
                        }
                    }
                }
            }
        }
        blocks
    }

    pub fn block_label(&self, block: BlockId) -> String {
        let l = self.layout;
        match block {
            BlockId::Group { cat_pos, slot } => {
                let cat = &l.categories().labels[l.free_categories()[cat_pos]];
                if l.week_stratified() {
                    format!("group[{cat}|{}]", l.weeks()[slot])
                } else {
                    format!("group[{cat}]")
                }
            }
            BlockId::Coefficient { .. } => "coefficients".into(),
            BlockId::RandomIntercept { .. } => "random_intercepts".into(),
            BlockId::LogSd => "log_sd_u".into(),
            BlockId::Ridge { .. } => "ridge".into(),
        }
    }

    fn block_width(&self, block: BlockId) -> usize {
        match block {
            BlockId::Group { .. } => self.layout.group_width(),
            _ => 1,
        }
    }

    /// Full log-posterior (likelihood without the multinomial constant).
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let mut eta = vec![0.0; self.table.n_categories()];
        let mut ll = 0.0;
        for row in self.table.rows() {
            self.layout.fill_eta(theta, row.subject, row.week, &mut eta);
            ll += row_log_likelihood(&eta, &row.counts);
        }
        ll + log_prior(self.layout, theta, self.priors).expect("theta matches layout")
    }

    /// Chain state at `theta` with all per-row caches filled.
    pub fn state(&self, theta: Vec<f64>) -> Result<ChainState> {
        if theta.len() != self.layout.total_dim() {
            return Err(Error::contract("initial state has the wrong dimension"));
        }
        let j = self.table.n_categories();
        let mut state = ChainState {
            theta,
            eta: vec![0.0; self.table.rows().len() * j],
            row_ll: vec![0.0; self.table.rows().len()],
            delta: Vec::new(),
            pending: Vec::new(),
            pending_eta: Vec::new(),
        };
        state.refresh(self);
        Ok(state)
    }
}

/// A unit of the Metropolis-within-Gibbs sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockId {
    /// All fixed effects of one non-reference category in one week slot.
    Group { cat_pos: usize, slot: usize },
    /// A single fixed effect.
    Coefficient {
        cat_pos: usize,
        slot: usize,
        column: usize,
    },
    /// One random intercept; `cat_pos` is set for per-category effects.
    RandomIntercept {
        subject: usize,
        cat_pos: Option<usize>,
    },
    LogSd,
    /// Joint shift along the invariant direction of one design column.
    Ridge {
        column: usize,
        cat_pos: Option<usize>,
    },
}

/// Current parameters plus cached linear predictors and row
/// log-likelihoods.
#[derive(Clone, Debug)]
pub struct ChainState {
    theta: Vec<f64>,
    eta: Vec<f64>,
    row_ll: Vec<f64>,
    delta: Vec<f64>,
    /// Proposed (row, log-likelihood) pairs and their η rows.
    pending: Vec<(usize, f64)>,
    pending_eta: Vec<f64>,
}

impl ChainState {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn log_likelihood(&self) -> f64 {
        self.row_ll.iter().sum()
    }

    fn refresh(&mut self, post: &Posterior<'_>) {
        let j = post.table.n_categories();
        for (r, row) in post.table.rows().iter().enumerate() {
            let eta = &mut self.eta[r * j..(r + 1) * j];
            post.layout.fill_eta(&self.theta, row.subject, row.week, eta);
            self.row_ll[r] = row_log_likelihood(eta, &row.counts);
        }
    }

    /// Proposes `θ[block] + scale · shape · z` with standard normal `z` and
    /// applies the Metropolis rule. `shape` is an optional lower-triangular
    /// factor stored row-major, width × width.
    pub fn update_block<R: Rng + ?Sized>(
        &mut self,
        post: &Posterior<'_>,
        block: BlockId,
        scale: f64,
        shape: Option<&[f64]>,
        rng: &mut R,
    ) -> bool {
        let width = post.block_width(block);
        self.delta.clear();
        for _ in 0..width {
            let z: f64 = rng.sample(StandardNormal);
            self.delta.push(z);
        }
        if let Some(l) = shape {
            for a in (0..width).rev() {
                let mut v = 0.0;
                for b in 0..=a {
                    v += l[a * width + b] * self.delta[b];
                }
                self.delta[a] = v;
            }
        }
        self.delta.iter_mut().for_each(|d| *d *= scale);
        self.propose(post, block, rng)
    }

    fn propose<R: Rng + ?Sized>(
        &mut self,
        post: &Posterior<'_>,
        block: BlockId,
        rng: &mut R,
    ) -> bool {
        let layout = post.layout;
        let priors = post.priors;
        match block {
            BlockId::Group { cat_pos, slot } | BlockId::Coefficient { cat_pos, slot, .. } => {
                let start = layout.group_start(cat_pos, slot)
                    + match block {
                        BlockId::Coefficient { column, .. } => column,
                        _ => 0,
                    };
                let mut d_prior = 0.0;
                for (k, d) in self.delta.iter().enumerate() {
                    let old = self.theta[start + k];
                    d_prior += normal_log_density(old + d, priors.coef_mean, priors.coef_scale)
                        - normal_log_density(old, priors.coef_mean, priors.coef_scale);
                    self.theta[start + k] = old + d;
                }
                let j = layout.free_categories()[cat_pos];
                let rows = match block {
                    BlockId::Coefficient { column, .. } => {
                        &post.rows_by_column[slot * layout.group_width() + column]
                    }
                    _ => &post.rows_by_slot[slot],
                };
                let delta_ll = self.stage_rows(post, rows, Some((cat_pos, j)));
                if accept(delta_ll + d_prior, rng) {
                    self.commit(post);
                    true
                } else {
                    for (k, d) in self.delta.iter().enumerate() {
                        self.theta[start + k] -= d;
                    }
                    false
                }
            }
            BlockId::RandomIntercept { subject, cat_pos } => {
                let idx = layout
                    .raneff_index(subject, cat_pos.unwrap_or(0))
                    .expect("model has random intercepts");
                let var = raneff_variance(layout, &self.theta, priors);
                let old = self.theta[idx];
                let new = old + self.delta[0];
                let d_prior =
                    normal_log_density(new, 0.0, var) - normal_log_density(old, 0.0, var);
                self.theta[idx] = new;
                let only = cat_pos.map(|p| (p, layout.free_categories()[p]));
                let delta_ll =
                    self.stage_rows(post, post.rows_by_subject[subject].as_slice(), only);
                if accept(delta_ll + d_prior, rng) {
                    self.commit(post);
                    true
                } else {
                    self.theta[idx] = old;
                    false
                }
            }
            BlockId::LogSd => {
                let k = layout.variance_index().expect("model samples log sd");
                let old = self.theta[k];
                let new = old + self.delta[0];
                let (v_old, v_new) = ((2.0 * old).exp(), (2.0 * new).exp());
                let mut d = log_sd_prior(new, priors) - log_sd_prior(old, priors);
                for &u in &self.theta[layout.raneff_range()] {
                    d += normal_log_density(u, 0.0, v_new) - normal_log_density(u, 0.0, v_old);
                }
                if accept(d, rng) {
                    self.theta[k] = new;
                    true
                } else {
                    false
                }
            }
            BlockId::Ridge { column, cat_pos } => {
                let c = self.delta[0];
                let var = raneff_variance(layout, &self.theta, priors);
                let mut d = 0.0;
                let subjects = &post.ridge_subjects[column];
                for &s in subjects {
                    let idx = layout
                        .raneff_index(s, cat_pos.unwrap_or(0))
                        .expect("model has random intercepts");
                    let u = self.theta[idx];
                    d += normal_log_density(u + c, 0.0, var) - normal_log_density(u, 0.0, var);
                }
                let cats = match cat_pos {
                    Some(p) => p..p + 1,
                    None => 0..layout.free_categories().len(),
                };
                for p in cats.clone() {
                    for slot in 0..layout.n_slots() {
                        let b = self.theta[layout.group_start(p, slot) + column];
                        d += normal_log_density(b - c, priors.coef_mean, priors.coef_scale)
                            - normal_log_density(b, priors.coef_mean, priors.coef_scale);
                    }
                }
                if !accept(d, rng) {
                    return false;
                }
                for &s in subjects {
                    let idx = layout.raneff_index(s, cat_pos.unwrap_or(0)).unwrap();
                    self.theta[idx] += c;
                }
                for p in cats {
                    for slot in 0..layout.n_slots() {
                        self.theta[layout.group_start(p, slot) + column] -= c;
                    }
                }
                // η is unchanged in exact arithmetic; recompute to keep the
                // caches bit-consistent with θ.
                self.refresh(post);
                true
            }
        }
    }

    /// Computes proposed η and log-likelihood for `rows` with `theta`
    /// already holding the proposal, staging them for [`Self::commit`].
    /// `only` restricts the recomputation to one (position, category).
    /// Returns the log-likelihood change.
    fn stage_rows(
        &mut self,
        post: &Posterior<'_>,
        rows: &[usize],
        only: Option<(usize, usize)>,
    ) -> f64 {
        let layout = post.layout;
        let table = post.table;
        let jn = table.n_categories();
        self.pending.clear();
        self.pending_eta.clear();
        let mut delta = 0.0;
        for &r in rows {
            let row = &table.rows()[r];
            let base = self.pending_eta.len();
            self.pending_eta
                .extend_from_slice(&self.eta[r * jn..(r + 1) * jn]);
            let eta = &mut self.pending_eta[base..];
            let active = layout.active_columns(row.subject);
            let slot = layout.slot_of_week(row.week);
            match only {
                Some((p, j)) => {
                    eta[j] = layout.eta_entry(&self.theta, active, row.subject, p, slot);
                }
                None => {
                    for (p, &j) in layout.free_categories().iter().enumerate() {
                        eta[j] = layout.eta_entry(&self.theta, active, row.subject, p, slot);
                    }
                }
            }
            let ll = row_log_likelihood(eta, &row.counts);
            delta += ll - self.row_ll[r];
            self.pending.push((r, ll));
        }
        delta
    }

    fn commit(&mut self, post: &Posterior<'_>) {
        let jn = post.table.n_categories();
        for (k, &(r, ll)) in self.pending.iter().enumerate() {
            self.eta[r * jn..(r + 1) * jn].copy_from_slice(&self.pending_eta[k * jn..(k + 1) * jn]);
            self.row_ll[r] = ll;
        }
    }
}

/// Acceptance counts of one block class in one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub block: String,
    pub proposals: u64,
    pub accepted: u64,
    /// Rate over post-burn-in proposals.
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub chain: usize,
    pub seed: u64,
    pub stream: u64,
    pub acceptance: Vec<BlockAcceptance>,
    /// Proposal scales when adaptation stopped.
    pub frozen_scales: Vec<f64>,
    /// Proposal scales after the last iteration.
    pub final_scales: Vec<f64>,
}

/// Retained draws, chain-major: `values[(c * n_draws + d) * dim + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraws {
    names: Vec<String>,
    n_chains: usize,
    n_draws: usize,
    iterations: Vec<u64>,
    values: Vec<f64>,
    pub chains: Vec<ChainReport>,
    pub warnings: Vec<String>,
}

impl PosteriorDraws {
    /// Wraps chain-major values; every value must be finite.
    pub fn new(
        names: Vec<String>,
        n_chains: usize,
        n_draws: usize,
        iterations: Vec<u64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != n_chains * n_draws * names.len() || iterations.len() != n_draws {
            return Err(Error::contract("draw array does not match its declared shape"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::contract(format!(
                "draw for `{}` is not finite",
                names[i % names.len()]
            )));
        }
        Ok(Self {
            names,
            n_chains,
            n_draws,
            iterations,
            values,
            chains: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    /// Retained draws per chain.
    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains * self.n_draws
    }

    /// Post-burn-in iteration number of each retained draw.
    pub fn iterations(&self) -> &[u64] {
        &self.iterations
    }

    pub fn draw(&self, chain: usize, index: usize) -> &[f64] {
        let d = self.dim();
        let start = (chain * self.n_draws + index) * d;
        &self.values[start..start + d]
    }

    /// All draws, chain by chain.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim().max(1))
    }

    /// Trace of one parameter per chain.
    pub fn param_chains(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains)
            .map(|c| (0..self.n_draws).map(|i| self.draw(c, i)[param]).collect())
            .collect()
    }

    pub fn pooled(&self, param: usize) -> Vec<f64> {
        self.iter().map(|d| d[param]).collect()
    }

    /// Parameter-wise posterior mean.
    pub fn mean_state(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for d in self.iter() {
            mean.iter_mut().zip(d).for_each(|(m, v)| *m += v);
        }
        let n = self.total_draws() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Writes `chain,iter,<names...>`, one line per retained draw. Chains
    /// are numbered from 1.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["chain".to_string(), "iter".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for c in 0..self.n_chains {
            for i in 0..self.n_draws {
                rec.clear();
                rec.push((c + 1).to_string());
                rec.push(self.iterations[i].to_string());
                rec.extend(self.draw(c, i).iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format written by [`Self::write_csv`]. Chains must be
    /// contiguous and equally long.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "chain" || &headers[1] != "iter" {
            return Err(Error::Schema(
                "draws file must start with `chain,iter` and name at least one parameter".into(),
            ));
        }
        let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
        let mut chain_ids: Vec<String> = Vec::new();
        let mut per_chain: Vec<Vec<u64>> = Vec::new();
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if chain_ids.last().map(String::as_str) != Some(&record[0]) {
                if chain_ids.iter().any(|c| c == &record[0]) {
                    return Err(Error::data(line, "chain rows are not contiguous"));
                }
                chain_ids.push(record[0].to_string());
                per_chain.push(Vec::new());
            }
            let iter: u64 = record[1]
                .parse()
                .map_err(|_| Error::data(line, "`iter` is not an integer"))?;
            per_chain.last_mut().unwrap().push(iter);
            for field in record.iter().skip(2) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::data(line, format!("`{field}` is not a number")))?;
                values.push(v);
            }
        }
        let n_draws = per_chain.first().map_or(0, Vec::len);
        if per_chain.iter().any(|c| c.len() != n_draws) {
            return Err(Error::Consistency("chains have different lengths".into()));
        }
        let iterations = per_chain.into_iter().next().unwrap_or_default();
        Self::new(names, chain_ids.len(), n_draws, iterations, values)
    }
}

/// Per-block adaptive proposal state.
struct Proposal {
    scale: f64,
    shape: Option<Vec<f64>>,
    updates: u64,
    reject_streak: usize,
    warned: bool,
    proposals: u64,
    accepted: u64,
}

impl Proposal {
    fn adapt(&mut self, accepted: bool, cfg: &AdaptConfig) {
        self.updates += 1;
        let gamma = (self.updates as f64).powf(-cfg.decay);
        let target = cfg.target_acceptance;
        let log_scale = self.scale.ln() + gamma * (f64::from(u8::from(accepted)) - target);
        self.scale = log_scale.exp().clamp(cfg.min_scale, cfg.max_scale);
        if !accepted && self.scale <= cfg.min_scale {
            self.reject_streak += 1;
        } else {
            self.reject_streak = 0;
        }
    }
}

/// Running sums for a group's empirical covariance.
struct Moments {
    n: f64,
    sum: Vec<f64>,
    cross: Vec<f64>,
}

impl Moments {
    fn new(width: usize) -> Self {
        Self {
            n: 0.0,
            sum: vec![0.0; width],
            cross: vec![0.0; width * width],
        }
    }

    fn push(&mut self, x: &[f64]) {
        let w = x.len();
        self.n += 1.0;
        for a in 0..w {
            self.sum[a] += x[a];
            for b in 0..=a {
                self.cross[a * w + b] += x[a] * x[b];
            }
        }
    }

    /// Cholesky factor of the regularized sample covariance.
    fn cholesky(&self) -> Option<Vec<f64>> {
        let w = self.sum.len();
        if self.n < (2 * w + 2) as f64 {
            return None;
        }
        let mut cov = vec![0.0; w * w];
        for a in 0..w {
            for b in 0..=a {
                let c = (self.cross[a * w + b] - self.sum[a] * self.sum[b] / self.n)
                    / (self.n - 1.0);
                cov[a * w + b] = c;
            }
        }
        let trace: f64 = (0..w).map(|a| cov[a * w + a]).sum();
        let jitter = 1e-6 * trace / w as f64 + 1e-12;
        for a in 0..w {
            cov[a * w + a] += jitter;
        }
        let mut l = vec![0.0; w * w];
        for a in 0..w {
            for b in 0..=a {
                let mut s = cov[a * w + b];
                for k in 0..b {
                    s -= l[a * w + k] * l[b * w + k];
                }
                if a == b {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[a * w + a] = s.sqrt();
                } else {
                    l[a * w + b] = s / l[b * w + b];
                }
            }
        }
        Some(l)
    }
}

fn initial_state<R: Rng + ?Sized>(post: &Posterior<'_>, init: &InitPolicy, rng: &mut R) -> Vec<f64> {
    let layout = post.layout;
    let priors = post.priors;
    let mut theta = vec![0.0; layout.total_dim()];
    match *init {
        InitPolicy::Zeros => {}
        InitPolicy::JitteredZeros { sd } => {
            for v in theta.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = sd * z;
            }
        }
        InitPolicy::PriorDraw => {
            let coef_sd = priors.coef_scale.sqrt();
            for v in theta[..layout.fixed_dim()].iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = priors.coef_mean + coef_sd * z;
            }
            let sd_u = match layout.variance_index() {
                Some(k) => {
                    let z: f64 = rng.sample(StandardNormal);
                    let sd = (priors.raneff_hyper_sd * z).abs().max(1e-3);
                    theta[k] = sd.ln();
                    sd
                }
                None => priors.raneff_scale.sqrt(),
            };
            for v in theta[layout.raneff_range()].iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = sd_u * z;
            }
        }
    }
    theta
}

struct ChainOutput {
    values: Vec<f64>,
    report: ChainReport,
    warnings: Vec<String>,
}

fn run_chain(post: &Posterior<'_>, config: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64);
    let theta = initial_state(post, &config.init, &mut rng);
    let lp = post.log_density(&theta);
    if !lp.is_finite() {
        return Err(Error::Initialization(format!(
            "chain {}: log-posterior at the initial state is {lp}",
            chain + 1
        )));
    }
    let mut state = post.state(theta)?;
    let blocks = post.blocks(config.ridge_moves, config.site_updates);
    let cfg = &config.adapt;
    let mut proposals: Vec<Proposal> = blocks
        .iter()
        .map(|_| Proposal {
            scale: cfg.initial_scale,
            shape: None,
            updates: 0,
            reject_streak: 0,
            warned: false,
            proposals: 0,
            accepted: 0,
        })
        .collect();
    let mut warnings = Vec::new();

    let group_width = post.layout.group_width();
    let learn_shape = cfg.covariance && group_width > 1;
    let n_groups = post.layout.n_groups();
    let mut moments: Vec<Moments> = Vec::new();
    let collect_from = config.n_burnin / 4;
    let checkpoints = [config.n_burnin / 2, 3 * config.n_burnin / 4];

    for it in 0..config.n_burnin {
        for (b, &block) in blocks.iter().enumerate() {
            let p = &mut proposals[b];
            let accepted = state.update_block(post, block, p.scale, p.shape.as_deref(), &mut rng);
            p.adapt(accepted, cfg);
            if p.reject_streak >= cfg.window && !p.warned {
                p.warned = true;
                warnings.push(format!(
                    "chain {}: every proposal for {} rejected over {} burn-in updates at the minimum scale",
                    chain + 1,
                    post.block_label(block),
                    cfg.window
                ));
            }
        }
        if learn_shape {
            if it == collect_from {
                moments = (0..n_groups).map(|_| Moments::new(group_width)).collect();
            }
            if it >= collect_from {
                for (g, m) in moments.iter_mut().enumerate() {
                    let start = g * group_width;
                    m.push(&state.theta[start..start + group_width]);
                }
            }
            if checkpoints.contains(&(it + 1)) {
                for (g, m) in moments.iter().enumerate() {
                    if let Some(l) = m.cholesky() {
                        let p = &mut proposals[g];
                        if p.shape.is_none() {
                            p.scale = (2.38 / (group_width as f64).sqrt())
                                .clamp(cfg.min_scale, cfg.max_scale);
                        }
                        p.shape = Some(l);
                    }
                }
            }
        }
    }

    let frozen_scales: Vec<f64> = proposals.iter().map(|p| p.scale).collect();
    let dim = post.layout.total_dim();
    let mut values = Vec::with_capacity(config.retained_per_chain() * dim);
    for it in 1..=config.n_iter {
        for (b, &block) in blocks.iter().enumerate() {
            let p = &mut proposals[b];
            let accepted = state.update_block(post, block, p.scale, p.shape.as_deref(), &mut rng);
            p.proposals += 1;
            p.accepted += u64::from(accepted);
        }
        if it % config.thin == 0 {
            values.extend_from_slice(&state.theta);
        }
    }

    let mut acceptance: Vec<BlockAcceptance> = Vec::new();
    for (block, p) in blocks.iter().zip(&proposals) {
        let label = post.block_label(*block);
        match acceptance.iter_mut().find(|a| a.block == label) {
            Some(a) => {
                a.proposals += p.proposals;
                a.accepted += p.accepted;
            }
            None => acceptance.push(BlockAcceptance {
                block: label,
                proposals: p.proposals,
                accepted: p.accepted,
                rate: 0.0,
            }),
        }
    }
    for a in acceptance.iter_mut() {
        a.rate = if a.proposals == 0 {
            0.0
        } else {
            a.accepted as f64 / a.proposals as f64
        };
    }
    Ok(ChainOutput {
        values,
        report: ChainReport {
            chain: chain + 1,
            seed: config.seed,
            stream: chain as u64,
            acceptance,
            frozen_scales,
            final_scales: proposals.iter().map(|p| p.scale).collect(),
        },
        warnings,
    })
}

/// Runs `config.n_chains` independent chains on the posterior of `layout`
/// given `table` and `priors`.
pub fn run(
    layout: &ParameterLayout,
    table: &ObservationTable,
    priors: &PriorConfig,
    config: &SamplerConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let post = Posterior::new(layout, table, priors)?;
    let outputs: Vec<Result<ChainOutput>> = if config.jobs <= 1 {
        (0..config.n_chains)
            .map(|c| run_chain(&post, config, c))
            .collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::Initialization(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..config.n_chains)
                .into_par_iter()
                .map(|c| run_chain(&post, config, c))
                .collect()
        })
    };
    let n_draws = config.retained_per_chain();
    let mut values = Vec::with_capacity(config.n_chains * n_draws * layout.total_dim());
    let mut chains = Vec::with_capacity(config.n_chains);
    let mut warnings = Vec::new();
    for out in outputs {
        let out = out?;
        values.extend(out.values);
        chains.push(out.report);
        warnings.extend(out.warnings);
    }
    let iterations = (1..=n_draws).map(|i| (i * config.thin) as u64).collect();
    let mut draws = PosteriorDraws::new(
        layout.names().to_vec(),
        config.n_chains,
        n_draws,
        iterations,
        values,
    )?;
    draws.chains = chains;
    draws.warnings = warnings;
    Ok(draws)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split-chain potential scale reduction of one parameter.
pub fn rhat(draws: &PosteriorDraws, param: usize) -> Result<f64> {
    split_rhat(&draws.param_chains(param))
}

/// Split R-hat over arbitrary traces: each chain is halved (dropping the
/// middle draw of odd-length chains) and the between/within variance ratio
/// of the halves is returned. `+∞` when within-half variance is zero but
/// the halves differ; NaN when everything is constant.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::contract("R-hat needs at least two chains"));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 4 {
        return Err(Error::contract("R-hat needs at least four draws per chain"));
    }
    let half = n / 2;
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..n]])
        .collect();
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let within = mean(&halves.iter().map(|h| sample_variance(h)).collect::<Vec<_>>());
    let between_over_n = sample_variance(&means);
    if within == 0.0 {
        return Ok(if between_over_n > 0.0 {
            f64::INFINITY
        } else {
            f64::NAN
        });
    }
    let nh = half as f64;
    let var_plus = (nh - 1.0) / nh * within + between_over_n;
    Ok((var_plus / within).sqrt())
}

/// Effective sample size and whether the trace was constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ess {
    pub value: f64,
    pub degenerate: bool,
}

pub fn ess(draws: &PosteriorDraws, param: usize) -> Result<Ess> {
    ess_chains(&draws.param_chains(param))
}

/// Multi-chain effective sample size using Geyer's initial monotone
/// positive sequence on the pooled autocorrelation, capped at the total
/// draw count.
pub fn ess_chains(chains: &[Vec<f64>]) -> Result<Ess> {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if m == 0 || n * m < 8 || n < 4 {
        return Err(Error::contract("ESS needs at least eight draws"));
    }
    let total = (m * n) as f64;
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let first = chains[0][0];
    if chains.iter().all(|c| c.iter().all(|&v| v == first)) {
        return Ok(Ess {
            value: total,
            degenerate: true,
        });
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let nf = n as f64;
    let acov = |t: usize| -> f64 {
        let s: f64 = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| {
                (0..n - t)
                    .map(|i| (c[i] - mu) * (c[i + t] - mu))
                    .sum::<f64>()
                    / nf
            })
            .sum();
        s / m as f64
    };
    let acov0 = acov(0);
    let within = acov0 * nf / (nf - 1.0);
    let mut var_plus = within * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_variance(&means);
    }
    let rho = |a: f64| 1.0 - (within - a) / var_plus;

    let mut pair_sum = rho(acov0) + rho(acov(1));
    let mut prev = pair_sum;
    let mut k = 1;
    while 2 * k + 1 < n {
        let mut p = rho(acov(2 * k)) + rho(acov(2 * k + 1));
        if p <= 0.0 {
            break;
        }
        p = p.min(prev);
        pair_sum += p;
        prev = p;
        k += 1;
    }
    let tau = -1.0 + 2.0 * pair_sum;
    let value = if tau > 0.0 { (total / tau).min(total) } else { total };
    Ok(Ess {
        value,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CategorySet, FactorDef, Row};
    use crate::design::{ModelSpec, Term};
    use crate::likelihood::log_posterior;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    /// 8 subjects, 2 weeks, one two-level factor, three categories.
    fn small_table() -> ObservationTable {
        let factors = vec![FactorDef::new("sex", labels(&["M", "F"]), 0).unwrap()];
        let cats = CategorySet::new(labels(&["a", "b", "c"]), 0).unwrap();
        let mut rows = Vec::new();
        let mut levels = Vec::new();
        let mut subjects = Vec::new();
        for s in 0..8usize {
            subjects.push(format!("s{s}"));
            levels.push(vec![s % 2]);
            for w in 0..2usize {
                let k = (s * 3 + w * 5) as u64;
                rows.push(Row {
                    subject: s,
                    week: w,
                    counts: vec![3 + k % 4, 2 + (k / 2) % 3, 1 + s as u64 % 3],
                });
            }
        }
        ObservationTable::new(subjects, levels, labels(&["1", "2"]), factors, cats, rows).unwrap()
    }

    fn small_config() -> SamplerConfig {
        SamplerConfig {
            n_chains: 3,
            n_iter: 300,
            n_burnin: 200,
            thin: 3,
            seed: 11,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn accept_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert!(!accept(f64::NAN, &mut rng));
            assert!(!accept(f64::NEG_INFINITY, &mut rng));
            assert!(accept(0.0, &mut rng));
            assert!(accept(f64::INFINITY, &mut rng));
        }
        let hits = (0..20000).filter(|_| accept(0.5f64.ln(), &mut rng)).count();
        assert!((hits as f64 / 20000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn flat_target_always_accepts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = vec![0.0; 3];
        let mut lp = 0.0;
        let accepted = (0..500)
            .filter(|_| random_walk_update(&mut x, &mut lp, &[0, 2], 1.0, &mut rng, |_| 0.0))
            .count();
        assert_eq!(accepted, 500);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn impossible_proposals_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = vec![0.0];
        let mut lp = 0.0;
        let target = |x: &[f64]| if x[0] == 0.0 { 0.0 } else { f64::NEG_INFINITY };
        for _ in 0..200 {
            assert!(!random_walk_update(&mut x, &mut lp, &[0], 1.0, &mut rng, target));
        }
        assert_eq!(x[0], 0.0);
    }

    #[test]
    fn random_walk_preserves_standard_normal() {
        // Tertiles of N(0, 1) at ±0.430727.
        let cut = 0.430_727_299_295_457_5;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let target = |x: &[f64]| -0.5 * x[0] * x[0];
        let mut x = vec![2.0];
        let mut lp = target(&x);
        let mut bins = [0usize; 3];
        let n = 200_000;
        for i in 0..n + 1000 {
            random_walk_update(&mut x, &mut lp, &[0], 2.4, &mut rng, target);
            if i >= 1000 {
                let b = if x[0] < -cut { 0 } else if x[0] < cut { 1 } else { 2 };
                bins[b] += 1;
            }
        }
        for b in bins {
            assert!((b as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01, "{bins:?}");
        }
    }

    #[test]
    fn split_rhat_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let iid: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..1000).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let r = split_rhat(&iid).unwrap();
        assert!(r > 0.99 && r < 1.01, "{r}");

        let shifted: Vec<Vec<f64>> = iid
            .iter()
            .enumerate()
            .map(|(c, v)| v.iter().map(|x| x + 3.0 * c as f64).collect())
            .collect();
        assert!(split_rhat(&shifted).unwrap() > 1.5);

        let constant = vec![vec![1.0; 10], vec![1.0; 10]];
        assert!(split_rhat(&constant).unwrap().is_nan());
        let apart = vec![vec![1.0; 10], vec![2.0; 10]];
        assert_eq!(split_rhat(&apart).unwrap(), f64::INFINITY);

        assert!(split_rhat(&[vec![1.0; 10]]).is_err());
        assert!(split_rhat(&[vec![1.0, 2.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn ess_of_iid_and_ar1() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let iid: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2000).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let e = ess_chains(&iid).unwrap();
        assert!(!e.degenerate);
        assert!(e.value > 6500.0 && e.value <= 8000.0, "{}", e.value);

        let rho = 0.9;
        let ar: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..20000)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        x = rho * x + (1.0f64 - rho * rho).sqrt() * z;
                        x
                    })
                    .collect()
            })
            .collect();
        let expected = 80000.0 * (1.0 - rho) / (1.0 + rho);
        let e = ess_chains(&ar).unwrap();
        assert!((e.value / expected - 1.0).abs() < 0.25, "{} vs {expected}", e.value);
    }

    #[test]
    fn ess_of_constant_trace_is_flagged() {
        let e = ess_chains(&[vec![0.5; 50], vec![0.5; 50]]).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.value, 100.0);
    }

    #[test]
    fn cached_state_matches_full_evaluation() {
        let table = small_table();
        let spec = ModelSpec::new("m", vec![Term::Main("sex".into())]).unwrap();
        let layout = ParameterLayout::build(&spec, &table).unwrap();
        let priors = PriorConfig::default();
        let post = Posterior::new(&layout, &table, &priors).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut state = post.state(vec![0.0; layout.total_dim()]).unwrap();
        let blocks = post.blocks(true, true);
        for _ in 0..50 {
            for &b in &blocks {
                state.update_block(&post, b, 0.3, None, &mut rng);
            }
        }
        let full = crate::likelihood::log_likelihood(&layout, state.theta(), &table).unwrap();
        assert!((state.log_likelihood() - full).abs() < 1e-9);
        let lp = log_posterior(&layout, state.theta(), &table, &priors).unwrap();
        assert!((post.log_density(state.theta()) - lp).abs() < 1e-9);
    }

    #[test]
    fn ridge_direction_leaves_likelihood_unchanged() {
        let table = small_table();
        let spec = ModelSpec::new("m", vec![Term::Main("sex".into())]).unwrap();
        let layout = ParameterLayout::build(&spec, &table).unwrap();
        let mut theta: Vec<f64> = (0..layout.total_dim()).map(|k| 0.1 * k as f64).collect();
        let before = crate::likelihood::log_likelihood(&layout, &theta, &table).unwrap();
        for k in layout.raneff_range() {
            theta[k] += 0.7;
        }
        for p in 0..layout.free_categories().len() {
            for slot in 0..layout.n_slots() {
                theta[layout.group_start(p, slot)] -= 0.7;
            }
        }
        let after = crate::likelihood::log_likelihood(&layout, &theta, &table).unwrap();
        assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn scales_freeze_after_burnin_and_runs_are_reproducible() {
        let table = small_table();
        let spec = ModelSpec::new("m", vec![Term::Main("sex".into())]).unwrap();
        let layout = ParameterLayout::build(&spec, &table).unwrap();
        let priors = PriorConfig::default();
        let config = small_config();
        let a = run(&layout, &table, &priors, &config).unwrap();
        assert_eq!(a.n_draws(), 100);
        assert_eq!(a.iterations()[0], 3);
        for chain in &a.chains {
            assert_eq!(chain.frozen_scales, chain.final_scales);
        }
        let b = run(&layout, &table, &priors, &SamplerConfig { jobs: 3, ..config.clone() }).unwrap();
        assert_eq!(a, b);
        let c = run(&layout, &table, &priors, &SamplerConfig { seed: 12, ..config }).unwrap();
        assert_ne!(a.draw(0, 5), c.draw(0, 5));
        assert_ne!(a.draw(0, 5), a.draw(1, 5));
    }

    #[test]
    fn draws_csv_round_trip() {
        let table = small_table();
        let spec = ModelSpec::new("m", vec![]).unwrap();
        let layout = ParameterLayout::build(&spec, &table).unwrap();
        let draws = run(&layout, &table, &PriorConfig::default(), &small_config()).unwrap();
        let mut buf = Vec::new();
        draws.write_csv(&mut buf).unwrap();
        let back = PosteriorDraws::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.names(), draws.names());
        assert_eq!(back.n_chains(), 3);
        assert_eq!(back.iterations(), draws.iterations());
        for (x, y) in back.iter().zip(draws.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn nonfinite_start_is_an_initialization_error() {
        let table = small_table();
        let spec = ModelSpec::new("m", vec![]).unwrap();
        let layout = ParameterLayout::build(&spec, &table).unwrap();
        let config = SamplerConfig {
            init: InitPolicy::JitteredZeros { sd: 1e300 },
            ..small_config()
        };
        let err = run(&layout, &table, &PriorConfig::default(), &config).unwrap_err();
        assert!(matches!(err, Error::Initialization(_)), "{err}");
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        assert_eq!(SamplerConfig::default().retained_per_chain(), 333);
        assert!(SamplerConfig { thin: 0, ..SamplerConfig::default() }.validate().is_err());
        assert!(SamplerConfig { n_chains: 0, ..SamplerConfig::default() }.validate().is_err());
    }
}
