//! Sampler output against grid integration on tiny models.

use polylogit::sampler::{ess, run};
use polylogit::simulate::{grid_posterior, oracle_problems, GridSpec};
use polylogit::SamplerConfig;

#[test]
fn sampler_matches_grid_posterior() {
    let config = SamplerConfig {
        n_iter: 20_000,
        n_burnin: 2_000,
        thin: 2,
        seed: 20,
        ..SamplerConfig::default()
    };
    for problem in oracle_problems() {
        let layout = problem.layout();
        let priors = &problem.model.priors;
        let points = if layout.total_dim() == 1 { 4001 } else { 1601 };
        let grid = grid_posterior(
            &layout,
            &problem.table,
            priors,
            &GridSpec::prior_cover(&layout, priors, points),
        )
        .unwrap();
        let draws = run(&layout, &problem.table, priors, &config).unwrap();
        for k in 0..layout.total_dim() {
            let x = draws.pooled(k);
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let mcse = (var / ess(&draws, k).unwrap().value).sqrt();
            assert!(
                (mean - grid.means[k]).abs() <= 3.0 * mcse,
                "{} / {}: mean {mean} vs grid {} (mcse {mcse})",
                problem.name,
                layout.names()[k],
                grid.means[k]
            );
            assert!(
                (var / grid.variances[k] - 1.0).abs() <= 0.15,
                "{} / {}: variance {var} vs grid {}",
                problem.name,
                layout.names()[k],
                grid.variances[k]
            );
        }
    }
}

#[test]
fn grid_refinement_is_stable() {
    for problem in oracle_problems().into_iter().filter(|p| p.layout().total_dim() == 1) {
        let layout = problem.layout();
        let priors = &problem.model.priors;
        let coarse = grid_posterior(&layout, &problem.table, priors, &GridSpec::prior_cover(&layout, priors, 2001)).unwrap();
        let fine = grid_posterior(&layout, &problem.table, priors, &GridSpec::prior_cover(&layout, priors, 4001)).unwrap();
        assert!((coarse.means[0] - fine.means[0]).abs() < 1e-4, "{}", problem.name);
    }
}
