//! Bayesian-optimization hyperparameter search: a Latin-hypercube initial
//! design followed by expected-improvement suggestions from a Gaussian
//! process surrogate, maximizing the mean objective over validation folds.

mod gp;
mod space;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gp::{expected_improvement, gp_posterior, GpModel};
pub use space::{
    decode, encode, latin_hypercube, ParamKind, ParamPoint, ParamSpec, ParamValue, SearchSpace,
};

/// One evaluated point. `objective` is the mean of the fold values; `None`
/// marks a failed evaluation (non-finite or wrong fold count).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trial {
    pub point: ParamPoint,
    pub objective: Option<f64>,
    pub fold_values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub best: Trial,
    pub history: Vec<Trial>,
}

const EI_CANDIDATES: usize = 1024;

/// Runs the search: `objective_fn` returns one value per validation fold
/// (`n_folds` of them) for the given point. Failed evaluations are recorded,
/// consume budget, and are imputed as the worst observed value when fitting
/// the surrogate.
pub fn tune<F>(
    space: &SearchSpace,
    mut objective_fn: F,
    budget: usize,
    n_folds: usize,
    seed: u64,
) -> Result<TuneOutcome>
where
    F: FnMut(&ParamPoint) -> Vec<f64>,
{
    space.validate()?;
    if n_folds < 1 {
        return Err(Error::InvalidConfig("tune: n_folds must be >= 1".into()));
    }
    let dim = space.encoded_dim();
    let design_size = 5.max(2 * dim);
    if budget < design_size {
        return Err(Error::BudgetTooSmall {
            budget,
            design: design_size,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history: Vec<Trial> = Vec::with_capacity(budget);
    let mut encoded: Vec<Vec<f64>> = Vec::with_capacity(budget);

    let evaluate = |point: ParamPoint,
                        history: &mut Vec<Trial>,
                        encoded: &mut Vec<Vec<f64>>,
                        objective_fn: &mut F|
     -> Result<()> {
        let x = encode(&point, space)?;
        let fold_values = objective_fn(&point);
        let objective = if fold_values.len() == n_folds
            && fold_values.iter().all(|v| v.is_finite())
        {
            Some(fold_values.iter().sum::<f64>() / n_folds as f64)
        } else {
            None
        };
        history.push(Trial {
            point,
            objective,
            fold_values,
        });
        encoded.push(x);
        Ok(())
    };

    for x in latin_hypercube(design_size, dim, &mut rng) {
        evaluate(decode(&x, space), &mut history, &mut encoded, &mut objective_fn)?;
    }

    while history.len() < budget {
        let finite: Vec<f64> = history.iter().filter_map(|t| t.objective).collect();
        let suggestion = if finite.is_empty() {
            // Surrogate has nothing to stand on; explore uniformly.
            (0..dim).map(|_| rng.gen::<f64>()).collect::<Vec<f64>>()
        } else {
            let worst = finite.iter().cloned().fold(f64::INFINITY, f64::min);
            let best = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let observations: Vec<(Vec<f64>, f64)> = encoded
                .iter()
                .zip(&history)
                .map(|(x, t)| (x.clone(), t.objective.unwrap_or(worst)))
                .collect();
            let model = GpModel::fit(&observations)?;
            let mut best_candidate: Option<(f64, Vec<f64>)> = None;
            for _ in 0..EI_CANDIDATES {
                let candidate: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
                let (mean, var) = model.predict(&candidate);
                let ei = expected_improvement(mean, var, best);
                if best_candidate
                    .as_ref()
                    .map(|(b, _)| ei > *b)
                    .unwrap_or(true)
                {
                    best_candidate = Some((ei, candidate));
                }
            }
            best_candidate.expect("at least one candidate").1
        };
        evaluate(
            decode(&suggestion, space),
            &mut history,
            &mut encoded,
            &mut objective_fn,
        )?;
    }

    let best = history
        .iter()
        .filter(|t| t.objective.is_some())
        .max_by(|a, b| {
            a.objective
                .unwrap()
                .partial_cmp(&b.objective.unwrap())
                .unwrap()
        })
        .cloned()
        .ok_or(Error::NonFinite {
            context: "tuning objective (every trial failed)",
        })?;
    Ok(TuneOutcome { best, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval_space(name: &str) -> SearchSpace {
        SearchSpace {
            params: vec![ParamSpec {
                name: name.into(),
                kind: ParamKind::Linear { low: 0.0, high: 1.0 },
            }],
        }
    }

    fn x_of(point: &ParamPoint) -> f64 {
        point.get("x").unwrap().as_f64().unwrap()
    }

    #[test]
    fn finds_quadratic_optimum() {
        let space = interval_space("x");
        for seed in 0..3 {
            let outcome = tune(
                &space,
                |p| vec![-(x_of(p) - 0.3) * (x_of(p) - 0.3)],
                25,
                1,
                seed,
            )
            .unwrap();
            let best_x = x_of(&outcome.best.point);
            assert!((best_x - 0.3).abs() < 0.05, "seed {seed}: best {best_x}");
            assert_eq!(outcome.history.len(), 25);
        }
    }

    #[test]
    fn degenerate_budget_is_pure_design() {
        let space = interval_space("x");
        // dim = 1 -> design = 5; budget = 5 leaves no room for EI steps.
        let outcome = tune(&space, |p| vec![x_of(p)], 5, 1, 9).unwrap();
        assert_eq!(outcome.history.len(), 5);
        let best = outcome
            .history
            .iter()
            .filter_map(|t| t.objective)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(outcome.best.objective, Some(best));
    }

    #[test]
    fn budget_below_design_size_errors() {
        let space = interval_space("x");
        let err = tune(&space, |p| vec![x_of(p)], 4, 1, 0).unwrap_err();
        assert!(matches!(err, Error::BudgetTooSmall { design: 5, .. }));
    }

    #[test]
    fn objectives_are_fold_means_and_running_best_monotone() {
        let space = interval_space("x");
        let outcome = tune(
            &space,
            |p| vec![x_of(p), x_of(p) + 0.1, x_of(p) - 0.1],
            12,
            3,
            3,
        )
        .unwrap();
        let mut running = f64::NEG_INFINITY;
        for trial in &outcome.history {
            let mean = trial.fold_values.iter().sum::<f64>() / 3.0;
            assert!((trial.objective.unwrap() - mean).abs() < 1e-12);
            running = running.max(trial.objective.unwrap());
            assert!(running >= trial.objective.unwrap());
        }
        assert_eq!(outcome.best.objective, Some(running));
    }

    #[test]
    fn failed_trials_are_recorded_and_skipped() {
        let space = interval_space("x");
        let outcome = tune(
            &space,
            |p| {
                let x = x_of(p);
                if x > 0.5 {
                    vec![f64::NAN]
                } else {
                    vec![x]
                }
            },
            10,
            1,
            5,
        )
        .unwrap();
        assert_eq!(outcome.history.len(), 10);
        assert!(outcome.history.iter().any(|t| t.objective.is_none()));
        // The best trial is valid and in-bounds.
        assert!(x_of(&outcome.best.point) <= 0.5);
    }

    #[test]
    fn deterministic_given_seed() {
        let space = interval_space("x");
        let run = |seed| {
            tune(&space, |p| vec![-(x_of(p) - 0.7).abs()], 10, 1, seed)
                .unwrap()
                .history
                .iter()
                .map(|t| x_of(&t.point))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }
}
