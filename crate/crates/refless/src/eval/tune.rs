//! Grid tuning on a dev split.

use crate::error::{Error, Result};

/// Outcome of a grid search: the winning config plus per-config
/// diagnostics (dev score or failure message, in grid order).
#[derive(Debug, Clone)]
pub struct TuneResult<C> {
    pub config: C,
    pub index: usize,
    pub score: f64,
    pub attempts: Vec<std::result::Result<f64, String>>,
}

/// Evaluate every grid config with `objective` (higher is better, dev
/// Spearman rho in the experiment protocol) and return the maximizer.
/// Exact ties go to the config earliest in grid order; individual
/// failures are tolerated, but if every run fails the error aggregates
/// all diagnostics.
pub fn tune<C: Clone>(
    grid: &[C],
    mut objective: impl FnMut(&C) -> Result<f64>,
) -> Result<TuneResult<C>> {
    if grid.is_empty() {
        return Err(Error::Config("empty tuning grid".into()));
    }
    let mut attempts = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (index, config) in grid.iter().enumerate() {
        match objective(config) {
            Ok(score) => {
                attempts.push(Ok(score));
                if best.map(|(_, b)| score > b).unwrap_or(true) {
                    best = Some((index, score));
                }
            }
            Err(e) => attempts.push(Err(e.to_string())),
        }
    }
    match best {
        Some((index, score)) => Ok(TuneResult {
            config: grid[index].clone(),
            index,
            score,
            attempts,
        }),
        None => {
            let diagnostics: Vec<String> = attempts
                .iter()
                .enumerate()
                .map(|(i, a)| format!("config {i}: {}", a.as_ref().unwrap_err()))
                .collect();
            Err(Error::Config(format!(
                "all tuning runs failed: {}",
                diagnostics.join("; ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_grid_returns_that_config() {
        let result = tune(&[7u32], |_| Ok(0.5)).unwrap();
        assert_eq!(result.config, 7);
        assert_eq!(result.index, 0);
    }

    #[test]
    fn planted_dominant_config_wins() {
        let grid = [0.1f64, 0.9, 0.5];
        let result = tune(&grid, |c| Ok(*c)).unwrap();
        assert_eq!(result.index, 1);
        assert_eq!(result.config, 0.9);
    }

    #[test]
    fn exact_tie_takes_first_in_grid_order() {
        let grid = ["a", "b", "c"];
        let result = tune(&grid, |_| Ok(0.3)).unwrap();
        assert_eq!(result.config, "a");
    }

    #[test]
    fn partial_failures_are_tolerated() {
        let grid = [1, 2, 3];
        let result = tune(&grid, |c| {
            if *c == 1 {
                Err(Error::Config("boom".into()))
            } else {
                Ok(*c as f64)
            }
        })
        .unwrap();
        assert_eq!(result.config, 3);
        assert!(result.attempts[0].is_err());
    }

    #[test]
    fn all_failures_aggregate_diagnostics() {
        let grid = [1, 2];
        let err = tune(&grid, |c| -> Result<f64> {
            Err(Error::Config(format!("fail-{c}")))
        })
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("fail-1") && msg.contains("fail-2"), "{msg}");
    }

    #[test]
    fn empty_grid_is_an_error() {
        assert!(tune(&[] as &[u32], |_| Ok(0.0)).is_err());
    }
}
