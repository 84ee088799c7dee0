use serde::{Deserialize, Serialize};

use super::{train, TrainConfig};
use crate::data::Manifest;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Params, Task};

/// `lr ∈ {1e-2, 1e-3, 1e-4} × batch ∈ {32, 64}`, other fields from `base`.
pub fn default_grid(base: &TrainConfig) -> Vec<TrainConfig> {
    let mut grid = Vec::new();
    for lr in [1e-2, 1e-3, 1e-4] {
        for batch in [32, 64] {
            grid.push(TrainConfig {
                learning_rate: lr,
                batch_size: batch,
                ..base.clone()
            });
        }
    }
    grid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellOutcome {
    Ok { val_metric: f64 },
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub config: TrainConfig,
    pub outcome: CellOutcome,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub best_index: usize,
    pub best: TrainConfig,
    pub best_params: Params,
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "index,learning_rate,batch_size,max_epochs,beta1,beta2,seed,status,val_metric,seconds\n",
        );
        for (i, c) in self.cells.iter().enumerate() {
            let (status, metric) = match &c.outcome {
                CellOutcome::Ok { val_metric } => ("ok", val_metric.to_string()),
                CellOutcome::Failed { .. } => ("failed", String::new()),
            };
            out.push_str(&format!(
                "{i},{},{},{},{},{},{},{status},{metric},{:.3}\n",
                c.config.learning_rate,
                c.config.batch_size,
                c.config.max_epochs,
                c.config.beta1,
                c.config.beta2,
                c.config.seed,
                c.seconds
            ));
        }
        out
    }
}

/// Trains every configuration and keeps the one with the best final
/// validation metric (lowest RMSE for age, highest accuracy for gender).
/// Ties keep the earliest cell. A failing cell is recorded and skipped.
pub fn grid_search(
    task: Task,
    spec: &ModelSpec,
    train_set: &Manifest,
    val: &Manifest,
    grid: &[TrainConfig],
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::Domain("grid is empty".into()));
    }
    let better = |a: f64, b: f64| match task {
        Task::Age => a < b,
        Task::Gender => a > b,
    };
    let mut cells = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64, Params)> = None;
    for (i, cfg) in grid.iter().enumerate() {
        let start = std::time::Instant::now();
        let outcome = match train(task, spec, train_set, val, cfg) {
            Ok((params, log)) => {
                let metric = log.last().map(|r| r.val_metric).unwrap_or(f64::NAN);
                if metric.is_nan() {
                    CellOutcome::Failed {
                        reason: "validation metric is NaN".into(),
                    }
                } else {
                    if best.as_ref().is_none_or(|(_, m, _)| better(metric, *m)) {
                        best = Some((i, metric, params));
                    }
                    CellOutcome::Ok { val_metric: metric }
                }
            }
            Err(e) => CellOutcome::Failed {
                reason: e.to_string(),
            },
        };
        cells.push(GridCell {
            config: cfg.clone(),
            outcome,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    match best {
        Some((best_index, _, best_params)) => Ok(GridResult {
            best_index,
            best: grid[best_index].clone(),
            best_params,
            cells,
        }),
        None => Err(Error::SearchExhausted(grid.len())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_six_cells() {
        let g = default_grid(&TrainConfig::default());
        assert_eq!(g.len(), 6);
        assert_eq!((g[0].learning_rate, g[0].batch_size), (1e-2, 32));
        assert_eq!((g[5].learning_rate, g[5].batch_size), (1e-4, 64));
    }
}
