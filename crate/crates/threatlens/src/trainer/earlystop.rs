//! Generic training loop with validation-based early stopping.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::TrainerError;
use crate::tensor::{seeded_rng, Param};

/// Training regime: epoch cap, batch size, and how long to wait for the
/// monitored validation metric to improve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EarlyStopPolicy {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
}

impl Default for EarlyStopPolicy {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            batch_size: 256,
            patience: 10,
        }
    }
}

impl EarlyStopPolicy {
    pub fn validate(&self) {
        assert!(self.max_epochs >= 1, "max_epochs must be at least 1");
        assert!(self.batch_size >= 1, "batch_size must be at least 1");
        assert!(self.patience >= 1, "patience must be at least 1");
    }
}

/// One epoch's record: mean training loss and the monitored validation
/// metric (higher is better).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Anything whose parameters can be snapshotted and restored.
pub trait HasParams {
    fn params(&self) -> Vec<Param>;
}

impl HasParams for crate::classifier::ClassifierModel {
    fn params(&self) -> Vec<Param> {
        self.named_params().into_iter().map(|(_, p)| p).collect()
    }
}

impl HasParams for crate::ner::NerModel {
    fn params(&self) -> Vec<Param> {
        self.named_params().into_iter().map(|(_, p)| p).collect()
    }
}

fn snapshot<M: HasParams>(model: &M) -> Vec<Vec<f64>> {
    model.params().iter().map(Param::snapshot).collect()
}

fn restore<M: HasParams>(model: &M, snap: &[Vec<f64>]) {
    for (p, values) in model.params().iter().zip(snap) {
        p.restore(values);
    }
}

/// Train up to `policy.max_epochs` epochs, evaluating the monitored metric
/// after each one. Keeps the best-so-far parameter snapshot (strict
/// improvement, first-best wins) and stops once `patience` consecutive
/// epochs pass without improvement. The returned model carries the best
/// snapshot.
pub fn train_with_early_stop<M, FNew, FEpoch, FEval>(
    policy: &EarlyStopPolicy,
    seed: u64,
    factory: FNew,
    mut run_epoch: FEpoch,
    mut eval: FEval,
) -> Result<(M, TrainingHistory), TrainerError>
where
    M: HasParams,
    FNew: FnOnce(u64) -> Result<M, TrainerError>,
    FEpoch: FnMut(&mut M, usize, &mut ChaCha8Rng) -> Result<f64, TrainerError>,
    FEval: FnMut(&M) -> Result<f64, TrainerError>,
{
    policy.validate();
    let mut model = factory(seed)?;
    let mut rng = seeded_rng(seed);
    let mut history = TrainingHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best_metric = f64::NEG_INFINITY;
    let mut best_snapshot: Option<Vec<Vec<f64>>> = None;
    let mut stale = 0usize;

    for epoch in 1..=policy.max_epochs {
        let train_loss = run_epoch(&mut model, epoch, &mut rng)?;
        let val_metric = eval(&model)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_metric,
        });
        if val_metric > best_metric {
            best_metric = val_metric;
            best_snapshot = Some(snapshot(&model));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= policy.patience {
                history.stopped_early = true;
                break;
            }
        }
    }

    if let Some(snap) = &best_snapshot {
        restore(&model, snap);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    struct Fake {
        p: Param,
    }

    impl HasParams for Fake {
        fn params(&self) -> Vec<Param> {
            vec![self.p.clone()]
        }
    }

    fn fake() -> Fake {
        Fake {
            p: Param::new(Tensor::zeros(&[1])),
        }
    }

    fn policy(max_epochs: usize, patience: usize) -> EarlyStopPolicy {
        EarlyStopPolicy {
            max_epochs,
            batch_size: 4,
            patience,
        }
    }

    #[test]
    fn monotone_improvement_runs_all_epochs() {
        let (model, history) = train_with_early_stop(
            &policy(100, 10),
            0,
            |_| Ok(fake()),
            |m, epoch, _| {
                m.p.borrow_mut().values_mut()[0] = epoch as f64;
                Ok(1.0)
            },
            |m| Ok(m.p.borrow().values()[0]),
        )
        .unwrap();
        assert_eq!(history.epochs.len(), 100);
        assert_eq!(history.best_epoch, 100);
        assert!(!history.stopped_early);
        assert_eq!(model.p.borrow().values()[0], 100.0);
    }

    #[test]
    fn flat_metric_stops_after_patience_and_keeps_first_snapshot() {
        let (model, history) = train_with_early_stop(
            &policy(100, 10),
            0,
            |_| Ok(fake()),
            |m, epoch, _| {
                m.p.borrow_mut().values_mut()[0] = epoch as f64;
                Ok(1.0)
            },
            |_| Ok(0.5),
        )
        .unwrap();
        assert_eq!(history.epochs.len(), 11);
        assert_eq!(history.best_epoch, 1);
        assert!(history.stopped_early);
        // The returned parameters are the epoch-1 snapshot.
        assert_eq!(model.p.borrow().values()[0], 1.0);
    }

    #[test]
    fn returned_snapshot_is_never_worse_than_any_epoch() {
        // Metric rises then falls; the peak must be returned.
        let metrics = [0.2, 0.5, 0.9, 0.4, 0.3, 0.1];
        let (model, history) = train_with_early_stop(
            &policy(6, 3),
            0,
            |_| Ok(fake()),
            |m, epoch, _| {
                m.p.borrow_mut().values_mut()[0] = epoch as f64;
                Ok(0.0)
            },
            {
                let mut i = 0;
                move |_| {
                    let v = metrics[i];
                    i += 1;
                    Ok(v)
                }
            },
        )
        .unwrap();
        assert_eq!(history.best_epoch, 3);
        assert_eq!(model.p.borrow().values()[0], 3.0);
        let best = history
            .epochs
            .iter()
            .map(|e| e.val_metric)
            .fold(f64::NEG_INFINITY, f64::max);
        let returned = history.epochs[history.best_epoch - 1].val_metric;
        assert_eq!(best, returned);
        assert!(history.stopped_early);
    }
}
