//! Reduce-on-plateau learning-rate schedule.

/// Halving schedule (by default) over a monitored loss: after `patience`
/// consecutive epochs without improvement the learning rate is multiplied
/// by `factor` and clamped at `min_lr`. Improvement means the metric drops
/// below the best seen by more than `min_delta`.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    pub factor: f32,
    pub patience: usize,
    pub min_lr: f32,
    pub min_delta: f32,
    best: Option<f32>,
    stale_epochs: usize,
}

impl PlateauSchedule {
    pub fn new(factor: f32, patience: usize, min_lr: f32) -> Self {
        PlateauSchedule {
            factor,
            patience,
            min_lr,
            min_delta: 1e-4,
            best: None,
            stale_epochs: 0,
        }
    }
}

impl Default for PlateauSchedule {
    /// Factor 0.5, patience 2, min_lr 1e-6, min_delta 1e-4.
    fn default() -> Self {
        PlateauSchedule::new(0.5, 2, 1e-6)
    }
}

/// Feeds one epoch's monitored metric; returns the learning rate to use
/// from the next epoch on. The returned sequence is non-increasing and
/// never drops below `min_lr`.
pub fn plateau_update(
    schedule: &mut PlateauSchedule,
    current_lr: f32,
    epoch_metric: f32,
) -> f32 {
    let improved = match schedule.best {
        None => true,
        Some(best) => epoch_metric < best - schedule.min_delta,
    };
    if improved {
        schedule.best = Some(epoch_metric);
        schedule.stale_epochs = 0;
        return current_lr;
    }
    schedule.stale_epochs += 1;
    if schedule.stale_epochs >= schedule.patience {
        schedule.stale_epochs = 0;
        // Clamp at min_lr, but never raise an already-lower rate.
        (current_lr * schedule.factor)
            .max(schedule.min_lr)
            .min(current_lr)
    } else {
        current_lr
    }
}
