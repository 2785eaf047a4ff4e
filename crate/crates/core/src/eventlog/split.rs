use std::collections::HashSet;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EventLog, LogError, Result, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        let ok = all.iter().all(|r| r.is_finite() && *r >= 0.0)
            && (all.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(LogError::InvalidRatios(all))
        }
    }

    /// Partition sizes `(train, val, test)`: validation and test get the
    /// floor of their share, train takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let share = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let val = share(self.val);
        let test = share(self.test).min(n - val);
        (n - val - test, val, test)
    }
}

/// Splits a log at trace level using a seeded uniform permutation.
///
/// All three partitions share the vocabularies of the training partition.
/// Each partition keeps the source order of its traces.
pub fn split_log(
    log: &EventLog,
    ratios: SplitRatios,
    seed: u64,
) -> Result<(EventLog, EventLog, EventLog)> {
    ratios.validate()?;
    let n = log.traces.len();
    if n == 0 {
        return Err(LogError::EmptyLog);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_val, _) = ratios.sizes(n);
    let pick = |range: &[usize]| -> Vec<Trace> {
        let mut idx = range.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| log.traces[i].clone()).collect()
    };
    let train = EventLog::with_own_vocabs(pick(&order[..n_train]));
    let with_train_vocab = |traces: Vec<Trace>, name: &str| {
        let unseen: HashSet<&str> = traces
            .iter()
            .flat_map(|t| t.events.iter())
            .map(|e| e.activity.as_str())
            .filter(|a| train.activity_vocab.get(a).is_none())
            .collect();
        if !unseen.is_empty() {
            let mut unseen: Vec<_> = unseen.into_iter().collect();
            unseen.sort_unstable();
            warn!(
                "{name} partition has {} activities unseen in training ({}); \
                 their events are dropped from graph inputs and scored as misses as targets",
                unseen.len(),
                unseen.join(", ")
            );
        }
        EventLog {
            traces,
            activity_vocab: train.activity_vocab.clone(),
            resource_vocab: train.resource_vocab.clone(),
        }
    };
    let val = with_train_vocab(pick(&order[n_train..n_train + n_val]), "validation");
    let test = with_train_vocab(pick(&order[n_train + n_val..]), "test");
    Ok((train, val, test))
}
