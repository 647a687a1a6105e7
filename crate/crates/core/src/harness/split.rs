use serde::{Deserialize, Serialize};

use crate::error::{Result, SplashError};
use crate::task::PropertySet;

#[derive(Debug, Clone, PartialEq)]
pub struct ChronoSplit {
    pub train: PropertySet,
    pub val: PropertySet,
    pub test: PropertySet,
    /// Time of the last training query.
    pub t_seen: f64,
    /// Time of the last validation query.
    pub t_test: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

pub fn validate_fractions(fractions: [f64; 3]) -> Result<()> {
    if fractions.iter().any(|&f| !(f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SplashError::Config(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    Ok(())
}

/// Contiguous partition by query count.
pub fn chrono_split(props: &PropertySet, fractions: [f64; 3]) -> Result<ChronoSplit> {
    validate_fractions(fractions)?;
    let n = props.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = ((fractions[0] + fractions[1]) * n as f64).round() as usize - n_train;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(SplashError::Config(format!(
            "split {fractions:?} of {n} queries leaves an empty partition"
        )));
    }
    let q = &props.queries;
    Ok(ChronoSplit {
        t_seen: q[n_train - 1].time,
        t_test: q[n_train + n_val - 1].time,
        train: props.subset(q[..n_train].to_vec()),
        val: props.subset(q[n_train..n_train + n_val].to_vec()),
        test: props.subset(q[n_train + n_val..].to_vec()),
    })
}

impl ChronoSplit {
    pub fn sizes(&self) -> SplitSizes {
        SplitSizes {
            train: self.train.len(),
            val: self.val.len(),
            test: self.test.len(),
        }
    }

    /// Training and validation queries together, everything before the test period.
    pub fn available(&self) -> PropertySet {
        let mut q = self.train.queries.clone();
        q.extend(self.val.queries.iter().cloned());
        self.train.subset(q)
    }
}
