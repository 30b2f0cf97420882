//! Turns a cleaned panel into train and validation store-week instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::wide::{assemble_wide, smoothed_targets, Universe, WideInstance};
use crate::panel::{complete_calendar, engineer_features, FeaturePanel, PanelRow};

/// Inclusive week ranges of a temporal split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeekSplit {
    pub train: (i64, i64),
    pub val: (i64, i64),
}

impl WeekSplit {
    /// Holds out the last `ceil(val_fraction * n_weeks)` weeks of
    /// `[first, last]`.
    pub fn holdout(first: i64, last: i64, val_fraction: f64) -> Result<WeekSplit> {
        if !(val_fraction > 0.0 && val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction must lie in (0, 1), got {val_fraction}")));
        }
        let n_weeks = last - first + 1;
        let n_val = ((n_weeks as f64) * val_fraction).ceil() as i64;
        if n_weeks < 2 || n_val >= n_weeks {
            return Err(Error::InsufficientData(format!(
                "{n_weeks} weeks cannot be split into train and validation"
            )));
        }
        let split_end = last - n_val;
        Ok(WeekSplit {
            train: (first, split_end),
            val: (split_end + 1, last),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: WeekSplit,
    pub features: FeaturePanel,
    pub universe: Universe,
    pub train: Vec<WideInstance>,
    pub val: Vec<WideInstance>,
    /// Trailing rolling means aligned with `train` and `val`.
    pub train_smoothed: Vec<Vec<f64>>,
    pub val_smoothed: Vec<Vec<f64>>,
}

/// Completes the calendar over the rows up to the end of validation,
/// engineers features with statistics limited to the train weeks, and
/// assembles and partitions the wide instances. Smoothing runs over the
/// whole sequence so validation windows may reach back into training weeks.
pub fn prepare_split(clean: &[PanelRow], split: WeekSplit, window: usize) -> Result<PreparedData> {
    let rows: Vec<PanelRow> = clean
        .iter()
        .filter(|r| r.week_id >= split.train.0 && r.week_id <= split.val.1)
        .cloned()
        .collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData("no rows inside the split".into()));
    }
    let cal = complete_calendar(&rows);
    let features = engineer_features(&cal, Some(split.train.1))?;
    let universe = Universe::from_rows(&features.rows);
    let wide = assemble_wide(&features, &universe)?;
    let smoothed = smoothed_targets(&wide, window);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    let (mut train_smoothed, mut val_smoothed) = (Vec::new(), Vec::new());
    for (inst, s) in wide.into_iter().zip(smoothed) {
        if inst.week_id <= split.train.1 {
            train.push(inst);
            train_smoothed.push(s);
        } else {
            val.push(inst);
            val_smoothed.push(s);
        }
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData(format!(
            "split leaves {} train and {} validation instances",
            train.len(),
            val.len()
        )));
    }
    Ok(PreparedData {
        split,
        features,
        universe,
        train,
        val,
        train_smoothed,
        val_smoothed,
    })
}

/// The default holdout: the last `val_fraction` of the weeks validate.
pub fn prepare_data(clean: &[PanelRow], val_fraction: f64, window: usize) -> Result<PreparedData> {
    let first = clean.iter().map(|r| r.week_id).min();
    let last = clean.iter().map(|r| r.week_id).max();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::InsufficientData("empty panel".into()));
    };
    prepare_split(clean, WeekSplit::holdout(first, last, val_fraction)?, window)
}

/// Rebuilds the training side from a week multiset: each training instance
/// appears once per occurrence of its week. Validation is untouched.
pub fn resample_train(data: &PreparedData, weeks: &[i64]) -> Result<PreparedData> {
    let mut train = Vec::new();
    let mut train_smoothed = Vec::new();
    for w in weeks {
        for (inst, s) in data.train.iter().zip(&data.train_smoothed) {
            if inst.week_id == *w {
                train.push(inst.clone());
                train_smoothed.push(s.clone());
            }
        }
    }
    if train.is_empty() {
        return Err(Error::InsufficientData("resampled weeks contain no training instances".into()));
    }
    Ok(PreparedData {
        train,
        train_smoothed,
        ..data.clone()
    })
}
