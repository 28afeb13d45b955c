use crate::error::{Error, Result};
use chrono::{Datelike, NaiveDate};

/// One train/test pair of an anchored walk-forward run. The training window
/// always begins at the run's anchor date and grows; the test window is one
/// calendar year.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkForwardSplit {
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
}

impl WalkForwardSplit {
    pub fn test_year(&self) -> i32 {
        self.test_start.year()
    }
}

/// Anchored walk-forward schedule over a trading calendar: one split per test
/// year, training from `anchor_start` through the day before the year's first
/// trading date.
pub fn walk_forward_splits(
    dates: &[NaiveDate],
    anchor_start: NaiveDate,
    first_test_year: i32,
    last_test_year: i32,
) -> Result<Vec<WalkForwardSplit>> {
    if dates.is_empty() {
        return Err(Error::Shape("empty trading calendar".into()));
    }
    if dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Misaligned("trading calendar not strictly increasing".into()));
    }
    if first_test_year > last_test_year {
        return Err(Error::Config(format!(
            "test years {first_test_year}..{last_test_year} empty"
        )));
    }
    if anchor_start.year() >= first_test_year {
        return Err(Error::Config(format!(
            "anchor {anchor_start} not before the first test year {first_test_year}"
        )));
    }
    let mut splits = Vec::new();
    for year in first_test_year..=last_test_year {
        let mut test_days = dates.iter().filter(|d| d.year() == year);
        let Some(&test_start) = test_days.next() else {
            return Err(Error::Config(format!("no trading days in test year {year}")));
        };
        let test_end = *test_days.last().unwrap_or(&test_start);
        let before = dates.partition_point(|d| *d < test_start);
        if before == 0 {
            return Err(Error::Config(format!(
                "no training days before test year {year}"
            )));
        }
        let train_end = dates[before - 1];
        if anchor_start >= train_end {
            return Err(Error::Config(format!(
                "anchor {anchor_start} leaves no training window before {year}"
            )));
        }
        splits.push(WalkForwardSplit {
            train_start: anchor_start,
            train_end,
            test_start,
            test_end,
        });
    }
    Ok(splits)
}
