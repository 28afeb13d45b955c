//! Daily time-series ingestion, validation, alignment, and synthesis.
//!
//! Everything downstream (forecasters, targeting layer, RL environment,
//! evaluation) consumes the types defined here. All types are immutable after
//! construction; every constructor validates its invariants and operations are
//! pure functions.

mod io;
mod simulate;

pub use io::{load_panel_csv, load_returns_csv, write_panel_csv, write_returns_csv};
pub use simulate::{simulate_market, RegimeSpec, SimulatedMarket, SyntheticMarketConfig};

use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate};
use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Daily simple returns on a single asset.
///
/// Dates are strictly increasing, values are finite and > -1.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

/// A dated series without the return-domain restriction (volatilities,
/// signals, running statistics).
#[derive(Debug, Clone, PartialEq)]
pub struct DatedSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

/// A date-indexed matrix of named series (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPanel {
    dates: Vec<NaiveDate>,
    names: Vec<String>,
    /// Row t holds the values of all series on `dates[t]`.
    values: Array2<f64>,
}

fn check_dates(dates: &[NaiveDate]) -> Result<()> {
    for w in dates.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Domain(format!(
                "dates not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

impl ReturnSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Domain(format!(
                "{} dates vs {} values",
                dates.len(),
                values.len()
            )));
        }
        check_dates(&dates)?;
        for (d, v) in dates.iter().zip(&values) {
            if !v.is_finite() || *v <= -1.0 {
                return Err(Error::Domain(format!("return {v} on {d} out of domain (-1, inf)")));
            }
        }
        Ok(Self { dates, values })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Position of `date`, if present.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Rows with date <= `last`.
    pub fn up_to(&self, last: NaiveDate) -> Self {
        let n = self.dates.partition_point(|d| *d <= last);
        Self { dates: self.dates[..n].to_vec(), values: self.values[..n].to_vec() }
    }

    /// Positional sub-series `[lo, hi)`.
    pub fn slice_rows(&self, lo: usize, hi: usize) -> Self {
        Self { dates: self.dates[lo..hi].to_vec(), values: self.values[lo..hi].to_vec() }
    }

    /// View as a one-column panel.
    pub fn to_panel(&self, name: &str) -> SeriesPanel {
        let values =
            Array2::from_shape_vec((self.len(), 1), self.values.clone()).expect("shape");
        SeriesPanel { dates: self.dates.clone(), names: vec![name.to_string()], values }
    }
}

impl DatedSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Domain(format!(
                "{} dates vs {} values",
                dates.len(),
                values.len()
            )));
        }
        check_dates(&dates)?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value {v}")));
        }
        Ok(Self { dates, values })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn up_to(&self, last: NaiveDate) -> Self {
        let n = self.dates.partition_point(|d| *d <= last);
        Self { dates: self.dates[..n].to_vec(), values: self.values[..n].to_vec() }
    }

    pub fn to_panel(&self, name: &str) -> SeriesPanel {
        let values =
            Array2::from_shape_vec((self.len(), 1), self.values.clone()).expect("shape");
        SeriesPanel { dates: self.dates.clone(), names: vec![name.to_string()], values }
    }
}

impl SeriesPanel {
    pub fn new(dates: Vec<NaiveDate>, names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != dates.len() {
            return Err(Error::Domain(format!(
                "{} rows vs {} dates",
                values.nrows(),
                dates.len()
            )));
        }
        if values.ncols() != names.len() {
            return Err(Error::Domain(format!(
                "{} columns vs {} names",
                values.ncols(),
                names.len()
            )));
        }
        check_dates(&dates)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite panel value".into()));
        }
        Ok(Self { dates, names, values })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column(&self, name: &str) -> Result<DatedSeries> {
        let j = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Domain(format!("no column named {name}")))?;
        DatedSeries::new(self.dates.clone(), self.values.column(j).to_vec())
    }

    pub fn column_by_index(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    /// Column `j` as an owned dated series.
    pub fn column_at(&self, j: usize) -> Result<DatedSeries> {
        if j >= self.n_cols() {
            return Err(Error::Shape(format!("column {j} of {}", self.n_cols())));
        }
        DatedSeries::new(self.dates.clone(), self.values.column(j).to_vec())
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn up_to(&self, last: NaiveDate) -> Self {
        let n = self.dates.partition_point(|d| *d <= last);
        Self {
            dates: self.dates[..n].to_vec(),
            names: self.names.clone(),
            values: self.values.slice(ndarray::s![..n, ..]).to_owned(),
        }
    }

    pub fn slice_rows(&self, lo: usize, hi: usize) -> Self {
        Self {
            dates: self.dates[lo..hi].to_vec(),
            names: self.names.clone(),
            values: self.values.slice(ndarray::s![lo..hi, ..]).to_owned(),
        }
    }
}

/// Intersect the date indexes of several panels and concatenate their columns
/// in input order.
///
/// Errors if the intersection is empty. Single input is the identity.
pub fn align(panels: &[SeriesPanel]) -> Result<SeriesPanel> {
    if panels.is_empty() {
        return Err(Error::Domain("align needs at least one input".into()));
    }
    let mut common: BTreeSet<NaiveDate> = panels[0].dates.iter().copied().collect();
    for p in &panels[1..] {
        let other: BTreeSet<NaiveDate> = p.dates.iter().copied().collect();
        common = common.intersection(&other).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::Misaligned("empty date intersection".into()));
    }
    let dates: Vec<NaiveDate> = common.into_iter().collect();
    let names: Vec<String> = panels.iter().flat_map(|p| p.names.iter().cloned()).collect();
    let n_cols: usize = panels.iter().map(|p| p.n_cols()).sum();
    let mut values = Array2::zeros((dates.len(), n_cols));
    for (i, d) in dates.iter().enumerate() {
        let mut col = 0;
        for p in panels {
            let row = p.index_of(*d).expect("date in intersection");
            for j in 0..p.n_cols() {
                values[[i, col]] = p.values[[row, j]];
                col += 1;
            }
        }
    }
    SeriesPanel::new(dates, names, values)
}

/// Element-wise price relatives u_t = p_t / p_{t-1}, one fewer row than the
/// input. All prices must be strictly positive.
pub fn price_relatives(panel: &SeriesPanel) -> Result<SeriesPanel> {
    if panel.n_rows() < 2 {
        return Err(Error::TooShort { need: 2, have: panel.n_rows() });
    }
    if let Some(p) = panel.values.iter().find(|p| **p <= 0.0) {
        return Err(Error::Domain(format!("non-positive price {p}")));
    }
    let n = panel.n_rows();
    let mut values = Array2::zeros((n - 1, panel.n_cols()));
    for t in 1..n {
        for j in 0..panel.n_cols() {
            values[[t - 1, j]] = panel.values[[t, j]] / panel.values[[t - 1, j]];
        }
    }
    SeriesPanel::new(panel.dates[1..].to_vec(), panel.names.clone(), values)
}

/// Sample standard deviation over a trailing window of length `d`.
///
/// The value dated t covers returns on [t-d+1, t] with denominator d-1; the
/// first d-1 dates are absent from the output.
pub fn rolling_std(series: &ReturnSeries, d: usize) -> Result<DatedSeries> {
    if d < 2 {
        return Err(Error::Config(format!("rolling window {d} < 2")));
    }
    if series.len() < d {
        return Err(Error::TooShort { need: d, have: series.len() });
    }
    let v = series.values();
    let mut out = Vec::with_capacity(v.len() - d + 1);
    for t in d - 1..v.len() {
        out.push(window_std(&v[t + 1 - d..=t]));
    }
    DatedSeries::new(series.dates()[d - 1..].to_vec(), out)
}

/// Sample std (denominator n-1) of a slice; exactly 0 for constant input.
pub(crate) fn window_std(w: &[f64]) -> f64 {
    if w.iter().all(|x| *x == w[0]) {
        return 0.0;
    }
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let ss: f64 = w.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1.0)).max(0.0).sqrt()
}

/// Build a weekday (Mon-Fri) calendar of `n` days starting at `start`.
pub fn weekday_calendar(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut dates = Vec::with_capacity(n);
    let mut d = start;
    while dates.len() < n {
        if d.weekday().num_days_from_monday() < 5 {
            dates.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    dates
}
