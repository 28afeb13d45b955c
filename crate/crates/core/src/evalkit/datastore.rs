use crate::error::{Error, Result};
use crate::market_data::SeriesPanel;
use crate::vol_target::StrategyPanel;
use chrono::NaiveDate;
use ndarray::Array2;
use std::cell::RefCell;

/// Which stage of a walk-forward run is asking for data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Model fitting and policy training; must stay at or before the split's
    /// train end date.
    Training,
    /// Out-of-sample application; may read elapsed test rows but never past
    /// its declared decision boundary.
    Evaluation,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phase::Training => write!(f, "training"),
            Phase::Evaluation => write!(f, "evaluation"),
        }
    }
}

/// One logged data request.
#[derive(Debug, Clone)]
pub struct AccessRecord {
    pub phase: Phase,
    /// Date of the last row the request asked for.
    pub last_date: NaiveDate,
    /// Latest date the request was allowed to touch.
    pub boundary: NaiveDate,
    /// Free-form tag naming the consumer, for audit messages.
    pub label: String,
}

impl AccessRecord {
    pub fn is_violation(&self) -> bool {
        self.last_date > self.boundary
    }
}

/// The only gate through which walk-forward code reads market history. Every
/// request declares its phase and the latest date it may touch; the store
/// logs the request, refuses out-of-bounds reads, and can replay the full log
/// for an audit.
#[derive(Debug)]
pub struct DataStore {
    panel: StrategyPanel,
    context: Option<SeriesPanel>,
    log: RefCell<Vec<AccessRecord>>,
}

impl DataStore {
    /// Wrap a strategy panel and its aligned context rows. The context must
    /// carry exactly the panel's dates (base row included).
    pub fn new(panel: StrategyPanel, context: Option<SeriesPanel>) -> Result<Self> {
        if let Some(ctx) = &context {
            if ctx.dates() != panel.dates() {
                return Err(Error::Misaligned(
                    "context dates differ from strategy panel".into(),
                ));
            }
        }
        Ok(Self { panel, context, log: RefCell::new(Vec::new()) })
    }

    pub fn n_rows(&self) -> usize {
        self.panel.len()
    }

    pub fn n_strategies(&self) -> usize {
        self.panel.n_strategies()
    }

    pub fn strategy_names(&self) -> &[String] {
        self.panel.names()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        self.panel.dates()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.panel.index_of(date)
    }

    fn record(
        &self,
        phase: Phase,
        boundary: NaiveDate,
        last_row: usize,
        label: &str,
    ) -> Result<()> {
        let last_date = *self
            .panel
            .dates()
            .get(last_row)
            .ok_or_else(|| Error::Shape(format!("row {last_row} of {}", self.n_rows())))?;
        let rec = AccessRecord { phase, last_date, boundary, label: label.to_string() };
        let violation = rec.is_violation();
        self.log.borrow_mut().push(rec);
        if violation {
            return Err(Error::Config(format!(
                "{phase}-phase request '{label}' reads through {last_date}, past its boundary {boundary}"
            )));
        }
        Ok(())
    }

    /// Rebased episode data over rows `[from, to]`: the strategy panel slice
    /// plus, when present, the context rows carrying exactly its dates.
    pub fn episode_slice(
        &self,
        phase: Phase,
        boundary: NaiveDate,
        from: usize,
        to: usize,
        label: &str,
    ) -> Result<(StrategyPanel, Option<SeriesPanel>)> {
        self.record(phase, boundary, to, label)?;
        let panel = self.panel.slice_rows(from, to)?;
        let context = self.context.as_ref().map(|ctx| ctx.slice_rows(from, to + 1));
        Ok((panel, context))
    }

    /// Raw per-strategy return rows `[from, to]` inclusive, without rebasing;
    /// the estimation feed for the reference allocators.
    pub fn returns_window(
        &self,
        phase: Phase,
        boundary: NaiveDate,
        from: usize,
        to: usize,
        label: &str,
    ) -> Result<Array2<f64>> {
        if from > to || to >= self.n_rows() {
            return Err(Error::Shape(format!(
                "return rows [{from}, {to}] of {}",
                self.n_rows()
            )));
        }
        self.record(phase, boundary, to, label)?;
        Ok(self.panel.returns().slice(ndarray::s![from..=to, ..]).to_owned())
    }

    /// Every request made so far, in order.
    pub fn access_log(&self) -> Vec<AccessRecord> {
        self.log.borrow().clone()
    }

    /// The subset of requests that crossed their declared boundary.
    pub fn violations(&self) -> Vec<AccessRecord> {
        self.log.borrow().iter().filter(|r| r.is_violation()).cloned().collect()
    }

    /// Pass iff no request ever crossed its boundary.
    pub fn audit(&self) -> Result<()> {
        let violations = self.violations();
        if violations.is_empty() {
            return Ok(());
        }
        let mut msg = format!("{} out-of-bounds data request(s):", violations.len());
        for v in violations {
            msg.push_str(&format!(
                " [{} '{}' read {} > {}]",
                v.phase, v.label, v.last_date, v.boundary
            ));
        }
        Err(Error::Config(msg))
    }
}
