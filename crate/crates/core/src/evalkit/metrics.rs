use crate::error::{Error, Result};
use crate::market_data::ReturnSeries;

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// Table of daily-return performance statistics. Percentages are in percent
/// units; the drawdown is reported as a negative percentage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub annualized_return_pct: f64,
    pub sharpe: f64,
    pub sortino: f64,
    pub max_drawdown_pct: f64,
    /// Max drawdown (negative %) divided by annualized volatility (%), so the
    /// ratio itself is negative and closer to zero is better.
    pub mdd_over_vol: f64,
}

fn require_valid(returns: &[f64]) -> Result<()> {
    if returns.is_empty() {
        return Err(Error::Shape("empty return series".into()));
    }
    if returns.iter().any(|r| !r.is_finite() || *r <= -1.0) {
        return Err(Error::Domain("return at or below -100%".into()));
    }
    Ok(())
}

/// Compounded growth annualized to 252 trading days, in percent.
pub fn annualized_return_pct(returns: &[f64]) -> Result<f64> {
    require_valid(returns)?;
    let growth: f64 = returns.iter().map(|r| 1.0 + r).product();
    let years = returns.len() as f64 / TRADING_DAYS_PER_YEAR;
    Ok((growth.powf(1.0 / years) - 1.0) * 100.0)
}

/// Worst peak-to-trough loss of the compounded price path, as a negative
/// percentage (0 when the path never falls below a previous peak).
pub fn max_drawdown_pct(returns: &[f64]) -> Result<f64> {
    require_valid(returns)?;
    let mut price = 1.0;
    let mut peak = 1.0;
    let mut worst = 0.0f64;
    for r in returns {
        price *= 1.0 + r;
        if price > peak {
            peak = price;
        }
        worst = worst.min(price / peak - 1.0);
    }
    Ok(worst * 100.0)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n-1 denominator).
fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Downside deviation: root mean square of the negative returns measured
/// against zero, with the full observation count in the denominator.
fn downside_std(xs: &[f64]) -> f64 {
    let ss: f64 = xs.iter().filter(|x| **x < 0.0).map(|x| x * x).sum();
    (ss / xs.len() as f64).sqrt()
}

/// All Table-style statistics of a daily return series. Ratio fields need
/// dispersion, so a flat series or one with no losses is rejected rather than
/// reported as an infinite ratio.
pub fn metrics_from_returns(returns: &[f64]) -> Result<MetricsReport> {
    require_valid(returns)?;
    if returns.len() < 2 {
        return Err(Error::TooShort { need: 2, have: returns.len() });
    }
    let sd = sample_std(returns);
    if sd == 0.0 {
        return Err(Error::ZeroVariance("flat return series".into()));
    }
    let dd = downside_std(returns);
    if dd == 0.0 {
        return Err(Error::ZeroVariance("no losing days, downside ratio undefined".into()));
    }
    let m = mean(returns);
    let ann_vol_pct = sd * TRADING_DAYS_PER_YEAR.sqrt() * 100.0;
    let mdd = max_drawdown_pct(returns)?;
    Ok(MetricsReport {
        annualized_return_pct: annualized_return_pct(returns)?,
        sharpe: m / sd * TRADING_DAYS_PER_YEAR.sqrt(),
        sortino: m / dd * TRADING_DAYS_PER_YEAR.sqrt(),
        max_drawdown_pct: mdd,
        mdd_over_vol: mdd / ann_vol_pct,
    })
}

pub fn metrics(series: &ReturnSeries) -> Result<MetricsReport> {
    metrics_from_returns(series.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_basis_point_compounds_to_two_and_a_half_percent() {
        let r = vec![1e-4; 252];
        let ann = annualized_return_pct(&r).unwrap();
        assert!((ann - 2.5518911987694626).abs() < 1e-10, "{ann}");
        // The ratios need dispersion, so the full report refuses a flat series.
        assert!(matches!(metrics_from_returns(&r), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn annualization_is_exact_on_a_two_year_doubling() {
        // One return of +300% over 504 days compounds to 2x per year.
        let mut r = vec![0.0; 503];
        r.push(3.0);
        // Flat-then-jump: growth 4, years 2, annualized (4^(1/2)-1)*100 = 100.
        let ann = annualized_return_pct(&r).unwrap();
        assert!((ann - 100.0).abs() < 1e-9, "{ann}");
    }

    #[test]
    fn up_then_down_drawdown_is_ten_percent() {
        let mdd = max_drawdown_pct(&[0.10, -0.10]).unwrap();
        assert!((mdd + 10.0).abs() < 1e-9, "{mdd}");
    }

    #[test]
    fn rising_path_has_zero_drawdown() {
        let r = vec![0.01, 0.002, 0.03, 0.0001];
        assert_eq!(max_drawdown_pct(&r).unwrap(), 0.0);
    }

    #[test]
    fn drawdown_tracks_the_running_peak_not_the_start() {
        // Path: 1 -> 2 -> 1 -> 3. Worst loss is 50% from the peak of 2, even
        // though the path ends well above the start.
        let mdd = max_drawdown_pct(&[1.0, -0.5, 2.0]).unwrap();
        assert!((mdd + 50.0).abs() < 1e-9, "{mdd}");
    }

    #[test]
    fn report_matches_an_independent_recomputation() {
        let r = vec![0.010, -0.020, 0.015, -0.005, 0.020, 0.001, -0.012];
        let rep = metrics_from_returns(&r).unwrap();

        let n = r.len() as f64;
        let m = r.iter().sum::<f64>() / n;
        let var = r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        let dvar = r.iter().map(|x| x.min(0.0).powi(2)).sum::<f64>() / n;
        let expected_sharpe = m / var.sqrt() * 252f64.sqrt();
        let expected_sortino = m / dvar.sqrt() * 252f64.sqrt();
        assert!((rep.sharpe - expected_sharpe).abs() < 1e-12);
        assert!((rep.sortino - expected_sortino).abs() < 1e-12);

        let growth: f64 = r.iter().map(|x| 1.0 + x).product();
        let expected_ann = (growth.powf(252.0 / n) - 1.0) * 100.0;
        assert!((rep.annualized_return_pct - expected_ann).abs() < 1e-12);

        let vol_pct = var.sqrt() * 252f64.sqrt() * 100.0;
        assert!((rep.mdd_over_vol - rep.max_drawdown_pct / vol_pct).abs() < 1e-12);
        assert!(rep.max_drawdown_pct < 0.0);
        assert!(rep.mdd_over_vol < 0.0);
    }

    #[test]
    fn gains_only_series_is_rejected_for_ratios() {
        let r = vec![0.01, 0.02, 0.005, 0.03];
        assert!(matches!(metrics_from_returns(&r), Err(Error::ZeroVariance(_))));
        assert!(annualized_return_pct(&r).is_ok());
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(annualized_return_pct(&[]).is_err());
        assert!(annualized_return_pct(&[0.01, -1.0]).is_err());
        assert!(annualized_return_pct(&[f64::NAN]).is_err());
        assert!(metrics_from_returns(&[0.01]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn drawdown_is_never_positive_and_survives_a_new_peak(
            r in proptest::collection::vec(-0.05f64..0.05, 2..40)
        ) {
            let mdd = max_drawdown_pct(&r).unwrap();
            prop_assert!(mdd <= 0.0);
            // Appending a day that sets a fresh running peak cannot deepen it.
            let mut extended = r.clone();
            extended.push(10.0);
            let mdd2 = max_drawdown_pct(&extended).unwrap();
            prop_assert!((mdd2 - mdd).abs() < 1e-9);
        }
    }
}
