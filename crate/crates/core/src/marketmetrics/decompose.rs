//! Classical additive seasonal decomposition.
//!
//! Trend is a centered moving average of one period (a 2×period average for
//! even periods). Seasonal indices are per-phase means of the detrended
//! series, shifted to sum to zero over one period.

use serde::Serialize;

use super::MetricsError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub period: usize,
    /// `None` at the `period / 2` points at each edge.
    pub trend: Vec<Option<f64>>,
    pub seasonal: Vec<f64>,
    /// `None` wherever trend is undefined.
    pub remainder: Vec<Option<f64>>,
}

impl Decomposition {
    /// One seasonal index per phase `0..period`.
    pub fn seasonal_indices(&self) -> &[f64] {
        &self.seasonal[..self.period]
    }

    /// Writes `index,data,trend,seasonal,remainder`; undefined cells are empty.
    pub fn write_csv<W: std::io::Write>(&self, data: &[f64], out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "data", "trend", "seasonal", "remainder"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (i, x) in data.iter().enumerate().take(self.seasonal.len()) {
            w.write_record([
                i.to_string(),
                x.to_string(),
                opt(self.trend[i]),
                self.seasonal[i].to_string(),
                opt(self.remainder[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn seasonal_trend_decompose(series: &[f64], period: usize) -> Result<Decomposition, MetricsError> {
    if period < 2 {
        return Err(MetricsError::InvalidInput(format!("period must be at least 2 (got {period})")));
    }
    if series.len() < 2 * period {
        return Err(MetricsError::InsufficientData(format!(
            "decomposition needs at least {} points for period {period}, got {}",
            2 * period,
            series.len()
        )));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(MetricsError::InvalidInput("series contains non-finite values".into()));
    }
    let n = series.len();
    let half = period / 2;
    let mut trend = vec![None; n];
    for (i, slot) in trend.iter_mut().enumerate().take(n - half).skip(half) {
        let value = if period % 2 == 1 {
            series[i - half..=i + half].iter().sum::<f64>() / period as f64
        } else {
            let inner: f64 = series[i + 1 - half..i + half].iter().sum();
            (inner + 0.5 * (series[i - half] + series[i + half])) / period as f64
        };
        *slot = Some(value);
    }

    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for (i, t) in trend.iter().enumerate() {
        if let Some(t) = t {
            sums[i % period] += series[i] - t;
            counts[i % period] += 1;
        }
    }
    let mut indices: Vec<f64> =
        sums.iter().zip(&counts).map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect();
    let mean = indices.iter().sum::<f64>() / period as f64;
    for v in &mut indices {
        *v -= mean;
    }

    let seasonal: Vec<f64> = (0..n).map(|i| indices[i % period]).collect();
    let remainder = (0..n).map(|i| trend[i].map(|t| series[i] - t - seasonal[i])).collect();
    Ok(Decomposition { period, trend, seasonal, remainder })
}
