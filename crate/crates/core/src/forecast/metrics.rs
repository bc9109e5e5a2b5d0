use std::io::Write;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
}

pub fn metrics(predicted: &[f64], actual: &[f64]) -> Result<Metrics> {
    if predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} predictions, {} actuals",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("metrics need at least one value"));
    }
    let n = predicted.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (p, a) in predicted.iter().zip(actual) {
        se += (p - a) * (p - a);
        ae += (p - a).abs();
    }
    let mse = se / n;
    Ok(Metrics {
        mse,
        mae: ae / n,
        rmse: mse.sqrt(),
    })
}

/// Repeats the last observed value.
pub fn naive_forecast(history: &[f64], steps: usize) -> Vec<f64> {
    vec![history.last().copied().unwrap_or(0.0); steps]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonMetrics {
    pub horizon: usize,
    pub metrics: Metrics,
    /// Number of forecast origins scored.
    pub origins: usize,
}

/// Rolling-origin evaluation: from every `stride`-th origin in
/// `first_origin..`, forecast up to the largest horizon using only the data
/// before the origin and score the value `h` steps ahead for each horizon.
pub fn evaluate_horizons<F>(
    series: &[f64],
    first_origin: usize,
    stride: usize,
    horizons: &[usize],
    mut forecaster: F,
) -> Result<Vec<HorizonMetrics>>
where
    F: FnMut(&[f64], usize) -> Result<Vec<f64>>,
{
    let max_h = horizons
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::invalid("no horizons"))?;
    if stride == 0 || first_origin == 0 || first_origin + max_h > series.len() {
        return Err(Error::invalid(format!(
            "series of {} values cannot be scored from origin {first_origin} at horizon {max_h}",
            series.len()
        )));
    }
    let mut predicted = vec![Vec::new(); horizons.len()];
    let mut actual = vec![Vec::new(); horizons.len()];
    let mut origin = first_origin;
    let mut origins = 0;
    while origin + max_h <= series.len() {
        let forecast = forecaster(&series[..origin], max_h)?;
        if forecast.len() < max_h {
            return Err(Error::invalid("forecaster returned too few steps"));
        }
        for (i, &h) in horizons.iter().enumerate() {
            predicted[i].push(forecast[h - 1]);
            actual[i].push(series[origin + h - 1]);
        }
        origins += 1;
        origin += stride;
    }
    horizons
        .iter()
        .enumerate()
        .map(|(i, &horizon)| {
            Ok(HorizonMetrics {
                horizon,
                metrics: metrics(&predicted[i], &actual[i])?,
                origins,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub cluster_id: u32,
    pub horizon: usize,
    pub metrics: Metrics,
}

/// CSV with header `cluster_id,horizon,mse,mae,rmse`.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Encoding(e.to_string());
    w.write_record(["cluster_id", "horizon", "mse", "mae", "rmse"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.cluster_id.to_string(),
            r.horizon.to_string(),
            r.metrics.mse.to_string(),
            r.metrics.mae.to_string(),
            r.metrics.rmse.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction() {
        let m = metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            m,
            Metrics {
                mse: 0.0,
                mae: 0.0,
                rmse: 0.0
            }
        );
    }

    #[test]
    fn hand_computed() {
        let m = metrics(&[1.0, 2.0], &[2.0, 4.0]).unwrap();
        assert!((m.mse - 2.5).abs() < 1e-12);
        assert!((m.mae - 1.5).abs() < 1e-12);
        assert!((m.rmse - 1.581_138_830_084).abs() < 1e-9);
    }

    #[test]
    fn mismatch_and_empty() {
        assert!(metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(metrics(&[], &[]).is_err());
    }

    #[test]
    fn naive_repeats_last() {
        assert_eq!(naive_forecast(&[1.0, 7.0], 3), vec![7.0; 3]);
    }

    #[test]
    fn rolling_origins() {
        let series: Vec<f64> = (0..10).map(|x| x as f64).collect();
        let rows = evaluate_horizons(&series, 5, 1, &[1, 2], |h, n| Ok(naive_forecast(h, n))).unwrap();
        // Origins 5..=8; naive misses by exactly h.
        assert_eq!(rows[0].origins, 4);
        assert!((rows[0].metrics.mae - 1.0).abs() < 1e-12);
        assert!((rows[1].metrics.mae - 2.0).abs() < 1e-12);
        assert!(evaluate_horizons(&series, 9, 1, &[2], |h, n| Ok(naive_forecast(h, n))).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        let m = Metrics {
            mse: 2.5,
            mae: 1.5,
            rmse: 2.5f64.sqrt(),
        };
        write_metrics_csv(
            &mut buf,
            &[MetricsRow {
                cluster_id: 3,
                horizon: 12,
                metrics: m,
            }],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("cluster_id,horizon,mse,mae,rmse"));
        assert!(lines.next().unwrap().starts_with("3,12,2.5,1.5,1.58"));
    }

    proptest! {
        #[test]
        fn rmse_squared_is_mse(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)) {
            let (p, a): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let m = metrics(&p, &a).unwrap();
            prop_assert!((m.rmse * m.rmse - m.mse).abs() <= 1e-9 * m.mse.max(1.0));
            prop_assert!(m.mae <= m.rmse + 1e-9);
        }
    }
}
