use std::fmt::Write as _;

use super::linear::{fit_linear, LinearModel};
use super::lstm::{train_lstm, LstmModel};
use super::ForecastConfig;
use crate::{Error, Result};

const SNAPSHOT_HEADER: &str = "thermotier-ensemble v1";

/// Normalized inverse-error weights `(w_lin, w_lstm)`: the model with the
/// smaller validation error gets the larger weight. A zero-error model takes
/// all the weight; two zero errors split evenly.
pub fn compute_weights(e_lin: f64, e_lstm: f64) -> Result<(f64, f64)> {
    if !(e_lin >= 0.0 && e_lstm >= 0.0) || !e_lin.is_finite() || !e_lstm.is_finite() {
        return Err(Error::invalid(format!(
            "errors must be finite and >= 0, got ({e_lin}, {e_lstm})"
        )));
    }
    Ok(match (e_lin == 0.0, e_lstm == 0.0) {
        (true, true) => (0.5, 0.5),
        (true, false) => (1.0, 0.0),
        (false, true) => (0.0, 1.0),
        // (1/a) / (1/a + 1/b) = b / (a + b)
        (false, false) => {
            let w_lin = e_lstm / (e_lin + e_lstm);
            (w_lin, 1.0 - w_lin)
        }
    })
}

/// Element-wise weighted sum, clamped at zero.
pub fn combine(weights: (f64, f64), linear: &[f64], lstm: &[f64]) -> Vec<f64> {
    linear
        .iter()
        .zip(lstm)
        .map(|(a, b)| (weights.0 * a + weights.1 * b).max(0.0))
        .collect()
}

/// An LSTM plus the standardization of its training split.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmForecaster {
    pub model: LstmModel,
    pub mean: f64,
    pub std: f64,
    /// Trailing values used to warm up the hidden state before forecasting.
    pub context: usize,
}

impl LstmForecaster {
    pub fn fit(train: &[f64], config: &ForecastConfig) -> Result<Self> {
        let n = train.len().max(1) as f64;
        let mean = train.iter().sum::<f64>() / n;
        let var = train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = if var > 1e-12 { var.sqrt() } else { 1.0 };
        let scaled: Vec<f64> = train.iter().map(|v| (v - mean) / std).collect();
        let init = LstmModel::init(config.hidden, config.train.seed);
        let model = train_lstm(&init, &scaled, &config.train)?;
        Ok(LstmForecaster {
            model,
            mean,
            std,
            context: 4 * config.train.window,
        })
    }

    fn scale(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn forecast(&self, history: &[f64], steps: usize) -> Vec<f64> {
        let tail = &history[history.len().saturating_sub(self.context)..];
        let scaled: Vec<f64> = tail.iter().map(|&v| self.scale(v)).collect();
        self.model
            .forecast(&scaled, steps)
            .into_iter()
            .map(|v| v * self.std + self.mean)
            .collect()
    }

    /// One-step-ahead predictions for `series[from..]`, each conditioned on
    /// everything before it.
    pub fn one_step(&self, series: &[f64], from: usize) -> Vec<f64> {
        let scaled: Vec<f64> = series[..series.len() - 1].iter().map(|&v| self.scale(v)).collect();
        let (outputs, _) = self.model.forward(&scaled);
        outputs[from - 1..].iter().map(|v| v * self.std + self.mean).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub linear: LinearModel,
    pub lstm: LstmForecaster,
    /// `(w_lin, w_lstm)`, summing to 1.
    pub weights: (f64, f64),
    /// Validation sums of squared errors that produced the weights.
    pub errors: (f64, f64),
}

/// Fits both members on the leading part of `history` and weights them by
/// one-step-ahead squared error on the held-out tail.
pub fn fit_ensemble(history: &[f64], config: &ForecastConfig) -> Result<EnsembleModel> {
    config.validate()?;
    let split = ((history.len() as f64) * (1.0 - config.validation_fraction)).floor() as usize;
    if split <= config.lag || split == history.len() {
        return Err(Error::invalid(format!(
            "history of {} values leaves no room for lag {} and a validation slice",
            history.len(),
            config.lag
        )));
    }
    let train = &history[..split];
    let linear = fit_linear(train, config.lag)?;
    let lstm = LstmForecaster::fit(train, config)?;
    let e_lin: f64 = (split..history.len())
        .map(|t| (linear.predict_next(&history[..t]) - history[t]).powi(2))
        .sum();
    let e_lstm: f64 = lstm
        .one_step(history, split)
        .iter()
        .zip(&history[split..])
        .map(|(p, y)| (p - y).powi(2))
        .sum();
    let weights = compute_weights(e_lin, e_lstm).map_err(|e| Error::Training(format!("validation error: {e}")))?;
    Ok(EnsembleModel {
        linear,
        lstm,
        weights,
        errors: (e_lin, e_lstm),
    })
}

/// Weighted combination of the members' autoregressive forecasts; each
/// member feeds back its own predictions.
pub fn ensemble_predict(model: &EnsembleModel, history: &[f64], steps: usize) -> Vec<f64> {
    let lin = model.linear.forecast(history, steps);
    let lstm = if model.weights.1 == 0.0 {
        vec![0.0; steps]
    } else {
        model.lstm.forecast(history, steps)
    };
    combine(model.weights, &lin, &lstm)
}

impl EnsembleModel {
    /// Versioned text snapshot; every number is written so that it parses
    /// back bit-exactly.
    pub fn to_snapshot(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{SNAPSHOT_HEADER}");
        let _ = writeln!(s, "weights {} {}", self.weights.0, self.weights.1);
        let _ = writeln!(s, "errors {} {}", self.errors.0, self.errors.1);
        let ridge = self.linear.ridge.map_or("none".to_string(), |r| r.to_string());
        let _ = writeln!(s, "linear {} {} {}", self.linear.lag(), ridge, self.linear.intercept);
        let _ = writeln!(s, "{}", join(&self.linear.coefficients));
        let _ = writeln!(
            s,
            "lstm {} {} {} {}",
            self.lstm.model.hidden(),
            self.lstm.mean,
            self.lstm.std,
            self.lstm.context
        );
        for (name, rows, cols, values) in self.lstm.model.blocks() {
            let _ = writeln!(s, "{name} {rows} {cols}");
            for row in values.chunks(cols) {
                let _ = writeln!(s, "{}", join(row));
            }
        }
        s
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l.split_whitespace().collect()))
                .ok_or_else(|| Error::Encoding(format!("snapshot ends before {what}")))
        };
        let bad = |line: usize, msg: &str| Error::Encoding(format!("snapshot line {line}: {msg}"));
        let num = |line: usize, tok: &str| {
            tok.parse::<f64>()
                .map_err(|_| bad(line, &format!("bad number {tok:?}")))
        };
        let int = |line: usize, tok: &str| {
            tok.parse::<usize>()
                .map_err(|_| bad(line, &format!("bad integer {tok:?}")))
        };

        let (l, header) = next("header")?;
        if header.join(" ") != SNAPSHOT_HEADER {
            return Err(bad(l, "unknown snapshot version"));
        }
        let mut pair = |tag: &str| -> Result<(f64, f64)> {
            let (l, t) = next(tag)?;
            if t.len() != 3 || t[0] != tag {
                return Err(bad(l, &format!("expected `{tag} a b`")));
            }
            Ok((num(l, t[1])?, num(l, t[2])?))
        };
        let weights = pair("weights")?;
        let errors = pair("errors")?;

        let (l, t) = next("linear")?;
        if t.len() != 4 || t[0] != "linear" {
            return Err(bad(l, "expected `linear lag ridge intercept`"));
        }
        let lag = int(l, t[1])?;
        let ridge = if t[2] == "none" { None } else { Some(num(l, t[2])?) };
        let intercept = num(l, t[3])?;
        let (l, t) = next("linear coefficients")?;
        let coefficients = t.iter().map(|x| num(l, x)).collect::<Result<Vec<_>>>()?;
        if coefficients.len() != lag {
            return Err(bad(l, "coefficient count does not match lag"));
        }

        let (l, t) = next("lstm")?;
        if t.len() != 5 || t[0] != "lstm" {
            return Err(bad(l, "expected `lstm hidden mean std context`"));
        }
        let hidden = int(l, t[1])?;
        let (mean, std, context) = (num(l, t[2])?, num(l, t[3])?, int(l, t[4])?);
        let mut params = Vec::new();
        for expected in LstmModel::zeros(hidden.max(1)).blocks().map(|b| (b.0, b.1, b.2)) {
            let (l, t) = next(expected.0)?;
            if t.len() != 3 || t[0] != expected.0 || int(l, t[1])? != expected.1 || int(l, t[2])? != expected.2 {
                return Err(bad(
                    l,
                    &format!("expected block `{} {} {}`", expected.0, expected.1, expected.2),
                ));
            }
            for _ in 0..expected.1 {
                let (l, t) = next("matrix row")?;
                if t.len() != expected.2 {
                    return Err(bad(l, "row length does not match shape"));
                }
                for x in t {
                    params.push(num(l, x)?);
                }
            }
        }
        let model = LstmModel::from_params(hidden, params)?;
        Ok(EnsembleModel {
            linear: LinearModel {
                intercept,
                coefficients,
                ridge,
            },
            lstm: LstmForecaster {
                model,
                mean,
                std,
                context,
            },
            weights,
            errors,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::lstm::TrainConfig;
    use proptest::prelude::*;

    fn small_model(weights: (f64, f64)) -> EnsembleModel {
        EnsembleModel {
            linear: LinearModel {
                intercept: 1.0,
                coefficients: vec![0.5],
                ridge: None,
            },
            lstm: LstmForecaster {
                model: LstmModel::init(2, 3),
                mean: 4.0,
                std: 2.0,
                context: 8,
            },
            weights,
            errors: (1.0, 3.0),
        }
    }

    #[test]
    fn weight_examples() {
        assert_eq!(compute_weights(2.0, 2.0).unwrap(), (0.5, 0.5));
        let (a, b) = compute_weights(1.0, 3.0).unwrap();
        assert!((a - 0.75).abs() < 1e-15 && (b - 0.25).abs() < 1e-15);
        assert_eq!(compute_weights(0.0, 5.0).unwrap(), (1.0, 0.0));
        assert_eq!(compute_weights(0.0, 0.0).unwrap(), (0.5, 0.5));
        assert!(compute_weights(-1.0, 1.0).is_err());
    }

    #[test]
    fn combination_examples() {
        assert_eq!(combine((0.5, 0.5), &[4.0], &[6.0]), vec![5.0]);
        assert_eq!(combine((0.5, 0.5), &[-4.0], &[1.0]), vec![0.0]);
    }

    #[test]
    fn degenerate_weights_follow_linear() {
        let m = small_model((1.0, 0.0));
        let h = [2.0, 3.0, 4.0];
        let expected: Vec<f64> = m.linear.forecast(&h, 5).into_iter().map(|v| v.max(0.0)).collect();
        assert_eq!(ensemble_predict(&m, &h, 5), expected);
    }

    #[test]
    fn snapshot_round_trip() {
        let m = small_model((0.75, 0.25));
        let text = m.to_snapshot();
        assert!(text.starts_with(SNAPSHOT_HEADER));
        let back = EnsembleModel::from_snapshot(&text).unwrap();
        assert_eq!(back, m);
        assert!(EnsembleModel::from_snapshot(&text.replace("v1", "v9")).is_err());
        let truncated: String = text.lines().take(12).collect::<Vec<_>>().join("\n");
        assert!(EnsembleModel::from_snapshot(&truncated).is_err());
    }

    #[test]
    fn fitted_ensemble_prefers_better_member() {
        let period = 24;
        let series: Vec<f64> = (0..12 * period)
            .map(|t| if t % period < 4 { 30.0 } else { 3.0 })
            .collect();
        let cfg = ForecastConfig {
            lag: period,
            hidden: 4,
            train: TrainConfig {
                epochs: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        let m = fit_ensemble(&series, &cfg).unwrap();
        assert!(m.errors.0 < m.errors.1, "{:?}", m.errors);
        assert!(m.weights.0 > m.weights.1);
        assert!((m.weights.0 + m.weights.1 - 1.0).abs() < 1e-12);
        let f = ensemble_predict(&m, &series, period);
        assert!(f.iter().all(|&v| v >= 0.0));
    }

    proptest! {
        #[test]
        fn weights_are_a_distribution(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            let (wa, wb) = compute_weights(a, b).unwrap();
            prop_assert!((0.0..=1.0).contains(&wa) && (0.0..=1.0).contains(&wb));
            prop_assert!((wa + wb - 1.0).abs() < 1e-12);
            if a < b { prop_assert!(wa > wb); }
            if b < a { prop_assert!(wb > wa); }
        }

        #[test]
        fn combination_is_linear(w in 0.0f64..1.0, xs in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..20)) {
            let (lin, lstm): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
            let out = combine((w, 1.0 - w), &lin, &lstm);
            for i in 0..out.len() {
                prop_assert!((out[i] - (w * lin[i] + (1.0 - w) * lstm[i])).abs() < 1e-12);
            }
        }
    }
}
