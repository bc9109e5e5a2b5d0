//! Experiment orchestration: dataset, workload replay, policies and reports.

pub mod config;
pub mod dataset;
pub mod sim;

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::time::Duration;

pub use config::{ExperimentConfig, Policy, WorkloadKind};
pub use dataset::{generate_dataset, ingest_csv, ingest_reader, Dataset, IngestOptions, SyntheticSpec};
pub use sim::{build_patterns, coverage_profile, load_dataset, Prepared};

use crate::forecast::{Metrics, MetricsRow};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occupancy {
    pub tick: u64,
    pub cloud: u64,
    pub edge: u64,
}

/// Forecast accuracy over every cluster and origin at one horizon, next to
/// the last-value baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledForecast {
    pub horizon: usize,
    pub origins: usize,
    pub ensemble: Metrics,
    pub naive: Metrics,
}

/// Outcome of one policy at one capacity. Counts cover queries issued after
/// the warm-up.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub policy: Policy,
    pub capacity: u64,
    pub queries: u64,
    pub hits: u64,
    pub misses: u64,
    pub summarized_misses: u64,
    pub served_cloud: u64,
    pub served_edge: u64,
    pub preheat_actions: u64,
    pub demote_actions: u64,
    pub summarize_actions: u64,
    /// Ensemble fits and predictions.
    pub forecast_calls: u64,
    /// Misra-Gries table updates and frequency lookups.
    pub frequent_calls: u64,
    pub peak_cloud: u64,
    pub peak_edge: u64,
    pub occupancy: Vec<Occupancy>,
    pub forecast_rows: Vec<MetricsRow>,
    pub forecast_pooled: Vec<PooledForecast>,
    pub runtime: Duration,
}

impl RunReport {
    pub fn new(policy: Policy, capacity: u64) -> Self {
        RunReport {
            policy,
            capacity,
            queries: 0,
            hits: 0,
            misses: 0,
            summarized_misses: 0,
            served_cloud: 0,
            served_edge: 0,
            preheat_actions: 0,
            demote_actions: 0,
            summarize_actions: 0,
            forecast_calls: 0,
            frequent_calls: 0,
            peak_cloud: 0,
            peak_edge: 0,
            occupancy: Vec::new(),
            forecast_rows: Vec::new(),
            forecast_pooled: Vec::new(),
            runtime: Duration::ZERO,
        }
    }

    pub fn hit_rate(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.hits as f64 / self.queries as f64
        }
    }

    /// `(metric, value)` rows in report order. Runtime is left out so that
    /// reports are reproducible byte for byte.
    pub fn metrics(&self) -> Vec<(String, String)> {
        let mut rows: Vec<(String, String)> = vec![("hit_rate".into(), format!("{:.6}", self.hit_rate()))];
        for (name, v) in [
            ("queries", self.queries),
            ("hits", self.hits),
            ("misses", self.misses),
            ("summarized_misses", self.summarized_misses),
            ("served_cloud", self.served_cloud),
            ("served_edge", self.served_edge),
            ("preheat_actions", self.preheat_actions),
            ("demote_actions", self.demote_actions),
            ("summarize_actions", self.summarize_actions),
            ("forecast_calls", self.forecast_calls),
            ("frequent_calls", self.frequent_calls),
            ("peak_cloud", self.peak_cloud),
            ("peak_edge", self.peak_edge),
        ] {
            rows.push((name.into(), v.to_string()));
        }
        for p in &self.forecast_pooled {
            rows.push((
                format!("forecast_rmse_h{}", p.horizon),
                format!("{:.6}", p.ensemble.rmse),
            ));
            rows.push((format!("naive_rmse_h{}", p.horizon), format!("{:.6}", p.naive.rmse)));
        }
        rows
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub runs: Vec<RunReport>,
}

impl ExperimentReport {
    /// CSV `policy,capacity,metric,value`, one row per metric of every run.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Encoding(e.to_string());
        w.write_record(["policy", "capacity", "metric", "value"])
            .map_err(csv_err)?;
        for r in &self.runs {
            for (metric, value) in r.metrics() {
                w.write_record([r.policy.name(), &r.capacity.to_string(), &metric, &value])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV is UTF-8"))
    }

    /// Human-readable summary, one block per run.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.runs {
            let _ = writeln!(
                s,
                "{:<22} capacity {:>8}  hit rate {:.4} ({} / {} queries)  runtime {:.2?}",
                r.policy.name(),
                r.capacity,
                r.hit_rate(),
                r.hits,
                r.queries,
                r.runtime
            );
            let _ = writeln!(
                s,
                "{:<22} served CLOUD {} EDGE {}  summarized misses {}  preheat {} demote {} summarize {}",
                "",
                r.served_cloud,
                r.served_edge,
                r.summarized_misses,
                r.preheat_actions,
                r.demote_actions,
                r.summarize_actions
            );
            for p in &r.forecast_pooled {
                let _ = writeln!(
                    s,
                    "{:<22} horizon {:>4}: ensemble RMSE {:.4}  naive RMSE {:.4}  ({} origins)",
                    "", p.horizon, p.ensemble.rmse, p.naive.rmse, p.origins
                );
            }
        }
        s
    }
}

/// Rows of a report CSV: `(policy, capacity, metric, value)`.
pub type ReportRow = (String, u64, String, String);

pub fn read_report_csv<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["policy", "capacity", "metric", "value"] {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header policy,capacity,metric,value".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let capacity = rec[1].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad capacity `{}`", &rec[1]),
        })?;
        rows.push((rec[0].to_string(), capacity, rec[2].to_string(), rec[3].to_string()));
    }
    Ok(rows)
}

/// Summary of a report CSV: hit rate per policy and capacity.
pub fn summarize_report_rows(rows: &[ReportRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<22} {:>10} {:>10} {:>10}",
        "policy", "capacity", "hit_rate", "queries"
    );
    let find = |p: &str, c: u64, m: &str| {
        rows.iter()
            .find(|r| r.0 == p && r.1 == c && r.2 == m)
            .map_or("-", |r| r.3.as_str())
    };
    let mut seen: Vec<(&str, u64)> = Vec::new();
    for r in rows {
        if !seen.contains(&(r.0.as_str(), r.1)) {
            seen.push((r.0.as_str(), r.1));
        }
    }
    for (p, c) in seen {
        let _ = writeln!(
            s,
            "{:<22} {:>10} {:>10} {:>10}",
            p,
            c,
            find(p, c, "hit_rate"),
            find(p, c, "queries")
        );
    }
    s
}

/// Runs the configured policy at the configured capacity.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let prep = Prepared::new(config)?;
    prep.run(config.policy, prep.default_capacity(), None)
}

/// One report per capacity and policy, capacities run in parallel on the
/// shared dataset and workload.
pub fn sweep(prep: &Prepared, capacities: &[u64], policies: &[Policy]) -> Result<ExperimentReport> {
    if capacities.is_empty() || capacities.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "sweep capacities must be non-empty and strictly increasing".into(),
        ));
    }
    let jobs: Vec<(Policy, u64)> = policies
        .iter()
        .flat_map(|&p| capacities.iter().map(move |&c| (p, c)))
        .collect();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len())
        .max(1);
    let mut results: Vec<Option<Result<RunReport>>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<Vec<usize>> = (0..workers)
            .map(|w| (w..jobs.len()).step_by(workers).collect())
            .collect();
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|idx| {
                let jobs = &jobs;
                scope.spawn(move || {
                    idx.into_iter()
                        .map(|i| (i, prep.run(jobs[i].0, jobs[i].1, None)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let runs = results
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport { runs })
}

/// Writes `report.csv`, `forecast_metrics.csv`, `plan.log` and
/// `occupancy.csv` for one run into `dir`.
pub fn write_run_outputs(dir: &std::path::Path, report: &RunReport, plan_log: &[u8]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let experiment = ExperimentReport {
        runs: vec![report.clone()],
    };
    experiment.write_csv(std::fs::File::create(dir.join("report.csv"))?)?;
    crate::forecast::write_metrics_csv(
        std::fs::File::create(dir.join("forecast_metrics.csv"))?,
        &report.forecast_rows,
    )?;
    std::fs::write(dir.join("plan.log"), plan_log)?;
    let mut occ = String::from("tick,cloud,edge\n");
    for o in &report.occupancy {
        let _ = writeln!(occ, "{},{},{}", o.tick, o.cloud, o.edge);
    }
    std::fs::write(dir.join("occupancy.csv"), occ)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.apply_text(
            "dataset_series = 4\ndataset_points = 2000\ndataset_days = 6\nsim_days = 4\nwarmup_days = 2\n\
             templates_per_kind = 1\nlag = 24\ntrain_days = 1\nlstm_epochs = 1\ndtw_window = 64\n\
             horizons = 1,6,12\ndurations = 3600,21600\n",
        )
        .unwrap();
        c.validate().unwrap();
        c
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(
            ExperimentReport::default().to_csv().unwrap(),
            "policy,capacity,metric,value\n"
        );
    }

    #[test]
    fn report_rows_per_run() {
        let runs = [Policy::Title, Policy::Lru]
            .into_iter()
            .flat_map(|p| [10, 20, 30].into_iter().map(move |c| RunReport::new(p, c)))
            .collect();
        let csv = ExperimentReport { runs }.to_csv().unwrap();
        assert_eq!(csv.lines().filter(|l| l.contains(",hit_rate,")).count(), 6);
        let rows = read_report_csv(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), csv.lines().count() - 1);
        assert!(summarize_report_rows(&rows).contains("TITLE"));
    }

    #[test]
    fn sweep_rejects_unordered_capacities() {
        let prep = Prepared::new(&small_config()).unwrap();
        assert!(sweep(&prep, &[5, 5], &[Policy::Lru]).unwrap_err().is_config());
        assert!(sweep(&prep, &[], &[Policy::Lru]).is_err());
        let one = sweep(&prep, &[50], &[Policy::Lru]).unwrap();
        assert_eq!(one.runs.len(), 1);
    }

    #[test]
    fn zero_capacity_never_hits() {
        let prep = Prepared::new(&small_config()).unwrap();
        for p in Policy::ALL {
            let r = prep.run(p, 0, None).unwrap();
            assert!(r.queries > 0);
            assert_eq!(r.hits, 0, "{p}");
            assert_eq!(r.hits + r.misses, r.queries);
        }
    }

    #[test]
    fn baselines_never_touch_forecasting_or_mining() {
        let prep = Prepared::new(&small_config()).unwrap();
        let cap = prep.default_capacity();
        for p in [Policy::Title, Policy::Lru] {
            let r = prep.run(p, cap, None).unwrap();
            assert_eq!((r.forecast_calls, r.frequent_calls), (0, 0), "{p}");
        }
        let r = prep.run(Policy::NoForecast, cap, None).unwrap();
        assert_eq!(r.forecast_calls, 0);
        assert!(r.frequent_calls > 0);
        let r = prep.run(Policy::TsCabinet, cap, None).unwrap();
        assert!(r.forecast_calls > 0 && r.frequent_calls > 0);
    }

    #[test]
    fn action_counts_match_plan_log() {
        let prep = Prepared::new(&small_config()).unwrap();
        let cap = prep.default_capacity();
        for p in Policy::ALL {
            let mut log = Vec::new();
            let r = prep.run(p, cap, Some(&mut log)).unwrap();
            let text = String::from_utf8(log).unwrap();
            let count = |a: &str| text.lines().filter(|l| l.split(',').nth(1) == Some(a)).count() as u64;
            assert_eq!(count("PREHEAT"), r.preheat_actions, "{p}");
            assert_eq!(count("DEMOTE"), r.demote_actions, "{p}");
            assert_eq!(count("SUMMARIZE"), r.summarize_actions, "{p}");
            assert!(r.hit_rate() >= 0.0 && r.hit_rate() <= 1.0);
        }
    }

    #[test]
    fn everything_fits_means_almost_every_query_hits() {
        let c = small_config();
        let prep = Prepared::new(&c).unwrap();
        let r = prep.run(Policy::Lru, prep.dataset_points * 2, None).unwrap();
        assert!(r.hit_rate() > 0.8, "{}", r.hit_rate());
    }
}
