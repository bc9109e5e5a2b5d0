//! The tick-by-tick experiment loop.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, Policy, WorkloadKind};
use super::dataset::{generate_dataset, ingest_csv, Dataset, IngestOptions, SyntheticSpec};
use super::{Occupancy, PooledForecast, RunReport};
use crate::cluster::{cluster_arrival_series, ClusterId, Clustering, ClusteringParams, TemplateCatalog, TemplateKey};
use crate::forecast::{ensemble_predict, fit_ensemble, metrics, EnsembleModel, MetricsRow};
use crate::frequent::{bucket_of, expand_query_to_timestamps, CounterTable};
use crate::scheduler::{
    apply_plan, lookup_segments, plan_migration, predict_future_temperature, EndStore, Placement, PlanRequest,
    SegmentKey, SegmentOutlook, Tier, TierCapacities,
};
use crate::temperature::{HeatingModel, TemperatureRecord};
use crate::workload::{
    build_template_summary, generate, ArrivalPattern, GeneratorConfig, PeakWindow, Query, QueryTemplate, TimeDomain,
};
use crate::{Error, Result, SeriesId, Timestamp};

const DAY: i64 = 86_400;
/// Occupancy is sampled every this many ticks.
const OCCUPANCY_STRIDE: usize = 12;
/// Cap on how often one predicted bucket is fed to the predicted-frequency
/// table per tick.
const MAX_PREDICTED_REPEATS: f64 = 16.0;

pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.dataset {
        Some(path) => ingest_csv(path, &IngestOptions::default()),
        None => generate_dataset(&SyntheticSpec {
            series: config.dataset_series,
            points_per_series: config.dataset_points,
            start: config.dataset_start,
            days: config.dataset_days,
            seed: config.seed,
        }),
    }
}

/// One arrival pattern per template. Cyclic templates peak once a day at a
/// template-specific time of day.
pub fn build_patterns(
    config: &ExperimentConfig,
    templates: &[QueryTemplate],
    sim_start: Timestamp,
    horizon: i64,
) -> Result<Vec<ArrivalPattern>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_0FC7_C1E5);
    let step = config.temperature.window;
    let cycle = |rng: &mut ChaCha8Rng| ArrivalPattern::Cycles {
        period: DAY,
        peaks: vec![PeakWindow {
            offset: rng.gen_range(0..DAY / step) * step,
            width: config.peak_width,
            rate: config.peak_rate,
        }],
        base_rate: config.base_rate,
    };
    match config.workload {
        WorkloadKind::Cycles => Ok(templates.iter().map(|_| cycle(&mut rng)).collect()),
        WorkloadKind::Mixed => Ok(templates
            .iter()
            .map(|_| match rng.gen_range(0..4) {
                0 => cycle(&mut rng),
                1 => ArrivalPattern::Stability {
                    rate: config.peak_rate / 4.0,
                },
                2 => ArrivalPattern::Spike {
                    center: sim_start + rng.gen_range(0..horizon.max(1)),
                    peak_rate: config.peak_rate,
                    decay: 1.0 / config.peak_width as f64,
                },
                _ => ArrivalPattern::Chaos {
                    seed: rng.gen(),
                    max_rate: config.peak_rate,
                },
            })
            .collect()),
    }
}

/// Dataset, store and workload shared by every run of one configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub store: EndStore,
    pub dataset_points: u64,
    pub templates: Vec<QueryTemplate>,
    pub queries: Vec<Query>,
    pub sim_start: Timestamp,
    pub ticks: usize,
    pub warmup_ticks: usize,
}

impl Prepared {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dataset = load_dataset(config)?;
        Self::from_dataset(config, &dataset)
    }

    pub fn from_dataset(config: &ExperimentConfig, dataset: &Dataset) -> Result<Self> {
        let w = config.temperature.window;
        let domain = dataset
            .domain()
            .ok_or_else(|| Error::Config("dataset has no points".into()))?;
        let horizon = i64::from(config.sim_days) * DAY;
        let sim_end = (domain.end.div_euclid(w) + 1) * w;
        let sim_start = sim_end - horizon;
        if sim_start < domain.start {
            return Err(Error::Config(format!(
                "sim_days = {} reaches before the first data point",
                config.sim_days
            )));
        }
        let store = dataset.to_end_store(w)?;
        let templates = build_template_summary(&dataset.schema, config.templates_per_kind, config.seed)?;
        let patterns = build_patterns(config, &templates, sim_start, horizon)?;
        let mut gen = GeneratorConfig::new(sim_start, horizon);
        gen.interval = w;
        gen.durations = config.durations.clone();
        let queries = generate(
            &templates,
            &patterns,
            &gen,
            TimeDomain {
                start: domain.start,
                end: domain.end,
            },
            config.seed,
        )?;
        Ok(Prepared {
            config: config.clone(),
            dataset_points: store.total_points(),
            store,
            templates,
            queries,
            sim_start,
            ticks: (horizon / w) as usize,
            warmup_ticks: (i64::from(config.warmup_days) * DAY / w) as usize,
        })
    }

    /// Capacity from the config: explicit, or a fraction of the dataset.
    pub fn default_capacity(&self) -> u64 {
        self.config
            .capacity
            .unwrap_or_else(|| (self.config.capacity_fraction * self.dataset_points as f64).round() as u64)
    }

    /// Simulates one policy at one total capacity. Plan-log lines go to
    /// `plan_log` when given.
    pub fn run(&self, policy: Policy, capacity: u64, plan_log: Option<&mut dyn Write>) -> Result<RunReport> {
        let started = Instant::now();
        let mut sim = Simulation::new(self, policy, capacity, plan_log);
        for tick in 0..self.ticks {
            sim.tick(tick).map_err(|e| e.at_tick(tick as u64))?;
        }
        let mut report = sim.finish()?;
        report.runtime = started.elapsed();
        Ok(report)
    }
}

/// On-demand caching with least-recently-used eviction across both tiers.
#[derive(Debug, Default)]
struct Lru {
    clock: u64,
    order: BTreeMap<u64, SegmentKey>,
    stamp: HashMap<SegmentKey, u64>,
}

impl Lru {
    fn touch(&mut self, key: SegmentKey) {
        self.clock += 1;
        if let Some(old) = self.stamp.insert(key, self.clock) {
            self.order.remove(&old);
        }
        self.order.insert(self.clock, key);
    }
}

/// A forecast kept for scoring once its actuals are known.
#[derive(Debug)]
struct PendingEval {
    cluster: ClusterId,
    origin: usize,
    members: Vec<TemplateKey>,
    predicted: Vec<f64>,
    naive: f64,
}

/// Workload forecasting state of the full policy.
struct Forecasting {
    catalog: TemplateCatalog,
    clustering: Clustering,
    params: ClusteringParams,
    models: BTreeMap<ClusterId, EnsembleModel>,
    last_train: Option<usize>,
    observed: BTreeSet<TemplateKey>,
    profiles: HashMap<TemplateKey, Vec<f64>>,
    evals: Vec<PendingEval>,
}

/// Predicted accesses of existing segments, one row of `steps` values per
/// segment, keys in ascending order.
#[derive(Default)]
struct Predicted {
    steps: usize,
    keys: Vec<SegmentKey>,
    values: Vec<f64>,
}

impl Predicted {
    fn get(&self, key: SegmentKey) -> Option<&[f64]> {
        let i = self.keys.binary_search(&key).ok()?;
        Some(&self.values[i * self.steps..(i + 1) * self.steps])
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.steps..(i + 1) * self.steps]
    }
}

struct Simulation<'a, 'w> {
    prep: &'a Prepared,
    policy: Policy,
    capacity: u64,
    budget: u64,
    heating: HeatingModel,
    store: EndStore,
    placement: Placement,
    records: HashMap<SegmentKey, TemperatureRecord>,
    next_query: usize,
    observed_now: Option<CounterTable>,
    observed_prev: Option<CounterTable>,
    forecasting: Option<Forecasting>,
    predicted: Predicted,
    lru: Option<Lru>,
    plan_log: Option<&'w mut dyn Write>,
    report: RunReport,
}

impl<'a, 'w> Simulation<'a, 'w> {
    fn new(prep: &'a Prepared, policy: Policy, capacity: u64, plan_log: Option<&'w mut dyn Write>) -> Self {
        let c = &prep.config;
        let heating = match policy {
            Policy::Title => match c.title_per_access {
                Some(per_access) => HeatingModel::Constant { per_access },
                None => HeatingModel::constant_for(&c.temperature),
            },
            _ => HeatingModel::IntervalAware,
        };
        let mining = matches!(policy, Policy::TsCabinet | Policy::NoForecast);
        let table = || CounterTable::new(c.frequent_k).expect("validated capacity");
        let forecasting = (policy == Policy::TsCabinet).then(|| Forecasting {
            catalog: TemplateCatalog::new(prep.sim_start, c.temperature.window, c.record_capacity),
            clustering: Clustering::new(),
            params: ClusteringParams {
                rho: c.cluster_rho,
                window: c.dtw_window,
                timeout: c.cluster_timeout,
            },
            models: BTreeMap::new(),
            last_train: None,
            observed: BTreeSet::new(),
            profiles: HashMap::new(),
            evals: Vec::new(),
        });
        Simulation {
            prep,
            policy,
            capacity,
            budget: c.preheat_budget.unwrap_or(capacity).max(1),
            heating,
            store: prep.store.clone(),
            placement: Placement::new(TierCapacities::split(capacity)),
            records: HashMap::new(),
            next_query: 0,
            observed_now: mining.then(table),
            observed_prev: mining.then(table),
            forecasting,
            predicted: Predicted::default(),
            lru: (policy == Policy::Lru).then(Lru::default),
            plan_log,
            report: RunReport::new(policy, capacity),
        }
    }

    fn window(&self) -> i64 {
        self.prep.config.temperature.window
    }

    fn log(&mut self, lines: &[String]) -> Result<()> {
        if let Some(out) = self.plan_log.as_mut() {
            for l in lines {
                writeln!(out, "{l}")?;
            }
        }
        Ok(())
    }

    fn tick(&mut self, tick: usize) -> Result<()> {
        let w = self.window();
        let tick_start = self.prep.sim_start + tick as i64 * w;
        let tick_end = tick_start + w;
        let scored = tick >= self.prep.warmup_ticks;
        while self.next_query < self.prep.queries.len() && self.prep.queries[self.next_query].issue_ts < tick_end {
            let q = &self.prep.queries[self.next_query];
            self.next_query += 1;
            self.serve(q, tick, tick_start, scored)?;
        }

        let params = self.prep.config.temperature;
        for r in self.records.values_mut() {
            *r = self.heating.update(r, tick_end, &params)?;
        }
        let th = self.prep.config.thresholds;
        let store = &self.store;
        self.records.retain(|k, r| {
            !(r.temperature < th.hot
                && (th.overcooled == 0.0 || (r.temperature < th.overcooled && store.raw_points(*k) == 0)))
        });

        let closed = tick + 1;
        let per_day = (DAY / w) as usize;
        if closed.is_multiple_of(per_day) {
            if let (Some(now), Some(prev)) = (self.observed_now.as_mut(), self.observed_prev.as_mut()) {
                *prev = std::mem::replace(now, CounterTable::new(self.prep.config.frequent_k)?);
            }
        }
        let mut predicted_table = None;
        if self.forecasting.is_some() {
            predicted_table = Some(self.forecast(closed, tick_end)?);
        }

        if self.capacity > 0 && self.lru.is_none() {
            self.plan(tick, predicted_table.as_ref())?;
        }
        if tick.is_multiple_of(OCCUPANCY_STRIDE) {
            self.report.occupancy.push(Occupancy {
                tick: tick as u64,
                cloud: self.placement.occupancy(Tier::Cloud),
                edge: self.placement.occupancy(Tier::Edge),
            });
        }
        Ok(())
    }

    fn serve(&mut self, q: &Query, tick: usize, tick_start: Timestamp, scored: bool) -> Result<()> {
        let keys = self.store.segments_for(q);
        let result = lookup_segments(&self.placement, &self.store, &keys);
        if scored {
            let r = &mut self.report;
            r.queries += 1;
            if result.hit {
                r.hits += 1;
                match result.tier {
                    Tier::Cloud => r.served_cloud += 1,
                    _ => r.served_edge += 1,
                }
            } else {
                r.misses += 1;
                r.summarized_misses += u64::from(result.summarized);
            }
        }
        for &k in &keys {
            let rec = self.records.entry(k).or_insert(TemperatureRecord {
                last_query_ts: tick_start,
                temperature: 0.0,
                pending_accesses: 0,
                tracked: true,
            });
            rec.pending_accesses += 1;
        }
        if let Some(table) = self.observed_now.as_mut() {
            self.report.frequent_calls += 1;
            for b in expand_query_to_timestamps(q, self.store.bucket_len())? {
                table.process(b);
            }
        }
        if let Some(f) = self.forecasting.as_mut() {
            let key = f.catalog.observe(q);
            f.observed.insert(key);
        }
        if self.lru.is_some() && self.capacity > 0 {
            self.lru_access(&keys, tick)?;
        }
        Ok(())
    }

    fn lru_access(&mut self, keys: &[SegmentKey], tick: usize) -> Result<()> {
        let caps = self.placement.capacities();
        let largest = caps.cloud.max(caps.edge);
        let mut lines = Vec::new();
        let lru = self.lru.as_mut().expect("LRU policy");
        for &k in keys {
            if !self.placement.tiers_of(k).is_empty() {
                lru.touch(k);
                continue;
            }
            let points = self.store.raw_points(k);
            if points == 0 || points > largest {
                continue;
            }
            loop {
                let room = |t: Tier| self.placement.occupancy(t) + points <= caps.of(t);
                if let Some(t) = [Tier::Edge, Tier::Cloud].into_iter().find(|&t| room(t)) {
                    self.placement.admit(k, t, points)?;
                    lru.touch(k);
                    self.report.preheat_actions += 1;
                    lines.push(format!("{tick},PREHEAT,{},{},{t}", k.series, k.bucket));
                    break;
                }
                let Some((_, victim)) = lru.order.pop_first() else {
                    break;
                };
                lru.stamp.remove(&victim);
                let tiers = self.placement.evict(victim);
                self.report.demote_actions += 1;
                lines.push(format!("{tick},DEMOTE,{},{},{tiers}", victim.series, victim.bucket));
            }
        }
        self.log(&lines)
    }

    /// Advances clustering and models, then predicts per-segment accesses over
    /// the planning horizon. Returns the predicted-frequency table.
    fn forecast(&mut self, closed: usize, now: Timestamp) -> Result<CounterTable> {
        let c = &self.prep.config;
        let w = c.temperature.window;
        let per_day = (DAY / w) as usize;
        let h = c.plan_horizon;
        let lag = c.forecast.lag;
        let f = self.forecasting.as_mut().expect("forecasting policy");
        f.catalog.close_intervals(closed);
        let observed = std::mem::take(&mut f.observed);
        {
            let hist = f.catalog.histories();
            for &k in &observed {
                if f.clustering.cluster_of(k).is_some() {
                    f.clustering.touch(k, now);
                } else {
                    f.clustering.assign(k, &hist, &f.params, now);
                }
            }
            if closed.is_multiple_of(per_day) {
                f.clustering.rebalance(&hist, &f.params, now);
                f.clustering.evict_stale(f.params.timeout, now);
            }
        }
        for k in &observed {
            let e = f.catalog.entry(*k);
            f.profiles.insert(*k, coverage_profile(e.records.iter().copied(), w));
        }
        let live: BTreeSet<ClusterId> = f.clustering.clusters().map(|c| c.id).collect();
        f.models.retain(|id, _| live.contains(id));

        let hist = f.catalog.histories();
        let train_len = closed.min(c.train_days as usize * per_day);
        let split = (train_len as f64 * (1.0 - c.forecast.validation_fraction)).floor() as usize;
        // At least as many regression rows as lag coefficients.
        let trainable = split >= 2 * lag && split < train_len;
        let retrain = trainable && f.last_train.is_none_or(|t| closed - t >= c.retrain_every);
        if retrain {
            f.last_train = Some(closed);
        }
        let mut series: BTreeMap<ClusterId, Vec<f64>> = BTreeMap::new();
        for cl in f.clustering.clusters() {
            let counts = cluster_arrival_series(cl, &hist)?.counts;
            series.insert(cl.id, counts.iter().map(|&v| v as f64).collect());
        }
        for (id, s) in &series {
            if trainable && (retrain || !f.models.contains_key(id)) {
                let model = fit_ensemble(&s[s.len() - train_len..], &c.forecast)?;
                self.report.forecast_calls += 1;
                f.models.insert(*id, model);
            }
        }

        let eval = closed.is_multiple_of(c.eval_stride);
        let max_h = c.forecast.max_horizon();
        let steps = if eval { h.max(max_h) } else { h };
        let nb = bucket_of(now, w);
        let mut template_rates: Vec<(TemplateKey, Vec<f64>)> = Vec::new();
        for cl in f.clustering.clusters() {
            let Some(model) = f.models.get(&cl.id) else { continue };
            let s = &series[&cl.id];
            let forecast = ensemble_predict(model, s, steps);
            self.report.forecast_calls += 1;
            if eval {
                f.evals.push(PendingEval {
                    cluster: cl.id,
                    origin: closed,
                    members: cl.members.iter().copied().collect(),
                    predicted: forecast[..max_h].to_vec(),
                    naive: s.last().copied().unwrap_or(0.0),
                });
            }
            let members: Vec<TemplateKey> = cl.members.iter().copied().collect();
            let recent_total: f64 = s[s.len().saturating_sub(lag)..].iter().sum();
            for &m in &members {
                let counts = &hist[&m].counts;
                let at = |t: usize| counts.get(t).copied().unwrap_or(0) as f64;
                let recent: f64 = (closed.saturating_sub(lag)..closed).map(at).sum();
                let rates = (0..h)
                    .map(|j| {
                        let share = match (closed + j).checked_sub(lag) {
                            Some(t) if s.get(t).is_some_and(|&v| v > 0.0) => at(t) / s[t],
                            _ if recent_total > 0.0 => recent / recent_total,
                            _ => 1.0 / members.len() as f64,
                        };
                        forecast[j] * share
                    })
                    .collect::<Vec<f64>>();
                if rates.iter().any(|&r| r > 0.0) {
                    template_rates.push((m, rates));
                }
            }
        }

        // Dense accumulation over buckets [lo, nb) of every predicted series.
        let reach = template_rates
            .iter()
            .filter_map(|(m, _)| f.profiles.get(m).map(Vec::len))
            .max()
            .unwrap_or(0) as i64;
        let lo = nb - reach;
        let mut dense: BTreeMap<SeriesId, Vec<f64>> = BTreeMap::new();
        for (m, rates) in &template_rates {
            let Some(cov) = f.profiles.get(m) else { continue };
            for &series_id in &f.catalog.entry(*m).canonical.series {
                let grid = dense.entry(series_id).or_insert_with(|| vec![0.0; reach as usize * h]);
                for (d, &p) in cov.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    // Window j touches bucket nb + j - d.
                    for (j, r) in rates.iter().enumerate() {
                        let b = nb + j as i64 - d as i64;
                        if b < nb && b >= lo {
                            grid[(b - lo) as usize * h + j] += r * p;
                        }
                    }
                }
            }
        }
        let predicted = &mut self.predicted;
        predicted.steps = h;
        predicted.keys.clear();
        predicted.values.clear();
        let mut per_bucket = vec![0.0; reach as usize];
        for (series_id, grid) in &dense {
            for k in self.store.segments_between(*series_id, lo, nb - 1) {
                let i = (k.bucket - lo) as usize;
                let row = &grid[i * h..(i + 1) * h];
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    predicted.keys.push(k);
                    predicted.values.extend_from_slice(row);
                    per_bucket[i] += total;
                }
            }
        }
        let mut table = CounterTable::new(c.frequent_k)?;
        self.report.frequent_calls += 1;
        for (i, total) in per_bucket.into_iter().enumerate() {
            if total <= 0.0 {
                continue;
            }
            for _ in 0..total.round().clamp(1.0, MAX_PREDICTED_REPEATS) as usize {
                table.process(lo + i as i64);
            }
        }
        Ok(table)
    }

    fn plan(&mut self, tick: usize, predicted_table: Option<&CounterTable>) -> Result<()> {
        let c = &self.prep.config;
        let th = c.thresholds;
        let params = c.temperature;
        let mut outlooks: Vec<SegmentOutlook> = Vec::new();
        for (&key, r) in &self.records {
            if self.predicted.get(key).is_some() {
                continue;
            }
            if r.temperature >= th.hot || r.temperature < th.overcooled {
                outlooks.push(SegmentOutlook {
                    key,
                    current: r.temperature,
                    predicted: Vec::new(),
                });
            }
        }
        let cold = TemperatureRecord {
            last_query_ts: 0,
            temperature: 0.0,
            pending_accesses: 0,
            tracked: true,
        };
        for (i, &key) in self.predicted.keys.iter().enumerate() {
            let r = self.records.get(&key).unwrap_or(&cold);
            let o = SegmentOutlook {
                key,
                current: r.temperature,
                predicted: predict_future_temperature(r, self.predicted.row(i), &params)?,
            };
            if o.peak() >= th.hot || o.current < th.overcooled {
                outlooks.push(o);
            }
        }
        // The planner's ranking is a total order, so outlook order is free.

        let frequent = match self.policy {
            Policy::TsCabinet | Policy::NoForecast => {
                let mut map: HashMap<i64, u64> = HashMap::new();
                let tables = [self.observed_now.as_ref(), self.observed_prev.as_ref(), predicted_table];
                for t in tables.into_iter().flatten() {
                    for (b, n) in t.entries() {
                        *map.entry(b).or_default() += n;
                    }
                }
                self.report.frequent_calls += 1;
                Some(map)
            }
            _ => None,
        };
        let request = PlanRequest {
            outlooks: &outlooks,
            frequent: frequent.as_ref(),
            preheat_budget: self.budget,
            thresholds: th,
        };
        let plan = plan_migration(&self.placement, &self.store, &request)?;
        apply_plan(&mut self.placement, &mut self.store, &plan)?;
        self.report.preheat_actions += plan.preheat.len() as u64;
        self.report.demote_actions += plan.demote.len() as u64;
        self.report.summarize_actions += plan.summarize.len() as u64;
        if self.plan_log.is_some() && !plan.is_empty() {
            let lines = plan.log_lines(tick as u64);
            self.log(&lines)?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<RunReport> {
        self.report.peak_cloud = self.report.occupancy.iter().map(|o| o.cloud).max().unwrap_or(0);
        self.report.peak_edge = self.report.occupancy.iter().map(|o| o.edge).max().unwrap_or(0);
        if let Some(f) = self.forecasting.take() {
            let horizons = self.prep.config.forecast.horizons.clone();
            let (rows, pooled) = score_forecasts(&f, &horizons, self.prep.ticks)?;
            self.report.forecast_rows = rows;
            self.report.forecast_pooled = pooled;
        }
        Ok(self.report)
    }
}

/// Share of a template's recorded queries that touched the bucket `d`
/// buckets before the issue bucket, for every `d` up to the oldest reach.
pub fn coverage_profile(records: impl Iterator<Item = (i64, i64)>, bucket_len: i64) -> Vec<f64> {
    let mut cov: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for (a_end, a_start) in records {
        n += 1;
        let lo = a_end.max(0).div_euclid(bucket_len) as usize;
        let hi = (a_start.max(0) + bucket_len - 1).div_euclid(bucket_len) as usize;
        if cov.len() <= hi {
            cov.resize(hi + 1, 0.0);
        }
        for v in &mut cov[lo..=hi] {
            *v += 1.0;
        }
    }
    if n > 0 {
        for v in &mut cov {
            *v /= n as f64;
        }
    }
    cov
}

fn score_forecasts(
    f: &Forecasting,
    horizons: &[usize],
    closed: usize,
) -> Result<(Vec<MetricsRow>, Vec<PooledForecast>)> {
    let hist = f.catalog.histories();
    let mut by_cluster: BTreeMap<(u32, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut pooled: BTreeMap<usize, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for e in &f.evals {
        for &h in horizons {
            let t = e.origin + h - 1;
            if t >= closed {
                continue;
            }
            let actual: f64 = e
                .members
                .iter()
                .map(|m| hist.get(m).and_then(|x| x.counts.get(t)).copied().unwrap_or(0) as f64)
                .sum();
            let c = by_cluster.entry((e.cluster.0, h)).or_default();
            c.0.push(e.predicted[h - 1]);
            c.1.push(actual);
            let p = pooled.entry(h).or_default();
            p.0.push(e.predicted[h - 1]);
            p.1.push(e.naive);
            p.2.push(actual);
        }
    }
    let rows = by_cluster
        .into_iter()
        .map(|((cluster_id, horizon), (p, a))| {
            Ok(MetricsRow {
                cluster_id,
                horizon,
                metrics: metrics(&p, &a)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled = pooled
        .into_iter()
        .map(|(horizon, (p, n, a))| {
            Ok(PooledForecast {
                horizon,
                origins: a.len(),
                ensemble: metrics(&p, &a)?,
                naive: metrics(&n, &a)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, pooled))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coverage_profile_counts_reach() {
        // Ages (end, start): one query 0..600 s back, one 300..900 s back.
        let cov = coverage_profile([(0, 600), (300, 900)].into_iter(), 300);
        assert_eq!(cov, vec![0.5, 1.0, 1.0, 0.5]);
        assert!(coverage_profile(std::iter::empty(), 300).is_empty());
    }

    #[test]
    fn lru_order_tracks_recency() {
        let k = |b| SegmentKey {
            series: crate::SeriesId(0),
            bucket: b,
        };
        let mut lru = Lru::default();
        lru.touch(k(1));
        lru.touch(k(2));
        lru.touch(k(1));
        assert_eq!(lru.order.pop_first().unwrap().1, k(2));
        assert_eq!(lru.order.pop_first().unwrap().1, k(1));
    }
}
