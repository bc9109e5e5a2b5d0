//! Tier placement of (series, time-bucket) segments across CLOUD, EDGE and
//! END: preheating, demotion, over-cooled summarization and hit lookup.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::frequent::bucket_of;
use crate::temperature::{HeatThresholds, HeatingModel, TemperatureParams, TemperatureRecord};
use crate::workload::Query;
use crate::{Error, Result, SeriesId, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tier {
    Cloud,
    Edge,
    /// Tier of record; always holds every segment, raw or summarized.
    End,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::Cloud => "CLOUD",
            Tier::Edge => "EDGE",
            Tier::End => "END",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Subset of the two cache tiers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TierSet(u8);

impl TierSet {
    pub const EMPTY: TierSet = TierSet(0);
    pub const CLOUD: TierSet = TierSet(1);
    pub const EDGE: TierSet = TierSet(2);
    pub const BOTH: TierSet = TierSet(3);

    pub fn of(tier: Tier) -> TierSet {
        match tier {
            Tier::Cloud => Self::CLOUD,
            Tier::Edge => Self::EDGE,
            Tier::End => Self::EMPTY,
        }
    }

    pub fn contains(self, tier: Tier) -> bool {
        let bit = Self::of(tier).0;
        bit != 0 && self.0 & bit == bit
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: TierSet) -> TierSet {
        TierSet(self.0 | other.0)
    }

    pub fn minus(self, other: TierSet) -> TierSet {
        TierSet(self.0 & !other.0)
    }

    pub fn intersects(self, other: TierSet) -> bool {
        self.0 & other.0 != 0
    }

    /// CLOUD before EDGE.
    pub fn tiers(self) -> impl Iterator<Item = Tier> {
        [Tier::Cloud, Tier::Edge].into_iter().filter(move |&t| self.contains(t))
    }
}

impl fmt::Display for TierSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.tiers().map(Tier::name).collect();
        f.write_str(&names.join("|"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentKey {
    pub series: SeriesId,
    pub bucket: i64,
}

impl fmt::Display for SegmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "series {} bucket {}", self.series, self.bucket)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub ts: Timestamp,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub first: f64,
    pub last: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSummary {
    pub series: SeriesId,
    pub bucket: i64,
    pub count: u64,
    pub first_ts: Timestamp,
    pub last_ts: Timestamp,
    /// One entry per field, in the points' field order.
    pub fields: Vec<FieldSummary>,
}

/// Exact aggregate of a segment's raw points (taken in time order).
pub fn summarize_overcooled(key: SegmentKey, points: &[Point]) -> Result<DataSummary> {
    let Some(first) = points.first() else {
        return Err(Error::invalid(format!("cannot summarize empty segment ({key})")));
    };
    let width = first.values.len();
    if points.iter().any(|p| p.values.len() != width) {
        return Err(Error::invalid(format!("ragged field counts in segment ({key})")));
    }
    let mut ordered: Vec<&Point> = points.iter().collect();
    ordered.sort_by_key(|p| p.ts);
    let n = ordered.len() as f64;
    let fields = (0..width)
        .map(|f| {
            let mut s = FieldSummary {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                mean: 0.0,
                first: ordered[0].values[f],
                last: ordered[ordered.len() - 1].values[f],
            };
            for p in &ordered {
                let v = p.values[f];
                s.min = s.min.min(v);
                s.max = s.max.max(v);
                s.mean += v;
            }
            s.mean /= n;
            s
        })
        .collect();
    Ok(DataSummary {
        series: key.series,
        bucket: key.bucket,
        count: ordered.len() as u64,
        first_ts: ordered[0].ts,
        last_ts: ordered[ordered.len() - 1].ts,
        fields,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentData {
    Raw(Vec<Point>),
    Summary(DataSummary),
}

/// The END tier: every segment of every series, raw or summarized.
#[derive(Debug, Clone, Default)]
pub struct EndStore {
    bucket_len: i64,
    series: BTreeMap<SeriesId, BTreeMap<i64, SegmentData>>,
}

impl EndStore {
    pub fn new(bucket_len: i64) -> Result<Self> {
        if bucket_len <= 0 {
            return Err(Error::invalid("segment bucket length must be > 0"));
        }
        Ok(EndStore {
            bucket_len,
            series: BTreeMap::new(),
        })
    }

    pub fn bucket_len(&self) -> i64 {
        self.bucket_len
    }

    pub fn insert(&mut self, series: SeriesId, point: Point) {
        let bucket = bucket_of(point.ts, self.bucket_len);
        let segment = self
            .series
            .entry(series)
            .or_default()
            .entry(bucket)
            .or_insert_with(|| SegmentData::Raw(Vec::new()));
        match segment {
            SegmentData::Raw(points) => points.push(point),
            // Late data for a summarized segment folds into nothing raw; keep
            // the summary authoritative.
            SegmentData::Summary(_) => {}
        }
    }

    pub fn series_ids(&self) -> impl Iterator<Item = SeriesId> + '_ {
        self.series.keys().copied()
    }

    pub fn series_count(&self) -> usize {
        self.series.len()
    }

    pub fn segment(&self, key: SegmentKey) -> Option<&SegmentData> {
        self.series.get(&key.series)?.get(&key.bucket)
    }

    /// Raw point count; 0 for summarized or missing segments.
    pub fn raw_points(&self, key: SegmentKey) -> u64 {
        match self.segment(key) {
            Some(SegmentData::Raw(p)) => p.len() as u64,
            _ => 0,
        }
    }

    pub fn is_summarized(&self, key: SegmentKey) -> bool {
        matches!(self.segment(key), Some(SegmentData::Summary(_)))
    }

    /// Raw points over all segments.
    pub fn total_points(&self) -> u64 {
        self.series
            .values()
            .flat_map(|m| m.values())
            .map(|s| match s {
                SegmentData::Raw(p) => p.len() as u64,
                SegmentData::Summary(_) => 0,
            })
            .sum()
    }

    /// Points held, raw or summarized, per series.
    pub fn point_counts(&self) -> BTreeMap<SeriesId, u64> {
        self.series
            .iter()
            .map(|(&id, m)| {
                let n = m
                    .values()
                    .map(|s| match s {
                        SegmentData::Raw(p) => p.len() as u64,
                        SegmentData::Summary(d) => d.count,
                    })
                    .sum();
                (id, n)
            })
            .collect()
    }

    pub fn segment_count(&self) -> usize {
        self.series.values().map(BTreeMap::len).sum()
    }

    /// Existing segments of `series` whose buckets fall in `[lo, hi]`.
    pub fn segments_between(&self, series: SeriesId, lo: i64, hi: i64) -> impl Iterator<Item = SegmentKey> + '_ {
        self.series
            .get(&series)
            .into_iter()
            .flat_map(move |m| m.range(lo..=hi).map(move |(&bucket, _)| SegmentKey { series, bucket }))
    }

    /// Every existing segment a query touches, ordered by series then bucket.
    pub fn segments_for(&self, query: &Query) -> Vec<SegmentKey> {
        let lo = bucket_of(query.t_start, self.bucket_len);
        let hi = bucket_of(query.t_end, self.bucket_len);
        let mut series = query.series.clone();
        series.sort();
        series.dedup();
        series
            .into_iter()
            .flat_map(|s| self.segments_between(s, lo, hi))
            .collect()
    }

    /// Replaces raw points with their summary. Returns false when the segment
    /// was already summarized.
    pub fn summarize(&mut self, key: SegmentKey) -> Result<bool> {
        let seg = self
            .series
            .get_mut(&key.series)
            .and_then(|m| m.get_mut(&key.bucket))
            .ok_or_else(|| Error::invalid(format!("no segment ({key})")))?;
        match seg {
            SegmentData::Summary(_) => Ok(false),
            SegmentData::Raw(points) => {
                let summary = summarize_overcooled(key, points)?;
                *seg = SegmentData::Summary(summary);
                Ok(true)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TierCapacities {
    /// Maximum resident points.
    pub cloud: u64,
    pub edge: u64,
}

impl TierCapacities {
    /// Splits a total hot capacity, the extra point going to EDGE.
    pub fn split(total: u64) -> Self {
        TierCapacities {
            cloud: total / 2,
            edge: total - total / 2,
        }
    }

    pub fn of(&self, tier: Tier) -> u64 {
        match tier {
            Tier::Cloud => self.cloud,
            Tier::Edge => self.edge,
            Tier::End => u64::MAX,
        }
    }

    pub fn total(&self) -> u64 {
        self.cloud + self.edge
    }
}

/// Which segments the cache tiers currently hold.
#[derive(Debug, Clone)]
pub struct Placement {
    capacities: TierCapacities,
    version: u64,
    resident: HashMap<SegmentKey, (TierSet, u64)>,
    cloud_used: u64,
    edge_used: u64,
}

impl Placement {
    pub fn new(capacities: TierCapacities) -> Self {
        Placement {
            capacities,
            version: 0,
            resident: HashMap::new(),
            cloud_used: 0,
            edge_used: 0,
        }
    }

    pub fn capacities(&self) -> TierCapacities {
        self.capacities
    }

    /// Bumped by every change; plans carry the version they were made against.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn tiers_of(&self, key: SegmentKey) -> TierSet {
        self.resident.get(&key).map_or(TierSet::EMPTY, |r| r.0)
    }

    pub fn occupancy(&self, tier: Tier) -> u64 {
        match tier {
            Tier::Cloud => self.cloud_used,
            Tier::Edge => self.edge_used,
            Tier::End => 0,
        }
    }

    pub fn resident_segments(&self) -> usize {
        self.resident.len()
    }

    /// Resident segments in key order.
    pub fn residents(&self) -> Vec<(SegmentKey, TierSet, u64)> {
        let mut v: Vec<_> = self.resident.iter().map(|(&k, &(t, n))| (k, t, n)).collect();
        v.sort_by_key(|e| e.0);
        v
    }

    fn used_mut(&mut self, tier: Tier) -> &mut u64 {
        match tier {
            Tier::Cloud => &mut self.cloud_used,
            Tier::Edge => &mut self.edge_used,
            Tier::End => unreachable!("END is not a cache tier"),
        }
    }

    /// Places one copy directly (on-demand caching). Fails without change if
    /// the tier is full or already holds the segment.
    pub fn admit(&mut self, key: SegmentKey, tier: Tier, points: u64) -> Result<()> {
        if tier == Tier::End {
            return Err(Error::invalid("END holds every segment already"));
        }
        let current = self.tiers_of(key);
        if current.contains(tier) {
            return Err(Error::Planning(format!("({key}) is already on {tier}")));
        }
        if self.occupancy(tier) + points > self.capacities.of(tier) {
            return Err(Error::Planning(format!("{tier} has no room for ({key})")));
        }
        *self.used_mut(tier) += points;
        self.resident.insert(key, (current.union(TierSet::of(tier)), points));
        self.version += 1;
        Ok(())
    }

    /// Drops every cached copy of `key`; returns the tiers vacated.
    pub fn evict(&mut self, key: SegmentKey) -> TierSet {
        let Some((tiers, points)) = self.resident.remove(&key) else {
            return TierSet::EMPTY;
        };
        for t in tiers.tiers() {
            *self.used_mut(t) -= points;
        }
        self.version += 1;
        tiers
    }
}

/// Predicted temperature at the end of each forecast window, iterating the
/// heating recurrence with `predicted_accesses[i]` accesses in window `i`.
/// Accesses already pending on the record count toward the first window.
pub fn predict_future_temperature(
    record: &TemperatureRecord,
    predicted_accesses: &[f64],
    params: &TemperatureParams,
) -> Result<Vec<f64>> {
    if predicted_accesses.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::invalid("predicted accesses must be >= 0"));
    }
    let mut t = record.temperature;
    let mut pending = f64::from(record.pending_accesses);
    Ok(predicted_accesses
        .iter()
        .map(|&s| {
            t = HeatingModel::IntervalAware.step(t, s + pending, params);
            pending = 0.0;
            t
        })
        .collect())
}

/// Everything the planner knows about one tracked segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutlook {
    pub key: SegmentKey,
    pub current: f64,
    /// Predicted temperature per future window; empty without forecasting.
    pub predicted: Vec<f64>,
}

impl SegmentOutlook {
    pub fn peak(&self) -> f64 {
        self.predicted.iter().copied().fold(self.current, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct PlanRequest<'a> {
    /// Tracked segments. Residents missing here count as cold.
    pub outlooks: &'a [SegmentOutlook],
    /// Misra-Gries counters by bucket; `None` disables the frequency gate.
    pub frequent: Option<&'a HashMap<i64, u64>>,
    /// Points that may be copied onto cache tiers this round.
    pub preheat_budget: u64,
    pub thresholds: HeatThresholds,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MigrationPlan {
    pub base_version: u64,
    /// Copies to create, highest-ranked segment first.
    pub preheat: Vec<(SegmentKey, TierSet)>,
    /// Copies to drop.
    pub demote: Vec<(SegmentKey, TierSet)>,
    pub summarize: Vec<SegmentKey>,
}

impl MigrationPlan {
    pub fn is_empty(&self) -> bool {
        self.preheat.is_empty() && self.demote.is_empty() && self.summarize.is_empty()
    }

    /// Plan-log lines `tick,action,series,bucket,tiers`.
    pub fn log_lines(&self, tick: u64) -> Vec<String> {
        let mut out = Vec::with_capacity(self.preheat.len() + self.demote.len() + self.summarize.len());
        for (k, t) in &self.demote {
            out.push(format!("{tick},DEMOTE,{},{},{t}", k.series, k.bucket));
        }
        for (k, t) in &self.preheat {
            out.push(format!("{tick},PREHEAT,{},{},{t}", k.series, k.bucket));
        }
        for k in &self.summarize {
            out.push(format!("{tick},SUMMARIZE,{},{},END", k.series, k.bucket));
        }
        out
    }
}

/// Builds the next placement. Hot candidates (current or predicted
/// temperature at least `thresholds.hot`, bucket frequent when the gate is
/// on) are ranked by predicted peak, then Misra-Gries counter, then series
/// and bucket. In rank order each gets one copy (its current tier if
/// possible, else EDGE, else CLOUD) while capacity and budget last; a second
/// pass replicates admitted segments onto the other tier where room remains.
/// Residents outside the admitted set are demoted. Tracked segments below
/// `thresholds.overcooled` are queued for summarization.
pub fn plan_migration(placement: &Placement, store: &EndStore, request: &PlanRequest<'_>) -> Result<MigrationPlan> {
    request.thresholds.validate()?;
    let caps = placement.capacities();
    if caps.total() == 0 || request.preheat_budget == 0 {
        return Err(Error::invalid("tier capacity and preheat budget must be > 0"));
    }
    let largest = caps.cloud.max(caps.edge);
    let counter = |k: &SegmentKey| request.frequent.and_then(|f| f.get(&k.bucket).copied()).unwrap_or(0);

    let mut candidates: Vec<(&SegmentOutlook, f64, u64, u64)> = Vec::new();
    for o in request.outlooks {
        let peak = o.peak();
        if !(peak >= request.thresholds.hot) {
            continue;
        }
        let c = counter(&o.key);
        if request.frequent.is_some() && c == 0 {
            continue;
        }
        let points = store.raw_points(o.key);
        if points == 0 {
            continue;
        }
        if points > largest {
            return Err(Error::Planning(format!(
                "segment ({}) holds {points} points, more than any tier can hold ({largest})",
                o.key
            )));
        }
        candidates.push((o, peak, c, points));
    }
    candidates.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.key.cmp(&b.0.key)));

    let mut room = [caps.cloud, caps.edge];
    let slot = |t: Tier| if t == Tier::Cloud { 0 } else { 1 };
    let mut budget = request.preheat_budget;
    let mut target: Vec<(SegmentKey, TierSet, TierSet, u64)> = Vec::new();
    for &(o, _, _, points) in &candidates {
        let current = placement.tiers_of(o.key);
        let keep = [Tier::Edge, Tier::Cloud]
            .into_iter()
            .find(|&t| current.contains(t) && room[slot(t)] >= points);
        let tier = match keep {
            Some(t) => t,
            None => {
                let Some(t) = [Tier::Edge, Tier::Cloud].into_iter().find(|&t| room[slot(t)] >= points) else {
                    continue;
                };
                if budget < points {
                    continue;
                }
                budget -= points;
                t
            }
        };
        room[slot(tier)] -= points;
        target.push((o.key, current, TierSet::of(tier), points));
    }
    for (_, current, tiers, points) in &mut target {
        let other = if tiers.contains(Tier::Edge) {
            Tier::Cloud
        } else {
            Tier::Edge
        };
        if room[slot(other)] < *points {
            continue;
        }
        if !current.contains(other) {
            if budget < *points {
                continue;
            }
            budget -= *points;
        }
        room[slot(other)] -= *points;
        *tiers = tiers.union(TierSet::of(other));
    }

    let admitted: HashMap<SegmentKey, TierSet> = target.iter().map(|&(k, _, t, _)| (k, t)).collect();
    let mut demote: Vec<(SegmentKey, TierSet)> = placement
        .residents()
        .into_iter()
        .filter_map(|(k, cur, _)| {
            let drop = cur.minus(admitted.get(&k).copied().unwrap_or(TierSet::EMPTY));
            (!drop.is_empty()).then_some((k, drop))
        })
        .collect();
    demote.sort_by_key(|d| d.0);
    let preheat = target
        .iter()
        .filter_map(|&(k, cur, t, _)| {
            let add = t.minus(cur);
            (!add.is_empty()).then_some((k, add))
        })
        .collect();
    let mut summarize: Vec<SegmentKey> = request
        .outlooks
        .iter()
        .filter(|o| o.current < request.thresholds.overcooled && store.raw_points(o.key) > 0)
        .map(|o| o.key)
        .collect();
    summarize.sort();
    Ok(MigrationPlan {
        base_version: placement.version(),
        preheat,
        demote,
        summarize,
    })
}

/// Applies a plan atomically: demotions, then preheats, then summaries. The
/// plan is checked in full before anything changes.
pub fn apply_plan(placement: &mut Placement, store: &mut EndStore, plan: &MigrationPlan) -> Result<()> {
    if plan.base_version != placement.version() {
        return Err(Error::Conflict {
            planned: plan.base_version,
            current: placement.version(),
        });
    }
    if plan.is_empty() {
        return Ok(());
    }
    let mut used = [placement.cloud_used as i128, placement.edge_used as i128];
    let slot = |t: Tier| if t == Tier::Cloud { 0 } else { 1 };
    let mut after: HashMap<SegmentKey, TierSet> = HashMap::new();
    for &(k, tiers) in &plan.demote {
        let cur = *after.get(&k).unwrap_or(&placement.tiers_of(k));
        if tiers.is_empty() || !tiers.minus(cur).is_empty() {
            return Err(Error::Planning(format!(
                "demotion of ({k}) from {tiers}, which it is not on"
            )));
        }
        let points = placement.resident.get(&k).map_or(0, |r| r.1) as i128;
        for t in tiers.tiers() {
            used[slot(t)] -= points;
        }
        after.insert(k, cur.minus(tiers));
    }
    for &(k, tiers) in &plan.preheat {
        let cur = *after.get(&k).unwrap_or(&placement.tiers_of(k));
        if cur.intersects(tiers) {
            return Err(Error::Planning(format!(
                "preheat of ({k}) onto {tiers}, which already holds it"
            )));
        }
        let points = store.raw_points(k);
        if points == 0 {
            return Err(Error::Planning(format!("preheat of ({k}), which has no raw data")));
        }
        for t in tiers.tiers() {
            used[slot(t)] += points as i128;
        }
        after.insert(k, cur.union(tiers));
    }
    let caps = placement.capacities();
    if used[0] > caps.cloud as i128 || used[1] > caps.edge as i128 {
        return Err(Error::Planning(format!(
            "plan would fill CLOUD to {} / {} and EDGE to {} / {}",
            used[0], caps.cloud, used[1], caps.edge
        )));
    }
    for k in &plan.summarize {
        if store.segment(*k).is_none() {
            return Err(Error::Planning(format!("summary of unknown segment ({k})")));
        }
    }

    for (k, tiers) in after {
        let points = placement
            .resident
            .get(&k)
            .map(|r| r.1)
            .unwrap_or_else(|| store.raw_points(k));
        if tiers.is_empty() {
            placement.resident.remove(&k);
        } else {
            placement.resident.insert(k, (tiers, points));
        }
    }
    placement.cloud_used = used[0] as u64;
    placement.edge_used = used[1] as u64;
    for k in &plan.summarize {
        store.summarize(*k)?;
    }
    placement.version += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LookupResult {
    pub hit: bool,
    /// CLOUD or EDGE on a hit, END on a miss.
    pub tier: Tier,
    /// The miss involved at least one summarized, uncached segment.
    pub summarized: bool,
    pub segments: usize,
}

/// All-or-nothing: a hit needs every touched segment cached. Served from
/// CLOUD when CLOUD holds all of them, otherwise from EDGE. A query touching
/// no data is a miss.
pub fn lookup(placement: &Placement, store: &EndStore, query: &Query) -> LookupResult {
    lookup_segments(placement, store, &store.segments_for(query))
}

pub fn lookup_segments(placement: &Placement, store: &EndStore, segments: &[SegmentKey]) -> LookupResult {
    let mut all_cloud = true;
    let mut covered = true;
    let mut summarized = false;
    for &k in segments {
        let tiers = placement.tiers_of(k);
        if tiers.is_empty() {
            covered = false;
            summarized |= store.is_summarized(k);
        }
        all_cloud &= tiers.contains(Tier::Cloud);
    }
    let hit = covered && !segments.is_empty();
    LookupResult {
        hit,
        tier: match (hit, all_cloud) {
            (false, _) => Tier::End,
            (true, true) => Tier::Cloud,
            (true, false) => Tier::Edge,
        },
        summarized: !hit && summarized,
        segments: segments.len(),
    }
}
