//! Query template extraction and online clustering of templates by the DTW
//! distance between their arrival histories.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use crate::workload::{Comparison, Operator, Query, TemplateKind};
use crate::{Error, Result, SeriesId, Timestamp};

/// A query with its time bounds turned into placeholders and aggregation
/// stripped. Aggregate kinds fold into their plain counterparts (4 into 1,
/// 5 into 2) because they read the same data.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalTemplate {
    pub kind: TemplateKind,
    pub series: Vec<SeriesId>,
    /// Kept for threshold queries; the compared value is a placeholder.
    pub comparison: Option<Comparison>,
}

impl std::fmt::Display for CanonicalTemplate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let series: Vec<String> = self.series.iter().map(|s| s.0.to_string()).collect();
        write!(
            f,
            "kind{} series={} time>=? time<=?",
            self.kind.number(),
            series.join(";")
        )?;
        if let Some(c) = self.comparison {
            write!(f, " value {c:?} ?")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedTemplate {
    pub canonical: CanonicalTemplate,
    /// `(now - t_end, now - t_start)` in seconds.
    pub record: (i64, i64),
}

pub fn extract_template(query: &Query, now: Timestamp) -> ExtractedTemplate {
    let kind = match query.kind {
        TemplateKind::Aggregate => TemplateKind::SingleSeries,
        TemplateKind::Group => TemplateKind::MultiSeries,
        k => k,
    };
    let comparison = match query.operator {
        Some(Operator::Compare(c)) => Some(c),
        _ => None,
    };
    let mut series = query.series.clone();
    series.sort();
    series.dedup();
    ExtractedTemplate {
        canonical: CanonicalTemplate {
            kind,
            series,
            comparison,
        },
        record: ((now - query.t_end).max(0), (now - query.t_start).max(0)),
    }
}

/// Classic dynamic time warping with absolute-difference local cost and
/// match/insert/delete steps.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("DTW of an empty sequence"));
    }
    let mut prev = vec![f64::INFINITY; b.len() + 1];
    let mut curr = vec![f64::INFINITY; b.len() + 1];
    prev[0] = 0.0;
    for &x in a {
        curr[0] = f64::INFINITY;
        for (j, &y) in b.iter().enumerate() {
            let best = prev[j].min(prev[j + 1]).min(curr[j]);
            curr[j + 1] = (x - y).abs() + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[b.len()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalHistory {
    pub interval_len: i64,
    pub counts: Vec<u64>,
}

impl ArrivalHistory {
    pub fn new(interval_len: i64) -> Self {
        ArrivalHistory {
            interval_len,
            counts: Vec::new(),
        }
    }

    /// The last `window` counts (all of them if fewer), as reals.
    pub fn recent(&self, window: usize) -> Vec<f64> {
        let from = self.counts.len().saturating_sub(window);
        self.counts[from..].iter().map(|&c| c as f64).collect()
    }
}

/// Dense template handle, assigned in first-seen order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TemplateKey(pub u32);

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub canonical: CanonicalTemplate,
    pub history: ArrivalHistory,
    /// Most recent extraction records, oldest first.
    pub records: VecDeque<(i64, i64)>,
    pub last_seen: Timestamp,
}

/// Every template seen so far, with its per-interval arrival counts aligned to
/// a common start time.
#[derive(Debug, Clone)]
pub struct TemplateCatalog {
    start: Timestamp,
    interval_len: i64,
    record_capacity: usize,
    index: HashMap<CanonicalTemplate, TemplateKey>,
    entries: Vec<CatalogEntry>,
}

impl TemplateCatalog {
    pub fn new(start: Timestamp, interval_len: i64, record_capacity: usize) -> Self {
        TemplateCatalog {
            start,
            interval_len,
            record_capacity: record_capacity.max(1),
            index: HashMap::new(),
            entries: Vec::new(),
        }
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn interval_len(&self) -> i64 {
        self.interval_len
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, key: TemplateKey) -> &CatalogEntry {
        &self.entries[key.0 as usize]
    }

    pub fn entries(&self) -> impl Iterator<Item = (TemplateKey, &CatalogEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (TemplateKey(i as u32), e))
    }

    /// Extracts `query`'s template at its issue time and counts it.
    pub fn observe(&mut self, query: &Query) -> TemplateKey {
        let extracted = extract_template(query, query.issue_ts);
        let key = match self.index.get(&extracted.canonical) {
            Some(&k) => k,
            None => {
                let k = TemplateKey(self.entries.len() as u32);
                self.index.insert(extracted.canonical.clone(), k);
                self.entries.push(CatalogEntry {
                    canonical: extracted.canonical,
                    history: ArrivalHistory::new(self.interval_len),
                    records: VecDeque::new(),
                    last_seen: query.issue_ts,
                });
                k
            }
        };
        let idx = (query.issue_ts - self.start).div_euclid(self.interval_len).max(0) as usize;
        let entry = &mut self.entries[key.0 as usize];
        if entry.history.counts.len() <= idx {
            entry.history.counts.resize(idx + 1, 0);
        }
        entry.history.counts[idx] += 1;
        if entry.records.len() == self.record_capacity {
            entry.records.pop_front();
        }
        entry.records.push_back(extracted.record);
        entry.last_seen = entry.last_seen.max(query.issue_ts);
        key
    }

    /// Pads every history with zeros up to `intervals` elapsed intervals.
    pub fn close_intervals(&mut self, intervals: usize) {
        for e in &mut self.entries {
            if e.history.counts.len() < intervals {
                e.history.counts.resize(intervals, 0);
            }
        }
    }

    pub fn histories(&self) -> BTreeMap<TemplateKey, &ArrivalHistory> {
        self.entries().map(|(k, e)| (k, &e.history)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: ClusterId,
    /// Template whose arrival history is the cluster center.
    pub center: TemplateKey,
    pub members: BTreeSet<TemplateKey>,
    pub last_received: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteringParams {
    /// Join/leave threshold on DTW distance.
    pub rho: f64,
    /// Number of most recent intervals compared.
    pub window: usize,
    /// Clusters silent for longer than this are deleted.
    pub timeout: i64,
}

impl Default for ClusteringParams {
    fn default() -> Self {
        ClusteringParams {
            rho: 10.0,
            window: 64,
            timeout: 24 * 3600,
        }
    }
}

pub type Histories<'a> = BTreeMap<TemplateKey, &'a ArrivalHistory>;

#[derive(Debug, Clone, Default)]
pub struct Clustering {
    clusters: BTreeMap<ClusterId, Cluster>,
    membership: HashMap<TemplateKey, ClusterId>,
    next_id: u32,
}

impl Clustering {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.values()
    }

    pub fn get(&self, id: ClusterId) -> Option<&Cluster> {
        self.clusters.get(&id)
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn cluster_of(&self, key: TemplateKey) -> Option<ClusterId> {
        self.membership.get(&key).copied()
    }

    fn distance(histories: &Histories, a: TemplateKey, b: TemplateKey, window: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let x = histories[&a].recent(window);
        let y = histories[&b].recent(window);
        if x.is_empty() || y.is_empty() {
            // An empty history matches only another empty history.
            return if x.len() == y.len() { 0.0 } else { f64::INFINITY };
        }
        dtw_distance(&x, &y).expect("non-empty")
    }

    /// Places `key` in the nearest cluster whose center is closer than rho,
    /// or founds a new singleton cluster. Ties go to the lowest cluster id.
    pub fn assign(
        &mut self,
        key: TemplateKey,
        histories: &Histories,
        params: &ClusteringParams,
        now: Timestamp,
    ) -> ClusterId {
        if let Some(id) = self.cluster_of(key) {
            return id;
        }
        let nearest = self
            .clusters
            .values()
            .map(|c| (Self::distance(histories, key, c.center, params.window), c.id))
            .fold(None, |best: Option<(f64, ClusterId)>, (d, id)| match best {
                Some((bd, _)) if bd <= d => best,
                _ => Some((d, id)),
            });
        let id = match nearest {
            Some((d, id)) if d < params.rho => {
                let c = self.clusters.get_mut(&id).unwrap();
                c.members.insert(key);
                c.last_received = c.last_received.max(now);
                id
            }
            _ => {
                let id = ClusterId(self.next_id);
                self.next_id += 1;
                self.clusters.insert(
                    id,
                    Cluster {
                        id,
                        center: key,
                        members: BTreeSet::from([key]),
                        last_received: now,
                    },
                );
                id
            }
        };
        self.membership.insert(key, id);
        id
    }

    /// Records that a member of `key`'s cluster received a query.
    pub fn touch(&mut self, key: TemplateKey, now: Timestamp) {
        if let Some(id) = self.cluster_of(key) {
            let c = self.clusters.get_mut(&id).unwrap();
            c.last_received = c.last_received.max(now);
        }
    }

    fn remove_member(&mut self, id: ClusterId, key: TemplateKey) {
        self.membership.remove(&key);
        let c = self.clusters.get_mut(&id).unwrap();
        c.members.remove(&key);
        if c.members.is_empty() {
            self.clusters.remove(&id);
        }
    }

    /// Member minimizing the summed distance to the other members.
    fn medoid(members: &BTreeSet<TemplateKey>, histories: &Histories, window: usize) -> TemplateKey {
        members
            .iter()
            .map(|&m| {
                let total: f64 = members.iter().map(|&o| Self::distance(histories, m, o, window)).sum();
                (total, m)
            })
            .fold(None, |best: Option<(f64, TemplateKey)>, (t, m)| match best {
                Some((bt, _)) if bt <= t => best,
                _ => Some((t, m)),
            })
            .map(|(_, m)| m)
            .expect("non-empty cluster")
    }

    /// One re-check pass: members at distance >= rho from their center leave
    /// and are re-assigned. When the center is out of range of a strict
    /// majority of the other members, the center is the one that drifted: it
    /// leaves and the medoid of the rest becomes the center. With a single other
    /// member the center is kept and the member leaves.
    pub fn rebalance(&mut self, histories: &Histories, params: &ClusteringParams, now: Timestamp) {
        let ids: Vec<ClusterId> = self.clusters.keys().copied().collect();
        let mut drifted = Vec::new();
        for id in ids {
            let Some(cluster) = self.clusters.get(&id) else {
                continue;
            };
            let others: Vec<TemplateKey> = cluster
                .members
                .iter()
                .copied()
                .filter(|&m| m != cluster.center)
                .collect();
            let far = others
                .iter()
                .filter(|&&m| Self::distance(histories, m, cluster.center, params.window) >= params.rho)
                .count();
            if others.len() >= 2 && 2 * far > others.len() {
                let old_center = cluster.center;
                self.remove_member(id, old_center);
                let c = self.clusters.get_mut(&id).unwrap();
                c.center = Self::medoid(&c.members, histories, params.window);
                drifted.push(old_center);
            }
            let Some(cluster) = self.clusters.get(&id) else {
                continue;
            };
            let leaving: Vec<TemplateKey> = cluster
                .members
                .iter()
                .copied()
                .filter(|&m| Self::distance(histories, m, cluster.center, params.window) >= params.rho)
                .collect();
            for m in leaving {
                self.remove_member(id, m);
                drifted.push(m);
            }
        }
        for key in drifted {
            self.assign(key, histories, params, now);
        }
    }

    /// Deletes clusters that received nothing for longer than `timeout`. Their
    /// templates become unassigned; histories live on in the catalog.
    pub fn evict_stale(&mut self, timeout: i64, now: Timestamp) -> Vec<ClusterId> {
        let stale: Vec<ClusterId> = self
            .clusters
            .values()
            .filter(|c| c.last_received < now - timeout)
            .map(|c| c.id)
            .collect();
        for id in &stale {
            let c = self.clusters.remove(id).unwrap();
            for m in c.members {
                self.membership.remove(&m);
            }
        }
        stale
    }

    /// Text dump: `cluster_id,center,members,last_counts`, lists `;`-separated,
    /// last 32 counts of the cluster's summed arrival series.
    pub fn dump(&self, histories: &Histories) -> String {
        let mut out = String::new();
        for c in self.clusters.values() {
            let members: Vec<String> = c.members.iter().map(|m| m.0.to_string()).collect();
            let series = cluster_arrival_series(c, histories)
                .map(|h| h.counts)
                .unwrap_or_default();
            let tail: Vec<String> = series[series.len().saturating_sub(32)..]
                .iter()
                .map(u64::to_string)
                .collect();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                c.id.0,
                c.center.0,
                members.join(";"),
                tail.join(";")
            );
        }
        out
    }
}

/// Element-wise sum of the members' histories, aligned by interval index.
pub fn cluster_arrival_series(cluster: &Cluster, histories: &Histories) -> Result<ArrivalHistory> {
    let mut members = cluster.members.iter().map(|m| {
        histories
            .get(m)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no history for template {}", m.0)))
    });
    let first = members.next().ok_or_else(|| Error::invalid("empty cluster"))??;
    let mut sum = first.clone();
    for h in members {
        let h = h?;
        if h.interval_len != sum.interval_len {
            return Err(Error::invalid(format!(
                "interval lengths differ: {} vs {}",
                h.interval_len, sum.interval_len
            )));
        }
        if h.counts.len() > sum.counts.len() {
            sum.counts.resize(h.counts.len(), 0);
        }
        for (acc, &c) in sum.counts.iter_mut().zip(&h.counts) {
            *acc += c;
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{Aggregate, TemplateId};

    fn query(kind: TemplateKind, series: &[u32], op: Option<Operator>, t_start: i64, t_end: i64) -> Query {
        Query {
            template_id: TemplateId(0),
            kind,
            issue_ts: 1000,
            t_start,
            t_end,
            series: series.iter().map(|&s| SeriesId(s)).collect(),
            operator: op,
            threshold: None,
        }
    }

    fn history(counts: &[u64]) -> ArrivalHistory {
        ArrivalHistory {
            interval_len: 300,
            counts: counts.to_vec(),
        }
    }

    #[test]
    fn extraction_erases_time_and_aggregates() {
        let avg = query(
            TemplateKind::Aggregate,
            &[3],
            Some(Operator::Aggregate(Aggregate::Avg)),
            100,
            200,
        );
        let plain = query(TemplateKind::SingleSeries, &[3], None, 100, 200);
        assert_eq!(
            extract_template(&avg, 1000).canonical,
            extract_template(&plain, 1000).canonical
        );

        let other_range = query(TemplateKind::SingleSeries, &[3], None, 400, 900);
        let a = extract_template(&plain, 1000);
        let b = extract_template(&other_range, 1000);
        assert_eq!(a.canonical, b.canonical);
        assert_eq!(a.record, (800, 900));
        assert_eq!(b.record, (100, 600));

        let at_now = query(TemplateKind::SingleSeries, &[3], None, 0, 1000);
        assert_eq!(extract_template(&at_now, 1000).record.0, 0);
    }

    #[test]
    fn dtw_examples() {
        assert_eq!(dtw_distance(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(dtw_distance(&[4.0], &[1.5]).unwrap(), 2.5);
        assert_eq!(dtw_distance(&[1.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!(dtw_distance(&[], &[1.0]).is_err());
    }

    #[test]
    fn assign_creates_joins_and_splits() {
        let params = ClusteringParams {
            rho: 3.0,
            ..Default::default()
        };
        let h0 = history(&[0, 0, 0, 0]);
        let h1 = history(&[0, 0, 0, 0]);
        let h2 = history(&[5, 0, 0, 0]); // 5 from h0
        let h3 = history(&[9, 0, 0, 0]);
        let mut histories: Histories = BTreeMap::new();
        for (i, h) in [&h0, &h1, &h2, &h3].into_iter().enumerate() {
            histories.insert(TemplateKey(i as u32), h);
        }
        let mut c = Clustering::new();
        let first = c.assign(TemplateKey(0), &histories, &params, 0);
        assert_eq!(c.len(), 1);
        assert_eq!(c.assign(TemplateKey(1), &histories, &params, 0), first);
        let third = c.assign(TemplateKey(2), &histories, &params, 0);
        assert_ne!(third, first);
        // Distances 9 and 4 from the two centers, both >= 3.
        let fourth = c.assign(TemplateKey(3), &histories, &params, 0);
        assert_eq!(c.len(), 3);
        assert!(fourth != first && fourth != third);
    }

    #[test]
    fn rebalance_moves_drifted_member() {
        let params = ClusteringParams {
            rho: 3.0,
            ..Default::default()
        };
        let center = history(&[1, 1, 1]);
        let member = history(&[1, 1, 1]);
        let other = history(&[9, 9, 9]);
        let mut histories: Histories = BTreeMap::new();
        histories.insert(TemplateKey(0), &center);
        histories.insert(TemplateKey(1), &member);
        histories.insert(TemplateKey(2), &other);
        let mut c = Clustering::new();
        let a = c.assign(TemplateKey(0), &histories, &params, 0);
        c.assign(TemplateKey(1), &histories, &params, 0);
        let b = c.assign(TemplateKey(2), &histories, &params, 0);

        c.rebalance(&histories, &params, 0);
        assert_eq!(c.get(a).unwrap().members.len(), 2);

        let drifted = history(&[9, 9, 8]);
        histories.insert(TemplateKey(1), &drifted);
        c.rebalance(&histories, &params, 1);
        assert_eq!(c.cluster_of(TemplateKey(1)), Some(b));
        assert_eq!(c.get(a).unwrap().members, BTreeSet::from([TemplateKey(0)]));
    }

    #[test]
    fn rebalance_recenters_when_center_drifts() {
        let params = ClusteringParams {
            rho: 3.0,
            ..Default::default()
        };
        let base = [history(&[2, 2, 2]), history(&[2, 2, 2]), history(&[2, 2, 3])];
        let mut histories: Histories = BTreeMap::new();
        for (i, h) in base.iter().enumerate() {
            histories.insert(TemplateKey(i as u32), h);
        }
        let mut c = Clustering::new();
        for i in 0..3 {
            c.assign(TemplateKey(i), &histories, &params, 0);
        }
        assert_eq!(c.len(), 1);
        let gone = history(&[20, 20, 20]);
        histories.insert(TemplateKey(0), &gone);
        c.rebalance(&histories, &params, 1);
        let old = c.cluster_of(TemplateKey(1)).unwrap();
        let cluster = c.get(old).unwrap();
        assert_eq!(cluster.members, BTreeSet::from([TemplateKey(1), TemplateKey(2)]));
        assert_eq!(cluster.center, TemplateKey(1));
        assert_ne!(c.cluster_of(TemplateKey(0)), Some(old));
    }

    #[test]
    fn stale_clusters_are_evicted() {
        let params = ClusteringParams::default();
        let a = history(&[0]);
        let b = history(&[100]);
        let histories: Histories = BTreeMap::from([(TemplateKey(0), &a), (TemplateKey(1), &b)]);
        let mut c = Clustering::new();
        c.assign(TemplateKey(0), &histories, &params, 10_000 - 1);
        c.assign(TemplateKey(1), &histories, &params, 10_000 - 7200);
        let gone = c.evict_stale(3600, 10_000);
        assert_eq!(gone.len(), 1);
        assert_eq!(c.len(), 1);
        assert_eq!(c.cluster_of(TemplateKey(1)), None);
        assert!(c.cluster_of(TemplateKey(0)).is_some());
    }

    #[test]
    fn arrival_series_sums_members() {
        let a = history(&[1, 2, 3]);
        let b = history(&[0, 1, 0]);
        let histories: Histories = BTreeMap::from([(TemplateKey(0), &a), (TemplateKey(1), &b)]);
        let cluster = Cluster {
            id: ClusterId(0),
            center: TemplateKey(0),
            members: BTreeSet::from([TemplateKey(0), TemplateKey(1)]),
            last_received: 0,
        };
        assert_eq!(
            cluster_arrival_series(&cluster, &histories).unwrap().counts,
            vec![1, 3, 3]
        );
        let single = Cluster {
            members: BTreeSet::from([TemplateKey(0)]),
            ..cluster.clone()
        };
        assert_eq!(cluster_arrival_series(&single, &histories).unwrap(), a);
        let odd = ArrivalHistory {
            interval_len: 60,
            counts: vec![1],
        };
        let mixed: Histories = BTreeMap::from([(TemplateKey(0), &a), (TemplateKey(1), &odd)]);
        assert!(cluster_arrival_series(&cluster, &mixed).is_err());
    }
}
