//! Misra-Gries mining of frequently accessed timestamp buckets.

use std::collections::BTreeMap;
use std::io::Write;

use crate::workload::Query;
use crate::{Error, Result, Timestamp};

pub const DEFAULT_CAPACITY: usize = 64;
pub const DEFAULT_BUCKET_LEN: i64 = 300;

pub fn bucket_of(ts: Timestamp, bucket_len: i64) -> i64 {
    ts.div_euclid(bucket_len)
}

/// Every bucket index overlapping `[t_start, t_end]`.
pub fn expand_query_to_timestamps(query: &Query, bucket_len: i64) -> Result<Vec<i64>> {
    expand_range(query.t_start, query.t_end, bucket_len)
}

pub fn expand_range(t_start: Timestamp, t_end: Timestamp, bucket_len: i64) -> Result<Vec<i64>> {
    if bucket_len <= 0 {
        return Err(Error::invalid("bucket length must be > 0"));
    }
    if t_end < t_start {
        return Err(Error::invalid(format!("range end {t_end} precedes start {t_start}")));
    }
    Ok((bucket_of(t_start, bucket_len)..=bucket_of(t_end, bucket_len)).collect())
}

/// Misra-Gries summary with capacity `k`: at most `k - 1` counters, all >= 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterTable {
    capacity: usize,
    entries: BTreeMap<i64, u64>,
    processed: u64,
}

impl CounterTable {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity < 2 {
            return Err(Error::invalid("Misra-Gries capacity must be >= 2"));
        }
        Ok(CounterTable {
            capacity,
            entries: BTreeMap::new(),
            processed: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stream length seen so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counter(&self, bucket: i64) -> u64 {
        self.entries.get(&bucket).copied().unwrap_or(0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.entries.iter().map(|(&b, &c)| (b, c))
    }

    pub fn process(&mut self, element: i64) {
        self.processed += 1;
        if let Some(c) = self.entries.get_mut(&element) {
            *c += 1;
        } else if self.entries.len() < self.capacity - 1 {
            self.entries.insert(element, 1);
        } else {
            self.entries.retain(|_, c| {
                *c -= 1;
                *c > 0
            });
        }
    }
}

/// One Misra-Gries step on a copy of `table`.
pub fn mg_process(table: &CounterTable, element: i64) -> CounterTable {
    let mut t = table.clone();
    t.process(element);
    t
}

pub fn mg_run(stream: &[i64], k: usize) -> Result<CounterTable> {
    let mut t = CounterTable::new(k)?;
    for &e in stream {
        t.process(e);
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyEstimate {
    pub bucket: i64,
    /// Counter value; never above the true frequency.
    pub estimate: u64,
    /// The true frequency is at most `estimate + m/k`.
    pub upper_bound: f64,
    /// `estimate - m/k`, floored at zero: a guaranteed-safe lower bound on
    /// the frequency the counter would report for a heavy hitter.
    pub lower_bound: f64,
}

/// Table entries with their error bounds, largest estimate first, ties by
/// bucket ascending.
pub fn frequent_buckets(table: &CounterTable, m: u64, k: usize) -> Vec<FrequencyEstimate> {
    let slack = m as f64 / k as f64;
    let mut out: Vec<FrequencyEstimate> = table
        .entries()
        .map(|(bucket, c)| FrequencyEstimate {
            bucket,
            estimate: c,
            upper_bound: c as f64 + slack,
            lower_bound: (c as f64 - slack).max(0.0),
        })
        .collect();
    out.sort_by(|a, b| b.estimate.cmp(&a.estimate).then(a.bucket.cmp(&b.bucket)));
    out
}

/// CSV with header `bucket_start_ts,counter,lower_bound`.
pub fn write_frequent_csv<W: Write>(out: W, estimates: &[FrequencyEstimate], bucket_len: i64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Encoding(e.to_string());
    w.write_record(["bucket_start_ts", "counter", "lower_bound"])
        .map_err(csv_err)?;
    for e in estimates {
        w.write_record([
            (e.bucket * bucket_len).to_string(),
            e.estimate.to_string(),
            e.lower_bound.to_string(),
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
    use std::collections::HashMap;

    fn exact(stream: &[i64]) -> HashMap<i64, u64> {
        let mut m = HashMap::new();
        for &e in stream {
            *m.entry(e).or_insert(0) += 1;
        }
        m
    }

    #[test]
    fn expansion() {
        assert_eq!(expand_range(0, 3 * 300 - 1, 300).unwrap(), vec![0, 1, 2]);
        assert_eq!(expand_range(450, 450, 300).unwrap(), vec![1]);
        assert_eq!(expand_range(299, 300, 300).unwrap(), vec![0, 1]);
        assert!(expand_range(0, 10, 0).is_err());
        assert!(expand_range(10, 0, 300).is_err());
    }

    #[test]
    fn process_steps() {
        let mut t = mg_run(&[1, 2], 3).unwrap();
        let inc = mg_process(&t, 1);
        assert_eq!((inc.counter(1), inc.counter(2)), (2, 1));
        t = mg_run(&[1, 1, 2], 3).unwrap();
        let dec = mg_process(&t, 9);
        assert_eq!(dec.entries().collect::<Vec<_>>(), vec![(1, 1)]);
        assert_eq!(dec.counter(9), 0);
        let first = mg_process(&CounterTable::new(4).unwrap(), 5);
        assert_eq!(first.entries().collect::<Vec<_>>(), vec![(5, 1)]);
    }

    #[test]
    fn hand_simulated_stream() {
        // k=2 holds one counter: 1,1,1 -> 3; 2 -> 2; 3 -> 1; 1 -> 2.
        let t = mg_run(&[1, 1, 1, 2, 3, 1], 2).unwrap();
        assert_eq!(t.entries().collect::<Vec<_>>(), vec![(1, 2)]);
        let f = frequent_buckets(&t, 6, 2);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].estimate, 2);
        assert!(f[0].lower_bound <= 2.0 && 4.0 <= f[0].upper_bound);
    }

    #[test]
    fn trivial_runs() {
        assert!(mg_run(&[], 4).unwrap().is_empty());
        let t = mg_run(&[7; 50], 3).unwrap();
        assert_eq!(t.entries().collect::<Vec<_>>(), vec![(7, 50)]);
        assert!(mg_run(&[1], 1).is_err());
        assert!(frequent_buckets(&CounterTable::new(3).unwrap(), 0, 3).is_empty());
    }

    #[test]
    fn ordering_breaks_ties_by_bucket() {
        let t = mg_run(&[9, 4, 9, 4, 2], 8).unwrap();
        let f = frequent_buckets(&t, 5, 8);
        assert_eq!(f.iter().map(|e| e.bucket).collect::<Vec<_>>(), vec![4, 9, 2]);
    }

    #[test]
    fn csv_report() {
        let t = mg_run(&[3, 3, 1], 4).unwrap();
        let mut buf = Vec::new();
        write_frequent_csv(&mut buf, &frequent_buckets(&t, 3, 4), 300).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "bucket_start_ts,counter,lower_bound\n900,2,1.25\n300,1,0.25\n"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn guarantees_hold_against_exact_counts(
            stream in prop::collection::vec(0i64..100, 0..10_000),
            k in 2usize..40,
        ) {
            let mut t = CounterTable::new(k).unwrap();
            for &e in &stream {
                t.process(e);
                prop_assert!(t.len() < k);
            }
            let m = stream.len() as f64;
            let truth = exact(&stream);
            for (&bucket, &f) in &truth {
                let c = t.counter(bucket);
                prop_assert!(c <= f);
                prop_assert!(f as f64 - m / k as f64 <= c as f64);
                if f as f64 > m / k as f64 {
                    prop_assert!(c > 0, "heavy bucket {} missing", bucket);
                }
            }
            prop_assert!(t.entries().all(|(_, c)| c >= 1));
        }
    }
}
