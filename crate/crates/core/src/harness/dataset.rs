//! Series store construction: CSV ingestion and the synthetic pollution-like
//! dataset generator.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::scheduler::{EndStore, Point};
use crate::workload::{DatasetSchema, TimeDomain};
use crate::{Error, Result, SeriesId, Timestamp};

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub timestamp_column: String,
    /// Columns whose value combination identifies a series.
    pub tag_columns: Vec<String>,
    /// Numeric columns; `None` takes every column that is neither the
    /// timestamp nor a tag.
    pub field_columns: Option<Vec<String>>,
    /// Abort when more than this fraction of rows is malformed.
    pub max_malformed_fraction: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            timestamp_column: "timestamp".into(),
            tag_columns: vec!["longitude".into(), "latitude".into()],
            field_columns: None,
            max_malformed_fraction: 0.01,
        }
    }
}

/// Points grouped into series.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: DatasetSchema,
    /// Tag values of each series, indexed by series id.
    pub tags: Vec<Vec<String>>,
    pub points: Vec<(SeriesId, Point)>,
    pub rows: usize,
    pub malformed: usize,
}

impl Dataset {
    pub fn series_count(&self) -> usize {
        self.tags.len()
    }

    pub fn domain(&self) -> Option<TimeDomain> {
        let min = self.points.iter().map(|p| p.1.ts).min()?;
        let max = self.points.iter().map(|p| p.1.ts).max()?;
        Some(TimeDomain { start: min, end: max })
    }

    pub fn to_end_store(&self, bucket_len: i64) -> Result<EndStore> {
        let mut store = EndStore::new(bucket_len)?;
        for (s, p) in &self.points {
            store.insert(*s, p.clone());
        }
        Ok(store)
    }

    /// Writes the dataset back as CSV in the ingestible layout.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Encoding(e.to_string());
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.schema.tag_keys.iter().cloned());
        header.extend(self.schema.field_keys.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for (s, p) in &self.points {
            let mut row = vec![p.ts.to_string()];
            row.extend(self.tags[s.0 as usize].iter().cloned());
            row.extend(p.values.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Epoch seconds, RFC 3339, or `YYYY-MM-DD HH:MM:SS` / `YYYY-MM-DDTHH:MM:SS`
/// taken as UTC.
pub fn parse_timestamp(text: &str) -> Option<Timestamp> {
    let t = text.trim();
    if let Ok(v) = t.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Some(dt.timestamp());
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(t, f).ok())
        .map(|dt| dt.and_utc().timestamp())
}

pub fn ingest_csv(path: &Path, options: &IngestOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    ingest_reader(file, options)
}

pub fn ingest_reader<R: Read>(input: R, options: &IngestOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Ingest(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let position = |name: &str| header.iter().position(|h| h == name);
    let ts_col = position(&options.timestamp_column)
        .ok_or_else(|| Error::Ingest(format!("no `{}` column in header", options.timestamp_column)))?;
    let tag_cols = options
        .tag_columns
        .iter()
        .map(|t| position(t).ok_or_else(|| Error::Ingest(format!("no `{t}` tag column in header"))))
        .collect::<Result<Vec<_>>>()?;
    let field_names: Vec<String> = match &options.field_columns {
        Some(f) => f.clone(),
        None => header
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != ts_col && !tag_cols.contains(i))
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let field_cols = field_names
        .iter()
        .map(|f| position(f).ok_or_else(|| Error::Ingest(format!("no `{f}` field column in header"))))
        .collect::<Result<Vec<_>>>()?;

    let mut index: HashMap<Vec<String>, SeriesId> = HashMap::new();
    let mut tags = Vec::new();
    let mut points = Vec::new();
    let (mut rows, mut malformed) = (0usize, 0usize);
    for record in reader.records() {
        rows += 1;
        let Ok(record) = record else {
            malformed += 1;
            continue;
        };
        let ts = record.get(ts_col).and_then(parse_timestamp);
        let values: Option<Vec<f64>> = field_cols
            .iter()
            .map(|&c| {
                record
                    .get(c)
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
            })
            .collect();
        let key: Option<Vec<String>> = tag_cols.iter().map(|&c| record.get(c).map(String::from)).collect();
        let (Some(ts), Some(values), Some(key)) = (ts, values, key) else {
            malformed += 1;
            continue;
        };
        let next = SeriesId(tags.len() as u32);
        let id = *index.entry(key.clone()).or_insert_with(|| {
            tags.push(key);
            next
        });
        points.push((id, Point { ts, values }));
    }
    if rows > 0 && malformed as f64 > options.max_malformed_fraction * rows as f64 {
        return Err(Error::Ingest(format!(
            "{malformed} of {rows} rows are malformed (limit {:.2} %)",
            100.0 * options.max_malformed_fraction
        )));
    }
    if points.is_empty() {
        return Err(Error::Ingest("no usable rows".into()));
    }
    points.sort_by_key(|(s, p)| (p.ts, *s));
    let schema = DatasetSchema {
        measurement: "measurement".into(),
        field_keys: field_names,
        tag_keys: options.tag_columns.clone(),
        series: (0..tags.len() as u32).map(SeriesId).collect(),
    };
    schema.validate()?;
    Ok(Dataset {
        schema,
        tags,
        points,
        rows,
        malformed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub series: u32,
    pub points_per_series: u32,
    pub start: Timestamp,
    pub days: u32,
    pub seed: u64,
}

/// Pollution-like readings: each sensor reports at a fixed spacing (staggered
/// per sensor) with five fields following a daily cycle plus a random walk.
pub fn generate_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.series == 0 || spec.points_per_series == 0 || spec.days == 0 {
        return Err(Error::invalid("synthetic dataset needs series, points and days > 0"));
    }
    let span = i64::from(spec.days) * 86_400;
    let spacing = span / i64::from(spec.points_per_series);
    if spacing == 0 {
        return Err(Error::invalid("more points than seconds in the time span"));
    }
    let schema = DatasetSchema::pollution(spec.series);
    let fields = schema.field_keys.len();
    let noise = Normal::new(0.0, 1.0).expect("valid");
    let mut points = Vec::with_capacity((spec.series * spec.points_per_series) as usize);
    let mut tags = Vec::with_capacity(spec.series as usize);
    for s in 0..spec.series {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(u64::from(s) + 1);
        let lon = -122.5 + 0.01 * f64::from(s);
        let lat = 37.7 + 0.005 * f64::from(s % 7);
        tags.push(vec![format!("{lon:.3}"), format!("{lat:.3}")]);
        let offset = rng.gen_range(0..spacing);
        let mut level: Vec<f64> = (0..fields).map(|f| 40.0 + 10.0 * f as f64).collect();
        for i in 0..i64::from(spec.points_per_series) {
            let ts = spec.start + i * spacing + offset;
            let phase = (ts.rem_euclid(86_400) as f64) / 86_400.0 * std::f64::consts::TAU;
            let values = level
                .iter_mut()
                .map(|l| {
                    *l = (*l + noise.sample(&mut rng)).clamp(0.0, 200.0);
                    ((*l + 15.0 * phase.sin()).max(0.0) * 100.0).round() / 100.0
                })
                .collect();
            points.push((SeriesId(s), Point { ts, values }));
        }
    }
    points.sort_by_key(|(s, p)| (p.ts, *s));
    Ok(Dataset {
        schema,
        tags,
        rows: points.len(),
        points,
        malformed: 0,
    })
}
