//! Synthetic query workloads.
//!
//! A dataset schema yields a summary of query templates (five kinds), each
//! template is matched with an arrival-rate pattern, and the patterns decide
//! how many queries each template issues per interval. Queries read a
//! recency-biased time range of the template's series.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::{Error, Result, SeriesId, Timestamp};

pub const HOUR: i64 = 3600;
pub const DAY: i64 = 24 * HOUR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TemplateId(pub u32);

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Field/tag/timestamp layout of a dataset plus the series it contains.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSchema {
    pub measurement: String,
    pub field_keys: Vec<String>,
    pub tag_keys: Vec<String>,
    pub series: Vec<SeriesId>,
}

impl DatasetSchema {
    /// The air-pollution layout: five pollutant fields, sensors identified by
    /// their longitude/latitude tags.
    pub fn pollution(series_count: u32) -> Self {
        DatasetSchema {
            measurement: "pollution".into(),
            field_keys: [
                "ozone",
                "particulate_matter",
                "carbon_monoxide",
                "sulfur_dioxide",
                "nitrogen_dioxide",
            ]
            .map(String::from)
            .to_vec(),
            tag_keys: vec!["longitude".into(), "latitude".into()],
            series: (0..series_count).map(SeriesId).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.field_keys.is_empty() {
            return Err(Error::Schema("schema has no field keys".into()));
        }
        if self.tag_keys.is_empty() {
            return Err(Error::Schema("schema has no tag keys".into()));
        }
        if self.series.is_empty() {
            return Err(Error::Schema("schema has no series".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateKind {
    /// Conditional query on one series.
    SingleSeries = 1,
    /// Conditional query on a set of series.
    MultiSeries = 2,
    /// Conditional query with a value comparison.
    Threshold = 3,
    /// Aggregate over one series.
    Aggregate = 4,
    /// Aggregate over a set of series with GROUP BY.
    Group = 5,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 5] = [
        TemplateKind::SingleSeries,
        TemplateKind::MultiSeries,
        TemplateKind::Threshold,
        TemplateKind::Aggregate,
        TemplateKind::Group,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Result<Self> {
        TemplateKind::ALL
            .into_iter()
            .find(|k| k.number() == n)
            .ok_or_else(|| Error::invalid(format!("template kind must be 1..=5, got {n}")))
    }

    pub fn single_series(self) -> bool {
        matches!(
            self,
            TemplateKind::SingleSeries | TemplateKind::Threshold | TemplateKind::Aggregate
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Comparison {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregate {
    Avg,
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    Compare(Comparison),
    Aggregate(Aggregate),
}

impl Comparison {
    const ALL: [Comparison; 5] = [
        Comparison::Gt,
        Comparison::Ge,
        Comparison::Lt,
        Comparison::Le,
        Comparison::Eq,
    ];

    fn symbol(self) -> &'static str {
        match self {
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Eq => "=",
        }
    }
}

impl Aggregate {
    const ALL: [Aggregate; 3] = [Aggregate::Avg, Aggregate::Max, Aggregate::Min];

    fn name(self) -> &'static str {
        match self {
            Aggregate::Avg => "AVG",
            Aggregate::Max => "MAX",
            Aggregate::Min => "MIN",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryTemplate {
    pub id: TemplateId,
    pub kind: TemplateKind,
    pub fields: Vec<String>,
    /// One series for kinds 1, 3 and 4; a set for kinds 2 and 5.
    pub series: Vec<SeriesId>,
    pub operator: Option<Operator>,
    pub group_by: Option<String>,
}

impl QueryTemplate {
    pub fn validate(&self) -> Result<()> {
        let op_ok = match self.kind {
            TemplateKind::Threshold => matches!(self.operator, Some(Operator::Compare(_))),
            TemplateKind::Aggregate | TemplateKind::Group => matches!(self.operator, Some(Operator::Aggregate(_))),
            TemplateKind::SingleSeries | TemplateKind::MultiSeries => self.operator.is_none(),
        };
        if !op_ok {
            return Err(Error::invalid(format!(
                "template {} has the wrong operator for its kind",
                self.id
            )));
        }
        if self.kind.single_series() && self.series.len() != 1 {
            return Err(Error::invalid(format!(
                "template {} must select exactly one series",
                self.id
            )));
        }
        if self.series.is_empty() || self.fields.is_empty() {
            return Err(Error::invalid(format!("template {} selects nothing", self.id)));
        }
        if self.group_by.is_some() != (self.kind == TemplateKind::Group) {
            return Err(Error::invalid(format!(
                "template {}: GROUP BY belongs to kind 5 only",
                self.id
            )));
        }
        Ok(())
    }
}

/// Builds `per_kind` templates of each kind against `schema`, drawing fields,
/// series and operators from `seed`.
pub fn build_template_summary(schema: &DatasetSchema, per_kind: usize, seed: u64) -> Result<Vec<QueryTemplate>> {
    schema.validate()?;
    if per_kind == 0 {
        return Err(Error::invalid("at least one template per kind is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut templates = Vec::with_capacity(per_kind * TemplateKind::ALL.len());
    for kind in TemplateKind::ALL {
        for _ in 0..per_kind {
            let id = TemplateId(templates.len() as u32);
            let field_count = rng.gen_range(1..=schema.field_keys.len().min(3));
            let mut fields: Vec<String> = schema
                .field_keys
                .choose_multiple(&mut rng, field_count)
                .cloned()
                .collect();
            fields.sort();
            let series_count = if kind.single_series() {
                1
            } else {
                rng.gen_range(2..=schema.series.len().clamp(2, 4))
                    .min(schema.series.len())
            };
            let mut series: Vec<SeriesId> = schema.series.choose_multiple(&mut rng, series_count).copied().collect();
            series.sort();
            let operator = match kind {
                TemplateKind::Threshold => Some(Operator::Compare(*Comparison::ALL.choose(&mut rng).unwrap())),
                TemplateKind::Aggregate | TemplateKind::Group => {
                    Some(Operator::Aggregate(*Aggregate::ALL.choose(&mut rng).unwrap()))
                }
                _ => None,
            };
            let group_by = (kind == TemplateKind::Group).then(|| schema.tag_keys[0].clone());
            templates.push(QueryTemplate {
                id,
                kind,
                fields,
                series,
                operator,
                group_by,
            });
        }
    }
    Ok(templates)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakWindow {
    /// Start of the peak, seconds into the period.
    pub offset: i64,
    pub width: i64,
    pub rate: f64,
}

/// Per-interval query arrival rate. Rates are queries per rate unit (the
/// generator's interval length).
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalPattern {
    Cycles {
        period: i64,
        peaks: Vec<PeakWindow>,
        base_rate: f64,
    },
    Stability {
        rate: f64,
    },
    Spike {
        center: Timestamp,
        peak_rate: f64,
        /// Per second.
        decay: f64,
    },
    Chaos {
        seed: u64,
        max_rate: f64,
    },
}

impl ArrivalPattern {
    /// Morning and evening rush hours on top of a low base rate.
    pub fn daily_rush(base_rate: f64, peak_rate: f64) -> Self {
        ArrivalPattern::Cycles {
            period: DAY,
            peaks: vec![
                PeakWindow {
                    offset: 7 * HOUR,
                    width: 2 * HOUR,
                    rate: peak_rate,
                },
                PeakWindow {
                    offset: 18 * HOUR,
                    width: 3 * HOUR,
                    rate: peak_rate,
                },
            ],
            base_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| r.is_finite() && r >= 0.0;
        let ok = match self {
            ArrivalPattern::Cycles {
                period,
                peaks,
                base_rate,
            } => *period > 0 && rate_ok(*base_rate) && peaks.iter().all(|p| rate_ok(p.rate) && p.width > 0),
            ArrivalPattern::Stability { rate } => rate_ok(*rate),
            ArrivalPattern::Spike { peak_rate, decay, .. } => rate_ok(*peak_rate) && *decay > 0.0,
            ArrivalPattern::Chaos { max_rate, .. } => rate_ok(*max_rate),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid arrival pattern {self:?}")))
        }
    }

    /// Number of queries arriving in `[start, end)`; `unit` is the length the
    /// pattern's rates refer to.
    pub fn arrival_count(&self, start: Timestamp, end: Timestamp, unit: i64) -> u64 {
        debug_assert!(end > start && unit > 0);
        let units = (end - start) as f64 / unit as f64;
        let expected = match self {
            ArrivalPattern::Stability { rate } => rate * units,
            ArrivalPattern::Cycles {
                period,
                peaks,
                base_rate,
            } => {
                let phase = start.rem_euclid(*period);
                let rate = peaks
                    .iter()
                    .filter(|p| {
                        let rel = (phase - p.offset).rem_euclid(*period);
                        rel < p.width
                    })
                    .map(|p| p.rate)
                    .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
                    .unwrap_or(*base_rate);
                rate * units
            }
            ArrivalPattern::Spike {
                center,
                peak_rate,
                decay,
            } => peak_rate * (-decay * (start - center).abs() as f64).exp() * units,
            ArrivalPattern::Chaos { seed, max_rate } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (start as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let max = (max_rate * units).floor() as u64;
                return rng.gen_range(0..=max);
            }
        };
        expected.max(0.0).round() as u64
    }
}

/// Draws one pattern per template uniformly from `choices`.
pub fn assign_patterns(
    templates: &[QueryTemplate],
    choices: &[ArrivalPattern],
    seed: u64,
) -> Result<Vec<ArrivalPattern>> {
    if choices.is_empty() {
        return Err(Error::invalid("no arrival patterns to choose from"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(templates
        .iter()
        .map(|_| choices.choose(&mut rng).unwrap().clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub template_id: TemplateId,
    pub kind: TemplateKind,
    pub issue_ts: Timestamp,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub series: Vec<SeriesId>,
    pub operator: Option<Operator>,
    /// Comparison value for threshold queries.
    pub threshold: Option<f64>,
}

/// Inclusive time range covered by the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeDomain {
    pub start: Timestamp,
    pub end: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// First issue time.
    pub start: Timestamp,
    pub horizon: i64,
    /// Length of one arrival interval; pattern rates are per interval.
    pub interval: i64,
    /// Candidate lengths of a query's time range.
    pub durations: Vec<i64>,
    /// Mean distance between a query's issue time and the end of its range.
    pub recency_mean: f64,
}

impl GeneratorConfig {
    /// Mean recency such that 80 % of ranges end within the last 24 h.
    pub fn default_recency_mean() -> f64 {
        DAY as f64 / 5f64.ln()
    }

    pub fn new(start: Timestamp, horizon: i64) -> Self {
        GeneratorConfig {
            start,
            horizon,
            interval: 300,
            durations: vec![HOUR, 6 * HOUR, DAY, 7 * DAY],
            recency_mean: Self::default_recency_mean(),
        }
    }

    pub fn interval_count(&self) -> usize {
        (self.horizon / self.interval) as usize
    }
}

/// Issues every template's queries interval by interval. Each template draws
/// from its own random stream, so output does not depend on template order.
pub fn generate(
    templates: &[QueryTemplate],
    patterns: &[ArrivalPattern],
    config: &GeneratorConfig,
    domain: TimeDomain,
    seed: u64,
) -> Result<Vec<Query>> {
    if templates.len() != patterns.len() {
        return Err(Error::invalid(format!(
            "{} templates but {} pattern assignments",
            templates.len(),
            patterns.len()
        )));
    }
    if domain.end < domain.start {
        return Err(Error::invalid("empty data time domain"));
    }
    if config.horizon <= 0 || config.interval <= 0 {
        return Err(Error::invalid("horizon and interval must be > 0"));
    }
    if config.start < domain.start {
        return Err(Error::invalid("queries would be issued before any data exists"));
    }
    if config.durations.is_empty() || config.durations.iter().any(|&d| d < 0) {
        return Err(Error::invalid("range durations must be a non-empty set of values >= 0"));
    }
    if !(config.recency_mean > 0.0) {
        return Err(Error::invalid("recency mean must be > 0"));
    }
    let recency = Exp::new(1.0 / config.recency_mean).map_err(|e| Error::invalid(e.to_string()))?;
    let mut queries = Vec::new();
    for (template, pattern) in templates.iter().zip(patterns) {
        template.validate()?;
        pattern.validate()?;
        let mut rng = template_rng(seed, template.id);
        for i in 0..config.interval_count() {
            let start = config.start + i as i64 * config.interval;
            let end = start + config.interval;
            for _ in 0..pattern.arrival_count(start, end, config.interval) {
                let issue_ts = rng.gen_range(start..end);
                let back = recency.sample(&mut rng).round() as i64;
                let t_end = (issue_ts - back).min(domain.end).max(domain.start).min(issue_ts);
                let duration = *config.durations.choose(&mut rng).unwrap();
                let t_start = (t_end - duration).max(domain.start);
                let threshold = (template.kind == TemplateKind::Threshold)
                    .then(|| (rng.gen_range(0.0..100.0f64) * 10.0).round() / 10.0);
                queries.push(Query {
                    template_id: template.id,
                    kind: template.kind,
                    issue_ts,
                    t_start,
                    t_end,
                    series: template.series.clone(),
                    operator: template.operator,
                    threshold,
                });
            }
        }
    }
    queries.sort_by_key(|q| (q.issue_ts, q.template_id));
    Ok(queries)
}

fn template_rng(seed: u64, id: TemplateId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(id.0) + 1);
    rng
}

/// Per-template, per-interval query counts of a stream.
pub fn count_per_interval(
    queries: &[Query],
    template_count: usize,
    start: Timestamp,
    interval: i64,
    intervals: usize,
) -> Vec<Vec<u64>> {
    let mut counts = vec![vec![0u64; intervals]; template_count];
    for q in queries {
        let idx = (q.issue_ts - start).div_euclid(interval);
        if (0..intervals as i64).contains(&idx) && (q.template_id.0 as usize) < template_count {
            counts[q.template_id.0 as usize][idx as usize] += 1;
        }
    }
    counts
}

fn format_operator(op: Option<Operator>, threshold: Option<f64>) -> String {
    match op {
        None => String::new(),
        Some(Operator::Aggregate(a)) => a.name().to_string(),
        Some(Operator::Compare(c)) => format!("{}{}", c.symbol(), threshold.unwrap_or(0.0)),
    }
}

fn parse_operator(text: &str) -> Result<(Option<Operator>, Option<f64>)> {
    if text.is_empty() {
        return Ok((None, None));
    }
    if let Some(a) = Aggregate::ALL.into_iter().find(|a| a.name() == text) {
        return Ok((Some(Operator::Aggregate(a)), None));
    }
    // Two-character symbols first so ">=" is not read as ">" followed by "=...".
    for c in [
        Comparison::Ge,
        Comparison::Le,
        Comparison::Gt,
        Comparison::Lt,
        Comparison::Eq,
    ] {
        if let Some(value) = text.strip_prefix(c.symbol()) {
            let value: f64 = value
                .parse()
                .map_err(|_| Error::invalid(format!("bad comparison value in {text:?}")))?;
            return Ok((Some(Operator::Compare(c)), Some(value)));
        }
    }
    Err(Error::invalid(format!("unknown operator {text:?}")))
}

impl fmt::Display for Query {
    /// `issue_ts,template_id,kind,series_ids,t_start,t_end,op`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let series: Vec<String> = self.series.iter().map(|s| s.0.to_string()).collect();
        write!(
            f,
            "{},{},{},{},{},{},{}",
            self.issue_ts,
            self.template_id,
            self.kind.number(),
            series.join(";"),
            self.t_start,
            self.t_end,
            format_operator(self.operator, self.threshold)
        )
    }
}

impl FromStr for Query {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.trim_end().split(',').collect();
        if cols.len() != 7 {
            return Err(Error::invalid(format!("expected 7 columns, got {}", cols.len())));
        }
        let int = |s: &str| {
            s.trim()
                .parse::<i64>()
                .map_err(|_| Error::invalid(format!("not an integer: {s:?}")))
        };
        let kind = TemplateKind::from_number(int(cols[2])? as u8)?;
        let series = cols[3]
            .split(';')
            .map(|s| s.trim().parse::<u32>().map(SeriesId))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::invalid(format!("bad series list {:?}", cols[3])))?;
        let (operator, threshold) = parse_operator(cols[6].trim())?;
        let query = Query {
            issue_ts: int(cols[0])?,
            template_id: TemplateId(int(cols[1])? as u32),
            kind,
            series,
            t_start: int(cols[4])?,
            t_end: int(cols[5])?,
            operator,
            threshold,
        };
        if query.t_start > query.t_end {
            return Err(Error::invalid("t_start after t_end"));
        }
        Ok(query)
    }
}

pub fn write_workload<W: std::io::Write>(mut out: W, queries: &[Query]) -> Result<()> {
    for q in queries {
        writeln!(out, "{q}")?;
    }
    Ok(())
}

/// Reads the line format back; blank lines and `#` comments are skipped.
pub fn read_workload<R: std::io::BufRead>(input: R) -> Result<Vec<Query>> {
    let mut queries = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let q = line.parse::<Query>().map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        queries.push(q);
    }
    Ok(queries)
}

/// SQL-like rendering, for logs only.
pub fn render_sql(query: &Query, template: &QueryTemplate, schema: &DatasetSchema) -> String {
    let fields = template.fields.join(", ");
    let select = match query.operator {
        Some(Operator::Aggregate(a)) => format!("SELECT {}({fields})", a.name()),
        _ => format!("SELECT {fields}"),
    };
    let tag = schema.tag_keys.first().map(String::as_str).unwrap_or("sensor_id");
    let ids: BTreeSet<u32> = query.series.iter().map(|s| s.0).collect();
    let ids: Vec<String> = ids.into_iter().map(|s| s.to_string()).collect();
    let series = if ids.len() == 1 {
        format!("{tag} = {}", ids[0])
    } else {
        format!("{tag} IN ({})", ids.join(", "))
    };
    let mut sql = format!(
        "{select} FROM {} WHERE {series} AND time >= {} AND time <= {}",
        schema.measurement, query.t_start, query.t_end
    );
    if let (Some(Operator::Compare(c)), Some(v)) = (query.operator, query.threshold) {
        sql.push_str(&format!(" AND {} {} {v}", template.fields[0], c.symbol()));
    }
    if let Some(g) = &template.group_by {
        sql.push_str(&format!(" GROUP BY {g}"));
    }
    sql
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> DatasetSchema {
        DatasetSchema::pollution(10)
    }

    #[test]
    fn summary_has_every_kind() {
        let t = build_template_summary(&schema(), 1, 7).unwrap();
        assert_eq!(t.len(), 5);
        for (tpl, kind) in t.iter().zip(TemplateKind::ALL) {
            assert_eq!(tpl.kind, kind);
            tpl.validate().unwrap();
        }
        assert_eq!(t, build_template_summary(&schema(), 1, 7).unwrap());
    }

    #[test]
    fn minimal_schema() {
        let s = DatasetSchema {
            measurement: "m".into(),
            field_keys: vec!["v".into()],
            tag_keys: vec!["id".into()],
            series: vec![SeriesId(0)],
        };
        let t = build_template_summary(&s, 1, 1).unwrap();
        assert_eq!(t.len(), 5);
        assert!(t.iter().all(|t| t.fields == ["v"] && t.series == [SeriesId(0)]));
    }

    #[test]
    fn schema_without_tags_or_fields_is_rejected() {
        let mut s = schema();
        s.tag_keys.clear();
        assert!(matches!(build_template_summary(&s, 1, 0), Err(Error::Schema(_))));
        let mut s = schema();
        s.field_keys.clear();
        assert!(matches!(build_template_summary(&s, 1, 0), Err(Error::Schema(_))));
    }

    #[test]
    fn arrival_counts() {
        assert_eq!(ArrivalPattern::Stability { rate: 10.0 }.arrival_count(0, 300, 300), 10);
        let cycles = ArrivalPattern::Cycles {
            period: DAY,
            peaks: vec![PeakWindow {
                offset: 18 * HOUR,
                width: 3 * HOUR,
                rate: 50.0,
            }],
            base_rate: 1.0,
        };
        assert_eq!(cycles.arrival_count(19 * HOUR, 19 * HOUR + 300, 300), 50);
        assert_eq!(cycles.arrival_count(12 * HOUR, 12 * HOUR + 300, 300), 1);
        assert_eq!(cycles.arrival_count(DAY + 19 * HOUR, DAY + 19 * HOUR + 300, 300), 50);
        let spike = ArrivalPattern::Spike {
            center: 1000,
            peak_rate: 40.0,
            decay: 0.01,
        };
        assert_eq!(spike.arrival_count(1000, 1300, 300), 40);
        assert_eq!(spike.arrival_count(100_000, 100_300, 300), 0);
        let chaos = ArrivalPattern::Chaos {
            seed: 3,
            max_rate: 20.0,
        };
        let a = chaos.arrival_count(600, 900, 300);
        assert!(a <= 20);
        assert_eq!(a, chaos.arrival_count(600, 900, 300));
    }

    #[test]
    fn stability_generation_count() {
        let t = build_template_summary(&schema(), 1, 0).unwrap();
        let cfg = GeneratorConfig::new(10 * DAY, 900);
        let domain = TimeDomain {
            start: 0,
            end: 10 * DAY,
        };
        let q = generate(&t[..1], &[ArrivalPattern::Stability { rate: 2.0 }], &cfg, domain, 5).unwrap();
        assert_eq!(q.len(), 6);
    }

    #[test]
    fn empty_domain_is_rejected() {
        let t = build_template_summary(&schema(), 1, 0).unwrap();
        let cfg = GeneratorConfig::new(10, 900);
        let domain = TimeDomain { start: 10, end: 0 };
        assert!(generate(&t[..1], &[ArrivalPattern::Stability { rate: 2.0 }], &cfg, domain, 5).is_err());
    }

    #[test]
    fn per_template_counts_match_pattern_sums() {
        let templates = build_template_summary(&schema(), 1, 11).unwrap();
        let patterns = vec![
            ArrivalPattern::daily_rush(1.0, 20.0),
            ArrivalPattern::Stability { rate: 3.0 },
            ArrivalPattern::Spike {
                center: 10 * DAY + 6 * HOUR,
                peak_rate: 30.0,
                decay: 1.0 / 3600.0,
            },
            ArrivalPattern::Chaos { seed: 9, max_rate: 8.0 },
            ArrivalPattern::Cycles {
                period: 6 * HOUR,
                peaks: vec![PeakWindow {
                    offset: 0,
                    width: HOUR,
                    rate: 12.0,
                }],
                base_rate: 0.0,
            },
        ];
        let cfg = GeneratorConfig::new(10 * DAY, DAY);
        let domain = TimeDomain {
            start: 0,
            end: 11 * DAY,
        };
        let queries = generate(&templates, &patterns, &cfg, domain, 42).unwrap();
        let counts = count_per_interval(&queries, 5, cfg.start, cfg.interval, cfg.interval_count());
        for (i, pattern) in patterns.iter().enumerate() {
            // Independent recount from the pattern definition.
            let expected: u64 = (0..cfg.interval_count() as i64)
                .map(|j| {
                    let s = cfg.start + j * 300;
                    pattern.arrival_count(s, s + 300, 300)
                })
                .sum();
            assert_eq!(counts[i].iter().sum::<u64>(), expected, "template {i}");
        }
        assert_eq!(queries, generate(&templates, &patterns, &cfg, domain, 42).unwrap());
    }

    #[test]
    fn line_format_round_trip() {
        let templates = build_template_summary(&schema(), 2, 3).unwrap();
        let patterns = vec![ArrivalPattern::Stability { rate: 1.0 }; templates.len()];
        let cfg = GeneratorConfig::new(5 * DAY, 3600);
        let q = generate(&templates, &patterns, &cfg, TimeDomain { start: 0, end: 6 * DAY }, 1).unwrap();
        let mut buf = Vec::new();
        write_workload(&mut buf, &q).unwrap();
        assert_eq!(read_workload(buf.as_slice()).unwrap(), q);
        let line = q
            .iter()
            .find(|q| q.kind == TemplateKind::Threshold)
            .unwrap()
            .to_string();
        assert!(line.split(',').nth(6).unwrap().starts_with(['<', '>', '=']));
        let sql = render_sql(&q[0], &templates[q[0].template_id.0 as usize], &schema());
        assert!(sql.starts_with("SELECT"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ranges_never_reach_the_future(seed in any::<u64>()) {
            let s = schema();
            let templates = build_template_summary(&s, 1, seed).unwrap();
            let patterns = vec![ArrivalPattern::Chaos { seed, max_rate: 5.0 }; 5];
            let cfg = GeneratorConfig::new(3 * DAY, 6 * HOUR);
            let domain = TimeDomain { start: DAY, end: 10 * DAY };
            let queries = generate(&templates, &patterns, &cfg, domain, seed).unwrap();
            for q in &queries {
                prop_assert!(q.t_start <= q.t_end && q.t_end <= q.issue_ts);
                prop_assert!(q.t_start >= domain.start);
                let t = &templates[q.template_id.0 as usize];
                prop_assert_eq!(&q.series, &t.series);
                prop_assert!(q.series.iter().all(|id| s.series.contains(id)));
            }
            prop_assert!(queries.windows(2).all(|w| w[0].issue_ts <= w[1].issue_ts));
        }

        #[test]
        fn cycles_are_periodic(offset in 0i64..288, base in 0.0f64..5.0, peak in 0.0f64..80.0) {
            let p = ArrivalPattern::daily_rush(base, peak);
            let s = offset * 300;
            prop_assert_eq!(p.arrival_count(s, s + 300, 300), p.arrival_count(s + DAY, s + DAY + 300, 300));
        }
    }
}
