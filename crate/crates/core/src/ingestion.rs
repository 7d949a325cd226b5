//! Meter readings and topology ingestion.
//!
//! Readings CSV: `meter_id,timestamp,voltage`, one row per meter-hour. An
//! empty or non-finite voltage, or an absent row, marks the hour as missing.
//! Topology CSV: `meter_id,transformer_id,feeder_id`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A calendar month, written `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PeriodId {
    year: i32,
    month: u32,
}

impl PeriodId {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) || NaiveDate::from_ymd_opt(year, month, 1).is_none() {
            return Err(Error::Parameter(format!(
                "invalid period {year:04}-{month:02}"
            )));
        }
        Ok(Self { year, month })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        self.month
    }

    /// Midnight on the first day of the month.
    pub fn start(&self) -> NaiveDateTime {
        self.first_day().and_hms_opt(0, 0, 0).unwrap()
    }

    pub fn days(&self) -> usize {
        let next = if self.month == 12 {
            NaiveDate::from_ymd_opt(self.year + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(self.year, self.month + 1, 1)
        }
        .unwrap();
        (next - self.first_day()).num_days() as usize
    }

    /// Number of hourly samples in the month (720 for June, 744 for July).
    pub fn hours(&self) -> usize {
        self.days() * 24
    }

    /// Hour offset of `ts` from the period start, if it falls inside the month.
    pub fn hour_index(&self, ts: NaiveDateTime) -> Option<usize> {
        let hours = (ts - self.start()).num_hours();
        (0..self.hours() as i64)
            .contains(&hours)
            .then_some(hours as usize)
    }

    pub fn timestamp(&self, hour: usize) -> NaiveDateTime {
        self.start() + Duration::hours(hour as i64)
    }

    fn first_day(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).unwrap()
    }
}

impl fmt::Display for PeriodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for PeriodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("period {s:?} is not of the form YYYY-MM"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        PeriodId::new(year, month)
    }
}

impl TryFrom<String> for PeriodId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PeriodId> for String {
    fn from(p: PeriodId) -> String {
        p.to_string()
    }
}

/// Parses an hour-resolution ISO-8601 timestamp.
///
/// Accepts `YYYY-MM-DDTHH:MM[:SS]` with `T` or a space as separator, a
/// trailing `Z`, or an RFC 3339 offset (converted to UTC). Minutes and
/// seconds must be zero.
pub fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    let ts = if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
        dt.naive_utc()
    } else {
        let raw = raw.strip_suffix('Z').unwrap_or(raw);
        [
            "%Y-%m-%dT%H:%M:%S",
            "%Y-%m-%dT%H:%M",
            "%Y-%m-%d %H:%M:%S",
            "%Y-%m-%d %H:%M",
        ]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())?
    };
    (ts.minute() == 0 && ts.second() == 0 && ts.nanosecond() == 0).then_some(ts)
}

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S").to_string()
}

/// One meter's complete hourly trace for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct MeterSeries {
    pub meter_id: String,
    pub period: PeriodId,
    pub start: NaiveDateTime,
    pub values: Vec<f64>,
}

impl MeterSeries {
    pub fn new(meter_id: impl Into<String>, period: PeriodId, values: Vec<f64>) -> Self {
        Self {
            meter_id: meter_id.into(),
            period,
            start: period.start(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Raw hourly slots for one meter; `None` marks a missing or non-finite sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MeterReadings {
    pub meter_id: String,
    pub samples: Vec<Option<f64>>,
}

impl MeterReadings {
    pub fn is_complete(&self) -> bool {
        self.samples.iter().all(|s| s.is_some_and(f64::is_finite))
    }

    pub fn missing_hours(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| !s.is_some_and(f64::is_finite))
            .count()
    }

    /// The complete series, or `None` if any hour is missing.
    pub fn to_series(&self, period: PeriodId) -> Option<MeterSeries> {
        self.samples
            .iter()
            .map(|s| s.filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .map(|values| MeterSeries::new(self.meter_id.clone(), period, values))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeterLink {
    pub transformer_id: String,
    pub feeder_id: String,
}

/// Meter → transformer → feeder linkage, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    links: IndexMap<String, MeterLink>,
}

impl Topology {
    /// Builds a topology, checking that meters are unique and that every
    /// transformer sits on exactly one feeder.
    pub fn from_links(links: impl IntoIterator<Item = (String, MeterLink)>) -> Result<Self> {
        let mut out = IndexMap::new();
        let mut transformer_feeder: HashMap<String, String> = HashMap::new();
        for (meter_id, link) in links {
            if let Some(feeder) = transformer_feeder.get(&link.transformer_id) {
                if *feeder != link.feeder_id {
                    return Err(Error::Topology(format!(
                        "transformer {} appears on feeders {} and {}",
                        link.transformer_id, feeder, link.feeder_id
                    )));
                }
            } else {
                transformer_feeder.insert(link.transformer_id.clone(), link.feeder_id.clone());
            }
            if out.contains_key(&meter_id) {
                return Err(Error::Topology(format!("meter {meter_id} listed twice")));
            }
            out.insert(meter_id, link);
        }
        Ok(Self { links: out })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rdr = open_csv(path)?;
        expect_header(&mut rdr, path, &["meter_id", "transformer_id", "feeder_id"])?;
        let mut links = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record_line(&record);
            let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
            let (meter, transformer, feeder) = (field(0), field(1), field(2));
            if meter.is_empty() || transformer.is_empty() || feeder.is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: "empty identifier".into(),
                });
            }
            links.push((
                meter,
                MeterLink {
                    transformer_id: transformer,
                    feeder_id: feeder,
                },
            ));
        }
        Self::from_links(links)
    }

    pub fn link(&self, meter_id: &str) -> Option<&MeterLink> {
        self.links.get(meter_id)
    }

    pub fn transformer_of(&self, meter_id: &str) -> Option<&str> {
        self.links.get(meter_id).map(|l| l.transformer_id.as_str())
    }

    pub fn feeder_of(&self, meter_id: &str) -> Option<&str> {
        self.links.get(meter_id).map(|l| l.feeder_id.as_str())
    }

    pub fn meters(&self) -> impl Iterator<Item = (&str, &MeterLink)> {
        self.links.iter().map(|(m, l)| (m.as_str(), l))
    }

    pub fn meters_on_feeder<'a>(&'a self, feeder_id: &'a str) -> impl Iterator<Item = &'a str> {
        self.links
            .iter()
            .filter(move |(_, l)| l.feeder_id == feeder_id)
            .map(|(m, _)| m.as_str())
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// All meters of one feeder over one period, possibly with missing hours.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederDataset {
    pub feeder_id: String,
    pub period: PeriodId,
    pub meters: Vec<MeterReadings>,
    pub topology: Topology,
}

impl FeederDataset {
    pub fn meter_ids(&self) -> impl Iterator<Item = &str> {
        self.meters.iter().map(|m| m.meter_id.as_str())
    }

    /// Converts every meter to a complete series.
    pub fn complete_series(&self) -> Result<Vec<MeterSeries>> {
        self.meters
            .iter()
            .map(|m| {
                m.to_series(self.period).ok_or_else(|| {
                    Error::Size(format!(
                        "meter {} is missing {} of {} hours in {}",
                        m.meter_id,
                        m.missing_hours(),
                        m.samples.len(),
                        self.period
                    ))
                })
            })
            .collect()
    }
}

/// Loads one feeder's readings for one period.
///
/// Every meter the topology places on `feeder_id` is returned, in topology
/// order, with `None` in hours that have no usable reading. Rows belonging to
/// other feeders or months are skipped after validation.
pub fn load_readings(
    readings_path: &Path,
    topology_path: &Path,
    feeder_id: &str,
    period: PeriodId,
) -> Result<FeederDataset> {
    let topology = Topology::load(topology_path)?;
    load_readings_with_topology(readings_path, topology, feeder_id, period)
}

pub fn load_readings_with_topology(
    readings_path: &Path,
    topology: Topology,
    feeder_id: &str,
    period: PeriodId,
) -> Result<FeederDataset> {
    let hours = period.hours();
    let mut slots: IndexMap<String, Vec<Option<f64>>> = topology
        .meters_on_feeder(feeder_id)
        .map(|m| (m.to_string(), vec![None; hours]))
        .collect();
    let mut seen: HashSet<(String, usize)> = HashSet::new();

    let mut rdr = open_csv(readings_path)?;
    expect_header(
        &mut rdr,
        readings_path,
        &["meter_id", "timestamp", "voltage"],
    )?;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(readings_path, e))?;
        let line = record_line(&record);
        let parse_err = |message: String| Error::Parse {
            path: readings_path.to_path_buf(),
            line,
            message,
        };
        let meter_id = record.get(0).unwrap_or("").trim();
        let raw_ts = record.get(1).unwrap_or("");
        let raw_v = record.get(2).unwrap_or("").trim();

        let ts = parse_timestamp(raw_ts)
            .ok_or_else(|| parse_err(format!("invalid hourly timestamp {raw_ts:?}")))?;
        let voltage = if raw_v.is_empty() {
            None
        } else {
            let v: f64 = raw_v
                .parse()
                .map_err(|_| parse_err(format!("invalid voltage {raw_v:?}")))?;
            v.is_finite().then_some(v)
        };

        let link = topology.link(meter_id).ok_or_else(|| {
            Error::Topology(format!(
                "meter {meter_id:?} at {}:{line} is absent from the topology file",
                readings_path.display()
            ))
        })?;
        if link.feeder_id != feeder_id {
            continue;
        }
        let Some(hour) = period.hour_index(ts) else {
            continue;
        };
        if !seen.insert((meter_id.to_string(), hour)) {
            return Err(parse_err(format!(
                "duplicate reading for meter {meter_id} at {}",
                format_timestamp(ts)
            )));
        }
        slots[meter_id][hour] = voltage;
    }

    Ok(FeederDataset {
        feeder_id: feeder_id.to_string(),
        period,
        meters: slots
            .into_iter()
            .map(|(meter_id, samples)| MeterReadings { meter_id, samples })
            .collect(),
        topology,
    })
}

/// Keeps only meters that are present and complete in every dataset.
///
/// All datasets are filtered to the same meter set; each keeps its own order.
pub fn filter_complete(datasets: &[FeederDataset]) -> Vec<FeederDataset> {
    fn complete_in(ds: &FeederDataset) -> HashSet<&str> {
        ds.meters
            .iter()
            .filter(|m| m.is_complete())
            .map(|m| m.meter_id.as_str())
            .collect()
    }
    let mut keep: Option<HashSet<&str>> = None;
    for ds in datasets {
        let ids = complete_in(ds);
        keep = Some(match keep {
            None => ids,
            Some(k) => k.intersection(&ids).copied().collect(),
        });
    }
    let keep = keep.unwrap_or_default();
    datasets
        .iter()
        .map(|ds| FeederDataset {
            feeder_id: ds.feeder_id.clone(),
            period: ds.period,
            meters: ds
                .meters
                .iter()
                .filter(|m| keep.contains(m.meter_id.as_str()))
                .cloned()
                .collect(),
            topology: ds.topology.clone(),
        })
        .collect()
}

/// Divides every value by the series' own mean.
pub fn normalize(series: &MeterSeries) -> Result<MeterSeries> {
    let mean = series.mean();
    if !mean.is_finite() || mean == 0.0 {
        return Err(Error::DegenerateSeries {
            meter_id: series.meter_id.clone(),
            mean,
        });
    }
    Ok(MeterSeries {
        values: series.values.iter().map(|v| v / mean).collect(),
        ..series.clone()
    })
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

fn expect_header(
    rdr: &mut csv::Reader<std::fs::File>,
    path: &Path,
    expected: &[&str],
) -> Result<()> {
    let header = rdr.headers().map_err(|e| csv_error(path, e))?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!(
                "expected header {}, found {}",
                expected.join(","),
                got.join(",")
            ),
        });
    }
    Ok(())
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: match kind {
                csv::ErrorKind::UnequalLengths {
                    expected_len, len, ..
                } => format!("expected {expected_len} fields, found {len}"),
                other => format!("{other:?}"),
            },
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn june() -> PeriodId {
        "2021-06".parse().unwrap()
    }

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        std::fs::File::create(&path)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        path
    }

    fn readings_csv(meters: &[&str], period: PeriodId, skip: &[(&str, usize)]) -> String {
        let mut out = String::from("meter_id,timestamp,voltage\n");
        for m in meters {
            for h in 0..period.hours() {
                if skip.contains(&(*m, h)) {
                    continue;
                }
                out.push_str(&format!(
                    "{m},{},{}\n",
                    format_timestamp(period.timestamp(h)),
                    120.0 + (h % 7) as f64
                ));
            }
        }
        out
    }

    const TOPO: &str = "meter_id,transformer_id,feeder_id\nm1,t1,F\nm2,t1,F\nm3,t2,F\nx1,t9,D\n";

    #[test]
    fn period_lengths_follow_calendar() {
        assert_eq!(june().hours(), 720);
        assert_eq!("2021-07".parse::<PeriodId>().unwrap().hours(), 744);
        assert_eq!("2024-02".parse::<PeriodId>().unwrap().hours(), 29 * 24);
        assert_eq!("2021-12".parse::<PeriodId>().unwrap().hours(), 744);
        assert!("2021-13".parse::<PeriodId>().is_err());
        assert!("21-06".parse::<PeriodId>().is_err());
    }

    #[test]
    fn timestamps_must_be_on_the_hour() {
        let t = parse_timestamp("2021-06-01T05:00:00").unwrap();
        assert_eq!(june().hour_index(t), Some(5));
        assert_eq!(parse_timestamp("2021-06-01T05:00Z"), Some(t));
        assert_eq!(parse_timestamp("2021-06-01 05:00:00"), Some(t));
        assert_eq!(parse_timestamp("2021-06-01T07:00:00+02:00"), Some(t));
        assert_eq!(parse_timestamp("2021-06-01T05:30:00"), None);
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    #[test]
    fn loads_two_meter_feeder() {
        let dir = tempfile::tempdir().unwrap();
        let topo = write(
            dir.path(),
            "topo.csv",
            "meter_id,transformer_id,feeder_id\nm1,t1,F\nm2,t2,F\n",
        );
        let readings = write(
            dir.path(),
            "r.csv",
            &readings_csv(&["m1", "m2"], june(), &[]),
        );
        let ds = load_readings(&readings, &topo, "F", june()).unwrap();
        assert_eq!(ds.meters.len(), 2);
        assert!(ds.meters.iter().all(MeterReadings::is_complete));
        let series = ds.complete_series().unwrap();
        assert_eq!(series[0].len(), 720);
        assert_eq!(series[1].values[3], 123.0);
    }

    #[test]
    fn non_numeric_voltage_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let topo = write(dir.path(), "topo.csv", TOPO);
        let readings = write(
            dir.path(),
            "r.csv",
            "meter_id,timestamp,voltage\nm1,2021-06-01T00:00:00,120.1\nm1,2021-06-01T01:00:00,abc\n",
        );
        match load_readings(&readings, &topo, "F", june()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_meter_is_topology_error() {
        let dir = tempfile::tempdir().unwrap();
        let topo = write(dir.path(), "topo.csv", TOPO);
        let readings = write(
            dir.path(),
            "r.csv",
            "meter_id,timestamp,voltage\nghost,2021-06-01T00:00:00,120.1\n",
        );
        assert!(matches!(
            load_readings(&readings, &topo, "F", june()),
            Err(Error::Topology(_))
        ));
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let topo = write(dir.path(), "topo.csv", TOPO);
        let readings = write(
            dir.path(),
            "r.csv",
            "meter_id,timestamp,voltage\nm1,2021-06-01T00:00:00,120\nm1,2021-06-01T00:00:00,121\n",
        );
        assert!(matches!(
            load_readings(&readings, &topo, "F", june()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn empty_and_nan_voltages_are_missing() {
        let dir = tempfile::tempdir().unwrap();
        let topo = write(dir.path(), "topo.csv", TOPO);
        let mut body = readings_csv(&["m1", "m2"], june(), &[("m1", 3), ("m2", 4)]);
        body.push_str("m1,2021-06-01T03:00:00,\n");
        body.push_str("m2,2021-06-01T04:00:00,NaN\n");
        let readings = write(dir.path(), "r.csv", &body);
        let ds = load_readings(&readings, &topo, "F", june()).unwrap();
        assert_eq!(ds.meters.len(), 3);
        assert_eq!(ds.meters[0].missing_hours(), 1);
        assert_eq!(ds.meters[1].missing_hours(), 1);
        assert_eq!(ds.meters[2].missing_hours(), 720);
        assert!(ds.complete_series().is_err());
    }

    #[test]
    fn other_feeders_and_months_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let topo = write(dir.path(), "topo.csv", TOPO);
        let mut body = readings_csv(&["m1", "x1"], june(), &[]);
        body.push_str("m1,2021-07-01T00:00:00,999\n");
        let readings = write(dir.path(), "r.csv", &body);
        let ds = load_readings(&readings, &topo, "F", june()).unwrap();
        assert_eq!(ds.meter_ids().collect::<Vec<_>>(), ["m1", "m2", "m3"]);
        assert!(ds.meters[0].is_complete());
    }

    #[test]
    fn transformer_on_two_feeders_rejected() {
        let links = [("a", "t1", "F"), ("b", "t1", "D")].map(|(m, t, f)| {
            (
                m.to_string(),
                MeterLink {
                    transformer_id: t.into(),
                    feeder_id: f.into(),
                },
            )
        });
        assert!(matches!(
            Topology::from_links(links),
            Err(Error::Topology(_))
        ));
    }

    fn dataset(period: PeriodId, meters: &[(&str, Option<usize>)]) -> FeederDataset {
        FeederDataset {
            feeder_id: "F".into(),
            period,
            meters: meters
                .iter()
                .map(|(id, hole)| {
                    let mut samples = vec![Some(1.0); period.hours()];
                    if let Some(h) = hole {
                        samples[*h] = None;
                    }
                    MeterReadings {
                        meter_id: id.to_string(),
                        samples,
                    }
                })
                .collect(),
            topology: Topology::default(),
        }
    }

    #[test]
    fn filter_drops_meter_missing_in_second_period() {
        let july = "2021-07".parse().unwrap();
        let a = dataset(june(), &[("m1", None), ("m2", None), ("m3", None)]);
        let b = dataset(july, &[("m1", None), ("m2", Some(17)), ("m3", None)]);
        let out = filter_complete(&[a, b]);
        for ds in &out {
            assert_eq!(ds.meter_ids().collect::<Vec<_>>(), ["m1", "m3"]);
        }
    }

    #[test]
    fn filter_identity_and_empty_cases() {
        let a = dataset(june(), &[("m1", None), ("m2", None)]);
        assert_eq!(filter_complete(std::slice::from_ref(&a)), vec![a.clone()]);

        let holes = dataset(june(), &[("m1", Some(0)), ("m2", Some(719))]);
        let out = filter_complete(&[holes]);
        assert!(out[0].meters.is_empty());
    }

    #[test]
    fn normalize_examples() {
        let s = MeterSeries::new("m", june(), vec![120.0; 720]);
        assert!(normalize(&s).unwrap().values.iter().all(|&v| v == 1.0));

        let s = MeterSeries::new("m", june(), vec![100.0, 120.0, 140.0]);
        let n = normalize(&s).unwrap();
        let expect = [5.0 / 6.0, 1.0, 7.0 / 6.0];
        for (got, want) in n.values.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }

        let s = MeterSeries::new("z", june(), vec![0.0; 10]);
        assert!(matches!(normalize(&s), Err(Error::DegenerateSeries { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_is_idempotent(values in prop::collection::vec(50.0f64..300.0, 1..800)) {
                let s = MeterSeries::new("m", june(), values);
                let once = normalize(&s).unwrap();
                prop_assert!((once.mean() - 1.0).abs() < 1e-12);
                let twice = normalize(&once).unwrap();
                for (a, b) in once.values.iter().zip(&twice.values) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }

            #[test]
            fn filter_is_idempotent(holes in prop::collection::vec(prop::option::of(0usize..720), 0..12)) {
                let ids: Vec<String> = (0..holes.len()).map(|i| format!("m{i}")).collect();
                let layout: Vec<(&str, Option<usize>)> =
                    ids.iter().map(String::as_str).zip(holes.iter().copied()).collect();
                let ds = dataset(june(), &layout);
                let once = filter_complete(&[ds]);
                let twice = filter_complete(&once);
                prop_assert_eq!(&once, &twice);
                let kept: Vec<&str> = once[0].meter_ids().collect();
                let expected: Vec<&str> =
                    layout.iter().filter(|(_, h)| h.is_none()).map(|(m, _)| *m).collect();
                prop_assert_eq!(kept, expected);
            }
        }
    }
}
