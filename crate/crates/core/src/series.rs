//! Daily scalar time series: ingestion, linear detrending, min-max scaling,
//! chronological splitting and calendar features.
//!
//! A [`TimeSeries`] always covers a contiguous run of calendar days with one
//! finite value per day, so a value's position is also its day offset from
//! the first date.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Megawatt,
    Celsius,
    MetrePerSecond,
    Dimensionless,
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mw" | "megawatt" => Ok(Unit::Megawatt),
            "c" | "degc" | "celsius" => Ok(Unit::Celsius),
            "m/s" | "mps" | "metre_per_second" => Ok(Unit::MetrePerSecond),
            "" | "none" | "dimensionless" => Ok(Unit::Dimensionless),
            other => Err(Error::Spec(format!("unknown unit `{other}`"))),
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::Megawatt => "MW",
            Unit::Celsius => "degC",
            Unit::MetrePerSecond => "m/s",
            Unit::Dimensionless => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
    unit: Unit,
}

impl TimeSeries {
    /// Builds a series over consecutive days. Gaps, repeated or unordered
    /// dates and non-finite values are rejected.
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>, unit: Unit) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Shape {
                expected: dates.len(),
                got: values.len(),
            });
        }
        let mut missing = Vec::new();
        for pair in dates.windows(2) {
            let step = (pair[1] - pair[0]).num_days();
            if step <= 0 {
                return Err(Error::Spec(format!(
                    "dates must be strictly increasing ({} then {})",
                    pair[0], pair[1]
                )));
            }
            missing.extend(pair[0].iter_days().skip(1).take(step as usize - 1));
        }
        if !missing.is_empty() {
            return Err(Error::Gap { missing });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Spec(format!("non-finite value on {}", dates[i])));
        }
        Ok(TimeSeries {
            dates,
            values,
            unit,
        })
    }

    /// Consecutive daily series starting at `start`.
    pub fn from_start(start: NaiveDate, values: Vec<f64>, unit: Unit) -> Result<Self> {
        let dates = start.iter_days().take(values.len()).collect();
        Self::new(dates, values, unit)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.dates.first().copied()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.dates.last().copied()
    }

    pub fn value_on(&self, date: NaiveDate) -> Option<f64> {
        let first = self.first_date()?;
        let offset = (date - first).num_days();
        if offset < 0 {
            return None;
        }
        self.values.get(offset as usize).copied()
    }

    /// Same dates, new values. Used for predictions and transformed copies.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.dates.clone(), values, self.unit)
    }

    /// Sub-series of dates in `[from, to]`, both inclusive.
    pub fn between(&self, from: NaiveDate, to: NaiveDate) -> TimeSeries {
        let lo = self.dates.partition_point(|d| *d < from);
        let hi = self.dates.partition_point(|d| *d <= to);
        let hi = hi.max(lo);
        TimeSeries {
            dates: self.dates[lo..hi].to_vec(),
            values: self.values[lo..hi].to_vec(),
            unit: self.unit,
        }
    }

    /// Joins two adjacent segments (the second starting the day after the
    /// first ends).
    pub fn concat(&self, next: &TimeSeries) -> Result<TimeSeries> {
        let mut dates = self.dates.clone();
        dates.extend_from_slice(&next.dates);
        let mut values = self.values.clone();
        values.extend_from_slice(&next.values);
        TimeSeries::new(dates, values, self.unit)
    }

    /// Writes `date,value` rows with a header. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "value"])?;
        for (d, v) in self.dates.iter().zip(&self.values) {
            w.write_record([d.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Parses a timestamp column entry down to its calendar date. Accepts plain
/// dates, naive date-times with `T` or space separators, and RFC 3339
/// timestamps (the date as written, offsets are not applied).
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let s = raw.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d);
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.date());
        }
    }
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|dt| dt.naive_local().date())
}

pub fn load_series(
    path: impl AsRef<Path>,
    date_field: &str,
    value_field: &str,
    unit: Unit,
) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_series(file, date_field, value_field, unit)
}

/// Reads comma-separated rows and averages sub-daily rows into one value per
/// day.
pub fn read_series<R: Read>(
    input: R,
    date_field: &str,
    value_field: &str,
    unit: Unit,
) -> Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    };
    let date_col = column(date_field)?;
    let value_col = column(value_field)?;

    let mut days: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let raw_date = record.get(date_col).unwrap_or_default();
        let date = parse_date(raw_date).ok_or_else(|| Error::Parse {
            line,
            message: format!("unparseable timestamp `{raw_date}`"),
        })?;
        let raw_value = record.get(value_col).unwrap_or_default();
        let value: f64 = raw_value
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::Parse {
                line,
                message: format!("unparseable value `{raw_value}`"),
            })?;
        let slot = days.entry(date).or_insert((0.0, 0));
        slot.0 += value;
        slot.1 += 1;
    }
    if days.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let (dates, values) = days
        .into_iter()
        .map(|(d, (sum, n))| (d, sum / n as f64))
        .unzip();
    TimeSeries::new(dates, values, unit)
}

/// Least-squares line `value ≈ slope·t + intercept`, where `t` is the day
/// offset from `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub slope: f64,
    pub intercept: f64,
    pub origin: NaiveDate,
}

impl TrendModel {
    pub fn value_at(&self, date: NaiveDate) -> f64 {
        let t = (date - self.origin).num_days() as f64;
        self.slope * t + self.intercept
    }
}

pub fn fit_linear_trend(series: &TimeSeries) -> Result<TrendModel> {
    let n = series.len();
    if n < 2 {
        return Err(Error::Degenerate(
            "a linear trend needs at least two distinct dates".into(),
        ));
    }
    let nf = n as f64;
    let t_mean = (nf - 1.0) / 2.0;
    let y_mean = series.values.iter().sum::<f64>() / nf;
    let (mut sty, mut stt) = (0.0, 0.0);
    for (t, y) in series.values.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sty += dt * (y - y_mean);
        stt += dt * dt;
    }
    let slope = sty / stt;
    Ok(TrendModel {
        slope,
        intercept: y_mean - slope * t_mean,
        origin: series.dates[0],
    })
}

pub fn detrend(series: &TimeSeries, trend: &TrendModel) -> TimeSeries {
    let values = series
        .dates
        .iter()
        .zip(&series.values)
        .map(|(d, v)| v - trend.value_at(*d))
        .collect();
    TimeSeries {
        dates: series.dates.clone(),
        values,
        unit: series.unit,
    }
}

pub fn retrend(series: &TimeSeries, trend: &TrendModel) -> TimeSeries {
    let values = series
        .dates
        .iter()
        .zip(&series.values)
        .map(|(d, v)| v + trend.value_at(*d))
        .collect();
    TimeSeries {
        dates: series.dates.clone(),
        values,
        unit: series.unit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub min: f64,
    pub max: f64,
}

impl ScalingParams {
    pub fn fit(values: &[f64]) -> Result<Self> {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(Error::Degenerate(
                "cannot min-max scale a constant or empty series".into(),
            ));
        }
        Ok(ScalingParams { min, max })
    }

    /// Affine map sending `min` to 0 and `max` to 1. Not clipped.
    pub fn scale(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, s: f64) -> f64 {
        s * (self.max - self.min) + self.min
    }
}

pub fn scale_minmax(series: &TimeSeries) -> Result<(TimeSeries, ScalingParams)> {
    let params = ScalingParams::fit(&series.values)?;
    Ok((apply_scaling(series, &params), params))
}

pub fn apply_scaling(series: &TimeSeries, params: &ScalingParams) -> TimeSeries {
    TimeSeries {
        dates: series.dates.clone(),
        values: series.values.iter().map(|&v| params.scale(v)).collect(),
        unit: series.unit,
    }
}

pub fn unscale(series: &TimeSeries, params: &ScalingParams) -> TimeSeries {
    TimeSeries {
        dates: series.dates.clone(),
        values: series.values.iter().map(|&s| params.unscale(s)).collect(),
        unit: series.unit,
    }
}

/// Chronological boundaries. Each boundary date belongs to the earlier
/// segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: NaiveDate,
    pub validation_end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: TimeSeries,
    pub validation: TimeSeries,
    pub test: TimeSeries,
}

impl Split {
    /// Training and validation segments joined, as used for the final refit.
    pub fn train_validation(&self) -> TimeSeries {
        self.train
            .concat(&self.validation)
            .expect("adjacent split segments")
    }
}

pub fn split(series: &TimeSeries, spec: &SplitSpec) -> Result<Split> {
    let (first, last) = match (series.first_date(), series.last_date()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Spec("cannot split an empty series".into())),
    };
    if !(first <= spec.train_end && spec.train_end < spec.validation_end && spec.validation_end < last)
    {
        return Err(Error::Spec(format!(
            "split boundaries {} / {} must satisfy {first} <= train_end < validation_end < {last}",
            spec.train_end, spec.validation_end
        )));
    }
    let day = chrono::Days::new(1);
    Ok(Split {
        train: series.between(first, spec.train_end),
        validation: series.between(spec.train_end + day, spec.validation_end),
        test: series.between(spec.validation_end + day, last),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalendarFeatures {
    /// 0 on January 1st, 1 on December 31st, linear in between.
    pub time_of_year: f64,
    /// Monday = 0 … Sunday = 6.
    pub day_of_week: u32,
}

impl CalendarFeatures {
    pub fn of(date: NaiveDate) -> Self {
        let days_in_year = if date.leap_year() { 366.0 } else { 365.0 };
        CalendarFeatures {
            time_of_year: f64::from(date.ordinal0()) / (days_in_year - 1.0),
            day_of_week: date.weekday().num_days_from_monday(),
        }
    }
}

pub fn calendar_features(dates: &[NaiveDate]) -> Vec<CalendarFeatures> {
    dates.iter().map(|&d| CalendarFeatures::of(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn line(n: usize, mut f: impl FnMut(f64) -> f64) -> TimeSeries {
        let v = (0..n).map(|t| f(t as f64)).collect();
        TimeSeries::from_start(ymd(2010, 1, 1), v, Unit::Megawatt).unwrap()
    }

    #[test]
    fn half_hourly_rows_average_to_one_day() {
        let mut csv = String::from("time,load\n");
        for slot in 0..48 {
            csv.push_str(&format!("2016-02-01T{:02}:{:02}:00,100\n", slot / 2, (slot % 2) * 30));
        }
        let s = read_series(csv.as_bytes(), "time", "load", Unit::Megawatt).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.values(), &[100.0]);
    }

    #[test]
    fn three_hourly_temperatures_use_arithmetic_mean() {
        let mut csv = String::from("ts,t2m\n");
        for (i, v) in (0..8).map(|i| (i, 3.0 * i as f64)) {
            csv.push_str(&format!("2016-02-01 {:02}:00,{v}\n", 3 * i));
        }
        let s = read_series(csv.as_bytes(), "ts", "t2m", Unit::Celsius).unwrap();
        let oracle = (0..8).map(|i| 3.0 * i as f64).sum::<f64>() / 8.0;
        assert_eq!(s.values(), &[oracle]);
        assert_eq!(oracle, 10.5);
    }

    #[test]
    fn gap_is_reported() {
        let csv = "date,v\n2016-01-01,1\n2016-01-03,2\n";
        match read_series(csv.as_bytes(), "date", "v", Unit::Dimensionless) {
            Err(Error::Gap { missing }) => assert_eq!(missing, vec![ymd(2016, 1, 2)]),
            other => panic!("expected gap error, got {other:?}"),
        }
    }

    #[test]
    fn bad_row_reports_line_number() {
        let csv = "date,v\n2016-01-01,1\n2016-01-02,abc\n";
        match read_series(csv.as_bytes(), "date", "v", Unit::Dimensionless) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let csv = "date,v\nyesterday,1\n";
        assert!(matches!(
            read_series(csv.as_bytes(), "date", "v", Unit::Dimensionless),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn rfc3339_timestamps_keep_written_date() {
        assert_eq!(parse_date("2016-02-01T23:30:00+01:00"), Some(ymd(2016, 2, 1)));
        assert_eq!(parse_date("2016-02-01T23:30:00Z"), Some(ymd(2016, 2, 1)));
        assert_eq!(parse_date("2016-02-01"), Some(ymd(2016, 2, 1)));
        assert_eq!(parse_date("01/02/2016"), None);
    }

    #[test]
    fn trend_of_constant_and_exact_line() {
        let m = fit_linear_trend(&line(10, |_| 5.0)).unwrap();
        assert_eq!(m.slope, 0.0);
        assert_eq!(m.intercept, 5.0);
        let m = fit_linear_trend(&line(10, |t| 2.0 * t + 1.0)).unwrap();
        assert!((m.slope - 2.0).abs() < 1e-14);
        assert!((m.intercept - 1.0).abs() < 1e-13);
    }

    #[test]
    fn trend_needs_two_points() {
        assert!(matches!(fit_linear_trend(&line(1, |_| 1.0)), Err(Error::Degenerate(_))));
    }

    /// Solves the 2×2 normal equations [Σ1 Σt; Σt Σt²]·[b a]ᵀ = [Σy Σty]ᵀ.
    fn ols_oracle(y: &[f64]) -> (f64, f64) {
        let (mut s1, mut st, mut stt, mut sy, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (t, &v) in y.iter().enumerate() {
            let t = t as f64;
            s1 += 1.0;
            st += t;
            stt += t * t;
            sy += v;
            sty += t * v;
        }
        let det = s1 * stt - st * st;
        let b = (sy * stt - st * sty) / det;
        let a = (s1 * sty - st * sy) / det;
        (a, b)
    }

    #[test]
    fn noisy_trend_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = line(200, |t| 2.0 * t + 1.0 + rng.random_range(-1.0..1.0));
        let m = fit_linear_trend(&s).unwrap();
        let (a, b) = ols_oracle(s.values());
        assert!((m.slope - a).abs() < 1e-10);
        assert!((m.intercept - b).abs() < 1e-10);

        let r = detrend(&s, &m);
        let mean = r.values().iter().sum::<f64>() / r.len() as f64;
        assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn detrend_exact_line_is_zero() {
        let s = line(20, |t| 2.0 * t + 1.0);
        let m = TrendModel {
            slope: 2.0,
            intercept: 1.0,
            origin: ymd(2010, 1, 1),
        };
        assert!(detrend(&s, &m).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trend_extrapolates_by_date() {
        let s = line(30, |t| 3.0 * t - 4.0);
        let m = fit_linear_trend(&s.between(ymd(2010, 1, 1), ymd(2010, 1, 10))).unwrap();
        let tail = s.between(ymd(2010, 1, 21), ymd(2010, 1, 30));
        assert!(detrend(&tail, &m).values().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn minmax_examples() {
        let s = TimeSeries::from_start(ymd(2020, 1, 1), vec![10.0, 20.0, 30.0], Unit::Celsius).unwrap();
        let (scaled, p) = scale_minmax(&s).unwrap();
        assert_eq!(scaled.values(), &[0.0, 0.5, 1.0]);
        assert_eq!(p, ScalingParams { min: 10.0, max: 30.0 });
        assert_eq!(unscale(&scaled, &p).values(), &[10.0, 20.0, 30.0]);
        assert_eq!(p.scale(35.0), 1.25);
        let flat = TimeSeries::from_start(ymd(2020, 1, 1), vec![3.0; 4], Unit::Celsius).unwrap();
        assert!(matches!(scale_minmax(&flat), Err(Error::Degenerate(_))));
    }

    #[test]
    fn ten_day_split() {
        let s = line(10, |t| t);
        let spec = SplitSpec {
            train_end: ymd(2010, 1, 5),
            validation_end: ymd(2010, 1, 7),
        };
        let parts = split(&s, &spec).unwrap();
        assert_eq!((parts.train.len(), parts.validation.len(), parts.test.len()), (5, 2, 3));
        let bad = SplitSpec {
            train_end: ymd(2010, 1, 7),
            validation_end: ymd(2010, 1, 10),
        };
        assert!(matches!(split(&s, &bad), Err(Error::Spec(_))));
    }

    fn span(from: NaiveDate, to: NaiveDate) -> TimeSeries {
        let n = (to - from).num_days() as usize + 1;
        TimeSeries::from_start(from, vec![1.0; n], Unit::Megawatt).unwrap()
    }

    #[test]
    fn french_and_uk_split_lengths() {
        let spec = SplitSpec {
            train_end: ymd(2013, 12, 31),
            validation_end: ymd(2015, 12, 31),
        };
        let fr = split(&span(ymd(2007, 1, 1), ymd(2018, 8, 31)), &spec).unwrap();
        assert_eq!((fr.train.len(), fr.validation.len(), fr.test.len()), (2557, 730, 974));
        let uk = split(&span(ymd(2006, 1, 1), ymd(2018, 12, 31)), &spec).unwrap();
        assert_eq!((uk.train.len(), uk.validation.len(), uk.test.len()), (2922, 730, 1096));
    }

    #[test]
    fn calendar_endpoints() {
        assert_eq!(CalendarFeatures::of(ymd(2015, 1, 1)).time_of_year, 0.0);
        assert_eq!(CalendarFeatures::of(ymd(2015, 12, 31)).time_of_year, 1.0);
        assert_eq!(CalendarFeatures::of(ymd(2016, 12, 31)).time_of_year, 1.0);
        assert_eq!(CalendarFeatures::of(ymd(2015, 7, 2)).time_of_year, 182.0 / 364.0);
        assert_eq!(CalendarFeatures::of(ymd(2015, 7, 2)).time_of_year, 0.5);
        // 2016-02-01 was a Monday
        assert_eq!(CalendarFeatures::of(ymd(2016, 2, 1)).day_of_week, 0);
        assert_eq!(CalendarFeatures::of(ymd(2016, 2, 7)).day_of_week, 6);
    }

    #[test]
    fn time_of_year_resets_at_new_year() {
        let dates: Vec<_> = ymd(2011, 6, 1).iter_days().take(1000).collect();
        let feats = calendar_features(&dates);
        for (w, d) in feats.windows(2).zip(dates.windows(2)) {
            if d[0].year() == d[1].year() {
                assert!(w[1].time_of_year > w[0].time_of_year);
            } else {
                assert_eq!(w[1].time_of_year, 0.0);
            }
        }
    }

    #[test]
    fn csv_output_round_trips() {
        let s = line(5, |t| t / 3.0 + 0.1);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = read_series(buf.as_slice(), "date", "value", Unit::Megawatt).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn trend_residuals_are_orthogonal(ys in proptest::collection::vec(-1e3f64..1e3, 2..200)) {
            let s = line(ys.len(), |t| ys[t as usize]);
            let m = fit_linear_trend(&s).unwrap();
            let r = detrend(&s, &m);
            let scale: f64 = ys.iter().map(|v| v.abs()).sum::<f64>().max(1.0) * ys.len() as f64;
            let s0: f64 = r.values().iter().sum();
            let s1: f64 = r.values().iter().enumerate().map(|(t, v)| t as f64 * v).sum();
            prop_assert!(s0.abs() <= 1e-8 * scale);
            prop_assert!(s1.abs() <= 1e-8 * scale * ys.len() as f64);
        }

        // Load-like magnitudes: value and trend within a factor of two, where
        // the subtraction is exact and the round trip is bit-identical.
        #[test]
        fn retrend_inverts_detrend(
            ys in proptest::collection::vec(30_000f64..60_000.0, 2..100),
            slope in -5.0f64..5.0,
        ) {
            let s = line(ys.len(), |t| ys[t as usize]);
            let m = TrendModel { slope, intercept: 45_000.0, origin: ymd(2010, 1, 1) };
            prop_assert_eq!(retrend(&detrend(&s, &m), &m), s);
        }

        #[test]
        fn unscale_inverts_scale(ys in proptest::collection::vec(-1e4f64..1e4, 2..100)) {
            prop_assume!(ys.iter().any(|&v| v != ys[0]));
            let s = line(ys.len(), |t| ys[t as usize]);
            let (scaled, p) = scale_minmax(&s).unwrap();
            let back = unscale(&scaled, &p);
            for (a, b) in back.values().iter().zip(s.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(p.max - p.min));
            }
        }

        #[test]
        fn split_partitions_series(n in 4usize..200, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let s = line(n, |t| t);
            let i = (a * (n - 3) as f64) as usize;
            let j = i + 1 + (b * (n - 3 - i) as f64) as usize;
            let spec = SplitSpec { train_end: s.dates()[i], validation_end: s.dates()[j] };
            let p = split(&s, &spec).unwrap();
            let joined = p.train_validation().concat(&p.test).unwrap();
            prop_assert_eq!(joined, s);
        }
    }
}
