//! Grouped datasets: windowing, group-level splits and time-series ingestion.

use std::path::Path;

use chrono::NaiveDateTime;
use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::simulators::{TimeSeriesGroup, CHANNELS};
use crate::tensor::Tensor;

/// Sliding windows with stride 1 over a `len × m` series (`series[i]` is one
/// step): each input is the flattened `t × m` block and each target the `k × m`
/// block that follows it.
pub fn make_windows(series: &[Vec<f64>], t: usize, k: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if t == 0 || k == 0 {
        return Err(Error::Argument("window lengths must be positive".into()));
    }
    if series.len() < t + k {
        return Err(Error::Argument(format!(
            "series of length {} is shorter than t + k = {}",
            series.len(),
            t + k
        )));
    }
    let m = series[0].len();
    if series.iter().any(|s| s.len() != m) {
        return Err(Error::Argument("ragged series".into()));
    }
    Ok((0..=series.len() - t - k)
        .map(|s| (series[s..s + t].concat(), series[s + t..s + t + k].concat()))
        .collect())
}

/// One group of frames with ground-truth labels at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGroup {
    pub inputs: Tensor,
    pub labels: Tensor,
}

impl LabeledGroup {
    pub fn new(inputs: Tensor, labels: Tensor) -> Result<Self> {
        if !inputs.is_matrix() || !labels.is_matrix() || inputs.rows() != labels.rows() {
            return Err(Error::dimension("LabeledGroup", inputs.shape(), labels.shape()));
        }
        Ok(LabeledGroup { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Seeded permutation split into `(train, test)` index sets, both sorted.
pub fn split_indices(count: usize, n_test: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_test >= count {
        return Err(Error::Argument(format!(
            "cannot hold out {n_test} of {count} groups"
        )));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Whole-group train/test split.
pub fn split_groups<T: Clone>(groups: &[T], n_test: usize, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (train, test) = split_indices(groups.len(), n_test, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| groups[i].clone()).collect();
    Ok((pick(&train), pick(&test)))
}

pub const GROUP_HOURS: i64 = 28;
pub const BUCKET_HOURS: i64 = 4;
pub const TIMESERIES_HEADER: [&str; 5] = ["timestamp", "temp_in", "temp_out", "hum_in", "hum_out"];

fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v.floor() as i64);
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|t| t.and_utc().timestamp())
}

struct Reading {
    line: usize,
    time: i64,
    temp: [f64; 2],
    hum: Option<[f64; 2]>,
}

fn parse_rows<R: std::io::Read>(source: R) -> Result<Vec<Reading>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != TIMESERIES_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", TIMESERIES_HEADER.join(",")),
        });
    }
    let mut rows: Vec<Reading> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Parse { line, message };
        let time = parse_timestamp(&record[0]).ok_or_else(|| bad(format!("bad timestamp {:?}", &record[0])))?;
        let number = |i: usize| -> Result<Option<f64>> {
            let cell = &record[i];
            if cell.is_empty() {
                return Ok(None);
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(bad(format!("bad {} value {cell:?}", TIMESERIES_HEADER[i]))),
            }
        };
        let (Some(t_in), Some(t_out)) = (number(1)?, number(2)?) else {
            return Err(bad("temperature cells may not be empty".into()));
        };
        let hum = match (number(3)?, number(4)?) {
            (Some(a), Some(b)) => Some([a, b]),
            _ => None,
        };
        if rows.last().is_some_and(|r| r.time > time) {
            return Err(bad("timestamps must be non-decreasing".into()));
        }
        rows.push(Reading {
            line,
            time,
            temp: [t_in, t_out],
            hum,
        });
    }
    if rows.is_empty() {
        return Err(Error::Argument("time-series file has no data rows".into()));
    }
    Ok(rows)
}

/// Consecutive 28-hour spans starting at the first timestamp, each averaged
/// into seven 4-hour buckets. A group with any empty humidity cell keeps only
/// its temperature; a group with an empty bucket is dropped.
pub fn load_timeseries_csv(path: &Path) -> Result<Vec<TimeSeriesGroup>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_timeseries(file).map_err(|e| e.context(format!("reading {}", path.display())))
}

/// As [`load_timeseries_csv`] on any reader.
pub fn parse_timeseries<R: std::io::Read>(source: R) -> Result<Vec<TimeSeriesGroup>> {
    let rows = parse_rows(source)?;
    let buckets = (GROUP_HOURS / BUCKET_HOURS) as usize;
    let (span, width) = (GROUP_HOURS * 3600, BUCKET_HOURS * 3600);
    let start = rows[0].time;
    let mut groups = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let g = (rows[i].time - start) / span;
        let g_start = start + g * span;
        let mut sums = vec![[0.0; CHANNELS]; buckets];
        let mut counts = vec![0usize; buckets];
        let mut complete = true;
        let first_line = rows[i].line;
        while i < rows.len() && (rows[i].time - start) / span == g {
            let r = &rows[i];
            let b = ((r.time - g_start) / width) as usize;
            let s = &mut sums[b];
            s[0] += r.temp[0];
            s[1] += r.temp[1];
            match r.hum {
                Some(h) => {
                    s[2] += h[0];
                    s[3] += h[1];
                }
                None => complete = false,
            }
            counts[b] += 1;
            i += 1;
        }
        if counts.contains(&0) {
            warn!("dropping group starting at line {first_line}: a 4-hour bucket has no readings");
            continue;
        }
        let steps: Vec<[f64; CHANNELS]> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| s.map(|v| v / c as f64))
            .collect();
        groups.push(TimeSeriesGroup::from_steps(&steps, complete)?);
    }
    if groups.is_empty() {
        return Err(Error::Argument("no complete 28-hour span in the file".into()));
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;
    use std::fmt::Write;

    fn csv_text(rows: impl Iterator<Item = (i64, [Option<f64>; 4])>) -> String {
        let mut s = TIMESERIES_HEADER.join(",") + "\n";
        for (t, v) in rows {
            let cells: Vec<String> = v.iter().map(|c| c.map(|x| x.to_string()).unwrap_or_default()).collect();
            writeln!(s, "{t},{}", cells.join(",")).unwrap();
        }
        s
    }

    #[test]
    fn window_counts() {
        let series: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, -(i as f64)]).collect();
        assert_eq!(make_windows(&series[..7], 5, 2).unwrap().len(), 1);
        assert!(make_windows(&series[..6], 5, 2).is_err());
        let w = make_windows(&series, 5, 2).unwrap();
        assert_eq!(w.len(), 4);
        for (s, (x, y)) in w.iter().enumerate() {
            let want_x: Vec<f64> = (s..s + 5).flat_map(|i| [i as f64, -(i as f64)]).collect();
            let want_y: Vec<f64> = (s + 5..s + 7).flat_map(|i| [i as f64, -(i as f64)]).collect();
            assert_eq!(x, &want_x);
            assert_eq!(y, &want_y);
        }
    }

    #[test]
    fn splits_partition_and_repeat() {
        let groups: Vec<usize> = (0..35).collect();
        let (a, b) = split_groups(&groups, 7, 3).unwrap();
        assert_eq!(split_groups(&groups, 7, 3).unwrap(), (a.clone(), b.clone()));
        assert_eq!(b.len(), 7);
        let all: BTreeSet<usize> = a.iter().chain(&b).copied().collect();
        assert_eq!(all.len(), 35);
        assert!(split_groups(&groups, 35, 0).is_err());
    }

    #[test]
    fn split_frequencies_are_uniform() {
        let (n, n_test, seeds) = (20, 5, 50);
        let mut hits = vec![0usize; n];
        for seed in 0..seeds {
            for i in split_indices(n, n_test, seed).unwrap().1 {
                hits[i] += 1;
            }
        }
        let p = n_test as f64 / n as f64;
        let mean = seeds as f64 * p;
        let sd = (seeds as f64 * p * (1.0 - p)).sqrt();
        for h in hits {
            assert!((h as f64 - mean).abs() <= 3.0 * sd, "{h} vs {mean}±{sd}");
        }
    }

    #[test]
    fn constant_signal_resamples_to_constant() {
        let text = csv_text((0..28 * 4).map(|q| (q * 900, [Some(5.0); 4])));
        let groups = parse_timeseries(text.as_bytes()).unwrap();
        assert_eq!(groups.len(), 1);
        assert!(groups[0].is_complete());
        for i in 0..7 {
            assert_eq!(groups[0].step(i).unwrap(), [5.0; 4]);
        }
    }

    #[test]
    fn ramp_buckets_average_to_midpoints() {
        // value = minutes since start; bucket b covers minutes [240b, 240b+240)
        let text = csv_text((0..28 * 4).map(|q| {
            let v = (q * 15) as f64;
            (q * 900, [Some(v), Some(2.0 * v), Some(v), Some(-v)])
        }));
        let g = &parse_timeseries(text.as_bytes()).unwrap()[0];
        for b in 0..7 {
            let mid = 240.0 * b as f64 + 112.5;
            let s = g.step(b).unwrap();
            assert!((s[0] - mid).abs() < 1e-12);
            assert!((s[1] - 2.0 * mid).abs() < 1e-12);
            assert!((s[3] + mid).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_bucket_average_oracle() {
        // Irregular cadence, two groups, missing humidity in the second.
        let mut rows = Vec::new();
        let mut t = 0i64;
        let mut k = 0u64;
        while t < 2 * 28 * 3600 {
            k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let v = (k >> 11) as f64 / (1u64 << 53) as f64 * 30.0;
            let hum = !(t >= 28 * 3600 && t < 29 * 3600);
            rows.push((t, [Some(v), Some(v + 1.0), hum.then_some(v * 2.0), hum.then_some(v * 3.0)]));
            t += 600 + (k % 1200) as i64;
        }
        let groups = parse_timeseries(csv_text(rows.clone().into_iter()).as_bytes()).unwrap();
        assert_eq!(groups.len(), 2);
        assert!(groups[0].is_complete());
        assert!(!groups[1].is_complete());
        for (gi, g) in groups.iter().enumerate() {
            for b in 0..7 {
                let lo = gi as i64 * 28 * 3600 + b as i64 * 4 * 3600;
                let sel: Vec<f64> = rows
                    .iter()
                    .filter(|(t, _)| *t >= lo && *t < lo + 4 * 3600)
                    .map(|(_, v)| v[0].unwrap())
                    .collect();
                let mean = sel.iter().sum::<f64>() / sel.len() as f64;
                assert!((g.temperature()[b][0] - mean).abs() < 1e-12);
                assert!((g.temperature()[b][1] - mean - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn datetime_timestamps() {
        assert_eq!(parse_timestamp("1970-01-01 01:00"), Some(3600));
        assert_eq!(parse_timestamp("1970-01-02T00:00:30"), Some(86430));
        assert_eq!(parse_timestamp("noon"), None);
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "timestamp,temp_in,temp_out,hum_in,hum_out\n0,1,2,3,4\n900,x,2,3,4\n";
        match parse_timeseries(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "timestamp,temp_in,temp_out,hum_in,hum_out\n0,,2,3,4\n";
        assert!(matches!(parse_timeseries(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let text = "time,a,b,c,d\n0,1,2,3,4\n";
        assert!(matches!(parse_timeseries(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
        let empty = "timestamp,temp_in,temp_out,hum_in,hum_out\n";
        assert!(matches!(parse_timeseries(empty.as_bytes()), Err(Error::Argument(_))));
    }

    #[test]
    fn gaps_drop_groups() {
        let rows = (0..28 * 4).filter(|q| !(16..32).contains(q)).map(|q| (q * 900, [Some(1.0); 4]));
        assert!(parse_timeseries(csv_text(rows).as_bytes()).is_err());
        let partial = (0..2 * 28 * 4).filter(|q| !(20..40).contains(q) && !(128..144).contains(q));
        let groups = parse_timeseries(csv_text(partial.map(|q| (q * 900, [Some(1.0); 4]))).as_bytes()).unwrap();
        assert_eq!(groups.len(), 1);
    }
}
