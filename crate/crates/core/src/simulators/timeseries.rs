use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHANNELS: usize = 4;

/// Channel order of every time-series step vector.
pub const CHANNEL_NAMES: [&str; CHANNELS] = ["temp_in", "temp_out", "hum_in", "hum_out"];

/// One contiguous span of readings. Incomplete groups carry temperature only.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesGroup {
    temperature: Vec<[f64; 2]>,
    humidity: Option<Vec<[f64; 2]>>,
}

impl TimeSeriesGroup {
    pub fn new(temperature: Vec<[f64; 2]>, humidity: Option<Vec<[f64; 2]>>) -> Result<Self> {
        if temperature.is_empty() {
            return Err(Error::Argument("empty time-series group".into()));
        }
        if let Some(h) = &humidity {
            if h.len() != temperature.len() {
                return Err(Error::dimension(
                    "TimeSeriesGroup",
                    &[temperature.len()],
                    &[h.len()],
                ));
            }
        }
        Ok(TimeSeriesGroup {
            temperature,
            humidity,
        })
    }

    /// Splits `[temp_in, temp_out, hum_in, hum_out]` rows; humidity is kept
    /// only when `complete`.
    pub fn from_steps(steps: &[[f64; CHANNELS]], complete: bool) -> Result<Self> {
        let temperature = steps.iter().map(|s| [s[0], s[1]]).collect();
        let humidity = complete.then(|| steps.iter().map(|s| [s[2], s[3]]).collect());
        Self::new(temperature, humidity)
    }

    pub fn len(&self) -> usize {
        self.temperature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temperature.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.humidity.is_some()
    }

    pub fn temperature(&self) -> &[[f64; 2]] {
        &self.temperature
    }

    pub fn humidity(&self) -> Option<&[[f64; 2]]> {
        self.humidity.as_deref()
    }

    /// All four channels at step `i`, if humidity is present.
    pub fn step(&self, i: usize) -> Option<[f64; CHANNELS]> {
        let t = self.temperature[i];
        self.humidity.as_ref().map(|h| [t[0], t[1], h[i][0], h[i][1]])
    }

    /// Drops humidity, turning the group into a temperature-only group.
    pub fn without_humidity(&self) -> Self {
        TimeSeriesGroup {
            temperature: self.temperature.clone(),
            humidity: None,
        }
    }
}

/// Provenance and values of one simulated target window.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDraw {
    pub temperature_group: usize,
    pub humidity_group: usize,
    /// Index of the first target step within each source group.
    pub temperature_start: usize,
    pub humidity_start: usize,
    /// `k` step vectors in channel order, flattened step-major.
    pub values: Vec<f64>,
}

/// Draws the last `k` steps of a random `t + k` window. Temperature comes from
/// a uniformly chosen group; humidity from the same group when it is complete
/// and from a uniformly chosen complete group otherwise, so humidity is
/// uniform over complete groups.
pub fn draw_timeseries_label<R: Rng + ?Sized>(
    groups: &[TimeSeriesGroup],
    t: usize,
    k: usize,
    rng: &mut R,
) -> Result<LabelDraw> {
    if k == 0 {
        return Err(Error::Argument("target window must be non-empty".into()));
    }
    if groups.iter().any(|g| g.len() < t + k) {
        return Err(Error::Config(format!("every group needs at least {} steps", t + k)));
    }
    let complete: Vec<usize> = (0..groups.len()).filter(|&i| groups[i].is_complete()).collect();
    if complete.is_empty() {
        return Err(Error::Config(
            "label simulation needs at least one complete group".into(),
        ));
    }
    let tg = rng.gen_range(0..groups.len());
    let ts = t + rng.gen_range(0..=groups[tg].len() - t - k);
    let (hg, hs) = if groups[tg].is_complete() {
        (tg, ts)
    } else {
        let hg = complete[rng.gen_range(0..complete.len())];
        (hg, t + rng.gen_range(0..=groups[hg].len() - t - k))
    };
    let hum = groups[hg].humidity().unwrap();
    let mut values = Vec::with_capacity(k * CHANNELS);
    for j in 0..k {
        let temp = groups[tg].temperature()[ts + j];
        let h = hum[hs + j];
        values.extend_from_slice(&[temp[0], temp[1], h[0], h[1]]);
    }
    Ok(LabelDraw {
        temperature_group: tg,
        humidity_group: hg,
        temperature_start: ts,
        humidity_start: hs,
        values,
    })
}

/// `batch × (k·4)` target windows drawn independently.
pub fn sample_timeseries_labels<R: Rng + ?Sized>(
    groups: &[TimeSeriesGroup],
    t: usize,
    k: usize,
    batch: usize,
    rng: &mut R,
) -> Result<Tensor> {
    if batch == 0 {
        return Err(Error::Argument("batch must be positive".into()));
    }
    let mut data = Vec::with_capacity(batch * k * CHANNELS);
    for _ in 0..batch {
        data.extend(draw_timeseries_label(groups, t, k, rng)?.values);
    }
    Ok(Tensor::matrix(batch, k * CHANNELS, data))
}
