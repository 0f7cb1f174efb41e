//! Observable channels, synthetic noise and the measurement file format.
//!
//! Only the two rotation angles and their rates are observable; the motor
//! charge and current are dropped. Noise is zero-mean Gaussian with a single
//! standard deviation shared by all four channels. Draws come from a ChaCha8
//! stream seeded with `seed_from_u64(seed)` and mapped through the
//! `rand_distr` ziggurat `StandardNormal`, channel by channel in the order
//! θ1, θ2, θ̇1, θ̇2.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sim::Trajectory;

pub const CSV_HEADER: &str = "t,theta1,theta2,dtheta1,dtheta2";

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub times: Vec<f64>,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub dtheta1: Vec<f64>,
    pub dtheta2: Vec<f64>,
    pub sigma_n: f64,
    pub seed: Option<u64>,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The four channels in misfit order.
    pub fn channels(&self) -> [&[f64]; 4] {
        [&self.theta1, &self.theta2, &self.dtheta1, &self.dtheta2]
    }

    fn channels_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.theta1,
            &mut self.theta2,
            &mut self.dtheta1,
            &mut self.dtheta2,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::InvalidMeasurements("no samples".into()));
        }
        if self.channels().iter().any(|c| c.len() != self.times.len()) {
            return Err(Error::InvalidMeasurements(
                "channel lengths differ from the number of timestamps".into(),
            ));
        }
        if let Some(k) = self.times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidMeasurements(format!(
                "non-monotonic time at sample {}",
                k + 1
            )));
        }
        if !(self.sigma_n >= 0.0) {
            return Err(Error::InvalidMeasurements(format!(
                "sigma_n must be >= 0, got {}",
                self.sigma_n
            )));
        }
        Ok(())
    }

    /// Returns `(t0, dt)` when the timestamps are evenly spaced within `tol`
    /// seconds of `t0 + k·dt`.
    pub fn uniform_grid(&self, tol: f64) -> Option<(f64, f64)> {
        let t0 = *self.times.first()?;
        let n = self.times.len();
        if n == 1 {
            return None;
        }
        let dt = (self.times[n - 1] - t0) / (n - 1) as f64;
        let uniform = self
            .times
            .iter()
            .enumerate()
            .all(|(k, &t)| (t - (t0 + k as f64 * dt)).abs() <= tol);
        uniform.then_some((t0, dt))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# sigma_n={}", self.sigma_n)?;
        if let Some(seed) = self.seed {
            writeln!(out, "# seed={seed}")?;
        }
        writeln!(out, "{CSV_HEADER}")?;
        for k in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.times[k], self.theta1[k], self.theta2[k], self.dtheta1[k], self.dtheta2[k]
            )?;
        }
        Ok(())
    }
}

/// Noise-free projection of a trajectory onto the observable channels.
pub fn observe(traj: &Trajectory) -> MeasurementSet {
    MeasurementSet {
        times: traj.times().collect(),
        theta1: traj.states.iter().map(|s| s.theta1).collect(),
        theta2: traj.states.iter().map(|s| s.theta2).collect(),
        dtheta1: traj.states.iter().map(|s| s.dtheta1).collect(),
        dtheta2: traj.states.iter().map(|s| s.dtheta2).collect(),
        sigma_n: 0.0,
        seed: None,
    }
}

/// Adds i.i.d. `Normal(0, sigma_n²)` noise to every sample of every channel.
pub fn add_noise(m: &MeasurementSet, sigma_n: f64, seed: u64) -> MeasurementSet {
    let mut noisy = m.clone();
    noisy.sigma_n = sigma_n;
    noisy.seed = Some(seed);
    if sigma_n == 0.0 {
        return noisy;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for channel in noisy.channels_mut() {
        for x in channel.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x += sigma_n * z;
        }
    }
    noisy
}

pub fn save_measurements(m: &MeasurementSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    m.write_csv(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_measurements(&text).map_err(|msg| Error::format(path, msg))
}

/// Parses the measurement CSV format. Errors carry line and column context.
pub fn parse_measurements(text: &str) -> std::result::Result<MeasurementSet, String> {
    let mut sigma_n = 0.0;
    let mut seed = None;
    for (lineno, line) in text.lines().enumerate() {
        let Some(comment) = line.trim_start().strip_prefix('#') else {
            continue;
        };
        for token in comment.split([' ', ',', '\t']) {
            if let Some(v) = token.strip_prefix("sigma_n=") {
                sigma_n = v
                    .parse()
                    .map_err(|_| format!("line {}: bad sigma_n `{v}`", lineno + 1))?;
            } else if let Some(v) = token.strip_prefix("seed=") {
                seed = Some(
                    v.parse()
                        .map_err(|_| format!("line {}: bad seed `{v}`", lineno + 1))?,
                );
            }
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = match reader.headers() {
        Ok(h) if !h.is_empty() && !(h.len() == 1 && h[0].is_empty()) => h.clone(),
        Ok(_) => return Err("no samples".into()),
        Err(e) => return Err(e.to_string()),
    };
    let names = ["t", "theta1", "theta2", "dtheta1", "dtheta2"];
    let mut columns = [0usize; 5];
    for (slot, name) in columns.iter_mut().zip(names) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("missing column `{name}`"))?;
    }

    let mut m = MeasurementSet {
        times: Vec::new(),
        theta1: Vec::new(),
        theta2: Vec::new(),
        dtheta1: Vec::new(),
        dtheta2: Vec::new(),
        sigma_n,
        seed,
    };
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = [0.0; 5];
        for ((value, &col), name) in row.iter_mut().zip(&columns).zip(names) {
            let cell = record
                .get(col)
                .ok_or_else(|| format!("line {line}: missing value for column `{name}`"))?;
            *value = cell
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| {
                    format!("line {line}, column `{name}`: non-numeric cell `{cell}`")
                })?;
        }
        if let Some(&prev) = m.times.last() {
            if !(row[0] > prev) {
                return Err(format!(
                    "line {line}: non-monotonic time {} after {prev}",
                    row[0]
                ));
            }
        }
        m.times.push(row[0]);
        m.theta1.push(row[1]);
        m.theta2.push(row[2]);
        m.dtheta1.push(row[3]);
        m.dtheta2.push(row[4]);
    }
    if m.is_empty() {
        return Err("no samples".into());
    }
    if !(m.sigma_n >= 0.0) {
        return Err(format!("sigma_n must be >= 0, got {}", m.sigma_n));
    }
    Ok(m)
}
