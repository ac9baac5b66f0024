//! Measured or black-box admittance tables.

use std::io::{Read, Write};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::statespace::Complex64;
use super::DevError;

pub const CSV_HEADER: [&str; 9] = [
    "freq_hz", "re_dd", "im_dd", "re_dq", "im_dq", "re_qd", "im_qd", "re_qq", "im_qq",
];

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Row {
    freq_hz: f64,
    re_dd: f64,
    im_dd: f64,
    re_dq: f64,
    im_dq: f64,
    re_qd: f64,
    im_qd: f64,
    re_qq: f64,
    im_qq: f64,
}

/// Admittance samples interpolated linearly in log-frequency, entry by entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedResponse {
    freqs_hz: Vec<f64>,
    values: Vec<Matrix2<Complex64>>,
}

impl TabulatedResponse {
    pub fn new(samples: Vec<(f64, Matrix2<Complex64>)>) -> Result<Self, DevError> {
        if samples.len() < 2 {
            return Err(DevError::Table("at least two samples are required".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(DevError::Table(format!(
                    "frequencies must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if !(samples[0].0 > 0.0) {
            return Err(DevError::Table("frequencies must be positive".into()));
        }
        if samples
            .iter()
            .any(|(_, m)| m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()))
        {
            return Err(DevError::Table("non-finite admittance entry".into()));
        }
        let (freqs_hz, values) = samples.into_iter().unzip();
        Ok(Self { freqs_hz, values })
    }

    pub fn map(&self, f: impl Fn(&Matrix2<Complex64>) -> Matrix2<Complex64>) -> Self {
        Self {
            freqs_hz: self.freqs_hz.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, &Matrix2<Complex64>)> {
        self.freqs_hz.iter().copied().zip(&self.values)
    }

    pub fn range_hz(&self) -> (f64, f64) {
        (self.freqs_hz[0], self.freqs_hz[self.freqs_hz.len() - 1])
    }

    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }

    pub fn at_hz(&self, f: f64) -> Result<Matrix2<Complex64>, DevError> {
        let (lo, hi) = self.range_hz();
        if f.is_nan() || f < lo || f > hi {
            return Err(DevError::OutOfRange { freq_hz: f, lo, hi });
        }
        let k = match self.freqs_hz.binary_search_by(|x| x.partial_cmp(&f).unwrap()) {
            Ok(k) => return Ok(self.values[k]),
            Err(k) => k - 1,
        };
        let (f0, f1) = (self.freqs_hz[k], self.freqs_hz[k + 1]);
        let t = (f.ln() - f0.ln()) / (f1.ln() - f0.ln());
        Ok(self.values[k] * Complex64::new(1.0 - t, 0.0) + self.values[k + 1] * Complex64::new(t, 0.0))
    }

    /// Response at `ω` (rad/s); negative frequencies use conjugate symmetry.
    pub fn at_omega(&self, omega: f64) -> Result<Matrix2<Complex64>, DevError> {
        let f = omega.abs() / (2.0 * std::f64::consts::PI);
        let m = self.at_hz(f)?;
        Ok(if omega < 0.0 { m.map(|z| z.conj()) } else { m })
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, DevError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| DevError::Table(e.to_string()))?.clone();
        for (k, want) in CSV_HEADER.iter().enumerate() {
            if headers.get(k) != Some(*want) {
                return Err(DevError::Table(format!(
                    "column {} must be `{}`, found `{}`",
                    k + 1,
                    want,
                    headers.get(k).unwrap_or("")
                )));
            }
        }
        let mut samples = Vec::new();
        for (line, rec) in rdr.deserialize::<Row>().enumerate() {
            let r = rec.map_err(|e| DevError::Table(format!("row {}: {e}", line + 2)))?;
            samples.push((
                r.freq_hz,
                Matrix2::new(
                    Complex64::new(r.re_dd, r.im_dd),
                    Complex64::new(r.re_dq, r.im_dq),
                    Complex64::new(r.re_qd, r.im_qd),
                    Complex64::new(r.re_qq, r.im_qq),
                ),
            ));
        }
        Self::new(samples)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DevError> {
        let mut w = csv::Writer::from_writer(writer);
        for (f, m) in self.freqs_hz.iter().zip(&self.values) {
            w.serialize(Row {
                freq_hz: *f,
                re_dd: m[(0, 0)].re,
                im_dd: m[(0, 0)].im,
                re_dq: m[(0, 1)].re,
                im_dq: m[(0, 1)].im,
                re_qd: m[(1, 0)].re,
                im_qd: m[(1, 0)].im,
                re_qq: m[(1, 1)].re,
                im_qq: m[(1, 1)].im,
            })
            .map_err(|e| DevError::Table(e.to_string()))?;
        }
        w.flush().map_err(|e| DevError::Table(e.to_string()))?;
        Ok(())
    }
}
