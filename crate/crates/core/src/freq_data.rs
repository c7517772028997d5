//! Frequency-response data sets and rational transfer matrices.
//!
//! Frequencies are angular (rad/s) and strictly positive. Only the positive
//! half of the spectrum is stored; the conjugate half is implied by realness
//! and materialized by the Loewner module when it needs it.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::poly::Poly;

/// One frequency-response measurement `(omega, Phi(j omega))`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySample {
    pub omega: f64,
    pub response: Array2<Complex64>,
}

/// An ordered set of frequency-response samples of an `n_o x n_i` system.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyDataset {
    samples: Vec<FrequencySample>,
    n_o: usize,
    n_i: usize,
}

impl FrequencyDataset {
    /// Validates and wraps a list of samples. Frequencies must already be
    /// strictly increasing.
    pub fn new(samples: Vec<FrequencySample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a data set needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        let (n_o, n_i) = samples[0].response.dim();
        if n_o == 0 || n_i == 0 {
            return Err(Error::DimensionMismatch("empty response matrix".into()));
        }
        for (k, smp) in samples.iter().enumerate() {
            if !(smp.omega.is_finite() && smp.omega > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sample {k}: frequency {} is not a positive finite number",
                    smp.omega
                )));
            }
            if smp.response.dim() != (n_o, n_i) {
                return Err(Error::DimensionMismatch(format!(
                    "sample {k} has shape {:?}, expected ({n_o}, {n_i})",
                    smp.response.dim()
                )));
            }
            if smp.response.iter().any(|z| !z.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "sample {k} at omega = {} has a non-finite entry",
                    smp.omega
                )));
            }
            if k > 0 && smp.omega <= samples[k - 1].omega {
                return Err(Error::InvalidArgument(format!(
                    "frequencies must be strictly increasing ({} follows {})",
                    smp.omega,
                    samples[k - 1].omega
                )));
            }
        }
        Ok(FrequencyDataset { samples, n_o, n_i })
    }

    pub fn samples(&self) -> &[FrequencySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_outputs(&self) -> usize {
        self.n_o
    }

    pub fn n_inputs(&self) -> usize {
        self.n_i
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.omega).collect()
    }

    /// Lowest and highest sampled frequency.
    pub fn band(&self) -> (f64, f64) {
        (self.samples[0].omega, self.samples[self.len() - 1].omega)
    }

    /// Same frequencies with every response replaced by `f(omega, response)`.
    pub fn map_responses<F>(&self, mut f: F) -> Result<FrequencyDataset>
    where
        F: FnMut(f64, &Array2<Complex64>) -> Result<Array2<Complex64>>,
    {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(FrequencySample {
                    omega: s.omega,
                    response: f(s.omega, &s.response)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FrequencyDataset::new(samples)
    }

    /// SHA-256 of the canonical CSV body, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        write_dataset(&mut buf, self, &[]).expect("writing to memory cannot fail");
        Sha256::digest(&buf)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// One entry `num(s) / den(s)` of a rational transfer matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalEntry {
    pub num: Poly,
    pub den: Poly,
}

/// Real-rational transfer matrix stored entrywise.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTransferMatrix {
    n_o: usize,
    n_i: usize,
    entries: Vec<RationalEntry>,
}

impl RationalTransferMatrix {
    /// Entries are given row-major (`n_o` rows of `n_i`).
    pub fn new(n_o: usize, n_i: usize, entries: Vec<RationalEntry>) -> Result<Self> {
        if n_o == 0 || n_i == 0 || entries.len() != n_o * n_i {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {n_o}x{n_i} transfer matrix",
                entries.len()
            )));
        }
        for (k, e) in entries.iter().enumerate() {
            if e.den.is_zero() {
                return Err(Error::InvalidArgument(format!(
                    "entry ({}, {}) has a zero denominator",
                    k / n_i + 1,
                    k % n_i + 1
                )));
            }
        }
        Ok(RationalTransferMatrix { n_o, n_i, entries })
    }

    pub fn siso(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        Self::new(
            1,
            1,
            vec![RationalEntry {
                num: Poly::new(num),
                den: Poly::new(den),
            }],
        )
    }

    pub fn n_outputs(&self) -> usize {
        self.n_o
    }

    pub fn n_inputs(&self) -> usize {
        self.n_i
    }

    pub fn entry(&self, i: usize, j: usize) -> &RationalEntry {
        &self.entries[i * self.n_i + j]
    }

    pub fn entries(&self) -> &[RationalEntry] {
        &self.entries
    }

    /// Entrywise evaluation; fails at a root of any denominator.
    pub fn eval(&self, s: Complex64) -> Result<Array2<Complex64>> {
        let mut out = Array2::zeros((self.n_o, self.n_i));
        for i in 0..self.n_o {
            for j in 0..self.n_i {
                let e = self.entry(i, j);
                let d = e.den.eval(s);
                if d.norm() <= 1e-14 * e.den.eval_abs(s) {
                    return Err(Error::Singular {
                        what: format!("denominator of entry ({}, {}) vanishes", i + 1, j + 1),
                        at: s,
                    });
                }
                out[[i, j]] = e.num.eval(s) / d;
            }
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String> {
        let mut num = Vec::new();
        let mut den = Vec::new();
        for i in 0..self.n_o {
            num.push(
                (0..self.n_i)
                    .map(|j| self.entry(i, j).num.coeffs().to_vec())
                    .collect::<Vec<_>>(),
            );
            den.push(
                (0..self.n_i)
                    .map(|j| self.entry(i, j).den.coeffs().to_vec())
                    .collect::<Vec<_>>(),
            );
        }
        let file = RationalFile {
            n_outputs: self.n_o,
            n_inputs: self.n_i,
            num,
            den,
        };
        Ok(toml::to_string(&file)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: RationalFile = toml::from_str(text)?;
        let (n_o, n_i) = (file.n_outputs, file.n_inputs);
        let shape_ok = |grid: &Vec<Vec<Vec<f64>>>| {
            grid.len() == n_o && grid.iter().all(|row| row.len() == n_i)
        };
        if !shape_ok(&file.num) || !shape_ok(&file.den) {
            return Err(Error::DimensionMismatch(format!(
                "num/den grids do not match n_outputs = {n_o}, n_inputs = {n_i}"
            )));
        }
        let mut entries = Vec::with_capacity(n_o * n_i);
        for i in 0..n_o {
            for j in 0..n_i {
                entries.push(RationalEntry {
                    num: Poly::new(file.num[i][j].clone()),
                    den: Poly::new(file.den[i][j].clone()),
                });
            }
        }
        Self::new(n_o, n_i, entries)
    }
}

#[derive(Serialize, Deserialize)]
struct RationalFile {
    n_outputs: usize,
    n_inputs: usize,
    num: Vec<Vec<Vec<f64>>>,
    den: Vec<Vec<Vec<f64>>>,
}

/// `count` geometrically spaced frequencies from `w_min` to `w_max`, both
/// endpoints included exactly.
pub fn logspace_frequencies(w_min: f64, w_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(w_min > 0.0 && w_max > w_min && w_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "frequency range must satisfy 0 < w_min < w_max, got [{w_min}, {w_max}]"
        )));
    }
    if count < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 frequencies, got {count}"
        )));
    }
    let ratio = w_max / w_min;
    let last = (count - 1) as f64;
    let mut out: Vec<f64> = (0..count)
        .map(|k| w_min * ratio.powf(k as f64 / last))
        .collect();
    out[0] = w_min;
    out[count - 1] = w_max;
    Ok(out)
}

/// Samples a rational model at `s = j omega_k`.
pub fn sample_rational(model: &RationalTransferMatrix, freqs: &[f64]) -> Result<FrequencyDataset> {
    let samples = freqs
        .iter()
        .map(|&omega| {
            let response = model
                .eval(Complex64::new(0.0, omega))
                .map_err(|e| match e {
                    Error::Singular { what, at } => Error::Singular {
                        what: format!("{what} at omega = {omega} rad/s"),
                        at,
                    },
                    other => other,
                })?;
            Ok(FrequencySample { omega, response })
        })
        .collect::<Result<Vec<_>>>()?;
    FrequencyDataset::new(samples)
}

fn header_fields(n_o: usize, n_i: usize) -> Vec<String> {
    let mut fields = vec!["omega".to_string()];
    for i in 1..=n_o {
        for j in 1..=n_i {
            fields.push(format!("re_{i}_{j}"));
            fields.push(format!("im_{i}_{j}"));
        }
    }
    fields
}

/// Writes the canonical CSV form. `comments` are emitted first as `# ` lines.
pub fn write_dataset<W: Write>(
    mut out: W,
    data: &FrequencyDataset,
    comments: &[String],
) -> Result<()> {
    for line in comments {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{}", header_fields(data.n_o, data.n_i).join(","))?;
    for smp in data.samples() {
        let mut row = format!("{:?}", smp.omega);
        for z in smp.response.iter() {
            row.push_str(&format!(",{:?},{:?}", z.re, z.im));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

pub fn save_dataset(path: &Path, data: &FrequencyDataset, comments: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(&mut w, data, comments)?;
    w.flush()?;
    Ok(())
}

/// Parses a data set of known shape.
pub fn read_dataset<R: Read>(input: R, n_o: usize, n_i: usize) -> Result<FrequencyDataset> {
    parse_csv(input, Some((n_o, n_i)))
}

/// Parses a data set, inferring the shape from the `re_i_j` header fields.
pub fn read_dataset_any<R: Read>(input: R) -> Result<FrequencyDataset> {
    parse_csv(input, None)
}

pub fn load_dataset(path: &Path, n_o: usize, n_i: usize) -> Result<FrequencyDataset> {
    read_dataset(open(path)?, n_o, n_i)
}

pub fn load_dataset_any(path: &Path) -> Result<FrequencyDataset> {
    read_dataset_any(open(path)?)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::parse(None, format!("cannot open {}: {e}", path.display())))
}

fn infer_shape(header: &csv::StringRecord) -> Result<(usize, usize)> {
    let (mut n_o, mut n_i) = (0, 0);
    for field in header.iter().skip(1) {
        let parts: Vec<&str> = field.split('_').collect();
        let idx = match parts.as_slice() {
            [_, i, j] => i.parse::<usize>().ok().zip(j.parse::<usize>().ok()),
            _ => None,
        };
        let (i, j) = idx
            .ok_or_else(|| Error::parse(Some(1), format!("unrecognized header field '{field}'")))?;
        n_o = n_o.max(i);
        n_i = n_i.max(j);
    }
    Ok((n_o, n_i))
}

fn parse_csv<R: Read>(input: R, shape: Option<(usize, usize)>) -> Result<FrequencyDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| Error::parse(None, e.to_string()))?
        .clone();
    let header_line = header.position().map(|p| p.line() as usize);
    if header.get(0) != Some("omega") {
        return Err(Error::parse(header_line, "header must start with 'omega'"));
    }
    let (n_o, n_i) = match shape {
        Some(s) => s,
        None => infer_shape(&header)?,
    };
    let expected = header_fields(n_o, n_i);
    if header.len() != expected.len() {
        return Err(Error::DimensionMismatch(format!(
            "header has {} columns, a {n_o}x{n_i} data set needs {}",
            header.len(),
            expected.len()
        )));
    }
    if let Some((k, f)) = header
        .iter()
        .zip(&expected)
        .position(|(a, b)| a != b)
        .map(|k| (k, &expected[k]))
    {
        return Err(Error::parse(
            header_line,
            format!("header column {} should be '{f}'", k + 1),
        ));
    }

    let mut rows: Vec<(usize, FrequencySample)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize);
            Error::parse(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != expected.len() {
            return Err(Error::parse(
                Some(line),
                format!("expected {} fields, found {}", expected.len(), record.len()),
            ));
        }
        let values = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::parse(Some(line), format!("'{f}' is not a finite number"))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let omega = values[0];
        if omega <= 0.0 {
            return Err(Error::parse(
                Some(line),
                format!("frequency {omega} is not positive"),
            ));
        }
        let mut response = Array2::zeros((n_o, n_i));
        for (k, z) in response.iter_mut().enumerate() {
            *z = Complex64::new(values[1 + 2 * k], values[2 + 2 * k]);
        }
        rows.push((line, FrequencySample { omega, response }));
    }
    rows.sort_by(|a, b| a.1.omega.total_cmp(&b.1.omega));
    for pair in rows.windows(2) {
        if pair[0].1.omega == pair[1].1.omega {
            let line = pair[0].0.max(pair[1].0);
            return Err(Error::parse(
                Some(line),
                format!("duplicated frequency {} rad/s", pair[1].1.omega),
            ));
        }
    }
    FrequencyDataset::new(rows.into_iter().map(|(_, s)| s).collect()).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::parse(None, m),
        other => other,
    })
}
