//! Labeled signal datasets, the seeded train/validation split, batching and
//! per-batch standardization.
//!
//! # Text format
//!
//! One signal per line: `<label>,<v1>,...,<vL>`. Values are written in
//! scientific notation with 9 significant digits. Empty lines and lines
//! starting with `#` are ignored; a first line whose leading field is not an
//! integer is treated as a header.
//!
//! # Split and shuffle generator
//!
//! All permutations use PCG32 (the XSH-RR output of a 64-bit LCG with
//! multiplier `6364136223846793005`), initialised like the reference
//! `pcg32_srandom(initstate, initseq)`: `inc = (initseq << 1) | 1`,
//! `state = 0`, step, `state += initstate`, step. Integers in `[0, bound)`
//! are drawn by rejection: discard outputs `r < (2^32 - bound) mod bound`,
//! then return `r mod bound`. A Fisher–Yates shuffle walks `i` from `n-1`
//! down to `1`, swapping position `i` with a draw from `[0, i]`.
//!
//! * split: `initstate = seed`, `initseq = 0`; the first `round(frac·N)`
//!   entries of the shuffled `0..N` form the validation set, the rest the
//!   training set, both in shuffled order.
//! * epoch shuffle: `initstate = seed`, `initseq = epoch + 1`.

use std::fmt::Write as _;
use std::path::Path;

use rand::RngCore;
use rand_pcg::Pcg32;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const NUM_CLASSES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct SignalDataset {
    /// Row-major `[n, len]`.
    values: Vec<f64>,
    labels: Vec<usize>,
    len: usize,
    pub source: String,
}

impl SignalDataset {
    pub fn new(
        values: Vec<f64>,
        labels: Vec<usize>,
        len: usize,
        source: impl Into<String>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::data(None, "no rows"));
        }
        if len == 0 || values.len() != labels.len() * len {
            return Err(Error::data(
                None,
                format!(
                    "{} values do not form {} rows of {len}",
                    values.len(),
                    labels.len()
                ),
            ));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(Error::Label {
                label: l,
                classes: NUM_CLASSES,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset value".into()));
        }
        Ok(SignalDataset {
            values,
            labels,
            len,
            source: source.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn signal_len(&self) -> usize {
        self.len
    }

    pub fn signal(&self, i: usize) -> &[f64] {
        &self.values[i * self.len..(i + 1) * self.len]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 16);
        for i in 0..self.n() {
            write!(s, "{}", self.labels[i]).unwrap();
            for v in self.signal(i) {
                write!(s, ",{v:.8e}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut len = None;
        let mut first = true;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let head = fields.next().unwrap_or("");
            let label: usize = match head.parse::<i64>() {
                Ok(l) if l >= 0 && (l as usize) < NUM_CLASSES => l as usize,
                Ok(l) => {
                    return Err(Error::data(
                        Some(line_no),
                        format!("label {l} out of range 0..{NUM_CLASSES}"),
                    ))
                }
                Err(_) if first => {
                    first = false;
                    continue;
                }
                Err(_) => {
                    return Err(Error::data(
                        Some(line_no),
                        format!("label {head:?} is not an integer"),
                    ))
                }
            };
            first = false;
            let start = values.len();
            for f in fields {
                let v: f64 = f.parse().map_err(|_| {
                    Error::data(Some(line_no), format!("value {f:?} is not a number"))
                })?;
                if !v.is_finite() {
                    return Err(Error::data(Some(line_no), format!("non-finite value {f}")));
                }
                values.push(v);
            }
            let got = values.len() - start;
            match len {
                None if got == 0 => return Err(Error::data(Some(line_no), "row has no values")),
                None => len = Some(got),
                Some(l) if l != got => {
                    return Err(Error::data(
                        Some(line_no),
                        format!("expected {l} values, got {got}"),
                    ));
                }
                Some(_) => {}
            }
            labels.push(label);
        }
        let Some(len) = len else {
            return Err(Error::data(None, "no rows"));
        };
        SignalDataset::new(values, labels, len, source)
    }
}

pub fn load_dataset(path: &Path) -> Result<SignalDataset> {
    let text = std::fs::read_to_string(path)?;
    SignalDataset::parse(&text, &path.display().to_string()).map_err(|e| match e {
        Error::Data { line, msg, .. } => Error::Data {
            path: Some(path.to_path_buf()),
            line,
            msg,
        },
        other => other,
    })
}

/// PCG32 seeded as documented at the top of this module.
pub fn pcg32(initstate: u64, initseq: u64) -> Pcg32 {
    Pcg32::new(initstate, initseq)
}

/// Uniform integer in `[0, bound)` by threshold rejection.
pub fn bounded(rng: &mut Pcg32, bound: u32) -> u32 {
    assert!(bound > 0);
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let r = rng.next_u32();
        if r >= threshold {
            return r % bound;
        }
    }
}

pub fn shuffle<T>(items: &mut [T], rng: &mut Pcg32) {
    for i in (1..items.len()).rev() {
        let j = bounded(rng, (i + 1) as u32) as usize;
        items.swap(i, j);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub seed: u64,
}

pub fn split(n: usize, valid_frac: f64, seed: u64) -> Result<SplitIndices> {
    if !(valid_frac > 0.0 && valid_frac < 1.0) {
        return Err(Error::config(
            "valid_frac",
            format!("{valid_frac} not in (0, 1)"),
        ));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    shuffle(&mut perm, &mut pcg32(seed, 0));
    let n_valid = (valid_frac * n as f64).round() as usize;
    let train = perm.split_off(n_valid);
    Ok(SplitIndices {
        train,
        valid: perm,
        seed,
    })
}

/// Index groups for one pass over `indices`. Training passes shuffle with a
/// generator derived from `(seed, epoch)`; validation passes keep order.
pub fn batch_indices(
    indices: &[usize],
    batch_size: usize,
    shuffle_order: bool,
    seed: u64,
    epoch: usize,
) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order = indices.to_vec();
    if shuffle_order {
        shuffle(&mut order, &mut pcg32(seed, epoch as u64 + 1));
    }
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Anything that can fill a batch: one label and a fixed-shape block of
/// values per sample.
pub trait SampleSource {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn sample_shape(&self) -> Vec<usize>;
    fn label(&self, i: usize) -> usize;
    /// Write sample `i` into `out`, whose length is the product of
    /// [`SampleSource::sample_shape`].
    fn fill(&self, i: usize, out: &mut [f64]);
    /// Data points one sample carries before any encoding for the network.
    fn points_per_sample(&self) -> usize {
        self.sample_shape().iter().product()
    }
}

impl SampleSource for SignalDataset {
    fn len(&self) -> usize {
        self.n()
    }

    fn sample_shape(&self) -> Vec<usize> {
        vec![1, self.len]
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    fn fill(&self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(self.signal(i));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub inputs: Tensor<T>,
    pub labels: Vec<usize>,
}

/// Gather samples into a batch and standardize it.
pub fn make_batch<T: Scalar>(src: &dyn SampleSource, idx: &[usize]) -> Result<Batch<T>> {
    if idx.is_empty() {
        return Err(Error::data(None, "empty batch"));
    }
    let shape = src.sample_shape();
    let per: usize = shape.iter().product();
    let mut buf = vec![0.0f64; per * idx.len()];
    for (chunk, &i) in buf.chunks_exact_mut(per).zip(idx) {
        src.fill(i, chunk);
    }
    standardize_in_place(&mut buf);
    let mut full = vec![idx.len()];
    full.extend(shape);
    Ok(Batch {
        inputs: Tensor::new(full, buf.into_iter().map(T::of).collect())?,
        labels: idx.iter().map(|&i| src.label(i)).collect(),
    })
}

/// Every batch of one pass, standardized.
pub fn batches<T: Scalar>(
    src: &dyn SampleSource,
    indices: &[usize],
    batch_size: usize,
    shuffle_order: bool,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Batch<T>>> {
    batch_indices(indices, batch_size, shuffle_order, seed, epoch)
        .iter()
        .map(|idx| make_batch(src, idx))
        .collect()
}

/// Scalar mean and population standard deviation over all values.
pub fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(x − μ) / σ` with one `μ`, `σ` for the whole slice; a spread below
/// `1e-12` maps everything to zero.
pub fn standardize_in_place(values: &mut [f64]) {
    let (mean, sd) = moments(values);
    if sd < 1e-12 {
        values.fill(0.0);
        return;
    }
    for v in values {
        *v = (*v - mean) / sd;
    }
}

pub fn standardize<T: Scalar>(batch: &Batch<T>) -> Batch<T> {
    let mut vals: Vec<f64> = batch.inputs.data().iter().map(|v| v.f64()).collect();
    standardize_in_place(&mut vals);
    Batch {
        inputs: Tensor::new(
            batch.inputs.shape().to_vec(),
            vals.into_iter().map(T::of).collect(),
        )
        .expect("shape preserved"),
        labels: batch.labels.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: usize, n: usize) -> String {
        let mut s = label.to_string();
        for i in 0..n {
            write!(s, ",{}", i as f64 * 0.5).unwrap();
        }
        s
    }

    #[test]
    fn parses_rows_comments_and_header() {
        let text = format!(
            "label,v...\n# comment\n{}\n\n{}\n{}\n",
            row(0, 94),
            row(1, 94),
            row(7, 94)
        );
        let ds = SignalDataset::parse(&text, "t").unwrap();
        assert_eq!((ds.n(), ds.signal_len()), (3, 94));
        assert_eq!(ds.labels(), &[0, 1, 7]);
    }

    #[test]
    fn empty_input_has_no_rows() {
        let err = SignalDataset::parse("", "t").unwrap_err().to_string();
        assert!(err.contains("no rows"), "{err}");
        assert!(SignalDataset::parse("# only comments\n", "t").is_err());
    }

    #[test]
    fn ragged_row_names_line_and_count() {
        let text = format!("{}\n{}\n", row(0, 94), row(2, 93));
        let err = SignalDataset::parse(&text, "t").unwrap_err().to_string();
        assert!(
            err.contains("line 2") && err.contains("expected 94"),
            "{err}"
        );
    }

    #[test]
    fn bad_values_rejected_with_line() {
        let err = SignalDataset::parse("0,1,2\n9,1,2\n", "t")
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("line 2") && err.contains("out of range"),
            "{err}"
        );
        let err = SignalDataset::parse("0,1,2\n1,inf,2\n", "t")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = SignalDataset::parse("0,1,2\n1,NaN,2\n", "t")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn default_sized_split() {
        let s = split(2400, 0.2, 42).unwrap();
        assert_eq!((s.train.len(), s.valid.len()), (1920, 480));
        assert_eq!(s, split(2400, 0.2, 42).unwrap());
        assert_ne!(s.valid, split(2400, 0.2, 43).unwrap().valid);
        assert!(split(10, 1.0, 0).is_err());
    }

    #[test]
    fn pcg32_reference_stream() {
        // pcg32-global demo output for initstate 42, initseq 54
        let mut rng = pcg32(42, 54);
        let got: Vec<u32> = (0..6).map(|_| rng.next_u32()).collect();
        assert_eq!(
            got,
            [0xa15c02b7, 0x7b47f409, 0xba1d3330, 0x83d2f293, 0xbfa4784b, 0xcbed606e]
        );
    }

    #[test]
    fn batch_counts() {
        let train: Vec<usize> = (0..1920).collect();
        assert_eq!(batch_indices(&train, 64, true, 1, 0).len(), 30);
        let valid: Vec<usize> = (0..480).collect();
        let v = batch_indices(&valid, 64, false, 1, 0);
        assert_eq!(v.len(), 8);
        assert_eq!(v[7].len(), 32);
        assert_eq!(v.concat(), valid);
        assert_eq!(
            batch_indices(&train, 64, true, 1, 3),
            batch_indices(&train, 64, true, 1, 3)
        );
        assert_ne!(
            batch_indices(&train, 64, true, 1, 3),
            batch_indices(&train, 64, true, 1, 4)
        );
    }

    #[test]
    fn standardize_hand_values() {
        let b = Batch {
            inputs: Tensor::<f64>::new([2, 1, 2], vec![1., 3., 5., 7.]).unwrap(),
            labels: vec![0, 1],
        };
        let s = standardize(&b);
        let r5 = 5f64.sqrt();
        for (got, want) in s
            .inputs
            .data()
            .iter()
            .zip([-3. / r5, -1. / r5, 1. / r5, 3. / r5])
        {
            assert!((got - want).abs() < 1e-15);
        }
        let c = Batch {
            inputs: Tensor::<f64>::full([3, 1, 4], 2.5),
            labels: vec![0, 0, 0],
        };
        assert!(standardize(&c).inputs.data().iter().all(|&v| v == 0.0));
    }
}
