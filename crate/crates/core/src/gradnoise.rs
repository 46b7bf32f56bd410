//! Gradient-noise measurement on small classification problems.
//!
//! A [`NoiseBundle`] partitions the training set into `n / b` disjoint minibatches
//! after a seeded shuffle and concatenates the noise vectors
//! `U_i = grad f_batch_i(w) - grad f(w)` into one sequence of length `p n / b`,
//! which is the input of the block-sum tail estimator.

use std::io::Read;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{choose_grouping, estimate_alpha};
use crate::rng::{derive_seed, seeded};
use crate::stable::{sample, StableParams};

/// Labelled examples: an `n x d` feature matrix and class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 {
            return Err(Error::Empty("dataset"));
        }
        if d == 0 {
            return Err(Error::domain("features", "need at least one feature column"));
        }
        if labels.len() != n {
            return Err(Error::domain("labels", format!("{} labels for {n} rows", labels.len())));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::domain("labels", format!("label {l} not below num_classes {num_classes}")));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("features", "all features must be finite"));
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// `n` rows chosen by a seeded shuffle.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 || n > self.len() {
            return Err(Error::domain("n", format!("must be in 1..={}, got {n}", self.len())));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut seeded(seed));
        idx.truncate(n);
        Ok(self.select(&idx))
    }
}

/// Synthetic data generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SynthSpec {
    /// Unit-variance Gaussian clusters whose means are `separation` apart.
    Blobs { separation: f64 },
    /// Class `c` on a circle of radius `c + 1` in the first two coordinates, with
    /// Gaussian jitter of standard deviation 0.1 in every coordinate.
    Rings,
}

impl std::str::FromStr for SynthSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
        match (name, arg) {
            ("blobs" | "gaussian-blobs", None) => Ok(SynthSpec::Blobs { separation: 3.0 }),
            ("blobs" | "gaussian-blobs", Some(a)) => a
                .parse()
                .ok()
                .filter(|x: &f64| *x >= 0.0 && x.is_finite())
                .map(|separation| SynthSpec::Blobs { separation })
                .ok_or_else(|| Error::domain("spec", format!("bad blob separation `{a}`"))),
            ("rings" | "ring-mixture", None) => Ok(SynthSpec::Rings),
            _ => Err(Error::domain("spec", format!("unknown dataset spec `{s}` (expected blobs[:SEP] or rings)"))),
        }
    }
}

/// Labels are `i mod num_classes`, so classes are balanced within one.
pub fn synth_dataset(n: usize, d: usize, num_classes: usize, spec: SynthSpec, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::domain("n", "must be at least 1"));
    }
    if d == 0 {
        return Err(Error::domain("d", "must be at least 1"));
    }
    if num_classes < 2 {
        return Err(Error::domain("num_classes", "must be at least 2"));
    }
    let mut rng = seeded(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    let mut x = Array2::zeros((n, d));
    match spec {
        SynthSpec::Blobs { separation } => {
            // Axis-aligned means at distance separation / sqrt(2) from the origin
            // are pairwise `separation` apart.
            let r = separation / std::f64::consts::SQRT_2;
            let mut means = Array2::zeros((num_classes, d));
            if num_classes <= d {
                for c in 0..num_classes {
                    means[[c, c]] = r;
                }
            } else {
                let mut mrng = seeded(derive_seed(seed, &[1]));
                for mut row in means.rows_mut() {
                    row.mapv_inplace(|_| StandardNormal.sample(&mut mrng));
                    let norm = row.dot(&row).sqrt();
                    row.mapv_inplace(|v| r * v / norm);
                }
            }
            for (i, mut row) in x.rows_mut().into_iter().enumerate() {
                let mu = means.row(labels[i]);
                for (v, m) in row.iter_mut().zip(mu) {
                    *v = m + rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        SynthSpec::Rings => {
            if d < 2 {
                return Err(Error::domain("d", "ring mixture needs at least two features"));
            }
            let angle = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range");
            for (i, mut row) in x.rows_mut().into_iter().enumerate() {
                let radius = (labels[i] + 1) as f64;
                let t = angle.sample(&mut rng);
                row[0] = radius * t.cos();
                row[1] = radius * t.sin();
                for v in row.iter_mut() {
                    *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
    Dataset::new(x, labels, num_classes)
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("four bytes")))
        .ok_or(Error::Format {
            offset: bytes.len() as u64,
            reason: format!("truncated header: need 4 bytes at offset {offset}"),
        })
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let got = be_u32(bytes, 0)?;
    if got != want {
        return Err(Error::Format {
            offset: 0,
            reason: format!("bad magic {got:#010x}, expected {want:#010x}"),
        });
    }
    Ok(())
}

fn check_payload(bytes: &[u8], start: usize, len: usize) -> Result<()> {
    let end = start + len;
    if bytes.len() < end {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            reason: format!("truncated payload: expected {end} bytes, file has {}", bytes.len()),
        });
    }
    if bytes.len() > end {
        return Err(Error::Format {
            offset: end as u64,
            reason: format!("{} trailing bytes after payload", bytes.len() - end),
        });
    }
    Ok(())
}

/// Parses an IDX image file: pixels as `n x (rows * cols)` values in `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Array2<f64>> {
    check_magic(bytes, IDX_IMAGES)?;
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let d = rows * cols;
    check_payload(bytes, 16, n * d)?;
    Ok(Array2::from_shape_fn((n, d), |(i, j)| bytes[16 + i * d + j] as f64 / 255.0))
}

/// Parses an IDX label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS)?;
    let n = be_u32(bytes, 4)? as usize;
    check_payload(bytes, 8, n)?;
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Loads an IDX image/label pair. `num_classes` is one more than the largest
/// label.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let x = parse_idx_images(&read_all(images)?)?;
    let y = parse_idx_labels(&read_all(labels)?)?;
    if x.nrows() != y.len() {
        return Err(Error::Format {
            offset: 4,
            reason: format!("label count {} does not match image count {}", y.len(), x.nrows()),
        });
    }
    let classes = y.iter().max().map_or(0, |m| m + 1);
    Dataset::new(x, y, classes)
}

/// Loads a CSV file with a header row; the column named `label` holds class
/// indices and every other column is a feature.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let label_col = header.iter().position(|h| h.trim() == "label").ok_or(Error::Format {
        offset: 0,
        reason: "no `label` column in header".into(),
    })?;
    let d = header.len() - 1;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let offset = rec.position().map_or(0, |p| p.byte());
        for (j, field) in rec.iter().enumerate() {
            let field = field.trim();
            if j == label_col {
                labels.push(field.parse::<usize>().map_err(|_| Error::Format {
                    offset,
                    reason: format!("label `{field}` is not a class index"),
                })?);
            } else {
                values.push(field.parse::<f64>().map_err(|_| Error::Format {
                    offset,
                    reason: format!("feature `{field}` is not a number"),
                })?);
            }
        }
    }
    let n = labels.len();
    let x = Array2::from_shape_vec((n, d), values).expect("csv reader enforces equal record lengths");
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(x, labels, classes)
}

/// A differentiable model whose loss is the mean of per-example losses over a
/// subset of the data.
pub trait Model: Sync {
    fn param_count(&self) -> usize;

    /// Seeded initial parameters.
    fn init(&self, seed: u64) -> Vec<f64>;

    fn loss_and_grad(&self, w: &[f64], data: &Dataset, subset: &[usize]) -> Result<(f64, Vec<f64>)>;

    fn loss(&self, w: &[f64], data: &Dataset, subset: &[usize]) -> Result<f64> {
        self.loss_and_grad(w, data, subset).map(|(l, _)| l)
    }

    fn grad(&self, w: &[f64], data: &Dataset, subset: &[usize]) -> Result<Vec<f64>> {
        self.loss_and_grad(w, data, subset).map(|(_, g)| g)
    }

    /// Fraction of `subset` classified correctly.
    fn accuracy(&self, w: &[f64], data: &Dataset, subset: &[usize]) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Loss {
    /// Softmax cross-entropy.
    #[default]
    Nll,
    /// Multiclass hinge `sum_{c != y} max(0, 1 + z_c - z_y)`.
    Hinge,
}

/// Fully connected network; no hidden layers gives multinomial logistic
/// regression. Parameters are stored layer by layer as the `out x in` weight
/// matrix in row-major order followed by the bias.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mlp {
    input: usize,
    hidden: Vec<usize>,
    classes: usize,
    activation: Activation,
    loss: Loss,
}

impl Mlp {
    pub fn new(input: usize, hidden: Vec<usize>, classes: usize, activation: Activation, loss: Loss) -> Result<Self> {
        if input == 0 {
            return Err(Error::domain("input", "must be at least 1"));
        }
        if classes < 2 {
            return Err(Error::domain("classes", "must be at least 2"));
        }
        if hidden.contains(&0) {
            return Err(Error::domain("hidden", "layer widths must be at least 1"));
        }
        Ok(Mlp {
            input,
            hidden,
            classes,
            activation,
            loss,
        })
    }

    pub fn linear(input: usize, classes: usize) -> Result<Self> {
        Mlp::new(input, vec![], classes, Activation::Relu, Loss::Nll)
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input];
        w.extend(&self.hidden);
        w.push(self.classes);
        w
    }

    /// `(offset, out, in)` for each layer.
    fn layout(&self) -> Vec<(usize, usize, usize)> {
        let w = self.widths();
        let mut off = 0;
        w.windows(2)
            .map(|p| {
                let entry = (off, p[1], p[0]);
                off += p[1] * p[0] + p[1];
                entry
            })
            .collect()
    }

    fn layer<'a>(&self, w: &'a [f64], (off, out, inp): (usize, usize, usize)) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let wm = ArrayView2::from_shape((out, inp), &w[off..off + out * inp]).expect("layout");
        let b = ArrayView1::from(&w[off + out * inp..off + out * inp + out]);
        (wm, b)
    }

    fn check(&self, w: &[f64], data: &Dataset, subset: &[usize]) -> Result<()> {
        if w.len() != self.param_count() {
            return Err(Error::domain("w", format!("expected {} parameters, got {}", self.param_count(), w.len())));
        }
        if data.dim() != self.input || data.num_classes() > self.classes {
            return Err(Error::domain("data", "dataset shape does not match the model"));
        }
        if subset.is_empty() {
            return Err(Error::Empty("subset"));
        }
        Ok(())
    }

    /// Pre-activations and activations of every layer; the last entry holds the
    /// logits.
    fn forward(&self, w: &[f64], x: Array2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let layout = self.layout();
        let mut acts = vec![x];
        let mut pre = Vec::with_capacity(layout.len());
        for (k, &l) in layout.iter().enumerate() {
            let (wm, b) = self.layer(w, l);
            let z = acts[k].dot(&wm.t()) + &b;
            let a = if k + 1 < layout.len() {
                match self.activation {
                    Activation::Relu => z.mapv(|v| v.max(0.0)),
                    Activation::Tanh => z.mapv(f64::tanh),
                }
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(a);
        }
        (pre, acts)
    }

    fn logits(&self, w: &[f64], data: &Dataset, subset: &[usize]) -> Array2<f64> {
        let x = data.features.select(Axis(0), subset);
        let (_, mut acts) = self.forward(w, x);
        acts.pop().expect("at least one layer")
    }
}

impl Model for Mlp {
    fn param_count(&self) -> usize {
        self.layout().iter().map(|(_, o, i)| o * i + o).sum()
    }

    fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        let mut w = vec![0.0; self.param_count()];
        for (off, out, inp) in self.layout() {
            let a = 1.0 / (inp as f64).sqrt();
            let u = Uniform::new_inclusive(-a, a).expect("valid range");
            for v in &mut w[off..off + out * inp] {
                *v = u.sample(&mut rng);
            }
        }
        w
    }

    fn loss_and_grad(&self, w: &[f64], data: &Dataset, subset: &[usize]) -> Result<(f64, Vec<f64>)> {
        self.check(w, data, subset)?;
        let bsz = subset.len() as f64;
        let x = data.features.select(Axis(0), subset);
        let (pre, acts) = self.forward(w, x);
        let z = acts.last().expect("logits");
        let labels: Vec<usize> = subset.iter().map(|&i| data.labels[i]).collect();

        let mut dz = Array2::zeros(z.dim());
        let mut total = 0.0;
        for (r, (row, &y)) in z.rows().into_iter().zip(&labels).enumerate() {
            match self.loss {
                Loss::Nll => {
                    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let se: f64 = row.iter().map(|v| (v - m).exp()).sum();
                    total += m + se.ln() - row[y];
                    for c in 0..row.len() {
                        dz[[r, c]] = (row[c] - m).exp() / se;
                    }
                    dz[[r, y]] -= 1.0;
                }
                Loss::Hinge => {
                    for c in (0..row.len()).filter(|&c| c != y) {
                        let margin = 1.0 + row[c] - row[y];
                        if margin > 0.0 {
                            total += margin;
                            dz[[r, c]] += 1.0;
                            dz[[r, y]] -= 1.0;
                        }
                    }
                }
            }
        }
        dz /= bsz;

        let layout = self.layout();
        let mut g = vec![0.0; w.len()];
        for k in (0..layout.len()).rev() {
            let (off, out, inp) = layout[k];
            let gw = dz.t().dot(&acts[k]);
            let gb = dz.sum_axis(Axis(0));
            g[off..off + out * inp].copy_from_slice(gw.as_slice().expect("standard layout"));
            g[off + out * inp..off + out * inp + out].copy_from_slice(gb.as_slice().expect("contiguous"));
            if k > 0 {
                let (wm, _) = self.layer(w, layout[k]);
                let mut da = dz.dot(&wm);
                match self.activation {
                    Activation::Relu => da.zip_mut_with(&pre[k - 1], |d, &z| {
                        if z <= 0.0 {
                            *d = 0.0
                        }
                    }),
                    Activation::Tanh => da.zip_mut_with(&acts[k], |d, &a| *d *= 1.0 - a * a),
                }
                dz = da;
            }
        }
        Ok((total / bsz, g))
    }

    fn accuracy(&self, w: &[f64], data: &Dataset, subset: &[usize]) -> Result<f64> {
        self.check(w, data, subset)?;
        let z = self.logits(w, data, subset);
        let correct = z
            .rows()
            .into_iter()
            .zip(subset)
            .filter(|(row, &i)| {
                let best = row
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (c, &v)| if v > acc.1 { (c, v) } else { acc })
                    .0;
                best == data.labels[i]
            })
            .count();
        Ok(correct as f64 / subset.len() as f64)
    }
}

/// Concatenated minibatch noise at one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseBundle {
    pub values: Vec<f64>,
    pub p: usize,
    pub n: usize,
    pub b: usize,
    pub batches: usize,
    /// Examples left out because `b` does not divide `n`.
    pub dropped: usize,
    pub iteration: u64,
}

impl NoiseBundle {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Noise vector of minibatch `i`.
    pub fn batch(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }
}

/// Seeded shuffle of `0..n` cut into `n / b` disjoint minibatches of size `b`.
pub fn partition(n: usize, b: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if b == 0 || b > n {
        return Err(Error::domain("b", format!("batch size must be in 1..={n}, got {b}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed));
    Ok(idx.chunks_exact(b).map(<[usize]>::to_vec).collect())
}

fn bundle_from(
    model: &dyn Model,
    w: &[f64],
    data: &Dataset,
    b: usize,
    seed: u64,
    batch_grad: impl Fn(usize, &[usize], &[f64]) -> Result<Vec<f64>> + Sync,
) -> Result<NoiseBundle> {
    let parts = partition(data.len(), b, seed)?;
    let covered: Vec<usize> = parts.concat();
    let full = model.grad(w, data, &covered)?;
    let noise = parts
        .par_iter()
        .enumerate()
        .map(|(i, part)| {
            let g = batch_grad(i, part, &full)?;
            Ok(g.iter().zip(&full).map(|(a, f)| a - f).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseBundle {
        values: noise.concat(),
        p: model.param_count(),
        n: data.len(),
        b,
        batches: parts.len(),
        dropped: data.len() - covered.len(),
        iteration: 0,
    })
}

/// Noise `grad f_batch(w) - grad f(w)` for each minibatch of [`partition`], where
/// the full gradient is taken over the covered examples.
pub fn noise_bundle(model: &dyn Model, w: &[f64], data: &Dataset, b: usize, seed: u64) -> Result<NoiseBundle> {
    bundle_from(model, w, data, b, seed, |_, part, _| model.grad(w, data, part))
}

/// As [`noise_bundle`], but each minibatch gradient is replaced by
/// `grad f(w) + xi_i` with `xi_i` i.i.d. `SaS(alpha0, scale)` coordinates drawn
/// with seed `derive_seed(seed, [1, i])`.
pub fn injected_noise_bundle(
    model: &dyn Model,
    w: &[f64],
    data: &Dataset,
    b: usize,
    alpha0: f64,
    scale: f64,
    seed: u64,
) -> Result<NoiseBundle> {
    let params = StableParams::new(alpha0, scale)?;
    let p = model.param_count();
    bundle_from(model, w, data, b, seed, |i, _, full| {
        let xi = sample(params, p, derive_seed(seed, &[1, i as u64]))?;
        Ok(full.iter().zip(xi.values()).map(|(f, x)| f + x).collect())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureRow {
    pub iteration: u64,
    pub loss: f64,
    pub accuracy: f64,
    pub alpha_hat: f64,
    pub k1: usize,
    pub k2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureConfig {
    pub b: usize,
    pub eta: f64,
    pub iterations: u64,
    pub log_every: u64,
    pub seed: u64,
}

impl MeasureConfig {
    fn validate(&self, n: usize) -> Result<()> {
        if self.b == 0 || self.b > n {
            return Err(Error::domain("b", format!("batch size must be in 1..={n}, got {}", self.b)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::domain("eta", format!("must be positive, got {}", self.eta)));
        }
        if self.iterations == 0 {
            return Err(Error::domain("iterations", "must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(Error::domain("log_every", "must be at least 1"));
        }
        Ok(())
    }
}

/// Plain minibatch SGD from `model.init(derive_seed(seed, [0]))` over shuffled
/// epochs (the final batch of an epoch may be short). After every `log_every`-th
/// iteration the full training loss and accuracy are recorded together with the
/// tail index of a [`noise_bundle`] at the current parameters.
pub fn measure_run(model: &dyn Model, data: &Dataset, cfg: &MeasureConfig) -> Result<Vec<MeasureRow>> {
    cfg.validate(data.len())?;
    let all: Vec<usize> = (0..data.len()).collect();
    let mut w = model.init(derive_seed(cfg.seed, &[0]));
    let mut rng = seeded(derive_seed(cfg.seed, &[1]));
    let mut order = all.clone();
    let mut cursor = order.len();
    let mut last_loss = model.loss(&w, data, &all)?;
    let mut rows = Vec::new();
    for k in 1..=cfg.iterations {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + cfg.b).min(order.len());
        let g = model.grad(&w, data, &order[cursor..end])?;
        cursor = end;
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= cfg.eta * gi;
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration: k, last_loss });
        }
        if k % cfg.log_every == 0 {
            let loss = model.loss(&w, data, &all)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { iteration: k, last_loss });
            }
            last_loss = loss;
            let bundle = noise_bundle(model, &w, data, cfg.b, derive_seed(cfg.seed, &[2, k]))?;
            let grouping = choose_grouping(bundle.len())?;
            let est = estimate_alpha(&bundle.values, &grouping)?;
            rows.push(MeasureRow {
                iteration: k,
                loss,
                accuracy: model.accuracy(&w, data, &all)?,
                alpha_hat: est.alpha_hat,
                k1: grouping.group_size(),
                k2: grouping.group_count(),
            });
        }
    }
    Ok(rows)
}

/// Subset view helper: all row indices of `data`.
pub fn all_indices(data: &Dataset) -> Vec<usize> {
    (0..data.len()).collect()
}
