//! Two-branch embedding model trained with the lifted structured loss.
//!
//! Dataset union-region features pass through two affine layers with a ramp
//! in between; web features pass through a single affine layer. Both land in
//! the same embedding space, where positive (same-class) dataset/web pairs
//! are pulled together and negatives pushed beyond a margin.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const EMBED_DIM: usize = 256;
pub const DEFAULT_HIDDEN: usize = 512;
pub const DISTANCE_FLOOR: f64 = 1e-12;
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HCVM";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Affine layer `y = W x + b` with `W` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Weights uniform in `±1/√inputs`, zero bias.
    pub fn seeded<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let weight = (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect();
        Dense {
            inputs,
            outputs,
            weight,
            bias: vec![0.0; outputs],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weight
            .chunks_exact(self.inputs.max(1))
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .take(self.outputs)
            .collect()
    }

    /// Accumulates `dW += g ⊗ x`, `db += g` and returns `Wᵀ g`.
    fn backward(&self, x: &[f64], g: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut gx = vec![0.0; self.inputs];
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            grad.bias[o] += go;
            let row = o * self.inputs;
            for i in 0..self.inputs {
                grad.weight[row + i] += go * x[i];
                gx[i] += self.weight[row + i] * go;
            }
        }
        gx
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub dataset_input: usize,
    pub web_input: usize,
    pub hidden: usize,
    pub embed: usize,
}

impl ModelShape {
    /// Both branches read `input`-dimensional features; default hidden and embedding widths.
    pub fn for_input(input: usize) -> Self {
        ModelShape {
            dataset_input: input,
            web_input: input,
            hidden: DEFAULT_HIDDEN,
            embed: EMBED_DIM,
        }
    }
}

/// Dataset branch (`d → h → e`, ramp after the first layer) and web branch (`d → e`).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricModel {
    pub dataset_hidden: Dense,
    pub dataset_out: Dense,
    pub web: Dense,
}

/// Gradients share the model layout.
pub type Gradients = MetricModel;

impl MetricModel {
    pub fn zeros(shape: ModelShape) -> Self {
        MetricModel {
            dataset_hidden: Dense::zeros(shape.dataset_input, shape.hidden),
            dataset_out: Dense::zeros(shape.hidden, shape.embed),
            web: Dense::zeros(shape.web_input, shape.embed),
        }
    }

    pub fn seeded(shape: ModelShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MetricModel {
            dataset_hidden: Dense::seeded(shape.dataset_input, shape.hidden, &mut rng),
            dataset_out: Dense::seeded(shape.hidden, shape.embed, &mut rng),
            web: Dense::seeded(shape.web_input, shape.embed, &mut rng),
        }
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            dataset_input: self.dataset_hidden.inputs,
            web_input: self.web.inputs,
            hidden: self.dataset_hidden.outputs,
            embed: self.dataset_out.outputs,
        }
    }

    fn layers(&self) -> [&Dense; 3] {
        [&self.dataset_hidden, &self.dataset_out, &self.web]
    }

    fn layers_mut(&mut self) -> [&mut Dense; 3] {
        [&mut self.dataset_hidden, &mut self.dataset_out, &mut self.web]
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// Parameters in checkpoint order: per layer, weights then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in self.layers_mut() {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = it.next().expect("length checked"));
        }
        Ok(())
    }

    /// `self -= lr * grad`
    pub fn step(&mut self, grad: &Gradients, lr: f64) {
        for (l, g) in self.layers_mut().into_iter().zip(grad.layers()) {
            l.weight.iter_mut().zip(&g.weight).for_each(|(p, d)| *p -= lr * d);
            l.bias.iter_mut().zip(&g.bias).for_each(|(p, d)| *p -= lr * d);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers().iter().all(|l| l.weight.iter().chain(&l.bias).all(|p| p.is_finite()))
    }

    fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
        if x.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: x.len() });
        }
        Ok(())
    }

    pub fn embed_dataset(&self, x: &[f64]) -> Result<Vec<f64>> {
        Self::check_dim(self.dataset_hidden.inputs, x)?;
        Ok(self.dataset_forward(x).2)
    }

    pub fn embed_web(&self, x: &[f64]) -> Result<Vec<f64>> {
        Self::check_dim(self.web.inputs, x)?;
        Ok(self.web.forward(x))
    }

    /// Returns (pre-activation, activation, embedding).
    fn dataset_forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let z = self.dataset_hidden.forward(x);
        let a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        let e = self.dataset_out.forward(&a);
        (z, a, e)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// `HCVM` | version u32 | layer count u32 | (outputs u32, inputs u32) per
    /// layer | parameters as little-endian f64 in [`MetricModel::params`] order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&3u32.to_le_bytes());
        for l in self.layers() {
            out.extend_from_slice(&(l.outputs as u32).to_le_bytes());
            out.extend_from_slice(&(l.inputs as u32).to_le_bytes());
        }
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |what: &str, offset: usize| Error::Format {
            what: what.into(),
            offset: offset as u64,
        };
        let u32_at = |off: usize| -> Result<u32> {
            bytes
                .get(off..off + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or_else(|| fail("truncated header", off))
        };
        if bytes.get(..4) != Some(CHECKPOINT_MAGIC.as_slice()) {
            return Err(fail("bad magic", 0));
        }
        if u32_at(4)? != CHECKPOINT_VERSION {
            return Err(fail("unsupported version", 4));
        }
        if u32_at(8)? != 3 {
            return Err(fail("expected 3 layers", 8));
        }
        let dims: Vec<(usize, usize)> = (0..3)
            .map(|i| Ok((u32_at(12 + 8 * i)? as usize, u32_at(16 + 8 * i)? as usize)))
            .collect::<Result<_>>()?;
        let shape = ModelShape {
            dataset_input: dims[0].1,
            hidden: dims[0].0,
            embed: dims[1].0,
            web_input: dims[2].1,
        };
        if dims[1].1 != shape.hidden || dims[2].0 != shape.embed {
            return Err(fail("inconsistent layer shapes", 12));
        }
        let mut model = MetricModel::zeros(shape);
        let start = 36;
        let need = model.param_count() * 8;
        if bytes.len() < start + need {
            return Err(fail("truncated parameters", bytes.len()));
        }
        if bytes.len() > start + need {
            return Err(fail("trailing bytes", start + need));
        }
        let flat: Vec<f64> = bytes[start..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        model.set_params(&flat)?;
        Ok(model)
    }
}

pub fn pair_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(sq_dist(a, b).sqrt())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub class: usize,
}

/// Dataset and web samples with positive/negative index pairs. Every pair is
/// `(dataset index, web index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub dataset: Vec<Sample>,
    pub web: Vec<Sample>,
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
    pub margin: f64,
}

impl PairBatch {
    pub fn validate(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::NoPositivePairs);
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidArgument(format!("margin must be positive, got {}", self.margin)));
        }
        for &(i, j) in self.positives.iter().chain(&self.negatives) {
            if i >= self.dataset.len() || j >= self.web.len() {
                return Err(Error::InvalidArgument(format!("pair ({i}, {j}) out of range")));
            }
        }
        if let Some(&(i, j)) = self.positives.iter().find(|&&(i, j)| self.dataset[i].class != self.web[j].class) {
            return Err(Error::InvalidArgument(format!("positive pair ({i}, {j}) crosses classes")));
        }
        if let Some(&(i, j)) = self.negatives.iter().find(|&&(i, j)| self.dataset[i].class == self.web[j].class) {
            return Err(Error::InvalidArgument(format!("negative pair ({i}, {j}) shares a class")));
        }
        Ok(())
    }
}

/// Same-class cross pairs become positives. Each dataset anchor and each web
/// sample that takes part in a positive draws up to `per_anchor_negatives`
/// different-class partners from the other side.
pub fn construct_pairs(
    dataset: Vec<Sample>,
    web: Vec<Sample>,
    per_anchor_negatives: usize,
    margin: f64,
    rng: &mut impl Rng,
) -> Result<PairBatch> {
    if dataset.is_empty() || web.is_empty() {
        return Err(Error::InvalidArgument("construct_pairs needs samples on both sides".into()));
    }
    let mut positives = Vec::new();
    for (i, d) in dataset.iter().enumerate() {
        for (j, w) in web.iter().enumerate() {
            if d.class == w.class {
                positives.push((i, j));
            }
        }
    }
    let anchors: BTreeSet<usize> = positives.iter().map(|p| p.0).collect();
    let web_pos: BTreeSet<usize> = positives.iter().map(|p| p.1).collect();

    let mut negatives = BTreeSet::new();
    for &i in &anchors {
        let pool: Vec<usize> = (0..web.len()).filter(|&j| web[j].class != dataset[i].class).collect();
        for &j in pool.choose_multiple(rng, per_anchor_negatives) {
            negatives.insert((i, j));
        }
    }
    for &j in &web_pos {
        let pool: Vec<usize> = (0..dataset.len()).filter(|&i| dataset[i].class != web[j].class).collect();
        for &i in pool.choose_multiple(rng, per_anchor_negatives) {
            negatives.insert((i, j));
        }
    }
    Ok(PairBatch {
        dataset,
        web,
        positives,
        negatives: negatives.into_iter().collect(),
        margin,
    })
}

/// Loss and gradients with respect to the embeddings themselves.
struct EmbeddingLoss {
    loss: f64,
    dataset_grad: Vec<Vec<f64>>,
    web_grad: Vec<Vec<f64>>,
}

fn adjacency(batch: &PairBatch) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut by_dataset = vec![Vec::new(); batch.dataset.len()];
    let mut by_web = vec![Vec::new(); batch.web.len()];
    for (n, &(i, j)) in batch.negatives.iter().enumerate() {
        by_dataset[i].push(n);
        by_web[j].push(n);
    }
    (by_dataset, by_web)
}

fn loss_on_embeddings(batch: &PairBatch, ed: &[Vec<f64>], ew: &[Vec<f64>], want_grad: bool) -> EmbeddingLoss {
    let (by_dataset, by_web) = adjacency(batch);
    let neg_dist: Vec<f64> = batch.negatives.iter().map(|&(i, j)| sq_dist(&ed[i], &ew[j]).sqrt()).collect();
    let alpha = batch.margin;
    let scale = 1.0 / batch.positives.len() as f64;

    let mut dataset_grad = if want_grad { vec![vec![0.0; ed.first().map_or(0, Vec::len)]; ed.len()] } else { Vec::new() };
    let mut web_grad = if want_grad { vec![vec![0.0; ew.first().map_or(0, Vec::len)]; ew.len()] } else { Vec::new() };
    // ∂loss/∂D for each negative pair, summed over the positives that use it.
    let mut neg_coef = vec![0.0; batch.negatives.len()];

    let mut total = 0.0;
    for &(i, j) in &batch.positives {
        let d_pos = sq_dist(&ed[i], &ew[j]).sqrt();
        let incident = by_dataset[i].iter().chain(&by_web[j]);
        let max_term = incident.clone().map(|&n| alpha - neg_dist[n]).fold(f64::NEG_INFINITY, f64::max);
        let (lifted, shifted_sum) = if max_term.is_finite() {
            let s: f64 = incident.clone().map(|&n| (alpha - neg_dist[n] - max_term).exp()).sum();
            (max_term + s.ln() + d_pos, s)
        } else {
            // no incident negatives: only the positive distance remains
            (d_pos, 0.0)
        };
        let hinge = lifted.max(0.0);
        total += hinge * hinge;
        if !want_grad || hinge == 0.0 {
            continue;
        }
        let coef = hinge * scale;
        let g = coef / d_pos.max(DISTANCE_FLOOR);
        for k in 0..ed[i].len() {
            let diff = ed[i][k] - ew[j][k];
            dataset_grad[i][k] += g * diff;
            web_grad[j][k] -= g * diff;
        }
        if shifted_sum > 0.0 {
            for &n in incident {
                neg_coef[n] -= coef * (alpha - neg_dist[n] - max_term).exp() / shifted_sum;
            }
        }
    }
    if want_grad {
        for (n, &(i, j)) in batch.negatives.iter().enumerate() {
            if neg_coef[n] == 0.0 {
                continue;
            }
            let g = neg_coef[n] / neg_dist[n].max(DISTANCE_FLOOR);
            for k in 0..ed[i].len() {
                let diff = ed[i][k] - ew[j][k];
                dataset_grad[i][k] += g * diff;
                web_grad[j][k] -= g * diff;
            }
        }
    }
    EmbeddingLoss {
        loss: total * scale / 2.0,
        dataset_grad,
        web_grad,
    }
}

/// Lifted structured loss over the batch's positive pairs.
pub fn lifted_loss(model: &MetricModel, batch: &PairBatch) -> Result<f64> {
    batch.validate()?;
    let ed = batch.dataset.iter().map(|s| model.embed_dataset(&s.features)).collect::<Result<Vec<_>>>()?;
    let ew = batch.web.iter().map(|s| model.embed_web(&s.features)).collect::<Result<Vec<_>>>()?;
    Ok(loss_on_embeddings(batch, &ed, &ew, false).loss)
}

/// Loss together with exact parameter gradients for both branches.
pub fn lifted_loss_gradient(model: &MetricModel, batch: &PairBatch) -> Result<(f64, Gradients)> {
    batch.validate()?;
    let shape = model.shape();
    for s in &batch.dataset {
        MetricModel::check_dim(shape.dataset_input, &s.features)?;
    }
    for s in &batch.web {
        MetricModel::check_dim(shape.web_input, &s.features)?;
    }
    let caches: Vec<_> = batch.dataset.iter().map(|s| model.dataset_forward(&s.features)).collect();
    let ed: Vec<Vec<f64>> = caches.iter().map(|c| c.2.clone()).collect();
    let ew: Vec<Vec<f64>> = batch.web.iter().map(|s| model.web.forward(&s.features)).collect();
    let el = loss_on_embeddings(batch, &ed, &ew, true);

    let mut grad = MetricModel::zeros(shape);
    for ((sample, (z, a, _)), g) in batch.dataset.iter().zip(&caches).zip(&el.dataset_grad) {
        if g.iter().all(|v| *v == 0.0) {
            continue;
        }
        let ga = model.dataset_out.backward(a, g, &mut grad.dataset_out);
        let gz: Vec<f64> = ga.iter().zip(z).map(|(g, z)| if *z > 0.0 { *g } else { 0.0 }).collect();
        model.dataset_hidden.backward(&sample.features, &gz, &mut grad.dataset_hidden);
    }
    for (sample, g) in batch.web.iter().zip(&el.web_grad) {
        if g.iter().all(|v| *v == 0.0) {
            continue;
        }
        model.web.backward(&sample.features, g, &mut grad.web);
    }
    Ok((el.loss, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    /// Dataset samples per mini-batch.
    pub batch_size: usize,
    /// Web positives drawn per class present in a mini-batch.
    pub web_per_class: usize,
    /// Extra web samples drawn at random per mini-batch to serve as negatives.
    pub web_negative_pool: usize,
    pub per_anchor_negatives: usize,
    pub margin: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            decay_factor: 10.0,
            decay_every: 5,
            epochs: 30,
            batch_size: 32,
            web_per_class: 4,
            web_negative_pool: 32,
            per_anchor_negatives: 8,
            margin: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        if self.decay_every == 0 {
            return Err(Error::InvalidArgument("decay_every must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.margin > 0.0) {
            return Err(Error::InvalidArgument("margin must be > 0".into()));
        }
        Ok(())
    }

    /// `lr₀ / decay^⌊epoch / decay_every⌋`
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate / self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MetricModel,
    pub curve: Vec<EpochLoss>,
}

pub fn write_loss_curve(path: &Path, curve: &[EpochLoss]) -> Result<()> {
    let mut out = String::from("epoch,mean_loss\n");
    for e in curve {
        out.push_str(&format!("{},{}\n", e.epoch, e.mean_loss));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Seeded mini-batch gradient descent over the dataset samples.
///
/// Each mini-batch pairs a slice of shuffled dataset samples with web
/// positives of the classes present plus a random pool of web negatives.
/// Batches whose classes have no web samples are skipped.
pub fn train(init: MetricModel, dataset: &[Sample], web: &[Sample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut model = init;
    let mut curve = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(TrainOutcome { model, curve });
    }
    if dataset.is_empty() || web.is_empty() {
        return Err(Error::InvalidArgument("training needs dataset and web samples".into()));
    }
    let n_classes = dataset.iter().chain(web).map(|s| s.class).max().unwrap_or(0) + 1;
    let mut web_by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (j, s) in web.iter().enumerate() {
        web_by_class[s.class].push(j);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let classes: BTreeSet<usize> = chunk.iter().map(|&i| dataset[i].class).collect();
            let mut web_idx: BTreeSet<usize> = BTreeSet::new();
            for &c in &classes {
                web_idx.extend(web_by_class[c].choose_multiple(&mut rng, config.web_per_class).copied());
            }
            if web_idx.is_empty() {
                continue;
            }
            for _ in 0..config.web_negative_pool {
                web_idx.insert(rng.random_range(0..web.len()));
            }
            let batch = construct_pairs(
                chunk.iter().map(|&i| dataset[i].clone()).collect(),
                web_idx.iter().map(|&j| web[j].clone()).collect(),
                config.per_anchor_negatives,
                config.margin,
                &mut rng,
            )?;
            let (loss, grad) = lifted_loss_gradient(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            model.step(&grad, lr);
            sum += loss;
            batches += 1;
        }
        let mean_loss = if batches == 0 { 0.0 } else { sum / batches as f64 };
        log::info!("epoch {epoch}: lr {lr:e}, mean loss {mean_loss:.6}");
        curve.push(EpochLoss {
            epoch,
            mean_loss,
            learning_rate: lr,
        });
    }
    Ok(TrainOutcome { model, curve })
}
