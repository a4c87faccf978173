//! Conditional adversarial generator/discriminator pair with pluggable label
//! conditioning, hinge losses, a deterministic training loop, and bit-exact
//! checkpointing.
//!
//! Checkpoint file layout: magic `BCGN`, u32 version (LE), u64 JSON manifest
//! length (LE), the JSON manifest (config echo, step, RNG state, tensor
//! directory), then raw little-endian f32 tensor payloads in directory order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditioning::{label_range_max, CondCache, Conditioning, StrategyKind};
use crate::dataset::{LoadedDataset, EPSILON_TEMPERATURE};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::nn::{Activation, Adam, AdamConfig, Mlp, MlpCache, Tensor};
use crate::rng::Rng;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"BCGN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Hinge,
    /// Non-saturating logistic loss.
    Bce,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub image_size: usize,
    pub noise_dim: usize,
    pub embedding_dim: usize,
    pub hidden_g: usize,
    pub hidden_d: usize,
    pub batch_size: usize,
    pub steps: u64,
    pub d_steps_per_g: usize,
    pub strategy: StrategyKind,
    pub loss: LossKind,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            image_size: 32,
            noise_dim: 32,
            embedding_dim: 64,
            hidden_g: 256,
            hidden_d: 256,
            batch_size: 64,
            steps: 2000,
            d_steps_per_g: 1,
            strategy: StrategyKind::BinaryBits,
            loss: LossKind::Hinge,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 2
            || self.noise_dim == 0
            || self.embedding_dim == 0
            || self.hidden_g == 0
            || self.hidden_d == 0
            || self.batch_size == 0
            || self.d_steps_per_g == 0
        {
            return Err(Error::Config("train config dimensions must be positive".into()));
        }
        if self.adam.lr <= 0.0 || !self.adam.lr.is_finite() {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Generator: concat(z, embedding) -> hidden -> n*n with a tanh head,
/// outputs in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub conditioning: Conditioning,
    pub net: Mlp,
    pub noise_dim: usize,
    pub image_size: usize,
}

pub struct GenForward {
    /// batch x n^2 outputs in [-1, 1]
    pub images: Vec<f32>,
    cond_caches: Vec<CondCache>,
    net_cache: MlpCache,
}

impl Generator {
    pub fn init(config: &TrainConfig, rng: &mut Rng) -> Self {
        let conditioning = Conditioning::init(config.strategy, config.embedding_dim, rng);
        let n2 = config.image_size * config.image_size;
        let net = Mlp::init(
            &[
                (
                    config.noise_dim + config.embedding_dim,
                    config.hidden_g,
                    Some(Activation::LeakyRelu),
                ),
                (config.hidden_g, n2, Some(Activation::Tanh)),
            ],
            rng,
        );
        Generator {
            conditioning,
            net,
            noise_dim: config.noise_dim,
            image_size: config.image_size,
        }
    }

    /// Forward a batch of (noise, label) pairs.
    pub fn forward(&self, noise: &[f32], labels: &[f32]) -> Result<GenForward> {
        let batch = labels.len();
        if noise.len() != batch * self.noise_dim {
            return Err(Error::ShapeMismatch("generator noise batch".into()));
        }
        let d_e = self.conditioning.embedding_dim();
        let in_dim = self.noise_dim + d_e;
        let mut input = vec![0.0f32; batch * in_dim];
        let mut cond_caches = Vec::with_capacity(batch);
        for (bi, &t) in labels.iter().enumerate() {
            let (emb, cache) = self.conditioning.forward(t)?;
            let row = &mut input[bi * in_dim..(bi + 1) * in_dim];
            row[..self.noise_dim]
                .copy_from_slice(&noise[bi * self.noise_dim..(bi + 1) * self.noise_dim]);
            row[self.noise_dim..].copy_from_slice(&emb);
            cond_caches.push(cache);
        }
        let (images, net_cache) = self.net.forward(&input, batch)?;
        Ok(GenForward {
            images,
            cond_caches,
            net_cache,
        })
    }

    /// Convenience single-sample forward.
    pub fn generate(&self, noise: &[f32], label: f32) -> Result<Vec<f32>> {
        Ok(self.forward(noise, &[label])?.images)
    }

    /// Backpropagate d(loss)/d(images); returns grads aligned with
    /// [`param_tensors`] (conditioning first, then the dense stack).
    pub fn backward(&self, fwd: &GenForward, d_images: &[f32]) -> Result<Vec<Tensor>> {
        let (d_input, net_grads) = self.net.backward(&fwd.net_cache, d_images)?;
        let mut grads = self.zero_grads();
        let n_cond = self.conditioning.param_tensors().len();
        let d_e = self.conditioning.embedding_dim();
        let in_dim = self.noise_dim + d_e;
        for (bi, cache) in fwd.cond_caches.iter().enumerate() {
            let d_emb = &d_input[bi * in_dim + self.noise_dim..(bi + 1) * in_dim];
            self.conditioning
                .backward(cache, d_emb, &mut grads[..n_cond])?;
        }
        for (gi, (dw, db)) in net_grads.into_iter().enumerate() {
            grads[n_cond + 2 * gi] = dw;
            grads[n_cond + 2 * gi + 1] = db;
        }
        Ok(grads)
    }

    pub fn param_tensors(&self) -> Vec<&Tensor> {
        let mut v = self.conditioning.param_tensors();
        v.extend(self.net.param_tensors());
        v
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.conditioning.param_tensors_mut();
        v.extend(self.net.param_tensors_mut());
        v
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.param_tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape().to_vec()))
            .collect()
    }
}

/// Discriminator: concat(flat image, embedding) -> hidden -> scalar score.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub conditioning: Conditioning,
    pub net: Mlp,
    pub image_size: usize,
}

pub struct DiscForward {
    pub scores: Vec<f32>,
    cond_caches: Vec<CondCache>,
    net_cache: MlpCache,
}

impl Discriminator {
    pub fn init(config: &TrainConfig, rng: &mut Rng) -> Self {
        let conditioning = Conditioning::init(config.strategy, config.embedding_dim, rng);
        let n2 = config.image_size * config.image_size;
        let net = Mlp::init(
            &[
                (
                    n2 + config.embedding_dim,
                    config.hidden_d,
                    Some(Activation::LeakyRelu),
                ),
                (config.hidden_d, 1, None),
            ],
            rng,
        );
        Discriminator {
            conditioning,
            net,
            image_size: config.image_size,
        }
    }

    pub fn forward(&self, images: &[f32], labels: &[f32]) -> Result<DiscForward> {
        let batch = labels.len();
        let n2 = self.image_size * self.image_size;
        if images.len() != batch * n2 {
            return Err(Error::ShapeMismatch("discriminator image batch".into()));
        }
        let d_e = self.conditioning.embedding_dim();
        let in_dim = n2 + d_e;
        let mut input = vec![0.0f32; batch * in_dim];
        let mut cond_caches = Vec::with_capacity(batch);
        for (bi, &t) in labels.iter().enumerate() {
            let (emb, cache) = self.conditioning.forward(t)?;
            let row = &mut input[bi * in_dim..(bi + 1) * in_dim];
            row[..n2].copy_from_slice(&images[bi * n2..(bi + 1) * n2]);
            row[n2..].copy_from_slice(&emb);
            cond_caches.push(cache);
        }
        let (scores, net_cache) = self.net.forward(&input, batch)?;
        Ok(DiscForward {
            scores,
            cond_caches,
            net_cache,
        })
    }

    pub fn score(&self, image: &[f32], label: f32) -> Result<f32> {
        Ok(self.forward(image, &[label])?.scores[0])
    }

    /// Backpropagate per-sample score gradients; returns the parameter grads
    /// and d(loss)/d(images) for generator updates.
    pub fn backward(&self, fwd: &DiscForward, d_scores: &[f32]) -> Result<(Vec<Tensor>, Vec<f32>)> {
        let (d_input, net_grads) = self.net.backward(&fwd.net_cache, d_scores)?;
        let mut grads = self.zero_grads();
        let n_cond = self.conditioning.param_tensors().len();
        let n2 = self.image_size * self.image_size;
        let d_e = self.conditioning.embedding_dim();
        let in_dim = n2 + d_e;
        let batch = fwd.cond_caches.len();
        let mut d_images = vec![0.0f32; batch * n2];
        for (bi, cache) in fwd.cond_caches.iter().enumerate() {
            let row = &d_input[bi * in_dim..(bi + 1) * in_dim];
            d_images[bi * n2..(bi + 1) * n2].copy_from_slice(&row[..n2]);
            self.conditioning
                .backward(cache, &row[n2..], &mut grads[..n_cond])?;
        }
        for (gi, (dw, db)) in net_grads.into_iter().enumerate() {
            grads[n_cond + 2 * gi] = dw;
            grads[n_cond + 2 * gi + 1] = db;
        }
        Ok((grads, d_images))
    }

    pub fn param_tensors(&self) -> Vec<&Tensor> {
        let mut v = self.conditioning.param_tensors();
        v.extend(self.net.param_tensors());
        v
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.conditioning.param_tensors_mut();
        v.extend(self.net.param_tensors_mut());
        v
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.param_tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape().to_vec()))
            .collect()
    }
}

/// Hinge losses: d_loss = mean(max(0, 1 - s_real)) + mean(max(0, 1 + s_fake)),
/// g_loss = -mean(s_fake).
pub fn hinge_losses(real_scores: &[f32], fake_scores: &[f32]) -> Result<(f32, f32)> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d_real: f64 = real_scores
        .iter()
        .map(|&s| (1.0 - s as f64).max(0.0))
        .sum::<f64>()
        / real_scores.len() as f64;
    let d_fake: f64 = fake_scores
        .iter()
        .map(|&s| (1.0 + s as f64).max(0.0))
        .sum::<f64>()
        / fake_scores.len() as f64;
    let g: f64 = -fake_scores.iter().map(|&s| s as f64).sum::<f64>() / fake_scores.len() as f64;
    Ok(((d_real + d_fake) as f32, g as f32))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        (1.0 + x.exp()).ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn bce_losses(real_scores: &[f32], fake_scores: &[f32]) -> Result<(f32, f32)> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let d: f64 = real_scores
        .iter()
        .map(|&s| softplus(-s as f64))
        .sum::<f64>()
        / real_scores.len() as f64
        + fake_scores.iter().map(|&s| softplus(s as f64)).sum::<f64>()
            / fake_scores.len() as f64;
    let g: f64 = fake_scores
        .iter()
        .map(|&s| softplus(-s as f64))
        .sum::<f64>()
        / fake_scores.len() as f64;
    Ok((d as f32, g as f32))
}

/// Training dataset in memory: flat [-1, +1] images plus labels.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub n: usize,
    pub images: Vec<Vec<f32>>,
    pub labels: Vec<f32>,
}

impl TrainData {
    pub fn from_dataset(ds: &LoadedDataset) -> Self {
        let images = ds
            .images
            .iter()
            .map(|img| {
                img.pixels()
                    .iter()
                    .map(|&p| if p > 127 { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        TrainData {
            n: ds.n,
            images,
            labels: ds.labels.clone(),
        }
    }
}

/// One loss-log row per training step.
pub type LossLog = Vec<(u64, f32, f32)>;

pub fn encode_loss_log(log: &LossLog) -> String {
    let mut out = String::from("step,d_loss,g_loss\n");
    for (step, d, g) in log {
        out.push_str(&format!("{step},{d},{g}\n"));
    }
    out
}

/// Full training state: models, optimizers, RNG stream, step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub config: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub opt_g: Adam,
    pub opt_d: Adam,
    pub rng: Rng,
    pub step: u64,
}

fn param_count(tensors: &[&Tensor]) -> usize {
    tensors.iter().map(|t| t.numel()).sum()
}

fn flatten(tensors: &[&Tensor]) -> Vec<f32> {
    tensors
        .iter()
        .flat_map(|t| t.data().iter().copied())
        .collect()
}

fn unflatten(tensors: &mut [&mut Tensor], flat: &[f32]) {
    let mut off = 0;
    for t in tensors.iter_mut() {
        let n = t.numel();
        t.data_mut().copy_from_slice(&flat[off..off + n]);
        off += n;
    }
    debug_assert_eq!(off, flat.len());
}

impl Trainer {
    /// Parameter init and the training stream use separate sub-streams of the
    /// config seed, so generation and training draws never interleave.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut g_rng = Rng::derive(config.seed, &[0]);
        let mut d_rng = Rng::derive(config.seed, &[1]);
        let train_rng = Rng::derive(config.seed, &[2]);
        let generator = Generator::init(&config, &mut g_rng);
        let discriminator = Discriminator::init(&config, &mut d_rng);
        let opt_g = Adam::new(config.adam, param_count(&generator.param_tensors()));
        let opt_d = Adam::new(config.adam, param_count(&discriminator.param_tensors()));
        Ok(Trainer {
            config,
            generator,
            discriminator,
            opt_g,
            opt_d,
            rng: train_rng,
            step: 0,
        })
    }

    fn sample_fake_label(&mut self) -> f32 {
        let hi = label_range_max() as f64;
        let lo = EPSILON_TEMPERATURE as f64;
        (hi - self.rng.next_f64() * (hi - lo)) as f32
    }

    fn sample_noise(&mut self, batch: usize) -> Vec<f32> {
        (0..batch * self.config.noise_dim)
            .map(|_| self.rng.next_normal() as f32)
            .collect()
    }

    fn losses(&self, real: &[f32], fake: &[f32]) -> Result<(f32, f32)> {
        match self.config.loss {
            LossKind::Hinge => hinge_losses(real, fake),
            LossKind::Bce => bce_losses(real, fake),
        }
    }

    /// d(d_loss)/d(score) for real and fake batches.
    fn d_score_grads(&self, real: &[f32], fake: &[f32]) -> (Vec<f32>, Vec<f32>) {
        let br = real.len() as f32;
        let bf = fake.len() as f32;
        match self.config.loss {
            LossKind::Hinge => (
                real.iter()
                    .map(|&s| if s < 1.0 { -1.0 / br } else { 0.0 })
                    .collect(),
                fake.iter()
                    .map(|&s| if s > -1.0 { 1.0 / bf } else { 0.0 })
                    .collect(),
            ),
            LossKind::Bce => (
                real.iter()
                    .map(|&s| (-(1.0 - sigmoid(s as f64)) / br as f64) as f32)
                    .collect(),
                fake.iter()
                    .map(|&s| (sigmoid(s as f64) / bf as f64) as f32)
                    .collect(),
            ),
        }
    }

    /// d(g_loss)/d(score) for the generator update.
    fn g_score_grads(&self, fake: &[f32]) -> Vec<f32> {
        let b = fake.len() as f32;
        match self.config.loss {
            LossKind::Hinge => fake.iter().map(|_| -1.0 / b).collect(),
            LossKind::Bce => fake
                .iter()
                .map(|&s| (-(1.0 - sigmoid(s as f64)) / b as f64) as f32)
                .collect(),
        }
    }

    fn sample_real_batch(&mut self, data: &TrainData) -> (Vec<f32>, Vec<f32>) {
        let b = self.config.batch_size;
        let n2 = self.config.image_size * self.config.image_size;
        let mut images = Vec::with_capacity(b * n2);
        let mut labels = Vec::with_capacity(b);
        for _ in 0..b {
            let idx = self.rng.next_below(data.images.len() as u64) as usize;
            images.extend_from_slice(&data.images[idx]);
            labels.push(data.labels[idx]);
        }
        (images, labels)
    }

    /// One alternating update: `d_steps_per_g` discriminator steps followed
    /// by one generator step. Returns the last (d_loss, g_loss).
    pub fn train_step(&mut self, data: &TrainData) -> Result<(f32, f32)> {
        if data.n != self.config.image_size {
            return Err(Error::ShapeMismatch(format!(
                "dataset images are {}x{} but config.image_size = {}",
                data.n, data.n, self.config.image_size
            )));
        }
        let b = self.config.batch_size;
        let mut last_d = 0.0f32;

        for _ in 0..self.config.d_steps_per_g {
            let (real_images, real_labels) = self.sample_real_batch(data);
            let fake_labels: Vec<f32> = (0..b).map(|_| self.sample_fake_label()).collect();
            let noise = self.sample_noise(b);
            let fake_images = self.generator.forward(&noise, &fake_labels)?.images;

            let real_fwd = self.discriminator.forward(&real_images, &real_labels)?;
            let fake_fwd = self.discriminator.forward(&fake_images, &fake_labels)?;
            let (d_loss, _) = self.losses(&real_fwd.scores, &fake_fwd.scores)?;
            if !d_loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    step: self.step,
                    d_loss,
                    g_loss: f32::NAN,
                });
            }
            let (ds_real, ds_fake) = self.d_score_grads(&real_fwd.scores, &fake_fwd.scores);
            let (mut grads, _) = self.discriminator.backward(&real_fwd, &ds_real)?;
            let (fake_grads, _) = self.discriminator.backward(&fake_fwd, &ds_fake)?;
            for (a, bq) in grads.iter_mut().zip(&fake_grads) {
                for (x, y) in a.data_mut().iter_mut().zip(bq.data()) {
                    *x += y;
                }
            }
            let mut flat = flatten(&self.discriminator.param_tensors());
            let flat_grads = flatten(&grads.iter().collect::<Vec<_>>());
            self.opt_d.update(&mut flat, &flat_grads)?;
            unflatten(&mut self.discriminator.param_tensors_mut(), &flat);
            last_d = d_loss;
        }

        // generator step
        let fake_labels: Vec<f32> = (0..b).map(|_| self.sample_fake_label()).collect();
        let noise = self.sample_noise(b);
        let gen_fwd = self.generator.forward(&noise, &fake_labels)?;
        let disc_fwd = self.discriminator.forward(&gen_fwd.images, &fake_labels)?;
        let (_, g_loss) = self.losses(&[1.0], &disc_fwd.scores)?;
        if !g_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                step: self.step,
                d_loss: last_d,
                g_loss,
            });
        }
        let ds = self.g_score_grads(&disc_fwd.scores);
        let (_, d_images) = self.discriminator.backward(&disc_fwd, &ds)?;
        let g_grads = self.generator.backward(&gen_fwd, &d_images)?;
        let mut flat = flatten(&self.generator.param_tensors());
        let flat_grads = flatten(&g_grads.iter().collect::<Vec<_>>());
        self.opt_g.update(&mut flat, &flat_grads)?;
        unflatten(&mut self.generator.param_tensors_mut(), &flat);

        self.step += 1;
        Ok((last_d, g_loss))
    }

    /// Train until `self.step` reaches `target_steps`, appending to the log.
    pub fn train_until(
        &mut self,
        data: &TrainData,
        target_steps: u64,
        log: &mut LossLog,
    ) -> Result<()> {
        while self.step < target_steps {
            let (d, g) = self.train_step(data)?;
            log.push((self.step, d, g));
        }
        Ok(())
    }

    // ---- checkpoint format ----

    fn tensor_directory(&self) -> Vec<(String, Vec<usize>)> {
        let mut dir = Vec::new();
        for (i, t) in self.generator.param_tensors().iter().enumerate() {
            dir.push((format!("g.{i}"), t.shape().to_vec()));
        }
        for (i, t) in self.discriminator.param_tensors().iter().enumerate() {
            dir.push((format!("d.{i}"), t.shape().to_vec()));
        }
        dir.push(("opt_g.m".into(), vec![self.opt_g.first_moment.len()]));
        dir.push(("opt_g.v".into(), vec![self.opt_g.second_moment.len()]));
        dir.push(("opt_d.m".into(), vec![self.opt_d.first_moment.len()]));
        dir.push(("opt_d.v".into(), vec![self.opt_d.second_moment.len()]));
        dir
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let manifest = CheckpointManifest {
            config: self.config.clone(),
            step: self.step,
            rng_state: self.rng.state(),
            opt_g_step: self.opt_g.step,
            opt_d_step: self.opt_d.step,
            tensors: self
                .tensor_directory()
                .into_iter()
                .map(|(name, shape)| TensorEntry { name, shape })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut write_tensor = |data: &[f32]| {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for t in self.generator.param_tensors() {
            write_tensor(t.data());
        }
        for t in self.discriminator.param_tensors() {
            write_tensor(t.data());
        }
        write_tensor(&self.opt_g.first_moment);
        write_tensor(&self.opt_g.second_moment);
        write_tensor(&self.opt_d.first_moment);
        write_tensor(&self.opt_d.second_moment);
        let mut f = std::fs::File::create(path)?;
        f.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut data = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut data)?;
        Trainer::decode(&data)
    }

    /// Parse a checkpoint byte stream. Validates magic, version, manifest
    /// sanity, and that every tensor shape matches the architecture implied
    /// by the embedded config.
    pub fn decode(data: &[u8]) -> Result<Self> {
        if data.len() < 16 {
            return Err(Error::CheckpointFormat("truncated header".into()));
        }
        if data[0..4] != CHECKPOINT_MAGIC {
            return Err(Error::CheckpointFormat("bad magic".into()));
        }
        let version = u32::from_le_bytes(data[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let json_len = u64::from_le_bytes(data[8..16].try_into().unwrap()) as usize;
        if json_len > data.len().saturating_sub(16) {
            return Err(Error::CheckpointFormat("manifest length out of bounds".into()));
        }
        let manifest: CheckpointManifest = serde_json::from_slice(&data[16..16 + json_len])?;
        // reject wild manifests before instantiating the architecture, so a
        // corrupt file can't trigger a huge allocation
        let claimed: usize = manifest
            .tensors
            .iter()
            .try_fold(0usize, |acc, e| {
                e.shape
                    .iter()
                    .try_fold(1usize, |p, &d| p.checked_mul(d))
                    .and_then(|n| acc.checked_add(n))
            })
            .ok_or_else(|| Error::CheckpointFormat("tensor directory overflows".into()))?;
        let payload = &data[16 + json_len..];
        if payload.len() != claimed.checked_mul(4).unwrap_or(usize::MAX) {
            return Err(Error::CheckpointFormat(format!(
                "payload has {} bytes, directory claims {}",
                payload.len(),
                claimed.saturating_mul(4)
            )));
        }
        let c = &manifest.config;
        if c.image_size > 1 << 12
            || c.noise_dim > 1 << 16
            || c.embedding_dim > 1 << 16
            || c.hidden_g > 1 << 20
            || c.hidden_d > 1 << 20
        {
            return Err(Error::CheckpointFormat("config dimensions out of range".into()));
        }
        let mut trainer = Trainer::new(manifest.config.clone())?;

        // expected directory from the freshly built architecture
        let expected = trainer.tensor_directory();
        if manifest.tensors.len() != expected.len() {
            return Err(Error::CheckpointFormat(format!(
                "tensor directory has {} entries, expected {}",
                manifest.tensors.len(),
                expected.len()
            )));
        }
        for (entry, (name, shape)) in manifest.tensors.iter().zip(&expected) {
            if &entry.name != name || &entry.shape != shape {
                return Err(Error::CheckpointFormat(format!(
                    "tensor {} has shape {:?}, expected {name} {shape:?}",
                    entry.name, entry.shape
                )));
            }
        }
        let total: usize = expected
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        if payload.len() != total * 4 {
            return Err(Error::CheckpointFormat(format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                total * 4
            )));
        }
        let mut off = 0usize;
        let mut read_into = |dst: &mut [f32]| {
            for v in dst.iter_mut() {
                *v = f32::from_le_bytes(payload[off..off + 4].try_into().unwrap());
                off += 4;
            }
        };
        for t in trainer.generator.param_tensors_mut() {
            read_into(t.data_mut());
        }
        for t in trainer.discriminator.param_tensors_mut() {
            read_into(t.data_mut());
        }
        read_into(&mut trainer.opt_g.first_moment);
        read_into(&mut trainer.opt_g.second_moment);
        read_into(&mut trainer.opt_d.first_moment);
        read_into(&mut trainer.opt_d.second_moment);
        trainer.opt_g.step = manifest.opt_g_step;
        trainer.opt_d.step = manifest.opt_d_step;
        trainer.rng = Rng::from_state(manifest.rng_state);
        trainer.step = manifest.step;
        Ok(trainer)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    config: TrainConfig,
    step: u64,
    rng_state: [u64; 4],
    opt_g_step: u64,
    opt_d_step: u64,
    tensors: Vec<TensorEntry>,
}

/// Sample `count` conditioned images: seeded noise, generator forward,
/// threshold at 0 (exact 0 maps to +1), spins rendered as 0/255 pixels.
pub fn generate_conditioned(
    generator: &Generator,
    label: f32,
    count: usize,
    seed: u64,
) -> Result<Vec<GrayImage>> {
    let mut rng = Rng::seed_from_u64(seed);
    let n = generator.image_size;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let noise: Vec<f32> = (0..generator.noise_dim)
            .map(|_| rng.next_normal() as f32)
            .collect();
        let raw = generator.generate(&noise, label)?;
        let pixels = raw
            .iter()
            .map(|&v| if v >= 0.0 { 255 } else { 0 })
            .collect();
        out.push(GrayImage::new(n, pixels)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            image_size: 8,
            noise_dim: 4,
            embedding_dim: 8,
            hidden_g: 16,
            hidden_d: 16,
            batch_size: 4,
            steps: 10,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    fn tiny_data(n: usize) -> TrainData {
        let mut rng = Rng::seed_from_u64(400);
        let images = (0..16)
            .map(|_| {
                (0..n * n)
                    .map(|_| if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        let labels = (0..16)
            .map(|i| 0.1 + 0.25 * i as f32)
            .collect();
        TrainData { n, images, labels }
    }

    #[test]
    fn hinge_loss_cases() {
        let (d, _) = hinge_losses(&[2.0], &[-2.0]).unwrap();
        assert_eq!(d, 0.0);
        let (d, _) = hinge_losses(&[0.0], &[0.0]).unwrap();
        assert_eq!(d, 2.0);
        let (_, g) = hinge_losses(&[0.0], &[3.0]).unwrap();
        assert_eq!(g, -3.0);
        assert!(hinge_losses(&[], &[1.0]).is_err());
    }

    #[test]
    fn generator_deterministic_and_bounded() {
        let trainer = Trainer::new(tiny_config()).unwrap();
        let noise = vec![0.3f32, -0.2, 0.9, 0.0];
        let a = trainer.generator.generate(&noise, 1.5).unwrap();
        let b = trainer.generator.generate(&noise, 1.5).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn discriminator_deterministic_finite() {
        let trainer = Trainer::new(tiny_config()).unwrap();
        let img = vec![1.0f32; 64];
        let a = trainer.discriminator.score(&img, 2.0).unwrap();
        let b = trainer.discriminator.score(&img, 2.0).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite());
        let extreme = vec![-1.0f32; 64];
        assert!(trainer.discriminator.score(&extreme, 2.0).unwrap().is_finite());
    }

    #[test]
    fn zero_discriminator_scores_zero() {
        let mut trainer = Trainer::new(tiny_config()).unwrap();
        for t in trainer.discriminator.param_tensors_mut() {
            t.data_mut().fill(0.0);
        }
        let img = vec![1.0f32; 64];
        assert_eq!(trainer.discriminator.score(&img, 2.0).unwrap(), 0.0);
        // all-zero G and D: scores are 0 so d_loss = 2
        let (d, _) = hinge_losses(&[0.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(d, 2.0);
    }

    #[test]
    fn conditioning_reaches_generator_output() {
        let trainer = Trainer::new(tiny_config()).unwrap();
        let noise = vec![0.1f32; 4];
        let a = trainer.generator.generate(&noise, 0.5).unwrap();
        let b = trainer.generator.generate(&noise, 4.0).unwrap();
        assert_ne!(a, b);
        // and the discriminator
        let img = vec![1.0f32; 64];
        let sa = trainer.discriminator.score(&img, 0.5).unwrap();
        let sb = trainer.discriminator.score(&img, 4.0).unwrap();
        assert_ne!(sa, sb);
    }

    #[test]
    fn training_is_deterministic() {
        let data = tiny_data(8);
        let run = || {
            let mut t = Trainer::new(tiny_config()).unwrap();
            let mut log = LossLog::new();
            t.train_until(&data, 20, &mut log).unwrap();
            (t, log)
        };
        let (t1, log1) = run();
        let (t2, log2) = run();
        assert_eq!(log1, log2);
        assert_eq!(t1, t2);
        assert!(log1.iter().all(|(_, d, g)| d.is_finite() && g.is_finite()));
    }

    #[test]
    fn checkpoint_roundtrip_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_data(8);

        let mut full = Trainer::new(tiny_config()).unwrap();
        let mut log = LossLog::new();
        full.train_until(&data, 30, &mut log).unwrap();

        let mut half = Trainer::new(tiny_config()).unwrap();
        half.train_until(&data, 15, &mut LossLog::new()).unwrap();
        let ckpt = dir.path().join("half.bcgn");
        half.save(&ckpt).unwrap();
        let mut resumed = Trainer::load(&ckpt).unwrap();
        assert_eq!(resumed, half);
        resumed.train_until(&data, 30, &mut LossLog::new()).unwrap();
        assert_eq!(resumed.generator, full.generator);
        assert_eq!(resumed.discriminator, full.discriminator);

        // save -> load -> save is byte-identical
        let p1 = dir.path().join("a.bcgn");
        let p2 = dir.path().join("b.bcgn");
        full.save(&p1).unwrap();
        Trainer::load(&p1).unwrap().save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let trainer = Trainer::new(tiny_config()).unwrap();
        let path = dir.path().join("c.bcgn");
        trainer.save(&path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            Trainer::decode(&bad_magic),
            Err(Error::CheckpointFormat(_))
        ));

        let mut bad_version = good.clone();
        bad_version[4..8].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            Trainer::decode(&bad_version),
            Err(Error::CheckpointVersion { .. })
        ));

        let truncated = &good[..good.len() - 5];
        assert!(Trainer::decode(truncated).is_err());
    }

    #[test]
    fn generate_conditioned_contract() {
        let trainer = Trainer::new(tiny_config()).unwrap();
        let a = generate_conditioned(&trainer.generator, 2.0, 5, 9).unwrap();
        let b = generate_conditioned(&trainer.generator, 2.0, 5, 9).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, b);
        for img in &a {
            assert!(img.pixels().iter().all(|&p| p == 0 || p == 255));
        }
    }
}
