use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::init::derive_seed;
use super::patches::sample_patches;
use super::schedule::{lr_at_epoch, TrainPlan};
use crate::error::{Error, Result};
use crate::io::checkpoint::Checkpoint;
use crate::io::manifest::{DatasetManifest, Split};
use crate::metrics::image_quality;
use crate::net::{build_network, Network, NetworkConfig};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// Summary of one completed epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    pub val_psnr: f64,
    pub val_ssim: f64,
    pub wall_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// One tab-separated line per epoch: epoch, lr, loss, val_psnr, val_ssim.
    /// Wall time is left out so that identical runs give identical logs.
    pub fn to_log(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            writeln!(
                s,
                "{}\t{:e}\t{:e}\t{}\t{}",
                r.epoch, r.lr, r.loss, r.val_psnr, r.val_ssim
            )
            .unwrap();
        }
        s
    }

    pub fn parse_log(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let bad =
                || Error::Validation(format!("history line {}: expected 5 numeric fields", i + 1));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            records.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                lr: num(f[1])?,
                loss: num(f[2])?,
                val_psnr: num(f[3])?,
                val_ssim: num(f[4])?,
                wall_secs: 0.0,
            });
        }
        Ok(TrainHistory { records })
    }
}

/// Final network of a run with its checkpoint and per-epoch history.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub network: Network<T>,
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
}

/// Joint optimizer of measurement and reconstruction parameters.
pub struct Trainer<T> {
    net: Network<T>,
    adam: AdamState<T>,
    plan: TrainPlan,
    rng: ChaCha8Rng,
    epoch: usize,
    steps: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(net: Network<T>, plan: TrainPlan) -> Result<Self> {
        plan.validate()?;
        let b = net.config().block_size;
        if !plan.patch_size.is_multiple_of(b) {
            return Err(Error::Config(format!(
                "patch_size {} is not a multiple of the block size {b}",
                plan.patch_size
            )));
        }
        let lengths: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        let names = net.param_info().iter().map(|p| p.name.clone()).collect();
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, "patches"));
        Ok(Trainer {
            adam: AdamState::new(&lengths).with_names(names),
            net,
            plan,
            rng,
            epoch: 0,
            steps: 0,
        })
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    pub fn into_network(self) -> Network<T> {
        self.net
    }

    pub fn plan(&self) -> &TrainPlan {
        &self.plan
    }

    /// Adam steps taken so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    fn diverged(&self, loss: f64) -> Error {
        Error::Diverged {
            epoch: self.epoch,
            step: self.steps,
            loss,
            last_good: Box::new(Checkpoint::from_network(
                &self.net,
                self.epoch.saturating_sub(1),
                self.plan.seed,
            )),
        }
    }

    /// One Adam update on `batch` (the batch is its own target). Returns the
    /// loss before the update. Parameters are left untouched when the loss
    /// or any gradient is non-finite.
    pub fn step(&mut self, batch: &Tensor<T>, lr: f64) -> Result<f64> {
        let (loss, grads) = self.net.loss_and_gradients(batch)?;
        let loss = loss.as_f64();
        if !loss.is_finite() {
            return Err(self.diverged(loss));
        }
        let mut params = self.net.params_mut();
        match self.adam.step(&mut params, &grads.values, lr) {
            Ok(()) => {}
            Err(Error::NonFinite { .. }) => return Err(self.diverged(loss)),
            Err(e) => return Err(e),
        }
        self.steps += 1;
        Ok(loss)
    }

    fn batches(
        &mut self,
        pool: Option<&Tensor<T>>,
        images: &[Tensor<T>],
    ) -> Result<Vec<Tensor<T>>> {
        let p = self.plan.patch_size;
        let bs = self.plan.batch_size;
        match pool {
            Some(pool) => {
                let mut order: Vec<usize> = (0..pool.dims().n).collect();
                order.shuffle(&mut self.rng);
                order
                    .chunks(bs)
                    .map(|idx| {
                        let mut data = Vec::with_capacity(idx.len() * p * p);
                        for &i in idx {
                            data.extend_from_slice(pool.item(i));
                        }
                        Tensor::from_vec(Dims::new(idx.len(), 1, p, p), data)
                    })
                    .collect()
            }
            None => {
                let mut remaining = self.plan.patches_per_epoch;
                let mut out = Vec::new();
                while remaining > 0 {
                    let n = remaining.min(bs);
                    out.push(sample_patches(
                        images,
                        p,
                        n,
                        self.plan.augmentation_enabled,
                        &mut self.rng,
                    )?);
                    remaining -= n;
                }
                Ok(out)
            }
        }
    }

    /// Runs every epoch of the plan and returns the final-epoch network.
    pub fn run(
        mut self,
        train_images: &[Tensor<T>],
        val_images: &[Tensor<T>],
    ) -> Result<TrainOutcome<T>> {
        if train_images.is_empty() {
            return Err(Error::usage("Trainer::run", "no training images"));
        }
        let pool = match self.plan.fixed_patches {
            Some(count) => Some(sample_patches(
                train_images,
                self.plan.patch_size,
                count,
                self.plan.augmentation_enabled,
                &mut self.rng,
            )?),
            None => None,
        };
        let mut history = TrainHistory::default();
        for epoch in 1..=self.plan.epochs {
            self.epoch = epoch;
            let start = Instant::now();
            let lr = lr_at_epoch(&self.plan, epoch)?;
            let batches = self.batches(pool.as_ref(), train_images)?;
            let mut total = 0.0;
            for batch in &batches {
                total += self.step(batch, lr)?;
            }
            let loss = total / batches.len() as f64;
            let (val_psnr, val_ssim) = evaluate(&self.net, val_images)?;
            let record = EpochRecord {
                epoch,
                lr,
                loss,
                val_psnr,
                val_ssim,
                wall_secs: start.elapsed().as_secs_f64(),
            };
            log::info!(
                "epoch {epoch}/{}: lr {lr:e}, loss {loss:.6e}, val psnr {val_psnr:.3} dB, ssim {val_ssim:.4} ({:.1}s)",
                self.plan.epochs,
                record.wall_secs
            );
            history.records.push(record);
        }
        let checkpoint = Checkpoint::from_network(&self.net, self.epoch, self.plan.seed);
        Ok(TrainOutcome {
            network: self.net,
            checkpoint,
            history,
        })
    }
}

/// Mean PSNR and SSIM of full-image reconstructions. NaN for an empty set.
pub fn evaluate<T: Scalar>(net: &Network<T>, images: &[Tensor<T>]) -> Result<(f64, f64)> {
    if images.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let (mut p, mut s) = (0.0, 0.0);
    for img in images {
        let (ip, is) = image_quality(&net.reconstruct(img)?, img)?;
        p += ip;
        s += is;
    }
    let n = images.len() as f64;
    Ok((p / n, s / n))
}

/// Trains a freshly initialized network on in-memory images.
pub fn train_on_images<T: Scalar>(
    config: &NetworkConfig,
    plan: &TrainPlan,
    train_images: &[Tensor<T>],
    val_images: &[Tensor<T>],
) -> Result<TrainOutcome<T>> {
    let net = build_network(config, plan.seed)?;
    Trainer::new(net, plan.clone())?.run(train_images, val_images)
}

/// Trains on the `train` split of `train_manifest`, validating on the `val`
/// split of `val_manifest` after every epoch.
pub fn train<T: Scalar>(
    config: &NetworkConfig,
    plan: &TrainPlan,
    train_manifest: &DatasetManifest,
    val_manifest: &DatasetManifest,
) -> Result<TrainOutcome<T>> {
    let load = |m: &DatasetManifest, split: Split| -> Result<Vec<Tensor<T>>> {
        let images: Vec<Tensor<T>> = m.load_split(split)?.into_iter().map(|(_, t)| t).collect();
        if images.is_empty() {
            return Err(Error::usage(
                "train",
                format!("manifest has no {split} entries"),
            ));
        }
        Ok(images)
    };
    let train_images = load(train_manifest, Split::Train)?;
    let val_images = load(val_manifest, Split::Val)?;
    train_on_images(config, plan, &train_images, &val_images)
}
