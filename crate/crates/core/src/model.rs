//! The inverse model: profile → (feature extraction → regression) → pump
//! vector, its end-to-end training loop and pump prediction.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, NormStats};
use crate::domain::{PowerProfile, PumpConfig, Scheme, WdmGrid};
use crate::error::{Error, Result};
use crate::nn::{ArchitectureSpec, Checkpoint, ConvSpec, Network, RmsProp, RmsPropState};

const FILTERS: usize = 32;
const KERNEL: usize = 3;
const POOL: usize = 2;

/// Hidden layer widths selected per scheme.
pub fn hidden_sizes(scheme: Scheme) -> (usize, usize) {
    match scheme {
        Scheme::Counter2 => (40, 40),
        Scheme::Counter3 | Scheme::Bidir4 => (100, 40),
    }
}

/// Three 32-filter 3×3 conv blocks with 2×2 average pooling, two ReLU
/// hidden layers and a linear output of length 2·N_p.
pub fn architecture(scheme: Scheme, grid: &WdmGrid) -> ArchitectureSpec {
    let (h1, h2) = hidden_sizes(scheme);
    ArchitectureSpec {
        in_h: grid.n_ch(),
        in_w: grid.n_z(),
        convs: vec![
            ConvSpec {
                maps: FILTERS,
                kernel: KERNEL,
                pool: POOL,
            };
            3
        ],
        hidden: vec![h1, h2],
        n_out: 2 * scheme.n_pumps(),
    }
}

pub fn build(scheme: Scheme, grid: &WdmGrid, seed: u64) -> Result<Network<f32>> {
    Network::init(architecture(scheme, grid), seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub scheme: Scheme,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "defaults::patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    /// Hidden layer widths; the per-scheme defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<[usize; 2]>,
}

mod defaults {
    pub fn batch_size() -> usize {
        128
    }
    pub fn lr() -> f64 {
        0.001
    }
    pub fn max_epochs() -> usize {
        1000
    }
    pub fn patience() -> usize {
        50
    }
}

impl TrainConfig {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            batch_size: defaults::batch_size(),
            lr: defaults::lr(),
            max_epochs: defaults::max_epochs(),
            patience: defaults::patience(),
            seed: 0,
            hidden: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::format(format!("train config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.max_epochs == 0 || self.patience >= self.max_epochs {
            return Err(Error::invalid("need 0 < patience < max_epochs"));
        }
        if self.hidden.is_some_and(|h| h.contains(&0)) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub wall_time: Duration,
}

impl TrainReport {
    /// `epoch,train_mse,val_mse` rows, epochs counted from 1.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,train_mse,val_mse")?;
        for e in &self.epochs {
            writeln!(out, "{},{},{}", e.epoch, e.train_mse, e.val_mse)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, |w| self.write_csv(w))
    }
}

/// Normalized network inputs and targets of a dataset, as flat f32 buffers.
struct Prepared {
    x: Vec<f32>,
    y: Vec<f32>,
    n: usize,
    pixels: usize,
    dim: usize,
}

impl Prepared {
    fn new(ds: &Dataset, norm: &NormStats) -> Self {
        let pixels = ds.grid.pixels();
        let dim = 2 * ds.scheme.n_pumps();
        let mut x = Vec::with_capacity(ds.len() * pixels);
        let mut y = Vec::with_capacity(ds.len() * dim);
        for s in &ds.samples {
            x.extend(norm.normalize_x(s.x.values()).into_iter().map(|v| v as f32));
            y.extend(norm.normalize_y(&s.y).into_iter().map(|v| v as f32));
        }
        Self {
            x,
            y,
            n: ds.len(),
            pixels,
            dim,
        }
    }

    fn gather(&self, idx: &[usize], xb: &mut Vec<f32>, yb: &mut Vec<f32>) {
        xb.clear();
        yb.clear();
        for &i in idx {
            xb.extend_from_slice(&self.x[i * self.pixels..(i + 1) * self.pixels]);
            yb.extend_from_slice(&self.y[i * self.dim..(i + 1) * self.dim]);
        }
    }
}

const EVAL_CHUNK: usize = 256;

/// Mean per-sample MSE of `net` over a prepared set.
fn mean_mse(net: &Network<f32>, data: &Prepared) -> Result<f64> {
    let mut total = 0.0;
    let mut start = 0;
    while start < data.n {
        let end = (start + EVAL_CHUNK).min(data.n);
        let b = end - start;
        let loss = net.loss(
            &data.x[start * data.pixels..end * data.pixels],
            &data.y[start * data.dim..end * data.dim],
            b,
        )?;
        total += loss * b as f64;
        start = end;
    }
    Ok(total / data.n as f64)
}

fn check_split(ds: &Dataset, what: &str, config: &TrainConfig) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::invalid(format!("{what} set is empty")));
    }
    if ds.scheme != config.scheme {
        return Err(Error::SchemeMismatch {
            expected: config.scheme,
            found: ds.scheme,
        });
    }
    Ok(())
}

pub fn train(train_set: &Dataset, val_set: &Dataset, config: &TrainConfig) -> Result<(Checkpoint, TrainReport)> {
    train_with_progress(train_set, val_set, config, |_| {})
}

/// Minimizes the batch-mean MSE with RMSprop, keeping the weights of the
/// epoch with the lowest validation MSE and stopping after `patience`
/// epochs without improvement. Normalization is fitted on `train_set` only.
pub fn train_with_progress<F>(
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<(Checkpoint, TrainReport)>
where
    F: FnMut(&EpochStats),
{
    config.validate()?;
    check_split(train_set, "training", config)?;
    check_split(val_set, "validation", config)?;
    if train_set.grid != val_set.grid {
        return Err(Error::invalid("training and validation grids differ"));
    }
    let started = Instant::now();
    let norm = NormStats::fit(train_set)?;
    let tr = Prepared::new(train_set, &norm);
    let va = Prepared::new(val_set, &norm);

    let mut arch = architecture(config.scheme, &train_set.grid);
    if let Some(h) = config.hidden {
        arch.hidden = h.to_vec();
    }
    let mut net = Network::init(arch, config.seed)?;
    let opt = RmsProp {
        lr: config.lr,
        ..RmsProp::default()
    };
    let mut state = RmsPropState::new(net.params().len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);

    let mut order: Vec<usize> = (0..tr.n).collect();
    let (mut xb, mut yb) = (Vec::new(), Vec::new());
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Vec<f32>)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sum = 0.0;
        for idx in order.chunks(config.batch_size) {
            tr.gather(idx, &mut xb, &mut yb);
            let (loss, grads) = net.loss_and_gradients(&xb, &yb, idx.len())?;
            sum += loss * idx.len() as f64;
            opt.step(net.params_mut(), &grads, &mut state);
        }
        let stats = EpochStats {
            epoch,
            train_mse: sum / tr.n as f64,
            val_mse: mean_mse(&net, &va)?,
        };
        history.push(stats);
        on_epoch(&stats);
        if !stats.val_mse.is_finite() || !stats.train_mse.is_finite() {
            return Err(Error::TrainingFailed {
                epoch,
                reason: "loss is not finite".into(),
                history: history.iter().map(|e| (e.train_mse, e.val_mse)).collect(),
            });
        }
        match &best {
            Some((_, v, _)) if stats.val_mse >= *v => {
                since_best += 1;
                if since_best >= config.patience {
                    break;
                }
            }
            _ => {
                best = Some((epoch, stats.val_mse, net.params().to_vec()));
                since_best = 0;
            }
        }
    }

    let (best_epoch, best_val_mse, params) = best.expect("at least one epoch ran");
    net.params_mut().copy_from_slice(&params);
    let checkpoint = Checkpoint::new(config.scheme, train_set.grid, norm, net)?;
    Ok((
        checkpoint,
        TrainReport {
            epochs: history,
            best_epoch,
            best_val_mse,
            wall_time: started.elapsed(),
        },
    ))
}

/// Maps raw network outputs to a pump configuration: clamp to [0, 1], then
/// scale into the scheme's ranges.
pub fn denormalize_prediction(scheme: Scheme, norm: &NormStats, raw: &[f64]) -> Result<PumpConfig> {
    let clamped: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut y = norm.denormalize_y(&clamped);
    // keep rounding from stepping outside the table bounds
    for (v, (lo, hi)) in y.iter_mut().zip(norm.y_min.iter().zip(&norm.y_max)) {
        *v = v.clamp(*lo, *hi);
    }
    PumpConfig::from_vector(scheme, &y)
}

pub fn predict(profile: &PowerProfile, checkpoint: &Checkpoint) -> Result<PumpConfig> {
    Ok(predict_batch(std::slice::from_ref(profile), checkpoint)?.remove(0))
}

pub fn predict_batch(profiles: &[PowerProfile], checkpoint: &Checkpoint) -> Result<Vec<PumpConfig>> {
    let dim = checkpoint.network.arch().n_out;
    let mut out = Vec::with_capacity(profiles.len());
    for chunk in profiles.chunks(EVAL_CHUNK) {
        let mut x = Vec::with_capacity(chunk.len() * checkpoint.grid.pixels());
        for p in chunk {
            if p.grid() != &checkpoint.grid {
                return Err(Error::invalid(format!(
                    "profile grid {}x{} does not match the model's {}x{} grid",
                    p.grid().n_ch(),
                    p.grid().n_z(),
                    checkpoint.grid.n_ch(),
                    checkpoint.grid.n_z()
                )));
            }
            x.extend(checkpoint.norm.normalize_x(p.values()).into_iter().map(|v| v as f32));
        }
        let raw = checkpoint.network.forward(&x, chunk.len())?;
        for r in raw.chunks_exact(dim) {
            let r: Vec<f64> = r.iter().map(|&v| v as f64).collect();
            out.push(denormalize_prediction(checkpoint.scheme, &checkpoint.norm, &r)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_lengths() {
        let a = architecture(Scheme::Counter2, &Scheme::Counter2.default_grid());
        assert_eq!(a.flatten_len(), 5 * 6 * 32);
        assert_eq!(a.feature_hw(), (5, 6));
        assert_eq!(a.n_out, 4);
        let b = architecture(Scheme::Bidir4, &Scheme::Bidir4.default_grid());
        assert_eq!(b.flatten_len(), 5 * 12 * 32);
        assert_eq!(b.n_out, 8);
        assert_eq!(b.hidden, vec![100, 40]);
        let c = architecture(Scheme::Counter3, &Scheme::Counter3.default_grid());
        assert_eq!(c.n_out, 6);
        assert_eq!(c.hidden, vec![100, 40]);
    }

    #[test]
    fn build_is_deterministic() {
        let g = Scheme::Counter2.default_grid();
        let a = build(Scheme::Counter2, &g, 3).unwrap();
        let b = build(Scheme::Counter2, &g, 3).unwrap();
        assert_eq!(a.params().len(), b.params().len());
        assert_eq!(a, b);
    }

    #[test]
    fn config_json() {
        let c = TrainConfig::from_json(r#"{"scheme":"counter2","batch_size":64,"lr":0.002,"max_epochs":10,"patience":3,"seed":5}"#).unwrap();
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.scheme, Scheme::Counter2);
        let d = TrainConfig::from_json(r#"{"scheme":"bidir4"}"#).unwrap();
        assert_eq!(d, TrainConfig::new(Scheme::Bidir4));
        assert!(TrainConfig::from_json(r#"{"scheme":"bidir4","bogus":1}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"scheme":"bidir4","patience":1000}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"scheme":"bidir4","batch_size":0}"#).is_err());
        let h = TrainConfig::from_json(r#"{"scheme":"counter3","hidden":[20,80]}"#).unwrap();
        assert_eq!(h.hidden, Some([20, 80]));
        assert!(TrainConfig::from_json(r#"{"scheme":"counter3","hidden":[0,80]}"#).is_err());
    }

    #[test]
    fn prediction_mapping() {
        let s = Scheme::Counter2;
        let norm = NormStats {
            pixel_min_dbm: vec![],
            pixel_max_dbm: vec![],
            y_min: s.y_min(),
            y_max: s.y_max(),
        };
        let mid = denormalize_prediction(s, &norm, &[0.5; 4]).unwrap();
        assert_eq!(mid.pumps[0].power_mw, 220.0);
        assert_eq!(mid.pumps[1].wavelength_nm, 1466.5);
        let low = denormalize_prediction(s, &norm, &[-0.2, 1.7, 0.0, 1.0]).unwrap();
        assert_eq!(low.pumps[0].power_mw, 40.0);
        assert_eq!(low.pumps[1].power_mw, 400.0);
        low.validate(s).unwrap();
    }
}
