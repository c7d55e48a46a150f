//! Supervised sample generation, extrema-preserving splits, min-max
//! normalization and the binary dataset format.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::domain::{FiberParams, PowerProfile, PumpConfig, RamanGainTable, Scheme, WdmGrid};
use crate::error::{Error, Result};
use crate::io::{self, Decoder, Encoder};
use crate::solver::{self, SolveResult, SolverOptions};

const DATASET_MAGIC: &[u8; 7] = b"RAMDS1\0";
const DATASET_VERSION: u8 = 1;

/// Everything the forward solver needs besides the pumps and the grid.
#[derive(Debug, Clone, Default)]
pub struct ForwardModel {
    pub fiber: FiberParams,
    pub table: RamanGainTable,
    pub solver: SolverOptions,
}

impl ForwardModel {
    pub fn solve(&self, pumps: &PumpConfig, grid: &WdmGrid) -> Result<SolveResult> {
        solver::solve(pumps, grid, &self.fiber, &self.table, &self.solver)
    }

    /// Solves and, if any power had to be clamped, re-solves at half the
    /// internal step before accepting the result.
    pub fn solve_checked(&self, pumps: &PumpConfig, grid: &WdmGrid) -> Result<SolveResult> {
        let r = self.solve(pumps, grid)?;
        if !r.clamped {
            return Ok(r);
        }
        let finer = SolverOptions {
            internal_step_km: self.solver.internal_step_km / 2.0,
            ..self.solver
        };
        solver::solve(pumps, grid, &self.fiber, &self.table, &finer)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[P_1..P_Np (mW), λ_1..λ_Np (nm)]`
    pub y: Vec<f64>,
    pub x: PowerProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scheme: Scheme,
    pub grid: WdmGrid,
    pub seed: u64,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Copy holding only the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            scheme: self.scheme,
            grid: self.grid,
            seed: self.seed,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.scheme.y_min(), self.scheme.y_max());
        for (k, s) in self.samples.iter().enumerate() {
            if s.y.len() != lo.len() {
                return Err(Error::invalid(format!("sample {k}: pump vector has wrong length")));
            }
            if s.y.iter().zip(lo.iter().zip(&hi)).any(|(v, (a, b))| !(v >= a && v <= b)) {
                return Err(Error::invalid(format!("sample {k}: pump vector outside scheme ranges")));
            }
            if s.x.grid() != &self.grid {
                return Err(Error::invalid(format!("sample {k}: profile grid differs from dataset grid")));
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.samples.is_empty() {
            return Err(Error::invalid("refusing to write a dataset with no samples"));
        }
        self.validate()?;
        let mut e = Encoder::default();
        e.bytes(DATASET_MAGIC);
        e.u8(DATASET_VERSION);
        e.u32(self.scheme.id());
        e.u32(u32::try_from(self.samples.len()).map_err(|_| Error::invalid("too many samples"))?);
        e.u32(self.grid.n_ch() as u32);
        e.u32(self.grid.n_z() as u32);
        e.u32(self.scheme.n_pumps() as u32);
        e.f64(self.grid.f_start_thz());
        e.f64(self.grid.spacing_thz());
        e.f64(self.grid.span_km());
        e.f64(self.grid.dz_km());
        e.u64(self.seed);
        for s in &self.samples {
            e.f64s(&s.y);
            e.f64s(s.x.values());
        }
        Ok(e.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes);
        d.expect_magic(DATASET_MAGIC, DATASET_VERSION)?;
        let scheme = Scheme::from_id(d.u32()?)?;
        let k = d.u32()? as usize;
        let n_ch = d.u32()? as usize;
        let n_z = d.u32()? as usize;
        let n_p = d.u32()? as usize;
        if n_p != scheme.n_pumps() {
            return Err(Error::format(format!("{scheme} has {} pumps, header says {n_p}", scheme.n_pumps())));
        }
        if k == 0 {
            return Err(Error::format("dataset has no samples"));
        }
        let grid = WdmGrid::new(n_ch, d.f64()?, d.f64()?, d.f64()?, d.f64()?)
            .map_err(|e| Error::format(format!("bad grid header: {e}")))?;
        if grid.n_z() != n_z {
            return Err(Error::format("grid header n_z disagrees with span / dz"));
        }
        let seed = d.u64()?;
        let record = 2 * n_p + n_ch * n_z;
        if d.remaining() != k * record * 8 {
            return Err(Error::format(format!(
                "expected {} bytes of records, found {}",
                k * record * 8,
                d.remaining()
            )));
        }
        let mut samples = Vec::with_capacity(k);
        for idx in 0..k {
            let y = d.f64s(2 * n_p)?;
            let x = PowerProfile::new(grid, d.f64s(n_ch * n_z)?)
                .map_err(|e| Error::format(format!("record {idx}: {e}")))?;
            samples.push(Sample { y, x });
        }
        d.finish()?;
        let ds = Dataset { scheme, grid, seed, samples };
        ds.validate().map_err(|e| Error::format(e.to_string()))?;
        Ok(ds)
    }
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let bytes = dataset.encode()?;
    io::write_bytes_atomic(path, &bytes)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::decode(&io::read_file(path)?)
}

/// Independent random stream for sample `index` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws each entry independently and uniformly from `[lo[m], hi[m]]`.
pub fn sample_uniform<R: Rng + ?Sized>(lo: &[f64], hi: &[f64], rng: &mut R) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&a, &b)| a + (b - a) * rng.random::<f64>())
        .collect()
}

pub fn sample_pump_config<R: Rng + ?Sized>(scheme: Scheme, rng: &mut R) -> PumpConfig {
    let y = sample_uniform(&scheme.y_min(), &scheme.y_max(), rng);
    PumpConfig::from_vector(scheme, &y).expect("vector length matches scheme")
}

/// Generates `count` samples by uniform pump sampling and forward solving.
///
/// Sample `i` depends only on `(seed, i)`, so the result does not depend on
/// how many worker threads run it.
pub fn generate(
    scheme: Scheme,
    grid: &WdmGrid,
    count: usize,
    seed: u64,
    model: &ForwardModel,
) -> Result<Dataset> {
    generate_with_progress(scheme, grid, count, seed, model, |_| {})
}

pub fn generate_with_progress<F>(
    scheme: Scheme,
    grid: &WdmGrid,
    count: usize,
    seed: u64,
    model: &ForwardModel,
    progress: F,
) -> Result<Dataset>
where
    F: Fn(usize) + Sync,
{
    if count == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let done = std::sync::atomic::AtomicUsize::new(0);
    let samples = (0..count)
        .into_par_iter()
        .map(|index| {
            let mut rng = sample_rng(seed, index as u64);
            let pumps = sample_pump_config(scheme, &mut rng);
            let r = model.solve_checked(&pumps, grid).map_err(|e| Error::Sample {
                index,
                source: Box::new(e),
            })?;
            progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1);
            Ok(Sample {
                y: pumps.to_vector(),
                x: r.signal_profile,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        scheme,
        grid: *grid,
        seed,
        samples,
    })
}

/// Random train/val/test split in which the training set holds the minimum
/// and maximum of every profile pixel over all selected samples.
pub fn split_with_extrema<R: Rng + ?Sized>(
    dataset: &Dataset,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    rng: &mut R,
) -> Result<(Dataset, Dataset, Dataset)> {
    let total = n_train + n_val + n_test;
    if total > dataset.len() {
        return Err(Error::invalid(format!(
            "split sizes {n_train}+{n_val}+{n_test} exceed the {} available samples",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);
    order.truncate(total);
    let (mut train, rest) = {
        let (a, b) = order.split_at(n_train);
        (a.to_vec(), b.to_vec())
    };
    let mut rest = rest;

    let pixels = dataset.grid.pixels();
    let value = |s: usize, p: usize| dataset.samples[s].x.values()[p];

    loop {
        let (lo, hi) = extrema(&order, pixels, value);
        let mut in_train = vec![false; dataset.len()];
        for &s in &train {
            in_train[s] = true;
        }
        // one holder per pixel extremum, preferring samples already in train
        let mut needed = vec![false; dataset.len()];
        for p in 0..pixels {
            for target in [lo[p], hi[p]] {
                let holder = train
                    .iter()
                    .copied()
                    .find(|&s| value(s, p) == target)
                    .or_else(|| rest.iter().copied().find(|&s| value(s, p) == target))
                    .expect("extremum is attained by some selected sample");
                needed[holder] = true;
            }
        }
        let missing: Vec<usize> = rest.iter().copied().filter(|&s| needed[s]).collect();
        if missing.is_empty() {
            break;
        }
        let mut spare: Vec<usize> = train.iter().copied().filter(|&s| !needed[s]).collect();
        if spare.len() < missing.len() {
            return Err(Error::invalid(format!(
                "training set of {n_train} cannot hold the {} samples carrying pixel extrema",
                needed.iter().filter(|&&b| b).count()
            )));
        }
        spare.shuffle(rng);
        for (incoming, outgoing) in missing.into_iter().zip(spare) {
            let ti = train.iter().position(|&s| s == outgoing).unwrap();
            let ri = rest.iter().position(|&s| s == incoming).unwrap();
            train[ti] = incoming;
            rest[ri] = outgoing;
        }
    }

    let (val, test) = rest.split_at(n_val);
    Ok((
        dataset.subset(&train),
        dataset.subset(val),
        dataset.subset(test),
    ))
}

fn extrema(indices: &[usize], pixels: usize, value: impl Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; pixels];
    let mut hi = vec![f64::NEG_INFINITY; pixels];
    for &s in indices {
        for p in 0..pixels {
            let v = value(s, p);
            lo[p] = lo[p].min(v);
            hi[p] = hi[p].max(v);
        }
    }
    (lo, hi)
}

/// Pixel-wise profile bounds (from the training split) and pump-vector
/// bounds (from the scheme table).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub pixel_min_dbm: Vec<f64>,
    pub pixel_max_dbm: Vec<f64>,
    pub y_min: Vec<f64>,
    pub y_max: Vec<f64>,
}

impl NormStats {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("cannot fit normalization on an empty training set"));
        }
        let indices: Vec<usize> = (0..train.len()).collect();
        let (lo, hi) = extrema(&indices, train.grid.pixels(), |s, p| train.samples[s].x.values()[p]);
        Ok(Self {
            pixel_min_dbm: lo,
            pixel_max_dbm: hi,
            y_min: train.scheme.y_min(),
            y_max: train.scheme.y_max(),
        })
    }

    /// `(x - min) / (max - min)` per pixel, 0 where the pixel is constant.
    /// Values outside the training range are not clamped.
    pub fn normalize_x(&self, x_dbm: &[f64]) -> Vec<f64> {
        x_dbm
            .iter()
            .zip(self.pixel_min_dbm.iter().zip(&self.pixel_max_dbm))
            .map(|(&v, (&lo, &hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }

    pub fn normalize_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.y_min.iter().zip(&self.y_max))
            .map(|(&v, (&lo, &hi))| (v - lo) / (hi - lo))
            .collect()
    }

    pub fn denormalize_y(&self, y_norm: &[f64]) -> Vec<f64> {
        y_norm
            .iter()
            .zip(self.y_min.iter().zip(&self.y_max))
            .map(|(&v, (&lo, &hi))| lo + v * (hi - lo))
            .collect()
    }
}

pub fn fit_norm_stats(train: &Dataset) -> Result<NormStats> {
    NormStats::fit(train)
}
