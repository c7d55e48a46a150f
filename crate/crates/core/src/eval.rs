//! Closed-loop evaluation: predict pumps from a profile, re-solve, compare.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Dataset, ForwardModel, Sample};
use crate::domain::{PowerProfile, PumpConfig, Scheme};
use crate::error::{Error, Result};
use crate::model::{self, TrainConfig};
use crate::nn::Checkpoint;

pub const DEFAULT_BINS: usize = 50;

/// Largest absolute dB difference over all (channel, distance) pixels.
pub fn error_max(target: &PowerProfile, reconstructed: &PowerProfile) -> Result<f64> {
    Ok(error_matrix(target, reconstructed)?.into_iter().fold(0.0, f64::max))
}

pub fn error_matrix(target: &PowerProfile, reconstructed: &PowerProfile) -> Result<Vec<f64>> {
    if target.grid() != reconstructed.grid() {
        return Err(Error::invalid("profiles are on different grids"));
    }
    Ok(target
        .values()
        .iter()
        .zip(reconstructed.values())
        .map(|(a, b)| (a - b).abs())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub index: usize,
    pub predicted: PumpConfig,
    pub error_max_db: f64,
    pub errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `bins` uniform bins over `[0, max]`; the last bin is closed.
    pub fn build(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let max = values.iter().copied().fold(0.0, f64::max);
        let top = if max > 0.0 { max } else { 1.0 };
        let edges: Vec<f64> = (0..=bins).map(|i| top * i as f64 / bins as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let b = ((v / top) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        Self { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub scheme: Scheme,
    pub n_samples: usize,
    pub n_excluded: usize,
    pub mean_db: f64,
    pub std_db: f64,
    pub histogram: Histogram,
}

impl EvalSummary {
    /// Mean and population standard deviation of the included errors.
    pub fn from_errors(scheme: Scheme, errors: &[f64], n_excluded: usize, bins: usize) -> Self {
        let n = errors.len();
        let (mean, std) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let mean = errors.iter().sum::<f64>() / n as f64;
            let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64;
            (mean, var.sqrt())
        };
        Self {
            scheme,
            n_samples: n,
            n_excluded,
            mean_db: mean,
            std_db: std,
            histogram: Histogram::build(errors, bins),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct Exclusion {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub records: Vec<EvalRecord>,
    pub excluded: Vec<Exclusion>,
    pub summary: EvalSummary,
}

impl Evaluation {
    pub fn excluded_fraction(&self) -> f64 {
        let total = self.records.len() + self.excluded.len();
        if total == 0 {
            0.0
        } else {
            self.excluded.len() as f64 / total as f64
        }
    }

    /// `index,error_max_db,P_1..P_Np,λ_1..λ_Np` for every included sample.
    pub fn write_records_csv<W: Write>(&self, out: W) -> Result<()> {
        let n_p = self.summary.scheme.n_pumps();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string(), "error_max_db".to_string()];
        header.extend((1..=n_p).map(|i| format!("P_{i}")));
        header.extend((1..=n_p).map(|i| format!("λ_{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = vec![r.index.to_string(), r.error_max_db.to_string()];
            row.extend(r.predicted.to_vector().iter().map(f64::to_string));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::format(e.to_string())
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub bins: usize,
    pub keep_errors: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            keep_errors: false,
        }
    }
}

/// Predicts every test profile with the checkpoint, re-solves and scores.
pub fn evaluate(
    checkpoint: &Checkpoint,
    test_set: &Dataset,
    model: &ForwardModel,
    opts: EvalOptions,
) -> Result<Evaluation> {
    checkpoint.expect_scheme(test_set.scheme)?;
    let profiles: Vec<PowerProfile> = test_set.samples.iter().map(|s| s.x.clone()).collect();
    let predicted = model::predict_batch(&profiles, checkpoint)?;
    evaluate_with(test_set, model, opts, |i, _| Ok(predicted[i].clone()))
}

/// Scores an arbitrary pump predictor against the test profiles. Samples
/// whose re-solve fails are excluded from the statistics and reported.
pub fn evaluate_with<F>(test_set: &Dataset, model: &ForwardModel, opts: EvalOptions, predictor: F) -> Result<Evaluation>
where
    F: Fn(usize, &Sample) -> Result<PumpConfig> + Sync,
{
    if test_set.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let outcomes: Vec<Result<EvalRecord>> = test_set
        .samples
        .par_iter()
        .enumerate()
        .map(|(index, sample)| {
            let predicted = predictor(index, sample)?;
            let solved = model.solve_checked(&predicted, &test_set.grid)?;
            let errors = error_matrix(&sample.x, &solved.signal_profile)?;
            let error_max_db = errors.iter().copied().fold(0.0, f64::max);
            Ok(EvalRecord {
                index,
                predicted,
                error_max_db,
                errors: opts.keep_errors.then_some(errors),
            })
        })
        .collect();
    let mut records = Vec::with_capacity(outcomes.len());
    let mut excluded = Vec::new();
    for (index, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => records.push(r),
            Err(e @ Error::SolverDiverged { .. }) => excluded.push(Exclusion {
                index,
                reason: e.to_string(),
            }),
            Err(e) => {
                return Err(Error::Sample {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    let errors: Vec<f64> = records.iter().map(|r| r.error_max_db).collect();
    let summary = EvalSummary::from_errors(test_set.scheme, &errors, excluded.len(), opts.bins);
    Ok(Evaluation {
        records,
        excluded,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub size: usize,
    pub best_val_mse: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Trains one model per size on the first `size` samples of `pool`, all
/// validated on the same `val` set.
pub fn sweep_training_size<F>(
    pool: &Dataset,
    val: &Dataset,
    sizes: &[usize],
    config: &TrainConfig,
    mut on_row: F,
) -> Result<Vec<SweepRow>>
where
    F: FnMut(&SweepRow),
{
    check_sizes(sizes, pool.len())?;
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let subset = pool.subset(&(0..size).collect::<Vec<_>>());
        let (_, report) = model::train(&subset, val, config)?;
        let row = SweepRow {
            size,
            best_val_mse: report.best_val_mse,
            best_epoch: report.best_epoch,
            epochs_run: report.epochs.len(),
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

pub fn check_sizes(sizes: &[usize], available: usize) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::invalid("no training sizes given"));
    }
    if sizes[0] == 0 || sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("training sizes must be positive and strictly ascending"));
    }
    let largest = sizes[sizes.len() - 1];
    if largest > available {
        return Err(Error::invalid(format!("size {largest} exceeds the {available}-sample pool")));
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "size,best_val_mse,best_epoch,epochs_run")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.size, r.best_val_mse, r.best_epoch, r.epochs_run)?;
    }
    Ok(())
}

pub fn save_report(path: &Path, summary: &EvalSummary) -> Result<()> {
    let text = summary.to_json()?;
    crate::io::write_bytes_atomic(path, text.as_bytes())
}
