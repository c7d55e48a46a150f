use std::fmt::Display;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use raman_core::dataset::{self, Dataset, ForwardModel};
use raman_core::eval::{self, EvalOptions};
use raman_core::io::{write_atomic, write_bytes_atomic};
use raman_core::model::{self, TrainConfig};
use raman_core::nn::{load_checkpoint, save_checkpoint};
use raman_core::{Error, FiberParams, PowerProfile, Pump, PumpConfig, RamanGainTable, Scheme, SolverOptions, WdmGrid};

use crate::{Command, SolverArgs};

/// Largest tolerated share of test samples dropped for solver divergence.
const MAX_EXCLUDED: f64 = 0.01;

pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let mut message = e.to_string();
        let mut src = std::error::Error::source(&e);
        while let Some(s) = src {
            if !message.contains(&s.to_string()) {
                message.push_str(&format!(": {s}"));
            }
            src = s.source();
        }
        Failure {
            code: if e.is_usage() { 2 } else { 3 },
            message,
        }
    }
}

fn usage(msg: impl Display) -> Failure {
    Failure {
        code: 2,
        message: msg.to_string(),
    }
}

fn runtime(msg: impl Display) -> Failure {
    Failure {
        code: 3,
        message: msg.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn forward_model(args: &SolverArgs) -> Result<ForwardModel, Failure> {
    let table = match &args.gain_table {
        Some(p) => RamanGainTable::from_json(&read_text(p)?)?,
        None => RamanGainTable::default(),
    };
    let fiber = FiberParams {
        launch_power_dbm_per_ch: args.launch_dbm,
        ..FiberParams::default()
    };
    fiber.validate()?;
    if !(args.step_km > 0.0) {
        return Err(usage("--step-km must be positive"));
    }
    Ok(ForwardModel {
        fiber,
        table,
        solver: SolverOptions {
            internal_step_km: args.step_km,
            signal_signal_coupling: args.signal_coupling,
            ..SolverOptions::default()
        },
    })
}

fn grid_for(scheme: Scheme, dz_km: Option<f64>) -> Result<WdmGrid, Failure> {
    Ok(match dz_km {
        Some(dz) => WdmGrid::c_band(dz)?,
        None => scheme.default_grid(),
    })
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    dataset::read_dataset(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<TrainConfig, Failure> {
    TrainConfig::from_json(&read_text(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    write_bytes_atomic(path, format!("{text}\n").as_bytes())?;
    Ok(())
}

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate {
            scheme,
            count,
            seed,
            out,
            dz_km,
            solver,
        } => {
            let fm = forward_model(&solver)?;
            let grid = grid_for(scheme, dz_km)?;
            let count = count as usize;
            let step = (count / 20).max(1);
            let ds = dataset::generate_with_progress(scheme, &grid, count, seed, &fm, |done| {
                if done % step == 0 || done == count {
                    eprintln!("generated {done}/{count}");
                }
            })?;
            dataset::write_dataset(&out, &ds)?;
            println!(
                "wrote {} {} samples ({}x{} profiles) to {}",
                ds.len(),
                scheme,
                grid.n_ch(),
                grid.n_z(),
                out.display()
            );
        }
        Command::Solve {
            scheme,
            pumps,
            out,
            pump_out,
            dz_km,
            solver,
        } => {
            let fm = forward_model(&solver)?;
            let grid = grid_for(scheme, dz_km)?;
            let config = PumpConfig::parse(&pumps)?;
            config.validate(scheme)?;
            let r = fm.solve_checked(&config, &grid)?;
            write_atomic(&out, |w| r.signal_profile.write_csv(w))?;
            if let Some(p) = pump_out {
                write_atomic(&p, |w| r.write_pump_csv(w))?;
            }
            println!(
                "solved in {} iterations (residual {:.2e}); wrote {}x{} profile to {}",
                r.iterations_used,
                r.residual,
                grid.n_ch(),
                grid.n_z(),
                out.display()
            );
        }
        Command::Split {
            input,
            train,
            val,
            test,
            seed,
            train_out,
            val_out,
            test_out,
        } => {
            let ds = load_dataset(&input)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = dataset::split_with_extrema(&ds, train, val, test, &mut rng)?;
            for (set, path) in [(&a, &train_out), (&b, &val_out), (&c, &test_out)] {
                if !set.is_empty() {
                    dataset::write_dataset(path, set)?;
                }
            }
            println!("split {} samples into {train}/{val}/{test}", ds.len());
        }
        Command::Train {
            train,
            val,
            config,
            out,
            report,
        } => {
            let cfg = load_config(&config)?;
            let train_set = load_dataset(&train)?;
            let val_set = load_dataset(&val)?;
            if val_set.scheme != train_set.scheme {
                return Err(Error::SchemeMismatch {
                    expected: train_set.scheme,
                    found: val_set.scheme,
                }
                .into());
            }
            let (cp, rep) = model::train_with_progress(&train_set, &val_set, &cfg, |e| {
                eprintln!("epoch {:4}  train {:.6}  val {:.6}", e.epoch, e.train_mse, e.val_mse);
            })?;
            save_checkpoint(&out, &cp)?;
            if let Some(p) = report {
                rep.save_csv(&p)?;
            }
            println!(
                "best epoch {} (val MSE {:.6}) after {} epochs in {:.1} s; flatten length {}",
                rep.best_epoch,
                rep.best_val_mse,
                rep.epochs.len(),
                rep.wall_time.as_secs_f64(),
                cp.network.arch().flatten_len()
            );
        }
        Command::Evaluate {
            model: model_path,
            test,
            report,
            per_sample,
            solver,
        } => {
            let fm = forward_model(&solver)?;
            let cp = load_checkpoint(&model_path)?;
            let test_set = load_dataset(&test)?;
            let ev = eval::evaluate(&cp, &test_set, &fm, EvalOptions::default())?;
            eval::save_report(&report, &ev.summary)?;
            if let Some(p) = per_sample {
                write_atomic(&p, |w| ev.write_records_csv(w))?;
            }
            for x in &ev.excluded {
                eprintln!("excluded sample {}: {}", x.index, x.reason);
            }
            println!(
                "{}: mean Error_max {:.4} dB, std {:.4} dB over {} samples ({} excluded)",
                ev.summary.scheme, ev.summary.mean_db, ev.summary.std_db, ev.summary.n_samples, ev.summary.n_excluded
            );
            if ev.excluded_fraction() > MAX_EXCLUDED {
                return Err(runtime(format!(
                    "{} of {} samples excluded for solver divergence",
                    ev.excluded.len(),
                    test_set.len()
                )));
            }
        }
        Command::Design {
            model: model_path,
            target,
            out,
            verify,
            solver,
        } => {
            let cp = load_checkpoint(&model_path)?;
            let file = fs::File::open(&target).map_err(|e| usage(format!("{}: {e}", target.display())))?;
            let profile = PowerProfile::read_csv(std::io::BufReader::new(file), &cp.grid)
                .map_err(|e| usage(format!("{}: {e}", target.display())))?;
            let pumps = model::predict(&profile, &cp)?;
            let error_max_db = if verify {
                let fm = forward_model(&solver)?;
                let r = fm.solve_checked(&pumps, &cp.grid)?;
                Some(eval::error_max(&profile, &r.signal_profile)?)
            } else {
                None
            };
            write_json(
                &out,
                &Design {
                    scheme: cp.scheme,
                    pumps: &pumps.pumps,
                    error_max_db,
                },
            )?;
            for (i, p) in pumps.pumps.iter().enumerate() {
                println!(
                    "pump {}: {:.2} mW at {:.2} nm ({})",
                    i + 1,
                    p.power_mw,
                    p.wavelength_nm,
                    p.direction
                );
            }
            if let Some(e) = error_max_db {
                println!("verified Error_max {e:.4} dB");
            }
        }
        Command::Sweep {
            scheme,
            sizes,
            config,
            out,
            seed,
            val_count,
            pool,
            val,
            solver,
        } => {
            let cfg = load_config(&config)?;
            if cfg.scheme != scheme {
                return Err(Error::SchemeMismatch {
                    expected: scheme,
                    found: cfg.scheme,
                }
                .into());
            }
            let largest = sizes.iter().copied().max().unwrap_or(0);
            eval::check_sizes(&sizes, largest)?;
            let fm = forward_model(&solver)?;
            let grid = scheme.default_grid();
            let pool = match pool {
                Some(p) => load_dataset(&p)?,
                None => {
                    eprintln!("generating {largest}-sample pool");
                    dataset::generate(scheme, &grid, largest, seed, &fm)?
                }
            };
            let val = match val {
                Some(p) => load_dataset(&p)?,
                None => {
                    if val_count == 0 {
                        return Err(usage("--val-count must be positive"));
                    }
                    eprintln!("generating {val_count}-sample validation set");
                    dataset::generate(scheme, &grid, val_count, validation_seed(seed), &fm)?
                }
            };
            for ds in [&pool, &val] {
                if ds.scheme != scheme {
                    return Err(Error::SchemeMismatch {
                        expected: scheme,
                        found: ds.scheme,
                    }
                    .into());
                }
            }
            let rows = eval::sweep_training_size(&pool, &val, &sizes, &cfg, |r| {
                eprintln!("size {:6}  best val MSE {:.6} at epoch {}", r.size, r.best_val_mse, r.best_epoch);
            })?;
            write_atomic(&out, |w| eval::write_sweep_csv(&rows, w))?;
            println!("wrote {} sweep rows to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

/// Seed of the validation set that accompanies a pool seeded with `seed`.
fn validation_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_0f_da7a_5e7
}

#[derive(Serialize)]
struct Design<'a> {
    scheme: Scheme,
    pumps: &'a [Pump],
    #[serde(skip_serializing_if = "Option::is_none")]
    error_max_db: Option<f64>,
}
