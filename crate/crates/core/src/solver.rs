//! Forward Raman solver.
//!
//! Integrates the coupled power equations of all signal channels and pumps
//! along the span with fixed-step RK4. Counter-propagating fields turn the
//! problem into a two-point boundary value problem, which is resolved by
//! alternating sweeps: forward fields are integrated 0→L with the backward
//! trajectories frozen, then backward fields L→0 with the forward ones
//! frozen, until the trajectories stop changing.

use std::io::Write;

use crate::domain::{
    dbm_to_mw, mw_to_dbm, wavelength_to_freq, Direction, FiberParams, PowerProfile, PumpConfig,
    RamanGainTable, WdmGrid, DB_PER_NEPER,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Signal,
    Pump,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Field {
    pub freq_thz: f64,
    pub direction: Direction,
    pub alpha_np_km: f64,
    /// Launch power: at z = 0 for co-propagating fields, at z = L otherwise.
    pub boundary_mw: f64,
    pub kind: FieldKind,
}

/// All optical fields in the fiber: signals first (ascending frequency),
/// then pumps in configuration order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    fields: Vec<Field>,
}

impl FieldSet {
    pub fn new(fields: Vec<Field>) -> Result<Self> {
        for (k, f) in fields.iter().enumerate() {
            if !(f.freq_thz > 0.0) || !f.freq_thz.is_finite() {
                return Err(Error::invalid(format!("field {k}: frequency must be positive")));
            }
            if !(f.alpha_np_km >= 0.0) || !f.alpha_np_km.is_finite() {
                return Err(Error::invalid(format!("field {k}: attenuation must be non-negative")));
            }
            if !(f.boundary_mw >= 0.0) || !f.boundary_mw.is_finite() {
                return Err(Error::invalid(format!(
                    "field {k}: boundary power must be finite and non-negative"
                )));
            }
            if f.kind == FieldKind::Signal && f.boundary_mw == 0.0 {
                return Err(Error::invalid(format!("signal field {k} has zero launch power")));
            }
        }
        Ok(Self { fields })
    }

    /// Signals of `grid` launched at the fiber's per-channel power plus the
    /// configured pumps.
    pub fn build(pumps: &PumpConfig, grid: &WdmGrid, fiber: &FiberParams) -> Result<Self> {
        fiber.validate()?;
        let launch = dbm_to_mw(fiber.launch_power_dbm_per_ch);
        let mut fields: Vec<Field> = grid
            .channel_freqs()
            .into_iter()
            .map(|f| Field {
                freq_thz: f,
                direction: Direction::Co,
                alpha_np_km: fiber.alpha_signal_np_km(),
                boundary_mw: launch,
                kind: FieldKind::Signal,
            })
            .collect();
        for p in &pumps.pumps {
            fields.push(Field {
                freq_thz: wavelength_to_freq(p.wavelength_nm)?,
                direction: p.direction,
                alpha_np_km: fiber.alpha_pump_np_km(),
                boundary_mw: p.power_mw,
                kind: FieldKind::Pump,
            });
        }
        Self::new(fields)
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub internal_step_km: f64,
    pub bvp_tol_rel: f64,
    pub bvp_max_iters: usize,
    /// Include Raman transfer between signal channels.
    pub signal_signal_coupling: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            internal_step_km: 0.1,
            bvp_tol_rel: 1e-6,
            bvp_max_iters: 200,
            signal_signal_coupling: false,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.internal_step_km > 0.0) {
            return Err(Error::invalid("internal step must be positive"));
        }
        if !(self.bvp_tol_rel > 0.0) {
            return Err(Error::invalid("relaxation tolerance must be positive"));
        }
        if self.bvp_max_iters == 0 {
            return Err(Error::invalid("relaxation needs at least one iteration"));
        }
        Ok(())
    }
}

/// Pairwise Raman coupling in 1/(mW·km), stored sparsely per field.
#[derive(Debug, Clone)]
struct Coupling {
    sign: Vec<f64>,
    alpha: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

fn gamma(table: &RamanGainTable, nu_k: f64, nu_j: f64) -> f64 {
    if nu_j > nu_k {
        table.eval(nu_j - nu_k)
    } else if nu_j < nu_k {
        -(nu_k / nu_j) * table.eval(nu_k - nu_j)
    } else {
        0.0
    }
}

impl Coupling {
    fn new(fields: &FieldSet, table: &RamanGainTable, signal_signal: bool) -> Self {
        let fs = fields.fields();
        let rows = fs
            .iter()
            .enumerate()
            .map(|(k, fk)| {
                fs.iter()
                    .enumerate()
                    .filter(|&(j, fj)| {
                        j != k
                            && (signal_signal
                                || fk.kind == FieldKind::Pump
                                || fj.kind == FieldKind::Pump)
                    })
                    .filter_map(|(j, fj)| {
                        // g is per W; powers are carried in mW
                        let g = gamma(table, fk.freq_thz, fj.freq_thz) * 1e-3;
                        (g != 0.0).then_some((j, g))
                    })
                    .collect()
            })
            .collect();
        Self {
            sign: fs.iter().map(|f| f.direction.sign()).collect(),
            alpha: fs.iter().map(|f| f.alpha_np_km).collect(),
            rows,
        }
    }

    #[inline]
    fn row(&self, k: usize, p: &[f64]) -> f64 {
        let cross: f64 = self.rows[k].iter().map(|&(j, g)| g * p[j]).sum();
        self.sign[k] * p[k] * (cross - self.alpha[k])
    }

    fn eval_rows(&self, p: &[f64], rows: &[usize], out: &mut [f64]) {
        for &k in rows {
            out[k] = self.row(k, p);
        }
    }

    fn eval_all(&self, p: &[f64], out: &mut [f64]) {
        for k in 0..p.len() {
            out[k] = self.row(k, p);
        }
    }
}

/// Right-hand side dP/dz (mW/km) of the power equations for every field,
/// with full pairwise coupling.
pub fn derivative(powers_mw: &[f64], fields: &FieldSet, table: &RamanGainTable) -> Vec<f64> {
    assert_eq!(powers_mw.len(), fields.len(), "one power per field");
    let c = Coupling::new(fields, table, true);
    let mut out = vec![0.0; powers_mw.len()];
    c.eval_all(powers_mw, &mut out);
    out
}

/// Trajectories of every field at every internal integration node.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    step_km: f64,
    n_fields: usize,
    /// node-major: `node * n_fields + field`
    powers: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub clamped: bool,
}

impl FieldSolution {
    pub fn step_km(&self) -> f64 {
        self.step_km
    }

    pub fn n_nodes(&self) -> usize {
        self.powers.len() / self.n_fields
    }

    pub fn power(&self, node: usize, field: usize) -> f64 {
        self.powers[node * self.n_fields + field]
    }

    pub fn node_powers(&self, node: usize) -> &[f64] {
        &self.powers[node * self.n_fields..(node + 1) * self.n_fields]
    }

    pub fn trajectory(&self, field: usize) -> Vec<f64> {
        (0..self.n_nodes()).map(|n| self.power(n, field)).collect()
    }
}

struct Sweeper<'a> {
    coupling: &'a Coupling,
    n: usize,
    h: f64,
    steps: usize,
    powers: Vec<f64>,
    deriv: Vec<f64>,
    clamped: bool,
    // scratch
    y: Vec<f64>,
    k: [Vec<f64>; 4],
}

impl Sweeper<'_> {
    /// Value of frozen field `m` halfway between nodes `a` and `a + 1`
    /// (cubic Hermite from stored values and slopes).
    #[inline]
    fn mid(&self, a: usize, m: usize) -> f64 {
        let n = self.n;
        let (p0, p1) = (self.powers[a * n + m], self.powers[(a + 1) * n + m]);
        let (d0, d1) = (self.deriv[a * n + m], self.deriv[(a + 1) * n + m]);
        0.5 * (p0 + p1) + self.h * 0.125 * (d0 - d1)
    }

    /// Integrates `active` fields across the span, keeping `frozen` fields
    /// at their stored trajectories. Forward sweeps run 0→L, backward L→0.
    fn sweep(&mut self, active: &[usize], frozen: &[usize], forward: bool) {
        let n = self.n;
        let steps = self.steps;
        let h = if forward { self.h } else { -self.h };
        for s in 0..steps {
            let (from, to) = if forward { (s, s + 1) } else { (steps - s, steps - s - 1) };
            let lo = from.min(to);
            let base = from * n;

            self.y.copy_from_slice(&self.powers[base..base + n]);
            {
                let (y, k1) = (&self.y, &mut self.k[0]);
                self.coupling.eval_all(y, k1);
            }
            self.deriv[base..base + n].copy_from_slice(&self.k[0]);

            for &m in frozen {
                self.y[m] = self.mid(lo, m);
            }
            for &a in active {
                self.y[a] = self.powers[base + a] + 0.5 * h * self.k[0][a];
            }
            {
                let (y, k2) = (&self.y, &mut self.k[1]);
                self.coupling.eval_rows(y, active, k2);
            }
            for &a in active {
                self.y[a] = self.powers[base + a] + 0.5 * h * self.k[1][a];
            }
            {
                let (y, k3) = (&self.y, &mut self.k[2]);
                self.coupling.eval_rows(y, active, k3);
            }
            for &m in frozen {
                self.y[m] = self.powers[to * n + m];
            }
            for &a in active {
                self.y[a] = self.powers[base + a] + h * self.k[2][a];
            }
            {
                let (y, k4) = (&self.y, &mut self.k[3]);
                self.coupling.eval_rows(y, active, k4);
            }
            for &a in active {
                let k = &self.k;
                let mut v = self.powers[base + a]
                    + h / 6.0 * (k[0][a] + 2.0 * k[1][a] + 2.0 * k[2][a] + k[3][a]);
                if v < 0.0 {
                    v = 0.0;
                    self.clamped = true;
                }
                self.powers[to * n + a] = v;
            }
        }
        let end = if forward { steps } else { 0 };
        let (y, d) = (&self.powers[end * n..(end + 1) * n], &mut self.k[0]);
        self.coupling.eval_all(y, d);
        self.deriv[end * n..(end + 1) * n].copy_from_slice(&self.k[0]);
    }
}

fn max_relative_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(&a, &b)| {
            let scale = a.abs().max(b.abs());
            if scale > 0.0 {
                (a - b).abs() / scale
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Solves the boundary value problem for an arbitrary field set over
/// `length_km`, returning trajectories at every internal node.
pub fn solve_fields(
    fields: &FieldSet,
    length_km: f64,
    table: &RamanGainTable,
    opts: &SolverOptions,
) -> Result<FieldSolution> {
    opts.validate()?;
    if !(length_km > 0.0) {
        return Err(Error::invalid("fiber length must be positive"));
    }
    let h = opts.internal_step_km;
    let steps = (length_km / h).round() as usize;
    if steps == 0 || (steps as f64 * h - length_km).abs() > 1e-9 * length_km {
        return Err(Error::invalid(format!(
            "internal step {h} km does not divide the span {length_km} km"
        )));
    }
    let n = fields.len();
    let coupling = Coupling::new(fields, table, opts.signal_signal_coupling);
    let fs = fields.fields();
    let fwd: Vec<usize> = (0..n).filter(|&k| fs[k].direction == Direction::Co).collect();
    let bwd: Vec<usize> = (0..n).filter(|&k| fs[k].direction == Direction::Counter).collect();

    // initial guess: pure attenuation from each field's boundary
    let mut powers = vec![0.0; (steps + 1) * n];
    for node in 0..=steps {
        let z = node as f64 * h;
        for (k, f) in fs.iter().enumerate() {
            let travelled = match f.direction {
                Direction::Co => z,
                Direction::Counter => length_km - z,
            };
            powers[node * n + k] = f.boundary_mw * (-f.alpha_np_km * travelled).exp();
        }
    }
    let mut deriv = vec![0.0; powers.len()];
    for node in 0..=steps {
        coupling.eval_all(&powers[node * n..(node + 1) * n], &mut deriv[node * n..(node + 1) * n]);
    }

    let mut sw = Sweeper {
        coupling: &coupling,
        n,
        h,
        steps,
        powers,
        deriv,
        clamped: false,
        y: vec![0.0; n],
        k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
    };

    if bwd.is_empty() {
        sw.sweep(&fwd, &bwd, true);
        return Ok(FieldSolution {
            step_km: h,
            n_fields: n,
            powers: sw.powers,
            iterations: 1,
            residual: 0.0,
            clamped: sw.clamped,
        });
    }

    let mut previous = sw.powers.clone();
    let mut residual = f64::INFINITY;
    for iter in 1..=opts.bvp_max_iters {
        sw.sweep(&fwd, &bwd, true);
        sw.sweep(&bwd, &fwd, false);
        residual = max_relative_change(&previous, &sw.powers);
        if !residual.is_finite() {
            break;
        }
        if residual < opts.bvp_tol_rel {
            return Ok(FieldSolution {
                step_km: h,
                n_fields: n,
                powers: sw.powers,
                iterations: iter,
                residual,
                clamped: sw.clamped,
            });
        }
        previous.copy_from_slice(&sw.powers);
    }
    Err(Error::SolverDiverged {
        iterations: opts.bvp_max_iters,
        residual,
    })
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub signal_profile: PowerProfile,
    /// Pump powers in mW, one row per pump, at z = 0 and every grid point.
    pub pump_trajectories: Vec<Vec<f64>>,
    pub pump_freqs_thz: Vec<f64>,
    pub iterations_used: usize,
    pub residual: f64,
    pub converged: bool,
    /// Set when an intermediate power went negative and was clamped to zero.
    pub clamped: bool,
}

impl SolveResult {
    /// Pump trajectories in the profile CSV layout, rows keyed by pump
    /// frequency (z = 0 column included).
    pub fn write_pump_csv<W: Write>(&self, out: W) -> Result<()> {
        let grid = self.signal_profile.grid();
        let mut z = vec![0.0];
        z.extend(grid.z_points());
        let mut order: Vec<usize> = (0..self.pump_freqs_thz.len()).collect();
        order.sort_by(|&a, &b| self.pump_freqs_thz[a].total_cmp(&self.pump_freqs_thz[b]));
        let keys: Vec<f64> = order.iter().map(|&k| self.pump_freqs_thz[k]).collect();
        let values: Vec<f64> = order
            .iter()
            .flat_map(|&k| self.pump_trajectories[k].iter().copied())
            .collect();
        crate::domain::write_matrix_csv(out, &z, &keys, &values)
    }
}

/// Forward mapping from a pump configuration to the signal power profile.
pub fn solve(
    pumps: &PumpConfig,
    grid: &WdmGrid,
    fiber: &FiberParams,
    table: &RamanGainTable,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    if (fiber.length_km - grid.span_km()).abs() > 1e-9 * grid.span_km() {
        return Err(Error::invalid(format!(
            "fiber length {} km differs from grid span {} km",
            fiber.length_km,
            grid.span_km()
        )));
    }
    let stride = (grid.dz_km() / opts.internal_step_km).round() as usize;
    if stride == 0 || (stride as f64 * opts.internal_step_km - grid.dz_km()).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "internal step {} km does not divide the distance step {} km",
            opts.internal_step_km,
            grid.dz_km()
        )));
    }
    let fields = FieldSet::build(pumps, grid, fiber)?;
    let sol = solve_fields(&fields, grid.span_km(), table, opts)?;

    let n_ch = grid.n_ch();
    let n_z = grid.n_z();
    let mut values = Vec::with_capacity(n_ch * n_z);
    for ch in 0..n_ch {
        for j in 0..n_z {
            let p = sol.power((j + 1) * stride, ch);
            values.push(mw_to_dbm(p).map_err(|_| Error::SolverDiverged {
                iterations: sol.iterations,
                residual: sol.residual,
            })?);
        }
    }
    let pump_trajectories = (0..pumps.pumps.len())
        .map(|p| (0..=n_z).map(|j| sol.power(j * stride, n_ch + p)).collect())
        .collect();
    let pump_freqs_thz = fields.fields()[n_ch..].iter().map(|f| f.freq_thz).collect();
    Ok(SolveResult {
        signal_profile: PowerProfile::new(*grid, values)?,
        pump_trajectories,
        pump_freqs_thz,
        iterations_used: sol.iterations,
        residual: sol.residual,
        converged: true,
        clamped: sol.clamped,
    })
}

/// Undepleted single-pump on-off gain in dB: `exp(g·P·L_eff)` with the
/// effective length taken from the pump attenuation.
pub fn on_off_gain_analytic(
    pump_power_mw: f64,
    shift_thz: f64,
    fiber: &FiberParams,
    table: &RamanGainTable,
) -> Result<f64> {
    let g = table.gain_efficiency(shift_thz)?;
    let alpha = fiber.alpha_pump_np_km();
    let l_eff = (1.0 - (-alpha * fiber.length_km).exp()) / alpha;
    Ok(DB_PER_NEPER * g * pump_power_mw * 1e-3 * l_eff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Pump;

    fn signal(freq: f64, p: f64, alpha_db: f64) -> Field {
        Field {
            freq_thz: freq,
            direction: Direction::Co,
            alpha_np_km: alpha_db / DB_PER_NEPER,
            boundary_mw: p,
            kind: FieldKind::Signal,
        }
    }

    fn pump(freq: f64, p: f64, direction: Direction, alpha_db: f64) -> Field {
        Field {
            freq_thz: freq,
            direction,
            alpha_np_km: alpha_db / DB_PER_NEPER,
            boundary_mw: p,
            kind: FieldKind::Pump,
        }
    }

    #[test]
    fn derivative_single_field_attenuation() {
        let fs = FieldSet::new(vec![signal(193.0, 1.0, 0.2)]).unwrap();
        let d = derivative(&[1.0], &fs, &RamanGainTable::default());
        assert!((d[0] + 0.04605).abs() < 1e-5);
    }

    #[test]
    fn derivative_equal_frequencies_do_not_couple() {
        let fs = FieldSet::new(vec![signal(193.0, 1.0, 0.0), signal(193.0, 5.0, 0.0)]).unwrap();
        let d = derivative(&[1.0, 5.0], &fs, &RamanGainTable::default());
        assert_eq!(d, vec![0.0, 0.0]);
    }

    #[test]
    fn derivative_pump_gain_term() {
        let nu_p = wavelength_to_freq(1450.0).unwrap();
        let nu_s = nu_p - 13.2;
        let fs = FieldSet::new(vec![
            signal(nu_s, 1.0, 0.2),
            pump(nu_p, 300.0, Direction::Counter, 0.25),
        ])
        .unwrap();
        let d = derivative(&[1.0, 300.0], &fs, &RamanGainTable::default());
        let expected = -0.2 / DB_PER_NEPER + 0.39 * 0.3 * 1.0;
        assert!((d[0] - expected).abs() < 1e-9, "{} vs {expected}", d[0]);
        // depletion side carries the photon-number factor; counter sign flips
        let dp = 0.25 / DB_PER_NEPER * 300.0 + (nu_p / nu_s) * 0.39 * 1e-3 * 1.0 * 300.0;
        assert!((d[1] - dp).abs() < 1e-9);
    }

    #[test]
    fn zero_pumps_decay_exactly() {
        let grid = WdmGrid::c_band(2.0).unwrap();
        let pumps = PumpConfig::new(vec![
            Pump { power_mw: 0.0, wavelength_nm: 1430.0, direction: Direction::Counter },
            Pump { power_mw: 0.0, wavelength_nm: 1460.0, direction: Direction::Counter },
        ]);
        let r = solve(
            &pumps,
            &grid,
            &FiberParams::default(),
            &RamanGainTable::default(),
            &SolverOptions::default(),
        )
        .unwrap();
        for ch in 0..grid.n_ch() {
            let row = r.signal_profile.channel(ch);
            for (j, &v) in row.iter().enumerate() {
                assert!((v + 0.2 * grid.z_km(j)).abs() < 1e-9, "ch {ch} z {j}: {v}");
            }
            assert!(row.windows(2).all(|w| w[1] < w[0]));
        }
        assert!(r.converged);
        assert!(!r.clamped);
    }

    #[test]
    fn counter_pump_vanishing_power_direction_irrelevant() {
        let grid = WdmGrid::c_band(2.0).unwrap();
        let run = |dir| {
            let cfg = PumpConfig::new(vec![Pump {
                power_mw: 1e-12,
                wavelength_nm: 1450.0,
                direction: dir,
            }]);
            solve(
                &cfg,
                &grid,
                &FiberParams::default(),
                &RamanGainTable::default(),
                &SolverOptions::default(),
            )
            .unwrap()
            .signal_profile
        };
        let a = run(Direction::Co);
        let b = run(Direction::Counter);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn analytic_gain() {
        let fiber = FiberParams::default();
        let t = RamanGainTable::default();
        let g = on_off_gain_analytic(300.0, 13.2, &fiber, &t).unwrap();
        assert!((g - 8.80).abs() < 0.01, "{g}");
        assert_eq!(on_off_gain_analytic(0.0, 13.2, &fiber, &t).unwrap(), 0.0);
        let g2 = on_off_gain_analytic(600.0, 13.2, &fiber, &t).unwrap();
        assert!((g2 - 2.0 * g).abs() < 1e-12);
    }

    #[test]
    fn photon_flux_is_conserved_without_loss() {
        let nu_p = 206.0;
        let nu_s = 193.0;
        let fs = FieldSet::new(vec![
            signal(nu_s, 1.0, 0.0),
            pump(nu_p, 500.0, Direction::Co, 0.0),
        ])
        .unwrap();
        let sol = solve_fields(&fs, 100.0, &RamanGainTable::default(), &SolverOptions::default())
            .unwrap();
        let flux0 = 1.0 / nu_s + 500.0 / nu_p;
        let mut grew = false;
        for n in 0..sol.n_nodes() {
            let p = sol.node_powers(n);
            let flux = p[0] / nu_s + p[1] / nu_p;
            assert!(((flux - flux0) / flux0).abs() < 1e-8);
            grew |= p[0] > 10.0;
        }
        assert!(grew, "signal should be amplified");
    }

    #[test]
    fn mirrored_pump_only_trajectories() {
        let t = RamanGainTable::default();
        let opts = SolverOptions::default();
        let co = FieldSet::new(vec![
            pump(208.0, 300.0, Direction::Co, 0.25),
            pump(201.0, 200.0, Direction::Co, 0.25),
        ])
        .unwrap();
        let counter = FieldSet::new(vec![
            pump(208.0, 300.0, Direction::Counter, 0.25),
            pump(201.0, 200.0, Direction::Counter, 0.25),
        ])
        .unwrap();
        let a = solve_fields(&co, 100.0, &t, &opts).unwrap();
        let b = solve_fields(&counter, 100.0, &t, &opts).unwrap();
        let last = a.n_nodes() - 1;
        for n in 0..=last {
            for k in 0..2 {
                let da = mw_to_dbm(a.power(n, k)).unwrap();
                let db = mw_to_dbm(b.power(last - n, k)).unwrap();
                assert!((da - db).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn relaxation_fixed_point() {
        let grid = WdmGrid::c_band(1.0).unwrap();
        let fiber = FiberParams::default();
        let t = RamanGainTable::default();
        let cfg = PumpConfig::from_vector(
            crate::domain::Scheme::Bidir4,
            &[300.0, 250.0, 300.0, 200.0, 1420.0, 1470.0, 1430.0, 1480.0],
        )
        .unwrap();
        let fs = FieldSet::build(&cfg, &grid, &fiber).unwrap();
        let opts = SolverOptions::default();
        let sol = solve_fields(&fs, 100.0, &t, &opts).unwrap();
        assert!(sol.residual < opts.bvp_tol_rel);
        let tight = SolverOptions { bvp_tol_rel: 1e-12, ..opts };
        let tighter = solve_fields(&fs, 100.0, &t, &tight).unwrap();
        let change = max_relative_change(&sol.powers, &tighter.powers);
        assert!(change < opts.bvp_tol_rel, "{change}");
    }

    #[test]
    fn grid_refinement_converges() {
        let grid = WdmGrid::c_band(2.0).unwrap();
        let fiber = FiberParams::default();
        let t = RamanGainTable::default();
        let cfg = PumpConfig::from_vector(
            crate::domain::Scheme::Counter2,
            &[400.0, 400.0, 1430.0, 1460.0],
        )
        .unwrap();
        let coarse = SolverOptions { bvp_tol_rel: 1e-10, ..SolverOptions::default() };
        let fine = SolverOptions { internal_step_km: 0.05, ..coarse };
        let a = solve(&cfg, &grid, &fiber, &t, &coarse).unwrap();
        let b = solve(&cfg, &grid, &fiber, &t, &fine).unwrap();
        let worst = a
            .signal_profile
            .values()
            .iter()
            .zip(b.signal_profile.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn rejects_bad_steps_and_lengths() {
        let grid = WdmGrid::c_band(2.0).unwrap();
        let t = RamanGainTable::default();
        let cfg = PumpConfig::new(vec![]);
        let opts = SolverOptions { internal_step_km: 0.3, ..SolverOptions::default() };
        assert!(solve(&cfg, &grid, &FiberParams::default(), &t, &opts).is_err());
        let fiber = FiberParams { length_km: 80.0, ..FiberParams::default() };
        assert!(solve(&cfg, &grid, &fiber, &t, &SolverOptions::default()).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let grid = WdmGrid::c_band(2.0).unwrap();
        let cfg = PumpConfig::from_vector(
            crate::domain::Scheme::Counter2,
            &[400.0, 400.0, 1430.0, 1460.0],
        )
        .unwrap();
        let opts = SolverOptions { bvp_max_iters: 1, ..SolverOptions::default() };
        let err = solve(&cfg, &grid, &FiberParams::default(), &RamanGainTable::default(), &opts)
            .unwrap_err();
        assert!(matches!(err, Error::SolverDiverged { iterations: 1, .. }));
    }

    #[test]
    fn pump_trajectory_layout() {
        let grid = WdmGrid::c_band(2.0).unwrap();
        let cfg = PumpConfig::from_vector(
            crate::domain::Scheme::Counter2,
            &[300.0, 100.0, 1430.0, 1460.0],
        )
        .unwrap();
        let r = solve(
            &cfg,
            &grid,
            &FiberParams::default(),
            &RamanGainTable::default(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.pump_trajectories.len(), 2);
        assert_eq!(r.pump_trajectories[0].len(), grid.n_z() + 1);
        assert!((r.pump_trajectories[0][grid.n_z()] - 300.0).abs() < 1e-12);
        assert!((r.pump_trajectories[1][grid.n_z()] - 100.0).abs() < 1e-12);
        let mut buf = Vec::new();
        r.write_pump_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("z_km,0,2,"));
    }
}
