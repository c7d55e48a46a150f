//! Physical and data-model vocabulary: channel grid, fiber, Raman gain
//! spectrum, pump configurations and signal power profiles.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light expressed in nm·THz.
pub const SPEED_OF_LIGHT_NM_THZ: f64 = 299_792.458;

/// dB per neper for power quantities (10 / ln 10).
pub const DB_PER_NEPER: f64 = 4.342944819;

pub fn wavelength_to_freq(wavelength_nm: f64) -> Result<f64> {
    if !(wavelength_nm > 0.0) {
        return Err(Error::invalid(format!(
            "wavelength must be positive, got {wavelength_nm} nm"
        )));
    }
    Ok(SPEED_OF_LIGHT_NM_THZ / wavelength_nm)
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> Result<f64> {
    if !(mw > 0.0) {
        return Err(Error::invalid(format!(
            "power must be positive to take a logarithm, got {mw} mW"
        )));
    }
    Ok(10.0 * mw.log10())
}

/// WDM channel grid plus the distance sampling of a power profile.
///
/// Distance sample `j` sits at `(j + 1) * dz_km`; the launch point is not
/// part of the profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WdmGrid {
    n_ch: usize,
    f_start_thz: f64,
    spacing_thz: f64,
    span_km: f64,
    dz_km: f64,
    n_z: usize,
}

impl WdmGrid {
    pub fn new(
        n_ch: usize,
        f_start_thz: f64,
        spacing_thz: f64,
        span_km: f64,
        dz_km: f64,
    ) -> Result<Self> {
        if n_ch == 0 {
            return Err(Error::invalid("grid needs at least one channel"));
        }
        if !(spacing_thz > 0.0) || !(f_start_thz > 0.0) {
            return Err(Error::invalid("channel frequencies must be positive and increasing"));
        }
        if !(span_km > 0.0) || !(dz_km > 0.0) {
            return Err(Error::invalid("span and distance step must be positive"));
        }
        let n_z = (span_km / dz_km).round() as usize;
        if n_z == 0 || (n_z as f64 * dz_km - span_km).abs() > 1e-9 * span_km {
            return Err(Error::invalid(format!(
                "distance step {dz_km} km does not divide span {span_km} km"
            )));
        }
        Ok(Self {
            n_ch,
            f_start_thz,
            spacing_thz,
            span_km,
            dz_km,
            n_z,
        })
    }

    /// 40 channels at 192.0, 192.1, ... 195.9 THz over a 100 km span.
    pub fn c_band(dz_km: f64) -> Result<Self> {
        Self::new(40, 192.0, 0.1, 100.0, dz_km)
    }

    pub fn n_ch(&self) -> usize {
        self.n_ch
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn f_start_thz(&self) -> f64 {
        self.f_start_thz
    }

    pub fn spacing_thz(&self) -> f64 {
        self.spacing_thz
    }

    pub fn span_km(&self) -> f64 {
        self.span_km
    }

    pub fn dz_km(&self) -> f64 {
        self.dz_km
    }

    pub fn channel_freq(&self, i: usize) -> f64 {
        self.f_start_thz + i as f64 * self.spacing_thz
    }

    pub fn channel_freqs(&self) -> Vec<f64> {
        (0..self.n_ch).map(|i| self.channel_freq(i)).collect()
    }

    pub fn z_km(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.dz_km
    }

    pub fn z_points(&self) -> Vec<f64> {
        (0..self.n_z).map(|j| self.z_km(j)).collect()
    }

    pub fn pixels(&self) -> usize {
        self.n_ch * self.n_z
    }
}

/// Single-mode fiber parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberParams {
    pub length_km: f64,
    pub alpha_signal_db_km: f64,
    pub alpha_pump_db_km: f64,
    pub a_eff_um2: f64,
    /// Nonlinear coefficient. Carried for completeness, the power equations
    /// have no Kerr term.
    pub gamma_w_km: f64,
    pub launch_power_dbm_per_ch: f64,
}

impl Default for FiberParams {
    fn default() -> Self {
        Self {
            length_km: 100.0,
            alpha_signal_db_km: 0.2,
            alpha_pump_db_km: 0.25,
            a_eff_um2: 80.0,
            gamma_w_km: 1.26,
            launch_power_dbm_per_ch: 0.0,
        }
    }
}

impl FiberParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_km > 0.0) {
            return Err(Error::invalid("fiber length must be positive"));
        }
        if !(self.alpha_signal_db_km > 0.0) || !(self.alpha_pump_db_km > 0.0) {
            return Err(Error::invalid("fiber attenuations must be positive"));
        }
        if !self.launch_power_dbm_per_ch.is_finite() {
            return Err(Error::invalid("launch power must be finite"));
        }
        Ok(())
    }

    pub fn alpha_signal_np_km(&self) -> f64 {
        self.alpha_signal_db_km / DB_PER_NEPER
    }

    pub fn alpha_pump_np_km(&self) -> f64 {
        self.alpha_pump_db_km / DB_PER_NEPER
    }
}

/// Raman gain efficiency versus frequency shift, piecewise linear between
/// nodes and zero past the last node. Values are in 1/(W·km) for the
/// fiber's effective area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamanGainTable {
    nodes: Vec<(f64, f64)>,
}

impl Default for RamanGainTable {
    /// Triangular silica approximation peaking at 13.2 THz, normalized to an
    /// 80 μm² effective area.
    fn default() -> Self {
        Self {
            nodes: vec![(0.0, 0.0), (13.2, 0.39), (15.0, 0.0)],
        }
    }
}

impl RamanGainTable {
    pub fn new(nodes: Vec<(f64, f64)>) -> Result<Self> {
        match nodes.first() {
            Some(&(s, g)) if s == 0.0 && g == 0.0 => {}
            _ => return Err(Error::invalid("gain table must start at (0, 0)")),
        }
        for w in nodes.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("gain table shifts must be strictly increasing"));
            }
        }
        if nodes.iter().any(|&(s, g)| !s.is_finite() || !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::invalid("gain table efficiencies must be finite and non-negative"));
        }
        if nodes.len() < 2 || nodes[nodes.len() - 1].1 != 0.0 {
            return Err(Error::invalid("gain table must end with a zero-efficiency node"));
        }
        Ok(Self { nodes })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            nodes: Vec<(f64, f64)>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::format(e.to_string()))?;
        Self::new(raw.nodes)
    }

    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    pub fn gain_efficiency(&self, shift_thz: f64) -> Result<f64> {
        if !(shift_thz >= 0.0) {
            return Err(Error::invalid(format!("negative frequency shift {shift_thz} THz")));
        }
        Ok(self.eval(shift_thz))
    }

    /// Unchecked lookup for shifts already known to be non-negative.
    pub(crate) fn eval(&self, shift_thz: f64) -> f64 {
        if shift_thz >= self.nodes[self.nodes.len() - 1].0 {
            return 0.0;
        }
        let k = self.nodes.partition_point(|&(s, _)| s <= shift_thz);
        let (s0, g0) = self.nodes[k - 1];
        let (s1, g1) = self.nodes[k];
        g0 + (g1 - g0) * (shift_thz - s0) / (s1 - s0)
    }

    /// Largest absolute slope over all segments.
    pub fn max_slope(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Co,
    Counter,
}

impl Direction {
    /// +1 for propagation along the signal, -1 against it.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Co => 1.0,
            Direction::Counter => -1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Co => "co",
            Direction::Counter => "counter",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "co" | "+" => Ok(Direction::Co),
            "counter" | "-" => Ok(Direction::Counter),
            other => Err(Error::invalid(format!("unknown pump direction '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pump {
    pub power_mw: f64,
    pub wavelength_nm: f64,
    pub direction: Direction,
}

/// Allowed range for one pump of a scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpRange {
    pub power_mw: (f64, f64),
    pub wavelength_nm: (f64, f64),
    pub direction: Direction,
}

const COUNTER2: [PumpRange; 2] = [
    PumpRange {
        power_mw: (40.0, 400.0),
        wavelength_nm: (1414.0, 1449.0),
        direction: Direction::Counter,
    },
    PumpRange {
        power_mw: (40.0, 400.0),
        wavelength_nm: (1449.0, 1484.0),
        direction: Direction::Counter,
    },
];

const COUNTER3: [PumpRange; 3] = [
    PumpRange {
        power_mw: (30.0, 300.0),
        wavelength_nm: (1414.0, 1437.3),
        direction: Direction::Counter,
    },
    PumpRange {
        power_mw: (30.0, 300.0),
        wavelength_nm: (1437.3, 1460.3),
        direction: Direction::Counter,
    },
    PumpRange {
        power_mw: (30.0, 300.0),
        wavelength_nm: (1460.3, 1484.0),
        direction: Direction::Counter,
    },
];

const BIDIR4: [PumpRange; 4] = [
    PumpRange {
        power_mw: (30.0, 300.0),
        wavelength_nm: (1414.0, 1449.0),
        direction: Direction::Counter,
    },
    PumpRange {
        power_mw: (30.0, 300.0),
        wavelength_nm: (1449.0, 1484.0),
        direction: Direction::Counter,
    },
    PumpRange {
        power_mw: (30.0, 300.0),
        wavelength_nm: (1414.0, 1449.0),
        direction: Direction::Co,
    },
    PumpRange {
        power_mw: (30.0, 300.0),
        wavelength_nm: (1449.0, 1484.0),
        direction: Direction::Co,
    },
];

/// Pumping scheme: number of pumps, their directions and allowed ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Counter2,
    Counter3,
    Bidir4,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Counter2, Scheme::Counter3, Scheme::Bidir4];

    pub fn ranges(self) -> &'static [PumpRange] {
        match self {
            Scheme::Counter2 => &COUNTER2,
            Scheme::Counter3 => &COUNTER3,
            Scheme::Bidir4 => &BIDIR4,
        }
    }

    pub fn n_pumps(self) -> usize {
        self.ranges().len()
    }

    pub fn id(self) -> u32 {
        match self {
            Scheme::Counter2 => 0,
            Scheme::Counter3 => 1,
            Scheme::Bidir4 => 2,
        }
    }

    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            0 => Ok(Scheme::Counter2),
            1 => Ok(Scheme::Counter3),
            2 => Ok(Scheme::Bidir4),
            _ => Err(Error::format(format!("unknown scheme id {id}"))),
        }
    }

    /// Distance resolution used for this scheme's profiles.
    pub fn default_dz_km(self) -> f64 {
        match self {
            Scheme::Counter2 | Scheme::Counter3 => 2.0,
            Scheme::Bidir4 => 1.0,
        }
    }

    pub fn default_grid(self) -> WdmGrid {
        WdmGrid::c_band(self.default_dz_km()).expect("built-in grid is valid")
    }

    /// Lower bounds of the flat `[P.., λ..]` vector.
    pub fn y_min(self) -> Vec<f64> {
        let r = self.ranges();
        r.iter()
            .map(|p| p.power_mw.0)
            .chain(r.iter().map(|p| p.wavelength_nm.0))
            .collect()
    }

    /// Upper bounds of the flat `[P.., λ..]` vector.
    pub fn y_max(self) -> Vec<f64> {
        let r = self.ranges();
        r.iter()
            .map(|p| p.power_mw.1)
            .chain(r.iter().map(|p| p.wavelength_nm.1))
            .collect()
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Counter2 => "counter2",
            Scheme::Counter3 => "counter3",
            Scheme::Bidir4 => "bidir4",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "counter2" => Ok(Scheme::Counter2),
            "counter3" => Ok(Scheme::Counter3),
            "bidir4" => Ok(Scheme::Bidir4),
            other => Err(Error::invalid(format!(
                "unknown scheme '{other}' (expected counter2, counter3 or bidir4)"
            ))),
        }
    }
}

/// Pump powers, wavelengths and directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpConfig {
    pub pumps: Vec<Pump>,
}

impl PumpConfig {
    pub fn new(pumps: Vec<Pump>) -> Self {
        Self { pumps }
    }

    /// Builds a configuration from the flat `[P_1..P_Np, λ_1..λ_Np]` vector,
    /// taking directions from the scheme.
    pub fn from_vector(scheme: Scheme, y: &[f64]) -> Result<Self> {
        let n = scheme.n_pumps();
        if y.len() != 2 * n {
            return Err(Error::invalid(format!(
                "{scheme} needs a vector of length {}, got {}",
                2 * n,
                y.len()
            )));
        }
        let pumps = scheme
            .ranges()
            .iter()
            .enumerate()
            .map(|(k, r)| Pump {
                power_mw: y[k],
                wavelength_nm: y[n + k],
                direction: r.direction,
            })
            .collect();
        Ok(Self { pumps })
    }

    pub fn to_vector(&self) -> Vec<f64> {
        self.pumps
            .iter()
            .map(|p| p.power_mw)
            .chain(self.pumps.iter().map(|p| p.wavelength_nm))
            .collect()
    }

    /// Checks arity, directions and Table ranges against a scheme.
    pub fn validate(&self, scheme: Scheme) -> Result<()> {
        let ranges = scheme.ranges();
        if self.pumps.len() != ranges.len() {
            return Err(Error::invalid(format!(
                "{scheme} needs exactly {} pumps, got {}",
                ranges.len(),
                self.pumps.len()
            )));
        }
        for (k, (p, r)) in self.pumps.iter().zip(ranges).enumerate() {
            if p.direction != r.direction {
                return Err(Error::invalid(format!(
                    "pump {} must be {} for {scheme}, got {}",
                    k + 1,
                    r.direction,
                    p.direction
                )));
            }
            check_range(k + 1, "power_mw", p.power_mw, r.power_mw)?;
            check_range(k + 1, "wavelength_nm", p.wavelength_nm, r.wavelength_nm)?;
        }
        Ok(())
    }

    /// Parses `P_mW:λ_nm:dir` entries separated by commas.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pumps = Vec::new();
        for item in text.split(',').filter(|s| !s.trim().is_empty()) {
            let parts: Vec<&str> = item.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::invalid(format!(
                    "pump '{item}' is not of the form P_mW:lambda_nm:dir"
                )));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad number '{s}' in pump '{item}'")))
            };
            pumps.push(Pump {
                power_mw: num(parts[0])?,
                wavelength_nm: num(parts[1])?,
                direction: parts[2].parse()?,
            });
        }
        Ok(Self { pumps })
    }
}

fn check_range(pump: usize, quantity: &'static str, value: f64, (min, max): (f64, f64)) -> Result<()> {
    if value >= min && value <= max {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            pump,
            quantity,
            value,
            min,
            max,
        })
    }
}

/// Per-channel signal power in dBm over the grid's distance points,
/// stored channel-major (`i * n_z + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    grid: WdmGrid,
    values_dbm: Vec<f64>,
}

impl PowerProfile {
    pub fn new(grid: WdmGrid, values_dbm: Vec<f64>) -> Result<Self> {
        if values_dbm.len() != grid.pixels() {
            return Err(Error::invalid(format!(
                "profile has {} values, grid needs {}",
                values_dbm.len(),
                grid.pixels()
            )));
        }
        if let Some(k) = values_dbm.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite profile value at channel {}, distance index {}",
                k / grid.n_z(),
                k % grid.n_z()
            )));
        }
        Ok(Self { grid, values_dbm })
    }

    pub fn grid(&self) -> &WdmGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values_dbm
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values_dbm
    }

    pub fn get(&self, ch: usize, zi: usize) -> f64 {
        self.values_dbm[ch * self.grid.n_z() + zi]
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        let n_z = self.grid.n_z();
        &self.values_dbm[ch * n_z..(ch + 1) * n_z]
    }

    /// Writes the profile CSV: a `z_km` header row followed by one row per
    /// channel keyed by its frequency.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_csv(
            out,
            &self.grid.z_points(),
            &self.grid.channel_freqs(),
            &self.values_dbm,
        )
    }

    /// Reads a profile CSV and checks it against `grid` (frequencies and
    /// distances within 1e-6).
    pub fn read_csv<R: Read>(input: R, grid: &WdmGrid) -> Result<Self> {
        let (z, freqs, values) = read_matrix_csv(input)?;
        if z.len() != grid.n_z() || freqs.len() != grid.n_ch() {
            return Err(Error::invalid(format!(
                "profile is {}x{}, expected {}x{}",
                freqs.len(),
                z.len(),
                grid.n_ch(),
                grid.n_z()
            )));
        }
        for (j, (&a, b)) in z.iter().zip(grid.z_points()).enumerate() {
            if (a - b).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "distance column {} is {a} km, grid expects {b} km",
                    j + 1
                )));
            }
        }
        for (i, (&a, b)) in freqs.iter().zip(grid.channel_freqs()).enumerate() {
            if (a - b).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "channel row {} is {a} THz, grid expects {b} THz",
                    i + 2
                )));
            }
        }
        Self::new(*grid, values)
    }
}

pub(crate) fn write_matrix_csv<W: Write>(
    out: W,
    z: &[f64],
    row_keys: &[f64],
    values: &[f64],
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut header = vec!["z_km".to_string()];
    header.extend(z.iter().map(|v| v.to_string()));
    w.write_record(&header).map_err(to_io)?;
    for (i, key) in row_keys.iter().enumerate() {
        let mut row = vec![key.to_string()];
        row.extend(values[i * z.len()..(i + 1) * z.len()].iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

type Matrix = (Vec<f64>, Vec<f64>, Vec<f64>);

pub(crate) fn read_matrix_csv<R: Read>(input: R) -> Result<Matrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut z = Vec::new();
    let mut keys = Vec::new();
    let mut values = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let line = n + 1;
        let rec = rec.map_err(|e| Error::format(format!("line {line}: {e}")))?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::format(format!("line {line}: cannot parse '{s}' as a number")))
        };
        if line == 1 {
            if rec.get(0) != Some("z_km") {
                return Err(Error::format("line 1: header must start with 'z_km'"));
            }
            z = rec.iter().skip(1).map(parse).collect::<Result<_>>()?;
            if z.is_empty() {
                return Err(Error::format("line 1: no distance columns"));
            }
            continue;
        }
        if rec.len() != z.len() + 1 {
            return Err(Error::format(format!(
                "line {line}: expected {} fields, found {}",
                z.len() + 1,
                rec.len()
            )));
        }
        keys.push(parse(&rec[0])?);
        for s in rec.iter().skip(1) {
            let v = parse(s)?;
            if !v.is_finite() {
                return Err(Error::format(format!("line {line}: non-finite value '{s}'")));
            }
            values.push(v);
        }
    }
    if z.is_empty() {
        return Err(Error::format("empty profile file"));
    }
    if keys.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::format("rows must be in ascending frequency order"));
    }
    Ok((z, keys, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavelength_conversion() {
        assert!((wavelength_to_freq(1450.0).unwrap() - 206.75).abs() < 0.01);
        assert!((wavelength_to_freq(1550.0).unwrap() - 193.414).abs() < 0.01);
        assert_eq!(wavelength_to_freq(299_792.458).unwrap(), 1.0);
        assert!(matches!(wavelength_to_freq(0.0), Err(Error::InvalidArgument(_))));
        assert!(wavelength_to_freq(-3.0).is_err());
    }

    #[test]
    fn gain_table_lookup() {
        let t = RamanGainTable::default();
        assert_eq!(t.gain_efficiency(0.0).unwrap(), 0.0);
        assert!((t.gain_efficiency(13.2).unwrap() - 0.39).abs() < 1e-15);
        assert!((t.gain_efficiency(6.6).unwrap() - 0.195).abs() < 1e-15);
        assert_eq!(t.gain_efficiency(15.0).unwrap(), 0.0);
        assert_eq!(t.gain_efficiency(40.0).unwrap(), 0.0);
        assert!(t.gain_efficiency(-0.1).is_err());
    }

    #[test]
    fn gain_table_rejects_bad_nodes() {
        assert!(RamanGainTable::new(vec![(1.0, 0.0)]).is_err());
        assert!(RamanGainTable::new(vec![(0.0, 0.0), (5.0, 0.1), (5.0, 0.2)]).is_err());
        assert!(RamanGainTable::new(vec![(0.0, 0.0), (5.0, -0.1)]).is_err());
        let t = RamanGainTable::from_json(r#"{"nodes": [[0,0],[10,0.5],[12,0]]}"#).unwrap();
        assert!((t.gain_efficiency(5.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn power_units() {
        assert_eq!(dbm_to_mw(0.0), 1.0);
        assert!((dbm_to_mw(16.0) - 39.81).abs() < 0.01);
        assert!((mw_to_dbm(dbm_to_mw(-12.3)).unwrap() + 12.3).abs() < 1e-12);
        assert!(mw_to_dbm(0.0).is_err());
        assert!(mw_to_dbm(-1.0).is_err());
    }

    #[test]
    fn c_band_grid() {
        let g = WdmGrid::c_band(2.0).unwrap();
        assert_eq!(g.n_z(), 50);
        assert_eq!(g.n_ch(), 40);
        assert_eq!(g.channel_freq(0), 192.0);
        assert!((g.channel_freq(39) - 195.9).abs() < 1e-12);
        assert_eq!(g.z_km(0), 2.0);
        assert_eq!(g.z_km(49), 100.0);
        let freqs = g.channel_freqs();
        assert!(freqs.windows(2).all(|w| w[1] > w[0]));
        assert!(freqs.iter().all(|&f| (192.0..196.0).contains(&f)));
        assert_eq!(WdmGrid::c_band(1.0).unwrap().n_z(), 100);
        assert!(WdmGrid::c_band(3.0).is_err());
    }

    #[test]
    fn scheme_tables() {
        assert_eq!(Scheme::Counter2.y_min(), vec![40.0, 40.0, 1414.0, 1449.0]);
        assert_eq!(Scheme::Counter2.y_max(), vec![400.0, 400.0, 1449.0, 1484.0]);
        assert_eq!(
            Scheme::Counter3.y_min(),
            vec![30.0, 30.0, 30.0, 1414.0, 1437.3, 1460.3]
        );
        assert_eq!(
            Scheme::Counter3.y_max(),
            vec![300.0, 300.0, 300.0, 1437.3, 1460.3, 1484.0]
        );
        assert_eq!(
            Scheme::Bidir4.y_min(),
            vec![30.0, 30.0, 30.0, 30.0, 1414.0, 1449.0, 1414.0, 1449.0]
        );
        assert_eq!(
            Scheme::Bidir4.y_max(),
            vec![300.0, 300.0, 300.0, 300.0, 1449.0, 1484.0, 1449.0, 1484.0]
        );
        let dirs: Vec<_> = Scheme::Bidir4.ranges().iter().map(|r| r.direction).collect();
        assert_eq!(
            dirs,
            vec![Direction::Counter, Direction::Counter, Direction::Co, Direction::Co]
        );
        for s in [Scheme::Counter2, Scheme::Counter3] {
            assert!(s.ranges().iter().all(|r| r.direction == Direction::Counter));
        }
    }

    #[test]
    fn wavelength_bands_are_contiguous_per_direction() {
        for s in Scheme::ALL {
            for dir in [Direction::Co, Direction::Counter] {
                let bands: Vec<_> = s
                    .ranges()
                    .iter()
                    .filter(|r| r.direction == dir)
                    .map(|r| r.wavelength_nm)
                    .collect();
                for w in bands.windows(2) {
                    assert_eq!(w[0].1, w[1].0, "{s} {dir}");
                    assert!(w[0].0 < w[0].1);
                }
            }
        }
    }

    #[test]
    fn scheme_ids_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(Scheme::from_id(s.id()).unwrap(), s);
            assert_eq!(s.to_string().parse::<Scheme>().unwrap(), s);
        }
        assert!(Scheme::from_id(7).is_err());
    }

    #[test]
    fn pump_config_vector_order_and_validation() {
        let y = [100.0, 200.0, 1420.0, 1460.0];
        let cfg = PumpConfig::from_vector(Scheme::Counter2, &y).unwrap();
        assert_eq!(cfg.to_vector(), y);
        cfg.validate(Scheme::Counter2).unwrap();
        assert!(cfg.validate(Scheme::Counter3).is_err());

        let bad = PumpConfig::from_vector(Scheme::Counter2, &[100.0, 500.0, 1420.0, 1460.0]).unwrap();
        match bad.validate(Scheme::Counter2) {
            Err(Error::OutOfRange { pump: 2, quantity: "power_mw", max, .. }) => assert_eq!(max, 400.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pump_parsing() {
        let cfg = PumpConfig::parse("300:1420:counter,100:1460:counter").unwrap();
        assert_eq!(cfg.pumps.len(), 2);
        assert_eq!(cfg.pumps[0].power_mw, 300.0);
        cfg.validate(Scheme::Counter2).unwrap();
        let single = PumpConfig::parse("300:1450:counter").unwrap();
        assert!(single.validate(Scheme::Counter2).is_err());
        let co = PumpConfig::parse("300:1420:co,100:1460:counter").unwrap();
        assert!(co.validate(Scheme::Counter2).is_err());
        assert!(PumpConfig::parse("300:1420").is_err());
        assert!(PumpConfig::parse("x:1420:co").is_err());
    }

    #[test]
    fn profile_csv_round_trip_and_errors() {
        let g = WdmGrid::new(3, 192.0, 0.1, 10.0, 5.0).unwrap();
        let p = PowerProfile::new(g, vec![0.5, -1.25, 3.0, 4.0, -7.125, 1e-3]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("z_km,5,10\n192,0.5,-1.25\n"));
        assert_eq!(PowerProfile::read_csv(&buf[..], &g).unwrap(), p);

        let bad = "z_km,5,10\n192,0.5,-1.25\n192.1,oops,4\n192.2,1,2\n";
        match PowerProfile::read_csv(bad.as_bytes(), &g) {
            Err(Error::Format(m)) => assert!(m.contains("line 3"), "{m}"),
            other => panic!("unexpected {other:?}"),
        }
        let short = "z_km,5,10\n192,0.5\n";
        assert!(PowerProfile::read_csv(short.as_bytes(), &g).is_err());
        let other_grid = WdmGrid::new(3, 192.0, 0.1, 10.0, 2.0).unwrap();
        assert!(PowerProfile::read_csv(&buf[..], &other_grid).is_err());
    }

    #[test]
    fn profile_rejects_non_finite() {
        let g = WdmGrid::new(1, 192.0, 0.1, 10.0, 5.0).unwrap();
        assert!(PowerProfile::new(g, vec![0.0, f64::NAN]).is_err());
        assert!(PowerProfile::new(g, vec![0.0]).is_err());
    }
}
