//! Binary checkpoint: scheme, grid, architecture, normalization statistics
//! and f32 parameters, little-endian.

use std::path::Path;

use super::network::{ArchitectureSpec, ConvSpec, Network};
use crate::dataset::NormStats;
use crate::domain::{Scheme, WdmGrid};
use crate::error::{Error, Result};
use crate::io::{self, Decoder, Encoder};

const MAGIC: &[u8; 7] = b"RAMNN1\0";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub scheme: Scheme,
    pub grid: WdmGrid,
    pub norm: NormStats,
    pub network: Network<f32>,
}

impl Checkpoint {
    pub fn new(scheme: Scheme, grid: WdmGrid, norm: NormStats, network: Network<f32>) -> Result<Self> {
        let cp = Self { scheme, grid, norm, network };
        cp.check()?;
        Ok(cp)
    }

    fn check(&self) -> Result<()> {
        let arch = self.network.arch();
        if arch.convs.len() != 3 || arch.hidden.len() != 2 {
            return Err(Error::invalid(
                "checkpoints store exactly three conv blocks and two hidden layers",
            ));
        }
        if arch.in_h != self.grid.n_ch() || arch.in_w != self.grid.n_z() {
            return Err(Error::invalid("network input does not match the grid"));
        }
        let n_p = self.scheme.n_pumps();
        if arch.n_out != 2 * n_p {
            return Err(Error::invalid("network output does not match the scheme"));
        }
        let pixels = self.grid.pixels();
        if self.norm.pixel_min_dbm.len() != pixels
            || self.norm.pixel_max_dbm.len() != pixels
            || self.norm.y_min.len() != 2 * n_p
            || self.norm.y_max.len() != 2 * n_p
        {
            return Err(Error::invalid("normalization statistics do not match grid/scheme"));
        }
        Ok(())
    }

    /// Fails with a scheme mismatch unless the checkpoint was trained for `scheme`.
    pub fn expect_scheme(&self, scheme: Scheme) -> Result<()> {
        if self.scheme != scheme {
            return Err(Error::SchemeMismatch {
                expected: scheme,
                found: self.scheme,
            });
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.check()?;
        let arch = self.network.arch();
        let mut e = Encoder::default();
        e.bytes(MAGIC);
        e.u8(VERSION);
        e.u32(self.scheme.id());
        e.u32(self.grid.n_ch() as u32);
        e.u32(self.grid.n_z() as u32);
        e.f64(self.grid.f_start_thz());
        e.f64(self.grid.spacing_thz());
        e.f64(self.grid.span_km());
        e.f64(self.grid.dz_km());
        for c in &arch.convs {
            e.u32(c.maps as u32);
        }
        for c in &arch.convs {
            e.u32(c.kernel as u32);
        }
        for c in &arch.convs {
            e.u32(c.pool as u32);
        }
        e.u32(arch.hidden[0] as u32);
        e.u32(arch.hidden[1] as u32);
        e.u32(self.scheme.n_pumps() as u32);
        e.f64s(&self.norm.pixel_min_dbm);
        e.f64s(&self.norm.pixel_max_dbm);
        e.f64s(&self.norm.y_min);
        e.f64s(&self.norm.y_max);
        e.f32s(self.network.params());
        Ok(e.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(bytes);
        d.expect_magic(MAGIC, VERSION)?;
        let scheme = Scheme::from_id(d.u32()?)?;
        let n_ch = d.u32()? as usize;
        let n_z = d.u32()? as usize;
        let grid = WdmGrid::new(n_ch, d.f64()?, d.f64()?, d.f64()?, d.f64()?)
            .map_err(|e| Error::format(format!("bad grid header: {e}")))?;
        if grid.n_z() != n_z {
            return Err(Error::format("grid header n_z disagrees with span / dz"));
        }
        let mut desc = [0usize; 12];
        for v in &mut desc {
            *v = d.u32()? as usize;
        }
        let n_p = desc[11];
        if n_p != scheme.n_pumps() {
            return Err(Error::format(format!("{scheme} has {} pumps, header says {n_p}", scheme.n_pumps())));
        }
        let arch = ArchitectureSpec {
            in_h: n_ch,
            in_w: n_z,
            convs: (0..3)
                .map(|l| ConvSpec {
                    maps: desc[l],
                    kernel: desc[3 + l],
                    pool: desc[6 + l],
                })
                .collect(),
            hidden: vec![desc[9], desc[10]],
            n_out: 2 * n_p,
        };
        arch.validate().map_err(|e| Error::format(format!("bad architecture: {e}")))?;
        let pixels = grid.pixels();
        let norm = NormStats {
            pixel_min_dbm: d.f64s(pixels)?,
            pixel_max_dbm: d.f64s(pixels)?,
            y_min: d.f64s(2 * n_p)?,
            y_max: d.f64s(2 * n_p)?,
        };
        let params = d.f32s(arch.param_count())?;
        d.finish()?;
        let network = Network::from_params(arch, params)?;
        Self::new(scheme, grid, norm, network).map_err(|e| Error::format(e.to_string()))
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    io::write_bytes_atomic(path, &checkpoint.encode()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::decode(&io::read_file(path)?)
}
