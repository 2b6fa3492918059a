//! Binary state snapshots: magic `RQBK`, version, statistics, equilibrium
//! parameters, grid shape, time, then the raw field in x-major,
//! p-lexicographic order. Everything little-endian; round trips are
//! byte-exact.

use std::io::{Read, Write};
use std::path::Path;

use crate::equilibrium::StatisticsKind;
use crate::error::SnapshotError;
use crate::solver::State;

pub const MAGIC: &[u8; 4] = b"RQBK";
pub const VERSION: u32 = 1;

/// Header and payload of a snapshot file.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub stats: StatisticsKind,
    pub a: f64,
    pub c: f64,
    pub dims: [u32; 3],
    pub pmax: f64,
    pub nx: u32,
    pub time: f64,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn from_state(state: &State, a: f64, c: f64, n: usize, pmax: f64) -> Self {
        Self {
            stats: state.stats,
            a,
            c,
            dims: [n as u32, n as u32, n as u32],
            pmax,
            nx: state.nx as u32,
            time: state.t,
            values: state.data.clone(),
        }
    }

    pub fn into_state(self) -> State {
        State { data: self.values, nx: self.nx as usize, t: self.time, stats: self.stats }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), SnapshotError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let tau: i8 = match self.stats {
            StatisticsKind::Boson => 1,
            StatisticsKind::Fermion => -1,
        };
        w.write_all(&tau.to_le_bytes())?;
        w.write_all(&self.a.to_le_bytes())?;
        w.write_all(&self.c.to_le_bytes())?;
        for d in self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&self.pmax.to_le_bytes())?;
        w.write_all(&self.nx.to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, SnapshotError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != VERSION {
            return Err(SnapshotError::BadVersion(version));
        }
        let mut i8buf = [0u8; 1];
        r.read_exact(&mut i8buf)?;
        let stats = match i8::from_le_bytes(i8buf) {
            1 => StatisticsKind::Boson,
            -1 => StatisticsKind::Fermion,
            _ => return Err(SnapshotError::Corrupt),
        };
        let mut f64buf = [0u8; 8];
        r.read_exact(&mut f64buf)?;
        let a = f64::from_le_bytes(f64buf);
        r.read_exact(&mut f64buf)?;
        let c = f64::from_le_bytes(f64buf);
        let mut dims = [0u32; 3];
        for d in dims.iter_mut() {
            r.read_exact(&mut u32buf)?;
            *d = u32::from_le_bytes(u32buf);
        }
        r.read_exact(&mut f64buf)?;
        let pmax = f64::from_le_bytes(f64buf);
        r.read_exact(&mut u32buf)?;
        let nx = u32::from_le_bytes(u32buf);
        r.read_exact(&mut f64buf)?;
        let time = f64::from_le_bytes(f64buf);
        let count = dims[0] as usize * dims[1] as usize * dims[2] as usize * nx as usize;
        if count == 0 {
            return Err(SnapshotError::Corrupt);
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut f64buf)?;
            values.push(f64::from_le_bytes(f64buf));
        }
        // Trailing bytes mean the header lied about the shape.
        let mut trailing = [0u8; 1];
        match r.read(&mut trailing)? {
            0 => Ok(Self { stats, a, c, dims, pmax, nx, time, values }),
            _ => Err(SnapshotError::Corrupt),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), SnapshotError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}
