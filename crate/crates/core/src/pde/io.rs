//! Binary array files for fields and coefficients.
//!
//! Layout (little endian):
//!
//! ```text
//! offset  size  content
//! 0       4     magic "HWF1"
//! 4       4     u32 spatial dimension m
//! 8       4     u32 interior nodes per axis N
//! 12      4     u32 flags, bit 0 set for complex data
//! 16      8     u64 scalar count (nodes for fields, edges for coefficients)
//! 24      ...   f64 values; complex values as (re, im) pairs
//! ```

use std::io::{Read, Write};

use num_complex::Complex64;

use super::grid::{Coefficient, ComplexField, DiscreteField, Field, Grid};
use super::PdeError;

pub const MAGIC: &[u8; 4] = b"HWF1";

/// Raw contents of an array file.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayFile {
    pub grid: Grid,
    pub complex: bool,
    /// Interleaved `(re, im)` when `complex`.
    pub data: Vec<f64>,
}

impl ArrayFile {
    pub fn count(&self) -> usize {
        if self.complex {
            self.data.len() / 2
        } else {
            self.data.len()
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), PdeError> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.grid.n() as u32).to_le_bytes())?;
        w.write_all(&(self.complex as u32).to_le_bytes())?;
        w.write_all(&(self.count() as u64).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, PdeError> {
        let mut header = [0u8; 24];
        r.read_exact(&mut header)?;
        if &header[0..4] != MAGIC {
            return Err(PdeError::Format("bad magic".into()));
        }
        let word = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().unwrap());
        let grid = Grid::new(word(4) as usize, word(8) as usize)?;
        let flags = word(12);
        if flags > 1 {
            return Err(PdeError::Format(format!("unknown flags {flags:#x}")));
        }
        let complex = flags == 1;
        let count = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
        if count != grid.num_nodes() && count != grid.num_edges() {
            return Err(PdeError::Format(format!(
                "count {count} matches neither nodes ({}) nor edges ({})",
                grid.num_nodes(),
                grid.num_edges()
            )));
        }
        let scalars = if complex { 2 * count } else { count };
        let mut bytes = vec![0u8; scalars * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { grid, complex, data })
    }

    pub fn from_field(f: &DiscreteField) -> Self {
        Self {
            grid: f.grid(),
            complex: false,
            data: f.values().to_vec(),
        }
    }

    pub fn from_complex_field(f: &ComplexField) -> Self {
        Self {
            grid: f.grid(),
            complex: true,
            data: f.values().iter().flat_map(|c| [c.re, c.im]).collect(),
        }
    }

    pub fn from_coefficient(c: &Coefficient) -> Self {
        Self {
            grid: c.grid(),
            complex: false,
            data: c.values().to_vec(),
        }
    }

    pub fn into_field(self) -> Result<DiscreteField, PdeError> {
        if self.complex {
            return Err(PdeError::Format("expected real data".into()));
        }
        Field::new(self.grid, self.data)
    }

    pub fn into_complex_field(self) -> Result<ComplexField, PdeError> {
        let values = if self.complex {
            self.data.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
        } else {
            self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect()
        };
        Field::new(self.grid, values)
    }

    pub fn into_coefficient(self) -> Result<Coefficient, PdeError> {
        if self.complex {
            return Err(PdeError::Format("expected real coefficient".into()));
        }
        Coefficient::new(self.grid, self.data)
    }
}

pub fn write_array(path: &std::path::Path, file: &ArrayFile) -> Result<(), PdeError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_array(path: &std::path::Path) -> Result<ArrayFile, PdeError> {
    ArrayFile::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
}
