//! Center-corner positional encoding.
//!
//! A cell of a part grid covers an interval of the part's canonical cube. Its
//! center and eight corners are mapped to object space through the part box
//! and quantized on a fine global lattice (2048 per axis by default). Summing
//! the embeddings of those nine lattice points tells every token both where
//! it is and how large it is, even though each part is voxelized in its own
//! normalized frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{to_global, Aabb, Vec3};
use crate::tensor::{Mat, Scalar};

/// Default global lattice resolution per axis.
pub const LATTICE: u32 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantCoord {
    pub ix: u16,
    pub iy: u16,
    pub iz: u16,
}

impl QuantCoord {
    pub fn axis(&self, a: usize) -> u16 {
        match a {
            0 => self.ix,
            1 => self.iy,
            2 => self.iz,
            _ => panic!("axis {a} out of range"),
        }
    }
}

/// `clamp(floor((g + 1) / 2 * r), 0, r - 1)`.
pub fn quantize_axis(g: f64, r: u32) -> u16 {
    let q = ((g + 1.0) * 0.5 * r as f64).floor();
    q.clamp(0.0, (r - 1) as f64) as u16
}

pub fn quantize(p: Vec3, r: u32) -> QuantCoord {
    QuantCoord {
        ix: quantize_axis(p.x, r),
        iy: quantize_axis(p.y, r),
        iz: quantize_axis(p.z, r),
    }
}

/// Quantized center plus the eight corners in binary order (bit 0 = x).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CenterCornerKey {
    pub center: QuantCoord,
    pub corners: [QuantCoord; 8],
}

impl CenterCornerKey {
    /// All nine lattice points, center first.
    pub fn points(&self) -> impl Iterator<Item = QuantCoord> + '_ {
        std::iter::once(self.center).chain(self.corners.iter().copied())
    }

    /// 27 little-endian u16 values: center, then corners, each as x, y, z.
    pub fn to_le_bytes(&self) -> [u8; 54] {
        let mut out = [0u8; 54];
        for (i, q) in self.points().enumerate() {
            for a in 0..3 {
                let o = (i * 3 + a) * 2;
                out[o..o + 2].copy_from_slice(&q.axis(a).to_le_bytes());
            }
        }
        out
    }
}

/// Key for `cell` of an `n^3` grid laid over `part_box`.
pub fn cell_key(part_box: &Aabb, cell: [usize; 3], n: usize, r: u32) -> Result<CenterCornerKey> {
    if n == 0 || cell.iter().any(|&c| c >= n) {
        return Err(Error::OutOfRange(format!("cell {cell:?} outside a {n}^3 grid")));
    }
    let canon = |c: usize, off: f64| -1.0 + 2.0 * (c as f64 + off) / n as f64;
    let point = |off: [f64; 3]| {
        let c = Vec3 {
            x: canon(cell[0], off[0]),
            y: canon(cell[1], off[1]),
            z: canon(cell[2], off[2]),
        };
        quantize(to_global(part_box, c), r)
    };
    let corners = std::array::from_fn(|i| {
        point([
            (i & 1) as f64,
            ((i >> 1) & 1) as f64,
            ((i >> 2) & 1) as f64,
        ])
    });
    Ok(CenterCornerKey {
        center: point([0.5; 3]),
        corners,
    })
}

/// Keys for every cell of the grid in linear order (`x` fastest).
pub fn grid_keys(part_box: &Aabb, n: usize, r: u32) -> Vec<CenterCornerKey> {
    let mut out = Vec::with_capacity(n * n * n);
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                out.push(cell_key(part_box, [x, y, z], n, r).expect("cell in range"));
            }
        }
    }
    out
}

/// Sinusoidal table for one axis: `r` rows of width `d`. Axis `a` uses a phase
/// offset of `a * 2pi/3` so the three factorized tables are not interchangeable.
pub fn sinusoidal_axis_table<T: Scalar>(r: u32, d: usize, axis: usize, scale: f64) -> Mat<T> {
    let half = (d / 2).max(1);
    let phase = axis as f64 * std::f64::consts::TAU / 3.0;
    Mat::from_fn(r as usize, d, |q, j| {
        let band = (j / 2) as f64;
        // Wavelengths from 2 lattice units up to ~4r.
        let freq = std::f64::consts::PI * (4.0 * r as f64).powf(-band / half as f64);
        let angle = q as f64 * freq + phase;
        let v = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        T::from_f64(v * scale)
    })
}

/// Borrowed embedding tables: three per-axis position tables and the part-ID table.
#[derive(Clone, Copy)]
pub struct EmbeddingTableRef<'a, T> {
    pub pos: [&'a Mat<T>; 3],
    pub id: &'a Mat<T>,
}

/// Owned embedding tables with deterministic sinusoidal initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    pub pos: [Mat<T>; 3],
    pub id: Mat<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn sinusoidal(r: u32, d: usize, kmax: usize) -> Self {
        let scale = 1.0 / 9.0;
        EmbeddingTable {
            pos: std::array::from_fn(|a| sinusoidal_axis_table(r, d, a, scale)),
            id: sinusoidal_axis_table(kmax as u32 + 1, d, 0, 1.0),
        }
    }

    pub fn as_ref(&self) -> EmbeddingTableRef<'_, T> {
        EmbeddingTableRef {
            pos: [&self.pos[0], &self.pos[1], &self.pos[2]],
            id: &self.id,
        }
    }

    pub fn embed(&self, key: &CenterCornerKey, part_id: usize) -> Result<Vec<T>> {
        self.as_ref().embed(key, part_id)
    }
}

impl<'a, T: Scalar> EmbeddingTableRef<'a, T> {
    pub fn width(&self) -> usize {
        self.id.cols
    }

    pub fn kmax(&self) -> usize {
        self.id.rows - 1
    }

    /// Factorized lookup `table_x[ix] + table_y[iy] + table_z[iz]` added into `out`.
    pub fn add_pos(&self, q: QuantCoord, out: &mut [T]) {
        for a in 0..3 {
            let row = self.pos[a].row(q.axis(a) as usize);
            for (o, v) in out.iter_mut().zip(row) {
                *o += *v;
            }
        }
    }

    /// Sum of the nine position embeddings of `key`.
    pub fn positional(&self, key: &CenterCornerKey) -> Vec<T> {
        let mut out = vec![T::zero(); self.width()];
        for q in key.points() {
            self.add_pos(q, &mut out);
        }
        out
    }

    /// `e_pos(center) + sum_i e_pos(corner_i) + e_id(part_id)`.
    pub fn embed(&self, key: &CenterCornerKey, part_id: usize) -> Result<Vec<T>> {
        if part_id > self.kmax() {
            return Err(Error::OutOfRange(format!(
                "part id {part_id} exceeds table capacity {}",
                self.kmax()
            )));
        }
        let mut out = self.positional(key);
        for (o, v) in out.iter_mut().zip(self.id.row(part_id)) {
            *o += *v;
        }
        Ok(out)
    }
}
