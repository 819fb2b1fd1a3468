use std::collections::HashMap;
use std::path::Path;

use super::{Aabb, Solid, TriMesh, Vec3};
use crate::error::{Error, Result};

pub const PVOX_MAGIC: &[u8; 4] = b"PVOX";
pub const PVOX_VERSION: u32 = 1;

/// Binary occupancy over an `n^3` lattice, packed LSB-first with linear index
/// `x + n*y + n*n*z`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct VoxelGrid {
    n: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for VoxelGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VoxelGrid")
            .field("n", &self.n)
            .field("occupied", &self.count())
            .finish()
    }
}

impl VoxelGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be a positive power of two, got {n}"
            )));
        }
        let bits = n * n * n;
        Ok(VoxelGrid {
            n,
            words: vec![0; bits.div_ceil(64)],
        })
    }

    pub fn full(n: usize) -> Result<Self> {
        let mut g = VoxelGrid::new(n)?;
        for i in 0..g.len() {
            g.set_linear(i, true);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of cells, `n^3`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    #[inline]
    pub fn linear_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.n * (y + self.n * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        [idx % self.n, (idx / self.n) % self.n, idx / (self.n * self.n)]
    }

    #[inline]
    pub fn get_linear(&self, idx: usize) -> bool {
        self.words[idx >> 6] >> (idx & 63) & 1 == 1
    }

    #[inline]
    pub fn set_linear(&mut self, idx: usize, v: bool) {
        let mask = 1u64 << (idx & 63);
        if v {
            self.words[idx >> 6] |= mask;
        } else {
            self.words[idx >> 6] &= !mask;
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.get_linear(self.linear_index(x, y, z))
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.linear_index(x, y, z);
        self.set_linear(i, v);
    }

    /// Occupancy with out-of-range coordinates treated as empty.
    pub fn get_signed(&self, x: i64, y: i64, z: i64) -> bool {
        let n = self.n as i64;
        if x < 0 || y < 0 || z < 0 || x >= n || y >= n || z >= n {
            return false;
        }
        self.get(x as usize, y as usize, z as usize)
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Linear indices of occupied cells, ascending.
    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }

    pub fn intersection_count(&self, o: &VoxelGrid) -> usize {
        self.words
            .iter()
            .zip(&o.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// Cell IoU between two grids of equal resolution; 1.0 when both are empty.
    pub fn iou(&self, o: &VoxelGrid) -> f64 {
        assert_eq!(self.n, o.n, "grid resolution mismatch");
        let inter = self.intersection_count(o);
        let union = self.count() + o.count() - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Center of cell `(x, y, z)` when the grid spans `frame`.
    pub fn cell_center(&self, frame: &Aabb, x: usize, y: usize, z: usize) -> Vec3 {
        let e = frame.extent();
        let n = self.n as f64;
        Vec3 {
            x: frame.min.x + (x as f64 + 0.5) / n * e.x,
            y: frame.min.y + (y as f64 + 0.5) / n * e.y,
            z: frame.min.z + (z as f64 + 0.5) / n * e.z,
        }
    }

    /// Serializes to the PVOX container.
    pub fn to_pvox(&self) -> Vec<u8> {
        let nbytes = self.len().div_ceil(8);
        let mut out = Vec::with_capacity(12 + nbytes);
        out.extend_from_slice(PVOX_MAGIC);
        out.extend_from_slice(&PVOX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        let payload: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.extend_from_slice(&payload[..nbytes]);
        out
    }

    pub fn from_pvox(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != PVOX_MAGIC {
            return Err(Error::format("PVOX", "bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != PVOX_VERSION {
            return Err(Error::format("PVOX", format!("unsupported version {version}")));
        }
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let mut g = VoxelGrid::new(n)?;
        let nbytes = g.len().div_ceil(8);
        let payload = &bytes[12..];
        if payload.len() != nbytes {
            return Err(Error::format(
                "PVOX",
                format!("expected {nbytes} payload bytes, found {}", payload.len()),
            ));
        }
        for (wi, chunk) in payload.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            g.words[wi] = u64::from_le_bytes(buf);
        }
        // Bits past n^3 (only possible for n = 1) must be clear.
        let total = g.len();
        if total % 64 != 0 {
            let last = g.words.len() - 1;
            g.words[last] &= (1u64 << (total % 64)) - 1;
        }
        Ok(g)
    }

    pub fn write_pvox(&self, path: &Path) -> Result<()> {
        crate::files::write_atomic(path, &self.to_pvox())
    }

    pub fn read_pvox(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        VoxelGrid::from_pvox(&bytes)
    }
}

/// Sets every cell whose center lies inside `solid`.
pub fn voxelize(solid: &Solid, frame: &Aabb, n: usize) -> Result<VoxelGrid> {
    if n == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let mut g = VoxelGrid::new(n)?;
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                if solid.contains(g.cell_center(frame, x, y, z)) {
                    g.set(x, y, z, true);
                }
            }
        }
    }
    Ok(g)
}

const DIRS: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// Boundary faces of occupied cells as a shared-vertex triangle mesh placed in
/// `frame`. Faces between two occupied cells are never emitted.
pub fn grid_to_cubes(grid: &VoxelGrid, frame: &Aabb) -> TriMesh {
    let n = grid.n();
    let mut lattice: HashMap<[u32; 3], u32> = HashMap::new();
    let mut positions = Vec::new();
    let mut triangles = Vec::new();
    let e = frame.extent();
    let mut vertex = |p: [u32; 3], positions: &mut Vec<Vec3>| -> u32 {
        *lattice.entry(p).or_insert_with(|| {
            positions.push(Vec3 {
                x: frame.min.x + p[0] as f64 / n as f64 * e.x,
                y: frame.min.y + p[1] as f64 / n as f64 * e.y,
                z: frame.min.z + p[2] as f64 / n as f64 * e.z,
            });
            (positions.len() - 1) as u32
        })
    };
    for idx in grid.occupied() {
        let c = grid.coords(idx);
        for d in DIRS {
            let nb = [c[0] as i64 + d[0], c[1] as i64 + d[1], c[2] as i64 + d[2]];
            if grid.get_signed(nb[0], nb[1], nb[2]) {
                continue;
            }
            let axis = d.iter().position(|&v| v != 0).unwrap();
            let positive = d[axis] > 0;
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut base = [c[0] as u32, c[1] as u32, c[2] as u32];
            if positive {
                base[axis] += 1;
            }
            let corner = |du: u32, dv: u32| {
                let mut p = base;
                p[u] += du;
                p[v] += dv;
                p
            };
            let quad = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
            let q = quad.map(|p| vertex(p, &mut positions));
            if positive {
                triangles.push([q[0], q[1], q[2]]);
                triangles.push([q[0], q[2], q[3]]);
            } else {
                triangles.push([q[0], q[2], q[1]]);
                triangles.push([q[0], q[3], q[2]]);
            }
        }
    }
    TriMesh {
        positions,
        triangles,
        colors: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pvox_layout_is_lsb_first() {
        let mut g = VoxelGrid::new(2).unwrap();
        g.set(1, 0, 0, true); // linear 1
        g.set(1, 1, 1, true); // linear 7
        let bytes = g.to_pvox();
        assert_eq!(&bytes[..4], b"PVOX");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..], &[0b1000_0010]);
        assert_eq!(VoxelGrid::from_pvox(&bytes).unwrap(), g);
    }

    #[test]
    fn pvox_rejects_garbage() {
        assert!(VoxelGrid::from_pvox(b"PVOX").is_err());
        let mut bytes = VoxelGrid::new(4).unwrap().to_pvox();
        bytes.pop();
        assert!(VoxelGrid::from_pvox(&bytes).is_err());
        bytes[0] = b'X';
        assert!(VoxelGrid::from_pvox(&bytes).is_err());
    }

    #[test]
    fn voxelize_frame_and_disjoint() {
        let frame = Aabb::from_arrays([0.0; 3], [1.0; 3]).unwrap();
        let full = voxelize(&Solid::Box { aabb: frame }, &frame, 8).unwrap();
        assert_eq!(full.count(), 512);
        let far = Aabb::from_arrays([2.0; 3], [3.0; 3]).unwrap();
        assert!(voxelize(&Solid::Box { aabb: far }, &frame, 8)
            .unwrap()
            .is_empty());
        assert!(voxelize(&Solid::Box { aabb: frame }, &frame, 0).is_err());
    }

    #[test]
    fn half_space_fills_half() {
        let frame = Aabb::UNIT;
        let half = Solid::HalfSpace {
            axis: 0,
            offset: 0.0,
            positive: true,
        };
        let g = voxelize(&half, &frame, 16).unwrap();
        // Per-voxel oracle: a cell is inside iff its center x >= 0.
        let mut expected = 0;
        for x in 0..16 {
            if -1.0 + (x as f64 + 0.5) / 8.0 >= 0.0 {
                expected += 256;
            }
        }
        assert_eq!(expected, 8 * 16 * 16);
        assert_eq!(g.count(), expected);
    }

    #[test]
    fn cube_face_counts() {
        let frame = Aabb::UNIT;
        let empty = VoxelGrid::new(4).unwrap();
        assert!(grid_to_cubes(&empty, &frame).triangles.is_empty());
        let mut one = VoxelGrid::new(4).unwrap();
        one.set(1, 1, 1, true);
        let m = grid_to_cubes(&one, &frame);
        assert_eq!(m.triangles.len(), 12);
        assert_eq!(m.positions.len(), 8);
        one.set(2, 1, 1, true);
        assert_eq!(grid_to_cubes(&one, &frame).triangles.len(), 20);
    }
}
