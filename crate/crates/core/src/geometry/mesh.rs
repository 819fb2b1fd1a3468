use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grid_to_cubes, Aabb, Vec3, VoxelGrid};
use crate::error::{Error, Result};

/// Indexed triangle mesh with optional per-vertex RGB.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub positions: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub colors: Option<Vec<[u8; 3]>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, d: Vec3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| *p + d).collect(),
        }
    }
}

impl TriMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        self.triangles[i].map(|v| self.positions[v as usize])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| tri_area(self.triangle(i))).sum()
    }

    /// Concatenates meshes; colors are kept only if every input carries them.
    pub fn merge(meshes: &[TriMesh]) -> TriMesh {
        let all_colored = !meshes.is_empty() && meshes.iter().all(|m| m.colors.is_some());
        let mut out = TriMesh {
            colors: all_colored.then(Vec::new),
            ..TriMesh::default()
        };
        for m in meshes {
            let off = out.positions.len() as u32;
            out.positions.extend_from_slice(&m.positions);
            out.triangles
                .extend(m.triangles.iter().map(|t| t.map(|v| v + off)));
            if let (Some(dst), Some(src)) = (out.colors.as_mut(), m.colors.as_ref()) {
                dst.extend_from_slice(src);
            }
        }
        out
    }

    pub fn bounds(&self) -> Option<Aabb> {
        super::aabb_of_points(&self.positions).ok()
    }

    /// Binary little-endian PLY with float positions, optional uchar RGB and
    /// uchar/int face lists.
    pub fn to_ply_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut header = format!(
            "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
            self.positions.len()
        );
        if self.colors.is_some() {
            header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
        }
        header.push_str(&format!(
            "element face {}\nproperty list uchar int vertex_indices\nend_header\n",
            self.triangles.len()
        ));
        out.extend_from_slice(header.as_bytes());
        for (i, p) in self.positions.iter().enumerate() {
            for c in p.to_array() {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
            if let Some(colors) = &self.colors {
                out.extend_from_slice(&colors[i]);
            }
        }
        for t in &self.triangles {
            out.push(3);
            for v in t {
                out.extend_from_slice(&(*v as i32).to_le_bytes());
            }
        }
        out
    }

    pub fn write_ply(&self, path: &Path) -> Result<()> {
        crate::files::write_atomic(path, &self.to_ply_bytes())
    }
}

fn tri_area([a, b, c]: [Vec3; 3]) -> f64 {
    0.5 * (b - a).cross(c - a).norm()
}

/// Area-weighted uniform samples on the mesh surface.
pub fn sample_surface(mesh: &TriMesh, count: usize, seed: u64) -> Result<PointCloud> {
    if mesh.is_empty() {
        return Err(Error::Empty("mesh"));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for i in 0..mesh.triangles.len() {
        total += tri_area(mesh.triangle(i));
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(Error::Geometry("mesh has zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..count)
        .map(|_| {
            let target = rng.random::<f64>() * total;
            let i = cumulative
                .partition_point(|&c| c <= target)
                .min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(i);
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
        })
        .collect();
    Ok(PointCloud { points })
}

/// Uniform samples on the boundary surface of the occupied cells.
pub fn sample_occupied(
    grid: &VoxelGrid,
    frame: &Aabb,
    count: usize,
    seed: u64,
) -> Result<PointCloud> {
    if grid.is_empty() {
        return Err(Error::Empty("voxel grid"));
    }
    sample_surface(&grid_to_cubes(grid, frame), count, seed)
}
