//! Geometric core: boxes, cuboid meshes, analytic solids, packed voxel grids,
//! surface sampling and point-cloud metrics.
//!
//! All functions are pure over their inputs. Object space is the normalized
//! cube `[-1, 1]^3`.

mod aabb;
mod mesh;
mod metrics;
mod solid;
mod vec3;
mod voxel;

pub use aabb::{
    aabb_of_mesh, aabb_of_points, box_to_cuboid_mesh, iou, nms, nms_indices,
    normalize_to_canonical, to_global, Aabb, CuboidMesh, Hexahedron, CUBOID_FACES,
};
pub use mesh::{sample_occupied, sample_surface, PointCloud, TriMesh};
pub use metrics::{chamfer, chamfer_and_fscore, fscore, nearest_distances, FSCORE_TAU};
pub use solid::{other_axes, Solid};
pub use vec3::Vec3;
pub use voxel::{grid_to_cubes, voxelize, VoxelGrid, PVOX_MAGIC, PVOX_VERSION};

/// Default NMS IoU threshold applied to generated layouts.
pub const NMS_IOU: f64 = 0.7;
