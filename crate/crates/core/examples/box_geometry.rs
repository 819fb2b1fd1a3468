//! Box IoU, non-maximum suppression and per-part voxelization.

use partgen::geometry::{iou, nms, voxelize, Aabb, Solid, Vec3, NMS_IOU};

fn main() {
    let a = Aabb::from_arrays([0.0; 3], [1.0; 3]).unwrap();
    let b = Aabb::from_arrays([0.5, 0.0, 0.0], [1.5, 1.0, 1.0]).unwrap();
    println!("iou of half-shifted cubes = {}", iou(&a, &b));

    let near_dup = Aabb::from_arrays([0.02, 0.0, 0.0], [1.0, 1.0, 1.0]).unwrap();
    let kept = nms(&[a, near_dup, b], NMS_IOU);
    println!("nms at {NMS_IOU} keeps {} of 3 boxes", kept.len());

    // A small sphere keeps its detail when voxelized in its own box.
    let center = Vec3::new(0.3, -0.2, 0.1);
    let sphere = Solid::Sphere { center, radius: 0.125 };
    let part_box = Aabb::from_center_extent(center, Vec3::splat(0.25)).unwrap();
    let own = voxelize(&sphere, &part_box, 16).unwrap();
    let shared = voxelize(&sphere, &Aabb::UNIT, 16).unwrap();
    println!("occupied voxels at 16^3: own box {}, object grid {}", own.count(), shared.count());
}
