//! Independent reference computations shared by the integration tests and
//! the acceptance harness.

use partgen::geometry::{Aabb, Solid, Vec3, VoxelGrid};

/// IoU of two boxes by counting the centers of a `res^3` lattice over the
/// pair's enclosing box that fall inside each box.
pub fn counted_iou(a: &Aabb, b: &Aabb, res: usize) -> f64 {
    let w = a.union(b);
    let (mut inter, mut union) = (0usize, 0usize);
    let c = |i: usize, ax: usize| w.min[ax] + (i as f64 + 0.5) / res as f64 * (w.max[ax] - w.min[ax]);
    for z in 0..res {
        for y in 0..res {
            for x in 0..res {
                let p = Vec3::new(c(x, 0), c(y, 1), c(z, 2));
                let (ia, ib) = (a.contains(p), b.contains(p));
                inter += (ia && ib) as usize;
                union += (ia || ib) as usize;
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Occupancy of the grid cell containing `p`, or `false` outside `frame`.
fn grid_at(grid: &VoxelGrid, frame: &Aabb, p: Vec3) -> bool {
    let n = grid.n();
    let mut idx = [0usize; 3];
    for a in 0..3 {
        let t = (p[a] - frame.min[a]) / (frame.max[a] - frame.min[a]);
        if !(0.0..1.0).contains(&t) {
            return false;
        }
        idx[a] = ((t * n as f64) as usize).min(n - 1);
    }
    grid.get(idx[0], idx[1], idx[2])
}

/// IoU between the region covered by `grid` (spanning `frame`) and `solid`,
/// measured on a `res^3` point lattice over `window`.
pub fn discretization_iou(grid: &VoxelGrid, frame: &Aabb, solid: &Solid, window: &Aabb, res: usize) -> f64 {
    let e = window.extent();
    let (mut inter, mut union) = (0usize, 0usize);
    for z in 0..res {
        for y in 0..res {
            for x in 0..res {
                let f = |i: usize, a: usize| window.min[a] + (i as f64 + 0.5) / res as f64 * e[a];
                let p = Vec3::new(f(x, 0), f(y, 1), f(z, 2));
                let (g, s) = (grid_at(grid, frame, p), solid.contains(p));
                inter += (g && s) as usize;
                union += (g || s) as usize;
            }
        }
    }
    inter as f64 / union as f64
}

/// Brute-force symmetric chamfer with explicit loops.
pub fn brute_chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
    let directed = |from: &[Vec3], to: &[Vec3]| {
        let mut total = 0.0;
        for p in from {
            let mut best = f64::MAX;
            for q in to {
                let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt();
                best = best.min(d);
            }
            total += best;
        }
        total / from.len() as f64
    };
    (directed(a, b) + directed(b, a)) / 2.0
}

/// Random box inside `[-1, 1]^3` with extents in `[0.05, 1)` before clipping.
pub fn random_box(rng: &mut impl rand::Rng) -> Aabb {
    let lo: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..0.7));
    let hi: [f64; 3] = std::array::from_fn(|a| (lo[a] + rng.random_range(0.05..1.0)).min(1.0));
    Aabb::from_arrays(lo, hi).unwrap()
}

/// Integer lattice coordinate of the canonical fraction `num / den` of
/// `[-1, 1]`, computed without floating point.
pub fn lattice_coord(num: usize, den: usize, r: u32) -> u16 {
    ((num * r as usize) / den).min(r as usize - 1) as u16
}
