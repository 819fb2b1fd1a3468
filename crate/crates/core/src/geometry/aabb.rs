use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Axis-aligned box in object space. Construction enforces `min <= max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAabb")]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

#[derive(Deserialize)]
struct RawAabb {
    min: Vec3,
    max: Vec3,
}

impl TryFrom<RawAabb> for Aabb {
    type Error = Error;
    fn try_from(r: RawAabb) -> Result<Self> {
        Aabb::new(r.min, r.max)
    }
}

impl Aabb {
    /// The normalized object cube `[-1, 1]^3`.
    pub const UNIT: Aabb = Aabb {
        min: Vec3 {
            x: -1.0,
            y: -1.0,
            z: -1.0,
        },
        max: Vec3 {
            x: 1.0,
            y: 1.0,
            z: 1.0,
        },
    };

    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if min.x <= max.x && min.y <= max.y && min.z <= max.z {
            Ok(Aabb { min, max })
        } else {
            Err(Error::Geometry(format!(
                "box min {:?} exceeds max {:?}",
                min.to_array(),
                max.to_array()
            )))
        }
    }

    /// Box with strictly positive extent on every axis.
    pub fn part_box(min: Vec3, max: Vec3) -> Result<Self> {
        let b = Aabb::new(min, max)?;
        b.ensure_valid()?;
        Ok(b)
    }

    pub fn from_center_extent(center: Vec3, extent: Vec3) -> Result<Self> {
        let half = extent * 0.5;
        Aabb::part_box(center - half, center + half)
    }

    pub fn from_arrays(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        Aabb::new(Vec3::try_from(min)?, Vec3::try_from(max)?)
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn is_valid(&self) -> bool {
        self.extent().min_elem() > 0.0
    }

    pub fn ensure_valid(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::DegenerateBox(format!(
                "extent {:?} is not strictly positive",
                self.extent().to_array()
            )))
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn intersection(&self, o: &Aabb) -> Option<Aabb> {
        let min = self.min.max(o.min);
        let max = self.max.min(o.max);
        Aabb::new(min, max).ok()
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    /// Corner `i` in binary order: bit 0 selects max x, bit 1 max y, bit 2 max z.
    pub fn corner(&self, i: usize) -> Vec3 {
        Vec3::new(
            if i & 1 == 0 { self.min.x } else { self.max.x },
            if i & 2 == 0 { self.min.y } else { self.max.y },
            if i & 4 == 0 { self.min.z } else { self.max.z },
        )
    }

    pub fn corners(&self) -> [Vec3; 8] {
        std::array::from_fn(|i| self.corner(i))
    }

    /// Smallest box containing every box in `boxes`.
    pub fn enclosing(boxes: &[Aabb]) -> Result<Aabb> {
        let (first, rest) = boxes.split_first().ok_or(Error::Empty("box list"))?;
        Ok(rest.iter().fold(*first, |acc, b| acc.union(b)))
    }

    pub fn clamp_to(&self, frame: &Aabb) -> Aabb {
        let min = self.min.max(frame.min).min(frame.max);
        let max = self.max.min(frame.max).max(min);
        Aabb { min, max }
    }
}

/// Componentwise bounds of a vertex list.
pub fn aabb_of_points(points: &[Vec3]) -> Result<Aabb> {
    let (first, rest) = points.split_first().ok_or(Error::Empty("vertex list"))?;
    let (min, max) = rest
        .iter()
        .fold((*first, *first), |(lo, hi), p| (lo.min(*p), hi.max(*p)));
    Ok(Aabb { min, max })
}

/// Intersection-over-union of two boxes; 0 when they do not overlap.
pub fn iou(a: &Aabb, b: &Aabb) -> f64 {
    let inter = a.intersection(b).map_or(0.0, |i| i.volume());
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy suppression in descending-volume order (ties by index). Returns the
/// indices of survivors in their original order.
pub fn nms_indices(boxes: &[Aabb], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| {
        boxes[j]
            .volume()
            .total_cmp(&boxes[i].volume())
            .then(i.cmp(&j))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept
            .iter()
            .all(|&k| iou(&boxes[i], &boxes[k]) <= iou_threshold)
        {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

pub fn nms(boxes: &[Aabb], iou_threshold: f64) -> Vec<Aabb> {
    nms_indices(boxes, iou_threshold)
        .into_iter()
        .map(|i| boxes[i])
        .collect()
}

/// Affine map from `frame` to the canonical cube `[-1, 1]^3`.
pub fn normalize_to_canonical(frame: &Aabb, p: Vec3) -> Result<Vec3> {
    frame.ensure_valid()?;
    let e = frame.extent();
    Ok(Vec3::new(
        (p.x - frame.min.x) / e.x * 2.0 - 1.0,
        (p.y - frame.min.y) / e.y * 2.0 - 1.0,
        (p.z - frame.min.z) / e.z * 2.0 - 1.0,
    ))
}

/// Inverse of [`normalize_to_canonical`]: `g = min + (c + 1) / 2 * extent`.
pub fn to_global(frame: &Aabb, c: Vec3) -> Vec3 {
    let e = frame.extent();
    Vec3 {
        x: frame.min.x + (c.x + 1.0) * 0.5 * e.x,
        y: frame.min.y + (c.y + 1.0) * 0.5 * e.y,
        z: frame.min.z + (c.z + 1.0) * 0.5 * e.z,
    }
}

/// An 8-vertex box mesh with 12 outward-wound triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct CuboidMesh {
    pub vertices: [Vec3; 8],
    pub faces: [[u32; 3]; 12],
}

/// Triangles of a binary-ordered hexahedron, counter-clockwise seen from outside.
pub const CUBOID_FACES: [[u32; 3]; 12] = [
    [0, 2, 1],
    [1, 2, 3],
    [4, 5, 6],
    [5, 7, 6],
    [0, 1, 4],
    [1, 5, 4],
    [2, 6, 3],
    [3, 6, 7],
    [0, 4, 2],
    [2, 4, 6],
    [1, 3, 5],
    [3, 7, 5],
];

pub fn box_to_cuboid_mesh(b: &Aabb) -> Result<CuboidMesh> {
    b.ensure_valid()?;
    Ok(CuboidMesh {
        vertices: b.corners(),
        faces: CUBOID_FACES,
    })
}

pub fn aabb_of_mesh(mesh: &CuboidMesh) -> Aabb {
    aabb_of_points(&mesh.vertices).expect("cuboid has 8 vertices")
}

/// Six tetrahedra sharing the 0-7 diagonal of a binary-ordered hexahedron.
const HEX_TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

/// A possibly deformed box given by 8 vertices in binary corner order.
#[derive(Debug, Clone, Copy)]
pub struct Hexahedron {
    pub vertices: [Vec3; 8],
}

impl Hexahedron {
    pub fn new(vertices: [Vec3; 8]) -> Self {
        Hexahedron { vertices }
    }

    pub fn aabb(&self) -> Aabb {
        aabb_of_points(&self.vertices).expect("hexahedron has 8 vertices")
    }

    /// Point membership in the union of the diagonal tetrahedra.
    pub fn contains(&self, p: Vec3) -> bool {
        HEX_TETS.iter().any(|t| {
            let [a, b, c, d] = t.map(|i| self.vertices[i]);
            tet_contains(a, b, c, d, p)
        })
    }

    /// Fraction of a `res^3` cell-center lattice over the own AABB that falls
    /// inside the hexahedron. This equals IoU(hexahedron, AABB) since the
    /// former is contained in the latter.
    pub fn aabb_iou(&self, res: usize) -> f64 {
        let frame = self.aabb();
        if !frame.is_valid() || res == 0 {
            return 0.0;
        }
        let e = frame.extent();
        let step = |i: usize| (i as f64 + 0.5) / res as f64;
        let mut inside = 0usize;
        for k in 0..res {
            let z = frame.min.z + step(k) * e.z;
            for j in 0..res {
                let y = frame.min.y + step(j) * e.y;
                for i in 0..res {
                    let x = frame.min.x + step(i) * e.x;
                    if self.contains(Vec3 { x, y, z }) {
                        inside += 1;
                    }
                }
            }
        }
        inside as f64 / (res * res * res) as f64
    }
}

fn orient(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> f64 {
    (b - a).cross(c - a).dot(d - a)
}

fn tet_contains(a: Vec3, b: Vec3, c: Vec3, d: Vec3, p: Vec3) -> bool {
    let vol = orient(a, b, c, d);
    if vol.abs() < 1e-15 {
        return false;
    }
    let s = vol.signum();
    s * orient(p, b, c, d) >= 0.0
        && s * orient(a, p, c, d) >= 0.0
        && s * orient(a, b, p, d) >= 0.0
        && s * orient(a, b, c, p) >= 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(min: [f64; 3], max: [f64; 3]) -> Aabb {
        Aabb::from_arrays(min, max).unwrap()
    }

    #[test]
    fn unit_cube_mesh_has_sign_vertices() {
        let m = box_to_cuboid_mesh(&Aabb::UNIT).unwrap();
        assert_eq!(m.faces.len(), 12);
        let mut signs: Vec<[i32; 3]> = m
            .vertices
            .iter()
            .map(|v| [v.x as i32, v.y as i32, v.z as i32])
            .collect();
        signs.sort();
        let mut expected = vec![];
        for x in [-1, 1] {
            for y in [-1, 1] {
                for z in [-1, 1] {
                    expected.push([x, y, z]);
                }
            }
        }
        expected.sort();
        assert_eq!(signs, expected);
    }

    #[test]
    fn cuboid_vertices_are_corner_products() {
        let m = box_to_cuboid_mesh(&b([0.0; 3], [1.0, 2.0, 3.0])).unwrap();
        let mut got: Vec<[f64; 3]> = m.vertices.iter().map(|v| v.to_array()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = vec![];
        for x in [0.0, 1.0] {
            for y in [0.0, 2.0] {
                for z in [0.0, 3.0] {
                    want.push([x, y, z]);
                }
            }
        }
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn cuboid_faces_wind_outward() {
        let bx = b([0.0; 3], [1.0, 2.0, 3.0]);
        let m = box_to_cuboid_mesh(&bx).unwrap();
        let c = bx.center();
        for f in m.faces {
            let [p, q, r] = f.map(|i| m.vertices[i as usize]);
            let n = (q - p).cross(r - p);
            let centroid = (p + q + r) * (1.0 / 3.0);
            assert!(n.dot(centroid - c) > 0.0, "face {f:?} winds inward");
        }
    }

    #[test]
    fn degenerate_box_rejected() {
        let flat = b([0.0; 3], [1.0, 0.0, 1.0]);
        assert!(matches!(
            box_to_cuboid_mesh(&flat),
            Err(Error::DegenerateBox(_))
        ));
        assert!(Aabb::from_arrays([1.0, 0.0, 0.0], [0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn aabb_of_points_cases() {
        assert!(aabb_of_points(&[]).is_err());
        let p = Vec3::new(0.3, -0.2, 0.1);
        let single = aabb_of_points(&[p]).unwrap();
        assert_eq!((single.min, single.max), (p, p));
        let unit = box_to_cuboid_mesh(&b([0.0; 3], [1.0; 3])).unwrap();
        assert_eq!(aabb_of_mesh(&unit), b([0.0; 3], [1.0; 3]));
        // Sheared hexahedron: top face offset by (0.5, 0.25) in x/y.
        let mut verts = b([0.0; 3], [1.0; 3]).corners();
        for v in verts.iter_mut().skip(4) {
            v.x += 0.5;
            v.y += 0.25;
        }
        let bb = aabb_of_points(&verts).unwrap();
        assert_eq!(bb, b([0.0; 3], [1.5, 1.25, 1.0]));
    }

    #[test]
    fn iou_worked_values() {
        let a = b([0.0; 3], [1.0; 3]);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b([2.0; 3], [3.0; 3])), 0.0);
        let shifted = b([0.5, 0.0, 0.0], [1.5, 1.0, 1.0]);
        assert_eq!(iou(&a, &shifted), 1.0 / 3.0);
    }

    #[test]
    fn nms_cases() {
        assert!(nms(&[], 0.7).is_empty());
        let a = b([0.0; 3], [1.0; 3]);
        assert_eq!(nms(&[a], 0.7), vec![a]);
        assert_eq!(nms_indices(&[a, a], 0.7), vec![0]);
        let shifted = b([0.5, 0.0, 0.0], [1.5, 1.0, 1.0]);
        assert_eq!(nms_indices(&[a, shifted], 0.7), vec![0, 1]);
        // Larger box wins even when listed later; output keeps original order.
        let big = b([0.0; 3], [1.05, 1.0, 1.0]);
        let far = b([5.0; 3], [6.0; 3]);
        assert_eq!(nms_indices(&[far, a, big], 0.7), vec![0, 2]);
    }

    #[test]
    fn canonical_map_cases() {
        let p = Vec3::new(0.3, -0.7, 0.9);
        let q = normalize_to_canonical(&Aabb::UNIT, p).unwrap();
        assert!(q.distance(p) < 1e-15);
        let bx = b([0.0; 3], [0.5; 3]);
        assert_eq!(
            normalize_to_canonical(&bx, bx.center()).unwrap(),
            Vec3::ZERO
        );
        assert_eq!(to_global(&bx, Vec3::splat(-1.0)), Vec3::ZERO);
        let flat = b([0.0; 3], [1.0, 0.0, 1.0]);
        assert!(normalize_to_canonical(&flat, p).is_err());
    }

    #[test]
    fn sheared_hexahedron_half_occupancy() {
        let mut verts = b([0.0; 3], [1.0; 3]).corners();
        for v in verts.iter_mut().skip(4) {
            v.x += 1.0;
        }
        let h = Hexahedron::new(verts);
        let f = h.aabb_iou(64);
        assert!((f - 0.5).abs() < 0.02, "fraction {f}");
        let cube = Hexahedron::new(b([0.0; 3], [1.0; 3]).corners());
        assert_eq!(cube.aabb_iou(32), 1.0);
    }
}
