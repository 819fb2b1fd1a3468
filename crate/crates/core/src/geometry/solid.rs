use serde::{Deserialize, Serialize};

use super::{Aabb, Vec3};

/// Analytic primitive used for ground-truth occupancy. All solids are closed
/// sets: boundary points count as inside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Solid {
    Box {
        aabb: Aabb,
    },
    Sphere {
        center: Vec3,
        radius: f64,
    },
    /// Cylinder whose axis is parallel to coordinate `axis` (0 = x, 1 = y, 2 = z).
    Cylinder {
        axis: usize,
        center: Vec3,
        radius: f64,
        half_height: f64,
    },
    /// `{p : p[axis] >= offset}` when `positive`, else `{p : p[axis] <= offset}`.
    HalfSpace {
        axis: usize,
        offset: f64,
        positive: bool,
    },
    Union {
        parts: Vec<Solid>,
    },
}

impl Solid {
    pub fn contains(&self, p: Vec3) -> bool {
        match self {
            Solid::Box { aabb } => aabb.contains(p),
            Solid::Sphere { center, radius } => p.distance_sq(*center) <= radius * radius,
            Solid::Cylinder {
                axis,
                center,
                radius,
                half_height,
            } => {
                let d = p - *center;
                let (u, v) = other_axes(*axis);
                d[*axis].abs() <= *half_height && d[u] * d[u] + d[v] * d[v] <= radius * radius
            }
            Solid::HalfSpace {
                axis,
                offset,
                positive,
            } => {
                if *positive {
                    p[*axis] >= *offset
                } else {
                    p[*axis] <= *offset
                }
            }
            Solid::Union { parts } => parts.iter().any(|s| s.contains(p)),
        }
    }

    /// Tight bounds; `None` for unbounded solids.
    pub fn bounds(&self) -> Option<Aabb> {
        match self {
            Solid::Box { aabb } => Some(*aabb),
            Solid::Sphere { center, radius } => Some(Aabb {
                min: *center - Vec3::splat(*radius),
                max: *center + Vec3::splat(*radius),
            }),
            Solid::Cylinder {
                axis,
                center,
                radius,
                half_height,
            } => {
                let mut half = Vec3::splat(*radius);
                half.set(*axis, *half_height);
                Some(Aabb {
                    min: *center - half,
                    max: *center + half,
                })
            }
            Solid::HalfSpace { .. } => None,
            Solid::Union { parts } => {
                let mut it = parts.iter().map(Solid::bounds);
                let first = it.next()??;
                it.try_fold(first, |acc, b| Some(acc.union(&b?)))
            }
        }
    }

    /// Whether a line parallel to `axis` through the point with coordinates
    /// `a`, `b` on the two remaining axes (ascending order) meets the solid.
    pub fn hits_line(&self, axis: usize, a: f64, b: f64) -> bool {
        let (u, v) = other_axes(axis);
        match self {
            Solid::Box { aabb } => {
                a >= aabb.min[u] && a <= aabb.max[u] && b >= aabb.min[v] && b <= aabb.max[v]
            }
            Solid::Sphere { center, radius } => {
                let (du, dv) = (a - center[u], b - center[v]);
                du * du + dv * dv <= radius * radius
            }
            Solid::Cylinder {
                axis: cyl,
                center,
                radius,
                half_height,
            } => {
                let (du, dv) = (a - center[u], b - center[v]);
                if *cyl == axis {
                    du * du + dv * dv <= radius * radius
                } else if *cyl == u {
                    du.abs() <= *half_height && dv.abs() <= *radius
                } else {
                    dv.abs() <= *half_height && du.abs() <= *radius
                }
            }
            Solid::HalfSpace {
                axis: h,
                offset,
                positive,
            } => {
                if *h == axis {
                    true
                } else {
                    let c = if *h == u { a } else { b };
                    if *positive {
                        c >= *offset
                    } else {
                        c <= *offset
                    }
                }
            }
            Solid::Union { parts } => parts.iter().any(|s| s.hits_line(axis, a, b)),
        }
    }
}

/// The two coordinate axes other than `axis`, ascending.
pub fn other_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        2 => (0, 1),
        _ => panic!("axis {axis} out of range"),
    }
}
