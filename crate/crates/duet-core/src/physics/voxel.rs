//! Voxelization on a shared global lattice.
//!
//! Voxel `(i, j, k)` covers the half-open cube
//! `[origin + i*res, origin + (i+1)*res)` per axis; membership is tested at
//! the voxel center with `distance <= radius` counting as inside. Both bodies
//! voxelize against the same origin-anchored lattice, so overlap is a plain
//! set intersection.

use std::collections::HashSet;

use nalgebra::Vector3;

use crate::error::{DuetError, Result};
use crate::physics::body::WorldCapsule;

pub const DEFAULT_RESOLUTION: f64 = 0.02;

/// Severe-penetration cutoff: a 6 cm cube (216 ml) is 27 voxels at 2 cm.
pub fn severe_threshold_voxels(resolution: f64) -> usize {
    let per_axis = 0.06 / resolution;
    (per_axis * per_axis * per_axis).round() as usize
}

#[derive(Debug, Clone)]
pub struct VoxelGrid {
    pub origin: Vector3<f64>,
    pub resolution: f64,
    pub occupancy: HashSet<(i32, i32, i32)>,
}

impl VoxelGrid {
    pub fn empty(resolution: f64) -> Self {
        VoxelGrid {
            origin: Vector3::zeros(),
            resolution,
            occupancy: HashSet::new(),
        }
    }

    /// Voxelize a capsule set: a voxel is occupied iff its center lies within
    /// any capsule.
    pub fn voxelize(capsules: &[WorldCapsule], resolution: f64) -> Self {
        let mut grid = VoxelGrid::empty(resolution);
        for cap in capsules {
            let lo = cap.p0.inf(&cap.p1).map(|v| v - cap.radius);
            let hi = cap.p0.sup(&cap.p1).map(|v| v + cap.radius);
            let (ilo, ihi) = index_range(lo.x, hi.x, resolution);
            let (jlo, jhi) = index_range(lo.y, hi.y, resolution);
            let (klo, khi) = index_range(lo.z, hi.z, resolution);
            for i in ilo..=ihi {
                for j in jlo..=jhi {
                    for k in klo..=khi {
                        if grid.occupancy.contains(&(i, j, k)) {
                            continue;
                        }
                        let c = center(i, j, k, resolution);
                        if point_segment_distance(&c, &cap.p0, &cap.p1) <= cap.radius {
                            grid.occupancy.insert((i, j, k));
                        }
                    }
                }
            }
        }
        grid
    }

    /// Occupy every voxel whose center lies in the box `[min, max)`.
    pub fn from_aabb(min: Vector3<f64>, max: Vector3<f64>, resolution: f64) -> Self {
        let mut grid = VoxelGrid::empty(resolution);
        let (ilo, ihi) = index_range(min.x, max.x, resolution);
        let (jlo, jhi) = index_range(min.y, max.y, resolution);
        let (klo, khi) = index_range(min.z, max.z, resolution);
        for i in ilo..=ihi {
            for j in jlo..=jhi {
                for k in klo..=khi {
                    let c = center(i, j, k, resolution);
                    if c.x >= min.x
                        && c.x < max.x
                        && c.y >= min.y
                        && c.y < max.y
                        && c.z >= min.z
                        && c.z < max.z
                    {
                        grid.occupancy.insert((i, j, k));
                    }
                }
            }
        }
        grid
    }

    pub fn len(&self) -> usize {
        self.occupancy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    /// `|occupancy(a) ∩ occupancy(b)|`; both grids must share the lattice.
    pub fn overlap(&self, other: &VoxelGrid) -> Result<usize> {
        if (self.resolution - other.resolution).abs() > 1e-12
            || (self.origin - other.origin).norm() > 1e-12
        {
            return Err(DuetError::LatticeMismatch);
        }
        let (small, large) = if self.occupancy.len() <= other.occupancy.len() {
            (&self.occupancy, &other.occupancy)
        } else {
            (&other.occupancy, &self.occupancy)
        };
        Ok(small.iter().filter(|v| large.contains(*v)).count())
    }

    /// Morphological dilation by the 6-neighborhood, iterated.
    pub fn dilate(&self, iterations: usize) -> VoxelGrid {
        let mut occ = self.occupancy.clone();
        for _ in 0..iterations {
            let mut next = occ.clone();
            for &(i, j, k) in &occ {
                next.insert((i + 1, j, k));
                next.insert((i - 1, j, k));
                next.insert((i, j + 1, k));
                next.insert((i, j - 1, k));
                next.insert((i, j, k + 1));
                next.insert((i, j, k - 1));
            }
            occ = next;
        }
        VoxelGrid {
            origin: self.origin,
            resolution: self.resolution,
            occupancy: occ,
        }
    }

    /// Shift the occupancy by whole voxels.
    pub fn shifted(&self, di: i32, dj: i32, dk: i32) -> VoxelGrid {
        VoxelGrid {
            origin: self.origin,
            resolution: self.resolution,
            occupancy: self
                .occupancy
                .iter()
                .map(|&(i, j, k)| (i + di, j + dj, k + dk))
                .collect(),
        }
    }
}

fn center(i: i32, j: i32, k: i32, res: f64) -> Vector3<f64> {
    Vector3::new(
        (i as f64 + 0.5) * res,
        (j as f64 + 0.5) * res,
        (k as f64 + 0.5) * res,
    )
}

/// Candidate index range whose centers could fall in `[lo, hi]`.
fn index_range(lo: f64, hi: f64, res: f64) -> (i32, i32) {
    let ilo = ((lo / res) - 0.5).floor() as i32 - 1;
    let ihi = ((hi / res) - 0.5).ceil() as i32 + 1;
    (ilo, ihi)
}

pub fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    if len_sq < 1e-18 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Closest distance between two segments (Ericson's clamped closed form).
pub fn segment_segment_distance(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if a < 1e-18 && e < 1e-18 {
        return (p1 - p2).norm();
    }
    if a < 1e-18 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e < 1e-18 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let s_raw = if denom > 1e-18 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let t_raw = (b * s_raw + f) / e;
            if t_raw < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t_raw > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            } else {
                t = t_raw;
                s = s_raw;
            }
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(center: Vector3<f64>, radius: f64) -> WorldCapsule {
        WorldCapsule {
            p0: center,
            p1: center,
            radius,
        }
    }

    #[test]
    fn severe_threshold_is_27_at_2cm() {
        assert_eq!(severe_threshold_voxels(0.02), 27);
    }

    #[test]
    fn zero_radius_segment_through_centers_counts_lattice_points() {
        // Segment along x at a voxel-center line: radius 0 keeps exactly the
        // centers it passes through. From 0.01 to 1.01 that is 51 centers.
        let cap = WorldCapsule {
            p0: Vector3::new(0.01, 0.01, 0.01),
            p1: Vector3::new(1.01, 0.01, 0.01),
            radius: 1e-12,
        };
        let grid = VoxelGrid::voxelize(&[cap], 0.02);
        assert_eq!(grid.len(), 51);
    }

    #[test]
    fn unit_cube_counts() {
        let res = 0.02;
        let a = VoxelGrid::from_aabb(Vector3::zeros(), Vector3::new(1.0, 1.0, 1.0), res);
        assert_eq!(a.len(), 125_000);
        let b = VoxelGrid::from_aabb(
            Vector3::new(0.5, 0.0, 0.0),
            Vector3::new(1.5, 1.0, 1.0),
            res,
        );
        assert_eq!(a.overlap(&b).unwrap(), 62_500);
        let c = VoxelGrid::from_aabb(
            Vector3::new(5.0, 0.0, 0.0),
            Vector3::new(6.0, 1.0, 1.0),
            res,
        );
        assert_eq!(a.overlap(&c).unwrap(), 0);
        assert_eq!(a.overlap(&a).unwrap(), 125_000);
    }

    #[test]
    fn overlap_is_symmetric() {
        let a = VoxelGrid::voxelize(&[sphere(Vector3::new(0.0, 0.0, 0.0), 0.06)], 0.02);
        let b = VoxelGrid::voxelize(&[sphere(Vector3::new(0.05, 0.0, 0.0), 0.06)], 0.02);
        assert_eq!(a.overlap(&b).unwrap(), b.overlap(&a).unwrap());
        assert!(a.overlap(&b).unwrap() > 0);
    }

    #[test]
    fn lattice_mismatch_rejected() {
        let a = VoxelGrid::empty(0.02);
        let b = VoxelGrid::empty(0.04);
        assert!(matches!(a.overlap(&b), Err(DuetError::LatticeMismatch)));
    }

    #[test]
    fn pitch_translation_shifts_indices() {
        let cap = sphere(Vector3::new(0.13, 0.27, -0.08), 0.05);
        let grid = VoxelGrid::voxelize(&[cap], 0.02);
        let moved = WorldCapsule {
            p0: cap.p0 + Vector3::new(0.02, 0.0, 0.0),
            p1: cap.p1 + Vector3::new(0.02, 0.0, 0.0),
            radius: cap.radius,
        };
        let grid_moved = VoxelGrid::voxelize(&[moved], 0.02);
        let shifted = grid.shifted(1, 0, 0);
        assert_eq!(shifted.occupancy, grid_moved.occupancy);
    }

    #[test]
    fn dilation_monotone() {
        let grid = VoxelGrid::voxelize(&[sphere(Vector3::zeros(), 0.04)], 0.02);
        let dilated = grid.dilate(1);
        assert!(dilated.len() > grid.len());
        assert!(grid.occupancy.iter().all(|v| dilated.occupancy.contains(v)));
    }
}
