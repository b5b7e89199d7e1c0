//! Pinhole projection and the joint-occupancy mask grid.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::JOINT_COUNT;
use crate::{Error, Result};

pub const MASK_GRID: usize = 16;
pub const MASK_CELLS: usize = MASK_GRID * MASK_GRID;

/// Intrinsics plus a rigid world-to-camera transform and image bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub width: f64,
    pub height: f64,
}

impl Camera {
    /// A fixed camera 1.2 m in front of the workspace origin, VGA image.
    pub fn default_rig() -> Self {
        Camera {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0, 0.0, 1.2],
            width: 640.0,
            height: 480.0,
        }
    }

    fn to_camera(&self, p: &[f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.translation[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.translation[2],
        ]
    }
}

/// Project 21 joints to pixel coordinates. Any joint at or behind the camera
/// plane is an error.
pub fn project_2d(joints: &[[f64; 3]; JOINT_COUNT], camera: &Camera) -> Result<[[f64; 2]; JOINT_COUNT]> {
    let mut out = [[0.0; 2]; JOINT_COUNT];
    for (j, joint) in joints.iter().enumerate() {
        let c = camera.to_camera(joint);
        if c[2] <= 0.0 {
            return Err(Error::invalid(format!(
                "project_2d: joint {j} has non-positive camera depth {}",
                c[2]
            )));
        }
        out[j] = [
            camera.fx * c[0] / c[2] + camera.cx,
            camera.fy * c[1] / c[2] + camera.cy,
        ];
    }
    Ok(out)
}

/// 16x16 occupancy grid over the image: a cell is 1 iff at least one point
/// falls inside it. Points outside the bounds are ignored.
pub fn rasterize_mask(points2d: &[[f64; 2]], width: f64, height: f64) -> Result<Vec<f64>> {
    if width <= 0.0 || height <= 0.0 {
        return Err(Error::invalid(format!(
            "rasterize_mask: bounds must be positive, got {width}x{height}"
        )));
    }
    let mut grid = alloc::vec![0.0; MASK_CELLS];
    for p in points2d {
        let (u, v) = (p[0], p[1]);
        if u < 0.0 || u >= width || v < 0.0 || v >= height {
            continue;
        }
        let col = ((u / width) * MASK_GRID as f64) as usize;
        let row = ((v / height) * MASK_GRID as f64) as usize;
        grid[row.min(MASK_GRID - 1) * MASK_GRID + col.min(MASK_GRID - 1)] = 1.0;
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optical_axis_hits_principal_point() {
        let cam = Camera::default_rig();
        let mut joints = [[0.0, 0.0, 0.0]; JOINT_COUNT];
        for j in joints.iter_mut() {
            *j = [0.0, 0.0, 0.0]; // maps to camera-frame z = 1.2
        }
        let px = project_2d(&joints, &cam).unwrap();
        assert_eq!(px[0], [320.0, 240.0]);
    }

    #[test]
    fn pinhole_arithmetic() {
        // (0.1, 0, 1) in camera frame with fx=500, cx=320 -> u = 370.
        let mut cam = Camera::default_rig();
        cam.translation = [0.0, 0.0, 0.0];
        let mut joints = [[0.1, 0.0, 1.0]; JOINT_COUNT];
        let px = project_2d(&joints, &cam).unwrap();
        assert!((px[0][0] - 370.0).abs() < 1e-12);
        // Doubling depth halves the offset from the principal point.
        joints[0][2] = 2.0;
        let px2 = project_2d(&joints, &cam).unwrap();
        assert!((px2[0][0] - 320.0 - (370.0 - 320.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_error() {
        let mut cam = Camera::default_rig();
        cam.translation = [0.0, 0.0, 0.0];
        let joints = [[0.0, 0.0, -0.4]; JOINT_COUNT];
        assert!(project_2d(&joints, &cam).is_err());
    }

    #[test]
    fn mask_occupancy_against_brute_force() {
        let (w, h) = (640.0, 480.0);
        let pts: Vec<[f64; 2]> = (0..21)
            .map(|i| {
                let x = (i as f64 * 73.7) % 780.0 - 50.0; // some out of bounds
                let y = (i as f64 * 37.3) % 560.0 - 40.0;
                [x, y]
            })
            .collect();
        let grid = rasterize_mask(&pts, w, h).unwrap();
        // Brute-force per-cell point-in-box test.
        for row in 0..MASK_GRID {
            for col in 0..MASK_GRID {
                let x0 = col as f64 * w / MASK_GRID as f64;
                let x1 = (col + 1) as f64 * w / MASK_GRID as f64;
                let y0 = row as f64 * h / MASK_GRID as f64;
                let y1 = (row + 1) as f64 * h / MASK_GRID as f64;
                let hit = pts.iter().any(|p| {
                    p[0] >= x0 && p[0] < x1 && p[1] >= y0 && p[1] < y1
                });
                assert_eq!(
                    grid[row * MASK_GRID + col],
                    if hit { 1.0 } else { 0.0 },
                    "cell ({row},{col})"
                );
            }
        }
        // Empty input -> all-zero grid; single centered point -> one cell.
        assert!(rasterize_mask(&[], w, h).unwrap().iter().all(|v| *v == 0.0));
        let one = rasterize_mask(&[[w / 2.0, h / 2.0]], w, h).unwrap();
        assert_eq!(one.iter().sum::<f64>(), 1.0);
    }
}
