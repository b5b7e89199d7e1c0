//! MANO-lite skeleton: a 21-joint rigid kinematic tree with linear shape
//! offsets. Joint 0 is the wrist; five chains of four joints follow in the
//! order thumb, index, middle, ring, pinky. Fingertips carry no pose triple.

use alloc::vec::Vec;

use super::ManoParams;

pub const JOINT_COUNT: usize = 21;
pub const SHAPE_COEFFS: usize = 10;

/// Version tag written into the skeleton template file.
pub const SKELETON_VERSION: u16 = 1;

/// Kinematic tree constants: parent indices, rest offsets from the parent
/// joint, and a linear shape-offset basis.
#[derive(Debug, Clone, PartialEq)]
pub struct HandSkeleton {
    pub parent: [i8; JOINT_COUNT],
    pub template_offsets: [[f64; 3]; JOINT_COUNT],
    pub shape_basis: [[[f64; SHAPE_COEFFS]; 3]; JOINT_COUNT],
}

/// Rest offsets (meters) of the default template: wrist at the origin,
/// fingers extending along +y, thumb splayed toward +x.
const TEMPLATE_OFFSETS: [[f64; 3]; JOINT_COUNT] = [
    [0.0, 0.0, 0.0],
    // thumb
    [0.030, 0.020, 0.0],
    [0.025, 0.020, 0.0],
    [0.020, 0.015, 0.0],
    [0.015, 0.010, 0.0],
    // index
    [0.025, 0.090, 0.0],
    [0.0, 0.035, 0.0],
    [0.0, 0.022, 0.0],
    [0.0, 0.020, 0.0],
    // middle
    [0.0, 0.095, 0.0],
    [0.0, 0.040, 0.0],
    [0.0, 0.025, 0.0],
    [0.0, 0.022, 0.0],
    // ring
    [-0.022, 0.090, 0.0],
    [0.0, 0.035, 0.0],
    [0.0, 0.022, 0.0],
    [0.0, 0.020, 0.0],
    // pinky
    [-0.042, 0.080, 0.0],
    [0.0, 0.028, 0.0],
    [0.0, 0.018, 0.0],
    [0.0, 0.016, 0.0],
];

const PARENT: [i8; JOINT_COUNT] = [
    -1, 0, 1, 2, 3, 0, 5, 6, 7, 0, 9, 10, 11, 0, 13, 14, 15, 0, 17, 18, 19,
];

impl HandSkeleton {
    /// The built-in template (version 1). Shape coefficient 0 scales the
    /// whole hand, coefficient 1 scales segment lengths, coefficient 2 the
    /// finger spread; the rest add small deterministic per-joint offsets.
    pub fn default_template() -> Self {
        let mut shape_basis = [[[0.0; SHAPE_COEFFS]; 3]; JOINT_COUNT];
        for j in 0..JOINT_COUNT {
            let off = TEMPLATE_OFFSETS[j];
            let is_base = PARENT[j] == 0;
            for c in 0..3 {
                shape_basis[j][c][0] = 0.05 * off[c];
                if !is_base && c == 1 {
                    shape_basis[j][c][1] = 0.04 * off[c];
                }
                if is_base && c == 0 {
                    shape_basis[j][c][2] = 0.04 * off[c];
                }
                for k in 3..SHAPE_COEFFS {
                    shape_basis[j][c][k] = 0.002 * libm::sin((j * 3 + c + 1) as f64 * (k as f64 - 1.5));
                }
            }
        }
        HandSkeleton {
            parent: PARENT,
            template_offsets: TEMPLATE_OFFSETS,
            shape_basis,
        }
    }

    /// Joint rest offsets after applying the linear shape basis.
    pub fn shaped_offsets(&self, shape: &[f64; SHAPE_COEFFS]) -> [[f64; 3]; JOINT_COUNT] {
        let mut out = self.template_offsets;
        for j in 0..JOINT_COUNT {
            for c in 0..3 {
                let mut acc = 0.0;
                for k in 0..SHAPE_COEFFS {
                    acc += self.shape_basis[j][c][k] * shape[k];
                }
                out[j][c] += acc;
            }
        }
        out
    }

    /// Pose-triple index driving joint `j`, if articulated. Joint 0 maps to
    /// the global orientation triple; fingertips return None.
    fn pose_triple_of(j: usize) -> Option<usize> {
        if j == 0 {
            return Some(0);
        }
        let finger = (j - 1) / 4;
        let seg = (j - 1) % 4;
        (seg < 3).then(|| 1 + finger * 3 + seg)
    }
}

/// 3x3 rotation from an axis-angle vector (Rodrigues' formula).
pub(crate) fn rodrigues(axis_angle: &[f64; 3]) -> [[f64; 3]; 3] {
    let theta = libm::sqrt(
        axis_angle[0] * axis_angle[0] + axis_angle[1] * axis_angle[1] + axis_angle[2] * axis_angle[2],
    );
    if theta < 1e-12 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let (kx, ky, kz) = (
        axis_angle[0] / theta,
        axis_angle[1] / theta,
        axis_angle[2] / theta,
    );
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    let v = 1.0 - c;
    [
        [c + kx * kx * v, kx * ky * v - kz * s, kx * kz * v + ky * s],
        [ky * kx * v + kz * s, c + ky * ky * v, ky * kz * v - kx * s],
        [kz * kx * v - ky * s, kz * ky * v + kx * s, c + kz * kz * v],
    ]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn mat_vec(a: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

/// Forward kinematics: world positions of the 21 joints.
///
/// Each articulated joint applies its axis-angle rotation to the subtree
/// below it; offsets are rotated by the parent's cumulative rotation, and
/// the wrist carries the global orientation and translation.
pub fn forward_kinematics(params: &ManoParams, skel: &HandSkeleton) -> [[f64; 3]; JOINT_COUNT] {
    let offsets = skel.shaped_offsets(&params.shape);
    let mut rots: Vec<[[f64; 3]; 3]> = Vec::with_capacity(JOINT_COUNT);
    let mut joints = [[0.0; 3]; JOINT_COUNT];

    for j in 0..JOINT_COUNT {
        let local = match HandSkeleton::pose_triple_of(j) {
            Some(t) => {
                let aa = [
                    params.pose[t * 3],
                    params.pose[t * 3 + 1],
                    params.pose[t * 3 + 2],
                ];
                rodrigues(&aa)
            }
            None => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
        if skel.parent[j] < 0 {
            joints[j] = [
                params.translation[0] + offsets[j][0],
                params.translation[1] + offsets[j][1],
                params.translation[2] + offsets[j][2],
            ];
            rots.push(local);
        } else {
            let pa = skel.parent[j] as usize;
            let step = mat_vec(&rots[pa], &offsets[j]);
            joints[j] = [
                joints[pa][0] + step[0],
                joints[pa][1] + step[1],
                joints[pa][2] + step[2],
            ];
            rots.push(mat_mul(&rots[pa], &local));
        }
    }
    joints
}
