//! Hand-motion representation: the 166-value frame layout, MANO-lite
//! kinematics, contact maps, camera projection, and normalization.
//!
//! Frame layout (fixed field order, 166 values):
//! `[1_l, mano_l(61), cont_l(21), 1_r, mano_r(61), cont_r(21)]`
//! where each mano block is `[translation(3), pose(48), shape(10)]`.

mod camera;
mod skeleton;

pub use camera::{project_2d, rasterize_mask, Camera, MASK_CELLS, MASK_GRID};
pub use skeleton::{forward_kinematics, HandSkeleton, JOINT_COUNT, SKELETON_VERSION};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::{Error, Result};

pub const MANO_DIM: usize = 61;
pub const CONTACT_DIM: usize = 21;
/// presence + mano + contact
pub const HAND_BLOCK: usize = 1 + MANO_DIM + CONTACT_DIM;
pub const FRAME_WIDTH: usize = 2 * HAND_BLOCK;

/// Default maximum sequence length (frames); shorter sequences are padded
/// with zero frames and carry an explicit length.
pub const MAX_FRAMES: usize = 64;

/// Distance (meters) at which a joint's contact value reaches zero.
pub const CONTACT_RANGE: f64 = 0.10;

/// Presence flags of generated output are thresholded here when decoding.
pub const PRESENCE_THRESHOLD: f64 = 0.5;

/// Translation, pose (16 axis-angle triples, joint 0 = global orientation),
/// and shape coefficients of one hand.
#[derive(Debug, Clone, PartialEq)]
pub struct ManoParams {
    pub translation: [f64; 3],
    pub pose: [f64; 48],
    pub shape: [f64; 10],
}

impl Default for ManoParams {
    fn default() -> Self {
        ManoParams {
            translation: [0.0; 3],
            pose: [0.0; 48],
            shape: [0.0; 10],
        }
    }
}

impl ManoParams {
    pub fn to_slice(&self, out: &mut [f64]) {
        out[..3].copy_from_slice(&self.translation);
        out[3..51].copy_from_slice(&self.pose);
        out[51..61].copy_from_slice(&self.shape);
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let mut p = ManoParams::default();
        p.translation.copy_from_slice(&v[..3]);
        p.pose.copy_from_slice(&v[3..51]);
        p.shape.copy_from_slice(&v[51..61]);
        p
    }

    pub fn is_zero(&self) -> bool {
        self.translation.iter().all(|v| *v == 0.0)
            && self.pose.iter().all(|v| *v == 0.0)
            && self.shape.iter().all(|v| *v == 0.0)
    }
}

/// Per-joint inverse hand-object distance values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct ContactMap {
    pub values: [f64; CONTACT_DIM],
}

impl Default for ContactMap {
    fn default() -> Self {
        ContactMap {
            values: [0.0; CONTACT_DIM],
        }
    }
}

impl ContactMap {
    /// The dedicated "no object" path: an all-zero map.
    pub fn zeros() -> Self {
        ContactMap::default()
    }
}

/// Bounded linear contact mapping: c = clamp(1 − d/d_max, 0, 1) against the
/// closest object point per joint. An empty object cloud is an error; pass
/// object-free sequences through [`ContactMap::zeros`] instead.
pub fn contact_map(joints: &[[f64; 3]; JOINT_COUNT], object_points: &[[f64; 3]]) -> Result<ContactMap> {
    if object_points.is_empty() {
        return Err(Error::invalid(
            "contact_map requires at least one object point; use ContactMap::zeros() for object-free sequences",
        ));
    }
    let mut map = ContactMap::default();
    for (j, joint) in joints.iter().enumerate() {
        let mut best = f64::INFINITY;
        for p in object_points {
            let dx = joint[0] - p[0];
            let dy = joint[1] - p[1];
            let dz = joint[2] - p[2];
            let d = libm::sqrt(dx * dx + dy * dy + dz * dz);
            if d < best {
                best = d;
            }
        }
        map.values[j] = (1.0 - best / CONTACT_RANGE).clamp(0.0, 1.0);
    }
    Ok(map)
}

/// One frame: presence flags, MANO parameters, and contact maps for both
/// hands. When a presence flag is off, that hand's 82 values are all zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HandFrame {
    pub left_present: bool,
    pub left_mano: ManoParams,
    pub left_contact: ContactMap,
    pub right_present: bool,
    pub right_mano: ManoParams,
    pub right_contact: ContactMap,
}

impl HandFrame {
    /// Build a frame, zeroing the blocks of absent hands to maintain the
    /// layout convention.
    pub fn new(
        left: Option<(ManoParams, ContactMap)>,
        right: Option<(ManoParams, ContactMap)>,
    ) -> Self {
        let mut f = HandFrame::default();
        if let Some((m, c)) = left {
            f.left_present = true;
            f.left_mano = m;
            f.left_contact = c;
        }
        if let Some((m, c)) = right {
            f.right_present = true;
            f.right_mano = m;
            f.right_contact = c;
        }
        f
    }
}

/// Flatten a frame to its 166-value layout.
pub fn flatten(frame: &HandFrame) -> Vec<f64> {
    let mut v = vec![0.0; FRAME_WIDTH];
    if frame.left_present {
        v[0] = 1.0;
        frame.left_mano.to_slice(&mut v[1..1 + MANO_DIM]);
        v[1 + MANO_DIM..HAND_BLOCK].copy_from_slice(&frame.left_contact.values);
    }
    if frame.right_present {
        v[HAND_BLOCK] = 1.0;
        frame
            .right_mano
            .to_slice(&mut v[HAND_BLOCK + 1..HAND_BLOCK + 1 + MANO_DIM]);
        v[HAND_BLOCK + 1 + MANO_DIM..FRAME_WIDTH].copy_from_slice(&frame.right_contact.values);
    }
    v
}

/// Inverse of [`flatten`]. Presence flags are thresholded at 0.5 and absent
/// hands are zeroed, so this doubles as the decoder for generated vectors.
pub fn unflatten(v: &[f64]) -> Result<HandFrame> {
    if v.len() != FRAME_WIDTH {
        return Err(Error::invalid(format!(
            "unflatten expects {FRAME_WIDTH} values, got {}",
            v.len()
        )));
    }
    let hand = |block: &[f64]| -> Option<(ManoParams, ContactMap)> {
        if block[0] <= PRESENCE_THRESHOLD {
            return None;
        }
        let mano = ManoParams::from_slice(&block[1..1 + MANO_DIM]);
        let mut contact = ContactMap::default();
        for (c, &raw) in contact.values.iter_mut().zip(&block[1 + MANO_DIM..HAND_BLOCK]) {
            *c = raw.clamp(0.0, 1.0);
        }
        Some((mano, contact))
    };
    Ok(HandFrame::new(hand(&v[..HAND_BLOCK]), hand(&v[HAND_BLOCK..])))
}

/// A motion clip: `length` real frames padded with zero frames to a fixed
/// capacity, plus its action label.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    frames: Vec<HandFrame>,
    pub label: usize,
    length: usize,
}

impl MotionSequence {
    pub fn new(real_frames: Vec<HandFrame>, label: usize, capacity: usize) -> Result<Self> {
        let length = real_frames.len();
        if length == 0 || length > capacity {
            return Err(Error::invalid(format!(
                "sequence length {length} outside 1..={capacity}"
            )));
        }
        let mut frames = real_frames;
        frames.resize(capacity, HandFrame::default());
        Ok(MotionSequence {
            frames,
            label,
            length,
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn capacity(&self) -> usize {
        self.frames.len()
    }

    /// All frames including padding.
    pub fn frames(&self) -> &[HandFrame] {
        &self.frames
    }

    pub fn real_frames(&self) -> &[HandFrame] {
        &self.frames[..self.length]
    }

    /// Row-major `[capacity, 166]` matrix of the padded sequence.
    pub fn to_matrix(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.frames.len() * FRAME_WIDTH);
        for f in &self.frames {
            data.extend_from_slice(&flatten(f));
        }
        Tensor::new(vec![self.frames.len(), FRAME_WIDTH], data).unwrap()
    }

    /// Decode a `[capacity, 166]` matrix (thresholding presence flags and
    /// clamping contact values) into a sequence of the given real length.
    pub fn from_matrix(m: &Tensor, label: usize, length: usize) -> Result<Self> {
        if m.rank() != 2 || m.cols() != FRAME_WIDTH {
            return Err(Error::invalid(format!(
                "from_matrix expects [*, {FRAME_WIDTH}], got {:?}",
                m.shape()
            )));
        }
        if length == 0 || length > m.rows() {
            return Err(Error::invalid(format!(
                "length {length} outside 1..={}",
                m.rows()
            )));
        }
        let real = (0..length)
            .map(|r| unflatten(m.row(r)))
            .collect::<Result<Vec<_>>>()?;
        MotionSequence::new(real, label, m.rows())
    }
}

/// Per-dimension z-scoring statistics. Presence flags and contact values are
/// excluded from scaling, as are dimensions with zero spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub scaled: Vec<bool>,
}

/// True for the dimensions that z-scoring applies to (the MANO blocks).
pub fn scaled_dims() -> Vec<bool> {
    let mut scaled = vec![false; FRAME_WIDTH];
    for side in 0..2 {
        let base = side * HAND_BLOCK;
        for d in base + 1..base + 1 + MANO_DIM {
            scaled[d] = true;
        }
    }
    scaled
}

impl NormStats {
    /// Identity statistics (mean 0, std 1).
    pub fn identity() -> Self {
        NormStats {
            mean: vec![0.0; FRAME_WIDTH],
            std: vec![1.0; FRAME_WIDTH],
            scaled: scaled_dims(),
        }
    }

    /// Fit over the real (unpadded) frames of the given sequences — the
    /// training split only, by contract.
    pub fn fit<'a>(sequences: impl Iterator<Item = &'a MotionSequence>) -> Result<Self> {
        let mut count = 0usize;
        let mut mean = vec![0.0; FRAME_WIDTH];
        let mut m2 = vec![0.0; FRAME_WIDTH];
        for seq in sequences {
            for frame in seq.real_frames() {
                let row = flatten(frame);
                count += 1;
                for d in 0..FRAME_WIDTH {
                    let delta = row[d] - mean[d];
                    mean[d] += delta / count as f64;
                    m2[d] += delta * (row[d] - mean[d]);
                }
            }
        }
        if count == 0 {
            return Err(Error::invalid("NormStats::fit on an empty split"));
        }
        let mut scaled = scaled_dims();
        let std: Vec<f64> = m2
            .iter()
            .map(|&s| libm::sqrt(s / count as f64))
            .collect();
        for d in 0..FRAME_WIDTH {
            // Degenerate dimensions pass through unscaled.
            if std[d] == 0.0 {
                scaled[d] = false;
            }
        }
        Ok(NormStats { mean, std, scaled })
    }
}

/// Z-score the scaled dimensions of a `[*, 166]` matrix.
pub fn normalize_matrix(m: &Tensor, stats: &NormStats) -> Result<Tensor> {
    affine_matrix(m, stats, true)
}

/// Inverse of [`normalize_matrix`].
pub fn denormalize_matrix(m: &Tensor, stats: &NormStats) -> Result<Tensor> {
    affine_matrix(m, stats, false)
}

fn affine_matrix(m: &Tensor, stats: &NormStats, forward: bool) -> Result<Tensor> {
    if m.rank() != 2 || m.cols() != FRAME_WIDTH {
        return Err(Error::invalid(format!(
            "normalization expects [*, {FRAME_WIDTH}], got {:?}",
            m.shape()
        )));
    }
    let mut out = m.clone();
    let cols = m.cols();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let d = i % cols;
        if stats.scaled[d] {
            if forward {
                *v = (*v - stats.mean[d]) / stats.std[d];
            } else {
                *v = *v * stats.std[d] + stats.mean[d];
            }
        }
    }
    Ok(out)
}

/// Normalize a sequence into training space (`[capacity, 166]`).
pub fn normalize(seq: &MotionSequence, stats: &NormStats) -> Tensor {
    normalize_matrix(&seq.to_matrix(), stats).expect("matrix from sequence is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_width_is_166() {
        assert_eq!(FRAME_WIDTH, 166);
        assert_eq!(2 * (1 + 61 + 21), 166);
    }

    #[test]
    fn all_zero_frame_flattens_to_zeros() {
        let v = flatten(&HandFrame::default());
        assert_eq!(v, vec![0.0; 166]);
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        assert!(unflatten(&[0.0; 165]).is_err());
        assert!(unflatten(&[0.0; 166]).is_ok());
    }

    #[test]
    fn absent_hand_blocks_are_zeroed() {
        let mut v = vec![0.0; 166];
        v[0] = 0.2; // below threshold
        v[5] = 9.0; // stray values in an absent block
        let f = unflatten(&v).unwrap();
        assert!(!f.left_present);
        assert_eq!(flatten(&f), vec![0.0; 166]);
    }

    #[test]
    fn contact_map_hand_cases() {
        let skel_joints = [[0.0; 3]; JOINT_COUNT];
        // Joint coincides with an object point.
        let m = contact_map(&skel_joints, &[[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(m.values[0], 1.0);
        // Beyond range.
        let m = contact_map(&skel_joints, &[[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(m.values[0], 0.0);
        // Half range -> 0.5.
        let m = contact_map(&skel_joints, &[[0.05, 0.0, 0.0]]).unwrap();
        assert!((m.values[0] - 0.5).abs() < 1e-12);
        // Empty cloud is an error.
        assert!(contact_map(&skel_joints, &[]).is_err());
    }

    #[test]
    fn normalization_is_affine_inverse() {
        let stats = NormStats {
            mean: vec![3.0; FRAME_WIDTH],
            std: vec![2.0; FRAME_WIDTH],
            scaled: scaled_dims(),
        };
        let mut m = Tensor::zeros(&[2, FRAME_WIDTH]);
        m.data_mut()[1] = 5.0; // a scaled mano dim
        m.data_mut()[0] = 1.0; // presence dim, untouched
        let n = normalize_matrix(&m, &stats).unwrap();
        assert_eq!(n.data()[1], 1.0);
        assert_eq!(n.data()[0], 1.0);
        let back = denormalize_matrix(&n, &stats).unwrap();
        for (a, b) in back.data().iter().zip(m.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn sequence_padding_and_length() {
        let frame = HandFrame::new(None, Some((ManoParams::default(), ContactMap::zeros())));
        let seq = MotionSequence::new(vec![frame; 3], 2, 8).unwrap();
        assert_eq!(seq.length(), 3);
        assert_eq!(seq.capacity(), 8);
        assert!(!seq.frames()[5].right_present);
        assert!(MotionSequence::new(vec![], 0, 8).is_err());
    }
}
