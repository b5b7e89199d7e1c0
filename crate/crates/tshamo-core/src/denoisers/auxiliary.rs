//! Auxiliary conditioning: five percentile-sampled frames encoded per
//! condition kind, plus the joint classifier-free-guidance dropout.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::motion::{
    forward_kinematics, project_2d, rasterize_mask, Camera, HandFrame, HandSkeleton,
    MotionSequence, CONTACT_DIM, JOINT_COUNT, MANO_DIM, MASK_CELLS,
};
use crate::{Error, Result};

/// Number of percentile-sampled frames per condition.
pub const AUX_FRAMES: usize = 5;

/// The five auxiliary condition types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxKind {
    ManoParams,
    Joints3d,
    Joints2d,
    HandMasks,
    ManoPlusContact,
}

impl AuxKind {
    pub const ALL: [AuxKind; 5] = [
        AuxKind::ManoParams,
        AuxKind::Joints3d,
        AuxKind::Joints2d,
        AuxKind::HandMasks,
        AuxKind::ManoPlusContact,
    ];

    /// Raw per-frame feature width (both hands concatenated).
    pub fn width(self) -> usize {
        match self {
            AuxKind::ManoParams => 2 * MANO_DIM,                    // 122
            AuxKind::Joints3d => 2 * JOINT_COUNT * 3,               // 126
            AuxKind::Joints2d => 2 * JOINT_COUNT * 2,               // 84
            AuxKind::HandMasks => MASK_CELLS,                       // 256
            AuxKind::ManoPlusContact => 2 * (MANO_DIM + CONTACT_DIM), // 164
        }
    }

    /// Fixed scaling applied at the model input to keep features O(1);
    /// pixel coordinates are the only wide-range kind.
    pub fn input_scale(self) -> f64 {
        match self {
            AuxKind::Joints2d => 1.0 / 320.0,
            _ => 1.0,
        }
    }

    pub fn parse(s: &str) -> Result<AuxKind> {
        match s {
            "mano_params" => Ok(AuxKind::ManoParams),
            "joints_3d" => Ok(AuxKind::Joints3d),
            "joints_2d" => Ok(AuxKind::Joints2d),
            "hand_masks" => Ok(AuxKind::HandMasks),
            "mano_plus_contact" => Ok(AuxKind::ManoPlusContact),
            other => Err(Error::invalid(format!("unknown condition kind `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AuxKind::ManoParams => "mano_params",
            AuxKind::Joints3d => "joints_3d",
            AuxKind::Joints2d => "joints_2d",
            AuxKind::HandMasks => "hand_masks",
            AuxKind::ManoPlusContact => "mano_plus_contact",
        }
    }
}

/// Tagged condition payload: one feature row per sampled frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryCondition {
    pub kind: AuxKind,
    pub frames: [Vec<f64>; AUX_FRAMES],
    pub frame_positions: [usize; AUX_FRAMES],
}

/// Indices of the 0/25/50/75/100th percentile frames of an unpadded length.
pub fn percentile_positions(len: usize) -> [usize; AUX_FRAMES] {
    let mut out = [0; AUX_FRAMES];
    for (i, p) in [0.0, 0.25, 0.5, 0.75, 1.0].iter().enumerate() {
        out[i] = libm::round(p * (len - 1) as f64) as usize;
    }
    out
}

fn hand_features(
    frame: &HandFrame,
    skel: &HandSkeleton,
    camera: &Camera,
    kind: AuxKind,
    out: &mut Vec<f64>,
) -> Result<()> {
    let hands = [
        (frame.left_present, &frame.left_mano, &frame.left_contact),
        (frame.right_present, &frame.right_mano, &frame.right_contact),
    ];
    match kind {
        AuxKind::ManoParams => {
            for (present, mano, _) in hands {
                let mut block = [0.0; MANO_DIM];
                if present {
                    mano.to_slice(&mut block);
                }
                out.extend_from_slice(&block);
            }
        }
        AuxKind::Joints3d => {
            for (present, mano, _) in hands {
                if present {
                    for j in forward_kinematics(mano, skel) {
                        out.extend_from_slice(&j);
                    }
                } else {
                    out.extend_from_slice(&[0.0; JOINT_COUNT * 3]);
                }
            }
        }
        AuxKind::Joints2d => {
            for (present, mano, _) in hands {
                if present {
                    let px = project_2d(&forward_kinematics(mano, skel), camera)?;
                    for p in px {
                        out.extend_from_slice(&p);
                    }
                } else {
                    out.extend_from_slice(&[0.0; JOINT_COUNT * 2]);
                }
            }
        }
        AuxKind::HandMasks => {
            let mut points: Vec<[f64; 2]> = Vec::new();
            for (present, mano, _) in hands {
                if present {
                    points.extend(project_2d(&forward_kinematics(mano, skel), camera)?);
                }
            }
            out.extend(rasterize_mask(&points, camera.width, camera.height)?);
        }
        AuxKind::ManoPlusContact => {
            for (present, mano, contact) in hands {
                let mut block = [0.0; MANO_DIM];
                if present {
                    mano.to_slice(&mut block);
                }
                out.extend_from_slice(&block);
                if present {
                    out.extend_from_slice(&contact.values);
                } else {
                    out.extend_from_slice(&[0.0; CONTACT_DIM]);
                }
            }
        }
    }
    Ok(())
}

/// Encode the auxiliary condition of a raw (unnormalized) sequence: five
/// frames at the percentile positions, features per the condition kind.
pub fn encode_auxiliary(
    seq: &MotionSequence,
    skel: &HandSkeleton,
    camera: &Camera,
    kind: AuxKind,
) -> Result<AuxiliaryCondition> {
    let positions = percentile_positions(seq.length());
    let width = kind.width();
    let mut frames: [Vec<f64>; AUX_FRAMES] = Default::default();
    for (slot, &pos) in positions.iter().enumerate() {
        let mut feat = Vec::with_capacity(width);
        hand_features(&seq.frames()[pos], skel, camera, kind, &mut feat)?;
        debug_assert_eq!(feat.len(), width);
        frames[slot] = feat;
    }
    Ok(AuxiliaryCondition {
        kind,
        frames,
        frame_positions: positions,
    })
}

/// Joint classifier-free-guidance dropout: with probability `p_uncond` both
/// the label and the auxiliary condition are replaced by the null condition.
pub fn cfg_dropout<'a>(
    label: Option<usize>,
    aux: Option<&'a AuxiliaryCondition>,
    p_uncond: f64,
    rng: &mut impl Rng,
) -> (Option<usize>, Option<&'a AuxiliaryCondition>) {
    let u: f64 = rng.random();
    if u < p_uncond {
        (None, None)
    } else {
        (label, aux)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{ContactMap, ManoParams};
    use crate::rng::seeded;
    use alloc::vec;

    #[test]
    fn percentile_positions_match_spec_examples() {
        assert_eq!(percentile_positions(1), [0, 0, 0, 0, 0]);
        assert_eq!(percentile_positions(5), [0, 1, 2, 3, 4]);
        assert_eq!(percentile_positions(30), [0, 7, 15, 22, 29]);
    }

    fn demo_sequence(len: usize) -> MotionSequence {
        let mut frames = Vec::new();
        for i in 0..len {
            let mut mano = ManoParams::default();
            mano.translation = [0.01 * i as f64, 0.0, 0.0];
            frames.push(HandFrame::new(
                None,
                Some((mano, ContactMap::zeros())),
            ));
        }
        MotionSequence::new(frames, 0, 16).unwrap()
    }

    #[test]
    fn widths_match_the_condition_table() {
        let seq = demo_sequence(7);
        let skel = HandSkeleton::default_template();
        let cam = Camera::default_rig();
        let expect = [122, 126, 84, 256, 164];
        for (kind, w) in AuxKind::ALL.iter().zip(expect) {
            let aux = encode_auxiliary(&seq, &skel, &cam, *kind).unwrap();
            assert_eq!(aux.kind.width(), w);
            for f in &aux.frames {
                assert_eq!(f.len(), w);
            }
        }
    }

    #[test]
    fn absent_hand_encodes_as_zeros() {
        let seq = demo_sequence(3);
        let skel = HandSkeleton::default_template();
        let cam = Camera::default_rig();
        let aux = encode_auxiliary(&seq, &skel, &cam, AuxKind::ManoParams).unwrap();
        // Left hand block of every frame is zero.
        for f in &aux.frames {
            assert!(f[..MANO_DIM].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn dropout_extremes() {
        let mut rng = seeded(5);
        let aux_store = encode_auxiliary(
            &demo_sequence(4),
            &HandSkeleton::default_template(),
            &Camera::default_rig(),
            AuxKind::ManoParams,
        )
        .unwrap();
        for _ in 0..50 {
            assert_eq!(cfg_dropout(Some(3), Some(&aux_store), 0.0, &mut rng).0, Some(3));
            let (l, a) = cfg_dropout(Some(3), Some(&aux_store), 1.0, &mut rng);
            assert!(l.is_none() && a.is_none());
        }
    }

    #[test]
    fn dropout_rate_within_binomial_bound() {
        let mut rng = seeded(42);
        let n = 100_000;
        let mut dropped = 0;
        for _ in 0..n {
            if cfg_dropout(Some(0), None, 0.1, &mut rng).0.is_none() {
                dropped += 1;
            }
        }
        let rate = dropped as f64 / n as f64;
        assert!((0.094..=0.106).contains(&rate), "rate {rate}");
    }
}
