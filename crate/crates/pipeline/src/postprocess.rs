//! Prediction cleanup after inference.
//!
//! Deletes spurious binary structures from a reconstruction: components
//! below a volume threshold and components overlapping the defective
//! skull. The published pipeline's sentence conjoins the two clauses
//! ambiguously; the default deletes on either condition (a defect
//! prediction should never overlap the skull regardless of size, and
//! floaters should go regardless of overlap), with the conjunctive reading
//! available behind [`PostprocessRule::SizeAndOverlap`].

use crate::components::{connected_components, Connectivity};
use craniaug_core::volume::{BinaryMask, VolumeError};
use serde::{Deserialize, Serialize};

/// Which components to delete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostprocessRule {
    /// Delete if (size < min_volume) OR (overlaps the defective skull).
    #[default]
    SizeOrOverlap,
    /// Delete only if both hold.
    SizeAndOverlap,
}

impl std::str::FromStr for PostprocessRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "or" | "size_or_overlap" => Ok(PostprocessRule::SizeOrOverlap),
            "and" | "size_and_overlap" => Ok(PostprocessRule::SizeAndOverlap),
            _ => Err(format!("postprocess rule must be or|and, got {s:?}")),
        }
    }
}

/// Remove unwanted connected components from a prediction.
pub fn postprocess(
    pred: &BinaryMask,
    defective_skull: &BinaryMask,
    min_volume: usize,
    connectivity: Connectivity,
    rule: PostprocessRule,
) -> Result<BinaryMask, VolumeError> {
    if pred.dims() != defective_skull.dims() {
        return Err(VolumeError::ShapeMismatch {
            a: pred.dims(),
            b: defective_skull.dims(),
        });
    }
    let labels = connected_components(pred, connectivity);
    let mut overlaps = vec![false; labels.count()];
    for (i, &l) in labels.labels.iter().enumerate() {
        if l != 0 && defective_skull.data()[i] != 0.0 {
            overlaps[l as usize - 1] = true;
        }
    }
    let keep: Vec<bool> = labels
        .sizes
        .iter()
        .zip(&overlaps)
        .map(|(&size, &overlap)| {
            let small = size < min_volume;
            let delete = match rule {
                PostprocessRule::SizeOrOverlap => small || overlap,
                PostprocessRule::SizeAndOverlap => small && overlap,
            };
            !delete
        })
        .collect();

    let mut out = BinaryMask::zeros(pred.dims(), pred.spacing())?;
    let (nx, ny, nz) = pred.dims();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let l = labels.labels[x + nx * (y + ny * z)];
                if l != 0 && keep[l as usize - 1] {
                    out.set_voxel(x, y, z, true);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use craniaug_core::synth;

    #[test]
    fn large_clean_component_is_kept() {
        let pred = synth::ball((16, 16, 16), (8.0, 8.0, 8.0), 4.0);
        let skull = BinaryMask::zeros((16, 16, 16), (1.0, 1.0, 1.0)).unwrap();
        let out = postprocess(
            &pred,
            &skull,
            10,
            Connectivity::TwentySix,
            Default::default(),
        )
        .unwrap();
        assert_eq!(out, pred);
    }

    #[test]
    fn full_overlap_empties_prediction() {
        let skull = synth::ball((16, 16, 16), (8.0, 8.0, 8.0), 4.0);
        let out = postprocess(
            &skull,
            &skull,
            0,
            Connectivity::TwentySix,
            Default::default(),
        )
        .unwrap();
        assert_eq!(out.foreground_count(), 0);
    }

    #[test]
    fn floater_removed_body_kept() {
        // One 3-voxel floater plus one large body, min_volume 10.
        let mut pred = synth::ball((24, 24, 24), (12.0, 12.0, 12.0), 5.0);
        let body = pred.foreground_count();
        assert!(body > 400);
        pred.set_voxel(1, 1, 1, true);
        pred.set_voxel(2, 1, 1, true);
        pred.set_voxel(3, 1, 1, true);
        let skull = BinaryMask::zeros((24, 24, 24), (1.0, 1.0, 1.0)).unwrap();
        let out = postprocess(
            &pred,
            &skull,
            10,
            Connectivity::TwentySix,
            Default::default(),
        )
        .unwrap();
        assert_eq!(out.foreground_count(), body);
        assert!(!out.is_set(1, 1, 1));
    }

    #[test]
    fn and_rule_spares_large_overlapping_components() {
        let pred = synth::ball((16, 16, 16), (8.0, 8.0, 8.0), 4.0);
        let mut skull = BinaryMask::zeros((16, 16, 16), (1.0, 1.0, 1.0)).unwrap();
        skull.set_voxel(8, 8, 8, true);
        let or = postprocess(
            &pred,
            &skull,
            10,
            Connectivity::TwentySix,
            PostprocessRule::SizeOrOverlap,
        )
        .unwrap();
        assert_eq!(or.foreground_count(), 0, "overlapping component deleted");
        let and = postprocess(
            &pred,
            &skull,
            10,
            Connectivity::TwentySix,
            PostprocessRule::SizeAndOverlap,
        )
        .unwrap();
        assert_eq!(and, pred, "large component survives the conjunctive rule");
    }

    #[test]
    fn output_is_subset_and_idempotent() {
        let mut pred = synth::ball((20, 20, 20), (10.0, 10.0, 10.0), 4.0);
        pred.set_voxel(0, 0, 0, true);
        let skull = synth::ball((20, 20, 20), (4.0, 4.0, 4.0), 2.0);
        let once = postprocess(&pred, &skull, 5, Connectivity::Six, Default::default()).unwrap();
        for (o, p) in once.data().iter().zip(pred.data()) {
            assert!(o <= p);
        }
        let twice = postprocess(&once, &skull, 5, Connectivity::Six, Default::default()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn dims_mismatch_rejected() {
        let a = BinaryMask::zeros((4, 4, 4), (1.0, 1.0, 1.0)).unwrap();
        let b = BinaryMask::zeros((4, 4, 5), (1.0, 1.0, 1.0)).unwrap();
        assert!(postprocess(&a, &b, 1, Connectivity::Six, Default::default()).is_err());
    }
}
