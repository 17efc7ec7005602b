//! Dataset file persistence on top of the shared container format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{DuetError, Result};
use crate::motion::sequence::{InteractionPair, MotionLayout, MotionSequence};
use crate::motion::skeleton::SkeletonSpec;

const KIND: &str = "dataset";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClipMeta {
    text: String,
    contact: bool,
    frames: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetMeta {
    layout: MotionLayout,
    skeleton: SkeletonSpec,
    skeleton_hash: String,
    clips: Vec<ClipMeta>,
}

/// A loaded dataset: clips plus the skeleton/layout they were generated for.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub pairs: Vec<InteractionPair>,
    pub skeleton: SkeletonSpec,
    pub layout: MotionLayout,
}

impl Dataset {
    pub fn contact_fraction(&self) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        self.pairs.iter().filter(|p| p.contact_annotated).count() as f64
            / self.pairs.len() as f64
    }
}

pub fn save_dataset(
    path: impl AsRef<Path>,
    pairs: &[InteractionPair],
    skeleton: &SkeletonSpec,
    layout: MotionLayout,
) -> Result<()> {
    let clips: Vec<ClipMeta> = pairs
        .iter()
        .map(|p| {
            if p.layout() != layout {
                return Err(DuetError::LayoutMismatch(format!(
                    "clip layout {:?} vs dataset layout {:?}",
                    p.layout(),
                    layout
                )));
            }
            Ok(ClipMeta {
                text: p.text.clone(),
                contact: p.contact_annotated,
                frames: p.frames(),
            })
        })
        .collect::<Result<_>>()?;
    let meta = DatasetMeta {
        layout,
        skeleton: skeleton.clone(),
        skeleton_hash: format!("{:016x}", skeleton.content_hash()),
        clips,
    };
    let mut c = Container::new(KIND, serde_json::to_value(&meta)?);
    for (i, pair) in pairs.iter().enumerate() {
        c.insert(
            format!("clip{i:06}.a"),
            vec![pair.frames(), layout.dim()],
            pair.person_a.data.clone(),
        );
        c.insert(
            format!("clip{i:06}.b"),
            vec![pair.frames(), layout.dim()],
            pair.person_b.data.clone(),
        );
    }
    c.save(path)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let c = Container::load(path)?;
    if c.kind != KIND {
        return Err(DuetError::FormatVersionMismatch(format!(
            "expected a dataset file, found kind '{}'",
            c.kind
        )));
    }
    let meta: DatasetMeta = serde_json::from_value(c.meta.clone())
        .map_err(|e| DuetError::FormatVersionMismatch(format!("bad dataset metadata: {e}")))?;
    meta.skeleton.validate()?;
    let mut pairs = Vec::with_capacity(meta.clips.len());
    for (i, clip) in meta.clips.iter().enumerate() {
        let (shape_a, data_a) = c.get(&format!("clip{i:06}.a"))?;
        let (shape_b, data_b) = c.get(&format!("clip{i:06}.b"))?;
        let want = [clip.frames, meta.layout.dim()];
        if shape_a != want || shape_b != want {
            return Err(DuetError::FormatVersionMismatch(format!(
                "clip {i} shape {shape_a:?}/{shape_b:?}, expected {want:?}"
            )));
        }
        let a = MotionSequence::new(meta.layout, clip.frames, data_a.to_vec())?;
        let b = MotionSequence::new(meta.layout, clip.frames, data_b.to_vec())?;
        pairs.push(InteractionPair::new(a, b, clip.text.clone(), clip.contact)?);
    }
    Ok(Dataset {
        pairs,
        skeleton: meta.skeleton,
        layout: meta.layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_dataset;

    #[test]
    fn save_load_round_trip() {
        let skel = SkeletonSpec::toy_eight_joint();
        let layout = MotionLayout::pos_vel_rot(8);
        let pairs = synth_dataset(5, 6, &skel, layout, (16, 24)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.duet");
        save_dataset(&path, &pairs, &skel, layout).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.pairs, pairs);
        assert_eq!(back.layout, layout);
        assert_eq!(back.skeleton, skel);
    }

    #[test]
    fn empty_dataset_round_trips() {
        let skel = SkeletonSpec::toy_eight_joint();
        let layout = MotionLayout::pos_vel_rot(8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.duet");
        save_dataset(&path, &[], &skel, layout).unwrap();
        let back = load_dataset(&path).unwrap();
        assert!(back.pairs.is_empty());
    }

    #[test]
    fn truncation_never_yields_partial_data() {
        let skel = SkeletonSpec::toy_eight_joint();
        let layout = MotionLayout::pos_vel_rot(8);
        let pairs = synth_dataset(7, 2, &skel, layout, (16, 16)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.duet");
        save_dataset(&path, &pairs, &skel, layout).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.duet");
        std::fs::write(&cut, &bytes[..bytes.len() - 17]).unwrap();
        match load_dataset(&cut) {
            Err(DuetError::FormatVersionMismatch(_)) | Err(DuetError::Io(_)) => {}
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
