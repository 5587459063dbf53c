//! Labeled clip collections: slicing persisted feature matrices into
//! fixed-length sequences, assembling time-major batches, and encoding
//! one-hot targets. Every clip inherits its recording's label.

use std::path::Path;

use ndarray::{Array2, Array3};
use thiserror::Error;

use crate::dsp::{read_features, DspError, FeatureMatrix};
use crate::manifest::{DatasetManifest, Split};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("feature error: {0}")]
    Feature(#[from] DspError),
    #[error("label out of range: {0}")]
    Label(String),
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error("empty dataset: {0}")]
    Empty(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// A set of equal-length clip sequences with one label and one source
/// recording id per clip.
#[derive(Debug, Clone)]
pub struct ClipSet<S: Scalar> {
    pub frames_per_clip: usize,
    pub feature_dim: usize,
    /// One `(frames_per_clip, feature_dim)` matrix per clip.
    pub clips: Vec<Array2<S>>,
    pub labels: Vec<u32>,
    /// Recording id each clip was cut from, parallel to `clips`.
    pub participants: Vec<String>,
}

impl<S: Scalar> ClipSet<S> {
    pub fn new(frames_per_clip: usize, feature_dim: usize) -> Self {
        Self {
            frames_per_clip,
            feature_dim,
            clips: Vec::new(),
            labels: Vec::new(),
            participants: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// Appends every clip of a feature matrix under one label.
    pub fn push_features(&mut self, features: &FeatureMatrix<S>, label: u32) -> Result<()> {
        if features.frames_per_clip != self.frames_per_clip {
            return Err(DataError::Inconsistent(format!(
                "clip length {} vs set clip length {}",
                features.frames_per_clip, self.frames_per_clip
            )));
        }
        if features.data.ncols() != self.feature_dim {
            return Err(DataError::Inconsistent(format!(
                "feature width {} vs set width {}",
                features.data.ncols(),
                self.feature_dim
            )));
        }
        for c in 0..features.n_clips() {
            let start = c * self.frames_per_clip;
            let clip = features
                .data
                .slice(ndarray::s![start..start + self.frames_per_clip, ..])
                .to_owned();
            self.clips.push(clip);
            self.labels.push(label);
            self.participants.push(features.source_id.clone());
        }
        Ok(())
    }

    /// Stacks the selected clips into a time-major `(T, batch, features)`
    /// block in index order.
    pub fn batch(&self, indices: &[usize]) -> Array3<S> {
        Array3::from_shape_fn(
            (self.frames_per_clip, indices.len(), self.feature_dim),
            |(t, b, f)| self.clips[indices[b]][(t, f)],
        )
    }

    /// One-hot targets for the selected clips; labels must fall in 0..k.
    pub fn one_hot(&self, indices: &[usize], k: usize) -> Result<Array2<S>> {
        let mut out = Array2::zeros((indices.len(), k));
        for (row, &idx) in indices.iter().enumerate() {
            let label = self.labels[idx] as usize;
            if label >= k {
                return Err(DataError::Label(format!(
                    "label {label} outside 0..{k} for clip {idx}"
                )));
            }
            out[(row, label)] = S::one();
        }
        Ok(out)
    }

    /// Largest label present plus one; 0 for an empty set.
    pub fn observed_classes(&self) -> usize {
        self.labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0)
    }
}

/// Loads `<features_dir>/<id>.fmx` for every manifest row in a split.
pub fn load_split<S: Scalar>(
    manifest: &DatasetManifest,
    features_dir: &Path,
    split: Split,
) -> Result<ClipSet<S>> {
    let mut set: Option<ClipSet<S>> = None;
    for row in manifest.rows_for_split(split) {
        let path = features_dir.join(format!("{}.fmx", row.id));
        let features = read_features::<S>(&path)?;
        let set = set.get_or_insert_with(|| {
            ClipSet::new(features.frames_per_clip, features.data.ncols())
        });
        set.push_features(&features, row.label_value)?;
    }
    set.ok_or_else(|| {
        DataError::Empty(format!("no {} rows in the manifest", split.as_str()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FrameSpec;

    fn fake_features(source: &str, n_clips: usize, fill: f64) -> FeatureMatrix<f64> {
        let fpc = 3;
        let dim = 4;
        let data = Array2::from_shape_fn((n_clips * fpc, dim), |(r, c)| {
            fill + r as f64 * 10.0 + c as f64
        });
        FeatureMatrix {
            data,
            clips: (0..n_clips as u32).map(|c| (0, c)).collect(),
            frames_per_clip: fpc,
            source_id: source.to_string(),
            spec: FrameSpec::default(),
            sample_rate_hz: 16_000,
        }
    }

    #[test]
    fn push_splits_rows_into_clips() {
        let mut set = ClipSet::<f64>::new(3, 4);
        set.push_features(&fake_features("a", 2, 0.0), 1).unwrap();
        set.push_features(&fake_features("b", 1, 0.5), 0).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.labels, vec![1, 1, 0]);
        assert_eq!(set.participants, vec!["a", "a", "b"]);
        // Second clip of "a" starts at row 3: value 0.0 + 30.0.
        assert_eq!(set.clips[1][(0, 0)], 30.0);
    }

    #[test]
    fn batches_are_time_major() {
        let mut set = ClipSet::<f64>::new(3, 4);
        set.push_features(&fake_features("a", 2, 0.0), 0).unwrap();
        let batch = set.batch(&[1, 0]);
        assert_eq!(batch.dim(), (3, 2, 4));
        // batch[(t, b, f)] = clip[indices[b]] row t.
        assert_eq!(batch[(0, 0, 0)], set.clips[1][(0, 0)]);
        assert_eq!(batch[(2, 1, 3)], set.clips[0][(2, 3)]);
    }

    #[test]
    fn one_hot_places_single_ones() {
        let mut set = ClipSet::<f64>::new(3, 4);
        set.push_features(&fake_features("a", 1, 0.0), 1).unwrap();
        set.push_features(&fake_features("b", 1, 0.0), 0).unwrap();
        let t = set.one_hot(&[0, 1], 2).unwrap();
        assert_eq!(t.row(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(t.row(1).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn out_of_range_label_is_reported() {
        let mut set = ClipSet::<f64>::new(3, 4);
        set.push_features(&fake_features("a", 1, 0.0), 5).unwrap();
        assert!(matches!(set.one_hot(&[0], 2), Err(DataError::Label(_))));
    }

    #[test]
    fn mismatched_clip_length_is_rejected() {
        let mut set = ClipSet::<f64>::new(5, 4);
        assert!(matches!(
            set.push_features(&fake_features("a", 1, 0.0), 0),
            Err(DataError::Inconsistent(_))
        ));
    }
}
