//! Dataset manifest: the CSV index naming every recording, its label, its
//! speaker's gender, and its split assignment. Relative paths resolve
//! against the manifest file's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest row {row}: {message}")]
    Invalid { row: usize, message: String },
}

pub type Result<T> = std::result::Result<T, ManifestError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    #[serde(rename = "phq8_binary")]
    Phq8Binary,
    #[serde(rename = "phq8_score")]
    Phq8Score,
    #[serde(rename = "emotion8")]
    Emotion8,
    #[serde(rename = "bdi2")]
    Bdi2,
}

impl LabelKind {
    /// Largest admissible label value for this kind.
    pub fn max_value(self) -> u32 {
        match self {
            LabelKind::Phq8Binary => 1,
            LabelKind::Phq8Score => 23,
            LabelKind::Emotion8 => 7,
            LabelKind::Bdi2 => 63,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::Phq8Binary => "phq8_binary",
            LabelKind::Phq8Score => "phq8_score",
            LabelKind::Emotion8 => "emotion8",
            LabelKind::Bdi2 => "bdi2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "F")]
    Female,
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "unknown")]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "val")]
    Val,
    #[serde(rename = "test")]
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub wav_path: PathBuf,
    pub transcript_path: PathBuf,
    pub label_kind: LabelKind,
    pub label_value: u32,
    pub gender: Gender,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
    /// Directory relative paths resolve against; the manifest's location.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(rows: Vec<ManifestRow>, base_dir: PathBuf) -> Self {
        Self { rows, base_dir }
    }

    pub fn rows_for_split(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Unique ids and every label within its kind's range.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (idx, row) in self.rows.iter().enumerate() {
            if row.id.is_empty() {
                return Err(ManifestError::Invalid {
                    row: idx,
                    message: "empty id".to_string(),
                });
            }
            if !seen.insert(row.id.as_str()) {
                return Err(ManifestError::Invalid {
                    row: idx,
                    message: format!("duplicate id {:?}", row.id),
                });
            }
            let max = row.label_kind.max_value();
            if row.label_value > max {
                return Err(ManifestError::Invalid {
                    row: idx,
                    message: format!(
                        "label {} out of range 0..={max} for {}",
                        row.label_value,
                        row.label_kind.as_str()
                    ),
                });
            }
        }
        Ok(())
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row: ManifestRow = record?;
        rows.push(row);
    }
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest = DatasetManifest::new(rows, base_dir);
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    manifest.validate()?;
    let mut writer = csv::Writer::from_path(path)?;
    for row in &manifest.rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(ManifestError::Io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> Vec<ManifestRow> {
        vec![
            ManifestRow {
                id: "p000".to_string(),
                wav_path: PathBuf::from("wav/p000.wav"),
                transcript_path: PathBuf::from("tsv/p000.tsv"),
                label_kind: LabelKind::Phq8Binary,
                label_value: 0,
                gender: Gender::Female,
                split: Split::Train,
            },
            ManifestRow {
                id: "p001".to_string(),
                wav_path: PathBuf::from("wav/p001.wav"),
                transcript_path: PathBuf::from("tsv/p001.tsv"),
                label_kind: LabelKind::Phq8Binary,
                label_value: 1,
                gender: Gender::Male,
                split: Split::Val,
            },
        ]
    }

    #[test]
    fn round_trips_through_csv() {
        let dir = std::env::temp_dir().join("sdr-manifest-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("round_trip.csv");
        let manifest = DatasetManifest::new(sample_rows(), dir.clone());
        write_manifest(&path, &manifest).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.rows, manifest.rows);
        assert_eq!(back.base_dir, dir);
    }

    #[test]
    fn header_and_enum_spellings_are_stable() {
        let dir = std::env::temp_dir().join("sdr-manifest-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("spelling.csv");
        write_manifest(&path, &DatasetManifest::new(sample_rows(), dir)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "id,wav_path,transcript_path,label_kind,label_value,gender,split"
        );
        assert!(text.contains("phq8_binary"));
        assert!(text.contains(",F,train"));
        assert!(text.contains(",M,val"));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut rows = sample_rows();
        rows[1].id = rows[0].id.clone();
        let manifest = DatasetManifest::new(rows, PathBuf::from("."));
        assert!(matches!(
            manifest.validate(),
            Err(ManifestError::Invalid { row: 1, .. })
        ));
    }

    #[test]
    fn label_ranges_are_enforced_per_kind() {
        let mut rows = sample_rows();
        rows[0].label_value = 2;
        let manifest = DatasetManifest::new(rows, PathBuf::from("."));
        assert!(manifest.validate().is_err());

        let mut rows = sample_rows();
        rows[0].label_kind = LabelKind::Phq8Score;
        rows[0].label_value = 23;
        assert!(DatasetManifest::new(rows, PathBuf::from(".")).validate().is_ok());

        let mut rows = sample_rows();
        rows[0].label_kind = LabelKind::Bdi2;
        rows[0].label_value = 64;
        assert!(DatasetManifest::new(rows, PathBuf::from(".")).validate().is_err());
    }

    #[test]
    fn relative_paths_resolve_against_base_dir() {
        let manifest = DatasetManifest::new(sample_rows(), PathBuf::from("/data/corpus"));
        assert_eq!(
            manifest.resolve(Path::new("wav/p000.wav")),
            PathBuf::from("/data/corpus/wav/p000.wav")
        );
        assert_eq!(
            manifest.resolve(Path::new("/abs/x.wav")),
            PathBuf::from("/abs/x.wav")
        );
    }

    #[test]
    fn split_filter_selects_matching_rows() {
        let manifest = DatasetManifest::new(sample_rows(), PathBuf::from("."));
        let train: Vec<_> = manifest.rows_for_split(Split::Train).collect();
        assert_eq!(train.len(), 1);
        assert_eq!(train[0].id, "p000");
        assert_eq!(manifest.rows_for_split(Split::Test).count(), 0);
    }
}
