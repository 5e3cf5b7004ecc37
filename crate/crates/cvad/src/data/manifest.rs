//! Dataset manifest: one row per image with split, role and binary label.
//!
//! On disk this is a CSV with the header `path,split,role,label`, preceded by
//! `#`-prefixed metadata lines carrying the dataset root, the generation seed
//! and the generator spec hash, so the whole manifest round-trips through one
//! file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
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

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Dataset(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Id,
    IntraOod,
    InterOod1,
    InterOod2,
    InterOod3,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Id,
        Role::IntraOod,
        Role::InterOod1,
        Role::InterOod2,
        Role::InterOod3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Id => "id",
            Role::IntraOod => "intra_ood",
            Role::InterOod1 => "inter_ood_1",
            Role::InterOod2 => "inter_ood_2",
            Role::InterOod3 => "inter_ood_3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "id" => Ok(Role::Id),
            "intra_ood" => Ok(Role::IntraOod),
            "inter_ood_1" => Ok(Role::InterOod1),
            "inter_ood_2" => Ok(Role::InterOod2),
            "inter_ood_3" => Ok(Role::InterOod3),
            other => Err(Error::Dataset(format!("unknown role `{other}`"))),
        }
    }

    pub fn label(self) -> u8 {
        u8::from(self != Role::Id)
    }

    pub fn is_ood(self) -> bool {
        self != Role::Id
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub split: Split,
    pub role: Role,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub seed: u64,
    pub spec_hash: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub const FILE_NAME: &'static str = "manifest.csv";

    /// Enforce the structural invariants: OOD rows are test-only, ID rows in
    /// train/val carry label 0, and the ID train:val ratio is 80:20 (+-1).
    pub fn validate(&self) -> Result<()> {
        let mut id_train = 0usize;
        let mut id_val = 0usize;
        for e in &self.entries {
            if e.role.is_ood() && e.split != Split::Test {
                return Err(Error::Dataset(format!(
                    "OOD entry `{}` appears in split {}",
                    e.path, e.split
                )));
            }
            if e.label != e.role.label() {
                return Err(Error::Dataset(format!(
                    "entry `{}` label {} contradicts role {}",
                    e.path, e.label, e.role
                )));
            }
            if e.role == Role::Id {
                match e.split {
                    Split::Train => id_train += 1,
                    Split::Val => id_val += 1,
                    Split::Test => {}
                }
            }
        }
        let pool = id_train + id_val;
        if pool > 0 {
            let want_train = (pool as f64 * 0.8).floor() as usize;
            if id_train.abs_diff(want_train) > 1 {
                return Err(Error::Dataset(format!(
                    "ID split {id_train}/{id_val} is not 80:20 of {pool}"
                )));
            }
        }
        Ok(())
    }

    pub fn select(&self, split: Split, role: Option<Role>) -> Vec<&ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| e.split == split && role.is_none_or(|r| e.role == r))
            .collect()
    }

    /// The evaluation set: every test-split row (held-out ID plus all OOD roles).
    pub fn eval_entries(&self) -> Vec<&ManifestEntry> {
        self.select(Split::Test, None)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("# root={}\n", self.root.display()));
        out.push_str(&format!("# seed={}\n", self.seed));
        out.push_str(&format!("# spec_hash={}\n", self.spec_hash));
        out.push_str("path,split,role,label\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{},{}\n", e.path, e.split, e.role, e.label));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut root = None;
        let mut seed = None;
        let mut spec_hash = None;
        let mut entries = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let meta = meta.trim();
                if let Some(v) = meta.strip_prefix("root=") {
                    root = Some(PathBuf::from(v));
                } else if let Some(v) = meta.strip_prefix("seed=") {
                    seed = Some(v.parse::<u64>().map_err(|_| {
                        Error::Dataset(format!("bad seed `{v}` in manifest line {}", lineno + 1))
                    })?);
                } else if let Some(v) = meta.strip_prefix("spec_hash=") {
                    spec_hash = Some(v.to_string());
                }
                continue;
            }
            if !saw_header {
                if line != "path,split,role,label" {
                    return Err(Error::Dataset(format!(
                        "manifest header mismatch: `{line}`"
                    )));
                }
                saw_header = true;
                continue;
            }
            let mut fields = line.split(',');
            let (path_f, split_f, role_f, label_f) =
                match (fields.next(), fields.next(), fields.next(), fields.next()) {
                    (Some(a), Some(b), Some(c), Some(d)) if fields.next().is_none() => (a, b, c, d),
                    _ => {
                        return Err(Error::Dataset(format!(
                            "manifest line {} needs 4 fields: `{line}`",
                            lineno + 1
                        )))
                    }
                };
            entries.push(ManifestEntry {
                path: path_f.to_string(),
                split: Split::parse(split_f)?,
                role: Role::parse(role_f)?,
                label: label_f
                    .parse::<u8>()
                    .map_err(|_| Error::Dataset(format!("bad label `{label_f}`")))?,
            });
        }
        if !saw_header {
            return Err(Error::Dataset("manifest has no header row".to_string()));
        }
        Ok(DatasetManifest {
            root: root.ok_or_else(|| Error::Dataset("manifest missing root".into()))?,
            seed: seed.ok_or_else(|| Error::Dataset("manifest missing seed".into()))?,
            spec_hash: spec_hash
                .ok_or_else(|| Error::Dataset("manifest missing spec_hash".into()))?,
            entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DatasetManifest {
        let mut entries = Vec::new();
        for i in 0..8 {
            entries.push(ManifestEntry {
                path: format!("id/{i:05}.png"),
                split: Split::Train,
                role: Role::Id,
                label: 0,
            });
        }
        for i in 8..10 {
            entries.push(ManifestEntry {
                path: format!("id/{i:05}.png"),
                split: Split::Val,
                role: Role::Id,
                label: 0,
            });
        }
        entries.push(ManifestEntry {
            path: "intra_ood/00000.png".into(),
            split: Split::Test,
            role: Role::IntraOod,
            label: 1,
        });
        DatasetManifest {
            root: PathBuf::from("/tmp/ds"),
            seed: 7,
            spec_hash: "deadbeef".into(),
            entries,
        }
    }

    #[test]
    fn round_trips_losslessly() {
        let m = sample();
        let dir = std::env::temp_dir().join("cvad_manifest_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(DatasetManifest::FILE_NAME);
        m.write(&path).unwrap();
        let back = DatasetManifest::read(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn validate_catches_ood_in_train() {
        let mut m = sample();
        m.entries.push(ManifestEntry {
            path: "intra_ood/00001.png".into(),
            split: Split::Train,
            role: Role::IntraOod,
            label: 1,
        });
        assert!(m.validate().is_err());
    }

    #[test]
    fn validate_checks_ratio() {
        let mut m = sample();
        // Move all val entries to train: 10/0 is not 80:20.
        for e in m.entries.iter_mut() {
            if e.split == Split::Val {
                e.split = Split::Train;
            }
        }
        assert!(m.validate().is_err());
        assert!(sample().validate().is_ok());
    }
}
