//! Read access to a `generate` output directory. Every read is checked
//! against the manifest digests.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use calconf_core::conflict_gen::{DatasetTruth, PublicDataset};
use calconf_core::digest::json_digest;
use calconf_core::{Calendar, ConflictDataset, OrgChart, UserProfile};

use crate::layout;
use crate::manifest::Manifest;

pub struct DataDir {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub manifest_digest: String,
}

impl DataDir {
    pub fn open(root: &Path) -> anyhow::Result<Self> {
        let manifest = Manifest::load(root).with_context(|| format!("opening data directory {}", root.display()))?;
        if manifest.kind != "generate" {
            bail!("{} holds a {:?} manifest, not generated data", root.display(), manifest.kind);
        }
        Ok(DataDir {
            root: root.to_path_buf(),
            manifest_digest: Manifest::digest_of(root)?,
            manifest,
        })
    }

    /// User ids with a dataset file, in sorted order.
    pub fn users(&self) -> Vec<String> {
        self.manifest
            .files
            .keys()
            .filter_map(|k| k.strip_prefix("datasets/")?.strip_suffix(".json"))
            .map(str::to_string)
            .collect()
    }

    pub fn org(&self) -> anyhow::Result<OrgChart> {
        self.manifest.read_verified_json(&self.root, layout::ORG)
    }

    pub fn profiles(&self) -> anyhow::Result<Vec<UserProfile>> {
        self.manifest.read_verified_json(&self.root, layout::PROFILES)
    }

    pub fn calendar(&self, user: &str) -> anyhow::Result<Calendar> {
        self.manifest.read_verified_json(&self.root, &layout::calendar(user))
    }

    pub fn public(&self, user: &str) -> anyhow::Result<PublicDataset> {
        self.manifest.read_verified_json(&self.root, &layout::dataset(user))
    }

    pub fn truth(&self, user: &str) -> anyhow::Result<DatasetTruth> {
        self.manifest.read_verified_json(&self.root, &layout::truth(user))
    }

    /// Public half joined with its truth; fails if the truth belongs to a
    /// different dataset.
    pub fn dataset(&self, user: &str) -> anyhow::Result<ConflictDataset> {
        ConflictDataset::join(self.public(user)?, self.truth(user)?).with_context(|| format!("joining dataset for {user}"))
    }
}

/// Digest recorded in trace headers for the full public dataset of a user.
pub fn public_digest(public: &PublicDataset) -> String {
    json_digest(public)
}
