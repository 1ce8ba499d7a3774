//! Website resource manifests: the replayable description of one page load.
//!
//! A manifest lists every resource of a page with its size, browser priority
//! and an optional request trigger. Resources without a trigger are requested
//! when the root document completes; `requested_after` chains model discovery
//! depth (a script found by another script, an image inserted by a script).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapping::{ChromiumPriority, ResourceType};

/// Version written to and accepted from manifest files.
pub const SCHEMA_VERSION: u32 = 1;

/// One web resource of a page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceDescriptor {
    pub resource_id: String,
    pub url_path: String,
    pub rtype: ResourceType,
    pub size_bytes: u64,
    pub chromium_priority: ChromiumPriority,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_after: Option<String>,
}

/// A validated page manifest. List order is preserved: it defines the request
/// order among resources that share a trigger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WebsiteManifest {
    site_name: String,
    resources: Vec<ResourceDescriptor>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    UnsupportedSchemaVersion(u32),
    #[error("manifest has no resources")]
    Empty,
    #[error("duplicate resource_id {0:?}")]
    DuplicateResourceId(String),
    #[error("resource {0:?} has size_bytes 0")]
    ZeroSize(String),
    #[error("resource {resource_id:?} is requested after unknown resource {requested_after:?}")]
    UnknownTrigger {
        resource_id: String,
        requested_after: String,
    },
    #[error("requested_after cycle through resource {0:?}")]
    DependencyCycle(String),
    #[error("expected exactly one root document (rtype document, no requested_after), found {0}")]
    RootDocumentCount(usize),
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    schema_version: u32,
    site_name: String,
    resources: Vec<ResourceDescriptor>,
}

impl WebsiteManifest {
    /// Validate and build a manifest. All invariants are checked here; every
    /// other constructor funnels through this one.
    pub fn new(
        site_name: impl Into<String>,
        resources: Vec<ResourceDescriptor>,
    ) -> Result<Self, ManifestError> {
        if resources.is_empty() {
            return Err(ManifestError::Empty);
        }

        let mut ids = BTreeSet::new();
        for r in &resources {
            if !ids.insert(r.resource_id.as_str()) {
                return Err(ManifestError::DuplicateResourceId(r.resource_id.clone()));
            }
            if r.size_bytes == 0 {
                return Err(ManifestError::ZeroSize(r.resource_id.clone()));
            }
        }

        let index: HashMap<&str, usize> = resources
            .iter()
            .enumerate()
            .map(|(i, r)| (r.resource_id.as_str(), i))
            .collect();
        for r in &resources {
            if let Some(after) = &r.requested_after {
                if !index.contains_key(after.as_str()) {
                    return Err(ManifestError::UnknownTrigger {
                        resource_id: r.resource_id.clone(),
                        requested_after: after.clone(),
                    });
                }
            }
        }

        // Each resource has at most one trigger, so the trigger graph is a
        // forest of chains; walk each chain with a visit mark.
        let mut state = vec![0u8; resources.len()]; // 0 unvisited, 1 in progress, 2 done
        for start in 0..resources.len() {
            if state[start] != 0 {
                continue;
            }
            let mut chain = Vec::new();
            let mut cur = start;
            loop {
                if state[cur] == 1 {
                    return Err(ManifestError::DependencyCycle(
                        resources[cur].resource_id.clone(),
                    ));
                }
                if state[cur] == 2 {
                    break;
                }
                state[cur] = 1;
                chain.push(cur);
                match &resources[cur].requested_after {
                    Some(after) => cur = index[after.as_str()],
                    None => break,
                }
            }
            for i in chain {
                state[i] = 2;
            }
        }

        let roots = resources
            .iter()
            .filter(|r| r.rtype == ResourceType::Document && r.requested_after.is_none())
            .count();
        if roots != 1 {
            return Err(ManifestError::RootDocumentCount(roots));
        }

        Ok(Self {
            site_name: site_name.into(),
            resources,
        })
    }

    pub fn site_name(&self) -> &str {
        &self.site_name
    }

    pub fn resources(&self) -> &[ResourceDescriptor] {
        &self.resources
    }

    /// The root document: the unique document resource without a trigger.
    pub fn root(&self) -> &ResourceDescriptor {
        self.resources
            .iter()
            .find(|r| r.rtype == ResourceType::Document && r.requested_after.is_none())
            .expect("validated manifest has a root")
    }

    pub fn total_bytes(&self) -> u64 {
        self.resources.iter().map(|r| r.size_bytes).sum()
    }

    /// Aggregate count and bytes per (priority, type) cell. All 25 cells are
    /// present; untouched ones hold zeros.
    pub fn summarize_by_priority(&self) -> BTreeMap<(ChromiumPriority, ResourceType), CellStats> {
        let mut table = BTreeMap::new();
        for p in ChromiumPriority::ALL {
            for t in ResourceType::ALL {
                table.insert((p, t), CellStats::default());
            }
        }
        for r in &self.resources {
            let cell = table
                .get_mut(&(r.chromium_priority, r.rtype))
                .expect("table covers the full domain");
            cell.count += 1;
            cell.total_bytes += r.size_bytes;
        }
        table
    }

    /// Aggregate count and bytes per resource type; the priority-marginal of
    /// [`summarize_by_priority`](Self::summarize_by_priority).
    pub fn summarize_by_type(&self) -> BTreeMap<ResourceType, CellStats> {
        let mut table = BTreeMap::new();
        for t in ResourceType::ALL {
            table.insert(t, CellStats::default());
        }
        for r in &self.resources {
            let cell = table.get_mut(&r.rtype).expect("table covers the full domain");
            cell.count += 1;
            cell.total_bytes += r.size_bytes;
        }
        table
    }

    /// Pooled mean size over script and image resources, floor-divided and at
    /// least 1. `None` when the manifest has neither scripts nor images.
    pub fn default_sam_threshold(&self) -> Option<u64> {
        let pool: Vec<u64> = self
            .resources
            .iter()
            .filter(|r| matches!(r.rtype, ResourceType::Script | ResourceType::Image))
            .map(|r| r.size_bytes)
            .collect();
        if pool.is_empty() {
            return None;
        }
        let mean = pool.iter().sum::<u64>() / pool.len() as u64;
        Some(mean.max(1))
    }

    pub fn to_json_string(&self) -> String {
        let file = ManifestFile {
            schema_version: SCHEMA_VERSION,
            site_name: self.site_name.clone(),
            resources: self.resources.clone(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("manifest serializes");
        out.push('\n');
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Load and validate a manifest file.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<WebsiteManifest, ManifestError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&bytes)
}

/// Parse a manifest from raw file content. Identical bytes yield identical
/// manifests.
pub fn parse_manifest(bytes: &[u8]) -> Result<WebsiteManifest, ManifestError> {
    let file: ManifestFile = serde_json::from_slice(bytes)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ManifestError::UnsupportedSchemaVersion(file.schema_version));
    }
    WebsiteManifest::new(file.site_name, file.resources)
}

/// Count and byte total of one summary cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellStats {
    pub count: u64,
    pub total_bytes: u64,
}

/// CSV rendering of the per-(priority, type) summary.
pub fn priority_summary_csv(manifest: &WebsiteManifest) -> String {
    let mut out = String::from("priority,type,count,total_bytes\n");
    for ((p, t), stats) in manifest.summarize_by_priority() {
        out.push_str(&format!("{p},{t},{},{}\n", stats.count, stats.total_bytes));
    }
    out
}

/// CSV rendering of the per-type summary.
pub fn type_summary_csv(manifest: &WebsiteManifest) -> String {
    let mut out = String::from("type,count,total_bytes\n");
    for (t, stats) in manifest.summarize_by_type() {
        out.push_str(&format!("{t},{},{}\n", stats.count, stats.total_bytes));
    }
    out
}
