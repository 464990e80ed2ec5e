//! In-memory version store: lineages of immutable network snapshots.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use nmx_core::model::Network;
use nmx_core::versioning::{apply_diff, diff, version_id, NetworkDiff};

use crate::error::ApiError;

/// Where an extracted lineage came from.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Origin {
    pub lineage: String,
    pub version: String,
}

#[derive(Debug)]
struct LineageState {
    history: Vec<String>,
    snapshots: HashMap<String, Arc<Network>>,
}

#[derive(Debug)]
pub struct Lineage {
    pub id: String,
    pub origin: Option<Origin>,
    state: RwLock<LineageState>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct LineageSummary {
    pub id: String,
    pub title: String,
    pub version: String,
    pub versions: usize,
    pub nodes: usize,
    pub arcs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

impl Lineage {
    fn new(id: String, net: Network, origin: Option<Origin>) -> Self {
        let v = version_id(&net);
        Lineage {
            id,
            origin,
            state: RwLock::new(LineageState {
                history: vec![v.clone()],
                snapshots: HashMap::from([(v, Arc::new(net))]),
            }),
        }
    }

    /// Current version id and snapshot.
    pub fn head(&self) -> (String, Arc<Network>) {
        let s = self.state.read().unwrap();
        let v = s.history.last().unwrap().clone();
        let net = s.snapshots[&v].clone();
        (v, net)
    }

    /// The requested version, or the head when `version` is `None`.
    pub fn snapshot(&self, version: Option<&str>) -> Result<(String, Arc<Network>), ApiError> {
        match version {
            None => Ok(self.head()),
            Some(v) => {
                let s = self.state.read().unwrap();
                let net = s
                    .snapshots
                    .get(v)
                    .ok_or_else(|| ApiError::not_found(format!("version `{v}` of `{}`", self.id)))?;
                Ok((v.to_string(), net.clone()))
            }
        }
    }

    pub fn history(&self) -> Vec<String> {
        self.state.read().unwrap().history.clone()
    }

    /// Applies `edit` to the head as a diff, provided `base` is still the head.
    /// Writers on one lineage are serialized by the state lock.
    pub fn commit(
        &self,
        base: &str,
        edit: impl FnOnce(&Network) -> nmx_core::Result<Network>,
    ) -> Result<(NetworkDiff, Arc<Network>), ApiError> {
        let mut s = self.state.write().unwrap();
        let head = s.history.last().unwrap().clone();
        if head != base {
            return Err(ApiError::conflict(base, &head));
        }
        let current = s.snapshots[&head].clone();
        let edited = edit(&current)?;
        let d = diff(&current, &edited);
        let next = Arc::new(apply_diff(&current, &d)?);
        if !d.is_empty() {
            s.history.push(d.target.clone());
            s.snapshots.insert(d.target.clone(), next.clone());
        }
        Ok((d, next))
    }

    pub fn summary(&self) -> LineageSummary {
        let (version, net) = self.head();
        LineageSummary {
            id: self.id.clone(),
            title: net.title().to_string(),
            version,
            versions: self.state.read().unwrap().history.len(),
            nodes: net.len(),
            arcs: net.arc_count(),
            origin: self.origin.clone(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Workbench {
    lineages: RwLock<BTreeMap<String, Arc<Lineage>>>,
    next: AtomicU64,
}

impl Workbench {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, net: Network, origin: Option<Origin>) -> Arc<Lineage> {
        let id = format!("n{}", self.next.fetch_add(1, Ordering::Relaxed) + 1);
        let lineage = Arc::new(Lineage::new(id.clone(), net, origin));
        self.lineages.write().unwrap().insert(id, lineage.clone());
        lineage
    }

    pub fn get(&self, id: &str) -> Result<Arc<Lineage>, ApiError> {
        self.lineages
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("network `{id}`")))
    }

    pub fn list(&self) -> Vec<LineageSummary> {
        let all: Vec<Arc<Lineage>> = self.lineages.read().unwrap().values().cloned().collect();
        all.iter().map(|l| l.summary()).collect()
    }
}
