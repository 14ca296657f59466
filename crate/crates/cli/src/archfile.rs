//! On-disk architecture format and its validating loader.
//!
//! ```json
//! { "n": 4, "q": 2,
//!   "layers": [ {"type": "parallel", "clusters": [[0,1],[2,3]]},
//!               {"type": "unstructured", "edges": [[0,1,0.5],[1,2,0.5]]} ] }
//! ```
//!
//! Violations are reported with JSON-pointer-style paths into the document.

use anyhow::{anyhow, bail, Result};
use serde::{Deserialize, Serialize};

use qdecay_core::arch::{ArchitectureSpec, Layer, WeightedEdge};
use qdecay_core::tensors::SiteLayout;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchFile {
    pub n: usize,
    pub q: usize,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LayerFile {
    Parallel { clusters: Vec<Vec<usize>> },
    Unstructured { edges: Vec<(usize, usize, f64)> },
}

impl ArchFile {
    pub fn from_spec(spec: &ArchitectureSpec) -> Self {
        let q = spec.layout().local_dim(0);
        let layers = spec
            .layers()
            .iter()
            .map(|layer| match layer {
                Layer::Parallel { clusters } => LayerFile::Parallel { clusters: clusters.clone() },
                Layer::Unstructured { edges } => LayerFile::Unstructured {
                    edges: edges.iter().map(|e| (e.i, e.j, e.p)).collect(),
                },
            })
            .collect();
        ArchFile { n: spec.sites(), q, layers }
    }

    /// Validate every invariant, reporting the first violation with a path
    /// into the document, then hand off to the core constructor.
    pub fn into_spec(self) -> Result<ArchitectureSpec> {
        if self.n == 0 {
            bail!("$.n: must be at least 1");
        }
        if self.q < 2 {
            bail!("$.q: local dimension must be at least 2");
        }
        let mut covered = vec![false; self.n];
        for (li, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerFile::Parallel { clusters } => {
                    let mut used = vec![false; self.n];
                    for (ci, cluster) in clusters.iter().enumerate() {
                        if cluster.len() < 2 {
                            bail!("$.layers[{li}].clusters[{ci}]: fewer than 2 sites");
                        }
                        for (si, &s) in cluster.iter().enumerate() {
                            if s >= self.n {
                                bail!("$.layers[{li}].clusters[{ci}][{si}]: site {s} out of range 0..{}", self.n);
                            }
                            if used[s] {
                                bail!("$.layers[{li}].clusters[{ci}][{si}]: site {s} appears in two clusters of the layer");
                            }
                            used[s] = true;
                            covered[s] = true;
                        }
                    }
                }
                LayerFile::Unstructured { edges } => {
                    let mut total = 0.0;
                    for (ei, &(i, j, w)) in edges.iter().enumerate() {
                        if i >= self.n || j >= self.n || i == j {
                            bail!("$.layers[{li}].edges[{ei}]: edge ({i},{j}) out of range or degenerate");
                        }
                        if w < 0.0 {
                            bail!("$.layers[{li}].edges[{ei}]: negative weight {w}");
                        }
                        total += w;
                        covered[i] = true;
                        covered[j] = true;
                    }
                    if total <= 0.0 {
                        bail!("$.layers[{li}].edges: weights sum to zero");
                    }
                }
            }
        }
        if let Some(site) = covered.iter().position(|&c| !c) {
            bail!("$.layers: site {site} is not covered by any cluster or edge");
        }

        let layout = SiteLayout::uniform(self.n, self.q, 1)?;
        let layers = self
            .layers
            .into_iter()
            .map(|layer| match layer {
                LayerFile::Parallel { clusters } => Layer::Parallel { clusters },
                LayerFile::Unstructured { edges } => {
                    let total: f64 = edges.iter().map(|&(_, _, w)| w).sum();
                    Layer::Unstructured {
                        edges: edges
                            .into_iter()
                            .filter(|&(_, _, w)| w > 0.0)
                            .map(|(i, j, w)| WeightedEdge {
                                i,
                                j,
                                p: w / total,
                                measure_tag: None,
                            })
                            .collect(),
                    }
                }
            })
            .collect();
        ArchitectureSpec::new(layout, layers, None).map_err(|e| anyhow!("{e}"))
    }
}

pub fn load(path: &std::path::Path) -> Result<ArchitectureSpec> {
    let text = std::fs::read_to_string(path)?;
    let file: ArchFile = serde_json::from_str(&text)?;
    file.into_spec()
}

pub fn save(spec: &ArchitectureSpec, path: &std::path::Path) -> Result<()> {
    let file = ArchFile::from_spec(spec);
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}
