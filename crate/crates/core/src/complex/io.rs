use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MetricSource, SimplicialComplex};
use crate::{Error, Result};

pub const MESH_SCHEMA_VERSION: u32 = 1;

/// On-disk mesh description.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MeshFile {
    pub schema_version: u32,
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub facets: Vec<Vec<usize>>,
    /// Treat facets as ordered tuples (lattice meshes) instead of vertex sets.
    #[serde(default)]
    pub ordered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<Vec<i8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<Vec<f64>>,
    /// Explicit `[u, v, length]` triples overriding coordinate distances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_lengths: Option<Vec<(usize, usize, f64)>>,
}

impl MeshFile {
    pub fn from_complex(cx: &SimplicialComplex) -> Self {
        let g = cx.geometry();
        let n = cx.n_vertices();
        let vertices = g.coords.clone().unwrap_or_else(|| vec![Vec::new(); n]);
        let edge_lengths = (cx.dim() > 0).then(|| {
            cx.simplices(1)
                .iter()
                .zip(&g.edge_lengths)
                .map(|(e, &l)| (e[0], e[1], l))
                .collect()
        });
        Self {
            schema_version: MESH_SCHEMA_VERSION,
            dim: cx.dim(),
            vertices,
            facets: cx.simplices(cx.dim()).to_vec(),
            ordered: cx.is_ordered(),
            orientation: Some(cx.orientation().to_vec()),
            period: g.period.clone(),
            edge_lengths,
        }
    }

    pub fn into_complex(self) -> Result<SimplicialComplex> {
        if self.schema_version != MESH_SCHEMA_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported mesh schema_version {}",
                self.schema_version
            )));
        }
        let n = self.vertices.len();
        let metric = match self.edge_lengths {
            Some(list) => MetricSource::Lengths(
                list.into_iter()
                    .map(|(u, v, l)| ((u, v), l))
                    .collect::<HashMap<_, _>>(),
            ),
            None => {
                if self.vertices.iter().any(Vec::is_empty) {
                    return Err(Error::Invalid(
                        "mesh needs vertex coordinates or edge_lengths".into(),
                    ));
                }
                MetricSource::Coordinates {
                    coords: self.vertices.clone(),
                    period: self.period.clone(),
                }
            }
        };
        let mut cx = SimplicialComplex::from_facets(
            self.dim,
            n,
            self.facets,
            self.orientation,
            metric,
            self.ordered,
        )?;
        if self.vertices.iter().all(|v| !v.is_empty()) {
            cx.geometry.coords = Some(self.vertices);
            cx.geometry.period = self.period;
        }
        Ok(cx)
    }
}

pub fn save_json(cx: &SimplicialComplex, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&MeshFile::from_complex(cx))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_json(path: &Path) -> Result<SimplicialComplex> {
    let file: MeshFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    file.into_complex()
}

/// Reads a closed triangulated surface in OFF format.
pub fn load_off(path: &Path) -> Result<SimplicialComplex> {
    parse_off(&std::fs::read_to_string(path)?)
}

fn parse_off(text: &str) -> Result<SimplicialComplex> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let bad = |what: &str| Error::Invalid(format!("OFF: {what}"));
    if tokens.next() != Some("OFF") {
        return Err(bad("missing header"));
    }
    let mut int = || -> Result<usize> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("expected integer"))
    };
    let (nv, nf, _ne) = (int()?, int()?, int()?);
    let mut rest = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .skip(4);
    let mut coords = Vec::with_capacity(nv);
    for _ in 0..nv {
        let p: Vec<f64> = (0..3)
            .map(|_| rest.next().and_then(|t| t.parse().ok()))
            .collect::<Option<_>>()
            .ok_or_else(|| bad("bad vertex"))?;
        coords.push(p);
    }
    let mut facets = Vec::with_capacity(nf);
    for _ in 0..nf {
        let k: usize = rest
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("bad face"))?;
        if k != 3 {
            return Err(bad("only triangles are supported"));
        }
        let f: Vec<usize> = (0..3)
            .map(|_| rest.next().and_then(|t| t.parse().ok()))
            .collect::<Option<_>>()
            .ok_or_else(|| bad("bad face"))?;
        facets.push(f);
    }
    SimplicialComplex::from_facets(
        2,
        nv,
        facets,
        None,
        MetricSource::Coordinates {
            coords,
            period: None,
        },
        false,
    )
}

/// Loads `.json` or `.off` by extension.
pub fn load_mesh(path: &Path) -> Result<SimplicialComplex> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("off") | Some("OFF") => load_off(path),
        _ => load_json(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_icosphere, build_torus2, build_torus4};

    #[test]
    fn json_round_trip_preserves_complex() {
        for cx in [
            build_torus2(3).unwrap(),
            build_icosphere(1).unwrap(),
            build_torus4(2).unwrap(),
        ] {
            let file = MeshFile::from_complex(&cx);
            let text = serde_json::to_string(&file).unwrap();
            let back: MeshFile = serde_json::from_str(&text).unwrap();
            let cx2 = back.into_complex().unwrap();
            assert_eq!(cx.counts(), cx2.counts());
            assert_eq!(cx.orientation(), cx2.orientation());
            for (a, b) in cx
                .geometry()
                .edge_lengths
                .iter()
                .zip(&cx2.geometry().edge_lengths)
            {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn off_tetrahedron() {
        let text =
            "OFF\n4 4 6\n1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";
        let cx = parse_off(text).unwrap();
        assert_eq!(cx.counts(), vec![4, 6, 4]);
        assert!(matches!(parse_off("PLY"), Err(Error::Invalid(_))));
    }

    #[test]
    fn schema_version_is_checked() {
        let mut f = MeshFile::from_complex(&build_torus2(3).unwrap());
        f.schema_version = 99;
        assert!(f.into_complex().is_err());
    }
}
