//! Oriented simplicial complexes representing closed oriented manifolds.
//!
//! Simplices are stored as *ordered* vertex tuples. For ordinary simplicial
//! complexes the tuples are sorted by vertex id; for the periodic lattice
//! builders they follow the lattice order, which also covers the coarse
//! `n = 2` tori where distinct simplices share a vertex set. Faces are
//! obtained by deleting one entry, so every simplex is identified by its
//! ordered tuple and coboundaries square to zero by construction.

mod builders;
mod cohomology;
mod io;

pub use builders::{
    build_circle, build_cp2_kuhnel, build_icosphere, build_torus, build_torus2, build_torus4,
    DESK_SCALE_LIMIT,
};
pub use cohomology::{
    betti_numbers, cohomology_generators, cup_product, cup_product_form, integer_kernel_basis,
    intersection_matrix, rank_mod_p,
};
pub use io::{load_json, load_mesh, load_off, save_json, MeshFile, MESH_SCHEMA_VERSION};

use std::collections::{HashMap, VecDeque};

use crate::linalg::Csr;
use crate::{Error, Result};

/// Offsets of each degree inside a stacked cochain vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CochainLayout {
    counts: Vec<usize>,
    offsets: Vec<usize>,
}

impl CochainLayout {
    pub fn new(counts: Vec<usize>) -> Self {
        let mut offsets = vec![0];
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        Self { counts, offsets }
    }

    /// Top degree `d`.
    pub fn dim(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn count(&self, k: usize) -> usize {
        self.counts[k]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn degree_of(&self, index: usize) -> usize {
        (0..self.counts.len())
            .find(|&k| index < self.offsets[k + 1])
            .expect("index inside layout")
    }
}

/// Metric data attached to a complex.
///
/// The PL metric is always given by edge lengths. Vertex coordinates are kept
/// when available for evaluating functions and, on flat tori (`period` set),
/// for exact geodesic distances.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub coords: Option<Vec<Vec<f64>>>,
    pub period: Option<Vec<f64>>,
    pub edge_lengths: Vec<f64>,
}

/// How edge lengths are obtained when building a complex.
#[derive(Clone, Debug)]
pub enum MetricSource {
    /// Euclidean distances between coordinates; minimal-image distances if a
    /// period is given.
    Coordinates {
        coords: Vec<Vec<f64>>,
        period: Option<Vec<f64>>,
    },
    /// Explicit lengths for vertex pairs; missing pairs default to 1.
    Lengths(HashMap<(usize, usize), f64>),
    /// Every edge has length 1.
    Unit,
}

#[derive(Clone, Debug)]
pub struct SimplicialComplex {
    dim: usize,
    n_vertices: usize,
    ordered: bool,
    simplices: Vec<Vec<Vec<usize>>>,
    lookup: Vec<HashMap<Vec<usize>, usize>>,
    faces: Vec<Vec<Vec<usize>>>,
    orientation: Vec<i8>,
    geometry: Geometry,
}

/// Sign of the permutation that sorts `v` (entries distinct).
pub(crate) fn sort_sign(v: &[usize]) -> i8 {
    let mut inv = 0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[i] > v[j] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1
    } else {
        -1
    }
}

impl SimplicialComplex {
    /// Builds a complex from its top-dimensional facets.
    ///
    /// With `ordered == false` every facet is sorted and the listed vertex
    /// order only contributes an orientation; otherwise tuples are used as
    /// given. The orientation is taken from `orientation` if provided, else
    /// from the listed orders if coherent, else propagated from facet 0.
    /// The result must be a closed orientable pseudomanifold.
    pub fn from_facets(
        dim: usize,
        n_vertices: usize,
        facets: Vec<Vec<usize>>,
        orientation: Option<Vec<i8>>,
        metric: MetricSource,
        ordered: bool,
    ) -> Result<Self> {
        if facets.is_empty() {
            return Err(Error::Invalid("no facets".into()));
        }
        let mut listed_sign = Vec::with_capacity(facets.len());
        let mut tops = Vec::with_capacity(facets.len());
        for f in facets {
            if f.len() != dim + 1 {
                return Err(Error::Invalid(format!(
                    "facet {f:?} does not have {} vertices",
                    dim + 1
                )));
            }
            if let Some(&v) = f.iter().find(|&&v| v >= n_vertices) {
                return Err(Error::Invalid(format!("vertex {v} out of range")));
            }
            let mut s = f.clone();
            s.sort();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Invalid(format!("facet {f:?} repeats a vertex")));
            }
            if ordered {
                listed_sign.push(1);
                tops.push(f);
            } else {
                listed_sign.push(sort_sign(&f));
                tops.push(s);
            }
        }

        let mut sets: Vec<Vec<Vec<usize>>> = vec![Vec::new(); dim + 1];
        let mut seen: Vec<HashMap<Vec<usize>, ()>> = vec![HashMap::new(); dim + 1];
        for f in &tops {
            for mask in 1u32..(1u32 << (dim + 1)) {
                let sub: Vec<usize> = (0..=dim)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| f[i])
                    .collect();
                let k = sub.len() - 1;
                if seen[k].insert(sub.clone(), ()).is_none() {
                    sets[k].push(sub);
                }
            }
        }
        if seen[dim].len() != tops.len() {
            return Err(Error::Invalid("duplicate facets".into()));
        }
        // facets keep their listed position so orientation vectors line up
        sets[dim] = tops.clone();
        for s in sets.iter_mut().take(dim) {
            s.sort();
        }
        if sets[0].len() != n_vertices || sets[0].iter().enumerate().any(|(i, v)| v[0] != i) {
            return Err(Error::Invalid("every vertex must belong to a facet".into()));
        }
        let lookup: Vec<HashMap<Vec<usize>, usize>> = sets
            .iter()
            .map(|l| l.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect())
            .collect();
        let mut faces = vec![Vec::new(); dim + 1];
        for k in 1..=dim {
            faces[k] = sets[k]
                .iter()
                .map(|s| {
                    (0..=k)
                        .map(|j| {
                            let mut f = s.clone();
                            f.remove(j);
                            lookup[k - 1][&f]
                        })
                        .collect()
                })
                .collect();
        }

        let mut cx = Self {
            dim,
            n_vertices,
            ordered,
            simplices: sets,
            lookup,
            faces,
            orientation: listed_sign.clone(),
            geometry: Geometry {
                coords: None,
                period: None,
                edge_lengths: Vec::new(),
            },
        };
        cx.check_pseudomanifold()?;
        cx.orientation = match orientation {
            Some(o) => {
                if o.len() != cx.simplices[dim].len() || o.iter().any(|&s| s != 1 && s != -1) {
                    return Err(Error::Invalid("orientation must list ±1 per facet".into()));
                }
                o
            }
            None if cx.orientation_defect(&listed_sign) == 0 => listed_sign,
            None => cx.propagate_orientation(listed_sign[0])?,
        };
        let defect = cx.orientation_defect(&cx.orientation);
        if defect != 0 {
            return Err(Error::NotManifold(format!(
                "{defect} codimension-one faces with incoherent orientation"
            )));
        }
        cx.geometry = cx.metric_from_source(metric)?;
        Ok(cx)
    }

    fn check_pseudomanifold(&self) -> Result<()> {
        if self.dim == 0 {
            return Ok(());
        }
        let mut count = vec![0usize; self.simplices[self.dim - 1].len()];
        for fs in &self.faces[self.dim] {
            for &f in fs {
                count[f] += 1;
            }
        }
        if let Some((i, c)) = count.iter().enumerate().find(|(_, &c)| c != 2) {
            return Err(Error::NotManifold(format!(
                "face {:?} lies in {c} facets",
                self.simplices[self.dim - 1][i]
            )));
        }
        Ok(())
    }

    /// Number of codimension-one faces whose induced orientations fail to
    /// cancel.
    fn orientation_defect(&self, orientation: &[i8]) -> usize {
        if self.dim == 0 {
            return 0;
        }
        let mut sum = vec![0i32; self.simplices[self.dim - 1].len()];
        for (t, fs) in self.faces[self.dim].iter().enumerate() {
            for (j, &f) in fs.iter().enumerate() {
                let sign = if j % 2 == 0 { 1 } else { -1 };
                sum[f] += orientation[t] as i32 * sign;
            }
        }
        sum.iter().filter(|&&s| s != 0).count()
    }

    fn propagate_orientation(&self, seed: i8) -> Result<Vec<i8>> {
        let d = self.dim;
        let nf = self.simplices[d].len();
        let mut owners: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.simplices[d - 1].len()];
        for (t, fs) in self.faces[d].iter().enumerate() {
            for (j, &f) in fs.iter().enumerate() {
                owners[f].push((t, j));
            }
        }
        let mut orient = vec![0i8; nf];
        orient[0] = seed;
        let mut queue = VecDeque::from([0usize]);
        while let Some(t) = queue.pop_front() {
            for (j, &f) in self.faces[d][t].iter().enumerate() {
                for &(u, i) in &owners[f] {
                    if u == t {
                        continue;
                    }
                    // induced signs must cancel: o_t (-1)^j + o_u (-1)^i = 0
                    let want = -orient[t] * if (i + j) % 2 == 0 { 1 } else { -1 };
                    if orient[u] == 0 {
                        orient[u] = want;
                        queue.push_back(u);
                    } else if orient[u] != want {
                        return Err(Error::NotManifold("not orientable".into()));
                    }
                }
            }
        }
        if orient.contains(&0) {
            return Err(Error::NotManifold("not connected".into()));
        }
        Ok(orient)
    }

    fn metric_from_source(&self, metric: MetricSource) -> Result<Geometry> {
        let edges = &self.simplices[1.min(self.dim)];
        let (coords, period, lengths) = match metric {
            MetricSource::Coordinates { coords, period } => {
                if coords.len() != self.n_vertices {
                    return Err(Error::DimensionMismatch {
                        expected: self.n_vertices,
                        got: coords.len(),
                    });
                }
                let lengths = edges
                    .iter()
                    .map(|e| distance(&coords[e[0]], &coords[e[1]], period.as_deref()))
                    .collect();
                (Some(coords), period, lengths)
            }
            MetricSource::Lengths(map) => {
                let lengths = edges
                    .iter()
                    .map(|e| {
                        map.get(&(e[0], e[1]))
                            .or_else(|| map.get(&(e[1], e[0])))
                            .copied()
                            .unwrap_or(1.0)
                    })
                    .collect();
                (None, None, lengths)
            }
            MetricSource::Unit => (None, None, vec![1.0; edges.len()]),
        };
        let lengths: Vec<f64> = if self.dim == 0 { Vec::new() } else { lengths };
        Ok(Geometry {
            coords,
            period,
            edge_lengths: lengths,
        })
    }

    /// Copy of the complex with a new PL metric. Coordinates are kept for
    /// function evaluation, the flat-torus period is dropped.
    pub fn with_edge_lengths(&self, lengths: Vec<f64>) -> Result<Self> {
        if lengths.len() != self.count(1) {
            return Err(Error::DimensionMismatch {
                expected: self.count(1),
                got: lengths.len(),
            });
        }
        if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Invalid("edge lengths must be positive".into()));
        }
        let mut cx = self.clone();
        cx.geometry.edge_lengths = lengths;
        cx.geometry.period = None;
        Ok(cx)
    }

    /// Same complex with the opposite orientation.
    pub fn reversed(&self) -> Self {
        let mut cx = self.clone();
        for o in cx.orientation.iter_mut() {
            *o = -*o;
        }
        cx
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    /// Whether simplices are ordered tuples in lattice order rather than
    /// sorted vertex sets.
    pub fn is_ordered(&self) -> bool {
        self.ordered
    }

    pub fn count(&self, k: usize) -> usize {
        self.simplices.get(k).map_or(0, Vec::len)
    }

    pub fn counts(&self) -> Vec<usize> {
        self.simplices.iter().map(Vec::len).collect()
    }

    pub fn total_simplices(&self) -> usize {
        self.simplices.iter().map(Vec::len).sum()
    }

    pub fn layout(&self) -> CochainLayout {
        CochainLayout::new(self.counts())
    }

    pub fn simplices(&self, k: usize) -> &[Vec<usize>] {
        &self.simplices[k]
    }

    pub fn simplex(&self, k: usize, i: usize) -> &[usize] {
        &self.simplices[k][i]
    }

    /// Index of a `k`-simplex given as an ordered tuple.
    pub fn find(&self, tuple: &[usize]) -> Option<usize> {
        let k = tuple.len().checked_sub(1)?;
        self.lookup.get(k)?.get(tuple).copied()
    }

    /// Indices of the faces of `k`-simplex `i`; face `j` omits vertex `j`.
    pub fn faces(&self, k: usize, i: usize) -> &[usize] {
        &self.faces[k][i]
    }

    /// Orientation signs of the top simplices.
    pub fn orientation(&self) -> &[i8] {
        &self.orientation
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// Edge index of an ordered pair, in either order.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.find(&[a, b]).or_else(|| self.find(&[b, a]))
    }

    /// Length of the edge between two vertices of the same simplex.
    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        self.edge_index(a, b)
            .map(|e| self.geometry.edge_lengths[e])
            .expect("vertices share an edge")
    }

    /// Alternating face count `Σ (−1)^k n_k`.
    pub fn euler_characteristic(&self) -> i64 {
        self.simplices
            .iter()
            .enumerate()
            .map(|(k, s)| {
                if k % 2 == 0 {
                    s.len() as i64
                } else {
                    -(s.len() as i64)
                }
            })
            .sum()
    }

    /// Integer coboundary `δ_k : C^k → C^{k+1}` (rows are `(k+1)`-simplices).
    pub fn coboundary(&self, k: usize) -> Csr<i64> {
        if k >= self.dim {
            return Csr::zeros(0, self.count(k));
        }
        let mut trips = Vec::new();
        for (i, fs) in self.faces[k + 1].iter().enumerate() {
            for (j, &f) in fs.iter().enumerate() {
                trips.push((i, f, if j % 2 == 0 { 1 } else { -1 }));
            }
        }
        Csr::from_triplets(self.count(k + 1), self.count(k), &trips)
    }

    /// Whether the codimension-one faces cancel under the stored orientation.
    pub fn is_consistently_oriented(&self) -> bool {
        self.orientation_defect(&self.orientation) == 0
    }

    /// Vertex links for `d = 4` manifolds checked by Euler characteristic
    /// (`χ(S³) = 0`); returns the offending vertices.
    pub fn vertices_with_bad_links(&self) -> Vec<usize> {
        let d = self.dim;
        let mut bad = Vec::new();
        for v in 0..self.n_vertices {
            let mut chi = 0i64;
            for k in 1..=d {
                let n = self.simplices[k].iter().filter(|s| s.contains(&v)).count() as i64;
                // k-simplices through v are (k-1)-simplices of the link
                chi += if (k - 1) % 2 == 0 { n } else { -n };
            }
            let sphere = if (d - 1).is_multiple_of(2) { 2 } else { 0 };
            if chi != sphere {
                bad.push(v);
            }
        }
        bad
    }

    /// Shortest-path or flat-torus distances from `source` to every vertex.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        if let (Some(coords), Some(period)) = (&self.geometry.coords, &self.geometry.period) {
            return coords
                .iter()
                .map(|c| distance(&coords[source], c, Some(period)))
                .collect();
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_vertices];
        for (e, s) in self.simplices[1].iter().enumerate() {
            let l = self.geometry.edge_lengths[e];
            adj[s[0]].push((s[1], l));
            adj[s[1]].push((s[0], l));
        }
        let mut dist = vec![f64::INFINITY; self.n_vertices];
        let mut done = vec![false; self.n_vertices];
        dist[source] = 0.0;
        for _ in 0..self.n_vertices {
            let Some(u) = (0..self.n_vertices)
                .filter(|&i| !done[i])
                .min_by(|&a, &b| dist[a].partial_cmp(&dist[b]).unwrap())
            else {
                break;
            };
            done[u] = true;
            for &(w, l) in &adj[u] {
                if dist[u] + l < dist[w] {
                    dist[w] = dist[u] + l;
                }
            }
        }
        dist
    }
}

/// Euclidean distance, minimal image when a period is given.
pub(crate) fn distance(a: &[f64], b: &[f64], period: Option<&[f64]>) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| {
            let mut d = (x - y).abs();
            if let Some(p) = period {
                d %= p[i];
                d = d.min(p[i] - d);
            }
            d * d
        })
        .sum::<f64>()
        .sqrt()
}
