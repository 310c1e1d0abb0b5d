use super::{MetricSource, SimplicialComplex};
use crate::{Error, Result};

/// Largest total simplex count accepted by the builders.
pub const DESK_SCALE_LIMIT: usize = 1_000_000;

fn param_err(builder: &str, param: &str, value: usize, reason: &str) -> Error {
    Error::BuilderParam {
        builder: builder.into(),
        param: param.into(),
        value,
        reason: reason.into(),
    }
}

fn permutations(n: usize) -> Vec<(Vec<usize>, i8)> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, i8)>) {
        if rest.is_empty() {
            out.push((prefix.clone(), super::sort_sign(prefix)));
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            rec(prefix, rest, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

/// Kuhn (Freudenthal) triangulation of the flat torus `ℝ^dim / ℤ^dim` with
/// `n` lattice steps per side. Supported dimensions are 1, 2 and 4.
///
/// Each cube `x + [0,1]^dim` splits into `dim!` simplices
/// `(x, x+e_{π0}, x+e_{π0}+e_{π1}, …)` oriented by `sign π`.
pub fn build_torus(dim: usize, n: usize) -> Result<SimplicialComplex> {
    let (name, min_n) = match dim {
        1 => ("circle", 3),
        2 => ("torus2", 3),
        4 => ("torus4", 2),
        _ => {
            return Err(param_err(
                "torus",
                "dim",
                dim,
                "supported dimensions are 1, 2 and 4",
            ))
        }
    };
    if n < min_n {
        return Err(param_err(
            name,
            "n",
            n,
            &format!("must be at least {min_n}"),
        ));
    }
    // simplices per vertex: faces of the dim! Kuhn simplices at each lattice point
    let per_vertex: usize = match dim {
        1 => 2,
        2 => 6,
        _ => 150,
    };
    let n_vertices = n
        .checked_pow(dim as u32)
        .ok_or_else(|| param_err(name, "n", n, "too large"))?;
    let total = n_vertices.saturating_mul(per_vertex);
    if total > DESK_SCALE_LIMIT {
        return Err(Error::DeskScaleLimit {
            simplices: total,
            limit: DESK_SCALE_LIMIT,
        });
    }

    let index = |p: &[usize]| p.iter().rev().fold(0, |acc, &c| acc * n + c);
    let perms = permutations(dim);
    let mut facets = Vec::with_capacity(n_vertices * perms.len());
    let mut orientation = Vec::with_capacity(facets.capacity());
    let mut coords = Vec::with_capacity(n_vertices);
    let h = 1.0 / n as f64;
    for v in 0..n_vertices {
        let mut p = Vec::with_capacity(dim);
        let mut r = v;
        for _ in 0..dim {
            p.push(r % n);
            r /= n;
        }
        coords.push(p.iter().map(|&c| c as f64 * h).collect());
        for (perm, sign) in &perms {
            let mut q = p.clone();
            let mut tuple = vec![index(&q)];
            for &axis in perm {
                q[axis] = (q[axis] + 1) % n;
                tuple.push(index(&q));
            }
            facets.push(tuple);
            orientation.push(*sign);
        }
    }
    SimplicialComplex::from_facets(
        dim,
        n_vertices,
        facets,
        Some(orientation),
        MetricSource::Coordinates {
            coords,
            period: Some(vec![1.0; dim]),
        },
        true,
    )
}

/// Circle of length 1 with `n` vertices.
pub fn build_circle(n: usize) -> Result<SimplicialComplex> {
    build_torus(1, n)
}

pub fn build_torus2(n: usize) -> Result<SimplicialComplex> {
    build_torus(2, n)
}

pub fn build_torus4(n: usize) -> Result<SimplicialComplex> {
    build_torus(4, n)
}

/// Unit sphere: icosahedron refined `level` times by midpoint subdivision,
/// vertices projected radially, outward orientation.
pub fn build_icosphere(level: usize) -> Result<SimplicialComplex> {
    if level > 6 {
        return Err(param_err("icosphere", "level", level, "must be at most 6"));
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut pts: Vec<[f64; 3]> = Vec::new();
    for &a in &[-1.0, 1.0] {
        for &b in &[-phi, phi] {
            pts.push([0.0, a, b]);
            pts.push([a, b, 0.0]);
            pts.push([b, 0.0, a]);
        }
    }
    let dist2 = |p: &[f64; 3], q: &[f64; 3]| (0..3).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>();
    let edge2 = 4.0;
    let adjacent = |i: usize, j: usize| (dist2(&pts[i], &pts[j]) - edge2).abs() < 1e-9;
    let mut tris: Vec<[usize; 3]> = Vec::new();
    for i in 0..12 {
        for j in i + 1..12 {
            for k in j + 1..12 {
                if adjacent(i, j) && adjacent(j, k) && adjacent(i, k) {
                    tris.push(orient_outward(&pts, [i, j, k]));
                }
            }
        }
    }
    for _ in 0..level {
        let mut mid = std::collections::HashMap::new();
        let mut midpoint = |a: usize, b: usize, pts: &mut Vec<[f64; 3]>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let p = [
                    (pts[a][0] + pts[b][0]) / 2.0,
                    (pts[a][1] + pts[b][1]) / 2.0,
                    (pts[a][2] + pts[b][2]) / 2.0,
                ];
                pts.push(p);
                pts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for &[a, b, c] in &tris {
            let ab = midpoint(a, b, &mut pts);
            let bc = midpoint(b, c, &mut pts);
            let ca = midpoint(c, a, &mut pts);
            next.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        tris = next;
    }
    let coords: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            p.iter().map(|x| x / r).collect()
        })
        .collect();
    SimplicialComplex::from_facets(
        2,
        coords.len(),
        tris.into_iter().map(|t| t.to_vec()).collect(),
        None,
        MetricSource::Coordinates {
            coords,
            period: None,
        },
        false,
    )
}

fn orient_outward(pts: &[[f64; 3]], t: [usize; 3]) -> [usize; 3] {
    let [a, b, c] = t.map(|i| pts[i]);
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let centroid_dot = (0..3).map(|i| n[i] * (a[i] + b[i] + c[i])).sum::<f64>();
    if centroid_dot > 0.0 {
        t
    } else {
        [t[0], t[2], t[1]]
    }
}

const CP2_FACETS: [[usize; 5]; 36] = [
    [1, 2, 4, 5, 6],
    [2, 3, 5, 6, 4],
    [3, 1, 6, 4, 5],
    [1, 2, 4, 5, 9],
    [2, 3, 5, 6, 7],
    [3, 1, 6, 4, 8],
    [2, 3, 6, 4, 9],
    [3, 1, 4, 5, 7],
    [1, 2, 5, 6, 8],
    [3, 1, 5, 6, 9],
    [1, 2, 6, 4, 7],
    [2, 3, 4, 5, 8],
    [4, 5, 7, 8, 9],
    [5, 6, 8, 9, 7],
    [6, 4, 9, 7, 8],
    [4, 5, 7, 8, 3],
    [5, 6, 8, 9, 1],
    [6, 4, 9, 7, 2],
    [5, 6, 9, 7, 3],
    [6, 4, 7, 8, 1],
    [4, 5, 8, 9, 2],
    [6, 4, 8, 9, 3],
    [4, 5, 9, 7, 1],
    [5, 6, 7, 8, 2],
    [7, 8, 1, 2, 3],
    [8, 9, 2, 3, 1],
    [9, 7, 3, 1, 2],
    [7, 8, 1, 2, 6],
    [8, 9, 2, 3, 4],
    [9, 7, 3, 1, 5],
    [8, 9, 3, 1, 6],
    [9, 7, 1, 2, 4],
    [7, 8, 2, 3, 5],
    [9, 7, 2, 3, 6],
    [7, 8, 3, 1, 4],
    [8, 9, 1, 2, 5],
];

/// Kühnel's 9-vertex triangulation of the complex projective plane with unit
/// edge lengths (every 4-simplex regular). The orientation is fixed so that
/// the integer intersection form on `H²` is `(+1)`.
pub fn build_cp2_kuhnel() -> Result<SimplicialComplex> {
    let facets = CP2_FACETS
        .iter()
        .map(|f| f.iter().map(|v| v - 1).collect())
        .collect();
    let cx = SimplicialComplex::from_facets(4, 9, facets, None, MetricSource::Unit, false)?;
    let q = super::intersection_matrix(&cx, 2)?;
    match (q.nrows(), q.get((0, 0))) {
        (1, Some(1)) => Ok(cx),
        (1, Some(-1)) => Ok(cx.reversed()),
        _ => Err(Error::NotManifold(format!(
            "unexpected intersection form {q:?}"
        ))),
    }
}
