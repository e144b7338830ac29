//! Simplicial meshes of 1D intervals and 2D polygons with tagged boundary facets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("non-finite or degenerate bounds: {0}")]
    BadBounds(String),
    #[error("cell count must be at least 1")]
    ZeroCells,
    #[error("mesh invariant violated: {0}")]
    Invariant(String),
    #[error("mesh JSON: {0}")]
    Json(String),
}

/// Boundary facet: a vertex (1D) or an edge (2D), tagged with a patch label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryFacet {
    pub vertices: Vec<usize>,
    pub patch: u32,
}

/// Simplicial mesh of an interval or a 2D polygon.
///
/// Immutable after construction; vertex ordering is deterministic so runs
/// are bit-reproducible.
#[derive(Debug, Clone)]
pub struct Mesh<T = f64> {
    pub dimension: usize,
    /// Vertex coordinates; 1D meshes store `[x, 0]`.
    pub vertices: Vec<[T; 2]>,
    /// Vertex index tuples: segments (2) or triangles (3).
    pub cells: Vec<Vec<usize>>,
    pub boundary_facets: Vec<BoundaryFacet>,
    /// Maximum pairwise vertex distance over the convex closure.
    pub diam: T,
}

/// A point of space-time, `X = (x, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimePoint<T = f64> {
    pub x: [T; 2],
    pub t: T,
}

impl<T: Real> SpaceTimePoint<T> {
    pub fn new(x: [T; 2], t: T) -> Self {
        Self { x, t }
    }
}

/// Parabolic distance `max(|x - y|, sqrt|t - s|)`.
pub fn parabolic_distance<T: Real>(a: &SpaceTimePoint<T>, b: &SpaceTimePoint<T>) -> T {
    let dx = euclid(&a.x, &b.x);
    let dt = (a.t - b.t).abs().sqrt();
    dx.max(dt)
}

fn euclid<T: Real>(a: &[T; 2], b: &[T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

fn max_pairwise_distance<T: Real>(vertices: &[[T; 2]]) -> T {
    let mut d = T::zero();
    for i in 0..vertices.len() {
        for j in (i + 1)..vertices.len() {
            d = d.max(euclid(&vertices[i], &vertices[j]));
        }
    }
    d
}

/// Uniform 1D mesh of `(a, b)` with `n_cells` segments.
///
/// Boundary facets are the two endpoints: patch 0 at `a`, patch 1 at `b`.
pub fn build_interval_mesh<T: Real>(a: T, b: T, n_cells: usize) -> Result<Mesh<T>, MeshError> {
    if !a.is_finite() || !b.is_finite() || a >= b {
        return Err(MeshError::BadBounds(format!("interval ({:?}, {:?})", a, b)));
    }
    if n_cells == 0 {
        return Err(MeshError::ZeroCells);
    }
    let h = (b - a) / T::of_usize(n_cells);
    let vertices: Vec<[T; 2]> = (0..=n_cells)
        .map(|i| [a + h * T::of_usize(i), T::zero()])
        .collect();
    let cells: Vec<Vec<usize>> = (0..n_cells).map(|i| vec![i, i + 1]).collect();
    let boundary_facets = vec![
        BoundaryFacet { vertices: vec![0], patch: 0 },
        BoundaryFacet { vertices: vec![n_cells], patch: 1 },
    ];
    Ok(Mesh { dimension: 1, vertices, cells, boundary_facets, diam: b - a })
}

/// Structured triangulation of `(0,w) x (0,h)`: each grid square split in two.
///
/// Boundary patches: 0 bottom, 1 right, 2 top, 3 left.
pub fn build_rectangle_mesh<T: Real>(
    w: T,
    h: T,
    nx: usize,
    ny: usize,
) -> Result<Mesh<T>, MeshError> {
    if !(w > T::zero()) || !(h > T::zero()) || !w.is_finite() || !h.is_finite() {
        return Err(MeshError::BadBounds(format!("rectangle ({:?}, {:?})", w, h)));
    }
    if nx == 0 || ny == 0 {
        return Err(MeshError::ZeroCells);
    }
    let dx = w / T::of_usize(nx);
    let dy = h / T::of_usize(ny);
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([dx * T::of_usize(i), dy * T::of_usize(j)]);
        }
    }
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            cells.push(vec![v00, v10, v11]);
            cells.push(vec![v00, v11, v01]);
        }
    }
    let mut boundary_facets = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary_facets.push(BoundaryFacet { vertices: vec![vid(i, 0), vid(i + 1, 0)], patch: 0 });
    }
    for j in 0..ny {
        boundary_facets.push(BoundaryFacet { vertices: vec![vid(nx, j), vid(nx, j + 1)], patch: 1 });
    }
    for i in 0..nx {
        boundary_facets.push(BoundaryFacet { vertices: vec![vid(i + 1, ny), vid(i, ny)], patch: 2 });
    }
    for j in 0..ny {
        boundary_facets.push(BoundaryFacet { vertices: vec![vid(0, j + 1), vid(0, j)], patch: 3 });
    }
    Ok(Mesh {
        dimension: 2,
        vertices,
        cells,
        boundary_facets,
        diam: (w * w + h * h).sqrt(),
    })
}

/// Mesh of the L-shaped domain `[0,1]^2 \ (0.5,1]^2` with `2n x 2n` grid resolution.
///
/// Boundary patches 0..=5 follow the six edges counterclockwise from `y = 0`.
pub fn build_lshape_mesh<T: Real>(n: usize) -> Result<Mesh<T>, MeshError> {
    if n == 0 {
        return Err(MeshError::ZeroCells);
    }
    let g = 2 * n;
    let h = T::of(1.0) / T::of_usize(g);
    let half = T::of(0.5);
    let vid = |i: usize, j: usize| j * (g + 1) + i;
    let in_l = |i: usize, j: usize| !(i >= n && j >= n); // square (i,j) kept unless in the removed quadrant
    let mut cells_grid = Vec::new();
    for j in 0..g {
        for i in 0..g {
            if in_l(i, j) {
                let (v00, v10, v01, v11) =
                    (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
                cells_grid.push(vec![v00, v10, v11]);
                cells_grid.push(vec![v00, v11, v01]);
            }
        }
    }
    // compact vertex numbering over used vertices, in grid order
    let mut used = vec![false; (g + 1) * (g + 1)];
    for c in &cells_grid {
        for &v in c {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; used.len()];
    let mut vertices = Vec::new();
    for (old, &u) in used.iter().enumerate() {
        if u {
            remap[old] = vertices.len();
            let (i, j) = (old % (g + 1), old / (g + 1));
            vertices.push([h * T::of_usize(i), h * T::of_usize(j)]);
        }
    }
    let cells: Vec<Vec<usize>> = cells_grid
        .into_iter()
        .map(|c| c.into_iter().map(|v| remap[v]).collect())
        .collect();
    // derive boundary facets from edge incidence, classify by geometry
    let boundary_edges = boundary_edges_of(&cells);
    let eps = T::of(1e-12);
    let one = T::of(1.0);
    let mut boundary_facets = Vec::new();
    for (a, b) in boundary_edges {
        let mid = [
            (vertices[a][0] + vertices[b][0]) * half,
            (vertices[a][1] + vertices[b][1]) * half,
        ];
        let patch = if (mid[1]).abs() < eps {
            0
        } else if (mid[0] - one).abs() < eps {
            1
        } else if (mid[1] - half).abs() < eps && mid[0] > half {
            2
        } else if (mid[0] - half).abs() < eps && mid[1] > half {
            3
        } else if (mid[1] - one).abs() < eps {
            4
        } else if mid[0].abs() < eps {
            5
        } else {
            return Err(MeshError::Invariant("unclassifiable boundary edge".into()));
        };
        boundary_facets.push(BoundaryFacet { vertices: vec![a, b], patch });
    }
    let diam = max_pairwise_distance(&vertices);
    Ok(Mesh { dimension: 2, vertices, cells, boundary_facets, diam })
}

/// Edges (as sorted vertex pairs) incident to exactly one triangle, in
/// deterministic order.
fn boundary_edges_of(cells: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for c in cells {
        for e in 0..3 {
            let (a, b) = (c[e], c[(e + 1) % 3]);
            let key = (a.min(b), a.max(b));
            *count.entry(key).or_insert(0) += 1;
        }
    }
    count.into_iter().filter(|&(_, n)| n == 1).map(|(e, _)| e).collect()
}

impl<T: Real> Mesh<T> {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Measure (length or area) of cell `k`.
    pub fn cell_measure(&self, k: usize) -> T {
        let c = &self.cells[k];
        match self.dimension {
            1 => (self.vertices[c[1]][0] - self.vertices[c[0]][0]).abs(),
            _ => {
                let (a, b, c) = (self.vertices[c[0]], self.vertices[c[1]], self.vertices[c[2]]);
                let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                det.abs() * T::of(0.5)
            }
        }
    }

    /// Boundary measure of facet `k`: 1 for a point (counting measure), edge
    /// length in 2D.
    pub fn facet_measure(&self, k: usize) -> T {
        let f = &self.boundary_facets[k];
        match self.dimension {
            1 => T::one(),
            _ => euclid(&self.vertices[f.vertices[0]], &self.vertices[f.vertices[1]]),
        }
    }

    /// Total domain measure.
    pub fn measure(&self) -> T {
        (0..self.cells.len()).map(|k| self.cell_measure(k)).fold(T::zero(), |a, b| a + b)
    }

    /// Total boundary measure (2 in 1D by the counting convention).
    pub fn boundary_measure(&self) -> T {
        (0..self.boundary_facets.len())
            .map(|k| self.facet_measure(k))
            .fold(T::zero(), |a, b| a + b)
    }

    /// Longest cell edge; the mesh size `h`.
    pub fn mesh_size(&self) -> T {
        let mut h = T::zero();
        for c in &self.cells {
            for i in 0..c.len() {
                for j in (i + 1)..c.len() {
                    h = h.max(euclid(&self.vertices[c[i]], &self.vertices[c[j]]));
                }
            }
        }
        h
    }

    /// Index of the vertex closest to `x`.
    pub fn nearest_vertex(&self, x: &[T; 2]) -> usize {
        let mut best = 0;
        let mut bd = euclid(&self.vertices[0], x);
        for (i, v) in self.vertices.iter().enumerate().skip(1) {
            let d = euclid(v, x);
            if d < bd {
                bd = d;
                best = i;
            }
        }
        best
    }

    /// Locate the cell containing `x`; returns the cell index and barycentric
    /// weights of the cell vertices.
    pub fn locate(&self, x: &[T; 2]) -> Option<(usize, Vec<T>)> {
        let tol = -T::of(1e-10) * self.diam;
        for (k, c) in self.cells.iter().enumerate() {
            match self.dimension {
                1 => {
                    let (x0, x1) = (self.vertices[c[0]][0], self.vertices[c[1]][0]);
                    let len = x1 - x0;
                    let w1 = (x[0] - x0) / len;
                    let w0 = T::one() - w1;
                    if w0 >= tol && w1 >= tol {
                        return Some((k, vec![w0.max(T::zero()), w1.max(T::zero())]));
                    }
                }
                _ => {
                    let (a, b, cc) =
                        (self.vertices[c[0]], self.vertices[c[1]], self.vertices[c[2]]);
                    let det = (b[0] - a[0]) * (cc[1] - a[1]) - (cc[0] - a[0]) * (b[1] - a[1]);
                    let w1 = ((x[0] - a[0]) * (cc[1] - a[1]) - (cc[0] - a[0]) * (x[1] - a[1])) / det;
                    let w2 = ((b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1])) / det;
                    let w0 = T::one() - w1 - w2;
                    if w0 >= tol && w1 >= tol && w2 >= tol {
                        return Some((
                            k,
                            vec![w0.max(T::zero()), w1.max(T::zero()), w2.max(T::zero())],
                        ));
                    }
                }
            }
        }
        None
    }

    /// Uniform refinement: 1D bisection, 2D red refinement into 4.
    pub fn refine(&self) -> Mesh<T> {
        match self.dimension {
            1 => self.refine_1d(),
            _ => self.refine_2d(),
        }
    }

    fn refine_1d(&self) -> Mesh<T> {
        let mut vertices = self.vertices.clone();
        let mut cells = Vec::with_capacity(2 * self.cells.len());
        let half = T::of(0.5);
        for c in &self.cells {
            let m = vertices.len();
            let (a, b) = (self.vertices[c[0]], self.vertices[c[1]]);
            vertices.push([(a[0] + b[0]) * half, T::zero()]);
            cells.push(vec![c[0], m]);
            cells.push(vec![m, c[1]]);
        }
        Mesh {
            dimension: 1,
            vertices,
            cells,
            boundary_facets: self.boundary_facets.clone(),
            diam: self.diam,
        }
    }

    fn refine_2d(&self) -> Mesh<T> {
        let mut vertices = self.vertices.clone();
        let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let half = T::of(0.5);
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<[T; 2]>| -> usize {
            let key = (a.min(b), a.max(b));
            if let Some(&m) = midpoint.get(&key) {
                return m;
            }
            let m = vertices.len();
            let (pa, pb) = (vertices[a], vertices[b]);
            vertices.push([(pa[0] + pb[0]) * half, (pa[1] + pb[1]) * half]);
            midpoint.insert(key, m);
            m
        };
        let mut cells = Vec::with_capacity(4 * self.cells.len());
        for c in &self.cells {
            let (a, b, cc) = (c[0], c[1], c[2]);
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, cc, &mut vertices);
            let ac = mid(a, cc, &mut vertices);
            cells.push(vec![a, ab, ac]);
            cells.push(vec![ab, b, bc]);
            cells.push(vec![ac, bc, cc]);
            cells.push(vec![ab, bc, ac]);
        }
        let mut boundary_facets = Vec::with_capacity(2 * self.boundary_facets.len());
        for f in &self.boundary_facets {
            let (a, b) = (f.vertices[0], f.vertices[1]);
            let m = mid(a, b, &mut vertices);
            boundary_facets.push(BoundaryFacet { vertices: vec![a, m], patch: f.patch });
            boundary_facets.push(BoundaryFacet { vertices: vec![m, b], patch: f.patch });
        }
        Mesh { dimension: 2, vertices, cells, boundary_facets, diam: self.diam }
    }

    /// Check structural invariants: positive cell measures, boundary facets
    /// covering the topological boundary exactly, diam consistency.
    pub fn validate(&self) -> Result<(), MeshError> {
        for k in 0..self.cells.len() {
            if !(self.cell_measure(k) > T::zero()) {
                return Err(MeshError::Invariant(format!("cell {} has nonpositive measure", k)));
            }
        }
        match self.dimension {
            1 => {
                let mut count: BTreeMap<usize, usize> = BTreeMap::new();
                for c in &self.cells {
                    for &v in c {
                        *count.entry(v).or_insert(0) += 1;
                    }
                }
                let boundary: Vec<usize> =
                    count.iter().filter(|&(_, &n)| n == 1).map(|(&v, _)| v).collect();
                let mut declared: Vec<usize> =
                    self.boundary_facets.iter().map(|f| f.vertices[0]).collect();
                declared.sort_unstable();
                if boundary != declared {
                    return Err(MeshError::Invariant("1D boundary facets mismatch".into()));
                }
            }
            _ => {
                let derived = boundary_edges_of(&self.cells);
                let mut declared: Vec<(usize, usize)> = self
                    .boundary_facets
                    .iter()
                    .map(|f| {
                        let (a, b) = (f.vertices[0], f.vertices[1]);
                        (a.min(b), a.max(b))
                    })
                    .collect();
                declared.sort_unstable();
                if derived != declared {
                    return Err(MeshError::Invariant("2D boundary facets mismatch".into()));
                }
            }
        }
        let d = max_pairwise_distance(&self.vertices);
        if (d - self.diam).abs() > T::of(1e-12) * self.diam.max(T::one()) {
            return Err(MeshError::Invariant("diam inconsistent".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = MeshJson {
            dimension: self.dimension,
            vertices: self
                .vertices
                .iter()
                .map(|v| v[..self.dimension].iter().map(|x| x.as_f64()).collect())
                .collect(),
            cells: self.cells.clone(),
            boundary_facets: self.boundary_facets.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("mesh serializes")
    }

    pub fn from_json(s: &str) -> Result<Mesh<T>, MeshError> {
        let doc: MeshJson = serde_json::from_str(s).map_err(|e| MeshError::Json(e.to_string()))?;
        if doc.dimension == 0 || doc.dimension > 2 {
            return Err(MeshError::Json(format!("unsupported dimension {}", doc.dimension)));
        }
        let vertices: Vec<[T; 2]> = doc
            .vertices
            .iter()
            .map(|v| {
                let mut p = [T::zero(); 2];
                for (i, &x) in v.iter().take(2).enumerate() {
                    p[i] = T::of(x);
                }
                p
            })
            .collect();
        let diam = max_pairwise_distance(&vertices);
        let mesh = Mesh {
            dimension: doc.dimension,
            vertices,
            cells: doc.cells,
            boundary_facets: doc.boundary_facets,
            diam,
        };
        mesh.validate()?;
        Ok(mesh)
    }
}

#[derive(Serialize, Deserialize)]
struct MeshJson {
    dimension: usize,
    vertices: Vec<Vec<f64>>,
    cells: Vec<Vec<usize>>,
    boundary_facets: Vec<BoundaryFacet>,
}
