//! Quadrature rules on mesh cells and boundary facets.
//!
//! Cells: 1-point midpoint rule in 1D, 3-point edge-midpoint rule in 2D
//! (exact for quadratics). Boundary: counting measure at 1D endpoints,
//! 2-point Gauss on 2D edges (exact for cubics).

use crate::mesh::Mesh;
use crate::scalar::Real;

/// Quadrature point with its weight.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint<T> {
    pub x: [T; 2],
    pub weight: T,
}

pub fn cell_quadrature<T: Real>(mesh: &Mesh<T>, k: usize) -> Vec<QuadPoint<T>> {
    let c = &mesh.cells[k];
    let w = mesh.cell_measure(k);
    let half = T::of(0.5);
    match mesh.dimension {
        1 => {
            let (a, b) = (mesh.vertices[c[0]], mesh.vertices[c[1]]);
            vec![QuadPoint { x: [(a[0] + b[0]) * half, T::zero()], weight: w }]
        }
        _ => {
            let (a, b, cc) = (mesh.vertices[c[0]], mesh.vertices[c[1]], mesh.vertices[c[2]]);
            let third = w / T::of(3.0);
            vec![
                QuadPoint { x: [(a[0] + b[0]) * half, (a[1] + b[1]) * half], weight: third },
                QuadPoint { x: [(b[0] + cc[0]) * half, (b[1] + cc[1]) * half], weight: third },
                QuadPoint { x: [(a[0] + cc[0]) * half, (a[1] + cc[1]) * half], weight: third },
            ]
        }
    }
}

pub fn boundary_quadrature<T: Real>(mesh: &Mesh<T>, facet: usize) -> Vec<QuadPoint<T>> {
    let f = &mesh.boundary_facets[facet];
    match mesh.dimension {
        1 => vec![QuadPoint { x: mesh.vertices[f.vertices[0]], weight: T::one() }],
        _ => {
            let (a, b) = (mesh.vertices[f.vertices[0]], mesh.vertices[f.vertices[1]]);
            let len = mesh.facet_measure(facet);
            let half = T::of(0.5);
            let g = T::of(0.5 / 3.0_f64.sqrt());
            let mid = [(a[0] + b[0]) * half, (a[1] + b[1]) * half];
            let d = [b[0] - a[0], b[1] - a[1]];
            vec![
                QuadPoint { x: [mid[0] - d[0] * g, mid[1] - d[1] * g], weight: len * half },
                QuadPoint { x: [mid[0] + d[0] * g, mid[1] + d[1] * g], weight: len * half },
            ]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_interval_mesh, build_rectangle_mesh};
    use approx::assert_relative_eq;

    #[test]
    fn cell_weights_sum_to_measure() {
        let m: Mesh<f64> = build_rectangle_mesh(1.0, 1.0, 2, 2).unwrap();
        let total: f64 = (0..m.cells.len())
            .flat_map(|k| cell_quadrature(&m, k))
            .map(|q| q.weight)
            .sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn boundary_weights_sum_to_perimeter() {
        let m: Mesh<f64> = build_rectangle_mesh(2.0, 1.0, 2, 1).unwrap();
        let total: f64 = (0..m.boundary_facets.len())
            .flat_map(|k| boundary_quadrature(&m, k))
            .map(|q| q.weight)
            .sum();
        assert_relative_eq!(total, 6.0, max_relative = 1e-12);
        let m: Mesh<f64> = build_interval_mesh(0.0, 1.0, 3).unwrap();
        let total: f64 = (0..m.boundary_facets.len())
            .flat_map(|k| boundary_quadrature(&m, k))
            .map(|q| q.weight)
            .sum();
        assert_relative_eq!(total, 2.0);
    }

    #[test]
    fn edge_rule_exact_for_cubics() {
        // integrate x^3 over the bottom edge of the unit square
        let m: Mesh<f64> = build_rectangle_mesh(1.0, 1.0, 1, 1).unwrap();
        let bottom = m.boundary_facets.iter().position(|f| f.patch == 0).unwrap();
        let v: f64 = boundary_quadrature(&m, bottom)
            .iter()
            .map(|q| q.weight * q.x[0].powi(3))
            .sum();
        assert_relative_eq!(v, 0.25, max_relative = 1e-12);
    }
}
