use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Vec3};
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    pub triangles: usize,
    pub surface_area_cm2: f64,
    /// Area-weighted mean of |H| over interior vertices.
    pub avg_curvature_per_cm: f64,
    /// Zero-area triangles, excluded from curvature.
    pub degenerate_triangles: usize,
    /// Vertices that contributed to the curvature average.
    pub curvature_vertices: usize,
}

fn is_degenerate(a: &Vec3, b: &Vec3, c: &Vec3) -> bool {
    let cross = (b - a).cross(&(c - a)).norm();
    let longest = (b - a).norm_squared().max((c - b).norm_squared()).max((a - c).norm_squared());
    cross <= f64::EPSILON * longest
}

fn cot(u: &Vec3, v: &Vec3) -> f64 {
    u.dot(v) / u.cross(v).norm()
}

/// Triangle count, total area, and average discrete mean curvature.
///
/// Curvature uses the cotangent Laplace-Beltrami mean-curvature normal with
/// mixed Voronoi areas: `|H| = |sum_j (cot a + cot b)(x_i - x_j)| / (4 A_mixed)`.
/// Vertices on the boundary (any incident edge not shared by exactly two
/// non-degenerate triangles) are skipped. `unit_scale_to_cm` converts mesh
/// units to centimeters (100 for meters).
pub fn mesh_stats(mesh: &TriangleMesh, unit_scale_to_cm: f64) -> Result<MeshStats> {
    if mesh.triangles.is_empty() || mesh.vertices.is_empty() {
        return Err(Error::invalid("empty mesh"));
    }
    if !(unit_scale_to_cm.is_finite() && unit_scale_to_cm > 0.0) {
        return Err(Error::invalid(format!("unit scale must be > 0, got {unit_scale_to_cm}")));
    }
    let v = &mesh.vertices;
    let nv = v.len();

    let mut area = CompensatedSum::new();
    let mut degenerate = 0;
    let mut laplacian = vec![Vec3::zeros(); nv];
    let mut mixed_area = vec![0.0f64; nv];
    let mut edge_use: HashMap<(usize, usize), u32> = HashMap::new();

    for tri in &mesh.triangles {
        let [i, j, k] = *tri;
        let (a, b, c) = (v[i], v[j], v[k]);
        let t_area = 0.5 * (b - a).cross(&(c - a)).norm();
        area.add(t_area);
        if i == j || j == k || i == k || is_degenerate(&a, &b, &c) {
            degenerate += 1;
            continue;
        }
        for (p, q) in [(i, j), (j, k), (k, i)] {
            *edge_use.entry((p.min(q), p.max(q))).or_insert(0) += 1;
        }

        // Corner angles' cotangents.
        let cot_i = cot(&(b - a), &(c - a));
        let cot_j = cot(&(c - b), &(a - b));
        let cot_k = cot(&(a - c), &(b - c));

        // Edge opposite each corner.
        laplacian[j] += (b - c) * cot_i;
        laplacian[k] += (c - b) * cot_i;
        laplacian[k] += (c - a) * cot_j;
        laplacian[i] += (a - c) * cot_j;
        laplacian[i] += (a - b) * cot_k;
        laplacian[j] += (b - a) * cot_k;

        let obtuse_i = (b - a).dot(&(c - a)) < 0.0;
        let obtuse_j = (c - b).dot(&(a - b)) < 0.0;
        let obtuse_k = (a - c).dot(&(b - c)) < 0.0;
        if obtuse_i || obtuse_j || obtuse_k {
            mixed_area[i] += if obtuse_i { t_area / 2.0 } else { t_area / 4.0 };
            mixed_area[j] += if obtuse_j { t_area / 2.0 } else { t_area / 4.0 };
            mixed_area[k] += if obtuse_k { t_area / 2.0 } else { t_area / 4.0 };
        } else {
            let ab = (b - a).norm_squared();
            let bc = (c - b).norm_squared();
            let ca = (a - c).norm_squared();
            mixed_area[i] += (ab * cot_k + ca * cot_j) / 8.0;
            mixed_area[j] += (ab * cot_k + bc * cot_i) / 8.0;
            mixed_area[k] += (bc * cot_i + ca * cot_j) / 8.0;
        }
    }

    let mut boundary = vec![false; nv];
    let mut touched = vec![false; nv];
    for (&(p, q), &count) in &edge_use {
        touched[p] = true;
        touched[q] = true;
        if count != 2 {
            boundary[p] = true;
            boundary[q] = true;
        }
    }

    let mut weighted = CompensatedSum::new();
    let mut weight = CompensatedSum::new();
    let mut used = 0;
    for idx in 0..nv {
        if !touched[idx] || boundary[idx] || mixed_area[idx] <= 0.0 {
            continue;
        }
        // A_i * |H_i| = |L_i| / 4
        weighted.add(laplacian[idx].norm() / 4.0);
        weight.add(mixed_area[idx]);
        used += 1;
    }
    let avg_h = if used > 0 { weighted.value() / weight.value() } else { 0.0 };

    Ok(MeshStats {
        triangles: mesh.triangles.len(),
        surface_area_cm2: area.value() * unit_scale_to_cm * unit_scale_to_cm,
        avg_curvature_per_cm: avg_h / unit_scale_to_cm,
        degenerate_triangles: degenerate,
        curvature_vertices: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> TriangleMesh {
        let vertices = (0..8)
            .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
        let triangles = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        TriangleMesh::new(vertices, triangles).unwrap()
    }

    #[test]
    fn single_triangle() {
        let m = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let s = mesh_stats(&m, 100.0).unwrap();
        assert_eq!(s.triangles, 1);
        assert!((s.surface_area_cm2 - 5000.0).abs() < 1e-9);
        assert_eq!(s.avg_curvature_per_cm, 0.0);
        assert_eq!(s.curvature_vertices, 0);
    }

    #[test]
    fn cube_area() {
        let s = mesh_stats(&unit_cube(), 100.0).unwrap();
        assert_eq!(s.triangles, 12);
        assert_eq!(s.surface_area_cm2, 60000.0);
        assert_eq!(s.curvature_vertices, 8);
    }

    #[test]
    fn flat_interior_vertex_has_zero_curvature() {
        // Fan of 6 triangles around a center vertex in the plane z = 0.
        let mut vertices = vec![Vec3::zeros()];
        for k in 0..6 {
            let a = k as f64 * std::f64::consts::PI / 3.0;
            vertices.push(Vec3::new(a.cos(), a.sin(), 0.0));
        }
        let triangles = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
        let s = mesh_stats(&TriangleMesh::new(vertices, triangles).unwrap(), 1.0).unwrap();
        assert_eq!(s.curvature_vertices, 1);
        assert!(s.avg_curvature_per_cm.abs() < 1e-12);
    }

    #[test]
    fn degenerate_triangles_counted() {
        let m = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2], [0, 1, 3]],
        )
        .unwrap();
        let s = mesh_stats(&m, 1.0).unwrap();
        assert_eq!(s.degenerate_triangles, 1);
        assert!((s.surface_area_cm2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_mesh_rejected() {
        assert!(mesh_stats(&TriangleMesh::default(), 100.0).is_err());
        assert!(mesh_stats(&unit_cube(), 0.0).is_err());
    }
}
