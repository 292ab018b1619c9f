//! Procedural test meshes with outward-facing windings, normalized to the
//! unit cube and standing on +Y.

use std::collections::HashMap;
use std::f64::consts::TAU;

use super::{normalize, Mesh, Vec3};

fn build(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Mesh {
    Mesh::new(vertices, faces)
        .expect("primitive meshes are valid")
        .normalized()
}

pub fn cube() -> Mesh {
    let vertices = (0..8)
        .map(|i| {
            [
                if i & 1 == 0 { -0.5 } else { 0.5 },
                if i & 2 == 0 { -0.5 } else { 0.5 },
                if i & 4 == 0 { -0.5 } else { 0.5 },
            ]
        })
        .collect();
    let quads = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let faces = quads
        .iter()
        .flat_map(|&[a, b, c, d]| [[a, b, c], [a, c, d]])
        .collect();
    build(vertices, faces)
}

/// Sphere from a subdivided icosahedron.
pub fn icosphere(subdivisions: usize) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|&v| normalize(v))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    build(vertices, faces)
}

/// Closed cylinder along Y with `segments` sides.
pub fn cylinder(segments: usize) -> Mesh {
    let mut vertices = Vec::new();
    for i in 0..segments {
        let (s, c) = (TAU * i as f64 / segments as f64).sin_cos();
        vertices.push([c, -1.0, s]);
        vertices.push([c, 1.0, s]);
    }
    let (bottom, top) = (vertices.len(), vertices.len() + 1);
    vertices.push([0.0, -1.0, 0.0]);
    vertices.push([0.0, 1.0, 0.0]);
    let mut faces = Vec::new();
    for i in 0..segments {
        let j = (i + 1) % segments;
        let (b0, t0, b1, t1) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        faces.push([b0, t0, t1]);
        faces.push([b0, t1, b1]);
        faces.push([bottom, b0, b1]);
        faces.push([top, t1, t0]);
    }
    build(vertices, faces)
}

/// Closed cone with apex on +Y.
pub fn cone(segments: usize) -> Mesh {
    let mut vertices: Vec<Vec3> = (0..segments)
        .map(|i| {
            let (s, c) = (TAU * i as f64 / segments as f64).sin_cos();
            [c, -1.0, s]
        })
        .collect();
    let (base, apex) = (segments, segments + 1);
    vertices.push([0.0, -1.0, 0.0]);
    vertices.push([0.0, 1.0, 0.0]);
    let mut faces = Vec::new();
    for i in 0..segments {
        let j = (i + 1) % segments;
        faces.push([i, apex, j]);
        faces.push([base, i, j]);
    }
    build(vertices, faces)
}

/// Torus around Y with ring radius `major` and tube radius `minor`.
pub fn torus(major: f64, minor: f64, ring_segments: usize, tube_segments: usize) -> Mesh {
    let mut vertices = Vec::new();
    for i in 0..ring_segments {
        let (su, cu) = (TAU * i as f64 / ring_segments as f64).sin_cos();
        for j in 0..tube_segments {
            let (sv, cv) = (TAU * j as f64 / tube_segments as f64).sin_cos();
            let r = major + minor * cv;
            vertices.push([r * cu, minor * sv, r * su]);
        }
    }
    let idx = |i: usize, j: usize| (i % ring_segments) * tube_segments + j % tube_segments;
    let mut faces = Vec::new();
    for i in 0..ring_segments {
        for j in 0..tube_segments {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            faces.push([a, c, b]);
            faces.push([a, d, c]);
        }
    }
    build(vertices, faces)
}
