//! Triangle meshes, dataset-wide viewpoints and line rendering.

pub mod obj;
pub mod primitives;
pub mod render;
pub mod viewpoint;
pub mod views;

pub use obj::{load_obj, parse_obj};
pub use render::{
    project, render_lines, render_lines_sized, EdgeKind, CREASE_ANGLE_DEG, DEPTH_EPSILON,
};
pub use viewpoint::{
    pick_viewpoints, separation_deg, ViewPairConfig, Viewpoint, ELEVATION_BAND, MIN_SEPARATION_DEG,
};
pub use views::{discover_models, render_views, ModelSource, UNLABELED};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Indexed triangle mesh with +Y up.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl Mesh {
    /// Validates indices and drops zero-area faces. Fails if no face
    /// survives.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some((i, f)) = faces
            .iter()
            .enumerate()
            .find(|(_, f)| f.iter().any(|&v| v >= vertices.len()))
        {
            return Err(Error::InvalidArgument(format!(
                "face {i} {f:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        let extent = bbox_extent(&vertices, &faces).max(f64::MIN_POSITIVE);
        let min_area = 1e-12 * extent * extent;
        let faces: Vec<_> = faces
            .into_iter()
            .filter(|f| {
                let n = cross(
                    sub(vertices[f[1]], vertices[f[0]]),
                    sub(vertices[f[2]], vertices[f[0]]),
                );
                0.5 * norm(n) > min_area
            })
            .collect();
        if faces.is_empty() {
            return Err(Error::InvalidArgument(
                "mesh has no non-degenerate faces".into(),
            ));
        }
        Ok(Mesh { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Uniformly scaled and translated so the bounding box of the used
    /// vertices is centered at the origin with largest side 1.
    pub fn normalized(mut self) -> Self {
        let (lo, hi) = bbox(&self.vertices, &self.faces);
        let center = [
            0.5 * (lo[0] + hi[0]),
            0.5 * (lo[1] + hi[1]),
            0.5 * (lo[2] + hi[2]),
        ];
        let extent = (0..3).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
        let s = if extent > 0.0 { 1.0 / extent } else { 1.0 };
        for v in &mut self.vertices {
            for i in 0..3 {
                v[i] = (v[i] - center[i]) * s;
            }
        }
        self
    }

    /// Same surface with every face's winding reversed.
    pub fn flipped(&self) -> Self {
        Mesh {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    /// Rotation about +Y by `deg` degrees.
    pub fn rotated_y(mut self, deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        for v in &mut self.vertices {
            *v = [c * v[0] + s * v[2], v[1], -s * v[0] + c * v[2]];
        }
        self
    }

    /// Per-axis scaling.
    pub fn scaled(mut self, k: Vec3) -> Self {
        for v in &mut self.vertices {
            for i in 0..3 {
                v[i] *= k[i];
            }
        }
        self
    }

    /// Wavefront OBJ text with 1-based indices.
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            s.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
        }
        for f in &self.faces {
            s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        s
    }

    /// Unnormalized face normal following the winding.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.faces[f];
        cross(
            sub(self.vertices[b], self.vertices[a]),
            sub(self.vertices[c], self.vertices[a]),
        )
    }
}

fn bbox(vertices: &[Vec3], faces: &[[usize; 3]]) -> (Vec3, Vec3) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &v in faces.iter().flatten() {
        for i in 0..3 {
            lo[i] = lo[i].min(vertices[v][i]);
            hi[i] = hi[i].max(vertices[v][i]);
        }
    }
    (lo, hi)
}

fn bbox_extent(vertices: &[Vec3], faces: &[[usize; 3]]) -> f64 {
    if faces.is_empty() {
        return 0.0;
    }
    let (lo, hi) = bbox(vertices, faces);
    (0..3).map(|i| hi[i] - lo[i]).fold(0.0, f64::max)
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}
