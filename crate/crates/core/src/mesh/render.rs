//! Orthographic line rendering with hidden-line removal.
//!
//! Drawn edges are silhouettes (one incident face toward the camera, the
//! other away), open boundaries and creases sharper than
//! [`CREASE_ANGLE_DEG`]. Each edge is sampled at sub-pixel spacing; a sample
//! is inked when no face covering that exact image point lies more than
//! [`DEPTH_EPSILON`] in front of it. Faces are binned per pixel so the
//! coverage query only visits nearby triangles.

use std::collections::BTreeMap;

use super::viewpoint::Viewpoint;
use super::{cross, dot, normalize, Mesh, Vec3};
use crate::dataset::preprocess::ACTIVE_SIZE;
use crate::dataset::GrayImage;
use crate::nn::INPUT_SIZE;

pub const CREASE_ANGLE_DEG: f64 = 40.0;
/// Depth tolerance in unit-cube units.
pub const DEPTH_EPSILON: f64 = 1e-3;
const SAMPLES_PER_PIXEL: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeKind {
    Silhouette,
    Boundary,
    Crease,
    /// Shared by three or more faces.
    NonManifold,
}

/// Projects every vertex to `(x, y, depth)`. `x, y` are canvas coordinates
/// for a `size`-pixel square whose origin is the top-left corner, with the
/// view axis at the center and the projected extent fitted to the central
/// `active` pixels. Depth grows away from the camera.
pub fn project_sized(mesh: &Mesh, viewpoint: &Viewpoint, size: usize, active: usize) -> Vec<Vec3> {
    let d = viewpoint.direction();
    let right = normalize(cross([0.0, 1.0, 0.0], d));
    let up = cross(d, right);
    let raw: Vec<Vec3> = mesh
        .vertices()
        .iter()
        .map(|&p| [dot(p, right), dot(p, up), -dot(p, d)])
        .collect();
    let reach = mesh
        .faces()
        .iter()
        .flatten()
        .map(|&v| raw[v][0].abs().max(raw[v][1].abs()))
        .fold(0.0, f64::max);
    let half = active as f64 / 2.0;
    let scale = if reach > 0.0 { half / reach } else { 1.0 };
    let c = size as f64 / 2.0;
    raw.into_iter()
        .map(|[x, y, z]| [c + scale * x, c - scale * y, z])
        .collect()
}

/// [`project_sized`] onto the 100×100 canvas with a 90×90 active area.
pub fn project(mesh: &Mesh, viewpoint: &Viewpoint) -> Vec<Vec3> {
    project_sized(mesh, viewpoint, INPUT_SIZE, ACTIVE_SIZE)
}

/// Edges to draw for `viewpoint`, keyed by sorted vertex pair.
pub fn classify_edges(mesh: &Mesh, viewpoint: &Viewpoint) -> BTreeMap<(usize, usize), EdgeKind> {
    let d = viewpoint.direction();
    let normals: Vec<Vec3> = (0..mesh.faces().len())
        .map(|f| normalize(mesh.face_normal(f)))
        .collect();
    let mut incident: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (f, tri) in mesh.faces().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            incident.entry((a.min(b), a.max(b))).or_default().push(f);
        }
    }
    let cos_crease = CREASE_ANGLE_DEG.to_radians().cos();
    let mut edges = BTreeMap::new();
    for (key, faces) in incident {
        let kind = match faces.as_slice() {
            [_] => Some(EdgeKind::Boundary),
            &[f, g] => {
                let front_f = dot(normals[f], d) > 0.0;
                let front_g = dot(normals[g], d) > 0.0;
                if front_f != front_g {
                    Some(EdgeKind::Silhouette)
                } else if dot(normals[f], normals[g]) < cos_crease {
                    Some(EdgeKind::Crease)
                } else {
                    None
                }
            }
            _ => Some(EdgeKind::NonManifold),
        };
        if let Some(k) = kind {
            edges.insert(key, k);
        }
    }
    edges
}

/// Per-pixel lists of faces whose screen bounding box touches the pixel.
struct FaceBins<'a> {
    size: usize,
    bins: Vec<Vec<u32>>,
    proj: &'a [Vec3],
    faces: &'a [[usize; 3]],
}

impl<'a> FaceBins<'a> {
    fn new(proj: &'a [Vec3], faces: &'a [[usize; 3]], size: usize) -> Self {
        let mut bins = vec![Vec::new(); size * size];
        let clamp = |v: f64| v.floor().clamp(0.0, size as f64 - 1.0) as usize;
        for (f, tri) in faces.iter().enumerate() {
            let [a, b, c] = tri.map(|v| proj[v]);
            let area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            if area.abs() < 1e-12 {
                continue;
            }
            let (x0, x1) = (a[0].min(b[0]).min(c[0]), a[0].max(b[0]).max(c[0]));
            let (y0, y1) = (a[1].min(b[1]).min(c[1]), a[1].max(b[1]).max(c[1]));
            if x1 < 0.0 || y1 < 0.0 || x0 >= size as f64 || y0 >= size as f64 {
                continue;
            }
            for y in clamp(y0)..=clamp(y1) {
                for x in clamp(x0)..=clamp(x1) {
                    bins[y * size + x].push(f as u32);
                }
            }
        }
        FaceBins {
            size,
            bins,
            proj,
            faces,
        }
    }

    /// Smallest depth of any face covering image point `(x, y)`.
    fn nearest_depth(&self, x: f64, y: f64) -> f64 {
        let (px, py) = (x.floor(), y.floor());
        if px < 0.0 || py < 0.0 || px >= self.size as f64 || py >= self.size as f64 {
            return f64::INFINITY;
        }
        let mut best = f64::INFINITY;
        for &f in &self.bins[py as usize * self.size + px as usize] {
            let [a, b, c] = self.faces[f as usize].map(|v| self.proj[v]);
            let area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            let wa = ((b[0] - x) * (c[1] - y) - (b[1] - y) * (c[0] - x)) / area;
            let wb = ((c[0] - x) * (a[1] - y) - (c[1] - y) * (a[0] - x)) / area;
            let wc = 1.0 - wa - wb;
            const TOL: f64 = -1e-9;
            if wa >= TOL && wb >= TOL && wc >= TOL {
                best = best.min(wa * a[2] + wb * b[2] + wc * c[2]);
            }
        }
        best
    }
}

/// Line drawing of `mesh` from `viewpoint` on a `size`×`size` canvas, ink
/// `1`. The projection is fitted to the central `0.9·size` pixels.
pub fn render_lines_sized(mesh: &Mesh, viewpoint: &Viewpoint, size: usize) -> GrayImage {
    let active = (size * ACTIVE_SIZE) / INPUT_SIZE;
    let proj = project_sized(mesh, viewpoint, size, active);
    let bins = FaceBins::new(&proj, mesh.faces(), size);
    let mut img = GrayImage::new(size, size);
    for &(a, b) in classify_edges(mesh, viewpoint).keys() {
        let (p, q) = (proj[a], proj[b]);
        let len = (q[0] - p[0]).hypot(q[1] - p[1]);
        let steps = (len * SAMPLES_PER_PIXEL).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let x = p[0] + t * (q[0] - p[0]);
            let y = p[1] + t * (q[1] - p[1]);
            let depth = p[2] + t * (q[2] - p[2]);
            if x < 0.0 || y < 0.0 || x >= size as f64 || y >= size as f64 {
                continue;
            }
            if depth <= bins.nearest_depth(x, y) + DEPTH_EPSILON {
                img.set(x as usize, y as usize, 1.0);
            }
        }
    }
    img
}

/// [`render_lines_sized`] at the 100×100 network input size.
pub fn render_lines(mesh: &Mesh, viewpoint: &Viewpoint) -> GrayImage {
    render_lines_sized(mesh, viewpoint, INPUT_SIZE)
}
