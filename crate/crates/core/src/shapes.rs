//! Procedural test shapes: spheres, surfaces of revolution (bottles,
//! cylinders), boxes, tori and sheets. Every generator returns a cleaned
//! [`TriangleMesh`] with consistent outward orientation.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{Point3, Vector3};

use crate::mesh::TriangleMesh;

fn build(id: &str, vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> TriangleMesh {
    TriangleMesh::new(id, vertices, faces).expect("generated mesh is valid")
}

/// Subdivided icosahedron projected onto a sphere.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
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
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            *midpoint.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        for f in &faces {
            let ab = mid(f[0], f[1], &mut vertices);
            let bc = mid(f[1], f[2], &mut vertices);
            let ca = mid(f[2], f[0], &mut vertices);
            next.push([f[0], ab, ca]);
            next.push([f[1], bc, ab]);
            next.push([f[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| Point3::from(v * radius)).collect();
    build("icosphere", vertices, faces)
}

/// Axis-aligned ellipsoid with semi-axes `(a, b, c)`.
pub fn ellipsoid(a: f64, b: f64, c: f64, subdivisions: usize) -> TriangleMesh {
    icosphere(1.0, subdivisions)
        .map_vertices(|p| Point3::new(a * p.x, b * p.y, c * p.z))
        .with_id("ellipsoid")
}

/// Revolves a profile `(r, z)` around the z axis. The first and last profile
/// points must lie on the axis (`r = 0`); they become single pole vertices.
pub fn revolve(id: &str, profile: &[(f64, f64)], n_theta: usize) -> TriangleMesh {
    assert!(profile.len() >= 3 && n_theta >= 3);
    let rings = profile.len() - 2;
    let mut vertices = Vec::with_capacity(rings * n_theta + 2);
    vertices.push(Point3::new(0.0, 0.0, profile[0].1));
    for &(r, z) in &profile[1..profile.len() - 1] {
        for j in 0..n_theta {
            let a = TAU * j as f64 / n_theta as f64;
            vertices.push(Point3::new(r * a.cos(), r * a.sin(), z));
        }
    }
    let top = vertices.len();
    vertices.push(Point3::new(0.0, 0.0, profile[profile.len() - 1].1));

    let ring = |i: usize, j: usize| 1 + i * n_theta + (j % n_theta);
    let mut faces = Vec::new();
    for j in 0..n_theta {
        faces.push([0, ring(0, j + 1), ring(0, j)]);
    }
    for i in 0..rings - 1 {
        for j in 0..n_theta {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    for j in 0..n_theta {
        faces.push([top, ring(rings - 1, j), ring(rings - 1, j + 1)]);
    }
    build(id, vertices, faces)
}

/// Resamples a polyline to `n` points equally spaced in arc length.
fn resample(poly: &[(f64, f64)], n: usize) -> Vec<(f64, f64)> {
    let mut cum = vec![0.0];
    for w in poly.windows(2) {
        let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        let s = total * i as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let t = if span > 0.0 { ((s - cum[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (poly[seg], poly[seg + 1]);
        out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
    }
    out
}

/// Bottle-like surface of revolution, standing on `z = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BottleParams {
    pub body_radius: f64,
    pub body_height: f64,
    pub shoulder_height: f64,
    pub neck_radius: f64,
    pub neck_height: f64,
    /// Relative stretch of the cross-section along x (0 = circular).
    pub ellipticity: f64,
    /// Lateral x-offset of the neck top relative to the body axis (m).
    pub neck_lean: f64,
    /// Optional outward bump: (azimuth rad, height m, radius m, amplitude m).
    pub bump: Option<(f64, f64, f64, f64)>,
}

impl Default for BottleParams {
    fn default() -> Self {
        Self {
            body_radius: 0.035,
            body_height: 0.12,
            shoulder_height: 0.04,
            neck_radius: 0.013,
            neck_height: 0.04,
            ellipticity: 0.08,
            neck_lean: 0.006,
            bump: Some((0.4, 0.07, 0.02, 0.004)),
        }
    }
}

impl BottleParams {
    pub fn total_height(&self) -> f64 {
        self.body_height + self.shoulder_height + self.neck_height
    }

    fn profile(&self, samples: usize) -> Vec<(f64, f64)> {
        let mut poly = Vec::new();
        let fine = 400;
        let bevel = 0.15 * self.body_radius;
        for i in 0..=fine {
            poly.push(((self.body_radius - bevel) * i as f64 / fine as f64, 0.0));
        }
        for i in 1..=fine / 4 {
            let a = (PI / 2.0) * i as f64 / (fine / 4) as f64;
            poly.push((self.body_radius - bevel + bevel * a.sin(), bevel * (1.0 - a.cos())));
        }
        let z1 = self.body_height;
        let z2 = z1 + self.shoulder_height;
        let z3 = z2 + self.neck_height;
        for i in 1..=fine {
            let z = bevel + (z3 - bevel) * i as f64 / fine as f64;
            let r = if z <= z1 {
                self.body_radius
            } else if z <= z2 {
                let t = (z - z1) / self.shoulder_height;
                self.neck_radius + (self.body_radius - self.neck_radius) * 0.5 * (1.0 + (PI * t).cos())
            } else {
                self.neck_radius
            };
            poly.push((r, z));
        }
        for i in 1..=fine / 2 {
            poly.push((self.neck_radius * (1.0 - i as f64 / (fine / 2) as f64), z3));
        }
        resample(&poly, samples)
    }
}

/// Bottle mesh with `n_theta` vertices per ring and `n_profile` profile samples.
pub fn bottle(params: &BottleParams, n_theta: usize, n_profile: usize) -> TriangleMesh {
    let base = revolve("bottle", &params.profile(n_profile), n_theta);
    let height = params.total_height();
    let normals = base.vertex_normals();
    let vertices: Vec<Point3<f64>> = base
        .vertices()
        .iter()
        .zip(&normals)
        .map(|(p, n)| {
            let mut q = Point3::new(p.x * (1.0 + params.ellipticity), p.y, p.z);
            q.x += params.neck_lean * (p.z / height).powi(2);
            if let Some((azimuth, z0, radius, amp)) = params.bump {
                let center = Point3::new(params.body_radius * azimuth.cos(), params.body_radius * azimuth.sin(), z0);
                let d2 = (p - center).norm_squared();
                q += n * amp * (-d2 / (2.0 * radius * radius)).exp();
            }
            q
        })
        .collect();
    build("bottle", vertices, base.faces().to_vec())
}

/// Closed cylinder standing on `z = 0`.
pub fn cylinder(radius: f64, height: f64, n_theta: usize, n_profile: usize) -> TriangleMesh {
    let poly = vec![(0.0, 0.0), (radius, 0.0), (radius, height), (0.0, height)];
    revolve("cylinder", &resample(&poly, n_profile), n_theta)
}

/// Box `[0, sx] × [0, sy] × [0, sz]` with `n` segments per unit-length edge
/// scaled per axis (at least one).
pub fn cuboid(sx: f64, sy: f64, sz: f64, segments: usize) -> TriangleMesh {
    let longest = sx.max(sy).max(sz);
    let seg = |len: f64| ((segments as f64 * len / longest).round() as usize).max(1);
    let (nx, ny, nz) = (seg(sx), seg(sy), seg(sz));
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    // each face: origin, two spanning vectors, segment counts; spans ordered for outward normals
    let o = Point3::origin();
    let ex = Vector3::new(sx, 0.0, 0.0);
    let ey = Vector3::new(0.0, sy, 0.0);
    let ez = Vector3::new(0.0, 0.0, sz);
    let panels = [
        (o, ey, ex, ny, nx),
        (o + ez, ex, ey, nx, ny),
        (o, ex, ez, nx, nz),
        (o + ey, ez, ex, nz, nx),
        (o, ez, ey, nz, ny),
        (o + ex, ey, ez, ny, nz),
    ];
    for (origin, u, v, nu, nv) in panels {
        let base = vertices.len();
        for i in 0..=nu {
            for j in 0..=nv {
                vertices.push(origin + u * (i as f64 / nu as f64) + v * (j as f64 / nv as f64));
            }
        }
        let idx = |i: usize, j: usize| base + i * (nv + 1) + j;
        for i in 0..nu {
            for j in 0..nv {
                faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
    }
    build("cuboid", vertices, faces)
}

/// Torus around the z axis, centered at the origin.
pub fn torus(major: f64, minor: f64, n_major: usize, n_minor: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let u = TAU * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let v = TAU * j as f64 / n_minor as f64;
            let r = major + minor * v.cos();
            vertices.push(Point3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % n_major) * n_minor + (j % n_minor);
    let mut faces = Vec::new();
    for i in 0..n_major {
        for j in 0..n_minor {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    build("torus", vertices, faces)
}

/// Planar sheet over the quadrilateral `corners` (counter-clockwise, z = 0),
/// triangulated from a bilinear `nx × ny` grid.
pub fn sheet(corners: [(f64, f64); 4], nx: usize, ny: usize) -> TriangleMesh {
    let mut vertices = Vec::new();
    for i in 0..=nx {
        let s = i as f64 / nx as f64;
        for j in 0..=ny {
            let t = j as f64 / ny as f64;
            let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
            let x = (0..4).map(|c| w[c] * corners[c].0).sum();
            let y = (0..4).map(|c| w[c] * corners[c].1).sum();
            vertices.push(Point3::new(x, y, 0.0));
        }
    }
    let idx = |i: usize, j: usize| i * (ny + 1) + j;
    let mut faces = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    build("sheet", vertices, faces)
}

/// Rolls a planar sheet onto a cylinder of radius `radius` around an axis
/// parallel to y. Lengths along x become arc lengths, so the map is an
/// isometry of the continuous surface.
pub fn bend_sheet(sheet: &TriangleMesh, radius: f64) -> TriangleMesh {
    sheet
        .map_vertices(|p| {
            let a = p.x / radius;
            Point3::new(radius * a.sin(), p.y, radius * (1.0 - a.cos()))
        })
        .with_id("bent_sheet")
}

/// Displaces vertices along their normals by Gaussian bumps
/// `(center, radius, amplitude)`; breaks the symmetries of primitive shapes.
pub fn with_bumps(mesh: &TriangleMesh, bumps: &[(Point3<f64>, f64, f64)]) -> TriangleMesh {
    let normals = mesh.vertex_normals();
    let vertices = mesh
        .vertices()
        .iter()
        .zip(&normals)
        .map(|(p, n)| {
            let lift: f64 = bumps.iter().map(|(c, r, a)| a * (-(p - c).norm_squared() / (2.0 * r * r)).exp()).sum();
            p + n * lift
        })
        .collect();
    build(mesh.id(), vertices, mesh.faces().to_vec())
}

impl TriangleMesh {
    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut normals = vec![Vector3::zeros(); self.vertex_count()];
        let v = self.vertices();
        for f in self.faces() {
            let n = (v[f[1]] - v[f[0]]).cross(&(v[f[2]] - v[f[0]]));
            for &i in f {
                normals[i] += n;
            }
        }
        normals.into_iter().map(|n| n.try_normalize(0.0).unwrap_or_else(Vector3::z)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euler_characteristic(m: &TriangleMesh) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for f in m.faces() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        m.vertex_count() as i64 - edges.len() as i64 + m.face_count() as i64
    }

    #[test]
    fn topology() {
        assert_eq!(euler_characteristic(&icosphere(1.0, 2)), 2);
        assert_eq!(euler_characteristic(&bottle(&BottleParams::default(), 24, 20)), 2);
        assert_eq!(euler_characteristic(&cylinder(0.03, 0.1, 20, 20)), 2);
        assert_eq!(euler_characteristic(&cuboid(1.0, 1.0, 1.0, 4)), 2);
        assert_eq!(euler_characteristic(&torus(0.1, 0.03, 16, 8)), 0);
        assert_eq!(euler_characteristic(&sheet([(0., 0.), (1., 0.), (1., 1.), (0., 1.)], 4, 4)), 1);
    }

    #[test]
    fn closed_meshes_enclose_positive_volume() {
        for m in [icosphere(1.0, 2), bottle(&BottleParams::default(), 24, 30), cuboid(1.0, 2.0, 0.5, 4), torus(0.1, 0.03, 16, 8)] {
            let v = m.vertices();
            let volume: f64 = m
                .faces()
                .iter()
                .map(|f| v[f[0]].coords.dot(&v[f[1]].coords.cross(&v[f[2]].coords)) / 6.0)
                .sum();
            assert!(volume > 0.0, "{} volume {volume}", m.id());
        }
    }

    #[test]
    fn cube_volume_and_area() {
        let m = cuboid(1.0, 1.0, 1.0, 5);
        assert!((m.total_area() - 6.0).abs() < 1e-12);
        // 6 (n-1)^2 face-interior + 12 (n-1) edge-interior + 8 corners, n = 6 points per edge
        assert_eq!(m.vertex_count(), 6 * 16 + 12 * 4 + 8);
    }

    #[test]
    fn bending_preserves_lengths_along_rulings() {
        let flat = sheet([(0., 0.), (0.3, 0.), (0.3, 0.2), (0., 0.2)], 10, 6);
        let bent = bend_sheet(&flat, 0.5);
        let ratio = bent.total_area() / flat.total_area();
        assert!((ratio - 1.0).abs() < 1e-3);
    }
}
