//! Procedural ribbon meshes and the billboard expansion that makes each
//! ribbon face the camera.
//!
//! Every atom end carries an `A` vertex that never moves and a `B`/`B'` pair
//! that the expansion pushes apart along the billboard normal. Path endpoints
//! contribute three vertices, interior junctions five (`A`, the incoming pair
//! and the outgoing pair). Each ribbon is a two-triangle rectangle between
//! its end pairs and each junction adds one triangle `(B_in, A, B_out)`.

use glam::{DVec3, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Path, PathId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum VertexTag {
    A = 0,
    B = 1,
    BPrime = 2,
}

impl VertexTag {
    fn from_u8(v: u8) -> Option<VertexTag> {
        match v {
            0 => Some(VertexTag::A),
            1 => Some(VertexTag::B),
            2 => Some(VertexTag::BPrime),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshVertex {
    pub base: Vec3,
    /// Unit direction of the ribbon this vertex belongs to.
    pub axis: Vec3,
    pub tag: VertexTag,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RibbonMesh {
    pub path_id: PathId,
    pub vertices: Vec<MeshVertex>,
    pub triangles: Vec<[u32; 3]>,
}

impl RibbonMesh {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// Drops consecutive duplicate positions (zero-length ribbons).
fn usable_positions(path: &Path) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::with_capacity(path.len());
    for &p in &path.positions {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

pub fn build_mesh(path: &Path) -> RibbonMesh {
    let pts = usable_positions(path);
    let mut mesh = RibbonMesh { path_id: path.id, ..Default::default() };
    let n = pts.len();
    if n < 2 {
        return mesh;
    }
    let axes: Vec<Vec3> = pts.windows(2).map(|w| (w[1] - w[0]).normalize()).collect();
    mesh.vertices.reserve(5 * n - 4);
    mesh.triangles.reserve(3 * n - 4);

    let push = |v: &mut Vec<MeshVertex>, base, axis, tag| {
        v.push(MeshVertex { base, axis, tag });
        (v.len() - 1) as u32
    };
    // (B, B') of the outgoing side of the previous atom
    let mut prev_out: Option<(u32, u32)> = None;
    for (i, &p) in pts.iter().enumerate() {
        let axis_in = i.checked_sub(1).map(|k| axes[k]);
        let axis_out = axes.get(i).copied();
        let a = push(&mut mesh.vertices, p, axis_out.or(axis_in).unwrap_or(Vec3::X), VertexTag::A);
        let incoming = axis_in.map(|ax| {
            (push(&mut mesh.vertices, p, ax, VertexTag::B), push(&mut mesh.vertices, p, ax, VertexTag::BPrime))
        });
        let outgoing = axis_out.map(|ax| {
            (push(&mut mesh.vertices, p, ax, VertexTag::B), push(&mut mesh.vertices, p, ax, VertexTag::BPrime))
        });
        if let (Some((b0, bp0)), Some((b1, bp1))) = (prev_out, incoming) {
            mesh.triangles.push([b0, bp0, b1]);
            mesh.triangles.push([bp0, bp1, b1]);
        }
        if let (Some((b_in, _)), Some((b_out, _))) = (incoming, outgoing) {
            mesh.triangles.push([b_in, a, b_out]);
        }
        prev_out = outgoing;
    }
    mesh
}

const DEGENERATE_CROSS: f64 = 1e-12;

/// Unit vector perpendicular to the ribbon axis and to the view ray through `a`.
/// When the camera looks straight down the axis, falls back to `axis x +Y`,
/// or `+X x axis` when the axis runs close to Y.
pub fn billboard_normal(axis: DVec3, camera: DVec3, a: DVec3) -> DVec3 {
    let view = a - camera;
    let n = axis.cross(view);
    let scale = axis.length() * view.length();
    let r = axis.normalize_or_zero();
    if n.length() > DEGENERATE_CROSS * scale && scale > 0.0 {
        let n = n.normalize();
        // one projection step restores perpendicularity lost to cancellation
        return (n - r * n.dot(r)).normalize();
    }
    let side = if r.y.abs() < 0.9 { r.cross(DVec3::Y) } else { DVec3::X.cross(r) };
    side.normalize_or(DVec3::Z)
}

/// Post-expansion vertex positions for a camera at `camera`.
pub fn expand(mesh: &RibbonMesh, camera: DVec3, width: f64) -> Vec<DVec3> {
    let half = width / 2.0;
    mesh.vertices
        .iter()
        .map(|v| {
            let base = v.base.as_dvec3();
            match v.tag {
                VertexTag::A => base,
                VertexTag::B => base + billboard_normal(v.axis.as_dvec3(), camera, base) * half,
                VertexTag::BPrime => base - billboard_normal(v.axis.as_dvec3(), camera, base) * half,
            }
        })
        .collect()
}

/// Hexagonal-cylinder baseline cost per ring and per segment.
pub const BASELINE_VERTICES_PER_JUNCTION: usize = 13;
pub const BASELINE_TRIANGLES_PER_RIBBON: usize = 13;
pub const VERTICES_PER_JUNCTION: usize = 5;
pub const TRIANGLES_PER_RIBBON: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SavingsReport {
    pub vertices: usize,
    pub triangles: usize,
    pub baseline_vertices: usize,
    pub baseline_triangles: usize,
    pub vertex_ratio: f64,
    pub triangle_ratio: f64,
    pub per_junction_vertex_ratio: f64,
    pub per_ribbon_triangle_ratio: f64,
}

pub fn savings_report(path: &Path) -> Result<SavingsReport> {
    let mesh = build_mesh(path);
    let n = usable_positions(path).len();
    if n < 3 {
        return Err(Error::InvalidParameter(format!("savings report needs at least 3 atoms, got {n}")));
    }
    let baseline_vertices = BASELINE_VERTICES_PER_JUNCTION * n;
    let baseline_triangles = BASELINE_TRIANGLES_PER_RIBBON * (n - 1);
    Ok(SavingsReport {
        vertices: mesh.vertices.len(),
        triangles: mesh.triangles.len(),
        baseline_vertices,
        baseline_triangles,
        vertex_ratio: 1.0 - mesh.vertices.len() as f64 / baseline_vertices as f64,
        triangle_ratio: 1.0 - mesh.triangles.len() as f64 / baseline_triangles as f64,
        per_junction_vertex_ratio: 1.0 - VERTICES_PER_JUNCTION as f64 / BASELINE_VERTICES_PER_JUNCTION as f64,
        per_ribbon_triangle_ratio: 1.0 - TRIANGLES_PER_RIBBON as f64 / BASELINE_TRIANGLES_PER_RIBBON as f64,
    })
}

pub const MESH_MAGIC: &[u8; 4] = b"RMSH";
pub const BUNDLE_MAGIC: &[u8; 4] = b"RMSB";
pub const MESH_VERSION: u32 = 1;
const VERTEX_BYTES: usize = 25;

/// Little-endian blob: header (magic, version, path id, vertex count,
/// triangle count), then per vertex 3+3 `f32` and a `u8` tag, then `u32`
/// index triples.
pub fn encode_mesh(mesh: &RibbonMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + mesh.vertices.len() * VERTEX_BYTES + mesh.triangles.len() * 12);
    out.extend_from_slice(MESH_MAGIC);
    for v in [MESH_VERSION, mesh.path_id, mesh.vertices.len() as u32, mesh.triangles.len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &mesh.vertices {
        for f in v.base.to_array().into_iter().chain(v.axis.to_array()) {
            out.extend_from_slice(&f.to_le_bytes());
        }
        out.push(v.tag as u8);
    }
    for t in &mesh.triangles {
        for i in t {
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Load(format!("mesh blob truncated at byte {}", self.pos)))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn vec3(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.f32()?, self.f32()?, self.f32()?))
    }
}

pub fn decode_mesh(buf: &[u8]) -> Result<RibbonMesh> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != MESH_MAGIC {
        return Err(Error::Load("bad mesh magic".into()));
    }
    let version = c.u32()?;
    if version != MESH_VERSION {
        return Err(Error::Load(format!("unsupported mesh version {version}")));
    }
    let path_id = c.u32()?;
    let nv = c.u32()? as usize;
    let nt = c.u32()? as usize;
    let expected = 20 + nv * VERTEX_BYTES + nt * 12;
    if buf.len() != expected {
        return Err(Error::Load(format!("mesh blob is {} bytes, header implies {expected}", buf.len())));
    }
    let mut mesh = RibbonMesh { path_id, vertices: Vec::with_capacity(nv), triangles: Vec::with_capacity(nt) };
    for _ in 0..nv {
        let base = c.vec3()?;
        let axis = c.vec3()?;
        let tag = c.take(1)?[0];
        let tag = VertexTag::from_u8(tag).ok_or_else(|| Error::Load(format!("bad vertex tag {tag}")))?;
        mesh.vertices.push(MeshVertex { base, axis, tag });
    }
    for _ in 0..nt {
        let t = [c.u32()?, c.u32()?, c.u32()?];
        if t.iter().any(|&i| i as usize >= nv) {
            return Err(Error::Load(format!("triangle index out of range in {t:?}")));
        }
        mesh.triangles.push(t);
    }
    Ok(mesh)
}

/// Concatenation of mesh blobs: magic, version, count, then each blob
/// prefixed by its `u32` byte length.
pub fn encode_bundle(meshes: &[RibbonMesh]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BUNDLE_MAGIC);
    out.extend_from_slice(&MESH_VERSION.to_le_bytes());
    out.extend_from_slice(&(meshes.len() as u32).to_le_bytes());
    for m in meshes {
        let blob = encode_mesh(m);
        out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
        out.extend_from_slice(&blob);
    }
    out
}

pub fn decode_bundle(buf: &[u8]) -> Result<Vec<RibbonMesh>> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != BUNDLE_MAGIC {
        return Err(Error::Load("bad bundle magic".into()));
    }
    let version = c.u32()?;
    if version != MESH_VERSION {
        return Err(Error::Load(format!("unsupported bundle version {version}")));
    }
    let count = c.u32()?;
    let mut meshes = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = c.u32()? as usize;
        meshes.push(decode_mesh(c.take(len)?)?);
    }
    if c.pos != buf.len() {
        return Err(Error::Load("trailing bytes after mesh bundle".into()));
    }
    Ok(meshes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_path(rng: &mut impl Rng, n: usize) -> Path {
        let mut p = Vec3::ZERO;
        let pts = (0..n)
            .map(|_| {
                p += Vec3::new(rng.random_range(0.1..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                p
            })
            .collect();
        Path::new(0, pts)
    }

    /// Counts by walking the layout: endpoints give 3 vertices, interior
    /// junctions 5; ribbons 2 triangles, junctions 1.
    fn enumerate_counts(n: usize) -> (usize, usize) {
        let mut verts = 0;
        let mut tris = 0;
        for i in 0..n {
            verts += if i == 0 || i == n - 1 { 3 } else { 5 };
            if i > 0 {
                tris += 2;
            }
            if i > 0 && i < n - 1 {
                tris += 1;
            }
        }
        (verts, tris)
    }

    #[test]
    fn small_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(enumerate_counts(2), (6, 2));
        assert_eq!(enumerate_counts(3), (11, 5));
        assert_eq!(enumerate_counts(100), (496, 296));
        for n in [2, 3, 100] {
            let m = build_mesh(&random_path(&mut rng, n));
            assert_eq!((m.vertices.len(), m.triangles.len()), enumerate_counts(n));
        }
    }

    #[test]
    fn short_paths_give_empty_mesh() {
        assert!(build_mesh(&Path::new(0, vec![])).is_empty());
        assert!(build_mesh(&Path::new(0, vec![Vec3::ONE])).is_empty());
        assert!(build_mesh(&Path::new(0, vec![Vec3::ONE, Vec3::ONE])).is_empty());
    }

    #[test]
    fn degenerate_ribbons_are_skipped() {
        let a = Vec3::ZERO;
        let b = Vec3::X;
        let c = Vec3::new(1.0, 1.0, 0.0);
        let m = build_mesh(&Path::new(0, vec![a, a, b, b, c]));
        assert_eq!((m.vertices.len(), m.triangles.len()), (11, 5));
    }

    #[test]
    fn junction_triangle_uses_shared_a() {
        let m = build_mesh(&Path::new(0, vec![Vec3::ZERO, Vec3::X, Vec3::new(2.0, 1.0, 0.0)]));
        let junction = m.triangles.iter().find(|t| t.iter().any(|&i| m.vertices[i as usize].tag == VertexTag::A)).unwrap();
        let [b_in, a, b_out] = junction.map(|i| m.vertices[i as usize]);
        assert_eq!(a.tag, VertexTag::A);
        assert_eq!(a.base, Vec3::X);
        assert_eq!((b_in.tag, b_out.tag), (VertexTag::B, VertexTag::B));
        assert_eq!(b_in.axis, Vec3::X);
        assert_eq!(b_out.axis, Vec3::new(1.0, 1.0, 0.0).normalize());
    }

    #[test]
    fn worked_normal_and_expansion() {
        let n = billboard_normal(DVec3::X, DVec3::new(0.0, 0.0, -1.0), DVec3::ZERO);
        assert!((n - DVec3::new(0.0, -1.0, 0.0)).length() < 1e-15);
        let mesh = RibbonMesh {
            path_id: 0,
            vertices: vec![
                MeshVertex { base: Vec3::ZERO, axis: Vec3::X, tag: VertexTag::A },
                MeshVertex { base: Vec3::ZERO, axis: Vec3::X, tag: VertexTag::B },
                MeshVertex { base: Vec3::ZERO, axis: Vec3::X, tag: VertexTag::BPrime },
            ],
            triangles: vec![],
        };
        let e = expand(&mesh, DVec3::new(0.0, 0.0, -1.0), 0.2);
        assert_eq!(e[0], DVec3::ZERO);
        assert!((e[1] - DVec3::new(0.0, -0.1, 0.0)).length() < 1e-15);
        assert!((e[2] - DVec3::new(0.0, 0.1, 0.0)).length() < 1e-15);
    }

    #[test]
    fn degenerate_normal_fallback() {
        let n = billboard_normal(DVec3::X, DVec3::new(-5.0, 0.0, 0.0), DVec3::ZERO);
        assert!((n.length() - 1.0).abs() < 1e-12 && n.dot(DVec3::X).abs() < 1e-12);
        let n = billboard_normal(DVec3::Y * 3.0, DVec3::new(0.0, -2.0, 0.0), DVec3::ZERO);
        assert!((n.length() - 1.0).abs() < 1e-12 && n.dot(DVec3::Y).abs() < 1e-12);
        let n = billboard_normal(DVec3::Z, DVec3::ZERO, DVec3::ZERO);
        assert!((n.length() - 1.0).abs() < 1e-12 && n.dot(DVec3::Z).abs() < 1e-12);
    }

    /// Cross product carried out in double-double arithmetic.
    fn cross_dd(a: DVec3, b: DVec3) -> [f64; 3] {
        fn two_prod(x: f64, y: f64) -> (f64, f64) {
            let p = x * y;
            (p, x.mul_add(y, -p))
        }
        fn diff(x: (f64, f64), y: (f64, f64)) -> f64 {
            let s = x.0 - y.0;
            let bb = s - x.0;
            let err = (x.0 - (s - bb)) + (-y.0 - bb);
            s + (err + x.1 - y.1)
        }
        [
            diff(two_prod(a.y, b.z), two_prod(a.z, b.y)),
            diff(two_prod(a.z, b.x), two_prod(a.x, b.z)),
            diff(two_prod(a.x, b.y), two_prod(a.y, b.x)),
        ]
    }

    #[test]
    fn normal_matches_extended_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5000 {
            let r = DVec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let cam = DVec3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            let a = DVec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let c = cross_dd(r, a - cam);
            let len = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            let reference = DVec3::new(c[0] / len, c[1] / len, c[2] / len);
            assert!((billboard_normal(r, cam, a) - reference).length() < 1e-9);
        }
    }

    #[test]
    fn expanded_rectangle_faces_camera() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let path = random_path(&mut rng, 2);
            let dir = DVec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0).normalize();
            let mesh = build_mesh(&path);
            let r = mesh.vertices[1].axis.as_dvec3().normalize();

            // Near camera: at each end the B-B' span and the axis form a
            // plane whose normal is the view vector with its axis part removed.
            let cam = dir * 30.0;
            let pos = expand(&mesh, cam, 0.05);
            for (b, a) in [(1usize, 0usize), (4, 1)] {
                let base = path.positions[a].as_dvec3();
                let local_n = r.cross(pos[b] - pos[b + 1]).normalize();
                let view = cam - base;
                let view_perp = (view - r * view.dot(r)).normalize();
                assert!(local_n.cross(view_perp).length() < 1e-6);
            }

            // Distant camera: both ends share one normal, so the quad is planar.
            let cam = dir * 1e9;
            let pos = expand(&mesh, cam, 0.05);
            let quad = [pos[1], pos[2], pos[4], pos[5]];
            let plane_n = (quad[1] - quad[0]).cross(quad[2] - quad[0]).normalize();
            assert!(plane_n.dot(quad[3] - quad[0]).abs() < 1e-6);
            let view_perp = (dir - r * dir.dot(r)).normalize();
            assert!(plane_n.cross(view_perp).length() < 1e-6);
        }
    }

    #[test]
    fn camera_far_along_z_keeps_xy_ribbons_flat() {
        let path = Path::new(0, vec![Vec3::ZERO, Vec3::new(1.0, 0.5, 0.0), Vec3::new(2.0, -1.0, 0.0)]);
        let mesh = build_mesh(&path);
        for p in expand(&mesh, DVec3::new(0.3, 0.2, 1e9), 0.1) {
            assert!(p.z.abs() < 1e-9);
        }
    }

    #[test]
    fn savings_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = savings_report(&random_path(&mut rng, 3)).unwrap();
        assert!((r.per_junction_vertex_ratio - 8.0 / 13.0).abs() < 1e-12);
        assert!(r.per_junction_vertex_ratio >= 0.60);
        assert!((r.per_ribbon_triangle_ratio - 10.0 / 13.0).abs() < 1e-12);
        assert!(r.per_ribbon_triangle_ratio >= 0.75);
        let long = savings_report(&random_path(&mut rng, 10_000)).unwrap();
        assert!((long.vertex_ratio - long.per_junction_vertex_ratio).abs() < 0.01);
        assert!((long.triangle_ratio - long.per_ribbon_triangle_ratio).abs() < 0.01);
        assert!(savings_report(&random_path(&mut rng, 2)).is_err());
    }

    #[test]
    fn decode_rejects_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let blob = encode_mesh(&build_mesh(&random_path(&mut rng, 5)));
        assert!(decode_mesh(&blob[..blob.len() - 1]).is_err());
        let mut bad = blob.clone();
        bad[0] = b'X';
        assert!(decode_mesh(&bad).is_err());
    }

    proptest! {
        #[test]
        fn counts_and_indices_hold(n in 2usize..200, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mesh = build_mesh(&random_path(&mut rng, n));
            prop_assert_eq!(mesh.vertices.len(), 5 * n - 4);
            prop_assert_eq!(mesh.triangles.len(), if n == 2 { 2 } else { 3 * n - 4 });
            for t in &mesh.triangles {
                prop_assert!(t.iter().all(|&i| (i as usize) < mesh.vertices.len()));
                prop_assert!(t[0] != t[1] && t[1] != t[2] && t[0] != t[2]);
            }
        }

        #[test]
        fn midpoint_of_pair_is_a(n in 2usize..30, seed in any::<u64>(), cx in -20.0f64..20.0, cy in -20.0f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mesh = build_mesh(&random_path(&mut rng, n));
            let pos = expand(&mesh, DVec3::new(cx, cy, 15.0), 0.3);
            for (i, v) in mesh.vertices.iter().enumerate() {
                if v.tag == VertexTag::B {
                    let mid = (pos[i] + pos[i + 1]) / 2.0;
                    let a = v.base.as_dvec3();
                    prop_assert!((mid - a).length() <= 1e-7 * a.length().max(1.0));
                }
            }
        }

        #[test]
        fn blob_round_trip(n in 2usize..40, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mesh = build_mesh(&random_path(&mut rng, n));
            mesh.path_id = seed as u32;
            prop_assert_eq!(decode_mesh(&encode_mesh(&mesh)).unwrap(), mesh.clone());
            prop_assert_eq!(decode_bundle(&encode_bundle(&[mesh.clone(), mesh.clone()])).unwrap(), vec![mesh.clone(), mesh]);
        }
    }
}
