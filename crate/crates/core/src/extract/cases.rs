//! The 256-case marching-cubes triangulation table, generated once from
//! cube topology instead of being transcribed.
//!
//! For every corner configuration, each cube face contributes segments that
//! cut off its inside corners. Ambiguous faces (diagonal inside corners)
//! always separate the inside corners, a choice that depends only on the
//! face's own corners, so neighboring cells agree and the surface is
//! crack-free. Segments chain into closed loops which are fan-triangulated
//! with normals facing away from the inside region. Interior diagonals never
//! lie within a cube face, since a neighboring cell could triangulate that
//! face region differently.

use std::sync::OnceLock;

/// Corner offsets in the conventional numbering: 0–3 the z = 0 face,
/// 4–7 the z = 1 face.
pub const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Corner pairs of the twelve cube edges.
pub const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

pub struct CaseTable {
    /// Bit `e` set when edge `e` is crossed.
    pub edge_mask: [u16; 256],
    /// Triangles as triples of edge indices.
    pub triangles: Vec<Vec<[u8; 3]>>,
}

pub fn case_table() -> &'static CaseTable {
    static TABLE: OnceLock<CaseTable> = OnceLock::new();
    TABLE.get_or_init(build)
}

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a))
        .expect("corners share an edge")
}

/// The six faces, corners listed counter-clockwise seen from outside.
fn faces() -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for axis in 0..3 {
        for side in 0..2 {
            let mut corners: Vec<usize> = (0..8).filter(|&c| CORNERS[c][axis] == side).collect();
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            // (e_u, e_v) is right-handed about +axis; flip for the low side.
            let sign = if side == 1 { 1.0 } else { -1.0 };
            corners.sort_by(|&a, &b| {
                let ang = |c: usize| {
                    let du = CORNERS[c][u] as f64 - 0.5;
                    let dv = CORNERS[c][v] as f64 - 0.5;
                    (sign * dv).atan2(du)
                };
                ang(a).total_cmp(&ang(b))
            });
            out.push([corners[0], corners[1], corners[2], corners[3]]);
        }
    }
    out
}

fn build() -> CaseTable {
    let faces = faces();
    let mut edge_mask = [0u16; 256];
    let mut triangles = Vec::with_capacity(256);
    for case in 0..256usize {
        let inside = |c: usize| case & (1 << c) != 0;
        for (e, [a, b]) in EDGES.iter().enumerate() {
            if inside(*a) != inside(*b) {
                edge_mask[case] |= 1 << e;
            }
        }
        // next[e] = edge reached from crossing e along the face segments.
        let mut next = [usize::MAX; 12];
        for face in &faces {
            let mut crossings: Vec<(usize, bool)> = Vec::new();
            for k in 0..4 {
                let (a, b) = (face[k], face[(k + 1) % 4]);
                if inside(a) != inside(b) {
                    crossings.push((edge_between(a, b), inside(b)));
                }
            }
            let n = crossings.len();
            for (i, &(edge, entering)) in crossings.iter().enumerate() {
                if !entering {
                    let (prev, prev_entering) = crossings[(i + n - 1) % n];
                    debug_assert!(prev_entering);
                    next[edge] = prev;
                }
            }
        }
        let mut used = [false; 12];
        let mut tris = Vec::new();
        for start in 0..12 {
            if next[start] == usize::MAX || used[start] {
                continue;
            }
            let mut ring = Vec::new();
            let mut e = start;
            while !used[e] {
                used[e] = true;
                ring.push(e as u8);
                e = next[e];
            }
            // Segments run with the inside on their left; reversing the ring
            // points the fan normals toward the outside.
            ring.reverse();
            tris.extend(triangulate(&ring).expect("every loop has a face-free triangulation"));
        }
        triangles.push(tris);
    }
    CaseTable { edge_mask, triangles }
}

fn share_face(a: u8, b: u8) -> bool {
    let [a0, a1] = EDGES[a as usize];
    let [b0, b1] = EDGES[b as usize];
    (0..3).any(|axis| {
        let side = CORNERS[a0][axis];
        [a1, b0, b1].iter().all(|&c| CORNERS[c][axis] == side)
    })
}

/// Triangulates a polygon of crossing edges, preferring a fan from the first
/// vertex, without diagonals between edges of a common face.
fn triangulate(ring: &[u8]) -> Option<Vec<[u8; 3]>> {
    let n = ring.len();
    if n == 3 {
        return Some(vec![[ring[0], ring[1], ring[2]]]);
    }
    for start in 0..n {
        let r: Vec<u8> = ring[start..].iter().chain(&ring[..start]).copied().collect();
        // Triangle (r0, r1, rk) splits the rest into two smaller polygons.
        for k in 2..n {
            let left_ok = k == 2 || !share_face(r[1], r[k]);
            let right_ok = k == n - 1 || !share_face(r[k], r[0]);
            if !(left_ok && right_ok) {
                continue;
            }
            let left = if k > 2 { triangulate(&r[1..=k]) } else { Some(Vec::new()) };
            let right_ring: Vec<u8> = r[k..].iter().chain(&r[..1]).copied().collect();
            let right = if k < n - 1 { triangulate(&right_ring) } else { Some(Vec::new()) };
            if let (Some(mut l), Some(rt)) = (left, right) {
                let mut out = vec![[r[0], r[1], r[k]]];
                out.append(&mut l);
                out.extend(rt);
                return Some(out);
            }
        }
    }
    None
}
