use super::*;
use crate::synth;
use nalgebra::UnitQuaternion;
use proptest::prelude::*;

// Bourke's published edge table, used as an independent check on the
// generated case table.
const REFERENCE_EDGE_TABLE: [u16; 256] = [
    0x0, 0x109, 0x203, 0x30a, 0x406, 0x50f, 0x605, 0x70c,
    0x80c, 0x905, 0xa0f, 0xb06, 0xc0a, 0xd03, 0xe09, 0xf00,
    0x190, 0x99, 0x393, 0x29a, 0x596, 0x49f, 0x795, 0x69c,
    0x99c, 0x895, 0xb9f, 0xa96, 0xd9a, 0xc93, 0xf99, 0xe90,
    0x230, 0x339, 0x33, 0x13a, 0x636, 0x73f, 0x435, 0x53c,
    0xa3c, 0xb35, 0x83f, 0x936, 0xe3a, 0xf33, 0xc39, 0xd30,
    0x3a0, 0x2a9, 0x1a3, 0xaa, 0x7a6, 0x6af, 0x5a5, 0x4ac,
    0xbac, 0xaa5, 0x9af, 0x8a6, 0xfaa, 0xea3, 0xda9, 0xca0,
    0x460, 0x569, 0x663, 0x76a, 0x66, 0x16f, 0x265, 0x36c,
    0xc6c, 0xd65, 0xe6f, 0xf66, 0x86a, 0x963, 0xa69, 0xb60,
    0x5f0, 0x4f9, 0x7f3, 0x6fa, 0x1f6, 0xff, 0x3f5, 0x2fc,
    0xdfc, 0xcf5, 0xfff, 0xef6, 0x9fa, 0x8f3, 0xbf9, 0xaf0,
    0x650, 0x759, 0x453, 0x55a, 0x256, 0x35f, 0x55, 0x15c,
    0xe5c, 0xf55, 0xc5f, 0xd56, 0xa5a, 0xb53, 0x859, 0x950,
    0x7c0, 0x6c9, 0x5c3, 0x4ca, 0x3c6, 0x2cf, 0x1c5, 0xcc,
    0xfcc, 0xec5, 0xdcf, 0xcc6, 0xbca, 0xac3, 0x9c9, 0x8c0,
    0x8c0, 0x9c9, 0xac3, 0xbca, 0xcc6, 0xdcf, 0xec5, 0xfcc,
    0xcc, 0x1c5, 0x2cf, 0x3c6, 0x4ca, 0x5c3, 0x6c9, 0x7c0,
    0x950, 0x859, 0xb53, 0xa5a, 0xd56, 0xc5f, 0xf55, 0xe5c,
    0x15c, 0x55, 0x35f, 0x256, 0x55a, 0x453, 0x759, 0x650,
    0xaf0, 0xbf9, 0x8f3, 0x9fa, 0xef6, 0xfff, 0xcf5, 0xdfc,
    0x2fc, 0x3f5, 0xff, 0x1f6, 0x6fa, 0x7f3, 0x4f9, 0x5f0,
    0xb60, 0xa69, 0x963, 0x86a, 0xf66, 0xe6f, 0xd65, 0xc6c,
    0x36c, 0x265, 0x16f, 0x66, 0x76a, 0x663, 0x569, 0x460,
    0xca0, 0xda9, 0xea3, 0xfaa, 0x8a6, 0x9af, 0xaa5, 0xbac,
    0x4ac, 0x5a5, 0x6af, 0x7a6, 0xaa, 0x1a3, 0x2a9, 0x3a0,
    0xd30, 0xc39, 0xf33, 0xe3a, 0x936, 0x83f, 0xb35, 0xa3c,
    0x53c, 0x435, 0x73f, 0x636, 0x13a, 0x33, 0x339, 0x230,
    0xe90, 0xf99, 0xc93, 0xd9a, 0xa96, 0xb9f, 0x895, 0x99c,
    0x69c, 0x795, 0x49f, 0x596, 0x29a, 0x393, 0x99, 0x190,
    0xf00, 0xe09, 0xd03, 0xc0a, 0xb06, 0xa0f, 0x905, 0x80c,
    0x70c, 0x605, 0x50f, 0x406, 0x30a, 0x203, 0x109, 0x0,
];

fn blob(mean: Vector3<f64>, sigma: f64, opacity: f64) -> GaussianKernel {
    GaussianKernel::isotropic(mean, sigma, opacity, [0.5, 0.5, 0.5])
}

fn sphere_radii(mesh: &TriangleMesh, center: Vector3<f64>) -> Vec<f64> {
    mesh.vertices.iter().map(|v| (v - center).norm()).collect()
}

#[test]
fn generated_edge_masks_match_reference() {
    assert_eq!(cases::case_table().edge_mask, REFERENCE_EDGE_TABLE);
}

#[test]
fn case_triangles_use_only_crossed_edges() {
    let t = cases::case_table();
    for case in 0..256 {
        let mut used = 0u16;
        for tri in &t.triangles[case] {
            for &e in tri {
                used |= 1 << e;
            }
        }
        assert_eq!(used, t.edge_mask[case], "case {case}");
    }
    assert!(t.triangles[0].is_empty() && t.triangles[255].is_empty());
}

#[test]
fn complementary_cases_have_opposite_orientation() {
    let t = cases::case_table();
    // Single-corner case: the normal must point away from the inside corner.
    for corner in 0..8 {
        let tris = &t.triangles[1 << corner];
        assert_eq!(tris.len(), 1);
        let mid = |e: u8| {
            let [a, b] = EDGES[e as usize];
            (0..3).map(|i| (CORNERS[a][i] + CORNERS[b][i]) as f64 / 2.0).collect::<Vec<_>>()
        };
        let p: Vec<Vector3<f64>> = tris[0].iter().map(|&e| Vector3::from_vec(mid(e))).collect();
        let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
        let c = Vector3::new(CORNERS[corner][0] as f64, CORNERS[corner][1] as f64, CORNERS[corner][2] as f64);
        assert!(n.dot(&(p[0] - c)) > 0.0, "corner {corner}");
    }
}

#[test]
fn density_far_away_is_negligible() {
    let scene = SplatScene::new(vec![blob(Vector3::zeros(), 0.3, 1.0)]);
    assert!(density_at(&scene, &Vector3::new(10.0, 0.0, 0.0)) < 1e-5);
}

#[test]
fn density_at_mean_equals_opacity() {
    let scene = SplatScene::new(vec![blob(Vector3::new(1.0, 2.0, 3.0), 0.3, 0.7)]);
    assert!((density_at(&scene, &Vector3::new(1.0, 2.0, 3.0)) - 0.7).abs() < 1e-12);
}

#[test]
fn density_midpoint_of_two_kernels() {
    let s = 0.4;
    let scene = SplatScene::new(vec![blob(Vector3::zeros(), s, 1.0), blob(Vector3::new(2.0 * s, 0.0, 0.0), s, 1.0)]);
    let expected = 2.0 * (-0.5f64).exp();
    assert!((density_at(&scene, &Vector3::new(s, 0.0, 0.0)) - expected).abs() < 1e-12);
    assert!((expected - 1.2131).abs() < 1e-4);
}

#[test]
fn grid_samples_match_pointwise_density() {
    let scene = synth::random_scene(4, 40, 0.5, (0.05, 0.2), 0);
    let bounds = extraction_bounds(&scene, 0.05).unwrap();
    let grid = DensityGrid::sample(&scene, &bounds, 0.05).unwrap();
    for (i, j, k) in [(0, 0, 0), (3, 7, 11), (grid.dims[0] / 2, grid.dims[1] / 2, grid.dims[2] / 2)] {
        let expected = density_at(&scene, &grid.point(i, j, k));
        assert!((grid.value(i, j, k) - expected).abs() < 1e-12);
    }
    assert!(grid.samples.iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn single_kernel_sphere() {
    let s = 0.5;
    let iso = 0.1;
    let cell = 0.05;
    let scene = SplatScene::new(vec![blob(Vector3::zeros(), s, 1.0)]);
    let out = extract_mesh(&scene, iso, cell).unwrap();
    let r = s * (2.0 * (1.0f64 / iso).ln()).sqrt();
    assert!((r - 1.0730).abs() < 1e-4);
    let radii = sphere_radii(&out.mesh, Vector3::zeros());
    assert!(radii.iter().all(|x| (x - r).abs() <= cell));
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    assert!((mean - r).abs() / r < 0.05);
    assert_eq!(out.mesh.euler_characteristic(), 2);
    assert!(out.mesh.is_closed_manifold());
    assert!(out.mesh.signed_volume() > 0.0, "faces must wind outward");
    assert!(!out.empty);
}

#[test]
fn vertices_lie_near_iso_level() {
    let scene = synth::random_scene(8, 12, 0.6, (0.1, 0.25), 0);
    let iso = 0.2;
    let cell = 0.03;
    let out = extract_mesh(&scene, iso, cell).unwrap();
    // Linear interpolation error is bounded by the field's variation across a cell.
    let steep = scene.kernels.iter().map(|k| k.opacity / k.max_scale().min(k.scale.min())).sum::<f64>();
    let bound = (0.05 * iso).max(steep * cell * (-0.5f64).exp());
    for v in &out.mesh.vertices {
        assert!((density_at(&scene, v) - iso).abs() <= bound);
    }
}

#[test]
fn halving_cell_does_not_increase_radius_error() {
    let (s, iso) = (0.5, 0.1);
    let r = s * (2.0 * 10f64.ln()).sqrt();
    let scene = SplatScene::new(vec![blob(Vector3::new(0.013, -0.007, 0.021), s, 1.0)]);
    let err = |cell: f64| {
        let m = extract_mesh(&scene, iso, cell).unwrap().mesh;
        let radii = sphere_radii(&m, scene.kernels[0].mean);
        (radii.iter().sum::<f64>() / radii.len() as f64 - r).abs()
    };
    let mut prev = err(0.2);
    for cell in [0.1, 0.05, 0.025] {
        let e = err(cell);
        assert!(e <= prev, "cell {cell}: {e} > {prev}");
        prev = e;
    }
}

#[test]
fn iso_above_peak_gives_empty_mesh() {
    let scene = SplatScene::new(vec![blob(Vector3::zeros(), 0.5, 1.0)]);
    let out = extract_mesh(&scene, 2.0, 0.05).unwrap();
    assert!(out.empty);
    assert!(out.mesh.vertices.is_empty() && out.mesh.faces.is_empty());
}

#[test]
fn empty_scene_is_an_error() {
    assert!(matches!(extract_mesh(&SplatScene::default(), 0.1, 0.1), Err(Error::EmptyScene)));
}

#[test]
fn bad_parameters_are_rejected() {
    let scene = SplatScene::new(vec![blob(Vector3::zeros(), 0.5, 1.0)]);
    for (iso, cell) in [(0.0, 0.1), (-1.0, 0.1), (0.1, 0.0), (0.1, f64::NAN)] {
        assert!(matches!(extract_mesh(&scene, iso, cell), Err(Error::InvalidParameter(_))));
    }
    assert!(matches!(extract_mesh(&scene, 0.1, 1e-6), Err(Error::InvalidParameter(_))));
}

#[test]
fn two_blobs_give_two_components() {
    let scene = SplatScene::new(vec![blob(Vector3::zeros(), 0.3, 1.0), blob(Vector3::new(3.0, 0.0, 0.0), 0.3, 1.0)]);
    let out = extract_mesh(&scene, 0.1, 0.05).unwrap();
    assert_eq!(out.mesh.connected_components(), 2);
    assert_eq!(out.mesh.euler_characteristic(), 4);
    assert!(out.mesh.is_closed_manifold());
}

#[test]
fn anisotropic_rotated_blob_is_closed() {
    let k = GaussianKernel::new(
        Vector3::new(0.1, 0.2, -0.3),
        UnitQuaternion::from_euler_angles(0.3, 0.9, -0.4),
        Vector3::new(0.6, 0.15, 0.3),
        0.9,
        crate::splat::sh::ShCoeffs::from_rgb([0.2, 0.4, 0.6]),
        0,
    )
    .unwrap();
    let out = extract_mesh(&SplatScene::new(vec![k]), 0.1, 0.04).unwrap();
    assert_eq!(out.mesh.euler_characteristic(), 2);
    assert!(out.mesh.is_closed_manifold());
    assert!(out.mesh.signed_volume() > 0.0);
}

#[test]
fn mesh_object_filters_segments() {
    let a = blob(Vector3::zeros(), 0.3, 1.0).with_object(0);
    let b = blob(Vector3::new(3.0, 0.0, 0.0), 0.3, 1.0).with_object(1);
    let scene = SplatScene::new(vec![a, b.clone()]);
    let only = mesh_object(&scene, 1, 0.1, 0.05).unwrap().mesh;
    let alone = extract_mesh(&SplatScene::new(vec![b]), 0.1, 0.05).unwrap().mesh;
    assert_eq!(only, alone);
    assert!(only.vertices.iter().all(|v| v.x > 2.0));
    assert!(matches!(mesh_object(&scene, 7, 0.1, 0.05), Err(Error::NotFound(_))));
}

#[test]
fn default_cell_size_divides_diagonal() {
    let scene = SplatScene::new(vec![blob(Vector3::zeros(), 0.5, 1.0)]);
    let cell = default_cell_size(&scene).unwrap();
    assert!((cell - 3.0 * 3f64.sqrt() / 128.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Any field that vanishes on the grid boundary yields a closed,
    /// consistently oriented surface.
    #[test]
    fn random_fields_give_closed_manifolds(seed in any::<u64>(), iso in 0.2f64..0.8) {
        use rand::Rng;
        let mut rng = synth::rng(seed);
        let n = 7;
        let mut samples = vec![0.0; n * n * n];
        for k in 1..n - 1 {
            for j in 1..n - 1 {
                for i in 1..n - 1 {
                    samples[(k * n + j) * n + i] = rng.random_range(0.0..1.0);
                }
            }
        }
        let grid = DensityGrid { origin: Vector3::zeros(), cell_size: 1.0, dims: [n, n, n], samples };
        let mesh = march(&grid, iso).unwrap();
        prop_assert!(mesh.is_closed_manifold());
        if !mesh.faces.is_empty() {
            prop_assert!(mesh.signed_volume() > 0.0);
        }
    }
}
