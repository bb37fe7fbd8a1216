mod common;

use std::collections::{BTreeSet, HashMap};

use common::square_mesh;
use hybrid_inversion::grid_mesh::{
    build_hybrid_mesh, refine_elements, transfer_field, AxisBox, HybridMesh, Point, SimplicialMesh, DEFAULT_ANGLE_FLOOR_DEG,
};
use proptest::prelude::*;

fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Facets (edges in 2D, faces in 3D) with the number of elements using them.
fn facet_counts(mesh: &SimplicialMesh) -> HashMap<Vec<usize>, usize> {
    let mut counts = HashMap::new();
    for e in mesh.elements() {
        for skip in 0..e.len() {
            let mut f: Vec<usize> = e.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &n)| n).collect();
            f.sort_unstable();
            *counts.entry(f).or_insert(0) += 1;
        }
    }
    counts
}

/// Brute-force conformity audit: every facet is shared by two elements or
/// lies on the box surface, and no node sits inside another element's edge.
fn assert_conforming(mesh: &SimplicialMesh, fem_box: &AxisBox) {
    let tol = 1e-12;
    for (f, c) in facet_counts(mesh) {
        match c {
            2 => {}
            1 => {
                let on_face = (0..mesh.dim()).any(|k| {
                    f.iter().all(|&n| (mesh.node(n)[k] - fem_box.min[k]).abs() < tol)
                        || f.iter().all(|&n| (mesh.node(n)[k] - fem_box.max[k]).abs() < tol)
                });
                assert!(on_face, "interior facet {f:?} used once");
            }
            _ => panic!("facet {f:?} used {c} times"),
        }
    }
    let mut edges = BTreeSet::new();
    for e in mesh.elements() {
        for i in 0..e.len() {
            for j in i + 1..e.len() {
                edges.insert((e[i].min(e[j]), e[i].max(e[j])));
            }
        }
    }
    for &(a, b) in &edges {
        let (pa, pb) = (mesh.node(a), mesh.node(b));
        let len = dist(pa, pb);
        for (n, p) in mesh.nodes().iter().enumerate() {
            if n == a || n == b {
                continue;
            }
            let (da, db) = (dist(p, pa), dist(p, pb));
            assert!(da + db - len > 1e-9 * len, "node {n} hangs on edge ({a}, {b})");
        }
    }
}

fn unit_square_mesh(h: f64) -> HybridMesh {
    square_mesh(1.0, 0.25, 0.75, h)
}

#[test]
fn uniform_mesh_diameters() {
    let m = square_mesh(1.0, 0.25, 0.75, 0.25);
    let h = m.fem_mesh().mesh_h();
    assert_eq!(h.len(), 8);
    assert!(h.values().iter().all(|&v| (v - 0.25 * 2f64.sqrt()).abs() < 1e-15));
}

#[test]
fn hybrid_invariants_hold_in_two_and_three_dimensions() {
    let meshes = [
        unit_square_mesh(0.0625),
        build_hybrid_mesh(&AxisBox::unit(3), &AxisBox::new(&[0.25; 3], &[0.75; 3]).unwrap(), 0.125).unwrap(),
    ];
    for m in &meshes {
        let fem = m.fem_mesh();
        assert!((fem.total_volume() - m.fem_box().volume()).abs() <= 1e-12 * m.fem_box().volume());
        for p in fem.nodes() {
            assert!(!m.domain_box().on_boundary(p, 1e-12));
        }
        for &(f, g) in &m.overlap().fem_to_fd {
            let (a, b) = (fem.node(f), m.fdm_grid().coord(g));
            assert!(dist(a, &b) <= 1e-12 * dist(a, &[0.0; 3]).max(1.0));
        }
        // Composing the two correspondences on shared nodes is the identity.
        let fd_of: HashMap<usize, usize> = m.overlap().fem_to_fd.iter().copied().collect();
        for &(g, f) in &m.overlap().fd_to_fem {
            let p = fem.node(f);
            let q = m.fdm_grid().coord(g);
            assert!(dist(p, &q) <= 1e-12);
            assert!(!fd_of.contains_key(&f), "interface node is also a surface node");
        }
        assert!(fem.min_angle_overall_deg() >= DEFAULT_ANGLE_FLOOR_DEG);
        assert_conforming(fem, m.fem_box());
    }
}

#[test]
fn single_marked_triangle_refines_conformingly() {
    let m = unit_square_mesh(0.0625);
    let fem = m.fem_mesh();
    let centre = [0.5, 0.5, 0.0];
    let k = (0..fem.element_count())
        .min_by(|&a, &b| {
            let ca = centroid(fem, a);
            let cb = centroid(fem, b);
            dist(&ca, &centre).partial_cmp(&dist(&cb, &centre)).unwrap()
        })
        .unwrap();
    let marked = BTreeSet::from([k]);
    let r = refine_elements(fem, &marked, DEFAULT_ANGLE_FLOOR_DEG).unwrap();
    assert_conforming(&r, m.fem_box());
    // Euler characteristic of a triangulated disk.
    let faces = r.element_count() as i64;
    let edges = facet_counts(&r).len() as i64;
    assert_eq!(r.node_count() as i64 - edges + faces, 1);
    assert!((r.total_volume() - fem.total_volume()).abs() < 1e-12);

    // Children of the marked triangle have half its diameter; the edge scan
    // is the oracle for mesh_h.
    let parent = fem.element(k).iter().map(|&n| *fem.node(n)).collect::<Vec<_>>();
    let parent_h = fem.diameter(k);
    let hs = r.mesh_h();
    let mut children = 0;
    for c in 0..r.element_count() {
        let e = r.element(c);
        let scan = (0..e.len())
            .flat_map(|i| (i + 1..e.len()).map(move |j| (i, j)))
            .map(|(i, j)| dist(r.node(e[i]), r.node(e[j])))
            .fold(0.0, f64::max);
        assert!((hs.values()[c] - scan).abs() < 1e-15);
        if inside_triangle(&parent, &centroid(&r, c)) {
            children += 1;
            assert!((scan - parent_h / 2.0).abs() < 1e-12, "child {c}: {scan} vs {}", parent_h / 2.0);
        }
    }
    assert_eq!(children, 4);
    // Far-field elements are untouched.
    let far: Vec<Vec<usize>> = fem.elements().filter(|e| e.iter().all(|&n| fem.node(n)[0] < 0.35)).map(|e| e.to_vec()).collect();
    for e in &far {
        let coords: Vec<Point> = e.iter().map(|&n| *fem.node(n)).collect();
        assert!(r.elements().any(|f| f.iter().zip(&coords).all(|(&n, p)| dist(r.node(n), p) < 1e-15)));
    }
}

fn centroid(mesh: &SimplicialMesh, k: usize) -> Point {
    let e = mesh.element(k);
    let mut c = [0.0; 3];
    for &n in e {
        for j in 0..3 {
            c[j] += mesh.node(n)[j] / e.len() as f64;
        }
    }
    c
}

fn inside_triangle(t: &[Point], p: &Point) -> bool {
    let cross = |a: &Point, b: &Point, c: &Point| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let s = [cross(&t[0], &t[1], p), cross(&t[1], &t[2], p), cross(&t[2], &t[0], p)];
    s.iter().all(|&v| v > 1e-14) || s.iter().all(|&v| v < -1e-14)
}

#[test]
fn three_dimensional_refinement_stays_conforming() {
    let m = build_hybrid_mesh(&AxisBox::unit(3), &AxisBox::new(&[0.25; 3], &[0.75; 3]).unwrap(), 0.125).unwrap();
    let fem = m.fem_mesh();
    let marked: BTreeSet<usize> = (0..fem.element_count()).step_by(17).collect();
    let r = refine_elements(fem, &marked, 0.0).unwrap();
    assert!(r.element_count() > fem.element_count());
    assert!((r.total_volume() - m.fem_box().volume()).abs() <= 1e-12);
    assert_conforming(&r, m.fem_box());
}

/// Piecewise-linear interpolant of nodal `values` on `mesh` at `p`, found by
/// scanning every element.
fn interpolant(mesh: &SimplicialMesh, values: &[f64], p: &Point) -> f64 {
    for e in mesh.elements() {
        let [a, b, c] = [mesh.node(e[0]), mesh.node(e[1]), mesh.node(e[2])];
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        let l0 = 1.0 - l1 - l2;
        if l0 >= -1e-12 && l1 >= -1e-12 && l2 >= -1e-12 {
            return l0 * values[e[0]] + l1 * values[e[1]] + l2 * values[e[2]];
        }
    }
    panic!("{p:?} outside the mesh");
}

#[test]
fn transfer_of_a_quadratic_matches_the_parent_interpolant() {
    let m = unit_square_mesh(0.125);
    let fem = m.fem_mesh();
    let marked: BTreeSet<usize> = (0..fem.element_count()).filter(|k| k % 3 == 0).collect();
    let fine = refine_elements(fem, &marked, DEFAULT_ANGLE_FLOOR_DEG).unwrap();
    let values: Vec<f64> = fem.nodes().iter().map(|p| p[0] * p[0]).collect();
    let moved = transfer_field(&values, fem, &fine);
    for (i, p) in fine.nodes().iter().enumerate() {
        let oracle = interpolant(fem, &values, p);
        assert!((moved[i] - oracle).abs() < 1e-14, "node {i}: {} vs {oracle}", moved[i]);
    }
}

fn refine_rounds(seed_marks: &[Vec<usize>]) -> (HybridMesh, SimplicialMesh) {
    let m = unit_square_mesh(0.125);
    let mut mesh = m.fem_mesh().clone();
    for marks in seed_marks {
        let count = mesh.element_count();
        let set: BTreeSet<usize> = marks.iter().map(|k| k % count).collect();
        mesh = refine_elements(&mesh, &set, DEFAULT_ANGLE_FLOOR_DEG).unwrap();
    }
    (m, mesh)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refinement_preserves_volume_conformity_and_angles(
        rounds in prop::collection::vec(prop::collection::vec(0usize..10_000, 0..12), 1..4)
    ) {
        let (m, mesh) = refine_rounds(&rounds);
        let vol = m.fem_box().volume();
        prop_assert!((mesh.total_volume() - vol).abs() <= 1e-12 * vol);
        prop_assert!(mesh.min_angle_overall_deg() >= DEFAULT_ANGLE_FLOOR_DEG);
        for k in 0..mesh.element_count() {
            prop_assert!(mesh.signed_volume(k) > 0.0);
        }
        assert_conforming(&mesh, m.fem_box());
    }

    #[test]
    fn self_transfer_is_identity(
        rounds in prop::collection::vec(prop::collection::vec(0usize..10_000, 0..8), 0..3),
        seed in any::<u64>()
    ) {
        let (_, mesh) = refine_rounds(&rounds);
        let v: Vec<f64> = (0..mesh.node_count()).map(|i| ((i as u64 ^ seed) % 1000) as f64 / 7.0).collect();
        prop_assert_eq!(transfer_field(&v, &mesh, &mesh), v);
    }

    #[test]
    fn transfer_reproduces_affine_fields(
        rounds in prop::collection::vec(prop::collection::vec(0usize..10_000, 1..8), 1..3),
        a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0
    ) {
        let (m, fine) = refine_rounds(&rounds);
        let coarse = m.fem_mesh();
        let f = |p: &Point| a + b * p[0] + c * p[1];
        let v: Vec<f64> = coarse.nodes().iter().map(f).collect();
        let moved = transfer_field(&v, coarse, &fine);
        for (i, p) in fine.nodes().iter().enumerate() {
            prop_assert!((moved[i] - f(p)).abs() < 1e-12);
        }
    }
}
