use std::sync::Arc;

use proptest::prelude::*;
use stokes_core::fem::{DiscreteField, DofMap};
use stokes_core::linalg::{factorize, norm2, SparseMatrix};
use stokes_core::mesh::{generate_disk_mesh, generate_unit_square_mesh, select_region, RegionMask, RegionSpec};
use stokes_core::operators::{apply_p, apply_t, inner_with_p, p1_inner, p1_norm, random_smooth_field};

const TOL: f64 = 1e-12;

fn square() -> (Arc<DofMap>, RegionMask) {
    let mesh = Arc::new(generate_unit_square_mesh(7).unwrap());
    let mask = select_region(&mesh, &RegionSpec::LayerBand { layers: 1 }, true).unwrap();
    (Arc::new(DofMap::new(mesh)), mask)
}

fn disk() -> (Arc<DofMap>, RegionMask) {
    let mesh = Arc::new(generate_disk_mesh([0.0, 0.0], 1.0, 5, 30).unwrap());
    let spec = RegionSpec::InteriorDisk {
        center: [0.3, -0.1],
        radius: 0.45,
    };
    let mask = select_region(&mesh, &spec, true).unwrap();
    (Arc::new(DofMap::new(mesh)), mask)
}

fn field(dofs: &Arc<DofMap>, values: &[f64]) -> DiscreteField {
    let nv = dofs.mesh().num_vertices();
    let v: Vec<f64> = values.iter().cycle().take(nv).copied().collect();
    DiscreteField::interpolate_p1(dofs.clone(), |_| 0.0)
        .with_values(v)
        .unwrap()
}

fn max_diff(a: &DiscreteField, b: &DiscreteField) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn check_algebra(dofs: &Arc<DofMap>, mask: &RegionMask, f: &DiscreteField, g: &DiscreteField) {
    let scale = f.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));

    let t = apply_t(f).unwrap();
    assert!(max_diff(&apply_t(&t).unwrap(), &t) <= TOL * scale, "T idempotent");

    let p = apply_p(f, mask).unwrap();
    assert_eq!(apply_p(&p, mask).unwrap().values(), p.values(), "P idempotent");

    let (nt, nf) = (p1_norm(&t), p1_norm(f));
    assert!(nt <= 2.0 * nf * (1.0 + TOL), "continuity bound");
    assert!(nt <= nf * (1.0 + TOL), "orthogonal projection bound");

    // Band-space f (zero on Delta) against zero-mean g.
    let fb = apply_p(f, mask).unwrap();
    let g0 = apply_t(g).unwrap();
    let lhs = p1_inner(&apply_t(&fb).unwrap(), &g0, |_| true);
    let rhs = inner_with_p(&fb, &g0, mask);
    assert!(
        (lhs - rhs).abs() <= TOL * p1_norm(&fb).max(1.0) * p1_norm(&g0).max(1.0),
        "adjoint identity: {lhs} vs {rhs}"
    );

    // T of a band-space field is constant on Delta.
    let tb = apply_t(&fb).unwrap();
    let on_delta: Vec<f64> = mask.constrained_vertices().iter().map(|&v| tb.values()[v]).collect();
    let spread = on_delta.iter().fold(f64::MIN, |a, &b| a.max(b)) - on_delta.iter().fold(f64::MAX, |a, &b| a.min(b));
    assert!(
        spread <= TOL * p1_norm(&fb).max(1.0),
        "range constant on Delta: {spread}"
    );
    assert_eq!(dofs.mesh().num_vertices(), tb.values().len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn square_operator_algebra(a in prop::collection::vec(-1e3f64..1e3, 64), b in prop::collection::vec(-1.0f64..1.0, 64)) {
        let (dofs, mask) = square();
        check_algebra(&dofs, &mask, &field(&dofs, &a), &field(&dofs, &b));
    }

    #[test]
    fn disk_operator_algebra(a in prop::collection::vec(-1.0f64..1.0, 91), b in prop::collection::vec(-5.0f64..5.0, 91)) {
        let (dofs, mask) = disk();
        check_algebra(&dofs, &mask, &field(&dofs, &a), &field(&dofs, &b));
    }

    #[test]
    fn smooth_fields_operator_algebra(s1 in any::<u64>(), s2 in any::<u64>(), modes in 1usize..6) {
        let (dofs, mask) = square();
        let f = random_smooth_field(dofs.clone(), s1, modes);
        let g = random_smooth_field(dofs.clone(), s2, modes);
        check_algebra(&dofs, &mask, &f, &g);
    }

    #[test]
    fn factorization_is_left_inverse(x in prop::collection::vec(-1.0f64..1.0, 30), shift in 0.5f64..4.0) {
        // Nonsymmetric tridiagonal plus a zero-diagonal coupling row.
        let n = x.len();
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.push((i, i, shift + i as f64 / n as f64));
            if i + 1 < n - 1 {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -0.5));
            }
            t.push((n - 1, i, 1.0));
            t.push((i, n - 1, 1.0));
        }
        let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
        let lu = factorize(&a).unwrap();
        let y = lu.solve(&a.matvec(&x).unwrap()).unwrap();
        let err: Vec<f64> = y.iter().zip(&x).map(|(p, q)| p - q).collect();
        prop_assert!(norm2(&err) <= 1e-10 * norm2(&x).max(1.0));
    }
}
