mod common;

use obstacle_afem::mesh::{bisect, build_crisscross_mesh, edge_topology, refine_uniform, Domain, Mesh};
use proptest::prelude::*;

const DOMAINS: [Domain; 2] = [Domain::Square { lo: -1.5, hi: 1.5 }, Domain::Diamond];

fn assert_valid(mesh: &Mesh, domain: Domain, min0: f64) {
    edge_topology(mesh).unwrap();
    common::check_conformity(mesh, domain).unwrap();
    assert!((mesh.total_area() - domain.area()).abs() <= 1e-12 * domain.area());
    assert!(mesh.min_angle() >= min0 - 1e-12);
}

#[test]
fn uniform_refinement_keeps_shape() {
    for domain in DOMAINS {
        let mut mesh = build_crisscross_mesh(domain, 1).unwrap();
        let min0 = mesh.min_angle();
        for _ in 0..4 {
            let nt = mesh.n_triangles();
            mesh = refine_uniform(&mesh);
            assert!(mesh.n_triangles() >= 2 * nt);
            assert_valid(&mesh, domain, min0);
        }
    }
}

#[test]
fn dump_round_trip() {
    let mesh = bisect(&build_crisscross_mesh(DOMAINS[1], 2).unwrap(), &[3, 4]);
    let mut buf = Vec::new();
    mesh.write_dump(&mut buf).unwrap();
    let back = Mesh::read_dump(&buf[..]).unwrap();
    assert_eq!(back.vertices(), mesh.vertices());
    assert_eq!(back.triangles(), mesh.triangles());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_bisection_stays_conforming(
        diamond in any::<bool>(),
        n in 1usize..4,
        rounds in proptest::collection::vec(proptest::collection::vec(any::<prop::sample::Index>(), 1..6), 1..6),
    ) {
        let domain = DOMAINS[diamond as usize];
        let mut mesh = build_crisscross_mesh(domain, n).unwrap();
        let min0 = mesh.min_angle();
        for picks in rounds {
            let mut marked: Vec<usize> = picks.iter().map(|i| i.index(mesh.n_triangles())).collect();
            marked.sort_unstable();
            marked.dedup();
            let before = mesh.n_triangles();
            let next = bisect(&mesh, &marked);
            prop_assert!(next.n_triangles() >= before + marked.len());
            for &t in &marked {
                let kids = next.parents().iter().filter(|p| **p == Some(t)).count();
                prop_assert!(kids >= 2, "triangle {} was not refined", t);
            }
            mesh = next;
            assert_valid(&mesh, domain, min0);
        }
    }
}
