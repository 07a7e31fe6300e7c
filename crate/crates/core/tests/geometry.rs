use std::f64::consts::PI;

use lbdie_core::geometry::{
    build_ball, build_box, divergence_check, icosphere, write_vtk_surface, write_vtk_volume, Domain, MeshError,
    MeshLimits, Point, VtkField,
};
use lbdie_core::pde_model::ExprVectorField;

fn ball(grid: usize, level: u32) -> (lbdie_core::geometry::VolumeMesh, lbdie_core::geometry::SurfaceMesh) {
    build_ball(Point::zeros(), 1.0, grid, level, &MeshLimits::default()).unwrap()
}

#[test]
fn icosphere_counts() {
    for level in 0..4 {
        let (points, faces) = icosphere(level);
        assert_eq!(faces.len(), 20 * 4usize.pow(level));
        assert_eq!(points.len(), 10 * 4usize.pow(level) + 2);
    }
    assert_eq!(ball(8, 2).1.len(), 320);
}

#[test]
fn ball_measures() {
    let (vm, sm) = ball(32, 3);
    assert!((sm.total_area() - 4.0 * PI).abs() < 0.01 * 4.0 * PI, "{}", sm.total_area());
    let vol = 4.0 * PI / 3.0;
    assert!((vm.total_volume() - vol).abs() < 0.01 * vol, "{}", vm.total_volume());
    let coarse = ball(8, 1).0;
    println!("coarse volume error {:e}", (coarse.total_volume() - vol).abs() / vol);
    assert!((coarse.total_volume() - vol).abs() < 0.005 * vol);
    assert!(vm.cells.iter().all(|c| Domain::unit_ball().contains(&c.centroid)));
    let flux: Point = sm.panels.iter().map(|p| p.area * p.normal).sum();
    assert!(flux.norm() < 1e-3 * sm.total_area());
}

#[test]
fn box_measures() {
    let (vm, sm) = build_box(Point::zeros(), Point::repeat(1.0), 4, &MeshLimits::default()).unwrap();
    assert_eq!(vm.len(), 64);
    assert!(vm.cells.iter().all(|c| c.regular && (c.volume - 1.0 / 64.0).abs() < 1e-15));
    assert!((sm.total_area() - 6.0).abs() < 1e-13);
    let flux: Point = sm.panels.iter().map(|p| p.area * p.normal).sum();
    assert!(flux.norm() < 1e-13);
    assert_eq!(sm.len(), 6 * 16 * 2);
}

#[test]
fn limits_are_enforced() {
    let limits = MeshLimits { max_cells: 1000, max_surface_level: 3 };
    assert!(matches!(build_ball(Point::zeros(), 1.0, 16, 2, &limits), Err(MeshError::TooLarge { .. })));
    assert!(matches!(build_ball(Point::zeros(), 1.0, 8, 4, &limits), Err(MeshError::TooLarge { .. })));
    assert!(matches!(build_ball(Point::zeros(), 1.0, 1, 1, &limits), Err(MeshError::TooSmall { .. })));
}

#[test]
fn divergence_theorem_on_ball() {
    let f = ExprVectorField::parse(["x1", "0", "0"]).unwrap();
    let (vm, sm) = ball(32, 3);
    let res = divergence_check(&vm, &sm, &f).unwrap();
    assert!(res <= 0.02 * 4.0 * PI / 3.0, "{res}");
    let c = ExprVectorField::parse(["1", "2", "-3"]).unwrap();
    assert!(divergence_check(&vm, &sm, &c).unwrap() < 1e-3);
}

#[test]
fn divergence_residual_decreases_under_refinement() {
    let f = ExprVectorField::parse(["x1^2", "x2", "sin(x3)"]).unwrap();
    let res: Vec<f64> = [(8, 1), (16, 2), (32, 3)]
        .iter()
        .map(|&(g, l)| {
            let (vm, sm) = ball(g, l);
            divergence_check(&vm, &sm, &f).unwrap()
        })
        .collect();
    println!("divergence residuals {res:?}");
    assert!(res[1] < res[0] && res[2] < res[1]);
    assert!(res[2] / res[1] <= 0.6, "{res:?}");
    let g = ExprVectorField::parse(["x1", "0", "0"]).unwrap();
    let (vm, sm) = build_box(Point::zeros(), Point::repeat(1.0), 4, &MeshLimits::default()).unwrap();
    assert!(divergence_check(&vm, &sm, &g).unwrap() < 1e-13);
}

#[test]
fn vtk_headers() {
    let (vm, sm) = build_box(Point::zeros(), Point::repeat(1.0), 2, &MeshLimits::default()).unwrap();
    let ones = vec![1.0; vm.len()];
    let mut buf = Vec::new();
    write_vtk_volume(&mut buf, &vm, "cells", &[VtkField::Scalar("one", &ones)]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("# vtk DataFile Version 3.0\ncells\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS 64 double\n"));
    assert!(text.contains("CELL_TYPES 8\n12\n"));
    assert!(text.contains("CELL_DATA 8\nSCALARS one double 1\n"));
    let mut buf = Vec::new();
    let n = vec![[0.0, 0.0, 1.0]; sm.len()];
    write_vtk_surface(&mut buf, &sm, "surface", &[VtkField::Vector("n", &n)]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.contains("DATASET POLYDATA\nPOINTS 26 double\n"));
    assert!(text.contains(&format!("POLYGONS {} {}", sm.len(), 4 * sm.len())));
}
