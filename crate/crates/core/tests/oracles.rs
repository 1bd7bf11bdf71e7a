//! Independent recomputations checked against the library.

use nalgebra::DVector;

use stochfeas::block::{run_block, BlockConfig, IndexSelection};
use stochfeas::diagnostics::{aggregate_runs, estimate_reference_solution, normalized_error_db};
use stochfeas::experiments::toy::{quadrant_family, random_halfspace_problem};
use stochfeas::relaxation::RelaxationStrategy;
use stochfeas::trace::ConvergenceTrace;
use stochfeas::Point;

fn to_vec(p: &Point) -> DVector<f64> {
    DVector::from_column_slice(p.as_slice())
}

/// Straight-line block update with uniform weights on half-spaces
/// `<a_i, z> <= b_i`.
fn straight_line_block(
    normals: &[DVector<f64>],
    offsets: &[f64],
    indices: &[usize],
    lambda: f64,
    x0: DVector<f64>,
    iters: usize,
) -> DVector<f64> {
    let m = indices.len() as f64;
    let mut x = x0;
    for _ in 0..iters {
        let ps: Vec<DVector<f64>> = indices
            .iter()
            .map(|&k| {
                let (a, b) = (&normals[k], offsets[k]);
                let excess = a.dot(&x) - b;
                if excess > 0.0 {
                    &x - a * (excess / a.norm_squared())
                } else {
                    x.clone()
                }
            })
            .collect();
        let p: DVector<f64> = ps.iter().fold(DVector::zeros(x.len()), |acc, pi| acc + pi / m);
        let num: f64 = ps.iter().map(|pi| (pi - &x).norm_squared() / m).sum();
        let den = (&p - &x).norm_squared();
        let l = if den == 0.0 { 1.0 } else { num / den };
        let a = &x + (&p - &x) * l;
        x = &x + (a - &x) * lambda;
    }
    x
}

#[test]
fn block_iterates_match_straight_line_recomputation() {
    for seed in 0..10 {
        let prob = random_halfspace_problem(6, 12, seed).unwrap();
        let normals: Vec<DVector<f64>> = prob.halfspaces.iter().map(|h| to_vec(h.normal())).collect();
        let offsets: Vec<f64> = prob.halfspaces.iter().map(|h| h.offset()).collect();
        let indices = vec![0, 3, 5, 7];
        let x0 = Point::new(vec![4.0, -3.0, 2.5, 1.0, -6.0, 3.0]).unwrap();
        for lambda in [1.0, 1.9] {
            let cfg = BlockConfig {
                selection: IndexSelection::Fixed(indices.clone()),
                ..BlockConfig::new(4, RelaxationStrategy::constant(lambda).unwrap(), 40, seed)
            };
            let out = run_block(&prob.family, &cfg, &x0, None).unwrap();
            let want = straight_line_block(&normals, &offsets, &indices, lambda, to_vec(&x0), 40);
            let got = to_vec(&out.final_point);
            assert!((got - &want).norm() <= 1e-10 * (1.0 + want.norm()), "seed {seed}, lambda {lambda}");
        }
    }
}

#[test]
fn toy_reference_is_the_corner() {
    let cfg = BlockConfig::new(2, RelaxationStrategy::constant(1.0).unwrap(), 100, 0);
    let x0 = Point::new(vec![1.0, 1.0]).unwrap();
    let r = estimate_reference_solution(&quadrant_family(), &cfg, &x0, 1e-12, 1).unwrap();
    assert!(r.norm() <= 1e-12, "{:?}", r.as_slice());
}

#[test]
fn decibel_identities() {
    let x0 = Point::new(vec![1.0, 0.0]).unwrap();
    let xinf = Point::zeros(2);
    assert_eq!(normalized_error_db(&x0, &x0, &xinf).unwrap(), 0.0);
    let near = Point::new(vec![1e-3, 0.0]).unwrap();
    assert!((normalized_error_db(&near, &x0, &xinf).unwrap() + 60.0).abs() < 1e-12);
    assert_eq!(normalized_error_db(&xinf, &x0, &xinf).unwrap(), -300.0);
    assert!(normalized_error_db(&x0, &x0, &x0).is_err());
}

#[test]
fn averaged_columns_match_direct_means() {
    let family = quadrant_family();
    let x0 = Point::new(vec![3.0, 2.0]).unwrap();
    let reference = Point::new(vec![-0.5, -0.5]).unwrap();
    let traces: Vec<ConvergenceTrace> = (0..10)
        .map(|seed| {
            let strategy = RelaxationStrategy::uniform(0.5, 1.5).unwrap();
            let cfg = BlockConfig::new(1, strategy, 30, seed);
            run_block(&family, &cfg, &x0, Some(&reference)).unwrap().trace
        })
        .collect();
    let avg = aggregate_runs(&traces).unwrap();
    assert_eq!(avg.runs, 10);
    for (i, row) in avg.rows.iter().enumerate() {
        let col = |f: &dyn Fn(usize) -> f64| (0..10).map(f).sum::<f64>() / 10.0;
        let residual = col(&|k| traces[k].rows[i].residual);
        let lambda = col(&|k| traces[k].rows[i].lambda);
        let db = col(&|k| traces[k].rows[i].normalized_error_db.unwrap());
        assert!((row.mean.residual - residual).abs() <= 1e-12 * (1.0 + residual.abs()));
        assert!((row.mean.lambda - lambda).abs() <= 1e-12);
        assert!((row.mean.normalized_error_db.unwrap() - db).abs() <= 1e-12 * (1.0 + db.abs()));
        let lo = (0..10).map(|k| traces[k].rows[i].normalized_error_db.unwrap()).fold(f64::INFINITY, f64::min);
        assert_eq!(row.db_min, Some(lo));
    }
}
