use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use waveqn::linear::{random_contraction, seeded_rng, AffineSubsolver};
use waveqn::qn::IncrementalQr;
use waveqn::{trace_iterates, FixedGridQn, GridStrategy, InterpMatrix, QnAccelerator, TimeGrid, Waveform};

/// Strictly increasing grid on `[0, t_end]` from positive increments.
fn grid_strategy(max_steps: usize) -> impl Strategy<Value = TimeGrid> {
    (prop::collection::vec(0.05f64..1.0, 1..=max_steps), 0.5f64..100.0).prop_map(|(inc, t_end)| {
        let total: f64 = inc.iter().sum();
        let mut pts = vec![0.0];
        let mut acc = 0.0;
        for h in &inc[..inc.len() - 1] {
            acc += h;
            pts.push(acc / total * t_end);
        }
        pts.push(t_end);
        TimeGrid::new(pts).unwrap()
    })
}

fn rescale(grid: &TimeGrid, t_end: f64) -> TimeGrid {
    let s = t_end / grid.end();
    let mut pts: Vec<f64> = grid.points().iter().map(|t| t * s).collect();
    *pts.last_mut().unwrap() = t_end;
    TimeGrid::new(pts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_functions_interpolate_exactly(g in grid_strategy(12), h in grid_strategy(12), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let h = rescale(&h, g.end());
        let w = Waveform::from_fn(g.clone(), 2, |t, out| {
            out[0] = a + b * t;
            out[1] = b - a * t;
        });
        let s = w.sample(&h).unwrap();
        for (t, v) in h.points().iter().zip(s.values().chunks(2)) {
            prop_assert!((v[0] - (a + b * t)).abs() <= 1e-9 * (1.0 + (b * t).abs()));
            prop_assert!((v[1] - (b - a * t)).abs() <= 1e-9 * (1.0 + (a * t).abs()));
        }
        prop_assert_eq!(s.last(), w.last());
        prop_assert_eq!(s.first(), w.first());
    }

    #[test]
    fn sampling_on_own_grid_is_identity(g in grid_strategy(12), seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let vals: Vec<f64> = (0..g.len()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let w = Waveform::new(g.clone(), 1, vals).unwrap();
        prop_assert_eq!(w.sample(&g).unwrap(), w.clone());
        for (i, &t) in g.points().iter().enumerate() {
            prop_assert_eq!(w.eval(t).unwrap()[0], w.node(i)[0]);
        }
    }

    #[test]
    fn interpolation_rows_are_convex(g in grid_strategy(12), h in grid_strategy(12)) {
        let h = rescale(&h, g.end());
        let m = InterpMatrix::new(&g, &h).unwrap();
        prop_assert_eq!(m.nrows(), h.len());
        for i in 0..m.nrows() {
            let row = m.row(i);
            prop_assert!(!row.is_empty() && row.len() <= 2);
            let sum: f64 = row.iter().map(|(_, w)| w).sum();
            prop_assert!((sum - 1.0).abs() < 1e-14);
            prop_assert!(row.iter().all(|&(_, w)| (0.0..=1.0).contains(&w)));
        }
        prop_assert_eq!(m.row(0), vec![(0, 1.0)]);
        prop_assert_eq!(m.row(h.len() - 1), vec![(g.len() - 1, 1.0)]);
    }

    #[test]
    fn incremental_qr_stays_orthonormal(rows in 3usize..30, cols in 1usize..8, seed in any::<u64>(), drop in 0usize..3) {
        let cols = cols.min(rows);
        let mut rng = seeded_rng(seed);
        let mut qr = IncrementalQr::new(rows);
        let mut kept: Vec<DVector<f64>> = Vec::new();
        for _ in 0..cols {
            let v = DVector::from_fn(rows, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
            if qr.push(v.as_slice(), 1e-10) {
                kept.push(v);
            }
        }
        for _ in 0..drop.min(kept.len().saturating_sub(1)) {
            qr.remove_first();
            kept.remove(0);
        }
        let k = qr.cols();
        prop_assert_eq!(k, kept.len());
        let q = DMatrix::from_fn(rows, k, |i, j| qr.q_col(j)[i]);
        let r = DMatrix::from_fn(k, k, |i, j| qr.r(i, j));
        prop_assert!((q.transpose() * &q - DMatrix::identity(k, k)).norm() <= 1e-12);
        let v = DMatrix::from_columns(&kept);
        prop_assert!((&q * &r - &v).norm() <= 1e-12 * (1.0 + v.norm()));
        for i in 0..k {
            for j in 0..i {
                prop_assert_eq!(r[(i, j)], 0.0);
            }
        }

        // Least squares optimality: the residual of min ‖Vα + b‖ is
        // orthogonal to the range of V.
        let b = DVector::from_fn(rows, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let neg: Vec<f64> = b.iter().map(|x| -x).collect();
        let alpha = DVector::from_vec(qr.solve_ls(&neg));
        let res = &v * alpha + &b;
        prop_assert!((v.transpose() * res).norm() <= 1e-10 * (1.0 + b.norm()) * (1.0 + v.norm()));
    }

    #[test]
    fn adaptive_qn_reduces_to_fixed_grid_qn(n in 2usize..10, dim in 1usize..3, seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let grid = TimeGrid::equidistant(n, 1.0).unwrap();
        let size = n * dim;
        let make = |rng: &mut rand_chacha::ChaCha8Rng| {
            let k = random_contraction(size, rng);
            let c = DVector::from_fn(size, |_, _| rand::Rng::random_range(rng, -1.0..1.0));
            AffineSubsolver::new(grid.clone(), dim, k, c).unwrap()
        };
        let (s1, s2) = (make(&mut rng), make(&mut rng));
        let x0 = Waveform::constant(TimeGrid::new(vec![0.0, 1.0]).unwrap(), &vec![0.0; dim]);

        let mut adaptive = QnAccelerator::new(0.5, GridStrategy::NeumannFirst);
        let a = trace_iterates(&mut s1.clone(), &mut s2.clone(), &x0, &mut adaptive, 10).unwrap();
        let mut fixed = FixedGridQn::new(0.5);
        let b = trace_iterates(&mut s1.clone(), &mut s2.clone(), &x0, &mut fixed, 10).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.grid(), y.grid());
            let xb: Vec<u64> = x.values().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(xb, yb);
        }
    }

    #[test]
    fn relative_criterion_is_scale_invariant(v in prop::collection::vec(-10.0f64..10.0, 1..6), eps in 0.0f64..1e-3, s in 1e-6f64..1e6) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
        let w: Vec<f64> = v.iter().map(|x| x * (1.0 + eps)).collect();
        let base = waveqn::coupling::relative_update(&w, &v);
        let vs: Vec<f64> = v.iter().map(|x| x * s).collect();
        let ws: Vec<f64> = w.iter().map(|x| x * s).collect();
        let scaled = waveqn::coupling::relative_update(&ws, &vs);
        prop_assert!((base - scaled).abs() <= 1e-12 * (1.0 + base));
    }
}
