use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subalgebraic::{
    eliminate_products, enumerate_power_matrix, lk_reduce, mdtrunc, svd_trunc, MonomialMap, PowerVector,
};

fn diagonal() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..10.0], 1..=8).prop_map(|mut d| {
        d.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if d[0] == 0.0 {
            d[0] = 1.0;
        }
        d
    })
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn col_l1(l: &DMatrix<f64>, j: usize) -> f64 {
    l.column(j).iter().map(|v| v.abs()).sum()
}

proptest! {
    #[test]
    fn mdtrunc_is_minimal(d in diagonal(), r in 1e-6f64..0.999_999) {
        let out = mdtrunc(&d, r).unwrap();
        let total: f64 = d.iter().sum();
        let reaches = |j: usize| d[..j].iter().sum::<f64>() / total >= r;
        prop_assert!(reaches(out.n_r));
        prop_assert!((1..out.n_r).all(|j| !reaches(j)));
        prop_assert!(out.truncated[out.n_r..].iter().all(|&v| v == 0.0));
        prop_assert_eq!(&out.truncated[..out.n_r], &d[..out.n_r]);
        prop_assert_eq!(out.table.entries.len(), d.len());
    }

    #[test]
    fn mdtrunc_is_monotone_in_r(d in diagonal(), a in 1e-6f64..0.999_999, b in 1e-6f64..0.999_999) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(mdtrunc(&d, lo).unwrap().n_r <= mdtrunc(&d, hi).unwrap().n_r);
    }

    #[test]
    fn svd_trunc_is_exact_on_the_row_space(seed in any::<u64>(), k in 1usize..4, extra in 0usize..4, s in 12usize..30, d_vy in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_vu = k + extra;
        let v_u = random_matrix(&mut rng, d_vu, k) * random_matrix(&mut rng, k, s);
        let v_y = random_matrix(&mut rng, d_vy, d_vu) * &v_u;
        let res = svd_trunc(&v_y, &v_u, 1.0 - 1e-12).unwrap();
        prop_assert_eq!(res.n, k);
        prop_assert!(res.relative_residual(&v_y, &v_u) <= 1e-8);
    }

    #[test]
    fn svd_trunc_factors_are_consistent(seed in any::<u64>(), d_vu in 1usize..7, s in 1usize..20, d_vy in 1usize..5, r in 0.05f64..0.999) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v_u = random_matrix(&mut rng, d_vu, s);
        let v_y = random_matrix(&mut rng, d_vy, s);
        let res = svd_trunc(&v_y, &v_u, r).unwrap();
        let scale = res.h_star.norm().max(1e-300);
        prop_assert!((&res.h_star - &res.c * &res.l).norm() <= 1e-10 * scale);
        let lx = &res.l * &v_u;
        prop_assert!((&res.x - &lx).norm() <= 1e-10 * lx.norm().max(1e-300));
        let gram = &res.l * res.l.transpose();
        prop_assert!((gram - DMatrix::identity(res.n, res.n)).amax() <= 1e-10);
    }

    #[test]
    fn lk_reduce_is_sound_and_idempotent(seed in any::<u64>(), n in 1usize..4, vars in 1usize..4, r in 1e-6f64..0.999_999) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = enumerate_power_matrix(vars, &PowerVector::uniform(vars, 1)).unwrap();
        let l = DMatrix::from_fn(n, k.n_rows(), |_, _| {
            if rng.random_bool(0.25) { 0.0 } else { rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-4..2)) }
        });
        let max = (0..l.ncols()).map(|j| col_l1(&l, j)).fold(0.0, f64::max);
        prop_assume!(max > 0.0);
        let once = lk_reduce(&l, &k, r).unwrap();
        prop_assert!(!once.kept.is_empty());
        for &j in &once.kept {
            prop_assert!(col_l1(&l, j) > r * max);
        }
        prop_assert_eq!(once.k.n_rows(), once.kept.len());
        let twice = lk_reduce(&once.l, &once.k, r).unwrap();
        prop_assert_eq!(&twice.l, &once.l);
        prop_assert_eq!(&twice.k, &once.k);
    }

    #[test]
    fn eliminate_products_preserves_values(seed in any::<u64>(), outputs in 1usize..3, subset in 1u32..256) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let full = enumerate_power_matrix(2, &PowerVector::uniform(2, 2)).unwrap();
        // nonconstant monomials of degree <= 2 per variable, chosen by bitmask
        let idx: Vec<usize> = (0..full.n_rows() - 1).filter(|i| subset & (1 << i) != 0).collect();
        prop_assume!(!idx.is_empty());
        let k = full.select(&idx).unwrap();
        let g_r = MonomialMap::new(DMatrix::identity(k.n_rows(), k.n_rows()), k).unwrap();
        let c_r = random_matrix(&mut rng, outputs, g_r.m());
        let samples = random_matrix(&mut rng, 2, 60);
        let tol = 1e-6;
        let fact = eliminate_products(&c_r, &g_r, &samples, tol).unwrap();

        prop_assert!(fact.d_x() <= g_r.m());
        prop_assert!(fact.g.coeffs().column_iter().all(|c| c.iter().any(|&v| v != 0.0)));
        for u in samples.column_iter() {
            let want = &c_r * g_r.eval(u.as_slice()).unwrap();
            let got = fact.eval(u.as_slice()).unwrap();
            prop_assert!((&want - got).amax() <= tol * (1.0 + want.amax()));
        }
        let eye = DMatrix::identity(fact.d_x(), fact.d_x());
        let again = eliminate_products(&eye, &fact.g, &samples, tol).unwrap();
        prop_assert_eq!(&again.g, &fact.g);
    }
}
