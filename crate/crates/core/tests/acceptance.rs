//! Acceptance suite. Prints one PASS/FAIL line per criterion followed by a
//! summary. Failing criteria are reported, not hidden; set
//! `ACCEPTANCE_STRICT=1` to turn any failure into a nonzero exit status.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subalgebraic::model::{deserialize_model, predict_from_past, predict_one_step, serialize_model};
use subalgebraic::monomials::{enumerate_power_matrix, eval_monomial_vector};
use subalgebraic::toolkit::{generate, map_from_unsorted, GeneratorSpec};
use subalgebraic::{
    eliminate_products, identify, lk_reduce, mdtrunc, svd_trunc, IdentConfig, MonomialMap, ObserverModel,
    PastStateMap, PowerMatrix, PowerVector, Provenance, Scaling, StateBound, TimeSeriesSet,
};

type Check = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn linear_spec(s: usize) -> GeneratorSpec {
    GeneratorSpec {
        n: 2,
        d_y: 1,
        f: map_from_unsorted(3, vec![vec![1, 0, 0], vec![0, 1, 0]], vec![vec![0.9, 0.1], vec![0.0, 0.8]]).unwrap(),
        h: map_from_unsorted(2, vec![vec![1, 0], vec![0, 1]], vec![vec![1.0, 0.0]]).unwrap(),
        x0_box: vec![(-1.0, 1.0); 2],
        noise_std: 0.0,
        t_1: 30,
        s,
    }
}

fn linear_config() -> IdentConfig {
    let mut cfg = IdentConfig::new(0.9999, 0.9999, 1e-3, 0.001).with_horizons((1, 1), (4, 4));
    cfg.k_max_y = vec![1];
    cfg.k_max_x = StateBound::Uniform(1);
    cfg.k_max_y2 = vec![1];
    cfg
}

/// f_o supported on {x1 x2 y, x1 x2, x1 y, x1, x2 y, x2}, h_o linear.
fn polynomial_spec(s: usize) -> GeneratorSpec {
    GeneratorSpec {
        n: 2,
        d_y: 1,
        f: map_from_unsorted(
            3,
            vec![
                vec![1, 1, 1],
                vec![1, 1, 0],
                vec![1, 0, 1],
                vec![1, 0, 0],
                vec![0, 1, 1],
                vec![0, 1, 0],
            ],
            vec![vec![0.0, 0.2, 0.3, 0.5, 0.0, -0.3], vec![0.3, 0.0, 0.0, 0.4, -0.2, 0.4]],
        )
        .unwrap(),
        h: map_from_unsorted(2, vec![vec![1, 0], vec![0, 1]], vec![vec![1.0, 0.4]]).unwrap(),
        x0_box: vec![(-0.7, 0.7); 2],
        noise_std: 0.0,
        t_1: 30,
        s,
    }
}

fn polynomial_config() -> IdentConfig {
    let mut cfg = IdentConfig::new(0.9999, 0.9999, 1e-3, 1e-3).with_horizons((2, 2), (2, 2));
    cfg.k_max_y = vec![2];
    cfg.k_max_x = StateBound::Uniform(1);
    cfg.k_max_y2 = vec![1];
    cfg
}

fn a1_linear_round_trip() -> Check {
    let train = generate(&linear_spec(50), 1).map_err(|e| e.to_string())?;
    let test = generate(&linear_spec(10), 2).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let (model, _) = identify(&train, &linear_config()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let report = predict_from_past(&model, &test).map_err(|e| e.to_string())?;
    let rel = report.max_relative_rmse();
    ensure(rel <= 1e-5, || format!("held-out relative RMSE {rel:.3e} > 1e-5"))?;
    ensure(elapsed <= 10.0, || format!("identification took {elapsed:.2} s > 10 s"))?;
    Ok(format!("relative RMSE {rel:.3e}, n = {}, {elapsed:.2} s", model.n))
}

fn a2_polynomial_round_trip() -> Check {
    let train = generate(&polynomial_spec(50), 3).map_err(|e| e.to_string())?;
    let test = generate(&polynomial_spec(10), 4).map_err(|e| e.to_string())?;
    for ts in [&train, &test] {
        let max = ts.iter_series().flat_map(|m| m.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        ensure(max <= 1.0, || format!("generated outputs leave [-1,1] ({max})"))?;
    }
    let cfg = polynomial_config();
    let start = Instant::now();
    let (model, _) = identify(&train, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let report = predict_from_past(&model, &test).map_err(|e| e.to_string())?;
    let rel = report.max_relative_rmse();
    ensure(rel <= 0.05, || format!("held-out relative RMSE {rel:.4} > 5%"))?;
    ensure(elapsed <= 60.0, || format!("identification took {elapsed:.2} s > 60 s"))?;
    // every f_o monomial lies in the bounded (x, y) set
    let bound = PowerVector::new(vec![1; model.n].into_iter().chain([1]).collect());
    ensure(
        model.f_o.powers().rows().iter().all(|k| k.is_bounded_by(&bound)),
        || "f_o basis leaves the bounded (x,y) monomial set".into(),
    )?;
    Ok(format!(
        "relative RMSE {:.4}%, n = {}, f_o terms {}, {elapsed:.2} s",
        100.0 * rel,
        model.n,
        model.f_o.n_terms()
    ))
}

fn a3_mdtrunc_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for case in 0..10_000 {
        let len = rng.random_range(1..=8);
        let mut d: Vec<f64> = (0..len)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..10.0) })
            .collect();
        d.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if d[0] == 0.0 {
            d[0] = 1.0;
        }
        let r: f64 = rng.random_range(1e-6..1.0 - 1e-9);
        let out = mdtrunc(&d, r).map_err(|e| format!("case {case}: {e}"))?;
        // brute force: recompute every prefix sum from scratch
        let total: f64 = d.iter().sum();
        let oracle = (1..=len)
            .find(|&j| d[..j].iter().sum::<f64>() / total >= r)
            .unwrap();
        ensure(out.n_r == oracle, || format!("case {case}: n_r {} vs oracle {oracle}", out.n_r))?;
        let last = out.table.entries.last().unwrap().1;
        ensure((last - 1.0).abs() <= 8.0 * f64::EPSILON, || {
            format!("case {case}: final fraction {last}")
        })?;
    }
    Ok("10000 random diagonals".into())
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn a4_svd_trunc_reconstruction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let k = rng.random_range(1..=5);
        let d_vu = rng.random_range(k..=9);
        let s = rng.random_range(d_vu + 1..=40);
        let d_vy = rng.random_range(1..=6);
        let v_u = random_matrix(&mut rng, d_vu, k) * random_matrix(&mut rng, k, s);
        let v_y = random_matrix(&mut rng, d_vy, d_vu) * &v_u;
        let res = svd_trunc(&v_y, &v_u, 1.0 - 1e-12).map_err(|e| format!("case {case}: {e}"))?;
        ensure(res.n == k, || format!("case {case}: rank {} vs {k}", res.n))?;
        let rel = res.relative_residual(&v_y, &v_u);
        worst = worst.max(rel);
        ensure(rel <= 1e-8, || format!("case {case}: reconstruction {rel:.3e}"))?;
        let cl = &res.c * &res.l;
        let fac = (&res.h_star - &cl).norm() / res.h_star.norm().max(f64::MIN_POSITIVE);
        ensure(fac <= 1e-10, || format!("case {case}: H* vs C L {fac:.3e}"))?;
    }
    Ok(format!("100 instances, worst relative residual {worst:.2e}"))
}

fn a5_monomial_fixtures() -> Check {
    let k = enumerate_power_matrix(2, &PowerVector::new(vec![2, 1])).map_err(|e| e.to_string())?;
    let expected: [[u32; 2]; 6] = [[2, 1], [2, 0], [1, 1], [1, 0], [0, 1], [0, 0]];
    ensure(k.n_rows() == 6, || format!("{} rows", k.n_rows()))?;
    for (row, e) in k.rows().iter().zip(expected) {
        ensure(row.as_slice() == e, || format!("row {row} vs {e:?}"))?;
    }
    let v = eval_monomial_vector(&[2.0, 3.0], &k).map_err(|e| e.to_string())?;
    ensure(v.as_slice() == [12.0, 4.0, 6.0, 2.0, 3.0, 1.0], || format!("value {v:?}"))?;
    Ok("6 rows and x^K(2,3) = (12,4,6,2,3,1)".into())
}

fn a6_lk_reduce_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for case in 0..10_000 {
        let n = rng.random_range(1..=4);
        let vars = rng.random_range(1..=3);
        let k = enumerate_power_matrix(vars, &PowerVector::uniform(vars, 1)).unwrap();
        let m = k.n_rows();
        let l = DMatrix::from_fn(n, m, |_, _| {
            if rng.random_bool(0.2) {
                0.0
            } else {
                rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-4..2))
            }
        });
        let norms: Vec<f64> = l.column_iter().map(|c| c.iter().map(|v| v.abs()).sum()).collect();
        let max = norms.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            continue;
        }
        let r = rng.random_range(1e-6..1.0 - 1e-6);
        let once = lk_reduce(&l, &k, r).map_err(|e| format!("case {case}: {e}"))?;
        for (j, norm) in norms.iter().enumerate() {
            let keep = once.kept.contains(&j);
            ensure(keep == (*norm > r * max), || format!("case {case}: column {j} misclassified"))?;
        }
        let argmax = norms.iter().position(|&v| v == max).unwrap();
        ensure(once.kept.contains(&argmax), || format!("case {case}: max column deleted"))?;
        let twice = lk_reduce(&once.l, &once.k, r).map_err(|e| format!("case {case}: {e}"))?;
        ensure(twice.l == once.l && twice.k == once.k, || format!("case {case}: not idempotent"))?;
    }
    Ok("soundness, idempotence and max-column survival on 10000 matrices".into())
}

fn a7_eliminate_products() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let samples = random_matrix(&mut rng, 2, 100);
    let k = PowerMatrix::from_unsorted(2, vec![vec![1, 1].into(), vec![1, 0].into(), vec![0, 1].into()])
        .map_err(|e| e.to_string())?;
    // columns follow K = {(1,1), (1,0), (0,1)}: g_r = (u1, u2, u1 u2)
    let l = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    let g_r = MonomialMap::new(l, k).map_err(|e| e.to_string())?;
    let fact = eliminate_products(&DMatrix::identity(3, 3), &g_r, &samples, 1e-6).map_err(|e| e.to_string())?;
    ensure(fact.d_x() == 2, || format!("d_x = {}", fact.d_x()))?;
    let mut worst = 0.0f64;
    for u in samples.column_iter() {
        let want = g_r.eval(u.as_slice()).unwrap();
        let got = fact.eval(u.as_slice()).unwrap();
        worst = worst.max((want - got).amax());
    }
    ensure(worst <= 1e-10, || format!("value error {worst:.3e}"))?;

    let k2 = PowerMatrix::from_unsorted(2, vec![vec![1, 0].into(), vec![0, 2].into()]).unwrap();
    let indep = MonomialMap::new(DMatrix::identity(2, 2), k2).unwrap();
    let c = DMatrix::from_row_slice(1, 2, &[1.5, -0.5]);
    let same = eliminate_products(&c, &indep, &samples, 1e-6).map_err(|e| e.to_string())?;
    ensure(same.g == indep && same.h == MonomialMap::linear(c), || "independent set changed".into())?;
    Ok(format!("d_x = 2, value error {worst:.1e}; independent set unchanged"))
}

fn a8_observer_causality() -> Check {
    let train = generate(&linear_spec(30), 5).map_err(|e| e.to_string())?;
    let mut cfg = linear_config();
    cfg = cfg.with_horizons((1, 1), (2, 2));
    let (model, _) = identify(&train, &cfg).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    for trial in 0..100 {
        let base = generate(&linear_spec(1), 1000 + trial).map_err(|e| e.to_string())?;
        let t_1 = base.t_1();
        let x0 = DMatrix::from_fn(model.n, 1, |_, _| rng.random_range(-1.0..1.0));
        let start = rng.random_range(1..t_1);
        let cut = rng.random_range(start..t_1);
        // perturb y(cut..=t_1); predictions up to time cut must not move
        let mut data = base.series(0).clone();
        for t in cut..=t_1 {
            data[(0, t - 1)] += rng.random_range(-5.0..5.0);
        }
        let perturbed = TimeSeriesSet::new(vec![data]).unwrap();
        let a = predict_one_step(&model, &base, &x0, start).map_err(|e| e.to_string())?;
        let b = predict_one_step(&model, &perturbed, &x0, start).map_err(|e| e.to_string())?;
        let upto = cut - start + 1;
        let same = a.predictions[0]
            .columns(0, upto)
            .iter()
            .zip(b.predictions[0].columns(0, upto).iter())
            .all(|(p, q)| p.to_bits() == q.to_bits());
        ensure(same, || format!("trial {trial}: prediction before t = {cut} changed"))?;
    }
    Ok("100 trials bit-identical".into())
}

fn random_power_matrix(rng: &mut ChaCha8Rng, vars: usize) -> PowerMatrix {
    let full = enumerate_power_matrix(vars, &PowerVector::uniform(vars, 2)).unwrap();
    let mut idx: Vec<usize> = (0..full.n_rows()).filter(|_| rng.random_bool(0.4)).collect();
    if idx.is_empty() {
        idx.push(rng.random_range(0..full.n_rows()));
    }
    full.select(&idx).unwrap()
}

fn random_value(rng: &mut ChaCha8Rng) -> f64 {
    let mantissa: f64 = rng.random_range(-1.0..1.0);
    mantissa * 10f64.powi(rng.random_range(-300..300))
}

fn random_map(rng: &mut ChaCha8Rng, vars: usize, m: usize) -> MonomialMap {
    let k = random_power_matrix(rng, vars);
    let l = DMatrix::from_fn(m, k.n_rows(), |_, _| random_value(rng));
    MonomialMap::new(l, k).unwrap()
}

fn random_model(rng: &mut ChaCha8Rng) -> ObserverModel {
    let n = rng.random_range(1..=3);
    let d_y = rng.random_range(1..=2);
    let s = rng.random_range(0..=4);
    let lags = rng.random_range(1..=2);
    let mut config = std::collections::BTreeMap::new();
    config.insert("r1".to_string(), format!("{}", rng.random::<f64>()));
    config.insert("note".to_string(), "quote \" and\nnewline".to_string());
    ObserverModel {
        n,
        d_y,
        f_o: random_map(rng, n + d_y, n),
        h_o: random_map(rng, n, d_y),
        g_io: rng.random_bool(0.5).then(|| PastStateMap {
            lags,
            map: random_map(rng, lags * d_y, n),
        }),
        x0: DMatrix::from_fn(n, s, |_, _| random_value(rng)),
        start_t: rng.random_range(1..50),
        scaling: rng.random_bool(0.5).then(|| Scaling {
            mean: (0..d_y).map(|_| random_value(rng)).collect(),
            scale: (0..d_y).map(|_| rng.random_range(1e-3..1e3)).collect(),
        }),
        provenance: Provenance {
            t_plus: rng.random_range(1..9),
            t_minus: rng.random_range(1..9),
            anchor_t: rng.random_range(1..20),
            pooled: rng.random_bool(0.5),
            config,
        },
    }
}

fn a9_serialization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    for case in 0..1000 {
        let model = random_model(&mut rng);
        let text = serialize_model(&model);
        let back = deserialize_model(&text).map_err(|e| format!("case {case}: {e}"))?;
        ensure(back == model, || format!("case {case}: round trip differs"))?;
    }
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/two_state_model.toml");
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let fixture = deserialize_model(&text).map_err(|e| e.to_string())?;
    let back = deserialize_model(&serialize_model(&fixture)).map_err(|e| e.to_string())?;
    ensure(back == fixture, || "fixture round trip differs".into())?;
    let c = fixture.h_o.coeffs();
    ensure(c.as_slice() == [-0.0225, 0.0336], || format!("C = {c}"))?;
    let l = fixture.f_o.coeffs();
    let expected = DMatrix::from_row_slice(
        2,
        6,
        &[0.009, 0.089, 0.023, 0.571, -0.004, -0.020, -0.015, 0.309, -0.014, 0.074, 0.008, 0.212],
    );
    ensure(*l == expected, || format!("L_fo = {l}"))?;
    Ok("1000 random models and the stored two-state fixture".into())
}

fn main() {
    let checks: [Criterion; 9] = [
        ("A1", "linear round trip", a1_linear_round_trip),
        ("A2", "polynomial round trip", a2_polynomial_round_trip),
        ("A3", "mdtrunc oracle equivalence", a3_mdtrunc_oracle),
        ("A4", "svd_trunc reconstruction", a4_svd_trunc_reconstruction),
        ("A5", "monomial fixtures", a5_monomial_fixtures),
        ("A6", "lk_reduce properties", a6_lk_reduce_properties),
        ("A7", "eliminate_products", a7_eliminate_products),
        ("A8", "observer causality", a8_observer_causality),
        ("A9", "serialization round trip", a9_serialization),
    ];
    let mut failures = 0;
    for (id, title, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("{id} PASS {title}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("{id} FAIL {title}: {detail}");
            }
        }
    }
    println!("{} of {} acceptance criteria pass", checks.len() - failures, checks.len());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failures > 0 && strict {
        std::process::exit(1);
    }
}
