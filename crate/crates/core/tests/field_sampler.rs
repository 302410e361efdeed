mod common;

use common::{cov_se, mean_se};
use gff4d::field::circulant::CirculantOptions;
use gff4d::field::*;
use gff4d::kernels::{cov_scalar, g_inverse, g_variance, PointScale};
use gff4d::Error;
use proptest::prelude::*;

fn moments(sampler: &dyn FieldSampler, seed: u64, n: usize, pairs: &[((usize, usize), (usize, usize))]) -> Vec<(f64, f64)> {
    let draws = map_replicas(sampler, seed, n, |s| {
        Ok(pairs
            .iter()
            .map(|&((la, a), (lb, b))| (s.value(la, a), s.value(lb, b)))
            .collect::<Vec<_>>())
    })
    .unwrap();
    (0..pairs.len())
        .map(|k| {
            let xs: Vec<f64> = draws.iter().map(|d| d[k].0).collect();
            let ys: Vec<f64> = draws.iter().map(|d| d[k].1).collect();
            cov_se(&xs, &ys)
        })
        .collect()
}

fn exact(grid: &GridSpec, ladder: &ScaleLadder, (la, a): (usize, usize), (lb, b): (usize, usize)) -> f64 {
    let p = PointScale::new(grid.center(a), ladder.eps(la)).unwrap();
    let q = PointScale::new(grid.center(b), ladder.eps(lb)).unwrap();
    cov_scalar(&p, &q).unwrap()
}

#[test]
fn build_covariance_entries_and_capacity() {
    let pts: Vec<PointScale> = (0..4)
        .map(|i| PointScale::new([0.3 * i as f64, 0.0, 0.1, 0.0], 0.1 + 0.05 * i as f64).unwrap())
        .collect();
    let m = build_covariance(&pts, 10).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let want = cov_scalar(&pts[i], &pts[j]).unwrap();
            assert!((m[(i, j)] - want).abs() <= 1e-14 * want.abs());
        }
    }
    assert!(matches!(build_covariance(&pts, 3), Err(Error::Capacity { requested: 4, cap: 3 })));
}

#[test]
fn dense_draws_reproduce_the_covariance() {
    let grid = GridSpec::cube([0.0; 4], 1.0, 2).unwrap();
    let ladder = ScaleLadder::new(0.5, 2).unwrap();
    let sampler = DenseFieldSampler::new(&grid, &ladder, 4096).unwrap();
    let pairs = [((1, 0), (1, 0)), ((2, 3), (2, 3)), ((1, 0), (2, 0)), ((1, 0), (1, 15)), ((2, 5), (1, 6))];
    for (k, (c, se)) in moments(&sampler, 11, 8000, &pairs).into_iter().enumerate() {
        let want = exact(&grid, &ladder, pairs[k].0, pairs[k].1);
        assert!((c - want).abs() < 4.5 * se, "pair {k}: {c} vs {want} (se {se})");
    }
}

#[test]
fn dense_and_circulant_agree_on_a_planar_slice() {
    let grid = GridSpec::new([0.0; 4], [0.125; 4], [8, 8, 1, 1]).unwrap();
    let ladder = ScaleLadder::new(0.5, 2).unwrap();
    let dense = DenseFieldSampler::new(&grid, &ladder, 4096).unwrap();
    let circ = CirculantSampler::new(&grid, &ladder, CirculantOptions::default()).unwrap();
    // the slice embeds with a tiny clipped negative mass
    assert!(circ.negative_fraction() < 1e-3, "negative fraction {}", circ.negative_fraction());
    let far = grid.flat_index([7, 7, 0, 0]);
    let pairs = [((1, 0), (1, 0)), ((2, 9), (2, 9)), ((1, 0), (1, 1)), ((1, 0), (1, far)), ((1, 10), (2, 10))];
    let md = moments(&dense, 3, 6000, &pairs);
    let mc = moments(&circ, 3, 6000, &pairs);
    for k in 0..pairs.len() {
        let want = exact(&grid, &ladder, pairs[k].0, pairs[k].1);
        let ((d, sd), (c, sc)) = (md[k], mc[k]);
        assert!((d - want).abs() < 4.5 * sd, "dense pair {k}: {d} vs {want}");
        assert!((c - want).abs() < 4.5 * sc, "circulant pair {k}: {c} vs {want}");
        assert!((d - c).abs() < 4.5 * (sd * sd + sc * sc).sqrt());
    }
}

#[test]
fn circulant_marginal_variance_per_level() {
    let grid = GridSpec::cube([0.0; 4], 1.0, 6).unwrap();
    let ladder = ScaleLadder::new(0.5, 2).unwrap();
    let circ = CirculantSampler::new(&grid, &ladder, CirculantOptions::default()).unwrap();
    let per_replica = map_replicas(&circ, 5, 400, |s| {
        Ok((1..=2)
            .map(|n| s.level(n).iter().map(|v| v * v).sum::<f64>() / grid.len() as f64)
            .collect::<Vec<_>>())
    })
    .unwrap();
    for n in 1..=2 {
        let v: Vec<f64> = per_replica.iter().map(|r| r[n - 1]).collect();
        let (m, se) = mean_se(&v);
        let want = g_variance(ladder.eps(n)).unwrap();
        assert!((m - want).abs() < 5.0 * se, "level {n}: {m} vs {want} (se {se})");
    }
}

#[test]
fn pairing_and_determinism() {
    let grid = GridSpec::cube([0.0; 4], 1.0, 2).unwrap();
    let ladder = ScaleLadder::new(0.5, 3).unwrap();
    let s = DenseFieldSampler::new(&grid, &ladder, 4096).unwrap();
    let a = s.sample(9, 5).unwrap();
    let [_, b] = s.draw_pair(9, 2).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(a.replica, 5);
    assert_eq!(s.sample(9, 5).unwrap().values, a.values);
    assert_ne!(s.sample(9, 4).unwrap().values, a.values);
    assert_ne!(s.sample(10, 5).unwrap().values, a.values);
    let all = map_replicas(&s, 9, 7, |x| Ok(x.values.clone())).unwrap();
    assert_eq!(all.len(), 7);
    assert_eq!(all[5], a.values);
}

#[test]
fn auto_backend_respects_the_cap() {
    let grid = GridSpec::cube([0.0; 4], 1.0, 3).unwrap();
    let ladder = ScaleLadder::new(0.5, 2).unwrap();
    assert_eq!(make_sampler(&grid, &ladder, None, 4096).unwrap().sample(0, 0).unwrap().backend, Backend::Dense);
    assert_eq!(make_sampler(&grid, &ladder, None, 100).unwrap().sample(0, 0).unwrap().backend, Backend::Circulant);
    assert!(matches!(
        make_sampler(&grid, &ladder, Some(Backend::Dense), 100),
        Err(Error::Capacity { .. })
    ));
}

#[test]
fn container_roundtrip() {
    let grid = GridSpec::cube([0.5; 4], 1.0, 2).unwrap();
    let ladder = ScaleLadder::new(0.4, 2).unwrap();
    let s = DenseFieldSampler::new(&grid, &ladder, 4096).unwrap().sample(1, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.bin");
    s.save(&path).unwrap();
    assert_eq!(FieldSample::load(&path).unwrap(), s);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    assert!(matches!(FieldSample::read_from(&mut bytes.as_slice()), Err(Error::Io(_))));
    let good = std::fs::read(&path).unwrap();
    assert!(FieldSample::read_from(&mut &good[..good.len() - 8]).is_err());
}

#[test]
fn radial_path_statistics() {
    let times: Vec<f64> = (1..=20).map(|k| 0.25 * k as f64).collect();
    let mut incs = vec![Vec::new(); times.len()];
    for seed in 0..2000 {
        let p = sample_radial([0.0; 4], 1.0, &times, seed).unwrap();
        let mut prev = 0.0;
        for (k, v) in p.values.iter().enumerate() {
            incs[k].push((v - prev) / 0.5);
            prev = *v;
        }
    }
    for inc in &incs {
        let (m, se) = mean_se(inc);
        assert!(m.abs() < 4.5 * se);
        let sq: Vec<f64> = inc.iter().map(|x| x * x).collect();
        let (v, sv) = mean_se(&sq);
        assert!((v - 1.0).abs() < 4.5 * sv, "{v}");
    }
    // neighbouring increments are uncorrelated
    let (c, se) = cov_se(&incs[3], &incs[4]);
    assert!(c.abs() < 4.5 * se);
    let p = sample_radial([0.0; 4], 1.0, &times, 0).unwrap();
    let g1 = g_variance(1.0).unwrap();
    for (t, r) in p.times.iter().zip(&p.radii) {
        assert!((g_variance(*r).unwrap() - g1 - t).abs() < 1e-10);
    }
    assert!(p.radii.windows(2).all(|w| w[1] < w[0]));
    assert!(sample_radial([0.0; 4], 1.0, &[1.0, 0.5], 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn grid_locate_inverts_center(n in 1usize..6, side in 0.1f64..3.0, o in prop::array::uniform4(-2.0f64..2.0), idx in 0usize..10_000) {
        let g = GridSpec::cube(o, side, n).unwrap();
        let i = idx % g.len();
        prop_assert_eq!(g.locate(&g.center(i)), Some(i));
        prop_assert_eq!(g.flat_index(g.multi_index(i)), i);
    }

    #[test]
    fn radial_radius_inverts_g(t in 0.0f64..20.0) {
        let g1 = g_variance(1.0).unwrap();
        let r = g_inverse(t + g1).unwrap();
        prop_assert!(r <= 1.0 + 1e-12);
        prop_assert!((g_variance(r).unwrap() - g1 - t).abs() < 1e-9 * (1.0 + t));
    }
}
