use egot::instances::{
    cloud_cost, cost_grid_l1, foreground_side, gen_point_clouds, gen_random, gen_synthetic, rng_from_seed,
    synthetic_image, PointCloud,
};
use egot::instances::{load_mnist_pair, parse_idx_images, IDX_IMAGE_MAGIC};
use std::io::Write;

#[test]
fn grid_costs_are_a_metric() {
    for m in 1..=5 {
        let w = cost_grid_l1(m);
        let n = m * m;
        for p in 0..n {
            assert_eq!(w[[p, p]], 0.0);
            for q in 0..n {
                assert_eq!(w[[p, q]], w[[q, p]]);
                let manual = ((p / m) as f64 - (q / m) as f64).abs() + ((p % m) as f64 - (q % m) as f64).abs();
                assert_eq!(w[[p, q]], manual);
                for s in 0..n {
                    assert!(w[[p, q]] <= w[[p, s]] + w[[s, q]]);
                }
            }
        }
    }
}

#[test]
fn synthetic_images_have_a_bright_square() {
    for seed in 0..20 {
        for m in [4, 8, 10] {
            let mut rng = rng_from_seed(seed);
            let (img, fg) = synthetic_image(m, &mut rng);
            assert_eq!(fg.side, foreground_side(m));
            assert!(fg.top + fg.side <= m && fg.left + fg.side <= m);
            for r in 0..m {
                for c in 0..m {
                    let v = img.pixels()[[r, c]];
                    if fg.contains(r, c) {
                        assert!((0.0..10.0).contains(&v));
                    } else {
                        assert!((0.0..1.0).contains(&v));
                    }
                }
            }
        }
    }
    assert_eq!(foreground_side(28), 20);
}

#[test]
fn generators_are_reproducible_and_valid() {
    for seed in [0, 1, 99] {
        let a = gen_synthetic(6, seed).unwrap();
        let b = gen_synthetic(6, seed).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.n(), 36);
        let c = gen_point_clouds(20, seed, false).unwrap();
        assert_eq!(c.to_json().unwrap(), gen_point_clouds(20, seed, false).unwrap().to_json().unwrap());
        let d = gen_random(15, seed).unwrap();
        assert_eq!(d.w_inf(), 1.0);
        for inst in [&a, &c, &d] {
            assert!((inst.r().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((inst.c().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(inst.cost().iter().all(|&x| x >= 0.0 && x.is_finite()));
        }
    }
    assert_ne!(gen_random(5, 1).unwrap().to_json().unwrap(), gen_random(5, 2).unwrap().to_json().unwrap());
    assert!(gen_synthetic(1, 0).is_err());
}

#[test]
fn cloud_costs_match_recomputed_distances() {
    let mut rng = rng_from_seed(3);
    let x = PointCloud::gaussian(12, &mut rng);
    let y = PointCloud::gaussian(12, &mut rng);
    let euclid = cloud_cost(&x, &y, false);
    let sq = cloud_cost(&x, &y, true);
    for (i, p) in x.points().iter().enumerate() {
        for (j, q) in y.points().iter().enumerate() {
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            assert!((euclid[[i, j]] - d).abs() < 1e-14);
            assert!((sq[[i, j]] - d * d).abs() < 1e-12);
        }
    }
    let inst = gen_point_clouds(12, 3, true).unwrap();
    assert!(inst.r().iter().all(|&v| v == 1.0 / 12.0));
}

#[test]
fn mnist_pair_from_idx_file() {
    let mut bytes = Vec::new();
    for x in [IDX_IMAGE_MAGIC, 2, 4, 4] {
        bytes.extend_from_slice(&x.to_be_bytes());
    }
    let first: Vec<u8> = (0..16).map(|k| (k * 17) as u8).collect();
    bytes.extend_from_slice(&first);
    bytes.extend_from_slice(&[255u8; 16]);
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(&bytes).unwrap();
    file.flush().unwrap();

    let stack = parse_idx_images(&bytes).unwrap();
    assert_eq!((stack.count, stack.rows, stack.cols), (2, 4, 4));

    let inst = load_mnist_pair(file.path(), 0, 1, 2).unwrap();
    assert_eq!(inst.n(), 4);
    // Block means of the first image (pixel k = 17 k / 255), plus the offset.
    let blocks = [[0, 1, 4, 5], [2, 3, 6, 7], [8, 9, 12, 13], [10, 11, 14, 15]];
    let vals: Vec<f64> =
        blocks.iter().map(|b| b.iter().map(|&k| 17.0 * k as f64 / 255.0).sum::<f64>() / 4.0 + 0.01).collect();
    let total: f64 = vals.iter().sum();
    for (got, v) in inst.r().iter().zip(&vals) {
        assert!((got - v / total).abs() < 1e-14);
    }
    assert!(inst.c().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    assert!(load_mnist_pair(file.path(), 0, 2, 2).is_err());

    let mut bad = bytes.clone();
    bad[3] = 0x01;
    assert!(parse_idx_images(&bad).is_err());
    assert!(parse_idx_images(&bytes[..20]).is_err());
}
