//! Results checked against independent references: hand or high-precision
//! evaluations, and a naive loop-based forward pass.

use ocvit::cliio::{gen_synthetic, SyntheticSpec};
use ocvit::encoder::{self, names, EncoderConfig};
use ocvit::evalproto::{
    build_split, run_ablation, run_eval, run_one, AblationGrid, PoolFeatures, Protocol, RunConfig,
};
use ocvit::numcore::{ParamStore, Rng, Tensor};
use ocvit::oneclass::anomaly_scores;
use ocvit::Exec;

fn m(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(rows).unwrap()
}

#[test]
fn encoder_block_matches_high_precision_reference() {
    let cfg = EncoderConfig {
        image_size: 2,
        channels: 1,
        patch_size: 1,
        embed_dim: 2,
        depth: 1,
        heads: 1,
        mlp_ratio: 1,
        latent_dim: 2,
        ln_eps: 1e-5,
        in_eps: 1e-5,
    };
    let b = names::Block(0);
    let mut s = ParamStore::new();
    s.insert(b.norm1_w(), Tensor::vector(vec![1.0, 1.0]));
    s.insert(b.norm1_b(), Tensor::vector(vec![0.0, 0.0]));
    s.insert(b.norm2_w(), Tensor::vector(vec![1.0, 1.0]));
    s.insert(b.norm2_b(), Tensor::vector(vec![0.0, 0.0]));
    s.insert(b.attn_w("query"), Tensor::identity(2));
    s.insert(b.attn_w("key"), m(&[&[0.0, 1.0], &[1.0, 0.0]]));
    s.insert(b.attn_w("value"), m(&[&[1.0, 1.0], &[0.0, 1.0]]));
    s.insert(b.attn_w("out"), m(&[&[1.0, 0.0], &[1.0, 1.0]]));
    for p in ["query", "key", "value"] {
        s.insert(b.attn_b(p), Tensor::vector(vec![0.0, 0.0]));
    }
    s.insert(b.attn_b("out"), Tensor::vector(vec![0.0, 1.0]));
    s.insert(b.fc_w(1), m(&[&[1.0, -1.0], &[0.0, 1.0]]));
    s.insert(b.fc_b(1), Tensor::vector(vec![0.0, 0.5]));
    s.insert(b.fc_w(2), m(&[&[1.0, 0.0], &[2.0, 1.0]]));
    s.insert(b.fc_b(2), Tensor::vector(vec![0.0, 0.0]));

    let y = encoder::encoder_block(&m(&[&[1.0, 2.0], &[3.0, 0.0]]), &s, &cfg, 0).unwrap();
    let want = [
        6.698_603_203_627_557_6,
        5.484_442_249_919_895_2,
        2.752_534_529_541_565_2,
        0.899_785_072_086_053_16,
    ];
    for (got, w) in y.data().iter().zip(want) {
        assert!((got - w).abs() < 1e-12, "{got} vs {w}");
    }
}

// Naive reference implementation: plain loops, no shared kernels.
mod naive {
    pub type Mat = Vec<Vec<f64>>;

    pub fn mat(t: &ocvit::numcore::Tensor) -> Mat {
        (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
    }

    pub fn matmul(a: &Mat, b: &Mat) -> Mat {
        let (n, k, p) = (a.len(), b.len(), b[0].len());
        let mut out = vec![vec![0.0; p]; n];
        for i in 0..n {
            for j in 0..p {
                for t in 0..k {
                    out[i][j] += a[i][t] * b[t][j];
                }
            }
        }
        out
    }

    pub fn add_bias(a: &Mat, b: &[f64]) -> Mat {
        a.iter().map(|r| r.iter().zip(b).map(|(x, y)| x + y).collect()).collect()
    }

    pub fn add(a: &Mat, b: &Mat) -> Mat {
        a.iter()
            .zip(b)
            .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
            .collect()
    }

    pub fn standardize(r: &[f64], eps: f64) -> Vec<f64> {
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        r.iter().map(|x| (x - mean) / (var + eps).sqrt()).collect()
    }

    pub fn ln(a: &Mat, g: &[f64], b: &[f64], eps: f64) -> Mat {
        a.iter()
            .map(|r| {
                standardize(r, eps)
                    .iter()
                    .zip(g.iter().zip(b))
                    .map(|(x, (g, b))| x * g + b)
                    .collect()
            })
            .collect()
    }

    pub fn gelu(x: f64) -> f64 {
        0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
    }

    pub fn softmax(r: &[f64]) -> Vec<f64> {
        let mx = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = r.iter().map(|x| (x - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|x| x / s).collect()
    }

    pub fn cols(a: &Mat, start: usize, len: usize) -> Mat {
        a.iter().map(|r| r[start..start + len].to_vec()).collect()
    }
}

#[test]
fn tiny_pipeline_matches_naive_composition() {
    use naive::*;
    let cfg = EncoderConfig {
        image_size: 4,
        channels: 1,
        patch_size: 2,
        embed_dim: 4,
        depth: 1,
        heads: 2,
        mlp_ratio: 2,
        latent_dim: 3,
        ln_eps: 1e-5,
        in_eps: 1e-5,
    };
    let mut store = cfg.init_params(&mut Rng::new(21)).unwrap();
    // Larger weights than the 0.02 init so every stage visibly matters.
    let mut r = Rng::new(5);
    for name in store.names().map(String::from).collect::<Vec<_>>() {
        let t = store.get_mut(&name).unwrap();
        t.data_mut().iter_mut().for_each(|v| *v += r.gaussian(0.0, 0.5));
    }
    let images: Vec<Tensor> = (0..2)
        .map(|_| Tensor::new(vec![1, 4, 4], (0..16).map(|_| r.uniform()).collect()).unwrap())
        .collect();
    let got = encoder::extract_latent(&images, &cfg, &store, Exec::Sequential).unwrap();

    let p = |n: &str| store.get(n).unwrap();
    let v = |n: &str| store.get(n).unwrap().data().to_vec();
    let b = names::Block(0);
    for (k, img) in images.iter().enumerate() {
        // raster patches, each flattened row-major (single channel)
        let px = img.data();
        let mut patches = Vec::new();
        for gr in 0..2 {
            for gc in 0..2 {
                let mut row = Vec::new();
                for i in 0..2 {
                    for j in 0..2 {
                        row.push(px[(gr * 2 + i) * 4 + gc * 2 + j]);
                    }
                }
                patches.push(row);
            }
        }
        let emb = add_bias(&matmul(&patches, &mat(p(names::PATCH_W))), &v(names::PATCH_B));
        let mut x = vec![v(names::CLS)];
        x.extend(emb);
        let x = add(&x, &mat(p(names::POS)));

        let h = ln(&x, &v(&b.norm1_w()), &v(&b.norm1_b()), cfg.ln_eps);
        let q = add_bias(&matmul(&h, &mat(p(&b.attn_w("query")))), &v(&b.attn_b("query")));
        let kk = add_bias(&matmul(&h, &mat(p(&b.attn_w("key")))), &v(&b.attn_b("key")));
        let vv = add_bias(&matmul(&h, &mat(p(&b.attn_w("value")))), &v(&b.attn_b("value")));
        let dh = 2;
        let mut cat = vec![Vec::new(); x.len()];
        for head in 0..2 {
            let (qh, kh, vh) = (cols(&q, head * dh, dh), cols(&kk, head * dh, dh), cols(&vv, head * dh, dh));
            for i in 0..x.len() {
                let scores: Vec<f64> = (0..x.len())
                    .map(|j| (0..dh).map(|t| qh[i][t] * kh[j][t]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let a = softmax(&scores);
                for t in 0..dh {
                    cat[i].push((0..x.len()).map(|j| a[j] * vh[j][t]).sum());
                }
            }
        }
        let att = add_bias(&matmul(&cat, &mat(p(&b.attn_w("out")))), &v(&b.attn_b("out")));
        let xa = add(&x, &att);
        let h = ln(&xa, &v(&b.norm2_w()), &v(&b.norm2_b()), cfg.ln_eps);
        let h = add_bias(&matmul(&h, &mat(p(&b.fc_w(1)))), &v(&b.fc_b(1)));
        let h: Mat = h.iter().map(|r| r.iter().map(|&t| gelu(t)).collect()).collect();
        let h = add_bias(&matmul(&h, &mat(p(&b.fc_w(2)))), &v(&b.fc_b(2)));
        let xo = add(&xa, &h);
        let fin = ln(&xo, &v(names::NORM_W), &v(names::NORM_B), cfg.ln_eps);
        let z = add_bias(&matmul(&vec![fin[0].clone()], &mat(p(names::LATENT_W))), &v(names::LATENT_B));
        let want = standardize(&z[0], cfg.in_eps);
        for (g, w) in got.features.row(k).iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "image {k}: {g} vs {w}");
        }
    }
}

fn small_synthetic() -> ocvit::evalproto::Dataset {
    gen_synthetic(&SyntheticSpec {
        train_count: 120,
        test_inliers: 40,
        test_outliers: 40,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn small_run() -> RunConfig {
    let mut cfg = RunConfig::new(EncoderConfig::vit_tiny_test(1));
    cfg.train.batch_size = 16;
    cfg.train.epochs = 5;
    cfg
}

#[test]
fn synthetic_loss_falls_and_outliers_score_higher() {
    let data = small_synthetic();
    let split = build_split(&data, 0, Protocol::NormalVsRest, 0).unwrap();
    let cfg = small_run();
    let feats = PoolFeatures::compute(&data, &cfg.encoder, 3, Exec::default())
        .unwrap()
        .for_split(&split)
        .unwrap();
    let out = run_one(&cfg, &split, &feats, 3).unwrap();
    let el = &out.history.epoch_loss;
    assert!(el[4] < el[0], "{el:?}");

    let test = data.test.select(&split.test);
    let scores = anomaly_scores(&out.model, &test, Exec::default()).unwrap();
    let mean = |label: u8| {
        let v: Vec<f64> = scores
            .iter()
            .zip(&split.test_labels)
            .filter(|(_, &y)| y == label)
            .map(|(s, _)| *s)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(1) > mean(0));
}

#[test]
fn one_point_ablation_equals_direct_run() {
    let data = small_synthetic();
    let split = build_split(&data, 0, Protocol::NormalVsRest, 0).unwrap();
    let cfg = small_run();
    let seeds = [4, 5];
    let direct = run_eval(&data, std::slice::from_ref(&split), &cfg, &seeds, Exec::default()).unwrap();
    let grid = AblationGrid {
        batch_sizes: vec![cfg.train.batch_size],
        ..AblationGrid::around(&cfg)
    };
    let res = run_ablation(&data, &[split], &grid, &cfg, &seeds, Exec::default()).unwrap();
    assert_eq!(res.len(), 1);
    let rep = res[0].outcome.as_ref().unwrap();
    for (a, b) in rep.per_class[&0].iter().zip(&direct.per_class[&0]) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn ablation_grid_shape_and_default_axis() {
    let cfg = small_run();
    let mut grid = AblationGrid::around(&cfg);
    assert_eq!(grid.batch_sizes.len(), 6);
    grid.batch_sizes = vec![8, 16];
    grid.depths = vec![1, 2];
    assert_eq!(grid.points().len(), 4);
    let data = small_synthetic();
    let split = build_split(&data, 0, Protocol::NormalVsRest, 0).unwrap();
    let res = run_ablation(&data, &[split], &grid, &cfg, &[0], Exec::default()).unwrap();
    assert_eq!(res.len(), 4);
    assert!(res.iter().all(|r| !r.failed()));
}

#[test]
fn failing_point_is_recorded_not_fatal() {
    let cfg = small_run();
    let grid = AblationGrid {
        // 512 exceeds the 120 training images, so that point cannot train
        batch_sizes: vec![8, 512],
        ..AblationGrid::around(&cfg)
    };
    let data = small_synthetic();
    let split = build_split(&data, 0, Protocol::NormalVsRest, 0).unwrap();
    let res = run_ablation(&data, &[split], &grid, &cfg, &[0], Exec::default()).unwrap();
    assert!(!res[0].failed());
    assert!(res[1].failed());
}
