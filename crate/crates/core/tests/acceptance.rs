//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use ocvit::cliio::{cmd_ablate, cmd_eval, cmd_train, gen_synthetic, layout, ExperimentConfig, SyntheticSpec};
use ocvit::encoder::{
    backbone_features, checkpoint_bytes, encoder_block, extract_latent, names, parse_checkpoint, EncoderConfig,
};
use ocvit::evalproto::{
    auc_pairwise, auc_roc, build_split, eval_split, run_one, Dataset, PoolFeatures, Protocol, RunConfig, RunOutcome,
    SplitFeatures, SplitSpec, DEFAULT_BATCH_SIZES,
};
use ocvit::gradsuite::{run_suite, OP_TOL, PIPELINE_TOL, POINTS};
use ocvit::heads::{kde_fit, svm_fit, HeadKind, SvmOptions};
use ocvit::numcore::{ParamStore, Rng, Tape, Tensor};
use ocvit::oneclass::{bce_loss, sample_pseudo_negatives, train, NoiseConfig, OneClassModel, TrainConfig};
use ocvit::Exec;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn is_backbone(name: &str) -> bool {
    name.starts_with(names::PREFIX) && name != names::LATENT_W && name != names::LATENT_B
}

/// Criterion-5 experiment state shared by criteria 3, 5 and 6.
struct Desk {
    data: Dataset,
    split: SplitSpec,
    cfg: RunConfig,
    runs: Vec<(SplitFeatures, RunOutcome)>,
    seconds: f64,
}

fn desk() -> Desk {
    let start = Instant::now();
    let data = gen_synthetic(&SyntheticSpec::default()).unwrap();
    let split = build_split(&data, 0, Protocol::NormalVsRest, 0).unwrap();
    let cfg = RunConfig::new(EncoderConfig::vit_tiny_test(1));
    let runs = SEEDS
        .iter()
        .map(|&seed| {
            let pool = PoolFeatures::compute(&data, &cfg.encoder, seed, Exec::default()).unwrap();
            let feats = pool.for_split(&split).unwrap();
            let out = run_one(&cfg, &split, &feats, seed).unwrap();
            (feats, out)
        })
        .collect();
    Desk {
        data,
        split,
        cfg,
        runs,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn criterion1() -> Verdict {
    let start = Instant::now();
    let report = run_suite(0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst_op = report
        .checks
        .iter()
        .filter(|c| c.name != "pipeline")
        .map(|c| c.max_rel_err)
        .fold(0.0, f64::max);
    let pipeline = report.checks.iter().find(|c| c.name == "pipeline").map(|c| c.max_rel_err);
    let ops = report.checks.iter().filter(|c| c.name != "pipeline").count();
    let pass = report.passed() && ops == 8 && worst_op < OP_TOL && pipeline.is_some_and(|p| p < PIPELINE_TOL) && secs < 60.0;
    verdict(
        pass,
        format!("{ops} ops x {POINTS} points, worst rel err {worst_op:.2e}, pipeline {pipeline:?}, {secs:.2}s"),
    )
}

fn criterion2() -> Verdict {
    let mut r = Rng::new(2024);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = 2 + r.below(199);
        // coarse quantization forces ties
        let s: Vec<f64> = (0..n).map(|_| r.below(16) as f64 / 8.0).collect();
        let mut y: Vec<u8> = (0..n).map(|_| r.below(2) as u8).collect();
        y[0] = 0;
        y[1] = 1;
        if auc_roc(&s, &y).unwrap() != auc_pairwise(&s, &y).unwrap() {
            mismatches += 1;
        }
    }
    let y = [0, 0, 1, 1];
    let perfect = auc_roc(&[0.1, 0.2, 0.3, 0.4], &y).unwrap();
    let reversed = auc_roc(&[0.4, 0.3, 0.2, 0.1], &y).unwrap();
    let ties = auc_roc(&[0.5; 4], &y).unwrap();
    verdict(
        mismatches == 0 && perfect == 1.0 && reversed == 0.0 && ties == 0.5,
        format!("{mismatches}/200 mismatches; perfect {perfect}, reversed {reversed}, all-ties {ties}"),
    )
}

fn criterion3(desk: &Desk) -> Verdict {
    let cfg = EncoderConfig::vit_tiny_test(1);
    let mut r = Rng::new(31);
    let base = cfg.init_params(&mut Rng::new(3)).unwrap();

    let mut zeroed = base.clone();
    let block_names: Vec<String> = zeroed.names().filter(|n| n.contains("blocks.0.")).map(String::from).collect();
    for n in &block_names {
        let shape = zeroed.get(n).unwrap().shape().to_vec();
        zeroed.insert(n.clone(), Tensor::zeros(&shape));
    }
    let tokens = Tensor::matrix(17, 64, (0..17 * 64).map(|_| r.gaussian(0.0, 1.0)).collect()).unwrap();
    let identity = encoder_block(&tokens, &zeroed, &cfg, 0).unwrap().bits_eq(&tokens) && !block_names.is_empty();

    let mut no_pos = base.clone();
    no_pos.insert(names::POS, Tensor::zeros(&[cfg.num_patches() + 1, 64]));
    let img = Tensor::new(vec![1, 32, 32], (0..1024).map(|_| r.uniform()).collect()).unwrap();
    let mut swapped = img.clone();
    for (a, b) in [((0, 0), (3, 2)), ((1, 3), (2, 1))] {
        for y in 0..8 {
            for x in 0..8 {
                let i = (a.0 * 8 + y) * 32 + a.1 * 8 + x;
                let j = (b.0 * 8 + y) * 32 + b.1 * 8 + x;
                swapped.data_mut().swap(i, j);
            }
        }
    }
    let cls = backbone_features(&no_pos, &cfg, &[img.clone(), swapped.clone()], Exec::default()).unwrap();
    let lat = extract_latent(&[img, swapped], &cfg, &no_pos, Exec::default()).unwrap().features;
    let perm_err = cls
        .row(0)
        .iter()
        .zip(cls.row(1))
        .chain(lat.row(0).iter().zip(lat.row(1)))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let (feats, out) = &desk.runs[0];
    let latent = out.model.latent_from_features(&feats.test).unwrap().features;
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for i in 0..latent.rows() {
        let row = latent.row(i);
        let d = row.len() as f64;
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        worst_mean = worst_mean.max(mean.abs());
        worst_var = worst_var.max((var - 1.0).abs());
    }

    let bytes = checkpoint_bytes(&out.model.params).unwrap();
    let loaded: ParamStore = parse_checkpoint(&bytes).unwrap();
    let round_trip = loaded.names().count() == out.model.params.names().count()
        && out.model.params.iter().all(|(n, t)| loaded.get(n).is_some_and(|u| u.bits_eq(t)))
        && checkpoint_bytes(&loaded).unwrap() == bytes;

    verdict(
        identity && perm_err <= 1e-8 && worst_mean <= 1e-6 && worst_var <= 1e-4 && round_trip,
        format!(
            "residual identity {identity}; CLS perm err {perm_err:.1e}; latent |mean| {worst_mean:.1e}, |var-1| {worst_var:.1e}; checkpoint round trip {round_trip}"
        ),
    )
}

fn criterion4(desk: &Desk) -> Verdict {
    let images: Vec<Tensor> = desk.data.train.images.clone();
    let mut model = OneClassModel::init(EncoderConfig::vit_tiny_test(1), 1, 4).unwrap();
    let before = model.params.clone();
    let mut tcfg = TrainConfig::new(64);
    tcfg.batch_size = 50;
    tcfg.seed = 4;
    let hist = train(&mut model, &images, &tcfg, Exec::default()).unwrap();
    let steps = hist.steps.len();
    let frozen_same = before
        .iter()
        .filter(|(n, _)| is_backbone(n))
        .all(|(n, t)| model.params.get(n).unwrap().bits_eq(t));
    let trainable_moved = !model.params.get(names::LATENT_W).unwrap().bits_eq(before.get(names::LATENT_W).unwrap());

    let uniform = bce_loss(&[0.5; 8], &[0, 1, 0, 1, 1, 0, 0, 1]).unwrap();
    let mut tape = Tape::new();
    let logits = tape.leaf(Tensor::zeros(&[4, 2]));
    let loss = tape.softmax_bce(logits, &[0, 1, 1, 0]).unwrap();
    let via_logits = tape.value(loss).data()[0];
    let ln2 = std::f64::consts::LN_2;
    let bce_ok = (uniform - ln2).abs() <= 1e-12 && (via_logits - ln2).abs() <= 1e-12;

    let n = 10_000;
    let noise = NoiseConfig::new(64);
    let s = sample_pseudo_negatives(&mut Rng::new(5), n, &noise).unwrap();
    let sigma = noise.sigma2.sqrt();
    let mean_tol = 5.0 * sigma / (n as f64).sqrt();
    let var_tol = 5.0 * noise.sigma2 * (2.0 / (n as f64 - 1.0)).sqrt();
    let (mut worst_mean, mut worst_var) = (0.0f64, 0.0f64);
    for j in 0..64 {
        let col: Vec<f64> = (0..n).map(|i| s.row(i)[j]).collect();
        let m = col.iter().sum::<f64>() / n as f64;
        let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
        worst_mean = worst_mean.max((m - noise.mu).abs() / mean_tol);
        worst_var = worst_var.max((v - noise.sigma2).abs() / var_tol);
    }
    verdict(
        steps == 100 && frozen_same && trainable_moved && bce_ok && worst_mean <= 1.0 && worst_var <= 1.0,
        format!(
            "{steps} steps, backbone bit-identical {frozen_same}; bce(0.5) - ln2 = {:.1e}; sampler worst mean {worst_mean:.2} and var {worst_var:.2} of the 5-sigma bound",
            (uniform - ln2).abs().max((via_logits - ln2).abs())
        ),
    )
}

/// Linear SVM on raw pixels: fit on half of the test inliers and outliers,
/// score the other half.
fn raw_pixel_auc(desk: &Desk) -> f64 {
    let flat = |idx: &[usize]| {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| desk.data.test.images[i].data().to_vec()).collect();
        Tensor::from_rows(&rows).unwrap()
    };
    let pick = |label: u8, fit: bool| -> Vec<usize> {
        desk.split
            .test
            .iter()
            .zip(&desk.split.test_labels)
            .filter(|(_, &y)| y == label)
            .enumerate()
            .filter(|(k, _)| (k % 2 == 0) == fit)
            .map(|(_, (&i, _))| i)
            .collect()
    };
    let svm = svm_fit(&flat(&pick(0, true)), &flat(&pick(1, true)), 1.0, SvmOptions::default()).unwrap();
    let (inl, outl) = (pick(0, false), pick(1, false));
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (idx, y) in [(inl, 0u8), (outl, 1u8)] {
        for i in idx {
            scores.push(svm.svm_score(desk.data.test.images[i].data()));
            labels.push(y);
        }
    }
    auc_roc(&scores, &labels).unwrap()
}

fn criterion5(desk: &Desk) -> Verdict {
    let aucs: Vec<f64> = desk.runs.iter().map(|(_, o)| o.auc).collect();
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    let accs: Vec<f64> = desk.runs.iter().map(|(_, o)| *o.history.epoch_accuracy.last().unwrap()).collect();
    let worst_acc = accs.iter().copied().fold(1.0, f64::min);
    let epochs_ok = desk.runs.iter().all(|(_, o)| o.history.epoch_accuracy.len() == 10);
    let raw = raw_pixel_auc(desk);
    verdict(
        mean >= 0.95 && worst_acc >= 0.95 && epochs_ok && desk.seconds < 180.0 && raw >= 0.99,
        format!(
            "mean AUC {mean:.4} over seeds {aucs:?}; min final accuracy {worst_acc:.4}; {:.1}s; raw-pixel linear AUC {raw:.4}",
            desk.seconds
        ),
    )
}

fn criterion6(desk: &Desk) -> Verdict {
    let (mut min_kde, mut min_svm) = (1.0f64, 1.0f64);
    let mut order_ok = true;
    let mut tied_density_pairs = 0usize;
    for (&seed, (feats, out)) in SEEDS.iter().zip(&desk.runs) {
        for head in [HeadKind::Kde, HeadKind::Svm] {
            let cfg = RunConfig { head, ..desk.cfg.clone() };
            let auc = eval_split(&out.model, &cfg, &desk.split, feats, seed).unwrap();
            match head {
                HeadKind::Kde => min_kde = min_kde.min(auc),
                _ => min_svm = min_svm.min(auc),
            }
        }
        let train = out.model.latent_from_features(&feats.train).unwrap().features;
        let test = out.model.latent_from_features(&feats.test).unwrap().features;
        let kde = kde_fit(&train).unwrap();
        let score: Vec<f64> = (0..test.rows()).map(|i| kde.kde_score(test.row(i))).collect();
        let dens: Vec<f64> = (0..test.rows()).map(|i| kde.density(test.row(i))).collect();
        for i in 0..score.len() {
            for j in 0..score.len() {
                order_ok &= (score[i] < score[j]) == (dens[i] > dens[j]);
                if i < j && dens[i] == dens[j] && score[i] != score[j] {
                    tied_density_pairs += 1;
                }
            }
        }
    }
    verdict(
        min_kde >= 0.90 && min_svm >= 0.90 && order_ok,
        format!(
            "min KDE AUC {min_kde:.4}, min SVM AUC {min_svm:.4}; score order equals -density order {order_ok} ({tied_density_pairs} density ties)"
        ),
    )
}

fn synthetic_config(out: &Path, extra: &str) -> ExperimentConfig {
    let text = format!("dataset.source = synthetic\nencoder.preset = vit-tiny-test\nseed = 0\nout = {}\n{extra}", out.display());
    ExperimentConfig::parse(&text, out).unwrap()
}

fn criterion7() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(
        dir.path(),
        "seed_count = 1\nablation.batch_sizes = 8,16,32,64,128,256\nablation.depths = 1,2,4\n",
    );
    let results = cmd_ablate(&cfg, Exec::default()).unwrap();
    let failed = results.iter().filter(|r| r.failed()).count();
    let csv = fs::read_to_string(layout::ablation_report(dir.path())).unwrap();
    let mut lines = csv.split('\n').collect::<Vec<_>>();
    let terminated = lines.pop() == Some("");
    let header_ok = lines.first() == Some(&"batch_size,latent_dim,depth,head,seed,class,auc");
    let rows = &lines[1.min(lines.len())..];
    let mut expected = Vec::new();
    for b in DEFAULT_BATCH_SIZES {
        for d in [1, 2, 4] {
            expected.push(format!("{b},64,{d},mlp,0,0,"));
        }
    }
    let shape_ok = rows.len() == 18
        && rows.iter().zip(&expected).all(|(row, prefix)| {
            let auc = row.strip_prefix(prefix.as_str()).and_then(|a| a.parse::<f64>().ok());
            row.split(',').count() == 7 && auc.is_some_and(|a| (0.0..=1.0).contains(&a))
        });
    let lf_only = !csv.contains('\r');
    verdict(
        results.len() == 18 && failed == 0 && header_ok && shape_ok && terminated && lf_only,
        format!(
            "{} points, {failed} failed; header {header_ok}, {} rows in grid order {shape_ok}, LF endings {}",
            results.len(),
            rows.len(),
            terminated && lf_only
        ),
    )
}

fn snapshot(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for sub in ["checkpoints", "history", "reports"] {
        let mut entries: Vec<_> = fs::read_dir(out.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            files.push((format!("{sub}/{}", p.file_name().unwrap().to_string_lossy()), fs::read(&p).unwrap()));
        }
    }
    files
}

fn criterion8() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let snaps: Vec<_> = dirs
        .iter()
        .map(|d| {
            let cfg = synthetic_config(d.path(), "seed_count = 5\n");
            cmd_train(&cfg, Exec::default()).unwrap();
            cmd_eval(&cfg, Exec::default()).unwrap();
            snapshot(d.path())
        })
        .collect();
    let files = snaps[0].len();
    let ckpts = snaps[0].iter().filter(|(n, _)| n.ends_with(".ckpt")).count();
    let csvs = snaps[0].iter().filter(|(n, _)| n.ends_with(".csv")).count();
    let identical = snaps[0] == snaps[1];
    verdict(
        identical && ckpts == 5 && csvs == 6,
        format!("{files} files ({ckpts} checkpoints, {csvs} CSVs) byte-identical across runs: {identical}"),
    )
}

fn main() {
    let desk = desk();
    let verdicts = [
        criterion1(),
        criterion2(),
        criterion3(&desk),
        criterion4(&desk),
        criterion5(&desk),
        criterion6(&desk),
        criterion7(),
        criterion8(),
    ];
    for (i, v) in verdicts.iter().enumerate() {
        println!("{} criterion {}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
    }
    let failed: Vec<usize> = (1..=8).filter(|i| !verdicts[i - 1].pass).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
