//! End-to-end runs of the `ocvit` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
dataset.source = synthetic
synthetic.train_count = 128
synthetic.test_inliers = 40
synthetic.test_outliers = 40
train.epochs = 2
seed = 3
seed_count = 1
ablation.batch_sizes = 64
ablation.latent_dims = 64
ablation.depths = 1
ablation.heads = mlp
";

fn ocvit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocvit")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.cfg");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn train_eval_score_and_ablate_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let out_s = out.to_string_lossy().into_owned();

    let t = ocvit(&["train", "--config", &cfg, "--out", &out_s]);
    assert_eq!(code(&t), 0, "{}", String::from_utf8_lossy(&t.stderr));
    assert!(out.join("checkpoints/class0_seed3.ckpt").is_file());
    let hist = fs::read_to_string(out.join("history/class0_seed3.csv")).unwrap();
    assert!(hist.starts_with("step,epoch,loss\n"));
    assert_eq!(hist.lines().count(), 1 + 2 * 2);

    let e = ocvit(&["eval", "--config", &cfg, "--out", &out_s]);
    assert_eq!(code(&e), 0, "{}", String::from_utf8_lossy(&e.stderr));
    let eval = fs::read_to_string(out.join("reports/eval_mlp.csv")).unwrap();
    let lines: Vec<&str> = eval.lines().collect();
    assert_eq!(lines[0], "class,seed,auc");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("mean,,") && lines[3].starts_with("std,,"));
    let eval_auc = lines[1].strip_prefix("0,3,").unwrap();
    assert!(eval_auc.parse::<f64>().unwrap() > 0.5);

    let kde = ocvit(&["eval", "--config", &cfg, "--out", &out_s, "--head", "kde"]);
    assert_eq!(code(&kde), 0);
    assert!(out.join("reports/eval_kde.csv").is_file());

    let a = ocvit(&["ablate", "--config", &cfg, "--out", &out_s]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let abl = fs::read_to_string(out.join("reports/ablation.csv")).unwrap();
    let row = abl.lines().nth(1).unwrap();
    assert_eq!(row, format!("64,64,1,mlp,3,0,{eval_auc}"));

    let mut paths = Vec::new();
    for (k, pos) in [(0u32, 4u32), (1, 18)] {
        let img = image::GrayImage::from_fn(32, 32, |x, y| {
            let inside = (pos..pos + 6).contains(&x) && (pos..pos + 6).contains(&y);
            image::Luma([if inside { 255 } else { 0 }])
        });
        let p = dir.path().join(format!("img{k}.png"));
        img.save(&p).unwrap();
        paths.push(p.to_string_lossy().into_owned());
    }
    let mut args = vec!["score", "--config", &cfg, "--out", &out_s];
    args.extend(paths.iter().map(String::as_str));
    let s = ocvit(&args);
    assert_eq!(code(&s), 0, "{}", String::from_utf8_lossy(&s.stderr));
    let text = stdout(&s);
    let scores: Vec<f64> = text
        .lines()
        .zip(&paths)
        .map(|(line, p)| line.strip_prefix(&format!("{p},")).unwrap().parse().unwrap())
        .collect();
    assert_eq!(scores.len(), 2);
    assert!(scores.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn gradcheck_passes() {
    let g = ocvit(&["gradcheck"]);
    assert_eq!(code(&g), 0);
    let text = stdout(&g);
    assert_eq!(text.lines().filter(|l| l.starts_with("ok")).count(), 9, "{text}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.cfg");
    assert_eq!(code(&ocvit(&["train", "--config", &missing.to_string_lossy()])), 2);

    let unknown = write_config(dir.path(), "dataset.source = synthetic\ntrain.epoch = 3\n");
    let o = ocvit(&["train", "--config", &unknown]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("train.epoch"));

    let no_source = write_config(dir.path(), "seed = 1\n");
    assert_eq!(code(&ocvit(&["train", "--config", &no_source])), 2);

    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("empty").to_string_lossy().into_owned();
    assert_eq!(code(&ocvit(&["eval", "--config", &cfg, "--out", &out])), 2);

    assert_eq!(code(&ocvit(&["train"])), 2);
    assert_eq!(code(&ocvit(&["train", "--config", &cfg, "--head", "forest"])), 2);
}
