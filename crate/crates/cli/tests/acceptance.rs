//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use fundus_qa::adversarial::{adversarial_loss, combined_loss, l1_term, patch_grid, DiscriminatorField, LossConfig};
use fundus_qa::isc::{train_isc, IscTrainParams};
use fundus_qa::pipeline::{DatasetManifest, ManifestEntry};
use fundus_qa::qv::{qv_score_masked, DEFAULT_WINDOW};
use fundus_qa::raster::{FovMask, GrayImage, RasterImage};
use fundus_qa::stats::{
    auc, ks_statistic, paired_t_test, roc_curve, student_t_two_tailed, summarize, youden_threshold, DEFAULT_ALPHA,
};
use fundus_qa::synth::{defocus, degrade, render_fundus, FundusSpec};
use fundus_qa::vesselness::{frangi_vesselness, fundus_vesselness, FrangiParams};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(actual: f64, expected: f64, tol: f64, what: &str) -> Result<(), String> {
    check(
        (actual - expected).abs() <= tol,
        format!("{what}: {actual} vs {expected} (tol {tol})"),
    )
}

/// 100 seeded score/label sets with ties and both classes present.
fn scored_sets() -> Vec<(Vec<f64>, Vec<bool>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..100)
        .map(|_| {
            let n = rng.random_range(2..=200);
            let levels = rng.random_range(2..=60) as f64;
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            labels[0] = true;
            labels[1] = false;
            let scores = labels
                .iter()
                .map(|&l| ((rng.random::<f64>() + if l { 0.3 } else { 0.0 }) * levels).floor() / levels)
                .collect();
            (scores, labels)
        })
        .collect()
}

fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (sp, _) in scores.iter().zip(labels).filter(|(_, l)| **l) {
        for (sn, _) in scores.iter().zip(labels).filter(|(_, l)| !**l) {
            pairs += 1.0;
            wins += if sp > sn {
                1.0
            } else if sp == sn {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

fn criterion_auc() -> Outcome {
    let sets = scored_sets();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (i, (s, l)) in sets.iter().enumerate() {
        let a = auc(&roc_curve(s, l).map_err(|e| e.to_string())?);
        let b = pair_count_auc(s, l);
        worst = worst.max((a - b).abs());
        within(a, b, 1e-9, &format!("set {i}"))?;
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("100 sets, max |diff| {worst:.1e}, {elapsed:.2?}"))
}

fn criterion_youden() -> Outcome {
    for (i, (s, l)) in scored_sets().iter().enumerate() {
        let y = youden_threshold(&roc_curve(s, l).map_err(|e| e.to_string())?);
        let p = l.iter().filter(|v| **v).count() as f64;
        let n = l.len() as f64 - p;
        let mut distinct = s.clone();
        distinct.sort_by(|a, b| b.total_cmp(a));
        distinct.dedup();
        // (j, tpr, rank) for every cut "score >= t"
        let cuts: Vec<(f64, f64, usize)> = distinct
            .iter()
            .enumerate()
            .map(|(rank, &t)| {
                let tp = s.iter().zip(l).filter(|(v, c)| **c && **v >= t).count() as f64;
                let fp = s.iter().zip(l).filter(|(v, c)| !**c && **v >= t).count() as f64;
                (tp / p - fp / n, tp / p, rank)
            })
            .collect();
        let best_j = cuts.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        check(y.j == best_j, format!("set {i}: J {} vs exhaustive {best_j}", y.j))?;
        let tied: Vec<&(f64, f64, usize)> = cuts.iter().filter(|c| c.0 == best_j).collect();
        let best_tpr = tied.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let expected_rank = tied.iter().filter(|c| c.1 == best_tpr).map(|c| c.2).max().unwrap();
        check(
            y.index == expected_rank,
            format!("set {i}: tie-break chose rank {} not {expected_rank}", y.index),
        )?;
        let lower = distinct.get(y.index + 1).copied().unwrap_or(distinct[y.index]);
        check(
            y.threshold <= distinct[y.index] && y.threshold >= lower,
            format!("set {i}: threshold {} outside its cut", y.threshold),
        )?;
    }
    Ok("100 sets, J exact, tie-break (higher tpr, then lower threshold) respected".into())
}

fn criterion_stats() -> Outcome {
    let p = student_t_two_tailed(2.776, 4.0);
    within(p, 0.05, 1e-3, "p(t=2.776, df=4)")?;
    check(student_t_two_tailed(0.0, 4.0) == 1.0, "p(t=0) is not 1")?;
    let same = paired_t_test(&[1.0, 2.0, 4.0], &[0.0, 2.5, 4.5]).map_err(|e| e.to_string())?;
    check(
        same.p_two_tailed == 1.0 && same.t_statistic == 0.0,
        "paired t on zero mean difference",
    )?;
    let ks = ks_statistic(&[0.25, 0.75], |x| x.clamp(0.0, 1.0)).map_err(|e| e.to_string())?;
    check(ks.statistic == 0.25, format!("KS D {}", ks.statistic))?;

    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut normal_pass = 0;
    let mut uniform_fail = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..100).map(|_| normal.sample(&mut rng)).collect();
        let s = summarize(&xs, DEFAULT_ALPHA).map_err(|e| e.to_string())?;
        normal_pass += s.normality.is_some_and(|c| c.normal_at_alpha) as usize;
        let us: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let s = summarize(&us, DEFAULT_ALPHA).map_err(|e| e.to_string())?;
        uniform_fail += s.normality.is_some_and(|c| !c.normal_at_alpha) as usize;
    }
    check(normal_pass >= 9, format!("normal samples passed {normal_pass}/10"))?;
    check(uniform_fail >= 8, format!("uniform samples rejected {uniform_fail}/10"))?;
    Ok(format!(
        "p(2.776, 4) = {p:.6}, KS D = 0.25, normal pass {normal_pass}/10, uniform reject {uniform_fail}/10"
    ))
}

fn criterion_loss() -> Outcome {
    let cfg = LossConfig::default();
    let field = |p: f64| DiscriminatorField::constant(16, 16, p).unwrap();
    let half = adversarial_loss(&field(0.5), &field(0.5), &cfg).map_err(|e| e.to_string())?;
    within(half, 2.0 * 0.5f64.ln(), 1e-12, "D = 0.5 everywhere")?;
    within(half, -1.386_294_361_119_890_6, 1e-12, "2 ln 0.5")?;
    let quarter = adversarial_loss(&field(0.25), &field(0.75), &cfg).map_err(|e| e.to_string())?;
    within(quarter, -2.772_588_722_239_781, 1e-12, "ln 0.25 + ln 0.25")?;

    let zero_lambda = LossConfig::new(0.0, cfg.epsilon_clamp()).map_err(|e| e.to_string())?;
    check(
        combined_loss(quarter, 0.37, &zero_lambda) == quarter,
        "lambda = 0 does not reduce to the adversarial term",
    )?;
    let img = RasterImage::from_fn(32, 32, |x, y| [x as f64 / 32.0, y as f64 / 32.0, 0.5]);
    let l1 = l1_term(&img, &img).map_err(|e| e.to_string())?;
    check(
        l1 == 0.0 && combined_loss(half, l1, &cfg) == half,
        "zero L1 does not leave the adversarial term",
    )?;

    let grid = patch_grid(512, 63, 16).map_err(|e| e.to_string())?;
    let origins = grid.axis_origins();
    check(origins[0] == 0 && origins[15] == 449, format!("origins {origins:?}"))?;
    let mut covered = vec![false; 512];
    for &o in origins {
        covered[o..o + 63].iter_mut().for_each(|c| *c = true);
    }
    check(covered.iter().all(|c| *c), "patch grid leaves pixels uncovered")?;
    Ok(format!(
        "2 ln 0.5 = {half}, ln .25 + ln .25 = {quarter}, grid 0..=449 covers 512"
    ))
}

fn criterion_qv() -> Outcome {
    let start = Instant::now();
    let spec = FundusSpec::new(512);
    let params = FrangiParams::default();
    let mut ok = 0;
    let mut failures = Vec::new();
    for seed in 0..20 {
        let f = render_fundus(&spec, seed);
        let q = |img: &RasterImage| qv_score_masked(img, &f.fov, &params, DEFAULT_WINDOW).map(|r| r.score);
        let sharp = q(&f.image).map_err(|e| e.to_string())?;
        let b2 = q(&defocus(&f.image, &f.fov, 2.0)).map_err(|e| e.to_string())?;
        let b4 = q(&defocus(&f.image, &f.fov, 4.0)).map_err(|e| e.to_string())?;
        if sharp > b2 && b2 > b4 {
            ok += 1;
        } else {
            failures.push(format!("seed {seed}: {sharp:.4} {b2:.4} {b4:.4}"));
        }
    }
    let elapsed = start.elapsed();
    check(failures.is_empty(), failures.join("; "))?;
    check(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("{ok}/20 fixtures monotone at 512x512, {elapsed:.1?}"))
}

fn isc_corpus(seeds: std::ops::Range<u64>, spec: &FundusSpec) -> (Vec<(RasterImage, FovMask)>, Vec<bool>) {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for seed in seeds {
        let f = render_fundus(spec, seed);
        let bad = degrade(&f.image, &f.fov, seed + 50_000);
        images.push((f.image, f.fov.clone()));
        labels.push(true);
        images.push((bad, f.fov));
        labels.push(false);
    }
    (images, labels)
}

fn criterion_isc() -> Outcome {
    let start = Instant::now();
    let spec = FundusSpec::new(256);
    let (train, labels) = isc_corpus(0..100, &spec);
    let params = IscTrainParams {
        pixels_per_image: 1_000,
        epochs: 500,
        seed: 7,
        ..Default::default()
    };
    let trained = train_isc(&train, &labels, &params).map_err(|e| e.to_string())?;
    for (i, w) in trained.kmeans.inertia_history.windows(2).enumerate() {
        check(
            w[1] <= w[0] * (1.0 + 1e-12),
            format!("inertia rose at iteration {}", i + 1),
        )?;
    }
    let again = train_isc(&train, &labels, &params).map_err(|e| e.to_string())?;
    check(
        trained.model.to_bytes() == again.model.to_bytes(),
        "same seed gave different model bytes",
    )?;

    let (held, held_labels) = isc_corpus(1_000..1_020, &spec);
    let mut correct = 0;
    for ((img, mask), label) in held.iter().zip(&held_labels) {
        let score = trained.model.score(img, mask).map_err(|e| e.to_string())?;
        correct += ((score >= 0.5) == *label) as usize;
    }
    let accuracy = correct as f64 / held.len() as f64;
    let elapsed = start.elapsed();
    check(
        accuracy >= 0.9,
        format!("held-out accuracy {accuracy} ({correct}/{})", held.len()),
    )?;
    check(elapsed < Duration::from_secs(300), format!("took {elapsed:?}"))?;
    Ok(format!(
        "held-out accuracy {correct}/{} = {accuracy:.3}, {} k-means iterations, bytes identical, {elapsed:.1?}",
        held.len(),
        trained.kmeans.iterations
    ))
}

fn criterion_frangi() -> Outcome {
    // dark bar, rows 30..34, on a bright background
    let bar = GrayImage::from_fn(96, 64, |_, y| if (30..34).contains(&y) { 0.2 } else { 0.8 });
    let params = FrangiParams::with_sigmas(&[1.0, 2.0, 3.0, 4.0]).map_err(|e| e.to_string())?;
    let mut fractions = Vec::new();
    for (img, transposed) in [(bar.clone(), false), (bar.transpose(), true)] {
        let rgb = RasterImage::from_channels(&img, &img, &img).map_err(|e| e.to_string())?;
        let map = fundus_vesselness(&rgb, &params).map_err(|e| e.to_string())?;
        let at = |along: usize, across: usize| {
            if transposed {
                map.get(across, along)
            } else {
                map.get(along, across)
            }
        };
        let mut background: Vec<f64> = (0..64)
            .filter(|y| !(26..38).contains(y))
            .flat_map(|y| (0..96).map(move |x| (x, y)))
            .map(|(x, y)| at(x, y))
            .collect();
        background.sort_by(f64::total_cmp);
        let p99 = background[(0.99 * (background.len() - 1) as f64).round() as usize];
        let centre: Vec<f64> = (0..96).flat_map(|x| [at(x, 31), at(x, 32)]).collect();
        let frac = centre.iter().filter(|v| **v > p99).count() as f64 / centre.len() as f64;
        check(
            frac >= 0.95,
            format!("only {:.1}% of centreline above background p99", 100.0 * frac),
        )?;
        fractions.push(frac);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = GrayImage::from_fn(53, 41, |_, _| rng.random::<f64>());
    let fundus = render_fundus(&FundusSpec::new(128), 3).image.green();
    for img in [noise, fundus] {
        let a = frangi_vesselness(&img, &FrangiParams::default()).map_err(|e| e.to_string())?;
        let b = frangi_vesselness(&img.rotate90(), &FrangiParams::default()).map_err(|e| e.to_string())?;
        check(
            b.plane() == &a.plane().rotate90(),
            "vesselness of a rotated image differs from the rotated vesselness",
        )?;
    }
    Ok(format!(
        "centreline above p99: {:.0}% / {:.0}% (horizontal / vertical), rotation exact",
        100.0 * fractions[0],
        100.0 * fractions[1]
    ))
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fundus-qa"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`fundus-qa {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn criterion_pipeline() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();

    let entries = (0..946)
        .map(|i| ManifestEntry {
            id: format!("img{i:04}"),
            retina_path: PathBuf::from(format!("retina/img{i:04}.png")),
            vessel_path: PathBuf::from(format!("vessels/img{i:04}.png")),
            synthetic_path: None,
            grade: None,
            excluded: false,
        })
        .collect();
    let big = root.join("big.jsonl");
    DatasetManifest::new(entries)
        .and_then(|m| m.write(&big))
        .map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let out = root.join(run);
        cli(&[
            "split",
            "--manifest",
            p(&big),
            "--counts",
            "614,155,177",
            "--seed",
            "5",
            "--out-dir",
            p(&out),
        ])?;
        let mut sizes = Vec::new();
        let mut bytes = Vec::new();
        for part in ["train", "val", "test"] {
            let path = out.join(format!("{part}.jsonl"));
            sizes.push(DatasetManifest::read(&path).map_err(|e| e.to_string())?.len());
            bytes.push(fs::read(&path).map_err(|e| e.to_string())?);
        }
        check(sizes == [614, 155, 177], format!("split sizes {sizes:?}"))?;
        runs.push(bytes);
    }
    check(runs[0] == runs[1], "two identical split runs differ")?;

    let start = Instant::now();
    let fx = root.join("fixtures");
    cli(&[
        "synth",
        "--out",
        p(&fx),
        "--count",
        "30",
        "--size",
        "256",
        "--seed",
        "100",
        "--blur",
        "2",
    ])?;
    let manifest = root.join("manifest.jsonl");
    cli(&[
        "manifest",
        "--retina",
        p(&fx.join("retina")),
        "--vessels",
        p(&fx.join("vessels")),
        "--synthetic",
        p(&fx.join("blurred")),
        "--out",
        p(&manifest),
    ])?;
    cli(&[
        "split",
        "--manifest",
        p(&manifest),
        "--counts",
        "20,5,5",
        "--seed",
        "1",
        "--out-dir",
        p(&root.join("s")),
    ])?;
    let model = root.join("isc.bin");
    cli(&[
        "isc-train",
        "--good",
        p(&fx.join("retina")),
        "--bad",
        p(&fx.join("blurred")),
        "--out",
        p(&model),
        "--seed",
        "3",
        "--pixels-per-image",
        "500",
        "--epochs",
        "200",
    ])?;
    let mut csvs = Vec::new();
    for (metric, extra) in [("qv", vec![]), ("isc", vec!["--model", p(&model)])] {
        for role in ["retina", "synthetic"] {
            let out = root.join(format!("{metric}_{role}.csv"));
            let mut args = vec![
                "quality",
                metric,
                "--manifest",
                p(&manifest),
                "--role",
                role,
                "--out",
                p(&out),
            ];
            args.extend(&extra);
            cli(&args)?;
            csvs.push(out);
        }
    }
    let table_csv = root.join("table.csv");
    let text = cli(&[
        "report",
        "--qv-real",
        p(&csvs[0]),
        "--qv-synthetic",
        p(&csvs[1]),
        "--isc-real",
        p(&csvs[2]),
        "--isc-synthetic",
        p(&csvs[3]),
        "--out",
        p(&table_csv),
    ])?;
    let elapsed = start.elapsed();

    let table = fs::read_to_string(&table_csv).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let sets = rows.iter().filter(|r| r[0] == "set").count();
    check(
        sets == 4,
        format!("expected 4 set rows (2 metrics x real/synthetic), got {sets}:\n{text}"),
    )?;
    let qv = rows
        .iter()
        .find(|r| r[0] == "paired" && r[1] == "Qv")
        .ok_or_else(|| format!("no paired Qv row:\n{text}"))?;
    let qv_p: f64 = qv[11].parse().map_err(|_| format!("bad p in {qv:?}"))?;
    check(qv_p < 0.05, format!("Qv difference not significant, p = {qv_p}"))?;
    check(
        elapsed < Duration::from_secs(120),
        format!("smoke suite took {elapsed:?}"),
    )?;
    Ok(format!(
        "split 614/155/177 bit-identical; smoke suite {elapsed:.1?}, Qv paired p = {qv_p:.2e}"
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 AUC oracle equivalence", criterion_auc),
        ("2 Youden oracle equivalence", criterion_youden),
        ("3 statistical engine", criterion_stats),
        ("4 loss math and patch grid", criterion_loss),
        ("5 Qv degradation monotonicity", criterion_qv),
        ("6 ISC end-to-end", criterion_isc),
        ("7 Frangi correctness", criterion_frangi),
        ("8 pipeline determinism and CLI smoke", criterion_pipeline),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
