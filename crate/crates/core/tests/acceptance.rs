//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Environment:
//! * `EDM_POSE_FULL_ACCEPTANCE=1` trains the convolutional network for its full
//!   schedule even when the measured epoch time projects past the time budget.
//! * `EDM_POSE_STRICT_ACCEPTANCE=1` exits nonzero when any criterion fails.

use std::time::{Duration, Instant};

use edm_pose::data::synth::{sample_pose, sample_rng};
use edm_pose::data::{synth_dataset, DatasetRecord, Split, SynthConfig};
use edm_pose::eval::{
    ambiguity_correlation, procrustes_align, AlignOptions, MaskKind, MetricsReport, ProtocolSpec,
};
use edm_pose::mds::{recover_pose, Chirality, RecoveryOptions};
use edm_pose::nn::gradcheck::{gradient_check, layer_suite, GradCheckOptions, KindResult};
use edm_pose::nn::{count_params, init_params, train, Checkpoint, Mode, Model, ModelConfig, Tensor, TrainConfig};
use edm_pose::pipeline::{evaluate_predictions, select_split, training_samples, Lifter};
use edm_pose::pose::normalize_2d;
use edm_pose::{build_edm, DistanceMatrix, Error, Pose2D, Pose3D, Result, Skeleton, Units};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const TIME_BUDGET: Duration = Duration::from_secs(30 * 60);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

fn env_flag(name: &str) -> bool {
    std::env::var(name).is_ok_and(|v| v == "1")
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn evaluate(ckpt: &Checkpoint, records: &[DatasetRecord], protocol: &ProtocolSpec) -> Result<MetricsReport> {
    let lifter = Lifter::new(ckpt, Skeleton::default_14())?;
    let test = select_split(records, Some(Split::Test));
    let preds = lifter.predict_records(&test, protocol)?;
    evaluate_predictions(&preds, records, &protocol.to_string(), &lifter.skeleton)
}

fn dataset(n_train: usize, n_test: usize, seed: u64) -> Result<Vec<DatasetRecord>> {
    let n = n_train + n_test;
    let cfg = SynthConfig { test_fraction: n_test as f64 / n as f64, ..SynthConfig::new(n, seed) };
    let recs = synth_dataset(&cfg)?;
    let got = select_split(&recs, Some(Split::Test)).len();
    if got != n_test {
        return Err(Error::InvalidInput(format!("expected {n_test} test records, got {got}")));
    }
    Ok(recs)
}

fn criterion_1() -> Result<Verdict> {
    let a = count_params(&ModelConfig::fconn());
    let b = count_params(&ModelConfig::fconv());
    verdict(a == 40_027 && b == 605_825, format!("fconn {a}, fconv {b}"))
}

fn criterion_2() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let skel = Skeleton::default_14();
    let opts = RecoveryOptions::default();
    let align = AlignOptions { allow_reflection: true, allow_scale: false };
    let (mut ok, mut slowest) = (0usize, Duration::ZERO);
    let mut errs = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let pts = random_points(&mut rng, 14);
        let gt = Pose3D::new(pts.clone())?;
        let t = Instant::now();
        let rec = recover_pose(&build_edm(&pts, Units::Dimensionless)?, &skel, &opts)?;
        slowest = slowest.max(t.elapsed());
        let e = procrustes_align(&rec.pose, &gt, align)?.mean_residual();
        if e < 1e-6 * gt.diameter() {
            ok += 1;
        }
        errs.push(e);
    }
    let med = median(&mut errs);
    verdict(
        ok >= 995 && med < 1e-9 && slowest < Duration::from_secs(1),
        format!("{ok}/1000 within 1e-6 of diameter, median error {med:.3e}, slowest case {slowest:.2?}"),
    )
}

fn criterion_3() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let skel = Skeleton::default_14();
    let mut worst_eq2 = 0.0f64;
    for _ in 0..100 {
        let pts = random_points(&mut rng, 14);
        let rec = recover_pose(&build_edm(&pts, Units::Dimensionless)?, &skel, &RecoveryOptions::default())?;
        worst_eq2 = worst_eq2.max(rec.eq2_objective);
    }
    let opts = RecoveryOptions { keep_history: true, ..Default::default() };
    let (mut monotone, mut steps) = (0usize, 0usize);
    for _ in 0..100 {
        let pts = random_points(&mut rng, 14);
        let clean = build_edm(&pts, Units::Dimensionless)?;
        let mut v = clean.values().to_vec();
        for m in 0..14 {
            for k in m + 1..14 {
                let noisy = (v[m * 14 + k] * (1.0 + 0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))).abs();
                v[m * 14 + k] = noisy;
                v[k * 14 + m] = noisy;
            }
        }
        let rec = recover_pose(&DistanceMatrix::from_row_major(14, v, Units::Dimensionless)?, &skel, &opts)?;
        steps += rec.surrogate_history.len().saturating_sub(1);
        if rec.surrogate_history.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    verdict(
        worst_eq2 <= 1e-8 && monotone == 100,
        format!("max objective on exact inputs {worst_eq2:.3e}; {monotone}/100 noisy runs nonincreasing over {steps} accepted steps"),
    )
}

fn criterion_4() -> Result<Verdict> {
    let opts = GradCheckOptions::default();
    let mut lines = Vec::new();
    let (mut worst, mut skipped, mut unresolved) = (0.0f64, 0usize, 0usize);
    let mut record = |label: String, r: &KindResult| {
        worst = worst.max(r.max_rel_error);
        skipped += r.skipped;
        unresolved += r.unresolved;
        lines.push(format!("{label} {:.1e} ({})", r.max_rel_error, r.checked));
    };
    for (kind, r) in &layer_suite(&opts)?.kinds {
        record(kind.clone(), r);
    }
    for cfg in [ModelConfig::fconn(), ModelConfig::fconv()] {
        for (kind, r) in &gradient_check(cfg, &opts)?.kinds {
            record(format!("{}/{kind}", cfg.arch), r);
        }
    }
    verdict(
        worst < 1e-5,
        format!(
            "max relative error {worst:.2e}; {}; {skipped} coordinates skipped at kinks, \
             {unresolved} with both gradients below difference resolution",
            lines.join(", ")
        ),
    )
}

fn criterion_5() -> Result<Verdict> {
    let cfg = ModelConfig::fconv();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut forwards, mut worst_asym, mut min_entry) = (0usize, 0.0f64, f64::INFINITY);
    for draw in 0..100u64 {
        let mut params = init_params::<f32>(&cfg, 1000 + draw);
        for e in &mut params.entries {
            let name = e.name.clone();
            for v in e.tensor.data_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                if name.ends_with(".bias") || name.ends_with(".beta") || name.ends_with(".running_mean") {
                    *v = (0.5 * z) as f32;
                } else if name.ends_with(".gamma") {
                    *v = (1.0 + 0.5 * z) as f32;
                } else if name.ends_with(".running_var") {
                    *v = (0.5 + z.abs()) as f32;
                }
            }
        }
        let model = Model::from_params(cfg, params)?;
        let inputs: Vec<DistanceMatrix> = (0..100)
            .map(|_| {
                let pts: Vec<[f64; 2]> = (0..14).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
                build_edm(&pts, Units::Dimensionless)
            })
            .collect::<Result<_>>()?;
        let x: Tensor<f32> = model.batch_input(&inputs.iter().collect::<Vec<_>>())?;
        let mode = if draw % 2 == 0 { Mode::Infer } else { Mode::Train };
        let y = model.forward(&x, mode, &mut rng)?.output;
        for item in y.data().chunks(196) {
            let scale = item.iter().fold(0.0f32, |m, v| m.max(v.abs())) as f64;
            for m in 0..14 {
                for k in 0..14 {
                    let d = (item[m * 14 + k] - item[k * 14 + m]).abs() as f64;
                    worst_asym = worst_asym.max(d / scale.max(f64::MIN_POSITIVE));
                }
            }
            min_entry = min_entry.min(item.iter().fold(f32::INFINITY, |a, &v| a.min(v)) as f64);
            forwards += 1;
        }
    }
    verdict(
        worst_asym <= f32::EPSILON as f64 && min_entry >= 0.0,
        format!("{forwards} forwards, max relative asymmetry {worst_asym:.1e}, min entry {min_entry:.3e}"),
    )
}

struct Trained {
    records: Vec<DatasetRecord>,
    fconn: Checkpoint,
}

fn criterion_6() -> Result<(Verdict, Trained)> {
    let records = dataset(5000, 500, 6)?;
    let train_set = training_samples(select_split(&records, Some(Split::Train)))?;
    let clean = ProtocolSpec::clean();

    let t = Instant::now();
    let fconn = train(ModelConfig::fconn(), &TrainConfig::new(500, 200, 61), &train_set)?.checkpoint;
    let fconn_time = t.elapsed();
    let a = evaluate(&fconn, &records, &clean)?;
    let baseline = a.baseline_mpjpe.expect("training split present");
    let ratio = a.mpjpe / baseline;
    let mut detail = format!(
        "fconn {:.1} mm vs mean-pose {baseline:.1} mm (ratio {ratio:.3}, needs <= 0.5) in {fconn_time:.0?}",
        a.mpjpe
    );

    let t = Instant::now();
    train(ModelConfig::fconv(), &TrainConfig::new(1, 200, 62), &train_set)?;
    let epoch = t.elapsed();
    let projected = fconn_time + epoch * 1500;
    let mut pass = ratio <= 0.5;
    if projected <= TIME_BUDGET || env_flag("EDM_POSE_FULL_ACCEPTANCE") {
        let t = Instant::now();
        let fconv = train(ModelConfig::fconv(), &TrainConfig::new(1500, 200, 62), &train_set)?.checkpoint;
        let total = fconn_time + t.elapsed();
        let b = evaluate(&fconv, &records, &clean)?;
        pass &= b.mpjpe <= 1.1 * a.mpjpe && total < TIME_BUDGET;
        detail += &format!("; fconv {:.1} mm (needs <= {:.1}); total {total:.0?}", b.mpjpe, 1.1 * a.mpjpe);
    } else {
        pass = false;
        detail += &format!(
            "; fconv epoch takes {epoch:.1?}, so 1500 epochs project to {:.1} h against a 0.5 h budget (not trained; set EDM_POSE_FULL_ACCEPTANCE=1)",
            projected.as_secs_f64() / 3600.0
        );
    }
    Ok((verdict(pass, detail)?, Trained { records, fconn }))
}

fn criterion_7(t: &Trained) -> Result<Verdict> {
    let mut curve = Vec::new();
    for sigma in [0.0, 5.0, 10.0, 15.0, 20.0] {
        curve.push(evaluate(&t.fconn, &t.records, &ProtocolSpec::noise(sigma, 7))?.mpjpe);
    }
    let monotone = curve.windows(2).all(|w| w[1] >= w[0]);
    let shown: Vec<String> = curve.iter().map(|m| format!("{m:.1}")).collect();
    verdict(monotone, format!("MPJPE at sigma 0/5/10/15/20 px: {} mm", shown.join(" / ")))
}

/// Training settings shared by both networks. The default rate and dropout
/// drive the convolutional network's output into the dead region of its final
/// ReLU within two epochs, so both networks train without dropout at 1e-4.
const OCC_TRAIN: usize = 1000;
const OCC_EPOCHS: usize = 20;
const OCC_BATCH: usize = 16;
const OCC_LR: f64 = 1e-4;

fn criterion_8() -> Result<Verdict> {
    let records = dataset(OCC_TRAIN, 500, 8)?;
    let train_set = training_samples(select_split(&records, Some(Split::Train)))?;
    let mut tcfg = TrainConfig::new(OCC_EPOCHS, OCC_BATCH, 81);
    tcfg.occlusion_augment = true;
    tcfg.lr_initial = OCC_LR;
    tcfg.lr_reduced = OCC_LR / 10.0;
    let kinds = [MaskKind::Random2, MaskKind::RightArm, MaskKind::LeftArm, MaskKind::RightLeg, MaskKind::LeftLeg];
    let mut pass = true;
    let mut occluded_mean = Vec::new();
    let mut parts = Vec::new();
    let mut baseline = f64::NAN;
    for cfg in [ModelConfig::fconn(), ModelConfig::fconv()] {
        let ckpt = train(cfg.with_dropout(0.0), &tcfg, &train_set)?.checkpoint;
        let mut occ = Vec::new();
        for kind in kinds {
            let r = evaluate(&ckpt, &records, &ProtocolSpec::occlusion(kind, 8))?;
            let (o, v) = (r.occluded_mpjpe.unwrap_or(f64::NAN), r.visible_mpjpe.unwrap_or(f64::NAN));
            pass &= o.is_finite() && o <= 3.0 * v;
            baseline = r.baseline_mpjpe.unwrap_or(f64::NAN);
            parts.push(format!("{}/{} occluded {o:.1} visible {v:.1}", cfg.arch, kind.as_str()));
            occ.push(o);
        }
        occluded_mean.push(occ.iter().sum::<f64>() / occ.len() as f64);
    }
    pass &= occluded_mean[1] <= occluded_mean[0];
    verdict(
        pass,
        format!(
            "mean occluded-joint error fconn {:.1} mm, fconv {:.1} mm, mean-pose {baseline:.1} mm \
             ({OCC_TRAIN} poses, {OCC_EPOCHS} epochs, batch {OCC_BATCH}, lr {OCC_LR:e}, no dropout); {}",
            occluded_mean[0],
            occluded_mean[1],
            parts.join("; ")
        ),
    )
}

fn criterion_9() -> Result<Verdict> {
    let recs = synth_dataset(&SynthConfig::new(2000, 9))?;
    let poses = recs
        .iter()
        .map(|r| Ok((normalize_2d(&Pose2D::raw(r.joints2d.clone())?)?, r.pose3d())))
        .collect::<Result<Vec<_>>>()?;
    let rep = ambiguity_correlation(&poses, 10_000, &mut ChaCha8Rng::seed_from_u64(9))?;
    verdict(
        rep.pearson_edm > rep.pearson_cartesian,
        format!("pearson EDM {:.3}, cartesian {:.3}", rep.pearson_edm, rep.pearson_cartesian),
    )
}

fn criterion_10() -> Result<Verdict> {
    let mut cfg = SynthConfig::new(500, 10);
    cfg.angles.elbow_flexion = [0.5, 2.2];
    cfg.angles.knee_flexion = [0.5, 2.0];
    let skel = Skeleton::default_14();
    let rigid = AlignOptions { allow_reflection: false, allow_scale: false };
    let (mut right, mut reflected) = (0usize, 0usize);
    for i in 0..500 {
        let s = sample_pose(&cfg, &skel, &mut sample_rng(cfg.seed, i))?;
        let rec = recover_pose(&build_edm(&s.pose.joints, Units::Millimeters)?, &skel, &RecoveryOptions::default())?;
        if rec.chirality == Chirality::Reflected {
            reflected += 1;
        }
        if procrustes_align(&rec.pose, &s.pose, rigid)?.mean_residual() < 1e-6 * s.pose.diameter() {
            right += 1;
        }
    }
    verdict(
        right >= 475,
        format!("{right}/500 recovered with the generating chirality ({reflected} needed the mirror candidate)"),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u32, Verdict)> = Vec::new();
    let mut report = |id: u32, r: Result<Verdict>| {
        let v = r.unwrap_or_else(|e| Verdict { pass: false, detail: format!("error: {e}") });
        println!("[criterion {id}] {} {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, v));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    match criterion_6() {
        Ok((v, trained)) => {
            report(6, Ok(v));
            report(7, criterion_7(&trained));
        }
        Err(e) => {
            report(6, Err(e));
            report(7, Err(Error::InvalidInput("needs the network trained for criterion 6".into())));
        }
    }
    report(8, criterion_8());
    report(9, criterion_9());
    report(10, criterion_10());
    let failed: Vec<u32> = results.iter().filter(|(_, v)| !v.pass).map(|(id, _)| *id).collect();
    println!(
        "acceptance: {}/{} passed in {:.0?}{}",
        results.len() - failed.len(),
        results.len(),
        start.elapsed(),
        if failed.is_empty() { String::new() } else { format!("; failed: {failed:?}") }
    );
    if !failed.is_empty() && env_flag("EDM_POSE_STRICT_ACCEPTANCE") {
        std::process::exit(1);
    }
}
