//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the test harness so the report is always printed. Failing
//! criteria are reported, not asserted, and the process exits 0.

mod common;

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use e2bki::belief::{combine, BeliefMass, ClassProbability};
use e2bki::cli::bench_best;
use e2bki::ellipsoid::{chi2_quantile, Ellipsoid};
use e2bki::eval::{
    generate_scene, rows_to_csv, run_experiment, ExperimentRow, ExperimentSpec, SceneSpec,
};
use e2bki::gaussian::{build_primitive, EvidentialPoint, GaussianPrimitive};
use e2bki::kernel::sparse_kernel;
use e2bki::map::{Map, MapConfig, Mode};
use e2bki::refine::{prune_flags, RefineParams};
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let l = 0.7;
    let k = |d: f64| sparse_kernel(d, l).unwrap();
    let mut worst = 0.0f64;
    for (d, want) in [(0.0, 1.0), (l, 0.0), (l / 2.0, 1.0 / 6.0)] {
        worst = worst.max((k(d) - want).abs());
    }
    let n = 10_000;
    let grid: Vec<f64> = (0..=n).map(|i| k(l * i as f64 / n as f64)).collect();
    let monotone = grid.windows(2).all(|w| w[1] < w[0]);
    let t = secs(start.elapsed());
    outcome(
        worst <= 1e-12 && monotone && t < 1.0,
        format!("max point error {worst:.1e}, strictly decreasing {monotone}, {t:.3}s"),
    )
}

fn random_mass(rng: &mut ChaCha8Rng, classes: usize) -> BeliefMass {
    let raw: Vec<f64> = (0..=classes).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    BeliefMass::new(raw[..classes].iter().map(|b| b / s).collect(), raw[classes] / s).unwrap()
}

fn mass_gap(a: &BeliefMass, b: &BeliefMass) -> f64 {
    a.beliefs()
        .iter()
        .zip(b.beliefs())
        .map(|(x, y)| (x - y).abs())
        .fold((a.uncertainty() - b.uncertainty()).abs(), f64::max)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let classes = rng.random_range(2..7);
        let a = random_mass(&mut rng, classes);
        let b = random_mass(&mut rng, classes);
        let ab = combine(&a, &b).unwrap();
        let ba = combine(&b, &a).unwrap();
        let total: f64 = ab.beliefs().iter().sum::<f64>() + ab.uncertainty();
        let negative = ab.beliefs().iter().chain([&ab.uncertainty()]).any(|v| *v < 0.0);
        worst = worst.max((total - 1.0).abs()).max(mass_gap(&ab, &ba));
        if negative {
            worst = f64::INFINITY;
        }
        let id = combine(&a, &BeliefMass::vacuous(classes)).unwrap();
        worst = worst.max(mass_gap(&id, &a));
    }
    let m = BeliefMass::new(vec![0.6, 0.2], 0.2).unwrap();
    let mm = combine(&m, &m).unwrap();
    let want = BeliefMass::new(vec![0.7895, 0.1579], 0.0526).unwrap();
    let hand = mass_gap(&mm, &want);
    let t = secs(start.elapsed());
    outcome(
        worst <= 1e-12 && hand <= 1e-4 && t < 1.0,
        format!("max algebra error {worst:.1e}, hand example error {hand:.1e}, {t:.3}s"),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples = 100_000;
    let golden = PI * (3.0 - 5f64.sqrt());
    let sphere: Vec<Vector3<f64>> = (0..samples)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / samples as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect();
    let (mut angle, mut residual, mut sampling_ok) = (0.0f64, 0.0f64, true);
    for _ in 0..1000 {
        let rot = Rotation3::from_euler_angles(
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
        )
        .into_inner();
        let var = Vector3::from_fn(|_, _| rng.random_range(0.01..4.0));
        let cov = rot * Matrix3::from_diagonal(&var) * rot.transpose();
        let mu = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let tau = rng.random_range(0.05..3.0);
        let x = mu + Vector3::from_fn(|_, _| rng.random_range(-6.0..6.0));
        let e = Ellipsoid::from_gaussian(mu, &cov, tau).unwrap();
        let inv = cov.try_inverse().unwrap();
        if (x - mu).dot(&(inv * (x - mu))) <= tau {
            continue;
        }
        let p = e.project(&x);
        let v = p.point;
        residual = residual.max(((v - mu).dot(&(inv * (v - mu))) - tau).abs());
        let g = inv * (v - mu);
        let dx = x - v;
        angle = angle.max((dx.dot(&g) / (dx.norm() * g.norm())).clamp(-1.0, 1.0).acos());
        let semi = var.map(|l| (tau * l).sqrt());
        let local = rot.transpose() * (x - mu);
        let sampled = sphere
            .iter()
            .map(|s| (local - s.component_mul(&semi)).norm_squared())
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        let h = semi.max() * (4.0 * PI / samples as f64).sqrt();
        sampling_ok &= p.distance <= sampled + 1e-9 && sampled - p.distance <= 2.0 * h;
    }
    let q2 = (chi2_quantile(2, 0.10).unwrap() - 0.210721).abs();
    let q3 = (chi2_quantile(3, 0.10).unwrap() - ChiSquared::new(3.0).unwrap().inverse_cdf(0.10)).abs();
    let t = secs(start.elapsed());
    outcome(
        angle < 1e-6 && residual < 1e-8 && sampling_ok && q2 <= 1e-6 && q3 <= 1e-6 && t < 10.0,
        format!(
            "max angle {angle:.1e} rad, max residual {residual:.1e}, sampling oracle {sampling_ok}, \
             chi2 dof2 err {q2:.1e}, dof3 err {q3:.1e}, {t:.2}s"
        ),
    )
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<EvidentialPoint> {
    (0..n)
        .map(|_| {
            let label = rng.random_range(0..3);
            let mut probs = vec![0.1; 3];
            probs[label] = 0.8;
            EvidentialPoint::new(
                Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0)),
                ClassProbability::new(probs).unwrap(),
                rng.random_range(0.0..0.5),
                rng.random_range(1.0..20.0),
            )
            .unwrap()
        })
        .collect()
}

fn primitive(points: &[EvidentialPoint]) -> GaussianPrimitive {
    build_primitive(&points.iter().collect::<Vec<_>>()).unwrap()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut merge_err, mut motion_err) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (na, nb) = (rng.random_range(1..30), rng.random_range(1..30));
        let a = random_points(&mut rng, na);
        let b = random_points(&mut rng, nb);
        let mut merged = primitive(&a);
        merged.absorb(&primitive(&b));
        let batch = primitive(&[a.clone(), b].concat());
        merge_err = merge_err
            .max((merged.mean() - batch.mean()).abs().max())
            .max((merged.covariance() - batch.covariance()).abs().max());

        let rot = Rotation3::from_euler_angles(
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
        );
        let shift = Vector3::from_fn(|_, _| rng.random_range(-20.0..20.0));
        let moved: Vec<EvidentialPoint> = a
            .iter()
            .map(|p| EvidentialPoint {
                position: rot * p.position + shift,
                ..p.clone()
            })
            .collect();
        let g = primitive(&a);
        let h = primitive(&moved);
        let r = rot.matrix();
        motion_err = motion_err
            .max((h.mean() - (rot * g.mean() + shift)).abs().max())
            .max((h.covariance() - r * g.covariance() * r.transpose()).abs().max());
    }
    outcome(
        merge_err <= 1e-9 && motion_err <= 1e-7,
        format!("merge vs batch {merge_err:.1e}, rigid motion {motion_err:.1e}"),
    )
}

fn criterion_5() -> Outcome {
    use common::*;
    let sbki_frames = frames(51, true);
    let sbki_expected = oracle(&sbki_frames, true, |_, _| Some(ELL));
    let mut sbki_config = degenerate(base_config(Mode::E2bki));
    sbki_config.kernel.adaptive_scale = false;
    sbki_config.kernel.u_percentile = 0.0;
    let sbki = max_alpha_error(&build(sbki_config, &sbki_frames), &sbki_expected);

    let ebs_frames = frames(52, false);
    let ebs_expected = oracle(&ebs_frames, false, ebs_support);
    let ebs = max_alpha_error(&build(degenerate(base_config(Mode::E2bki)), &ebs_frames), &ebs_expected);
    outcome(
        sbki <= 1e-9 && ebs <= 1e-9,
        format!("{FRAMES} frames, max |Δα| vs S-BKI {sbki:.1e}, vs EBS {ebs:.1e}"),
    )
}

fn single_point(x: f64, label: usize, range: f64) -> GaussianPrimitive {
    let mut probs = vec![0.1; 3];
    probs[label] = 0.8;
    let p = EvidentialPoint::new(
        Vector3::new(x, 0.0, 0.0),
        ClassProbability::new(probs).unwrap(),
        0.2,
        range,
    )
    .unwrap();
    primitive(&[p])
}

fn criterion_6() -> Outcome {
    let d_l = 1.0;
    let (mut cases, mut mismatches, mut boundary) = (0, 0, 0);
    for &delta_i in &[1.0, 2.0, 4.0] {
        for &delta_j in &[1.0, 2.0, 4.9, 5.0, 5.1, 6.0, 10.0, 12.0] {
            for &epsilon in &[1.0, 2.5, 3.0] {
                for &(ci, cj) in &[(0, 0), (0, 1), (2, 1)] {
                    for &sep in &[0.25, 0.999, 1.001, 2.0] {
                        let params = RefineParams {
                            d_l,
                            d_s: 0.2,
                            epsilon,
                        };
                        let set = vec![single_point(0.0, ci, delta_i), single_point(sep, cj, delta_j)];
                        let flags = prune_flags(&set, &params);
                        let near = sep <= d_l;
                        let differ = ci != cj;
                        let want = [
                            near && differ && delta_i > epsilon * delta_j,
                            near && differ && delta_j > epsilon * delta_i,
                        ];
                        if delta_j == 6.0 && delta_i == 2.0 && epsilon == 2.5 {
                            boundary += 1;
                        }
                        cases += 1;
                        mismatches += (flags != want) as usize;
                    }
                }
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("{cases} grid cases ({boundary} with 6 > 2.5·2), {mismatches} mismatches"),
    )
}

fn acc(rows: &[ExperimentRow], mode: Mode, seed: u64, fraction: f64) -> f64 {
    rows.iter()
        .find(|r| r.mode == mode && r.seed == seed && r.frame_fraction == fraction)
        .and_then(ExperimentRow::acc)
        .unwrap_or(f64::NAN)
}

fn criteria_7_8() -> (Outcome, Outcome) {
    let seeds: Vec<u64> = (0..5).collect();
    let mut spec = ExperimentSpec::standard(seeds.clone());
    spec.modes = vec![Mode::Scsm, Mode::Sbki, Mode::E2bki];
    let start = Instant::now();
    let rows = run_experiment(&spec);
    let t = secs(start.elapsed());

    let (mut vs_sbki, mut vs_scsm, mut degrade, mut all) = (0, 0, 0, 0);
    let mut detail = Vec::new();
    for &s in &seeds {
        let e = acc(&rows, Mode::E2bki, s, 1.0);
        let b = acc(&rows, Mode::Sbki, s, 1.0);
        let c = acc(&rows, Mode::Scsm, s, 1.0);
        let drops = |m: Mode, f: f64| 100.0 * (acc(&rows, m, s, 1.0) - acc(&rows, m, s, f));
        let graceful = [0.2, 0.04]
            .iter()
            .all(|&f| drops(Mode::E2bki, f) <= drops(Mode::Sbki, f));
        vs_sbki += (e >= b) as usize;
        vs_scsm += (e >= c) as usize;
        degrade += graceful as usize;
        all += (e >= b && e >= c && graceful) as usize;
        detail.push(format!(
            "seed {s}: e2bki {e:.4} sbki {b:.4} scsm {c:.4}, drop20 {:.1}/{:.1}pp drop4 {:.1}/{:.1}pp",
            drops(Mode::E2bki, 0.2),
            drops(Mode::Sbki, 0.2),
            drops(Mode::E2bki, 0.04),
            drops(Mode::Sbki, 0.04),
        ));
    }
    for d in &detail {
        println!("    {d}");
    }
    let seven = outcome(
        all >= 4 && t < 300.0,
        format!(
            "seeds holding: all orderings {all}/5 (≥sbki {vs_sbki}/5, ≥scsm {vs_scsm}/5, \
             degradation {degrade}/5), {t:.1}s"
        ),
    );

    let mut calibrated = 0;
    let mut pairs = Vec::new();
    for &s in &seeds {
        let row = rows
            .iter()
            .find(|r| r.mode == Mode::E2bki && r.seed == s && r.frame_fraction == 1.0)
            .unwrap();
        let scores = row.result.as_ref().unwrap();
        let (u, v) = (scores.brier_utotal.unwrap(), scores.brier_var.unwrap());
        calibrated += (u <= v) as usize;
        pairs.push(format!("{u:.4}/{v:.4}"));
    }
    let eight = outcome(
        calibrated >= 4,
        format!("u_total ≤ variance on {calibrated}/5 seeds (brier {})", pairs.join(", ")),
    );
    (seven, eight)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_9() -> Outcome {
    let scene_spec = SceneSpec {
        points_per_frame: 2000,
        ..SceneSpec::standard(9)
    };
    let scene = generate_scene(&scene_spec, 10);
    let mut config = MapConfig {
        num_classes: scene_spec.classes(),
        ..MapConfig::default()
    };
    config.cluster.total_clusters = 256;
    config.cluster.seed = 9;
    let tmp = tempfile::tempdir().unwrap();
    let mut exports = Vec::new();
    for run in 0..2 {
        let mut map = Map::new(config.clone()).unwrap();
        for f in &scene {
            map.ingest_frame(&f.frame.points, f.frame.origin).unwrap();
        }
        let dir = tmp.path().join(format!("run{run}"));
        map.export(&dir).unwrap();
        exports.push(dir_bytes(&dir));
    }
    let mut spec = ExperimentSpec::standard(vec![9]);
    spec.modes = vec![Mode::Sbki, Mode::E2bki];
    spec.frames = 10;
    spec.scene.points_per_frame = 2000;
    spec.config.cluster.total_clusters = 256;
    let csv_a = rows_to_csv(&run_experiment(&spec), false);
    let csv_b = rows_to_csv(&run_experiment(&spec), false);
    let files = exports[0].len();
    let bytes: usize = exports[0].iter().map(|(_, b)| b.len()).sum();
    outcome(
        exports[0] == exports[1] && csv_a == csv_b,
        format!(
            "exports identical {} ({files} files, {bytes} bytes), csv identical {} ({} bytes)",
            exports[0] == exports[1],
            csv_a == csv_b,
            csv_a.len()
        ),
    )
}

fn criterion_10() -> Outcome {
    let spec = SceneSpec::standard(0);
    let frames: Vec<_> = generate_scene(&spec, 50).into_iter().map(|f| f.frame).collect();
    let on = MapConfig {
        num_classes: spec.classes(),
        mode: Mode::E2bki,
        ..MapConfig::default()
    };
    let off = MapConfig {
        enable_merge: false,
        ..on.clone()
    };
    let a = bench_best(&on, &frames, 3).unwrap();
    let b = bench_best(&off, &frames, 3).unwrap();
    let counts = a
        .primitives_per_frame
        .iter()
        .zip(&b.primitives_per_frame)
        .all(|(x, y)| x <= y);
    let (ta, tb) = (secs(a.timings.bki) * 1e3, secs(b.timings.bki) * 1e3);
    outcome(
        counts && ta <= tb,
        format!(
            "per-frame count on ≤ off {counts} (final {} vs {}), bki {ta:.0}ms vs {tb:.0}ms (best of 3)",
            a.primitives_per_frame.last().unwrap(),
            b.primitives_per_frame.last().unwrap(),
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
    ];
    let (seven, eight) = criteria_7_8();
    results.push((7, seven));
    results.push((8, eight));
    results.push((9, criterion_9()));
    results.push((10, criterion_10()));
    results.sort_by_key(|(n, _)| *n);
    for (n, o) in &results {
        println!("criterion {n:2}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let passed = results.iter().filter(|(_, o)| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
}
