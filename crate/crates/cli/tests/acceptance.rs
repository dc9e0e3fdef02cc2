//! End-to-end acceptance checks. Each test prints one `acceptance <name>: PASS|FAIL` line.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{Vector2, Vector3};
use posedistrib_cli::{bundle, load, run, sweep, Loaded, Overrides, SweepAxis, SweepRow};
use posedistrib_core::estimator::{
    consistency_fraction, estimate_with_stages, group_by_bin, p3p::p3p_solve, pnp_ransac, EstimatorParams,
};
use posedistrib_core::matcher::Correspondence;
use posedistrib_core::metrics::{cluster_modes, gt_pose_set};
use posedistrib_core::obsgen::{render, visible_points, Observation};
use posedistrib_core::rotkit::{d_ang, CameraIntrinsics, Pose, Rotation};
use posedistrib_core::scenarios::{noiseless, random_views, scenario, BundledObject, DEFAULT_MODEL_POINTS};
use posedistrib_core::so3grid::{build_grid, density, DensityHistogram};
use posedistrib_core::symmodel::{eval_losses, SymModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Written past the test harness's output capture so every verdict shows up in a plain `cargo test`.
fn report(name: &str, pass: bool, detail: impl AsRef<str>) {
    let line = format!("\nacceptance {name}: {} ({})\n", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn bundled(dir: &Path, object: BundledObject, occluded: bool) -> PathBuf {
    bundle(object, occluded, dir, DEFAULT_MODEL_POINTS, 7).unwrap()
}

/// Distinct poses of a run, linked at 5 degrees and 10% of the diameter.
fn modes(poses: &[Pose<f64>], diameter: f64) -> Vec<Vec<usize>> {
    cluster_modes(poses, 5f64.to_radians(), 0.1 * diameter)
}

struct Outcome {
    loaded: Loaded,
    recall_msd: f64,
    poses: Vec<Pose<f64>>,
    gammas: Vec<f64>,
    precision: f64,
    recall: f64,
    elapsed: Duration,
}

fn estimate(manifest: &Path) -> Outcome {
    let t = Instant::now();
    let loaded = load(manifest, &Overrides::default()).unwrap();
    let out = run(&loaded, false).unwrap();
    let elapsed = t.elapsed();
    let obs = loaded.render().unwrap();
    let est = estimate_with_stages(&obs, &loaded.model, &loaded.manifest.estimator).unwrap();
    let poses = est.distribution.pose_list();
    let gammas = est.distribution.poses.iter().map(|p| p.score.gamma).collect();
    let (precision, recall) = (
        out.report.precision_mpd.min(out.report.precision_msd),
        out.report.recall_mpd.min(out.report.recall_msd),
    );
    Outcome { loaded, recall_msd: out.report.recall_msd, poses, gammas, precision, recall, elapsed }
}

/// Best-scoring pose of each mode.
fn mode_heads(o: &Outcome) -> Vec<Pose<f64>> {
    modes(&o.poses, o.loaded.model.diameter())
        .iter()
        .map(|m| {
            let best = m.iter().copied().max_by(|&a, &b| o.gammas[a].total_cmp(&o.gammas[b])).unwrap();
            o.poses[best]
        })
        .collect()
}

#[test]
fn symmetry_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let limit = Duration::from_secs(60);

    let cube = estimate(&bundled(&tmp.path().join("cube"), BundledObject::MarkedCube, false));
    let gt = cube.loaded.scenario.gt_pose.pose();
    let d = cube.loaded.model.diameter();
    let heads = mode_heads(&cube);
    let cube_ok = heads.len() == 1
        && d_ang(&heads[0].rotation, &gt.rotation).to_degrees() <= 2.0
        && (heads[0].translation - gt.translation).norm() <= 0.01 * d
        && cube.elapsed < limit;
    report("symmetry_modes/asymmetric", cube_ok, format!("{} modes, {:.1?}", heads.len(), cube.elapsed));

    let hex = estimate(&bundled(&tmp.path().join("hex"), BundledObject::HexPrism, false));
    let gt = hex.loaded.scenario.gt_pose.pose();
    let images: Vec<Rotation<f64>> =
        hex.loaded.model.symmetry().elements(1f64.to_radians(), 360).iter().map(|s| gt.rotation * *s).collect();
    let heads = mode_heads(&hex);
    let mut claimed = vec![false; images.len()];
    let matched = heads.iter().all(|h| {
        let hit = images
            .iter()
            .enumerate()
            .find(|(i, s)| !claimed[*i] && d_ang(&h.rotation, s).to_degrees() <= 3.0)
            .map(|(i, _)| i);
        hit.map(|i| claimed[i] = true).is_some()
    });
    let hex_ok = images.len() == 6 && heads.len() == 6 && matched && hex.elapsed < limit;
    report("symmetry_modes/sixfold", hex_ok, format!("{} modes, one per image: {matched}, {:.1?}", heads.len(), hex.elapsed));

    let cyl = estimate(&bundled(&tmp.path().join("cyl"), BundledObject::Cylinder, false));
    let cyl_recall = cyl.recall_msd;
    let cyl_ok = cyl_recall >= 0.90 && cyl.elapsed < limit;
    report("symmetry_modes/continuous", cyl_ok, format!("recall_msd {cyl_recall:.3}, {:.1?}", cyl.elapsed));

    assert!(cube_ok && hex_ok && cyl_ok);
}

#[test]
fn occlusion_ambiguity() {
    let tmp = tempfile::tempdir().unwrap();
    let mut ok = true;
    for (occluded, want) in [(false, 1usize), (true, 6)] {
        let o = estimate(&bundled(&tmp.path().join(format!("mp{occluded}")), BundledObject::MarkedPrism, occluded));
        let clean = render(&o.loaded.model, &noiseless(&o.loaded.scenario)).unwrap();
        let gt = gt_pose_set(&o.loaded.model, &o.loaded.scenario.gt_pose.pose(), o.loaded.model.symmetry(), Some(&clean), 1.0)
            .unwrap();
        let n_modes = mode_heads(&o).len();
        let pass = n_modes == want && gt.len() == want && o.recall >= 0.9 && o.precision >= 0.8;
        let name = if occluded { "occlusion_ambiguity/occluded" } else { "occlusion_ambiguity/visible" };
        report(
            name,
            pass,
            format!("{n_modes} modes, gt set {}, precision {:.3}, recall {:.3}", gt.len(), o.precision, o.recall),
        );
        ok &= pass;
    }
    assert!(ok);
}

/// `-(d·d - log Σ_Y exp(d·d_Y))` for every model point, descriptors recomputed from the field.
fn floor_terms(model: &SymModel) -> Vec<f64> {
    let field = model.field();
    let desc: Vec<Vec<f64>> = model.points().iter().map(|p| field.descriptor(p)).collect();
    desc.iter()
        .map(|q| {
            let dots: Vec<f64> = desc.iter().map(|d| q.iter().zip(d).map(|(a, b)| a * b).sum()).collect();
            let m = dots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + dots.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            let own: f64 = q.iter().map(|a| a * a).sum();
            lse - own
        })
        .collect()
}

#[test]
fn loss_floor() {
    let mut ok = true;
    for object in BundledObject::ALL {
        let model = object.build_model(1000, 7).unwrap();
        let views = random_views(&scenario(object, 7), 20, 11);
        let obs: Vec<Observation> = views.iter().map(|v| render(&model, v).unwrap()).collect();
        let l = eval_losses(&model, &obs).unwrap();
        let terms = floor_terms(&model);
        let (sum, n) = obs
            .iter()
            .flat_map(|o| o.ground_truth().points.iter().flatten())
            .fold((0.0, 0usize), |(s, n), &h| (s + terms[h], n + 1));
        let floor = sum / n as f64;
        let pass = l.l_lf_rad < 1e-6 && (l.l_desc - floor).abs() <= 1e-3 && n == l.pixels;
        report(
            &format!("loss_floor/{}", object.name()),
            pass,
            format!("L_LF {:.2e} rad, L_desc {:.6}, floor {:.6}, {} pixels", l.l_lf_rad, l.l_desc, floor, l.pixels),
        );
        ok &= pass;
    }
    assert!(ok);
}

fn reprojection(k: &CameraIntrinsics<f64>, pose: &Pose<f64>, pts: &[Vector3<f64>], px: &[Vector2<f64>]) -> f64 {
    pts.iter()
        .zip(px)
        .map(|(x, p)| k.project_camera_point(&pose.transform(x)).map_or(f64::INFINITY, |q| (q - p).norm()))
        .fold(0.0, f64::max)
}

#[test]
fn p3p_pnp() {
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut found = 0;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let gt = Pose::new(
            Rotation::random(&mut rng),
            Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(0.4..1.2)),
        );
        let pts: [Vector3<f64>; 3] = std::array::from_fn(|_| {
            Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05))
        });
        let px: [Vector2<f64>; 3] = std::array::from_fn(|i| k.project_camera_point(&gt.transform(&pts[i])).unwrap());
        let sols = p3p_solve(&k, &pts, &px).unwrap_or_default();
        let hit = sols.iter().find(|s| d_ang(&s.rotation, &gt.rotation) < 1e-6 && (s.translation - gt.translation).norm() < 1e-6);
        if let Some(s) = hit {
            let r = reprojection(&k, s, &pts, &px);
            worst = worst.max(r);
            if r < 1e-6 {
                found += 1;
            }
        }
    }
    let p3p_ok = found == 1000;
    report("p3p_pnp/p3p", p3p_ok, format!("{found}/1000 recovered, worst residual {worst:.2e} px"));

    let model = BundledObject::MarkedCube.build_model(800, 1).unwrap();
    let cfg = scenario(BundledObject::MarkedCube, 1);
    let gt = cfg.gt_pose.pose();
    let kc = render(&model, &cfg).unwrap().camera().clone();
    let vis = visible_points(&model, &kc, &gt).unwrap();
    let params = EstimatorParams::default();
    let mut ok = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut group: Vec<Correspondence> = vis
            .iter()
            .step_by((vis.len() / 120).max(1))
            .take(120)
            .map(|&i| {
                let q = kc.project_camera_point(&gt.transform(model.point(i))).unwrap();
                Correspondence { pixel: [q.x.floor() as u32, q.y.floor() as u32], point: i, similarity: 1.0 }
            })
            .collect();
        let n_out = group.len() * 2 / 3;
        for _ in 0..n_out {
            group.push(Correspondence {
                pixel: [rng.random_range(0..kc.width), rng.random_range(0..kc.height)],
                point: rng.random_range(0..model.len()),
                similarity: 1.0,
            });
        }
        let res = pnp_ransac(&kc, &group, &model, &params, None, &mut rng).unwrap();
        if res.is_some_and(|r| {
            d_ang(&r.pose.rotation, &gt.rotation).to_degrees() <= 1.0
                && (r.pose.translation - gt.translation).norm() <= 0.01 * model.diameter()
        }) {
            ok += 1;
        }
    }
    let ransac_ok = ok >= 99;
    report("p3p_pnp/ransac", ransac_ok, format!("{ok}/100 seeds within 1 deg and 1% of the diameter at 40% outliers"));
    assert!(p3p_ok && ransac_ok);
}

/// Radical inverse of `i` in `base`.
fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

#[test]
fn so3_grid() {
    let counts_ok = (0..=5u32).all(|k| build_grid(k).unwrap().cell_count() == 72 * 8u64.pow(k));
    report("so3_grid/cell_counts", counts_ok, "72 * 8^k for k = 0..5");

    let grid = build_grid(2).unwrap();
    let n = 10_000_000u64;
    let bins: Vec<_> = (1..=n)
        .map(|i| grid.bin_of(&Rotation::<f64>::from_unit_cube(halton(i, 2), halton(i, 3), halton(i, 5))))
        .collect();
    let hist = DensityHistogram::from_bins(grid, &bins);
    let cells = grid.cell_count() as f64;
    let mean = n as f64 / cells;
    let var = (0..grid.cell_count()).map(|c| (hist.count(c) as f64 - mean).powi(2)).sum::<f64>() / cells;
    let cv = var.sqrt() / mean;
    let cv_ok = cv < 0.02;
    report("so3_grid/equal_volume", cv_ok, format!("cv {cv:.4} over {} cells", grid.cell_count()));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rots: Vec<Rotation<f64>> = (0..200_000).map(|_| Rotation::random(&mut rng)).collect();
    let agg_ok = (0..5u32).all(|k| {
        let fine = density(&build_grid(k + 1).unwrap(), &rots).coarsen().unwrap();
        let direct = density(&build_grid(k).unwrap(), &rots);
        (0..direct.grid().cell_count()).all(|c| fine.count(c) == direct.count(c))
    });
    report("so3_grid/aggregation", agg_ok, "coarsened counts equal direct counts for k = 0..4");
    assert!(counts_ok && cv_ok && agg_ok);
}

/// Noisy cylinder views at three depths and two noise seeds; sweep results are averaged over them.
const SWEEP_DEPTHS_M: [f64; 3] = [1.35, 1.5, 1.65];
const SWEEP_SEEDS: [u64; 2] = [1, 2];

fn sweep_scenarios(root: &Path) -> Vec<Loaded> {
    let o = Overrides {
        seed: Some(0),
        noise_desc_rad: Some(0.5),
        noise_frame_rad: Some(0.1),
        noise_mask_px: Some(1),
        outlier_rate: Some(0.2),
        ..Overrides::default()
    };
    let mut out = Vec::new();
    for z in SWEEP_DEPTHS_M {
        for seed in SWEEP_SEEDS {
            let dir = root.join(format!("z{z}_s{seed}"));
            let path = bundled(&dir, BundledObject::Cylinder, false);
            let mut cfg = scenario(BundledObject::Cylinder, seed);
            cfg.gt_pose.translation_m[2] = z;
            std::fs::write(dir.join("scenario.json"), serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
            out.push(load(&path, &o).unwrap());
        }
    }
    out
}

/// Per-value mean of precision and recall over all scenarios.
fn averaged_sweep(scenarios: &[Loaded], axis: SweepAxis, values: &[f64]) -> (Vec<SweepRow>, Duration) {
    let t = Instant::now();
    let runs: Vec<Vec<SweepRow>> = scenarios.iter().map(|l| sweep(l, axis, values).unwrap().0).collect();
    let n = runs.len() as f64;
    let rows = (0..values.len())
        .map(|i| {
            let mean = |f: fn(&SweepRow) -> f64| runs.iter().map(|r| f(&r[i])).sum::<f64>() / n;
            SweepRow {
                value: values[i],
                precision_mpd: mean(|r| r.precision_mpd),
                recall_mpd: mean(|r| r.recall_mpd),
                precision_msd: mean(|r| r.precision_msd),
                recall_msd: mean(|r| r.recall_msd),
                poses: runs.iter().map(|r| r[i].poses).sum(),
            }
        })
        .collect();
    (rows, t.elapsed())
}

/// `up` never falls and `down` never rises along the sweep.
fn monotone(rows: &[SweepRow], up: impl Fn(&SweepRow) -> f64, down: impl Fn(&SweepRow) -> f64) -> bool {
    rows.windows(2).all(|w| up(&w[1]) >= up(&w[0]) && down(&w[1]) <= down(&w[0]))
}

/// Monotone, and both ends actually move.
fn strict_trend(rows: &[SweepRow], up: impl Fn(&SweepRow) -> f64, down: impl Fn(&SweepRow) -> f64) -> bool {
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    monotone(rows, &up, &down) && up(last) > up(first) && down(last) < down(first)
}

fn table(rows: &[SweepRow]) -> String {
    rows.iter().map(|r| format!("{}: P {:.3} R {:.3}", r.value, r.precision_msd, r.recall_msd)).collect::<Vec<_>>().join(", ")
}

#[test]
fn ablation_trends() {
    let tmp = tempfile::tempdir().unwrap();
    let scenarios = sweep_scenarios(tmp.path());
    let limit = Duration::from_secs(600);
    let mut ok = true;

    let (rows, t) = averaged_sweep(&scenarios, SweepAxis::TauScore, &[0.8, 0.85, 0.9, 0.95]);
    let pass = strict_trend(&rows, |r| r.precision_msd, |r| r.recall_msd) && t < limit;
    report("ablation_trends/tau_score", pass, format!("{} in {t:.0?}", table(&rows)));
    ok &= pass;

    let (rows, t) = averaged_sweep(&scenarios, SweepAxis::TauDens, &[5.0, 10.0, 20.0, 40.0, 80.0]);
    let pass = monotone(&rows, |r| r.precision_msd, |r| r.recall_msd) && t < limit;
    report("ablation_trends/tau_dens", pass, format!("{} in {t:.0?}", table(&rows)));
    ok &= pass;

    let (rows, t) = averaged_sweep(&scenarios, SweepAxis::K, &[3.0, 4.0, 5.0, 6.0]);
    let recalls: Vec<f64> = rows.iter().map(|r| r.recall_msd).collect();
    let peak = recalls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let interior = recalls[1..recalls.len() - 1].contains(&peak);
    let pass = interior && peak > recalls[0] && peak > recalls[recalls.len() - 1] && t < limit;
    report("ablation_trends/k", pass, format!("{} in {t:.0?}", table(&rows)));
    ok &= pass;

    assert!(ok);
}

#[test]
fn grouping_concentration() {
    let model = BundledObject::HexPrism.build_model(DEFAULT_MODEL_POINTS, 7).unwrap();
    let mut cfg = scenario(BundledObject::HexPrism, 7);
    cfg.outlier_rate = 0.3;
    let obs = render(&model, &cfg).unwrap();
    let params = EstimatorParams::default();
    let est = estimate_with_stages(&obs, &model, &params).unwrap();
    let k = obs.camera();
    let thr = 2.0;
    let groups = group_by_bin(&est.stages.pruned);
    let kept = &est.distribution.poses;
    let in_bin: Vec<f64> =
        kept.iter().map(|p| consistency_fraction(k, &model, &groups[&p.bin], &p.pose, thr)).collect();
    let mean_in_bin = in_bin.iter().sum::<f64>() / in_bin.len().max(1) as f64;
    let all: Vec<Correspondence> = est.stages.initial.hypotheses.iter().map(|h| h.source).collect();
    let global = kept.iter().map(|p| consistency_fraction(k, &model, &all, &p.pose, thr)).fold(0.0, f64::max);
    let ratio = mean_in_bin / global;
    let pass = !kept.is_empty() && ratio >= 3.0;
    report(
        "grouping_concentration",
        pass,
        format!("in-bin {mean_in_bin:.3} vs global {global:.3} (ratio {ratio:.2}) over {} bins", kept.len()),
    );
    assert!(pass);
}

#[test]
fn determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let path = bundled(tmp.path(), BundledObject::HexPrism, false);
    let o = Overrides {
        noise_desc_rad: Some(0.3),
        noise_frame_rad: Some(0.1),
        noise_mask_px: Some(1),
        outlier_rate: Some(0.1),
        ..Overrides::default()
    };
    let loaded = load(&path, &o).unwrap();
    let a = run(&loaded, true).unwrap();
    let b = run(&load(&path, &o).unwrap(), true).unwrap();
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(|| run(&loaded, true).unwrap());
    let four = pool(4).install(|| run(&loaded, true).unwrap());
    let same = a.files == b.files;
    let threads = one.files == four.files && one.files == a.files;
    report("determinism", same && threads, format!("repeat identical: {same}, 1 vs 4 threads identical: {threads}"));
    assert!(same && threads);
}
