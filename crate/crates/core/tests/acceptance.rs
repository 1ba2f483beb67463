//! Acceptance criteria, one line each. Runs without the libtest harness so
//! every line is printed even when the suite passes.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use matsense::calibration::{calibrate_sphere, rcs_from_snr};
use matsense::dielectric::dielectric_from_fresnel;
use matsense::fusion::{decide, gate, Candidate, FusionConfig, FusionMode, RadarContext, VisualContext};
use matsense::knowledge::{default_store, match_epsilon, prune_visual, MatchOptions, RadarCandidateSet};
use matsense::pipeline::{extract, identify, observe, ExtractOptions, RadarSettings};
use matsense::prca::{cell_vertices, shoelace_area};
use matsense::signal_model::{fresnel_amplitude, SceneTarget, METAL_EPSILON, SPEED_OF_LIGHT};
use matsense::synthesis::synthesize;
use matsense::vlm_gateway::{propose, MockProvider, VisualQuery};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c1_fresnel_round_trip() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for eps in [1.5, 2.0, 3.0, 4.0, 6.0, 9.0, 16.0, 25.0] {
        for deg in [0.0f64, 10.0, 20.0, 30.0] {
            let t = deg.to_radians();
            let r = fresnel_amplitude(eps, t).map_err(|e| e.to_string())?;
            let back = dielectric_from_fresnel(r, t).map_err(|e| e.to_string())?;
            worst = worst.max(rel(back, eps));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && secs < 1.0,
        format!("max rel err {worst:.2e} (tol 1e-6), {secs:.3} s (limit 1 s)"),
    )
}

fn c2_simulator_end_to_end() -> Outcome {
    let start = Instant::now();
    let profile = calibrated_profile();
    let mut estimates = Vec::new();
    let mut worst: f64 = 0.0;
    let mut min_snr = f64::INFINITY;
    for (k, eps) in [2.0, 4.0, 9.0, 25.0].into_iter().enumerate() {
        min_snr = min_snr.min(sample_snr_db(eps, PLATE_AREA_M2, NOISE_W));
        let cube = frame(&[plate(eps, PLATE_AREA_M2)], NOISE_W, 200 + k as u64);
        let x = extract(&cube, &profile, &options()).map_err(|e| e.to_string())?;
        let est = x.features.dielectric_constant;
        worst = worst.max(rel(est, eps));
        estimates.push(est);
    }
    let increasing = estimates.windows(2).all(|w| w[0] < w[1]);
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 0.10 && increasing && min_snr >= 20.0 && secs < 30.0,
        format!(
            "ε̂ = {:?}, max rel err {:.3} (tol 0.10), increasing {increasing}, min sample SNR {min_snr:.1} dB, {secs:.1} s",
            estimates.iter().map(|e| (e * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            worst
        ),
    )
}

fn c3_geometry_invariance() -> Outcome {
    let profile = calibrated_profile();
    let run = |area: f64, seed: u64| {
        extract(&frame(&[plate(4.0, area)], NOISE_W, seed), &profile, &options()).map_err(|e| e.to_string())
    };
    let small = run(PLATE_AREA_M2, 300)?.features;
    let large = run(2.0 * PLATE_AREA_M2, 301)?.features;
    let eps_change = rel(large.dielectric_constant, small.dielectric_constant);
    let sigma_change = rel(large.rcs_m2, small.rcs_m2);
    check(
        eps_change < 0.10 && sigma_change >= 0.50,
        format!(
            "ε̂ {:.3} -> {:.3} ({:.1}% change, limit 10%), σ change {:.1}% (need >= 50%), A_r {:.3e} -> {:.3e} m²",
            small.dielectric_constant,
            large.dielectric_constant,
            100.0 * eps_change,
            100.0 * sigma_change,
            small.prca_area_m2,
            large.prca_area_m2
        ),
    )
}

fn c4_synthesis_identities() -> Outcome {
    let (_, geo) = rig();
    let voxel = Vector3::new(0.0, 0.0, BENCH_RANGE_M);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_sum: f64 = 0.0;
    let mut c_in_range = true;
    for _ in 0..1000 {
        let i: Vec<Complex64> = (0..ANTENNAS)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let r = synthesize(&i, &geo, &voxel, 1.0).map_err(|e| e.to_string())?;
        let w: f64 = r.weights.iter().sum();
        worst_sum = worst_sum.max(rel(w, r.coherent_sum.norm()));
        c_in_range &= (0.0..=1.0).contains(&r.coherence_factor);
    }
    let same = vec![Complex64::from_polar(0.7, 1.1); ANTENNAS];
    let c_same = synthesize(&same, &geo, &voxel, 1.0).map_err(|e| e.to_string())?.coherence_factor;

    let trials = 10_000;
    let mut total = 0.0;
    for _ in 0..trials {
        let i: Vec<Complex64> = (0..ANTENNAS)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
            .collect();
        match synthesize(&i, &geo, &voxel, 1.0) {
            Ok(r) => total += r.coherence_factor,
            Err(e) => return Err(e.to_string()),
        }
    }
    let mean_c = total / trials as f64;
    let target = 1.0 / ANTENNAS as f64;
    check(
        worst_sum <= 1e-9 && c_in_range && (c_same - 1.0).abs() < 1e-12 && rel(mean_c, target) <= 0.20,
        format!(
            "Σw vs |S| max rel {worst_sum:.1e}, c in [0,1] {c_in_range}, c(identical) {c_same:.15}, MC mean c {mean_c:.4} vs 1/N {target:.4}"
        ),
    )
}

fn c5_prca_geometry() -> Outcome {
    let square = shoelace_area(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).map_err(|e| e.to_string())?;
    let triangle = shoelace_area(&[(0.0, 0.0), (2.0, 0.0), (0.0, 2.0)]).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for r1 in [0.1, 0.25, 1.0, 3.0] {
        for dr in [0.01, 0.0444, 1.0] {
            for dtheta_deg in [0.1, 0.5, 1.0] {
                for centre_deg in [-60.0, 0.0, 30.0] {
                    let half = 0.5 * f64::to_radians(dtheta_deg);
                    let c = f64::to_radians(centre_deg);
                    let q = shoelace_area(&cell_vertices((r1, r1 + dr), (c - half, c + half)))
                        .map_err(|e| e.to_string())?;
                    let sector = 0.5 * ((r1 + dr) * (r1 + dr) - r1 * r1) * 2.0 * half;
                    worst = worst.max(rel(q, sector));
                }
            }
        }
    }
    check(
        square == 1.0 && triangle == 2.0 && worst <= 1e-3,
        format!("square {square}, triangle {triangle}, max sector rel err {worst:.2e} (tol 1e-3)"),
    )
}

fn c6_calibration_round_trip() -> Outcome {
    let (cfg, geo) = rig();
    let sphere = SceneTarget::at_polar("sphere", BENCH_RANGE_M, 0.0, METAL_EPSILON, PI * (SPHERE_DIAMETER_M / 2.0).powi(2));
    let obs = observe(&frame(&[sphere], 0.0, 0), None, &options()).map_err(|e| e.to_string())?;
    let profile = calibrate_sphere(&obs.detection, &cfg, &geo, 1e-6, SPHERE_DIAMETER_M, None).map_err(|e| e.to_string())?;
    let s = profile.sphere().map_err(|e| e.to_string())?;
    let exact = PI * (SPHERE_DIAMETER_M / 2.0).powi(2);
    let self_rcs = rcs_from_snr(s.snr_linear, s.range_m, &profile).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for ratio in [0.01, 0.5, 2.0, 37.0] {
        let got = rcs_from_snr(ratio * s.snr_linear, s.range_m, &profile).map_err(|e| e.to_string())?;
        worst = worst.max(rel(got, s.rcs_m2 * ratio));
    }
    check(
        s.rcs_m2 == exact && self_rcs == exact && (exact - 0.0031).abs() < 5e-5 && worst <= 1e-15,
        format!("σ_c = {:.6} m², self RCS exact {}, max rel err of σ_c·SNR/SNR_c {worst:.1e}", s.rcs_m2, self_rcs == exact),
    )
}

fn fixed_weights_config(l: [f64; 3], g: [f64; 3]) -> FusionConfig {
    FusionConfig {
        lambda1: l[0],
        lambda2: l[1],
        lambda3: l[2],
        gamma1: g[0],
        gamma2: g[1],
        gamma3: g[2],
        ..FusionConfig::default()
    }
}

fn radar_ctx(candidates: &[(&str, f64)], distance: f64) -> RadarContext {
    RadarContext::new(
        1e4,
        distance,
        1.0,
        0.0,
        RadarCandidateSet {
            measured_epsilon: 3.0,
            candidates: candidates.iter().map(|(n, p)| Candidate::new(*n, *p)).collect(),
        },
    )
    .unwrap()
}

fn c7_fusion_fixtures() -> Outcome {
    let fail = |e: matsense::Error| e.to_string();
    let visual = VisualContext::new(0.8, 0.2, vec![Candidate::new("glass", 0.6), Candidate::new("plastic", 0.4)]).map_err(fail)?;
    let inter = decide(&visual, &radar_ctx(&[("glass", 1.0)], 0.3), &FusionConfig::default()).map_err(fail)?;

    // D5: vision reads mirror glass, radar reads plastic; uncertainties set so
    // the weighted evidence splits 25 : 75.
    let d5_cfg = fixed_weights_config([3f64.ln(), 0.0, 0.0], [0.0, 0.0, 1.0]);
    let d5_vis = VisualContext::new(0.0, 0.0, vec![Candidate::new("mirror glass", 1.0)]).map_err(fail)?;
    let d5 = decide(&d5_vis, &radar_ctx(&[("plastic", 1.0)], 0.3), &d5_cfg).map_err(fail)?;

    // D6: vision reads wood, radar misreads metal at long range; 88 : 12.
    let d6_cfg = fixed_weights_config([1.0, 0.0, 0.0], [0.0, (0.88f64 / 0.12).ln(), 0.0]);
    let d6_vis = VisualContext::new(1.0, 0.0, vec![Candidate::new("wood", 1.0)]).map_err(fail)?;
    let d6 = decide(&d6_vis, &radar_ctx(&[("metal", 1.0)], 1.0), &d6_cfg).map_err(fail)?;

    let (e1, e2) = gate(0.4, 0.4);
    let (t1, t2) = gate(0.0, 3f64.ln());
    let gates_ok = (e1 - 0.5).abs() <= 1e-12 && (e2 - 0.5).abs() <= 1e-12 && (t1 - 0.75).abs() <= 1e-12 && (t2 - 0.25).abs() <= 1e-12;
    let ok = inter.material == "glass"
        && inter.mode == FusionMode::Intersection
        && d5.material == "plastic"
        && d5.mode == FusionMode::Conflict
        && (d5.share_vis - 0.25).abs() <= 1e-12
        && d6.material == "wood"
        && d6.mode == FusionMode::Conflict
        && (d6.share_vis - 0.88).abs() <= 1e-12
        && gates_ok;
    check(
        ok,
        format!(
            "intersection -> {}, D5 -> {} ({:.4} : {:.4}), D6 -> {} ({:.4} : {:.4}), gates ({e1}, {e2}) ({t1:.15}, {t2:.15})",
            inter.material,
            d5.material,
            d5.share_vis,
            1.0 - d5.share_vis,
            d6.material,
            d6.share_vis,
            1.0 - d6.share_vis
        ),
    )
}

fn c8_knowledge_matching() -> Outcome {
    let store = default_store();
    let m = match_epsilon(2.87, &store, &MatchOptions::default()).map_err(|e| e.to_string())?;
    // A2: frosted glass cup read by the radar as ceramic-like.
    let visual = VisualContext::new(0.7, 0.3, vec![Candidate::new("frosted glass", 0.55), Candidate::new("plastic", 0.45)])
        .map_err(|e| e.to_string())?;
    let pruned = prune_visual(&visual, 6.3, &store, 1.0).map_err(|e| e.to_string())?;
    let names: Vec<&str> = pruned.candidates.iter().map(|c| c.name.as_str()).collect();
    check(
        m.candidates[0].name == "plastic" && !names.contains(&"plastic") && names.contains(&"frosted glass"),
        format!("ε 2.87 -> {} ({:.3}), A2 pruned set {names:?}", m.candidates[0].name, m.candidates[0].probability),
    )
}

fn c9_detection_accuracy() -> Outcome {
    let (cfg, _) = rig();
    let bin = SPEED_OF_LIGHT / (2.0 * cfg.bandwidth_hz);
    let opts = ExtractOptions::with_gate(0.1, 6.0);
    let mut worst: f64 = 0.0;
    let ranges: Vec<f64> = (0..24).map(|k| 0.2 + 0.2 * k as f64 + 0.013 * k as f64).collect();
    for (k, r) in ranges.iter().enumerate() {
        let az = f64::to_radians(-30.0 + 2.5 * k as f64);
        let t = SceneTarget::at_polar("t", *r, az, METAL_EPSILON, 0.01);
        let obs = observe(&frame(&[t], 0.0, 0), None, &opts).map_err(|e| e.to_string())?;
        worst = worst.max((obs.detection.range_m - r).abs());
    }
    check(
        worst <= bin,
        format!("{} ranges, max |R̂ − R| {:.4} m, bin c/2B {bin:.4} m", ranges.len(), worst),
    )
}

const VISUAL_FIXTURE: &str = r#"
[[images]]
image_ref = "A5.png"
luminance = 0.8
complexity = 0.3
candidates = [{ name = "frosted glass", probability = 0.6 }, { name = "plastic", probability = 0.4 }]
"#;

fn full_run() -> Result<Vec<u8>, String> {
    let fail = |e: matsense::Error| e.to_string();
    let profile = calibrated_profile();
    let cube = frame(&[plate(2.87, PLATE_AREA_M2)], NOISE_W, 77);
    let x = extract(&cube, &profile, &options()).map_err(fail)?;
    let provider = MockProvider::parse(VISUAL_FIXTURE).map_err(fail)?;
    let visual = propose(&VisualQuery::new("A5.png").map_err(fail)?, &provider).map_err(fail)?;
    let id = identify(&x.features, &visual, &default_store(), &RadarSettings::default(), &FusionConfig::default())
        .map_err(fail)?;
    let mut out = cube.to_bytes();
    for text in [
        profile.to_text(),
        x.observation.rd_map.to_text(),
        x.observation.ra_map.to_text(),
        x.synthesis.to_text(),
        x.region.to_text(),
        x.features.to_text(),
        id.decision.to_text(),
    ] {
        out.extend_from_slice(text.as_bytes());
    }
    Ok(out)
}

fn c10_determinism() -> Outcome {
    let a = full_run()?;
    let b = full_run()?;
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?
        .install(full_run)?;
    check(
        a == b && a == single,
        format!("{} bytes; repeat identical {}, single-thread identical {}", a.len(), a == b, a == single),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Fresnel round trip", c1_fresnel_round_trip),
        ("simulator end to end", c2_simulator_end_to_end),
        ("geometry invariance", c3_geometry_invariance),
        ("synthesis identities", c4_synthesis_identities),
        ("PRCA geometry", c5_prca_geometry),
        ("calibration round trip", c6_calibration_round_trip),
        ("fusion fixtures", c7_fusion_fixtures),
        ("knowledge matching", c8_knowledge_matching),
        ("detection accuracy", c9_detection_accuracy),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS  {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL  {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
