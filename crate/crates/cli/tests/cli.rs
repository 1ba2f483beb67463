use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn matsense<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_matsense"))
        .args(args)
        .output()
        .expect("spawn matsense")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn simulate(dir: &Path, scene: &str) -> PathBuf {
    let cube = dir.join(format!("{scene}.rcub"));
    let out = matsense(["simulate", p(&fixtures().join(format!("{scene}.toml"))), "-o", p(&cube)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    cube
}

/// Simulated bench captures and the profile calibrated from them.
fn bench(dir: &Path) -> PathBuf {
    let profile = dir.join("profile.toml");
    let out = matsense([
        "calibrate",
        "--sphere",
        p(&simulate(dir, "sphere")),
        "--plate",
        p(&simulate(dir, "metal_plate")),
        "--empty",
        p(&simulate(dir, "empty")),
        "--gate",
        "0.1,0.8",
        "--output",
        p(&profile),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    profile
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .parse()
        .unwrap()
}

#[test]
fn simulate_writes_a_cube() {
    let dir = tempfile::tempdir().unwrap();
    let cube = simulate(dir.path(), "plate_eps4");
    let bytes = fs::read(&cube).unwrap();
    assert_eq!(&bytes[..4], b"RCUB");
    assert_eq!(bytes.len(), 64 + 512 * 64 * 8 * 8);

    let again = dir.path().join("again.rcub");
    matsense(["simulate", p(&fixtures().join("plate_eps4.toml")), "-o", p(&again)]);
    assert_eq!(bytes, fs::read(&again).unwrap());

    let reseeded = dir.path().join("reseeded.rcub");
    matsense(["simulate", p(&fixtures().join("plate_eps4.toml")), "--seed", "9", "-o", p(&reseeded)]);
    assert_ne!(bytes, fs::read(&reseeded).unwrap());
}

#[test]
fn simulate_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = matsense(["simulate", "no/such/scene.toml", "-o", p(&dir.path().join("x.rcub"))]);
    assert_eq!(code(&out), 2);

    let scene = dir.path().join("far.toml");
    fs::write(
        &scene,
        "seed = 1\n[array]\nantennas = 8\n[[targets]]\nname = \"far wall\"\nposition_m = [0.0, 0.0, 50.0]\ndielectric_constant = 4.0\nfacet_area_m2 = 1.0\n",
    )
    .unwrap();
    let out = matsense(["simulate", p(&scene), "-o", p(&dir.path().join("x.rcub"))]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("far wall"), "{}", stderr(&out));

    let out = matsense(["simulate", p(&scene)]);
    assert_eq!(code(&out), 64);
}

#[test]
fn extract_recovers_a_known_plate() {
    let dir = tempfile::tempdir().unwrap();
    let profile = bench(dir.path());
    let cube = simulate(dir.path(), "plate_eps4");
    let features = dir.path().join("plate.features.toml");
    let out = matsense([
        "extract",
        p(&cube),
        "--profile",
        p(&profile),
        "--gate",
        "0.1,0.8",
        "--debug",
        "-o",
        p(&features),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let eps = field(&fs::read_to_string(&features).unwrap(), "dielectric_constant");
    assert!((3.6..=4.4).contains(&eps), "ε = {eps}");
    for suffix in ["rd", "ra", "synthesis", "prca"] {
        assert!(dir.path().join(format!("plate.features.{suffix}.toml")).exists(), "{suffix}");
    }
}

#[test]
fn extract_failures_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let profile = bench(dir.path());
    let empty = dir.path().join("empty.rcub");

    let out = matsense(["extract", p(&empty), "--profile", p(&profile)]);
    assert_eq!(code(&out), 5, "{}", stderr(&out));

    let corrupt = dir.path().join("corrupt.rcub");
    let mut bytes = fs::read(&empty).unwrap();
    bytes[0] = b'X';
    fs::write(&corrupt, &bytes).unwrap();
    let out = matsense(["extract", p(&corrupt), "--profile", p(&profile)]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));

    let out = matsense(["extract", p(&empty)]);
    assert_eq!(code(&out), 6);

    let uncalibrated = dir.path().join("uncalibrated.toml");
    let text = fs::read_to_string(&profile).unwrap();
    let cut = text.find("metal_plate_rho").unwrap();
    let rest = &text[cut..];
    let end = rest.find('\n').unwrap();
    fs::write(&uncalibrated, format!("{}{}", &text[..cut], &rest[end + 1..])).unwrap();
    let cube = simulate(dir.path(), "plate_eps4");
    let out = matsense(["extract", p(&cube), "--profile", p(&uncalibrated)]);
    assert_eq!(code(&out), 6, "{}", stderr(&out));
}

#[test]
fn batch_extract_isolates_failures() {
    let dir = tempfile::tempdir().unwrap();
    let profile = bench(dir.path());
    let good = simulate(dir.path(), "plate_eps4");
    let cup = simulate(dir.path(), "plastic_cup");
    let empty = dir.path().join("empty.rcub");
    let outdir = dir.path().join("batch");
    let out = matsense([
        "extract",
        p(&good),
        p(&empty),
        p(&cup),
        "--profile",
        p(&profile),
        "--gate",
        "0.1,0.8",
        "-o",
        p(&outdir),
    ]);
    assert_eq!(code(&out), 5, "{}", stderr(&out));
    assert!(stderr(&out).contains("empty.rcub"));
    assert!(outdir.join("plate_eps4.features.toml").exists());
    assert!(outdir.join("plastic_cup.features.toml").exists());
    assert!(!outdir.join("empty.features.toml").exists());

    let single = dir.path().join("single.toml");
    matsense(["extract", p(&cup), "--profile", p(&profile), "--gate", "0.1,0.8", "-o", p(&single)]);
    assert_eq!(
        fs::read(&single).unwrap(),
        fs::read(outdir.join("plastic_cup.features.toml")).unwrap()
    );
}

fn pipeline(dir: &Path, profile: &Path, scene: &str, extra: &[&str]) -> Vec<u8> {
    let cube = simulate(dir, scene);
    let decision = dir.join(format!("{scene}.decision.toml"));
    let image = format!("images/{scene}.png");
    let mut args = vec![
        "pipeline",
        "--cube",
        p(&cube),
        "--image",
        &image,
        "--profile",
        p(profile),
        "--gate",
        "0.1,0.8",
        "-o",
        p(&decision),
    ];
    let provider = fixtures().join("provider.toml");
    args.extend(["--provider", p(&provider)]);
    args.extend(extra);
    let out = matsense(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    fs::read(&decision).unwrap()
}

/// Compares against the checked-in golden file; `UPDATE_GOLDEN=1` rewrites it.
fn assert_golden(name: &str, actual: &[u8]) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(
        expected == actual,
        "{name} differs from golden:\n{}",
        String::from_utf8_lossy(actual)
    );
}

#[test]
fn pipeline_golden_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let profile = bench(dir.path());

    let cup = pipeline(dir.path(), &profile, "plastic_cup", &[]);
    let text = String::from_utf8(cup.clone()).unwrap();
    assert!(text.starts_with("material = \"plastic\"\nmode = \"intersection\""), "{text}");
    assert_golden("plastic_cup.decision.toml", &cup);

    let far_field = fixtures().join("far_field.toml");
    let wood = pipeline(
        dir.path(),
        &profile,
        "wood_panel",
        &["--fusion", p(&far_field), "--max-distance", "0.4"],
    );
    let text = String::from_utf8(wood.clone()).unwrap();
    assert!(text.starts_with("material = \"wood\"\nmode = \"conflict\""), "{text}");
    assert_golden("wood_panel.decision.toml", &wood);

    // Known failure: glossy paper reads as metal and the radar outvotes the
    // camera.
    let paper = pipeline(dir.path(), &profile, "smooth_paper", &[]);
    let text = String::from_utf8(paper.clone()).unwrap();
    assert!(text.starts_with("material = \"metal\"\nmode = \"conflict\""), "{text}");
    assert_golden("smooth_paper.decision.toml", &paper);

    let other = tempfile::tempdir().unwrap();
    let profile2 = bench(other.path());
    assert_eq!(fs::read(&profile).unwrap(), fs::read(&profile2).unwrap());
    assert_eq!(cup, pipeline(other.path(), &profile2, "plastic_cup", &[]));
}

#[test]
fn staged_commands_match_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let profile = bench(d);
    let decision = pipeline(d, &profile, "plastic_cup", &["--debug"]);
    let base = |s: &str| d.join(format!("plastic_cup.decision.{s}.toml"));

    let features = d.join("features.toml");
    let out = matsense([
        "extract",
        p(&d.join("plastic_cup.rcub")),
        "--profile",
        p(&profile),
        "--gate",
        "0.1,0.8",
        "-o",
        p(&features),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read(&features).unwrap(), fs::read(base("features")).unwrap());

    let (radar, pruned) = (d.join("radar.toml"), d.join("pruned.toml"));
    let out = matsense([
        "identify",
        p(&features),
        "--visual",
        p(&base("visual")),
        "--pruned-output",
        p(&pruned),
        "-o",
        p(&radar),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read(&radar).unwrap(), fs::read(base("radar")).unwrap());
    assert_eq!(fs::read(&pruned).unwrap(), fs::read(base("pruned")).unwrap());

    let out = matsense(["fuse", "--visual", p(&pruned), "--radar", p(&radar)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(out.stdout, decision);
}

#[test]
fn pipeline_from_scene_and_provider_errors() {
    let dir = tempfile::tempdir().unwrap();
    let profile = bench(dir.path());
    let run = |image: &str, fixture: &Path| {
        matsense([
            "pipeline",
            "--scene",
            p(&fixtures().join("plastic_cup.toml")),
            "--image",
            image,
            "--fixture",
            p(fixture),
            "--profile",
            p(&profile),
            "--gate",
            "0.1,0.8",
        ])
    };
    let vision = fixtures().join("vision.toml");
    let out = run("plastic_cup.png", &vision);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("material = \"plastic\""));

    let out = run("unknown.png", &vision);
    assert_eq!(code(&out), 9, "{}", stderr(&out));

    let bad_fusion = dir.path().join("fusion.toml");
    fs::write(&bad_fusion, "lambda1 = -1.0\n").unwrap();
    let out = matsense([
        "pipeline",
        "--scene",
        p(&fixtures().join("plastic_cup.toml")),
        "--image",
        "plastic_cup.png",
        "--fixture",
        p(&vision),
        "--fusion",
        p(&bad_fusion),
        "--profile",
        p(&profile),
    ]);
    assert_eq!(code(&out), 10, "{}", stderr(&out));

    let bad_store = dir.path().join("store.toml");
    fs::write(&bad_store, "not a store").unwrap();
    let out = matsense([
        "pipeline",
        "--scene",
        p(&fixtures().join("plastic_cup.toml")),
        "--image",
        "plastic_cup.png",
        "--fixture",
        p(&vision),
        "--store",
        p(&bad_store),
        "--profile",
        p(&profile),
    ]);
    assert_eq!(code(&out), 8, "{}", stderr(&out));
}

#[test]
fn usage_errors_and_help() {
    let out = matsense(["pipeline", "--image", "x.png", "--fixture", "f.toml"]);
    assert_eq!(code(&out), 64);
    let out = matsense([
        "pipeline", "--cube", "a", "--scene", "b", "--image", "x.png", "--fixture", "f.toml",
    ]);
    assert_eq!(code(&out), 64);
    let out = matsense(["extract", "a.rcub", "--gate", "2,1"]);
    assert_eq!(code(&out), 64);
    let out = matsense(["frobnicate"]);
    assert_eq!(code(&out), 64);

    let out = matsense(["--help"]);
    assert_eq!(code(&out), 0);
    let help = String::from_utf8(out.stdout).unwrap();
    for line in ["2   io", "5   no-target", "9   vision", "10  fusion", "64  usage"] {
        assert!(help.contains(line), "{line}\n{help}");
    }
}
