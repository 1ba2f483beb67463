use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use matsense::calibration::CalibrationProfile;
use matsense::dielectric::EmFeatureVector;
use matsense::fusion::{decide, FusionConfig, RadarContext, VisualContext};
use matsense::knowledge::{default_store, load_store, prune_visual, MatchOptions, MaterialStore};
use matsense::pipeline::{
    calibrate, extract, identify, radar_context, CalibrationInputs, ExtractOptions, Extraction, NoiseSource,
    RadarSettings,
};
use matsense::signal_model::{RadarCube, SceneDocument};
use matsense::vlm_gateway::{propose, ProviderConfig, VisualQuery};
use matsense::{Error, Result};
use nalgebra::Vector3;
use rayon::prelude::*;

use crate::{CalibrateArgs, Cli, Command, ExtractArgs, FuseArgs, IdentifyArgs, PipelineRun, RadarArgs, USAGE_EXIT};

/// Exit status plus the lines to report on stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub messages: Vec<String>,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: USAGE_EXIT,
            messages: vec![message.into()],
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let stage = e.stage();
        Self {
            code: stage.exit_code() as u8,
            messages: vec![format!("[{}] {e}", stage.label())],
        }
    }
}

pub fn run(cli: &Cli) -> std::result::Result<(), Failure> {
    match &cli.command {
        Command::Simulate { scene } => simulate(cli, scene),
        Command::Calibrate(args) => Ok(calibrate_cmd(cli, args)?),
        Command::Extract(args) => extract_cmd(cli, args),
        Command::Identify(args) => Ok(identify_cmd(cli, args)?),
        Command::Fuse(args) => Ok(fuse_cmd(cli, args)?),
        Command::Pipeline(run) => Ok(pipeline_cmd(cli, run)?),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `text` to the output file, or stdout without one.
fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => write_file(p, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn load_scene(cli: &Cli, path: &Path) -> Result<SceneDocument> {
    let mut doc = SceneDocument::parse(&read_text(path)?)?;
    if let Some(seed) = cli.seed {
        doc.seed = seed;
    }
    Ok(doc)
}

fn load_cube(path: &Path, profile: Option<&CalibrationProfile>) -> Result<RadarCube> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let geometry = profile.map(CalibrationProfile::geometry).transpose()?;
    RadarCube::from_bytes(&bytes, geometry)
}

fn load_profile(cli: &Cli) -> Result<CalibrationProfile> {
    let path = cli
        .profile
        .as_ref()
        .ok_or_else(|| Error::Calibration("this command needs --profile".into()))?;
    CalibrationProfile::parse(&read_text(path)?)
}

fn load_material_store(cli: &Cli) -> Result<MaterialStore> {
    match &cli.store {
        Some(p) => load_store(&read_text(p)?),
        None => Ok(default_store()),
    }
}

fn load_fusion(path: Option<&PathBuf>) -> Result<FusionConfig> {
    match path {
        Some(p) => FusionConfig::parse(&read_text(p)?),
        None => Ok(FusionConfig::default()),
    }
}

fn settings(args: &RadarArgs) -> RadarSettings {
    RadarSettings {
        max_distance_m: args.max_distance,
        matching: MatchOptions {
            top_k: args.top_k,
            ..MatchOptions::default()
        },
        prune_tolerance_sigma: args.prune_tolerance,
    }
}

/// `dir/name.ext` -> `dir/name.<suffix>`.
fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    base.with_file_name(format!("{stem}.{suffix}"))
}

fn write_debug(base: &Path, x: &Extraction) -> Result<()> {
    for (suffix, text) in [
        ("rd.toml", x.observation.rd_map.to_text()),
        ("ra.toml", x.observation.ra_map.to_text()),
        ("synthesis.toml", x.synthesis.to_text()),
        ("prca.toml", x.region.to_text()),
    ] {
        write_file(&sibling(base, suffix), text.as_bytes())?;
    }
    Ok(())
}

fn simulate(cli: &Cli, scene: &Path) -> std::result::Result<(), Failure> {
    let out = cli
        .output
        .as_ref()
        .ok_or_else(|| Failure::usage("simulate writes a binary cube and needs --output"))?;
    let cube = load_scene(cli, scene)?.synthesize()?;
    write_file(out, &cube.to_bytes())?;
    let cfg = cube.config();
    println!(
        "{} samples x {} chirps x {} antennas -> {}",
        cfg.samples_per_chirp,
        cfg.chirps_per_frame,
        cube.antennas(),
        out.display()
    );
    Ok(())
}

fn calibrate_cmd(cli: &Cli, args: &CalibrateArgs) -> Result<()> {
    let sphere = load_cube(&args.sphere, None)?;
    let plate = load_cube(&args.plate, None)?;
    let empty = args.empty.as_deref().map(|p| load_cube(p, None)).transpose()?;
    let noise = match (&empty, args.noise_power) {
        (Some(cube), _) => NoiseSource::EmptyScene(cube),
        (None, Some(p)) => NoiseSource::Power(p),
        (None, None) => unreachable!("clap requires one noise source"),
    };
    let profile = calibrate(
        &CalibrationInputs {
            sphere: &sphere,
            plate: &plate,
            noise,
            sphere_diameter_m: args.diameter,
            sphere_position_m: args.sphere_position.map(Vector3::from),
        },
        &ExtractOptions::with_gate(args.gate.gate.0, args.gate.gate.1),
    )?;
    emit(cli.output.as_deref(), &profile.to_text())
}

fn extract_one(cube_path: &Path, profile: &CalibrationProfile, opts: &ExtractOptions) -> Result<Extraction> {
    let cube = load_cube(cube_path, Some(profile))?;
    extract(&cube, profile, opts)
}

fn extract_cmd(cli: &Cli, args: &ExtractArgs) -> std::result::Result<(), Failure> {
    let profile = load_profile(cli)?;
    let opts = ExtractOptions::with_gate(args.gate.gate.0, args.gate.gate.1);
    if let [cube] = args.cubes.as_slice() {
        let x = extract_one(cube, &profile, &opts)?;
        emit(cli.output.as_deref(), &x.features.to_text())?;
        if cli.debug {
            write_debug(cli.output.as_deref().unwrap_or(cube), &x)?;
        }
        return Ok(());
    }

    let dir = cli
        .output
        .as_ref()
        .ok_or_else(|| Failure::usage("extracting several cubes needs --output <dir>"))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results: Vec<Result<()>> = args
        .cubes
        .par_iter()
        .map(|cube| {
            let x = extract_one(cube, &profile, &opts)?;
            let out = sibling(&dir.join(cube.file_name().unwrap_or_default()), "features.toml");
            write_file(&out, x.features.to_text().as_bytes())?;
            if cli.debug {
                write_debug(&out.with_extension(""), &x)?;
            }
            Ok(())
        })
        .collect();

    let mut failure: Option<Failure> = None;
    for (cube, r) in args.cubes.iter().zip(results) {
        if let Err(e) = r {
            let f = Failure::from(e);
            let message = format!("{}: {}", cube.display(), f.messages[0]);
            match &mut failure {
                Some(first) => first.messages.push(message),
                None => {
                    failure = Some(Failure {
                        code: f.code,
                        messages: vec![message],
                    })
                }
            }
        }
    }
    failure.map_or(Ok(()), Err)
}

fn identify_cmd(cli: &Cli, args: &IdentifyArgs) -> Result<()> {
    let features = EmFeatureVector::parse(&read_text(&args.features)?)?;
    let store = load_material_store(cli)?;
    let settings = settings(&args.radar);
    let radar = radar_context(&features, &store, &settings)?;
    emit(cli.output.as_deref(), &radar.to_text())?;
    if let (Some(visual), Some(out)) = (&args.visual, &args.pruned_output) {
        let visual = VisualContext::parse(&read_text(visual)?)?;
        let pruned = prune_visual(&visual, features.dielectric_constant, &store, settings.prune_tolerance_sigma)?;
        write_file(out, pruned.to_text().as_bytes())?;
    }
    Ok(())
}

fn fuse_cmd(cli: &Cli, args: &FuseArgs) -> Result<()> {
    let visual = VisualContext::parse(&read_text(&args.visual)?)?;
    let radar = RadarContext::parse(&read_text(&args.radar)?)?;
    let decision = decide(&visual, &radar, &load_fusion(args.fusion.as_ref())?)?;
    emit(cli.output.as_deref(), &decision.to_text())
}

fn pipeline_cmd(cli: &Cli, run: &PipelineRun) -> Result<()> {
    let profile = load_profile(cli)?;
    let cube = match (&run.cube, &run.scene) {
        (Some(c), None) => load_cube(c, Some(&profile))?,
        (None, Some(s)) => load_scene(cli, s)?.synthesize()?,
        _ => unreachable!("clap enforces exactly one input"),
    };
    let opts = ExtractOptions::with_gate(run.gate.gate.0, run.gate.gate.1);
    let x = extract(&cube, &profile, &opts)?;

    let (provider_cfg, base_dir) = match (&run.provider, &run.fixture) {
        (Some(p), _) => (ProviderConfig::parse(&read_text(p)?)?, p.parent().map(Path::to_path_buf)),
        (None, Some(f)) => (ProviderConfig::mock(f), None),
        (None, None) => unreachable!("clap requires a provider"),
    };
    let provider = provider_cfg.build(base_dir.as_deref())?;
    let visual = propose(&VisualQuery::new(run.image.clone())?, provider.as_ref())?;

    let store = load_material_store(cli)?;
    let id = identify(
        &x.features,
        &visual,
        &store,
        &settings(&run.radar),
        &load_fusion(run.fusion.as_ref())?,
    )?;
    emit(cli.output.as_deref(), &id.decision.to_text())?;

    if cli.debug {
        let base = cli.output.clone().unwrap_or_else(|| PathBuf::from("pipeline.toml"));
        write_debug(&base, &x)?;
        for (suffix, text) in [
            ("features.toml", x.features.to_text()),
            ("radar.toml", id.radar.to_text()),
            ("visual.toml", id.visual.to_text()),
            ("pruned.toml", id.pruned_visual.to_text()),
        ] {
            write_file(&sibling(&base, suffix), text.as_bytes())?;
        }
    }
    Ok(())
}
