use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use porelife::experiments::{homogenize as run_homogenize, one_per_level, predict_wohler, HomogenizationSetup};
use porelife::field::{
    criterion_table, criterion_table_lenient, notched_field, synth_field, thin_variant, CriterionOptions,
    CriterionTable, ElasticElementField, SynthesizedField,
};
use porelife::likelihood::{load_observations, FatigueObservation, PreparedLikelihood, SpecimenModel};
use porelife::optimize::{calibrate as run_calibrate, initial_guess, CalibrationProblem, PARAMETER_NAMES};
use porelife::strain_life::StrainLifeParams;
use porelife::weakest_link::SamplingOptions;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{CalibrateArgs, CriterionArgs, GenfieldArgs, HomogenizeArgs, Mode, WohlerArgs};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path)(e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(CliError::io(path))
}

fn criterion_options(config: &RunConfig) -> CriterionOptions {
    CriterionOptions {
        n_cycles: config.n_cycles,
        samples_per_cycle: config.samples_per_cycle,
    }
}

fn load_table(path: &Path) -> Result<CriterionTable, CliError> {
    CriterionTable::load(path).map_err(CliError::core(path.display().to_string()))
}

fn load_tables(paths: &[PathBuf]) -> Result<Vec<CriterionTable>, CliError> {
    paths.iter().map(|p| load_table(p)).collect()
}

fn pick<'a>(cli: &'a [PathBuf], configured: &'a [PathBuf]) -> &'a [PathBuf] {
    if cli.is_empty() {
        configured
    } else {
        cli
    }
}

fn observations(path: Option<&PathBuf>, what: &str) -> Result<Vec<FatigueObservation>, CliError> {
    let path = path.ok_or_else(|| CliError::Validation(format!("no {what} file given")))?;
    let obs = load_observations(path).map_err(CliError::core(path.display().to_string()))?;
    if obs.is_empty() {
        return Err(CliError::Validation(format!("{} holds no observations", path.display())));
    }
    Ok(obs)
}

/// Parameters from a JSON file holding either a bare record or a
/// calibration result with a `params` entry, else the configured ones.
fn strain_life(config: &RunConfig, path: Option<&PathBuf>) -> Result<StrainLifeParams, CliError> {
    let params = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            let record = value.get("params").cloned().unwrap_or(value);
            serde_json::from_value(record).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?
        }
        None => config
            .fatigue
            .ok_or_else(|| CliError::Validation("no strain-life parameters: pass --params or set [fatigue]".into()))?,
    };
    params.validate().map_err(|e| CliError::Validation(format!("strain-life parameters: {e}")))?;
    Ok(params)
}

#[derive(Serialize)]
struct FieldEntry {
    file: String,
    seed: u64,
    elements: usize,
    pores: usize,
    surface_breaking: usize,
    gauge_volume_mm3: f64,
    total_volume_mm3: f64,
}

fn entry(file: &str, seed: u64, field: &ElasticElementField, synth: Option<&SynthesizedField>, gauge: f64) -> FieldEntry {
    FieldEntry {
        file: file.to_string(),
        seed,
        elements: field.len(),
        pores: synth.map_or(0, |s| s.pores.len()),
        surface_breaking: synth.map_or(0, |s| s.pores.iter().filter(|p| p.surface_breaking).count()),
        gauge_volume_mm3: gauge,
        total_volume_mm3: field.total_volume(),
    }
}

pub fn genfield(config: &RunConfig, args: &GenfieldArgs, out: &Path) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Validation("--count must be positive".into()));
    }
    let mut stats = config.pores;
    if let Some(d) = args.thin {
        stats = thin_variant(&stats, d).map_err(|e| CliError::Validation(e.to_string()))?;
    }
    if let Some(n) = args.pores {
        if !(n >= 0.0 && n.is_finite()) {
            return Err(CliError::Validation(format!("--pores must be nonnegative, got {n}")));
        }
        stats.pore_density = n / stats.gauge_volume();
    }
    stats.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let tile = args.tile.unwrap_or(1);
    if tile == 0 {
        return Err(CliError::Validation("--tile must be positive".into()));
    }
    let gauge = stats.gauge_volume();
    let mut entries = Vec::new();
    let mut pore_free_file = None;
    for k in 0..args.count {
        let seed = config.seed + k as u64;
        let (synth, free) = if args.pores == Some(0.0) && !args.notch {
            (None, None)
        } else if args.notch {
            let (s, f) = notched_field(&stats, &config.notch, config.shells, seed).map_err(CliError::core("notched field"))?;
            (Some(s), Some(f))
        } else {
            (Some(synth_field(&stats, config.shells, seed).map_err(CliError::core("pore field"))?), None)
        };
        let mut field = match &synth {
            Some(s) => s.field.clone(),
            None => ElasticElementField::bulk(gauge).map_err(CliError::core("bulk field"))?,
        };
        field = field.tile(tile).map_err(CliError::core("tiling"))?;
        field.note = Some(format!("seed {seed}"));
        let name = format!("{}_{seed}.csv", args.prefix);
        let path = out.join(&name);
        field.save(&path).map_err(CliError::core(path.display().to_string()))?;
        entries.push(entry(&name, seed, &field, synth.as_ref(), gauge * tile as f64));
        if let (Some(f), None) = (free, &pore_free_file) {
            let f = f.tile(tile).map_err(CliError::core("tiling"))?;
            let name = format!("{}_pore_free.csv", args.prefix);
            let path = out.join(&name);
            f.save(&path).map_err(CliError::core(path.display().to_string()))?;
            pore_free_file = Some(name);
        }
    }
    let manifest = json!({
        "seed": config.seed,
        "stats": stats,
        "shells": config.shells,
        "thin": args.thin,
        "tile": tile,
        "notch": if args.notch { Some(config.notch) } else { None },
        "pore_free_field": pore_free_file,
        "gauge_volume_mm3": gauge * tile as f64,
        "fields": entries,
    });
    write_json(&out.join(format!("{}_manifest.json", args.prefix)), &manifest)
}

fn input_hash(config: &RunConfig, field_bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update(field_bytes);
    h.update(serde_json::to_string(&config.material).unwrap_or_default().as_bytes());
    h.update(format!("{:?}|{}|{}", config.load_levels, config.n_cycles, config.samples_per_cycle).as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn criterion(config: &RunConfig, args: &CriterionArgs, out: &Path) -> Result<(), CliError> {
    let options = criterion_options(config);
    let mut failed = 0;
    for path in &args.fields {
        let bytes = std::fs::read(path).map_err(CliError::io(path))?;
        let stem = path.file_stem().map_or("field".into(), |s| s.to_string_lossy().into_owned());
        let table_path = out.join(format!("{stem}.criterion.csv"));
        let hash_path = out.join(format!("{stem}.criterion.sha256"));
        let hash = input_hash(config, &bytes);
        if table_path.exists() && std::fs::read_to_string(&hash_path).is_ok_and(|h| h.trim() == hash) {
            eprintln!("{}: up to date", table_path.display());
            continue;
        }
        let field = ElasticElementField::read(bytes.as_slice()).map_err(CliError::core(path.display().to_string()))?;
        let (table, failures) = criterion_table_lenient(&field, &config.material, &config.load_levels, &options)
            .map_err(CliError::core(path.display().to_string()))?;
        for f in &failures {
            eprintln!("{}: element {}: {}", path.display(), f.id, f.error);
        }
        failed += failures.len();
        table.save(&table_path).map_err(CliError::core(table_path.display().to_string()))?;
        if failures.is_empty() {
            std::fs::write(&hash_path, format!("{hash}\n")).map_err(CliError::io(&hash_path))?;
        } else if hash_path.exists() {
            std::fs::remove_file(&hash_path).map_err(CliError::io(&hash_path))?;
        }
    }
    if failed > 0 {
        return Err(CliError::PartialFailure(failed));
    }
    Ok(())
}

pub fn calibrate(config: &RunConfig, args: &CalibrateArgs, out: &Path) -> Result<(), CliError> {
    let mask = config.calibration.free_mask()?;
    let volume = args.volume.unwrap_or_else(|| config.pores.gauge_volume());
    let e = config.material.youngs_modulus;
    let v0 = config.fatigue.map_or(porelife::strain_life::DEFAULT_REFERENCE_VOLUME, |f| f.v0);
    let obs = observations(args.observations.as_ref().or(config.paths.observations.as_ref()), "observation")?;
    let table_paths = pick(&args.tables, &config.paths.tables);
    let homogeneous = SpecimenModel::Homogeneous {
        volume,
        youngs_modulus: e,
    };
    let mut guess_data = obs.clone();
    let mut prepared = Vec::new();
    match args.mode {
        Mode::Homogeneous => {
            prepared.push(PreparedLikelihood::new(&obs, &homogeneous).map_err(CliError::core("homogeneous model"))?);
        }
        Mode::Heterogeneous => {
            let tables = load_tables(table_paths)?;
            if tables.len() != 1 && tables.len() != obs.len() {
                return Err(CliError::Validation(format!(
                    "heterogeneous mode needs one table or one per observation; got {} tables for {} observations",
                    tables.len(),
                    obs.len()
                )));
            }
            prepared.push(
                PreparedLikelihood::new(&obs, &SpecimenModel::Heterogeneous { tables })
                    .map_err(CliError::core("heterogeneous model"))?,
            );
        }
        Mode::UnknownPores | Mode::Joint => {
            let pool = load_tables(table_paths)?;
            if pool.is_empty() {
                return Err(CliError::Validation("unknown-pores mode needs criterion tables".into()));
            }
            let model = if pool.len() == config.n_k {
                SpecimenModel::unknown_pores_shared(pool, obs.len())
            } else {
                SpecimenModel::unknown_pores_sampled(pool, obs.len(), config.n_k, config.seed)
                    .map_err(|e| CliError::Validation(e.to_string()))?
            };
            prepared.push(PreparedLikelihood::new(&obs, &model).map_err(CliError::core("unknown-pores model"))?);
            if args.mode == Mode::Joint {
                let reference = observations(
                    args.reference_observations.as_ref().or(config.paths.reference_observations.as_ref()),
                    "reference observation",
                )?;
                let reduced = one_per_level(&reference, config.seed);
                prepared.push(PreparedLikelihood::new(&reduced, &homogeneous).map_err(CliError::core("homogeneous term"))?);
                guess_data = reference;
            }
        }
    }
    if prepared.iter().all(|p| p.n_failures() == 0) {
        eprintln!("warning: no failures in the data; the likelihood grows without bound toward infinite life");
        return Err(CliError::Core {
            context: "calibration".into(),
            source: porelife::Error::Degenerate("all observations are run-outs".into()),
        });
    }
    let initial = match config.fatigue {
        Some(p) => p,
        None => initial_guess(&guess_data, volume, e, v0).map_err(CliError::core("initial guess"))?,
    };
    let mut problem = CalibrationProblem::new(prepared.iter().collect(), mask, initial);
    problem.budget = config.calibration.budget;
    problem.starts = config.calibration.starts;
    problem.seed = config.seed;
    let fit = run_calibrate(&problem).map_err(CliError::core("calibration"))?;

    let trace_path = out.join("trace.csv");
    let mut w = create(&trace_path)?;
    fit.write_trace_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(CliError::io(&trace_path))?;
    let starts: Vec<_> = fit
        .starts
        .iter()
        .map(|s| {
            json!({
                "initial": s.initial,
                "params": s.params,
                "log_likelihood": s.log_likelihood,
                "iterations": s.iterations,
                "converged": s.converged,
            })
        })
        .collect();
    let free: Vec<&str> = PARAMETER_NAMES.iter().zip(mask).filter(|(_, f)| *f).map(|(n, _)| *n).collect();
    let report = json!({
        "mode": format!("{:?}", args.mode),
        "free": free,
        "params": fit.params,
        "log_likelihood": fit.log_likelihood,
        "n_observations": prepared.iter().map(|p| p.n_observations()).sum::<usize>(),
        "n_failures": prepared.iter().map(|p| p.n_failures()).sum::<usize>(),
        "best_start": fit.best_start,
        "starts": starts,
    });
    write_json(&out.join("fit.json"), &report)
}

pub fn wohler(config: &RunConfig, args: &WohlerArgs, out: &Path) -> Result<(), CliError> {
    let params = strain_life(config, args.params.as_ref())?;
    let paths = pick(&args.tables, &config.paths.tables);
    if paths.is_empty() {
        return Err(CliError::Validation("no criterion tables given".into()));
    }
    let tables = load_tables(paths)?;
    let options = SamplingOptions {
        samples_per_structure: config.samples_per_structure,
        seed: config.seed,
        run_out: config.n_max,
    };
    let table = predict_wohler(&params, &tables, &config.load_levels, &config.quantiles, &options)
        .map_err(CliError::core("wohler prediction"))?;
    let path = out.join("wohler.csv");
    let mut w = create(&path)?;
    table.write_csv(&mut w).and_then(|_| w.flush()).map_err(CliError::io(&path))
}

fn synthesized_tables(config: &RunConfig, seeds: std::ops::Range<u64>, notched: bool) -> Result<(Vec<CriterionTable>, Option<CriterionTable>), CliError> {
    let options = criterion_options(config);
    let mut tables = Vec::new();
    let mut free = None;
    for seed in seeds {
        let field = if notched {
            let (s, f) = notched_field(&config.pores, &config.notch, config.shells, seed).map_err(CliError::core("notched field"))?;
            if free.is_none() {
                free = Some(criterion_table(&f, &config.material, &config.load_levels, &options).map_err(CliError::core("pore-free notched table"))?);
            }
            s.field
        } else {
            synth_field(&config.pores, config.shells, seed).map_err(CliError::core("pore field"))?.field
        };
        let table = criterion_table(&field, &config.material, &config.load_levels, &options)
            .map_err(CliError::core(format!("criterion table of seed {seed}")))?;
        tables.push(table.compact());
    }
    Ok((tables, free))
}

pub fn homogenize(config: &RunConfig, args: &HomogenizeArgs, out: &Path) -> Result<(), CliError> {
    let params = strain_life(config, args.params.as_ref())?;
    let n = config.n_k as u64;
    let cylinder = match pick(&args.cylinder, &config.paths.tables) {
        [] => synthesized_tables(config, config.seed..config.seed + n, false)?.0,
        paths => load_tables(paths)?,
    };
    let (challenge, generated_free) = match pick(&args.challenge, &config.paths.challenge_tables) {
        [] => synthesized_tables(config, config.seed + n..config.seed + 2 * n, true)?,
        paths => (load_tables(paths)?, None),
    };
    let challenge_free = match args.challenge_homogeneous.as_ref().or(config.paths.challenge_homogeneous.as_ref()) {
        Some(p) => load_table(p)?,
        None => match generated_free {
            Some(t) => t,
            None => return Err(CliError::Validation("challenge tables given without --challenge-homogeneous".into())),
        },
    };
    let mut setup = HomogenizationSetup::new(params, &cylinder, &challenge, &challenge_free, config.material.youngs_modulus);
    setup.cylinder_volume = config.pores.gauge_volume();
    setup.levels = config.load_levels.clone();
    setup.samples_per_level = args.samples;
    setup.free_mask = config.calibration.free_mask()?;
    setup.budget = config.calibration.budget;
    setup.starts = config.calibration.starts;
    setup.seed = config.seed;
    setup.run_out = config.n_max;
    let report = run_homogenize(&setup).map_err(CliError::core("homogenization"))?;
    write_json(
        &out.join("homogenize.json"),
        &json!({
            "multiscale_params": params,
            "cylinder_fields": cylinder.len(),
            "challenge_fields": challenge.len(),
            "report": report,
        }),
    )
}
