use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use spectrasep::clinical::{
    descriptive_stats, ingest_csv, load_labels, Cohort, SepsisLabel, SurvivalLabel, Task, Tier,
};
use spectrasep::cube::{
    apply_roi, calibrate, l1_normalize, load_annotations, load_cube, rescale, save_cube, CalibrationState,
    RegionAnnotation, SpectralCube,
};
use spectrasep::eval::{
    ensemble, evaluate_forest, evaluate_predictions, evaluate_values, load_predictions, make_nested_splits,
    rfe_per_outer_fold, save_predictions, sequential_feature_experiment, write_report_files, EvaluationReport,
    FeatureTable, SplitPlan,
};
use spectrasep::forest::{fit, RfeRanking};
use spectrasep::index::{extract_feature_vector, feature_dictionary, FeatureConfig, FUNCTIONAL_INDICES};
use spectrasep::manifest::{ManifestBuilder, RUN_MANIFEST_FILE};
use spectrasep::scores::{
    evaluate_cohort, load_score_table, named_results, vis_results, write_scores_csv, MissingPolicy, ScoreResult,
};
use spectrasep::stats::boxplot_stats;
use spectrasep::synth::{generate_with_dictionary, SynthConfig};
use spectrasep::workflow::{clinical_feature_table, image_feature_table, table_group_tests, task_labels};
use spectrasep::{seed, Error};

use crate::config::RunConfig;
use crate::{Cli, CohortArgs, Command, GlobalArgs, ImageArgs, SingleCubeArgs, TaskArg};

/// A command line that parsed but cannot be acted on.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    Usage(message.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return if err.is_validation() { 2 } else { 3 };
        }
    }
    3
}

/// Per-run state: resolved configuration, output directory and the manifest
/// being collected.
struct Run {
    config: RunConfig,
    out: PathBuf,
    seed: u64,
    manifest: ManifestBuilder,
}

impl Run {
    fn new(global: &GlobalArgs, command: &str, args: Vec<String>) -> Result<Run> {
        let config = RunConfig::load(global.config.as_deref())?;
        std::fs::create_dir_all(&global.out).map_err(|e| Error::Io {
            path: global.out.clone(),
            source: e,
        })?;
        let mut manifest = ManifestBuilder::new(command, args, global.seed, global.jobs, &config)?;
        if let Some(p) = &global.config {
            manifest.input(p)?;
        }
        for p in config.referenced_files() {
            manifest.input(p)?;
        }
        Ok(Run {
            config,
            out: global.out.clone(),
            seed: global.seed,
            manifest,
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.input(path)?;
        Ok(())
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn wrote(&mut self, name: &str) -> Result<()> {
        let p = self.out_path(name);
        self.manifest.output(&p)?;
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.out_path(name);
        std::fs::write(&p, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
        self.wrote(name)
    }

    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> spectrasep::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        let p = self.out_path(name);
        std::fs::write(&p, buf).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
        self.wrote(name)
    }

    fn reports(&mut self, reports: &[EvaluationReport]) -> Result<()> {
        write_report_files(reports, &self.out)?;
        for name in ["report.json", "roc.csv", "boxplot.csv"] {
            self.wrote(name)?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let path = self.out.join(RUN_MANIFEST_FILE);
        self.manifest.finish().save(&path)?;
        Ok(())
    }
}

pub fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let name = command_name(&cli.command);
    let mut run = Run::new(&cli.global, name, args)?;
    match cli.command {
        Command::Calibrate { raw, white, dark } => calibrate_cmd(&mut run, &raw, &white, &dark)?,
        Command::Preprocess { input, size } => preprocess_cmd(&mut run, &input, size)?,
        Command::Indices { input } => indices_cmd(&mut run, &input)?,
        Command::Features { cohort, images } => features_cmd(&mut run, &cohort, &images)?,
        Command::Scores { cohort, tables, task } => scores_cmd(&mut run, &cohort, &tables, task)?,
        Command::TrainRf { features, labels, task } => train_cmd(&mut run, &features, &labels, task.into())?,
        Command::Rfe {
            cohort,
            features,
            tier,
            task,
        } => rfe_cmd(&mut run, &cohort, features.as_deref(), tier.into(), task.into())?,
        Command::Evaluate {
            task,
            cohort,
            images,
            features,
            predictions,
            splits,
            clinical_tier,
            sequential,
            model,
        } => {
            let opts = EvaluateOptions {
                task: task.into(),
                features,
                predictions,
                splits,
                clinical_tier: clinical_tier.map(Tier::from),
                sequential,
                model,
            };
            evaluate_cmd(&mut run, &cohort, &images, &opts)?
        }
        Command::Stats {
            grouping,
            cohort,
            images,
            features,
        } => stats_cmd(&mut run, grouping.into(), &cohort, &images, features.as_deref())?,
        Command::Synth {
            n,
            size,
            delta,
            null,
            sites,
            sepsis_prevalence,
            mortality_prevalence,
            missingness,
        } => {
            let (width, height) = parse_size(&size)?;
            let mut cfg = SynthConfig {
                width,
                height,
                sites: sites.into_iter().map(Into::into).collect(),
                ..SynthConfig::small(n)
            };
            if let Some(d) = delta {
                cfg = cfg.with_delta(d);
            }
            if null {
                cfg = cfg.without_effects();
            }
            if let Some(p) = sepsis_prevalence {
                cfg.sepsis_prevalence = p;
            }
            if let Some(p) = mortality_prevalence {
                cfg.mortality_prevalence = p;
            }
            if let Some(m) = missingness {
                cfg.missingness = m;
            }
            synth_cmd(&mut run, &cfg)?
        }
        Command::Report { inputs } => report_cmd(&mut run, &inputs)?,
    }
    run.finish()
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Calibrate { .. } => "calibrate",
        Command::Preprocess { .. } => "preprocess",
        Command::Indices { .. } => "indices",
        Command::Features { .. } => "features",
        Command::Scores { .. } => "scores",
        Command::TrainRf { .. } => "train-rf",
        Command::Rfe { .. } => "rfe",
        Command::Evaluate { .. } => "evaluate",
        Command::Stats { .. } => "stats",
        Command::Synth { .. } => "synth",
        Command::Report { .. } => "report",
    }
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let parsed = s
        .split_once(['x', 'X'])
        .and_then(|(w, h)| Some((w.trim().parse().ok()?, h.trim().parse().ok()?)));
    parsed.ok_or_else(|| usage(format!("--size: `{s}` is not WIDTHxHEIGHT")))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cube".into())
}

// ---- input resolution -------------------------------------------------------

fn clinical_paths(c: &CohortArgs) -> Option<(PathBuf, PathBuf)> {
    let clinical = c
        .clinical
        .clone()
        .or_else(|| c.cohort.as_ref().map(|d| d.join("clinical.csv")))?;
    let labels = labels_path(c)?;
    Some((clinical, labels))
}

fn labels_path(c: &CohortArgs) -> Option<PathBuf> {
    c.labels
        .clone()
        .or_else(|| c.cohort.as_ref().map(|d| d.join("labels.csv")))
}

fn load_cohort(run: &mut Run, c: &CohortArgs) -> Result<Cohort> {
    let (clinical, labels) =
        clinical_paths(c).ok_or_else(|| usage("clinical data needs --cohort or both --clinical and --labels"))?;
    run.input(&clinical)?;
    run.input(&labels)?;
    let (cohort, warnings) = ingest_csv(&run.config.dictionary()?, &clinical, &labels)?;
    if !warnings.is_empty() {
        eprintln!(
            "{} implausible clinical values (see ingest_warnings.json)",
            warnings.len()
        );
        run.write_json("ingest_warnings.json", &warnings)?;
    }
    Ok(cohort)
}

fn load_label_map(run: &mut Run, c: &CohortArgs) -> Result<HashMap<String, (SepsisLabel, SurvivalLabel)>> {
    let path = labels_path(c).ok_or_else(|| usage("labels need --labels or --cohort"))?;
    run.input(&path)?;
    Ok(load_labels(&path)?)
}

fn load_references(
    run: &mut Run,
    white: Option<&Path>,
    dark: Option<&Path>,
) -> Result<Option<(SpectralCube, SpectralCube)>> {
    match (white, dark) {
        (Some(w), Some(d)) => {
            run.input(w)?;
            run.input(d)?;
            Ok(Some((load_cube(w)?, load_cube(d)?)))
        }
        (None, None) => Ok(None),
        _ => Err(usage("--white and --dark must be given together")),
    }
}

fn image_table(run: &mut Run, c: &CohortArgs, images: &ImageArgs, config: &FeatureConfig) -> Result<FeatureTable> {
    let from_cohort = |name: &str| c.cohort.as_ref().map(|d| d.join(name));
    let cubes = images
        .cubes
        .clone()
        .or_else(|| from_cohort("cubes"))
        .ok_or_else(|| usage("image features need --cohort or --cubes and --annotations"))?;
    let annotations = images
        .annotations
        .clone()
        .or_else(|| from_cohort("annotations.json"))
        .ok_or_else(|| usage("image features need --annotations"))?;
    let (white, dark) = match (&images.white, &images.dark) {
        (None, None) => (from_cohort("refs/white.speccube"), from_cohort("refs/dark.speccube")),
        (w, d) => (w.clone(), d.clone()),
    };
    run.input(&annotations)?;
    run.input(&cubes)?;
    let refs = load_references(run, white.as_deref(), dark.as_deref())?;
    let annotations = load_annotations(&annotations)?;
    Ok(image_feature_table(
        &cubes,
        &annotations,
        refs.as_ref().map(|(w, d)| (w, d)),
        images.site.into(),
        config,
    )?)
}

fn find_annotation(annotations: Vec<RegionAnnotation>, id: &str) -> Result<RegionAnnotation> {
    annotations
        .into_iter()
        .find(|a| a.image_id == id)
        .ok_or_else(|| Error::Annotation(format!("no annotation with image_id `{id}`")).into())
}

/// Loads a single cube, calibrating raw counts when references are given.
fn load_calibrated(run: &mut Run, input: &SingleCubeArgs) -> Result<(SpectralCube, RegionAnnotation, String)> {
    run.input(&input.cube)?;
    run.input(&input.annotations)?;
    let cube = load_cube(&input.cube)?;
    let refs = load_references(run, input.white.as_deref(), input.dark.as_deref())?;
    let cube = match (cube.state(), refs) {
        (CalibrationState::RawCounts, Some((w, d))) => calibrate(&cube, &w, &d)?,
        (CalibrationState::RawCounts, None) => {
            return Err(Error::State("cube holds raw counts; pass --white and --dark".into()).into())
        }
        _ => cube,
    };
    let id = input.image_id.clone().unwrap_or_else(|| stem(&input.cube));
    let roi = find_annotation(load_annotations(&input.annotations)?, &id)?;
    Ok((cube, roi, id))
}

// ---- commands ----------------------------------------------------------------

fn calibrate_cmd(run: &mut Run, raw: &Path, white: &Path, dark: &Path) -> Result<()> {
    for p in [raw, white, dark] {
        run.input(p)?;
    }
    run.manifest.step("calibrate");
    let out = calibrate(&load_cube(raw)?, &load_cube(white)?, &load_cube(dark)?)?;
    let name = format!("{}_reflectance.speccube", stem(raw));
    save_cube(&out, run.out_path(&name))?;
    run.wrote(&name)
}

fn preprocess_cmd(run: &mut Run, input: &SingleCubeArgs, size: usize) -> Result<()> {
    if size == 0 {
        return Err(usage("--size must be positive"));
    }
    let (cube, roi, id) = load_calibrated(run, input)?;
    run.manifest.step("preprocess");
    let sample = rescale(&apply_roi(&l1_normalize(&cube)?, &roi)?, size)?;
    let tensor = format!("{id}_tensor.speccube");
    save_cube(&sample.tensor, run.out_path(&tensor))?;
    run.wrote(&tensor)?;
    let mask_values: Vec<f32> = sample.mask.iter().map(|&m| f32::from(u8::from(m))).collect();
    let mask = SpectralCube::new(
        size,
        size,
        1,
        cube.wavelength_start_nm(),
        cube.wavelength_step_nm(),
        CalibrationState::Reflectance,
        mask_values,
    )?;
    let mask_name = format!("{id}_mask.speccube");
    save_cube(&mask, run.out_path(&mask_name))?;
    run.wrote(&mask_name)?;
    run.write_json(&format!("{id}_annotation.json"), &sample.source_annotation)
}

#[derive(Serialize)]
struct IndexValue {
    index: String,
    value: f64,
}

#[derive(Serialize)]
struct IndicesOutput {
    image_id: String,
    site: spectrasep::cube::Site,
    statistic: spectrasep::index::RoiStatistic,
    indices: Vec<IndexValue>,
}

fn indices_cmd(run: &mut Run, input: &SingleCubeArgs) -> Result<()> {
    let (cube, roi, id) = load_calibrated(run, input)?;
    run.manifest.step("indices");
    let config = FeatureConfig {
        include_spectrum: false,
        ..run.config.feature_config()?
    };
    let v = extract_feature_vector(&cube, &roi, &config)?;
    let out = IndicesOutput {
        image_id: id,
        site: roi.site,
        statistic: config.statistic,
        indices: v
            .names
            .iter()
            .zip(&v.values)
            .map(|(n, &value)| IndexValue {
                index: n.clone(),
                value,
            })
            .collect(),
    };
    run.write_json("indices.json", &out)?;
    run.write_json("feature_dictionary.json", &feature_dictionary(&v.names))
}

fn features_cmd(run: &mut Run, cohort: &CohortArgs, images: &ImageArgs) -> Result<()> {
    let config = run.config.feature_config()?;
    run.manifest.step("features");
    let table = image_table(run, cohort, images, &config)?;
    run.write_with("features.csv", |b| table.write_csv(b))?;
    run.write_json("feature_dictionary.json", &feature_dictionary(&table.names))
}

fn scores_cmd(run: &mut Run, cohort_args: &CohortArgs, tables: &[String], task: Option<TaskArg>) -> Result<()> {
    let cohort = load_cohort(run, cohort_args)?;
    run.manifest.step("scores");
    let policy = run.config.missing_policy;
    let mut per_score: Vec<(String, Vec<ScoreResult>)> = Vec::new();
    for name in tables {
        let path = Path::new(name);
        let results = if name.ends_with(".json") {
            run.input(path)?;
            let table = load_score_table(path)?;
            (table.score_name.clone(), evaluate_cohort(&cohort, &table)?)
        } else if name == "vis" {
            let weights = run.config.vis_weights()?;
            (
                name.clone(),
                vis_results(&cohort, &weights, policy == MissingPolicy::SkipRule)?,
            )
        } else {
            (name.clone(), named_results(&cohort, name, policy)?)
        };
        per_score.push(results);
    }
    let all: Vec<ScoreResult> = per_score.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    run.write_with("scores.csv", |b| write_scores_csv(&all, b))?;
    if let Some(task) = task {
        let task: Task = task.into();
        run.manifest.step("score evaluation");
        let labels: HashMap<&str, bool> = cohort
            .records
            .iter()
            .filter_map(|r| task.label(r).map(|l| (r.patient_id.as_str(), l)))
            .collect();
        let mut reports = Vec::new();
        for (name, results) in &per_score {
            let kept: Vec<&ScoreResult> = results
                .iter()
                .filter(|r| r.valid && labels.contains_key(r.patient_id.as_str()))
                .collect();
            let values: Vec<f64> = kept.iter().map(|r| r.value).collect();
            let y: Vec<bool> = kept.iter().map(|r| labels[r.patient_id.as_str()]).collect();
            let ids: Vec<&str> = kept.iter().map(|r| r.patient_id.as_str()).collect();
            let report = evaluate_values(
                &values,
                &y,
                &ids,
                None,
                task,
                name,
                run.config.n_bootstrap,
                report_seed(run.seed),
            )
            .with_context(|| format!("evaluating score `{name}`"))?;
            reports.push(report);
        }
        run.reports(&reports)?;
    }
    Ok(())
}

fn report_seed(seed: u64) -> u64 {
    seed::derive(seed, u64::MAX)
}

fn labelled_table(
    table: &FeatureTable,
    labels: &HashMap<String, (SepsisLabel, SurvivalLabel)>,
    task: Task,
) -> Result<(FeatureTable, Vec<bool>)> {
    let (ids, y) = task_labels(labels, &table.patient_ids, task)?;
    Ok((table.align(&ids)?, y))
}

#[derive(Serialize)]
struct Importance {
    feature: String,
    importance: f64,
}

fn train_cmd(run: &mut Run, features: &Path, labels: &Path, task: Task) -> Result<()> {
    run.input(features)?;
    run.input(labels)?;
    let table = FeatureTable::load(features)?;
    let label_map = load_labels(labels)?;
    let (table, y) = labelled_table(&table, &label_map, task)?;
    run.manifest.step("train");
    let y: Vec<usize> = y.into_iter().map(usize::from).collect();
    let model = fit(&table.matrix, &y, &run.config.forest, run.seed)?;
    let path = run.out_path("model.json");
    std::fs::write(&path, model.to_json()? + "\n").map_err(|e| Error::Io { path, source: e })?;
    run.wrote("model.json")?;
    let importance: Vec<Importance> = table
        .names
        .iter()
        .zip(model.feature_importance().0)
        .map(|(f, importance)| Importance {
            feature: f.clone(),
            importance,
        })
        .collect();
    run.write_json("importance.json", &importance)
}

#[derive(Serialize)]
struct FoldRanking {
    outer_fold: usize,
    /// Most important first.
    ranking: Vec<String>,
    elimination_order: Vec<String>,
}

#[derive(Serialize)]
struct RfeOutput {
    task: Task,
    features: Vec<String>,
    folds: Vec<FoldRanking>,
}

fn rfe_output(task: Task, names: &[String], rankings: &[RfeRanking]) -> RfeOutput {
    let named = |idx: &[usize]| idx.iter().map(|&i| names[i].clone()).collect::<Vec<_>>();
    RfeOutput {
        task,
        features: names.to_vec(),
        folds: rankings
            .iter()
            .enumerate()
            .map(|(o, r)| FoldRanking {
                outer_fold: o,
                ranking: named(&r.top(names.len())),
                elimination_order: named(&r.elimination_order),
            })
            .collect(),
    }
}

fn rfe_cmd(run: &mut Run, cohort: &CohortArgs, features: Option<&Path>, tier: Tier, task: Task) -> Result<()> {
    let table = match features {
        Some(p) => {
            run.input(p)?;
            FeatureTable::load(p)?
        }
        None => clinical_feature_table(&load_cohort(run, cohort)?, tier)?,
    };
    let labels = load_label_map(run, cohort)?;
    let (table, y) = labelled_table(&table, &labels, task)?;
    let plan = make_nested_splits(&table.patient_ids, &y, task, run.seed)?;
    run.manifest.step("rfe");
    let rankings = rfe_per_outer_fold(&plan, &table, &run.config.forest, run.seed)?;
    run.write_with("splits.json", |b| {
        b.extend(plan.to_json()?.bytes());
        b.push(b'\n');
        Ok(())
    })?;
    run.write_json("rfe.json", &rfe_output(task, &table.names, &rankings))
}

struct EvaluateOptions {
    task: Task,
    features: Option<PathBuf>,
    predictions: Option<PathBuf>,
    splits: Option<PathBuf>,
    clinical_tier: Option<Tier>,
    sequential: bool,
    model: Option<String>,
}

fn tier_name(t: Tier) -> &'static str {
    match t {
        Tier::OneHour => "one_hour",
        Tier::TenHour => "ten_hour",
    }
}

fn evaluate_cmd(run: &mut Run, cohort: &CohortArgs, images: &ImageArgs, o: &EvaluateOptions) -> Result<()> {
    if let Some(pred) = &o.predictions {
        if o.features.is_some() || o.clinical_tier.is_some() {
            return Err(usage(
                "--predictions cannot be combined with --features or --clinical-tier",
            ));
        }
        run.input(pred)?;
        let plan = match &o.splits {
            Some(p) => {
                run.input(p)?;
                Some(SplitPlan::load(p)?)
            }
            None => None,
        };
        run.manifest.step("evaluate");
        let ens = ensemble(&load_predictions(pred)?)?;
        let model = o.model.clone().unwrap_or_else(|| stem(pred));
        let report = evaluate_predictions(
            &ens,
            plan.as_ref(),
            o.task,
            &model,
            run.config.n_bootstrap,
            report_seed(run.seed),
        )?;
        return run.reports(&[report]);
    }
    if o.sequential && o.clinical_tier.is_none() {
        return Err(usage("--sequential needs --clinical-tier"));
    }
    run.manifest.step("features");
    let (image, default_model) = match &o.features {
        Some(p) => {
            run.input(p)?;
            (FeatureTable::load(p)?, stem(p))
        }
        None => {
            let config = run.config.feature_config()?;
            let site: spectrasep::cube::Site = images.site.into();
            (
                image_table(run, cohort, images, &config)?,
                format!("hsi_{}", site.as_str()),
            )
        }
    };
    let labels = load_label_map(run, cohort)?;
    let (image, y) = labelled_table(&image, &labels, o.task)?;
    let plan = make_nested_splits(&image.patient_ids, &y, o.task, run.seed)?;
    run.write_with("splits.json", |b| {
        b.extend(plan.to_json()?.bytes());
        b.push(b'\n');
        Ok(())
    })?;
    let pipeline = run.config.pipeline();
    let model = o.model.clone().unwrap_or(default_model);
    let Some(tier) = o.clinical_tier else {
        run.manifest.step("evaluate");
        let (rows, report) = evaluate_forest(&plan, &image, &model, &pipeline, run.seed)?;
        save_predictions(&rows, &run.out_path("predictions.csv"))?;
        run.wrote("predictions.csv")?;
        return run.reports(&[report]);
    };
    let clinical = clinical_feature_table(&load_cohort(run, cohort)?, tier)?.align(&image.patient_ids)?;
    let tier = tier_name(tier);
    run.manifest.step("evaluate");
    if o.sequential {
        let rankings = rfe_per_outer_fold(&plan, &clinical, &pipeline.forest, run.seed)?;
        run.write_json("rfe.json", &rfe_output(o.task, &clinical.names, &rankings))?;
        let mut reports = vec![evaluate_forest(&plan, &image, &model, &pipeline, run.seed)?.1];
        reports.extend(sequential_feature_experiment(
            &plan,
            &image,
            &clinical,
            &rankings,
            &format!("{model}_clinical_{tier}"),
            &pipeline,
            run.seed,
        )?);
        reports.push(evaluate_forest(&plan, &clinical, &format!("clinical_{tier}"), &pipeline, run.seed)?.1);
        run.reports(&reports)
    } else {
        let joined = image.join(&clinical)?;
        let (rows, report) = evaluate_forest(&plan, &joined, &format!("{model}_clinical_{tier}"), &pipeline, run.seed)?;
        save_predictions(&rows, &run.out_path("predictions.csv"))?;
        run.wrote("predictions.csv")?;
        run.reports(&[report])
    }
}

fn stats_cmd(
    run: &mut Run,
    task: Task,
    cohort: &CohortArgs,
    images: &ImageArgs,
    features: Option<&Path>,
) -> Result<()> {
    let table = match features {
        Some(p) => {
            run.input(p)?;
            FeatureTable::load(p)?
        }
        None => {
            let config = FeatureConfig {
                include_spectrum: false,
                ..run.config.feature_config()?
            };
            image_table(run, cohort, images, &config)?
        }
    };
    let cols: Vec<usize> = FUNCTIONAL_INDICES
        .iter()
        .filter_map(|name| table.names.iter().position(|n| n == name))
        .collect();
    if cols.is_empty() {
        return Err(Error::Data(format!("feature table has none of the indices {FUNCTIONAL_INDICES:?}")).into());
    }
    let labels = load_label_map(run, cohort)?;
    let (table, y) = labelled_table(&table.select_columns(&cols), &labels, task)?;
    run.manifest.step("stats");
    let tests = table_group_tests(&table, &y, task)?;
    run.write_json("stats.json", &tests)?;
    let mut rows = Vec::new();
    for (j, name) in table.names.iter().enumerate() {
        for (group, want) in [(task.positive_name(), true), ("other", false)] {
            let values: Vec<f64> = (0..table.len())
                .filter(|&i| y[i] == want)
                .map(|i| table.matrix.get(i, j))
                .collect();
            if values.is_empty() {
                continue;
            }
            let b = boxplot_stats(&values)?;
            rows.push(format!(
                "{name},{group},{},{},{},{},{},{},{},{}",
                values.len(),
                b.whisker_low,
                b.q1,
                b.median,
                b.q3,
                b.whisker_high,
                b.mean,
                b.outliers.len()
            ));
        }
    }
    run.write_with("stats_boxplot.csv", |b| {
        writeln!(b, "index,group,n,whisker_low,q1,median,q3,whisker_high,mean,n_outliers").expect("writing to memory");
        for r in &rows {
            writeln!(b, "{r}").expect("writing to memory");
        }
        Ok(())
    })?;
    if clinical_paths(cohort).is_some_and(|(c, _)| c.exists()) {
        let cohort = load_cohort(run, cohort)?;
        let table = descriptive_stats(&cohort, task)?;
        run.write_with("descriptive.csv", |b| table.write_csv(b))?;
    }
    Ok(())
}

fn synth_cmd(run: &mut Run, cfg: &SynthConfig) -> Result<()> {
    run.manifest.step("generate");
    let dictionary = run.config.dictionary()?;
    let cohort = generate_with_dictionary(cfg, &dictionary, run.seed)?;
    run.manifest.step("write");
    let manifest = cohort.write(&run.out)?;
    for name in ["synth_manifest.json", "clinical.csv", "labels.csv", "annotations.json"] {
        run.wrote(name)?;
    }
    run.wrote("refs")?;
    run.wrote("cubes")?;
    eprintln!(
        "{} patients ({} sepsis, {} died), {} images",
        manifest.n_patients,
        manifest.n_sepsis,
        manifest.n_died,
        manifest.images.len()
    );
    Ok(())
}

fn report_cmd(run: &mut Run, inputs: &[PathBuf]) -> Result<()> {
    let mut reports: Vec<EvaluationReport> = Vec::new();
    for input in inputs {
        let path = if input.is_dir() {
            input.join("report.json")
        } else {
            input.clone()
        };
        run.input(&path)?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
        if value.is_array() {
            reports.extend(serde_json::from_value::<Vec<EvaluationReport>>(value).map_err(Error::from)?);
        } else {
            reports.push(serde_json::from_value(value).map_err(Error::from)?);
        }
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = reports.iter().find(|r| !seen.insert((r.task, r.model.clone()))) {
        return Err(Error::Data(format!("model `{}` appears twice for {}", dup.model, dup.task)).into());
    }
    run.manifest.step("report");
    run.reports(&reports)?;
    run.write_with("summary.csv", |b| {
        writeln!(
            b,
            "task,model,n_patients,n_positive,auroc,auroc_mean,auroc_sd,ci_low,ci_high"
        )
        .expect("writing to memory");
        for r in &reports {
            writeln!(
                b,
                "{},{},{},{},{},{},{},{},{}",
                r.task, r.model, r.n_patients, r.n_positive, r.auroc, r.auroc_mean, r.auroc_sd, r.ci_low, r.ci_high
            )
            .expect("writing to memory");
        }
        Ok(())
    })
}
