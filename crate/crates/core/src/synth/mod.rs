//! Synthetic cohorts: skin-like spectral cubes, annotations, clinical tables
//! and labels with planted class effects and a ground-truth manifest.
//!
//! Cubes are never held for the whole cohort. Each image is regenerated on
//! demand from its patient sub-seed, so a cohort of any size costs one cube
//! of memory per worker thread.

mod clinical;
mod spectra;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clinical::{
    default_dictionary, write_clinical_csv, write_labels_csv, Cohort, ParameterDictionary, PatientRecord, SepsisLabel,
    SurvivalLabel, Task,
};
use crate::cube::{calibrate, save_annotations, save_cube, RegionAnnotation, Site, SpectralCube};
use crate::error::{Error, Result};
use crate::eval::{FeatureTable, OUTER_FOLDS};
use crate::index::{extract_feature_vector, FeatureConfig, STO2, THI, TWI};
use crate::seed;
use spectra::{Noise, PatientSpectrum};

pub const SYNTH_MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Lower,
    Higher,
}

/// Absorbance added to every channel inside `band_nm` for positive patients
/// of `task`. `index` and `direction` record the expected downstream effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandShift {
    pub band_nm: [f64; 2],
    pub delta: f64,
    pub task: Task,
    pub index: String,
    pub direction: Direction,
}

/// Shift of a clinical parameter for positive patients of `task`, in
/// population standard deviations. For drug doses it also raises the chance
/// of the drug being given, for flags the chance of being set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalShift {
    pub parameter: String,
    pub task: Task,
    pub shift_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub sepsis_prevalence: f64,
    pub mortality_prevalence: f64,
    pub width: usize,
    pub height: usize,
    pub sites: Vec<Site>,
    pub band_shifts: Vec<BandShift>,
    pub clinical_shifts: Vec<ClinicalShift>,
    /// Probability of each clinical cell being empty.
    pub missingness: f64,
    /// Relative between-patient spread of the absorption features.
    pub patient_variability: f64,
    pub texture_noise: f64,
    pub pixel_noise: f64,
    pub read_noise_counts: f64,
}

/// Absorbance shift used by [`SynthConfig::default`].
pub const DEFAULT_DELTA: f64 = 0.02;

/// Oxygenation, haemoglobin and water bands shifted in the positive class.
pub fn planted_band_shifts(delta: f64, task: Task) -> Vec<BandShift> {
    let shift = |band_nm: [f64; 2], index: &str, direction| BandShift {
        band_nm,
        delta,
        task,
        index: index.into(),
        direction,
    };
    vec![
        shift([750.0, 775.0], STO2, Direction::Lower),
        shift([530.0, 590.0], THI, Direction::Higher),
        shift([880.0, 900.0], TWI, Direction::Higher),
    ]
}

fn default_clinical_shifts() -> Vec<ClinicalShift> {
    let s = |parameter: &str, task, shift_sd| ClinicalShift {
        parameter: parameter.into(),
        task,
        shift_sd,
    };
    vec![
        s("crp", Task::Sepsis, 1.0),
        s("pct", Task::Sepsis, 1.0),
        s("lactate", Task::Sepsis, 0.6),
        s("temperature", Task::Sepsis, 0.5),
        s("heart_rate", Task::Sepsis, 0.5),
        s("noradrenaline", Task::Sepsis, 0.5),
        s("lactate", Task::Mortality, 1.0),
        s("noradrenaline", Task::Mortality, 0.8),
        s("ph", Task::Mortality, -0.8),
        s("gcs", Task::Mortality, -0.6),
        s("age", Task::Mortality, 0.5),
    ]
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 160,
            sepsis_prevalence: 0.30,
            mortality_prevalence: 0.14,
            width: 640,
            height: 480,
            sites: vec![Site::Palm, Site::Finger],
            band_shifts: planted_band_shifts(DEFAULT_DELTA, Task::Sepsis),
            clinical_shifts: default_clinical_shifts(),
            missingness: 0.016,
            patient_variability: 0.10,
            texture_noise: 0.03,
            pixel_noise: 0.01,
            read_noise_counts: 3.0,
        }
    }
}

impl SynthConfig {
    /// 64x64 images, for fast runs.
    pub fn small(n_patients: usize) -> Self {
        SynthConfig {
            n_patients,
            width: 64,
            height: 64,
            ..Default::default()
        }
    }

    /// Sets every band shift to `delta`.
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.band_shifts.iter_mut().for_each(|s| s.delta = delta);
        self
    }

    /// Removes every planted image and clinical effect.
    pub fn without_effects(mut self) -> Self {
        self.band_shifts.iter_mut().for_each(|s| s.delta = 0.0);
        self.clinical_shifts.iter_mut().for_each(|s| s.shift_sd = 0.0);
        self
    }

    pub fn n_positive(&self, task: Task) -> usize {
        let p = match task {
            Task::Sepsis => self.sepsis_prevalence,
            Task::Mortality => self.mortality_prevalence,
        };
        (self.n_patients as f64 * p).round() as usize
    }

    pub fn validate(&self, dictionary: &ParameterDictionary) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, p) in [
            ("sepsis_prevalence", self.sepsis_prevalence),
            ("mortality_prevalence", self.mortality_prevalence),
        ] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {p}"));
            }
        }
        for task in Task::ALL {
            let pos = self.n_positive(*task);
            let neg = self.n_patients - pos.min(self.n_patients);
            if pos < OUTER_FOLDS || neg < OUTER_FOLDS {
                return bad(format!(
                    "{} patients give {pos} positive and {neg} negative for {task}; \
                     each class needs at least {OUTER_FOLDS} for cross-validation",
                    self.n_patients
                ));
            }
        }
        if self.width == 0 || self.height == 0 {
            return bad(format!("image size {}x{} must be positive", self.width, self.height));
        }
        if self.sites.is_empty() {
            return bad("at least one site is needed".into());
        }
        let mut sites = self.sites.clone();
        sites.sort();
        sites.dedup();
        if sites.len() != self.sites.len() {
            return bad("sites must be distinct".into());
        }
        if !(0.0..1.0).contains(&self.missingness) {
            return bad(format!("missingness must lie in [0, 1), got {}", self.missingness));
        }
        for (name, v) in [
            ("patient_variability", self.patient_variability),
            ("texture_noise", self.texture_noise),
            ("pixel_noise", self.pixel_noise),
            ("read_noise_counts", self.read_noise_counts),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        for s in &self.band_shifts {
            if !(s.delta.is_finite() && s.delta >= 0.0) {
                return bad(format!(
                    "band shift for {} must be finite and non-negative, got {}",
                    s.index, s.delta
                ));
            }
            if s.band_nm[0].is_nan() || s.band_nm[1].is_nan() || s.band_nm[0] > s.band_nm[1] {
                return bad(format!("band {:?} for {} is reversed", s.band_nm, s.index));
            }
        }
        for s in &self.clinical_shifts {
            if dictionary.get(&s.parameter).is_none() {
                return bad(format!("clinical shift names unknown parameter `{}`", s.parameter));
            }
            if !s.shift_sd.is_finite() {
                return bad(format!("clinical shift for `{}` is not finite", s.parameter));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPatient {
    pub patient_id: String,
    pub sepsis: bool,
    pub died: bool,
}

/// A generated cohort. Cubes come from [`raw_cube`](Self::raw_cube).
#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub config: SynthConfig,
    pub seed: u64,
    pub patients: Vec<SynthPatient>,
    pub white: SpectralCube,
    pub dark: SpectralCube,
    pub annotations: Vec<RegionAnnotation>,
    pub clinical: Cohort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthImage {
    pub image_id: String,
    pub patient_id: String,
    pub site: Site,
    pub path: String,
}

/// Ground truth written next to a generated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub format_version: u32,
    pub seed: u64,
    pub config: SynthConfig,
    pub n_patients: usize,
    pub n_sepsis: usize,
    pub n_died: usize,
    pub missing_fraction: f64,
    pub white_reference: String,
    pub dark_reference: String,
    pub annotations: String,
    pub clinical: String,
    pub labels: String,
    pub images: Vec<SynthImage>,
}

pub fn image_id(patient_id: &str, site: Site) -> String {
    format!("{patient_id}_{}", site.as_str())
}

fn site_stream(site: Site) -> u64 {
    match site {
        Site::Palm => 2,
        Site::Finger => 3,
    }
}

const LABEL_STREAM_SEPSIS: u64 = 0;
const LABEL_STREAM_MORTALITY: u64 = 1;
const REFERENCE_STREAM: u64 = 2;
const PATIENT_STREAM: u64 = 3;

fn assign_positive(n: usize, k: usize, seed: u64, stream: u64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, stream));
    let mut out = vec![false; n];
    for &i in &order[..k] {
        out[i] = true;
    }
    out
}

pub fn generate(config: &SynthConfig, seed: u64) -> Result<SynthCohort> {
    generate_with_dictionary(config, &default_dictionary(), seed)
}

pub fn generate_with_dictionary(
    config: &SynthConfig,
    dictionary: &ParameterDictionary,
    seed: u64,
) -> Result<SynthCohort> {
    config.validate(dictionary)?;
    let n = config.n_patients;
    let sepsis = assign_positive(n, config.n_positive(Task::Sepsis), seed, LABEL_STREAM_SEPSIS);
    let died = assign_positive(n, config.n_positive(Task::Mortality), seed, LABEL_STREAM_MORTALITY);
    let patients: Vec<SynthPatient> = (0..n)
        .map(|i| SynthPatient {
            patient_id: format!("P{:04}", i + 1),
            sepsis: sepsis[i],
            died: died[i],
        })
        .collect();
    let (white, dark) = spectra::references(config.width, config.height, &mut seed::rng(seed, REFERENCE_STREAM))?;
    let annotations = patients
        .iter()
        .flat_map(|p| {
            config.sites.iter().map(|&site| {
                RegionAnnotation::with_default_radius(
                    image_id(&p.patient_id, site),
                    site,
                    (config.width / 2) as u32,
                    (config.height / 2) as u32,
                )
            })
        })
        .collect();
    let records = patients
        .par_iter()
        .enumerate()
        .map(|(i, p)| clinical_record(config, dictionary, seed, i, p))
        .collect();
    Ok(SynthCohort {
        config: config.clone(),
        seed,
        patients,
        white,
        dark,
        annotations,
        clinical: Cohort {
            dictionary: dictionary.clone(),
            records,
        },
    })
}

fn patient_seed(seed: u64, i: usize) -> u64 {
    seed::derive(seed::derive(seed, PATIENT_STREAM), i as u64)
}

fn clinical_record(
    config: &SynthConfig,
    dictionary: &ParameterDictionary,
    seed: u64,
    i: usize,
    p: &SynthPatient,
) -> PatientRecord {
    let mut rng = seed::rng(patient_seed(seed, i), 1);
    let values = dictionary
        .parameters()
        .iter()
        .map(|d| {
            let shift = clinical::total_shift(&config.clinical_shifts, &d.name, p.sepsis, p.died);
            let v = clinical::draw_value(d, shift, &mut rng);
            let missing = rand::Rng::random::<f64>(&mut rng) < config.missingness;
            (!missing).then_some(v)
        })
        .collect();
    PatientRecord {
        patient_id: p.patient_id.clone(),
        sepsis_label: if p.sepsis {
            SepsisLabel::Sepsis
        } else {
            SepsisLabel::NoSepsis
        },
        survival_label: if p.died {
            SurvivalLabel::Died
        } else {
            SurvivalLabel::Survived
        },
        values,
    }
}

impl SynthCohort {
    pub fn patient_ids(&self) -> Vec<String> {
        self.patients.iter().map(|p| p.patient_id.clone()).collect()
    }

    pub fn labels(&self, task: Task) -> Vec<bool> {
        self.patients
            .iter()
            .map(|p| match task {
                Task::Sepsis => p.sepsis,
                Task::Mortality => p.died,
            })
            .collect()
    }

    fn spectrum(&self, patient: usize) -> PatientSpectrum {
        let p = &self.patients[patient];
        let shifts: Vec<&BandShift> = self
            .config
            .band_shifts
            .iter()
            .filter(|s| match s.task {
                Task::Sepsis => p.sepsis,
                Task::Mortality => p.died,
            })
            .collect();
        PatientSpectrum::draw(
            &mut seed::rng(patient_seed(self.seed, patient), 0),
            self.config.patient_variability,
            &shifts,
        )
    }

    /// Raw-count cube of one patient at one site.
    pub fn raw_cube(&self, patient: usize, site: Site) -> Result<SpectralCube> {
        if patient >= self.patients.len() {
            return Err(Error::Data(format!("patient index {patient} out of range")));
        }
        if !self.config.sites.contains(&site) {
            return Err(Error::Config(format!("cohort has no {} images", site.as_str())));
        }
        let noise = Noise {
            texture: self.config.texture_noise,
            pixel: self.config.pixel_noise,
            read: self.config.read_noise_counts,
        };
        spectra::raw_cube(
            &self.spectrum(patient),
            site,
            &self.white,
            &self.dark,
            &noise,
            &mut seed::rng(patient_seed(self.seed, patient), site_stream(site)),
        )
    }

    pub fn annotation(&self, patient: usize, site: Site) -> Option<&RegionAnnotation> {
        let id = image_id(&self.patients.get(patient)?.patient_id, site);
        self.annotations.iter().find(|a| a.image_id == id)
    }

    /// Features of every patient at `site`, computed in memory.
    pub fn feature_table(&self, site: Site, config: &FeatureConfig) -> Result<FeatureTable> {
        let vectors: Vec<_> = (0..self.patients.len())
            .into_par_iter()
            .map(|i| {
                let reflectance = calibrate(&self.raw_cube(i, site)?, &self.white, &self.dark)?;
                let roi = self
                    .annotation(i, site)
                    .ok_or_else(|| Error::Annotation(format!("no {} annotation for patient {i}", site.as_str())))?;
                extract_feature_vector(&reflectance, roi, config)
            })
            .collect::<Result<_>>()?;
        let names = vectors.first().map(|v| v.names.clone()).unwrap_or_default();
        let rows: Vec<Vec<f64>> = vectors.into_iter().map(|v| v.values).collect();
        FeatureTable::from_rows(self.patient_ids(), names, &rows)
    }

    /// Writes `cubes/`, `refs/`, `annotations.json`, `clinical.csv`,
    /// `labels.csv` and `synth_manifest.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<SynthManifest> {
        let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
        mkdir(&dir.join("cubes"))?;
        mkdir(&dir.join("refs"))?;
        save_cube(&self.white, dir.join("refs/white.speccube"))?;
        save_cube(&self.dark, dir.join("refs/dark.speccube"))?;
        let images: Vec<(usize, Site)> = (0..self.patients.len())
            .flat_map(|i| self.config.sites.iter().map(move |&s| (i, s)))
            .collect();
        let written: Vec<SynthImage> = images
            .par_iter()
            .map(|&(i, site)| {
                let patient_id = self.patients[i].patient_id.clone();
                let id = image_id(&patient_id, site);
                let rel = format!("cubes/{id}.speccube");
                save_cube(&self.raw_cube(i, site)?, dir.join(&rel))?;
                Ok(SynthImage {
                    image_id: id,
                    patient_id,
                    site,
                    path: rel,
                })
            })
            .collect::<Result<_>>()?;
        save_annotations(&self.annotations, dir.join("annotations.json"))?;
        let create = |name: &str| {
            let p: PathBuf = dir.join(name);
            std::fs::File::create(&p)
                .map(std::io::BufWriter::new)
                .map_err(|e| Error::io(&p, e))
        };
        write_clinical_csv(&self.clinical, create("clinical.csv")?)?;
        write_labels_csv(&self.clinical, create("labels.csv")?)?;
        let manifest = SynthManifest {
            format_version: SYNTH_MANIFEST_VERSION,
            seed: self.seed,
            config: self.config.clone(),
            n_patients: self.patients.len(),
            n_sepsis: self.patients.iter().filter(|p| p.sepsis).count(),
            n_died: self.patients.iter().filter(|p| p.died).count(),
            missing_fraction: self.clinical.missing_fraction(),
            white_reference: "refs/white.speccube".into(),
            dark_reference: "refs/dark.speccube".into(),
            annotations: "annotations.json".into(),
            clinical: "clinical.csv".into(),
            labels: "labels.csv".into(),
            images: written,
        };
        let path = dir.join(SYNTH_MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

pub const SYNTH_MANIFEST_FILE: &str = "synth_manifest.json";

pub fn load_synth_manifest(path: &Path) -> Result<SynthManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clinical::ingest_csv;
    use crate::cube::{load_annotations, load_cube, CalibrationState};
    use crate::stats::mean;

    fn tiny(n: usize) -> SynthConfig {
        SynthConfig {
            width: 16,
            height: 12,
            ..SynthConfig::small(n)
        }
    }

    #[test]
    fn labels_follow_prevalence() {
        let c = generate(&tiny(100), 3).unwrap();
        assert_eq!(c.labels(Task::Sepsis).iter().filter(|&&l| l).count(), 30);
        assert_eq!(c.labels(Task::Mortality).iter().filter(|&&l| l).count(), 14);
        assert_eq!(c.annotations.len(), 200);
        let palm = c.annotation(0, Site::Palm).unwrap();
        assert_eq!((palm.radius, palm.center_x, palm.center_y), (100, 8, 6));
        assert_eq!(c.annotation(0, Site::Finger).unwrap().radius, 20);
    }

    #[test]
    fn impossible_configs_are_rejected() {
        assert!(generate(&tiny(20), 0).is_err());
        for cfg in [
            SynthConfig {
                sepsis_prevalence: 1.0,
                ..tiny(100)
            },
            SynthConfig {
                missingness: 1.0,
                ..tiny(100)
            },
            tiny(100).with_delta(-0.1),
            SynthConfig {
                sites: vec![Site::Palm, Site::Palm],
                ..tiny(100)
            },
            SynthConfig { width: 0, ..tiny(100) },
        ] {
            assert!(matches!(generate(&cfg, 0), Err(Error::Config(_))), "{cfg:?}");
        }
        let mut cfg = tiny(100);
        cfg.clinical_shifts[0].parameter = "nope".into();
        assert!(generate(&cfg, 0).is_err());
    }

    #[test]
    fn cubes_are_deterministic_and_calibrate_in_range() {
        let c = generate(&tiny(50), 9).unwrap();
        let a = c.raw_cube(4, Site::Finger).unwrap();
        assert_eq!(a, generate(&tiny(50), 9).unwrap().raw_cube(4, Site::Finger).unwrap());
        assert_ne!(a, c.raw_cube(4, Site::Palm).unwrap());
        let r = calibrate(&a, &c.white, &c.dark).unwrap();
        assert_eq!(r.state(), CalibrationState::Reflectance);
        assert!(r.values().iter().all(|&v| v > 0.02 && v < 1.0));
    }

    #[test]
    fn planted_directions_are_recovered() {
        let c = generate(
            &SynthConfig {
                n_patients: 60,
                ..tiny(60)
            }
            .with_delta(0.15),
            5,
        )
        .unwrap();
        let t = c.feature_table(Site::Palm, &FeatureConfig::default()).unwrap();
        let labels = c.labels(Task::Sepsis);
        for s in &c.config.band_shifts {
            let j = t.names.iter().position(|n| *n == s.index).unwrap();
            let group = |want: bool| -> Vec<f64> {
                (0..t.len())
                    .filter(|&i| labels[i] == want)
                    .map(|i| t.matrix.get(i, j))
                    .collect()
            };
            let diff = mean(&group(true)) - mean(&group(false));
            match s.direction {
                Direction::Lower => assert!(diff < 0.0, "{} {diff}", s.index),
                Direction::Higher => assert!(diff > 0.0, "{} {diff}", s.index),
            }
        }
        for row in t.matrix.rows() {
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn written_files_pass_ingestion_and_repeat_bit_for_bit() {
        let cfg = tiny(50);
        let c = generate(&cfg, 11).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m = c.write(a.path()).unwrap();
        generate(&cfg, 11).unwrap().write(b.path()).unwrap();
        assert_eq!(m.images.len(), 100);
        for name in [
            "synth_manifest.json",
            "clinical.csv",
            "labels.csv",
            "annotations.json",
            "refs/white.speccube",
        ] {
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap(),
                "{name}"
            );
        }
        for img in &m.images {
            assert_eq!(
                std::fs::read(a.path().join(&img.path)).unwrap(),
                std::fs::read(b.path().join(&img.path)).unwrap()
            );
        }
        let (cohort, _warnings) = ingest_csv(
            &default_dictionary(),
            &a.path().join("clinical.csv"),
            &a.path().join("labels.csv"),
        )
        .unwrap();
        assert_eq!(cohort, c.clinical);
        let miss = cohort.missing_fraction();
        assert!(miss > 0.0 && miss < 0.05, "{miss}");
        let cube = load_cube(a.path().join(&m.images[0].path)).unwrap();
        assert_eq!(cube, c.raw_cube(0, m.images[0].site).unwrap());
        assert_eq!(
            load_annotations(a.path().join("annotations.json")).unwrap(),
            c.annotations
        );
        assert_eq!(load_synth_manifest(&a.path().join(SYNTH_MANIFEST_FILE)).unwrap(), m);
    }

    #[test]
    fn clinical_shift_moves_the_group_mean() {
        let mut cfg = tiny(200).without_effects();
        cfg.clinical_shifts = vec![ClinicalShift {
            parameter: "lactate".into(),
            task: Task::Sepsis,
            shift_sd: 2.0,
        }];
        cfg.missingness = 0.0;
        let c = generate(&cfg, 2).unwrap();
        let j = c.clinical.dictionary.position("lactate").unwrap();
        let group = |want: bool| -> Vec<f64> {
            c.clinical
                .records
                .iter()
                .zip(&c.patients)
                .filter(|(_, p)| p.sepsis == want)
                .map(|(r, _)| r.values[j].unwrap())
                .collect()
        };
        assert!(mean(&group(true)) - mean(&group(false)) > 1.5);
    }
}
