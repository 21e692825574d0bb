//! Glue between stored artefacts and the analysis modules: feature tables
//! from cube directories, clinical feature tables per availability tier and
//! label lookup by task.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use crate::clinical::{Cohort, SepsisLabel, SurvivalLabel, Task, Tier};
use crate::cube::{calibrate, load_cube, CalibrationState, RegionAnnotation, Site, SpectralCube};
use crate::error::{Error, Result};
use crate::eval::FeatureTable;
use crate::index::{extract_feature_vector, FeatureConfig};
use crate::stats::{group_tests, GroupTests};

/// Patient id of an image named `{patient}_{site}`; other names are taken
/// to be the patient id itself.
pub fn patient_of(image_id: &str, site: Site) -> &str {
    image_id
        .strip_suffix(site.as_str())
        .and_then(|s| s.strip_suffix('_'))
        .filter(|s| !s.is_empty())
        .unwrap_or(image_id)
}

/// Features of every annotated image at `site`, one row per patient.
///
/// Cubes are read from `{cubes_dir}/{image_id}.speccube`. Raw cubes are
/// calibrated with `references` (white, dark), which is then required.
pub fn image_feature_table(
    cubes_dir: &Path,
    annotations: &[RegionAnnotation],
    references: Option<(&SpectralCube, &SpectralCube)>,
    site: Site,
    config: &FeatureConfig,
) -> Result<FeatureTable> {
    let chosen: Vec<&RegionAnnotation> = annotations.iter().filter(|a| a.site == site).collect();
    if chosen.is_empty() {
        return Err(Error::Annotation(format!("no {} annotations", site.as_str())));
    }
    let ids: Vec<String> = chosen
        .iter()
        .map(|a| patient_of(&a.image_id, site).to_string())
        .collect();
    let mut seen = HashMap::new();
    for (k, id) in ids.iter().enumerate() {
        if let Some(first) = seen.insert(id.as_str(), k) {
            return Err(Error::Annotation(format!(
                "patient `{id}` has two {} annotations (`{}` and `{}`)",
                site.as_str(),
                chosen[first].image_id,
                chosen[k].image_id
            )));
        }
    }
    let vectors: Vec<_> = chosen
        .par_iter()
        .map(|a| {
            let cube = load_cube(cubes_dir.join(format!("{}.speccube", a.image_id)))?;
            let cube = match (cube.state(), references) {
                (CalibrationState::RawCounts, Some((white, dark))) => calibrate(&cube, white, dark)?,
                (CalibrationState::RawCounts, None) => {
                    return Err(Error::State(format!(
                        "`{}` holds raw counts; white and dark references are needed",
                        a.image_id
                    )))
                }
                _ => cube,
            };
            extract_feature_vector(&cube, a, config)
        })
        .collect::<Result<_>>()?;
    let names = vectors[0].names.clone();
    let rows: Vec<Vec<f64>> = vectors.into_iter().map(|v| v.values).collect();
    FeatureTable::from_rows(ids, names, &rows)
}

/// Clinical features available at `tier` (one-hour parameters are also
/// available at ten hours), missing values filled.
pub fn clinical_feature_table(cohort: &Cohort, tier: Tier) -> Result<FeatureTable> {
    let columns = cohort.dictionary.available_at(tier);
    let (names, matrix) = cohort.feature_matrix(&columns)?;
    FeatureTable::new(cohort.patient_ids(), names, matrix)
}

/// Patients with a definite label for `task`, in the given order.
pub fn task_labels(
    labels: &HashMap<String, (SepsisLabel, SurvivalLabel)>,
    patient_ids: &[String],
    task: Task,
) -> Result<(Vec<String>, Vec<bool>)> {
    let mut ids = Vec::new();
    let mut out = Vec::new();
    for id in patient_ids {
        let &(sepsis, survival) = labels
            .get(id)
            .ok_or_else(|| Error::Data(format!("no label for patient `{id}`")))?;
        let label = match task {
            Task::Sepsis => match sepsis {
                SepsisLabel::Sepsis => Some(true),
                SepsisLabel::NoSepsis => Some(false),
                SepsisLabel::Unsure => None,
            },
            Task::Mortality => match survival {
                SurvivalLabel::Died => Some(true),
                SurvivalLabel::Survived => Some(false),
                SurvivalLabel::LostToFollowup => None,
            },
        };
        if let Some(l) = label {
            ids.push(id.clone());
            out.push(l);
        }
    }
    Ok((ids, out))
}

/// Welch tests of every column of `table` between the groups of `task`.
pub fn table_group_tests(table: &FeatureTable, labels: &[bool], task: Task) -> Result<GroupTests> {
    let rows: Vec<Vec<f64>> = table.matrix.rows().map(<[f64]>::to_vec).collect();
    group_tests(task.as_str(), &table.names, &rows, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clinical::default_dictionary;
    use crate::synth::{generate, SynthConfig};

    #[test]
    fn image_ids_map_to_patients() {
        assert_eq!(patient_of("P0001_palm", Site::Palm), "P0001");
        assert_eq!(patient_of("P0001_finger", Site::Palm), "P0001_finger");
        assert_eq!(patient_of("case7", Site::Finger), "case7");
        assert_eq!(patient_of("_palm", Site::Palm), "_palm");
    }

    #[test]
    fn directory_features_match_in_memory_features() {
        let cfg = SynthConfig {
            width: 20,
            height: 16,
            ..SynthConfig::small(40)
        };
        let c = generate(&cfg, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.write(dir.path()).unwrap();
        let fc = FeatureConfig::default();
        let from_disk = image_feature_table(
            &dir.path().join("cubes"),
            &c.annotations,
            Some((&c.white, &c.dark)),
            Site::Finger,
            &fc,
        )
        .unwrap();
        assert_eq!(from_disk, c.feature_table(Site::Finger, &fc).unwrap());
        assert!(matches!(
            image_feature_table(&dir.path().join("cubes"), &c.annotations, None, Site::Palm, &fc),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn clinical_tiers_and_labels() {
        let c = generate(&SynthConfig::small(40), 1).unwrap();
        let one = clinical_feature_table(&c.clinical, Tier::OneHour).unwrap();
        let ten = clinical_feature_table(&c.clinical, Tier::TenHour).unwrap();
        assert_eq!(one.names.len(), default_dictionary().tier_count(Tier::OneHour));
        assert_eq!(ten.names.len(), default_dictionary().len());
        let mut labels: HashMap<String, (SepsisLabel, SurvivalLabel)> = c
            .clinical
            .records
            .iter()
            .map(|r| (r.patient_id.clone(), (r.sepsis_label, r.survival_label)))
            .collect();
        labels.insert("P0001".into(), (SepsisLabel::Unsure, SurvivalLabel::Survived));
        let (ids, y) = task_labels(&labels, &c.patient_ids(), Task::Sepsis).unwrap();
        assert_eq!(ids.len(), 39);
        assert_eq!(y.len(), 39);
        assert!(task_labels(&labels, &["nobody".to_string()], Task::Sepsis).is_err());
    }
}
