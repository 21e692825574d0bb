use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Site {
    Palm,
    Finger,
}

impl Site {
    /// Annotation radius used for this measurement site.
    pub fn default_radius(self) -> u32 {
        match self {
            Site::Palm => 100,
            Site::Finger => 20,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Site::Palm => "palm",
            Site::Finger => "finger",
        }
    }
}

impl std::str::FromStr for Site {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "palm" => Ok(Site::Palm),
            "finger" => Ok(Site::Finger),
            other => Err(Error::Config(format!(
                "unknown site `{other}` (expected palm or finger)"
            ))),
        }
    }
}

/// A circular skin region of interest.
///
/// The centre is a point in continuous image coordinates where pixel `(x, y)`
/// covers `[x, x+1) x [y, y+1)`; a pixel belongs to the disk when its centre
/// lies within `radius` of the annotation centre.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionAnnotation {
    pub image_id: String,
    pub site: Site,
    pub center_x: u32,
    pub center_y: u32,
    pub radius: u32,
}

impl RegionAnnotation {
    pub fn with_default_radius(image_id: impl Into<String>, site: Site, center_x: u32, center_y: u32) -> Self {
        Self {
            image_id: image_id.into(),
            site,
            center_x,
            center_y,
            radius: site.default_radius(),
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.radius == 0 {
            return Err(Error::Annotation(format!(
                "`{}`: radius must be positive",
                self.image_id
            )));
        }
        if self.center_x as usize >= width || self.center_y as usize >= height {
            return Err(Error::Annotation(format!(
                "`{}`: centre ({}, {}) outside {width}x{height} image",
                self.image_id, self.center_x, self.center_y
            )));
        }
        Ok(())
    }

    /// Whether the pixel at column `x`, row `y` (may lie outside the image)
    /// falls inside the disk.
    pub fn contains(&self, x: i64, y: i64) -> bool {
        let dx = x as f64 + 0.5 - self.center_x as f64;
        let dy = y as f64 + 0.5 - self.center_y as f64;
        let r = self.radius as f64;
        dx * dx + dy * dy <= r * r
    }
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<RegionAnnotation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_annotations(annotations: &[RegionAnnotation], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(annotations)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_radii() {
        assert_eq!(Site::Palm.default_radius(), 100);
        assert_eq!(Site::Finger.default_radius(), 20);
    }

    #[test]
    fn validation() {
        let mut a = RegionAnnotation::with_default_radius("img", Site::Finger, 10, 10);
        assert!(a.validate(20, 20).is_ok());
        a.center_x = 20;
        assert!(matches!(a.validate(20, 20), Err(Error::Annotation(_))));
        a.center_x = 5;
        a.radius = 0;
        assert!(matches!(a.validate(20, 20), Err(Error::Annotation(_))));
    }

    #[test]
    fn json_field_names() {
        let a = RegionAnnotation::with_default_radius("P001", Site::Palm, 320, 240);
        let v = serde_json::to_value(vec![a.clone()]).unwrap();
        assert_eq!(v[0]["site"], "palm");
        assert_eq!(v[0]["center_x"], 320);
        assert_eq!(v[0]["radius"], 100);
        let back: Vec<RegionAnnotation> = serde_json::from_value(v).unwrap();
        assert_eq!(back, vec![a]);
    }
}
