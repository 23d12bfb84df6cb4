//! Material catalog, classifiers and per-object assignments.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::raster::render_fast;
use crate::splat::SplatScene;
pub use crate::xpbd::MaterialProperties;

const BUILTIN_CATALOG: &str = include_str!("../data/materials.catalog");

/// Named materials plus the name used for unassigned objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CatalogRepr", into = "CatalogRepr")]
pub struct MaterialCatalog {
    materials: BTreeMap<String, MaterialProperties>,
    default_name: String,
}

#[derive(Serialize, Deserialize)]
struct CatalogRepr {
    materials: Vec<MaterialProperties>,
    default: String,
}

impl From<MaterialCatalog> for CatalogRepr {
    fn from(c: MaterialCatalog) -> Self {
        CatalogRepr { materials: c.materials.into_values().collect(), default: c.default_name }
    }
}

impl TryFrom<CatalogRepr> for MaterialCatalog {
    type Error = Error;

    fn try_from(r: CatalogRepr) -> Result<Self> {
        let mut materials = BTreeMap::new();
        for m in r.materials {
            m.validate()?;
            if let Some(dup) = materials.insert(m.name.clone(), m) {
                return Err(Error::InvalidInput(format!("duplicate material {:?}", dup.name)));
            }
        }
        if !materials.contains_key(&r.default) {
            return Err(Error::InvalidInput(format!("default material {:?} is not in the catalog", r.default)));
        }
        Ok(MaterialCatalog { materials, default_name: r.default })
    }
}

impl MaterialCatalog {
    /// The catalog shipped with the crate.
    pub fn builtin() -> MaterialCatalog {
        Self::parse(BUILTIN_CATALOG, Path::new("<builtin>")).expect("builtin catalog parses")
    }

    pub fn load(path: &Path) -> Result<MaterialCatalog> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Whitespace-separated rows `name density E nu thickness`; `#` starts a
    /// comment; `default <name>` picks the fallback material.
    pub fn parse(text: &str, path: &Path) -> Result<MaterialCatalog> {
        let mut materials = BTreeMap::new();
        let mut default_name = None;
        let mut offset = 0;
        for (lineno, raw) in text.split_inclusive('\n').enumerate() {
            let line_offset = offset;
            offset += raw.len();
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |m: String| Error::parse(path, line_offset as u64, format!("line {}: {m}", lineno + 1));
            match fields.as_slice() {
                ["default", name] => default_name = Some(name.to_string()),
                [name, d, e, nu, t] => {
                    let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| err(format!("bad {what} {s:?}")));
                    let m = MaterialProperties {
                        name: name.to_string(),
                        density: num(d, "density")?,
                        youngs_modulus: num(e, "Young's modulus")?,
                        poisson_ratio: num(nu, "Poisson ratio")?,
                        thickness: num(t, "thickness")?,
                    };
                    m.validate().map_err(|e| err(e.to_string()))?;
                    if materials.insert(name.to_string(), m).is_some() {
                        return Err(err(format!("duplicate material {name:?}")));
                    }
                }
                _ => return Err(err(format!("expected 5 fields, found {}", fields.len()))),
            }
        }
        let default_name = default_name.unwrap_or_else(|| "cloth".to_string());
        if !materials.contains_key(&default_name) {
            return Err(Error::parse(path, 0, format!("default material {default_name:?} is not in the catalog")));
        }
        Ok(MaterialCatalog { materials, default_name })
    }

    pub fn get(&self, name: &str) -> Result<&MaterialProperties> {
        self.materials.get(name).ok_or_else(|| Error::CatalogMiss(name.to_string()))
    }

    pub fn default_material(&self) -> &MaterialProperties {
        &self.materials[&self.default_name]
    }

    pub fn default_name(&self) -> &str {
        &self.default_name
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.materials.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentSource {
    Manual,
    Rule,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub object_id: u32,
    pub material: String,
    /// In [0, 1].
    pub confidence: f64,
    pub source: AssignmentSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub material: String,
    pub confidence: f64,
}

/// Names the material of a segment from a rendering of it.
pub trait MaterialClassifier {
    fn classify(&self, image: &ImageBuffer, object_id: u32) -> Result<Classification>;

    fn source(&self) -> AssignmentSource {
        AssignmentSource::External
    }
}

/// Picks the material whose reference albedo is nearest to the mean color
/// of the covered pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleClassifier {
    pub rules: Vec<(String, [f64; 3])>,
}

impl Default for RuleClassifier {
    fn default() -> Self {
        let rule = |n: &str, c: [f64; 3]| (n.to_string(), c);
        RuleClassifier {
            rules: vec![
                rule("rubber", [0.12, 0.12, 0.12]),
                rule("cloth", [0.75, 0.35, 0.35]),
                rule("metal", [0.62, 0.64, 0.68]),
                rule("wood", [0.55, 0.36, 0.18]),
            ],
        }
    }
}

/// Pixels with less remaining transmittance than this count as covered.
const COVERAGE_TRANSMITTANCE: f32 = 0.5;

impl MaterialClassifier for RuleClassifier {
    fn classify(&self, image: &ImageBuffer, object_id: u32) -> Result<Classification> {
        let mut sum = [0.0f64; 3];
        let mut count = 0usize;
        for (i, px) in image.rgb.iter().enumerate() {
            let covered = image.transmittance.as_ref().is_none_or(|t| t[i] < COVERAGE_TRANSMITTANCE);
            if covered {
                for c in 0..3 {
                    sum[c] += px[c] as f64;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::InvalidInput(format!("object {object_id} covers no pixels in the classifier view")));
        }
        let mean = sum.map(|s| s / count as f64);
        let dist = |c: &[f64; 3]| (0..3).map(|k| (c[k] - mean[k]).powi(2)).sum::<f64>().sqrt();
        let (name, albedo) = self
            .rules
            .iter()
            .min_by(|a, b| dist(&a.1).total_cmp(&dist(&b.1)))
            .ok_or_else(|| Error::InvalidParameter("rule classifier has no rules".into()))?;
        Ok(Classification { material: name.clone(), confidence: (1.0 - dist(albedo) / 3f64.sqrt()).clamp(0.0, 1.0) })
    }

    fn source(&self) -> AssignmentSource {
        AssignmentSource::Rule
    }
}

/// One record per assigned object.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignments {
    records: BTreeMap<u32, AssignmentRecord>,
}

impl Assignments {
    pub fn assign_manual(&mut self, scene: &SplatScene, catalog: &MaterialCatalog, object_id: u32, name: &str) -> Result<&AssignmentRecord> {
        self.insert(scene, catalog, AssignmentRecord { object_id, material: name.to_string(), confidence: 1.0, source: AssignmentSource::Manual })
    }

    /// Renders the segment alone from `camera` and asks `classifier`.
    pub fn assign_classified(
        &mut self,
        scene: &SplatScene,
        catalog: &MaterialCatalog,
        object_id: u32,
        classifier: &dyn MaterialClassifier,
        camera: &Camera,
    ) -> Result<&AssignmentRecord> {
        let image = render_fast(&scene.segment(object_id)?, camera);
        let c = classifier.classify(&image, object_id)?;
        if !(0.0..=1.0).contains(&c.confidence) {
            return Err(Error::InvalidInput(format!("classifier confidence {} outside [0, 1]", c.confidence)));
        }
        self.insert(scene, catalog, AssignmentRecord { object_id, material: c.material, confidence: c.confidence, source: classifier.source() })
    }

    /// Replaces any existing record for the object.
    pub fn insert(&mut self, scene: &SplatScene, catalog: &MaterialCatalog, record: AssignmentRecord) -> Result<&AssignmentRecord> {
        if !scene.has_object(record.object_id) {
            return Err(Error::NotFound(format!("object {}", record.object_id)));
        }
        catalog.get(&record.material)?;
        if !(0.0..=1.0).contains(&record.confidence) {
            return Err(Error::InvalidParameter(format!("confidence {} outside [0, 1]", record.confidence)));
        }
        let id = record.object_id;
        self.records.insert(id, record);
        Ok(&self.records[&id])
    }

    pub fn get(&self, object_id: u32) -> Option<&AssignmentRecord> {
        self.records.get(&object_id)
    }

    pub fn remove(&mut self, object_id: u32) -> Option<AssignmentRecord> {
        self.records.remove(&object_id)
    }

    /// Records in object order, and the scene objects that fall back to the
    /// catalog default.
    pub fn list(&self, scene: &SplatScene) -> (Vec<AssignmentRecord>, Vec<u32>) {
        let records = self.records.values().cloned().collect();
        let defaulted = scene.object_ids().into_iter().filter(|id| !self.records.contains_key(id)).collect();
        (records, defaulted)
    }

    /// Material for an object and whether it is the flagged default.
    pub fn material_for<'c>(&self, catalog: &'c MaterialCatalog, object_id: u32) -> Result<(&'c MaterialProperties, bool)> {
        match self.records.get(&object_id) {
            Some(r) => Ok((catalog.get(&r.material)?, false)),
            None => Ok((catalog.default_material(), true)),
        }
    }
}
