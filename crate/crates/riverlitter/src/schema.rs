//! On-disk JSON shapes shared by the generator, the detector, and the
//! survey tooling: per-scene annotations, detection dumps, and corpus
//! manifests with content digests.
//!
//! Classes travel as their snake_case names, boxes as `[x_min, y_min,
//! x_max, y_max]` arrays in pixel coordinates.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::boxeval::{Bbox, Detection, EvalError};
use crate::classes::LitterClass;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("unknown class name {0:?}")]
    UnknownClass(String),
    #[error("bbox array {0:?} is not ordered min < max")]
    BadBbox([f64; 4]),
    #[error("confidence {0} outside [0, 1]")]
    BadConfidence(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// annotations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub class: String,
    pub bbox: [f64; 4],
}

/// Ground truth for one generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAnnotations {
    pub image: String,
    pub height: usize,
    pub width: usize,
    pub objects: Vec<ObjectAnnotation>,
}

impl SceneAnnotations {
    pub fn new(
        image: &str,
        height: usize,
        width: usize,
        boxes: &[Bbox],
    ) -> Result<SceneAnnotations, SchemaError> {
        let objects = boxes
            .iter()
            .map(|b| {
                let class = LitterClass::from_id(b.class_id)
                    .ok_or_else(|| SchemaError::UnknownClass(format!("id {}", b.class_id)))?;
                Ok(ObjectAnnotation {
                    class: class.name().to_string(),
                    bbox: [b.x_min, b.y_min, b.x_max, b.y_max],
                })
            })
            .collect::<Result<_, SchemaError>>()?;
        Ok(SceneAnnotations { image: image.to_string(), height, width, objects })
    }

    pub fn to_bboxes(&self) -> Result<Vec<Bbox>, SchemaError> {
        self.objects.iter().map(object_to_bbox).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), SchemaError> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<SceneAnnotations, SchemaError> {
        let parsed: SceneAnnotations = serde_json::from_slice(&fs::read(path)?)?;
        parsed.to_bboxes()?;
        Ok(parsed)
    }
}

fn object_to_bbox(o: &ObjectAnnotation) -> Result<Bbox, SchemaError> {
    let class = LitterClass::from_name(&o.class)
        .ok_or_else(|| SchemaError::UnknownClass(o.class.clone()))?;
    let [x0, y0, x1, y1] = o.bbox;
    if !(x0 < x1 && y0 < y1) {
        return Err(SchemaError::BadBbox(o.bbox));
    }
    Ok(Bbox::new(x0, y0, x1, y1, class.id())?)
}

// ---------------------------------------------------------------------------
// detections
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub class: String,
    pub bbox: [f64; 4],
    pub confidence: f64,
}

/// Detector output for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub image: String,
    pub height: usize,
    pub width: usize,
    pub detections: Vec<DetectionRecord>,
}

impl DetectionSet {
    pub fn new(
        image: &str,
        height: usize,
        width: usize,
        dets: &[Detection],
    ) -> Result<DetectionSet, SchemaError> {
        let detections = dets
            .iter()
            .map(|d| {
                let class = LitterClass::from_id(d.bbox.class_id)
                    .ok_or_else(|| SchemaError::UnknownClass(format!("id {}", d.bbox.class_id)))?;
                Ok(DetectionRecord {
                    class: class.name().to_string(),
                    bbox: [d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max],
                    confidence: d.confidence,
                })
            })
            .collect::<Result<_, SchemaError>>()?;
        Ok(DetectionSet { image: image.to_string(), height, width, detections })
    }

    pub fn to_detections(&self) -> Result<Vec<Detection>, SchemaError> {
        self.detections
            .iter()
            .map(|r| {
                if !(0.0..=1.0).contains(&r.confidence) {
                    return Err(SchemaError::BadConfidence(r.confidence));
                }
                let bbox = object_to_bbox(&ObjectAnnotation { class: r.class.clone(), bbox: r.bbox })?;
                Ok(Detection { bbox, confidence: r.confidence })
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), SchemaError> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<DetectionSet, SchemaError> {
        let parsed: DetectionSet = serde_json::from_slice(&fs::read(path)?)?;
        parsed.to_detections()?;
        Ok(parsed)
    }
}

// ---------------------------------------------------------------------------
// corpus manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

/// Inventory of one generated corpus directory, digest per file, entries
/// sorted by file name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub scene_count: usize,
    pub height: usize,
    pub width: usize,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn save(&self, path: &Path) -> Result<(), SchemaError> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<CorpusManifest, SchemaError> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Lowercase hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String, SchemaError> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{:02x}", b));
    }
    Ok(out)
}

/// Pretty-printed JSON with a trailing newline, the format of every file
/// this library writes.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SchemaError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotation_round_trip_preserves_boxes() {
        let boxes = vec![
            Bbox::new(4.0, 8.0, 40.5, 52.0, 0).unwrap(),
            Bbox::new(100.0, 90.0, 130.0, 120.0, 3).unwrap(),
        ];
        let ann = SceneAnnotations::new("scene_0000.png", 256, 256, &boxes).unwrap();
        assert_eq!(ann.objects[0].class, "plastic_bottle");
        assert_eq!(ann.objects[1].class, "plastic_bag");
        let back = ann.to_bboxes().unwrap();
        assert_eq!(back, boxes);
    }

    #[test]
    fn annotation_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.json");
        let boxes = vec![Bbox::new(1.0, 2.0, 3.0, 4.0, 2).unwrap()];
        let ann = SceneAnnotations::new("x.png", 64, 64, &boxes).unwrap();
        ann.save(&path).unwrap();
        let loaded = SceneAnnotations::load(&path).unwrap();
        assert_eq!(loaded, ann);
    }

    #[test]
    fn unknown_class_and_bad_bbox_rejected() {
        let o = ObjectAnnotation { class: "submarine".into(), bbox: [0.0, 0.0, 1.0, 1.0] };
        assert!(matches!(object_to_bbox(&o), Err(SchemaError::UnknownClass(_))));
        let o = ObjectAnnotation { class: "can".into(), bbox: [5.0, 0.0, 1.0, 1.0] };
        assert!(matches!(object_to_bbox(&o), Err(SchemaError::BadBbox(_))));
    }

    #[test]
    fn detection_set_round_trip_checks_confidence() {
        let dets = vec![Detection {
            bbox: Bbox::new(10.0, 10.0, 30.0, 30.0, 1).unwrap(),
            confidence: 0.75,
        }];
        let set = DetectionSet::new("img.png", 128, 128, &dets).unwrap();
        assert_eq!(set.detections[0].class, "glass_bottle");
        assert_eq!(set.to_detections().unwrap(), dets);

        let mut bad = set.clone();
        bad.detections[0].confidence = 1.5;
        assert!(matches!(bad.to_detections(), Err(SchemaError::BadConfidence(_))));
    }

    #[test]
    fn sha256_matches_known_vector() {
        // sha256("abc"), a fixture every hash library documents
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abc.txt");
        std::fs::write(&path, b"abc").unwrap();
        assert_eq!(
            sha256_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = CorpusManifest {
            seed: 7,
            scene_count: 2,
            height: 256,
            width: 256,
            entries: vec![ManifestEntry { file: "scene_0000.png".into(), sha256: "00".into() }],
        };
        m.save(&path).unwrap();
        assert_eq!(CorpusManifest::load(&path).unwrap(), m);
    }
}
