//! On-disk formats.
//!
//! * Point clouds: little-endian records of `f32 x, f32 y, f32 z, u16 class`
//!   (14 bytes each) plus a JSON sidecar `{count, num_classes, frame_id}`.
//! * Label images: binary PGM (`P5`, maxval 255), one class ID per byte;
//!   255 marks an unlabeled pixel.
//! * Poses: JSON `{"matrix": 4x4 row-major, "twist": [tx, ty, tz, rx, ry, rz]}`.
//!   The matrix is authoritative on read.
//! * Bundles: a directory with `manifest.json` and per-frame
//!   `frame_NNNN.{bin,json,pgm}` files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::calibrator::{CalibFrame, PointCloudFrame};
use crate::error::{Error, Result};
use crate::geometry::{se3_log, CameraIntrinsics, Pose};
use crate::sampling::LabelImage;
use crate::synth::{GroundTruthBundle, SceneLayout, SceneSpec};

pub const UNLABELED: u8 = 255;
const RECORD_BYTES: usize = 14;

/// JSON form of a pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub matrix: [[f64; 4]; 4],
    pub twist: Option<[f64; 6]>,
}

impl PoseJson {
    pub fn from_pose(p: &Pose) -> Self {
        Self {
            matrix: p.to_rows(),
            twist: se3_log(p).ok().map(|t| t.to_array()),
        }
    }

    /// Accepts matrices that are rigid to 1e-6 and re-orthonormalizes them.
    pub fn to_pose(&self) -> Result<Pose> {
        let m = &self.matrix;
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Format("pose matrix bottom row must be 0 0 0 1".into()));
        }
        let r = Matrix3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        );
        let t = Vector3::new(m[0][3], m[1][3], m[2][3]);
        let approx = Pose {
            rotation: r,
            translation: t,
        };
        if !approx.is_valid(1e-6) {
            return Err(Error::Format("pose matrix is not a rigid transform".into()));
        }
        if approx.is_valid(1e-12) {
            return Ok(approx);
        }
        Pose::from_approx(r, t)
    }
}

/// `#[serde(with = ...)]` adapter for [`Pose`].
pub mod pose_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Pose, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseJson::from_pose(p).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Pose, D::Error> {
        PoseJson::deserialize(d)?.to_pose().map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = ...)]` adapter for `Option<Pose>`.
pub mod opt_pose_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Option<Pose>, s: S) -> std::result::Result<S::Ok, S::Error> {
        p.as_ref().map(PoseJson::from_pose).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Pose>, D::Error> {
        Option::<PoseJson>::deserialize(d)?
            .map(|p| p.to_pose())
            .transpose()
            .map_err(serde::de::Error::custom)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_pose(path: &Path, pose: &Pose) -> Result<()> {
    write_json(path, &PoseJson::from_pose(pose))
}

pub fn read_pose(path: &Path) -> Result<Pose> {
    read_json::<PoseJson>(path)?.to_pose()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudSidecar {
    pub count: usize,
    pub num_classes: usize,
    pub frame_id: usize,
}

pub fn encode_cloud(cloud: &PointCloudFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.points.len() * RECORD_BYTES);
    for (p, &l) in cloud.points.iter().zip(&cloud.labels) {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        out.extend_from_slice(&(l as u16).to_le_bytes());
    }
    out
}

pub fn decode_cloud(bytes: &[u8], num_classes: usize) -> Result<PointCloudFrame> {
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(Error::Format(format!(
            "cloud size {} is not a multiple of {RECORD_BYTES}",
            bytes.len()
        )));
    }
    let n = bytes.len() / RECORD_BYTES;
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(RECORD_BYTES) {
        let f = |i: usize| f32::from_le_bytes(rec[i..i + 4].try_into().expect("4 bytes")) as f64;
        let class = u16::from_le_bytes([rec[12], rec[13]]);
        if class as usize >= num_classes {
            return Err(Error::Format(format!("point class {class} >= {num_classes}")));
        }
        points.push(Vector3::new(f(0), f(4), f(8)));
        labels.push(class as u8);
    }
    let cloud = PointCloudFrame {
        points,
        labels,
        num_classes,
    };
    cloud.validate()?;
    Ok(cloud)
}

pub fn write_cloud(bin: &Path, sidecar: &Path, cloud: &PointCloudFrame, frame_id: usize) -> Result<()> {
    fs::write(bin, encode_cloud(cloud))?;
    write_json(
        sidecar,
        &CloudSidecar {
            count: cloud.points.len(),
            num_classes: cloud.num_classes,
            frame_id,
        },
    )
}

pub fn read_cloud(bin: &Path, sidecar: &Path) -> Result<(PointCloudFrame, CloudSidecar)> {
    let meta: CloudSidecar = read_json(sidecar)?;
    let cloud = decode_cloud(&fs::read(bin)?, meta.num_classes)?;
    if cloud.points.len() != meta.count {
        return Err(Error::Format(format!(
            "{} holds {} points, sidecar says {}",
            bin.display(),
            cloud.points.len(),
            meta.count
        )));
    }
    Ok((cloud, meta))
}

pub fn encode_pgm(width: usize, height: usize, data: &[u8]) -> Result<Vec<u8>> {
    if data.len() != width * height {
        return Err(Error::InvalidArgument("PGM data does not match its size".into()));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    Ok(out)
}

/// Parses a binary 8-bit PGM into `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::Format("not a binary PGM".into()));
    }
    let num = |s: String| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM number {s:?}")))
    };
    let w = num(token()?)?;
    let h = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval != 255 {
        return Err(Error::Format(format!("PGM maxval {maxval}, expected 255")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data = bytes.get(pos + 1..).unwrap_or(&[]);
    if data.len() != w * h {
        return Err(Error::Format(format!(
            "PGM raster has {} bytes, expected {}",
            data.len(),
            w * h
        )));
    }
    Ok((w, h, data.to_vec()))
}

pub fn write_label_image(path: &Path, img: &LabelImage) -> Result<()> {
    fs::write(path, encode_pgm(img.width(), img.height(), img.labels())?)?;
    Ok(())
}

/// Reads a label PGM. Unlabeled (255) pixels are rejected since every camera
/// pixel must carry a class.
pub fn read_label_image(path: &Path, num_classes: usize) -> Result<LabelImage> {
    let (w, h, data) = decode_pgm(&fs::read(path)?)?;
    if data.contains(&UNLABELED) {
        return Err(Error::Format(format!("{} contains unlabeled pixels", path.display())));
    }
    LabelImage::new(w, h, num_classes, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub id: usize,
    pub cloud: String,
    pub cloud_meta: String,
    pub labels: String,
}

/// `manifest.json` of a bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub seed: Option<u64>,
    pub num_classes: usize,
    pub intrinsics: CameraIntrinsics,
    #[serde(with = "opt_pose_serde", default)]
    pub ground_truth: Option<Pose>,
    pub spec: Option<SceneSpec>,
    #[serde(default)]
    pub layouts: Vec<SceneLayout>,
    pub frames: Vec<FrameEntry>,
}

/// Frames loaded from a bundle directory.
#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub frames: Vec<CalibFrame>,
    pub manifest: BundleManifest,
}

pub const MANIFEST: &str = "manifest.json";

pub fn write_frames(
    dir: &Path,
    frames: &[CalibFrame],
    ground_truth: Option<&Pose>,
    spec: Option<&SceneSpec>,
    layouts: &[SceneLayout],
) -> Result<BundleManifest> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("bundle has no frames".into()))?;
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let e = FrameEntry {
            id: i,
            cloud: format!("frame_{i:04}.bin"),
            cloud_meta: format!("frame_{i:04}.json"),
            labels: format!("frame_{i:04}.pgm"),
        };
        write_cloud(&dir.join(&e.cloud), &dir.join(&e.cloud_meta), &f.cloud, i)?;
        write_label_image(&dir.join(&e.labels), &f.image)?;
        entries.push(e);
    }
    let manifest = BundleManifest {
        seed: spec.map(|s| s.seed),
        num_classes: first.num_classes(),
        intrinsics: first.intrinsics,
        ground_truth: ground_truth.copied(),
        spec: spec.cloned(),
        layouts: layouts.to_vec(),
        frames: entries,
    };
    let file = fs::File::create(dir.join(MANIFEST))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest)
}

pub fn write_bundle(dir: &Path, bundle: &GroundTruthBundle) -> Result<BundleManifest> {
    write_frames(
        dir,
        &bundle.frames,
        Some(&bundle.ground_truth),
        Some(&bundle.manifest.spec),
        &bundle.manifest.layouts,
    )
}

/// Path of the manifest for a bundle directory or a manifest file path.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST)
    } else {
        path.to_path_buf()
    }
}

/// Loads a bundle from its directory (or its manifest path).
pub fn read_bundle(path: &Path) -> Result<LoadedBundle> {
    let manifest_file = manifest_path(path);
    let dir = manifest_file.parent().unwrap_or(Path::new("."));
    let manifest: BundleManifest = read_json(&manifest_file)?;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for e in &manifest.frames {
        let (cloud, meta) = read_cloud(&dir.join(&e.cloud), &dir.join(&e.cloud_meta))?;
        if meta.num_classes != manifest.num_classes {
            return Err(Error::Format(format!(
                "frame {} class count disagrees with the manifest",
                e.id
            )));
        }
        let image = read_label_image(&dir.join(&e.labels), manifest.num_classes)?;
        frames.push(CalibFrame::new(cloud, Arc::new(image), manifest.intrinsics)?);
    }
    Ok(LoadedBundle { frames, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{se3_exp, Twist};

    #[test]
    fn pose_json_round_trip() {
        let p = se3_exp(&Twist::from_slice(&[0.1, -0.2, 0.3, 0.4, -0.1, 0.2])).unwrap();
        let text = serde_json::to_string(&PoseJson::from_pose(&p)).unwrap();
        let back = serde_json::from_str::<PoseJson>(&text).unwrap().to_pose().unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn pose_json_rejects_non_rigid() {
        let mut j = PoseJson::from_pose(&Pose::identity());
        j.matrix[0][0] = 2.0;
        assert!(j.to_pose().is_err());
        let mut j = PoseJson::from_pose(&Pose::identity());
        j.matrix[3][0] = 1.0;
        assert!(j.to_pose().is_err());
    }

    #[test]
    fn cloud_records_are_fourteen_bytes() {
        let cloud = PointCloudFrame {
            points: vec![Vector3::new(1.5, -2.0, 0.25), Vector3::new(0.0, 3.0, -1.0)],
            labels: vec![3, 0],
            num_classes: 4,
        };
        let bytes = encode_cloud(&cloud);
        assert_eq!(bytes.len(), 28);
        assert_eq!(&bytes[0..4], &1.5f32.to_le_bytes());
        assert_eq!(&bytes[12..14], &[3, 0]);
        assert_eq!(decode_cloud(&bytes, 4).unwrap(), cloud);
        assert!(decode_cloud(&bytes, 3).is_err());
        assert!(decode_cloud(&bytes[..27], 4).is_err());
    }

    #[test]
    fn pgm_round_trip_with_comment() {
        let data: Vec<u8> = (0..12).collect();
        let bytes = encode_pgm(4, 3, &data).unwrap();
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(decode_pgm(&bytes).unwrap(), (4, 3, data.clone()));
        let mut commented = b"P5\n# labels\n4 3\n255\n".to_vec();
        commented.extend_from_slice(&data);
        assert_eq!(decode_pgm(&commented).unwrap(), (4, 3, data));
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
    }

    #[test]
    fn bundle_round_trip() {
        let spec = SceneSpec {
            seed: 3,
            camera: CameraIntrinsics::from_fov(160, 90, 90.0).unwrap(),
            ..SceneSpec::default()
        };
        let spec = SceneSpec {
            lidar: crate::initializer::SphericalConfig {
                channels: 16,
                ring_points: 200,
                ..spec.lidar.with_camera(&spec.camera)
            },
            ..spec
        };
        let bundle = crate::synth::generate(&spec, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &bundle).unwrap();
        let loaded = read_bundle(dir.path()).unwrap();
        assert_eq!(loaded.frames.len(), 2);
        assert_eq!(loaded.manifest.ground_truth, Some(bundle.ground_truth));
        assert_eq!(loaded.manifest.spec.as_ref(), Some(&spec));
        for (a, b) in loaded.frames.iter().zip(&bundle.frames) {
            assert_eq!(a.image, b.image);
            assert_eq!(a.cloud.labels, b.cloud.labels);
            for (p, q) in a.cloud.points.iter().zip(&b.cloud.points) {
                assert!((p - q).abs().max() < 1e-5 * (1.0 + q.norm()));
            }
        }
    }
}
