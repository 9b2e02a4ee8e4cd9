//! Dataset directories.
//!
//! ```text
//! manifest.txt     key = value lines (format, width, height, count, trajectory, focal)
//! poses.txt        "index wx wy wz tx ty tz" per image, optional
//! image_0000.f32   planar RGB, little-endian f32, width*height per plane
//! ```
//!
//! Values are written with shortest round-trip formatting, so save/load is
//! bitwise exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{DatasetError, GroundTruth, SceneDataset};
use crate::geometry::CameraPose;
use crate::image::Image;

const FORMAT_TAG: &str = "posefree-dataset-1";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

fn image_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("image_{index:04}.f32"))
}

pub fn save_dataset(dataset: &SceneDataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = format!(
        "format = {FORMAT_TAG}\nwidth = {}\nheight = {}\ncount = {}\ntrajectory = {}\n",
        dataset.width,
        dataset.height,
        dataset.len(),
        dataset.trajectory_kind
    );
    if let Some(gt) = &dataset.ground_truth {
        manifest.push_str(&format!("focal = {:?}\n", gt.focal));
        write_poses(&dir.join("poses.txt"), &gt.poses)?;
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(io_err(&path))?;
    for (i, image) in dataset.images.iter().enumerate() {
        let n = image.pixel_count();
        let mut bytes = Vec::with_capacity(12 * n);
        for c in 0..3 {
            for p in 0..n {
                bytes.extend_from_slice(&image.data[3 * p + c].to_le_bytes());
            }
        }
        let path = image_file(dir, i);
        fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    Ok(())
}

fn parse_key_values(text: &str, field: &str) -> Result<BTreeMap<String, String>, DatasetError> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| DatasetError::format(field, format!("line {}: expected key = value", n + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn require<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, field: &str) -> Result<T, DatasetError> {
    let raw = map.get(key).ok_or_else(|| DatasetError::format(field, format!("missing key '{key}'")))?;
    raw.parse().map_err(|_| DatasetError::format(field, format!("bad value '{raw}' for '{key}'")))
}

/// Loads a dataset directory. Ground truth is present iff `poses.txt` exists.
pub fn load_dataset(dir: &Path) -> Result<SceneDataset, DatasetError> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest = parse_key_values(&text, "manifest.txt")?;
    let tag: String = require(&manifest, "format", "manifest.txt")?;
    if tag != FORMAT_TAG {
        return Err(DatasetError::format("manifest.txt", format!("unsupported format '{tag}'")));
    }
    let width: usize = require(&manifest, "width", "manifest.txt")?;
    let height: usize = require(&manifest, "height", "manifest.txt")?;
    let count: usize = require(&manifest, "count", "manifest.txt")?;
    let kind: String = manifest.get("trajectory").cloned().unwrap_or_else(|| "unknown".into());
    let n = width * height;
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let path = image_file(dir, i);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        if bytes.len() != 12 * n {
            return Err(DatasetError::format(
                path.display().to_string(),
                format!("expected {} bytes, found {}", 12 * n, bytes.len()),
            ));
        }
        let mut image = Image::new(width, height);
        for (k, chunk) in bytes.chunks_exact(4).enumerate() {
            let (c, p) = (k / n, k % n);
            image.data[3 * p + c] = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        }
        images.push(image);
    }
    let poses_path = dir.join("poses.txt");
    let ground_truth = if poses_path.exists() {
        let poses = read_poses(&poses_path)?;
        let focal: f64 = require(&manifest, "focal", "manifest.txt")?;
        Some(GroundTruth { poses, focal })
    } else {
        None
    };
    SceneDataset::new(images, ground_truth, kind)
}

pub fn write_poses(path: &Path, poses: &[CameraPose]) -> Result<(), DatasetError> {
    let mut text = String::new();
    for (i, pose) in poses.iter().enumerate() {
        let v = pose.to_array();
        text.push_str(&format!("{i} {:?} {:?} {:?} {:?} {:?} {:?}\n", v[0], v[1], v[2], v[3], v[4], v[5]));
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_poses(path: &Path) -> Result<Vec<CameraPose>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let field = path.display().to_string();
    let mut poses = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 7 {
            return Err(DatasetError::format(&field, format!("line {}: expected 7 columns, found {}", n + 1, tokens.len())));
        }
        let index: usize = tokens[0]
            .parse()
            .map_err(|_| DatasetError::format(&field, format!("line {}: bad index '{}'", n + 1, tokens[0])))?;
        if index != poses.len() {
            return Err(DatasetError::format(&field, format!("line {}: index {index} out of order", n + 1)));
        }
        let mut v = [0.0; 6];
        for (slot, tok) in v.iter_mut().zip(&tokens[1..]) {
            *slot = tok
                .parse()
                .map_err(|_| DatasetError::format(&field, format!("line {}: bad number '{tok}'", n + 1)))?;
        }
        let pose = CameraPose::from_array(&v);
        if !pose.is_finite() {
            return Err(DatasetError::format(&field, format!("line {}: non-finite pose", n + 1)));
        }
        poses.push(pose);
    }
    Ok(poses)
}

/// Optional camera description next to imported images.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraFile {
    pub focal: f64,
}

pub fn write_camera_file(path: &Path, camera: &CameraFile) -> Result<(), DatasetError> {
    fs::write(path, format!("focal = {:?}\n", camera.focal)).map_err(io_err(path))
}

pub fn read_camera_file(path: &Path) -> Result<CameraFile, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let map = parse_key_values(&text, "camera.txt")?;
    Ok(CameraFile { focal: require(&map, "focal", "camera.txt")? })
}

/// Binary (P6) 8-bit PPM.
pub fn write_ppm(path: &Path, image: &Image) -> Result<(), DatasetError> {
    let mut bytes = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    bytes.extend(image.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_ppm(path: &Path) -> Result<Image, DatasetError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let field = path.display().to_string();
    // Header: magic, width, height, maxval separated by whitespace/comments.
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(DatasetError::format(&field, "truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if tokens[0] != "P6" {
        return Err(DatasetError::format(&field, format!("unsupported magic '{}'", tokens[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| DatasetError::format(&field, format!("bad header value '{s}'")));
    let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(DatasetError::format(&field, format!("unsupported maxval {maxval}")));
    }
    let payload = bytes.get(pos..).unwrap_or_default();
    if payload.len() < 3 * width * height {
        return Err(DatasetError::format(&field, "truncated pixel data"));
    }
    let mut image = Image::new(width, height);
    for (dst, &src) in image.data.iter_mut().zip(payload) {
        *dst = src as f32 / maxval as f32;
    }
    Ok(image)
}

/// Imports every `*.ppm` in `dir` (sorted by name). `poses.txt` supplies
/// ground truth if present; its focal comes from `focal` or `camera.txt`.
pub fn import_ppm_dir(dir: &Path, focal: Option<f64>) -> Result<SceneDataset, DatasetError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")))
        .collect();
    files.sort();
    let images = files.iter().map(|p| read_ppm(p)).collect::<Result<Vec<_>, _>>()?;
    let poses_path = dir.join("poses.txt");
    let ground_truth = if poses_path.exists() {
        let focal = match focal {
            Some(f) => f,
            None => read_camera_file(&dir.join("camera.txt"))?.focal,
        };
        Some(GroundTruth { poses: read_poses(&poses_path)?, focal })
    } else {
        None
    };
    SceneDataset::new(images, ground_truth, "imported")
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{SynthSpec, TrajectoryKind};

    fn small() -> SceneDataset {
        let mut spec = SynthSpec::desk(TrajectoryKind::Arc, 3);
        spec.params.width = 6;
        spec.height = 5;
        spec.oversample = 64;
        spec.generate().unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        let (a, b) = (&ds.ground_truth.as_ref().unwrap().poses, &back.ground_truth.as_ref().unwrap().poses);
        for (p, q) in a.iter().zip(b) {
            for (x, y) in p.to_array().iter().zip(q.to_array()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn missing_poses_means_no_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&small(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("poses.txt")).unwrap();
        assert!(load_dataset(dir.path()).unwrap().ground_truth.is_none());
    }

    #[test]
    fn truncated_image_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&small(), dir.path()).unwrap();
        let path = image_file(dir.path(), 1);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(DatasetError::Format { .. })));
    }

    #[test]
    fn malformed_poses_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.txt");
        fs::write(&path, "0 0 0 0 0 0\n").unwrap();
        assert!(matches!(read_poses(&path), Err(DatasetError::Format { .. })));
        fs::write(&path, "1 0 0 0 0 0 0\n").unwrap();
        assert!(read_poses(&path).is_err());
        fs::write(&path, "0 0 0 0 0 0 nan\n").unwrap();
        assert!(read_poses(&path).is_err());
    }

    #[test]
    fn ppm_import() {
        let dir = tempfile::tempdir().unwrap();
        let image = Image::from_fn(4, 3, |x, y| [x as f32 / 3.0, y as f32 / 2.0, 1.0]);
        write_ppm(&dir.path().join("b.ppm"), &image).unwrap();
        write_ppm(&dir.path().join("a.ppm"), &Image::filled(4, 3, [0.0, 0.0, 0.0])).unwrap();
        let ds = import_ppm_dir(dir.path(), None).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(ds.ground_truth.is_none());
        assert!(ds.images[0].data.iter().all(|&v| v == 0.0));
        for (a, b) in ds.images[1].data.iter().zip(&image.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
        write_poses(&dir.path().join("poses.txt"), &[CameraPose::identity(); 2]).unwrap();
        assert!(import_ppm_dir(dir.path(), None).is_err());
        write_camera_file(&dir.path().join("camera.txt"), &CameraFile { focal: 5.0 }).unwrap();
        assert_eq!(import_ppm_dir(dir.path(), None).unwrap().ground_truth.unwrap().focal, 5.0);
    }
}
