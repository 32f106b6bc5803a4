//! COLMAP sparse models in the text format (`cameras.txt`, `images.txt`,
//! `points3D.txt`). Only `PINHOLE` and `SIMPLE_PINHOLE` cameras are accepted;
//! inputs are expected to be undistorted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, ParseError, Result};
use crate::geometry::{CameraPinhole, RigidTransform, Rgb8, UnitQuat, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraModel {
    SimplePinhole,
    Pinhole,
}

impl CameraModel {
    pub fn name(&self) -> &'static str {
        match self {
            CameraModel::SimplePinhole => "SIMPLE_PINHOLE",
            CameraModel::Pinhole => "PINHOLE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColmapCamera {
    pub id: u32,
    pub model: CameraModel,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
    pub point3d_id: Option<u64>,
}

/// A registered image. `qvec` (w, x, y, z) and `tvec` are kept exactly as read;
/// together they are the world-to-camera transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ColmapImage {
    pub id: u32,
    pub qvec: [f64; 4],
    pub tvec: [f64; 3],
    pub camera_id: u32,
    pub name: String,
    pub points2d: Vec<Point2D>,
}

impl ColmapImage {
    pub fn pose(&self) -> Result<RigidTransform> {
        let [w, x, y, z] = self.qvec;
        Ok(RigidTransform::new(
            UnitQuat::from_wxyz(w, x, y, z)?,
            Vec3::new(self.tvec[0], self.tvec[1], self.tvec[2]),
        ))
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Result<Vec3> {
        Ok(self.pose()?.inverse().translation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackElement {
    pub image_id: u32,
    pub point2d_idx: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColmapPoint3D {
    pub id: u64,
    pub xyz: Vec3,
    pub rgb: Rgb8,
    pub error: f64,
    pub track: Vec<TrackElement>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColmapSparseModel {
    pub cameras: BTreeMap<u32, ColmapCamera>,
    pub images: BTreeMap<u32, ColmapImage>,
    pub points3d: BTreeMap<u64, ColmapPoint3D>,
}

/// Summary counts of a sparse model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelStats {
    pub registered_images: usize,
    pub points: usize,
    pub observations: usize,
    pub mean_track_length: f64,
    pub mean_observations_per_image: f64,
}

impl ColmapSparseModel {
    pub fn stats(&self) -> ModelStats {
        let observations: usize = self.points3d.values().map(|p| p.track.len()).sum();
        let points = self.points3d.len();
        let images = self.images.len();
        ModelStats {
            registered_images: images,
            points,
            observations,
            mean_track_length: if points > 0 { observations as f64 / points as f64 } else { 0.0 },
            mean_observations_per_image: if images > 0 { observations as f64 / images as f64 } else { 0.0 },
        }
    }

    /// Full pinhole camera (intrinsics plus pose) for a registered image.
    pub fn camera_for_image(&self, image_id: u32) -> Result<CameraPinhole> {
        let image = self
            .images
            .get(&image_id)
            .ok_or_else(|| Error::invalid(format!("unknown image id {image_id}")))?;
        let cam = self
            .cameras
            .get(&image.camera_id)
            .ok_or_else(|| Error::invalid(format!("unknown camera id {}", image.camera_id)))?;
        CameraPinhole::new(cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height, image.pose()?)
    }

    /// Cross-reference checks: cameras of images, images of tracks, and the
    /// 2D/3D observation links.
    pub fn validate(&self) -> Result<(), ParseError> {
        for image in self.images.values() {
            if !self.cameras.contains_key(&image.camera_id) {
                return Err(ParseError::new(
                    "colmap",
                    format!("image {} references missing camera {}", image.id, image.camera_id),
                ));
            }
            for p in &image.points2d {
                if let Some(pid) = p.point3d_id {
                    if !self.points3d.contains_key(&pid) {
                        return Err(ParseError::new(
                            "colmap",
                            format!("image {} observes missing point3D {pid}", image.id),
                        ));
                    }
                }
            }
        }
        for point in self.points3d.values() {
            for el in &point.track {
                let image = self.images.get(&el.image_id).ok_or_else(|| {
                    ParseError::new(
                        "colmap",
                        format!("point3D {} track references missing image {}", point.id, el.image_id),
                    )
                })?;
                if el.point2d_idx as usize >= image.points2d.len() {
                    return Err(ParseError::new(
                        "colmap",
                        format!(
                            "point3D {} track references point2D {} of image {} which has {}",
                            point.id,
                            el.point2d_idx,
                            el.image_id,
                            image.points2d.len()
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn field<T: std::str::FromStr>(format: &'static str, line: usize, tok: Option<&str>, what: &str) -> Result<T, ParseError> {
    let tok = tok.ok_or_else(|| ParseError::at_line(format, line, format!("missing {what}")))?;
    tok.parse::<T>()
        .map_err(|_| ParseError::at_line(format, line, format!("invalid {what}: {tok:?}")))
}

fn finite(format: &'static str, line: usize, tok: Option<&str>, what: &str) -> Result<f64, ParseError> {
    let v: f64 = field(format, line, tok, what)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ParseError::at_line(format, line, format!("{what} is not finite")))
    }
}

pub fn parse_cameras_txt(text: &str) -> Result<BTreeMap<u32, ColmapCamera>, ParseError> {
    const F: &str = "cameras.txt";
    let mut cameras = BTreeMap::new();
    for (line, content) in content_lines(text) {
        let mut toks = content.split_whitespace();
        let id: u32 = field(F, line, toks.next(), "camera id")?;
        let model_name = toks
            .next()
            .ok_or_else(|| ParseError::at_line(F, line, "missing camera model"))?;
        let model = match model_name {
            "SIMPLE_PINHOLE" => CameraModel::SimplePinhole,
            "PINHOLE" => CameraModel::Pinhole,
            other => {
                return Err(ParseError::at_line(F, line, format!("unsupported camera model {other}")));
            }
        };
        let width: u32 = field(F, line, toks.next(), "width")?;
        let height: u32 = field(F, line, toks.next(), "height")?;
        let params: Vec<f64> = toks
            .map(|t| finite(F, line, Some(t), "camera parameter"))
            .collect::<Result<_, _>>()?;
        let (fx, fy, cx, cy) = match (model, params.as_slice()) {
            (CameraModel::SimplePinhole, &[f, cx, cy]) => (f, f, cx, cy),
            (CameraModel::Pinhole, &[fx, fy, cx, cy]) => (fx, fy, cx, cy),
            _ => {
                return Err(ParseError::at_line(
                    F,
                    line,
                    format!("{} expects {} parameters, found {}", model.name(), match model {
                        CameraModel::SimplePinhole => 3,
                        CameraModel::Pinhole => 4,
                    }, params.len()),
                ));
            }
        };
        if cameras
            .insert(id, ColmapCamera { id, model, width, height, fx, fy, cx, cy })
            .is_some()
        {
            return Err(ParseError::at_line(F, line, format!("duplicate camera id {id}")));
        }
    }
    Ok(cameras)
}

pub fn parse_images_txt(text: &str) -> Result<BTreeMap<u32, ColmapImage>, ParseError> {
    const F: &str = "images.txt";
    let mut images = BTreeMap::new();
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let header = lines[i].trim();
        let line = i + 1;
        i += 1;
        if header.is_empty() || header.starts_with('#') {
            continue;
        }
        let mut toks = header.split_whitespace();
        let id: u32 = field(F, line, toks.next(), "image id")?;
        let mut qvec = [0.0; 4];
        for (k, q) in qvec.iter_mut().enumerate() {
            *q = finite(F, line, toks.next(), ["QW", "QX", "QY", "QZ"][k])?;
        }
        let mut tvec = [0.0; 3];
        for (k, t) in tvec.iter_mut().enumerate() {
            *t = finite(F, line, toks.next(), ["TX", "TY", "TZ"][k])?;
        }
        if qvec.iter().all(|&q| q == 0.0) {
            return Err(ParseError::at_line(F, line, "zero quaternion"));
        }
        let camera_id: u32 = field(F, line, toks.next(), "camera id")?;
        let name: String = toks.collect::<Vec<_>>().join(" ");
        if name.is_empty() {
            return Err(ParseError::at_line(F, line, "missing image name"));
        }
        // The observation line follows unconditionally and may be empty.
        let obs_line = i + 1;
        let obs = lines.get(i).copied().unwrap_or("");
        i += 1;
        let toks: Vec<&str> = obs.split_whitespace().collect();
        if !toks.len().is_multiple_of(3) {
            return Err(ParseError::at_line(
                F,
                obs_line,
                format!("POINTS2D must be (X, Y, POINT3D_ID) triplets, found {} values", toks.len()),
            ));
        }
        let mut points2d = Vec::with_capacity(toks.len() / 3);
        for chunk in toks.chunks(3) {
            let x = finite(F, obs_line, Some(chunk[0]), "X")?;
            let y = finite(F, obs_line, Some(chunk[1]), "Y")?;
            let pid: i64 = field(F, obs_line, Some(chunk[2]), "POINT3D_ID")?;
            let point3d_id = match pid {
                -1 => None,
                p if p >= 0 => Some(p as u64),
                p => return Err(ParseError::at_line(F, obs_line, format!("invalid POINT3D_ID {p}"))),
            };
            points2d.push(Point2D { x, y, point3d_id });
        }
        if images
            .insert(id, ColmapImage { id, qvec, tvec, camera_id, name, points2d })
            .is_some()
        {
            return Err(ParseError::at_line(F, line, format!("duplicate image id {id}")));
        }
    }
    Ok(images)
}

pub fn parse_points3d_txt(text: &str) -> Result<BTreeMap<u64, ColmapPoint3D>, ParseError> {
    const F: &str = "points3D.txt";
    let mut points = BTreeMap::new();
    for (line, content) in content_lines(text) {
        let mut toks = content.split_whitespace();
        let id: u64 = field(F, line, toks.next(), "point id")?;
        let x = finite(F, line, toks.next(), "X")?;
        let y = finite(F, line, toks.next(), "Y")?;
        let z = finite(F, line, toks.next(), "Z")?;
        let r: u8 = field(F, line, toks.next(), "R")?;
        let g: u8 = field(F, line, toks.next(), "G")?;
        let b: u8 = field(F, line, toks.next(), "B")?;
        let error = finite(F, line, toks.next(), "ERROR")?;
        let rest: Vec<&str> = toks.collect();
        if !rest.len().is_multiple_of(2) {
            return Err(ParseError::at_line(F, line, "TRACK must be (IMAGE_ID, POINT2D_IDX) pairs"));
        }
        let track = rest
            .chunks(2)
            .map(|c| {
                Ok(TrackElement {
                    image_id: field(F, line, Some(c[0]), "track IMAGE_ID")?,
                    point2d_idx: field(F, line, Some(c[1]), "track POINT2D_IDX")?,
                })
            })
            .collect::<Result<Vec<_>, ParseError>>()?;
        let point = ColmapPoint3D {
            id,
            xyz: Vec3::new(x, y, z),
            rgb: [r, g, b],
            error,
            track,
        };
        if points.insert(id, point).is_some() {
            return Err(ParseError::at_line(F, line, format!("duplicate point id {id}")));
        }
    }
    Ok(points)
}

/// Parses the three text files' contents and validates cross references.
pub fn parse_colmap_strs(cameras: &str, images: &str, points3d: &str) -> Result<ColmapSparseModel, ParseError> {
    let model = ColmapSparseModel {
        cameras: parse_cameras_txt(cameras)?,
        images: parse_images_txt(images)?,
        points3d: parse_points3d_txt(points3d)?,
    };
    model.validate()?;
    Ok(model)
}

pub fn parse_colmap_text(dir: impl AsRef<Path>) -> Result<ColmapSparseModel> {
    let dir = dir.as_ref();
    let read = |name: &str| -> Result<String> {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        String::from_utf8(bytes).map_err(|_| ParseError::new("colmap", format!("{name} is not UTF-8")).into())
    };
    Ok(parse_colmap_strs(
        &read("cameras.txt")?,
        &read("images.txt")?,
        &read("points3D.txt")?,
    )?)
}

/// Text for `(cameras.txt, images.txt, points3D.txt)`. Floats use the shortest
/// representation that parses back to the identical value.
pub fn format_colmap_text(model: &ColmapSparseModel) -> (String, String, String) {
    let mut cameras = String::from("# Camera list with one line of data per camera:\n#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    let _ = writeln!(cameras, "# Number of cameras: {}", model.cameras.len());
    for c in model.cameras.values() {
        match c.model {
            CameraModel::SimplePinhole => {
                let _ = writeln!(cameras, "{} SIMPLE_PINHOLE {} {} {} {} {}", c.id, c.width, c.height, c.fx, c.cx, c.cy);
            }
            CameraModel::Pinhole => {
                let _ = writeln!(
                    cameras,
                    "{} PINHOLE {} {} {} {} {} {}",
                    c.id, c.width, c.height, c.fx, c.fy, c.cx, c.cy
                );
            }
        }
    }

    let stats = model.stats();
    let mut images = String::from(
        "# Image list with two lines of data per image:\n#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n#   POINTS2D[] as (X, Y, POINT3D_ID)\n",
    );
    let _ = writeln!(
        images,
        "# Number of images: {}, mean observations per image: {}",
        stats.registered_images, stats.mean_observations_per_image
    );
    for im in model.images.values() {
        let [qw, qx, qy, qz] = im.qvec;
        let [tx, ty, tz] = im.tvec;
        let _ = writeln!(images, "{} {qw} {qx} {qy} {qz} {tx} {ty} {tz} {} {}", im.id, im.camera_id, im.name);
        let obs: Vec<String> = im
            .points2d
            .iter()
            .map(|p| format!("{} {} {}", p.x, p.y, p.point3d_id.map_or(-1, |v| v as i64)))
            .collect();
        images.push_str(&obs.join(" "));
        images.push('\n');
    }

    let mut points = String::from(
        "# 3D point list with one line of data per point:\n#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n",
    );
    let _ = writeln!(
        points,
        "# Number of points: {}, mean track length: {}",
        stats.points, stats.mean_track_length
    );
    for p in model.points3d.values() {
        let _ = write!(
            points,
            "{} {} {} {} {} {} {} {}",
            p.id, p.xyz.x, p.xyz.y, p.xyz.z, p.rgb[0], p.rgb[1], p.rgb[2], p.error
        );
        for el in &p.track {
            let _ = write!(points, " {} {}", el.image_id, el.point2d_idx);
        }
        points.push('\n');
    }
    (cameras, images, points)
}

pub fn write_colmap_text(model: &ColmapSparseModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (cameras, images, points) = format_colmap_text(model);
    for (name, text) in [("cameras.txt", cameras), ("images.txt", images), ("points3D.txt", points)] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAMERAS: &str = "# c\n1 PINHOLE 640 480 500 501 320 240\n";
    const IMAGES: &str = "# i\n1 1 0 0 0 0 0 0 1 a.png\n\n";

    #[test]
    fn minimal_model() {
        let model = parse_colmap_strs(CAMERAS, IMAGES, "# none\n").unwrap();
        assert_eq!(model.cameras.len(), 1);
        assert_eq!(model.images[&1].name, "a.png");
        assert!(model.images[&1].points2d.is_empty());
        assert!(model.points3d.is_empty());
        let cam = model.camera_for_image(1).unwrap();
        assert_eq!((cam.fx, cam.fy), (500.0, 501.0));
    }

    #[test]
    fn simple_pinhole_expands_focal() {
        let cams = parse_cameras_txt("3 SIMPLE_PINHOLE 100 80 90 50 40\n").unwrap();
        assert_eq!((cams[&3].fx, cams[&3].fy), (90.0, 90.0));
    }

    #[test]
    fn unsupported_model_named() {
        let err = parse_cameras_txt("1 OPENCV 640 480 500 500 320 240 0 0 0 0\n").unwrap_err();
        assert!(err.message.contains("OPENCV"));
    }

    #[test]
    fn dangling_track_rejected() {
        let images = "1 1 0 0 0 0 0 0 1 a.png\n1 2 -1\n";
        let points = "5 0 0 1 255 0 0 0.5 7 0\n";
        let err = parse_colmap_strs(CAMERAS, images, points).unwrap_err();
        assert!(err.message.contains("missing image 7"));
    }

    #[test]
    fn dangling_camera_rejected() {
        let images = "1 1 0 0 0 0 0 0 9 a.png\n\n";
        assert!(parse_colmap_strs(CAMERAS, images, "").is_err());
    }

    #[test]
    fn observations_link_both_ways() {
        let images = "1 1 0 0 0 0 0 0 1 a.png\n10.5 20.25 5 3 4 -1\n";
        let points = "5 0 0 1 255 0 0 0.5 1 0\n";
        let model = parse_colmap_strs(CAMERAS, images, points).unwrap();
        assert_eq!(model.images[&1].points2d[0].point3d_id, Some(5));
        assert_eq!(model.stats().observations, 1);
        let (c, i, p) = format_colmap_text(&model);
        assert_eq!(parse_colmap_strs(&c, &i, &p).unwrap(), model);
    }

    #[test]
    fn image_names_with_spaces() {
        let images = "1 1 0 0 0 0 0 0 1 my image.png\n\n";
        let model = parse_colmap_strs(CAMERAS, images, "").unwrap();
        assert_eq!(model.images[&1].name, "my image.png");
    }
}
