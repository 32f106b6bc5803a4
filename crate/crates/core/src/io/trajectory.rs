//! Trajectory text files: one pose per line, `t tx ty tz qx qy qz qw`,
//! whitespace separated, `#` starts a comment line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, ParseError, Result};
use crate::geometry::{TimedPose, Trajectory, UnitQuat, Vec3};

const FORMAT: &str = "trajectory";

/// Order of the four quaternion fields after the position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum QuaternionOrder {
    /// `qx qy qz qw` (TUM convention).
    #[default]
    XyzW,
    /// `qw qx qy qz`.
    WXyz,
}

/// Accepted quaternion norm band before renormalization.
pub const QUATERNION_NORM_TOLERANCE: f64 = 0.01;

pub fn parse_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    parse_trajectory_with(path, QuaternionOrder::default())
}

pub fn parse_trajectory_with(path: impl AsRef<Path>, order: QuaternionOrder) -> Result<Trajectory> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_trajectory_bytes(&bytes, order)?)
}

/// Ground-truth tracker files. Same grammar as estimated trajectories today;
/// kept separate so a diverging tracker format only changes this entry point.
pub fn parse_groundtruth_tf(path: impl AsRef<Path>) -> Result<Trajectory> {
    parse_groundtruth_tf_with(path, QuaternionOrder::default())
}

pub fn parse_groundtruth_tf_with(path: impl AsRef<Path>, order: QuaternionOrder) -> Result<Trajectory> {
    parse_trajectory_with(path, order)
}

pub fn parse_trajectory_bytes(bytes: &[u8], order: QuaternionOrder) -> Result<Trajectory, ParseError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| ParseError::new(FORMAT, format!("invalid UTF-8: {e}")))?;
    parse_trajectory_str(text, order)
}

pub fn parse_trajectory_str(text: &str, order: QuaternionOrder) -> Result<Trajectory, ParseError> {
    let mut poses: Vec<TimedPose> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(ParseError::at_line(
                FORMAT,
                lineno,
                format!("expected 8 fields at line {lineno}, found {}", fields.len()),
            ));
        }
        let mut values = [0.0f64; 8];
        for (k, (slot, field)) in values.iter_mut().zip(&fields).enumerate() {
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    ParseError::at_line(FORMAT, lineno, format!("field {} is not a finite number: {field:?}", k + 1))
                })?;
        }
        let [t, tx, ty, tz, a, b, c, d] = values;
        let (w, x, y, z) = match order {
            QuaternionOrder::XyzW => (d, a, b, c),
            QuaternionOrder::WXyz => (a, b, c, d),
        };
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(ParseError::at_line(
                FORMAT,
                lineno,
                format!("quaternion norm {norm} outside [0.99, 1.01]"),
            ));
        }
        let orientation = UnitQuat::from_wxyz(w, x, y, z)
            .map_err(|e| ParseError::at_line(FORMAT, lineno, e.to_string()))?;
        if let Some(prev) = poses.last() {
            if t <= prev.t {
                return Err(ParseError::at_line(
                    FORMAT,
                    lineno,
                    format!("timestamp {t} not greater than previous {}", prev.t),
                ));
            }
        }
        poses.push(TimedPose::new(t, Vec3::new(tx, ty, tz), orientation));
    }
    if poses.is_empty() {
        return Err(ParseError::new(FORMAT, "no poses"));
    }
    Trajectory::new(poses).map_err(|e| ParseError::new(FORMAT, e.to_string()))
}

pub fn format_trajectory(trajectory: &Trajectory, order: QuaternionOrder) -> String {
    let mut out = String::from("# t tx ty tz ");
    out.push_str(match order {
        QuaternionOrder::XyzW => "qx qy qz qw\n",
        QuaternionOrder::WXyz => "qw qx qy qz\n",
    });
    for p in trajectory.poses() {
        let [w, x, y, z] = p.orientation.wxyz();
        let q = match order {
            QuaternionOrder::XyzW => [x, y, z, w],
            QuaternionOrder::WXyz => [w, x, y, z],
        };
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            p.t, p.position.x, p.position.y, p.position.z, q[0], q[1], q[2], q[3]
        );
    }
    out
}

pub fn write_trajectory(trajectory: &Trajectory, path: impl AsRef<Path>, order: QuaternionOrder) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_trajectory(trajectory, order)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pose() {
        let traj = parse_trajectory_str("0.0 0 0 0 0 0 0 1\n", QuaternionOrder::XyzW).unwrap();
        assert_eq!(traj.len(), 1);
        let p = traj.poses()[0];
        assert_eq!(p.position, Vec3::zeros());
        assert_eq!(p.orientation.wxyz(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn preserves_order_and_skips_comments() {
        let text = "# header\n0 1 2 3 0 0 0 1\n\n0.5 4 5 6 0 0 0 1\n1.0 7 8 9 0 0 0 1\n";
        let traj = parse_trajectory_str(text, QuaternionOrder::XyzW).unwrap();
        assert_eq!(traj.timestamps(), vec![0.0, 0.5, 1.0]);
        assert_eq!(traj.poses()[2].position, Vec3::new(7.0, 8.0, 9.0));
    }

    #[test]
    fn seven_fields_names_line() {
        let err = parse_trajectory_str("# c\n0 0 0 0 0 0 1\n", QuaternionOrder::XyzW).unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(err.to_string().contains("expected 8 fields at line 2"));
    }

    #[test]
    fn non_monotonic_rejected() {
        let err = parse_trajectory_str("1 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n", QuaternionOrder::XyzW).unwrap_err();
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn quaternion_norm_band() {
        let ok = parse_trajectory_str("0 0 0 0 0 0 0 1.005\n", QuaternionOrder::XyzW).unwrap();
        assert!((ok.poses()[0].orientation.w() - 1.0).abs() < 1e-15);
        assert!(parse_trajectory_str("0 0 0 0 0 0 0 1.2\n", QuaternionOrder::XyzW).is_err());
    }

    #[test]
    fn wxyz_order() {
        let text = "0 0 0 0 0 1 0 0\n";
        let xyzw = parse_trajectory_str(text, QuaternionOrder::XyzW).unwrap();
        let wxyz = parse_trajectory_str(text, QuaternionOrder::WXyz).unwrap();
        assert_eq!(xyzw.poses()[0].orientation.wxyz(), [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(wxyz.poses()[0].orientation.wxyz(), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_file_is_error() {
        assert!(parse_trajectory_str("# only comments\n", QuaternionOrder::XyzW).is_err());
    }
}
