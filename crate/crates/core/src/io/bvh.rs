//! BVH writer. Rotations are written as intrinsic Z, Y, X Euler angles in
//! degrees, so each joint's rotation is `Rz * Ry * Rx`. Positions and
//! offsets are meters in the +Z-up world frame.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Rotation3, Vector3};
use ndarray::ArrayView2;

use super::{write_atomic, IoError};
use crate::motion::{CharacterId, SkeletonConfig};
use crate::trace::MotionTrace;

const ROTATION_CHANNELS: &str = "Zrotation Yrotation Xrotation";

/// Rounds to the printed precision and clears negative zero.
fn fixed(x: f64) -> String {
    let r = (x * 1e6).round() / 1e6 + 0.0;
    format!("{r:.6}")
}

/// Children lists in joint order, after checking that the parents form a
/// tree rooted at joint 0 with every parent listed before its children.
fn children(skeleton: &SkeletonConfig) -> Result<Vec<Vec<usize>>, IoError> {
    let n = skeleton.joint_count();
    let missing = |m: String| Err(IoError::MissingHierarchy(m));
    if n == 0 {
        return missing("no joints".into());
    }
    if skeleton.parents.len() != n || skeleton.offsets.len() != n {
        return missing(format!(
            "{n} joints but {} parents and {} offsets",
            skeleton.parents.len(),
            skeleton.offsets.len()
        ));
    }
    if skeleton.joint_dim != 3 {
        return missing(format!("joints need 3 rotation channels, found {}", skeleton.joint_dim));
    }
    let mut kids = vec![Vec::new(); n];
    for (j, p) in skeleton.parents.iter().enumerate() {
        match (j, p) {
            (0, None) => {}
            (0, Some(_)) => return missing("joint 0 must be the root".into()),
            (_, None) => return missing(format!("joint `{}` has no parent", skeleton.joint_names[j])),
            (_, Some(p)) if *p >= j => {
                return missing(format!("joint `{}` is listed before its parent", skeleton.joint_names[j]))
            }
            (_, Some(p)) => kids[*p].push(j),
        }
    }
    Ok(kids)
}

fn write_joint(
    out: &mut String,
    skeleton: &SkeletonConfig,
    kids: &[Vec<usize>],
    joint: usize,
    depth: usize,
    order: &mut Vec<usize>,
) {
    let pad = "  ".repeat(depth);
    let [x, y, z] = skeleton.offsets[joint];
    let keyword = if joint == 0 { "ROOT" } else { "JOINT" };
    let _ = writeln!(out, "{pad}{keyword} {}", skeleton.joint_names[joint]);
    let _ = writeln!(out, "{pad}{{");
    let _ = writeln!(out, "{pad}  OFFSET {} {} {}", fixed(x), fixed(y), fixed(z));
    if joint == 0 {
        let _ = writeln!(out, "{pad}  CHANNELS 6 Xposition Yposition Zposition {ROTATION_CHANNELS}");
    } else {
        let _ = writeln!(out, "{pad}  CHANNELS 3 {ROTATION_CHANNELS}");
    }
    order.push(joint);
    if kids[joint].is_empty() {
        let _ = writeln!(out, "{pad}  End Site");
        let _ = writeln!(out, "{pad}  {{");
        let _ = writeln!(out, "{pad}    OFFSET 0.000000 0.000000 0.000000");
        let _ = writeln!(out, "{pad}  }}");
    }
    for &k in &kids[joint] {
        write_joint(out, skeleton, kids, k, depth + 1, order);
    }
    let _ = writeln!(out, "{pad}}}");
}

/// `(z, y, x)` Euler angles in degrees with `R = Rz * Ry * Rx`.
fn euler_zyx_degrees(exp_map: [f64; 3]) -> [f64; 3] {
    let rot = Rotation3::from_scaled_axis(Vector3::new(exp_map[0], exp_map[1], exp_map[2]));
    let (x, y, z) = rot.euler_angles();
    [z.to_degrees(), y.to_degrees(), x.to_degrees()]
}

/// Renders one character's frames as a BVH document.
pub fn render_bvh(frames: ArrayView2<'_, f64>, skeleton: &SkeletonConfig) -> Result<String, IoError> {
    let kids = children(skeleton)?;
    if frames.ncols() != skeleton.width() {
        return Err(IoError::Validation {
            location: "frames".into(),
            message: format!("width {} differs from skeleton width {}", frames.ncols(), skeleton.width()),
        });
    }
    let root_pos = skeleton
        .root_position_channels()
        .map_err(|e| IoError::MissingHierarchy(e.to_string()))?;
    let root_rot = skeleton
        .root_rotation_channels()
        .map_err(|e| IoError::MissingHierarchy(e.to_string()))?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "# rotations: intrinsic ZYX Euler degrees (R = Rz * Ry * Rx); units: meters; up axis: +Z"
    );
    out.push_str("HIERARCHY\n");
    let mut order = Vec::with_capacity(skeleton.joint_count());
    write_joint(&mut out, skeleton, &kids, 0, 0, &mut order);
    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {}", frames.nrows());
    let _ = writeln!(out, "Frame Time: {}", fixed(1.0 / skeleton.fps));
    let mut values = Vec::with_capacity(3 + 3 * order.len());
    for row in frames.rows() {
        values.clear();
        values.extend(root_pos.iter().map(|&c| row[c]));
        for &j in &order {
            let ch = if j == 0 { root_rot } else { [3 * j, 3 * j + 1, 3 * j + 2] };
            values.extend(euler_zyx_degrees([row[ch[0]], row[ch[1]], row[ch[2]]]));
        }
        let line: Vec<String> = values.iter().map(|&v| fixed(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

/// Writes the stitched world-space motion of `who` as BVH.
pub fn export_bvh(trace: &MotionTrace, who: CharacterId, path: &Path) -> Result<(), IoError> {
    let doc = render_bvh(trace.stitched(who).view(), &trace.header.skeleton)?;
    write_atomic(path, doc.as_bytes())
}
