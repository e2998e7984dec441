//! Deterministic inputs for the benchmarks, sized like one generation
//! round of the reference skeleton.

use dyadic_core::constraints::{ConstraintGroup, TrajectoryConstraint};
use dyadic_core::metrics::FramePair;
use dyadic_core::SkeletonConfig;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FRAMES: usize = 150;

pub fn uniform_matrix(seed: u64, rows: usize, cols: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Root displacement, root rotation and head constraints over the whole
/// window, the densest set the compiler emits.
pub fn round_constraints(skeleton: &SkeletonConfig) -> Vec<TrajectoryConstraint> {
    let groups = [
        (ConstraintGroup::RootPosition, skeleton.root_position_channels().unwrap()[..2].to_vec()),
        (ConstraintGroup::RootRotation, vec![skeleton.heading_channel().unwrap()]),
        (ConstraintGroup::HeadRotation, skeleton.head_rotation_channels().unwrap().to_vec()),
    ];
    groups
        .into_iter()
        .enumerate()
        .map(|(i, (group, selector))| TrajectoryConstraint {
            group,
            targets: uniform_matrix(10 + i as u64, FRAMES, selector.len()),
            mask: Array2::ones((FRAMES, selector.len())),
            selector,
        })
        .collect()
}

/// Two characters' frames paired row by row.
pub fn frame_pairs(seed: u64, frames: usize, width: usize) -> Vec<FramePair> {
    let a = uniform_matrix(seed, frames, width);
    let b = uniform_matrix(seed + 1, frames, width);
    a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(x, y)| FramePair {
            first: x.to_vec(),
            second: y.to_vec(),
        })
        .collect()
}
