//! Shared scenario for the signal-protocol goldens.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use dyadic_core::constraints::{compile, CharacterRoundState, CompileContext, CompilerConfig, RoundTiming};
use dyadic_core::motion::{CharacterId, MotionSegment, MotionState, PerCharacter, SkeletonConfig, WorldPose};
use dyadic_core::signals::{InteractionSignalSet, SignalError, TranscriptWord};
use dyadic_core::ConstraintSet;
use ndarray::Array2;
use serde::Deserialize;

pub const UPDATE_ENV: &str = "DYADIC_UPDATE_GOLDENS";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn protocol_dir() -> PathBuf {
    fixtures().join("protocol")
}

/// Sorted `(stem, path)` pairs of the JSON files in `dir`, skipping
/// `expected.json`.
pub fn json_files(dir: &Path) -> Vec<(String, PathBuf)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| p.file_name().is_some_and(|n| n != "expected.json"))
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), p))
        .collect();
    out.sort();
    out
}

/// Round 1 of a 30 fps run: the segment covers [2.5, 7.5) s and the
/// controller plans [5.0, 7.5) s. The characters face each other 1.2 m
/// apart.
pub struct Scenario {
    pub skeleton: SkeletonConfig,
    pub config: CompilerConfig,
    pub words: Vec<TranscriptWord>,
    pub states: [CharacterRoundState; 2],
    pub timing: RoundTiming,
    pub initiator: MotionSegment,
}

fn word(speaker: CharacterId, w: &str, start: f64, end: f64) -> TranscriptWord {
    TranscriptWord {
        speaker,
        word: w.into(),
        start,
        end,
    }
}

impl Scenario {
    pub fn new() -> Self {
        let skeleton = SkeletonConfig::reference();
        let width = skeleton.width();
        let words = vec![
            word(CharacterId::I, "So", 5.1, 5.3),
            word(CharacterId::I, "honestly,", 5.4, 5.8),
            word(CharacterId::I, "yes", 5.9, 6.1),
            word(CharacterId::II, "yeah", 6.2, 6.4),
            word(CharacterId::II, "really", 6.5, 6.8),
            word(CharacterId::II, "interesting", 6.9, 7.4),
        ];
        let tail = |scale: f64| -> Vec<f64> { (0..width).map(|c| scale * ((c as f64) * 0.37).sin()).collect() };
        let first = CharacterRoundState {
            pose: WorldPose::new(0.0, 0.0, 0.0),
            anchor: WorldPose::new(-0.2, 0.05, 0.1),
            heading_channel: -0.1,
            posture: MotionState::Stand,
            tail: tail(0.05),
        };
        let second = CharacterRoundState {
            pose: WorldPose::new(1.2, 0.0, std::f64::consts::PI),
            anchor: WorldPose::new(1.4, -0.1, 3.0),
            heading_channel: 0.14159265358979312,
            posture: MotionState::Stand,
            tail: tail(-0.04),
        };
        let timing = RoundTiming {
            segment_start_s: 2.5,
            window_start_s: 5.0,
            window_end_s: 7.5,
            frames: 150,
            fps: 30.0,
        };
        let frames = Array2::from_shape_fn((150, width), |(f, c)| 0.1 * ((f as f64) * 0.05 + c as f64).sin());
        let initiator = MotionSegment::new(frames, CharacterId::I, 1).unwrap();
        Self {
            skeleton,
            config: CompilerConfig::default(),
            words,
            states: [first, second],
            timing,
            initiator,
        }
    }

    pub fn compile(&self, signals: &InteractionSignalSet) -> Result<PerCharacter<ConstraintSet>, dyadic_core::constraints::CompileError> {
        let ctx = CompileContext {
            states: self.states.clone(),
            words: &self.words,
            timing: self.timing,
            skeleton: &self.skeleton,
            config: &self.config,
        };
        let [a, b] = compile(signals, &ctx, Some(&self.initiator))?;
        Ok(PerCharacter::new(a, b))
    }
}

/// Canonical golden text of a compiled pair.
pub fn golden_text(sets: &PerCharacter<ConstraintSet>) -> String {
    let mut s = serde_json::to_string_pretty(sets).unwrap();
    s.push('\n');
    s
}

#[derive(Debug, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExpectedRejection {
    Schema { path: String },
    Compile { character: CharacterId, signal: String },
}

pub fn expected_rejections() -> std::collections::BTreeMap<String, ExpectedRejection> {
    let text = fs::read_to_string(protocol_dir().join("invalid/expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Checks every valid fixture against its golden and every invalid one
/// against its documented rejection. Returns the number of each checked.
pub fn check_protocol_goldens() -> (usize, usize) {
    let scenario = Scenario::new();
    let update = std::env::var_os(UPDATE_ENV).is_some();
    let dir = protocol_dir();
    let mut valid = 0;
    for (stem, path) in json_files(&dir.join("valid")) {
        let text = fs::read_to_string(&path).unwrap();
        let set = InteractionSignalSet::from_json(&text).unwrap_or_else(|e| panic!("{stem}: {e}"));
        let compiled = scenario.compile(&set).unwrap_or_else(|e| panic!("{stem}: {e}"));
        let got = golden_text(&compiled);
        let again = golden_text(&scenario.compile(&set).unwrap());
        assert_eq!(got, again, "{stem}: compilation is not byte-stable");
        let golden = dir.join("golden").join(format!("{stem}.constraints.json"));
        if update {
            fs::write(&golden, &got).unwrap();
        }
        let want = fs::read_to_string(&golden).unwrap_or_else(|e| panic!("{}: {e}", golden.display()));
        assert!(got == want, "{stem}: compiled constraints differ from {}", golden.display());
        valid += 1;
    }

    let expected = expected_rejections();
    let mut invalid = 0;
    for (stem, path) in json_files(&dir.join("invalid")) {
        let name = format!("{stem}.json");
        let want = expected.get(&name).unwrap_or_else(|| panic!("{name} has no expected rejection"));
        let text = fs::read_to_string(&path).unwrap();
        match (InteractionSignalSet::from_json(&text), want) {
            (Err(SignalError { path, .. }), ExpectedRejection::Schema { path: p }) => {
                assert_eq!(&path, p, "{name}: wrong error path");
            }
            (Ok(set), ExpectedRejection::Compile { character, signal }) => {
                let err = scenario.compile(&set).expect_err(&name);
                assert_eq!((err.character, err.signal), (*character, signal.as_str()), "{name}");
            }
            (got, want) => panic!("{name}: expected {want:?}, got {got:?}"),
        }
        invalid += 1;
    }
    assert_eq!(invalid, expected.len(), "expected.json lists files that do not exist");
    (valid, invalid)
}
