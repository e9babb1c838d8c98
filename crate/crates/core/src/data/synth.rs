//! Parametric skeleton motion generator.
//!
//! A 24-joint body (SMPL joint order, pelvis first) is posed by forward
//! kinematics; each action drives a few joint angles with simple waveforms.
//! Per-sequence variation (amplitude, tempo, phase, body size, length,
//! jitter) scales with the spec's `noise`; an optional random yaw rotates
//! the whole sequence about the vertical axis.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::preprocess::{center_pelvis, clamp_to_range};
use super::SkeletonSequence;
use crate::exec;

pub const JOINTS: usize = 24;
pub const PELVIS: usize = 0;

const L_HIP: usize = 1;
const R_HIP: usize = 2;
const SPINE1: usize = 3;
const L_KNEE: usize = 4;
const R_KNEE: usize = 5;
const SPINE2: usize = 6;
const L_SHOULDER: usize = 16;
const R_SHOULDER: usize = 17;
const R_ELBOW: usize = 19;

const PARENT: [Option<usize>; JOINTS] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
    Some(20),
    Some(21),
];

/// Rest pose in meters: x to the subject's left, y up, z forward.
const REST: [[f64; 3]; JOINTS] = [
    [0.0, 0.0, 0.0],
    [0.09, -0.08, 0.0],
    [-0.09, -0.08, 0.0],
    [0.0, 0.11, 0.0],
    [0.10, -0.46, 0.0],
    [-0.10, -0.46, 0.0],
    [0.0, 0.24, 0.0],
    [0.10, -0.85, 0.0],
    [-0.10, -0.85, 0.0],
    [0.0, 0.30, 0.0],
    [0.10, -0.90, 0.12],
    [-0.10, -0.90, 0.12],
    [0.0, 0.50, 0.0],
    [0.07, 0.43, 0.0],
    [-0.07, 0.43, 0.0],
    [0.0, 0.62, 0.03],
    [0.17, 0.45, 0.0],
    [-0.17, 0.45, 0.0],
    [0.19, 0.18, 0.0],
    [-0.19, 0.18, 0.0],
    [0.20, -0.06, 0.0],
    [-0.20, -0.06, 0.0],
    [0.20, -0.14, 0.0],
    [-0.20, -0.14, 0.0],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wave {
    /// `sin(2π f t + φ)`
    Sine,
    /// `max(0, sin(2π f t + φ))`
    HalfWave,
    /// Smooth 0 → 1 transition finishing at `t = 1/f`, then held.
    Ramp,
}

/// One driven joint angle: `offset + amplitude · wave(t)` radians, t ∈ [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointMotion {
    pub joint: usize,
    pub axis: Axis,
    pub wave: Wave,
    pub amplitude: f64,
    #[serde(default = "one")]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub offset: f64,
}

fn one() -> f64 {
    1.0
}

impl JointMotion {
    fn angle(&self, t: f64, amp_scale: f64, tempo: f64, phase_shift: f64) -> f64 {
        let f = self.frequency * tempo;
        let w = match self.wave {
            Wave::Sine => (2.0 * PI * f * t + self.phase + phase_shift).sin(),
            Wave::HalfWave => (2.0 * PI * f * t + self.phase + phase_shift).sin().max(0.0),
            Wave::Ramp => 0.5 * (1.0 - (PI * (f * t).min(1.0)).cos()),
        };
        self.offset + self.amplitude * amp_scale * w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthActionSpec {
    pub name: String,
    pub motions: Vec<JointMotion>,
    /// Scales all per-sequence randomness; 0 makes every sample identical.
    #[serde(default = "one")]
    pub noise: f64,
    /// Random yaw in ±30° applied to every frame.
    #[serde(default = "yes")]
    pub rotate: bool,
    /// Nominal raw length before subsampling.
    #[serde(default = "default_raw_frames")]
    pub raw_frames: usize,
}

fn yes() -> bool {
    true
}

fn default_raw_frames() -> usize {
    48
}

type Mat3 = [[f64; 3]; 3];

fn rotation(axis: Axis, a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    match axis {
        Axis::X => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        Axis::Y => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        Axis::Z => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
    }
}

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn apply(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Joint positions for per-joint local rotations; parents precede children.
fn forward_kinematics(local: &[Mat3; JOINTS], scale: f64) -> [[f64; 3]; JOINTS] {
    let mut world = [IDENTITY; JOINTS];
    let mut pos = [[0.0; 3]; JOINTS];
    for j in 0..JOINTS {
        match PARENT[j] {
            None => world[j] = local[j],
            Some(p) => {
                let offset = [
                    (REST[j][0] - REST[p][0]) * scale,
                    (REST[j][1] - REST[p][1]) * scale,
                    (REST[j][2] - REST[p][2]) * scale,
                ];
                let d = apply(&world[p], offset);
                pos[j] = [pos[p][0] + d[0], pos[p][1] + d[1], pos[p][2] + d[2]];
                world[j] = mat_mul(&world[p], &local[j]);
            }
        }
    }
    pos
}

/// Per-sequence draws, all zero when `noise` is zero.
struct Variation {
    amp: Vec<f64>,
    phase: Vec<f64>,
    tempo: f64,
    scale: f64,
    frames: usize,
    yaw: f64,
    jitter: f64,
}

impl Variation {
    fn draw(spec: &SynthActionSpec, rng: &mut ChaCha8Rng) -> Self {
        let v = spec.noise.max(0.0);
        let mut u = || rng.random_range(-1.0..=1.0);
        let amp = spec.motions.iter().map(|_| 1.0 + 0.2 * v * u()).collect();
        let phase = spec.motions.iter().map(|_| 0.4 * v * u()).collect();
        let tempo = 1.0 + 0.1 * v * u();
        let scale = 0.9 * (1.0 + 0.06 * v * u());
        let frames = (spec.raw_frames as f64 + (16.0 * v * u()).round()).max(2.0) as usize;
        let yaw = if spec.rotate { FRAC_PI_6 * u() } else { 0.0 };
        Self {
            amp,
            phase,
            tempo,
            scale,
            frames,
            yaw,
            jitter: 0.01 * v,
        }
    }
}

fn render(spec: &SynthActionSpec, rng: &mut ChaCha8Rng, source_id: String) -> SkeletonSequence {
    let var = Variation::draw(spec, rng);
    let yaw = rotation(Axis::Y, var.yaw);
    let jitter = Normal::new(0.0, var.jitter.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut data = Vec::with_capacity(var.frames * JOINTS * 3);
    for i in 0..var.frames {
        let t = i as f64 / (var.frames - 1) as f64;
        let mut local = [IDENTITY; JOINTS];
        for (k, m) in spec.motions.iter().enumerate() {
            if m.joint >= JOINTS {
                continue;
            }
            let a = m.angle(t, var.amp[k], var.tempo, var.phase[k]);
            local[m.joint] = mat_mul(&local[m.joint], &rotation(m.axis, a));
        }
        for p in forward_kinematics(&local, var.scale) {
            for c in apply(&yaw, p) {
                let noise = if var.jitter > 0.0 { jitter.sample(rng) } else { 0.0 };
                data.push(c + noise);
            }
        }
    }
    let raw = SkeletonSequence::new(var.frames, JOINTS, data, Some(spec.name.clone()), source_id)
        .expect("consistent size");
    let mut out = center_pelvis(&raw, PELVIS).expect("pelvis in range");
    clamp_to_range(&mut out);
    out
}

/// `count` raw sequences of one action. The generator draws one base seed
/// from `rng`; sequence `i` uses its own stream, so output does not depend
/// on the execution mode.
pub fn generate_synthetic(
    spec: &SynthActionSpec,
    count: usize,
    rng: &mut impl Rng,
) -> Vec<SkeletonSequence> {
    let base: u64 = rng.random();
    exec::map_range(count, |i| {
        let mut r = ChaCha8Rng::seed_from_u64(base);
        r.set_stream(i as u64);
        render(spec, &mut r, format!("{}_{:04}", spec.name, i))
    })
}

fn sym(joint_l: usize, joint_r: usize, axis: Axis, wave: Wave, amp: f64, freq: f64, offset: f64) -> [JointMotion; 2] {
    // mirror across the sagittal plane: y/z rotations flip sign
    let flip = if axis == Axis::X { 1.0 } else { -1.0 };
    [
        JointMotion { joint: joint_l, axis, wave, amplitude: amp, frequency: freq, phase: 0.0, offset },
        JointMotion {
            joint: joint_r,
            axis,
            wave,
            amplitude: flip * amp,
            frequency: freq,
            phase: 0.0,
            offset: flip * offset,
        },
    ]
}

fn m(joint: usize, axis: Axis, wave: Wave, amplitude: f64, frequency: f64, phase: f64, offset: f64) -> JointMotion {
    JointMotion { joint, axis, wave, amplitude, frequency, phase, offset }
}

fn action(name: &str, motions: Vec<JointMotion>) -> SynthActionSpec {
    SynthActionSpec {
        name: name.into(),
        motions,
        noise: 1.0,
        rotate: true,
        raw_frames: default_raw_frames(),
    }
}

fn default_per_class() -> usize {
    50
}

/// Twelve actions and the default held-out test classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSuite {
    pub actions: Vec<SynthActionSpec>,
    pub test_classes: Vec<String>,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
}

impl SynthSuite {
    pub fn builtin() -> Self {
        use Axis::*;
        use Wave::*;
        let mut actions = Vec::new();
        actions.push(action(
            "wave_right",
            vec![
                m(R_SHOULDER, Z, Ramp, -2.4, 3.0, 0.0, 0.0),
                m(R_ELBOW, Z, Sine, 0.6, 3.0, 0.0, -0.3),
            ],
        ));
        actions.push(action("raise_both_arms", sym(L_SHOULDER, R_SHOULDER, Z, Ramp, 2.6, 1.0, 0.0).to_vec()));
        actions.push(action(
            "squat",
            [
                sym(L_HIP, R_HIP, X, Sine, -1.2, 0.5, 0.0),
                sym(L_KNEE, R_KNEE, X, Sine, 2.0, 0.5, 0.0),
            ]
            .concat()
            .into_iter()
            .chain([m(SPINE1, X, Sine, 0.4, 0.5, 0.0, 0.0)])
            .collect(),
        ));
        actions.push(action(
            "kick_right",
            vec![m(R_HIP, X, HalfWave, -1.3, 2.0, 0.0, 0.0), m(R_KNEE, X, HalfWave, 0.4, 2.0, PI, 0.0)],
        ));
        actions.push(action(
            "arm_circles",
            [
                sym(L_SHOULDER, R_SHOULDER, Z, Sine, 0.5, 3.0, 1.4),
                sym(L_SHOULDER, R_SHOULDER, X, Sine, 0.5, 3.0, 0.0)
                    .map(|mut j| {
                        j.phase = FRAC_PI_2;
                        j
                    }),
            ]
            .concat(),
        ));
        actions.push(action(
            "bow",
            vec![m(SPINE1, X, Sine, 1.0, 0.5, 0.0, 0.0), m(SPINE2, X, Sine, 0.3, 0.5, 0.0, 0.0)],
        ));
        actions.push(action("side_bend", vec![m(SPINE1, Z, Sine, 0.5, 1.0, 0.0, 0.0), m(SPINE2, Z, Sine, 0.2, 1.0, 0.0, 0.0)]));
        actions.push(action(
            "sit_down",
            [
                sym(L_HIP, R_HIP, X, Ramp, -1.5, 1.0, 0.0),
                sym(L_KNEE, R_KNEE, X, Ramp, 1.6, 1.0, 0.0),
            ]
            .concat()
            .into_iter()
            .chain([m(SPINE1, X, Ramp, 0.3, 1.0, 0.0, 0.0)])
            .collect(),
        ));
        actions.push(action(
            "clap",
            [
                sym(L_SHOULDER, R_SHOULDER, X, Sine, 0.0, 1.0, -1.3),
                sym(L_SHOULDER, R_SHOULDER, Y, Sine, 0.5, 4.0, 0.3),
            ]
            .concat(),
        ));
        actions.push(action(
            "march",
            vec![
                m(L_HIP, X, HalfWave, -1.0, 1.5, 0.0, 0.0),
                m(R_HIP, X, HalfWave, -1.0, 1.5, PI, 0.0),
                m(L_KNEE, X, HalfWave, 1.2, 1.5, 0.0, 0.0),
                m(R_KNEE, X, HalfWave, 1.2, 1.5, PI, 0.0),
                m(L_SHOULDER, X, Sine, 0.4, 1.5, 0.0, 0.0),
                m(R_SHOULDER, X, Sine, 0.4, 1.5, PI, 0.0),
            ],
        ));
        actions.push(action(
            "stand_up",
            [
                sym(L_HIP, R_HIP, X, Ramp, 1.5, 1.0, -1.5),
                sym(L_KNEE, R_KNEE, X, Ramp, -1.6, 1.0, 1.6),
            ]
            .concat()
            .into_iter()
            .chain([m(SPINE1, X, Ramp, -0.3, 1.0, 0.0, 0.3)])
            .collect(),
        ));
        actions.push(action(
            "point_right",
            vec![m(R_SHOULDER, X, Ramp, -1.5, 2.0, 0.0, 0.0), m(R_ELBOW, X, Ramp, 0.3, 2.0, 0.0, -0.3)],
        ));
        Self {
            actions,
            test_classes: ["clap", "march", "stand_up", "point_right"]
                .map(String::from)
                .to_vec(),
            per_class: 50,
        }
    }

    pub fn is_test(&self, name: &str) -> bool {
        self.test_classes.iter().any(|c| c == name)
    }

    /// All sequences of every action, in action order.
    pub fn generate(&self, seed: u64) -> Vec<(String, Vec<SkeletonSequence>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.actions
            .iter()
            .map(|a| (a.name.clone(), generate_synthetic(a, self.per_class, &mut rng)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::preprocess::{validate_sequence, Expectations};
    use super::*;

    #[test]
    fn rest_pose_parents_come_first() {
        for (j, p) in PARENT.iter().enumerate() {
            if let Some(p) = p {
                assert!(*p < j);
            }
        }
        let pos = forward_kinematics(&[IDENTITY; JOINTS], 1.0);
        for j in 0..JOINTS {
            for c in 0..3 {
                assert!((pos[j][c] - REST[j][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_noise_without_rotation_is_deterministic() {
        let mut spec = SynthSuite::builtin().actions[0].clone();
        spec.noise = 0.0;
        spec.rotate = false;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seqs = generate_synthetic(&spec, 2, &mut rng);
        assert_eq!(seqs[0].data(), seqs[1].data());
        assert_eq!(seqs[0].frames(), spec.raw_frames);
    }

    #[test]
    fn builtin_suite_outputs_validate() {
        let suite = SynthSuite { per_class: 5, ..SynthSuite::builtin() };
        assert_eq!(suite.actions.len(), 12);
        let expect = Expectations { frames: None, joints: Some(JOINTS), pelvis: PELVIS };
        for (name, seqs) in suite.generate(11) {
            assert_eq!(seqs.len(), 5);
            for s in seqs {
                assert_eq!(s.class_label.as_deref(), Some(name.as_str()));
                validate_sequence(&s, &expect).unwrap();
            }
        }
    }

    #[test]
    fn same_seed_same_output() {
        let suite = SynthSuite { per_class: 3, ..SynthSuite::builtin() };
        assert_eq!(suite.generate(5), suite.generate(5));
        assert_ne!(suite.generate(5), suite.generate(6));
    }
}
