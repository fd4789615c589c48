//! Procedural corpus: walking and waving solo clips, and pairs that walk up
//! to each other and shake hands. Skeletons vary in scale so the corpus
//! exercises retargeting.

use std::f64::consts::{PI, TAU};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Vec3};
use crate::geometry::Quaternion;
use crate::motion::{fk_positions, MotionSequence, RootState};
use crate::skeleton::{joints, Skeleton};
use crate::training::derive_seed;

use super::corpus::{Clip, ClipKind};

const X: Vec3 = [1.0, 0.0, 0.0];
const Y: Vec3 = [0.0, 1.0, 0.0];
const Z: Vec3 = [0.0, 0.0, 1.0];
/// Pelvis height of the unscaled canonical body standing on the ground.
const STAND_HEIGHT: f64 = 0.92;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub solo: usize,
    pub pairs: usize,
    pub frames: usize,
    pub fps: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { solo: 16, pairs: 16, frames: 196, fps: 20.0 }
    }
}

struct Character {
    rots: Vec<Quaternion>,
    roots: Vec<RootState>,
}

impl Character {
    fn new(frames: usize) -> Self {
        Self { rots: vec![Quaternion::IDENTITY; frames * 22], roots: Vec::with_capacity(frames) }
    }

    fn set(&mut self, f: usize, j: usize, q: Quaternion) {
        self.rots[f * 22 + j] = q;
    }

    fn build(&self, sk: &Skeleton, fps: f64) -> Result<MotionSequence> {
        fk_positions(sk, &self.rots, &self.roots, fps)
    }
}

fn rot(axis: Vec3, a: f64) -> Quaternion {
    Quaternion::from_axis_angle(axis, a)
}

/// Gait pose at phase `phase`, blended by `w` towards standing.
fn gait(c: &mut Character, f: usize, phase: f64, amp: f64, w: f64) {
    let s = phase.sin();
    let a = amp * w;
    c.set(f, joints::LEFT_HIP, rot(X, a * s));
    c.set(f, joints::RIGHT_HIP, rot(X, -a * s));
    c.set(f, joints::LEFT_KNEE, rot(X, -1.2 * a * (0.5 - 0.5 * phase.cos())));
    c.set(f, joints::RIGHT_KNEE, rot(X, -1.2 * a * (0.5 + 0.5 * phase.cos())));
    c.set(f, joints::LEFT_SHOULDER, rot(X, -0.7 * a * s));
    c.set(f, joints::RIGHT_SHOULDER, rot(X, 0.7 * a * s));
    c.set(f, joints::LEFT_ELBOW, rot(X, 0.25 * w));
    c.set(f, joints::RIGHT_ELBOW, rot(X, 0.25 * w));
    c.set(f, joints::SPINE2, rot(Z, 0.08 * a * s));
}

fn forward(heading: f64) -> Vec3 {
    vec3::rotate_z(Y, heading)
}

fn walk(sk_scale: f64, rng: &mut ChaCha8Rng, frames: usize, fps: f64) -> (Character, String) {
    let speed = rng.gen_range(0.8..1.6) * sk_scale;
    let turn = *[-0.35, 0.0, 0.0, 0.35].choose(rng).expect("non-empty");
    let amp = 0.35 + 0.15 * (speed - 0.8);
    let freq = 0.9 * speed / sk_scale;
    let phase0 = rng.gen_range(0.0..TAU);
    let mut c = Character::new(frames);
    let mut pos = [0.0, 0.0, 0.0];
    let mut heading = rng.gen_range(-PI..PI);
    for f in 0..frames {
        let phase = phase0 + TAU * freq * f as f64 / fps;
        gait(&mut c, f, phase, amp, 1.0);
        let z = (STAND_HEIGHT - 0.02 + 0.015 * (2.0 * phase).cos()) * sk_scale;
        c.roots.push(RootState::new([pos[0], pos[1], z], heading));
        pos = vec3::add(pos, vec3::scale(forward(heading), speed / fps));
        heading += turn / fps;
    }
    let pace = if speed < 1.05 { "slowly" } else if speed < 1.35 { "at a steady pace" } else { "briskly" };
    let verb = ["walks", "strolls", "moves"].choose(rng).expect("non-empty");
    let path = match turn {
        t if t < 0.0 => "curving to the right",
        t if t > 0.0 => "curving to the left",
        _ => "in a straight line",
    };
    (c, format!("a person {verb} forward {pace} {path}"))
}

fn wave(sk_scale: f64, rng: &mut ChaCha8Rng, frames: usize, fps: f64) -> (Character, String) {
    let freq = rng.gen_range(1.0..2.5);
    let lift = rng.gen_range(1.9..2.5);
    let both = rng.gen_bool(0.3);
    let heading = rng.gen_range(-PI..PI);
    let pos = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), STAND_HEIGHT * sk_scale];
    let mut c = Character::new(frames);
    for f in 0..frames {
        let t = f as f64 / fps;
        let ramp = (t / 1.0).min(1.0);
        let swing = 0.5 * (TAU * freq * t).sin();
        c.set(f, joints::RIGHT_SHOULDER, rot(Y, -lift * ramp));
        c.set(f, joints::RIGHT_ELBOW, rot(Y, (-0.4 + swing) * ramp));
        if both {
            c.set(f, joints::LEFT_SHOULDER, rot(Y, lift * ramp));
            c.set(f, joints::LEFT_ELBOW, rot(Y, (0.4 - swing) * ramp));
        }
        c.set(f, joints::SPINE1, rot(Z, 0.05 * (TAU * 0.3 * t).sin()));
        c.roots.push(RootState::new(pos, heading));
    }
    let manner = if freq > 1.8 { "energetically" } else { "gently" };
    let text = if both {
        format!("a person waves both hands above their head {manner}")
    } else {
        format!("a person raises the right hand and waves {manner}")
    };
    (c, text)
}

/// Two characters start apart facing each other, walk until about an arm's
/// length apart, then shake right hands.
fn handshake(scales: [f64; 2], rng: &mut ChaCha8Rng, frames: usize, fps: f64) -> ([Character; 2], String) {
    let speed = rng.gen_range(0.9..1.3);
    let walk_frames = rng.gen_range(frames / 8..frames / 4).max(2);
    let shake_freq = rng.gen_range(1.5..3.0);
    let gap = 0.9;
    let brake = 8.0;
    let weight = |f: usize| if f < walk_frames { 1.0 } else { (1.0 - (f - walk_frames) as f64 / brake).max(0.0) };
    let travel: f64 = (0..frames).map(weight).sum::<f64>() * speed / fps;
    let start = gap + 2.0 * travel;
    let phase0 = rng.gen_range(0.0..TAU);
    let mut chars = [Character::new(frames), Character::new(frames)];
    for (i, c) in chars.iter_mut().enumerate() {
        let heading = if i == 0 { 0.0 } else { PI };
        let lateral = if i == 0 { -0.2 } else { 0.2 };
        let mut pos = [lateral, if i == 0 { -start / 2.0 } else { start / 2.0 }, 0.0];
        for f in 0..frames {
            let w = weight(f);
            let phase = phase0 + TAU * 0.9 * speed * f as f64 / fps;
            gait(c, f, phase, 0.4, w);
            let reach = ((f as f64 - walk_frames as f64) / brake).clamp(0.0, 1.0);
            if reach > 0.0 {
                let shake = if reach >= 1.0 { 0.08 * (TAU * shake_freq * f as f64 / fps).sin() } else { 0.0 };
                c.set(f, joints::RIGHT_SHOULDER, rot(X, 0.9 * reach + shake));
                c.set(f, joints::RIGHT_ELBOW, rot(X, 0.5 * reach));
                c.set(f, joints::SPINE3, rot(X, 0.1 * reach));
            }
            let z = (STAND_HEIGHT - 0.02 * w) * scales[i];
            c.roots.push(RootState::new([pos[0], pos[1], z], heading));
            pos = vec3::add(pos, vec3::scale(forward(heading), w * speed / fps));
        }
    }
    let verb = ["approach each other", "walk toward each other", "meet"].choose(rng).expect("non-empty");
    let manner = if shake_freq > 2.3 { "vigorously" } else { "politely" };
    (chars, format!("two people {verb} and shake hands {manner}"))
}

/// Deterministic corpus of `cfg.solo` solo clips followed by `cfg.pairs` pairs.
pub fn synth_corpus(cfg: &SynthConfig, seed: u64) -> Result<Vec<Clip>> {
    if cfg.frames < 2 || !(cfg.fps > 0.0) {
        return Err(Error::InvalidInput(format!("{} frames at {} fps", cfg.frames, cfg.fps)));
    }
    let mut clips = Vec::with_capacity(cfg.solo + cfg.pairs);
    for i in 0..cfg.solo {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 0, i));
        let scale = rng.gen_range(0.9..1.1);
        let sk = Skeleton::canonical_scaled(scale);
        let (c, text) = if i % 2 == 0 { walk(scale, &mut rng, cfg.frames, cfg.fps) } else { wave(scale, &mut rng, cfg.frames, cfg.fps) };
        clips.push(Clip { kind: ClipKind::Solo, text, motions: vec![c.build(&sk, cfg.fps)?], skeleton: sk });
    }
    for i in 0..cfg.pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 1, i));
        let scale = rng.gen_range(0.9..1.1);
        let sk = Skeleton::canonical_scaled(scale);
        let ([a, b], text) = handshake([scale; 2], &mut rng, cfg.frames, cfg.fps);
        clips.push(Clip {
            kind: ClipKind::Pair,
            text,
            motions: vec![a.build(&sk, cfg.fps)?, b.build(&sk, cfg.fps)?],
            skeleton: sk,
        });
    }
    Ok(clips)
}
