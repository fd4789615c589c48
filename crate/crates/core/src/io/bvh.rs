//! BVH export and parsing. Rotations use Z-X-Y Euler channels in degrees;
//! offsets and positions stay in meters.

use std::fmt::Write as _;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::vec3::{self, Mat3, Vec3};
use crate::geometry::Quaternion;
use crate::motion::{fk_positions, MotionSequence, RootState};
use crate::skeleton::Skeleton;

/// `R = Rz(a) Rx(b) Ry(c)` decomposed into `(a, b, c)` radians.
pub fn euler_zxy(m: &Mat3) -> Vec3 {
    let b = m[2][1].clamp(-1.0, 1.0).asin();
    if b.cos() > 1e-9 {
        [(-m[0][1]).atan2(m[1][1]), b, (-m[2][0]).atan2(m[2][2])]
    } else {
        [m[1][0].atan2(m[0][0]), b, 0.0]
    }
}

pub fn from_euler_zxy(e: Vec3) -> Quaternion {
    let z = Quaternion::from_axis_angle([0.0, 0.0, 1.0], e[0]);
    let x = Quaternion::from_axis_angle([1.0, 0.0, 0.0], e[1]);
    let y = Quaternion::from_axis_angle([0.0, 1.0, 0.0], e[2]);
    z.mul(&x).mul(&y).normalized()
}

/// Rotation best mapping `from` vectors onto `to` vectors (Kabsch).
fn kabsch(from: &[Vec3], to: &[Vec3]) -> Quaternion {
    let mut h = Matrix3::<f64>::zeros();
    for (a, b) in from.iter().zip(to) {
        h += nalgebra::Vector3::from(*a) * nalgebra::Vector3::from(*b).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let v = vt.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, d)) * u.transpose();
    let m: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)]));
    Quaternion::from_rot(&m)
}

/// Local joint rotations that reproduce one frame of positions on `sk`.
///
/// Joints with several children get the least-squares rotation of their
/// child offsets; single-child joints take the shortest arc from the
/// parent-carried rest direction; leaves inherit their parent's orientation.
pub fn solve_local_rotations(sk: &Skeleton, pose: &[Vec3]) -> Vec<Quaternion> {
    let k = sk.joint_count();
    let mut global = vec![Quaternion::IDENTITY; k];
    let mut local = vec![Quaternion::IDENTITY; k];
    for j in 0..k {
        let parent_g = sk.parent(j).map(|p| global[p]).unwrap_or(Quaternion::IDENTITY);
        let kids = sk.children(j);
        global[j] = match kids.len() {
            0 => parent_g,
            1 => {
                let c = kids[0];
                let rest = parent_g.rotate(sk.offset(c));
                Quaternion::from_to(rest, vec3::sub(pose[c], pose[j])).mul(&parent_g).normalized()
            }
            _ => {
                let from: Vec<_> = kids.iter().map(|&c| sk.offset(c)).collect();
                let to: Vec<_> = kids.iter().map(|&c| vec3::sub(pose[c], pose[j])).collect();
                kabsch(&from, &to)
            }
        };
        local[j] = parent_g.conjugate().mul(&global[j]).normalized();
    }
    local
}

fn dfs_order(sk: &Skeleton) -> Vec<usize> {
    let mut order = Vec::with_capacity(sk.joint_count());
    let mut stack = vec![0];
    while let Some(j) = stack.pop() {
        order.push(j);
        stack.extend(sk.children(j).into_iter().rev());
    }
    order
}

/// Writes a joint-space sequence as BVH text.
pub fn export_bvh(seq: &MotionSequence, sk: &Skeleton) -> Result<String> {
    let k = seq.joint_count()?;
    if k != sk.joint_count() {
        return Err(Error::WrongJointCount { expected: sk.joint_count(), found: k });
    }
    let order = dfs_order(sk);
    let mut out = String::from("HIERARCHY\n");
    write_joint(&mut out, sk, 0, 0);
    let _ = writeln!(out, "MOTION\nFrames: {}\nFrame Time: {:.8}", seq.frames(), 1.0 / seq.fps());
    for f in 0..seq.frames() {
        let pose = seq.pose(f);
        let local = solve_local_rotations(sk, &pose);
        let mut vals: Vec<f64> = pose[0].to_vec();
        for &j in &order {
            let e = euler_zxy(&local[j].to_rot()?);
            vals.extend(e.iter().map(|a| a.to_degrees()));
        }
        let line: Vec<String> = vals.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    Ok(out)
}

fn write_joint(out: &mut String, sk: &Skeleton, j: usize, depth: usize) {
    let pad = "  ".repeat(depth);
    let o = sk.offset(j);
    let kind = if j == 0 { "ROOT" } else { "JOINT" };
    let _ = writeln!(out, "{pad}{kind} {}\n{pad}{{", sk.name(j));
    let _ = writeln!(out, "{pad}  OFFSET {:.6} {:.6} {:.6}", o[0], o[1], o[2]);
    if j == 0 {
        let _ = writeln!(out, "{pad}  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation");
    } else {
        let _ = writeln!(out, "{pad}  CHANNELS 3 Zrotation Xrotation Yrotation");
    }
    let kids = sk.children(j);
    if kids.is_empty() {
        let _ = writeln!(out, "{pad}  End Site\n{pad}  {{\n{pad}    OFFSET 0.000000 0.000000 0.000000\n{pad}  }}");
    }
    for c in kids {
        write_joint(out, sk, c, depth + 1);
    }
    let _ = writeln!(out, "{pad}}}");
}

/// A parsed BVH clip. Joints are numbered in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Bvh {
    pub skeleton: Skeleton,
    pub fps: f64,
    pub root_positions: Vec<Vec3>,
    /// `frames * joints` local rotations, frame-major.
    pub rotations: Vec<Quaternion>,
}

impl Bvh {
    pub fn frames(&self) -> usize {
        self.root_positions.len()
    }

    /// Forward kinematics of the clip.
    pub fn positions(&self) -> Result<MotionSequence> {
        let roots: Vec<_> = self.root_positions.iter().map(|p| RootState::new(*p, 0.0)).collect();
        fk_positions(&self.skeleton, &self.rotations, &roots, self.fps)
    }
}

struct Tokens<'a> {
    it: std::iter::Peekable<std::str::SplitWhitespace<'a>>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.it.next().ok_or_else(|| Error::Format("unexpected end of BVH".into()))
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        let got = self.next()?;
        if got.eq_ignore_ascii_case(want) {
            Ok(())
        } else {
            Err(Error::Format(format!("expected `{want}`, found `{got}`")))
        }
    }

    fn number(&mut self) -> Result<f64> {
        let t = self.next()?;
        t.parse().map_err(|_| Error::Format(format!("bad number `{t}`")))
    }

    fn vec3(&mut self) -> Result<Vec3> {
        Ok([self.number()?, self.number()?, self.number()?])
    }
}

#[derive(Default)]
struct Hierarchy {
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
    names: Vec<String>,
    channels: Vec<Vec<String>>,
}

fn parse_joint(tok: &mut Tokens, h: &mut Hierarchy, parent: Option<usize>) -> Result<()> {
    let name = tok.next()?.to_string();
    tok.expect("{")?;
    tok.expect("OFFSET")?;
    let offset = tok.vec3()?;
    tok.expect("CHANNELS")?;
    let n = tok.number()? as usize;
    let channels = (0..n).map(|_| tok.next().map(str::to_string)).collect::<Result<Vec<_>>>()?;
    let id = h.parents.len();
    h.parents.push(parent);
    h.offsets.push(offset);
    h.names.push(name);
    h.channels.push(channels);
    loop {
        match tok.next()? {
            "}" => return Ok(()),
            "JOINT" => parse_joint(tok, h, Some(id))?,
            "End" => {
                tok.expect("Site")?;
                tok.expect("{")?;
                tok.expect("OFFSET")?;
                tok.vec3()?;
                tok.expect("}")?;
            }
            other => return Err(Error::Format(format!("unexpected `{other}` in hierarchy"))),
        }
    }
}

fn channel_rotation(names: &[String], values: &[f64]) -> Result<Quaternion> {
    let mut q = Quaternion::IDENTITY;
    for (n, v) in names.iter().zip(values) {
        let axis = match n.as_str() {
            "Xrotation" => [1.0, 0.0, 0.0],
            "Yrotation" => [0.0, 1.0, 0.0],
            "Zrotation" => [0.0, 0.0, 1.0],
            "Xposition" | "Yposition" | "Zposition" => continue,
            other => return Err(Error::Format(format!("unknown channel `{other}`"))),
        };
        q = q.mul(&Quaternion::from_axis_angle(axis, v.to_radians()));
    }
    Ok(q.normalized())
}

pub fn parse_bvh(text: &str) -> Result<Bvh> {
    let mut tok = Tokens { it: text.split_whitespace().peekable() };
    tok.expect("HIERARCHY")?;
    tok.expect("ROOT")?;
    let mut h = Hierarchy::default();
    parse_joint(&mut tok, &mut h, None)?;
    tok.expect("MOTION")?;
    tok.expect("Frames:")?;
    let frames = tok.number()? as usize;
    tok.expect("Frame")?;
    tok.expect("Time:")?;
    let dt = tok.number()?;
    if !(dt > 0.0) {
        return Err(Error::Format(format!("frame time {dt} is not positive")));
    }
    let skeleton = Skeleton::new(h.parents, h.offsets, Some(h.names))?;
    let k = skeleton.joint_count();
    let mut root_positions = Vec::with_capacity(frames);
    let mut rotations = Vec::with_capacity(frames * k);
    for _ in 0..frames {
        let mut root = skeleton.offset(0);
        for (j, names) in h.channels.iter().enumerate() {
            let values = names.iter().map(|_| tok.number()).collect::<Result<Vec<_>>>()?;
            for (n, v) in names.iter().zip(&values) {
                match n.as_str() {
                    "Xposition" if j == 0 => root[0] = *v,
                    "Yposition" if j == 0 => root[1] = *v,
                    "Zposition" if j == 0 => root[2] = *v,
                    _ => {}
                }
            }
            rotations.push(channel_rotation(names, &values)?);
        }
        root_positions.push(root);
    }
    if tok.it.peek().is_some() {
        return Err(Error::Format("trailing values after motion block".into()));
    }
    Ok(Bvh { skeleton, fps: 1.0 / dt, root_positions, rotations })
}
