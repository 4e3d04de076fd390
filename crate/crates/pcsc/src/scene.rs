//! Parametric synthetic workbench scenes: a desk plane plus one posed
//! industrial object (and optionally a welding clamp), surface-sampled under
//! a fixed overhead sensor model.
//!
//! Objects are unions of boxes and capped cylinders with exact signed
//! distance functions, so tests can verify that every sampled point lies on
//! a primitive surface. The sensor model removes downward-facing surface
//! points and desk points hidden under solids, then applies Gaussian jitter
//! and random dropout. All dimensions are meters; class separability, not
//! photorealism, is the goal.

use rand::Rng;

/// Axis of a capped cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// A solid primitive in the shape's local frame.
#[derive(Debug, Clone)]
pub enum Primitive {
    /// Axis-aligned box given by center and half-extents.
    Box { center: [f64; 3], half: [f64; 3] },
    /// Capped cylinder along `axis`; `base` is the center of the lower cap
    /// (along the axis), `length` its extent.
    Cylinder {
        axis: Axis,
        base: [f64; 3],
        radius: f64,
        length: f64,
    },
}

fn rotate_axes(p: [f64; 3], axis: Axis) -> [f64; 3] {
    // Maps the cylinder axis onto +z: returns (u, v, w) with w along `axis`.
    match axis {
        Axis::Z => p,
        Axis::X => [p[1], p[2], p[0]],
        Axis::Y => [p[2], p[0], p[1]],
    }
}

fn unrotate_axes(p: [f64; 3], axis: Axis) -> [f64; 3] {
    match axis {
        Axis::Z => p,
        Axis::X => [p[2], p[0], p[1]],
        Axis::Y => [p[1], p[2], p[0]],
    }
}

impl Primitive {
    pub fn surface_area(&self) -> f64 {
        match self {
            Primitive::Box { half, .. } => {
                8.0 * (half[0] * half[1] + half[1] * half[2] + half[0] * half[2])
            }
            Primitive::Cylinder { radius, length, .. } => {
                2.0 * std::f64::consts::PI * radius * (length + radius)
            }
        }
    }

    /// Exact signed distance to the primitive surface (negative inside).
    pub fn sdf(&self, p: [f64; 3]) -> f64 {
        match self {
            Primitive::Box { center, half } => {
                let q = [
                    (p[0] - center[0]).abs() - half[0],
                    (p[1] - center[1]).abs() - half[1],
                    (p[2] - center[2]).abs() - half[2],
                ];
                let outside = [q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)];
                let out_len =
                    (outside[0] * outside[0] + outside[1] * outside[1] + outside[2] * outside[2])
                        .sqrt();
                out_len + q[0].max(q[1]).max(q[2]).min(0.0)
            }
            Primitive::Cylinder {
                axis,
                base,
                radius,
                length,
            } => {
                let local = rotate_axes(
                    [p[0] - base[0], p[1] - base[1], p[2] - base[2]],
                    *axis,
                );
                let w = local[2] - length / 2.0;
                let dr = (local[0] * local[0] + local[1] * local[1]).sqrt() - radius;
                let dh = w.abs() - length / 2.0;
                let outside = (dr.max(0.0).powi(2) + dh.max(0.0).powi(2)).sqrt();
                outside + dr.max(dh).min(0.0)
            }
        }
    }

    /// Uniform area-weighted surface sample: returns the point and its
    /// outward normal, both in the local frame.
    pub fn sample_surface<R: Rng>(&self, rng: &mut R) -> ([f64; 3], [f64; 3]) {
        match self {
            Primitive::Box { center, half } => {
                let areas = [
                    half[1] * half[2], // x faces (quarter area, common factor 4)
                    half[0] * half[2], // y faces
                    half[0] * half[1], // z faces
                ];
                let total = 2.0 * (areas[0] + areas[1] + areas[2]);
                let mut pick = rng.gen_range(0.0..total);
                let mut face_axis = 2usize;
                let mut positive = true;
                'outer: for (a, &area) in areas.iter().enumerate() {
                    for sign in [true, false] {
                        if pick < area {
                            face_axis = a;
                            positive = sign;
                            break 'outer;
                        }
                        pick -= area;
                    }
                }
                let mut p = *center;
                let mut normal = [0.0; 3];
                p[face_axis] += if positive { half[face_axis] } else { -half[face_axis] };
                normal[face_axis] = if positive { 1.0 } else { -1.0 };
                let (u, v) = ((face_axis + 1) % 3, (face_axis + 2) % 3);
                p[u] += rng.gen_range(-half[u]..=half[u]);
                p[v] += rng.gen_range(-half[v]..=half[v]);
                (p, normal)
            }
            Primitive::Cylinder {
                axis,
                base,
                radius,
                length,
            } => {
                let lateral = 2.0 * std::f64::consts::PI * radius * length;
                let cap = std::f64::consts::PI * radius * radius;
                let pick = rng.gen_range(0.0..lateral + 2.0 * cap);
                let (local, normal_local) = if pick < lateral {
                    let theta = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                    let h = rng.gen_range(0.0..*length);
                    (
                        [radius * theta.cos(), radius * theta.sin(), h],
                        [theta.cos(), theta.sin(), 0.0],
                    )
                } else {
                    let top = pick < lateral + cap;
                    let r = radius * rng.gen_range(0.0f64..1.0).sqrt();
                    let theta = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                    (
                        [
                            r * theta.cos(),
                            r * theta.sin(),
                            if top { *length } else { 0.0 },
                        ],
                        [0.0, 0.0, if top { 1.0 } else { -1.0 }],
                    )
                };
                let local = unrotate_axes(local, *axis);
                let normal = unrotate_axes(normal_local, *axis);
                (
                    [base[0] + local[0], base[1] + local[1], base[2] + local[2]],
                    normal,
                )
            }
        }
    }
}

/// Planar pose: yaw about z, then translation in the desk plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub yaw: f64,
    pub x: f64,
    pub y: f64,
}

impl Pose {
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            c * p[0] - s * p[1] + self.x,
            s * p[0] + c * p[1] + self.y,
            p[2],
        ]
    }

    pub fn apply_dir(&self, d: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [c * d[0] - s * d[1], s * d[0] + c * d[1], d[2]]
    }

    pub fn invert(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let q = [p[0] - self.x, p[1] - self.y, p[2]];
        [c * q[0] + s * q[1], -s * q[0] + c * q[1], q[2]]
    }
}

/// A union of primitives posed on the desk.
#[derive(Debug, Clone)]
pub struct PosedShape {
    pub prims: Vec<Primitive>,
    pub pose: Pose,
}

impl PosedShape {
    /// Distance from a world-space point to the nearest primitive surface.
    pub fn surface_distance(&self, p_world: [f64; 3]) -> f64 {
        let p = self.pose.invert(p_world);
        self.prims
            .iter()
            .map(|prim| prim.sdf(p).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Signed distance to the union (negative strictly inside any primitive).
    pub fn sdf(&self, p_world: [f64; 3]) -> f64 {
        let p = self.pose.invert(p_world);
        self.prims
            .iter()
            .map(|prim| prim.sdf(p))
            .fold(f64::INFINITY, f64::min)
    }

    fn total_area(&self) -> f64 {
        self.prims.iter().map(Primitive::surface_area).sum()
    }

    /// Samples `n` surface points (world frame) with outward normals.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<([f64; 3], [f64; 3])> {
        let total = self.total_area();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut pick = rng.gen_range(0.0..total);
            let mut chosen = self.prims.len() - 1;
            for (i, prim) in self.prims.iter().enumerate() {
                let a = prim.surface_area();
                if pick < a {
                    chosen = i;
                    break;
                }
                pick -= a;
            }
            let (p, nrm) = self.prims[chosen].sample_surface(rng);
            out.push((self.pose.apply(p), self.pose.apply_dir(nrm)));
        }
        out
    }
}

/// The seven generator shapes; the two cylinder variants share class 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    CylinderSmall,
    CylinderLarge,
    LPipe,
    TPipe,
    LSolid,
    SquarePlate,
    DoubleSquarePlate,
}

pub const N_CLASSES: usize = 6;

pub const CLASS_NAMES: [&str; N_CLASSES] = [
    "cylinder",
    "l_pipe",
    "t_pipe",
    "l_solid",
    "square_plate",
    "double_square_plate",
];

impl ShapeKind {
    pub fn class(&self) -> usize {
        match self {
            ShapeKind::CylinderSmall | ShapeKind::CylinderLarge => 0,
            ShapeKind::LPipe => 1,
            ShapeKind::TPipe => 2,
            ShapeKind::LSolid => 3,
            ShapeKind::SquarePlate => 4,
            ShapeKind::DoubleSquarePlate => 5,
        }
    }

    /// Picks a generator shape for a class; classes with one variant ignore
    /// `variant`.
    pub fn for_class(class: usize, variant: bool) -> ShapeKind {
        match class {
            0 => {
                if variant {
                    ShapeKind::CylinderLarge
                } else {
                    ShapeKind::CylinderSmall
                }
            }
            1 => ShapeKind::LPipe,
            2 => ShapeKind::TPipe,
            3 => ShapeKind::LSolid,
            4 => ShapeKind::SquarePlate,
            5 => ShapeKind::DoubleSquarePlate,
            _ => panic!("class out of range"),
        }
    }

    /// Primitive union in the local frame, resting on z = 0.
    pub fn primitives(&self) -> Vec<Primitive> {
        let cyl = |axis, base, radius, length| Primitive::Cylinder {
            axis,
            base,
            radius,
            length,
        };
        match self {
            ShapeKind::CylinderSmall => vec![cyl(Axis::Z, [0.0, 0.0, 0.0], 0.025, 0.09)],
            ShapeKind::CylinderLarge => vec![cyl(Axis::Z, [0.0, 0.0, 0.0], 0.04, 0.14)],
            ShapeKind::LPipe => vec![
                // Vertical riser and a horizontal arm near its top.
                cyl(Axis::Z, [0.0, 0.0, 0.0], 0.018, 0.12),
                cyl(Axis::X, [0.0, 0.0, 0.102], 0.018, 0.10),
            ],
            ShapeKind::TPipe => vec![
                // Horizontal run resting on the desk plus a vertical branch.
                cyl(Axis::X, [-0.07, 0.0, 0.018], 0.018, 0.14),
                cyl(Axis::Z, [0.0, 0.0, 0.018], 0.018, 0.09),
            ],
            ShapeKind::LSolid => vec![
                Primitive::Box {
                    center: [0.05, 0.02, 0.015],
                    half: [0.05, 0.02, 0.015],
                },
                Primitive::Box {
                    center: [0.02, 0.07, 0.015],
                    half: [0.02, 0.05, 0.015],
                },
            ],
            ShapeKind::SquarePlate => vec![Primitive::Box {
                center: [0.0, 0.0, 0.006],
                half: [0.05, 0.05, 0.006],
            }],
            ShapeKind::DoubleSquarePlate => vec![
                Primitive::Box {
                    center: [0.0, 0.0, 0.005],
                    half: [0.06, 0.06, 0.005],
                },
                Primitive::Box {
                    center: [0.0, 0.0, 0.015],
                    half: [0.035, 0.035, 0.005],
                },
            ],
        }
    }
}

/// Welding clamp: box base with a vertical cylindrical column.
pub fn clamp_primitives() -> Vec<Primitive> {
    vec![
        Primitive::Box {
            center: [0.0, 0.0, 0.015],
            half: [0.025, 0.0175, 0.015],
        },
        Primitive::Cylinder {
            axis: Axis::Z,
            base: [0.0, 0.0, 0.03],
            radius: 0.01,
            length: 0.07,
        },
    ]
}

/// Where a scene point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Desk,
    Object,
    Clamp,
}

/// Desk half-extents (meters): the workspace is `[-x, x] x [-y, y]` at z = 0.
pub const DESK_HALF: [f64; 2] = [0.35, 0.25];

/// Full description of one scene to generate.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub shape: ShapeKind,
    pub pose: Pose,
    pub clamp_pose: Option<Pose>,
    /// Sensor jitter sigma in meters.
    pub sensor_sigma: f64,
    /// Probability of dropping each point.
    pub dropout: f64,
    /// Desk sampling density, points per square meter.
    pub desk_density: f64,
    /// Solid-surface sampling density, points per square meter.
    pub object_density: f64,
}

impl SceneSpec {
    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.sensor_sigma >= 0.0, "sensor sigma must be >= 0");
        anyhow::ensure!(
            (0.0..1.0).contains(&self.dropout),
            "dropout must be in [0, 1)"
        );
        anyhow::ensure!(
            self.pose.x.abs() <= DESK_HALF[0] && self.pose.y.abs() <= DESK_HALF[1],
            "object pose is off the desk"
        );
        Ok(())
    }
}

/// A generated scene: points plus the aligned per-point origin mask.
#[derive(Debug, Clone)]
pub struct Scene {
    pub points: Vec<[f64; 3]>,
    pub origins: Vec<Origin>,
}

/// Samples one scene: desk plane, posed object, optional clamp; overhead
/// visibility culling (downward normals and desk points under solids),
/// then jitter and dropout. Deterministic per RNG state.
pub fn generate_scene<R: Rng>(spec: &SceneSpec, rng: &mut R) -> anyhow::Result<Scene> {
    spec.validate()?;
    let object = PosedShape {
        prims: spec.shape.primitives(),
        pose: spec.pose,
    };
    let clamp = spec.clamp_pose.map(|pose| PosedShape {
        prims: clamp_primitives(),
        pose,
    });

    let mut points = Vec::new();
    let mut origins = Vec::new();

    // Desk plane, excluding spots hidden under a solid.
    let desk_area = 4.0 * DESK_HALF[0] * DESK_HALF[1];
    let n_desk = (desk_area * spec.desk_density).round() as usize;
    for _ in 0..n_desk {
        let p = [
            rng.gen_range(-DESK_HALF[0]..DESK_HALF[0]),
            rng.gen_range(-DESK_HALF[1]..DESK_HALF[1]),
            0.0,
        ];
        let probe = [p[0], p[1], 1e-5];
        let hidden = object.sdf(probe) < 0.0
            || clamp.as_ref().map_or(false, |c| c.sdf(probe) < 0.0);
        if !hidden {
            points.push(p);
            origins.push(Origin::Desk);
        }
    }

    // Solid surfaces, culled to upward- or side-facing normals.
    let sample_solid = |shape: &PosedShape, origin: Origin, points: &mut Vec<[f64; 3]>, origins: &mut Vec<Origin>, rng: &mut R| {
        let n = (shape.total_area() * spec.object_density).round() as usize;
        for (p, normal) in shape.sample(n, rng) {
            if normal[2] < 0.0 {
                continue; // downward-facing: invisible to the overhead sensor
            }
            points.push(p);
            origins.push(origin);
        }
    };
    sample_solid(&object, Origin::Object, &mut points, &mut origins, rng);
    if let Some(clamp) = &clamp {
        sample_solid(clamp, Origin::Clamp, &mut points, &mut origins, rng);
    }

    // Sensor model: Gaussian jitter then dropout.
    if spec.sensor_sigma > 0.0 {
        for p in &mut points {
            for c in p.iter_mut() {
                *c += spec.sensor_sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
    }
    if spec.dropout > 0.0 {
        let mut kept_points = Vec::with_capacity(points.len());
        let mut kept_origins = Vec::with_capacity(origins.len());
        for (p, o) in points.iter().zip(&origins) {
            if rng.gen_range(0.0..1.0) >= spec.dropout {
                kept_points.push(*p);
                kept_origins.push(*o);
            }
        }
        points = kept_points;
        origins = kept_origins;
    }

    anyhow::ensure!(!points.is_empty(), "scene generation produced no points");
    Ok(Scene { points, origins })
}
