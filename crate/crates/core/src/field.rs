//! Analytic scene fields and frustum-aligned cost-volume grids.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Camera;

/// Linear RGB triple.
pub type Rgb = Vector3<f64>;

/// Density and color at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub density: f64,
    pub color: Rgb,
}

/// Anything that can be queried for density and color in world space.
pub trait RadianceField {
    fn eval(&self, point: &Vector3<f64>) -> FieldSample;
    fn background(&self) -> Rgb;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vector3<f64>, radius: f64 },
    Box { min: Vector3<f64>, max: Vector3<f64> },
    /// Isotropic Gaussian blob; its density is scaled by `exp(-r^2 / 2 s^2)`.
    Gaussian { center: Vector3<f64>, scale: f64 },
}

impl Shape {
    /// Fraction of the primitive's density present at `point` (1 or 0 for solids).
    fn occupancy(&self, point: &Vector3<f64>) -> f64 {
        match *self {
            Shape::Sphere { center, radius } => {
                if (point - center).norm_squared() <= radius * radius {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Box { min, max } => {
                let inside = (0..3).all(|i| point[i] >= min[i] && point[i] <= max[i]);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Gaussian { center, scale } => {
                (-(point - center).norm_squared() / (2.0 * scale * scale)).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub density: f64,
    pub color: Rgb,
}

impl Primitive {
    pub fn new(shape: Shape, density: f64, color: Rgb) -> Result<Self> {
        if !(density >= 0.0 && density.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "primitive density must be finite and non-negative, got {density}"
            )));
        }
        check_color(&color)?;
        match shape {
            Shape::Sphere { radius, .. } if !(radius > 0.0) => {
                return Err(Error::InvalidArgument("sphere radius must be positive".into()))
            }
            Shape::Gaussian { scale, .. } if !(scale > 0.0) => {
                return Err(Error::InvalidArgument("gaussian scale must be positive".into()))
            }
            Shape::Box { min, max } if (0..3).any(|i| min[i] > max[i]) => {
                return Err(Error::InvalidArgument("box min must not exceed max".into()))
            }
            _ => {}
        }
        Ok(Primitive {
            shape,
            density,
            color,
        })
    }
}

fn check_color(color: &Rgb) -> Result<()> {
    if color.iter().all(|c| (0.0..=1.0).contains(c)) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "color components must lie in [0, 1], got {color:?}"
        )))
    }
}

/// Ground-truth scene made of density primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneField {
    primitives: Vec<Primitive>,
    background: Rgb,
}

impl SceneField {
    pub fn new(primitives: Vec<Primitive>, background: Rgb) -> Result<Self> {
        check_color(&background)?;
        Ok(SceneField {
            primitives,
            background,
        })
    }

    pub fn empty(background: Rgb) -> Self {
        SceneField {
            primitives: Vec::new(),
            background,
        }
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }
}

impl RadianceField for SceneField {
    /// Summed density; color is the density-weighted mean of the primitives present.
    fn eval(&self, point: &Vector3<f64>) -> FieldSample {
        let mut density = 0.0;
        let mut weighted = Rgb::zeros();
        for prim in &self.primitives {
            let sigma = prim.density * prim.shape.occupancy(point);
            if sigma > 0.0 {
                density += sigma;
                weighted += prim.color * sigma;
            }
        }
        if density > 0.0 {
            FieldSample {
                density,
                color: weighted / density,
            }
        } else {
            FieldSample {
                density: 0.0,
                color: self.background,
            }
        }
    }

    fn background(&self) -> Rgb {
        self.background
    }
}

/// Emulation of disocclusion artifacts: grid nodes seen by fewer than `quorum`
/// member views get their density overwritten.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    pub enabled: bool,
    /// Minimum number of member views that must see a node; `None` means all of them.
    pub quorum: Option<usize>,
    pub value: f64,
}

impl Corruption {
    pub fn off() -> Self {
        Corruption {
            enabled: false,
            quorum: None,
            value: 0.0,
        }
    }
}

impl Default for Corruption {
    fn default() -> Self {
        Corruption {
            enabled: true,
            quorum: None,
            value: 0.0,
        }
    }
}

/// Number of grid nodes along (u, v, depth).
pub type Resolution = [usize; 3];

/// Density/color grid over a reference camera frustum.
///
/// Node `(i, j, k)` sits at pixel `(i W / (n_u - 1), j H / (n_v - 1))` and camera
/// depth `near + k (far - near) / (n_d - 1)`, so the lattice spans the whole frustum.
#[derive(Debug, Clone)]
pub struct CostVolume {
    reference: Camera,
    members: Vec<Camera>,
    resolution: Resolution,
    density: Vec<f64>,
    color: Vec<Rgb>,
    background: Rgb,
}

/// Trilinear sample of a cost volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeSample {
    pub density: f64,
    pub color: Rgb,
    pub valid: bool,
}

impl CostVolume {
    /// Wraps an existing grid; `density` and `color` are indexed `(k * n_v + j) * n_u + i`.
    pub fn from_grid(
        reference: Camera,
        members: Vec<Camera>,
        resolution: Resolution,
        density: Vec<f64>,
        color: Vec<Rgb>,
        background: Rgb,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyMembers);
        }
        if resolution.iter().any(|&n| n < 2) {
            return Err(Error::InvalidResolution(resolution));
        }
        let count = resolution.iter().product::<usize>();
        if density.len() != count || color.len() != count {
            return Err(Error::InvalidArgument(format!(
                "grid holds {} densities and {} colors, resolution {:?} needs {count}",
                density.len(),
                color.len(),
                resolution
            )));
        }
        if let Some(bad) = density.iter().find(|s| !(**s >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "grid densities must be non-negative, found {bad}"
            )));
        }
        Ok(CostVolume {
            reference,
            members,
            resolution,
            density,
            color,
            background,
        })
    }

    pub fn reference(&self) -> &Camera {
        &self.reference
    }

    pub fn members(&self) -> &[Camera] {
        &self.members
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn background(&self) -> Rgb {
        self.background
    }

    pub fn densities(&self) -> &[f64] {
        &self.density
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.color
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nu, nv, _] = self.resolution;
        (k * nv + j) * nu + i
    }

    /// World position of grid node `(i, j, k)`.
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        node_position(&self.reference, self.resolution, i, j, k)
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> FieldSample {
        let idx = self.index(i, j, k);
        FieldSample {
            density: self.density[idx],
            color: self.color[idx],
        }
    }

    /// Trilinear interpolation over the (u, v, depth) lattice; points outside the
    /// reference frustum are invalid and read as empty space.
    pub fn sample(&self, point: &Vector3<f64>) -> VolumeSample {
        let proj = self.reference.project(point);
        if !proj.inside {
            return VolumeSample {
                density: 0.0,
                color: self.background,
                valid: false,
            };
        }
        let [nu, nv, nd] = self.resolution;
        let k = &self.reference.intrinsics;
        let gu = proj.pixel.x / k.width as f64 * (nu - 1) as f64;
        let gv = proj.pixel.y / k.height as f64 * (nv - 1) as f64;
        let gd = (proj.depth - self.reference.near) / (self.reference.far - self.reference.near)
            * (nd - 1) as f64;
        let (i0, fu) = split_coord(gu, nu);
        let (j0, fv) = split_coord(gv, nv);
        let (k0, fd) = split_coord(gd, nd);

        let mut density = 0.0;
        let mut color = Rgb::zeros();
        for (dk, wd) in [(0, 1.0 - fd), (1, fd)] {
            for (dj, wv) in [(0, 1.0 - fv), (1, fv)] {
                for (di, wu) in [(0, 1.0 - fu), (1, fu)] {
                    let w = wu * wv * wd;
                    let idx = self.index(i0 + di, j0 + dj, k0 + dk);
                    density += w * self.density[idx];
                    color += self.color[idx] * w;
                }
            }
        }
        VolumeSample {
            density: density.max(0.0),
            color,
            valid: true,
        }
    }
}

/// Lower lattice index and fractional offset, clamped so that `index + 1` is valid.
#[inline]
fn split_coord(g: f64, n: usize) -> (usize, f64) {
    let max_cell = (n - 2) as f64;
    let base = g.floor().clamp(0.0, max_cell);
    (base as usize, (g - base).clamp(0.0, 1.0))
}

fn node_position(reference: &Camera, resolution: Resolution, i: usize, j: usize, k: usize) -> Vector3<f64> {
    let [nu, nv, nd] = resolution;
    let intr = &reference.intrinsics;
    let u = i as f64 * intr.width as f64 / (nu - 1) as f64;
    let v = j as f64 * intr.height as f64 / (nv - 1) as f64;
    let depth = reference.near + k as f64 * (reference.far - reference.near) / (nd - 1) as f64;
    reference.unproject(Vector2::new(u, v), depth)
}

/// Samples `field` at every grid node of the reference frustum, then applies the
/// member-quorum corruption.
pub fn build_cost_volume<F>(
    field: &F,
    reference: &Camera,
    members: &[Camera],
    resolution: Resolution,
    corruption: &Corruption,
) -> Result<CostVolume>
where
    F: RadianceField + Sync,
{
    if members.is_empty() {
        return Err(Error::EmptyMembers);
    }
    if resolution.iter().any(|&n| n < 2) {
        return Err(Error::InvalidResolution(resolution));
    }
    let quorum = corruption.quorum.unwrap_or(members.len());
    if corruption.enabled && (quorum == 0 || quorum > members.len()) {
        return Err(Error::InvalidArgument(format!(
            "quorum {quorum} must lie in 1..={}",
            members.len()
        )));
    }
    if !(corruption.value >= 0.0) {
        return Err(Error::InvalidArgument(
            "corruption density must be non-negative".into(),
        ));
    }

    let [nu, nv, nd] = resolution;
    let slice = nu * nv;
    let mut density = vec![0.0; slice * nd];
    let mut color = vec![Rgb::zeros(); slice * nd];
    density
        .par_chunks_mut(slice)
        .zip(color.par_chunks_mut(slice))
        .enumerate()
        .for_each(|(k, (dens, cols))| {
            for j in 0..nv {
                for i in 0..nu {
                    let p = node_position(reference, resolution, i, j, k);
                    let s = field.eval(&p);
                    let idx = j * nu + i;
                    dens[idx] = s.density;
                    cols[idx] = s.color;
                    if corruption.enabled {
                        let seen = members.iter().filter(|m| m.contains(&p)).count();
                        if seen < quorum {
                            dens[idx] = corruption.value;
                        }
                    }
                }
            }
        });

    CostVolume::from_grid(
        *reference,
        members.to_vec(),
        resolution,
        density,
        color,
        field.background(),
    )
}
