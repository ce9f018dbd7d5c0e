//! Piecewise-planar textured scenes rendered by ray casting.
//!
//! Planes are infinite; the nearest positive-range hit wins, which models
//! room corners correctly when the camera stays inside the convex region.
//! Textures are smooth (polynomial smoothstep edges), so image intensity is
//! differentiable and event timing interpolation stays well behaved.

use crate::geometry::{CameraIntrinsics, Pose};
use crate::grid::Grid;
use nalgebra::Vector3;
use std::f64::consts::TAU;

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Texture over the two in-plane coordinates, in metres.
#[derive(Debug, Clone)]
pub enum Texture {
    Uniform(f64),
    /// Soft square-wave stripes perpendicular to the chosen in-plane axis.
    Stripes {
        along_u: bool,
        period_m: f64,
        low: f64,
        high: f64,
        /// Transition softness in sine units; smaller is sharper.
        edge: f64,
    },
    /// Bright lines along both in-plane axes on a dark ground.
    GridLines {
        period_m: f64,
        low: f64,
        high: f64,
        edge: f64,
    },
}

impl Texture {
    fn eval(&self, u: f64, v: f64) -> f64 {
        match *self {
            Texture::Uniform(i) => i,
            Texture::Stripes {
                along_u,
                period_m,
                low,
                high,
                edge,
            } => {
                let s = if along_u { u } else { v };
                let wave = (TAU * s / period_m).sin();
                low + (high - low) * smoothstep(-edge, edge, wave)
            }
            Texture::GridLines {
                period_m,
                low,
                high,
                edge,
            } => {
                let wu = (TAU * u / period_m).sin();
                let wv = (TAU * v / period_m).sin();
                let line = smoothstep(-edge, edge, wu).max(smoothstep(-edge, edge, wv));
                low + (high - low) * line
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Plane {
    pub origin: Vector3<f64>,
    normal: Vector3<f64>,
    axis_u: Vector3<f64>,
    axis_v: Vector3<f64>,
    pub texture: Texture,
}

impl Plane {
    /// `u_hint` fixes the in-plane texture orientation; it must not be
    /// parallel to the normal.
    pub fn new(origin: Vector3<f64>, normal: Vector3<f64>, u_hint: Vector3<f64>, texture: Texture) -> Self {
        let n = normal.normalize();
        let u = (u_hint - n * u_hint.dot(&n)).normalize();
        let v = n.cross(&u);
        Self {
            origin,
            normal: n,
            axis_u: u,
            axis_v: v,
            texture,
        }
    }

    /// Ray-plane range such that `point = origin_ray + range * dir`, if the
    /// ray is not parallel and hits in front.
    fn intersect(&self, ray_origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = dir.dot(&self.normal);
        if denom.abs() < 1e-12 {
            return None;
        }
        let range = (self.origin - ray_origin).dot(&self.normal) / denom;
        (range > 1e-9).then_some(range)
    }

    fn intensity_at(&self, point: &Vector3<f64>) -> f64 {
        let d = point - self.origin;
        self.texture.eval(d.dot(&self.axis_u), d.dot(&self.axis_v))
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub planes: Vec<Plane>,
    /// Intensity returned for rays that miss everything.
    pub background: f64,
}

impl Scene {
    /// Nearest hit along the ray: (range, intensity).
    pub fn trace(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64)> {
        let mut best: Option<(f64, usize)> = None;
        for (k, plane) in self.planes.iter().enumerate() {
            if let Some(r) = plane.intersect(origin, dir) {
                if best.map_or(true, |(br, _)| r < br) {
                    best = Some((r, k));
                }
            }
        }
        best.map(|(r, k)| (r, self.planes[k].intensity_at(&(origin + dir * r))))
    }

    /// Log-intensity image from `world_from_cam`. Ray directions use the
    /// unit-depth convention, so the hit range equals camera-frame depth.
    pub fn render_log(&self, cam: &CameraIntrinsics, world_from_cam: &Pose, log_eps: f64) -> Grid<f64> {
        let rot = world_from_cam.rotation;
        let origin = world_from_cam.translation;
        Grid::from_fn(cam.width, cam.height, |x, y| {
            let dir = rot * cam.back_project(f64::from(x), f64::from(y));
            let i = self
                .trace(&origin, &dir)
                .map_or(self.background, |(_, i)| i);
            (log_eps + i).ln()
        })
    }

    /// Ground-truth inverse depth per pixel; zero where nothing is hit.
    pub fn inverse_depth_map(&self, cam: &CameraIntrinsics, world_from_cam: &Pose) -> Grid<f64> {
        let rot = world_from_cam.rotation;
        let origin = world_from_cam.translation;
        Grid::from_fn(cam.width, cam.height, |x, y| {
            let dir = rot * cam.back_project(f64::from(x), f64::from(y));
            self.trace(&origin, &dir).map_or(0.0, |(r, _)| 1.0 / r)
        })
    }

    /// Largest inverse depth visible over a coarse pixel subsampling; an
    /// upper bound on image motion per unit camera translation.
    pub fn max_inverse_depth(&self, cam: &CameraIntrinsics, world_from_cam: &Pose, stride: u32) -> f64 {
        let rot = world_from_cam.rotation;
        let origin = world_from_cam.translation;
        let mut best: f64 = 0.0;
        let mut y = 0u32;
        while y < cam.height {
            let mut x = 0u32;
            while x < cam.width {
                let dir = rot * cam.back_project(f64::from(x), f64::from(y));
                if let Some((r, _)) = self.trace(&origin, &dir) {
                    best = best.max(1.0 / r);
                }
                x += stride;
            }
            y += stride;
        }
        best
    }

    /// A wall ahead, a floor below and a wall to the left, textured so that
    /// both horizontal and vertical intensity edges are present.
    pub fn desk_corner(wall_distance_m: f64) -> Self {
        let stripe = |along_u| Texture::Stripes {
            along_u,
            period_m: 0.22,
            low: 0.15,
            high: 0.85,
            edge: 0.3,
        };
        Self {
            planes: vec![
                Plane::new(
                    Vector3::new(0.0, 0.0, wall_distance_m),
                    Vector3::new(0.0, 0.0, -1.0),
                    Vector3::new(1.0, 0.0, 0.0),
                    Texture::GridLines {
                        period_m: 0.24,
                        low: 0.18,
                        high: 0.82,
                        edge: 0.3,
                    },
                ),
                Plane::new(
                    Vector3::new(0.0, 0.9, 0.0),
                    Vector3::new(0.0, -1.0, 0.0),
                    Vector3::new(1.0, 0.0, 0.0),
                    stripe(true),
                ),
                Plane::new(
                    Vector3::new(-1.4, 0.0, 0.0),
                    Vector3::new(1.0, 0.0, 0.0),
                    Vector3::new(0.0, 0.0, 1.0),
                    stripe(false),
                ),
            ],
            background: 0.5,
        }
    }

    /// Single fronto-parallel wall with vertical stripes.
    pub fn striped_wall(distance_m: f64, period_m: f64) -> Self {
        Self {
            planes: vec![Plane::new(
                Vector3::new(0.0, 0.0, distance_m),
                Vector3::new(0.0, 0.0, -1.0),
                Vector3::new(1.0, 0.0, 0.0),
                Texture::Stripes {
                    along_u: true,
                    period_m,
                    low: 0.15,
                    high: 0.85,
                    edge: 0.3,
                },
            )],
            background: 0.5,
        }
    }

    /// Single fronto-parallel wall with grid lines in both orientations.
    pub fn grid_wall(distance_m: f64, period_m: f64) -> Self {
        Self {
            planes: vec![Plane::new(
                Vector3::new(0.0, 0.0, distance_m),
                Vector3::new(0.0, 0.0, -1.0),
                Vector3::new(1.0, 0.0, 0.0),
                Texture::GridLines {
                    period_m,
                    low: 0.18,
                    high: 0.82,
                    edge: 0.3,
                },
            )],
            background: 0.5,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn test_cam() -> CameraIntrinsics {
        CameraIntrinsics {
            width: 64,
            height: 48,
            fx: 60.0,
            fy: 60.0,
            cx: 31.5,
            cy: 23.5,
        }
    }

    #[test]
    fn fronto_wall_depth_is_exact() {
        let scene = Scene::striped_wall(2.0, 0.25);
        let cam = test_cam();
        let inv = scene.inverse_depth_map(&cam, &Pose::identity());
        // Unit-depth rays make the range equal camera z, so a fronto wall is
        // constant inverse depth across the whole image.
        for y in 0..48 {
            for x in 0..64 {
                assert_relative_eq!(inv.get(x, y), 0.5, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn nearest_plane_wins() {
        let mut scene = Scene::striped_wall(2.0, 0.25);
        scene.planes.push(Plane::new(
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::new(1.0, 0.0, 0.0),
            Texture::Uniform(0.9),
        ));
        let (range, intensity) = scene
            .trace(&Vector3::zeros(), &Vector3::new(0.0, 0.0, 1.0))
            .unwrap();
        assert_relative_eq!(range, 1.0, epsilon = 1e-12);
        assert_relative_eq!(intensity, 0.9, epsilon = 1e-12);
    }

    #[test]
    fn rays_away_from_planes_miss() {
        let scene = Scene::striped_wall(2.0, 0.25);
        assert!(scene
            .trace(&Vector3::zeros(), &Vector3::new(0.0, 0.0, -1.0))
            .is_none());
    }

    #[test]
    fn stripe_texture_alternates_and_stays_in_range() {
        let tex = Texture::Stripes {
            along_u: true,
            period_m: 0.2,
            low: 0.1,
            high: 0.9,
            edge: 0.3,
        };
        let bright = tex.eval(0.05, 0.0);
        let dark = tex.eval(0.15, 0.0);
        assert!(bright > 0.85 && dark < 0.15);
        for k in 0..200 {
            let v = tex.eval(k as f64 * 0.013, 0.4);
            assert!((0.1..=0.9).contains(&v));
        }
    }

    #[test]
    fn grid_texture_has_lines_in_both_directions() {
        let tex = Texture::GridLines {
            period_m: 0.2,
            low: 0.1,
            high: 0.9,
            edge: 0.3,
        };
        // On a u-line, on a v-line, and in a cell interior.
        assert!(tex.eval(0.05, 0.43) > 0.8);
        assert!(tex.eval(0.43, 0.05) > 0.8);
        assert!(tex.eval(0.15, 0.15) < 0.2);
    }

    #[test]
    fn desk_corner_covers_the_frame() {
        let scene = Scene::desk_corner(2.2);
        let cam = test_cam();
        let inv = scene.inverse_depth_map(&cam, &Pose::identity());
        let mut hits = 0;
        for v in inv.data() {
            if *v > 0.0 {
                hits += 1;
            }
        }
        assert_eq!(hits, 64 * 48);
        assert!(scene.max_inverse_depth(&cam, &Pose::identity(), 8) > 0.45);
    }

    #[test]
    fn render_log_matches_texture_at_center() {
        let scene = Scene::striped_wall(2.0, 0.25);
        let cam = test_cam();
        let img = scene.render_log(&cam, &Pose::identity(), 1e-2);
        // Optical center looks at (0, 0) on the wall, a stripe boundary;
        // sample slightly off-center and compare with the texture directly.
        let x_px = 40u32;
        let u_m = (x_px as f64 - cam.cx) / cam.fx * 2.0;
        let expected = match &scene.planes[0].texture {
            Texture::Stripes { .. } => scene.planes[0].texture.eval(u_m, 0.0),
            _ => unreachable!(),
        };
        assert_relative_eq!(img.get(x_px, 23), (1e-2 + expected).ln(), epsilon = 1e-9);
    }
}
