//! Sphere/tangent-plane mathematics and per-pixel maps between an
//! equirectangular panorama and perspective (gnomonic) sub-views.
//!
//! Frames and conventions:
//!
//! * Tangent plane: `(u, v)` in `[0, 2T]²` with `T = tan(fov / 2)`; the
//!   plane centre `(T, T)` is the view axis, `u` grows rightwards and `v`
//!   grows downwards.
//! * Sphere: `Y` points up, the unrotated view looks along `+Z`.
//! * Geographic: `lat = asin(Y)`, `lon = atan2(-Z, X)`, degrees, latitude
//!   positive upwards.
//! * Panorama pixels: `x = (lon / 360 + 0.5) * W`, `y = (0.5 - lat / 180) * H`,
//!   continuous coordinates (pixel `i` spans `[i, i + 1)`).
//! * Sub-view pixels: `u = 2T * px / out_width`, `v = 2T * py / out_height`,
//!   so the centre of pixel `i` sits at `px = i + 0.5`.

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Longitude/latitude in degrees. Longitude lives in `[-180, 180)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalDirection {
    lon: f64,
    lat: f64,
}

impl SphericalDirection {
    /// Longitude is normalised; latitude outside `[-90, 90]` is an error.
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(Error::invalid("non-finite direction"));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::invalid(format!("latitude {lat} outside [-90, 90]")));
        }
        Ok(SphericalDirection {
            lon: normalize_lon(lon),
            lat,
        })
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }
}

/// Folds a longitude in degrees into `[-180, 180)`.
pub fn normalize_lon(lon: f64) -> f64 {
    let l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if l >= 180.0 {
        l - 360.0
    } else {
        l
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector {
    x: f64,
    y: f64,
    z: f64,
}

impl UnitVector {
    /// Normalises `(x, y, z)`; the zero vector and non-finite input are rejected.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::invalid(format!(
                "cannot normalise ({x}, {y}, {z})"
            )));
        }
        Ok(UnitVector {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    fn from_vector_unchecked(v: Vector3<f64>) -> Self {
        UnitVector {
            x: v.x,
            y: v.y,
            z: v.z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanePoint {
    pub u: f64,
    pub v: f64,
}

/// One perspective sub-view: field of view, viewing direction and raster size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewSpec {
    fov: f64,
    theta_c: f64,
    phi_c: f64,
    out_width: u32,
    out_height: u32,
    rotation: Matrix3<f64>,
}

impl ViewSpec {
    /// `fov` in degrees (exclusive of 0 and 180), `theta_c` the view
    /// longitude, `phi_c` the view latitude.
    pub fn new(fov: f64, theta_c: f64, phi_c: f64, out_width: u32, out_height: u32) -> Result<Self> {
        if !(fov > 0.0 && fov < 180.0) {
            return Err(Error::invalid(format!("fov {fov} must lie in (0, 180)")));
        }
        if !theta_c.is_finite() || !(-90.0..=90.0).contains(&phi_c) {
            return Err(Error::invalid(format!(
                "bad view direction ({theta_c}, {phi_c})"
            )));
        }
        if out_width < 2 || out_height < 2 {
            return Err(Error::invalid("sub-view raster must be at least 2x2"));
        }
        Ok(ViewSpec {
            fov,
            theta_c: normalize_lon(theta_c),
            phi_c,
            out_width,
            out_height,
            rotation: rotation_matrix(theta_c, phi_c),
        })
    }

    pub fn fov(&self) -> f64 {
        self.fov
    }

    pub fn theta_c(&self) -> f64 {
        self.theta_c
    }

    pub fn phi_c(&self) -> f64 {
        self.phi_c
    }

    pub fn out_width(&self) -> u32 {
        self.out_width
    }

    pub fn out_height(&self) -> u32 {
        self.out_height
    }

    pub fn tan_half_fov(&self) -> f64 {
        (self.fov.to_radians() / 2.0).tan()
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn pixel_to_plane(&self, px: f64, py: f64) -> PlanePoint {
        let t2 = 2.0 * self.tan_half_fov();
        PlanePoint {
            u: t2 * px / self.out_width as f64,
            v: t2 * py / self.out_height as f64,
        }
    }

    pub fn plane_to_pixel(&self, p: PlanePoint) -> (f64, f64) {
        let t2 = 2.0 * self.tan_half_fov();
        (
            p.u * self.out_width as f64 / t2,
            p.v * self.out_height as f64 / t2,
        )
    }

    /// Horizontal angle of a sub-view column from the view axis, degrees.
    pub fn column_angle(&self, px: f64) -> f64 {
        let p = self.pixel_to_plane(px, 0.0);
        (p.u - self.tan_half_fov()).atan().to_degrees()
    }

    pub fn contains_pixel(&self, px: f64, py: f64) -> bool {
        (0.0..=self.out_width as f64).contains(&px) && (0.0..=self.out_height as f64).contains(&py)
    }
}

/// Equirectangular frame size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanoramaGeometry {
    width: u32,
    height: u32,
}

impl PanoramaGeometry {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width < 4 || height < 2 {
            return Err(Error::invalid(format!(
                "panorama {width}x{height} too small"
            )));
        }
        if width != 2 * height {
            log::warn!("panorama {width}x{height} is not 2:1; latitude scale differs from longitude scale");
        }
        Ok(PanoramaGeometry { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width_f(&self) -> f64 {
        self.width as f64
    }

    pub fn height_f(&self) -> f64 {
        self.height as f64
    }

    pub fn lon_to_x(&self, lon: f64) -> f64 {
        (lon / 360.0 + 0.5) * self.width_f()
    }

    pub fn x_to_lon(&self, x: f64) -> f64 {
        (x / self.width_f() - 0.5) * 360.0
    }

    pub fn lat_to_y(&self, lat: f64) -> f64 {
        (0.5 - lat / 180.0) * self.height_f()
    }

    pub fn y_to_lat(&self, y: f64) -> f64 {
        (0.5 - y / self.height_f()) * 180.0
    }

    pub fn wrap_x(&self, x: f64) -> f64 {
        let w = self.width_f();
        let r = x.rem_euclid(w);
        if r >= w {
            0.0
        } else {
            r
        }
    }

    /// Pixels per degree horizontally.
    pub fn px_per_degree(&self) -> f64 {
        self.width_f() / 360.0
    }
}

/// Tangent-plane point to the unit sphere for a view looking along `+Z`.
pub fn plane_to_sphere(p: PlanePoint, t: f64) -> Result<UnitVector> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::invalid(format!("tangent {t} must be positive")));
    }
    if !p.u.is_finite() || !p.v.is_finite() {
        return Err(Error::invalid("non-finite plane point"));
    }
    let denom = (p.u * p.u + p.v * p.v + 2.0 * t * t - 2.0 * p.u * t - 2.0 * p.v * t + 1.0).sqrt();
    Ok(UnitVector {
        x: (p.u - t) / denom,
        y: (-p.v + t) / denom,
        z: 1.0 / denom,
    })
}

pub fn sphere_to_geographic(v: &UnitVector) -> SphericalDirection {
    let lat = v.y.clamp(-1.0, 1.0).asin().to_degrees();
    let lon = (-v.z).atan2(v.x).to_degrees();
    SphericalDirection {
        lon: normalize_lon(lon),
        lat,
    }
}

pub fn geographic_to_sphere(d: &SphericalDirection) -> UnitVector {
    let (lon, lat) = (d.lon.to_radians(), d.lat.to_radians());
    UnitVector {
        x: lat.cos() * lon.cos(),
        y: lat.sin(),
        z: -lat.cos() * lon.sin(),
    }
}

/// Rotation taking view-frame rays to world rays. The azimuth slot is
/// `alpha = longitude + pi/2`, the elevation slot is the view latitude;
/// with `lon = atan2(-Z, X)` the view axis lands on `(theta_c, phi_c)`.
pub fn rotation_matrix(theta_c: f64, phi_c: f64) -> Matrix3<f64> {
    let alpha = theta_c.to_radians() + std::f64::consts::FRAC_PI_2;
    let el = phi_c.to_radians();
    let (sa, ca) = alpha.sin_cos();
    let (se, ce) = el.sin_cos();
    Matrix3::new(
        ca, -sa * se, sa * ce, //
        0.0, ce, se, //
        -sa, -se * ca, ca * ce,
    )
}

pub fn rotate_to_view(v: &UnitVector, view: &ViewSpec) -> UnitVector {
    UnitVector::from_vector_unchecked(view.rotation * v.as_vector())
}

/// Direction of a (fractional) sub-view pixel. No bounds check.
pub fn perspective_to_direction(px: f64, py: f64, view: &ViewSpec) -> SphericalDirection {
    let t = view.tan_half_fov();
    let p = view.pixel_to_plane(px, py);
    // t > 0 and the view validated, so only non-finite pixels can fail here.
    let local = plane_to_sphere(p, t).unwrap_or(UnitVector {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    });
    sphere_to_geographic(&rotate_to_view(&local, view))
}

/// Sub-view pixel to panorama pixel, same chain the maps are built with.
pub fn perspective_point_to_equirect(
    px: f64,
    py: f64,
    view: &ViewSpec,
    pano: &PanoramaGeometry,
) -> Result<(f64, f64)> {
    if !view.contains_pixel(px, py) {
        return Err(Error::OutOfBounds {
            x: px,
            y: py,
            width: view.out_width,
            height: view.out_height,
        });
    }
    let d = perspective_to_direction(px, py, view);
    Ok((pano.wrap_x(pano.lon_to_x(d.lon)), pano.lat_to_y(d.lat)))
}

/// Projects a world direction into the view's pixel frame. `None` when
/// the direction is on or behind the view's image plane. The result may
/// lie outside the raster.
pub fn direction_to_perspective(d: &SphericalDirection, view: &ViewSpec) -> Option<(f64, f64)> {
    let w = geographic_to_sphere(d).as_vector();
    let local = view.rotation.transpose() * w;
    if local.z <= 1e-12 {
        return None;
    }
    let t = view.tan_half_fov();
    let p = PlanePoint {
        u: t + local.x / local.z,
        v: t - local.y / local.z,
    };
    Some(view.plane_to_pixel(p))
}

/// Panorama pixel to sub-view pixel; `None` when it falls outside the raster.
pub fn equirect_point_to_perspective(
    x: f64,
    y: f64,
    view: &ViewSpec,
    pano: &PanoramaGeometry,
) -> Option<(f64, f64)> {
    let lat = pano.y_to_lat(y);
    if !(-90.0..=90.0).contains(&lat) {
        return None;
    }
    let d = SphericalDirection::new(pano.x_to_lon(x), lat).ok()?;
    let (px, py) = direction_to_perspective(&d, view)?;
    view.contains_pixel(px, py).then_some((px, py))
}

/// Source panorama coordinates for every sub-view pixel centre, row-major.
#[derive(Debug, Clone)]
pub struct ProjectionMaps {
    width: u32,
    height: u32,
    lon_map: Vec<f32>,
    lat_map: Vec<f32>,
}

impl ProjectionMaps {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// `(x, y)` panorama coordinates for sub-view pixel `(col, row)`.
    pub fn get(&self, col: u32, row: u32) -> (f32, f32) {
        let i = (row * self.width + col) as usize;
        (self.lon_map[i], self.lat_map[i])
    }

    pub fn lon_map(&self) -> &[f32] {
        &self.lon_map
    }

    pub fn lat_map(&self) -> &[f32] {
        &self.lat_map
    }
}

pub fn build_projection_maps(view: &ViewSpec, pano: &PanoramaGeometry) -> ProjectionMaps {
    let (w, h) = (view.out_width, view.out_height);
    let n = (w as usize) * (h as usize);
    let mut lon_map = Vec::with_capacity(n);
    let mut lat_map = Vec::with_capacity(n);
    for row in 0..h {
        for col in 0..w {
            let d = perspective_to_direction(col as f64 + 0.5, row as f64 + 0.5, view);
            lon_map.push(pano.wrap_x(pano.lon_to_x(d.lon)) as f32);
            lat_map.push(pano.lat_to_y(d.lat) as f32);
        }
    }
    ProjectionMaps {
        width: w,
        height: h,
        lon_map,
        lat_map,
    }
}

/// Bilinear resampling of `frame` at the map coordinates. Columns wrap
/// around the seam; rows clamp half a pixel inside the poles.
pub fn resample_view(frame: &RgbImage, maps: &ProjectionMaps, pano: &PanoramaGeometry) -> Result<RgbImage> {
    if frame.width() != pano.width || frame.height() != pano.height {
        return Err(Error::DimensionMismatch {
            expected_w: pano.width,
            expected_h: pano.height,
            found_w: frame.width(),
            found_h: frame.height(),
        });
    }
    let (pw, ph) = (pano.width as i64, pano.height as i64);
    let mut out = RgbImage::new(maps.width, maps.height);
    for (col, row, px) in out.enumerate_pixels_mut() {
        let (mx, my) = maps.get(col, row);
        let fx = mx as f64 - 0.5;
        let fy = (my as f64 - 0.5).clamp(0.0, (ph - 1) as f64);
        let x0 = fx.floor();
        let y0 = fy.floor();
        let (ax, ay) = (fx - x0, fy - y0);
        let xa = (x0 as i64).rem_euclid(pw) as u32;
        let xb = (x0 as i64 + 1).rem_euclid(pw) as u32;
        let ya = y0 as u32;
        let yb = ((y0 as i64 + 1).min(ph - 1)) as u32;
        let mut acc = [0.0f64; 3];
        for (xx, yy, wgt) in [
            (xa, ya, (1.0 - ax) * (1.0 - ay)),
            (xb, ya, ax * (1.0 - ay)),
            (xa, yb, (1.0 - ax) * ay),
            (xb, yb, ax * ay),
        ] {
            let p = frame.get_pixel(xx, yy);
            for c in 0..3 {
                acc[c] += wgt * p[c] as f64;
            }
        }
        *px = Rgb(acc.map(|v| v.round().clamp(0.0, 255.0) as u8));
    }
    Ok(out)
}
