//! Flat-colour raster frames of a scene.

use image::{Rgb, RgbImage};
use rayon::prelude::*;

use crate::category::Category;
use crate::error::Result;

use super::scene::SceneScript;

pub const BACKGROUND: Rgb<u8> = Rgb([40, 40, 40]);

pub fn category_colour(c: Category) -> Rgb<u8> {
    match c {
        Category::Person => Rgb([230, 60, 60]),
        Category::Bicycle => Rgb([240, 160, 40]),
        Category::Car => Rgb([60, 120, 230]),
        Category::Motorbike => Rgb([170, 70, 220]),
        Category::Bus => Rgb([240, 230, 60]),
        Category::Truck => Rgb([60, 200, 90]),
        Category::TrafficLight => Rgb([250, 250, 250]),
    }
}

/// Draws every object alive at `frame` as a filled rectangle; later objects
/// paint over earlier ones. A pixel is painted when its centre lies in the
/// box, and boxes past the right edge continue from `x = 0`.
pub fn render(script: &SceneScript, frame: u32) -> Result<RgbImage> {
    let pano = script.panorama()?;
    let (w, h) = (script.width, script.height);
    let mut img = RgbImage::from_pixel(w, h, BACKGROUND);
    for o in &script.objects {
        let Some(ab) = o.box_at(frame as f64) else { continue };
        let b = ab.to_panorama(&pano);
        let colour = category_colour(o.category);
        let span = |a: f64, b: f64| ((a - 0.5).ceil() as i64, (b - 0.5).ceil() as i64);
        let (x0, x1) = span(b.x_min, b.x_max);
        let (y0, y1) = span(b.y_min, b.y_max);
        for y in y0.max(0)..y1.min(h as i64) {
            for x in x0..x1.min(x0 + w as i64) {
                img.put_pixel(x.rem_euclid(w as i64) as u32, y as u32, colour);
            }
        }
    }
    Ok(img)
}

/// Renders every frame of the scene in parallel, in frame order.
pub fn render_all(script: &SceneScript) -> Result<Vec<RgbImage>> {
    (1..=script.frames).into_par_iter().map(|f| render(script, f)).collect()
}
