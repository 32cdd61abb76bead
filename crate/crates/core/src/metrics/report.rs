//! Exploratory statistics of an annotation set: where boxes lie in the
//! panorama, and how many there are per category and size class.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::error::{Error, Result};
use crate::formats::mot::MotRecord;

use super::ap::SizeClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    /// Panorama pixels per heat-grid cell along each axis.
    pub cell: u32,
    pub grid_width: u32,
    pub grid_height: u32,
    /// Row-major; each cell sums how many boxes cover each of its pixels.
    pub heat: Vec<u64>,
    pub category_counts: BTreeMap<Category, usize>,
    pub size_counts: BTreeMap<SizeClass, usize>,
    pub total_boxes: usize,
}

impl DatasetReport {
    pub fn heat_at(&self, gx: u32, gy: u32) -> u64 {
        self.heat[(gy * self.grid_width + gx) as usize]
    }

    pub fn heat_csv(&self) -> String {
        let mut s = String::new();
        for row in self.heat.chunks(self.grid_width as usize) {
            let line: Vec<String> = row.iter().map(u64::to_string).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn counts_csv(&self) -> String {
        let mut s = String::from("kind,name,count\n");
        for (c, n) in &self.category_counts {
            let _ = writeln!(s, "category,{c},{n}");
        }
        for (c, n) in &self.size_counts {
            let name = match c {
                SizeClass::Small => "small",
                SizeClass::Medium => "medium",
                SizeClass::Large => "large",
            };
            let _ = writeln!(s, "size,{name},{n}");
        }
        let _ = writeln!(s, "total,all,{}", self.total_boxes);
        s
    }
}

/// Pixel `i` is covered by `[a, b)` when its centre `i + 0.5` lies inside.
fn covered(a: f64, b: f64) -> std::ops::Range<i64> {
    let lo = (a - 0.5).ceil() as i64;
    let hi = (b - 0.5).ceil() as i64;
    lo..hi.max(lo)
}

/// Coverage heat grid (`cell` x `cell` pixel blocks), category totals and
/// size-class totals. Boxes past the right edge wrap around.
pub fn dataset_report(records: &[MotRecord], width: u32, height: u32, cell: u32) -> Result<DatasetReport> {
    if cell == 0 || width == 0 || height == 0 {
        return Err(Error::invalid("width, height and cell must be positive"));
    }
    let gw = width.div_ceil(cell);
    let gh = height.div_ceil(cell);
    let mut heat = vec![0u64; (gw * gh) as usize];
    let mut category_counts: BTreeMap<Category, usize> = Category::ALL.into_iter().map(|c| (c, 0)).collect();
    let mut size_counts: BTreeMap<SizeClass, usize> =
        [SizeClass::Small, SizeClass::Medium, SizeClass::Large].into_iter().map(|s| (s, 0)).collect();
    for r in records {
        *category_counts.entry(r.category).or_default() += 1;
        *size_counts.entry(SizeClass::of_area(r.bbox.area())).or_default() += 1;
        let ys = covered(r.bbox.y_min, r.bbox.y_max);
        let xs = covered(r.bbox.x_min, r.bbox.x_max);
        // Column counts per grid column, then spread over the covered rows.
        let mut cols = vec![0u64; gw as usize];
        for x in xs {
            let xw = x.rem_euclid(width as i64) as u32;
            cols[(xw / cell) as usize] += 1;
        }
        for y in ys {
            if y < 0 || y >= height as i64 {
                continue;
            }
            let gy = y as u32 / cell;
            for (gx, n) in cols.iter().enumerate() {
                heat[(gy * gw) as usize + gx] += n;
            }
        }
    }
    Ok(DatasetReport {
        cell,
        grid_width: gw,
        grid_height: gh,
        heat,
        category_counts,
        size_counts,
        total_boxes: records.len(),
    })
}
