//! Top-down PNG snapshot of a trace.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};

use super::Trace;
use crate::geom::Vec2;
use crate::scene::CompiledScene;

const SIZE: u32 = 800;
const MARGIN: f64 = 20.0;
const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [148, 103, 189],
    [140, 86, 75],
    [23, 190, 207],
];

struct Canvas {
    img: RgbImage,
    min: Vec2,
    scale: f64,
}

impl Canvas {
    fn to_px(&self, p: Vec2) -> (f64, f64) {
        let x = MARGIN + (p.x - self.min.x) * self.scale;
        let y = SIZE as f64 - MARGIN - (p.y - self.min.y) * self.scale;
        (x, y)
    }

    fn line(&mut self, a: Vec2, b: Vec2, color: [u8; 3]) {
        let (x0, y0) = self.to_px(a);
        let (x1, y1) = self.to_px(b);
        let n = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let (x, y) = (x0 + (x1 - x0) * t, y0 + (y1 - y0) * t);
            if x >= 0.0 && y >= 0.0 && x < SIZE as f64 && y < SIZE as f64 {
                self.img.put_pixel(x as u32, y as u32, Rgb(color));
            }
        }
    }

    fn polyline(&mut self, pts: &[Vec2], color: [u8; 3]) {
        for w in pts.windows(2) {
            self.line(w[0], w[1], color);
        }
    }
}

/// PNG bytes showing lanes, actor paths and final footprints (red on collision).
pub fn render_trace_png(scene: &CompiledScene, trace: &Trace) -> Result<Vec<u8>, image::ImageError> {
    let all = scene.lanes.iter().flat_map(|l| l.centerline.iter().copied());
    let (mut min, mut max) = (Vec2::new(f64::MAX, f64::MAX), Vec2::new(f64::MIN, f64::MIN));
    for p in all {
        min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
        max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
    }
    let span = (max.x - min.x).max(max.y - min.y).max(1.0);
    let mut c = Canvas {
        img: RgbImage::from_pixel(SIZE, SIZE, Rgb([255, 255, 255])),
        min,
        scale: (SIZE as f64 - 2.0 * MARGIN) / span,
    };
    for lane in &scene.lanes {
        c.polyline(&lane.centerline, [200, 200, 200]);
    }
    let colliding: Vec<usize> = trace
        .violations
        .iter()
        .flat_map(|v| [v.actors.0, v.actors.1])
        .collect();
    for i in 0..scene.actors.len() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<Vec2> = trace
            .steps
            .iter()
            .filter_map(|row| row[i].map(|s| s.pos()))
            .collect();
        c.polyline(&path, color);
        let last = trace.steps.iter().rev().find_map(|row| row[i]);
        if let Some(s) = last {
            let box_color = if colliding.contains(&i) { [214, 39, 40] } else { color };
            let k = s.obb(&scene.actors[i].footprint).corners();
            for e in 0..4 {
                c.line(k[e], k[(e + 1) % 4], box_color);
            }
        }
    }
    let mut out = Cursor::new(Vec::new());
    c.img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}
