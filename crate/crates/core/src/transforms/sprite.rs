use serde::{Deserialize, Serialize};

use super::dataset::Canvas;
use super::Frame;
use crate::error::{Result, StaError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpriteShape {
    Disk,
    Square,
}

/// `size` is the disk radius or the square's half side, in pixels.
/// `position` is the centre in continuous image coordinates (x, y).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpriteConfig {
    pub shape: SpriteShape,
    pub size: f64,
    pub position: (f64, f64),
    pub color: [f64; 3],
}

const SUPERSAMPLE: usize = 4;

/// Renders an anti-aliased sprite on a black background by 4×4 supersampling.
pub fn render_sprite(cfg: &SpriteConfig, canvas: Canvas) -> Result<Frame> {
    let Canvas {
        channels,
        height,
        width,
    } = canvas;
    let (cx, cy) = cfg.position;
    let s = cfg.size;
    if !(s >= 0.0) || cx - s < 0.0 || cy - s < 0.0 || cx + s > width as f64 || cy + s > height as f64 {
        return Err(StaError::OutOfRange(format!(
            "sprite at ({cx}, {cy}) with size {s} does not fit a {width}×{height} canvas"
        )));
    }
    let mut frame = Frame::black(channels, height, width);
    if s == 0.0 {
        return Ok(frame);
    }
    let inside = |x: f64, y: f64| match cfg.shape {
        SpriteShape::Disk => (x - cx).powi(2) + (y - cy).powi(2) <= s * s,
        SpriteShape::Square => (x - cx).abs() <= s && (y - cy).abs() <= s,
    };
    let step = 1.0 / SUPERSAMPLE as f64;
    let colour: Vec<f64> = if channels == 3 {
        cfg.color.to_vec()
    } else {
        vec![cfg.color.iter().sum::<f64>() / 3.0]
    };
    let y_lo = (cy - s).floor().max(0.0) as usize;
    let y_hi = ((cy + s).ceil() as usize).min(height);
    let x_lo = (cx - s).floor().max(0.0) as usize;
    let x_hi = ((cx + s).ceil() as usize).min(width);
    for i in y_lo..y_hi {
        for j in x_lo..x_hi {
            let mut hits = 0usize;
            for a in 0..SUPERSAMPLE {
                for b in 0..SUPERSAMPLE {
                    let x = j as f64 + (b as f64 + 0.5) * step;
                    let y = i as f64 + (a as f64 + 0.5) * step;
                    hits += usize::from(inside(x, y));
                }
            }
            let cover = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
            for (c, col) in colour.iter().enumerate() {
                frame.values[(i * width + j) * channels + c] = (cover * col).clamp(0.0, 1.0);
            }
        }
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(shape: SpriteShape, size: f64, position: (f64, f64)) -> SpriteConfig {
        SpriteConfig {
            shape,
            size,
            position,
            color: [1.0, 1.0, 1.0],
        }
    }

    #[test]
    fn zero_radius_is_black() {
        let f = render_sprite(&cfg(SpriteShape::Disk, 0.0, (16.0, 16.0)), Canvas::default()).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centered_square_pixel_count() {
        // half side 5.3: area 10.6² = 112.36, border pixels partially covered
        let f = render_sprite(&cfg(SpriteShape::Square, 5.3, (16.0, 16.0)), Canvas::default()).unwrap();
        let coverage: f64 = f.values.iter().step_by(3).sum();
        let side: f64 = 10.6;
        let border = 4.0 * side + 4.0;
        assert!((coverage - side * side).abs() <= border * 0.25, "{coverage}");
        // grid-aligned square has exact coverage
        let f = render_sprite(&cfg(SpriteShape::Square, 5.0, (16.0, 16.0)), Canvas::default()).unwrap();
        let coverage: f64 = f.values.iter().step_by(3).sum();
        assert_eq!(coverage, 100.0);
    }

    #[test]
    fn deterministic() {
        let c = cfg(SpriteShape::Disk, 4.2, (11.3, 19.7));
        let a = render_sprite(&c, Canvas::default()).unwrap();
        let b = render_sprite(&c, Canvas::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_canvas_rejected() {
        assert!(render_sprite(&cfg(SpriteShape::Disk, 5.0, (2.0, 16.0)), Canvas::default()).is_err());
    }
}
