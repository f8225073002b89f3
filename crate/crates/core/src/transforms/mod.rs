//! Synthetic image sequences: frames, geometric and colour transforms,
//! sprite rendering and dataset generation.

mod dataset;
mod ppm;
mod sprite;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StaError};

pub use dataset::{
    default_spec, generate_dataset, generate_with_spikes, load_batch, save_batch, Canvas, DatasetConfig,
    SequenceBatch, SpikeSource, SpriteDistribution,
};
pub use ppm::{mosaic, read_ppm, write_ppm};
pub use sprite::{render_sprite, SpriteConfig, SpriteShape};

/// An image with values in [0, 1], stored row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Frame {
    pub fn black(channels: usize, height: usize, width: usize) -> Self {
        Frame {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    pub fn from_values(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(StaError::Config(format!("frames have 1 or 3 channels, got {channels}")));
        }
        if values.len() != channels * height * width {
            return Err(StaError::InvalidShape {
                shape: vec![height, width, channels],
                reason: format!("{} values", values.len()),
            });
        }
        let values = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Frame {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pixel(&self, y: usize, x: usize, c: usize) -> f64 {
        self.values[(y * self.width + x) * self.channels + c]
    }

    fn same_geometry(&self, other: &Frame) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// Mean absolute per-value difference.
    pub fn mean_abs_diff(&self, other: &Frame) -> f64 {
        assert!(self.same_geometry(other), "frame geometry differs");
        let total: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum();
        total / self.values.len() as f64
    }

    /// Bilinear sample at continuous coordinates (pixel centres sit at
    /// `i + 0.5`), zero outside the image.
    fn sample(&self, x: f64, y: f64, c: usize) -> f64 {
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let ax = fx - x0;
        let ay = fy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let get = |xi: i64, yi: i64| -> f64 {
            if xi < 0 || yi < 0 || xi >= self.width as i64 || yi >= self.height as i64 {
                0.0
            } else {
                self.pixel(yi as usize, xi as usize, c)
            }
        };
        (1.0 - ay) * ((1.0 - ax) * get(x0, y0) + ax * get(x0 + 1, y0))
            + ay * ((1.0 - ax) * get(x0, y0 + 1) + ax * get(x0 + 1, y0 + 1))
    }

    /// Inverse-maps every output pixel centre through `src` and resamples.
    fn warp(&self, src: impl Fn(f64, f64) -> (f64, f64)) -> Frame {
        let mut out = Frame::black(self.channels, self.height, self.width);
        for i in 0..self.height {
            for j in 0..self.width {
                let (sx, sy) = src(j as f64 + 0.5, i as f64 + 0.5);
                for c in 0..self.channels {
                    out.values[(i * self.width + j) * self.channels + c] =
                        self.sample(sx, sy, c).clamp(0.0, 1.0);
                }
            }
        }
        out
    }

    fn center(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Scale,
    Rotate,
    HueShift,
    TranslateX,
    TranslateY,
}

/// A transform primitive and the effect of one unit of speed.
///
/// `unit_magnitude` is a multiplicative factor per unit for `Scale`, degrees
/// for `Rotate`, radians for `HueShift` and pixels for the translations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub unit_magnitude: f64,
}

/// Largest and smallest per-call scale factor accepted.
pub const SCALE_RANGE: (f64, f64) = (0.2, 2.0);

impl TransformSpec {
    pub fn new(kind: TransformKind, unit_magnitude: f64) -> Self {
        TransformSpec {
            kind,
            unit_magnitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.unit_magnitude.is_finite()
            && self.unit_magnitude != 0.0
            && (self.kind != TransformKind::Scale || (self.unit_magnitude > 0.0 && self.unit_magnitude != 1.0));
        if ok {
            Ok(())
        } else {
            Err(StaError::Config(format!(
                "invalid unit magnitude {} for {:?}",
                self.unit_magnitude, self.kind
            )))
        }
    }
}

/// Applies `spec` at speed `magnitude` to `frame`.
///
/// Geometric transforms act about the image centre with bilinear inverse
/// mapping and zero padding. Hue shift rotates RGB values about the gray axis.
pub fn apply_transform(frame: &Frame, spec: &TransformSpec, magnitude: f64) -> Result<Frame> {
    spec.validate()?;
    if !magnitude.is_finite() {
        return Err(StaError::OutOfRange(format!("magnitude {magnitude}")));
    }
    if magnitude == 0.0 {
        return Ok(frame.clone());
    }
    let (cx, cy) = frame.center();
    match spec.kind {
        TransformKind::Rotate => {
            let theta = (magnitude * spec.unit_magnitude).to_radians();
            let (s, c) = theta.sin_cos();
            // source = R(-θ)(p - centre) + centre
            Ok(frame.warp(|x, y| {
                let (dx, dy) = (x - cx, y - cy);
                (c * dx + s * dy + cx, -s * dx + c * dy + cy)
            }))
        }
        TransformKind::Scale => {
            let factor = spec.unit_magnitude.powf(magnitude);
            if !(SCALE_RANGE.0..=SCALE_RANGE.1).contains(&factor) {
                return Err(StaError::OutOfRange(format!(
                    "scale factor {factor} outside {SCALE_RANGE:?}"
                )));
            }
            Ok(frame.warp(|x, y| ((x - cx) / factor + cx, (y - cy) / factor + cy)))
        }
        TransformKind::TranslateX | TransformKind::TranslateY => {
            let shift = magnitude * spec.unit_magnitude;
            let limit = frame.width.max(frame.height) as f64;
            if shift.abs() > limit {
                return Err(StaError::OutOfRange(format!("translation {shift} px")));
            }
            if spec.kind == TransformKind::TranslateX {
                Ok(frame.warp(|x, y| (x - shift, y)))
            } else {
                Ok(frame.warp(|x, y| (x, y - shift)))
            }
        }
        TransformKind::HueShift => {
            if frame.channels != 3 {
                return Err(StaError::Config("hue shift needs an RGB frame".into()));
            }
            Ok(hue_rotate(frame, magnitude * spec.unit_magnitude))
        }
    }
}

/// Rodrigues rotation of every RGB triple by `theta` about (1,1,1)/√3.
fn hue_rotate(frame: &Frame, theta: f64) -> Frame {
    let (s, c) = theta.sin_cos();
    let k = 1.0 / 3f64.sqrt();
    let mut out = frame.clone();
    for px in out.values.chunks_exact_mut(3) {
        let v = [px[0], px[1], px[2]];
        let dot = k * (v[0] + v[1] + v[2]);
        let cross = [k * (v[2] - v[1]), k * (v[0] - v[2]), k * (v[1] - v[0])];
        for i in 0..3 {
            px[i] = (v[i] * c + cross[i] * s + k * dot * (1.0 - c)).clamp(0.0, 1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob() -> Frame {
        render_sprite(
            &SpriteConfig {
                shape: SpriteShape::Square,
                size: 5.0,
                position: (14.0, 17.0),
                color: [0.9, 0.4, 0.2],
            },
            Canvas::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_magnitude_is_identity() {
        let f = blob();
        for kind in [
            TransformKind::Scale,
            TransformKind::Rotate,
            TransformKind::HueShift,
            TransformKind::TranslateX,
            TransformKind::TranslateY,
        ] {
            let spec = TransformSpec::new(kind, 1.1);
            assert_eq!(apply_transform(&f, &spec, 0.0).unwrap(), f);
        }
    }

    #[test]
    fn four_quarter_turns_return() {
        let f = blob();
        let spec = TransformSpec::new(TransformKind::Rotate, 90.0);
        let mut g = f.clone();
        for _ in 0..4 {
            g = apply_transform(&g, &spec, 1.0).unwrap();
        }
        assert!(f.mean_abs_diff(&g) < 0.01, "{}", f.mean_abs_diff(&g));
    }

    #[test]
    fn red_to_green() {
        let red = Frame::from_values(3, 4, 4, [1.0, 0.0, 0.0].repeat(16)).unwrap();
        let spec = TransformSpec::new(TransformKind::HueShift, 1.0);
        let g = apply_transform(&red, &spec, 2.0 * std::f64::consts::PI / 3.0).unwrap();
        for px in g.values.chunks(3) {
            assert!((px[0]).abs() < 1e-6 && (px[1] - 1.0).abs() < 1e-6 && px[2].abs() < 1e-6);
        }
    }

    #[test]
    fn unsafe_scale_rejected() {
        let spec = TransformSpec::new(TransformKind::Scale, 1.5);
        assert!(matches!(
            apply_transform(&blob(), &spec, 4.0),
            Err(StaError::OutOfRange(_))
        ));
        assert!(TransformSpec::new(TransformKind::Rotate, 0.0).validate().is_err());
    }

    #[test]
    fn translation_moves_mass() {
        let f = blob();
        let spec = TransformSpec::new(TransformKind::TranslateX, 1.0);
        let g = apply_transform(&f, &spec, 3.0).unwrap();
        // integer shift on the pixel grid is exact
        for i in 0..f.height {
            for j in 3..f.width {
                assert_eq!(g.pixel(i, j, 0), f.pixel(i, j - 3, 0));
            }
        }
    }

    #[test]
    fn hue_composition_is_exact() {
        let f = render_sprite(
            &SpriteConfig {
                shape: SpriteShape::Disk,
                size: 4.0,
                position: (16.0, 16.0),
                color: [0.55, 0.45, 0.5],
            },
            Canvas::default(),
        )
        .unwrap();
        let spec = TransformSpec::new(TransformKind::HueShift, 0.7);
        let two = apply_transform(&apply_transform(&f, &spec, 0.4).unwrap(), &spec, 1.3).unwrap();
        let one = apply_transform(&f, &spec, 1.7).unwrap();
        assert!(two.values.iter().zip(&one.values).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn rotation_and_translation_compose(m1 in -2.0f64..2.0, m2 in -2.0f64..2.0, rot in proptest::bool::ANY) {
            let f = blob();
            let spec = if rot {
                TransformSpec::new(TransformKind::Rotate, 10.0)
            } else {
                TransformSpec::new(TransformKind::TranslateX, 1.3)
            };
            let two = apply_transform(&apply_transform(&f, &spec, m1).unwrap(), &spec, m2).unwrap();
            let one = apply_transform(&f, &spec, m1 + m2).unwrap();
            proptest::prop_assert!(one.mean_abs_diff(&two) < 0.02, "{}", one.mean_abs_diff(&two));
        }

        #[test]
        fn outputs_stay_in_unit_range(kind in 0usize..5, m in -3.0f64..3.0) {
            let kinds = [
                TransformKind::Scale,
                TransformKind::Rotate,
                TransformKind::HueShift,
                TransformKind::TranslateX,
                TransformKind::TranslateY,
            ];
            let spec = TransformSpec::new(kinds[kind], if kind == 0 { 1.1 } else { 1.7 });
            let g = apply_transform(&blob(), &spec, m).unwrap();
            proptest::prop_assert!(g.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
