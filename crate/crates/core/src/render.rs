//! 64×64 grayscale rasterisation of the reacher.
//!
//! World square `[-1, 1]²` maps onto pixel centres `0..=63`, row 0 at the
//! top. Intensities are stored quantised to `u8` (value / 255), which keeps
//! frames compact in replay memory and makes the wire encoding lossless.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::ReacherState;

pub const FRAME_SIZE: usize = 64;
pub const FRAME_PIXELS: usize = FRAME_SIZE * FRAME_SIZE;

const DISC: u8 = 255;
const SEGMENT: u8 = 191;
const TARGET: u8 = 128;
const NOISE: u8 = 255;
const DISC_RADIUS: f64 = 1.5;
const STAR_RADIUS: i64 = 3;

/// Static background noise. Identical configs produce the identical pixel
/// set on every frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub seed: u64,
    pub pixel_count: usize,
}

impl NoiseConfig {
    pub const DEFAULT_PIXELS: usize = 60;

    pub fn disabled() -> Self {
        Self {
            enabled: false,
            seed: 0,
            pixel_count: Self::DEFAULT_PIXELS,
        }
    }

    pub fn enabled(seed: u64) -> Self {
        Self {
            enabled: true,
            seed,
            pixel_count: Self::DEFAULT_PIXELS,
        }
    }

    /// Row-major indices of the noise pixels (empty when disabled).
    pub fn pixels(&self) -> Vec<usize> {
        if !self.enabled {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut idx = index::sample(&mut rng, FRAME_PIXELS, self.pixel_count.min(FRAME_PIXELS))
            .into_vec();
        idx.sort_unstable();
        idx
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::disabled()
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PixelFrame {
    data: Box<[u8]>,
}

impl std::fmt::Debug for PixelFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let lit = self.data.iter().filter(|&&v| v > 0).count();
        write!(f, "PixelFrame({FRAME_SIZE}x{FRAME_SIZE}, {lit} lit)")
    }
}

impl PixelFrame {
    pub fn blank() -> Self {
        Self {
            data: vec![0u8; FRAME_PIXELS].into_boxed_slice(),
        }
    }

    /// Builds a frame from quantised levels; `None` unless exactly 4096 bytes.
    pub fn from_levels(levels: Vec<u8>) -> Option<Self> {
        (levels.len() == FRAME_PIXELS).then(|| Self {
            data: levels.into_boxed_slice(),
        })
    }

    pub fn levels(&self) -> &[u8] {
        &self.data
    }

    pub fn intensity(&self, row: usize, col: usize) -> f32 {
        self.data[row * FRAME_SIZE + col] as f32 / 255.0
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32 / 255.0).collect()
    }

    pub fn write_f32(&self, out: &mut [f32]) {
        for (o, &v) in out.iter_mut().zip(self.data.iter()) {
            *o = v as f32 / 255.0;
        }
    }

    fn put(&mut self, row: i64, col: i64, level: u8) {
        if (0..FRAME_SIZE as i64).contains(&row) && (0..FRAME_SIZE as i64).contains(&col) {
            self.data[row as usize * FRAME_SIZE + col as usize] = level;
        }
    }
}

fn to_pixel(p: (f64, f64)) -> (f64, f64) {
    let scale = (FRAME_SIZE - 1) as f64 / 2.0;
    // (column, row)
    ((p.0 + 1.0) * scale, (1.0 - p.1) * scale)
}

fn draw_line(frame: &mut PixelFrame, from: (f64, f64), to: (f64, f64), level: u8) {
    let (mut x0, mut y0) = (from.0.round() as i64, from.1.round() as i64);
    let (x1, y1) = (to.0.round() as i64, to.1.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        frame.put(y0, x0, level);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn draw_disc(frame: &mut PixelFrame, centre: (f64, f64), radius: f64, level: u8) {
    let r = radius.ceil() as i64;
    let (cx, cy) = (centre.0.round() as i64, centre.1.round() as i64);
    for row in cy - r..=cy + r {
        for col in cx - r..=cx + r {
            let d = (col as f64 - centre.0).hypot(row as f64 - centre.1);
            if d <= radius {
                frame.put(row, col, level);
            }
        }
    }
}

fn draw_star(frame: &mut PixelFrame, centre: (f64, f64), level: u8) {
    let (cx, cy) = (centre.0.round() as i64, centre.1.round() as i64);
    for k in -STAR_RADIUS..=STAR_RADIUS {
        frame.put(cy, cx + k, level);
        frame.put(cy + k, cx, level);
        frame.put(cy + k, cx + k, level);
        frame.put(cy - k, cx + k, level);
    }
}

fn draw_scene(frame: &mut PixelFrame, state: &ReacherState) {
    let base = to_pixel((0.0, 0.0));
    let joint = to_pixel(state.joint());
    let gripper = to_pixel(state.gripper());
    draw_line(frame, base, joint, SEGMENT);
    draw_line(frame, joint, gripper, SEGMENT);
    draw_star(frame, to_pixel(state.target()), TARGET);
    for p in [base, joint, gripper] {
        draw_disc(frame, p, DISC_RADIUS, DISC);
    }
}

/// Background only: the static noise pixels, no arm or target.
pub fn render_background(noise: &NoiseConfig) -> PixelFrame {
    let mut frame = PixelFrame::blank();
    for i in noise.pixels() {
        frame.data[i] = NOISE;
    }
    frame
}

/// Row-major indices touched by the arm and target drawing.
pub fn scene_pixels(state: &ReacherState) -> Vec<usize> {
    let mut mask = PixelFrame::blank();
    draw_scene(&mut mask, state);
    // every scene level is nonzero
    mask.data
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| (v > 0).then_some(i))
        .collect()
}

/// Rasterises `state`: noise first, scene drawn over it.
pub fn render(state: &ReacherState, noise: &NoiseConfig) -> PixelFrame {
    let mut frame = render_background(noise);
    draw_scene(&mut frame, state);
    frame
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::reset;
    use std::collections::BTreeSet;

    #[test]
    fn empty_region_is_dark() {
        let s = ReacherState::new(0.0, 0.0, (0.5, 0.5));
        let f = render(&s, &NoiseConfig::disabled());
        // lower-left corner, far from the arm (along +x) and target
        assert_eq!(f.intensity(60, 2), 0.0);
        assert_eq!(f.levels().len(), FRAME_PIXELS);
        assert!(f.to_f32().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn base_and_gripper_are_drawn() {
        let s = ReacherState::new(0.0, 0.0, (-0.5, -0.5));
        let f = render(&s, &NoiseConfig::disabled());
        let (bc, br) = to_pixel((0.0, 0.0));
        assert_eq!(f.intensity(br.round() as usize, bc.round() as usize), 1.0);
        let (gc, gr) = to_pixel((1.0, 0.0));
        assert_eq!(f.intensity(gr.round() as usize, gc.round() as usize), 1.0);
        let (tc, tr) = to_pixel((-0.5, -0.5));
        assert_eq!(
            f.intensity(tr.round() as usize, tc.round() as usize),
            TARGET as f32 / 255.0
        );
    }

    #[test]
    fn render_is_deterministic() {
        for seed in 0..20 {
            let s = reset(seed);
            assert_eq!(
                render(&s, &NoiseConfig::disabled()),
                render(&s, &NoiseConfig::disabled())
            );
            assert_eq!(
                render(&s, &NoiseConfig::enabled(9)),
                render(&s, &NoiseConfig::enabled(9))
            );
        }
    }

    #[test]
    fn static_noise_is_shared_across_states() {
        let noise = NoiseConfig::enabled(1234);
        let noise_px: BTreeSet<usize> = noise.pixels().into_iter().collect();
        assert_eq!(noise_px.len(), 60);
        let background = render_background(&noise);
        let (a, b) = (reset(1), reset(2));
        let (fa, fb) = (render(&a, &noise), render(&b, &noise));
        for (state, frame) in [(a, &fa), (b, &fb)] {
            let scene: BTreeSet<usize> = scene_pixels(&state).into_iter().collect();
            let changed: BTreeSet<usize> = (0..FRAME_PIXELS)
                .filter(|&i| frame.levels()[i] != background.levels()[i])
                .collect();
            assert!(changed.len() <= scene.len());
            assert!(changed.is_subset(&scene));
        }
        // noise positions the scene does not cover are lit in both frames
        let covered: BTreeSet<usize> = scene_pixels(&a)
            .into_iter()
            .chain(scene_pixels(&b))
            .collect();
        for &i in noise_px.difference(&covered) {
            assert_eq!(fa.levels()[i], NOISE);
            assert_eq!(fb.levels()[i], NOISE);
        }
        assert_ne!(NoiseConfig::enabled(1).pixels(), NoiseConfig::enabled(2).pixels());
    }
}
