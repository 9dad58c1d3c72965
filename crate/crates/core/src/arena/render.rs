//! Flat-shaded RGB rendering of a [`GameState`].

use crate::arena::state::{FighterState, GameState, Move};

pub const NATIVE_WIDTH: usize = 192;
pub const NATIVE_HEIGHT: usize = 160;
/// Screen row of the stage top at native resolution.
const HORIZON: f32 = 120.0;

const BACKGROUND: [u8; 3] = [30, 34, 60];
const PLATFORM: [u8; 3] = [110, 100, 80];
const PLATFORM_EDGE: [u8; 3] = [230, 220, 170];
const MARKER: [u8; 3] = [20, 20, 20];
const FLASH: [u8; 3] = [240, 240, 240];
pub const PALETTES: [[u8; 3]; 4] = [[250, 210, 40], [220, 50, 50], [60, 200, 90], [80, 140, 250]];

/// Interleaved 8-bit RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, data }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

struct Canvas {
    frame: Frame,
    sx: f32,
    sy: f32,
}

impl Canvas {
    fn col(&self, x: f32) -> i64 {
        ((x + NATIVE_WIDTH as f32 / 2.0) * self.sx).floor() as i64
    }

    fn row(&self, y: f32) -> i64 {
        ((HORIZON - y) * self.sy).floor() as i64
    }

    /// Fills the world-space box `[x0, x1) x (y0, y1]`.
    fn fill(&mut self, x0: f32, x1: f32, y0: f32, y1: f32, rgb: [u8; 3]) {
        let (w, h) = (self.frame.width as i64, self.frame.height as i64);
        let c0 = self.col(x0).clamp(0, w);
        let c1 = self.col(x1).clamp(0, w);
        let r0 = self.row(y1).clamp(0, h);
        let r1 = self.row(y0).clamp(0, h);
        for r in r0..r1 {
            for c in c0..c1 {
                let i = ((r * w + c) * 3) as usize;
                self.frame.data[i..i + 3].copy_from_slice(&rgb);
            }
        }
    }
}

fn outline_tint(damage: f32) -> [u8; 3] {
    let t = (damage / 150.0).clamp(0.0, 1.0);
    let fade = (255.0 * (1.0 - t)).round() as u8;
    [255, fade, fade]
}

fn draw_fighter(cv: &mut Canvas, f: &FighterState, w: f32, h: f32) {
    let (x0, x1) = (f.x - w / 2.0, f.x + w / 2.0);
    if let Some((kind, _)) = f.flash {
        match kind {
            Move::Attack => cv.fill(x0 - 6.0, x1 + 6.0, f.y + 5.0, f.y + 9.0, FLASH),
            Move::Special => {
                let cx = f.x + f.facing as f32 * 20.0;
                cv.fill(cx - 3.0, cx + 3.0, f.y + 21.0, f.y + 27.0, FLASH)
            }
            Move::DownSpecial => cv.fill(f.x - 3.0, f.x + 3.0, f.y + h, f.y + h + 24.0, FLASH),
        }
    }
    cv.fill(x0, x1, f.y, f.y + h, outline_tint(f.damage_percent));
    let palette = PALETTES[f.palette_id % PALETTES.len()];
    cv.fill(x0 + 1.0, x1 - 1.0, f.y + 1.0, f.y + h - 1.0, palette);
    let mx = if f.facing < 0 { x0 + 2.0 } else { x1 - 5.0 };
    cv.fill(mx, mx + 3.0, f.y + h - 6.0, f.y + h - 3.0, MARKER);
}

/// Renders `state` into a `width x height` frame. Both dimensions must be at
/// least 32; the scene is stretched to fill the frame.
pub fn render(state: &GameState, width: usize, height: usize) -> Frame {
    assert!(width >= 32 && height >= 32, "frame must be at least 32x32");
    let c = &state.constants;
    let mut cv = Canvas {
        frame: Frame::filled(width, height, BACKGROUND),
        sx: width as f32 / NATIVE_WIDTH as f32,
        sy: height as f32 / NATIVE_HEIGHT as f32,
    };
    let hw = c.stage_half_width;
    cv.fill(-hw, hw, -14.0, 0.0, PLATFORM_EDGE);
    cv.fill(-hw + 2.0, hw - 2.0, -14.0, -2.0, PLATFORM);
    for f in &state.fighters {
        if f.active() {
            draw_fighter(&mut cv, f, c.fighter_width, c.fighter_height);
        }
    }
    cv.frame
}
