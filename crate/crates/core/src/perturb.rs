//! The seven image perturbations of the benchmark suite. Every kind is a
//! pure function of `(spec, image)`; stochastic kinds draw from a
//! [`SplitMix64`] stream seeded with `spec.seed`.
//!
//! Draw order, per kind:
//!
//! * `RandomErase`: for each patch in turn, the anchor column `x` in
//!   `[0, W - p]`, then the anchor row `y` in `[0, H - p]`.
//! * `SaltPepperNoise`: for each draw in turn, the pixel index in
//!   `[0, W * H)` (row-major), then one bit: set means white (255), clear
//!   means black (0). All channels of the pixel are set; later draws win.
//! * `Puzzle8` / `Puzzle32`: one Fisher-Yates shuffle of the row-major patch
//!   indices; output patch `i` is input patch `perm[i]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{sample_bilinear, to_u8, RasterImage};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const SWIRL_STRENGTH: f64 = 2.0;
pub const SWIRL_RADIUS: f64 = 400.0;
pub const ERASE_PATCHES: usize = 50;
pub const ERASE_PATCH_SIZE: u32 = 50;
pub const SALT_PEPPER_PIXELS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PerturbationKind {
    VerticalFlip,
    HorizontalFlip,
    Swirl,
    RandomErase,
    SaltPepperNoise,
    Puzzle8,
    Puzzle32,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 7] = [
        PerturbationKind::VerticalFlip,
        PerturbationKind::HorizontalFlip,
        PerturbationKind::Swirl,
        PerturbationKind::RandomErase,
        PerturbationKind::SaltPepperNoise,
        PerturbationKind::Puzzle8,
        PerturbationKind::Puzzle32,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::VerticalFlip => "VerticalFlip",
            PerturbationKind::HorizontalFlip => "HorizontalFlip",
            PerturbationKind::Swirl => "Swirl",
            PerturbationKind::RandomErase => "RandomErase",
            PerturbationKind::SaltPepperNoise => "SaltPepperNoise",
            PerturbationKind::Puzzle8 => "Puzzle8",
            PerturbationKind::Puzzle32 => "Puzzle32",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(&wanted))
            .ok_or_else(|| {
                Error::Unsupported(format!(
                    "unknown perturbation {s:?}; expected one of {}",
                    Self::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }
}

/// Kind-specific knobs. Unset fields take the suite defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerturbationParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patches: Option<usize>,
    /// Erase patch side, or puzzle tile side for the puzzle kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_size: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixels: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub params: PerturbationParams,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            params: PerturbationParams::default(),
        }
    }

    pub fn strength(&self) -> f64 {
        self.params.strength.unwrap_or(SWIRL_STRENGTH)
    }

    pub fn radius(&self) -> f64 {
        self.params.radius.unwrap_or(SWIRL_RADIUS)
    }

    pub fn patches(&self) -> usize {
        self.params.patches.unwrap_or(ERASE_PATCHES)
    }

    pub fn pixels(&self) -> usize {
        self.params.pixels.unwrap_or(SALT_PEPPER_PIXELS)
    }

    pub fn patch_size(&self) -> u32 {
        self.params.patch_size.unwrap_or(match self.kind {
            PerturbationKind::Puzzle8 => 8,
            PerturbationKind::Puzzle32 => 32,
            _ => ERASE_PATCH_SIZE,
        })
    }
}

/// A rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Patch {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Patch {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

pub fn apply(spec: &PerturbationSpec, image: &RasterImage) -> Result<RasterImage> {
    match spec.kind {
        PerturbationKind::VerticalFlip => Ok(flip_vertical(image)),
        PerturbationKind::HorizontalFlip => Ok(flip_horizontal(image)),
        PerturbationKind::Swirl => swirl(image, spec.strength(), spec.radius()),
        PerturbationKind::RandomErase => {
            let patches = erase_patches(spec, image.width(), image.height())?;
            Ok(erase(image, &patches))
        }
        PerturbationKind::SaltPepperNoise => {
            let draws = salt_pepper_draws(spec, image.width(), image.height())?;
            Ok(salt_pepper(image, &draws))
        }
        PerturbationKind::Puzzle8 | PerturbationKind::Puzzle32 => {
            puzzle(image, spec.patch_size(), spec.seed)
        }
    }
}

/// Upside down: row `y` becomes row `H - 1 - y`.
pub fn flip_vertical(image: &RasterImage) -> RasterImage {
    let row = image.width() as usize * image.channels() as usize;
    let mut out = Vec::with_capacity(image.pixels().len());
    for chunk in image.pixels().chunks_exact(row).rev() {
        out.extend_from_slice(chunk);
    }
    RasterImage::new(image.width(), image.height(), image.channels(), out).expect("same shape")
}

/// Mirror: column `x` becomes column `W - 1 - x`.
pub fn flip_horizontal(image: &RasterImage) -> RasterImage {
    let c = image.channels() as usize;
    let row = image.width() as usize * c;
    let mut out = Vec::with_capacity(image.pixels().len());
    for chunk in image.pixels().chunks_exact(row) {
        for px in chunk.chunks_exact(c).rev() {
            out.extend_from_slice(px);
        }
    }
    RasterImage::new(image.width(), image.height(), image.channels(), out).expect("same shape")
}

/// Source location sampled for output pixel `(x, y)`.
///
/// With center `c = ((W-1)/2, (H-1)/2)` and `(ρ, φ)` the polar offset of
/// `(x, y)` from `c`, the source is at angle `φ + strength·exp(−ρ/r)` with
/// `r = ln(2)·radius/5`, same `ρ`.
pub fn swirl_source(x: f64, y: f64, width: u32, height: u32, strength: f64, radius: f64) -> (f64, f64) {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let (dx, dy) = (x - cx, y - cy);
    let rho = dx.hypot(dy);
    let falloff = std::f64::consts::LN_2 * radius / 5.0;
    let theta = strength * (-rho / falloff).exp() + dy.atan2(dx);
    (cx + rho * theta.cos(), cy + rho * theta.sin())
}

pub fn swirl(image: &RasterImage, strength: f64, radius: f64) -> Result<RasterImage> {
    if radius.is_nan() || radius <= 0.0 || !strength.is_finite() {
        return Err(Error::Range(format!(
            "swirl needs a positive radius and finite strength, got {radius} / {strength}"
        )));
    }
    let (w, h, c) = (image.width(), image.height(), image.channels() as usize);
    let mut out = Vec::with_capacity(image.pixels().len());
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = swirl_source(x as f64, y as f64, w, h, strength, radius);
            for ch in 0..c {
                out.push(to_u8(sample_bilinear(image, sx, sy, ch)));
            }
        }
    }
    RasterImage::new(w, h, image.channels(), out)
}

/// The erase rectangles for an image of the given size, in draw order.
/// Patches never cross the border; a patch side larger than the image is
/// clipped to it.
pub fn erase_patches(spec: &PerturbationSpec, width: u32, height: u32) -> Result<Vec<Patch>> {
    let size = spec.patch_size();
    if size == 0 {
        return Err(Error::Range("erase patch size must be positive".into()));
    }
    let (pw, ph) = (size.min(width), size.min(height));
    let mut rng = SplitMix64::new(spec.seed);
    Ok((0..spec.patches())
        .map(|_| {
            let x = rng.below((width - pw) as u64 + 1) as u32;
            let y = rng.below((height - ph) as u64 + 1) as u32;
            Patch {
                x,
                y,
                width: pw,
                height: ph,
            }
        })
        .collect())
}

pub fn erase(image: &RasterImage, patches: &[Patch]) -> RasterImage {
    let mut out = image.clone();
    let c = image.channels() as usize;
    for p in patches {
        for y in p.y..p.y + p.height {
            let start = out.offset(p.x, y);
            out.pixels_mut()[start..start + p.width as usize * c].fill(0);
        }
    }
    out
}

/// One salt-and-pepper draw: pixel index (row-major) and target value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseDraw {
    pub index: usize,
    pub value: u8,
}

pub fn salt_pepper_draws(spec: &PerturbationSpec, width: u32, height: u32) -> Result<Vec<NoiseDraw>> {
    let count = width as u64 * height as u64;
    if count == 0 {
        return Err(Error::Shape("cannot add noise to an empty image".into()));
    }
    let mut rng = SplitMix64::new(spec.seed);
    Ok((0..spec.pixels())
        .map(|_| {
            let index = rng.below(count) as usize;
            let value = if rng.next_bool() { 255 } else { 0 };
            NoiseDraw { index, value }
        })
        .collect())
}

pub fn salt_pepper(image: &RasterImage, draws: &[NoiseDraw]) -> RasterImage {
    let mut out = image.clone();
    let c = image.channels() as usize;
    for d in draws {
        out.pixels_mut()[d.index * c..(d.index + 1) * c].fill(d.value);
    }
    out
}

/// Tile permutation used by [`puzzle`]: entry `i` is the source tile of
/// output tile `i`.
pub fn puzzle_permutation(tiles: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..tiles).collect();
    SplitMix64::new(seed).shuffle(&mut perm);
    perm
}

pub fn puzzle(image: &RasterImage, tile: u32, seed: u64) -> Result<RasterImage> {
    let (w, h) = (image.width(), image.height());
    if tile == 0 || w % tile != 0 || h % tile != 0 {
        return Err(Error::Shape(format!(
            "{w}x{h} image cannot be cut into {tile}x{tile} tiles"
        )));
    }
    let (cols, rows) = (w / tile, h / tile);
    let perm = puzzle_permutation((cols * rows) as usize, seed);
    let c = image.channels() as usize;
    let span = tile as usize * c;
    let mut out = image.clone();
    for (dst, &src) in perm.iter().enumerate() {
        let (dx, dy) = ((dst as u32 % cols) * tile, (dst as u32 / cols) * tile);
        let (sx, sy) = ((src as u32 % cols) * tile, (src as u32 / cols) * tile);
        for r in 0..tile {
            let from = image.offset(sx, sy + r);
            let to = out.offset(dx, dy + r);
            out.pixels_mut()[to..to + span].copy_from_slice(&image.pixels()[from..from + span]);
        }
    }
    Ok(out)
}
