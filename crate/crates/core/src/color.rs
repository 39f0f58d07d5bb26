//! Channel histograms, dominant-color estimation and mask-color strategies.

use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ColorError {
    #[error("image has no pixels ({width}x{height})")]
    EmptyImage { width: u32, height: u32 },
    #[error("unknown mask color `{0}` (expected black, gray, white, random or global_dominant)")]
    UnknownStrategy(String),
}

/// An 8-bit RGB triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const BLACK: Rgb = Rgb([0, 0, 0]);
    pub const GRAY: Rgb = Rgb([128, 128, 128]);
    pub const WHITE: Rgb = Rgb([255, 255, 255]);

    pub fn r(self) -> u8 {
        self.0[0]
    }
    pub fn g(self) -> u8 {
        self.0[1]
    }
    pub fn b(self) -> u8 {
        self.0[2]
    }
}

impl From<Rgb> for image::Rgb<u8> {
    fn from(c: Rgb) -> Self {
        image::Rgb(c.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    R = 0,
    G = 1,
    B = 2,
}

/// Pixel counts per intensity value for one channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelHistogram {
    pub counts: [u64; 256],
}

impl ChannelHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Most frequent intensity; the smallest one wins a tie.
    pub fn mode(&self) -> u8 {
        let mut best = 0usize;
        for k in 1..256 {
            if self.counts[k] > self.counts[best] {
                best = k;
            }
        }
        best as u8
    }
}

fn ensure_non_empty(image: &RgbImage) -> Result<(), ColorError> {
    if image.width() == 0 || image.height() == 0 {
        return Err(ColorError::EmptyImage {
            width: image.width(),
            height: image.height(),
        });
    }
    Ok(())
}

pub fn channel_histogram(image: &RgbImage, channel: Channel) -> Result<ChannelHistogram, ColorError> {
    ensure_non_empty(image)?;
    let mut counts = [0u64; 256];
    for px in image.as_raw().chunks_exact(3) {
        counts[px[channel as usize] as usize] += 1;
    }
    Ok(ChannelHistogram { counts })
}

/// Histograms for R, G and B in a single pass over the pixels.
pub fn rgb_histograms(image: &RgbImage) -> Result<[ChannelHistogram; 3], ColorError> {
    ensure_non_empty(image)?;
    let mut counts = [[0u64; 256]; 3];
    for px in image.as_raw().chunks_exact(3) {
        counts[0][px[0] as usize] += 1;
        counts[1][px[1] as usize] += 1;
        counts[2][px[2] as usize] += 1;
    }
    Ok(counts.map(|counts| ChannelHistogram { counts }))
}

/// Per-channel mode of the whole image.
pub fn dominant_color(image: &RgbImage) -> Result<Rgb, ColorError> {
    let [r, g, b] = rgb_histograms(image)?;
    Ok(Rgb([r.mode(), g.mode(), b.mode()]))
}

/// How the paint color of a mask is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskColorStrategy {
    Black,
    Gray,
    White,
    /// A fresh uniformly random color for every mask.
    Random,
    /// The dominant color of the unmasked image, shared by every mask in it.
    #[default]
    GlobalDominant,
}

impl MaskColorStrategy {
    pub const ALL: [MaskColorStrategy; 5] = [
        MaskColorStrategy::Black,
        MaskColorStrategy::Gray,
        MaskColorStrategy::White,
        MaskColorStrategy::Random,
        MaskColorStrategy::GlobalDominant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaskColorStrategy::Black => "black",
            MaskColorStrategy::Gray => "gray",
            MaskColorStrategy::White => "white",
            MaskColorStrategy::Random => "random",
            MaskColorStrategy::GlobalDominant => "global_dominant",
        }
    }
}

impl fmt::Display for MaskColorStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskColorStrategy {
    type Err = ColorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "black" => Ok(MaskColorStrategy::Black),
            "gray" | "grey" => Ok(MaskColorStrategy::Gray),
            "white" => Ok(MaskColorStrategy::White),
            "random" => Ok(MaskColorStrategy::Random),
            "global_dominant" | "dominant" => Ok(MaskColorStrategy::GlobalDominant),
            _ => Err(ColorError::UnknownStrategy(s.to_string())),
        }
    }
}

/// Resolves mask colors for one image.
///
/// The dominant color is computed from the image as it was when the resolver was
/// created and cached, so later painting cannot shift it.
#[derive(Debug)]
pub struct MaskColorResolver<'a> {
    strategy: MaskColorStrategy,
    source: &'a RgbImage,
    dominant: Option<Rgb>,
}

impl<'a> MaskColorResolver<'a> {
    pub fn new(strategy: MaskColorStrategy, source: &'a RgbImage) -> Result<Self, ColorError> {
        ensure_non_empty(source)?;
        Ok(Self {
            strategy,
            source,
            dominant: None,
        })
    }

    /// Color for the next mask. Only the random strategy consumes draws (r, g, b).
    pub fn next_color<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Rgb, ColorError> {
        Ok(match self.strategy {
            MaskColorStrategy::Black => Rgb::BLACK,
            MaskColorStrategy::Gray => Rgb::GRAY,
            MaskColorStrategy::White => Rgb::WHITE,
            MaskColorStrategy::Random => {
                let r = rng.random::<u8>();
                let g = rng.random::<u8>();
                let b = rng.random::<u8>();
                Rgb([r, g, b])
            }
            MaskColorStrategy::GlobalDominant => match self.dominant {
                Some(c) => c,
                None => {
                    let c = dominant_color(self.source)?;
                    self.dominant = Some(c);
                    c
                }
            },
        })
    }
}

/// One-shot color resolution for a single mask.
pub fn resolve_mask_color<R: Rng + ?Sized>(
    strategy: MaskColorStrategy,
    image: &RgbImage,
    rng: &mut R,
) -> Result<Rgb, ColorError> {
    MaskColorResolver::new(strategy, image)?.next_color(rng)
}
