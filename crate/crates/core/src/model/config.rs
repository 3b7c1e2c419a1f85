use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const LEVELS: usize = 5;

/// Feature aggregation used by the ablation decoder layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Aggregation {
    Plus,
    Mul,
    Cat,
}

impl Aggregation {
    fn letter(self) -> char {
        match self {
            Aggregation::Plus => 'P',
            Aggregation::Mul => 'M',
            Aggregation::Cat => 'C',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        match c {
            'P' => Some(Aggregation::Plus),
            'M' => Some(Aggregation::Mul),
            'C' => Some(Aggregation::Cat),
            _ => None,
        }
    }
}

/// Decoder layer structure: the full complementary-extraction layer, or one
/// of the joint (`Pipe`) / separated (`Branch`) ablation layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecoderMode {
    C4Net,
    Pipe(Aggregation, Aggregation),
    Branch(Aggregation, Aggregation),
}

impl DecoderMode {
    /// Every named mode from the structure ablation table.
    pub const NAMED: [&'static str; 9] =
        ["C4Net", "PipePP", "PipeCC", "PipeCP", "PipeMM", "BranchPP", "BranchMM", "BranchCC", "BranchMP"];

    /// PipeMM drives activations toward zero and usually fails to train.
    pub fn is_unstable(self) -> bool {
        self == DecoderMode::Pipe(Aggregation::Mul, Aggregation::Mul)
    }
}

impl fmt::Display for DecoderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DecoderMode::C4Net => write!(f, "C4Net"),
            DecoderMode::Pipe(a, b) => write!(f, "Pipe{}{}", a.letter(), b.letter()),
            DecoderMode::Branch(a, b) => write!(f, "Branch{}{}", a.letter(), b.letter()),
        }
    }
}

impl FromStr for DecoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "C4Net" {
            return Ok(DecoderMode::C4Net);
        }
        let (ctor, rest): (fn(Aggregation, Aggregation) -> DecoderMode, &str) = if let Some(r) = s.strip_prefix("Pipe") {
            (DecoderMode::Pipe, r)
        } else if let Some(r) = s.strip_prefix("Branch") {
            (DecoderMode::Branch, r)
        } else {
            return Err(Error::Config(format!("unknown decoder mode {:?}", s)));
        };
        let aggs: Vec<Aggregation> = rest.chars().filter_map(Aggregation::from_letter).collect();
        if aggs.len() != 2 || rest.chars().count() != 2 {
            return Err(Error::Config(format!("unknown decoder mode {:?}", s)));
        }
        Ok(ctor(aggs[0], aggs[1]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder_channels: [usize; LEVELS],
    pub input_size: usize,
    /// Compression factor: channel width of every shortcut and decoder feature.
    pub cf: usize,
    pub pyramid_sizes: Vec<usize>,
    pub attention_reduction: usize,
    pub decoder_mode: DecoderMode,
    /// Compressed encoder shortcuts. Without them the decoder is a plain
    /// upsampling path (the no-shortcut baseline) and `decoder_mode` and
    /// `psm` are ignored.
    pub shortcuts: bool,
    /// Pyramid-semantic module on the deepest shortcut.
    pub psm: bool,
    pub encoder_residual: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder_channels: [8, 16, 32, 64, 64],
            input_size: 64,
            cf: 8,
            pyramid_sizes: vec![1, 2, 5],
            attention_reduction: 4,
            decoder_mode: DecoderMode::C4Net,
            shortcuts: true,
            psm: true,
            encoder_residual: true,
        }
    }
}

impl ModelConfig {
    /// 16x16 configuration small enough for whole-model gradient checks.
    pub fn micro() -> Self {
        Self {
            encoder_channels: [3, 4, 4, 4, 4],
            input_size: 16,
            cf: 4,
            pyramid_sizes: vec![1, 2, 5],
            attention_reduction: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.cf == 0 {
            return bad("cf must be positive".into());
        }
        if self.attention_reduction == 0 || self.cf / self.attention_reduction == 0 {
            return bad(format!("attention_reduction {} leaves no hidden units for cf {}", self.attention_reduction, self.cf));
        }
        if self.encoder_channels.contains(&0) {
            return bad("encoder channels must be positive".into());
        }
        if self.input_size < 2 {
            return bad("input_size must be at least 2".into());
        }
        if self.pyramid_sizes.is_empty() || self.pyramid_sizes.contains(&0) {
            return bad("pyramid sizes must be a nonempty list of positive sizes".into());
        }
        Ok(())
    }

    pub fn attention_hidden(&self) -> usize {
        self.cf / self.attention_reduction
    }

    /// Spatial extent of stage `level` (1-based): each stage halves,
    /// rounding up, through a 3x3 stride-2 convolution.
    pub fn resolution(&self, level: usize) -> usize {
        (0..level).fold(self.input_size, |r, _| r.div_ceil(2))
    }

    pub fn resolutions(&self) -> [usize; LEVELS] {
        std::array::from_fn(|i| self.resolution(i + 1))
    }
}
