use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the window around each segment boundary.
pub const BOUNDARY_RADIUS: usize = 5;

/// Shortest per-segment share accepted by [`SegmentSchedule::from_pattern`].
pub const MIN_SEGMENT_FRAMES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Solo,
    Interaction,
}

impl SegmentKind {
    pub fn tag(&self) -> &'static str {
        match self {
            SegmentKind::Solo => "s",
            SegmentKind::Interaction => "i",
        }
    }
}

/// An ordered list of segment kinds such as `s-i-s`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern(pub Vec<SegmentKind>);

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kinds = s
            .split('-')
            .map(|t| match t.trim() {
                "s" => Ok(SegmentKind::Solo),
                "i" => Ok(SegmentKind::Interaction),
                other => Err(Error::InvalidSchedule(format!("unknown segment tag {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSchedule(format!("pattern {s:?} repeats a segment kind back to back")));
        }
        Ok(Pattern(kinds))
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tags: Vec<_> = self.0.iter().map(|k| k.tag()).collect();
        f.write_str(&tags.join("-"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Contiguous tiling of `[0, total)` into solo and interaction segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSchedule {
    total: usize,
    segments: Vec<Segment>,
}

impl SegmentSchedule {
    /// Two-segment schedule from the start frames of the interaction
    /// (`t_i`) and solo (`t_s`) segments. Exactly one of them must be zero
    /// and their sum positive. `t_s = None` with `t_i = 0` means the whole
    /// sequence is interaction.
    pub fn new(t_i: usize, t_s: Option<usize>, total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::InvalidSchedule("total frame count must be positive".into()));
        }
        let Some(t_s) = t_s else {
            if t_i != 0 {
                return Err(Error::InvalidSchedule(format!(
                    "t_i = {t_i} without a solo segment; an interaction-only schedule needs t_i = 0"
                )));
            }
            return Ok(Self::single(SegmentKind::Interaction, total));
        };
        if t_i + t_s == 0 || t_i * t_s != 0 {
            return Err(Error::InvalidSchedule(format!(
                "t_i = {t_i}, t_s = {t_s} violates t_i + t_s > 0 and t_i * t_s = 0 (exactly one segment starts at frame 0)"
            )));
        }
        let split = t_i + t_s;
        if split >= total {
            return Err(Error::InvalidSchedule(format!("segment start {split} outside [0, {total})")));
        }
        let (first, second) = if t_i == 0 {
            (SegmentKind::Interaction, SegmentKind::Solo)
        } else {
            (SegmentKind::Solo, SegmentKind::Interaction)
        };
        Ok(Self {
            total,
            segments: vec![
                Segment { kind: first, start: 0, end: split },
                Segment { kind: second, start: split, end: total },
            ],
        })
    }

    /// One segment covering the whole sequence.
    pub fn single(kind: SegmentKind, total: usize) -> Self {
        Self { total, segments: vec![Segment { kind, start: 0, end: total }] }
    }

    /// Equal shares per pattern entry, remainder to the last segment.
    pub fn from_pattern(pattern: &Pattern, total: usize) -> Result<Self> {
        let n = pattern.0.len();
        if n < 2 {
            return Err(Error::InvalidSchedule("a pattern needs at least two segments".into()));
        }
        let share = total / n;
        if share < MIN_SEGMENT_FRAMES {
            return Err(Error::PatternTooLong { segments: n, share, minimum: MIN_SEGMENT_FRAMES });
        }
        let segments = pattern
            .0
            .iter()
            .enumerate()
            .map(|(i, &kind)| Segment {
                kind,
                start: i * share,
                end: if i + 1 == n { total } else { (i + 1) * share },
            })
            .collect();
        Ok(Self { total, segments })
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn pattern(&self) -> Pattern {
        Pattern(self.segments.iter().map(|s| s.kind).collect())
    }

    fn first_start(&self, kind: SegmentKind) -> Option<usize> {
        self.segments.iter().find(|s| s.kind == kind).map(|s| s.start)
    }

    /// Start frame of the first interaction segment.
    pub fn t_i(&self) -> Option<usize> {
        self.first_start(SegmentKind::Interaction)
    }

    /// Start frame of the first solo segment.
    pub fn t_s(&self) -> Option<usize> {
        self.first_start(SegmentKind::Solo)
    }

    /// First frames of every segment after the first.
    pub fn boundaries(&self) -> Vec<usize> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }

    /// Clipped `[lo, hi]` window around a boundary.
    pub fn window(&self, boundary: usize) -> (usize, usize) {
        (boundary.saturating_sub(BOUNDARY_RADIUS), (boundary + BOUNDARY_RADIUS).min(self.total - 1))
    }

    /// True on frames within the window of any boundary.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total];
        for b in self.boundaries() {
            let (lo, hi) = self.window(b);
            mask[lo..=hi].fill(true);
        }
        mask
    }

    /// Patterns longer than solo-interaction-solo trade semantic coverage for switches.
    pub fn quality_warning(&self) -> Option<String> {
        (self.segments.len() > 3).then(|| {
            format!(
                "pattern {} has {} segments; more than three segments per sequence shortens every motion phase",
                self.pattern(),
                self.segments.len()
            )
        })
    }
}
