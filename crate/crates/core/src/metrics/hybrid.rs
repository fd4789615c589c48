use crate::error::{Error, Result};
use crate::interleave::{Segment, SegmentKind, SegmentSchedule};

/// Frame-weighted mix of per-segment matching scores. Each segment weighs
/// by its frames outside the boundary mask (`true` = masked).
pub fn hybrid_score(
    schedule: &SegmentSchedule,
    masked: &[bool],
    mut solo_scorer: impl FnMut(&Segment) -> Result<f64>,
    mut pair_scorer: impl FnMut(&Segment) -> Result<f64>,
) -> Result<f64> {
    if masked.len() != schedule.total() {
        return Err(Error::ShapeMismatch(format!("{} mask entries for {} frames", masked.len(), schedule.total())));
    }
    let counts: Vec<usize> =
        schedule.segments().iter().map(|s| masked[s.start..s.end].iter().filter(|m| !**m).count()).collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::AllMasked);
    }
    let mut score = 0.0;
    for (seg, &n) in schedule.segments().iter().zip(&counts) {
        if n == 0 {
            continue;
        }
        let s = match seg.kind {
            SegmentKind::Solo => solo_scorer(seg)?,
            SegmentKind::Interaction => pair_scorer(seg)?,
        };
        score += n as f64 / total as f64 * s;
    }
    Ok(score)
}
