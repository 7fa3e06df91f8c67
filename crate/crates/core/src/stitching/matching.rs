use super::keypoints::Keypoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchPair {
    pub src_idx: usize,
    pub dst_idx: usize,
    pub distance: u32,
}

/// Nearest-neighbour matching with Lowe's ratio test.
///
/// A source keypoint keeps its nearest neighbour in `b` only when
/// `nearest < ratio * second_nearest`. Sources with fewer than two candidates
/// produce no match.
pub fn match_descriptors(a: &[Keypoint], b: &[Keypoint], ratio: f64) -> Vec<MatchPair> {
    if b.len() < 2 {
        return Vec::new();
    }
    a.iter()
        .enumerate()
        .filter_map(|(src_idx, kp)| {
            let mut best = (u32::MAX, usize::MAX);
            let mut second = u32::MAX;
            for (j, other) in b.iter().enumerate() {
                let d = kp.descriptor.distance(&other.descriptor);
                if d < best.0 {
                    second = best.0;
                    best = (d, j);
                } else if d < second {
                    second = d;
                }
            }
            ((best.0 as f64) < ratio * second as f64).then_some(MatchPair {
                src_idx,
                dst_idx: best.1,
                distance: best.0,
            })
        })
        .collect()
}
