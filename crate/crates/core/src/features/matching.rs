use super::detect::Keypoint;

/// Ratio-test and mutual-best settings for descriptor matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// A match is kept only if its distance is below `ratio` times the
    /// second-best distance, in both directions.
    pub ratio: f32,
    pub mutual: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            ratio: 0.8,
            mutual: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Best {
    index: usize,
    first: u32,
    second: u32,
}

impl Best {
    const EMPTY: Best = Best {
        index: usize::MAX,
        first: u32::MAX,
        second: u32::MAX,
    };

    #[inline]
    fn offer(&mut self, index: usize, d: u32) {
        if d < self.first {
            self.second = self.first;
            self.first = d;
            self.index = index;
        } else if d < self.second {
            self.second = d;
        }
    }

    fn passes(&self, ratio: f32) -> bool {
        self.index != usize::MAX
            && (self.second == u32::MAX || (self.first as f32) < ratio * self.second as f32)
    }
}

/// Matches keypoints of `a` to `b`, returning `(index_in_a, index_in_b)`
/// sorted by `index_in_a`. With `mutual` set, the ratio test is applied in
/// both directions, so `match(b, a)` is exactly the transpose.
pub fn match_keypoints(a: &[Keypoint], b: &[Keypoint], params: &MatchParams) -> Vec<(usize, usize)> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut row = vec![Best::EMPTY; a.len()];
    let mut col = vec![Best::EMPTY; b.len()];
    for (i, ka) in a.iter().enumerate() {
        let r = &mut row[i];
        for (j, kb) in b.iter().enumerate() {
            let d = ka.descriptor.distance(&kb.descriptor);
            r.offer(j, d);
            col[j].offer(i, d);
        }
    }
    row.iter()
        .enumerate()
        .filter(|(_, r)| r.passes(params.ratio))
        .filter(|(i, r)| {
            !params.mutual || {
                let c = &col[r.index];
                c.index == *i && c.passes(params.ratio)
            }
        })
        .map(|(i, r)| (i, r.index))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::detect::Descriptor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_keypoints(n: usize, rng: &mut ChaCha8Rng) -> Vec<Keypoint> {
        (0..n)
            .map(|i| Keypoint {
                x: i as f32,
                y: 0.0,
                response: 1.0,
                angle: 0.0,
                descriptor: Descriptor([rng.random(), rng.random(), rng.random(), rng.random()]),
            })
            .collect()
    }

    #[test]
    fn identical_lists_match_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kps = random_keypoints(200, &mut rng);
        let m = match_keypoints(&kps, &kps, &MatchParams::default());
        assert_eq!(m, (0..200).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn empty_input_gives_empty_result() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let kps = random_keypoints(5, &mut rng);
        assert!(match_keypoints(&[], &kps, &MatchParams::default()).is_empty());
        assert!(match_keypoints(&kps, &[], &MatchParams::default()).is_empty());
    }

    /// Monte-Carlo estimate of the spurious-match rate between unrelated
    /// descriptor sets.
    #[test]
    fn disjoint_random_descriptors_rarely_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut spurious = 0;
        let mut offered = 0;
        for _ in 0..20 {
            let a = random_keypoints(150, &mut rng);
            let b = random_keypoints(150, &mut rng);
            spurious += match_keypoints(&a, &b, &MatchParams::default()).len();
            offered += a.len();
        }
        assert!(spurious * 100 <= offered * 5, "{spurious}/{offered}");
    }

    #[test]
    fn matching_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = random_keypoints(120, &mut rng);
        // b shares half of a's descriptors, with a few flipped bits.
        let mut b = random_keypoints(120, &mut rng);
        for (i, k) in b.iter_mut().enumerate().take(60) {
            let mut d = base[i * 2].descriptor;
            d.0[0] ^= rng.random::<u64>() & 0x0101_0101;
            k.descriptor = d;
        }
        let ab = match_keypoints(&base, &b, &MatchParams::default());
        let mut ba: Vec<_> = match_keypoints(&b, &base, &MatchParams::default())
            .into_iter()
            .map(|(j, i)| (i, j))
            .collect();
        ba.sort();
        assert_eq!(ab, ba);
        assert!(ab.len() >= 55);
    }
}
