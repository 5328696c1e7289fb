//! Pure logit transforms: softmax, bias, temperature, top-k / top-p
//! filtering, and sampling. The built-in generator and the step-wise
//! baseline decoders all share these.

use rand::Rng;

use super::BiasMap;

/// Numerically stable softmax. Masked entries (`-inf`) map to probability 0.
/// The result is explicitly renormalized so it sums to 1 up to rounding.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        // All entries masked; fall back to uniform to stay well-defined.
        let n = logits.len().max(1);
        return vec![1.0 / n as f64; logits.len()];
    }
    let mut probs: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    probs
}

/// Add a sparse bias to the logits in place. Ids beyond the vocabulary are
/// ignored.
pub fn apply_bias(logits: &mut [f64], bias: &BiasMap) {
    for (&id, &delta) in bias {
        if let Some(z) = logits.get_mut(id as usize) {
            *z += delta;
        }
    }
}

pub fn apply_temperature(logits: &mut [f64], temperature: f64) {
    for z in logits.iter_mut() {
        *z /= temperature;
    }
}

/// Keep the `k` highest logits, masking the rest to `-inf`. Ties at the
/// boundary resolve toward lower ids.
pub fn apply_top_k(logits: &mut [f64], k: usize) {
    if k >= logits.len() {
        return;
    }
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| {
        logits[b]
            .partial_cmp(&logits[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for &idx in &order[k..] {
        logits[idx] = f64::NEG_INFINITY;
    }
}

/// Nucleus filter: keep the smallest prefix of tokens (by descending
/// probability) whose cumulative probability reaches `p`, masking the rest.
pub fn apply_top_p(logits: &mut [f64], p: f64) {
    if p >= 1.0 {
        return;
    }
    let probs = softmax(logits);
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut cumulative = 0.0;
    let mut keep = 0;
    for &idx in &order {
        cumulative += probs[idx];
        keep += 1;
        if cumulative >= p {
            break;
        }
    }
    for &idx in &order[keep..] {
        logits[idx] = f64::NEG_INFINITY;
    }
}

/// Sample an index from the softmax of `logits` using inverse-CDF draw.
pub fn sample_index<R: Rng>(logits: &[f64], rng: &mut R) -> usize {
    let probs = softmax(logits);
    let draw: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_live = 0;
    for (idx, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_live = idx;
        }
        cumulative += p;
        if draw < cumulative {
            return idx;
        }
    }
    // Rounding can leave the cumulative sum a hair below 1.
    last_live
}

/// Index of the largest logit; ties resolve toward lower ids.
pub fn argmax_index(logits: &[f64]) -> usize {
    let mut best = 0;
    for (idx, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = idx;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_sums_to_one() {
        let probs = softmax(&[0.3, -1.2, 4.5, 0.0]);
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let z = [0.1, 2.0, -3.0, 0.7];
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.456).collect();
        let a = softmax(&z);
        let b = softmax(&shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_handles_masked_entries() {
        let probs = softmax(&[0.0, f64::NEG_INFINITY, 0.0]);
        assert_eq!(probs[1], 0.0);
        assert!((probs[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn top_k_keeps_largest_with_deterministic_ties() {
        let mut z = vec![1.0, 3.0, 3.0, 0.5];
        apply_top_k(&mut z, 2);
        assert!(z[0].is_infinite() && z[0] < 0.0);
        assert_eq!(z[1], 3.0);
        assert_eq!(z[2], 3.0);
        assert!(z[3].is_infinite() && z[3] < 0.0);

        // Three-way tie, k = 2: lower ids win.
        let mut z = vec![1.0, 1.0, 1.0];
        apply_top_k(&mut z, 2);
        assert_eq!(z[0], 1.0);
        assert_eq!(z[1], 1.0);
        assert!(z[2].is_infinite());
    }

    #[test]
    fn top_p_keeps_minimal_nucleus() {
        // probs = (0.5, 0.25, 0.125, 0.125) for logits ln(4), ln(2), 0, 0.
        let mut z = vec![4.0f64.ln(), 2.0f64.ln(), 0.0, 0.0];
        apply_top_p(&mut z, 0.7);
        assert!(z[0].is_finite());
        assert!(z[1].is_finite());
        assert!(z[2].is_infinite());
        assert!(z[3].is_infinite());
    }

    #[test]
    fn sampling_is_reproducible() {
        let z = vec![0.0, 1.0, 2.0, -1.0];
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let draws_a: Vec<usize> = (0..32).map(|_| sample_index(&z, &mut a)).collect();
        let draws_b: Vec<usize> = (0..32).map(|_| sample_index(&z, &mut b)).collect();
        assert_eq!(draws_a, draws_b);
    }

    #[test]
    fn sample_never_picks_masked_index() {
        let z = vec![0.0, f64::NEG_INFINITY, 0.3];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            assert_ne!(sample_index(&z, &mut rng), 1);
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_index(&[0.5, 2.0, 2.0]), 1);
    }
}
