//! Shared numeric helpers: tail probabilities, quantiles, seeded RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Upper-tail probability of a chi-square distribution with `dof` degrees of
/// freedom, computed through the regularized upper incomplete gamma function
/// Q(dof/2, x/2).
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    assert!(dof >= 1, "chi_square_sf requires dof >= 1");
    if x <= 0.0 {
        return 1.0;
    }
    statrs::function::gamma::gamma_ur(dof as f64 / 2.0, x / 2.0)
}

/// Two-sided p-value of a standard normal z statistic, `2 * (1 - Phi(|z|))`,
/// evaluated as `erfc(|z| / sqrt(2))` to keep precision in the tails.
pub fn normal_two_sided_p(z: f64) -> f64 {
    statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Quantile of a sorted sample with linear interpolation between order
/// statistics: position `q * (n - 1)` (zero-based) is interpolated between its
/// neighbouring order statistics.
///
/// `sorted` must be non-empty and ascending; `q` must lie in `[0, 1]`.
pub fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile level out of range");
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let w = pos - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

/// Deterministic RNG for a (seed, stream) pair. Independent streams of the
/// same seed never overlap, which keeps parallel work reproducible: stream
/// identity, not scheduling order, decides the draw sequence.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes several words into a single sub-seed (splitmix64 finalizer over each
/// word in turn). Used to derive per-task seeds from a base seed plus indices.
pub fn mix_seed(words: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &w in words {
        let mut z = h ^ w.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

/// Area under the ROC curve of `values` against boolean `labels` via the
/// Mann-Whitney statistic with midrank tie correction. Returns `None` when
/// either class is empty.
pub fn rank_auc(values: &[f64], labels: &[bool]) -> Option<f64> {
    debug_assert_eq!(values.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    // Midranks: tied values share the average of the ranks they span.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}
