//! Scaled dot-product attention weights over encoded agent messages.
//!
//! For a query encoding `q` and keys `k_1 .. k_N` of width `d`:
//!
//! ```text
//! w_j = exp(q . k_j / sqrt(d)) / sum_l exp(q . k_l / sqrt(d))
//! ```

use ndarray::ArrayView1;

use crate::error::{Error, Result};

/// Softmax weights of `query` against each of `keys`.
pub fn attention_weights(query: &[f64], keys: &[Vec<f64>]) -> Result<Vec<f64>> {
    if keys.is_empty() {
        return Err(Error::contract("attention over zero keys"));
    }
    if let Some(k) = keys.iter().find(|k| k.len() != query.len()) {
        return Err(Error::contract(format!(
            "key width {} does not match query width {}",
            k.len(),
            query.len()
        )));
    }
    let q = ArrayView1::from(query);
    let views: Vec<ArrayView1<f64>> = keys.iter().map(|k| ArrayView1::from(k.as_slice())).collect();
    let mut out = vec![0.0; keys.len()];
    weights_into(q, &views, &mut out);
    Ok(out)
}

/// Writes the weights of `query` over `keys` into `out`.
pub(crate) fn weights_into(query: ArrayView1<f64>, keys: &[ArrayView1<f64>], out: &mut [f64]) {
    let scale = 1.0 / (query.len().max(1) as f64).sqrt();
    let mut max = f64::NEG_INFINITY;
    for (o, k) in out.iter_mut().zip(keys) {
        *o = query.dot(k) * scale;
        max = max.max(*o);
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_case() {
        let w = attention_weights(&[1.0], &[vec![0.0], vec![2f64.ln()]]).unwrap();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cases() {
        assert_eq!(attention_weights(&[0.3, -0.2], &[vec![1.0, 2.0]]).unwrap(), vec![1.0]);
        let same = vec![vec![0.5, 0.1]; 4];
        for w in attention_weights(&[0.2, 0.9], &same).unwrap() {
            assert!((w - 0.25).abs() < 1e-15);
        }
        assert!(attention_weights(&[1.0], &[vec![1.0, 2.0]]).is_err());
        assert!(attention_weights(&[1.0], &[]).is_err());
    }

    fn encodings(n: usize, d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
        (
            prop::collection::vec(-5.0..5.0f64, d),
            prop::collection::vec(prop::collection::vec(-5.0..5.0f64, d), n),
        )
    }

    proptest! {
        #[test]
        fn weights_form_a_distribution((q, keys) in (1usize..8, 1usize..6).prop_flat_map(|(n, d)| encodings(n, d))) {
            let w = attention_weights(&q, &keys).unwrap();
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn permutation_equivariant(
            (q, keys) in (2usize..7, 1usize..5).prop_flat_map(|(n, d)| encodings(n, d)),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..keys.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| keys[p].clone()).collect();
            let w = attention_weights(&q, &keys).unwrap();
            let wp = attention_weights(&q, &permuted).unwrap();
            for (slot, &p) in perm.iter().enumerate() {
                prop_assert!((wp[slot] - w[p]).abs() < 1e-12);
            }
        }
    }
}
