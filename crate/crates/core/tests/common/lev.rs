//! Edit-distance oracle: the recursive definition, memoized on suffix
//! positions, with no shared code with the DP implementation.

use std::collections::HashMap;

use r2d2::distance::{levenshtein, LevenshteinOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn oracle(a: &[u8], b: &[u8]) -> usize {
    fn go(a: &[u8], b: &[u8], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&d) = memo.get(&(i, j)) {
            return d;
        }
        let d = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo)
                .min(go(a, b, i, j + 1, memo))
                .min(go(a, b, i + 1, j + 1, memo))
        };
        memo.insert((i, j), d);
        d
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

fn dist(a: &[u8], b: &[u8]) -> usize {
    levenshtein(a, b, LevenshteinOptions::default()).value().unwrap()
}

fn random_string(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let len = rng.gen_range(0..=12);
    // small alphabet so strings share structure
    let alphabet = rng.gen_range(2..=6u8);
    (0..len).map(|_| b'a' + rng.gen_range(0..alphabet)).collect()
}

/// Checks oracle agreement and the metric axioms on `pairs` random pairs
/// (each with a third string for the triangle inequality).
pub fn check_axioms(pairs: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..pairs {
        let (a, b, c) = (
            random_string(&mut rng),
            random_string(&mut rng),
            random_string(&mut rng),
        );
        let ab = dist(&a, &b);
        let want = oracle(&a, &b);
        let fail = |what: &str| Err(format!("case {case} {what}: a={a:?} b={b:?} c={c:?}"));
        if ab != want {
            return fail(&format!("distance {ab} != oracle {want}"));
        }
        if dist(&a, &a) != 0 || dist(&b, &b) != 0 {
            return fail("identity");
        }
        if (ab == 0) != (a == b) {
            return fail("zero distance for distinct strings");
        }
        if ab != dist(&b, &a) {
            return fail("symmetry");
        }
        if ab > dist(&a, &c) + dist(&c, &b) {
            return fail("triangle inequality");
        }
        if ab < a.len().abs_diff(b.len()) || ab > a.len().max(b.len()) {
            return fail("length bounds");
        }
    }
    Ok(())
}
