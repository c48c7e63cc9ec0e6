use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DataPoint;
use crate::{Error, Result};

pub const SPLIT_RATIOS: [f64; 3] = [0.7, 0.2, 0.1];

/// Draws `k` disjoint subsets of `size` ids that flatten the distribution of
/// `key` (typically the report text).
///
/// Ids are grouped into classes of equal key. Classes are visited rarest
/// first (ties by key) in repeated rounds, taking one seeded-random member
/// per class per round, until `k · size` ids are chosen. The `i`-th chosen
/// id goes to subset `i mod k`.
pub fn sample_keyed_subsets<I: AsRef<str>, K: Ord>(
    pool: &[(I, K)],
    k: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<Vec<String>>> {
    if k == 0 || size == 0 {
        return Err(Error::Config("subset count and size must be positive".into()));
    }
    let need = k
        .checked_mul(size)
        .ok_or_else(|| Error::Config("subset sizing overflows".into()))?;
    if need > pool.len() {
        return Err(Error::Config(format!(
            "{k} subsets of {size} need {need} data points, pool has {}",
            pool.len()
        )));
    }
    let mut classes: BTreeMap<&K, Vec<&str>> = BTreeMap::new();
    for (id, key) in pool {
        classes.entry(key).or_default().push(id.as_ref());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<Vec<&str>> = classes
        .into_values()
        .map(|mut members| {
            members.shuffle(&mut rng);
            members
        })
        .collect();
    // stable sort keeps key order among equal sizes
    classes.sort_by_key(Vec::len);
    let mut chosen = Vec::with_capacity(need);
    let mut round = 0;
    while chosen.len() < need {
        for c in &classes {
            if let Some(id) = c.get(round) {
                chosen.push(id.to_string());
                if chosen.len() == need {
                    break;
                }
            }
        }
        round += 1;
    }
    let mut subsets = vec![Vec::with_capacity(size); k];
    for (i, id) in chosen.into_iter().enumerate() {
        subsets[i % k].push(id);
    }
    Ok(subsets)
}

/// [`sample_keyed_subsets`] keyed by cleaned report text.
pub fn sample_subsets(pool: &[DataPoint], k: usize, size: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    let keyed: Vec<(&str, String)> = pool.iter().map(|p| (p.id.as_str(), p.report.text())).collect();
    sample_keyed_subsets(&keyed, k, size, seed)
}

/// Train, validation and test ids of one subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub subset: usize,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    /// Free-form parameters of the run that produced the subset.
    #[serde(default)]
    pub generation: BTreeMap<String, String>,
}

/// Largest-remainder apportionment of `n` over [`SPLIT_RATIOS`].
pub fn split_sizes(n: usize) -> [usize; 3] {
    let exact: Vec<f64> = SPLIT_RATIOS.iter().map(|r| r * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        // ratios are decimal, so guard against 0.7·10 = 6.999…
        *s = (e + 1e-9).floor() as usize;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - sizes[a] as f64;
        let fb = exact[b] - sizes[b] as f64;
        fb.partial_cmp(&fa).expect("finite").then(a.cmp(&b))
    });
    let mut left = n - sizes.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

/// Seeded shuffle followed by a contiguous 70:20:10 cut.
pub fn split(subset: usize, ids: &[String], seed: u64) -> Result<SplitManifest> {
    if ids.is_empty() {
        return Err(Error::Config("cannot split an empty subset".into()));
    }
    let mut shuffled = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subset as u64);
    shuffled.shuffle(&mut rng);
    let [a, b, _] = split_sizes(ids.len());
    let test = shuffled.split_off(a + b);
    let val = shuffled.split_off(a);
    Ok(SplitManifest {
        subset,
        seed,
        ratios: SPLIT_RATIOS,
        train: shuffled,
        val,
        test,
        generation: BTreeMap::new(),
    })
}
