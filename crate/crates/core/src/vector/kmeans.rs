//! Spherical k-means used as the IVF coarse quantizer.

use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::embedding::{l2_norm, Embedding};
use crate::error::{Error, Result};

/// Index of the centroid with maximal cosine similarity; ties go to the lower
/// index.
pub fn assign_nearest(vector: &Embedding, centroids: &[Embedding]) -> usize {
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let sim = vector.dot(c);
        if sim > best_sim {
            best = i;
            best_sim = sim;
        }
    }
    best
}

/// Clusters unit vectors into `nlist` unit centroids.
///
/// Initial centroids are `nlist` distinct input vectors drawn with `seed`
/// (k-means++ weighting).
/// Assignment and update alternate until assignments stop changing or
/// `max_iters` rounds have run. An empty cluster takes the member of the
/// largest cluster that is farthest from its centroid.
pub fn build_kmeans(vectors: &[Embedding], nlist: usize, seed: u64, max_iters: usize) -> Result<Vec<Embedding>> {
    if nlist == 0 {
        return Err(Error::Size("nlist must be at least 1".into()));
    }
    if vectors.len() < nlist {
        return Err(Error::Size(alloc::format!(
            "k-means needs at least nlist={nlist} vectors, got {}",
            vectors.len()
        )));
    }
    let dim = vectors[0].dim();
    if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(Error::Shape {
            expected: dim,
            actual: bad.dim(),
        });
    }

    let mut centroids = seed_centroids(vectors, nlist, seed);

    let mut assignment: Vec<usize> = Vec::new();
    for _ in 0..max_iters {
        let next: Vec<usize> = vectors.iter().map(|v| assign_nearest(v, &centroids)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
        reseed_empty(vectors, &centroids, &mut assignment, nlist);
        update_centroids(vectors, &assignment, &mut centroids, dim);
    }
    Ok(centroids)
}

/// k-means++ seeding: the first centroid is a uniform draw, each further one
/// an input vector drawn with weight `1 - cos` to its nearest chosen centroid.
/// Already-chosen vectors have weight zero, so picks are distinct.
fn seed_centroids(vectors: &[Embedding], nlist: usize, seed: u64) -> Vec<Embedding> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = vectors.len();
    let mut chosen = vec![false; n];
    let mut nearest = vec![f64::NEG_INFINITY; n];
    let mut centroids = Vec::with_capacity(nlist);
    let mut pick = rng.gen_range(0..n);
    loop {
        chosen[pick] = true;
        centroids.push(vectors[pick].clone());
        if centroids.len() == nlist {
            return centroids;
        }
        for (i, v) in vectors.iter().enumerate() {
            nearest[i] = nearest[i].max(v.dot(&vectors[pick]));
        }
        let weights = (0..n).map(|i| if chosen[i] { 0.0 } else { (1.0 - nearest[i]).max(0.0) });
        pick = match WeightedIndex::new(weights) {
            Ok(dist) => dist.sample(&mut rng),
            // every remaining vector duplicates a centroid
            Err(_) => {
                let remaining: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
                remaining[rng.gen_range(0..remaining.len())]
            }
        };
    }
}

fn reseed_empty(vectors: &[Embedding], centroids: &[Embedding], assignment: &mut [usize], nlist: usize) {
    loop {
        let mut sizes = vec![0usize; nlist];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        // largest cluster, lowest index on ties
        let largest = (0..nlist).fold(0, |best, i| if sizes[i] > sizes[best] { i } else { best });
        if sizes[largest] < 2 {
            return;
        }
        let mut farthest = usize::MAX;
        let mut lowest = f64::INFINITY;
        for (i, v) in vectors.iter().enumerate() {
            if assignment[i] == largest {
                let sim = v.dot(&centroids[largest]);
                if sim < lowest {
                    lowest = sim;
                    farthest = i;
                }
            }
        }
        assignment[farthest] = empty;
    }
}

fn update_centroids(vectors: &[Embedding], assignment: &[usize], centroids: &mut [Embedding], dim: usize) {
    let mut sums = vec![vec![0.0f64; dim]; centroids.len()];
    for (v, &a) in vectors.iter().zip(assignment) {
        for (s, x) in sums[a].iter_mut().zip(v.as_slice()) {
            *s += x;
        }
    }
    for (centroid, sum) in centroids.iter_mut().zip(sums) {
        // a mean that cancels to zero keeps its previous direction
        if l2_norm(&sum) > 1e-12 {
            if let Ok(c) = Embedding::normalize(sum) {
                *centroid = c;
            }
        }
    }
}
