#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tagvocab::ingest::{build_tas, Ordering};
use tagvocab::{Post, TasRecord};

/// Random cleaned posts over small id spaces, so that entities repeat.
pub fn random_posts(seed: u64, max_assignments: usize) -> Vec<Post> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.gen_range(1..20);
    let resources = rng.gen_range(1..40);
    let vocab = rng.gen_range(1..200);
    let target = rng.gen_range(1..=max_assignments);
    let mut posts = Vec::new();
    let mut total = 0;
    while total < target {
        let k = rng.gen_range(1..=6usize).min(target - total);
        let mut tags: Vec<String> = Vec::new();
        while tags.len() < k {
            let t = format!("t{}", rng.gen_range(0..vocab));
            if !tags.contains(&t) {
                tags.push(t);
            }
            if tags.len() == vocab as usize {
                break;
            }
        }
        total += tags.len();
        posts.push(Post {
            timestamp: posts.len() as i64,
            user: format!("u{}", rng.gen_range(0..users)),
            resource: format!("r{}", rng.gen_range(0..resources)),
            tags,
        });
    }
    posts
}

pub fn random_tas(seed: u64, max_assignments: usize) -> Vec<TasRecord> {
    build_tas(&random_posts(seed, max_assignments), Ordering::RequireSorted).unwrap()
}

/// Distinct tags among the first `tau` records accepted by `keep`, counted
/// from scratch.
pub fn naive_distinct(tas: &[TasRecord], keep: impl Fn(&TasRecord) -> bool, tau: u64) -> u64 {
    let mut seen: Vec<&str> = Vec::new();
    for r in tas.iter().filter(|r| keep(r)).take(tau as usize) {
        if !seen.contains(&r.tag.as_str()) {
            seen.push(&r.tag);
        }
    }
    seen.len() as u64
}
