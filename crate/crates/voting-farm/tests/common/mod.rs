//! Shared test support: an independent brute-force oracle for the seven
//! voting algorithms, random-instance generators, and a farm-driving helper.
//!
//! The oracle works directly over scalar doubles with the absolute-difference
//! metric and stays independent of the library's implementation path; the
//! suites compare the two through the 8-byte vote encodings.

#![allow(dead_code)]

pub mod oracle {
    #[derive(Debug, Clone, PartialEq)]
    pub struct OracleVote {
        pub success: bool,
        pub value: Option<f64>,
    }

    impl OracleVote {
        fn success(value: f64) -> OracleVote {
            OracleVote { success: true, value: Some(value) }
        }

        fn failure() -> OracleVote {
            OracleVote { success: false, value: None }
        }
    }

    fn d(a: f64, b: f64) -> f64 {
        (a - b).abs()
    }

    /// Greedy ε-partition keeping full member index lists: each unassigned
    /// item in index order seeds a block and captures every later unassigned
    /// item strictly within ε of the seed.
    pub fn partition(xs: &[f64], eps: f64) -> Vec<Vec<usize>> {
        let mut assigned = vec![false; xs.len()];
        let mut blocks = Vec::new();
        for i in 0..xs.len() {
            if assigned[i] {
                continue;
            }
            assigned[i] = true;
            let mut members = vec![i];
            for j in i + 1..xs.len() {
                if !assigned[j] && d(xs[i], xs[j]) < eps {
                    assigned[j] = true;
                    members.push(j);
                }
            }
            blocks.push(members);
        }
        blocks
    }

    pub fn exact_consensus(xs: &[f64]) -> OracleVote {
        match xs.first() {
            None => OracleVote::failure(),
            Some(first) => {
                if xs.iter().all(|x| x.to_bits() == first.to_bits()) {
                    OracleVote::success(*first)
                } else {
                    OracleVote::failure()
                }
            }
        }
    }

    pub fn majority(xs: &[f64], eps: f64) -> OracleVote {
        for block in partition(xs, eps) {
            if block.len() > xs.len() / 2 {
                return OracleVote::success(xs[block[0]]);
            }
        }
        OracleVote::failure()
    }

    pub fn plurality(xs: &[f64], eps: f64) -> OracleVote {
        let blocks = partition(xs, eps);
        let best = blocks.iter().max_by_key(|b| b.len());
        match best {
            Some(block) if block.len() > 1 => {
                // max_by_key keeps the last maximum; the first block wins ties
                let width = block.len();
                let first = blocks.iter().find(|b| b.len() == width).unwrap();
                OracleVote::success(xs[first[0]])
            }
            _ => OracleVote::failure(),
        }
    }

    /// Removal-loop median: while more than two inputs remain, delete the
    /// most distant pair (ties keep the pair seen last in index-ordered pair
    /// enumeration); the answer is the lowest-indexed survivor.
    pub fn median(xs: &[f64]) -> OracleVote {
        if xs.is_empty() {
            return OracleVote::failure();
        }
        let mut alive: Vec<usize> = (0..xs.len()).collect();
        loop {
            if alive.len() <= 2 {
                return OracleVote::success(xs[alive[0]]);
            }
            let mut best: Option<(usize, usize, f64)> = None;
            for (pos_a, &a) in alive.iter().enumerate() {
                for &b in &alive[pos_a + 1..] {
                    let dist = d(xs[a], xs[b]);
                    if best.is_none_or(|(_, _, max)| dist >= max) {
                        best = Some((a, b, dist));
                    }
                }
            }
            let (a, b, _) = best.expect("more than two alive inputs form a pair");
            alive.retain(|&i| i != a && i != b);
        }
    }

    /// Direct evaluation of the weighted-averaging formula with the squared
    /// scaling-factor divisor: wᵢ = 1/(1 + ∏_{j≠i} d²(xⱼ,xᵢ)/a²).
    pub fn weighted_average(xs: &[f64], scaling_factor: f64) -> OracleVote {
        let a = if scaling_factor == 0.0 { 1.0 } else { scaling_factor };
        let weights: Vec<f64> = (0..xs.len())
            .map(|i| {
                let mut product = 1.0;
                for j in 0..xs.len() {
                    if j != i {
                        let dist = d(xs[j], xs[i]);
                        product *= dist * dist;
                    }
                }
                1.0 / (1.0 + product / (a * a))
            })
            .collect();
        let weight_sum: f64 = weights.iter().sum();
        if weight_sum == 0.0 {
            return OracleVote::failure();
        }
        let weighted: f64 = xs.iter().zip(&weights).map(|(x, w)| x * w).sum();
        OracleVote::success(weighted / weight_sum)
    }

    pub fn simple_majority(xs: &[f64], eps: f64) -> OracleVote {
        let threshold = xs.len() / 2;
        for i in 0..xs.len() {
            let agreement = (0..xs.len())
                .filter(|&j| j != i && d(xs[i], xs[j]) < eps)
                .count();
            if agreement >= threshold {
                return OracleVote::success(xs[i]);
            }
        }
        OracleVote::failure()
    }

    pub fn simple_average(xs: &[f64]) -> OracleVote {
        if xs.is_empty() {
            return OracleVote::failure();
        }
        let mut sum = 0.0;
        for x in xs {
            sum += x;
        }
        OracleVote::success(sum / xs.len() as f64)
    }

    /// Oracle counterpart of the dispatch table, by algorithm id.
    pub fn dispatch(alg: i32, xs: &[f64], eps: f64, scaling_factor: f64) -> OracleVote {
        match alg {
            0 => exact_consensus(xs),
            1 => majority(xs, eps),
            2 => median(xs),
            3 => plurality(xs, eps),
            4 => weighted_average(xs, scaling_factor),
            5 => simple_majority(xs, eps),
            6 => simple_average(xs),
            _ => panic!("oracle dispatch out of range: {alg}"),
        }
    }
}

pub mod gen {
    use rand::Rng;

    /// One randomized voting instance: scalar doubles in [−10, 10] built from
    /// a few cluster centers, with exact duplicates, near-ε jitter, and
    /// clearly-separated outliers mixed in.
    pub fn clustered_instance(rng: &mut impl Rng) -> Vec<f64> {
        let n = rng.gen_range(1..=7);
        let center_count = rng.gen_range(1..=n);
        // grid-snapped centers stay ≥ 1e-3 apart, far beyond ε = 5e-5
        let centers: Vec<f64> = (0..center_count)
            .map(|_| rng.gen_range(-10_000i32..=10_000) as f64 / 1_000.0)
            .collect();
        (0..n)
            .map(|_| {
                let center = centers[rng.gen_range(0..centers.len())];
                match rng.gen_range(0..10) {
                    // mostly exact duplicates of a center
                    0..=5 => center,
                    // jitter within the agreement threshold
                    6..=7 => center + rng.gen_range(-24i32..=24) as f64 * 1e-6,
                    // jitter around the threshold boundary and beyond
                    _ => center + rng.gen_range(-400i32..=400) as f64 * 1e-6,
                }
            })
            .collect()
    }

    pub fn encode(xs: &[f64]) -> Vec<Vec<u8>> {
        xs.iter().map(|x| x.to_le_bytes().to_vec()).collect()
    }
}

pub mod harness {
    use std::time::Duration;

    use voting_farm::farm::{FarmOptions, Machine, VotingFarm};
    use voting_farm::metric;

    /// Opens farm `farm_id` from module `module`'s viewpoint and describes
    /// all `n` voters the coherent way: voter i lives on node i with thread
    /// ident 100 + i.
    pub fn described_farm(
        machine: &Machine,
        farm_id: i32,
        n: usize,
        module: usize,
        options: FarmOptions,
    ) -> VotingFarm {
        let node = machine.node(module as i32);
        let mut farm = node
            .open_farm_with(farm_id, metric::absolute_difference(), options)
            .expect("open farm");
        for peer in 0..n {
            farm.add_voter(peer as i32, 100 + peer as i32).expect("describe voter");
        }
        farm
    }

    /// Options tuned for tests: a short event timeout and bounded connects.
    pub fn fast_options() -> FarmOptions {
        FarmOptions {
            event_timeout: Duration::from_secs(5),
            connect_timeout: Duration::from_secs(5),
            events: None,
        }
    }
}
