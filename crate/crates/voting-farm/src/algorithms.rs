//! The seven generalized voting algorithms over opaque equal-length inputs
//! and a user metric, plus the ε-partition procedure shared by the majority
//! and plurality voters.
//!
//! All algorithms are pure functions over an immutable [`VoteInputs`] view and
//! are safe to invoke concurrently. A vote that cannot be formed is a normal
//! FAILURE outcome; typed errors are reserved for malformed requests (wrong
//! item length for the numeric algorithms, an empty farm for simple
//! averaging).
//!
//! Index order matters: inputs are scanned in voter-index order, which makes
//! the tie-breaks of the partition seeds, the plurality maximum (first block
//! wins), the simple-majority threshold scan (first index wins), and the
//! median removal loop (last maximal pair wins) deterministic farm-wide.

use crate::metric::Metric;
use crate::protocol::{VfError, VoteResult, DEFAULT_EPSILON, DEFAULT_SCALING_FACTOR};

/// One block of an ε-partition: the seed item and how many inputs joined it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster<'a> {
    /// The block's seed — always one of the inputs.
    pub representative: &'a [u8],
    /// Number of members, the seed included.
    pub cardinality: usize,
}

/// An ordered list of candidate inputs together with the metric and the
/// voting parameters.
///
/// Slots may be absent when the view is built from a voter's input table;
/// a vote over a table with absent slots is a FAILURE for every algorithm.
pub struct VoteInputs<'a> {
    items: Vec<Option<&'a [u8]>>,
    metric: &'a Metric,
    epsilon: f64,
    scaling_factor: f64,
}

impl<'a> VoteInputs<'a> {
    /// A view over fully-present items with default ε and scaling factor.
    pub fn new(items: &'a [Vec<u8>], metric: &'a Metric) -> VoteInputs<'a> {
        VoteInputs {
            items: items.iter().map(|i| Some(i.as_slice())).collect(),
            metric,
            epsilon: DEFAULT_EPSILON,
            scaling_factor: DEFAULT_SCALING_FACTOR,
        }
    }

    /// A view over a slot table in which some inputs may still be missing.
    pub fn from_slots(slots: &'a [Option<Vec<u8>>], metric: &'a Metric) -> VoteInputs<'a> {
        VoteInputs {
            items: slots.iter().map(|s| s.as_deref()).collect(),
            metric,
            epsilon: DEFAULT_EPSILON,
            scaling_factor: DEFAULT_SCALING_FACTOR,
        }
    }

    pub fn epsilon(mut self, epsilon: f64) -> VoteInputs<'a> {
        self.epsilon = epsilon;
        self
    }

    pub fn scaling_factor(mut self, scaling_factor: f64) -> VoteInputs<'a> {
        self.scaling_factor = scaling_factor;
        self
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn item(&self, i: usize) -> Option<&'a [u8]> {
        self.items[i]
    }

    fn all_present(&self) -> bool {
        self.items.iter().all(|i| i.is_some())
    }

    fn distance(&self, a: &[u8], b: &[u8]) -> f64 {
        (self.metric)(a, b)
    }

    /// All items decoded as little-endian doubles, or None if any slot is
    /// absent or not 8 bytes long.
    fn decode_reals(&self) -> Result<Option<Vec<f64>>, VfError> {
        let mut values = Vec::with_capacity(self.items.len());
        for item in &self.items {
            match item {
                None => return Ok(None),
                Some(bytes) => {
                    let arr: [u8; 8] = (*bytes).try_into().map_err(|_| VfError::InputSize)?;
                    values.push(f64::from_le_bytes(arr));
                }
            }
        }
        Ok(Some(values))
    }
}

/// Greedy ε-partition of the present inputs, in index order.
///
/// Each undeleted item seeds a block; every later undeleted item strictly
/// within ε of the seed joins the block and is deleted. Blocks are disjoint,
/// cover all present inputs, and their cardinalities sum to the number of
/// present inputs.
pub fn partition<'a>(inputs: &VoteInputs<'a>) -> Vec<Cluster<'a>> {
    let n = inputs.len();
    let mut deleted = vec![false; n];
    let mut blocks = Vec::new();
    for i in 0..n {
        if deleted[i] {
            continue;
        }
        let Some(seed) = inputs.item(i) else { continue };
        deleted[i] = true;
        let mut cardinality = 1;
        for (j, del) in deleted.iter_mut().enumerate().skip(i + 1) {
            if *del {
                continue;
            }
            if let Some(other) = inputs.item(j) {
                if inputs.distance(seed, other) < inputs.epsilon {
                    *del = true;
                    cardinality += 1;
                }
            }
        }
        blocks.push(Cluster { representative: seed, cardinality });
    }
    blocks
}

/// Perfect bitwise equality: SUCCESS with the first input iff every input is
/// present and byte-identical to it.
pub fn exact_consensus(inputs: &VoteInputs<'_>) -> Result<VoteResult, VfError> {
    let first = match inputs.items.first() {
        Some(Some(first)) => *first,
        _ => return Ok(VoteResult::failure()),
    };
    for item in &inputs.items[1..] {
        match item {
            Some(bytes) if *bytes == first => {}
            _ => return Ok(VoteResult::failure()),
        }
    }
    Ok(VoteResult::success(first.to_vec()))
}

/// Formalized majority: SUCCESS with the representative of the first ε-block
/// holding strictly more than n/2 inputs (integer division).
pub fn majority(inputs: &VoteInputs<'_>) -> Result<VoteResult, VfError> {
    if !inputs.all_present() {
        return Ok(VoteResult::failure());
    }
    let n = inputs.len();
    for block in partition(inputs) {
        if block.cardinality > n / 2 {
            return Ok(VoteResult::success(block.representative.to_vec()));
        }
    }
    Ok(VoteResult::failure())
}

/// Generalized median: repeatedly remove the two most distant present inputs
/// while more than two remain, then answer the lowest-indexed survivor of the
/// final scan. Ties on the maximum distance keep the last pair encountered.
/// Never fails on a nonempty, fully-present input set.
pub fn median(inputs: &VoteInputs<'_>) -> Result<VoteResult, VfError> {
    let n = inputs.len();
    if n == 0 || !inputs.all_present() {
        return Ok(VoteResult::failure());
    }
    let items: Vec<&[u8]> = inputs.items.iter().map(|i| i.unwrap()).collect();
    let mut present = vec![true; n];
    loop {
        let mut survivors = Vec::new();
        let mut max = -1.0f64;
        let (mut ri, mut rj) = (0, 0);
        for i in 0..n {
            if !present[i] {
                continue;
            }
            survivors.push(i);
            for j in i + 1..n {
                if !present[j] {
                    continue;
                }
                let dist = inputs.distance(items[i], items[j]);
                if dist >= max {
                    max = dist;
                    ri = i;
                    rj = j;
                }
            }
        }
        let removed = max != -1.0;
        if removed {
            present[ri] = false;
            present[rj] = false;
        }
        if survivors.len() <= 2 || !removed {
            // `!removed` with more than two survivors means the metric
            // returned no comparable distances (NaN); no progress is possible
            return Ok(VoteResult::success(items[survivors[0]].to_vec()));
        }
    }
}

/// Formalized plurality: SUCCESS with the representative of the largest
/// ε-block (first block wins ties) provided that block holds more than one
/// input.
pub fn plurality(inputs: &VoteInputs<'_>) -> Result<VoteResult, VfError> {
    if !inputs.all_present() {
        return Ok(VoteResult::failure());
    }
    let mut max = 0usize;
    let mut best: Option<&[u8]> = None;
    for block in partition(inputs) {
        if block.cardinality > max {
            max = block.cardinality;
            best = Some(block.representative);
        }
    }
    match best {
        Some(rep) if max > 1 => Ok(VoteResult::success(rep.to_vec())),
        _ => Ok(VoteResult::failure()),
    }
}

/// Weighted averaging over inputs decoding to doubles.
///
/// Each weight is wᵢ = 1 / (1 + ∏_{j≠i} d²(xⱼ, xᵢ) / a²) with a the scaling
/// factor; the vote is Σ wᵢ·xᵢ / Σ wᵢ. A zero scaling factor is reset to 1
/// with a warning. FAILURE iff the weight sum vanishes.
pub fn weighted_average(inputs: &VoteInputs<'_>) -> Result<VoteResult, VfError> {
    let Some(values) = inputs.decode_reals()? else {
        return Ok(VoteResult::failure());
    };
    let n = values.len();
    let a = if inputs.scaling_factor == 0.0 {
        log::warn!("illegal scaling factor 0 --- set to 1");
        1.0
    } else {
        inputs.scaling_factor
    };

    let items: Vec<&[u8]> = inputs.items.iter().map(|i| i.unwrap()).collect();
    let mut squaredist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..i {
            let d = inputs.distance(items[i], items[j]);
            squaredist[i * n + j] = d * d;
            squaredist[j * n + i] = d * d;
        }
    }

    let mut weights = vec![0.0f64; n];
    let mut weight_sum = 0.0f64;
    for i in 0..n {
        let mut partial = 1.0f64;
        for j in 0..n {
            if j != i {
                partial *= squaredist[i * n + j];
            }
        }
        partial /= a * a;
        weights[i] = 1.0 / (1.0 + partial);
        weight_sum += weights[i];
    }

    let mut sum = 0.0f64;
    for i in 0..n {
        sum += values[i] * weights[i];
    }
    if weight_sum != 0.0 {
        Ok(VoteResult::success((sum / weight_sum).to_le_bytes().to_vec()))
    } else {
        Ok(VoteResult::failure())
    }
}

/// Per-input agreement count: vᵢ = #{j ≠ i : d(xᵢ, xⱼ) < ε}. SUCCESS with the
/// first input whose count reaches ⌊n/2⌋, else FAILURE.
pub fn simple_majority(inputs: &VoteInputs<'_>) -> Result<VoteResult, VfError> {
    if !inputs.all_present() {
        return Ok(VoteResult::failure());
    }
    let n = inputs.len();
    let items: Vec<&[u8]> = inputs.items.iter().map(|i| i.unwrap()).collect();
    let threshold = n >> 1;
    for i in 0..n {
        let mut agreement = 0usize;
        for j in 0..n {
            if i != j && inputs.distance(items[i], items[j]) < inputs.epsilon {
                agreement += 1;
            }
        }
        if agreement >= threshold {
            return Ok(VoteResult::success(items[i].to_vec()));
        }
    }
    Ok(VoteResult::failure())
}

/// Arithmetic mean of inputs decoding to doubles. Not fault-tolerant: one
/// wildly wrong input skews the result, which is what the weighted variant
/// mitigates.
pub fn simple_average(inputs: &VoteInputs<'_>) -> Result<VoteResult, VfError> {
    if inputs.is_empty() {
        return Err(VfError::InvalidFarm);
    }
    let Some(values) = inputs.decode_reals()? else {
        return Ok(VoteResult::failure());
    };
    let mut sum = 0.0f64;
    for v in &values {
        sum += v;
    }
    sum /= values.len() as f64;
    Ok(VoteResult::success(sum.to_le_bytes().to_vec()))
}

/// Routes to the algorithm at the given dispatch-table entry. Out-of-range
/// ids are the caller's responsibility (the voter rejects them before
/// dispatching).
pub fn dispatch(
    alg: crate::protocol::AlgorithmId,
    inputs: &VoteInputs<'_>,
) -> Result<VoteResult, VfError> {
    use crate::protocol::AlgorithmId::*;
    match alg {
        ExactConsensus => exact_consensus(inputs),
        Majority => majority(inputs),
        Median => median(inputs),
        Plurality => plurality(inputs),
        WeightedAverage => weighted_average(inputs),
        SimpleMajority => simple_majority(inputs),
        SimpleAverage => simple_average(inputs),
    }
}
