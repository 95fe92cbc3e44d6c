use crate::error::{Error, Result};
use crate::model::{Application, Instance, Operator};

/// Reduction instance from PARTITION: one application per number (gas
/// `a_i`, stake 0, price cap 1) and two operators of capacity `B = Σa_i / 2`
/// with stake 1 and price floor 1. Every price is pinned to 1, so total
/// fees equal processed gas, and they reach `T = 2B` (stored as metadata
/// `threshold`) exactly when the numbers split into two halves of sum `B`.
/// Meant to be solved with system-only weights.
pub fn build_partition_instance(numbers: &[u64]) -> Result<Instance> {
    if numbers.is_empty() || numbers.contains(&0) {
        return Err(Error::InvalidParams("partition numbers must be a nonempty list of positive integers".into()));
    }
    let sum: u64 = numbers.iter().sum();
    if sum % 2 == 1 {
        return Err(Error::OddPartitionSum { sum });
    }
    let b = (sum / 2) as f64;
    let apps =
        numbers.iter().enumerate().map(|(i, &a)| Application::new(format!("a{}", i + 1), a as f64, 0.0, 1.0)).collect();
    let ops = vec![Operator::new("o1", b, 1.0, 1.0), Operator::new("o2", b, 1.0, 1.0)];
    let mut inst = Instance::new(apps, ops);
    inst.relaxed_stake = true;
    inst.metadata.insert("threshold".into(), 2.0 * b);
    Ok(inst)
}

/// Whether `numbers` splits into two subsets of equal sum.
pub fn has_perfect_split(numbers: &[u64]) -> bool {
    let sum: u64 = numbers.iter().sum();
    if sum % 2 == 1 {
        return false;
    }
    let half = (sum / 2) as usize;
    let mut reach = vec![false; half + 1];
    reach[0] = true;
    for &a in numbers {
        let a = a as usize;
        for s in (a..=half).rev() {
            reach[s] |= reach[s - a];
        }
    }
    reach[half]
}
