//! Information measures on class counts, in bits.

/// Shannon entropy of a count vector. Zero for empty input.
pub fn entropy(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

/// Parent entropy minus the size-weighted entropy of the children.
pub fn information_gain(parent: &[f64], children: &[Vec<f64>]) -> f64 {
    let total: f64 = parent.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let remainder: f64 = children
        .iter()
        .map(|c| c.iter().sum::<f64>() / total * entropy(c))
        .sum();
    entropy(parent) - remainder
}

/// Entropy of the partition sizes themselves.
pub fn split_information(children: &[Vec<f64>]) -> f64 {
    let sizes: Vec<f64> = children.iter().map(|c| c.iter().sum()).collect();
    entropy(&sizes)
}

/// Gain divided by split information; zero when the split is trivial.
pub fn gain_ratio(parent: &[f64], children: &[Vec<f64>]) -> f64 {
    let si = split_information(children);
    if si <= 0.0 {
        0.0
    } else {
        information_gain(parent, children) / si
    }
}
