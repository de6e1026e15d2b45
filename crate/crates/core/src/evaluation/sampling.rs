use crate::datamodel::{canonical_class_keys, ClassKey, LandmarkFrame};
use crate::error::{PalsyError, Result};

/// Round-robin selection over `(class_key, frame_id)` items; returns item
/// indices in selection order.
///
/// Each pass visits the class keys in canonical order and takes the
/// earliest (by `frame_id`) unselected item of every nonempty class, until
/// `n` items are taken or none remain.
pub fn round_robin_indices(items: &[(ClassKey, &str)], n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(PalsyError::Invalid("sample target must be positive".into()));
    }
    let mut buckets: Vec<Vec<usize>> = canonical_class_keys()
        .into_iter()
        .map(|key| {
            let mut b: Vec<usize> = (0..items.len()).filter(|&i| items[i].0 == key).collect();
            // Reverse order so `pop` yields the earliest frame id.
            b.sort_by(|&a, &c| items[c].1.cmp(items[a].1).then(c.cmp(&a)));
            b
        })
        .collect();
    let mut out = Vec::with_capacity(n.min(items.len()));
    while out.len() < n && buckets.iter().any(|b| !b.is_empty()) {
        for b in buckets.iter_mut() {
            if out.len() == n {
                break;
            }
            if let Some(i) = b.pop() {
                out.push(i);
            }
        }
    }
    Ok(out)
}

/// Round-robin stratified sample of one subject's frames.
pub fn round_robin_sample<'a>(frames: &[&'a LandmarkFrame], n: usize) -> Result<Vec<&'a LandmarkFrame>> {
    if frames.is_empty() {
        return Err(PalsyError::Invalid("cannot sample a subject with no frames".into()));
    }
    let items: Vec<(ClassKey, &str)> = frames.iter().map(|f| (f.class_key(), f.frame_id.as_str())).collect();
    Ok(round_robin_indices(&items, n)?.into_iter().map(|i| frames[i]).collect())
}
