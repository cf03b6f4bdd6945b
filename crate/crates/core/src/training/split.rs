use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::labels::{Class, N_CLASSES};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Partition::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown partition '{s}' (train, val, test)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub patient_level: bool,
    pub assignments: BTreeMap<String, Partition>,
}

impl SplitAssignment {
    pub fn partition_of(&self, clip_id: &str) -> Option<Partition> {
        self.assignments.get(clip_id).copied()
    }

    /// Manifest entries in a partition, in manifest order.
    pub fn entries<'a>(&self, manifest: &'a DatasetManifest, p: Partition) -> Vec<&'a ManifestEntry> {
        manifest
            .entries
            .iter()
            .filter(|e| self.partition_of(&e.clip_id) == Some(p))
            .collect()
    }

    /// `[partition][class]` clip counts.
    pub fn counts(&self, manifest: &DatasetManifest) -> [[usize; N_CLASSES]; 3] {
        let mut c = [[0; N_CLASSES]; 3];
        for e in &manifest.entries {
            if let Some(p) = self.partition_of(&e.clip_id) {
                c[p as usize][e.label.index()] += 1;
            }
        }
        c
    }
}

/// Per-class quotas `(train, val, test)`: val and test are rounded shares (at
/// least one each), train takes the remainder.
pub fn class_quotas(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let val = ((n as f64 * ratios[1]).round() as usize).max(1);
    let test = ((n as f64 * ratios[2]).round() as usize).max(1);
    [n.saturating_sub(val + test), val, test]
}

/// Stratified split; clips sharing a `patient_id` always land in one partition.
pub fn split_dataset(manifest: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if manifest.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty manifest".into()));
    }
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("split ratios {ratios:?} must be positive and sum to 1")));
    }
    manifest.validate()?;
    let patient_level = manifest.has_patient_ids();
    if !patient_level {
        log::warn!("manifest has no patient ids; splitting at clip level");
    }

    // group clips by patient; clips without an id form their own group
    let mut groups: BTreeMap<String, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in &manifest.entries {
        let key = match &e.patient_id {
            Some(p) => format!("p:{p}"),
            None => format!("c:{}", e.clip_id),
        };
        groups.entry(key).or_default().push(e);
    }
    let mut by_class: [Vec<Vec<&ManifestEntry>>; N_CLASSES] = Default::default();
    for (_, members) in groups {
        let mut votes = [0usize; N_CLASSES];
        for m in &members {
            votes[m.label.index()] += 1;
        }
        let label = (0..N_CLASSES).max_by_key(|&c| (votes[c], N_CLASSES - c)).unwrap();
        by_class[label].push(members);
    }

    let mut assignments = BTreeMap::new();
    for (ci, mut class_groups) in by_class.into_iter().enumerate() {
        if class_groups.is_empty() {
            continue;
        }
        let class = Class::from_index(ci).unwrap();
        if class_groups.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "class {class} has {} {}; three are needed for non-empty train/val/test partitions",
                class_groups.len(),
                if patient_level { "patients" } else { "clips" }
            )));
        }
        let mut rng = stream(seed, Domain::Split, ci as u64, 0);
        class_groups.shuffle(&mut rng);
        class_groups.sort_by_key(|g| std::cmp::Reverse(g.len()));
        let n: usize = class_groups.iter().map(Vec::len).sum();
        let quota = class_quotas(n, ratios);
        let mut filled = [0usize; 3];
        let mut used = [false; 3];
        let remaining_groups = class_groups.len();
        for (gi, g) in class_groups.iter().enumerate() {
            let left = remaining_groups - gi;
            let empty: Vec<usize> = (0..3).filter(|&p| !used[p]).collect();
            // once only as many groups remain as there are empty partitions, fill those
            let candidates: Vec<usize> = if left <= empty.len() { empty } else { vec![0, 1, 2] };
            let p = candidates
                .into_iter()
                .max_by_key(|&p| (quota[p] as i64 - filled[p] as i64, std::cmp::Reverse(p)))
                .unwrap();
            filled[p] += g.len();
            used[p] = true;
            for e in g {
                assignments.insert(e.clip_id.clone(), Partition::ALL[p]);
            }
        }
    }
    Ok(SplitAssignment {
        seed,
        ratios,
        patient_level,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(counts: [usize; N_CLASSES], patients: Option<usize>) -> DatasetManifest {
        let mut entries = Vec::new();
        for (ci, &n) in counts.iter().enumerate() {
            for i in 0..n {
                entries.push(ManifestEntry {
                    clip_id: format!("c{ci}_{i}"),
                    path: format!("{ci}_{i}.wav").into(),
                    label: Class::from_index(ci).unwrap(),
                    patient_id: patients.map(|k| format!("pt{ci}_{}", i % k)),
                });
            }
        }
        DatasetManifest::new(entries).unwrap()
    }

    #[test]
    fn quotas_for_small_classes() {
        assert_eq!(class_quotas(3, [0.7, 0.15, 0.15]), [1, 1, 1]);
        assert_eq!(class_quotas(20, [0.7, 0.15, 0.15]), [14, 3, 3]);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let m = manifest([30, 12, 40, 15, 25], None);
        let a = split_dataset(&m, [0.7, 0.15, 0.15], 4).unwrap();
        let b = split_dataset(&m, [0.7, 0.15, 0.15], 4).unwrap();
        let c = split_dataset(&m, [0.7, 0.15, 0.15], 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.assignments, c.assignments);
        assert_eq!(a.assignments.len(), m.len());
    }

    #[test]
    fn patients_never_span_partitions() {
        let m = manifest([40, 21, 33, 18, 27], Some(6));
        let s = split_dataset(&m, [0.7, 0.15, 0.15], 1).unwrap();
        assert!(s.patient_level);
        let mut seen: BTreeMap<&str, Partition> = BTreeMap::new();
        for e in &m.entries {
            let p = s.partition_of(&e.clip_id).unwrap();
            let pid = e.patient_id.as_deref().unwrap();
            assert_eq!(*seen.entry(pid).or_insert(p), p, "patient {pid}");
        }
        for part in s.counts(&m) {
            assert!(part.iter().all(|&n| n > 0));
        }
    }

    #[test]
    fn too_few_items_is_an_error() {
        let m = manifest([5, 2, 5, 5, 5], None);
        assert!(split_dataset(&m, [0.7, 0.15, 0.15], 0).is_err());
        let m = manifest([6, 6, 6, 6, 6], Some(2));
        assert!(split_dataset(&m, [0.7, 0.15, 0.15], 0).is_err());
    }
}
