//! Lookup-table learner: memorizes the empirical conditional distribution
//! of successors for every current state it has seen.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::domains::{Dataset, SparseDistribution, StateKey};
use crate::error::{Error, Result};
use crate::evaluation::{ExactOutcome, NextStateSampler};

#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    /// current state → (successor → count, total).
    counts: BTreeMap<StateKey, (BTreeMap<StateKey, u64>, u64)>,
}

impl TabularModel {
    pub fn fit(dataset: &Dataset) -> Self {
        let mut counts: BTreeMap<StateKey, (BTreeMap<StateKey, u64>, u64)> = BTreeMap::new();
        for p in &dataset.pairs {
            let entry = counts.entry(StateKey::from_slice(&p.xbar)).or_default();
            *entry.0.entry(StateKey::from_slice(&p.xr)).or_insert(0) += 1;
            entry.1 += 1;
        }
        TabularModel { counts }
    }

    /// Empirical P̂(·|x̄); `None` for a state never seen.
    pub fn distribution(&self, xbar: &StateKey) -> Option<SparseDistribution> {
        self.counts.get(xbar).map(|(succ, _)| {
            SparseDistribution::from_counts(succ).expect("counts are nonempty by construction")
        })
    }

    pub fn contexts(&self) -> usize {
        self.counts.len()
    }

    pub fn pairs_seen(&self) -> u64 {
        self.counts.values().map(|(_, t)| t).sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let contexts: Vec<serde_json::Value> = self
            .counts
            .iter()
            .map(|(x, (succ, total))| {
                json!({
                    "x": x.hex(),
                    "total": total,
                    "succ": succ.iter().map(|(k, c)| json!([k.hex(), c])).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({ "contexts": contexts })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let bad = |what: &str| Error::Format {
            path: "<tabular-model>".to_string(),
            detail: what.to_string(),
        };
        let contexts = v
            .get("contexts")
            .and_then(|c| c.as_array())
            .ok_or_else(|| bad("missing contexts"))?;
        let mut counts = BTreeMap::new();
        for ctx in contexts {
            let x = ctx
                .get("x")
                .and_then(|x| x.as_str())
                .ok_or_else(|| bad("missing context key"))?;
            let total = ctx
                .get("total")
                .and_then(|t| t.as_u64())
                .ok_or_else(|| bad("missing total"))?;
            let succ_list = ctx
                .get("succ")
                .and_then(|s| s.as_array())
                .ok_or_else(|| bad("missing successors"))?;
            let mut succ = BTreeMap::new();
            for pair in succ_list {
                let arr = pair.as_array().filter(|a| a.len() == 2).ok_or_else(|| bad("bad pair"))?;
                let key = arr[0].as_str().ok_or_else(|| bad("bad successor key"))?;
                let count = arr[1].as_u64().ok_or_else(|| bad("bad count"))?;
                succ.insert(StateKey::from_hex(key)?, count);
            }
            if succ.values().sum::<u64>() != total {
                return Err(bad("total does not match successor counts"));
            }
            counts.insert(StateKey::from_hex(x)?, (succ, total));
        }
        Ok(TabularModel { counts })
    }
}

impl NextStateSampler for TabularModel {
    fn sample_next(
        &mut self,
        xbar: &[f64],
        count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Vec<f64>>> {
        let key = StateKey::from_slice(xbar);
        let dist = self
            .distribution(&key)
            .ok_or_else(|| Error::contract("sampled an unseen state".to_string()))?;
        let entries: Vec<(Vec<f64>, f64)> = dist.iter().map(|(k, p)| (k.to_vec(), p)).collect();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = entries.len() - 1;
            for (i, (_, p)) in entries.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            out.push(entries[pick].0.clone());
        }
        Ok(out)
    }

    fn exact(&self, xbar: &[f64]) -> Option<ExactOutcome> {
        Some(match self.distribution(&StateKey::from_slice(xbar)) {
            Some(d) => ExactOutcome::Seen(d),
            None => ExactOutcome::Unseen,
        })
    }
}
