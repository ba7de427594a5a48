//! Shared fixtures for the routing benchmarks.

use splitroute_core::agents::{Registry, DEFAULT_ALPHA};
use splitroute_core::synthetic::SeedCorpus;

/// Example-trained agents for the first `intents` seed intents, and `n`
/// composed utterances over those intents.
pub fn workload(intents: usize, n: usize, seed: u64) -> (Registry, Vec<String>) {
    let corpus = SeedCorpus::with_intents(intents);
    let registry = corpus.registry(DEFAULT_ALPHA).expect("seed corpus trains");
    let texts = corpus
        .compose(n, 3, seed)
        .into_iter()
        .map(|i| i.text)
        .collect();
    (registry, texts)
}
