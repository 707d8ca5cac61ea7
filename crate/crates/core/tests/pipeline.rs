//! Full mock pipeline over a synthetic corpus: profiles, strategies,
//! reranking and evaluation.

use std::collections::BTreeMap;

use gamerank_core::eval::{
    ndcg_engagement, run_experiment, EvalCell, ExperimentInputs, ExperimentSpec, RelevanceParams, SegmentKey,
};
use gamerank_core::profile::{profile_corpus, BatchOptions, ProfileStore};
use gamerank_core::prompts::PromptSet;
use gamerank_core::provider::MockProvider;
use gamerank_core::rerank::{ModelKind, RepairAction};
use gamerank_core::strategy::{strategize_users, StrategyOptions, StrategyStore};
use gamerank_core::synth::{generate, oracle_rerank, SynthSpec};

struct Outcome {
    personalized: f64,
    generic: f64,
    baseline: f64,
    oracle: f64,
}

fn pipeline(spec: &SynthSpec, runs: usize) -> Outcome {
    let (corpus, truth) = generate(spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let prompts = PromptSet::builtin();
    let provider = MockProvider::default();

    let mut pstore = ProfileStore::open(&dir.path().join("profiles.jsonl")).unwrap();
    let profiles = profile_corpus(&corpus, &prompts.game_profile, &provider, &mut pstore, &BatchOptions::default())
        .unwrap()
        .profiles;
    let mut sstore = StrategyStore::open(&dir.path().join("strategies.jsonl")).unwrap();
    let strategies = strategize_users(
        &corpus,
        &profiles,
        &prompts.user_strategy,
        &provider,
        &mut sstore,
        &StrategyOptions::default(),
    )
    .unwrap()
    .strategies;

    let exp = ExperimentSpec {
        runs,
        seed: spec.seed,
        models: vec![ModelKind::BaselineIdentity, ModelKind::LlmNoPersonalization, ModelKind::LlmPersonalized],
        ..ExperimentSpec::default()
    };
    let inputs = ExperimentInputs {
        corpus: &corpus,
        profiles: &profiles,
        strategies: &strategies,
        template: &prompts.rerank,
    };
    let (records, report) = run_experiment(inputs, &exp, &provider).unwrap();
    for r in &records {
        assert!(
            r.repair_log.iter().all(|a| matches!(a, RepairAction::FallbackNonPersonalized)),
            "clean mock output needs no repair: {:?}",
            r.repair_log
        );
    }

    let params = RelevanceParams::default();
    let oracle = corpus
        .rankings()
        .iter()
        .map(|rl| {
            let ordered = oracle_rerank(rl.top_k(30), &truth, &rl.user_id);
            ndcg_engagement(&ordered, |g| corpus.playtime(&rl.user_id, g), &params, 10)
        })
        .sum::<f64>()
        / corpus.rankings().len() as f64;
    let at10 = |m| report.ndcg(&SegmentKey::Total, 10, m).unwrap();
    Outcome {
        personalized: at10(ModelKind::LlmPersonalized),
        generic: at10(ModelKind::LlmNoPersonalization),
        baseline: at10(ModelKind::BaselineIdentity),
        oracle,
    }
}

#[test]
fn personalized_reranking_beats_generic_on_synthetic_truth() {
    let mut wins = 0;
    for seed in 1..=5 {
        let o = pipeline(&SynthSpec { seed, ..SynthSpec::default() }, 1);
        eprintln!(
            "seed {seed}: baseline {:.4} generic {:.4} personalized {:.4} oracle {:.4}",
            o.baseline, o.generic, o.personalized, o.oracle
        );
        assert!(o.oracle >= o.baseline);
        if o.personalized > o.generic {
            wins += 1;
        }
    }
    assert!(wins >= 4, "personalized won on {wins} of 5 seeds");
}

#[test]
fn report_has_every_segment_and_cutoff() {
    let spec = SynthSpec {
        n_games: 200,
        n_users: 50,
        seed: 11,
        ..SynthSpec::default()
    };
    let (corpus, _) = generate(&spec).unwrap();
    let provider = MockProvider::default();
    let prompts = PromptSet::builtin();
    let dir = tempfile::tempdir().unwrap();
    let mut pstore = ProfileStore::open(&dir.path().join("p.jsonl")).unwrap();
    let profiles = profile_corpus(&corpus, &prompts.game_profile, &provider, &mut pstore, &BatchOptions::default())
        .unwrap()
        .profiles;
    let strategies = BTreeMap::new();
    let inputs = ExperimentInputs {
        corpus: &corpus,
        profiles: &profiles,
        strategies: &strategies,
        template: &prompts.rerank,
    };
    let exp = ExperimentSpec { runs: 2, ..ExperimentSpec::default() };
    let (_, report) = run_experiment(inputs, &exp, &provider).unwrap();
    let ndcg_cells = report.cells().iter().filter(|c| matches!(c, EvalCell::Ndcg { .. })).count();
    assert_eq!(ndcg_cells, 5 * 3 * 4);
    let improvements = report.cells().iter().filter(|c| matches!(c, EvalCell::Improvement { .. })).count();
    assert_eq!(improvements, 3 * 4);
    for c in report.cells() {
        if let EvalCell::Ndcg { mean, .. } = c {
            assert!((0.0..=1.0).contains(mean));
        }
    }
    // without strategies the personalized model is the generic model
    for k in [10, 20, 30] {
        assert_eq!(
            report.ndcg(&SegmentKey::Total, k, ModelKind::LlmPersonalized),
            report.ndcg(&SegmentKey::Total, k, ModelKind::LlmNoPersonalization)
        );
    }
    let text = report.render_table().text;
    assert!(text.contains("Total Avg.") && text.contains("Proposed") && text.contains("NDCG@30"));
}
