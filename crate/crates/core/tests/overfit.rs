use feedback_miner_core::classifier::{train_binary, TextEncoder};
use feedback_miner_core::corpus::to_binary_task;
use feedback_miner_core::encoder::{init_encoder, Preset};
use feedback_miner_core::rng::rng_for;
use feedback_miner_core::tokenizer::{CLS, PAD, SEP, UNK};
use feedback_miner_core::{Corpus, Label, TokenizerConfig, TrainConfig, UserComment, Vocabulary};
use rand::seq::IndexedRandom;

const FILLER: [&str; 8] = [
    "app", "the", "is", "today", "phone", "my", "update", "version",
];

/// Positives always contain "broken", negatives "thanks"; the rest is noise.
fn separable(n: usize, seed: u64) -> Corpus {
    let mut rng = rng_for(seed, &[]);
    let comments = (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let mut words: Vec<&str> = (0..4).map(|_| *FILLER.choose(&mut rng).unwrap()).collect();
            words.insert(
                i % 5 % words.len(),
                if positive { "broken" } else { "thanks" },
            );
            let gold = if positive {
                Label::ProblemReport
            } else {
                Label::Irrelevant
            };
            UserComment::new(format!("s{i}"), words.join(" "), "en", gold)
        })
        .collect();
    Corpus::new("separable", "en", comments).unwrap()
}

#[test]
fn toy_encoder_memorizes_a_separable_task() {
    let vocab = Vocabulary::from_tokens(
        [PAD, UNK, CLS, SEP, "broken", "thanks"]
            .into_iter()
            .chain(FILLER),
    )
    .unwrap();
    let text = TextEncoder::new(
        vocab,
        TokenizerConfig {
            max_len: 12,
            ..Default::default()
        },
    );
    let base = init_encoder::<f32>(&Preset::Toy.config(), 3).unwrap();
    let corpus = separable(30, 4);
    let task = to_binary_task(&corpus, Label::ProblemReport);
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        epochs: 200,
        eval_every: 1000,
        undersample: false,
        ..Default::default()
    };
    let ck = train_binary(&task, &task, &cfg, &base, &text, 0).unwrap();
    assert_eq!(ck.val_accuracy, 1.0, "history {:?}", ck.history.last());
    assert_eq!(ck.history.len(), 200);
}
