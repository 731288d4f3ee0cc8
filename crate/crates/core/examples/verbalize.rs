//! Turns raw classification examples into (query, premise, hypothesis)
//! triples, then nullifies a fraction of premises as pretraining does.
//!
//! cargo run --example verbalize

use nested_entail::meta_task::{nullify_premises, verbalize, LabelKeyScope, LabelSet, RawExample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> nested_entail::Result<()> {
    let labels = LabelSet::new("news", vec!["sports".into(), "politics".into(), "technology".into()])?;
    let raw = [
        RawExample::new("The coach praised the team after the match", "sports", "news")?,
        RawExample::new("Parliament passed the new policy", "politics", "news")?,
        RawExample::pair("A new chip was announced", "It doubles laptop battery life", "technology", "news")?,
    ];

    let meta = raw
        .iter()
        .map(|r| verbalize(r, &labels, LabelKeyScope::Global))
        .collect::<nested_entail::Result<Vec<_>>>()?;
    for m in &meta {
        println!("q: {}\np: {}\nh: {}\nkey: {}\n", m.query, m.premise, m.hypothesis, m.label_key);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let nulled = nullify_premises(&meta, 0.5, &mut rng)?;
    println!("premises after nullifying with ratio 0.5:");
    for m in &nulled {
        println!("  {}", m.premise);
    }
    Ok(())
}
