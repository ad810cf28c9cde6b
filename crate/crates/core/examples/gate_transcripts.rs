//! Wakeword gating at two sensitivities.
//!
//!     cargo run --example gate_transcripts -- "Bluebery, move to red"

use puppeteer::gate::{gate, normalize, GateOutcome, Transcript, WakewordConfig};

fn main() {
    let mut transcripts: Vec<String> = std::env::args().skip(1).collect();
    if transcripts.is_empty() {
        transcripts = [
            "Blueberry, move to red",
            "blueberry move to the orange area",
            "Bluebery, move to red",
            "Strawberry, move to red",
            "hey blueberry move to red",
            "hello there",
        ]
        .map(String::from)
        .to_vec();
    }
    for sensitivity in [0.9, 0.8] {
        let config = WakewordConfig::new("blueberry", sensitivity).expect("valid config");
        println!("sensitivity {sensitivity}");
        for text in &transcripts {
            let Some(t) = Transcript::new("cli", text.as_str(), 0) else {
                println!("  {text:?}: blank");
                continue;
            };
            match gate(&t, &config) {
                GateOutcome::Pass(g) => println!(
                    "  pass  {:.3}  {:?} -> {:?}",
                    g.wakeword_similarity,
                    normalize(text),
                    g.text
                ),
                GateOutcome::NoWakeword { similarity } => {
                    println!("  drop  {similarity:.3}  {:?}", normalize(text))
                }
            }
        }
    }
}
