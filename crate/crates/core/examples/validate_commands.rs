//! Quick path, LLM escalation and re-validation against two local stub
//! endpoints that classify by keyword.

use puppeteer::gate::{gate, GateOutcome, Transcript, WakewordConfig};
use puppeteer::llm::{EndpointConfig, LlmPool, StubScript, StubServer};
use puppeteer::pipeline::{validate, PipelinePolicy, ValidationOutcome};

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let a = StubServer::start(StubScript::keyword_classifier()).await?;
    let b = StubServer::start(StubScript::keyword_classifier()).await?;
    let pool = LlmPool::new(vec![
        EndpointConfig::new(a.base_url()),
        EndpointConfig::new(b.base_url()),
    ]);
    let policy = PipelinePolicy::default();
    let wakeword = WakewordConfig::default();

    for text in [
        "Blueberry, move to orange",
        "Blueberry, move to the green",
        "Blueberry, go over to the sky colored one",
        "Blueberry, maybe the red one?",
        "Blueberry, what time is it",
        "Blueberry, move to black",
    ] {
        let transcript = Transcript::new("demo", text, 0).expect("non-blank");
        let GateOutcome::Pass(gated) = gate(&transcript, &wakeword) else {
            println!("{text:?}: no wakeword");
            continue;
        };
        let report = validate(&gated, &policy, &pool).await;
        let verdict = match &report.outcome {
            ValidationOutcome::Valid(cmd) => format!("valid {}", cmd.to_json()),
            ValidationOutcome::Invalid(reason) => format!("invalid ({reason})"),
            ValidationOutcome::Uncertain { revalidations } => {
                format!("uncertain after {revalidations} re-validation(s), discarded")
            }
        };
        println!(
            "{text:?}\n  stage {:?}, llm calls {}: {verdict}",
            report.final_stage(),
            report.llm_calls
        );
    }
    println!(
        "requests per endpoint: {} / {}",
        a.request_count(),
        b.request_count()
    );
    Ok(())
}
