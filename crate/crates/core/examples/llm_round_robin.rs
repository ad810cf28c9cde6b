//! Round-robin over two endpoints, then failover once one of them dies.

use std::time::Duration;

use puppeteer::llm::{Completer, EndpointConfig, LlmPool, StubScript, StubServer};

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let a = StubServer::start(StubScript::always(r#"{"command":"none"}"#)).await?;
    let b = StubServer::start(StubScript::always(r#"{"command":"none"}"#)).await?;
    let pool = LlmPool::new(vec![
        EndpointConfig::new(a.base_url()),
        EndpointConfig::new(b.base_url()),
    ]);
    let timeout = Duration::from_millis(500);

    for _ in 0..10 {
        pool.complete("ping", timeout)
            .await
            .expect("both endpoints up");
    }
    println!(
        "healthy pool: a={} b={}",
        a.request_count(),
        b.request_count()
    );

    a.clear_log();
    b.clear_log();
    drop(b);
    for i in 0..6 {
        let result = pool.complete("ping", timeout).await;
        println!(
            "request {i}: {}",
            if result.is_ok() { "ok" } else { "failed" }
        );
    }
    println!("after b died: a={}", a.request_count());
    for status in pool.status() {
        println!(
            "  {} healthy={} consecutive_failures={}",
            status.url, status.healthy, status.consecutive_failures
        );
    }
    Ok(())
}
