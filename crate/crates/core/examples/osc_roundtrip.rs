//! Encodes the three puppeteer messages, prints their bytes and sends them
//! across loopback UDP.

use std::time::Duration;

use puppeteer::osc::{
    decode, move_message, spawn_message, waypoint_message, OscListener, OscSender,
};
use puppeteer::robot::Q_HOME;

fn hex(bytes: &[u8]) -> String {
    bytes
        .chunks(4)
        .map(|w| w.iter().map(|b| format!("{b:02x}")).collect::<String>())
        .collect::<Vec<_>>()
        .join(" ")
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let messages = [
        move_message("orange"),
        waypoint_message(&Q_HOME, 0.01),
        spawn_message([0.5, 0.0, 0.0]),
    ];
    for msg in &messages {
        let bytes = msg.encode().expect("encodable");
        println!("{} ({} bytes)\n  {}", msg.address, bytes.len(), hex(&bytes));
        assert_eq!(&decode(&bytes).expect("decodable"), msg);
    }

    let listener = OscListener::bind("127.0.0.1:0".parse().unwrap()).await?;
    let dest = listener.local_addr()?;
    let (tx, mut rx) = tokio::sync::mpsc::unbounded_channel();
    tokio::spawn(listener.run(move |msg, _| {
        let _ = tx.send(msg);
    }));
    let sender = OscSender::bind_any().await?;
    for msg in &messages {
        sender.send(msg, dest).await.expect("send");
    }
    for _ in 0..messages.len() {
        let msg = tokio::time::timeout(Duration::from_secs(1), rx.recv())
            .await
            .expect("datagram arrives")
            .expect("listener alive");
        println!("received {} {:?}", msg.address, msg.args);
    }
    Ok(())
}
