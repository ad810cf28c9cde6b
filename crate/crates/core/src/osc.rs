//! OSC 1.0 messages (int32, float32 and string arguments) over UDP.
//!
//! Layout: NUL-terminated address padded to 4 bytes, then `,` plus one type
//! tag per argument (also NUL-terminated and padded), then the arguments.
//! Numbers are big-endian. Bundles, blobs and timetags are not supported.

use std::net::SocketAddr;
use std::sync::Arc;

use thiserror::Error;
use tokio::net::UdpSocket;
use tracing::{debug, warn};

/// Largest payload accepted by [`OscSender`] (Ethernet MTU minus IP/UDP headers).
pub const DEFAULT_MTU: usize = 1472;

pub const ADDR_MOVE: &str = "/puppeteer/move";
pub const ADDR_WAYPOINT: &str = "/puppeteer/waypoint";
pub const ADDR_SPAWN: &str = "/puppeteer/spawn";

#[derive(Debug, Clone, PartialEq)]
pub enum OscArg {
    Int32(i32),
    Float32(f32),
    Str(String),
}

impl OscArg {
    pub fn tag(&self) -> u8 {
        match self {
            OscArg::Int32(_) => b'i',
            OscArg::Float32(_) => b'f',
            OscArg::Str(_) => b's',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscMessage {
    pub address: String,
    pub args: Vec<OscArg>,
}

impl OscMessage {
    pub fn new(address: impl Into<String>, args: Vec<OscArg>) -> Self {
        Self {
            address: address.into(),
            args,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        encode(self)
    }

    /// All arguments as `f32`, or `None` if any argument is not a float.
    pub fn floats(&self) -> Option<Vec<f32>> {
        self.args
            .iter()
            .map(|a| match a {
                OscArg::Float32(v) => Some(*v),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("address: {0}")]
    Address(&'static str),
    #[error("args[{index}]: string contains NUL")]
    StringNul { index: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeErrorKind {
    #[error("length is not a positive multiple of 4")]
    BadLength,
    #[error("string is missing its NUL terminator")]
    MissingNul,
    #[error("non-NUL byte in string padding")]
    BadPadding,
    #[error("address must start with '/' and be 7-bit ASCII")]
    BadAddress,
    #[error("type tag string must start with ','")]
    MissingTypeTags,
    #[error("unknown type tag {0:?}")]
    UnknownTag(char),
    #[error("argument runs past end of packet")]
    Truncated,
    #[error("string argument is not UTF-8")]
    InvalidUtf8,
    #[error("trailing bytes after last argument")]
    TrailingBytes,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("decode error at byte {offset}: {kind}")]
pub struct DecodeError {
    pub offset: usize,
    pub kind: DecodeErrorKind,
}

fn padded_len(len_with_nul: usize) -> usize {
    len_with_nul.div_ceil(4) * 4
}

fn push_padded_str(out: &mut Vec<u8>, s: &[u8]) {
    out.extend_from_slice(s);
    let total = padded_len(s.len() + 1);
    out.resize(out.len() + total - s.len(), 0);
}

pub fn encode(msg: &OscMessage) -> Result<Vec<u8>, EncodeError> {
    let address = msg.address.as_bytes();
    if address.first() != Some(&b'/') {
        return Err(EncodeError::Address("must start with '/'"));
    }
    if address.iter().any(|&b| b == 0 || b >= 0x80) {
        return Err(EncodeError::Address("contains NUL or non-ASCII byte"));
    }
    let mut out = Vec::with_capacity(64);
    push_padded_str(&mut out, address);

    let mut tags = Vec::with_capacity(msg.args.len() + 1);
    tags.push(b',');
    tags.extend(msg.args.iter().map(OscArg::tag));
    push_padded_str(&mut out, &tags);

    for (index, arg) in msg.args.iter().enumerate() {
        match arg {
            OscArg::Int32(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Float32(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Str(s) => {
                if s.as_bytes().contains(&0) {
                    return Err(EncodeError::StringNul { index });
                }
                push_padded_str(&mut out, s.as_bytes());
            }
        }
    }
    debug_assert_eq!(out.len() % 4, 0);
    Ok(out)
}

/// Reads a padded string at `offset`; returns the bytes and the next offset.
fn read_padded_str(buf: &[u8], offset: usize) -> Result<(&[u8], usize), DecodeError> {
    let err = |offset, kind| DecodeError { offset, kind };
    let rest = &buf[offset..];
    let nul = rest
        .iter()
        .position(|&b| b == 0)
        .ok_or(err(offset, DecodeErrorKind::MissingNul))?;
    let end = offset + padded_len(nul + 1);
    if end > buf.len() {
        return Err(err(offset, DecodeErrorKind::Truncated));
    }
    if let Some(p) = buf[offset + nul..end].iter().position(|&b| b != 0) {
        return Err(err(offset + nul + p, DecodeErrorKind::BadPadding));
    }
    Ok((&rest[..nul], end))
}

fn read_word(buf: &[u8], offset: usize) -> Result<[u8; 4], DecodeError> {
    buf.get(offset..offset + 4)
        .map(|w| w.try_into().unwrap())
        .ok_or(DecodeError {
            offset,
            kind: DecodeErrorKind::Truncated,
        })
}

pub fn decode(buf: &[u8]) -> Result<OscMessage, DecodeError> {
    if buf.len() < 8 || !buf.len().is_multiple_of(4) {
        return Err(DecodeError {
            offset: 0,
            kind: DecodeErrorKind::BadLength,
        });
    }
    let (address, mut offset) = read_padded_str(buf, 0)?;
    if address.first() != Some(&b'/') || address.iter().any(|&b| b >= 0x80) {
        return Err(DecodeError {
            offset: 0,
            kind: DecodeErrorKind::BadAddress,
        });
    }
    let address = std::str::from_utf8(address).expect("ascii").to_owned();

    if offset >= buf.len() || buf[offset] != b',' {
        return Err(DecodeError {
            offset,
            kind: DecodeErrorKind::MissingTypeTags,
        });
    }
    let tag_start = offset;
    let (tags, next) = read_padded_str(buf, offset)?;
    offset = next;
    if let Some(i) = tags[1..]
        .iter()
        .position(|t| !matches!(t, b'i' | b'f' | b's'))
    {
        return Err(DecodeError {
            offset: tag_start + 1 + i,
            kind: DecodeErrorKind::UnknownTag(char::from(tags[1 + i])),
        });
    }

    let mut args = Vec::with_capacity(tags.len() - 1);
    for &tag in &tags[1..] {
        let arg = match tag {
            b'i' => OscArg::Int32(i32::from_be_bytes(read_word(buf, offset)?)),
            b'f' => OscArg::Float32(f32::from_be_bytes(read_word(buf, offset)?)),
            b's' => {
                if offset >= buf.len() {
                    return Err(DecodeError {
                        offset,
                        kind: DecodeErrorKind::Truncated,
                    });
                }
                let (s, next) = read_padded_str(buf, offset)?;
                let s = std::str::from_utf8(s).map_err(|_| DecodeError {
                    offset,
                    kind: DecodeErrorKind::InvalidUtf8,
                })?;
                offset = next;
                args.push(OscArg::Str(s.to_owned()));
                continue;
            }
            _ => unreachable!("tags checked above"),
        };
        offset += 4;
        args.push(arg);
    }
    if offset != buf.len() {
        return Err(DecodeError {
            offset,
            kind: DecodeErrorKind::TrailingBytes,
        });
    }
    Ok(OscMessage { address, args })
}

pub fn move_message(color: &str) -> OscMessage {
    OscMessage::new(ADDR_MOVE, vec![OscArg::Str(color.to_owned())])
}

/// Seven joint angles followed by the timestamp in seconds.
pub fn waypoint_message(q: &[f64; 7], t: f64) -> OscMessage {
    let mut args: Vec<OscArg> = q.iter().map(|&v| OscArg::Float32(v as f32)).collect();
    args.push(OscArg::Float32(t as f32));
    OscMessage::new(ADDR_WAYPOINT, args)
}

pub fn spawn_message(base: [f64; 3]) -> OscMessage {
    OscMessage::new(
        ADDR_SPAWN,
        base.iter().map(|&v| OscArg::Float32(v as f32)).collect(),
    )
}

#[derive(Debug, Error)]
pub enum SendError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("datagram too large: {size} bytes > {mtu}")]
    DatagramTooLarge { size: usize, mtu: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sends one message per datagram. Cheap to clone and share.
#[derive(Debug, Clone)]
pub struct OscSender {
    socket: Arc<UdpSocket>,
    mtu: usize,
}

impl OscSender {
    pub async fn bind_any() -> std::io::Result<Self> {
        Ok(Self {
            socket: Arc::new(UdpSocket::bind("0.0.0.0:0").await?),
            mtu: DEFAULT_MTU,
        })
    }

    pub fn with_mtu(mut self, mtu: usize) -> Self {
        self.mtu = mtu;
        self
    }

    pub async fn send(&self, msg: &OscMessage, dest: SocketAddr) -> Result<(), SendError> {
        let bytes = encode(msg)?;
        if bytes.len() > self.mtu {
            return Err(SendError::DatagramTooLarge {
                size: bytes.len(),
                mtu: self.mtu,
            });
        }
        self.socket.send_to(&bytes, dest).await?;
        Ok(())
    }
}

/// Single receive loop; well-formed messages go to the handler, the rest
/// are logged and dropped.
#[derive(Debug)]
pub struct OscListener {
    socket: UdpSocket,
}

impl OscListener {
    pub async fn bind(addr: SocketAddr) -> std::io::Result<Self> {
        Ok(Self {
            socket: UdpSocket::bind(addr).await?,
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.socket.local_addr()
    }

    /// Runs until a socket error occurs.
    pub async fn run<F>(self, mut handler: F) -> std::io::Error
    where
        F: FnMut(OscMessage, SocketAddr),
    {
        let mut buf = vec![0u8; 65_536];
        loop {
            let (len, from) = match self.socket.recv_from(&mut buf).await {
                Ok(r) => r,
                // Windows reports ICMP port-unreachable as a recv error.
                Err(e) if e.kind() == std::io::ErrorKind::ConnectionReset => continue,
                Err(e) => return e,
            };
            match decode(&buf[..len]) {
                Ok(msg) => handler(msg, from),
                Err(err) => {
                    debug!(%from, %err, "dropping malformed osc datagram");
                }
            }
        }
    }
}

pub(crate) fn log_send_failure(err: &SendError, dest: SocketAddr) {
    warn!(%dest, %err, "osc send failed");
}
