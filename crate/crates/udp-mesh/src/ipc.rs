//! Local control and pub/sub surface over a Unix stream socket.
//!
//! Framing: every message is a 4-byte big-endian length followed by that
//! many bytes. The first frame a client sends is a UTF-8 command line:
//!
//! * `pub <topic>` — each following frame is one payload to publish; the
//!   server answers every payload with `ok` or `err <reason>`.
//! * `sub <topic>` — the server streams delivery frames (layout below)
//!   until the client disconnects.
//! * `status` — one text frame of `key=value` lines, then EOF.
//! * `set-priority <topic> <n>` — answers `ok`, then EOF.
//!
//! Delivery frame layout: `src_len: u8 | src | topic_len: u8 | topic |
//! payload…` — the payload runs to the end of the frame.

use std::io::{self, Read, Write};
use std::os::unix::net::UnixStream;
use std::path::Path;

use crate::topics::InboundDelivery;

/// Upper bound on a single frame; larger frames abort the connection.
pub const MAX_FRAME: usize = 96 * 1024 * 1024;

pub fn write_frame<W: Write>(w: &mut W, bytes: &[u8]) -> io::Result<()> {
    let len = u32::try_from(bytes.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(bytes)?;
    w.flush()
}

/// Read one frame; `Ok(None)` on a clean EOF at a frame boundary.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len_buf = [0u8; 4];
    match r.read_exact(&mut len_buf) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len_buf) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame exceeds MAX_FRAME"));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

/// Encode a delivery for a `sub` stream.
pub fn encode_delivery(d: &InboundDelivery) -> Vec<u8> {
    let mut out = Vec::with_capacity(2 + d.source_name.len() + d.topic.len() + d.payload.len());
    out.push(d.source_name.len().min(255) as u8);
    out.extend_from_slice(&d.source_name.as_bytes()[..d.source_name.len().min(255)]);
    out.push(d.topic.len().min(255) as u8);
    out.extend_from_slice(&d.topic.as_bytes()[..d.topic.len().min(255)]);
    out.extend_from_slice(&d.payload);
    out
}

/// Decode a delivery frame into (source, topic, payload).
pub fn decode_delivery(frame: &[u8]) -> io::Result<(String, String, Vec<u8>)> {
    let bad = || io::Error::new(io::ErrorKind::InvalidData, "malformed delivery frame");
    let (&src_len, rest) = frame.split_first().ok_or_else(bad)?;
    if rest.len() < src_len as usize {
        return Err(bad());
    }
    let (src, rest) = rest.split_at(src_len as usize);
    let (&topic_len, rest) = rest.split_first().ok_or_else(bad)?;
    if rest.len() < topic_len as usize {
        return Err(bad());
    }
    let (topic, payload) = rest.split_at(topic_len as usize);
    Ok((
        String::from_utf8(src.to_vec()).map_err(|_| bad())?,
        String::from_utf8(topic.to_vec()).map_err(|_| bad())?,
        payload.to_vec(),
    ))
}

/// Client helpers used by the `umesh` tools (and tests).
pub mod client {
    use super::*;

    pub fn connect(socket: &Path) -> io::Result<UnixStream> {
        UnixStream::connect(socket)
    }

    /// Publish one payload; returns the server's reply line.
    pub fn publish(socket: &Path, topic: &str, payload: &[u8]) -> io::Result<String> {
        let mut conn = connect(socket)?;
        write_frame(&mut conn, format!("pub {topic}").as_bytes())?;
        write_frame(&mut conn, payload)?;
        let reply =
            read_frame(&mut conn)?.ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "no reply"))?;
        let line = String::from_utf8_lossy(&reply).into_owned();
        if line == "ok" || line.starts_with("ok ") {
            Ok(line)
        } else {
            Err(io::Error::other(line))
        }
    }

    /// Subscribe and invoke `on_delivery` per message until the callback
    /// returns false or the server closes the stream.
    pub fn subscribe(
        socket: &Path,
        topic: &str,
        mut on_delivery: impl FnMut(String, String, Vec<u8>) -> bool,
    ) -> io::Result<()> {
        let mut conn = connect(socket)?;
        write_frame(&mut conn, format!("sub {topic}").as_bytes())?;
        while let Some(frame) = read_frame(&mut conn)? {
            let (src, topic, payload) = decode_delivery(&frame)?;
            if !on_delivery(src, topic, payload) {
                break;
            }
        }
        Ok(())
    }

    pub fn status(socket: &Path) -> io::Result<String> {
        let mut conn = connect(socket)?;
        write_frame(&mut conn, b"status")?;
        let reply =
            read_frame(&mut conn)?.ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "no reply"))?;
        Ok(String::from_utf8_lossy(&reply).into_owned())
    }

    pub fn set_priority(socket: &Path, topic: &str, priority: u8) -> io::Result<()> {
        let mut conn = connect(socket)?;
        write_frame(&mut conn, format!("set-priority {topic} {priority}").as_bytes())?;
        let reply =
            read_frame(&mut conn)?.ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "no reply"))?;
        if reply == b"ok" {
            Ok(())
        } else {
            Err(io::Error::other(String::from_utf8_lossy(&reply).into_owned()))
        }
    }
}
