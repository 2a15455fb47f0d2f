//! Length-prefixed JSON framing.

use std::io::{self, Read, Write};

use serde_json::Value;
use thiserror::Error;

use super::SessionMessage;

/// Largest accepted body, bytes.
pub const MAX_FRAME_LEN: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("frame truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("declared body length {0} exceeds the {MAX_FRAME_LEN}-byte limit")]
    TooLarge(usize),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("malformed body: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode(msg: &SessionMessage) -> Result<Vec<u8>, CodecError> {
    let body = serde_json::to_vec(msg).map_err(|e| CodecError::Malformed(e.to_string()))?;
    if body.len() > MAX_FRAME_LEN {
        return Err(CodecError::TooLarge(body.len()));
    }
    let mut frame = Vec::with_capacity(4 + body.len());
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(&body);
    Ok(frame)
}

fn declared_len(header: [u8; 4]) -> Result<usize, CodecError> {
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_LEN {
        return Err(CodecError::TooLarge(len));
    }
    Ok(len)
}

/// Decodes exactly one complete frame.
pub fn decode(frame: &[u8]) -> Result<SessionMessage, CodecError> {
    let header: [u8; 4] = frame
        .get(..4)
        .and_then(|h| h.try_into().ok())
        .ok_or(CodecError::Truncated { needed: 4, have: frame.len() })?;
    let len = declared_len(header)?;
    let body = &frame[4..];
    if body.len() < len {
        return Err(CodecError::Truncated { needed: 4 + len, have: frame.len() });
    }
    if body.len() > len {
        return Err(CodecError::Malformed(format!("{} trailing bytes", body.len() - len)));
    }
    decode_body(body)
}

pub fn decode_body(body: &[u8]) -> Result<SessionMessage, CodecError> {
    let value: Value = serde_json::from_slice(body).map_err(|e| CodecError::Malformed(e.to_string()))?;
    let ty = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| CodecError::Malformed("missing `type` tag".into()))?;
    if !SessionMessage::TYPES.contains(&ty) {
        return Err(CodecError::UnknownType(ty.to_string()));
    }
    serde_json::from_value(value).map_err(|e| CodecError::Malformed(e.to_string()))
}

/// Reads one whole frame (prefix included). `None` on a clean end of stream.
pub fn read_frame_bytes<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, CodecError> {
    let mut header = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(CodecError::Truncated { needed: 4, have: got }),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = declared_len(header)?;
    let mut frame = vec![0u8; 4 + len];
    frame[..4].copy_from_slice(&header);
    r.read_exact(&mut frame[4..]).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CodecError::Truncated { needed: 4 + len, have: 4 },
        _ => e.into(),
    })?;
    Ok(Some(frame))
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<SessionMessage>, CodecError> {
    read_frame_bytes(r)?.map(|f| decode(&f)).transpose()
}

pub fn write_frame<W: Write>(w: &mut W, msg: &SessionMessage) -> Result<(), CodecError> {
    w.write_all(&encode(msg)?)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_is_body_length() {
        let f = encode(&SessionMessage::Register { vehicle_id: "v1".into() }).unwrap();
        assert_eq!(u32::from_be_bytes(f[..4].try_into().unwrap()) as usize, f.len() - 4);
        assert!(matches!(decode(&f[..f.len() - 1]), Err(CodecError::Truncated { .. })));
        let unknown = br#"{"type":"teleport","x":1}"#;
        assert!(matches!(decode_body(unknown), Err(CodecError::UnknownType(t)) if t == "teleport"));
    }
}
