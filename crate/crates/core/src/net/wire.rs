//! Frame layout: magic "RORM", version u16, type u8, leaf u64, body length
//! u32, all little-endian, then the body.

use std::io::{self, Read, Write};

pub const MAGIC: [u8; 4] = *b"RORM";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    ReadPath = 1,
    PathData = 2,
    WritePath = 3,
    Ack = 4,
    Error = 5,
}

impl TryFrom<u8> for MsgType {
    type Error = u8;

    fn try_from(value: u8) -> Result<Self, u8> {
        Ok(match value {
            1 => MsgType::ReadPath,
            2 => MsgType::PathData,
            3 => MsgType::WritePath,
            4 => MsgType::Ack,
            5 => MsgType::Error,
            other => return Err(other),
        })
    }
}

/// First body byte of an ERROR frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrorCode {
    Frame = 1,
    Shape = 2,
    Leaf = 3,
    Version = 4,
    Type = 5,
    Storage = 6,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub msg_type: MsgType,
    pub leaf: u64,
    pub body: Vec<u8>,
}

impl Message {
    pub fn new(msg_type: MsgType, leaf: u64, body: Vec<u8>) -> Self {
        Message { msg_type, leaf, body }
    }

    pub fn error(code: ErrorCode, message: &str) -> Self {
        let mut body = vec![code as u8];
        body.extend_from_slice(message.as_bytes());
        Message::new(MsgType::Error, 0, body)
    }

    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.body.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.leaf.to_le_bytes());
        out.extend_from_slice(&(self.body.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.body);
        out
    }

    pub fn write_to<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        out.write_all(&self.encode())?;
        out.flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u16,
    pub msg_type: u8,
    pub leaf: u64,
    pub body_len: u32,
}

impl Header {
    pub fn parse(bytes: &[u8; HEADER_LEN]) -> Result<Self, FrameError> {
        if bytes[..4] != MAGIC {
            return Err(FrameError::BadMagic);
        }
        Ok(Header {
            version: u16::from_le_bytes([bytes[4], bytes[5]]),
            msg_type: bytes[6],
            leaf: u64::from_le_bytes(bytes[7..15].try_into().expect("8 bytes")),
            body_len: u32::from_le_bytes(bytes[15..19].try_into().expect("4 bytes")),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    /// The peer closed the stream between frames.
    #[error("connection closed")]
    Closed,
    #[error("frame truncated")]
    Truncated,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    Version(u16),
    #[error("unknown message type {0}")]
    Type(u8),
    #[error("body of {0} bytes exceeds limit")]
    TooLarge(u32),
    #[error(transparent)]
    Io(io::Error),
}

impl FrameError {
    pub fn code(&self) -> ErrorCode {
        match self {
            FrameError::Version(_) => ErrorCode::Version,
            FrameError::Type(_) => ErrorCode::Type,
            FrameError::TooLarge(_) => ErrorCode::Shape,
            _ => ErrorCode::Frame,
        }
    }
}

/// Fill `buf`, reporting how many bytes arrived before end of stream.
fn read_full<R: Read + ?Sized>(input: &mut R, buf: &mut [u8]) -> Result<usize, FrameError> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(FrameError::Io(e)),
        }
    }
    Ok(filled)
}

/// Read one frame. Bodies longer than `max_body` are refused before any of
/// the body is read.
pub fn read_message<R: Read + ?Sized>(input: &mut R, max_body: usize) -> Result<Message, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    match read_full(input, &mut header)? {
        0 => return Err(FrameError::Closed),
        HEADER_LEN => {}
        _ => return Err(FrameError::Truncated),
    }
    let header = Header::parse(&header)?;
    if header.version != VERSION {
        return Err(FrameError::Version(header.version));
    }
    let msg_type = MsgType::try_from(header.msg_type).map_err(FrameError::Type)?;
    if header.body_len as usize > max_body {
        return Err(FrameError::TooLarge(header.body_len));
    }
    let mut body = vec![0u8; header.body_len as usize];
    if read_full(input, &mut body)? != body.len() {
        return Err(FrameError::Truncated);
    }
    Ok(Message { msg_type, leaf: header.leaf, body })
}
