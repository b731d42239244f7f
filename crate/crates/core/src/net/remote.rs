use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};

use crate::error::{Error, Result};
use crate::net::throttle::{ThrottleConfig, ThrottledStream};
use crate::net::wire::{read_message, FrameError, Message, MsgType};
use crate::storage::{Bucket, StorageBackend, StoreLayout};

trait Transport: Read + Write + Send {}

impl<T: Read + Write + Send> Transport for T {}

/// [`StorageBackend`] that forwards each path read or write as one request
/// to a server.
pub struct RemoteStore {
    stream: Box<dyn Transport>,
    layout: StoreLayout,
    bytes_sent: u64,
    bytes_received: u64,
    round_trips: u64,
}

impl std::fmt::Debug for RemoteStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteStore")
            .field("layout", &self.layout)
            .field("bytes_sent", &self.bytes_sent)
            .field("bytes_received", &self.bytes_received)
            .finish_non_exhaustive()
    }
}

impl RemoteStore {
    pub fn connect<A: ToSocketAddrs>(addr: A, layout: StoreLayout, throttle: Option<ThrottleConfig>) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(match throttle {
            Some(config) => Self::over(ThrottledStream::new(stream, config), layout),
            None => Self::over(stream, layout),
        })
    }

    /// Use an already connected byte stream.
    pub fn over<T: Read + Write + Send + 'static>(stream: T, layout: StoreLayout) -> Self {
        RemoteStore { stream: Box::new(stream), layout, bytes_sent: 0, bytes_received: 0, round_trips: 0 }
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn bytes_received(&self) -> u64 {
        self.bytes_received
    }

    pub fn wire_bytes(&self) -> u64 {
        self.bytes_sent + self.bytes_received
    }

    pub fn round_trips(&self) -> u64 {
        self.round_trips
    }

    fn round_trip(&mut self, request: Message, expect: MsgType) -> Result<Message> {
        request.write_to(&mut self.stream)?;
        self.bytes_sent += request.wire_len() as u64;
        let reply = read_message(&mut self.stream, self.layout.path_bytes().max(4096)).map_err(|e| match e {
            FrameError::Io(e) => Error::Io(e),
            FrameError::Closed | FrameError::Truncated => {
                Error::Io(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "server closed the connection"))
            }
            other => Error::Protocol(format!("bad reply: {other}")),
        })?;
        self.bytes_received += reply.wire_len() as u64;
        self.round_trips += 1;
        if reply.msg_type == MsgType::Error {
            let code = reply.body.first().copied().unwrap_or(0);
            let message = String::from_utf8_lossy(reply.body.get(1..).unwrap_or(&[])).into_owned();
            return Err(Error::Remote { code, message });
        }
        if reply.msg_type != expect || reply.leaf != request.leaf {
            return Err(Error::Protocol(format!("expected {expect:?} for leaf {}, got {:?}", request.leaf, reply.msg_type)));
        }
        Ok(reply)
    }
}

impl StorageBackend for RemoteStore {
    fn layout(&self) -> StoreLayout {
        self.layout
    }

    fn read_path(&mut self, leaf: u64) -> Result<Vec<Bucket>> {
        self.layout.check_leaf(leaf)?;
        let reply = self.round_trip(Message::new(MsgType::ReadPath, leaf, Vec::new()), MsgType::PathData)?;
        self.layout.decode_path(&reply.body)
    }

    fn write_path(&mut self, leaf: u64, buckets: Vec<Bucket>) -> Result<()> {
        self.layout.check_leaf(leaf)?;
        self.layout.check_path(&buckets)?;
        let body = self.layout.encode_path(&buckets);
        self.round_trip(Message::new(MsgType::WritePath, leaf, body), MsgType::Ack)?;
        Ok(())
    }
}
