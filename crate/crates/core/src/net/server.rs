use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};

use crate::error::{Error, Result};
use crate::net::throttle::{ThrottleConfig, ThrottledStream};
use crate::net::wire::{read_message, ErrorCode, FrameError, Message, MsgType};
use crate::storage::StorageBackend;

/// A bound listener that serves sessions one at a time against a backend.
#[derive(Debug)]
pub struct Server {
    listener: TcpListener,
    throttle: Option<ThrottleConfig>,
}

impl Server {
    pub fn bind<A: ToSocketAddrs>(addr: A) -> Result<Self> {
        Ok(Server { listener: TcpListener::bind(addr)?, throttle: None })
    }

    /// Limit both directions of every session.
    pub fn with_throttle(mut self, throttle: Option<ThrottleConfig>) -> Self {
        self.throttle = throttle;
        self
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accept one client, serve it until it disconnects, and hand the
    /// backend back.
    pub fn serve_one<S: StorageBackend>(&self, mut backend: S) -> Result<S> {
        let (stream, _) = self.listener.accept()?;
        serve_stream(stream, &mut backend, self.throttle)?;
        Ok(backend)
    }

    /// Serve clients one after another. `after_session` runs once each
    /// session ends; returning `false` stops the loop.
    pub fn serve_sessions<S, F>(&self, backend: &mut S, mut after_session: F) -> Result<()>
    where
        S: StorageBackend,
        F: FnMut(&mut S) -> Result<bool>,
    {
        loop {
            let (stream, _) = self.listener.accept()?;
            serve_stream(stream, backend, self.throttle)?;
            if !after_session(backend)? {
                return Ok(());
            }
        }
    }
}

fn serve_stream<S: StorageBackend>(stream: TcpStream, backend: &mut S, throttle: Option<ThrottleConfig>) -> Result<()> {
    stream.set_nodelay(true)?;
    let reader = stream.try_clone()?;
    let (mut reader, mut writer): (Box<dyn Read>, Box<dyn Write>) = match throttle {
        Some(config) => (Box::new(ThrottledStream::new(reader, config)), Box::new(ThrottledStream::new(stream, config))),
        None => (Box::new(reader), Box::new(stream)),
    };
    match handle_session(&mut reader, &mut writer, backend) {
        Err(e) if e.is_io() => Ok(()),
        other => other,
    }
}

/// Answer requests until the peer closes the stream. A malformed or
/// unserviceable request gets an ERROR frame and ends the session.
pub fn handle_session<R, W, S>(input: &mut R, output: &mut W, backend: &mut S) -> Result<()>
where
    R: Read + ?Sized,
    W: Write + ?Sized,
    S: StorageBackend + ?Sized,
{
    let layout = backend.layout();
    let path_bytes = layout.path_bytes();
    loop {
        let msg = match read_message(input, path_bytes) {
            Ok(m) => m,
            Err(FrameError::Closed) => return Ok(()),
            Err(FrameError::Io(e)) => return Err(Error::Io(e)),
            Err(e) => {
                Message::error(e.code(), &e.to_string()).write_to(output)?;
                return Ok(());
            }
        };
        let reply = match msg.msg_type {
            MsgType::ReadPath | MsgType::WritePath if layout.check_leaf(msg.leaf).is_err() => {
                Err(Message::error(ErrorCode::Leaf, &format!("leaf {} out of range", msg.leaf)))
            }
            MsgType::ReadPath if !msg.body.is_empty() => Err(Message::error(ErrorCode::Shape, "READ_PATH carries a body")),
            MsgType::ReadPath => match backend.read_path(msg.leaf) {
                Ok(path) => Ok(Message::new(MsgType::PathData, msg.leaf, layout.encode_path(&path))),
                Err(e) => Err(Message::error(ErrorCode::Storage, &e.to_string())),
            },
            MsgType::WritePath if msg.body.len() != path_bytes => Err(Message::error(
                ErrorCode::Shape,
                &format!("path body is {} bytes, expected {path_bytes}", msg.body.len()),
            )),
            MsgType::WritePath => {
                let written = layout.decode_path(&msg.body).and_then(|path| backend.write_path(msg.leaf, path));
                match written {
                    Ok(()) => Ok(Message::new(MsgType::Ack, msg.leaf, Vec::new())),
                    Err(e) => Err(Message::error(ErrorCode::Storage, &e.to_string())),
                }
            }
            other => Err(Message::error(ErrorCode::Type, &format!("unexpected {other:?} from client"))),
        };
        match reply {
            Ok(m) => m.write_to(output)?,
            Err(m) => {
                m.write_to(output)?;
                return Ok(());
            }
        }
    }
}
