//! TCP simulation service. Each connection owns its sessions; each session
//! owns one [`LocalReacher`]. See [`protocol`] for the wire format.

mod client;
pub mod protocol;

pub use client::{Client, RemoteReacher};

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use thiserror::Error;

use crate::env::{EnvError, EnvObservation, Environment, LocalReacher};
use crate::render::NoiseConfig;
use protocol::{
    read_frame, write_frame, ErrorCode, Request, Response, WireObservation, MODE_PIXELS, MODE_STATES,
};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("frame payload of {0} bytes exceeds the limit")]
    FrameTooLarge(usize),
    #[error("server replied with error code {0:#06x}")]
    Remote(u16),
    #[error("unexpected reply: {0}")]
    Unexpected(String),
}

/// Settings applied to every session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ServerConfig {
    /// Background noise used by sessions that ask for it. With
    /// `noise.enabled` set, every session gets the noise.
    pub noise: NoiseConfig,
}

impl ServerConfig {
    fn session_noise(&self, requested: bool) -> NoiseConfig {
        if requested || self.noise.enabled {
            NoiseConfig {
                enabled: true,
                ..self.noise
            }
        } else {
            NoiseConfig::disabled()
        }
    }
}

struct Session {
    env: LocalReacher,
    mode: u8,
}

impl Session {
    fn wire(&self, obs: EnvObservation) -> WireObservation {
        WireObservation {
            states: (self.mode & MODE_STATES != 0).then_some(obs.features),
            pixels: obs.frame.map(|f| f.levels().to_vec()),
        }
    }
}

struct Shared {
    cfg: ServerConfig,
    next_session: AtomicU32,
    stop: AtomicBool,
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, cfg: ServerConfig) -> Result<Self, ServerError> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            shared: Arc::new(Shared {
                cfg,
                next_session: AtomicU32::new(1),
                stop: AtomicBool::new(false),
            }),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ServerError> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections until stopped, one thread per connection.
    pub fn run(self) -> Result<(), ServerError> {
        for conn in self.listener.incoming() {
            if self.shared.stop.load(Ordering::Acquire) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let shared = Arc::clone(&self.shared);
            std::thread::spawn(move || {
                let _ = handle_connection(stream, &shared);
            });
        }
        Ok(())
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> Result<ServerHandle, ServerError> {
        let addr = self.local_addr()?;
        let shared = Arc::clone(&self.shared);
        let thread = std::thread::spawn(move || self.run());
        Ok(ServerHandle {
            addr,
            shared,
            thread: Some(thread),
        })
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    thread: Option<JoinHandle<Result<(), ServerError>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting new connections. Open connections run until their
    /// clients disconnect.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::Release);
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn handle_connection(stream: TcpStream, shared: &Shared) -> Result<(), ServerError> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut sessions: HashMap<u32, Session> = HashMap::new();
    // Any framing error (bad length, truncated body) ends the connection.
    while let Some(frame) = read_frame(&mut reader)? {
        let resp = match Request::decode(&frame) {
            Ok(req) => handle_request(req, &mut sessions, shared),
            Err(ServerError::UnknownOpcode(_)) => Response::Error(ErrorCode::UnknownOpcode as u16),
            Err(_) => Response::Error(ErrorCode::MalformedPayload as u16),
        };
        write_frame(&mut writer, &resp.encode())?;
    }
    Ok(())
}

fn error(code: ErrorCode) -> Response {
    Response::Error(code as u16)
}

fn handle_request(req: Request, sessions: &mut HashMap<u32, Session>, shared: &Shared) -> Response {
    match req {
        Request::Hello { mode, noise, seed } => {
            if mode == 0 || mode & !(MODE_STATES | MODE_PIXELS) != 0 {
                return error(ErrorCode::Refused);
            }
            let id = shared.next_session.fetch_add(1, Ordering::Relaxed);
            let env = LocalReacher::new(seed, shared.cfg.session_noise(noise), mode & MODE_PIXELS != 0);
            sessions.insert(id, Session { env, mode });
            Response::Hello { session: id }
        }
        Request::Reset { session } => match sessions.get_mut(&session) {
            None => error(ErrorCode::UnknownSession),
            Some(s) => match s.env.reset() {
                Ok(obs) => Response::Reset(s.wire(obs)),
                Err(e) => env_error(&e),
            },
        },
        Request::Step { session, action } => match sessions.get_mut(&session) {
            None => error(ErrorCode::UnknownSession),
            Some(s) => match s.env.step(action) {
                Ok(st) => Response::Step {
                    reward: st.reward,
                    done: st.done,
                    success: st.success,
                    observation: s.wire(st.observation),
                },
                Err(e) => env_error(&e),
            },
        },
        Request::Close { session } => match sessions.remove(&session) {
            None => error(ErrorCode::UnknownSession),
            Some(_) => Response::Closed { session },
        },
    }
}

fn env_error(e: &EnvError) -> Response {
    error(match e {
        EnvError::EpisodeFinished { .. } => ErrorCode::EpisodeFinished,
        EnvError::NonFiniteAction => ErrorCode::InvalidAction,
        EnvError::Remote(_) => ErrorCode::Refused,
    })
}
