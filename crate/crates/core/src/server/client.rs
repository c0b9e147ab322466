use std::io::BufReader;
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Arc;

use crate::env::{EnvError, EnvObservation, EnvStep, Environment};
use crate::render::PixelFrame;

use super::protocol::{
    read_frame, write_frame, ErrorCode, Request, Response, WireObservation, MODE_PIXELS, MODE_STATES,
};
use super::ServerError;

/// Blocking request/response connection to a simulation server.
#[derive(Debug)]
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ServerError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
        })
    }

    /// Sends one request and waits for its reply. Error frames come back as
    /// [`ServerError::Remote`].
    pub fn request(&mut self, req: &Request) -> Result<Response, ServerError> {
        write_frame(&mut self.writer, &req.encode())?;
        let frame = read_frame(&mut self.reader)?
            .ok_or_else(|| ServerError::Unexpected("connection closed".into()))?;
        match Response::decode(&frame)? {
            Response::Error(code) => Err(ServerError::Remote(code)),
            r => Ok(r),
        }
    }

    pub fn hello(&mut self, mode: u8, noise: bool, seed: u64) -> Result<u32, ServerError> {
        match self.request(&Request::Hello { mode, noise, seed })? {
            Response::Hello { session } => Ok(session),
            r => Err(unexpected(&r)),
        }
    }

    pub fn reset(&mut self, session: u32) -> Result<WireObservation, ServerError> {
        match self.request(&Request::Reset { session })? {
            Response::Reset(obs) => Ok(obs),
            r => Err(unexpected(&r)),
        }
    }

    /// Returns `(reward, done, success, observation)`.
    pub fn step(
        &mut self,
        session: u32,
        action: [f32; 2],
    ) -> Result<(f32, bool, bool, WireObservation), ServerError> {
        match self.request(&Request::Step { session, action })? {
            Response::Step {
                reward,
                done,
                success,
                observation,
            } => Ok((reward, done, success, observation)),
            r => Err(unexpected(&r)),
        }
    }

    pub fn close(&mut self, session: u32) -> Result<(), ServerError> {
        match self.request(&Request::Close { session })? {
            Response::Closed { .. } => Ok(()),
            r => Err(unexpected(&r)),
        }
    }
}

fn unexpected(r: &Response) -> ServerError {
    ServerError::Unexpected(format!("{r:?}"))
}

/// [`Environment`] backed by a session on a remote server. Always requests
/// states; pixels optionally.
#[derive(Debug)]
pub struct RemoteReacher {
    client: Client,
    session: u32,
    steps: u32,
}

impl RemoteReacher {
    pub fn connect(addr: impl ToSocketAddrs, seed: u64, noise: bool, pixels: bool) -> Result<Self, ServerError> {
        let mut client = Client::connect(addr)?;
        let mode = MODE_STATES | if pixels { MODE_PIXELS } else { 0 };
        let session = client.hello(mode, noise, seed)?;
        Ok(Self {
            client,
            session,
            steps: 0,
        })
    }

    pub fn session(&self) -> u32 {
        self.session
    }

    fn env_error(&self, e: ServerError) -> EnvError {
        match e {
            ServerError::Remote(c) if c == ErrorCode::EpisodeFinished as u16 => EnvError::EpisodeFinished {
                step_count: self.steps,
            },
            ServerError::Remote(c) if c == ErrorCode::InvalidAction as u16 => EnvError::NonFiniteAction,
            e => EnvError::Remote(e.to_string()),
        }
    }
}

fn observation(w: WireObservation) -> Result<EnvObservation, EnvError> {
    let features = w
        .states
        .ok_or_else(|| EnvError::Remote("observation without states".into()))?;
    let frame = match w.pixels {
        Some(p) => Some(Arc::new(
            PixelFrame::from_levels(p).ok_or_else(|| EnvError::Remote("bad pixel payload".into()))?,
        )),
        None => None,
    };
    Ok(EnvObservation { features, frame })
}

impl Environment for RemoteReacher {
    fn reset(&mut self) -> Result<EnvObservation, EnvError> {
        let w = self.client.reset(self.session).map_err(|e| self.env_error(e))?;
        self.steps = 0;
        observation(w)
    }

    fn step(&mut self, action: [f32; 2]) -> Result<EnvStep, EnvError> {
        let (reward, done, success, w) = self
            .client
            .step(self.session, action)
            .map_err(|e| self.env_error(e))?;
        self.steps += 1;
        Ok(EnvStep {
            observation: observation(w)?,
            reward,
            done,
            success,
        })
    }
}
