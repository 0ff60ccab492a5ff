//! Binary protocol spoken with external denoiser processes over stdio.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! request:  "PNPD" | version u32 (=1) | width u32 | height u32 | loop_index u32
//!           | strength_hint f64 | pixel_size_mm f64 | width·height × f32
//! response: "PNPR" | status u8 (0 ok, 1 error)
//!           | ok:    width·height × f32
//!           | error: msg_len u32 | msg_len bytes of UTF-8
//! ```
//!
//! A process may serve several requests on the same streams; EOF on its
//! input ends the session.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::grid::{Image, ImageGrid};

pub const REQUEST_MAGIC: [u8; 4] = *b"PNPD";
pub const RESPONSE_MAGIC: [u8; 4] = *b"PNPR";
pub const PROTOCOL_VERSION: u32 = 1;
pub const STATUS_OK: u8 = 0;
pub const STATUS_ERROR: u8 = 1;
/// Bytes in a request before the payload.
pub const REQUEST_HEADER_LEN: usize = 4 + 4 * 4 + 8 + 8;

#[derive(Clone, Debug, PartialEq)]
pub struct Request {
    pub width: u32,
    pub height: u32,
    pub loop_index: u32,
    pub strength_hint: f64,
    pub pixel_size_mm: f64,
    pub payload: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Response {
    Ok(Vec<f32>),
    Error(String),
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Protocol(format!("stream ended inside {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R, what: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact_or_truncated(r, &mut b, what)?;
    Ok(f64::from_le_bytes(b))
}

fn read_payload<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    read_exact_or_truncated(r, &mut bytes, "payload")?;
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn encode_payload(payload: &[f32], out: &mut Vec<u8>) {
    out.reserve(payload.len() * 4);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Reads the first byte of a frame; `None` on a clean EOF.
fn read_first_byte<R: Read>(r: &mut R) -> Result<Option<u8>> {
    let mut b = [0u8; 1];
    loop {
        match r.read(&mut b) {
            Ok(0) => return Ok(None),
            Ok(_) => return Ok(Some(b[0])),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(Error::Io(e)),
        }
    }
}

impl Request {
    pub fn from_image(image: &Image, loop_index: usize, strength_hint: f64) -> Result<Self> {
        let narrow = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| Error::validation(format!("{what} {v} does not fit in u32")))
        };
        Ok(Request {
            width: narrow(image.width(), "width")?,
            height: narrow(image.height(), "height")?,
            loop_index: narrow(loop_index, "loop index")?,
            strength_hint,
            pixel_size_mm: image.grid().pixel_size,
            payload: image.values().iter().map(|&v| v as f32).collect(),
        })
    }

    pub fn n_pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(REQUEST_HEADER_LEN + self.payload.len() * 4);
        out.extend_from_slice(&REQUEST_MAGIC);
        out.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.loop_index.to_le_bytes());
        out.extend_from_slice(&self.strength_hint.to_le_bytes());
        out.extend_from_slice(&self.pixel_size_mm.to_le_bytes());
        encode_payload(&self.payload, &mut out);
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    /// Reads one request; `Ok(None)` when the stream is at a clean EOF.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Request>> {
        let Some(first) = read_first_byte(r)? else {
            return Ok(None);
        };
        let mut magic = [first, 0, 0, 0];
        read_exact_or_truncated(r, &mut magic[1..], "magic")?;
        if magic != REQUEST_MAGIC {
            return Err(Error::Protocol(format!("bad request magic {magic:?}")));
        }
        let version = read_u32(r, "version")?;
        if version != PROTOCOL_VERSION {
            return Err(Error::Protocol(format!("unsupported protocol version {version}")));
        }
        let width = read_u32(r, "width")?;
        let height = read_u32(r, "height")?;
        let loop_index = read_u32(r, "loop index")?;
        let strength_hint = read_f64(r, "strength hint")?;
        let pixel_size_mm = read_f64(r, "pixel size")?;
        if width == 0 || height == 0 {
            return Err(Error::Protocol(format!("empty image {width}x{height}")));
        }
        let payload = read_payload(r, width as usize * height as usize)?;
        Ok(Some(Request { width, height, loop_index, strength_hint, pixel_size_mm, payload }))
    }

    /// The payload as an image (values widened to f64).
    pub fn image(&self) -> Result<Image> {
        let grid = ImageGrid::new(self.width as usize, self.height as usize, self.pixel_size_mm)
            .map_err(|e| Error::Protocol(e.to_string()))?;
        Image::new(grid, self.payload.iter().map(|&v| v as f64).collect()).map_err(|e| Error::Protocol(e.to_string()))
    }
}

impl Response {
    pub fn from_image(image: &Image) -> Self {
        Response::Ok(image.values().iter().map(|&v| v as f32).collect())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&RESPONSE_MAGIC);
        match self {
            Response::Ok(payload) => {
                out.push(STATUS_OK);
                encode_payload(payload, &mut out);
            }
            Response::Error(msg) => {
                out.push(STATUS_ERROR);
                out.extend_from_slice(&(msg.len() as u32).to_le_bytes());
                out.extend_from_slice(msg.as_bytes());
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    /// Reads one response whose ok-payload holds `n_pixels` values.
    pub fn read_from<R: Read>(r: &mut R, n_pixels: usize) -> Result<Response> {
        let mut magic = [0u8; 4];
        read_exact_or_truncated(r, &mut magic, "response magic")?;
        if magic != RESPONSE_MAGIC {
            return Err(Error::Protocol(format!("bad response magic {magic:?}")));
        }
        let mut status = [0u8; 1];
        read_exact_or_truncated(r, &mut status, "status")?;
        match status[0] {
            STATUS_OK => Ok(Response::Ok(read_payload(r, n_pixels)?)),
            STATUS_ERROR => {
                let len = read_u32(r, "message length")? as usize;
                let mut msg = vec![0u8; len];
                read_exact_or_truncated(r, &mut msg, "error message")?;
                let msg = String::from_utf8(msg).map_err(|_| Error::Protocol("error message is not UTF-8".into()))?;
                Ok(Response::Error(msg))
            }
            other => Err(Error::Protocol(format!("unknown response status {other}"))),
        }
    }
}

/// Request loop for a plugin process: answers every request on `input`
/// with `handler` until EOF.
///
/// A malformed request is answered with an error response, after which the
/// loop stops because the stream position is no longer trustworthy.
pub fn serve<R: Read, W: Write>(
    mut input: R,
    mut output: W,
    mut handler: impl FnMut(&Request) -> Response,
) -> Result<()> {
    loop {
        match Request::read_from(&mut input) {
            Ok(None) => return Ok(()),
            Ok(Some(req)) => handler(&req).write_to(&mut output)?,
            Err(e @ Error::Protocol(_)) => {
                Response::Error(e.to_string()).write_to(&mut output)?;
                return Err(e);
            }
            Err(e) => return Err(e),
        }
    }
}
