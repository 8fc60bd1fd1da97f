//! Length-prefixed binary framing for proxy requests and responses.
//!
//! ```text
//! frame  = len:u32be  version:u8  opcode:u8  correlation:[u8; 16]  body
//! body   = json_len:u32be  json  (section_len:u64be  section)*
//! error  = opcode 0xFF, body = code:u8  detail:utf8
//! ```
//!
//! `len` counts everything after itself. Payload bytes never go in the JSON;
//! each materialized payload is described there and its bytes follow as the
//! next section, in order.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use super::{CallArg, Request, Response};
use crate::error::{ProxyError, ProxyErrorKind};
use crate::model::{DataId, DataRef, NodeId, ServiceSpec};
use crate::services::Payload;

pub const VERSION: u8 = 1;
pub const OK_BIT: u8 = 0x80;
pub const ERROR_OPCODE: u8 = 0xFF;
const HEADER_LEN: usize = 18;

pub mod opcode {
    pub const INVOKE: u8 = 1;
    pub const UPLOAD: u8 = 2;
    pub const DELIVER: u8 = 3;
    pub const STAGE: u8 = 4;
    pub const RETURN_DATA: u8 = 5;
    pub const FLUSH: u8 = 6;
    pub const ADD_SERVICE: u8 = 7;
    pub const REMOVE_SERVICE: u8 = 8;
    pub const LIST_SERVICES: u8 = 9;
    pub const LIST_OPERATIONS: u8 = 10;
    pub const LIST_OP_PARAMETERS: u8 = 11;
    pub const LIST_OP_RETURN_TYPE: u8 = 12;
    pub const CALL: u8 = 13;
    pub const TRANSFER: u8 = 14;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub opcode: u8,
    pub correlation: [u8; 16],
    pub body: Vec<u8>,
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> io::Result<()> {
    let len = u32::try_from(2 + 16 + frame.body.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    let mut head = [0u8; 4 + HEADER_LEN];
    head[..4].copy_from_slice(&len.to_be_bytes());
    head[4] = VERSION;
    head[5] = frame.opcode;
    head[6..].copy_from_slice(&frame.correlation);
    w.write_all(&head)?;
    w.write_all(&frame.body)?;
    w.flush()
}

/// Reads one frame. `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Frame>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len < HEADER_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes is too short")));
    }
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head)?;
    if head[0] != VERSION {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("unsupported protocol version {}", head[0])));
    }
    let mut body = vec![0u8; len - HEADER_LEN];
    r.read_exact(&mut body)?;
    let mut correlation = [0u8; 16];
    correlation.copy_from_slice(&head[2..]);
    Ok(Some(Frame { opcode: head[1], correlation, body }))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Desc {
    Bytes { len: u64 },
    Sized { len: u64, digest: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum WireArg {
    Inline(Desc),
    Resident(DataId),
}

#[derive(Debug, Serialize, Deserialize)]
struct StageEntry {
    id: DataId,
    payload: Desc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum WireRequest {
    Invoke { service: String, operation: String, params: Vec<DataId> },
    Upload { payloads: Vec<Desc> },
    Deliver { recipient: NodeId, ids: Vec<DataId> },
    Stage { batch: Vec<StageEntry> },
    ReturnData { ids: Vec<DataId> },
    Flush { ids: Vec<DataId> },
    AddService { spec: ServiceSpec },
    RemoveService { service_id: String },
    ListServices,
    ListOperations { service_id: String },
    ListOpParameters { service_id: String, operation: String },
    ListOpReturnType { service_id: String, operation: String },
    Call { service: String, operation: String, args: Vec<WireArg> },
    Transfer { payload: Desc },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum WireResponse {
    Ref(DataRef),
    Refs(Vec<DataRef>),
    Ack(bool),
    Payloads(Vec<Desc>),
    Payload(Desc),
    Names(Vec<String>),
    Name(String),
    Done,
}

fn malformed(e: impl std::fmt::Display) -> ProxyError {
    ProxyError::invocation_parameter(format!("malformed payload envelope: {e}"))
}

struct Sections(Vec<Vec<u8>>);

impl Sections {
    fn put(&mut self, p: Payload) -> Desc {
        match p {
            Payload::Bytes(b) => {
                let len = b.len() as u64;
                self.0.push(b);
                Desc::Bytes { len }
            }
            Payload::Sized { len, digest } => Desc::Sized { len, digest: hex::encode(digest) },
        }
    }
}

struct SectionReader<'a> {
    rest: &'a [u8],
}

impl SectionReader<'_> {
    fn take(&mut self, d: Desc) -> Result<Payload, ProxyError> {
        match d {
            Desc::Sized { len, digest } => {
                let mut out = [0u8; 32];
                hex::decode_to_slice(&digest, &mut out).map_err(malformed)?;
                Ok(Payload::Sized { len, digest: out })
            }
            Desc::Bytes { len } => {
                if self.rest.len() < 8 {
                    return Err(malformed("missing payload section"));
                }
                let (n, rest) = self.rest.split_at(8);
                let n = u64::from_be_bytes(n.try_into().unwrap());
                if n != len || (rest.len() as u64) < n {
                    return Err(malformed(format!("section of {n} bytes does not match length {len}")));
                }
                let (bytes, rest) = rest.split_at(n as usize);
                self.rest = rest;
                Ok(Payload::Bytes(bytes.to_vec()))
            }
        }
    }

    fn finish(self) -> Result<(), ProxyError> {
        if self.rest.is_empty() {
            Ok(())
        } else {
            Err(malformed(format!("{} trailing bytes", self.rest.len())))
        }
    }
}

fn encode_body<T: Serialize>(json: &T, sections: Sections) -> Vec<u8> {
    let json = serde_json::to_vec(json).expect("wire types serialize");
    let extra: usize = sections.0.iter().map(|s| 8 + s.len()).sum();
    let mut body = Vec::with_capacity(4 + json.len() + extra);
    body.extend_from_slice(&(json.len() as u32).to_be_bytes());
    body.extend_from_slice(&json);
    for s in sections.0 {
        body.extend_from_slice(&(s.len() as u64).to_be_bytes());
        body.extend_from_slice(&s);
    }
    body
}

fn split_body(body: &[u8]) -> Result<(&[u8], SectionReader<'_>), ProxyError> {
    if body.len() < 4 {
        return Err(malformed("body shorter than its length prefix"));
    }
    let n = u32::from_be_bytes(body[..4].try_into().unwrap()) as usize;
    let rest = &body[4..];
    if rest.len() < n {
        return Err(malformed("json section truncated"));
    }
    Ok((&rest[..n], SectionReader { rest: &rest[n..] }))
}

pub fn request_opcode(req: &Request) -> u8 {
    use opcode::*;
    match req {
        Request::Invoke { .. } => INVOKE,
        Request::Upload { .. } => UPLOAD,
        Request::Deliver { .. } => DELIVER,
        Request::Stage { .. } => STAGE,
        Request::ReturnData { .. } => RETURN_DATA,
        Request::Flush { .. } => FLUSH,
        Request::AddService { .. } => ADD_SERVICE,
        Request::RemoveService { .. } => REMOVE_SERVICE,
        Request::ListServices => LIST_SERVICES,
        Request::ListOperations { .. } => LIST_OPERATIONS,
        Request::ListOpParameters { .. } => LIST_OP_PARAMETERS,
        Request::ListOpReturnType { .. } => LIST_OP_RETURN_TYPE,
        Request::Call { .. } => CALL,
        Request::Transfer { .. } => TRANSFER,
    }
}

pub fn encode_request(req: Request, correlation: [u8; 16]) -> Frame {
    let opcode = request_opcode(&req);
    let mut s = Sections(Vec::new());
    let wire = match req {
        Request::Invoke { service, operation, params } => WireRequest::Invoke { service, operation, params },
        Request::Upload { payloads } => {
            WireRequest::Upload { payloads: payloads.into_iter().map(|p| s.put(p)).collect() }
        }
        Request::Deliver { recipient, ids } => WireRequest::Deliver { recipient, ids },
        Request::Stage { batch } => WireRequest::Stage {
            batch: batch.into_iter().map(|(id, p)| StageEntry { id, payload: s.put(p) }).collect(),
        },
        Request::ReturnData { ids } => WireRequest::ReturnData { ids },
        Request::Flush { ids } => WireRequest::Flush { ids },
        Request::AddService { spec } => WireRequest::AddService { spec },
        Request::RemoveService { service_id } => WireRequest::RemoveService { service_id },
        Request::ListServices => WireRequest::ListServices,
        Request::ListOperations { service_id } => WireRequest::ListOperations { service_id },
        Request::ListOpParameters { service_id, operation } => WireRequest::ListOpParameters { service_id, operation },
        Request::ListOpReturnType { service_id, operation } => WireRequest::ListOpReturnType { service_id, operation },
        Request::Call { service, operation, args } => WireRequest::Call {
            service,
            operation,
            args: args
                .into_iter()
                .map(|a| match a {
                    CallArg::Inline(p) => WireArg::Inline(s.put(p)),
                    CallArg::Resident(id) => WireArg::Resident(id),
                })
                .collect(),
        },
        Request::Transfer { payload } => WireRequest::Transfer { payload: s.put(payload) },
    };
    Frame { opcode, correlation, body: encode_body(&wire, s) }
}

pub fn decode_request(frame: &Frame) -> Result<Request, ProxyError> {
    let (json, mut sec) = split_body(&frame.body)?;
    let wire: WireRequest = serde_json::from_slice(json).map_err(malformed)?;
    let req = match wire {
        WireRequest::Invoke { service, operation, params } => Request::Invoke { service, operation, params },
        WireRequest::Upload { payloads } => {
            Request::Upload { payloads: payloads.into_iter().map(|d| sec.take(d)).collect::<Result<_, _>>()? }
        }
        WireRequest::Deliver { recipient, ids } => Request::Deliver { recipient, ids },
        WireRequest::Stage { batch } => Request::Stage {
            batch: batch.into_iter().map(|e| Ok((e.id, sec.take(e.payload)?))).collect::<Result<_, ProxyError>>()?,
        },
        WireRequest::ReturnData { ids } => Request::ReturnData { ids },
        WireRequest::Flush { ids } => Request::Flush { ids },
        WireRequest::AddService { spec } => Request::AddService { spec },
        WireRequest::RemoveService { service_id } => Request::RemoveService { service_id },
        WireRequest::ListServices => Request::ListServices,
        WireRequest::ListOperations { service_id } => Request::ListOperations { service_id },
        WireRequest::ListOpParameters { service_id, operation } => Request::ListOpParameters { service_id, operation },
        WireRequest::ListOpReturnType { service_id, operation } => Request::ListOpReturnType { service_id, operation },
        WireRequest::Call { service, operation, args } => Request::Call {
            service,
            operation,
            args: args
                .into_iter()
                .map(|a| match a {
                    WireArg::Inline(d) => sec.take(d).map(CallArg::Inline),
                    WireArg::Resident(id) => Ok(CallArg::Resident(id)),
                })
                .collect::<Result<_, _>>()?,
        },
        WireRequest::Transfer { payload } => Request::Transfer { payload: sec.take(payload)? },
    };
    sec.finish()?;
    if request_opcode(&req) != frame.opcode {
        return Err(malformed(format!("opcode {} does not match body", frame.opcode)));
    }
    Ok(req)
}

pub fn encode_response(request_opcode: u8, res: Result<Response, ProxyError>, correlation: [u8; 16]) -> Frame {
    match res {
        Err(e) => {
            let mut body = vec![e.kind.code()];
            body.extend_from_slice(e.detail.as_bytes());
            Frame { opcode: ERROR_OPCODE, correlation, body }
        }
        Ok(r) => {
            let mut s = Sections(Vec::new());
            let wire = match r {
                Response::Ref(r) => WireResponse::Ref(r),
                Response::Refs(r) => WireResponse::Refs(r),
                Response::Ack(b) => WireResponse::Ack(b),
                Response::Payloads(p) => WireResponse::Payloads(p.into_iter().map(|p| s.put(p)).collect()),
                Response::Payload(p) => WireResponse::Payload(s.put(p)),
                Response::Names(n) => WireResponse::Names(n),
                Response::Name(n) => WireResponse::Name(n),
                Response::Done => WireResponse::Done,
            };
            Frame { opcode: request_opcode | OK_BIT, correlation, body: encode_body(&wire, s) }
        }
    }
}

pub fn decode_response(frame: &Frame) -> Result<Response, ProxyError> {
    if frame.opcode == ERROR_OPCODE {
        let (&code, detail) =
            frame.body.split_first().ok_or_else(|| ProxyError::service_invocation("empty error frame"))?;
        let kind = ProxyErrorKind::from_code(code)
            .ok_or_else(|| ProxyError::service_invocation(format!("unknown error code {code}")))?;
        return Err(ProxyError::new(kind, String::from_utf8_lossy(detail)));
    }
    let bad = |e: ProxyError| ProxyError::service_invocation(format!("bad response: {}", e.detail));
    let (json, mut sec) = split_body(&frame.body).map_err(bad)?;
    let wire: WireResponse = serde_json::from_slice(json).map_err(|e| bad(malformed(e)))?;
    let res = match wire {
        WireResponse::Ref(r) => Response::Ref(r),
        WireResponse::Refs(r) => Response::Refs(r),
        WireResponse::Ack(b) => Response::Ack(b),
        WireResponse::Payloads(d) => {
            Response::Payloads(d.into_iter().map(|d| sec.take(d)).collect::<Result<_, _>>().map_err(bad)?)
        }
        WireResponse::Payload(d) => Response::Payload(sec.take(d).map_err(bad)?),
        WireResponse::Names(n) => Response::Names(n),
        WireResponse::Name(n) => Response::Name(n),
        WireResponse::Done => Response::Done,
    };
    sec.finish().map_err(bad)?;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{OperationSpec, TransformSpec};

    fn round_trip(req: Request) {
        let frame = encode_request(req.clone(), [7; 16]);
        let mut buf = Vec::new();
        write_frame(&mut buf, &frame).unwrap();
        let back = read_frame(&mut buf.as_slice()).unwrap().unwrap();
        assert_eq!(back, frame);
        assert_eq!(decode_request(&back).unwrap(), req);
    }

    #[test]
    fn every_request_round_trips() {
        let id = DataId::random();
        let bytes = Payload::Bytes(b"hello".to_vec());
        let sized = Payload::synthetic("s", 1 << 40, false);
        let spec = ServiceSpec::new("s", "h", vec![OperationSpec::new("op", 1, TransformSpec::ratio(6, 5))]);
        for req in [
            Request::Invoke { service: "s".into(), operation: "op".into(), params: vec![id] },
            Request::Upload { payloads: vec![bytes.clone(), sized.clone(), Payload::Bytes(vec![])] },
            Request::Deliver { recipient: "b".into(), ids: vec![id, id] },
            Request::Stage { batch: vec![(id, bytes.clone()), (DataId::random(), sized.clone())] },
            Request::ReturnData { ids: vec![id] },
            Request::Flush { ids: vec![] },
            Request::AddService { spec },
            Request::RemoveService { service_id: "s".into() },
            Request::ListServices,
            Request::ListOperations { service_id: "s".into() },
            Request::ListOpParameters { service_id: "s".into(), operation: "op".into() },
            Request::ListOpReturnType { service_id: "s".into(), operation: "op".into() },
            Request::Call {
                service: "s".into(),
                operation: "op".into(),
                args: vec![CallArg::Inline(bytes.clone()), CallArg::Resident(id)],
            },
            Request::Transfer { payload: bytes },
        ] {
            round_trip(req);
        }
    }

    #[test]
    fn header_layout() {
        let frame = encode_request(Request::ListServices, [1; 16]);
        let mut buf = Vec::new();
        write_frame(&mut buf, &frame).unwrap();
        assert_eq!(u32::from_be_bytes(buf[..4].try_into().unwrap()) as usize, buf.len() - 4);
        assert_eq!(buf[4], VERSION);
        assert_eq!(buf[5], opcode::LIST_SERVICES);
        assert_eq!(&buf[6..22], &[1; 16]);
    }

    #[test]
    fn stage_sections_are_length_prefixed_raw_bytes() {
        let frame = encode_request(
            Request::Stage { batch: vec![(DataId::random(), Payload::Bytes(b"xyz".to_vec()))] },
            [0; 16],
        );
        let tail = &frame.body[frame.body.len() - 11..];
        assert_eq!(&tail[..8], &3u64.to_be_bytes());
        assert_eq!(&tail[8..], b"xyz");
    }

    #[test]
    fn errors_carry_kind_code() {
        let f = encode_response(opcode::INVOKE, Err(ProxyError::variable_not_found("gone")), [0; 16]);
        assert_eq!(f.opcode, ERROR_OPCODE);
        assert_eq!(f.body[0], 2);
        let e = decode_response(&f).unwrap_err();
        assert_eq!(e, ProxyError::variable_not_found("gone"));
    }

    #[test]
    fn responses_round_trip() {
        let r = DataRef { id: DataId::random(), size_bytes: 3, home_proxy: "a".into() };
        for res in [
            Response::Ref(r.clone()),
            Response::Refs(vec![r]),
            Response::Ack(true),
            Response::Payloads(vec![Payload::Bytes(vec![1, 2]), Payload::synthetic("q", 9, false)]),
            Response::Payload(Payload::Bytes(vec![])),
            Response::Names(vec!["a".into()]),
            Response::Name("byte[]".into()),
            Response::Done,
        ] {
            let f = encode_response(opcode::CALL, Ok(res.clone()), [0; 16]);
            assert_eq!(f.opcode, opcode::CALL | OK_BIT);
            assert_eq!(decode_response(&f).unwrap(), res);
        }
    }

    #[test]
    fn malformed_bodies_are_parameter_errors() {
        let mut f = encode_request(Request::Upload { payloads: vec![Payload::Bytes(b"abc".to_vec())] }, [0; 16]);
        f.body.truncate(f.body.len() - 1);
        assert_eq!(decode_request(&f).unwrap_err().kind, ProxyErrorKind::InvocationParameter);
        f.body = b"\0\0\0\x02{}".to_vec();
        assert_eq!(decode_request(&f).unwrap_err().kind, ProxyErrorKind::InvocationParameter);
        let mut f = encode_request(Request::ListServices, [0; 16]);
        f.opcode = opcode::INVOKE;
        assert!(decode_request(&f).is_err());
    }

    #[test]
    fn bad_version_is_rejected() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &encode_request(Request::ListServices, [0; 16])).unwrap();
        buf[4] = 2;
        assert!(read_frame(&mut buf.as_slice()).is_err());
        assert!(read_frame(&mut [].as_slice()).unwrap().is_none());
    }
}
