use std::io::{Cursor, Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use circulate::model::{DataId, OperationSpec, ServiceSpec, TransformSpec};
use circulate::proxy::wire::{
    decode_request, decode_response, encode_request, encode_response, opcode, read_frame, request_opcode, write_frame,
    Frame, ERROR_OPCODE, OK_BIT, VERSION,
};
use circulate::proxy::{CallArg, Proxy, ProxyConfig, ProxyServer, Request, Response};
use circulate::services::{preset_behavior, Payload};
use circulate::{ProxyError, ProxyErrorKind};

fn all_requests() -> Vec<Request> {
    let id = DataId::random();
    let spec = ServiceSpec::new("s", "h", vec![OperationSpec::variadic("v", 1, TransformSpec::ratio_of_concat(3, 7))]);
    let sized = Payload::synthetic("x", 1 << 33, false);
    vec![
        Request::Invoke { service: "s".into(), operation: "v".into(), params: vec![id, DataId::random()] },
        Request::Upload { payloads: vec![Payload::Bytes(vec![1, 2, 3]), Payload::Bytes(vec![]), sized.clone()] },
        Request::Deliver { recipient: "n2".into(), ids: vec![id] },
        Request::Stage { batch: vec![(id, Payload::Bytes(vec![9; 70_000])), (DataId::random(), sized.clone())] },
        Request::ReturnData { ids: vec![id] },
        Request::Flush { ids: vec![] },
        Request::AddService { spec },
        Request::RemoveService { service_id: "s".into() },
        Request::ListServices,
        Request::ListOperations { service_id: "s".into() },
        Request::ListOpParameters { service_id: "s".into(), operation: "v".into() },
        Request::ListOpReturnType { service_id: "s".into(), operation: "v".into() },
        Request::Call {
            service: "s".into(),
            operation: "v".into(),
            args: vec![CallArg::Inline(Payload::Bytes(vec![4; 10])), CallArg::Resident(id)],
        },
        Request::Transfer { payload: sized },
    ]
}

#[test]
fn every_request_round_trips_through_bytes() {
    let reqs = all_requests();
    let ops: Vec<u8> = reqs.iter().map(request_opcode).collect();
    assert_eq!(ops, (1..=14).collect::<Vec<u8>>());
    for req in reqs {
        let corr = *DataId::random().as_bytes();
        let mut buf = Vec::new();
        write_frame(&mut buf, &encode_request(req.clone(), corr)).unwrap();
        let frame = read_frame(&mut Cursor::new(buf)).unwrap().unwrap();
        assert_eq!(frame.correlation, corr);
        assert_eq!(decode_request(&frame).unwrap(), req);
    }
}

#[test]
fn responses_round_trip_and_errors_keep_their_code() {
    let corr = [7u8; 16];
    let id = DataId::random();
    let cases = [
        Response::Ref(circulate::model::DataRef { id, size_bytes: 5, home_proxy: "p".into() }),
        Response::Payloads(vec![Payload::Bytes(vec![1; 5]), Payload::synthetic("y", 10, false)]),
        Response::Payload(Payload::Bytes(b"hello".to_vec())),
        Response::Ack(true),
        Response::Names(vec!["a".into(), "b".into()]),
        Response::Name("byte[]".into()),
        Response::Done,
    ];
    let ops = [
        opcode::INVOKE,
        opcode::RETURN_DATA,
        opcode::CALL,
        opcode::FLUSH,
        opcode::LIST_SERVICES,
        opcode::LIST_OP_RETURN_TYPE,
        opcode::ADD_SERVICE,
    ];
    for (op, res) in ops.into_iter().zip(cases) {
        let f = encode_response(op, Ok(res.clone()), corr);
        assert_eq!(f.opcode, op | OK_BIT);
        assert_eq!(decode_response(&f).unwrap(), res);
    }
    for kind in [
        ProxyErrorKind::InvocationParameter,
        ProxyErrorKind::VariableNotFound,
        ProxyErrorKind::ServiceInvocation,
        ProxyErrorKind::ProxyAdmin,
    ] {
        let f = encode_response(opcode::INVOKE, Err(ProxyError::new(kind, "détail")), corr);
        assert_eq!(f.opcode, ERROR_OPCODE);
        assert_eq!(f.body[0], kind.code());
        let err = decode_response(&f).unwrap_err();
        assert_eq!((err.kind, err.detail.as_str()), (kind, "détail"));
    }
}

#[test]
fn frame_layout_is_stable() {
    let f = Frame { opcode: opcode::LIST_SERVICES, correlation: [0xAB; 16], body: b"xyz".to_vec() };
    let mut buf = Vec::new();
    write_frame(&mut buf, &f).unwrap();
    assert_eq!(&buf[..4], &21u32.to_be_bytes());
    assert_eq!(buf[4], VERSION);
    assert_eq!(buf[5], 9);
    assert_eq!(&buf[6..22], &[0xAB; 16]);
    assert_eq!(&buf[22..], b"xyz");
    assert!(read_frame(&mut Cursor::new(Vec::new())).unwrap().is_none());
    buf[4] = 2;
    assert!(read_frame(&mut Cursor::new(buf)).is_err());
}

#[test]
fn malformed_body_is_a_parameter_error() {
    let f = Frame { opcode: opcode::INVOKE, correlation: [0; 16], body: vec![0, 0, 0, 2, b'{', b'x'] };
    assert_eq!(decode_request(&f).unwrap_err().kind, ProxyErrorKind::InvocationParameter);
    let mut f = encode_request(Request::ListServices, [0; 16]);
    f.opcode = opcode::FLUSH;
    assert_eq!(decode_request(&f).unwrap_err().kind, ProxyErrorKind::InvocationParameter);
}

/// A client written against the frame format alone, without the crate's
/// client, talking to a live server.
#[test]
fn hand_built_frames_against_a_live_server() {
    let proxy = Arc::new(Proxy::new(ProxyConfig::new("a")).unwrap());
    proxy.add_behavior(preset_behavior("patterns", "grow").unwrap()).unwrap();
    let server = ProxyServer::bind("127.0.0.1:0", proxy).unwrap();
    let mut s = TcpStream::connect(server.addr()).unwrap();

    let send = |s: &mut TcpStream, op: u8, json: &str, sections: &[&[u8]]| {
        let mut body = (json.len() as u32).to_be_bytes().to_vec();
        body.extend_from_slice(json.as_bytes());
        for sec in sections {
            body.extend_from_slice(&(sec.len() as u64).to_be_bytes());
            body.extend_from_slice(sec);
        }
        let mut frame = ((18 + body.len()) as u32).to_be_bytes().to_vec();
        frame.extend_from_slice(&[1, op]);
        frame.extend_from_slice(&[op; 16]);
        frame.extend_from_slice(&body);
        s.write_all(&frame).unwrap();
    };
    let recv = |s: &mut TcpStream| -> (u8, [u8; 16], Vec<u8>) {
        let mut len = [0u8; 4];
        s.read_exact(&mut len).unwrap();
        let mut rest = vec![0u8; u32::from_be_bytes(len) as usize];
        s.read_exact(&mut rest).unwrap();
        assert_eq!(rest[0], 1);
        (rest[1], rest[2..18].try_into().unwrap(), rest[18..].to_vec())
    };
    let json_of = |body: &[u8]| -> serde_json::Value {
        let n = u32::from_be_bytes(body[..4].try_into().unwrap()) as usize;
        serde_json::from_slice(&body[4..4 + n]).unwrap()
    };

    send(&mut s, 9, r#"{"op":"list_services"}"#, &[]);
    let (op, corr, body) = recv(&mut s);
    assert_eq!((op, corr), (9 | 0x80, [9; 16]));
    assert_eq!(json_of(&body)["names"], serde_json::json!(["grow"]));

    send(&mut s, 2, r#"{"op":"upload","payloads":[{"kind":"bytes","len":5}]}"#, &[b"hello"]);
    let (op, _, body) = recv(&mut s);
    assert_eq!(op, 2 | 0x80);
    let refs = json_of(&body);
    assert_eq!(refs["refs"][0]["size_bytes"], 5);
    let id = refs["refs"][0]["id"].as_str().unwrap().to_owned();

    send(&mut s, 2, r#"{"op":"upload","payloads":[]}"#, &[]);
    let (op, _, body) = recv(&mut s);
    assert_eq!((op, body[0]), (0xFF, 1));

    send(&mut s, 5, &format!(r#"{{"op":"return_data","ids":["{id}"]}}"#), &[]);
    let (_, _, body) = recv(&mut s);
    let n = u32::from_be_bytes(body[..4].try_into().unwrap()) as usize;
    let sec = &body[4 + n..];
    assert_eq!(u64::from_be_bytes(sec[..8].try_into().unwrap()), 5);
    assert_eq!(&sec[8..], b"hello");
}

#[test]
fn unknown_version_closes_the_connection() {
    let server = ProxyServer::bind("127.0.0.1:0", Arc::new(Proxy::new(ProxyConfig::new("a")).unwrap())).unwrap();
    let mut s = TcpStream::connect(server.addr()).unwrap();
    let mut frame = 18u32.to_be_bytes().to_vec();
    frame.extend_from_slice(&[2, opcode::LIST_SERVICES]);
    frame.extend_from_slice(&[0; 16]);
    s.write_all(&frame).unwrap();
    let mut buf = [0u8; 1];
    assert_eq!(s.read(&mut buf).unwrap(), 0);
}
