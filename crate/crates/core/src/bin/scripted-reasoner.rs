//! Fake external reasoner for protocol tests.
//!
//! `scripted-reasoner MODE [--after N] [--log FILE]`
//!
//! Answers the first N requests with the heuristic, then misbehaves as MODE
//! says: `heuristic` never does, `bad-index` names candidates and nodes that
//! do not exist, `malformed` writes garbage, `wrong-id` answers another
//! request, `schema` sends an unparseable result and `timeout` stops replying.

use std::fs::OpenOptions;
use std::io::{self, BufRead, Write};
use std::process::ExitCode;

use retrieval_core::memory::NodeId;
use retrieval_core::reasoner::{
    decode_request, encode_response, Decision, HeuristicReasoner, HighLevelAction, PoseChoice, Reasoner, ReasonerRequest,
    ReasonerResponse,
};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Heuristic,
    BadIndex,
    Malformed,
    WrongId,
    Schema,
    Timeout,
}

fn parse_mode(s: &str) -> Option<Mode> {
    Some(match s {
        "heuristic" => Mode::Heuristic,
        "bad-index" => Mode::BadIndex,
        "malformed" => Mode::Malformed,
        "wrong-id" => Mode::WrongId,
        "schema" => Mode::Schema,
        "timeout" => Mode::Timeout,
        _ => return None,
    })
}

fn out_of_range(request: &ReasonerRequest, honest: ReasonerResponse) -> ReasonerResponse {
    match request {
        ReasonerRequest::MatchInstances(p) => ReasonerResponse::Assignment(vec![Some(NodeId(u32::MAX)); p.detections.len()]),
        ReasonerRequest::InferAttributes(_) => match honest {
            ReasonerResponse::Attributes(mut a) => {
                for x in &mut a {
                    x.conf = 7.0;
                }
                ReasonerResponse::Attributes(a)
            }
            other => other,
        },
        ReasonerRequest::SelectDirection(p) => ReasonerResponse::Direction(p.candidates.len() + 5),
        ReasonerRequest::SelectPose(p) => ReasonerResponse::Pose(PoseChoice::Index(p.candidates.len() + 5)),
        ReasonerRequest::Decide(_) => {
            ReasonerResponse::Decision(Decision::act(NodeId(u32::MAX), HighLevelAction::Manipulation, "retrieve a ghost"))
        }
        // Boolean lists have no range to leave; a short list is the nearest fault.
        ReasonerRequest::InferRelationsVeto(_) => ReasonerResponse::Keep(Vec::new()),
        ReasonerRequest::HypothesizeUnknown(_) => ReasonerResponse::Confirm(Vec::new()),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut mode = None;
    let mut after = 0u64;
    let mut log = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--after" => after = it.next().and_then(|v| v.parse().ok()).unwrap_or(0),
            "--log" => log = it.next().cloned(),
            m => mode = parse_mode(m),
        }
    }
    let Some(mode) = mode else {
        eprintln!("usage: scripted-reasoner heuristic|bad-index|malformed|wrong-id|schema|timeout [--after N] [--log FILE]");
        return ExitCode::from(2);
    };
    let mut log = log.map(|p| OpenOptions::new().create(true).append(true).open(p).expect("log file opens"));
    let mut inner = HeuristicReasoner;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (n, line) in io::stdin().lock().lines().enumerate() {
        let Ok(line) = line else { break };
        let (id, request) = match decode_request(&line) {
            Ok(x) => x,
            Err(e) => {
                eprintln!("scripted-reasoner: {e}");
                return ExitCode::FAILURE;
            }
        };
        if let Some(f) = log.as_mut() {
            let _ = writeln!(f, "{}", request.variant());
        }
        let honest = inner.respond(&request).expect("heuristic always answers");
        let reply = if (n as u64) < after {
            encode_response(id, &honest)
        } else {
            match mode {
                Mode::Heuristic => encode_response(id, &honest),
                Mode::BadIndex => encode_response(id, &out_of_range(&request, honest)),
                Mode::Malformed => "{\"id\": oops".to_string(),
                Mode::WrongId => encode_response(id + 1000, &honest),
                Mode::Schema => format!("{{\"id\":{id},\"result\":{{\"bogus\":1}}}}"),
                Mode::Timeout => continue,
            }
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}
