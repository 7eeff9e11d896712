//! XES event logs and the directly-follows statistics mined from them.
//!
//! Only the pieces the miner needs are modelled: one string classifier per
//! event (default `concept:name`), the trace's case id and an optional
//! timestamp. Lifecycle transitions are ignored, every event counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;
use thiserror::Error;

pub const DEFAULT_CLASSIFIER: &str = "concept:name";

#[derive(Debug, Error)]
pub enum XesError {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed XML at line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("event {event} of trace {trace} has no string attribute '{key}'")]
    MissingClassifier {
        trace: usize,
        event: usize,
        key: String,
    },
    #[error("empty activity label in event {event} of trace {trace}")]
    EmptyActivity { trace: usize, event: usize },
    #[error("debug dump line {line}: {message}")]
    Dump { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub activity: String,
    pub timestamp: Option<String>,
}

impl Event {
    pub fn new(activity: impl Into<String>) -> Self {
        Event {
            activity: activity.into(),
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub case_id: String,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn activities(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.activity.as_str())
    }
}

/// An immutable collection of traces. The alphabet is derived on construction.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventLog {
    traces: Vec<Trace>,
    alphabet: BTreeSet<String>,
}

impl EventLog {
    pub fn new(traces: Vec<Trace>) -> Self {
        let alphabet = traces
            .iter()
            .flat_map(|t| t.events.iter().map(|e| e.activity.clone()))
            .collect();
        EventLog { traces, alphabet }
    }

    /// Builds a log from plain activity sequences; case ids are the positions.
    pub fn from_sequences<S: AsRef<str>>(sequences: &[Vec<S>]) -> Self {
        let traces = sequences
            .iter()
            .enumerate()
            .map(|(i, seq)| Trace {
                case_id: i.to_string(),
                events: seq.iter().map(|a| Event::new(a.as_ref())).collect(),
            })
            .collect();
        EventLog::new(traces)
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn alphabet(&self) -> &BTreeSet<String> {
        &self.alphabet
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(|t| t.events.len()).sum()
    }

    /// Activity sequences of all traces, in log order.
    pub fn sequences(&self) -> Vec<Vec<String>> {
        self.traces
            .iter()
            .map(|t| t.events.iter().map(|e| e.activity.clone()).collect())
            .collect()
    }

    /// Line-based dump used for golden files and round-trip tests.
    ///
    /// ```text
    /// trace <case id>
    /// \t<activity>\t<timestamp or ->
    /// ```
    pub fn to_debug_string(&self) -> String {
        let mut out = String::new();
        for trace in &self.traces {
            let _ = writeln!(out, "trace {}", escape_dump(&trace.case_id));
            for event in &trace.events {
                let ts = event.timestamp.as_deref().map(escape_dump);
                let _ = writeln!(
                    out,
                    "\t{}\t{}",
                    escape_dump(&event.activity),
                    ts.as_deref().unwrap_or("-")
                );
            }
        }
        out
    }

    pub fn from_debug_str(text: &str) -> Result<Self, XesError> {
        let mut traces: Vec<Trace> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if let Some(case) = line.strip_prefix("trace ") {
                traces.push(Trace {
                    case_id: unescape_dump(case),
                    events: Vec::new(),
                });
            } else if let Some(rest) = line.strip_prefix('\t') {
                let (activity, ts) = rest.split_once('\t').ok_or_else(|| XesError::Dump {
                    line: line_no,
                    message: "expected '<activity>\\t<timestamp>'".into(),
                })?;
                let trace = traces.last_mut().ok_or_else(|| XesError::Dump {
                    line: line_no,
                    message: "event before any trace".into(),
                })?;
                trace.events.push(Event {
                    activity: unescape_dump(activity),
                    timestamp: (ts != "-").then(|| unescape_dump(ts)),
                });
            } else if !line.is_empty() {
                return Err(XesError::Dump {
                    line: line_no,
                    message: format!("unexpected line {line:?}"),
                });
            }
        }
        Ok(EventLog::new(traces))
    }
}

fn escape_dump(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '-' if s == "-" => out.push_str("\\-"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_dump(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Reads a `.xes` or `.xes.gz` file. Compression is detected from the content.
pub fn read_xes_file(path: &Path, classifier_key: &str) -> Result<EventLog, XesError> {
    let file = fs::File::open(path).map_err(|source| XesError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_xes(file, classifier_key).map_err(|e| match e {
        XesError::Io { source, .. } => XesError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

pub fn parse_xes<R: Read>(mut source: R, classifier_key: &str) -> Result<EventLog, XesError> {
    let io_err = |source| XesError::Io {
        path: "<input>".into(),
        source,
    };
    let mut raw = Vec::new();
    source.read_to_end(&mut raw).map_err(io_err)?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut inflated = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut inflated)
            .map_err(io_err)?;
        inflated
    } else {
        raw
    };
    XesParser::new(&bytes, classifier_key).run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Frame {
    Log,
    Trace,
    Event,
    Other,
}

struct XesParser<'a> {
    bytes: &'a [u8],
    classifier_key: &'a str,
    stack: Vec<Frame>,
    traces: Vec<Trace>,
    current_trace: Option<Trace>,
    current_event: Option<(Option<String>, Option<String>)>,
    saw_log: bool,
}

impl<'a> XesParser<'a> {
    fn new(bytes: &'a [u8], classifier_key: &'a str) -> Self {
        XesParser {
            bytes,
            classifier_key,
            stack: Vec::new(),
            traces: Vec::new(),
            current_trace: None,
            current_event: None,
            saw_log: false,
        }
    }

    fn malformed(&self, offset: usize, message: impl Into<String>) -> XesError {
        let offset = offset.min(self.bytes.len());
        let prefix = &self.bytes[..offset];
        let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
        let line_start = prefix
            .iter()
            .rposition(|&b| b == b'\n')
            .map_or(0, |p| p + 1);
        XesError::Malformed {
            line,
            column: offset - line_start + 1,
            message: message.into(),
        }
    }

    fn run(mut self) -> Result<EventLog, XesError> {
        let mut reader = Reader::from_reader(self.bytes);
        let mut buf = Vec::new();
        loop {
            let before = reader.buffer_position() as usize;
            let event = reader
                .read_event_into(&mut buf)
                .map_err(|e| self.malformed(reader.error_position() as usize, e.to_string()))?;
            match event {
                XmlEvent::Start(start) => {
                    let frame = self.open(&start, before)?;
                    self.stack.push(frame);
                }
                XmlEvent::Empty(start) => {
                    let frame = self.open(&start, before)?;
                    self.close(frame, before)?;
                }
                XmlEvent::End(_) => {
                    let frame = self
                        .stack
                        .pop()
                        .ok_or_else(|| self.malformed(before, "unbalanced closing tag"))?;
                    self.close(frame, before)?;
                }
                XmlEvent::Eof => {
                    if !self.stack.is_empty() {
                        return Err(self.malformed(
                            self.bytes.len(),
                            format!("unexpected end of document ({} open elements)", self.stack.len()),
                        ));
                    }
                    break;
                }
                _ => {}
            }
            buf.clear();
        }
        if !self.saw_log {
            return Err(self.malformed(0, "no <log> root element"));
        }
        Ok(EventLog::new(self.traces))
    }

    fn open(&mut self, start: &BytesStart<'_>, offset: usize) -> Result<Frame, XesError> {
        let name = start.local_name();
        let parent = self.stack.last().copied();
        let frame = match (parent, name.as_ref()) {
            (None, b"log") => {
                self.saw_log = true;
                Frame::Log
            }
            (Some(Frame::Log), b"trace") => {
                self.current_trace = Some(Trace {
                    case_id: self.traces.len().to_string(),
                    events: Vec::new(),
                });
                Frame::Trace
            }
            (Some(Frame::Trace), b"event") => {
                self.current_event = Some((None, None));
                Frame::Event
            }
            (Some(Frame::Trace), b"string") => {
                if let Some((key, value)) = self.key_value(start, offset)? {
                    if key == DEFAULT_CLASSIFIER {
                        if let Some(trace) = self.current_trace.as_mut() {
                            trace.case_id = value;
                        }
                    }
                }
                Frame::Other
            }
            (Some(Frame::Event), tag) => {
                if let Some((key, value)) = self.key_value(start, offset)? {
                    if let Some(event) = self.current_event.as_mut() {
                        if tag == b"string" && key == self.classifier_key {
                            event.0 = Some(value);
                        } else if tag == b"date" && key == "time:timestamp" {
                            event.1 = Some(value);
                        }
                    }
                }
                Frame::Other
            }
            _ => Frame::Other,
        };
        Ok(frame)
    }

    fn close(&mut self, frame: Frame, _offset: usize) -> Result<(), XesError> {
        match frame {
            Frame::Event => {
                let (activity, timestamp) = self.current_event.take().unwrap_or_default();
                let trace_index = self.traces.len();
                let trace = self
                    .current_trace
                    .as_mut()
                    .expect("event frames only open inside traces");
                let event_index = trace.events.len();
                let activity = activity.ok_or_else(|| XesError::MissingClassifier {
                    trace: trace_index,
                    event: event_index,
                    key: self.classifier_key.to_string(),
                })?;
                if activity.is_empty() {
                    return Err(XesError::EmptyActivity {
                        trace: trace_index,
                        event: event_index,
                    });
                }
                trace.events.push(Event {
                    activity,
                    timestamp,
                });
            }
            Frame::Trace => {
                if let Some(trace) = self.current_trace.take() {
                    self.traces.push(trace);
                }
            }
            Frame::Log | Frame::Other => {}
        }
        Ok(())
    }

    fn key_value(
        &self,
        start: &BytesStart<'_>,
        offset: usize,
    ) -> Result<Option<(String, String)>, XesError> {
        let mut key = None;
        let mut value = None;
        for attr in start.attributes() {
            let attr = attr.map_err(|e| self.malformed(offset, e.to_string()))?;
            let text = attr
                .unescape_value()
                .map_err(|e| self.malformed(offset, e.to_string()))?
                .into_owned();
            match attr.key.as_ref() {
                b"key" => key = Some(text),
                b"value" => value = Some(text),
                _ => {}
            }
        }
        Ok(key.zip(value))
    }
}

/// Directly-follows counts of a log. Keys are activity labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DirectlyFollowsGraph {
    pub edge_freq: BTreeMap<(String, String), u64>,
    pub start_freq: BTreeMap<String, u64>,
    pub end_freq: BTreeMap<String, u64>,
    pub activity_freq: BTreeMap<String, u64>,
}

impl DirectlyFollowsGraph {
    pub fn activities(&self) -> impl Iterator<Item = &String> {
        self.activity_freq.keys()
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edge_freq
            .contains_key(&(from.to_string(), to.to_string()))
    }

    /// Successor lists, every activity present as a key.
    pub fn successors(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut succ: BTreeMap<&str, BTreeSet<&str>> = self
            .activity_freq
            .keys()
            .map(|a| (a.as_str(), BTreeSet::new()))
            .collect();
        for (a, b) in self.edge_freq.keys() {
            succ.entry(a.as_str()).or_default().insert(b.as_str());
            succ.entry(b.as_str()).or_default();
        }
        succ
    }
}

pub fn build_dfg(log: &EventLog) -> DirectlyFollowsGraph {
    let mut dfg = DirectlyFollowsGraph::default();
    for trace in log.traces() {
        let events = &trace.events;
        if let (Some(first), Some(last)) = (events.first(), events.last()) {
            *dfg.start_freq.entry(first.activity.clone()).or_default() += 1;
            *dfg.end_freq.entry(last.activity.clone()).or_default() += 1;
        }
        for event in events {
            *dfg.activity_freq.entry(event.activity.clone()).or_default() += 1;
        }
        for pair in events.windows(2) {
            *dfg
                .edge_freq
                .entry((pair[0].activity.clone(), pair[1].activity.clone()))
                .or_default() += 1;
        }
    }
    dfg
}
