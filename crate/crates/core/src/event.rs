//! Events, sensor geometry, validated event streams and stream slicing.

use std::fmt;
use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EventError {
    #[error("not an EVT1 blob (bad magic)")]
    BadMagic,
    #[error("unsupported EVT1 version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated header: {0} bytes")]
    TruncatedHeader(usize),
    #[error("truncated record: payload of {0} bytes is not a multiple of the record size")]
    TruncatedRecord(usize),
    #[error("header declares {declared} events but payload holds {actual}")]
    CountMismatch { declared: u64, actual: u64 },
    #[error("event {index} at ({x}, {y}) lies outside {width}x{height}")]
    OutOfBounds {
        index: usize,
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },
    #[error("event {index}: timestamp {t} regresses below {previous}")]
    NonMonotonic { index: usize, t: u64, previous: u64 },
    #[error("event {index}: invalid polarity byte {value}")]
    BadPolarity { index: usize, value: i8 },
    #[error("event {index}: non-zero padding")]
    BadPadding { index: usize },
    #[error("invalid geometry {width}x{height}")]
    InvalidGeometry { width: u16, height: u16 },
    #[error("window must be positive")]
    ZeroWindow,
    #[error("chunk size must be positive")]
    ZeroCount,
    #[error("csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for EventError {
    fn from(e: std::io::Error) -> Self {
        EventError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    /// Channel-group index: 0 for positive, 1 for negative.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
        }
    }
}

/// A single brightness-change record. `t` is in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    width: u16,
    height: u16,
}

impl SensorGeometry {
    /// DAVIS346 resolution.
    pub const DAVIS346: SensorGeometry = SensorGeometry {
        width: 346,
        height: 260,
    };

    pub fn new(width: u16, height: u16) -> Result<Self, EventError> {
        if width == 0 || height == 0 {
            return Err(EventError::InvalidGeometry { width, height });
        }
        Ok(Self { width, height })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width as usize
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height as usize
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.width() * self.height()
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        x < self.width && y < self.height
    }

    /// Row-major pixel index.
    #[inline]
    pub fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width() + x as usize
    }
}

impl fmt::Display for SensorGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Immutable, validated event sequence: in-bounds and time-ordered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Result<Self, EventError> {
        validate(&geometry, &events, 0)?;
        Ok(Self { geometry, events })
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        Self {
            geometry,
            events: Vec::new(),
        }
    }

    /// Sorts by timestamp (stable) before validating bounds.
    pub fn from_unsorted(
        geometry: SensorGeometry,
        mut events: Vec<Event>,
    ) -> Result<Self, EventError> {
        events.sort_by_key(|e| e.t);
        Self::new(geometry, events)
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_time(&self) -> Option<u64> {
        self.events.first().map(|e| e.t)
    }

    pub fn last_time(&self) -> Option<u64> {
        self.events.last().map(|e| e.t)
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Events with `start <= t < end`, found by binary search.
    pub fn time_range(&self, start: u64, end: u64) -> &[Event] {
        let lo = self.events.partition_point(|e| e.t < start);
        let hi = self.events.partition_point(|e| e.t < end);
        &self.events[lo..hi.max(lo)]
    }

    fn sub(&self, events: &[Event]) -> EventStream {
        EventStream {
            geometry: self.geometry,
            events: events.to_vec(),
        }
    }
}

fn validate(
    geometry: &SensorGeometry,
    events: &[Event],
    tolerance_us: u64,
) -> Result<(), EventError> {
    let mut latest = 0u64;
    for (index, e) in events.iter().enumerate() {
        if !geometry.contains(e.x, e.y) {
            return Err(EventError::OutOfBounds {
                index,
                x: e.x,
                y: e.y,
                width: geometry.width,
                height: geometry.height,
            });
        }
        if e.t.saturating_add(tolerance_us) < latest {
            return Err(EventError::NonMonotonic {
                index,
                t: e.t,
                previous: latest,
            });
        }
        latest = latest.max(e.t);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// EVT1 binary format

pub const EVT1_MAGIC: &[u8; 4] = b"EVT1";
pub const EVT1_VERSION: u16 = 1;
pub const EVT1_HEADER_LEN: usize = 18;
pub const EVT1_RECORD_LEN: usize = 16;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Largest timestamp regression (µs) accepted. Accepted regressions are
    /// re-sorted so the resulting stream is still time-ordered.
    pub tolerance_us: u64,
}

pub fn parse_stream(bytes: &[u8]) -> Result<EventStream, EventError> {
    parse_stream_with(bytes, ParseOptions::default())
}

pub fn parse_stream_with(bytes: &[u8], opts: ParseOptions) -> Result<EventStream, EventError> {
    if bytes.len() < 4 || &bytes[..4] != EVT1_MAGIC {
        return Err(EventError::BadMagic);
    }
    if bytes.len() < EVT1_HEADER_LEN {
        return Err(EventError::TruncatedHeader(bytes.len()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != EVT1_VERSION {
        return Err(EventError::UnsupportedVersion(version));
    }
    let width = u16::from_le_bytes([bytes[6], bytes[7]]);
    let height = u16::from_le_bytes([bytes[8], bytes[9]]);
    let geometry = SensorGeometry::new(width, height)?;
    let declared = u64::from_le_bytes(bytes[10..18].try_into().unwrap());

    let payload = &bytes[EVT1_HEADER_LEN..];
    if !payload.len().is_multiple_of(EVT1_RECORD_LEN) {
        return Err(EventError::TruncatedRecord(payload.len()));
    }
    let actual = (payload.len() / EVT1_RECORD_LEN) as u64;
    if actual != declared {
        return Err(EventError::CountMismatch { declared, actual });
    }

    let mut events = Vec::with_capacity(actual as usize);
    let mut latest = 0u64;
    let mut needs_sort = false;
    for (index, rec) in payload.chunks_exact(EVT1_RECORD_LEN).enumerate() {
        let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([rec[8], rec[9]]);
        let y = u16::from_le_bytes([rec[10], rec[11]]);
        let p = rec[12] as i8;
        if rec[13] | rec[14] | rec[15] != 0 {
            return Err(EventError::BadPadding { index });
        }
        let polarity = Polarity::from_i8(p).ok_or(EventError::BadPolarity { index, value: p })?;
        if x >= width || y >= height {
            return Err(EventError::OutOfBounds {
                index,
                x,
                y,
                width,
                height,
            });
        }
        if t < latest {
            if t.saturating_add(opts.tolerance_us) < latest {
                return Err(EventError::NonMonotonic {
                    index,
                    t,
                    previous: latest,
                });
            }
            needs_sort = true;
        } else {
            latest = t;
        }
        events.push(Event { t, x, y, polarity });
    }
    if needs_sort {
        events.sort_by_key(|e| e.t);
    }
    Ok(EventStream { geometry, events })
}

pub fn serialize_stream(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(EVT1_HEADER_LEN + stream.len() * EVT1_RECORD_LEN);
    write_header(&mut out, stream.geometry, stream.len() as u64);
    for e in &stream.events {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.polarity.as_i8() as u8);
        out.extend_from_slice(&[0, 0, 0]);
    }
    out
}

fn write_header(out: &mut Vec<u8>, geometry: SensorGeometry, count: u64) {
    out.extend_from_slice(EVT1_MAGIC);
    out.extend_from_slice(&EVT1_VERSION.to_le_bytes());
    out.extend_from_slice(&geometry.width.to_le_bytes());
    out.extend_from_slice(&geometry.height.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
}

pub fn read_stream_file(path: &std::path::Path) -> Result<EventStream, EventError> {
    let bytes = std::fs::read(path)?;
    parse_stream(&bytes)
}

pub fn write_stream_file(path: &std::path::Path, stream: &EventStream) -> Result<(), EventError> {
    std::fs::write(path, serialize_stream(stream))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV text path

pub const CSV_HEADER: &str = "t_us,x,y,p";

pub fn write_csv<W: Write>(stream: &EventStream, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for e in &stream.events {
        writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.polarity.as_i8())?;
    }
    Ok(())
}

/// Reads `t_us,x,y,p` lines. Geometry is not part of the CSV and must be supplied.
pub fn read_csv<R: BufRead>(geometry: SensorGeometry, r: R) -> Result<EventStream, EventError> {
    let mut events = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || (i == 0 && trimmed == CSV_HEADER) {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(EventError::Csv {
                line: line_no,
                reason: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let bad = |what: &str| EventError::Csv {
            line: line_no,
            reason: format!("bad {what}"),
        };
        let t: u64 = fields[0].parse().map_err(|_| bad("timestamp"))?;
        let x: u16 = fields[1].parse().map_err(|_| bad("x"))?;
        let y: u16 = fields[2].parse().map_err(|_| bad("y"))?;
        let p: i8 = fields[3].parse().map_err(|_| bad("polarity"))?;
        let polarity = Polarity::from_i8(p).ok_or_else(|| bad("polarity"))?;
        events.push(Event { t, x, y, polarity });
    }
    EventStream::new(geometry, events)
}

// ---------------------------------------------------------------------------
// Slicing

/// One constant-time window `[start, end)` and the events inside it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeSlice {
    pub start: u64,
    pub end: u64,
    pub stream: EventStream,
}

/// Partitions the stream into half-open windows of `window_us` starting at
/// `origin_us`. Windows run up to the one containing the last event, empty
/// windows in between included. Events before the origin are dropped.
pub fn slice_constant_time(
    stream: &EventStream,
    window_us: u64,
    origin_us: u64,
) -> Result<Vec<TimeSlice>, EventError> {
    if window_us == 0 {
        return Err(EventError::ZeroWindow);
    }
    let last = match stream.last_time() {
        Some(t) if t >= origin_us => t,
        _ => return Ok(Vec::new()),
    };
    let n = ((last - origin_us) / window_us + 1) as usize;
    Ok(window_bounds(origin_us, window_us, n)
        .map(|(start, end)| TimeSlice {
            start,
            end,
            stream: stream.sub(stream.time_range(start, end)),
        })
        .collect())
}

/// `n` consecutive `[start, end)` windows.
pub fn window_bounds(origin_us: u64, window_us: u64, n: usize) -> impl Iterator<Item = (u64, u64)> {
    (0..n as u64).map(move |k| (origin_us + k * window_us, origin_us + (k + 1) * window_us))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountChunk {
    pub stream: EventStream,
    /// Set on a trailing chunk holding fewer than the requested count.
    pub partial: bool,
}

pub fn slice_constant_count(stream: &EventStream, n: usize) -> Result<Vec<CountChunk>, EventError> {
    if n == 0 {
        return Err(EventError::ZeroCount);
    }
    Ok(stream
        .events
        .chunks(n)
        .map(|c| CountChunk {
            stream: stream.sub(c),
            partial: c.len() < n,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo() -> SensorGeometry {
        SensorGeometry::DAVIS346
    }

    fn ev(t: u64) -> Event {
        Event::new(t, 1, 2, Polarity::Positive)
    }

    #[test]
    fn header_only_blob_is_empty_stream() {
        let blob = serialize_stream(&EventStream::empty(geo()));
        assert_eq!(blob.len(), EVT1_HEADER_LEN);
        let s = parse_stream(&blob).unwrap();
        assert!(s.is_empty());
        assert_eq!((s.geometry().width(), s.geometry().height()), (346, 260));
    }

    #[test]
    fn single_record() {
        let s = EventStream::new(geo(), vec![Event::new(1000, 0, 0, Polarity::Positive)]).unwrap();
        let blob = serialize_stream(&s);
        assert_eq!(blob.len(), EVT1_HEADER_LEN + 16);
        let back = parse_stream(&blob).unwrap();
        assert_eq!(back.events(), &[Event::new(1000, 0, 0, Polarity::Positive)]);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_stream(b"NOPE123456789012345"),
            Err(EventError::BadMagic)
        );
        assert_eq!(parse_stream(b"EV"), Err(EventError::BadMagic));
        assert!(matches!(
            parse_stream(b"EVT1\x01\x00"),
            Err(EventError::TruncatedHeader(6))
        ));

        let s = EventStream::new(geo(), vec![ev(5)]).unwrap();
        let mut blob = serialize_stream(&s);
        blob.pop();
        assert_eq!(parse_stream(&blob), Err(EventError::TruncatedRecord(15)));

        let mut blob = serialize_stream(&s);
        blob[EVT1_HEADER_LEN + 8] = 0xff; // x = 0x..ff
        blob[EVT1_HEADER_LEN + 9] = 0xff;
        assert!(matches!(
            parse_stream(&blob),
            Err(EventError::OutOfBounds { index: 0, .. })
        ));

        let mut blob = serialize_stream(&s);
        blob[EVT1_HEADER_LEN + 12] = 0;
        assert!(matches!(
            parse_stream(&blob),
            Err(EventError::BadPolarity { value: 0, .. })
        ));

        let mut blob = serialize_stream(&s);
        blob[EVT1_HEADER_LEN + 14] = 1;
        assert!(matches!(
            parse_stream(&blob),
            Err(EventError::BadPadding { index: 0 })
        ));

        let mut blob = serialize_stream(&s);
        blob[10] = 2;
        assert!(matches!(
            parse_stream(&blob),
            Err(EventError::CountMismatch {
                declared: 2,
                actual: 1
            })
        ));
    }

    #[test]
    fn regression_tolerance() {
        // bypass EventStream::new to construct an out-of-order blob
        let raw = EventStream {
            geometry: geo(),
            events: vec![ev(10), ev(8), ev(12)],
        };
        let blob = serialize_stream(&raw);
        assert!(matches!(
            parse_stream(&blob),
            Err(EventError::NonMonotonic {
                index: 1,
                t: 8,
                previous: 10
            })
        ));
        let s = parse_stream_with(&blob, ParseOptions { tolerance_us: 2 }).unwrap();
        let ts: Vec<u64> = s.events().iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![8, 10, 12]);
        assert!(parse_stream_with(&blob, ParseOptions { tolerance_us: 1 }).is_err());
    }

    #[test]
    fn equal_timestamps_allowed() {
        assert!(EventStream::new(geo(), vec![ev(3), ev(3), ev(3)]).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let s = EventStream::new(
            geo(),
            vec![ev(1), Event::new(4, 345, 259, Polarity::Negative)],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        let back = read_csv(geo(), buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert!(matches!(
            read_csv(geo(), "t_us,x,y,p\n1,2,3\n".as_bytes()),
            Err(EventError::Csv { line: 2, .. })
        ));
    }

    #[test]
    fn constant_time_example() {
        let s = EventStream::new(geo(), vec![ev(5_000), ev(15_000), ev(25_000)]).unwrap();
        let slices = slice_constant_time(&s, 20_000, 0).unwrap();
        assert_eq!(slices.len(), 2);
        let ts: Vec<Vec<u64>> = slices
            .iter()
            .map(|sl| sl.stream.events().iter().map(|e| e.t).collect())
            .collect();
        assert_eq!(ts, vec![vec![5_000, 15_000], vec![25_000]]);
        assert_eq!((slices[1].start, slices[1].end), (20_000, 40_000));
    }

    #[test]
    fn constant_time_edges() {
        assert!(slice_constant_time(&EventStream::empty(geo()), 10, 0)
            .unwrap()
            .is_empty());
        assert_eq!(
            slice_constant_time(&EventStream::empty(geo()), 0, 0),
            Err(EventError::ZeroWindow)
        );
        // events before the origin are dropped
        let s = EventStream::new(geo(), vec![ev(1), ev(50), ev(60)]).unwrap();
        let slices = slice_constant_time(&s, 100, 40).unwrap();
        assert_eq!(slices.len(), 1);
        assert_eq!(slices[0].stream.len(), 2);
    }

    #[test]
    fn constant_count_examples() {
        let s = EventStream::new(geo(), (0..10).map(ev).collect()).unwrap();
        let c = slice_constant_count(&s, 5).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|c| !c.partial && c.stream.len() == 5));

        let s = EventStream::new(geo(), (0..7).map(ev).collect()).unwrap();
        let c = slice_constant_count(&s, 5).unwrap();
        assert_eq!(
            c.iter()
                .map(|c| (c.stream.len(), c.partial))
                .collect::<Vec<_>>(),
            vec![(5, false), (2, true)]
        );
        assert_eq!(slice_constant_count(&s, 0), Err(EventError::ZeroCount));
    }
}
