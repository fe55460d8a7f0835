//! Event segmentation: ingestion of precomputed boundaries, a cosine-distance
//! change detector, and the minimum-length filter.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::concepts::{ImageRecord, PhotoStream};
use crate::io::{self, IoError};
use crate::lexicon::Polarity;
use crate::EventId;

#[derive(Debug, thiserror::Error)]
pub enum SegmentError {
    #[error("line {line}: malformed boundary row: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: image id `{image_id}` is not in the photostream")]
    UnknownImageId { line: usize, image_id: String },
    #[error("line {line}: label `{value}` is not one of -1, 0, 1")]
    BadLabel { line: usize, value: String },
    #[error("line {line}: event id {event_id} appears twice")]
    DuplicateEventId { line: usize, event_id: EventId },
    #[error("boundaries are not contiguous: {reason}")]
    NonContiguous { reason: String },
    #[error("invalid segmentation parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// A contiguous run of photostream images describing one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub event_id: EventId,
    pub images: Vec<ImageRecord>,
    pub gt_label: Option<Polarity>,
}

impl Event {
    pub fn new(event_id: EventId, images: Vec<ImageRecord>, gt_label: Option<Polarity>) -> Self {
        Self {
            event_id,
            images,
            gt_label,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationParams {
    /// Cosine distance above which consecutive images start a new event.
    pub boundary_threshold: f64,
    /// Events shorter than this are not analysed.
    pub min_images: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            boundary_threshold: 0.35,
            min_images: 6,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if !(0.0..=2.0).contains(&self.boundary_threshold) {
            return Err(SegmentError::InvalidParams(format!(
                "boundary_threshold {} outside [0, 2]",
                self.boundary_threshold
            )));
        }
        if self.min_images == 0 {
            return Err(SegmentError::InvalidParams("min_images must be at least 1".into()));
        }
        Ok(())
    }
}

pub const BOUNDARY_HEADER: [&str; 3] = ["event_id", "start_image_id", "end_image_id"];

/// Parses a boundaries CSV against `stream`.
///
/// Rows may appear in any order but must tile the stream exactly. A file with
/// only a header yields no events.
pub fn parse_event_boundaries(text: &str, stream: &PhotoStream) -> Result<Vec<Event>, SegmentError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| SegmentError::Malformed {
        line: 1,
        reason: e.to_string(),
    })?;
    let cols: Vec<&str> = header.iter().collect();
    let has_label = match cols.as_slice() {
        [a, b, c] if [*a, *b, *c] == BOUNDARY_HEADER => false,
        [a, b, c, "label"] if [*a, *b, *c] == BOUNDARY_HEADER => true,
        _ => {
            return Err(SegmentError::Malformed {
                line: 1,
                reason: format!("expected header `{}[,label]`", BOUNDARY_HEADER.join(",")),
            })
        }
    };
    let width = if has_label { 4 } else { 3 };

    let position: HashMap<&str, usize> = stream
        .images()
        .iter()
        .enumerate()
        .map(|(i, img)| (img.image_id.as_str(), i))
        .collect();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| SegmentError::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(SegmentError::Malformed {
                line,
                reason: format!("expected {width} columns, found {}", record.len()),
            });
        }
        let event_id: EventId = record[0].parse().map_err(|_| SegmentError::Malformed {
            line,
            reason: format!("unparsable event_id `{}`", &record[0]),
        })?;
        if !seen.insert(event_id) {
            return Err(SegmentError::DuplicateEventId { line, event_id });
        }
        let lookup = |id: &str| {
            position.get(id).copied().ok_or_else(|| SegmentError::UnknownImageId {
                line,
                image_id: id.to_string(),
            })
        };
        let start = lookup(&record[1])?;
        let end = lookup(&record[2])?;
        if end < start {
            return Err(SegmentError::NonContiguous {
                reason: format!("line {line}: event {event_id} ends before it starts"),
            });
        }
        let label = if has_label && !record[3].is_empty() {
            Some(Polarity::parse(&record[3]).ok_or_else(|| SegmentError::BadLabel {
                line,
                value: record[3].to_string(),
            })?)
        } else {
            None
        };
        rows.push((start, end, event_id, label));
    }
    if rows.is_empty() {
        return Ok(Vec::new());
    }

    rows.sort_by_key(|r| r.0);
    let mut next = 0;
    let mut events = Vec::with_capacity(rows.len());
    for (start, end, event_id, label) in rows {
        if start != next {
            let kind = if start < next { "overlap" } else { "gap" };
            return Err(SegmentError::NonContiguous {
                reason: format!("{kind} before event {event_id} (image index {next} vs {start})"),
            });
        }
        events.push(Event::new(event_id, stream.images()[start..=end].to_vec(), label));
        next = end + 1;
    }
    if next != stream.len() {
        return Err(SegmentError::NonContiguous {
            reason: format!("images {next}..{} are not covered", stream.len()),
        });
    }
    Ok(events)
}

pub fn load_event_boundaries(path: &Path, stream: &PhotoStream) -> Result<Vec<Event>, SegmentError> {
    parse_event_boundaries(&io::read_to_string(path)?, stream)
}

/// Boundaries CSV for `events`; the label column is written when any event carries a label.
pub fn boundaries_to_csv(events: &[Event]) -> String {
    let has_label = events.iter().any(|e| e.gt_label.is_some());
    let mut out = BOUNDARY_HEADER.join(",");
    if has_label {
        out.push_str(",label");
    }
    out.push('\n');
    for e in events {
        let (Some(first), Some(last)) = (e.images.first(), e.images.last()) else {
            continue;
        };
        out.push_str(&format!("{},{},{}", e.event_id, first.image_id, last.image_id));
        if has_label {
            out.push(',');
            if let Some(l) = e.gt_label {
                out.push_str(&l.to_string());
            }
        }
        out.push('\n');
    }
    out
}

pub fn save_event_boundaries(path: &Path, events: &[Event]) -> Result<(), IoError> {
    io::write_atomic(path, boundaries_to_csv(events).as_bytes())
}

/// Cosine distance between two sparse score vectors; 1.0 when either is all-zero.
pub fn cosine_distance(a: &ImageRecord, b: &ImageRecord) -> f64 {
    let (sa, sb) = (a.scores(), b.scores());
    let norm = |s: &[(u32, f64)]| s.iter().map(|&(_, p)| p * p).sum::<f64>().sqrt();
    let (na, nb) = (norm(sa), norm(sb));
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < sa.len() && j < sb.len() {
        match sa[i].0.cmp(&sb[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += sa[i].1 * sb[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// Splits `stream` wherever consecutive images are farther apart than the threshold.
pub fn segment(stream: &PhotoStream, params: &SegmentationParams) -> Vec<Event> {
    let images = stream.images();
    let mut events = Vec::new();
    let mut start = 0;
    for i in 1..=images.len() {
        let cut = i == images.len() || cosine_distance(&images[i - 1], &images[i]) > params.boundary_threshold;
        if cut {
            events.push(Event::new(events.len() as EventId, images[start..i].to_vec(), None));
            start = i;
        }
    }
    events
}

/// Keeps events with at least `min_images` images and renumbers them from zero.
pub fn filter_min_length(events: Vec<Event>, min_images: usize) -> Vec<Event> {
    events
        .into_iter()
        .filter(|e| e.len() >= min_images)
        .enumerate()
        .map(|(i, mut e)| {
            e.event_id = i as EventId;
            e
        })
        .collect()
}
