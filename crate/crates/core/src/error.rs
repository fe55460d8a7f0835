use crate::concepts::ConceptError;
use crate::eval::EvalError;
use crate::io::IoError;
use crate::lexicon::LexiconError;
use crate::segmenter::SegmentError;
use crate::sentiment::SentimentError;
use crate::simcluster::SimilarityError;
use crate::synth::SynthError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Any failure raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Concepts(#[from] ConceptError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl Error {
    /// True when the failure came from the filesystem rather than from the data.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Lexicon(LexiconError::Io(_))
                | Error::Concepts(ConceptError::Io(_))
                | Error::Segment(SegmentError::Io(_))
                | Error::Similarity(SimilarityError::Io(_))
                | Error::Synth(SynthError::Io(_))
        )
    }
}
