//! Lexing, subword vocabulary, masking and design-keyword expansion.

mod bpe;
mod keywords;
mod lexer;
mod masking;

pub use bpe::{
    train_bpe, train_bpe_detailed, EncodedProgram, TrainedVocabulary, SpecialIds, SubwordVocabulary, DEFAULT_MAX_LEN, DEFAULT_VOCAB_SIZE,
    END_OF_WORD,
};
pub use keywords::{expand_design_keywords, AUTOMOTIVE_SEED_KEYWORDS};
pub use lexer::{lex_c, LexDiagnostic, TokenKind, TokenSequence};
pub use masking::{mask, mask_count, MaskedProgram, DEFAULT_MASK_FRACTION};
