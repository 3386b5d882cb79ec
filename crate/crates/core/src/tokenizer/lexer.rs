//! Lossless C lexer. Comments and string literals are kept as whole tokens,
//! whitespace is recorded as separators so the source can be rebuilt exactly.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Identifier,
    Number,
    StringLiteral,
    CharLiteral,
    Comment,
    Punctuator,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexDiagnostic {
    /// Byte offset of the offending token.
    pub offset: usize,
    pub message: String,
}

/// Lexemes of one program. `separators[i]` is the whitespace preceding
/// `tokens[i]`; the final separator is trailing whitespace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub kinds: Vec<TokenKind>,
    pub separators: Vec<String>,
    pub diagnostics: Vec<LexDiagnostic>,
}

impl TokenSequence {
    /// Builds a sequence from bare tokens joined by single spaces.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let n = tokens.len();
        let mut separators = vec![" ".to_owned(); n + 1];
        separators[0].clear();
        separators[n].clear();
        TokenSequence {
            kinds: vec![TokenKind::Other; n],
            tokens,
            separators,
            diagnostics: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Re-concatenates tokens and separators.
    pub fn join(&self) -> String {
        let cap = self.tokens.iter().chain(&self.separators).map(String::len).sum();
        let mut out = String::with_capacity(cap);
        for (sep, tok) in self.separators.iter().zip(&self.tokens) {
            out.push_str(sep);
            out.push_str(tok);
        }
        if let Some(last) = self.separators.last() {
            out.push_str(last);
        }
        out
    }
}

const PUNCTUATORS: &[&str] = &[
    "%:%:", "...", "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||",
    "*=", "/=", "%=", "+=", "-=", "&=", "^=", "|=", "##", "<:", ":>", "<%", "%>", "%:", "[", "]",
    "(", ")", "{", "}", ".", "&", "*", "+", "-", "~", "!", "/", "%", "<", ">", "^", "|", "?", ":",
    ";", "=", ",", "#",
];

fn is_space(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\n' | '\r' | '\x0b' | '\x0c')
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric()
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    out: TokenSequence,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    /// Advances while `pred` holds and returns the new position.
    fn scan_while(&mut self, mut pred: impl FnMut(char) -> bool) -> usize {
        let end = self
            .rest()
            .char_indices()
            .find(|&(_, c)| !pred(c))
            .map_or(self.src.len(), |(i, _)| self.pos + i);
        self.pos = end;
        end
    }

    fn diag(&mut self, offset: usize, message: &str) {
        self.out.diagnostics.push(LexDiagnostic {
            offset,
            message: message.to_owned(),
        });
    }

    fn quoted(&mut self, start: usize, quote: char) -> TokenKind {
        // self.pos sits on the opening quote
        self.pos += quote.len_utf8();
        let mut escaped = false;
        loop {
            match self.peek() {
                None => {
                    self.diag(start, "unterminated literal at end of file");
                    break;
                }
                Some('\n') => {
                    self.diag(start, "unterminated literal at end of line");
                    break;
                }
                Some(c) => {
                    self.pos += c.len_utf8();
                    if escaped {
                        escaped = false;
                    } else if c == '\\' {
                        escaped = true;
                    } else if c == quote {
                        break;
                    }
                }
            }
        }
        if quote == '"' {
            TokenKind::StringLiteral
        } else {
            TokenKind::CharLiteral
        }
    }

    fn number(&mut self) {
        let mut prev = '\0';
        self.scan_while(|c| {
            let ok = c.is_ascii_alphanumeric()
                || c == '_'
                || c == '.'
                || c == '\''
                || (matches!(c, '+' | '-') && matches!(prev, 'e' | 'E' | 'p' | 'P'));
            prev = c;
            ok
        });
    }

    fn next_token(&mut self) -> TokenKind {
        let start = self.pos;
        let rest = self.rest();
        let c = self.peek().expect("called with input remaining");

        if rest.starts_with("/*") {
            match rest[2..].find("*/") {
                Some(i) => self.pos += 2 + i + 2,
                None => {
                    self.pos = self.src.len();
                    self.diag(start, "unterminated block comment");
                }
            }
            return TokenKind::Comment;
        }
        if rest.starts_with("//") {
            self.scan_while(|c| c != '\n');
            return TokenKind::Comment;
        }
        if c == '"' || c == '\'' {
            return self.quoted(start, c);
        }
        if is_ident_start(c) {
            self.scan_while(is_ident_continue);
            let word = &self.src[start..self.pos];
            if matches!(word, "L" | "u" | "U" | "u8") {
                if let Some(q @ ('"' | '\'')) = self.peek() {
                    return self.quoted(start, q);
                }
            }
            return TokenKind::Identifier;
        }
        if c.is_ascii_digit() || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) {
            self.number();
            return TokenKind::Number;
        }
        if let Some(p) = PUNCTUATORS.iter().find(|p| rest.starts_with(**p)) {
            self.pos += p.len();
            return TokenKind::Punctuator;
        }
        self.pos += c.len_utf8();
        TokenKind::Other
    }

    fn run(mut self) -> TokenSequence {
        loop {
            let sep_start = self.pos;
            self.scan_while(is_space);
            self.out.separators.push(self.src[sep_start..self.pos].to_owned());
            if self.pos >= self.src.len() {
                break;
            }
            let start = self.pos;
            let kind = self.next_token();
            self.out.tokens.push(self.src[start..self.pos].to_owned());
            self.out.kinds.push(kind);
        }
        self.out
    }
}

/// Splits C source into lexemes. Never fails; malformed literals and
/// comments are closed at end of line/file with a diagnostic.
pub fn lex_c(source: &str) -> TokenSequence {
    Lexer {
        src: source,
        pos: 0,
        out: TokenSequence::default(),
    }
    .run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_declaration() {
        let t = lex_c("int a = 1;");
        assert_eq!(t.tokens, ["int", "a", "=", "1", ";"]);
        assert_eq!(t.join(), "int a = 1;");
    }

    #[test]
    fn comment_is_one_token() {
        let t = lex_c("/* hw */ x++;");
        assert_eq!(t.tokens, ["/* hw */", "x", "++", ";"]);
        assert_eq!(t.kinds[0], TokenKind::Comment);
    }

    #[test]
    fn literals_and_operators() {
        let src = "s = L\"a\\\"b\"; c = 'x'; p->q >>= 0x1Fu + 1.5e-3; // done\n#include <a.h>";
        let t = lex_c(src);
        assert_eq!(
            t.tokens,
            [
                "s", "=", "L\"a\\\"b\"", ";", "c", "=", "'x'", ";", "p", "->", "q", ">>=", "0x1Fu",
                "+", "1.5e-3", ";", "// done", "#", "include", "<", "a", ".", "h", ">"
            ]
        );
        assert_eq!(t.join(), src);
        assert!(t.diagnostics.is_empty());
    }

    #[test]
    fn unterminated_string_stops_at_newline() {
        let src = "x = \"abc\ny;";
        let t = lex_c(src);
        assert_eq!(t.tokens, ["x", "=", "\"abc", "y", ";"]);
        assert_eq!(t.diagnostics.len(), 1);
        assert_eq!(t.join(), src);
    }

    #[test]
    fn unterminated_comment_runs_to_eof() {
        let t = lex_c("a /* open");
        assert_eq!(t.tokens, ["a", "/* open"]);
        assert_eq!(t.diagnostics[0].offset, 2);
    }

    #[test]
    fn whitespace_only_and_empty() {
        assert!(lex_c("").is_empty());
        let t = lex_c(" \n\t");
        assert!(t.is_empty());
        assert_eq!(t.join(), " \n\t");
    }

    proptest! {
        #[test]
        fn lexing_is_lossless(src in "\\PC{0,200}") {
            let t = lex_c(&src);
            prop_assert_eq!(t.join(), src);
            prop_assert!(t.tokens.iter().all(|s| !s.is_empty()));
            prop_assert_eq!(t.separators.len(), t.tokens.len() + 1);
        }

        #[test]
        fn c_like_text_is_lossless(src in "[a-z0-9_ \\n\\t;(){}+*/\"'<>=.#-]{0,300}") {
            prop_assert_eq!(lex_c(&src).join(), src);
        }
    }
}
