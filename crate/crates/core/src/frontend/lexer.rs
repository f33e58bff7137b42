//! Tokenizer for the supported Solidity subset.
//!
//! Never fails on valid UTF-8: characters it does not recognise become
//! [`TokenKind::Unknown`] tokens and the parser degrades them to Opaque nodes.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    /// `hex"..."` / `unicode"..."` literals.
    PrefixedStr,
    Punct,
    Unknown,
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'s> {
    pub kind: TokenKind,
    pub text: &'s str,
    pub start: usize,
    pub end: usize,
}

impl Token<'_> {
    pub fn is(&self, text: &str) -> bool {
        matches!(self.kind, TokenKind::Punct | TokenKind::Ident) && self.text == text
    }
}

// Longest match first.
const PUNCTS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "**", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=",
    "-=", "*=", "/=", "%=", "|=", "&=", "^=", "<<", ">>", "=>", "->", ":=", "(", ")", "{", "}",
    "[", "]", ";", ",", ".", "?", ":", "=", "+", "-", "*", "/", "%", "!", "~", "&", "|", "^",
    "<", ">",
];

pub fn tokenize(src: &str) -> Vec<Token<'_>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                i += 1;
            }
            i = (i + 2).min(bytes.len());
            continue;
        }
        let start = i;
        let kind = if is_ident_start(c) {
            while i < bytes.len() && is_ident_char(bytes[i]) {
                i += 1;
            }
            let word = &src[start..i];
            if (word == "hex" || word == "unicode") && matches!(bytes.get(i), Some(b'"' | b'\'')) {
                i = skip_string(bytes, i);
                TokenKind::PrefixedStr
            } else {
                TokenKind::Ident
            }
        } else if c.is_ascii_digit() {
            i = skip_number(bytes, i);
            TokenKind::Number
        } else if c == b'"' || c == b'\'' {
            i = skip_string(bytes, i);
            TokenKind::Str
        } else if let Some(p) = PUNCTS.iter().find(|p| src[i..].starts_with(**p)) {
            i += p.len();
            TokenKind::Punct
        } else {
            // Step over a whole UTF-8 scalar.
            let ch_len = src[i..].chars().next().map_or(1, char::len_utf8);
            i += ch_len;
            TokenKind::Unknown
        };
        out.push(Token {
            kind,
            text: &src[start..i],
            start,
            end: i,
        });
    }
    out.push(Token {
        kind: TokenKind::Eof,
        text: "",
        start: src.len(),
        end: src.len(),
    });
    out
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_' || c == b'$'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'$'
}

fn skip_number(bytes: &[u8], mut i: usize) -> usize {
    if bytes[i] == b'0' && matches!(bytes.get(i + 1), Some(b'x' | b'X')) {
        i += 2;
        while i < bytes.len() && (bytes[i].is_ascii_hexdigit() || bytes[i] == b'_') {
            i += 1;
        }
        return i;
    }
    while i < bytes.len() && (bytes[i].is_ascii_digit() || matches!(bytes[i], b'_' | b'.')) {
        // `1.field` is not a number continuation
        if bytes[i] == b'.' && !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
            break;
        }
        i += 1;
    }
    if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
        let mut j = i + 1;
        if matches!(bytes.get(j), Some(b'-')) {
            j += 1;
        }
        if bytes.get(j).is_some_and(u8::is_ascii_digit) {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    i
}

fn skip_string(bytes: &[u8], mut i: usize) -> usize {
    let quote = bytes[i];
    i += 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' => return i,
            c if c == quote => return i + 1,
            _ => i += 1,
        }
    }
    bytes.len()
}

/// Solidity keywords never treated as variable identifiers.
pub const KEYWORDS: &[&str] = &[
    "abstract", "address", "anonymous", "as", "assembly", "bool", "break", "bytes", "calldata",
    "catch", "constant", "constructor", "continue", "contract", "delete", "do", "else", "emit",
    "enum", "event", "external", "fallback", "false", "for", "function", "if", "immutable",
    "import", "indexed", "interface", "internal", "is", "library", "mapping", "memory", "modifier",
    "new", "override", "payable", "pragma", "private", "public", "pure", "receive", "return",
    "returns", "revert", "storage", "string", "struct", "true", "try", "type", "unchecked",
    "using", "view", "virtual", "while", "error", "ether", "wei", "gwei", "seconds", "minutes",
    "hours", "days", "weeks",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word) || is_elementary_type(word)
}

pub fn is_elementary_type(word: &str) -> bool {
    match word {
        "address" | "bool" | "string" | "bytes" | "byte" | "int" | "uint" | "fixed" | "ufixed" => {
            true
        }
        _ => {
            for prefix in ["uint", "int", "bytes"] {
                if let Some(rest) = word.strip_prefix(prefix) {
                    if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                        return true;
                    }
                }
            }
            false
        }
    }
}

/// Identifier-like tokens in arbitrary text, keywords excluded.
/// Used to keep taint conservative over Opaque nodes.
pub fn scan_identifiers(text: &str) -> Vec<&str> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.kind == TokenKind::Ident && !is_keyword(t.text))
        .map(|t| t.text)
        .collect()
}
