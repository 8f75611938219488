use super::SqlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// Bare word: keyword or unquoted identifier.
    Word,
    /// Backtick- or bracket-quoted identifier.
    QuotedIdent,
    /// `"..."`: an identifier when it names a column in scope, else a string.
    DoubleQuoted,
    /// `'...'` string literal.
    String,
    Number,
    Op,
    LParen,
    RParen,
    Comma,
    Dot,
    Semicolon,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Unquoted contents for quoted tokens, source text otherwise.
    pub text: String,
    /// Byte offset in the source.
    pub pos: usize,
}

impl Token {
    pub fn is_word(&self, kw: &str) -> bool {
        self.kind == TokenKind::Word && self.text.eq_ignore_ascii_case(kw)
    }

    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokenKind::Op && self.text == op
    }
}

const OPS: [&str; 14] = ["==", "!=", "<>", "<=", ">=", "||", "=", "<", ">", "+", "-", "*", "/", "%"];

pub fn tokenize(src: &str) -> Result<Vec<Token>, SqlError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if src[i..].starts_with("--") {
            i = src[i..].find('\n').map_or(bytes.len(), |n| i + n);
            continue;
        }
        if src[i..].starts_with("/*") {
            match src[i + 2..].find("*/") {
                Some(n) => i += n + 4,
                None => return Err(SqlError::lex(i, "unterminated block comment")),
            }
            continue;
        }
        let start = i;
        let simple = |kind, len: usize| Token {
            kind,
            text: src[start..start + len].to_string(),
            pos: start,
        };
        match c {
            b'(' => {
                out.push(simple(TokenKind::LParen, 1));
                i += 1;
            }
            b')' => {
                out.push(simple(TokenKind::RParen, 1));
                i += 1;
            }
            b',' => {
                out.push(simple(TokenKind::Comma, 1));
                i += 1;
            }
            b';' => {
                out.push(simple(TokenKind::Semicolon, 1));
                i += 1;
            }
            b'\'' | b'"' | b'`' => {
                let (text, end) = quoted(src, i, c as char)?;
                let kind = match c {
                    b'\'' => TokenKind::String,
                    b'"' => TokenKind::DoubleQuoted,
                    _ => TokenKind::QuotedIdent,
                };
                out.push(Token { kind, text, pos: start });
                i = end;
            }
            b'[' => {
                let Some(n) = src[i + 1..].find(']') else {
                    return Err(SqlError::lex(i, "unterminated bracket identifier"));
                };
                out.push(Token {
                    kind: TokenKind::QuotedIdent,
                    text: src[i + 1..i + 1 + n].to_string(),
                    pos: start,
                });
                i += n + 2;
            }
            b'0'..=b'9' => {
                i = number_end(bytes, i);
                out.push(simple(TokenKind::Number, i - start));
            }
            b'.' if bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => {
                i = number_end(bytes, i);
                out.push(simple(TokenKind::Number, i - start));
            }
            b'.' => {
                out.push(simple(TokenKind::Dot, 1));
                i += 1;
            }
            _ if c == b'_' || c.is_ascii_alphabetic() || c >= 0x80 => {
                let rest = &src[i..];
                let len = rest
                    .char_indices()
                    .find(|&(_, ch)| !(ch == '_' || ch == '$' || ch.is_alphanumeric()))
                    .map_or(rest.len(), |(n, _)| n);
                if len == 0 {
                    let ch = rest.chars().next().unwrap_or('?');
                    return Err(SqlError::lex(i, format!("unexpected character `{ch}`")));
                }
                out.push(simple(TokenKind::Word, len));
                i += len;
            }
            _ => {
                let Some(op) = OPS.iter().find(|op| src[i..].starts_with(**op)) else {
                    let ch = src[i..].chars().next().unwrap_or('?');
                    return Err(SqlError::lex(i, format!("unexpected character `{ch}`")));
                };
                out.push(simple(TokenKind::Op, op.len()));
                i += op.len();
            }
        }
    }
    Ok(out)
}

fn quoted(src: &str, start: usize, q: char) -> Result<(String, usize), SqlError> {
    let mut text = String::new();
    let mut chars = src[start + 1..].char_indices().peekable();
    while let Some((n, ch)) = chars.next() {
        if ch == q {
            if chars.peek().is_some_and(|&(_, c)| c == q) {
                text.push(q);
                chars.next();
                continue;
            }
            return Ok((text, start + 1 + n + 1));
        }
        text.push(ch);
    }
    Err(SqlError::lex(start, format!("unterminated {q}-quoted token")))
}

fn number_end(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(TokenKind, String)> {
        tokenize(src).unwrap().into_iter().map(|t| (t.kind, t.text)).collect()
    }

    #[test]
    fn basic_tokens() {
        use TokenKind::*;
        assert_eq!(
            kinds("SELECT T1.a, count(*) FROM t AS T1 WHERE b >= 2.5e3 AND c != 'it''s';"),
            vec![
                (Word, "SELECT".into()),
                (Word, "T1".into()),
                (Dot, ".".into()),
                (Word, "a".into()),
                (Comma, ",".into()),
                (Word, "count".into()),
                (LParen, "(".into()),
                (Op, "*".into()),
                (RParen, ")".into()),
                (Word, "FROM".into()),
                (Word, "t".into()),
                (Word, "AS".into()),
                (Word, "T1".into()),
                (Word, "WHERE".into()),
                (Word, "b".into()),
                (Op, ">=".into()),
                (Number, "2.5e3".into()),
                (Word, "AND".into()),
                (Word, "c".into()),
                (Op, "!=".into()),
                (String, "it's".into()),
                (Semicolon, ";".into()),
            ]
        );
    }

    #[test]
    fn quoted_identifiers_and_comments() {
        use TokenKind::*;
        assert_eq!(
            kinds("`Free Meal` [x y] \"v\" -- trailing\n/* block */ .5"),
            vec![
                (QuotedIdent, "Free Meal".into()),
                (QuotedIdent, "x y".into()),
                (DoubleQuoted, "v".into()),
                (Number, ".5".into()),
            ]
        );
    }

    #[test]
    fn errors_carry_position() {
        let err = tokenize("SELECT 'abc").unwrap_err();
        assert_eq!(err.position(), Some(7));
        let err = tokenize("SELECT a ? b").unwrap_err();
        assert_eq!(err.position(), Some(9));
    }
}
