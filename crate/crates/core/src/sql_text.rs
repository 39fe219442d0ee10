//! Lightweight SQL text handling: pulling a statement out of a chatty model
//! reply and spotting a top-level `ORDER BY`.
//!
//! Nothing here parses SQL. The scanner only knows about quoted literals,
//! quoted identifiers, comments and parentheses.

const STATEMENT_KEYWORDS: [&str; 6] = ["SELECT", "WITH", "INSERT", "UPDATE", "DELETE", "CREATE"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenKind {
    Word,
    Symbol,
    Literal,
}

#[derive(Debug, Clone, Copy)]
struct Token {
    kind: TokenKind,
    start: usize,
    end: usize,
}

/// Splits `sql` into words, single-character symbols and quoted runs.
/// Comments and whitespace are dropped. An unterminated quote or block
/// comment runs to the end of the input.
fn tokenize(sql: &str) -> Vec<Token> {
    let bytes = sql.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b if b.is_ascii_whitespace() => i += 1,
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                    i += 1;
                }
                i = (i + 2).min(bytes.len());
            }
            b'\'' | b'"' | b'`' | b'[' => {
                let close = if b == b'[' { b']' } else { b };
                let start = i;
                i += 1;
                loop {
                    if i >= bytes.len() {
                        break;
                    }
                    if bytes[i] == close {
                        // Doubled quote is an escaped quote.
                        if close != b']' && bytes.get(i + 1) == Some(&close) {
                            i += 2;
                            continue;
                        }
                        i += 1;
                        break;
                    }
                    i += 1;
                }
                tokens.push(Token { kind: TokenKind::Literal, start, end: i });
            }
            b if b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80 => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] >= 0x80) {
                    i += 1;
                }
                tokens.push(Token { kind: TokenKind::Word, start, end: i });
            }
            _ => {
                tokens.push(Token { kind: TokenKind::Symbol, start: i, end: i + 1 });
                i += 1;
            }
        }
    }
    tokens
}

/// Byte offset just past the first semicolon outside quotes and comments.
fn statement_end(sql: &str) -> usize {
    tokenize(sql)
        .iter()
        .find(|t| t.kind == TokenKind::Symbol && &sql[t.start..t.end] == ";")
        .map(|t| t.end)
        .unwrap_or(sql.len())
}

/// Content of the first fenced code block, or the input if it has none.
fn strip_fences(raw: &str) -> &str {
    let Some(open) = raw.find("```") else {
        return raw;
    };
    let after = &raw[open + 3..];
    // The rest of the fence line is a language tag.
    let body_start = after.find('\n').map(|n| n + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Word-bounded ASCII words of `text` with their byte offsets.
fn words(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let bytes = text.as_bytes();
    let mut i = 0;
    std::iter::from_fn(move || {
        while i < bytes.len() && !is_word_byte(bytes[i]) {
            i += 1;
        }
        if i >= bytes.len() {
            return None;
        }
        let start = i;
        while i < bytes.len() && is_word_byte(bytes[i]) {
            i += 1;
        }
        Some((start, &text[start..i]))
    })
}

/// `WITH` only opens a statement when followed by `name AS` / `name (cols) AS`
/// or `RECURSIVE`; otherwise it is ordinary prose.
fn looks_like_cte(rest: &str) -> bool {
    let tokens = tokenize(rest);
    let word = |idx: usize| {
        tokens.get(idx).filter(|t| t.kind != TokenKind::Symbol).map(|t| rest[t.start..t.end].to_ascii_uppercase())
    };
    if word(0).as_deref() == Some("RECURSIVE") {
        return true;
    }
    if word(0).is_none() {
        return false;
    }
    let mut idx = 1;
    if tokens.get(idx).map(|t| &rest[t.start..t.end]) == Some("(") {
        let mut depth = 0;
        while let Some(t) = tokens.get(idx) {
            match &rest[t.start..t.end] {
                "(" => depth += 1,
                ")" => {
                    depth -= 1;
                    if depth == 0 {
                        idx += 1;
                        break;
                    }
                }
                _ => {}
            }
            idx += 1;
        }
    }
    word(idx).as_deref() == Some("AS")
}

/// Pulls the SQL statement out of an actor reply.
///
/// Code fences are stripped, then the text from the first statement keyword
/// (`SELECT`, `WITH`, `INSERT`, `UPDATE`, `DELETE`, `CREATE`, any case) up to and
/// including the first unquoted semicolon is returned. Without a keyword the
/// trimmed text is returned unchanged.
pub fn extract_sql(raw: &str) -> String {
    let text = strip_fences(raw);
    let start = words(text).find_map(|(offset, word)| {
        let upper = word.to_ascii_uppercase();
        if !STATEMENT_KEYWORDS.contains(&upper.as_str()) {
            return None;
        }
        if upper == "WITH" && !looks_like_cte(&text[offset + word.len()..]) {
            return None;
        }
        Some(offset)
    });
    match start {
        Some(offset) => {
            let statement = &text[offset..];
            statement[..statement_end(statement)].trim().to_string()
        }
        None => text.trim().to_string(),
    }
}

/// True when `sql` has an `ORDER BY` outside every parenthesis, i.e. the
/// final result is ordered.
pub fn has_top_level_order_by(sql: &str) -> bool {
    let tokens = tokenize(sql);
    let mut depth: i32 = 0;
    let mut prev_order = false;
    for token in &tokens {
        let text = &sql[token.start..token.end];
        match token.kind {
            TokenKind::Symbol => {
                match text {
                    "(" => depth += 1,
                    ")" => depth -= 1,
                    _ => {}
                }
                prev_order = false;
            }
            TokenKind::Literal => prev_order = false,
            TokenKind::Word => {
                if depth == 0 && prev_order && text.eq_ignore_ascii_case("BY") {
                    return true;
                }
                prev_order = depth == 0 && text.eq_ignore_ascii_case("ORDER");
            }
        }
    }
    false
}
