/// Pulls the SQL statement out of a model generation.
///
/// Drops code fences and any chatter before the first SELECT/WITH/INSERT,
/// cuts at the first semicolon outside quotes, turns newlines into spaces
/// and trims. Text with no SQL keyword comes back trimmed and otherwise
/// unchanged, so scoring fails it on its own merits.
pub fn extract_sql(raw: &str) -> String {
    let text = strip_fences(raw);
    let Some(start) = sql_start(&text) else {
        return flatten(&text);
    };
    let body = &text[start..];
    let end = statement_end(body).unwrap_or(body.len());
    flatten(&body[..end])
}

fn flatten(s: &str) -> String {
    s.replace("\r\n", " ").replace(['\n', '\r'], " ").trim().to_string()
}

fn strip_fences(raw: &str) -> String {
    let mut s = raw.to_string();
    while let Some(i) = s.find("```") {
        let mut end = i + 3;
        // a language tag alone on the fence line goes too
        let rest = &s[end..];
        let line_end = rest.find('\n').unwrap_or(rest.len());
        let tag = &rest[..line_end];
        if !tag.is_empty() && tag.trim_end().chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            end += line_end;
        }
        s.replace_range(i..end, " ");
    }
    s
}

fn sql_start(text: &str) -> Option<usize> {
    let lower = text.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let is_word = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    let mut i = 0;
    while i < bytes.len() {
        if is_word(bytes[i]) && (i == 0 || !is_word(bytes[i - 1])) {
            let mut j = i;
            while j < bytes.len() && is_word(bytes[j]) {
                j += 1;
            }
            match &lower[i..j] {
                "select" | "insert" => return Some(i),
                "with" if looks_like_cte(&lower[j..]) => return Some(i),
                _ => {}
            }
            i = j;
        } else {
            i += 1;
        }
    }
    None
}

/// `WITH [RECURSIVE] name [(cols)] AS`
fn looks_like_cte(after: &str) -> bool {
    let mut words = after.split_whitespace();
    let mut w = words.next();
    if w == Some("recursive") {
        w = words.next();
    }
    let Some(name) = w else { return false };
    if let Some(p) = name.find('(') {
        return p > 0 && after.contains(") as");
    }
    if !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return false;
    }
    match words.next() {
        Some("as") => true,
        Some(n) => n.starts_with('(') && after.contains(") as"),
        None => false,
    }
}

fn statement_end(body: &str) -> Option<usize> {
    let mut quote: Option<char> = None;
    for (i, c) in body.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if matches!(c, '\'' | '"' | '`') => quote = Some(c),
            None if c == ';' => return Some(i),
            None => {}
        }
    }
    None
}
