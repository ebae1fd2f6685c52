use pulldown_cmark::{CodeBlockKind, Event, Parser, Tag, TagEnd};

/// Bodies of all fenced code blocks whose info string starts with
/// `tempoql`, in document order. Other fences are ignored.
pub fn extract_code_blocks(response: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Option<String> = None;
    for event in Parser::new(response) {
        match event {
            Event::Start(Tag::CodeBlock(CodeBlockKind::Fenced(info))) => {
                let lang = info.split_whitespace().next().unwrap_or("");
                if lang.eq_ignore_ascii_case("tempoql") {
                    current = Some(String::new());
                }
            }
            Event::Text(t) => {
                if let Some(buf) = current.as_mut() {
                    buf.push_str(&t);
                }
            }
            Event::End(TagEnd::CodeBlock) => {
                if let Some(buf) = current.take() {
                    out.push(buf.strip_suffix('\n').unwrap_or(&buf).to_string());
                }
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_tempoql_fences() {
        let text = "Try this:\n```tempoql\n{Gender}\n```\nor in SQL\n```sql\nselect 1\n```\n";
        assert_eq!(extract_code_blocks(text), vec!["{Gender}"]);
    }

    #[test]
    fn inner_backticks_survive() {
        let text = "````tempoql\nextract({Note}, /```(\\w+)/)\n`x`\n````\n";
        assert_eq!(extract_code_blocks(text), vec!["extract({Note}, /```(\\w+)/)\n`x`"]);
    }

    #[test]
    fn none_and_many() {
        assert!(extract_code_blocks("no code here, just `inline`").is_empty());
        let text = "```tempoql\na\n```\n\n```\nb\n```\n\n```TempoQL\nc\n```";
        assert_eq!(extract_code_blocks(text), vec!["a", "c"]);
    }
}
