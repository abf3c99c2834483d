//! Minimal XML element tree with a deterministic writer.
//!
//! Output: UTF-8, LF line endings, two-space indentation, attributes in
//! stored order. Elements holding only text are written on one line.

use quick_xml::events::Event;
use quick_xml::Reader;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XmlNode {
    /// Qualified name as written (`bpmn:task`).
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<XmlChild>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XmlChild {
    Element(XmlNode),
    Text(String),
}

impl XmlNode {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), attrs: Vec::new(), children: Vec::new() }
    }

    pub fn attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.push((key.into(), value.into()));
        self
    }

    pub fn child(mut self, node: XmlNode) -> Self {
        self.children.push(XmlChild::Element(node));
        self
    }

    pub fn text(mut self, text: impl Into<String>) -> Self {
        self.children.push(XmlChild::Text(text.into()));
        self
    }

    pub fn local_name(&self) -> &str {
        local(&self.name)
    }

    pub fn prefix(&self) -> Option<&str> {
        self.name.split_once(':').map(|(p, _)| p)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn elements(&self) -> impl Iterator<Item = &XmlNode> {
        self.children.iter().filter_map(|c| match c {
            XmlChild::Element(e) => Some(e),
            XmlChild::Text(_) => None,
        })
    }

    /// Concatenated text content of direct text children.
    pub fn text_content(&self) -> String {
        self.children
            .iter()
            .filter_map(|c| match c {
                XmlChild::Text(t) => Some(t.as_str()),
                XmlChild::Element(_) => None,
            })
            .collect()
    }

    /// Every `id` attribute in this subtree, in document order.
    pub fn collect_ids<'a>(&'a self, out: &mut Vec<&'a str>) {
        if let Some(id) = self.get("id") {
            out.push(id);
        }
        for e in self.elements() {
            e.collect_ids(out);
        }
    }
}

pub fn local(name: &str) -> &str {
    name.rsplit_once(':').map_or(name, |(_, l)| l)
}

pub fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' => out.push_str("&#10;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
    out
}

/// Serialize a document with an XML declaration.
pub fn write_document(root: &XmlNode) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    write_node(&mut out, root, 0);
    out
}

fn write_node(out: &mut String, node: &XmlNode, depth: usize) {
    let indent = "  ".repeat(depth);
    out.push_str(&indent);
    out.push('<');
    out.push_str(&node.name);
    for (k, v) in &node.attrs {
        out.push(' ');
        out.push_str(k);
        out.push_str("=\"");
        out.push_str(&escape_attr(v));
        out.push('"');
    }
    let has_elements = node.elements().next().is_some();
    let text = node.text_content();
    if !has_elements && text.is_empty() {
        out.push_str("/>\n");
        return;
    }
    out.push('>');
    if !has_elements {
        out.push_str(&escape_text(&text));
    } else {
        out.push('\n');
        for c in &node.children {
            match c {
                XmlChild::Element(e) => write_node(out, e, depth + 1),
                XmlChild::Text(t) if !t.trim().is_empty() => {
                    out.push_str(&"  ".repeat(depth + 1));
                    out.push_str(&escape_text(t.trim()));
                    out.push('\n');
                }
                XmlChild::Text(_) => {}
            }
        }
        out.push_str(&indent);
    }
    out.push_str("</");
    out.push_str(&node.name);
    out.push_str(">\n");
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XmlError {
    pub offset: u64,
    pub message: String,
}

/// Parse a document into its root element. Comments, processing instructions
/// and the declaration are dropped; whitespace-only text is dropped.
pub fn parse_document(text: &str) -> Result<XmlNode, XmlError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<XmlNode> = Vec::new();
    let mut root: Option<XmlNode> = None;
    let err = |reader: &Reader<&[u8]>, message: String| XmlError { offset: reader.buffer_position(), message };

    loop {
        let event = reader.read_event().map_err(|e| err(&reader, e.to_string()))?;
        match event {
            Event::Start(start) | Event::Empty(start) if root.is_some() => {
                let _ = start;
                return Err(err(&reader, "content after the root element".into()));
            }
            Event::Start(start) => {
                stack.push(open(&start).map_err(|m| err(&reader, m))?);
            }
            Event::Empty(start) => {
                let node = open(&start).map_err(|m| err(&reader, m))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(XmlChild::Element(node)),
                    None => root = Some(node),
                }
            }
            Event::End(_) => {
                let node = stack.pop().ok_or_else(|| err(&reader, "unbalanced end tag".into()))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(XmlChild::Element(node)),
                    None => root = Some(node),
                }
            }
            Event::Text(t) => {
                let s = t.unescape().map_err(|e| err(&reader, e.to_string()))?;
                if let Some(parent) = stack.last_mut() {
                    if !s.trim().is_empty() {
                        parent.children.push(XmlChild::Text(s.into_owned()));
                    }
                } else if !s.trim().is_empty() {
                    return Err(err(&reader, "text outside the root element".into()));
                }
            }
            Event::CData(c) => {
                let s = String::from_utf8(c.into_inner().into_owned()).map_err(|e| err(&reader, e.to_string()))?;
                if let Some(parent) = stack.last_mut() {
                    parent.children.push(XmlChild::Text(s));
                }
            }
            Event::Eof => break,
            Event::Comment(_) | Event::Decl(_) | Event::PI(_) | Event::DocType(_) => {}
        }
    }
    if !stack.is_empty() {
        return Err(XmlError { offset: reader.buffer_position(), message: "unexpected end of document".into() });
    }
    root.ok_or_else(|| XmlError { offset: 0, message: "document has no root element".into() })
}

fn open(start: &quick_xml::events::BytesStart<'_>) -> Result<XmlNode, String> {
    let name = std::str::from_utf8(start.name().as_ref()).map_err(|e| e.to_string())?.to_string();
    let mut node = XmlNode::new(name);
    for a in start.attributes() {
        let a = a.map_err(|e| e.to_string())?;
        let key = std::str::from_utf8(a.key.as_ref()).map_err(|e| e.to_string())?.to_string();
        let value = a.unescape_value().map_err(|e| e.to_string())?.into_owned();
        node.attrs.push((key, value));
    }
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_parse_is_identity() {
        let doc = XmlNode::new("a:root")
            .attr("xmlns:a", "urn:x")
            .attr("q", "1 < 2 & \"3\"")
            .child(XmlNode::new("a:leaf").attr("id", "x"))
            .child(XmlNode::new("a:text").text("hello & <bye>"));
        let text = write_document(&doc);
        assert_eq!(
            text,
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<a:root xmlns:a=\"urn:x\" q=\"1 &lt; 2 &amp; &quot;3&quot;\">\n  <a:leaf id=\"x\"/>\n  <a:text>hello &amp; &lt;bye&gt;</a:text>\n</a:root>\n"
        );
        let back = parse_document(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(write_document(&back), text);
    }

    #[test]
    fn malformed_documents() {
        assert!(parse_document("<a><b></a>").is_err());
        assert!(parse_document("<a>").is_err());
        assert!(parse_document("").is_err());
        assert!(parse_document("<a/><b/>").is_err());
    }
}
