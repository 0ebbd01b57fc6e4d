// Minimal XML element parser — just enough for detection annotation files.
//
// Supported: nested elements, attributes, character data with the five
// standard named entities, comments, an optional leading <?xml?> declaration,
// and self-closing tags. Not supported (rejected, never misparsed): CDATA,
// DOCTYPE, processing instructions after the prolog. Every error message
// names the element or offset involved so malformed annotations are easy to
// track down.
#pragma once

#include <cctype>
#include <cstddef>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mixdet {

struct XmlElement {
  std::string name;
  std::string text;  // trimmed concatenation of direct character data
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<XmlElement> children;

  const XmlElement* child(const std::string& child_name) const {
    for (const XmlElement& c : children) {
      if (c.name == child_name) return &c;
    }
    return nullptr;
  }

  /// First child with the given name; throws naming both elements otherwise.
  const XmlElement& require(const std::string& child_name) const {
    const XmlElement* c = child(child_name);
    if (c == nullptr) {
      throw std::runtime_error("xml: missing required element <" + child_name +
                               "> inside <" + name + ">");
    }
    return *c;
  }

  std::vector<const XmlElement*> children_named(const std::string& child_name) const {
    std::vector<const XmlElement*> out;
    for (const XmlElement& c : children) {
      if (c.name == child_name) out.push_back(&c);
    }
    return out;
  }
};

namespace detail {

struct XmlCursor {
  const std::string& s;
  std::size_t i = 0;

  bool eof() const { return i >= s.size(); }
  char peek() const { return s[i]; }
  bool starts_with(const char* lit) const { return s.compare(i, std::strlen(lit), lit) == 0; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error("xml parse error at offset " + std::to_string(i) + ": " + msg);
  }

  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  }

  /// Skip past the literal `end`, failing with `what` if it never appears.
  void skip_until(const char* end, const char* what) {
    const std::size_t found = s.find(end, i);
    if (found == std::string::npos) fail(std::string("unterminated ") + what);
    i = found + std::strlen(end);
  }
};

inline bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
         c == '.' || c == ':';
}

inline std::string read_name(XmlCursor& cur) {
  const std::size_t start = cur.i;
  while (!cur.eof() && is_name_char(cur.peek())) ++cur.i;
  if (cur.i == start) cur.fail("expected a name");
  return cur.s.substr(start, cur.i - start);
}

inline void append_decoded(XmlCursor& cur, const std::string& elem,
                           std::size_t begin, std::size_t end, std::string& out) {
  for (std::size_t j = begin; j < end; ++j) {
    const char c = cur.s[j];
    if (c != '&') {
      out.push_back(c);
      continue;
    }
    const std::size_t semi = cur.s.find(';', j);
    if (semi == std::string::npos || semi > end) {
      throw std::runtime_error("xml parse error at offset " + std::to_string(j) +
                               ": unterminated entity in <" + elem + ">");
    }
    const std::string ent = cur.s.substr(j + 1, semi - j - 1);
    if (ent == "lt") out.push_back('<');
    else if (ent == "gt") out.push_back('>');
    else if (ent == "amp") out.push_back('&');
    else if (ent == "quot") out.push_back('"');
    else if (ent == "apos") out.push_back('\'');
    else {
      throw std::runtime_error("xml parse error at offset " + std::to_string(j) +
                               ": unknown entity &" + ent + "; in <" + elem + ">");
    }
    j = semi;
  }
}

inline std::string trim_copy(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline XmlElement parse_element(XmlCursor& cur) {
  if (cur.eof() || cur.peek() != '<') cur.fail("expected '<'");
  ++cur.i;
  XmlElement elem;
  elem.name = read_name(cur);

  // Attributes until '>', '/>' or end of input.
  for (;;) {
    cur.skip_ws();
    if (cur.eof()) cur.fail("unterminated start tag <" + elem.name + ">");
    if (cur.starts_with("/>")) {
      cur.i += 2;
      return elem;
    }
    if (cur.peek() == '>') {
      ++cur.i;
      break;
    }
    std::string attr_name = read_name(cur);
    cur.skip_ws();
    if (cur.eof() || cur.peek() != '=') {
      cur.fail("expected '=' after attribute '" + attr_name + "' in <" + elem.name + ">");
    }
    ++cur.i;
    cur.skip_ws();
    if (cur.eof() || (cur.peek() != '"' && cur.peek() != '\'')) {
      cur.fail("expected quoted value for attribute '" + attr_name + "' in <" +
               elem.name + ">");
    }
    const char quote = cur.peek();
    ++cur.i;
    const std::size_t vstart = cur.i;
    const std::size_t vend = cur.s.find(quote, vstart);
    if (vend == std::string::npos) {
      cur.fail("unterminated attribute value in <" + elem.name + ">");
    }
    std::string value;
    cur.i = vstart;  // report entity errors at their true offset
    append_decoded(cur, elem.name, vstart, vend, value);
    cur.i = vend + 1;
    elem.attributes.emplace_back(std::move(attr_name), std::move(value));
  }

  // Content: text runs, comments, children, then the matching close tag.
  std::string raw_text;
  for (;;) {
    if (cur.eof()) cur.fail("unterminated element <" + elem.name + ">");
    if (cur.starts_with("<!--")) {
      cur.skip_until("-->", "comment");
      continue;
    }
    if (cur.starts_with("</")) {
      cur.i += 2;
      const std::string closing = read_name(cur);
      if (closing != elem.name) {
        cur.fail("mismatched closing tag </" + closing + "> for <" + elem.name + ">");
      }
      cur.skip_ws();
      if (cur.eof() || cur.peek() != '>') cur.fail("malformed closing tag </" + closing + ">");
      ++cur.i;
      elem.text = trim_copy(raw_text);
      return elem;
    }
    if (cur.starts_with("<!")) cur.fail("unsupported markup inside <" + elem.name + ">");
    if (cur.starts_with("<?")) cur.fail("unexpected processing instruction inside <" + elem.name + ">");
    if (cur.peek() == '<') {
      elem.children.push_back(parse_element(cur));
      continue;
    }
    std::size_t next_tag = cur.s.find('<', cur.i);
    if (next_tag == std::string::npos) next_tag = cur.s.size();
    append_decoded(cur, elem.name, cur.i, next_tag, raw_text);
    cur.i = next_tag;
  }
}

}  // namespace detail

/// Parse a document into its root element. The optional <?xml?> declaration
/// and surrounding comments are consumed; trailing content is an error.
inline XmlElement parse_xml(const std::string& source) {
  detail::XmlCursor cur{source};
  cur.skip_ws();
  if (cur.starts_with("<?xml")) cur.skip_until("?>", "xml declaration");
  for (;;) {
    cur.skip_ws();
    if (cur.starts_with("<!--")) {
      cur.skip_until("-->", "comment");
      continue;
    }
    break;
  }
  if (cur.eof()) cur.fail("document has no root element");
  XmlElement root = detail::parse_element(cur);
  for (;;) {
    cur.skip_ws();
    if (cur.starts_with("<!--")) {
      cur.skip_until("-->", "comment");
      continue;
    }
    break;
  }
  if (!cur.eof()) cur.fail("trailing content after root element <" + root.name + ">");
  return root;
}

inline XmlElement parse_xml_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("xml: cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  try {
    return parse_xml(buf.str());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string(e.what()) + " (" + path + ")");
  }
}

/// Escape the five XML-reserved characters for use in character data or
/// attribute values.
inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace mixdet
