#include "cvnn_cli/toml.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>

#include "cvnn/error.hpp"

namespace cvnn::cli {

namespace {

using json = nlohmann::json;

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  json run() {
    json root = json::object();
    json* table = &root;
    while (true) {
      skip_ws_comments_newlines();
      if (eof()) break;
      if (peek() == '[') {
        table = header(root);
      } else {
        key_value(*table);
      }
      end_of_line();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + msg);
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek(std::size_t k = 0) const { return pos_ + k < s_.size() ? s_[pos_ + k] : '\0'; }
  char next() {
    const char c = s_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    next();
  }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) next();
  }
  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') next();
  }
  void skip_ws_comments_newlines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\r' || peek() == '\n') {
        next();
        continue;
      }
      break;
    }
  }
  void end_of_line() {
    skip_ws();
    skip_comment();
    if (peek() == '\r') next();
    if (!eof() && peek() != '\n') fail("unexpected text after value");
  }

  std::string bare_or_quoted_key() {
    skip_ws();
    if (peek() == '"' || peek() == '\'') return string_value();
    std::string k;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) k += next();
    if (k.empty()) fail("expected a key");
    return k;
  }

  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{bare_or_quoted_key()};
    skip_ws();
    while (peek() == '.') {
      next();
      parts.push_back(bare_or_quoted_key());
      skip_ws();
    }
    return parts;
  }

  // Walks/creates intermediate tables; the last element of an array of tables
  // stands for the array.
  json* descend(json* t, const std::string& k) {
    if (!t->contains(k)) (*t)[k] = json::object();
    json* child = &(*t)[k];
    if (child->is_array()) {
      if (child->empty() || !child->back().is_object()) fail("key '" + k + "' is not a table");
      return &child->back();
    }
    if (!child->is_object()) fail("key '" + k + "' is not a table");
    return child;
  }

  json* header(json& root) {
    next();
    const bool array = peek() == '[';
    if (array) next();
    const auto parts = dotted_key();
    expect(']');
    if (array) expect(']');
    json* t = &root;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) t = descend(t, parts[i]);
    const std::string& last = parts.back();
    if (array) {
      if (!t->contains(last)) (*t)[last] = json::array();
      json& arr = (*t)[last];
      if (!arr.is_array()) fail("'" + last + "' is not an array of tables");
      arr.push_back(json::object());
      return &arr.back();
    }
    if (t->contains(last) && !(*t)[last].is_object()) fail("'" + last + "' redefined");
    if (!t->contains(last)) (*t)[last] = json::object();
    return &(*t)[last];
  }

  void key_value(json& table) {
    const auto parts = dotted_key();
    skip_ws();
    expect('=');
    skip_ws();
    json v = value();
    json* t = &table;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) t = descend(t, parts[i]);
    if (t->contains(parts.back())) fail("duplicate key '" + parts.back() + "'");
    (*t)[parts.back()] = std::move(v);
  }

  std::uint32_t hex_code(int digits) {
    std::uint32_t cp = 0;
    for (int i = 0; i < digits; ++i) {
      if (eof()) fail("truncated unicode escape");
      const char h = next();
      cp <<= 4;
      if (h >= '0' && h <= '9') cp |= static_cast<std::uint32_t>(h - '0');
      else if (h >= 'a' && h <= 'f') cp |= static_cast<std::uint32_t>(h - 'a' + 10);
      else if (h >= 'A' && h <= 'F') cp |= static_cast<std::uint32_t>(h - 'A' + 10);
      else fail("bad unicode escape");
    }
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) fail("invalid unicode scalar");
    return cp;
  }

  static void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }

  std::string string_value() {
    const char quote = next();
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = next();
      if (c == quote) break;
      if (c == '\\' && quote == '"') {
        const char e = next();
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          case 'u': append_utf8(out, hex_code(4)); break;
          case 'U': append_utf8(out, hex_code(8)); break;
          default: fail(std::string("unsupported escape \\") + e);
        }
        continue;
      }
      out += c;
    }
    return out;
  }

  json number_or_word() {
    std::string tok;
    while (!eof()) {
      const char c = peek();
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.' || c == '_') {
        tok += next();
      } else {
        break;
      }
    }
    if (tok.empty()) fail("expected a value");
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string t;
    for (char c : tok)
      if (c != '_') t += c;
    const bool neg = !t.empty() && t[0] == '-';
    const std::string mag = (!t.empty() && (t[0] == '+' || t[0] == '-')) ? t.substr(1) : t;
    if (mag == "inf") return neg ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    if (mag == "nan") return std::numeric_limits<double>::quiet_NaN();
    const bool is_float = t.find_first_of(".eE") != std::string::npos;
    std::size_t used = 0;
    try {
      if (is_float) {
        const double d = std::stod(t, &used);
        if (used == t.size()) return d;
      } else {
        const long long i = std::stoll(t, &used);
        if (used == t.size()) return i;
      }
    } catch (const std::exception&) {
    }
    fail("invalid value '" + tok + "'");
  }

  json array_value() {
    next();
    json arr = json::array();
    while (true) {
      skip_ws_comments_newlines();
      if (peek() == ']') {
        next();
        return arr;
      }
      arr.push_back(value());
      skip_ws_comments_newlines();
      if (peek() == ',') {
        next();
        continue;
      }
      if (peek() == ']') {
        next();
        return arr;
      }
      fail("expected ',' or ']' in array");
    }
  }

  json inline_table() {
    next();
    json t = json::object();
    skip_ws();
    if (peek() == '}') {
      next();
      return t;
    }
    while (true) {
      key_value(t);
      skip_ws();
      if (peek() == ',') {
        next();
        continue;
      }
      expect('}');
      return t;
    }
  }

  json value() {
    const char c = peek();
    if (c == '"' || c == '\'') return string_value();
    if (c == '[') return array_value();
    if (c == '{') return inline_table();
    return number_or_word();
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

nlohmann::json parse_toml(std::string_view text) { return Parser(text).run(); }

nlohmann::json parse_toml_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_toml(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace cvnn::cli
