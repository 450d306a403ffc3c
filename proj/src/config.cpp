#include "umx/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace umx::config {

namespace {

class Cursor {
 public:
  Cursor(std::string_view line, const std::string& source, int number)
      : s_(line), source_(source), number_(number) {}

  void skip_space() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_space();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  bool consume(char c) {
    skip_space();
    if (peek() != c) return false;
    ++pos_;
    return true;
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, number_, what); }

  std::string bare_key() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
                                s_[pos_] == '-' || s_[pos_] == '.'))
      ++pos_;
    if (pos_ == start) fail("expected a key");
    const std::string key(s_.substr(start, pos_ - start));
    if (key.front() == '.' || key.back() == '.' || key.find("..") != std::string::npos)
      fail("malformed dotted key '" + key + "'");
    return key;
  }

  Value value() {
    skip_space();
    Value v;
    v.line = number_;
    const char c = peek();
    if (c == '"') {
      v.kind = Value::Kind::kString;
      v.text = quoted();
    } else if (c == '[') {
      ++pos_;
      v.kind = Value::Kind::kArray;
      skip_space();
      if (!consume(']')) {
        for (;;) {
          Value item = value();
          if (item.kind == Value::Kind::kArray) fail("nested arrays are not supported");
          if (!v.items.empty() && v.items.front().kind != item.kind) fail("array mixes value types");
          v.items.push_back(std::move(item));
          if (consume(',')) {
            skip_space();
            if (consume(']')) break;  // trailing comma
            continue;
          }
          if (consume(']')) break;
          fail("expected ',' or ']' in array");
        }
      }
    } else {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' && s_[pos_] != ' ' &&
             s_[pos_] != '\t')
        ++pos_;
      std::string token(s_.substr(start, pos_ - start));
      if (token.empty()) fail("expected a value");
      if (token == "true" || token == "false") {
        v.kind = Value::Kind::kBool;
        v.flag = token == "true";
        v.text = token;
      } else {
        v.kind = Value::Kind::kNumber;
        std::string digits;
        for (char ch : token)
          if (ch != '_') digits += ch;
        double d = 0.0;
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
        if (ec != std::errc() || ptr != digits.data() + digits.size() || !std::isfinite(d))
          fail("invalid value '" + token + "'");
        v.number = d;
        v.text = digits;
      }
    }
    return v;
  }

 private:
  std::string quoted() {
    ++pos_;  // opening quote
    std::string out;
    while (pos_ < s_.size()) {
      const char c = s_[pos_++];
      if (c == '"') return out;
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: fail(std::string("unknown escape \\") + e);
        }
      } else {
        out += c;
      }
    }
    fail("unterminated string");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  const std::string& source_;
  int number_;
};

const char* kind_name(Value::Kind k) {
  switch (k) {
    case Value::Kind::kNumber: return "number";
    case Value::Kind::kString: return "string";
    case Value::Kind::kBool: return "boolean";
    case Value::Kind::kArray: return "array";
  }
  return "?";
}

}  // namespace

ParseError::ParseError(const std::string& source, int line, const std::string& what)
    : std::invalid_argument(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

Document Document::parse(std::string_view text, const std::string& source) {
  Document doc;
  doc.source_ = source;
  std::string section;
  int number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++number;
    start = end + 1;

    Cursor cur(line, doc.source_, number);
    if (cur.at_end_or_comment()) {
      if (end == text.size()) break;
      continue;
    }
    if (cur.consume('[')) {
      section = cur.bare_key();
      if (!cur.consume(']')) cur.fail("expected ']' after section name");
      if (!cur.at_end_or_comment()) cur.fail("unexpected text after section header");
    } else {
      const std::string key = cur.bare_key();
      if (!cur.consume('=')) cur.fail("expected '=' after key '" + key + "'");
      Value v = cur.value();
      if (!cur.at_end_or_comment()) cur.fail("unexpected text after value");
      const std::string full = section.empty() ? key : section + "." + key;
      if (!doc.values_.emplace(full, std::move(v)).second) cur.fail("duplicate key '" + full + "'");
    }
    if (end == text.size()) break;
  }
  return doc;
}

Document Document::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

bool Document::has(const std::string& key) const { return values_.count(key) != 0; }

void Document::fail(const Value& v, const std::string& key, const std::string& what) const {
  throw ParseError(source_, v.line, "key '" + key + "': " + what);
}

const Value* Document::find(const std::string& key, Value::Kind kind) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  if (it->second.kind != kind)
    fail(it->second, key, std::string("expected ") + kind_name(kind) + ", got " + kind_name(it->second.kind));
  return &it->second;
}

double Document::number(const std::string& key, double fallback) const {
  const Value* v = find(key, Value::Kind::kNumber);
  return v ? v->number : fallback;
}

std::int64_t Document::integer(const std::string& key, std::int64_t fallback) const {
  const Value* v = find(key, Value::Kind::kNumber);
  if (!v) return fallback;
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v->text.data(), v->text.data() + v->text.size(), out);
  if (ec != std::errc() || ptr != v->text.data() + v->text.size()) fail(*v, key, "expected an integer");
  return out;
}

std::uint64_t Document::unsigned_integer(const std::string& key, std::uint64_t fallback) const {
  const Value* v = find(key, Value::Kind::kNumber);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v->text.data(), v->text.data() + v->text.size(), out);
  if (ec != std::errc() || ptr != v->text.data() + v->text.size())
    fail(*v, key, "expected a nonnegative integer");
  return out;
}

std::string Document::string(const std::string& key, const std::string& fallback) const {
  const Value* v = find(key, Value::Kind::kString);
  return v ? v->text : fallback;
}

bool Document::boolean(const std::string& key, bool fallback) const {
  const Value* v = find(key, Value::Kind::kBool);
  return v ? v->flag : fallback;
}

std::vector<double> Document::numbers(const std::string& key, const std::vector<double>& fallback) const {
  const Value* v = find(key, Value::Kind::kArray);
  if (!v) return fallback;
  std::vector<double> out;
  for (const Value& item : v->items) {
    if (item.kind != Value::Kind::kNumber) fail(*v, key, "expected an array of numbers");
    out.push_back(item.number);
  }
  return out;
}

std::vector<std::string> Document::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_)
    if (!used_.count(key)) out.push_back(key);
  return out;
}

}  // namespace umx::config
