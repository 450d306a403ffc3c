#pragma once

// Minimal TOML-style configuration text:
//
//   # comment
//   [section.sub]
//   key = 1.5e9          # number
//   name = "text"        # string
//   flag = true          # boolean
//   list = [1e-4, 0.01]  # flat array of numbers or strings
//
// Keys are addressed as "section.sub.key".

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace umx::config {

class ParseError : public std::invalid_argument {
 public:
  ParseError(const std::string& source, int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

struct Value {
  enum class Kind { kNumber, kString, kBool, kArray };
  Kind kind = Kind::kNumber;
  std::string text;  // raw token for numbers, unescaped contents for strings
  double number = 0.0;
  bool flag = false;
  std::vector<Value> items;
  int line = 0;
};

class Document {
 public:
  static Document parse(std::string_view text, const std::string& source = "<config>");
  static Document load(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  std::int64_t integer(const std::string& key, std::int64_t fallback) const;
  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const;
  std::string string(const std::string& key, const std::string& fallback) const;
  bool boolean(const std::string& key, bool fallback) const;
  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) const;

  /// Keys present in the text that no getter has asked for.
  std::vector<std::string> unused_keys() const;
  const std::string& source() const { return source_; }

 private:
  const Value* find(const std::string& key, Value::Kind kind) const;
  [[noreturn]] void fail(const Value& v, const std::string& key, const std::string& what) const;

  std::string source_;
  std::map<std::string, Value> values_;
  mutable std::set<std::string> used_;
};

}  // namespace umx::config
