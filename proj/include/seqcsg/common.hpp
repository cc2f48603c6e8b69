#pragma once

// Shared error taxonomy and small string helpers used across the library.

#include <cctype>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace seqcsg {

// Base class for all library errors. Subclasses mark the failure family so
// callers (and the CLI) can map them to distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file content; carries file and 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& msg)
      : Error(file + ":" + std::to_string(line) + ": " + msg),
        file_(std::move(file)),
        line_(line) {}
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

// Well-formed input that violates a domain rule (unknown label, bad flag...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Inconsistency while joining data sources (duplicate ids, missing caption).
class IngestionError : public Error {
 public:
  using Error::Error;
};

// Neither the placeholder nor the target string occurs in a tweet.
class MissingTargetError : public Error {
 public:
  using Error::Error;
};

// Sequence cannot be shrunk to the configured maximum length.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// A caller broke an API contract (e.g. handed a non-binary mask).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or flag combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File system trouble: unreadable path, failed write, held lock.
class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

// A sub-image token references a region with no stored feature vector.
class FeatureLookupError : public Error {
 public:
  using Error::Error;
};

namespace str {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

// Whitespace-delimited word split; never yields empty words.
inline std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t b = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > b) out.emplace_back(s.substr(b, i - b));
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts,
                        std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

// Control characters removed, runs of whitespace collapsed to one space,
// ends trimmed. Idempotent.
inline std::string normalize_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (static_cast<unsigned char>(c) < 0x20 ||
        static_cast<unsigned char>(c) == 0x7f) {
      continue;  // control character: dropped outright
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

// Position of the first case-insensitive (ASCII) occurrence of needle.
inline std::size_t ifind(std::string_view hay, std::string_view needle) {
  if (needle.empty() || needle.size() > hay.size()) return std::string::npos;
  auto fold = [](char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
  };
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    std::size_t j = 0;
    while (j < needle.size() && fold(hay[i + j]) == fold(needle[j])) ++j;
    if (j == needle.size()) return i;
  }
  return std::string::npos;
}

inline bool contains_icase(std::string_view hay, std::string_view needle) {
  return ifind(hay, needle) != std::string::npos;
}

}  // namespace str

}  // namespace seqcsg
