#pragma once

// Ingestion of the three data sources (annotated tweets, image captions,
// scene graphs), tweet cleaning, and the per-sample join.
//
// File formats are line-oriented and documented in docs/FORMATS.md. All
// loaders report the offending line on malformed input.

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "seqcsg/common.hpp"

namespace seqcsg {

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

enum class Label : int { Negative = 0, Neutral = 1, Positive = 2 };

constexpr int kLabelCount = 3;

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "negative") return Label::Negative;
  if (s == "neutral") return Label::Neutral;
  if (s == "positive") return Label::Positive;
  return std::nullopt;
}

inline const char* label_name(Label l) {
  switch (l) {
    case Label::Negative: return "negative";
    case Label::Neutral: return "neutral";
    case Label::Positive: return "positive";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

// One classification instance: a target mention inside a tweet paired with
// an image. The tweet either contains the "$T$" placeholder or the target
// string verbatim.
struct Sample {
  std::string sample_id;
  Label label = Label::Neutral;
  std::string target;
  std::string tweet;
  std::string image_id;
};

struct CaptionRecord {
  std::string image_id;
  std::string caption;
};

struct ObjectTriple {
  std::string subject;
  std::string predicate;
  std::string object;
  double score = 0.0;
};

struct ImageTriple {
  std::string region_id;  // names the sub-image this triple points at
  std::string object;
  double score = 0.0;
};

struct SceneGraphRecord {
  std::string image_id;
  std::vector<ObjectTriple> object_object;
  std::vector<ImageTriple> image_object;
  std::map<std::string, std::vector<double>> region_features;
  int feature_dim = 0;

  bool empty() const { return object_object.empty() && image_object.empty(); }
};

struct DatasetSplit {
  std::string name;  // train / dev / test
  std::vector<Sample> samples;

  std::array<int, kLabelCount> class_counts() const {
    std::array<int, kLabelCount> c{0, 0, 0};
    for (const auto& s : samples) ++c[static_cast<int>(s.label)];
    return c;
  }
};

// A Sample joined with its caption and scene graph by image id.
struct JoinedSample {
  Sample sample;
  std::string caption;     // empty when captions are ablated away
  SceneGraphRecord graph;  // empty record when the image has no graph
};

// A single validator observation, reported with file/line context.
struct Finding {
  std::string file;
  std::size_t line = 0;  // 0 = whole-file issue
  std::string message;
};

// ---------------------------------------------------------------------------
// Split file: sample_id<TAB>label<TAB>target<TAB>tweet<TAB>image_id
// ---------------------------------------------------------------------------

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

// Splits file content into lines on '\n'; a trailing newline does not
// produce an empty final line.
inline std::vector<std::string> file_lines(const std::string& content) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i < content.size(); ++i) {
    if (content[i] == '\n') {
      lines.emplace_back(content.substr(start, i - start));
      start = i + 1;
    }
  }
  if (start < content.size()) lines.emplace_back(content.substr(start));
  return lines;
}

inline double parse_score(const std::string& s, const std::string& file,
                          std::size_t line) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw ParseError(file, line, "bad number '" + s + "'");
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline Sample parse_sample_line(const std::string& line,
                                const std::string& file, std::size_t lineno) {
  auto fields = str::split(line, '\t');
  if (fields.size() != 5)
    throw ParseError(file, lineno,
                     "expected 5 tab-separated fields, got " +
                         std::to_string(fields.size()));
  Sample s;
  s.sample_id = fields[0];
  auto label = parse_label(fields[1]);
  if (!label)
    throw ValidationError(file + ":" + std::to_string(lineno) +
                          ": unknown label '" + fields[1] + "'");
  s.label = *label;
  s.target = fields[2];
  if (str::trim(s.target).empty())
    throw ValidationError(file + ":" + std::to_string(lineno) +
                          ": empty target");
  s.tweet = fields[3];
  s.image_id = fields[4];
  return s;
}

inline DatasetSplit load_split(const std::string& path,
                               const std::string& split_name) {
  DatasetSplit split;
  split.name = split_name;
  auto lines = detail::file_lines(detail::read_file(path));
  split.samples.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    split.samples.push_back(parse_sample_line(lines[i], path, i + 1));
  }
  return split;
}

inline std::string serialize_split(const DatasetSplit& split) {
  std::string out;
  for (const auto& s : split.samples) {
    out += s.sample_id;
    out += '\t';
    out += label_name(s.label);
    out += '\t';
    out += s.target;
    out += '\t';
    out += s.tweet;
    out += '\t';
    out += s.image_id;
    out += '\n';
  }
  return out;
}

inline void save_split(const DatasetSplit& split, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << serialize_split(split);
}

// ---------------------------------------------------------------------------
// Caption file: image_id<TAB>caption
// ---------------------------------------------------------------------------

inline std::vector<CaptionRecord> load_captions(const std::string& path) {
  std::vector<CaptionRecord> out;
  auto lines = detail::file_lines(detail::read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto fields = str::split(lines[i], '\t');
    if (fields.size() != 2)
      throw ParseError(path, i + 1, "expected image_id<TAB>caption");
    out.push_back({fields[0], fields[1]});
  }
  return out;
}

inline void save_captions(const std::vector<CaptionRecord>& captions,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& c : captions) out << c.image_id << '\t' << c.caption << '\n';
}

// ---------------------------------------------------------------------------
// Scene-graph file
//
//   #seqcsg-scene-graph v1 fdim=<f>
//   image<TAB><image_id>
//   oo<TAB><subject><TAB><predicate><TAB><object><TAB><score>
//   io<TAB><region_id><TAB><object><TAB><score>
//   region<TAB><region_id><TAB><v0> <v1> ... <v_{f-1}>
// ---------------------------------------------------------------------------

struct SceneGraphFile {
  int feature_dim = 0;
  std::vector<SceneGraphRecord> records;
};

inline SceneGraphFile load_scene_graphs(const std::string& path) {
  SceneGraphFile out;
  auto lines = detail::file_lines(detail::read_file(path));
  if (lines.empty()) throw ParseError(path, 1, "missing header line");

  {
    auto header = str::words(lines[0]);
    if (header.size() != 3 || header[0] != "#seqcsg-scene-graph" ||
        header[1] != "v1" || header[2].rfind("fdim=", 0) != 0)
      throw ParseError(path, 1,
                       "expected header '#seqcsg-scene-graph v1 fdim=<f>'");
    out.feature_dim = static_cast<int>(
        detail::parse_score(header[2].substr(5), path, 1));
    if (out.feature_dim <= 0)
      throw ParseError(path, 1, "feature dimensionality must be positive");
  }

  SceneGraphRecord* cur = nullptr;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    auto fields = str::split(line, '\t');
    const std::string& kind = fields[0];
    std::size_t lineno = i + 1;
    if (kind == "image") {
      if (fields.size() != 2) throw ParseError(path, lineno, "image needs an id");
      out.records.push_back({});
      cur = &out.records.back();
      cur->image_id = fields[1];
      cur->feature_dim = out.feature_dim;
      continue;
    }
    if (!cur) throw ParseError(path, lineno, "record before any 'image' line");
    if (kind == "oo") {
      if (fields.size() != 5)
        throw ParseError(path, lineno, "oo needs subject, predicate, object, score");
      cur->object_object.push_back(
          {fields[1], fields[2], fields[3],
           detail::parse_score(fields[4], path, lineno)});
    } else if (kind == "io") {
      if (fields.size() != 4)
        throw ParseError(path, lineno, "io needs region_id, object, score");
      cur->image_object.push_back(
          {fields[1], fields[2], detail::parse_score(fields[3], path, lineno)});
    } else if (kind == "region") {
      if (fields.size() != 3)
        throw ParseError(path, lineno, "region needs region_id and values");
      std::vector<double> values;
      for (const auto& w : str::words(fields[2]))
        values.push_back(detail::parse_score(w, path, lineno));
      if (static_cast<int>(values.size()) != out.feature_dim)
        throw ParseError(path, lineno,
                         "region vector has " + std::to_string(values.size()) +
                             " values, header declares " +
                             std::to_string(out.feature_dim));
      cur->region_features[fields[1]] = std::move(values);
    } else {
      throw ParseError(path, lineno, "unknown record kind '" + kind + "'");
    }
  }
  return out;
}

inline void save_scene_graphs(const SceneGraphFile& file,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "#seqcsg-scene-graph v1 fdim=" << file.feature_dim << '\n';
  for (const auto& rec : file.records) {
    out << "image\t" << rec.image_id << '\n';
    for (const auto& t : rec.object_object)
      out << "oo\t" << t.subject << '\t' << t.predicate << '\t' << t.object
          << '\t' << detail::format_double(t.score) << '\n';
    for (const auto& t : rec.image_object)
      out << "io\t" << t.region_id << '\t' << t.object << '\t'
          << detail::format_double(t.score) << '\n';
    for (const auto& [region, values] : rec.region_features) {
      out << "region\t" << region << '\t';
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out << ' ';
        out << detail::format_double(values[i]);
      }
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Tweet cleaning
// ---------------------------------------------------------------------------

inline constexpr std::string_view kTargetPlaceholder = "$T$";
inline constexpr std::string_view kTargetOpen = "[target]";
inline constexpr std::string_view kTargetClose = "[/target]";

// Normalizes tweet noise and marks the target span:
//   - control characters dropped, whitespace runs collapsed, ends trimmed;
//   - "$T$" (or, failing that, the first occurrence of the target string,
//     matched case-insensitively) becomes "[target] <target> [/target]".
// Idempotent: an already-marked target is left alone.
inline std::string clean_tweet(const Sample& sample) {
  const std::string text = str::normalize_whitespace(sample.tweet);
  const std::string target = str::normalize_whitespace(sample.target);
  if (target.empty()) throw ValidationError("empty target for sample " + sample.sample_id);

  const std::string marked =
      std::string(kTargetOpen) + " " + target + " " + std::string(kTargetClose);

  std::size_t pos = text.find(kTargetPlaceholder);
  if (pos != std::string::npos) {
    std::string out = text;
    out.replace(pos, kTargetPlaceholder.size(), marked);
    return str::normalize_whitespace(out);
  }
  if (str::contains_icase(text, marked)) return text;  // already cleaned
  pos = str::ifind(text, target);
  if (pos == std::string::npos)
    throw MissingTargetError("tweet of sample " + sample.sample_id +
                             " contains neither \"$T$\" nor the target \"" +
                             target + "\"");
  std::string out = text;
  // Keep the tweet's own casing of the mention; only the markers are added.
  out.insert(pos + target.size(), " " + std::string(kTargetClose));
  out.insert(pos, std::string(kTargetOpen) + " ");
  return str::normalize_whitespace(out);
}

// ---------------------------------------------------------------------------
// Join
// ---------------------------------------------------------------------------

// Pairs each sample with its caption and scene graph by image id. A missing
// graph degrades to an empty triple list; a missing caption is an error
// unless `require_caption` is off (the caption ablation).
inline std::vector<JoinedSample> join_sources(
    const DatasetSplit& split, const std::vector<CaptionRecord>& captions,
    const std::vector<SceneGraphRecord>& graphs, bool require_caption = true) {
  std::unordered_map<std::string, const CaptionRecord*> caption_by_image;
  for (const auto& c : captions) {
    if (!caption_by_image.emplace(c.image_id, &c).second)
      throw IngestionError("duplicate caption for image_id " + c.image_id);
  }
  std::unordered_map<std::string, const SceneGraphRecord*> graph_by_image;
  for (const auto& g : graphs) {
    if (!graph_by_image.emplace(g.image_id, &g).second)
      throw IngestionError("duplicate scene graph for image_id " + g.image_id);
  }

  std::vector<JoinedSample> out;
  out.reserve(split.samples.size());
  for (const auto& s : split.samples) {
    JoinedSample j;
    j.sample = s;
    if (auto it = caption_by_image.find(s.image_id);
        it != caption_by_image.end()) {
      j.caption = it->second->caption;
    } else if (require_caption) {
      throw IngestionError("no caption for image_id " + s.image_id +
                           " (sample " + s.sample_id + ")");
    }
    if (auto it = graph_by_image.find(s.image_id); it != graph_by_image.end()) {
      j.graph = *it->second;
    } else {
      j.graph.image_id = s.image_id;  // empty graph: degrades downstream
    }
    out.push_back(std::move(j));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validators (used by the `validate` subcommand)
// ---------------------------------------------------------------------------

inline std::vector<Finding> validate_split_file(const std::string& path) {
  std::vector<Finding> findings;
  std::vector<std::string> lines;
  try {
    lines = detail::file_lines(detail::read_file(path));
  } catch (const Error& e) {
    findings.push_back({path, 0, e.what()});
    return findings;
  }
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      Sample s = parse_sample_line(lines[i], path, i + 1);
      if (!ids.insert(s.sample_id).second)
        findings.push_back({path, i + 1, "duplicate sample_id " + s.sample_id});
      const std::string norm = str::normalize_whitespace(s.tweet);
      const std::string target = str::normalize_whitespace(s.target);
      const std::string marked = std::string(kTargetOpen) + " " + target + " " +
                                 std::string(kTargetClose);
      if (norm.find(kTargetPlaceholder) == std::string::npos &&
          !str::contains_icase(norm, target) &&
          !str::contains_icase(norm, marked))
        findings.push_back(
            {path, i + 1,
             "tweet contains neither \"$T$\" nor target \"" + s.target + "\""});
    } catch (const Error& e) {
      findings.push_back({path, i + 1, e.what()});
    }
  }
  return findings;
}

inline std::vector<Finding> validate_caption_file(const std::string& path) {
  std::vector<Finding> findings;
  std::vector<std::string> lines;
  try {
    lines = detail::file_lines(detail::read_file(path));
  } catch (const Error& e) {
    findings.push_back({path, 0, e.what()});
    return findings;
  }
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto fields = str::split(lines[i], '\t');
    if (fields.size() != 2) {
      findings.push_back({path, i + 1, "expected image_id<TAB>caption"});
      continue;
    }
    if (!seen.insert(fields[0]).second)
      findings.push_back({path, i + 1, "duplicate image_id " + fields[0]});
    if (str::trim(fields[1]).empty())
      findings.push_back({path, i + 1, "empty caption for " + fields[0]});
  }
  return findings;
}

inline std::vector<Finding> validate_scene_graph_file(const std::string& path) {
  std::vector<Finding> findings;
  SceneGraphFile file;
  try {
    file = load_scene_graphs(path);
  } catch (const ParseError& e) {
    findings.push_back({e.file(), e.line(), e.what()});
    return findings;
  } catch (const Error& e) {
    findings.push_back({path, 0, e.what()});
    return findings;
  }
  std::unordered_set<std::string> seen;
  for (const auto& rec : file.records) {
    if (!seen.insert(rec.image_id).second)
      findings.push_back({path, 0, "duplicate image block " + rec.image_id});
    for (const auto& t : rec.object_object)
      if (t.score < 0.0 || t.score > 1.0)
        findings.push_back({path, 0,
                            "image " + rec.image_id + ": oo score " +
                                detail::format_double(t.score) +
                                " outside [0,1]"});
    for (const auto& t : rec.image_object) {
      if (t.score < 0.0 || t.score > 1.0)
        findings.push_back({path, 0,
                            "image " + rec.image_id + ": io score " +
                                detail::format_double(t.score) +
                                " outside [0,1]"});
      if (!rec.region_features.count(t.region_id))
        findings.push_back({path, 0,
                            "image " + rec.image_id + ": region " +
                                t.region_id + " has no feature vector"});
    }
  }
  return findings;
}

}  // namespace seqcsg
