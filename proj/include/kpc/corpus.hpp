#pragma once

// Standoff corpus ingestion: `.txt` paragraph + `.ann` entity lines
// (`T1<TAB>Material 0 5<TAB>brass`). Offsets are Unicode code points.

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpc/error.hpp"
#include "kpc/label.hpp"
#include "kpc/utf8.hpp"

namespace kpc {

struct KeyphraseInstance {
  std::string id;
  std::size_t start = 0;  // code points, inclusive
  std::size_t end = 0;    // code points, exclusive
  std::string surface;    // whitespace-normalized UTF-8
  std::optional<Label> gold_label;
};

struct Document {
  std::string doc_id;
  std::string text;      // UTF-8 as read
  std::u32string chars;  // decoded code points; offsets index into this
  std::vector<KeyphraseInstance> instances;

  const KeyphraseInstance* find(std::string_view instance_id) const {
    for (const auto& inst : instances) {
      if (inst.id == instance_id) return &inst;
    }
    return nullptr;
  }
};

struct Dataset {
  std::string split_name;
  std::vector<Document> documents;

  std::size_t instance_count() const {
    std::size_t n = 0;
    for (const auto& d : documents) n += d.instances.size();
    return n;
  }
};

/// One row of the JSON-lines instance dump.
struct InstanceRecord {
  std::string doc_id;
  std::string instance_id;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string surface;
  std::optional<Label> label;
};

namespace detail {

inline std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::optional<std::size_t> parse_offset(std::string_view s) {
  std::size_t value = 0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || s.empty()) return std::nullopt;
  return value;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Collapses whitespace runs (newlines included) to one space and trims.
inline std::u32string normalize_whitespace(std::u32string_view s) {
  std::u32string out;
  bool pending_space = false;
  for (char32_t cp : s) {
    if (utf8::is_space(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(U' ');
    pending_space = false;
    out.push_back(cp);
  }
  return out;
}

inline std::string normalize_whitespace(std::string_view s) {
  return utf8::encode(normalize_whitespace(utf8::decode(s)));
}

/// Parses one document. Relation (`R`), event/equivalence (`*`) and any other
/// non-`T` lines are skipped.
inline Document parse_standoff(std::string_view text_content, std::string_view ann_content,
                               std::string doc_id = {}) {
  Document doc;
  doc.doc_id = std::move(doc_id);
  doc.text = std::string(text_content);
  doc.chars = utf8::decode(text_content);

  std::set<std::string> seen_ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= ann_content.size()) {
    std::size_t nl = ann_content.find('\n', pos);
    if (nl == std::string_view::npos) nl = ann_content.size();
    const std::string_view line = detail::trim_cr(ann_content.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() != 'T') continue;

    const std::size_t tab1 = line.find('\t');
    const std::size_t tab2 = tab1 == std::string_view::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string_view::npos) {
      throw Error(ErrorKind::MalformedLine, "expected 3 tab-separated fields", line_no);
    }
    const std::string_view id = line.substr(0, tab1);
    const std::string_view middle = line.substr(tab1 + 1, tab2 - tab1 - 1);
    const std::string_view surface = line.substr(tab2 + 1);

    if (middle.find(';') != std::string_view::npos) {
      throw Error(ErrorKind::MalformedLine, "discontinuous spans are not supported", line_no);
    }
    const auto fields = detail::split_ws(middle);
    if (fields.size() != 3) {
      throw Error(ErrorKind::MalformedLine, "expected `Label start end`", line_no);
    }
    const auto label = parse_label(fields[0]);
    if (!label) {
      throw Error(ErrorKind::MalformedLine, "unknown label '" + std::string(fields[0]) + "'",
                  line_no);
    }
    const auto start = detail::parse_offset(fields[1]);
    const auto end = detail::parse_offset(fields[2]);
    if (!start || !end) throw Error(ErrorKind::MalformedLine, "non-integer offset", line_no);
    if (*start >= *end || *end > doc.chars.size()) {
      throw Error(ErrorKind::SpanOutOfRange,
                  "[" + std::to_string(*start) + "," + std::to_string(*end) +
                      ") with text length " + std::to_string(doc.chars.size()),
                  line_no);
    }
    const std::u32string slice =
        normalize_whitespace(std::u32string_view(doc.chars).substr(*start, *end - *start));
    if (slice != normalize_whitespace(utf8::decode(surface))) {
      throw Error(ErrorKind::SurfaceMismatch,
                  "'" + std::string(surface) + "' vs text '" + utf8::encode(slice) + "'", line_no);
    }
    if (!seen_ids.insert(std::string(id)).second) {
      throw Error(ErrorKind::MalformedLine, "duplicate id " + std::string(id), line_no);
    }
    doc.instances.push_back({std::string(id), *start, *end, utf8::encode(slice), *label});
  }
  std::stable_sort(doc.instances.begin(), doc.instances.end(),
                   [](const KeyphraseInstance& a, const KeyphraseInstance& b) {
                     return a.start != b.start ? a.start < b.start : a.end < b.end;
                   });
  return doc;
}

/// Entity lines for `doc`, one per labeled instance.
inline std::string serialize_standoff(const Document& doc) {
  std::string out;
  for (const auto& inst : doc.instances) {
    if (!inst.gold_label) continue;
    out += inst.id;
    out += '\t';
    out += name_of(*inst.gold_label);
    out += ' ' + std::to_string(inst.start) + ' ' + std::to_string(inst.end) + '\t';
    out += inst.surface;
    out += '\n';
  }
  return out;
}

inline Dataset load_dataset(const std::filesystem::path& directory,
                            std::string split_name = {}) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory)) {
    throw Error(ErrorKind::Io, "not a directory: " + directory.string());
  }
  std::set<std::string> txt, ann;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".txt") txt.insert(entry.path().stem().string());
    if (ext == ".ann") ann.insert(entry.path().stem().string());
  }
  for (const auto& id : txt) {
    if (!ann.count(id)) throw Error(ErrorKind::MissingPair, id + " has no .ann");
  }
  for (const auto& id : ann) {
    if (!txt.count(id)) throw Error(ErrorKind::MissingPair, id + " has no .txt");
  }

  Dataset ds;
  ds.split_name = split_name.empty() ? directory.filename().string() : std::move(split_name);
  for (const auto& id : txt) {  // std::set iterates in doc_id order
    const std::string text = detail::read_file(directory / (id + ".txt"));
    const std::string annotations = detail::read_file(directory / (id + ".ann"));
    try {
      ds.documents.push_back(parse_standoff(text, annotations, id));
    } catch (const Error& e) {
      throw Error(e.kind(), (directory / (id + ".ann")).string() + ": " + e.message(),
                  e.line());
    }
  }
  return ds;
}

/// Concatenates splits (e.g. train + dev). Document ids must stay unique.
inline Dataset merge_datasets(const std::vector<Dataset>& parts, std::string split_name) {
  Dataset out;
  out.split_name = std::move(split_name);
  std::set<std::string> ids;
  for (const auto& part : parts) {
    for (const auto& doc : part.documents) {
      if (!ids.insert(doc.doc_id).second) {
        throw Error(ErrorKind::DuplicateKey, "document " + doc.doc_id + " appears twice");
      }
      out.documents.push_back(doc);
    }
  }
  std::sort(out.documents.begin(), out.documents.end(),
            [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
  return out;
}

inline std::array<std::size_t, kNumLabels> class_counts(const Dataset& dataset) {
  std::array<std::size_t, kNumLabels> counts{};
  for (const auto& doc : dataset.documents) {
    for (const auto& inst : doc.instances) {
      if (!inst.gold_label) {
        throw Error(ErrorKind::UnlabeledInstance, doc.doc_id + "/" + inst.id);
      }
      ++counts[index_of(*inst.gold_label)];
    }
  }
  return counts;
}

/// Instance-level class fractions. All zero for a dataset without instances.
inline ClassProbs class_distribution(const Dataset& dataset) {
  const auto counts = class_counts(dataset);
  const double total = static_cast<double>(counts[0] + counts[1] + counts[2]);
  ClassProbs out{};
  if (total == 0) return out;
  for (std::size_t k = 0; k < kNumLabels; ++k) out[k] = static_cast<double>(counts[k]) / total;
  return out;
}

// --- JSON-lines instance dump -------------------------------------------------

inline nlohmann::ordered_json to_json(const InstanceRecord& r) {
  nlohmann::ordered_json j;
  j["doc_id"] = r.doc_id;
  j["instance_id"] = r.instance_id;
  j["start"] = r.start;
  j["end"] = r.end;
  j["surface"] = r.surface;
  if (r.label) {
    j["label"] = std::string(name_of(*r.label));
  } else {
    j["label"] = nullptr;
  }
  return j;
}

inline std::vector<InstanceRecord> to_records(const Dataset& dataset) {
  std::vector<InstanceRecord> out;
  for (const auto& doc : dataset.documents) {
    for (const auto& inst : doc.instances) {
      out.push_back({doc.doc_id, inst.id, inst.start, inst.end, inst.surface, inst.gold_label});
    }
  }
  return out;
}

inline void write_instance_dump(std::ostream& out, const std::vector<InstanceRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline std::vector<InstanceRecord> read_instance_dump(std::istream& in) {
  std::vector<InstanceRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim_cr(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      InstanceRecord r;
      r.doc_id = j.at("doc_id").get<std::string>();
      r.instance_id = j.at("instance_id").get<std::string>();
      r.start = j.value("start", std::size_t{0});
      r.end = j.value("end", std::size_t{0});
      r.surface = j.value("surface", std::string{});
      if (j.contains("label") && !j["label"].is_null()) {
        r.label = parse_label(j["label"].get<std::string>());
        if (!r.label) throw Error(ErrorKind::MalformedLine, "unknown label", line_no);
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedLine, e.what(), line_no);
    }
  }
  return out;
}

inline std::vector<InstanceRecord> read_instance_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_instance_dump(in);
}

}  // namespace kpc
