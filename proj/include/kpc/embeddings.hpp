#pragma once

// Pre-trained word-embedding tables in the whitespace text format used by
// Glove/word2vec (`token v1 ... vd` per line, optional `count dim` header).

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "kpc/error.hpp"
#include "kpc/text_window.hpp"

namespace kpc {

using FeatureVector = Eigen::VectorXd;

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::string name, std::size_t dim) : name_(std::move(name)), dim_(dim) {}

  const std::string& name() const { return name_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return index_.size(); }
  std::size_t duplicates_skipped() const { return duplicates_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Returns false (and keeps the first vector) when `token` is already present.
  bool add(const std::string& token, std::span<const double> values) {
    if (values.size() != dim_) {
      throw Error(ErrorKind::DimensionMismatch,
                  token + " has " + std::to_string(values.size()) + " values, expected " +
                      std::to_string(dim_));
    }
    if (index_.count(token)) {
      ++duplicates_;
      warnings_.push_back("duplicate token '" + token + "' ignored");
      return false;
    }
    index_.emplace(token, data_.size() / std::max<std::size_t>(dim_, 1));
    data_.insert(data_.end(), values.begin(), values.end());
    return true;
  }

  /// Exact match first, then ASCII-lowercased. PAD and OOV yield nullopt.
  std::optional<std::span<const double>> lookup(const Slot& slot) const {
    if (!slot) return std::nullopt;
    auto it = index_.find(*slot);
    if (it == index_.end()) {
      std::string lowered = *slot;
      for (char& ch : lowered) {
        if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
      }
      it = index_.find(lowered);
      if (it == index_.end()) return std::nullopt;
    }
    return std::span<const double>(data_.data() + it->second * dim_, dim_);
  }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  /// Multiplies every stored vector by `alpha`.
  void scale(double alpha) {
    for (double& v : data_) v *= alpha;
  }

 private:
  std::string name_;
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> data_;
  std::size_t duplicates_ = 0;
  std::vector<std::string> warnings_;
};

namespace detail {

inline bool parse_double(std::string_view s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline bool looks_like_header(const std::vector<std::string_view>& fields) {
  if (fields.size() != 2) return false;
  for (auto f : fields) {
    if (!parse_offset(f)) return false;
  }
  return true;
}

}  // namespace detail

inline EmbeddingTable load_table(std::istream& in, std::string name,
                                 std::optional<std::size_t> expected_dim = std::nullopt) {
  std::optional<EmbeddingTable> table;
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = detail::split_ws(detail::trim_cr(line));
    if (fields.empty()) continue;
    if (!table && line_no == 1 && detail::looks_like_header(fields)) continue;
    const std::size_t dim = fields.size() - 1;
    if (!table) {
      if (dim == 0 || (expected_dim && *expected_dim != dim)) {
        throw Error(ErrorKind::DimensionMismatch,
                    "found " + std::to_string(dim) + " values" +
                        (expected_dim ? ", expected " + std::to_string(*expected_dim) : ""),
                    line_no);
      }
      table.emplace(name, dim);
    }
    if (dim != table->dim()) {
      throw Error(ErrorKind::DimensionMismatch,
                  "found " + std::to_string(dim) + " values, expected " +
                      std::to_string(table->dim()),
                  line_no);
    }
    values.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      if (!detail::parse_double(fields[k + 1], values[k])) {
        throw Error(ErrorKind::MalformedLine, "bad float '" + std::string(fields[k + 1]) + "'",
                    line_no);
      }
    }
    table->add(std::string(fields[0]), values);
  }
  if (!table) {
    if (!expected_dim) throw Error(ErrorKind::DimensionMismatch, "empty table " + name);
    table.emplace(name, *expected_dim);
  }
  return std::move(*table);
}

inline EmbeddingTable load_table(const std::filesystem::path& path,
                                 std::optional<std::size_t> expected_dim = std::nullopt,
                                 std::string name = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  if (name.empty()) name = path.stem().string();
  try {
    return load_table(in, std::move(name), expected_dim);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.message(), e.line());
  }
}

/// Slot-major concatenation of left | center | right; PAD and OOV map to zeros.
inline FeatureVector embed_window(const ContextWindow& w, const EmbeddingTable& table) {
  const std::size_t d = table.dim();
  FeatureVector out = FeatureVector::Zero(static_cast<Eigen::Index>(w.shape().total() * d));
  std::size_t slot_index = 0;
  for (const auto* part : {&w.left, &w.center, &w.right}) {
    for (const auto& slot : *part) {
      if (auto vec = table.lookup(slot)) {
        for (std::size_t k = 0; k < d; ++k) {
          out[static_cast<Eigen::Index>(slot_index * d + k)] = (*vec)[k];
        }
      }
      ++slot_index;
    }
  }
  return out;
}

/// Named tables shared read-only across models.
using EmbeddingRegistry = std::map<std::string, std::shared_ptr<const EmbeddingTable>>;

/// Parses a `NAME=PATH` binding.
inline std::pair<std::string, std::filesystem::path> parse_binding(std::string_view spec) {
  const auto eq = spec.find('=');
  if (eq == std::string_view::npos || eq == 0 || eq + 1 == spec.size()) {
    throw Error(ErrorKind::Config, "expected NAME=PATH, got '" + std::string(spec) + "'");
  }
  return {std::string(spec.substr(0, eq)), std::filesystem::path(spec.substr(eq + 1))};
}

inline const EmbeddingTable& require_table(const EmbeddingRegistry& registry,
                                           const std::string& name) {
  auto it = registry.find(name);
  if (it == registry.end() || !it->second) {
    throw Error(ErrorKind::Config, "embedding table '" + name + "' is not bound");
  }
  return *it->second;
}

}  // namespace kpc
