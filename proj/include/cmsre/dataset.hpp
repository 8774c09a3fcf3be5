#pragma once

// Multi-view datasets: loading from a JSON manifest, per-view
// normalization and exact brute-force k-nearest-neighbor tables.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cmsre/csv.hpp"
#include "cmsre/error.hpp"

namespace cmsre {

using Index = Eigen::Index;

/// One feature representation. Column j is the feature of sample j.
struct ViewMatrix {
  std::string name;
  Eigen::MatrixXd data;

  Index dim() const { return data.rows(); }
  Index samples() const { return data.cols(); }
};

struct MultiViewDataset {
  std::vector<ViewMatrix> views;
  /// Class codes in [0, label_names.size()), empty when unlabeled.
  std::vector<int> labels;
  std::vector<std::string> label_names;

  Index sample_count() const { return views.empty() ? 0 : views.front().samples(); }
  Index view_count() const { return static_cast<Index>(views.size()); }
  bool labeled() const { return !labels.empty(); }
};

/// Maps label tokens to dense integer codes in order of first appearance.
inline void attach_labels(MultiViewDataset& ds,
                          const std::vector<std::string>& tokens) {
  std::map<std::string, int> code;
  ds.labels.clear();
  ds.label_names.clear();
  for (const auto& t : tokens) {
    auto [it, inserted] = code.emplace(t, static_cast<int>(ds.label_names.size()));
    if (inserted) ds.label_names.push_back(t);
    ds.labels.push_back(it->second);
  }
}

/// Checks the dataset invariants; throws input_error on the first violation.
inline void validate(const MultiViewDataset& ds) {
  if (ds.views.empty()) throw input_error("dataset has no views");
  const Index n = ds.views.front().samples();
  for (const auto& v : ds.views) {
    if (v.samples() != n)
      throw input_error("sample count mismatch: view '" + v.name + "' has " +
                        std::to_string(v.samples()) + " columns, expected " +
                        std::to_string(n));
    if (v.dim() < 1) throw input_error("view '" + v.name + "' has no rows");
    for (Index c = 0; c < v.data.cols(); ++c)
      for (Index r = 0; r < v.data.rows(); ++r)
        if (!std::isfinite(v.data(r, c)))
          throw input_error("non-finite entry in view '" + v.name + "' at row " +
                            std::to_string(r) + ", column " + std::to_string(c));
  }
  if (n < 2) throw input_error("dataset needs at least 2 samples");
  if (ds.labeled() && static_cast<Index>(ds.labels.size()) != n)
    throw input_error("label length mismatch: " + std::to_string(ds.labels.size()) +
                      " labels for " + std::to_string(n) + " samples");
}

inline std::vector<std::string> read_label_tokens(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open file: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = csv::trim(line);
    if (!t.empty()) tokens.emplace_back(t);
  }
  return tokens;
}

/// Loads `{ "views": [{"name", "path"}], "labels": path-or-null }`.
/// Paths are resolved relative to the manifest's directory.
inline MultiViewDataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw input_error("cannot open manifest: " + manifest_path.string());

  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw input_error("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("views") || !doc["views"].is_array())
    throw input_error("manifest must contain a 'views' array");

  const auto base = manifest_path.parent_path();
  MultiViewDataset ds;
  for (const auto& entry : doc["views"]) {
    if (!entry.is_object() || !entry.contains("path") || !entry["path"].is_string())
      throw input_error("each view entry needs a string 'path'");
    ViewMatrix v;
    v.name = entry.value("name", "view" + std::to_string(ds.views.size()));
    v.data = csv::read_matrix(base / entry["path"].get<std::string>());
    ds.views.push_back(std::move(v));
  }
  if (doc.contains("labels") && !doc["labels"].is_null()) {
    if (!doc["labels"].is_string()) throw input_error("'labels' must be a path or null");
    attach_labels(ds, read_label_tokens(base / doc["labels"].get<std::string>()));
  }
  validate(ds);
  return ds;
}

enum class Normalization { none, zscore, unit_l2_columns };

inline Normalization parse_normalization(const std::string& s) {
  if (s == "none") return Normalization::none;
  if (s == "zscore") return Normalization::zscore;
  if (s == "unit" || s == "unit_l2_columns") return Normalization::unit_l2_columns;
  throw input_error("unknown normalization '" + s + "'");
}

inline std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::none: return "none";
    case Normalization::zscore: return "zscore";
    case Normalization::unit_l2_columns: return "unit";
  }
  return "?";
}

/// zscore standardizes each feature row (population standard deviation);
/// constant rows are only centered. unit_l2_columns scales each sample to
/// unit length and leaves zero columns untouched, appending a warning.
inline ViewMatrix normalize_view(const ViewMatrix& view, Normalization mode,
                                 std::vector<std::string>* warnings = nullptr) {
  ViewMatrix out = view;
  auto& x = out.data;
  switch (mode) {
    case Normalization::none:
      break;
    case Normalization::zscore:
      for (Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        x.row(r).array() -= mean;
        const double sd = std::sqrt(x.row(r).squaredNorm() / static_cast<double>(x.cols()));
        if (sd > 0.0) x.row(r) /= sd;
      }
      break;
    case Normalization::unit_l2_columns: {
      Index zero = 0;
      for (Index c = 0; c < x.cols(); ++c) {
        const double norm = x.col(c).norm();
        if (norm > 0.0)
          x.col(c) /= norm;
        else
          ++zero;
      }
      if (zero && warnings)
        warnings->push_back("view '" + view.name + "': " + std::to_string(zero) +
                            " zero column(s) left unnormalized");
      break;
    }
  }
  return out;
}

/// Directed k-NN table. neighbors[i] excludes i and is sorted by ascending
/// distance, ties by lower sample index.
struct NeighborIndex {
  std::string view;
  Index k = 0;
  std::vector<std::vector<Index>> neighbors;
  std::vector<std::vector<double>> distances;

  Index sample_count() const { return static_cast<Index>(neighbors.size()); }
};

inline NeighborIndex build_neighbor_index(const ViewMatrix& view, Index k) {
  const Index n = view.samples();
  if (k < 1 || k > n - 1)
    throw input_error("neighbor count k=" + std::to_string(k) + " out of range [1, " +
                      std::to_string(n - 1) + "]");

  NeighborIndex index;
  index.view = view.name;
  index.k = k;
  index.neighbors.resize(n);
  index.distances.resize(n);

  std::vector<double> sq(n);
  std::vector<Index> order(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) sq[j] = (view.data.col(i) - view.data.col(j)).squaredNorm();
    order.resize(n);
    std::iota(order.begin(), order.end(), Index{0});
    order.erase(order.begin() + i);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](Index a, Index b) { return sq[a] < sq[b] || (sq[a] == sq[b] && a < b); });
    auto& nb = index.neighbors[i];
    auto& ds = index.distances[i];
    nb.assign(order.begin(), order.begin() + k);
    ds.resize(k);
    for (Index t = 0; t < k; ++t) ds[t] = std::sqrt(sq[nb[t]]);
  }
  return index;
}

}  // namespace cmsre
