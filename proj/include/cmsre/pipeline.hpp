#pragma once

// End-to-end fit: normalize each view, build its neighbor table, solve the
// reconstruction codes and run the co-regularized solver.

#include <algorithm>
#include <string>
#include <vector>

#include "cmsre/dataset.hpp"
#include "cmsre/embedding.hpp"
#include "cmsre/sparse_coding.hpp"

namespace cmsre {

struct PipelineConfig {
  Normalization normalization = Normalization::zscore;
  Index k = 10;  // clamped to n - 1
  CodingConfig coding;
  CmsreConfig cmsre;
};

inline Index effective_k(Index requested, Index n) { return std::clamp<Index>(requested, 1, n - 1); }

struct PreparedViews {
  std::vector<CoefficientMatrix> codes;
  std::vector<ReconstructionOperator> operators;
  std::vector<std::string> warnings;
};

inline PreparedViews prepare_views(const MultiViewDataset& ds, const PipelineConfig& cfg) {
  validate(ds);
  PreparedViews out;
  const Index k = effective_k(cfg.k, ds.sample_count());
  for (const auto& raw : ds.views) {
    const ViewMatrix view = normalize_view(raw, cfg.normalization, &out.warnings);
    const NeighborIndex index = build_neighbor_index(view, k);
    out.codes.push_back(solve_view_codes(view, index, cfg.coding));
    if (!out.codes.back().fallback_samples.empty())
      out.warnings.push_back("view '" + view.name + "': " +
                             std::to_string(out.codes.back().fallback_samples.size()) +
                             " sample(s) fell back to uniform weights");
    out.operators.push_back(build_operator(out.codes.back()));
  }
  return out;
}

}  // namespace cmsre
