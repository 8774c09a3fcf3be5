#pragma once

// Desk-scale two-view benchmark. Each class is a curved 1-D manifold in a
// 3-D latent space; view 1 is a random linear map of the latent points to
// 20-D, view 2 a different random map of a nonlinearly warped copy. Both
// views get independent isotropic Gaussian noise.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "cmsre/csv.hpp"
#include "cmsre/dataset.hpp"
#include "cmsre/error.hpp"
#include "cmsre/random.hpp"

namespace cmsre {

struct SyntheticSpec {
  Index n = 300;
  int classes = 3;
  double noise = 0.05;
  std::uint64_t seed = 7;

  void check() const {
    if (classes < 1) throw input_error("classes must be >= 1");
    if (n < 4 * static_cast<Index>(classes)) throw input_error("synthetic data needs n >= 4 * classes");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw input_error("noise must be finite and >= 0");
  }
};

inline constexpr Index kSyntheticAmbientDim = 20;

inline MultiViewDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.check();
  constexpr Index latent = 3;
  const Index n = spec.n;
  Rng rng(spec.seed);

  auto random_map = [&] {
    Eigen::MatrixXd a(kSyntheticAmbientDim, latent);
    for (Index c = 0; c < latent; ++c)
      for (Index r = 0; r < kSyntheticAmbientDim; ++r) a(r, c) = rng.normal();
    return Eigen::MatrixXd(a / std::sqrt(static_cast<double>(kSyntheticAmbientDim)));
  };
  const Eigen::MatrixXd map1 = random_map();
  const Eigen::MatrixXd map2 = random_map();

  Eigen::MatrixXd z(latent, n);
  std::vector<std::string> tokens;
  tokens.reserve(n);
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % spec.classes);
    const double t = rng.uniform();
    const double phase = 2.0 * std::numbers::pi * c / spec.classes;
    // Bent segment with class-specific offset, direction and length.
    const double len = 1.2 * (1.0 + 0.5 * c);
    z(0, i) = 1.5 * std::cos(phase) + len * (t - 0.5) * std::cos(phase + 1.3);
    z(1, i) = 1.5 * std::sin(phase) + len * (t - 0.5) * std::sin(phase + 1.3);
    z(2, i) = 0.6 * std::sin(std::numbers::pi * t) + 0.3 * c;
    tokens.push_back("c" + std::to_string(c));
  }

  Eigen::MatrixXd warped(latent, n);
  for (Index i = 0; i < n; ++i) {
    const double a = z(0, i), b = z(1, i), c = z(2, i);
    warped(0, i) = a + 0.4 * std::sin(2.0 * b);
    warped(1, i) = b + 0.4 * std::sin(2.0 * a);
    warped(2, i) = c + 0.25 * a * b;
  }

  auto noisy = [&](Eigen::MatrixXd x) {
    for (Index c = 0; c < x.cols(); ++c)
      for (Index r = 0; r < x.rows(); ++r) x(r, c) += spec.noise * rng.normal();
    return x;
  };

  MultiViewDataset ds;
  ds.views.push_back({"linear", noisy(map1 * z)});
  ds.views.push_back({"warped", noisy(map2 * warped)});
  attach_labels(ds, tokens);
  validate(ds);
  return ds;
}

/// Writes `<dir>/manifest.json`, one CSV per view and `labels.txt`.
/// Returns the manifest path.
inline std::filesystem::path write_dataset(const MultiViewDataset& ds,
                                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["views"] = nlohmann::json::array();
  for (const auto& v : ds.views) {
    const std::string file = v.name + ".csv";
    csv::write_matrix(dir / file, v.data);
    manifest["views"].push_back({{"name", v.name}, {"path", file}});
  }
  if (ds.labeled()) {
    std::string text;
    for (int l : ds.labels) text += ds.label_names[l] + "\n";
    csv::write_atomic(dir / "labels.txt", text);
    manifest["labels"] = "labels.txt";
  } else {
    manifest["labels"] = nullptr;
  }
  const auto path = dir / "manifest.json";
  csv::write_atomic(path, manifest.dump(2) + "\n");
  return path;
}

}  // namespace cmsre
