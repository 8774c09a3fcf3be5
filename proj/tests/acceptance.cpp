// Acceptance run: prints one PASS/FAIL/SKIP line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <cmsre.hpp>

#include "retrieval_cases.hpp"
#include "support.hpp"

using namespace cmsre;
namespace ts = testing_support;

namespace {

enum class Outcome { pass, fail, skip };

struct Verdict {
  Outcome outcome;
  std::string detail;
};

Verdict pass(std::string d) { return {Outcome::pass, std::move(d)}; }
Verdict fail(std::string d) { return {Outcome::fail, std::move(d)}; }
Verdict skip(std::string d) { return {Outcome::skip, std::move(d)}; }

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string cli() { return std::string("'") + CMSRE_CLI_PATH + "'"; }
std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

Verdict sparse_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  const int dims[] = {2, 5, 10};
  const double gammas[] = {0.0, 0.01, 0.1};
  double worst_excess = -1e300, worst_sum = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    CodingConfig cfg;
    cfg.gamma = gammas[rng.below(3)];
    const Index m = dims[rng.below(3)];
    const Index k = 2 + static_cast<Index>(rng.below(3));
    const Eigen::VectorXd x = ts::random_matrix(rng, m, 1).col(0);
    const Eigen::MatrixXd nb = ts::random_matrix(rng, m, k);
    const auto code = solve_code(x, nb, cfg);
    const double oracle = code_objective(x, nb, oracle_code(x, nb, cfg), *cfg.gamma);
    worst_excess = std::max(worst_excess, code.objective - oracle);
    worst_sum = std::max(worst_sum, std::abs(code.weights.sum() - 1.0));
  }
  const double secs = seconds_since(t0);
  const std::string d = "max objective excess " + fmt(worst_excess) + ", max |sum-1| " +
                        fmt(worst_sum) + ", " + fmt(secs) + " s";
  return worst_excess <= 1e-6 && worst_sum <= 1e-8 && secs < 10.0 ? pass(d) : fail(d);
}

Verdict operator_invariants() {
  Rng rng(99);
  double asym = 0.0, min_eig = 1e300, null = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = trial % 2 ? 100 : 20;
    const Index k = 2 + static_cast<Index>(rng.below(8));
    const auto op = build_operator({"v", ts::random_valid_s(rng, n, k), {}});
    asym = std::max(asym, (op.M - op.M.transpose()).cwiseAbs().maxCoeff());
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(op.M,
                                    Eigen::EigenvaluesOnly).eigenvalues().minCoeff());
    null = std::max(null, (op.M * Eigen::VectorXd::Ones(n)).cwiseAbs().maxCoeff());
  }
  const std::string d = "asymmetry " + fmt(asym) + ", min eigenvalue " + fmt(min_eig) +
                        ", |M 1|_inf " + fmt(null);
  return asym <= 1e-10 && min_eig >= -1e-8 && null <= 1e-8 ? pass(d) : fail(d);
}

Verdict disagreement_identity() {
  Rng rng(314);
  double gram_gap = 0.0, shortcut_gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index d = trial % 2 ? 5 : 2;
    const Index n = (trial / 2) % 2 ? 50 : 10;
    const Embedding a{"a", ts::random_row_orthonormal(rng, d, n)};
    const Embedding b{"b", ts::random_row_orthonormal(rng, d, n)};
    const Eigen::MatrixXd ka = a.Y.transpose() * a.Y, kb = b.Y.transpose() * b.Y;
    const double tr = (ka * kb).trace(), dd = static_cast<double>(d);
    gram_gap = std::max(gram_gap, std::abs(gram_disagreement(a, b) - (2.0 / dd - 2.0 / (dd * dd) * tr)));
    shortcut_gap = std::max(shortcut_gap, std::abs(disagreement(a, b) + tr));
  }
  const std::string d = "max gap gram-vs-trace " + fmt(gram_gap) + ", shortcut-vs-trace " + fmt(shortcut_gap);
  return gram_gap <= 1e-10 && shortcut_gap <= 1e-10 ? pass(d) : fail(d);
}

Verdict lambda_zero_decoupling() {
  const auto ds = generate_synthetic({});
  PipelineConfig cfg;
  cfg.cmsre.lambda = 0.0;
  const auto prepared = prepare_views(ds, cfg);
  const auto fit = fit_cmsre(prepared.operators, cfg.cmsre);
  double worst = 0.0;
  for (std::size_t v = 0; v < prepared.operators.size(); ++v) {
    const auto single = single_view_embed(prepared.operators[v], cfg.cmsre.d);
    worst = std::max(worst, principal_angles(fit.embeddings[v].Y, single.Y).maxCoeff());
  }
  const std::string d = "max principal angle " + fmt(worst) + " rad";
  return worst < 1e-6 ? pass(d) : fail(d);
}

Verdict convergence(const ts::TempDir& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = dir / "bench";
  const auto out = dir / "bench_embed";
  auto r = ts::run_command(cli() + " synth --out " + q(data));
  if (r.status != 0) return fail("synth failed: " + r.output);
  r = ts::run_command(cli() + " embed --manifest " + q(data / "manifest.json") + " --out " + q(out) +
                      " --d 10 --lambda 0.8");
  if (r.status != 0) return fail("embed failed: " + r.output);
  const double secs = seconds_since(t0);

  std::istringstream trace(ts::slurp(out / "trace.csv"));
  std::string line;
  std::getline(trace, line);
  int first_below = -1;
  double delta_15 = -1.0;
  while (std::getline(trace, line)) {
    std::istringstream fields(line);
    std::string it, obj, delta;
    std::getline(fields, it, ',');
    std::getline(fields, obj, ',');
    std::getline(fields, delta, ',');
    const int i = std::stoi(it);
    const double dv = std::stod(delta);
    if (i == 15) delta_15 = dv;
    if (i >= 1 && dv < 1e-4 && first_below < 0) first_below = i;
  }
  const std::string d = "first sweep with delta < 1e-4: " + std::to_string(first_below) +
                        ", delta at sweep 15: " + fmt(delta_15) + ", " + fmt(secs) + " s";
  return first_below >= 1 && first_below <= 15 && secs < 60.0 ? pass(d) : fail(d);
}

Verdict multiview_benefit() {
  const auto ds = generate_synthetic({300, 3, 0.5, 7});
  const PipelineConfig cfg;
  const auto plan = make_split_plan(ds.sample_count(), 20, (2 * ds.sample_count()) / 5, 0);
  const auto rows = sweep_lambda(ds, {0.0, 0.8}, cfg, plan, ViewPolicy::concatenate);
  const double gain = rows[1].mean_accuracy - rows[0].mean_accuracy;
  const std::string d = "mean accuracy lambda=0: " + fmt(rows[0].mean_accuracy) +
                        ", lambda=0.8: " + fmt(rows[1].mean_accuracy) + ", gain " +
                        fmt(100.0 * gain) + " points";
  return gain >= 0.02 ? pass(d) : fail(d);
}

Verdict three_sources() {
  const char* manifest = std::getenv("CMSRE_3SOURCES_MANIFEST");
  if (!manifest || !*manifest) return skip("set CMSRE_3SOURCES_MANIFEST to a local 3Sources manifest");
  const auto ds = load_dataset(manifest);
  PipelineConfig cfg;
  const auto plan = make_split_plan(ds.sample_count(), 20, 69, 0);
  const auto rep = evaluate_classification(ds, cfg, plan, ViewPolicy::concatenate);
  const std::string d = "mean accuracy " + fmt(100.0 * rep.mean) + "% (target 84.58 +- 6)";
  return std::abs(100.0 * rep.mean - 84.58) <= 6.0 ? pass(d) : fail(d);
}

Verdict retrieval_suite() {
  const Eigen::MatrixXd y = ts::ranking_embedding();
  for (const auto& c : ts::ranking_cases()) {
    const auto rep = retrieve(y, {0}, {ts::relevant_samples(c)}, c.cutoff);
    // Exact up to the last bit of rounding in the hand-written fractions.
    auto same = [](double a, double b) { return std::abs(a - b) <= 1e-15; };
    if (!same(rep.precision_at_n, c.precision) || !same(rep.recall_at_n, c.recall) ||
        !same(rep.map, c.ap) || !same(rep.f1, c.f1))
      return fail(std::string("hand-computed case ") + c.name + " differs: P=" +
                  fmt(rep.precision_at_n) + " R=" + fmt(rep.recall_at_n) + " AP=" + fmt(rep.map) +
                  " F1=" + fmt(rep.f1));
  }

  Rng rng(5);
  const Index n = 1000;
  const Eigen::MatrixXd noise = ts::random_matrix(rng, 10, n);
  std::vector<int> labels(n);
  for (Index i = 0; i < n; ++i) labels[i] = static_cast<int>(i / 100);
  std::vector<Index> queries;
  for (int c = 0; c < 10; ++c)
    for (int j = 0; j < 10; ++j) queries.push_back(c * 100 + static_cast<Index>(rng.below(100)));
  const auto rep = retrieve(noise, queries, relevance_from_labels(labels, queries), Index{10});
  const double p = 99.0 / 999.0;
  const double se = std::sqrt(p * (1.0 - p) / (10.0 * static_cast<double>(queries.size())));
  const std::string d = "3 hand-computed rankings exact; random precision@10 " +
                        fmt(rep.precision_at_n) + " vs chance " + fmt(p) + " (se " + fmt(se) + ")";
  return std::abs(rep.precision_at_n - p) <= 3.0 * se ? pass(d) : fail(d);
}

Verdict determinism(const ts::TempDir& dir) {
  const auto data = dir / "det";
  auto r = ts::run_command(cli() + " synth --out " + q(data) + " --n 120 --noise 0.2");
  if (r.status != 0) return fail("synth failed: " + r.output);
  const std::string args = " --manifest " + q(data / "manifest.json") + " --d 4 --seed 3 --trials 5";
  for (const char* run : {"run1", "run2"}) {
    r = ts::run_command(cli() + " embed --manifest " + q(data / "manifest.json") + " --d 4 --out " +
                        q(dir / run));
    if (r.status != 0) return fail("embed failed: " + r.output);
    r = ts::run_command(cli() + " classify" + args + " --out " + q(dir / run));
    if (r.status != 0) return fail("classify failed: " + r.output);
  }
  int compared = 0;
  for (const char* f : {"linear_embedding.csv", "warped_embedding.csv", "trace.csv", "classification.csv"}) {
    if (ts::slurp(dir / "run1" / f) != ts::slurp(dir / "run2" / f)) return fail(std::string(f) + " differs");
    ++compared;
  }
  return pass(std::to_string(compared) + " CSV files bit-identical across runs");
}

}  // namespace

int main() {
  ts::TempDir dir("acceptance");
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"1 sparse solver matches brute-force oracle", sparse_oracle},
      {"2 reconstruction operator invariants", operator_invariants},
      {"3 disagreement trace identity", disagreement_identity},
      {"4 lambda=0 decouples the views", lambda_zero_decoupling},
      {"5 objective stabilizes within 15 sweeps", [&] { return convergence(dir); }},
      {"6 co-regularization beats single view", multiview_benefit},
      {"7 3Sources accuracy (optional)", three_sources},
      {"8 retrieval metrics", retrieval_suite},
      {"9 CLI outputs are deterministic", [&] { return determinism(dir); }},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = fail(std::string("exception: ") + e.what());
    }
    const char* tag = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::fail ? "FAIL" : "SKIP";
    if (v.outcome == Outcome::fail) ++failures;
    std::cout << tag << "  [" << name << "] " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
