// Batch front end: validate, embed, classify, retrieve, sweep-lambda, synth.
//
// Exit status: 0 success, 2 input/validation error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmsre.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct RunConfig {
  std::string manifest;
  std::string out = ".";
  std::string normalize = "zscore";
  cmsre::Index k = 10;
  std::optional<double> gamma;
  cmsre::Index d = 10;
  double lambda = 0.8;
  std::uint64_t seed = 0;
  int trials = 20;
  std::optional<cmsre::Index> test_count;  // default: 40% of samples
  std::optional<cmsre::Index> cutoff;
  std::string view_policy = "concat";
  int max_outer_iterations = 50;
  double convergence_tolerance = 1e-6;
  std::vector<double> lambdas = {0.0, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::string queries;
  std::string relevance;
  bool export_codes = false;
  // synth
  cmsre::Index n = 300;
  int classes = 3;
  double noise = 0.05;
  std::uint64_t synth_seed = 7;
};

/// Fills every option the user did not pass on the command line from the
/// JSON config file, so flags win over the file and the file over defaults.
void apply_config_file(const std::string& path, CLI::App& cmd, RunConfig& rc) {
  std::ifstream in(path);
  if (!in) throw cmsre::input_error("cannot open config file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw cmsre::input_error("malformed config file " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw cmsre::input_error("config file must hold a JSON object");

  auto given = [&](const char* flag) {
    const CLI::Option* opt = cmd.get_option_no_throw(flag);
    return opt != nullptr && opt->count() > 0;
  };
  try {
    auto take = [&](const char* key, const char* flag, auto& field) {
      if (doc.contains(key) && !given(flag)) field = doc[key].get<std::remove_reference_t<decltype(field)>>();
    };
    auto take_opt = [&](const char* key, const char* flag, auto& field) {
      if (doc.contains(key) && !given(flag) && !doc[key].is_null())
        field = doc[key].get<typename std::remove_reference_t<decltype(field)>::value_type>();
    };
    take("manifest", "--manifest", rc.manifest);
    take("out", "--out", rc.out);
    take("normalize", "--normalize", rc.normalize);
    take("k", "--k", rc.k);
    take_opt("gamma", "--gamma", rc.gamma);
    take("d", "--d", rc.d);
    take("lambda", "--lambda", rc.lambda);
    if (cmd.get_name() == "synth")
      take("seed", "--seed", rc.synth_seed);
    else
      take("seed", "--seed", rc.seed);
    take("trials", "--trials", rc.trials);
    take_opt("test_count", "--test-count", rc.test_count);
    take_opt("cutoff", "--cutoff", rc.cutoff);
    take("view_policy", "--view-policy", rc.view_policy);
    take("max_outer_iterations", "--max-iter", rc.max_outer_iterations);
    take("convergence_tolerance", "--tol", rc.convergence_tolerance);
    take("lambdas", "--lambdas", rc.lambdas);
    take("queries", "--queries", rc.queries);
    take("relevance", "--relevance", rc.relevance);
    take("n", "--n", rc.n);
    take("classes", "--classes", rc.classes);
    take("noise", "--noise", rc.noise);
  } catch (const json::exception& e) {
    throw cmsre::input_error(std::string("bad value in config file: ") + e.what());
  }
}

cmsre::PipelineConfig pipeline_config(const RunConfig& rc) {
  cmsre::PipelineConfig cfg;
  cfg.normalization = cmsre::parse_normalization(rc.normalize);
  if (rc.k < 1) throw cmsre::input_error("k must be >= 1");
  cfg.k = rc.k;
  cfg.coding.gamma = rc.gamma;
  cfg.cmsre.d = rc.d;
  cfg.cmsre.lambda = rc.lambda;
  cfg.cmsre.seed = rc.seed;
  cfg.cmsre.max_outer_iterations = rc.max_outer_iterations;
  cfg.cmsre.convergence_tolerance = rc.convergence_tolerance;
  cfg.coding.check();
  return cfg;
}

cmsre::MultiViewDataset load(const RunConfig& rc) {
  if (rc.manifest.empty()) throw cmsre::input_error("--manifest is required");
  return cmsre::load_dataset(rc.manifest);
}

fs::path output_dir(const RunConfig& rc) {
  const fs::path dir(rc.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw cmsre::input_error("cannot create output directory: " + dir.string());
  return dir;
}

cmsre::Index test_count_for(const RunConfig& rc, cmsre::Index n) {
  return rc.test_count.value_or(std::max<cmsre::Index>(1, (2 * n) / 5));
}

json effective_parameters(const RunConfig& rc, const cmsre::PipelineConfig& cfg, cmsre::Index n) {
  json p;
  p["manifest"] = rc.manifest;
  p["normalize"] = cmsre::to_string(cfg.normalization);
  p["k"] = cmsre::effective_k(cfg.k, n);
  p["gamma"] = cfg.coding.gamma ? json(*cfg.coding.gamma) : json("auto: 0.01*|x|^2/k");
  p["coding_max_iterations"] = cfg.coding.max_iterations;
  p["coding_tolerance"] = cfg.coding.tolerance;
  p["d"] = cfg.cmsre.d;
  p["lambda"] = cfg.cmsre.lambda;
  p["max_outer_iterations"] = cfg.cmsre.max_outer_iterations;
  p["convergence_tolerance"] = cfg.cmsre.convergence_tolerance;
  p["seed"] = cfg.cmsre.seed;
  return p;
}

std::string trace_csv(const cmsre::FitResult& fit) {
  std::string out = "iteration,objective,delta";
  for (const auto& e : fit.embeddings) out += ",recon_" + e.view;
  out += '\n';
  for (const auto& t : fit.trace) {
    out += std::to_string(t.iteration) + ',' + cmsre::csv::format_double(t.objective) + ',' +
           cmsre::csv::format_double(t.delta);
    for (double r : t.per_view_reconstruction) out += ',' + cmsre::csv::format_double(r);
    out += '\n';
  }
  return out;
}

void write_json(const fs::path& path, const json& doc) {
  cmsre::csv::write_atomic(path, doc.dump(2) + "\n");
}

// --- commands -------------------------------------------------------------

int cmd_validate(const RunConfig& rc) {
  const auto ds = load(rc);
  std::cout << "views=" << ds.view_count() << " samples=" << ds.sample_count() << " dims=[";
  for (std::size_t v = 0; v < ds.views.size(); ++v) std::cout << (v ? "," : "") << ds.views[v].dim();
  std::cout << "]";
  if (ds.labeled()) std::cout << " classes=" << ds.label_names.size();
  std::cout << "\n";
  return kExitOk;
}

int cmd_embed(const RunConfig& rc) {
  const auto ds = load(rc);
  const auto cfg = pipeline_config(rc);
  cfg.cmsre.check(ds.sample_count());
  const auto dir = output_dir(rc);

  const auto prepared = cmsre::prepare_views(ds, cfg);
  const auto fit = cmsre::fit_cmsre(prepared.operators, cfg.cmsre);

  json files = json::array();
  for (const auto& e : fit.embeddings) {
    const auto name = e.view + "_embedding.csv";
    cmsre::csv::write_matrix(dir / name, e.Y);
    files.push_back(name);
  }
  if (rc.export_codes) {
    for (const auto& c : prepared.codes) {
      const auto name = c.view + "_codes.csv";
      cmsre::csv::write_matrix(dir / name, c.S);
      files.push_back(name);
    }
  }
  cmsre::csv::write_atomic(dir / "trace.csv", trace_csv(fit));
  files.push_back("trace.csv");

  json meta;
  meta["command"] = "embed";
  meta["parameters"] = effective_parameters(rc, cfg, ds.sample_count());
  meta["samples"] = ds.sample_count();
  meta["views"] = json::array();
  for (const auto& v : ds.views) meta["views"].push_back({{"name", v.name}, {"dim", v.dim()}});
  meta["termination"] = cmsre::to_string(fit.termination);
  meta["sweeps"] = fit.trace.back().iteration;
  meta["final_objective"] = fit.trace.back().objective;
  meta["final_delta"] = fit.trace.back().delta;
  meta["mode"] = cfg.cmsre.lambda == 0.0 ? "decoupled (single-view) mode" : "co-regularized";
  meta["warnings"] = prepared.warnings;
  meta["files"] = files;
  write_json(dir / "metadata.json", meta);

  std::cout << "embedded " << ds.view_count() << " view(s) into d=" << cfg.cmsre.d << ": "
            << cmsre::to_string(fit.termination) << " after " << fit.trace.back().iteration
            << " sweep(s), objective " << fit.trace.back().objective << "\n";
  return kExitOk;
}

json report_json(const cmsre::ClassificationReport& rep) {
  json j;
  j["policy"] = cmsre::to_string(rep.policy);
  j["per_trial_accuracy"] = rep.per_trial_accuracy;
  if (rep.policy == cmsre::ViewPolicy::per_view_best) j["per_trial_view"] = rep.per_trial_view;
  j["mean"] = rep.mean;
  j["max"] = rep.max;
  j["termination"] = cmsre::to_string(rep.termination);
  j["sweeps"] = rep.sweeps;
  return j;
}

int cmd_classify(const RunConfig& rc) {
  const auto ds = load(rc);
  if (!ds.labeled()) throw cmsre::input_error("classify needs a labeled dataset");
  const auto cfg = pipeline_config(rc);
  cfg.cmsre.check(ds.sample_count());
  const auto policy = cmsre::parse_view_policy(rc.view_policy);
  const auto dir = output_dir(rc);

  const auto plan = cmsre::make_split_plan(ds.sample_count(), rc.trials,
                                           test_count_for(rc, ds.sample_count()), rc.seed);
  const auto rep = cmsre::evaluate_classification(ds, cfg, plan, policy);

  json doc = report_json(rep);
  doc["command"] = "classify";
  doc["parameters"] = effective_parameters(rc, cfg, ds.sample_count());
  doc["parameters"]["trials"] = plan.trials();
  doc["parameters"]["test_count"] = plan.test_count;
  doc["parameters"]["view_policy"] = cmsre::to_string(policy);
  write_json(dir / "classification.json", doc);

  std::string csv = "trial,accuracy\n";
  for (std::size_t t = 0; t < rep.per_trial_accuracy.size(); ++t)
    csv += std::to_string(t) + ',' + cmsre::csv::format_double(rep.per_trial_accuracy[t]) + '\n';
  cmsre::csv::write_atomic(dir / "classification.csv", csv);

  std::cout << "1NN accuracy over " << plan.trials() << " trial(s): mean " << rep.mean << " max "
            << rep.max << " (" << cmsre::to_string(policy) << ")\n";
  return kExitOk;
}

std::vector<cmsre::Index> read_index_list(const std::string& line, const std::string& where) {
  std::vector<cmsre::Index> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    for (auto& c : tok)
      if (c == ',') c = ' ';
    std::istringstream parts(tok);
    std::string part;
    while (parts >> part) {
      const double v = cmsre::csv::parse_double(part, where);
      if (v < 0 || v != static_cast<double>(static_cast<cmsre::Index>(v)))
        throw cmsre::input_error("bad sample index '" + part + "' in " + where);
      out.push_back(static_cast<cmsre::Index>(v));
    }
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cmsre::input_error("cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  while (!lines.empty() && cmsre::csv::trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

int cmd_retrieve(const RunConfig& rc) {
  if (rc.queries.empty())
    throw cmsre::input_error("retrieve needs --queries <file|all>");
  const auto ds = load(rc);
  const cmsre::Index n = ds.sample_count();
  const auto cfg = pipeline_config(rc);
  cfg.cmsre.check(n);
  const auto policy = cmsre::parse_view_policy(rc.view_policy);

  std::vector<cmsre::Index> queries;
  if (rc.queries == "all") {
    for (cmsre::Index i = 0; i < n; ++i) queries.push_back(i);
  } else {
    for (const auto& line : read_lines(rc.queries)) {
      const auto ids = read_index_list(line, rc.queries);
      queries.insert(queries.end(), ids.begin(), ids.end());
    }
  }
  for (auto q : queries)
    if (q >= n) throw cmsre::input_error("query index " + std::to_string(q) + " out of range");

  std::vector<std::vector<cmsre::Index>> relevant;
  if (!rc.relevance.empty()) {
    const auto lines = read_lines(rc.relevance);
    if (lines.size() != queries.size())
      throw cmsre::input_error("relevance file has " + std::to_string(lines.size()) +
                               " lines for " + std::to_string(queries.size()) + " queries");
    for (const auto& line : lines) relevant.push_back(read_index_list(line, rc.relevance));
  } else if (ds.labeled()) {
    relevant = cmsre::relevance_from_labels(ds.labels, queries);
  } else {
    throw cmsre::input_error("retrieve needs --relevance or a labeled dataset");
  }
  const auto dir = output_dir(rc);

  const auto prepared = cmsre::prepare_views(ds, cfg);
  const auto fit = cmsre::fit_cmsre(prepared.operators, cfg.cmsre);

  cmsre::RetrievalReport rep;
  std::string chosen = "concat";
  if (policy == cmsre::ViewPolicy::concatenate) {
    rep = cmsre::retrieve(cmsre::stack_embeddings(fit.embeddings), queries, relevant, rc.cutoff);
  } else {
    bool first = true;
    for (const auto& e : fit.embeddings) {
      auto r = cmsre::retrieve(e.Y, queries, relevant, rc.cutoff);
      if (first || r.map > rep.map) {
        rep = r;
        chosen = e.view;
        first = false;
      }
    }
  }

  json doc;
  doc["command"] = "retrieve";
  doc["parameters"] = effective_parameters(rc, cfg, n);
  doc["parameters"]["view_policy"] = cmsre::to_string(policy);
  doc["view"] = chosen;
  doc["precision"] = rep.precision_at_n;
  doc["recall"] = rep.recall_at_n;
  doc["map"] = rep.map;
  doc["f1"] = rep.f1;
  doc["cutoff"] = rep.cutoff == 0 ? json("relevant-set size") : json(rep.cutoff);
  doc["queries"] = rep.evaluated_queries;
  doc["skipped_queries"] = rep.skipped_queries;
  doc["termination"] = cmsre::to_string(fit.termination);
  write_json(dir / "retrieval.json", doc);

  if (rep.skipped_queries)
    std::cerr << "warning: " << rep.skipped_queries << " query(ies) with empty relevant set skipped\n";
  std::cout << "P=" << rep.precision_at_n << " R=" << rep.recall_at_n << " MAP=" << rep.map
            << " F1=" << rep.f1 << " (" << chosen << ")\n";
  return kExitOk;
}

int cmd_sweep(const RunConfig& rc) {
  const auto ds = load(rc);
  if (!ds.labeled()) throw cmsre::input_error("sweep-lambda needs a labeled dataset");
  if (rc.lambdas.empty()) throw cmsre::input_error("sweep-lambda needs at least one lambda");
  const auto cfg = pipeline_config(rc);
  cfg.cmsre.check(ds.sample_count());
  const auto policy = cmsre::parse_view_policy(rc.view_policy);
  const auto dir = output_dir(rc);

  const auto plan = cmsre::make_split_plan(ds.sample_count(), rc.trials,
                                           test_count_for(rc, ds.sample_count()), rc.seed);
  const auto rows = cmsre::sweep_lambda(ds, rc.lambdas, cfg, plan, policy);

  std::string csv = "lambda,mean_accuracy,max_accuracy,trials\n";
  for (const auto& r : rows) {
    csv += cmsre::csv::format_double(r.lambda) + ',' + cmsre::csv::format_double(r.mean_accuracy) +
           ',' + cmsre::csv::format_double(r.max_accuracy) + ',' + std::to_string(r.trials) + '\n';
    std::cout << "lambda=" << r.lambda << " mean=" << r.mean_accuracy << " max=" << r.max_accuracy
              << "\n";
  }
  cmsre::csv::write_atomic(dir / "lambda_sweep.csv", csv);
  return kExitOk;
}

int cmd_synth(const RunConfig& rc) {
  cmsre::SyntheticSpec spec{rc.n, rc.classes, rc.noise, rc.synth_seed};
  const auto ds = cmsre::generate_synthetic(spec);
  const auto manifest = cmsre::write_dataset(ds, output_dir(rc));
  std::cout << "wrote " << manifest.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Co-regularized multi-view sparse reconstruction embedding"};
  app.require_subcommand(1);
  RunConfig rc;
  std::string config_path;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--manifest", rc.manifest, "Dataset manifest (JSON)");
    cmd->add_option("--out", rc.out, "Output directory");
    cmd->add_option("--config", config_path, "JSON config file; flags take precedence");
  };
  auto model = [&](CLI::App* cmd) {
    cmd->add_option("--normalize", rc.normalize, "Per-view normalization")
        ->check(CLI::IsMember({"none", "zscore", "unit"}));
    cmd->add_option("--k", rc.k, "Neighbors per sample (clamped to n-1)");
    cmd->add_option("--gamma", rc.gamma, "l1 weight (default 0.01*|x|^2/k)");
    cmd->add_option("--d", rc.d, "Embedding dimension");
    cmd->add_option("--lambda", rc.lambda, "Co-regularization weight");
    cmd->add_option("--max-iter", rc.max_outer_iterations, "Maximum outer sweeps");
    cmd->add_option("--tol", rc.convergence_tolerance, "Relative objective tolerance");
    cmd->add_option("--seed", rc.seed, "Seed for split plans");
  };
  auto eval = [&](CLI::App* cmd) {
    cmd->add_option("--trials", rc.trials, "Random splits");
    cmd->add_option("--test-count", rc.test_count, "Held-out samples per split (default 40%)");
    cmd->add_option("--view-policy", rc.view_policy, "best | concat")
        ->check(CLI::IsMember({"best", "concat"}));
  };

  auto* validate = app.add_subcommand("validate", "Check a manifest and print its shape");
  common(validate);

  auto* embed = app.add_subcommand("embed", "Fit and write per-view embeddings and the trace");
  common(embed);
  model(embed);
  embed->add_flag("--export-codes", rc.export_codes, "Also write each view's coefficient matrix");

  auto* classify = app.add_subcommand("classify", "Repeated random-split 1NN classification");
  common(classify);
  model(classify);
  eval(classify);

  auto* retrieve = app.add_subcommand("retrieve", "L1 retrieval: precision, recall, MAP, F1");
  common(retrieve);
  model(retrieve);
  retrieve->add_option("--view-policy", rc.view_policy, "best | concat")
      ->check(CLI::IsMember({"best", "concat"}));
  retrieve->add_option("--cutoff", rc.cutoff, "Rank cutoff N (default: relevant-set size)");
  retrieve->add_option("--queries", rc.queries, "File of query indices, or 'all'");
  retrieve->add_option("--relevance", rc.relevance,
                       "Per-query relevant indices, one line per query (default: same label)");

  auto* sweep = app.add_subcommand("sweep-lambda", "Classification accuracy per lambda");
  common(sweep);
  model(sweep);
  eval(sweep);
  sweep->add_option("--lambdas", rc.lambdas, "Lambda values")->delimiter(',');

  auto* synth = app.add_subcommand("synth", "Write a labeled synthetic two-view dataset");
  synth->add_option("--out", rc.out, "Output directory");
  synth->add_option("--config", config_path, "JSON config file; flags take precedence");
  synth->add_option("--n", rc.n, "Samples");
  synth->add_option("--classes", rc.classes, "Classes");
  synth->add_option("--noise", rc.noise, "Noise standard deviation");
  synth->add_option("--seed", rc.synth_seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    if (!config_path.empty()) apply_config_file(config_path, *cmd, rc);
    if (cmd == validate) return cmd_validate(rc);
    if (cmd == embed) return cmd_embed(rc);
    if (cmd == classify) return cmd_classify(rc);
    if (cmd == retrieve) return cmd_retrieve(rc);
    if (cmd == sweep) return cmd_sweep(rc);
    if (cmd == synth) return cmd_synth(rc);
  } catch (const cmsre::numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const cmsre::input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
