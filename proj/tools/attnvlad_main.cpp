#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "attnvlad/error.hpp"
#include "attnvlad/pipeline.hpp"
#include "attnvlad/reports.hpp"

namespace fs = std::filesystem;
using namespace attnvlad;

namespace {

// Pipeline parameters accepted by every stage: an optional config file, then
// individual overrides.
struct ConfigFlags {
  std::string config_file;
  std::vector<std::pair<std::string, std::optional<std::string>>> overrides{
      {"layers", {}},     {"regions_per_layer", {}}, {"clusters", {}},  {"connectivity", {}},
      {"similarity_ratio", {}}, {"zero_threshold", {}}, {"normalization", {}}, {"row_l2", {}},
      {"seed", {}},       {"max_iters", {}},         {"tol", {}},       {"restarts", {}},
      {"jobs", {}}};

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key=value config file");
    for (auto& [key, value] : overrides) {
      std::string flag = "--" + key;
      for (auto& c : flag) if (c == '_') c = '-';
      app->add_option(flag, value, "override " + key);
    }
  }

  PipelineConfig resolve() const {
    PipelineConfig config;
    config.jobs = default_jobs();
    if (!config_file.empty()) config = load_config(config_file, config);
    for (const auto& [key, value] : overrides) {
      if (value) config.set(key, *value);
    }
    config.validate();
    return config;
  }
};

void print_failures(const StageSummary& summary) {
  for (const auto& f : summary.failures) {
    std::cerr << "  failed: " << f.image_id << ": " << f.message << "\n";
  }
}

int report_summary(const StageSummary& summary, std::string_view what) {
  std::cout << summary.processed.size() << " images " << what << "\n";
  if (!summary.ok()) {
    std::cerr << summary.failures.size() << " image(s) failed\n";
    print_failures(summary);
    return 1;
  }
  return 0;
}

void print_info() {
  std::cout << "attnvlad " << kVersion << "\n"
            << "formats:\n"
            << "  tensor    ATTNVLAD v" << kTensorFormatVersion << " (.atn, f32le)\n"
            << "  features  ATTNFEAT v" << kFeatureFormatVersion << " (.feat)\n"
            << "  codebook  ATTNCDBK v" << kCodebookFormatVersion << "\n"
            << "  vlad      ATTNVLD1 v" << kVladFormatVersion << " (.vlad)\n"
            << "default config:\n";
  std::cout << echo_config(PipelineConfig{});
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-layer regional attention VLAD place recognition"};
  app.require_subcommand(1);

  std::string input, out, dump, codebook, features, query, refs, matches, truth, plot, queries, work;
  std::size_t top = 0;
  std::optional<double> m_f;
  double u_e = 0.0, u_m = 0.0, voltage = 2.5;
  unsigned iterations = 3;

  ConfigFlags extract_flags, train_flags, encode_flags, match_flags, eval_flags, bench_flags, run_flags;

  auto* extract = app.add_subcommand("extract-regions", "tensors -> regional feature sets");
  extract->add_option("--input", input, "directory of .atn tensors")->required();
  extract->add_option("--out", out, "output directory for .feat files")->required();
  extract->add_option("--dump-regions", dump, "write selected regions as text records");
  extract_flags.attach(extract);

  auto* train = app.add_subcommand("train-codebook", "k-means codebook over feature sets");
  train->add_option("--input", input, "directory of .feat files")->required();
  train->add_option("--out", out, "codebook file")->required();
  train_flags.attach(train);

  auto* encode = app.add_subcommand("encode", "feature sets -> VLAD descriptors");
  encode->add_option("--features", features, "directory of .feat files")->required();
  encode->add_option("--codebook", codebook, "codebook file")->required();
  encode->add_option("--out", out, "output directory for .vlad files")->required();
  encode_flags.attach(encode);

  auto* match = app.add_subcommand("match", "rank references for each query");
  match->add_option("--query", query, ".vlad file or directory")->required();
  match->add_option("--refs", refs, "directory of reference .vlad files")->required();
  match->add_option("--top", top, "keep the best k references per query (0 = all)");
  match->add_option("--out", out, "matches JSON")->required();
  match_flags.attach(match);

  auto* evaluate = app.add_subcommand("evaluate", "precision-recall and AUC of a matches file");
  evaluate->add_option("--matches", matches, "matches JSON")->required();
  evaluate->add_option("--truth", truth, "ground-truth CSV")->required();
  evaluate->add_option("--out", out, "report JSON")->required();
  evaluate->add_option("--plot", plot, "PR curve as CSV, or gnuplot script for .gp");
  eval_flags.attach(evaluate);

  auto* bench = app.add_subcommand("bench", "timing, retrieval-time and power models");
  bench->add_option("--queries", queries, "query tensor directory")->required();
  bench->add_option("--refs", refs, "reference tensor directory")->required();
  bench->add_option("--codebook", codebook, "codebook file")->required();
  bench->add_option("--m-f", m_f, "forward-pass time in ms (default: measured tensor load)");
  bench->add_option("--u-e", u_e, "CPU utilization while encoding");
  bench->add_option("--u-m", u_m, "CPU utilization while matching");
  bench->add_option("--voltage", voltage, "supply voltage");
  bench->add_option("--iterations", iterations, "timing repetitions");
  bench->add_option("--truth", truth, "ground-truth CSV for PR data");
  bench->add_option("--out", out, "report JSON")->required();
  bench->add_option("--plot", plot, "PR curve as CSV, or gnuplot script for .gp");
  bench_flags.attach(bench);

  auto* run = app.add_subcommand("run", "extract, train, encode, match and evaluate");
  run->add_option("--queries", queries, "query tensor directory")->required();
  run->add_option("--refs", refs, "reference tensor directory")->required();
  run->add_option("--truth", truth, "ground-truth CSV")->required();
  run->add_option("--work", work, "directory for intermediate artifacts")->required();
  run->add_option("--out", out, "report JSON")->required();
  run->add_option("--codebook", codebook, "pre-trained codebook (default: train on refs)");
  run->add_option("--plot", plot, "PR curve as CSV, or gnuplot script for .gp");
  run_flags.attach(run);

  auto* info = app.add_subcommand("info", "version, formats and default config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*extract) {
      PipelineConfig config = extract_flags.resolve();
      fs::path dump_path = dump;
      StageSummary s = run_extract(input, out, config, dump.empty() ? nullptr : &dump_path);
      return report_summary(s, "processed");
    }
    if (*train) {
      PipelineConfig config = train_flags.resolve();
      Codebook cb = run_train_codebook(input, out, config);
      std::cout << "codebook V=" << cb.clusters() << " K=" << cb.dims()
                << " iterations=" << cb.meta().iterations << " inertia=" << cb.meta().inertia << "\n";
      return 0;
    }
    if (*encode) {
      PipelineConfig config = encode_flags.resolve();
      return report_summary(run_encode(features, codebook, out, config), "encoded");
    }
    if (*match) {
      PipelineConfig config = match_flags.resolve();
      auto results = run_match(query, refs, top, out, config.jobs);
      std::cout << results.size() << " queries matched\n";
      return 0;
    }
    if (*evaluate) {
      PipelineConfig config = eval_flags.resolve();
      PRCurve curve = run_evaluate(matches, truth, out, config);
      if (!plot.empty()) reports::write_pr_plot(curve, plot);
      std::cout << "queries=" << curve.num_queries << " recall@1=" << curve.recall_at_1
                << " auc=" << curve.auc << "\n";
      return 0;
    }
    if (*bench) {
      PipelineConfig config = bench_flags.resolve();
      BenchRequest req;
      req.queries = queries;
      req.refs = refs;
      req.codebook = codebook;
      if (!truth.empty()) req.truth = truth;
      req.forward_ms = m_f;
      req.encode_utilization = u_e;
      req.match_utilization = u_m;
      req.voltage = voltage;
      req.iterations = iterations;
      BenchResult result = bench_pipeline(req, config);
      reports::write_text_file(out, reports::bench_json(result, config,
                                                        reports::sha256_hex_of_file(codebook)));
      if (!plot.empty() && result.curve) reports::write_pr_plot(*result.curve, plot);
      std::cout << "M_q=" << result.retrieval_ms << " ms  mAh=" << result.power_mah << "\n";
      return 0;
    }
    if (*run) {
      PipelineConfig config = run_flags.resolve();
      FullRunPaths paths{queries, refs, truth, work, out, std::nullopt};
      if (!codebook.empty()) paths.codebook = codebook;
      PRCurve curve = run_full(paths, config);
      if (!plot.empty()) reports::write_pr_plot(curve, plot);
      std::cout << "queries=" << curve.num_queries << " recall@1=" << curve.recall_at_1
                << " auc=" << curve.auc << "\n";
      return 0;
    }
    if (*info) {
      print_info();
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
