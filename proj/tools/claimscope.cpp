// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors
//
// Batch front end: analyze one target, sweep every target, export attention
// files, or run the HTTP service.
//
// Exit codes: 0 success, 2 usage or input error, 3 backend failure.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "claimscope/attention.hpp"
#include "claimscope/document.hpp"
#include "claimscope/error.hpp"
#include "claimscope/fusion.hpp"
#include "claimscope/nli.hpp"
#include "claimscope/saliency.hpp"
#include "claimscope/service.hpp"

namespace cs = claimscope;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitBackend = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(cs::ErrorCode code) {
  switch (code) {
    case cs::ErrorCode::kInvalidArgument:
    case cs::ErrorCode::kEmptyDocument:
    case cs::ErrorCode::kOffsetOutOfBounds:
    case cs::ErrorCode::kIndexOutOfRange:
    case cs::ErrorCode::kSelfPair:
    case cs::ErrorCode::kTextTooLong:
      return kExitUsage;
    default:
      return kExitBackend;
  }
}

struct BackendOptions {
  std::string backend = "fixture";
  fs::path fixture_dir = fs::path(CLAIMSCOPE_DATA_DIR) / "fixtures";
  fs::path attn_file;
  fs::path nli_cache;
  std::string attn_model{cs::kDefaultAttentionModel};
  std::string nli_model{cs::kDefaultNliModel};
  int layer = -1;
  std::string head_reduction = "mean";
  std::size_t max_tokens = 4096;
  std::string device = "cpu";
  double min_confidence = 0.0;
  std::size_t batch_size = 16;
  std::string stats_rule = "off_diagonal_nonzero";
};

struct PolicyOptions {
  std::string mode = "relative";
  std::optional<double> k;
  std::optional<double> tau;
  std::optional<std::size_t> m;
  std::optional<double> tau_confirm;
  std::string direction = "max_both";
};

struct OutputOptions {
  std::string format = "json";
  fs::path out;
  bool timings = false;
};

void add_backend_flags(CLI::App* cmd, BackendOptions& o) {
  cmd->add_option("--backend", o.backend, "Attention and NLI source")
      ->check(CLI::IsMember({"model", "fixture", "files"}));
  cmd->add_option("--fixture-dir", o.fixture_dir, "Directory of committed .attn files and nli_fixture.jsonl");
  cmd->add_option("--attn-file", o.attn_file, "Attention file for --backend files");
  cmd->add_option("--nli-cache", o.nli_cache,
                  "Verdict file: replayed with --backend files, read and appended with --backend model");
  cmd->add_option("--attn-model", o.attn_model, "Causal LM for attention extraction");
  cmd->add_option("--nli-model", o.nli_model, "NLI checkpoint");
  cmd->add_option("--layer", o.layer, "Attention layer; negative counts from the last");
  cmd->add_option("--head-reduction", o.head_reduction, "mean, max or single:H");
  cmd->add_option("--max-tokens", o.max_tokens, "Longest document the attention model accepts");
  cmd->add_option("--device", o.device, "Torch device for model backends");
  cmd->add_option("--min-confidence", o.min_confidence, "Lowest deciding NLI probability that labels a pair");
  cmd->add_option("--batch-size", o.batch_size, "Ordered pairs per NLI backend call");
  cmd->add_option("--stats-rule", o.stats_rule, "Entries entering the document mean and deviation")
      ->check(CLI::IsMember({"off_diagonal_nonzero", "off_diagonal_all"}));
}

void add_policy_flags(CLI::App* cmd, PolicyOptions& p) {
  cmd->add_option("--policy", p.mode, "Threshold mode")->check(CLI::IsMember({"absolute", "relative", "top_m"}));
  cmd->add_option("--k", p.k, "Relative mode: tau = mean + k * std");
  cmd->add_option("--tau", p.tau, "Absolute mode threshold");
  cmd->add_option("--m", p.m, "top_m mode: number of candidates");
  cmd->add_option("--tau-confirm", p.tau_confirm, "Extra saliency bar for NLI-labeled sentences");
  cmd->add_option("--direction", p.direction, "Which attention direction scores a pair")
      ->check(CLI::IsMember({"outgoing", "incoming", "max_both"}));
}

void add_output_flags(CLI::App* cmd, OutputOptions& o, bool with_format) {
  if (with_format) {
    cmd->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "html", "terminal"}));
  }
  cmd->add_option("--out", o.out, "Write the artifact here instead of stdout");
  cmd->add_flag("--timings", o.timings, "Keep stage timings in JSON output (otherwise zeroed)");
}

cs::ThresholdPolicy build_policy(const PolicyOptions& p) {
  cs::ThresholdPolicy policy;
  policy.mode = cs::parse_threshold_mode(p.mode);
  policy.direction = cs::parse_direction(p.direction);
  if (p.tau && policy.mode != cs::ThresholdMode::kAbsolute) throw UsageError("--tau needs --policy absolute");
  if (p.k && policy.mode != cs::ThresholdMode::kRelative) throw UsageError("--k needs --policy relative");
  if (p.m && policy.mode != cs::ThresholdMode::kTopM) throw UsageError("--m needs --policy top_m");
  switch (policy.mode) {
    case cs::ThresholdMode::kAbsolute:
      if (!p.tau) throw UsageError("--policy absolute needs --tau");
      policy.tau = *p.tau;
      break;
    case cs::ThresholdMode::kRelative:
      policy.k = p.k.value_or(1.0);
      break;
    case cs::ThresholdMode::kTopM:
      policy.m = p.m.value_or(1);
      break;
  }
  policy.tau_confirm = p.tau_confirm;
  policy.validate();
  return policy;
}

std::string read_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& content, const fs::path& out) {
  if (out.empty()) {
    std::cout << content;
    std::cout.flush();
    return;
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f || !(f << content)) throw cs::Error(cs::ErrorCode::kIOFailure, "cannot write " + out.string());
}

struct Backends {
  std::unique_ptr<cs::AttentionProvider> attention;
  std::shared_ptr<cs::NliBackend> nli;
  std::shared_ptr<cs::VerdictCache> cache;
  cs::NliConfig nli_config;
};

Backends make_backends(const BackendOptions& o, bool need_nli) {
  Backends b;
  cs::ProviderConfig pc;
  pc.model_id = o.attn_model;
  pc.layer_index = o.layer;
  pc.head_reduction = cs::HeadReduction::parse(o.head_reduction);
  pc.max_tokens = o.max_tokens;
  pc.device = o.device;

  b.nli_config.model_id = o.nli_model;
  b.nli_config.min_confidence = o.min_confidence;
  b.nli_config.batch_size = o.batch_size;
  b.nli_config.device = o.device;

  if (o.backend == "files") {
    if (o.attn_file.empty()) throw UsageError("--backend files needs --attn-file");
    pc.backend = cs::AttentionBackend::kFile;
    pc.attention_path = o.attn_file;
    b.nli_config.backend = cs::NliBackendKind::kFixture;
    b.nli_config.fixture_path = o.nli_cache.empty() ? o.fixture_dir / "nli_fixture.jsonl" : o.nli_cache;
  } else if (o.backend == "fixture") {
    if (!o.attn_file.empty()) throw UsageError("--attn-file needs --backend files");
    pc.backend = cs::AttentionBackend::kFile;
    pc.attention_path = o.fixture_dir;
    pc.synthesize_missing = true;
    b.nli_config.backend = cs::NliBackendKind::kFixture;
    b.nli_config.fixture_path = o.fixture_dir / "nli_fixture.jsonl";
  } else {
    if (!o.attn_file.empty()) throw UsageError("--attn-file needs --backend files");
    pc.backend = cs::AttentionBackend::kModel;
    b.nli_config.backend = cs::NliBackendKind::kModel;
    if (!o.nli_cache.empty()) b.cache = std::make_shared<cs::VerdictCache>(o.nli_cache);
  }
  b.nli_config.validate();
  b.attention = cs::make_attention_provider(pc);
  if (need_nli) b.nli = cs::make_nli_backend(b.nli_config);
  return b;
}

void strip_timings(cs::AnalysisResult& r, bool keep) {
  if (!keep) r.timings = {};
}

int run_analyze(const fs::path& input, std::size_t target, const BackendOptions& bo, const PolicyOptions& po,
                const OutputOptions& oo) {
  const cs::ThresholdPolicy policy = build_policy(po);
  const cs::RenderFormat format = cs::parse_render_format(oo.format);
  const cs::Document doc = cs::segment(read_input(input));
  if (target >= doc.size()) {
    throw UsageError("--target-index " + std::to_string(target) + " is out of range; the document has " +
                     std::to_string(doc.size()) + " sentences");
  }
  Backends b = make_backends(bo, true);
  cs::NliEngine engine(b.nli, b.nli_config, b.cache);
  cs::AnalysisResult result =
      cs::analyze(doc, target, *b.attention, engine, policy, cs::parse_stats_rule(bo.stats_rule));
  strip_timings(result, oo.timings);
  write_output(cs::render_annotations(result, doc, format), oo.out);
  for (const auto& [index, message] : result.failures) {
    std::cerr << "claimscope: NLI failed for sentence " << index << ": " << message << "\n";
  }
  return result.complete() ? kExitOk : kExitBackend;
}

int run_sweep(const fs::path& input, const BackendOptions& bo, const PolicyOptions& po, const OutputOptions& oo,
              std::size_t jobs, const fs::path& summary_out) {
  const cs::ThresholdPolicy policy = build_policy(po);
  const cs::Document doc = cs::segment(read_input(input));
  Backends b = make_backends(bo, true);

  cs::AttentionResult att;
  try {
    att = b.attention->get_attention(doc);
  } catch (const cs::Error& e) {
    throw e.with_stage(cs::Stage::kAttention);
  }
  const cs::Document aligned = cs::align(doc, att.alignment);
  const cs::SaliencyMatrix sal = cs::aggregate(att.attention, aligned, cs::parse_stats_rule(bo.stats_rule));

  // Every target is classified from scratch unless a verdict file is given,
  // so backend calls equal two per candidate.
  cs::NliEngine engine(b.nli, b.nli_config, b.cache);
  const std::size_t n = aligned.size();
  std::vector<cs::AnalysisResult> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < n; t = next++) {
      try {
        results[t] = cs::analyze(aligned, sal, t, engine, policy);
        strip_timings(results[t], oo.timings);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1)); ++i) {
    pool.emplace_back(worker);
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  nlohmann::json array = nlohmann::json::array();
  std::size_t candidates = 0;
  bool complete = true;
  for (std::size_t t = 0; t < n; ++t) {
    array.push_back(cs::to_json(results[t]));
    candidates += cs::select_candidates(sal, t, policy).size();
    complete = complete && results[t].complete();
  }
  write_output(array.dump(2) + "\n", oo.out);

  const nlohmann::json summary = {
      {"sentences", n},
      {"candidates", candidates},
      {"nli_requests", engine.requests()},
      {"nli_backend_calls", engine.backend_calls()},
      {"exhaustive_pairs", 2 * n * (n == 0 ? 0 : n - 1)},
  };
  if (summary_out.empty()) {
    std::cerr << summary.dump() << "\n";
  } else {
    write_output(summary.dump(2) + "\n", summary_out);
  }
  return complete ? kExitOk : kExitBackend;
}

int run_export(const fs::path& input, const fs::path& out, BackendOptions bo) {
  const cs::Document doc = cs::segment(read_input(input));
  if (bo.backend == "files") throw UsageError("export-attn reads from --backend model or fixture");
  Backends b = make_backends(bo, false);
  const cs::AttentionResult att = b.attention->get_attention(doc);
  cs::export_attention(att.attention, att.alignment, doc.doc_id(), out);
  return kExitOk;
}

int run_serve(const std::string& bind) {
  cs::ServiceConfig config = cs::ServiceConfig::from_env();
  if (!bind.empty()) config.bind_addr = bind;
  auto service = cs::Service::from_config(config);
  std::cerr << "claimscope: serving on " << config.bind_addr << " (" << config.backend_mode << " backends)\n";
  if (!service->listen()) {
    std::cerr << "claimscope: cannot bind " << config.bind_addr << "\n";
    return kExitBackend;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"claimscope: targeted claim analysis with attention saliency and NLI"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "claimscope 0.1.0");

  fs::path input;
  std::size_t target = 0;
  BackendOptions backend;
  PolicyOptions policy;
  OutputOptions output;

  auto* analyze = app.add_subcommand("analyze", "Analyze one target sentence");
  analyze->add_option("--input", input, "UTF-8 text file")->required();
  analyze->add_option("--target-index", target, "Target sentence index")->required();
  add_backend_flags(analyze, backend);
  add_policy_flags(analyze, policy);
  add_output_flags(analyze, output, true);

  std::size_t jobs = 1;
  fs::path summary_out;
  auto* sweep = app.add_subcommand("sweep", "Analyze every sentence as the target");
  sweep->add_option("--input", input, "UTF-8 text file")->required();
  sweep->add_option("--jobs", jobs, "Targets analyzed concurrently")->check(CLI::PositiveNumber);
  sweep->add_option("--summary", summary_out, "Write the call-count summary here instead of stderr");
  add_backend_flags(sweep, backend);
  add_policy_flags(sweep, policy);
  add_output_flags(sweep, output, false);

  fs::path attn_out;
  auto* exporter = app.add_subcommand("export-attn", "Extract attention and write an attention file");
  exporter->add_option("--input", input, "UTF-8 text file")->required();
  exporter->add_option("--out", attn_out, "Destination .attn file")->required();
  add_backend_flags(exporter, backend);
  exporter->get_option("--backend")->default_str("model");

  std::string bind;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service (configured from the environment)");
  serve->add_option("--bind", bind, "host:port, overriding BIND_ADDR");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*analyze) return run_analyze(input, target, backend, policy, output);
    if (*sweep) return run_sweep(input, backend, policy, output, jobs, summary_out);
    if (*exporter) {
      if (exporter->get_option("--backend")->count() == 0) backend.backend = "model";
      return run_export(input, attn_out, backend);
    }
    if (*serve) return run_serve(bind);
  } catch (const UsageError& e) {
    std::cerr << "claimscope: " << e.what() << "\n";
    return kExitUsage;
  } catch (const cs::Error& e) {
    std::cerr << "claimscope: " << cs::to_string(e.code());
    if (e.stage() != cs::Stage::kNone) std::cerr << " (" << cs::to_string(e.stage()) << ")";
    std::cerr << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "claimscope: " << e.what() << "\n";
    return kExitBackend;
  }
  return kExitUsage;
}
