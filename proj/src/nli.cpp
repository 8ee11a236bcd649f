// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#include "claimscope/nli.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "claimscope/error.hpp"
#include "claimscope/subprocess.hpp"
#include "claimscope/text.hpp"

namespace claimscope {
namespace {

void check_probs(const NliProbs& p, const std::string& source) {
  const double sum = p.entailment + p.neutral + p.contradiction;
  const bool finite = std::isfinite(p.entailment) && std::isfinite(p.neutral) &&
                      std::isfinite(p.contradiction);
  if (!finite || p.entailment < 0 || p.neutral < 0 || p.contradiction < 0 ||
      std::abs(sum - 1.0) > 1e-4) {
    throw Error(ErrorCode::kBackendUnavailable,
                source + " returned an invalid probability triple (sum " + std::to_string(sum) + ")");
  }
}

std::string pair_key(const std::string& p_hash, const std::string& h_hash) {
  return p_hash + ":" + h_hash;
}

// Runs the Python NLI helper: JSON lines of {premise, hypothesis} in, JSON
// lines of {probs: [e, n, c]} out.
class ModelNliBackend final : public NliBackend {
 public:
  explicit ModelNliBackend(NliConfig config) : config_(std::move(config)) {}

  std::vector<NliProbs> classify(std::span<const TextPair> pairs) override {
    if (pairs.empty()) return {};
    std::lock_guard<std::mutex> lock(mu_);
    std::string input;
    for (const auto& p : pairs) {
      input += nlohmann::json{{"premise", p.premise}, {"hypothesis", p.hypothesis}}.dump();
      input += '\n';
    }
    ProcessResult r = run_process({config_.python, config_.helper_script.string(), "--model",
                                   config_.model_id, "--device", config_.device},
                                  input);
    if (r.exit_code != 0) {
      const std::string tail = r.err.size() > 2000 ? r.err.substr(r.err.size() - 2000) : r.err;
      throw Error(ErrorCode::kBackendUnavailable,
                  "NLI helper failed (exit " + std::to_string(r.exit_code) + "): " + tail);
    }
    std::vector<NliProbs> out;
    std::istringstream lines(r.out);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      try {
        out.push_back(probs_from_json(nlohmann::json::parse(line).at("probs")));
      } catch (const std::exception& e) {
        throw Error(ErrorCode::kBackendUnavailable, std::string("unparseable NLI helper output: ") + e.what());
      }
    }
    if (out.size() != pairs.size()) {
      throw Error(ErrorCode::kBackendUnavailable, "NLI helper returned " + std::to_string(out.size()) +
                                                      " results for " + std::to_string(pairs.size()) +
                                                      " pairs");
    }
    return out;
  }

  std::string id() const override { return "model"; }
  std::string model_id() const override { return config_.model_id; }

  bool available() const override {
    std::lock_guard<std::mutex> lock(probe_mu_);
    if (!probed_) {
      probed_ = true;
      ready_ = std::filesystem::exists(config_.helper_script) &&
               run_process({config_.python, "-c", "import torch, transformers"}).exit_code == 0;
    }
    return ready_;
  }

 private:
  NliConfig config_;
  std::mutex mu_;
  mutable std::mutex probe_mu_;
  mutable bool probed_ = false;
  mutable bool ready_ = false;
};

}  // namespace

std::string_view to_string(NliLabel label) {
  switch (label) {
    case NliLabel::kEntailment: return "entailment";
    case NliLabel::kNeutral: return "neutral";
    case NliLabel::kContradiction: return "contradiction";
  }
  return "neutral";
}

NliLabel argmax_label(const NliProbs& p) {
  if (p.entailment >= p.contradiction && p.entailment >= p.neutral) return NliLabel::kEntailment;
  if (p.contradiction >= p.neutral) return NliLabel::kContradiction;
  return NliLabel::kNeutral;
}

void ScriptedNliBackend::set(std::string premise, std::string hypothesis, NliProbs probs) {
  rules_[{std::move(premise), std::move(hypothesis)}] = probs;
}

void ScriptedNliBackend::set(std::string premise, std::string hypothesis, NliLabel label) {
  NliProbs p{0.0, 0.0, 0.0};
  switch (label) {
    case NliLabel::kEntailment: p.entailment = 1.0; break;
    case NliLabel::kNeutral: p.neutral = 1.0; break;
    case NliLabel::kContradiction: p.contradiction = 1.0; break;
  }
  set(std::move(premise), std::move(hypothesis), p);
}

void ScriptedNliBackend::fail_on(std::string premise, std::string hypothesis) {
  failures_[{std::move(premise), std::move(hypothesis)}] = true;
}

std::vector<NliProbs> ScriptedNliBackend::classify(std::span<const TextPair> pairs) {
  std::vector<NliProbs> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    std::pair<std::string, std::string> key{p.premise, p.hypothesis};
    if (failures_.count(key) > 0) {
      throw Error(ErrorCode::kBackendUnavailable, "scripted failure for pair");
    }
    auto it = rules_.find(key);
    out.push_back(it == rules_.end() ? default_ : it->second);
  }
  return out;
}

FixtureNliBackend::FixtureNliBackend(const std::filesystem::path& path) {
  for (const auto& r : VerdictCache::read_file(path)) {
    table_[pair_key(r.p_hash, r.h_hash)] = r.probs;
  }
}

std::vector<NliProbs> FixtureNliBackend::classify(std::span<const TextPair> pairs) {
  std::vector<NliProbs> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto it = table_.find(pair_key(text::content_hash(p.premise), text::content_hash(p.hypothesis)));
    out.push_back(it == table_.end() ? NliProbs{} : it->second);
  }
  return out;
}

VerdictCache::VerdictCache(const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) {
    for (const auto& r : read_file(path)) entries_[key(r.p_hash, r.h_hash, r.model_id)] = r.probs;
  }
  file_.open(path, std::ios::app);
  if (!file_) throw Error(ErrorCode::kIOFailure, "could not open verdict cache " + path.string());
}

std::string VerdictCache::key(const std::string& p, const std::string& h, const std::string& m) {
  return p + ":" + h + ":" + m;
}

std::optional<NliProbs> VerdictCache::lookup(const std::string& p_hash, const std::string& h_hash,
                                             const std::string& model_id) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key(p_hash, h_hash, model_id));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void VerdictCache::insert(const std::string& p_hash, const std::string& h_hash,
                          const std::string& model_id, const NliProbs& probs) {
  {
    std::unique_lock lock(mu_);
    entries_[key(p_hash, h_hash, model_id)] = probs;
  }
  std::lock_guard<std::mutex> lock(file_mu_);
  if (file_.is_open()) {
    file_ << nlohmann::json{{"p_hash", p_hash}, {"h_hash", h_hash}, {"model_id", model_id},
                            {"probs", to_json(probs)}}
                 .dump()
          << '\n';
    file_.flush();
  }
}

std::size_t VerdictCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::vector<VerdictRecord> VerdictCache::read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIOFailure, "could not open verdict file " + path.string());
  std::vector<VerdictRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) {
      if (in.peek() == std::char_traits<char>::eof()) break;  // torn final append
      throw Error(ErrorCode::kCorruptFile,
                  path.string() + ":" + std::to_string(line_no) + ": not valid JSON");
    }
    try {
      VerdictRecord r;
      r.p_hash = j.at("p_hash").get<std::string>();
      r.h_hash = j.at("h_hash").get<std::string>();
      r.model_id = j.at("model_id").get<std::string>();
      r.probs = probs_from_json(j.at("probs"));
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kCorruptFile,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::string_view to_string(NliBackendKind kind) {
  switch (kind) {
    case NliBackendKind::kModel: return "model";
    case NliBackendKind::kFixture: return "fixture";
    case NliBackendKind::kScripted: return "scripted";
  }
  return "fixture";
}

NliBackendKind parse_nli_backend(std::string_view s) {
  if (s == "model") return NliBackendKind::kModel;
  if (s == "fixture") return NliBackendKind::kFixture;
  if (s == "scripted") return NliBackendKind::kScripted;
  throw Error(ErrorCode::kInvalidArgument, "unknown NLI backend '" + std::string(s) + "'");
}

void NliConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  if (!(min_confidence >= 0.0 && min_confidence <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "min_confidence must lie in [0, 1]");
  }
  if (max_text_chars == 0) throw Error(ErrorCode::kInvalidArgument, "max_text_chars must be > 0");
}

std::shared_ptr<NliBackend> make_nli_backend(const NliConfig& config) {
  config.validate();
  switch (config.backend) {
    case NliBackendKind::kModel: return std::make_shared<ModelNliBackend>(config);
    case NliBackendKind::kFixture: return std::make_shared<FixtureNliBackend>(config.fixture_path);
    case NliBackendKind::kScripted: return std::make_shared<ScriptedNliBackend>();
  }
  return nullptr;
}

std::string_view to_string(Relation relation) {
  return relation == Relation::kPremise ? "premise" : "contradiction";
}

Relation parse_relation(std::string_view s) {
  if (s == "premise") return Relation::kPremise;
  if (s == "contradiction") return Relation::kContradiction;
  throw Error(ErrorCode::kInvalidArgument, "unknown relation '" + std::string(s) + "'");
}

NliEngine::NliEngine(std::shared_ptr<NliBackend> backend, NliConfig config,
                     std::shared_ptr<VerdictCache> cache)
    : backend_(std::move(backend)), config_(std::move(config)), cache_(std::move(cache)) {
  if (!backend_) throw Error(ErrorCode::kInvalidArgument, "NLI engine needs a backend");
  config_.validate();
}

void NliEngine::reset_counters() {
  requests_ = 0;
  backend_calls_ = 0;
}

std::vector<NliVerdict> NliEngine::classify_many(std::span<const TextPair> pairs) {
  for (const auto& p : pairs) {
    if (p.premise.empty() || p.hypothesis.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "NLI texts must be non-empty", Stage::kNli);
    }
    const std::size_t longest = std::max(text::to_u32(p.premise).size(), text::to_u32(p.hypothesis).size());
    if (longest > config_.max_text_chars) {
      throw Error(ErrorCode::kTextTooLong,
                  "sentence of " + std::to_string(longest) + " characters exceeds the NLI limit of " +
                      std::to_string(config_.max_text_chars),
                  Stage::kNli);
    }
  }
  requests_ += pairs.size();

  const std::string model = backend_->model_id();
  std::vector<NliVerdict> out(pairs.size());
  std::vector<std::size_t> misses;
  std::vector<std::pair<std::string, std::string>> hashes(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out[i].premise_text = pairs[i].premise;
    out[i].hypothesis_text = pairs[i].hypothesis;
    out[i].backend_id = backend_->id();
    if (cache_) {
      hashes[i] = {text::content_hash(pairs[i].premise), text::content_hash(pairs[i].hypothesis)};
      if (auto hit = cache_->lookup(hashes[i].first, hashes[i].second, model)) {
        out[i].probs = *hit;
        out[i].label = argmax_label(*hit);
        continue;
      }
    }
    misses.push_back(i);
  }

  if (!misses.empty()) {
    std::vector<TextPair> batch;
    batch.reserve(misses.size());
    for (std::size_t i : misses) batch.push_back(pairs[i]);
    std::vector<NliProbs> probs;
    {
      std::lock_guard<std::mutex> lock(backend_mu_);
      backend_calls_ += batch.size();
      probs = backend_->classify(batch);
    }
    if (probs.size() != batch.size()) {
      throw Error(ErrorCode::kBackendUnavailable, "NLI backend returned the wrong number of results",
                  Stage::kNli);
    }
    for (std::size_t b = 0; b < misses.size(); ++b) {
      check_probs(probs[b], backend_->id());
      NliVerdict& v = out[misses[b]];
      v.probs = probs[b];
      v.label = argmax_label(probs[b]);
      if (cache_) cache_->insert(hashes[misses[b]].first, hashes[misses[b]].second, model, probs[b]);
    }
  }
  return out;
}

NliVerdict NliEngine::classify_pair(std::string_view premise, std::string_view hypothesis) {
  TextPair pair{std::string(premise), std::string(hypothesis)};
  return classify_many(std::span<const TextPair>(&pair, 1)).front();
}

std::optional<Link> NliEngine::decide(const CandidateVerdicts& v) const {
  const double premise_p = v.as_premise.probs.entailment;
  const double contra_p = v.as_contradiction.probs.contradiction;
  const bool premise = v.as_premise.label == NliLabel::kEntailment && premise_p >= config_.min_confidence;
  const bool contra = v.as_contradiction.label == NliLabel::kContradiction &&
                      contra_p >= config_.min_confidence;
  if (!premise && !contra) return std::nullopt;
  if (premise && (!contra || premise_p > contra_p)) return Link{Relation::kPremise, premise_p, v};
  return Link{Relation::kContradiction, contra_p, v};
}

RelationshipMatrix NliEngine::classify_candidates(const Document& doc, std::size_t target,
                                                  std::span<const std::size_t> candidates) {
  if (target >= doc.size()) {
    throw Error(ErrorCode::kIndexOutOfRange, "target " + std::to_string(target) + " out of range",
                Stage::kNli);
  }
  std::set<std::size_t> unique;
  for (std::size_t c : candidates) {
    if (c == target) throw Error(ErrorCode::kSelfPair, "target listed as its own candidate", Stage::kNli);
    if (c >= doc.size()) {
      throw Error(ErrorCode::kIndexOutOfRange, "candidate " + std::to_string(c) + " out of range",
                  Stage::kNli);
    }
    unique.insert(c);
  }

  RelationshipMatrix rel;
  rel.target = target;
  const std::string target_text = doc.sentence_text(target);
  const std::vector<std::size_t> ordered(unique.begin(), unique.end());
  const std::size_t per_chunk = std::max<std::size_t>(1, config_.batch_size / 2);

  for (std::size_t start = 0; start < ordered.size(); start += per_chunk) {
    const std::size_t end = std::min(ordered.size(), start + per_chunk);
    std::vector<TextPair> pairs;
    for (std::size_t i = start; i < end; ++i) {
      const std::string cand = doc.sentence_text(ordered[i]);
      pairs.push_back({cand, target_text});
      pairs.push_back({target_text, cand});
    }
    std::vector<NliVerdict> verdicts;
    try {
      verdicts = classify_many(pairs);
    } catch (const Error& e) {
      for (std::size_t i = start; i < end; ++i) rel.failures[ordered[i]] = e.what();
      continue;
    }
    for (std::size_t i = start; i < end; ++i) {
      const std::size_t c = ordered[i];
      CandidateVerdicts cv{std::move(verdicts[2 * (i - start)]), std::move(verdicts[2 * (i - start) + 1])};
      if (auto link = decide(cv)) rel.links.emplace(c, std::move(*link));
      rel.classified.emplace(c, std::move(cv));
    }
  }
  return rel;
}

nlohmann::json to_json(const NliProbs& p) {
  return nlohmann::json::array({p.entailment, p.neutral, p.contradiction});
}

NliProbs probs_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::kInvalidArgument, "probs must be [entailment, neutral, contradiction]");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json to_json(const NliVerdict& v) {
  return {{"label", to_string(v.label)},
          {"probs", to_json(v.probs)},
          {"premise", v.premise_text},
          {"hypothesis", v.hypothesis_text},
          {"backend", v.backend_id}};
}

}  // namespace claimscope
