// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "claimscope/document.hpp"

namespace claimscope {

enum class NliLabel { kEntailment, kNeutral, kContradiction };

std::string_view to_string(NliLabel label);

// Wire order is [entailment, neutral, contradiction].
struct NliProbs {
  double entailment = 0.0;
  double neutral = 1.0;
  double contradiction = 0.0;

  bool operator==(const NliProbs&) const = default;
};

// argmax with ties broken entailment > contradiction > neutral.
NliLabel argmax_label(const NliProbs& probs);

struct NliVerdict {
  NliLabel label = NliLabel::kNeutral;
  NliProbs probs;
  std::string premise_text;
  std::string hypothesis_text;
  std::string backend_id;

  bool operator==(const NliVerdict&) const = default;
};

struct TextPair {
  std::string premise;
  std::string hypothesis;
};

class NliBackend {
 public:
  virtual ~NliBackend() = default;

  // One distribution per pair, in order. Throws Error(kBackendUnavailable).
  virtual std::vector<NliProbs> classify(std::span<const TextPair> pairs) = 0;
  virtual std::string id() const = 0;
  // Part of the verdict cache key.
  virtual std::string model_id() const = 0;
  virtual bool available() const { return true; }
};

// Rule table keyed by exact (premise, hypothesis) text; anything else is
// neutral. Pairs registered with fail_on() raise kBackendUnavailable.
class ScriptedNliBackend final : public NliBackend {
 public:
  void set(std::string premise, std::string hypothesis, NliProbs probs);
  void set(std::string premise, std::string hypothesis, NliLabel label);
  void fail_on(std::string premise, std::string hypothesis);
  void set_default(NliProbs probs) { default_ = probs; }

  std::vector<NliProbs> classify(std::span<const TextPair> pairs) override;
  std::string id() const override { return "scripted"; }
  std::string model_id() const override { return "scripted"; }

 private:
  std::map<std::pair<std::string, std::string>, NliProbs> rules_;
  std::map<std::pair<std::string, std::string>, bool> failures_;
  NliProbs default_;
};

struct VerdictRecord {
  std::string p_hash;
  std::string h_hash;
  std::string model_id;
  NliProbs probs;
};

// Committed verdicts in the verdict-cache JSON-lines format, looked up by
// text hash regardless of model_id. Unknown pairs are neutral.
class FixtureNliBackend final : public NliBackend {
 public:
  explicit FixtureNliBackend(const std::filesystem::path& path);

  std::vector<NliProbs> classify(std::span<const TextPair> pairs) override;
  std::string id() const override { return "fixture"; }
  std::string model_id() const override { return "fixture"; }
  std::size_t size() const { return table_.size(); }

 private:
  std::unordered_map<std::string, NliProbs> table_;
};

// Cache of classified ordered pairs keyed by (premise hash, hypothesis hash,
// model id). When opened on a path, existing records are loaded and new ones
// appended as JSON lines. Entries are deterministic, so concurrent writers of
// the same key are harmless.
class VerdictCache {
 public:
  VerdictCache() = default;
  explicit VerdictCache(const std::filesystem::path& path);

  std::optional<NliProbs> lookup(const std::string& p_hash, const std::string& h_hash,
                                 const std::string& model_id) const;
  void insert(const std::string& p_hash, const std::string& h_hash, const std::string& model_id,
              const NliProbs& probs);
  std::size_t size() const;

  // Tolerates a truncated final line; throws Error(kIOFailure) if unreadable.
  static std::vector<VerdictRecord> read_file(const std::filesystem::path& path);

 private:
  static std::string key(const std::string& p, const std::string& h, const std::string& m);

  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, NliProbs> entries_;
  std::mutex file_mu_;
  std::ofstream file_;
};

enum class NliBackendKind { kModel, kFixture, kScripted };

std::string_view to_string(NliBackendKind kind);
NliBackendKind parse_nli_backend(std::string_view s);

inline constexpr std::string_view kDefaultNliModel =
    "MoritzLaurer/DeBERTa-v3-large-mnli-fever-anli-ling-wanli";

struct NliConfig {
  NliBackendKind backend = NliBackendKind::kFixture;
  std::string model_id{kDefaultNliModel};
  double min_confidence = 0.0;
  std::size_t batch_size = 16;
  // Longest sentence (code points) passed to the backend; longer raises
  // kTextTooLong instead of being truncated.
  std::size_t max_text_chars = 2000;

  std::filesystem::path fixture_path =
      std::filesystem::path(CLAIMSCOPE_DATA_DIR) / "fixtures" / "nli_fixture.jsonl";
  std::string python = "python3";
  std::filesystem::path helper_script = std::filesystem::path(CLAIMSCOPE_TOOLS_DIR) / "hf_nli.py";
  std::string device = "cpu";

  // Throws Error(kInvalidArgument).
  void validate() const;
};

// Builds the backend named by config.backend. kScripted yields an empty rule
// table (all neutral).
std::shared_ptr<NliBackend> make_nli_backend(const NliConfig& config);

enum class Relation { kPremise, kContradiction };

std::string_view to_string(Relation relation);
Relation parse_relation(std::string_view s);

struct CandidateVerdicts {
  NliVerdict as_premise;        // (candidate, target)
  NliVerdict as_contradiction;  // (target, candidate)
};

struct Link {
  Relation relation = Relation::kPremise;
  double confidence = 0.0;  // probability of the deciding label
  CandidateVerdicts verdicts;
};

struct RelationshipMatrix {
  std::size_t target = 0;
  std::map<std::size_t, Link> links;
  // Every candidate whose two verdicts completed, linked or not.
  std::map<std::size_t, CandidateVerdicts> classified;
  // Candidates whose classification failed, with the backend diagnostic.
  std::map<std::size_t, std::string> failures;
};

class NliEngine {
 public:
  explicit NliEngine(std::shared_ptr<NliBackend> backend, NliConfig config = {},
                     std::shared_ptr<VerdictCache> cache = nullptr);

  // Throws Error(kInvalidArgument) for empty text, Error(kTextTooLong),
  // Error(kBackendUnavailable).
  NliVerdict classify_pair(std::string_view premise, std::string_view hypothesis);

  // Two ordered checks per candidate: (candidate, target) entailment makes a
  // premise, (target, candidate) contradiction makes a contradiction. Backend
  // failures are recorded per candidate rather than thrown.
  // Throws Error(kSelfPair), Error(kIndexOutOfRange).
  RelationshipMatrix classify_candidates(const Document& doc, std::size_t target,
                                         std::span<const std::size_t> candidates);

  // Applies min_confidence and the dual-fire rule (higher deciding
  // probability wins, ties go to contradiction).
  std::optional<Link> decide(const CandidateVerdicts& verdicts) const;

  const NliConfig& config() const { return config_; }
  const NliBackend& backend() const { return *backend_; }
  std::string model_id() const { return backend_->model_id(); }

  // Ordered pairs requested by callers, and pairs actually sent to the
  // backend after cache hits.
  std::uint64_t requests() const { return requests_.load(); }
  std::uint64_t backend_calls() const { return backend_calls_.load(); }
  void reset_counters();

 private:
  std::vector<NliVerdict> classify_many(std::span<const TextPair> pairs);

  std::shared_ptr<NliBackend> backend_;
  NliConfig config_;
  std::shared_ptr<VerdictCache> cache_;
  std::mutex backend_mu_;
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> backend_calls_{0};
};

nlohmann::json to_json(const NliProbs& probs);
NliProbs probs_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NliVerdict& verdict);

}  // namespace claimscope
