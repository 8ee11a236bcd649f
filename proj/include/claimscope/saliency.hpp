// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "claimscope/attention.hpp"
#include "claimscope/document.hpp"

namespace claimscope {

// Which off-diagonal cells enter the summary statistics. kOffDiagonalNonzero
// drops the diagonal and cells that are zero above it (the causal upper
// triangle); kOffDiagonalAll drops only the diagonal.
enum class StatsRule { kOffDiagonalNonzero, kOffDiagonalAll };

std::string_view to_string(StatsRule rule);
StatsRule parse_stats_rule(std::string_view s);

struct SaliencyStats {
  double mean = 0.0;
  double std = 0.0;  // population
  StatsRule included = StatsRule::kOffDiagonalNonzero;

  bool operator==(const SaliencyStats&) const = default;
};

// Row-major n*n values; empty input selects nothing and yields mean = std = 0.
SaliencyStats compute_stats(std::span<const double> matrix, std::size_t n, StatsRule rule);

// Sentence-level attention: entry (i, j) is the mean attention from the
// tokens of sentence i to the tokens of sentence j.
class SaliencyMatrix {
 public:
  SaliencyMatrix() = default;
  SaliencyMatrix(std::size_t n, std::vector<double> values,
                 StatsRule rule = StatsRule::kOffDiagonalNonzero);

  std::size_t n() const { return n_; }
  double at(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  const std::vector<double>& values() const { return values_; }
  const SaliencyStats& stats() const { return stats_; }

  SaliencyMatrix with_stats(StatsRule rule) const { return {n_, values_, rule}; }

  bool operator==(const SaliencyMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
  SaliencyStats stats_;
};

// Throws Error(kDimensionMismatch) when the attention's non-special tokens do
// not line up with the document's aligned token ranges.
SaliencyMatrix aggregate(const TokenAttention& att, const Document& doc,
                         StatsRule rule = StatsRule::kOffDiagonalNonzero);

enum class Direction { kOutgoing, kIncoming, kMaxBoth };
enum class ThresholdMode { kAbsolute, kRelative, kTopM };

std::string_view to_string(Direction d);
std::string_view to_string(ThresholdMode m);
Direction parse_direction(std::string_view s);
ThresholdMode parse_threshold_mode(std::string_view s);

struct ThresholdPolicy {
  ThresholdMode mode = ThresholdMode::kRelative;
  double tau = 0.0;   // kAbsolute
  double k = 1.0;     // kRelative: tau = max(0, mean + k * std)
  std::size_t m = 1;  // kTopM
  Direction direction = Direction::kMaxBoth;
  // Optional stricter bar for confirming NLI-labeled candidates.
  std::optional<double> tau_confirm;

  static ThresholdPolicy absolute(double tau, Direction d = Direction::kMaxBoth);
  static ThresholdPolicy relative(double k, Direction d = Direction::kMaxBoth);
  static ThresholdPolicy top_m(std::size_t m, Direction d = Direction::kMaxBoth);

  // Throws Error(kInvalidArgument).
  void validate() const;

  bool operator==(const ThresholdPolicy&) const = default;
};

struct Candidate {
  std::size_t index = 0;
  double score = 0.0;
  bool operator==(const Candidate&) const = default;
};

// Throws Error(kIndexOutOfRange), Error(kSelfPair).
double saliency(const SaliencyMatrix& sal, std::size_t target, std::size_t j, Direction direction);

// Absolute and relative modes select every j != target with
// 0 < score >= tau; top_m takes the m best regardless of score. Sorted by
// descending score, ties by index.
std::vector<Candidate> select_candidates(const SaliencyMatrix& sal, std::size_t target,
                                         const ThresholdPolicy& policy);

// The bar select_candidates applies for `target`. For top_m this is the
// lowest selected score (0 when nothing can be selected).
double selection_threshold(const SaliencyMatrix& sal, std::size_t target,
                           const ThresholdPolicy& policy);

nlohmann::json to_json(const SaliencyStats& stats);
nlohmann::json to_json(const SaliencyMatrix& sal);
SaliencyMatrix saliency_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ThresholdPolicy& policy);
ThresholdPolicy policy_from_json(const nlohmann::json& j);

}  // namespace claimscope
