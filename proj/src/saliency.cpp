// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#include "claimscope/saliency.hpp"

#include <algorithm>
#include <cmath>

#include "claimscope/error.hpp"

namespace claimscope {

std::string_view to_string(StatsRule rule) {
  return rule == StatsRule::kOffDiagonalAll ? "off_diagonal_all" : "off_diagonal_nonzero";
}

StatsRule parse_stats_rule(std::string_view s) {
  if (s == "off_diagonal_nonzero") return StatsRule::kOffDiagonalNonzero;
  if (s == "off_diagonal_all") return StatsRule::kOffDiagonalAll;
  throw Error(ErrorCode::kInvalidArgument, "unknown stats rule '" + std::string(s) + "'");
}

SaliencyStats compute_stats(std::span<const double> matrix, std::size_t n, StatsRule rule) {
  if (matrix.size() != n * n) {
    throw Error(ErrorCode::kDimensionMismatch, "saliency values are not n x n");
  }
  SaliencyStats stats;
  stats.included = rule;
  double sum = 0.0;
  std::size_t count = 0;
  auto included = [&](std::size_t i, std::size_t j) {
    if (i == j) return false;
    if (rule == StatsRule::kOffDiagonalAll) return true;
    return j < i || matrix[i * n + j] != 0.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!included(i, j)) continue;
      sum += matrix[i * n + j];
      ++count;
    }
  }
  if (count == 0) return stats;
  stats.mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!included(i, j)) continue;
      const double d = matrix[i * n + j] - stats.mean;
      sq += d * d;
    }
  }
  stats.std = std::sqrt(sq / static_cast<double>(count));
  return stats;
}

SaliencyMatrix::SaliencyMatrix(std::size_t n, std::vector<double> values, StatsRule rule)
    : n_(n), values_(std::move(values)) {
  if (values_.size() != n_ * n_) {
    throw Error(ErrorCode::kDimensionMismatch, "saliency values are not n x n");
  }
  stats_ = compute_stats(values_, n_, rule);
}

SaliencyMatrix aggregate(const TokenAttention& att, const Document& doc, StatsRule rule) {
  if (!doc.aligned()) {
    throw Error(ErrorCode::kDimensionMismatch, "document is not aligned to model tokens");
  }
  if (att.matrix.size() != att.n * att.n || att.special_token_mask.size() != att.n) {
    throw Error(ErrorCode::kDimensionMismatch, "attention matrix and mask disagree on N");
  }
  // Map raw token index -> sentence; special tokens map to nothing.
  constexpr std::size_t kSkip = static_cast<std::size_t>(-1);
  std::vector<std::size_t> owner(att.n, kSkip);
  std::size_t filtered = 0;
  std::size_t sentence = 0;
  const auto& spans = doc.sentences();
  for (std::size_t t = 0; t < att.n; ++t) {
    if (att.special_token_mask[t]) continue;
    while (sentence < spans.size() && filtered >= spans[sentence].token_end) ++sentence;
    if (sentence == spans.size()) break;
    owner[t] = sentence;
    ++filtered;
  }
  const std::size_t non_special =
      static_cast<std::size_t>(std::count(att.special_token_mask.begin(), att.special_token_mask.end(), false));
  if (non_special != doc.token_count()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "attention has " + std::to_string(non_special) + " non-special tokens, document has " +
                    std::to_string(doc.token_count()));
  }

  const std::size_t n = spans.size();
  std::vector<double> sums(n * n, 0.0);
  for (std::size_t k = 0; k < att.n; ++k) {
    if (owner[k] == kSkip) continue;
    const auto row = att.row(k);
    double* out = &sums[owner[k] * n];
    for (std::size_t l = 0; l < att.n; ++l) {
      if (owner[l] != kSkip) out[owner[l]] += row[l];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      sums[i * n + j] /= static_cast<double>(spans[i].token_count() * spans[j].token_count());
    }
  }
  return SaliencyMatrix(n, std::move(sums), rule);
}

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::kOutgoing: return "outgoing";
    case Direction::kIncoming: return "incoming";
    case Direction::kMaxBoth: return "max_both";
  }
  return "max_both";
}

std::string_view to_string(ThresholdMode m) {
  switch (m) {
    case ThresholdMode::kAbsolute: return "absolute";
    case ThresholdMode::kRelative: return "relative";
    case ThresholdMode::kTopM: return "top_m";
  }
  return "relative";
}

Direction parse_direction(std::string_view s) {
  if (s == "outgoing") return Direction::kOutgoing;
  if (s == "incoming") return Direction::kIncoming;
  if (s == "max_both") return Direction::kMaxBoth;
  throw Error(ErrorCode::kInvalidArgument, "unknown direction '" + std::string(s) + "'");
}

ThresholdMode parse_threshold_mode(std::string_view s) {
  if (s == "absolute") return ThresholdMode::kAbsolute;
  if (s == "relative") return ThresholdMode::kRelative;
  if (s == "top_m") return ThresholdMode::kTopM;
  throw Error(ErrorCode::kInvalidArgument, "unknown threshold mode '" + std::string(s) + "'");
}

ThresholdPolicy ThresholdPolicy::absolute(double tau, Direction d) {
  ThresholdPolicy p;
  p.mode = ThresholdMode::kAbsolute;
  p.tau = tau;
  p.direction = d;
  return p;
}

ThresholdPolicy ThresholdPolicy::relative(double k, Direction d) {
  ThresholdPolicy p;
  p.mode = ThresholdMode::kRelative;
  p.k = k;
  p.direction = d;
  return p;
}

ThresholdPolicy ThresholdPolicy::top_m(std::size_t m, Direction d) {
  ThresholdPolicy p;
  p.mode = ThresholdMode::kTopM;
  p.m = m;
  p.direction = d;
  return p;
}

void ThresholdPolicy::validate() const {
  if (mode == ThresholdMode::kAbsolute && !(tau >= 0.0 && std::isfinite(tau))) {
    throw Error(ErrorCode::kInvalidArgument, "absolute threshold must be a finite value >= 0");
  }
  if (mode == ThresholdMode::kRelative && !std::isfinite(k)) {
    throw Error(ErrorCode::kInvalidArgument, "relative threshold k must be finite");
  }
  if (mode == ThresholdMode::kTopM && m < 1) {
    throw Error(ErrorCode::kInvalidArgument, "top_m requires m >= 1");
  }
  if (tau_confirm && !(*tau_confirm >= 0.0 && std::isfinite(*tau_confirm))) {
    throw Error(ErrorCode::kInvalidArgument, "tau_confirm must be a finite value >= 0");
  }
}

double saliency(const SaliencyMatrix& sal, std::size_t target, std::size_t j, Direction direction) {
  if (target >= sal.n() || j >= sal.n()) {
    throw Error(ErrorCode::kIndexOutOfRange, "sentence index out of range for " +
                                                 std::to_string(sal.n()) + " sentences");
  }
  if (target == j) throw Error(ErrorCode::kSelfPair, "saliency of a sentence to itself");
  switch (direction) {
    case Direction::kOutgoing: return sal.at(target, j);
    case Direction::kIncoming: return sal.at(j, target);
    case Direction::kMaxBoth: return std::max(sal.at(target, j), sal.at(j, target));
  }
  return 0.0;
}

namespace {

std::vector<Candidate> ranked(const SaliencyMatrix& sal, std::size_t target, Direction direction) {
  std::vector<Candidate> all;
  for (std::size_t j = 0; j < sal.n(); ++j) {
    if (j != target) all.push_back({j, saliency(sal, target, j, direction)});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  return all;
}

}  // namespace

double selection_threshold(const SaliencyMatrix& sal, std::size_t target,
                           const ThresholdPolicy& policy) {
  policy.validate();
  if (target >= sal.n()) {
    throw Error(ErrorCode::kIndexOutOfRange, "target " + std::to_string(target) +
                                                 " out of range for " + std::to_string(sal.n()) +
                                                 " sentences");
  }
  switch (policy.mode) {
    case ThresholdMode::kAbsolute: return policy.tau;
    case ThresholdMode::kRelative:
      return std::max(0.0, sal.stats().mean + policy.k * sal.stats().std);
    case ThresholdMode::kTopM: {
      const auto all = ranked(sal, target, policy.direction);
      if (all.empty()) return 0.0;
      return all[std::min(policy.m, all.size()) - 1].score;
    }
  }
  return 0.0;
}

std::vector<Candidate> select_candidates(const SaliencyMatrix& sal, std::size_t target,
                                         const ThresholdPolicy& policy) {
  const double tau = selection_threshold(sal, target, policy);
  auto all = ranked(sal, target, policy.direction);
  if (policy.mode == ThresholdMode::kTopM) {
    all.resize(std::min(policy.m, all.size()));
    return all;
  }
  std::vector<Candidate> out;
  for (const auto& c : all) {
    if (c.score > 0.0 && c.score >= tau) out.push_back(c);
  }
  return out;
}

nlohmann::json to_json(const SaliencyStats& stats) {
  return {{"mean", stats.mean}, {"std", stats.std}, {"included", to_string(stats.included)}};
}

nlohmann::json to_json(const SaliencyMatrix& sal) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < sal.n(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < sal.n(); ++j) row.push_back(sal.at(i, j));
    rows.push_back(std::move(row));
  }
  return {{"n", sal.n()}, {"matrix", rows}, {"stats", to_json(sal.stats())}};
}

SaliencyMatrix saliency_from_json(const nlohmann::json& j) {
  try {
    const auto n = j.at("n").get<std::size_t>();
    std::vector<double> values;
    values.reserve(n * n);
    const auto& rows = j.at("matrix");
    if (rows.size() != n) throw Error(ErrorCode::kDimensionMismatch, "matrix row count != n");
    for (const auto& row : rows) {
      if (row.size() != n) throw Error(ErrorCode::kDimensionMismatch, "matrix row length != n");
      for (const auto& v : row) values.push_back(v.get<double>());
    }
    StatsRule rule = StatsRule::kOffDiagonalNonzero;
    if (j.contains("stats") && j["stats"].contains("included")) {
      rule = parse_stats_rule(j["stats"]["included"].get<std::string>());
    }
    return SaliencyMatrix(n, std::move(values), rule);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed saliency JSON: ") + e.what());
  }
}

nlohmann::json to_json(const ThresholdPolicy& policy) {
  nlohmann::json params = nlohmann::json::object();
  switch (policy.mode) {
    case ThresholdMode::kAbsolute: params["tau"] = policy.tau; break;
    case ThresholdMode::kRelative: params["k"] = policy.k; break;
    case ThresholdMode::kTopM: params["m"] = policy.m; break;
  }
  if (policy.tau_confirm) params["tau_confirm"] = *policy.tau_confirm;
  return {{"mode", to_string(policy.mode)},
          {"params", params},
          {"direction", to_string(policy.direction)}};
}

ThresholdPolicy policy_from_json(const nlohmann::json& j) {
  try {
    ThresholdPolicy p;
    p.mode = parse_threshold_mode(j.at("mode").get<std::string>());
    if (j.contains("direction")) p.direction = parse_direction(j["direction"].get<std::string>());
    const nlohmann::json params = j.value("params", nlohmann::json::object());
    switch (p.mode) {
      case ThresholdMode::kAbsolute: p.tau = params.at("tau").get<double>(); break;
      case ThresholdMode::kRelative: p.k = params.at("k").get<double>(); break;
      case ThresholdMode::kTopM: {
        const auto m = params.at("m").get<long long>();
        if (m < 1) throw Error(ErrorCode::kInvalidArgument, "top_m requires m >= 1");
        p.m = static_cast<std::size_t>(m);
        break;
      }
    }
    if (params.contains("tau_confirm")) p.tau_confirm = params["tau_confirm"].get<double>();
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed policy JSON: ") + e.what());
  }
}

}  // namespace claimscope
