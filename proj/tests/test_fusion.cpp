// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#include <doctest.h>

#include <algorithm>
#include <functional>
#include <random>

#include "claimscope/attention.hpp"
#include "claimscope/document.hpp"
#include "claimscope/error.hpp"
#include "claimscope/fusion.hpp"
#include "claimscope/nli.hpp"
#include "claimscope/saliency.hpp"
#include "oracle.hpp"
#include "test_support.hpp"

using namespace claimscope;

namespace {

struct Pipeline {
  Document doc;  // aligned
  SaliencyMatrix sal;
  std::shared_ptr<NliBackend> nli = std::make_shared<FixtureNliBackend>(fixture_path("nli_fixture.jsonl"));
};

Pipeline load_case(const std::string& name) {
  Pipeline p;
  const Document plain = segment(read_file(fixture_path(name + ".txt")));
  ProviderConfig config;
  config.backend = AttentionBackend::kFile;
  config.attention_path = fixture_dir();
  const AttentionResult att = get_attention(plain, config);
  p.doc = align(plain, att.alignment);
  p.sal = aggregate(att.attention, p.doc);
  return p;
}

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

const Annotation* find(const AnalysisResult& r, std::size_t index) {
  for (const auto& a : r.annotations) {
    if (a.index == index) return &a;
  }
  return nullptr;
}

// The conjunction gate restated from the result record alone.
void check_soundness(const AnalysisResult& r, const SaliencyMatrix& sal) {
  for (const auto& a : r.annotations) {
    CHECK(a.index != r.target);
    CHECK(a.saliency == saliency(sal, r.target, a.index, r.policy.direction));
    const bool above = a.saliency > 0.0 && a.saliency >= r.tau_effective &&
                       (!r.policy.tau_confirm || a.saliency >= *r.policy.tau_confirm);
    if (r.policy.mode != ThresholdMode::kTopM) CHECK(a.passed_fusion == above);
    if (a.passed_fusion) CHECK(above);
  }
}

// Random document with a scripted NLI table over it; pairs get random labels.
struct RandomCase {
  Document doc;
  SaliencyMatrix sal;
  std::shared_ptr<ScriptedNliBackend> nli = std::make_shared<ScriptedNliBackend>();
};

RandomCase random_case(std::mt19937& rng) {
  std::uniform_int_distribution<std::size_t> count(2, 7), len(1, 6);
  std::vector<std::size_t> lengths(count(rng));
  for (auto& l : lengths) l = len(rng);
  RandomCase c;
  const Document plain = segment(oracle::sentences_text(lengths, rng));
  const TokenAlignment a = word_tokenize(plain, true);
  TokenAttention att = oracle::random_causal(a.size(), rng, true, true);
  att.special_token_mask = a.special_token_mask;
  c.doc = align(plain, a);
  c.sal = aggregate(att, c.doc);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < c.doc.size(); ++i) {
    for (std::size_t j = 0; j < c.doc.size(); ++j) {
      if (i == j) continue;
      const double e = u(rng), n = u(rng), x = u(rng), s = e + n + x;
      c.nli->set(c.doc.sentence_text(i), c.doc.sentence_text(j), NliProbs{e / s, n / s, x / s});
    }
  }
  return c;
}

}  // namespace

TEST_CASE("sun fixture: one premise and one contradiction, both passing") {
  const Pipeline p = load_case("case1_sun");
  NliEngine engine(p.nli);
  const AnalysisResult r = analyze(p.doc, p.sal, 0, engine);
  REQUIRE(r.annotations.size() == 2);
  CHECK(r.annotations[0].index == 1);
  CHECK(r.annotations[0].role == Relation::kPremise);
  CHECK(r.annotations[0].passed_fusion);
  CHECK(r.annotations[1].index == 2);
  CHECK(r.annotations[1].role == Relation::kContradiction);
  CHECK(r.annotations[1].passed_fusion);
  CHECK(r.annotations[1].saliency == doctest::Approx(0.1288).epsilon(1e-6));
  CHECK(r.doc_id == p.doc.doc_id());
  CHECK(r.complete());
  check_soundness(r, p.sal);
}

TEST_CASE("sun fixture under the all-entries statistics rule") {
  const Pipeline p = load_case("case1_sun");
  const SaliencyMatrix all = p.sal.with_stats(StatsRule::kOffDiagonalAll);
  CHECK(all.stats().mean == doctest::Approx(0.0349).epsilon(1e-6));
  CHECK(saliency(all, 0, 2, Direction::kMaxBoth) > all.stats().mean);
}

TEST_CASE("bookshelf fixture: the implied contradiction passes at k=2 but not k=3") {
  const Pipeline p = load_case("case2_bookshelf");
  NliEngine engine(p.nli);
  const AnalysisResult k2 = analyze(p.doc, p.sal, 0, engine, ThresholdPolicy::relative(2.0));
  const auto passing = k2.passing();
  REQUIRE(passing.size() == 1);
  CHECK(passing[0].index == 4);
  CHECK(passing[0].role == Relation::kContradiction);
  CHECK(p.doc.sentence_text(4).find("IKEA") != std::string::npos);
  check_soundness(k2, p.sal);

  const AnalysisResult k3 = analyze(p.doc, p.sal, 0, engine, ThresholdPolicy::relative(3.0));
  CHECK(k3.passing().empty());
  CHECK(k3.tau_effective == doctest::Approx(0.0987).epsilon(1e-6));
}

TEST_CASE("streetlights fixture: low-saliency contradiction needs a loose threshold") {
  const Pipeline p = load_case("case3_streetlights");
  NliEngine engine(p.nli);
  const AnalysisResult loose = analyze(p.doc, p.sal, 2, engine, ThresholdPolicy::relative(0.0));
  const Annotation* premise = find(loose, 1);
  const Annotation* contra = find(loose, 4);
  REQUIRE(premise != nullptr);
  REQUIRE(contra != nullptr);
  CHECK(premise->role == Relation::kPremise);
  CHECK(premise->passed_fusion);
  CHECK(premise->saliency == doctest::Approx(0.0024).epsilon(1e-6));
  CHECK(contra->role == Relation::kContradiction);
  CHECK(contra->passed_fusion);
  CHECK(contra->saliency == doctest::Approx(0.0008).epsilon(1e-6));

  const AnalysisResult strict = analyze(p.doc, p.sal, 2, engine, ThresholdPolicy::relative(2.0));
  CHECK(find(strict, 4) == nullptr);
}

TEST_CASE("ocean teaser fixture") {
  const Pipeline p = load_case("case0_ocean");
  NliEngine engine(p.nli);
  const AnalysisResult r = analyze(p.doc, p.sal, 0, engine);
  const auto passing = r.passing();
  REQUIRE(passing.size() == 2);
  CHECK(passing[0].index == 1);
  CHECK(passing[0].role == Relation::kPremise);
  CHECK(passing[1].index == 2);
  CHECK(passing[1].role == Relation::kContradiction);
}

TEST_CASE("labeled sentence with zero saliency never passes") {
  const Document plain = segment("Alpha holds. Beta holds. Gamma holds.");
  const Document doc = align(plain, word_tokenize(plain));
  std::vector<double> m(9, 0.0);
  m[1 * 3 + 0] = 0.3;
  const SaliencyMatrix sal(3, m);
  auto s = std::make_shared<ScriptedNliBackend>();
  s->set("Alpha holds.", "Gamma holds.", NliLabel::kContradiction);
  NliEngine engine(s);
  const AnalysisResult r = analyze(doc, sal, 0, engine, ThresholdPolicy::top_m(2));
  const Annotation* a = find(r, 2);
  REQUIRE(a != nullptr);
  CHECK(a->role == Relation::kContradiction);
  CHECK(a->saliency == 0.0);
  CHECK_FALSE(a->passed_fusion);
}

TEST_CASE("tau_confirm adds a stricter confirmation bar") {
  const Pipeline p = load_case("case1_sun");
  NliEngine engine(p.nli);
  ThresholdPolicy policy;
  policy.tau_confirm = 0.12;
  const AnalysisResult r = analyze(p.doc, p.sal, 0, engine, policy);
  REQUIRE(r.annotations.size() == 2);
  CHECK_FALSE(find(r, 1)->passed_fusion);
  CHECK(find(r, 2)->passed_fusion);
  CHECK(passes_fusion(p.sal, 0, 2, policy));
  CHECK_FALSE(passes_fusion(p.sal, 0, 1, policy));
}

TEST_CASE("full pipeline overload tags errors with their stage") {
  const Document plain = segment("Alpha holds. Beta holds.");
  auto s = std::make_shared<ScriptedNliBackend>();
  NliEngine engine(s);
  ProviderConfig config;
  config.max_tokens = 2;
  auto provider = make_attention_provider(config);
  try {
    analyze(plain, 0, *provider, engine);
    FAIL("expected DocumentTooLong");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDocumentTooLong);
    CHECK(e.stage() == Stage::kAttention);
  }
  config.max_tokens = 100;
  provider = make_attention_provider(config);
  try {
    analyze(plain, 5, *provider, engine);
    FAIL("expected IndexOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIndexOutOfRange);
    CHECK(e.stage() == Stage::kSaliency);
  }
  const AnalysisResult ok = analyze(plain, 1, *provider, engine, ThresholdPolicy::absolute(0.0));
  CHECK(ok.annotations.empty());
  CHECK(ok.timings.attention_ms >= 0.0);
}

TEST_CASE("full pipeline matches the staged pipeline") {
  const Document plain = segment(read_file(fixture_path("case1_sun.txt")));
  ProviderConfig config;
  config.backend = AttentionBackend::kFile;
  config.attention_path = fixture_path("case1_sun.attn");
  auto provider = make_attention_provider(config);
  const Pipeline p = load_case("case1_sun");
  NliEngine engine(p.nli);
  CHECK(equivalent(analyze(plain, 0, *provider, engine), analyze(p.doc, p.sal, 0, engine)));
}

TEST_CASE("NLI failures surface as partial results") {
  const Pipeline p = load_case("case1_sun");
  auto s = std::make_shared<ScriptedNliBackend>();
  s->set("It is the center of our solar system.", "The sun is a star.", NliLabel::kEntailment);
  s->fail_on("The sun is a star.", "The sun is a planet.");
  NliConfig config;
  config.batch_size = 2;
  NliEngine engine(s, config);
  const AnalysisResult r = analyze(p.doc, p.sal, 0, engine);
  CHECK_FALSE(r.complete());
  CHECK(r.failures.count(2) == 1);
  REQUIRE(r.annotations.size() == 1);
  CHECK(r.annotations[0].index == 1);
  const auto j = to_json(r);
  CHECK(j["failures"].size() == 1);
  CHECK(validate_result_json(j).empty());
}

TEST_CASE("refilter with the same policy is a no-op") {
  const Pipeline p = load_case("case1_sun");
  NliEngine engine(p.nli);
  const AnalysisResult first = analyze(p.doc, p.sal, 0, engine);
  engine.reset_counters();
  const AnalysisResult again = refilter(first, p.doc, p.sal, first.policy, engine);
  CHECK(equivalent(first, again));
  CHECK(engine.backend_calls() == 0);
  CHECK(to_json(first)["annotations"].dump() == to_json(again)["annotations"].dump());
}

TEST_CASE("refilter above every saliency fails everything without inference") {
  const Pipeline p = load_case("case1_sun");
  NliEngine engine(p.nli);
  const AnalysisResult first = analyze(p.doc, p.sal, 0, engine);
  engine.reset_counters();
  const AnalysisResult tight = refilter(first, p.doc, p.sal, ThresholdPolicy::absolute(0.5), engine);
  CHECK(tight.annotations.size() == 2);
  CHECK(tight.passing().empty());
  CHECK(engine.backend_calls() == 0);
}

TEST_CASE("refilter classifies only newly admitted sentences") {
  const Pipeline p = load_case("case3_streetlights");
  NliEngine engine(p.nli);
  const AnalysisResult strict = analyze(p.doc, p.sal, 2, engine, ThresholdPolicy::relative(2.0));
  CHECK(find(strict, 4) == nullptr);
  const std::size_t before = strict.verdicts.size();
  engine.reset_counters();
  const AnalysisResult loose = refilter(strict, p.doc, p.sal, ThresholdPolicy::relative(0.0), engine);
  const std::size_t fresh = select_candidates(p.sal, 2, ThresholdPolicy::relative(0.0)).size() - before;
  CHECK(fresh >= 1);
  CHECK(engine.backend_calls() == 2 * fresh);
  const Annotation* contra = find(loose, 4);
  REQUIRE(contra != nullptr);
  CHECK(contra->passed_fusion);
  CHECK(contra->role == Relation::kContradiction);

  // Refiltering and analyzing from scratch agree.
  NliEngine fresh_engine(p.nli);
  CHECK(equivalent(loose, analyze(p.doc, p.sal, 2, fresh_engine, ThresholdPolicy::relative(0.0))));
}

TEST_CASE("refilter rejects results from another document") {
  const Pipeline sun = load_case("case1_sun");
  const Pipeline ocean = load_case("case0_ocean");
  NliEngine engine(sun.nli);
  const AnalysisResult r = analyze(sun.doc, sun.sal, 0, engine);
  try {
    refilter(r, ocean.doc, ocean.sal, ThresholdPolicy{}, engine);
    FAIL("expected StaleCache");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kStaleCache);
  }
}

TEST_CASE("html render highlights the target and passing sentences") {
  const Pipeline p = load_case("case1_sun");
  NliEngine engine(p.nli);
  const AnalysisResult r = analyze(p.doc, p.sal, 0, engine);
  const std::string html = render_annotations(r, p.doc, RenderFormat::kHtml);
  CHECK(html.rfind("<!DOCTYPE html>", 0) == 0);
  CHECK(count(html, "data-index=") == 3);
  CHECK(count(html, "<span class=\"target\" data-index=\"0\">") == 1);
  CHECK(count(html, "<span class=\"premise\" data-index=\"1\">") == 1);
  CHECK(count(html, "<span class=\"contradiction\" data-index=\"2\">") == 1);
  CHECK(html.find("<style>") != std::string::npos);
  CHECK(html.find("<link") == std::string::npos);

  const AnalysisResult none = refilter(r, p.doc, p.sal, ThresholdPolicy::absolute(0.9), engine);
  const std::string filtered = render_annotations(none, p.doc, RenderFormat::kHtml);
  CHECK(count(filtered, "<span class=\"target\" data-index=") == 1);
  CHECK(count(filtered, "<span class=\"premise\" data-index=") == 0);
  CHECK(count(filtered, "<span class=\"contradiction\" data-index=") == 0);
  CHECK(count(filtered, "<span class=\"candidate\" data-index=") == 2);
}

TEST_CASE("html render escapes document text") {
  const Document plain = segment("Use <b> & \"quotes\". Then stop.");
  const Document doc = align(plain, word_tokenize(plain));
  AnalysisResult r;
  r.doc_id = doc.doc_id();
  const std::string html = render_annotations(r, doc, RenderFormat::kHtml);
  CHECK(html.find("&lt;b&gt; &amp; &quot;quotes&quot;") != std::string::npos);
  CHECK(html.find("<b>") == std::string::npos);
}

TEST_CASE("terminal render uses ANSI colors") {
  const Pipeline p = load_case("case1_sun");
  NliEngine engine(p.nli);
  const std::string out = render_annotations(analyze(p.doc, p.sal, 0, engine), p.doc, RenderFormat::kTerminal);
  CHECK(out.find("\x1b[30;42mThe sun is a star.\x1b[0m") != std::string::npos);
  CHECK(out.find("\x1b[30;43m") != std::string::npos);
  CHECK(out.find("\x1b[30;41m") != std::string::npos);
}

TEST_CASE("result JSON round trip and schema") {
  const Pipeline p = load_case("case2_bookshelf");
  NliEngine engine(p.nli);
  ThresholdPolicy policy = ThresholdPolicy::relative(2.0, Direction::kMaxBoth);
  policy.tau_confirm = 0.01;
  const AnalysisResult r = analyze(p.doc, p.sal, 0, engine, policy);
  const auto j = to_json(r);
  CHECK(validate_result_json(j).empty());
  for (const char* key : {"doc_id", "target", "policy", "stats", "annotations", "timings"}) CHECK(j.contains(key));
  const AnalysisResult back = result_from_json(j);
  CHECK(equivalent(back, r));
  CHECK(to_json(back) == j);
  CHECK(result_from_json(nlohmann::json::parse(render_annotations(r, p.doc, RenderFormat::kJson))).annotations ==
        r.annotations);

  auto broken = j;
  broken["annotations"][0]["role"] = "support";
  CHECK_FALSE(validate_result_json(broken).empty());
  broken = j;
  broken.erase("stats");
  CHECK_FALSE(validate_result_json(broken).empty());
  broken = j;
  broken["target"] = -1;
  CHECK_FALSE(validate_result_json(broken).empty());
}

TEST_CASE("property: conjunction soundness and refilter coherence on random documents") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> k(-1.0, 2.5);
  for (int trial = 0; trial < 150; ++trial) {
    RandomCase c = random_case(rng);
    NliEngine engine(c.nli);
    const std::size_t target = rng() % c.doc.size();
    const ThresholdPolicy p1 = ThresholdPolicy::relative(k(rng));
    const ThresholdPolicy p2 = ThresholdPolicy::relative(k(rng));
    const AnalysisResult a = analyze(c.doc, c.sal, target, engine, p1);
    check_soundness(a, c.sal);
    const AnalysisResult via_refilter = refilter(a, c.doc, c.sal, p2, engine);
    check_soundness(via_refilter, c.sal);
    const AnalysisResult direct = analyze(c.doc, c.sal, target, engine, p2);
    // Refilter may keep extra labeled (non-passing) annotations from the
    // looser first pass; the passing sets must agree.
    CHECK(via_refilter.passing() == direct.passing());
    CHECK(equivalent(refilter(a, c.doc, c.sal, p1, engine), a));
  }
}

TEST_CASE("property: raising tau never adds a passing annotation") {
  std::mt19937 rng(32);
  std::uniform_real_distribution<double> tau(0.0, 0.4);
  for (int trial = 0; trial < 150; ++trial) {
    RandomCase c = random_case(rng);
    NliEngine engine(c.nli);
    const std::size_t target = rng() % c.doc.size();
    double t1 = tau(rng), t2 = tau(rng);
    if (t1 > t2) std::swap(t1, t2);
    const auto low = analyze(c.doc, c.sal, target, engine, ThresholdPolicy::absolute(t1)).passing();
    const auto high = analyze(c.doc, c.sal, target, engine, ThresholdPolicy::absolute(t2)).passing();
    for (const auto& h : high) {
      CHECK(std::find_if(low.begin(), low.end(), [&](const Annotation& a) { return a.index == h.index; }) !=
            low.end());
    }
  }
}
