// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <random>
#include <thread>

#include "claimscope/document.hpp"
#include "claimscope/error.hpp"
#include "claimscope/nli.hpp"
#include "claimscope/subprocess.hpp"
#include "claimscope/text.hpp"
#include "test_support.hpp"

using namespace claimscope;

namespace {

const char* kSun =
    "The sun is a star. It is the center of our solar system. The sun is a planet. All planets revolve around it.";

// Wraps another backend and records every batch it receives.
class RecordingBackend final : public NliBackend {
 public:
  explicit RecordingBackend(std::shared_ptr<NliBackend> inner) : inner_(std::move(inner)) {}

  std::vector<NliProbs> classify(std::span<const TextPair> pairs) override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      batches.push_back(pairs.size());
      for (const auto& p : pairs) seen.push_back(p);
    }
    return inner_->classify(pairs);
  }
  std::string id() const override { return "recording"; }
  std::string model_id() const override { return inner_->model_id(); }

  std::size_t pairs() const {
    std::size_t n = 0;
    for (auto b : batches) n += b;
    return n;
  }

  std::mutex mu_;
  std::vector<std::size_t> batches;
  std::vector<TextPair> seen;

 private:
  std::shared_ptr<NliBackend> inner_;
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

std::shared_ptr<ScriptedNliBackend> sun_script() {
  auto s = std::make_shared<ScriptedNliBackend>();
  s->set("It is the center of our solar system.", "The sun is a star.", NliProbs{0.92, 0.06, 0.02});
  s->set("The sun is a star.", "The sun is a planet.", NliProbs{0.01, 0.03, 0.96});
  return s;
}

}  // namespace

TEST_CASE("argmax tie-breaking prefers entailment, then contradiction") {
  CHECK(argmax_label({0.2, 0.7, 0.1}) == NliLabel::kNeutral);
  CHECK(argmax_label({0.4, 0.2, 0.4}) == NliLabel::kEntailment);
  CHECK(argmax_label({0.2, 0.4, 0.4}) == NliLabel::kContradiction);
  CHECK(argmax_label({0.4, 0.4, 0.2}) == NliLabel::kEntailment);
  CHECK(argmax_label({1.0 / 3, 1.0 / 3, 1.0 / 3}) == NliLabel::kEntailment);
}

TEST_CASE("scripted backend uses its rule table and is neutral elsewhere") {
  auto s = std::make_shared<ScriptedNliBackend>();
  s->set("A", "B", NliLabel::kContradiction);
  NliEngine engine(s);
  const NliVerdict ab = engine.classify_pair("A", "B");
  CHECK(ab.label == NliLabel::kContradiction);
  CHECK(ab.premise_text == "A");
  CHECK(ab.hypothesis_text == "B");
  CHECK(ab.backend_id == "scripted");
  CHECK(engine.classify_pair("B", "A").label == NliLabel::kNeutral);
  CHECK(engine.classify_pair("A", "C").label == NliLabel::kNeutral);
}

TEST_CASE("classify_pair input checks") {
  NliConfig config;
  config.max_text_chars = 10;
  NliEngine engine(std::make_shared<ScriptedNliBackend>(), config);
  CHECK(code_of([&] { engine.classify_pair("", "B"); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { engine.classify_pair("A", ""); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { engine.classify_pair("A much longer premise", "B"); }) == ErrorCode::kTextTooLong);
  // Limit counts code points: ten accented letters are fine.
  CHECK_NOTHROW(engine.classify_pair("\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9\xC3\xA9", "B"));
}

TEST_CASE("config validation") {
  NliConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.batch_size = 4;
  c.min_confidence = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("sun passage: one premise and one contradiction") {
  const Document doc = segment(kSun);
  NliEngine engine(sun_script());
  const std::vector<std::size_t> candidates{1, 2};
  const RelationshipMatrix r = engine.classify_candidates(doc, 0, candidates);
  REQUIRE(r.links.size() == 2);
  CHECK(r.links.at(1).relation == Relation::kPremise);
  CHECK(r.links.at(1).confidence == 0.92);
  CHECK(r.links.at(1).verdicts.as_premise.premise_text == "It is the center of our solar system.");
  CHECK(r.links.at(2).relation == Relation::kContradiction);
  CHECK(r.links.at(2).confidence == 0.96);
  CHECK(r.links.at(2).verdicts.as_contradiction.premise_text == "The sun is a star.");
  CHECK(r.classified.size() == 2);
  CHECK(r.failures.empty());
}

TEST_CASE("fixture backend replays committed verdicts") {
  const Document doc = segment(read_file(fixture_path("case1_sun.txt")));
  auto fixture = std::make_shared<FixtureNliBackend>(fixture_path("nli_fixture.jsonl"));
  CHECK(fixture->size() > 0);
  NliEngine engine(fixture);
  const std::vector<std::size_t> candidates{1, 2, 3};
  const RelationshipMatrix r = engine.classify_candidates(doc, 0, candidates);
  CHECK(r.links.size() == 2);
  CHECK(r.links.at(1).relation == Relation::kPremise);
  CHECK(r.links.at(2).relation == Relation::kContradiction);
  CHECK(r.classified.count(3) == 1);
  // Reflexive entailment is part of the committed table.
  CHECK(engine.classify_pair("The sun is a star.", "The sun is a star.").label == NliLabel::kEntailment);
  // Pairs outside the table are neutral.
  const NliVerdict unknown = engine.classify_pair("Unlisted premise.", "Unlisted hypothesis.");
  CHECK(unknown.probs == NliProbs{0.0, 1.0, 0.0});
  CHECK(code_of([] { FixtureNliBackend missing("/nonexistent/fixture.jsonl"); }) == ErrorCode::kIOFailure);
}

TEST_CASE("empty candidate list makes no backend calls") {
  const Document doc = segment(kSun);
  auto rec = std::make_shared<RecordingBackend>(sun_script());
  NliEngine engine(rec);
  const RelationshipMatrix r = engine.classify_candidates(doc, 0, {});
  CHECK(r.links.empty());
  CHECK(rec->batches.empty());
  CHECK(engine.backend_calls() == 0);
}

TEST_CASE("candidate list errors") {
  const Document doc = segment(kSun);
  NliEngine engine(sun_script());
  const std::vector<std::size_t> self{0, 1};
  const std::vector<std::size_t> far{7};
  CHECK(code_of([&] { engine.classify_candidates(doc, 0, self); }) == ErrorCode::kSelfPair);
  CHECK(code_of([&] { engine.classify_candidates(doc, 0, far); }) == ErrorCode::kIndexOutOfRange);
  CHECK(code_of([&] { engine.classify_candidates(doc, 4, {}); }) == ErrorCode::kIndexOutOfRange);
}

TEST_CASE("dual fire keeps the higher deciding probability, ties go to contradiction") {
  const Document doc = segment("Alpha holds. Beta holds.");
  auto s = std::make_shared<ScriptedNliBackend>();
  const std::vector<std::size_t> one{1};

  SUBCASE("premise stronger") {
    s->set("Beta holds.", "Alpha holds.", NliProbs{0.8, 0.1, 0.1});
    s->set("Alpha holds.", "Beta holds.", NliProbs{0.1, 0.2, 0.7});
    NliEngine engine(s);
    const auto r = engine.classify_candidates(doc, 0, one);
    CHECK(r.links.at(1).relation == Relation::kPremise);
    CHECK(r.links.at(1).confidence == 0.8);
    CHECK(r.links.at(1).verdicts.as_contradiction.label == NliLabel::kContradiction);
  }
  SUBCASE("contradiction stronger") {
    s->set("Beta holds.", "Alpha holds.", NliProbs{0.6, 0.3, 0.1});
    s->set("Alpha holds.", "Beta holds.", NliProbs{0.05, 0.05, 0.9});
    NliEngine engine(s);
    CHECK(engine.classify_candidates(doc, 0, one).links.at(1).relation == Relation::kContradiction);
  }
  SUBCASE("tie") {
    s->set("Beta holds.", "Alpha holds.", NliProbs{0.7, 0.2, 0.1});
    s->set("Alpha holds.", "Beta holds.", NliProbs{0.1, 0.2, 0.7});
    NliEngine engine(s);
    const auto r = engine.classify_candidates(doc, 0, one);
    CHECK(r.links.at(1).relation == Relation::kContradiction);
    CHECK(r.links.at(1).confidence == 0.7);
  }
}

TEST_CASE("neutral in both orderings produces no link") {
  const Document doc = segment("Alpha holds. Beta holds.");
  auto s = std::make_shared<ScriptedNliBackend>();
  // Entailment in the contradiction ordering and contradiction in the premise
  // ordering do not count.
  s->set("Beta holds.", "Alpha holds.", NliProbs{0.1, 0.1, 0.8});
  s->set("Alpha holds.", "Beta holds.", NliProbs{0.8, 0.1, 0.1});
  NliEngine engine(s);
  const std::vector<std::size_t> one{1};
  const auto r = engine.classify_candidates(doc, 0, one);
  CHECK(r.links.empty());
  CHECK(r.classified.count(1) == 1);
}

TEST_CASE("min_confidence filters weak labels") {
  const Document doc = segment(kSun);
  NliConfig config;
  config.min_confidence = 0.95;
  NliEngine engine(sun_script(), config);
  const std::vector<std::size_t> candidates{1, 2};
  const auto r = engine.classify_candidates(doc, 0, candidates);
  CHECK(r.links.size() == 1);
  CHECK(r.links.at(2).relation == Relation::kContradiction);
}

TEST_CASE("two backend pairs per candidate, batched within batch_size") {
  std::mt19937 rng(21);
  for (std::size_t batch : {1u, 2u, 3u, 8u, 16u}) {
    const Document doc = segment(
        "One is here. Two is here. Three is here. Four is here. Five is here. Six is here. Seven is here.");
    auto rec = std::make_shared<RecordingBackend>(std::make_shared<ScriptedNliBackend>());
    NliConfig config;
    config.batch_size = batch;
    NliEngine engine(rec, config);
    std::vector<std::size_t> candidates{1, 2, 3, 4, 5, 6};
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(1 + rng() % 6);
    engine.classify_candidates(doc, 0, candidates);
    CHECK(rec->pairs() == 2 * candidates.size());
    CHECK(engine.backend_calls() == 2 * candidates.size());
    CHECK(engine.requests() == 2 * candidates.size());
    for (auto b : rec->batches) CHECK(b <= std::max<std::size_t>(2, batch));
  }
}

TEST_CASE("duplicate candidates are classified once") {
  const Document doc = segment(kSun);
  auto rec = std::make_shared<RecordingBackend>(sun_script());
  NliEngine engine(rec);
  const std::vector<std::size_t> candidates{2, 1, 2};
  const auto r = engine.classify_candidates(doc, 0, candidates);
  CHECK(rec->pairs() == 4);
  CHECK(r.links.size() == 2);
}

TEST_CASE("property: permuting candidates leaves the links unchanged") {
  const Document doc = segment(kSun);
  std::vector<std::size_t> candidates{1, 2, 3};
  NliEngine engine(sun_script());
  const auto reference = engine.classify_candidates(doc, 0, candidates).links;
  do {
    const auto links = engine.classify_candidates(doc, 0, candidates).links;
    REQUIRE(links.size() == reference.size());
    for (const auto& [index, link] : reference) {
      CHECK(links.at(index).relation == link.relation);
      CHECK(links.at(index).confidence == link.confidence);
    }
    CHECK(links.count(0) == 0);
  } while (std::next_permutation(candidates.begin(), candidates.end()));
}

TEST_CASE("backend failures are recorded per candidate") {
  const Document doc = segment(kSun);
  auto s = sun_script();
  s->fail_on("The sun is a star.", "All planets revolve around it.");
  NliConfig config;
  config.batch_size = 2;  // one candidate per backend call
  NliEngine engine(s, config);
  const std::vector<std::size_t> candidates{1, 2, 3};
  const auto r = engine.classify_candidates(doc, 0, candidates);
  CHECK(r.links.size() == 2);
  REQUIRE(r.failures.count(3) == 1);
  CHECK(r.failures.at(3).find("scripted") != std::string::npos);
  CHECK(r.classified.count(3) == 0);
  CHECK(code_of([&] { engine.classify_pair("The sun is a star.", "All planets revolve around it."); }) ==
        ErrorCode::kBackendUnavailable);
}

TEST_CASE("model backend without its helper reports unavailable") {
  NliConfig config;
  config.backend = NliBackendKind::kModel;
  config.helper_script = "/nonexistent/hf_nli.py";
  auto backend = make_nli_backend(config);
  CHECK_FALSE(backend->available());
  NliEngine engine(backend, config);
  CHECK(code_of([&] { engine.classify_pair("A.", "B."); }) == ErrorCode::kBackendUnavailable);
}

TEST_CASE("verdict cache avoids repeat backend calls and persists to disk") {
  TempDir dir;
  const auto path = dir.path() / "verdicts.jsonl";
  const Document doc = segment(kSun);
  const std::vector<std::size_t> candidates{1, 2, 3};
  {
    auto cache = std::make_shared<VerdictCache>(path);
    auto rec = std::make_shared<RecordingBackend>(sun_script());
    NliEngine engine(rec, {}, cache);
    engine.classify_candidates(doc, 0, candidates);
    CHECK(engine.backend_calls() == 6);
    engine.classify_candidates(doc, 0, candidates);
    CHECK(engine.backend_calls() == 6);
    CHECK(engine.requests() == 12);
    CHECK(cache->size() == 6);
  }
  const auto records = VerdictCache::read_file(path);
  REQUIRE(records.size() == 6);
  CHECK(records[0].model_id == "scripted");
  CHECK(records[0].p_hash.size() == 64);
  CHECK(records[0].p_hash == text::content_hash(doc.sentence_text(1)));

  auto reloaded = std::make_shared<VerdictCache>(path);
  auto rec = std::make_shared<RecordingBackend>(std::make_shared<ScriptedNliBackend>());
  NliEngine engine(rec, {}, reloaded);
  const auto r = engine.classify_candidates(doc, 0, candidates);
  CHECK(engine.backend_calls() == 0);
  CHECK(r.links.at(1).relation == Relation::kPremise);
  CHECK(r.links.at(2).relation == Relation::kContradiction);
}

TEST_CASE("verdict cache keys include the model id") {
  VerdictCache cache;
  cache.insert("p", "h", "model-a", {0.9, 0.05, 0.05});
  CHECK(cache.lookup("p", "h", "model-a").has_value());
  CHECK_FALSE(cache.lookup("p", "h", "model-b").has_value());
  CHECK_FALSE(cache.lookup("h", "p", "model-a").has_value());
}

TEST_CASE("verdict file with a torn final line still loads") {
  TempDir dir;
  const auto path = dir.path() / "v.jsonl";
  {
    std::ofstream f(path);
    f << R"({"p_hash":"a","h_hash":"b","model_id":"m","probs":[0.1,0.2,0.7]})" << "\n";
    f << R"({"p_hash":"c","h_hash":"d","mod)";
  }
  CHECK(VerdictCache::read_file(path).size() == 1);
  VerdictCache cache(path);
  CHECK(cache.lookup("a", "b", "m") == NliProbs{0.1, 0.2, 0.7});

  const auto bad = dir.path() / "bad.jsonl";
  {
    std::ofstream f(bad);
    f << "not json\n";
    f << R"({"p_hash":"a","h_hash":"b","model_id":"m","probs":[0.1,0.2,0.7]})" << "\n";
  }
  CHECK(code_of([&] { VerdictCache::read_file(bad); }) == ErrorCode::kCorruptFile);
}

TEST_CASE("concurrent callers share one cache safely") {
  const Document doc = segment(kSun);
  auto cache = std::make_shared<VerdictCache>();
  auto rec = std::make_shared<RecordingBackend>(sun_script());
  NliEngine engine(rec, {}, cache);
  std::vector<std::thread> threads;
  std::vector<RelationshipMatrix> results(8);
  for (std::size_t t = 0; t < results.size(); ++t) {
    threads.emplace_back([&, t] {
      const std::vector<std::size_t> candidates{1, 2, 3};
      results[t] = engine.classify_candidates(doc, 0, candidates);
    });
  }
  for (auto& th : threads) th.join();
  for (const auto& r : results) {
    CHECK(r.links.size() == 2);
    CHECK(r.links.at(2).relation == Relation::kContradiction);
  }
  CHECK(cache->size() == 6);
  CHECK(engine.requests() == 48);
  CHECK(engine.backend_calls() >= 6);
}

TEST_CASE("probabilities JSON") {
  CHECK(to_json(NliProbs{0.1, 0.2, 0.7}) == nlohmann::json::array({0.1, 0.2, 0.7}));
  CHECK(probs_from_json(nlohmann::json::array({0.5, 0.25, 0.25})) == NliProbs{0.5, 0.25, 0.25});
  CHECK_THROWS_AS(probs_from_json(nlohmann::json::array({0.5, 0.5})), Error);
}
