#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ambidist/distmath.hpp"
#include "ambidist/errors.hpp"
#include "ambidist/rng.hpp"
#include "ambidist/synthgen.hpp"
#include "fixtures.hpp"
#include "reference_impls.hpp"

using namespace ambidist;
using namespace ambidist::synthgen;

namespace {

Utterance simple_utterance(std::string id = "u1") {
  Utterance u;
  u.id = std::move(id);
  u.transcript = "I can't believe it";
  u.audio = fixtures::synth_tone(320, 220.0);
  u.human_annotations = {0, 0, 1};
  return u;
}

// Provider scripted with a fixed response sequence; counts calls.
class ScriptedProvider : public Provider {
 public:
  explicit ScriptedProvider(std::vector<std::string> responses)
      : responses_(std::move(responses)) {}

  std::string name() const override { return "scripted"; }

  std::string complete(const std::string&, const Utterance&,
                       const AnnotatorConfig&, int) override {
    const auto i = calls_.fetch_add(1);
    if (i >= responses_.size()) return responses_.back();
    return responses_[i];
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::vector<std::string> responses_;
  std::atomic<std::size_t> calls_{0};
};

class ThrowingProvider : public Provider {
 public:
  std::string name() const override { return "throwing"; }
  std::string complete(const std::string&, const Utterance&,
                       const AnnotatorConfig&, int) override {
    ++calls_;
    throw ProviderError("synthetic transport failure");
  }
  int calls_ = 0;
};

}  // namespace

TEST_CASE("the persona set has the five attention-steering instructions") {
  const auto& personas = default_personas();
  REQUIRE(personas.size() == 5);
  CHECK(personas[0] == "Focus on both vocal tone and linguistic content.");
  CHECK(personas[1] == "Pay special attention to the speaker's tone of voice.");
  CHECK(personas[2] == "Consider the word choice and phrasing in the utterance.");
  CHECK(personas[3] == "Listen for subtle emotional cues in the voice.");
  CHECK(personas[4] == "Analyze both what is said and how it is expressed.");
}

TEST_CASE("build_prompt renders the five blocks in order") {
  const auto u = simple_utterance();
  AnnotatorConfig cfg;
  cfg.persona = default_personas()[1];
  const auto rendered =
      build_prompt(u, cfg, CategorySet::defaults()).render();

  // five blocks separated by blank lines
  std::vector<std::string> blocks;
  std::size_t pos = 0;
  while (true) {
    const auto next = rendered.find("\n\n", pos);
    if (next == std::string::npos) {
      blocks.push_back(rendered.substr(pos));
      break;
    }
    blocks.push_back(rendered.substr(pos, next - pos));
    pos = next + 2;
  }
  REQUIRE(blocks.size() == 5);
  CHECK(blocks[0].find("Select the ONE most dominant emotion") !=
        std::string::npos);
  CHECK(blocks[1] == "Transcript: \"I can't believe it\"");
  CHECK(blocks[2] == "Possible emotions: Angry, Happy, Sad, Neutral");

  // instructions block line 2 is exactly the persona
  std::istringstream instructions(blocks[3]);
  std::string line1, line2;
  std::getline(instructions, line1);
  std::getline(instructions, line2);
  CHECK(line2 ==
        "2. Pay special attention to the speaker's tone of voice.");
  CHECK(blocks[4] ==
        "Which single emotion best describes this utterance? Select only "
        "from: Angry, Happy, Sad, Neutral");

  // byte determinism
  CHECK(rendered == build_prompt(u, cfg, CategorySet::defaults()).render());
}

TEST_CASE("build_prompt substitutes the category list in both slots") {
  const auto u = simple_utterance();
  AnnotatorConfig cfg;
  cfg.persona = default_personas()[0];
  const CategorySet two({"Angry", "Happy"});
  const auto rendered = build_prompt(u, cfg, two).render();
  CHECK(rendered.find("Possible emotions: Angry, Happy\n") !=
        std::string::npos);
  CHECK(rendered.find("Select only from: Angry, Happy") != std::string::npos);
  // exactly two occurrences of the joined list
  std::size_t count = 0, pos = 0;
  while ((pos = rendered.find("Angry, Happy", pos)) != std::string::npos) {
    ++count;
    pos += 1;
  }
  CHECK(count == 2);
}

TEST_CASE("build_prompt warns on empty transcripts; render needs categories") {
  auto u = simple_utterance();
  u.transcript.clear();
  std::vector<std::string> warnings;
  AnnotatorConfig cfg;
  cfg.persona = default_personas()[0];
  build_prompt(u, cfg, CategorySet::defaults(), &warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("audio-only") != std::string::npos);

  PromptSpec empty;
  CHECK_THROWS_AS(empty.render(), EmptyCategoryList);
}

TEST_CASE("parse_response trims and matches case-insensitively") {
  const auto& cats = CategorySet::defaults();
  CHECK(parse_response("Happy", cats) == 1);
  CHECK(parse_response(" sad.\n", cats) == 2);
  CHECK(parse_response("NEUTRAL", cats) == 3);
  CHECK(parse_response("\"Angry!\"", cats) == 0);
  CHECK_THROWS_AS(parse_response("Excited", cats), InvalidLabel);
  CHECK_THROWS_AS(parse_response("", cats), InvalidLabel);
  try {
    parse_response("Happy or Sad", cats);
    FAIL("expected InvalidLabel");
  } catch (const InvalidLabel& ex) {
    CHECK(std::string(ex.what()).find("multiple") != std::string::npos);
  }
}

TEST_CASE("mock_annotate samples the latent distribution at T = 1") {
  const auto latent =
      EmotionDistribution::unchecked({0.6, 0.2, 0.1, 0.1});
  AnnotatorConfig cfg;
  cfg.temperature = 1.0;
  cfg.seed = 2024;
  constexpr std::size_t kDraws = 100000;
  std::vector<std::size_t> counts(4, 0);
  for (std::size_t i = 0; i < kDraws; ++i) {
    counts[static_cast<std::size_t>(
        mock_annotate(latent, cfg, static_cast<int>(i)))]++;
  }
  for (std::size_t c = 0; c < 4; ++c) {
    const double freq = static_cast<double>(counts[c]) / kDraws;
    CHECK(std::abs(freq - latent[c]) < 0.01);
  }
  const double stat =
      refimpl::chi_square_stat(counts, latent.probs(), kDraws);
  CHECK(stat < refimpl::chi_square_crit99(3));  // p > 0.01
}

TEST_CASE("mock_annotate applies power tempering") {
  const auto latent =
      EmotionDistribution::unchecked({0.6, 0.2, 0.1, 0.1});
  AnnotatorConfig cfg;
  cfg.temperature = 0.5;
  cfg.seed = 5;
  // squares (0.36, 0.04, 0.01, 0.01) renormalized
  const std::vector<double> tempered = {0.36 / 0.42, 0.04 / 0.42, 0.01 / 0.42,
                                        0.01 / 0.42};
  constexpr std::size_t kDraws = 100000;
  std::vector<std::size_t> counts(4, 0);
  for (std::size_t i = 0; i < kDraws; ++i) {
    counts[static_cast<std::size_t>(
        mock_annotate(latent, cfg, static_cast<int>(i)))]++;
  }
  for (std::size_t c = 0; c < 4; ++c) {
    const double freq = static_cast<double>(counts[c]) / kDraws;
    CHECK(std::abs(freq - tempered[c]) < 0.01);
  }
  const double stat = refimpl::chi_square_stat(counts, tempered, kDraws);
  CHECK(stat < refimpl::chi_square_crit99(3));
}

TEST_CASE("mock_annotate collapses to the argmax as T approaches zero") {
  const auto latent =
      EmotionDistribution::unchecked({0.6, 0.2, 0.1, 0.1});
  AnnotatorConfig cfg;
  cfg.temperature = 1e-6;
  cfg.seed = 17;
  for (int i = 0; i < 500; ++i) {
    CHECK(mock_annotate(latent, cfg, i) == 0);
  }
}

TEST_CASE("mock_annotate is deterministic in (seed, draw)") {
  const auto latent =
      EmotionDistribution::unchecked({0.6, 0.2, 0.1, 0.1});
  AnnotatorConfig cfg;
  cfg.temperature = 1.0;
  cfg.seed = 321;
  for (int i = 0; i < 50; ++i) {
    CHECK(mock_annotate(latent, cfg, i) == mock_annotate(latent, cfg, i));
  }
}

TEST_CASE("annotate_utterance retries invalid labels, records the attempt") {
  const auto u = simple_utterance();
  AnnotatorConfig cfg;
  cfg.persona = default_personas()[0];
  cfg.temperature = 0.4;
  ScriptedProvider provider({"joy", "Happy"});
  const auto rec =
      annotate_utterance(u, cfg, 3, provider, CategorySet::defaults());
  CHECK(rec.label == 1);
  CHECK(rec.label_name == "Happy");
  CHECK(rec.attempt == 2);
  CHECK(rec.raw_response == "Happy");
  CHECK(provider.calls() == 2);
}

TEST_CASE("annotate_utterance fails after exhausting invalid-label retries") {
  const auto u = simple_utterance();
  AnnotatorConfig cfg;
  cfg.persona = default_personas()[0];
  ScriptedProvider provider({"nope", "still nope", "joy", "excited"});
  CHECK_THROWS_AS(
      annotate_utterance(u, cfg, 2, provider, CategorySet::defaults()),
      AnnotationFailed);
  CHECK(provider.calls() == 3);  // initial + 2 retries
}

TEST_CASE("annotate_utterance surfaces transport errors as ProviderError") {
  const auto u = simple_utterance();
  AnnotatorConfig cfg;
  cfg.persona = default_personas()[0];
  ThrowingProvider provider;
  CHECK_THROWS_AS(
      annotate_utterance(u, cfg, 1, provider, CategorySet::defaults()),
      ProviderError);
  CHECK(provider.calls_ == 2);
}

TEST_CASE("annotation cache returns stored records without provider calls") {
  const auto dir = fixtures::fresh_dir("cache");
  AnnotationCache cache(dir);
  const auto u = simple_utterance();
  AnnotatorConfig cfg;
  cfg.persona = default_personas()[2];
  cfg.temperature = 0.73;
  cfg.model_name = "test-model";
  cfg.draw = 4;

  ScriptedProvider provider({"Sad"});
  const auto first = annotate_utterance(u, cfg, 1, provider,
                                        CategorySet::defaults(), &cache);
  CHECK(first.label == 2);
  CHECK(!first.from_cache);
  CHECK(provider.calls() == 1);

  const auto second = annotate_utterance(u, cfg, 1, provider,
                                         CategorySet::defaults(), &cache);
  CHECK(second.label == 2);
  CHECK(second.from_cache);
  CHECK(second.timestamp_utc == first.timestamp_utc);
  CHECK(provider.calls() == 1);  // zero additional network calls

  // one JSON file per record under cache/<utterance>/<key>.json
  const auto key = AnnotationCache::key(cfg.persona, cfg.temperature,
                                        cfg.model_name, cfg.draw);
  CHECK(std::filesystem::exists(dir / u.id / (key + ".json")));
}

TEST_CASE("generate_annotation_sets fills n labels per utterance") {
  fixtures::CorpusOptions opts;
  opts.n = 10;
  auto corpus = fixtures::make_utterances(opts);
  MockProvider provider(CategorySet::defaults());
  GeneratePolicy policy;
  policy.seed = 1;
  const auto report = generate_annotation_sets(corpus, 6, policy, provider,
                                               CategorySet::defaults());
  CHECK(report.records.size() == 60);
  CHECK(report.failures.empty());
  for (const auto& u : corpus) {
    CHECK(u.synthetic_annotations.size() == 6);
    for (int label : u.synthetic_annotations) {
      CHECK(label >= 0);
      CHECK(label < 4);
    }
  }
  // records ordered by (utterance, draw)
  for (std::size_t i = 1; i < report.records.size(); ++i) {
    const auto& a = report.records[i - 1];
    const auto& b = report.records[i];
    CHECK((a.utterance_id < b.utterance_id ||
           (a.utterance_id == b.utterance_id &&
            a.config.draw < b.config.draw)));
  }
  // temperatures stay within the configured bounds
  for (const auto& rec : report.records) {
    CHECK(rec.config.temperature >= policy.temperature_min);
    CHECK(rec.config.temperature <= policy.temperature_max);
  }
}

TEST_CASE("generate_annotation_sets rerun hits the cache for every draw") {
  const auto dir = fixtures::fresh_dir("cache-rerun");
  fixtures::CorpusOptions opts;
  opts.n = 6;
  auto corpus = fixtures::make_utterances(opts);
  MockProvider provider(CategorySet::defaults());
  GeneratePolicy policy;
  policy.seed = 9;
  AnnotationCache cache(dir);

  auto first_corpus = corpus;
  const auto first = generate_annotation_sets(first_corpus, 4, policy,
                                              provider, CategorySet::defaults(),
                                              &cache);
  CHECK(first.cache_hits == 0);
  CHECK(first.provider_calls == 24);

  // snapshot cache bytes
  std::map<std::string, std::string> before;
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    before[entry.path().string()] =
        std::string((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  }

  auto second_corpus = corpus;
  const auto second = generate_annotation_sets(second_corpus, 4, policy,
                                               provider,
                                               CategorySet::defaults(),
                                               &cache);
  CHECK(second.provider_calls == 0);  // 100% hit rate
  CHECK(second.cache_hits == 24);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(first_corpus[i].synthetic_annotations ==
          second_corpus[i].synthetic_annotations);
  }

  std::map<std::string, std::string> after;
  for (const auto& entry :
       std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    after[entry.path().string()] =
        std::string((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  }
  CHECK(before == after);  // byte-identical cache contents
}

TEST_CASE("generate_annotation_sets labels are independent of worker count") {
  fixtures::CorpusOptions opts;
  opts.n = 8;
  auto sequential = fixtures::make_utterances(opts);
  auto parallel = fixtures::make_utterances(opts);
  MockProvider provider(CategorySet::defaults());
  GeneratePolicy policy;
  policy.seed = 31;
  generate_annotation_sets(sequential, 5, policy, provider,
                           CategorySet::defaults());
  policy.max_in_flight = 4;
  policy.rate_per_sec = 2000.0;
  generate_annotation_sets(parallel, 5, policy, provider,
                           CategorySet::defaults());
  for (std::size_t i = 0; i < sequential.size(); ++i) {
    CHECK(sequential[i].synthetic_annotations ==
          parallel[i].synthetic_annotations);
  }
}

TEST_CASE("generate_annotation_sets reports failures per draw") {
  fixtures::CorpusOptions opts;
  opts.n = 3;
  auto corpus = fixtures::make_utterances(opts);
  ThrowingProvider provider;
  GeneratePolicy policy;
  policy.retries = 0;
  const auto report = generate_annotation_sets(corpus, 2, policy, provider,
                                               CategorySet::defaults());
  CHECK(report.records.empty());
  CHECK(report.failures.size() == 6);
  CHECK(report.failures[0].reason.find("transport") != std::string::npos);
}

TEST_CASE("remote provider speaks the HTTP/JSON contract") {
  httplib::Server server;
  nlohmann::json last_request;
  std::string last_auth;
  server.Post("/annotate", [&](const httplib::Request& req,
                               httplib::Response& res) {
    last_request = nlohmann::json::parse(req.body);
    if (req.has_header("Authorization")) {
      last_auth = req.get_header_value("Authorization");
    }
    res.set_content("{\"text\": \" sad.\"}", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&server] { server.listen_after_bind(); });
  while (!server.is_running()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }

  setenv("AMBIDIST_TEST_KEY", "sekrit", 1);
  RemoteProvider::Options options;
  options.endpoint =
      "http://127.0.0.1:" + std::to_string(port) + "/annotate";
  options.model = "alm-test";
  options.credential_env = "AMBIDIST_TEST_KEY";
  RemoteProvider provider(options);

  const auto u = simple_utterance();
  AnnotatorConfig cfg;
  cfg.persona = default_personas()[3];
  cfg.temperature = 0.42;
  cfg.model_name = provider.model();
  const auto rec =
      annotate_utterance(u, cfg, 1, provider, CategorySet::defaults());
  CHECK(rec.label == 2);

  CHECK(last_request.at("model") == "alm-test");
  CHECK(last_request.at("temperature").get<double>() ==
        doctest::Approx(0.42));
  const auto prompt = last_request.at("prompt").get<std::string>();
  CHECK(prompt.find("I can't believe it") != std::string::npos);
  CHECK(prompt.find(default_personas()[3]) != std::string::npos);
  const auto b64 = last_request.at("audio_wav_base64").get<std::string>();
  CHECK(b64.size() > 100);
  CHECK(b64.find_first_not_of(
            "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz"
            "0123456789+/=") == std::string::npos);
  CHECK(last_auth == "Bearer sekrit");

  server.stop();
  server_thread.join();
}

TEST_CASE("remote provider surfaces HTTP errors and bad payloads") {
  httplib::Server server;
  server.Post("/fail", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
  });
  server.Post("/junk", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("...", "text/plain");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&server] { server.listen_after_bind(); });
  while (!server.is_running()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  const auto u = simple_utterance();
  AnnotatorConfig cfg;
  cfg.persona = default_personas()[0];

  RemoteProvider::Options options;
  options.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/fail";
  RemoteProvider failing(options);
  CHECK_THROWS_AS(failing.complete("p", u, cfg, 1), ProviderError);

  options.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/junk";
  RemoteProvider junk(options);
  CHECK_THROWS_AS(junk.complete("p", u, cfg, 1), ProviderError);

  server.stop();
  server_thread.join();
}
