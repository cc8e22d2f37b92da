#include "ambidist/synthgen.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ambidist/audio_io.hpp"
#include "ambidist/distmath.hpp"
#include "ambidist/errors.hpp"
#include "ambidist/rng.hpp"
#include "ambidist/strings.hpp"

namespace ambidist::synthgen {

namespace {

using nlohmann::json;

std::string utc_now_iso8601() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

constexpr const char* kTaskDescription =
    "Listen to the audio and analyze this speech utterance. Think deeply and "
    "Select the ONE most dominant emotion present.";

constexpr const char* kInstruction1 =
    "1. Carefully analyze the emotional content in both the audio and the "
    "text.";
constexpr const char* kInstruction3 =
    "3. Think deeply and Select ONLY ONE emotion from the list that best "
    "represents the dominant emotional state.";
constexpr const char* kInstruction4 =
    "4. Respond with ONLY the emotion name, nothing else.";

}  // namespace

const std::vector<std::string>& default_personas() {
  static const std::vector<std::string> personas = {
      "Focus on both vocal tone and linguistic content.",
      "Pay special attention to the speaker's tone of voice.",
      "Consider the word choice and phrasing in the utterance.",
      "Listen for subtle emotional cues in the voice.",
      "Analyze both what is said and how it is expressed.",
  };
  return personas;
}

std::string PromptSpec::render() const {
  if (emotion_list.empty()) {
    throw EmptyCategoryList("prompt needs a non-empty emotion list");
  }
  const std::string joined = join(emotion_list, ", ");
  std::string out;
  out += task_description;
  out += "\n\n";
  out += "Transcript: \"" + transcript + "\"";
  out += "\n\n";
  out += "Possible emotions: " + joined;
  out += "\n\n";
  out += std::string(kInstruction1) + "\n";
  out += "2. " + persona + "\n";
  out += std::string(kInstruction3) + "\n";
  out += kInstruction4;
  out += "\n\n";
  out += output_instruction + joined;
  return out;
}

PromptSpec build_prompt(const Utterance& utterance,
                        const AnnotatorConfig& config,
                        const CategorySet& categories,
                        std::vector<std::string>* warnings) {
  if (utterance.transcript.empty()) {
    warn(warnings, "build_prompt: utterance '" + utterance.id +
                       "' has an empty transcript (audio-only prompt)");
  }
  PromptSpec spec;
  spec.task_description = kTaskDescription;
  spec.transcript = utterance.transcript;
  spec.emotion_list = categories.names();
  spec.persona = config.persona;
  spec.output_instruction =
      "Which single emotion best describes this utterance? Select only from: ";
  return spec;
}

int parse_response(const std::string& raw, const CategorySet& categories) {
  const std::string_view trimmed = trim_label(raw);
  if (auto id = categories.find(trimmed)) {
    return *id;
  }
  // Diagnose whether several category names showed up (helps retry logs).
  const std::string lowered = to_lower(raw);
  std::size_t mentions = 0;
  for (const auto& name : categories.names()) {
    if (lowered.find(to_lower(name)) != std::string::npos) ++mentions;
  }
  if (mentions > 1) {
    throw InvalidLabel("multiple category names in response: '" + raw + "'");
  }
  throw InvalidLabel("no category name in response: '" + raw + "'");
}

int mock_annotate(const EmotionDistribution& latent,
                  const AnnotatorConfig& config, int draw_index) {
  const double t = std::max(config.temperature, 1e-6);
  const auto& p = latent.probs();
  std::vector<double> logw(p.size(), -std::numeric_limits<double>::infinity());
  double max_w = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] > 0.0) {
      logw[c] = std::log(p[c]) / t;
      max_w = std::max(max_w, logw[c]);
    }
  }
  std::vector<double> q(p.size(), 0.0);
  double sum = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] > 0.0) {
      q[c] = std::exp(logw[c] - max_w);
      sum += q[c];
    }
  }
  for (double& v : q) v /= sum;
  Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(draw_index)));
  return static_cast<int>(rng.categorical(q));
}

std::string MockProvider::complete(const std::string& /*prompt*/,
                                   const Utterance& utterance,
                                   const AnnotatorConfig& config,
                                   int /*attempt*/) {
  EmotionDistribution latent;
  if (latent_override_) {
    latent = *latent_override_;
  } else if (!utterance.human_annotations.empty()) {
    latent = distmath::aggregate_annotations(
        AnnotationSet::human(utterance.human_annotations), categories_.size());
  } else {
    throw ProviderError("mock provider: utterance '" + utterance.id +
                        "' has no human annotations and no latent override");
  }
  const int label = mock_annotate(latent, config, config.draw);
  return categories_.name(static_cast<std::size_t>(label));
}

std::string RemoteProvider::complete(const std::string& prompt,
                                     const Utterance& utterance,
                                     const AnnotatorConfig& config,
                                     int /*attempt*/) {
  // Split "http://host:port/path" into client base and request path.
  const auto scheme_end = options_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ProviderError("endpoint has no scheme: " + options_.endpoint);
  }
  const auto path_start = options_.endpoint.find('/', scheme_end + 3);
  const std::string base = path_start == std::string::npos
                               ? options_.endpoint
                               : options_.endpoint.substr(0, path_start);
  const std::string path = path_start == std::string::npos
                               ? "/"
                               : options_.endpoint.substr(path_start);

  json body;
  body["model"] = options_.model;
  body["temperature"] = config.temperature;
  body["prompt"] = prompt;
  // Audio is shipped inline as a canonical 16-bit mono WAV.
  const auto wav = audio::encode_wav16(utterance.audio, utterance.sample_rate);
  body["audio_wav_base64"] = base64_encode(wav);

  httplib::Client client(base);
  client.set_connection_timeout(options_.timeout_seconds);
  client.set_read_timeout(options_.timeout_seconds);
  client.set_write_timeout(options_.timeout_seconds);

  httplib::Headers headers;
  if (!options_.credential_env.empty()) {
    if (const char* cred = std::getenv(options_.credential_env.c_str());
        cred != nullptr && cred[0] != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + cred);
    }
  }

  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    throw ProviderError("transport failure: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw ProviderError("HTTP " + std::to_string(res->status) + " from " +
                        options_.endpoint);
  }
  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::exception& ex) {
    throw ProviderError(std::string("non-JSON response: ") + ex.what());
  }
  if (!reply.contains("text") || !reply.at("text").is_string()) {
    throw ProviderError("response missing 'text' field");
  }
  return reply.at("text").get<std::string>();
}

std::string AnnotationCache::key(const std::string& persona,
                                 double temperature, const std::string& model,
                                 int draw) {
  return sha256_hex(persona + "|" + format_g17(temperature) + "|" + model +
                    "|" + std::to_string(draw));
}

std::optional<AnnotationRecord> AnnotationCache::lookup(
    const std::string& utterance_id, const std::string& key) const {
  const auto path = root_ / utterance_id / (key + ".json");
  std::ifstream in(path);
  if (!in) return std::nullopt;
  json j;
  try {
    in >> j;
    AnnotationRecord rec;
    rec.utterance_id = j.at("utterance_id").get<std::string>();
    rec.label = j.at("label_id").get<int>();
    rec.label_name = j.at("label").get<std::string>();
    rec.config.persona = j.at("persona").get<std::string>();
    rec.config.temperature = j.at("temperature").get<double>();
    rec.config.model_name = j.at("model").get<std::string>();
    rec.config.seed = j.value("seed", std::uint64_t{0});
    rec.config.draw = j.at("draw").get<int>();
    rec.config.provider = j.value("provider", std::string("mock")) == "remote"
                              ? AnnotatorConfig::ProviderKind::remote
                              : AnnotatorConfig::ProviderKind::mock;
    rec.raw_response = j.at("raw_response").get<std::string>();
    rec.timestamp_utc = j.value("timestamp_utc", std::string{});
    rec.attempt = j.value("attempt", 1);
    rec.from_cache = true;
    return rec;
  } catch (const json::exception&) {
    return std::nullopt;  // corrupt entry behaves like a miss
  }
}

void AnnotationCache::store(const AnnotationRecord& record) const {
  const auto dir = root_ / record.utterance_id;
  std::filesystem::create_directories(dir);
  const std::string key =
      AnnotationCache::key(record.config.persona, record.config.temperature,
                           record.config.model_name, record.config.draw);
  json j;
  j["utterance_id"] = record.utterance_id;
  j["label_id"] = record.label;
  j["label"] = record.label_name;
  j["persona"] = record.config.persona;
  j["temperature"] = record.config.temperature;
  j["model"] = record.config.model_name;
  j["seed"] = record.config.seed;
  j["draw"] = record.config.draw;
  j["provider"] = record.config.provider ==
                          AnnotatorConfig::ProviderKind::remote
                      ? "remote"
                      : "mock";
  j["raw_response"] = record.raw_response;
  j["timestamp_utc"] = record.timestamp_utc;
  j["attempt"] = record.attempt;

  const auto tmp = dir / (".tmp-" + key);
  const auto final_path = dir / (key + ".json");
  {
    std::ofstream out(tmp);
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, final_path);
}

AnnotationRecord annotate_utterance(const Utterance& utterance,
                                    const AnnotatorConfig& config, int retries,
                                    Provider& provider,
                                    const CategorySet& categories,
                                    AnnotationCache* cache) {
  const std::string key = AnnotationCache::key(
      config.persona, config.temperature, config.model_name, config.draw);
  if (cache != nullptr) {
    if (auto hit = cache->lookup(utterance.id, key)) {
      return *hit;
    }
  }

  const std::string prompt =
      build_prompt(utterance, config, categories).render();
  const int attempts = retries + 1;
  std::string last_failure;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    std::string raw;
    try {
      raw = provider.complete(prompt, utterance, config, attempt);
    } catch (const ProviderError& ex) {
      last_failure = ex.what();
      if (attempt == attempts) {
        throw ProviderError("utterance '" + utterance.id + "' draw " +
                            std::to_string(config.draw) + " after " +
                            std::to_string(attempts) +
                            " attempts: " + last_failure);
      }
      continue;
    }
    try {
      const int label = parse_response(raw, categories);
      AnnotationRecord rec;
      rec.utterance_id = utterance.id;
      rec.label = label;
      rec.label_name = categories.name(static_cast<std::size_t>(label));
      rec.config = config;
      rec.raw_response = raw;
      rec.timestamp_utc = utc_now_iso8601();
      rec.attempt = attempt;
      if (cache != nullptr) cache->store(rec);
      return rec;
    } catch (const InvalidLabel& ex) {
      last_failure = ex.what();
    }
  }
  throw AnnotationFailed("utterance '" + utterance.id + "' draw " +
                         std::to_string(config.draw) + ": " + last_failure);
}

AnnotatorConfig draw_config(const GeneratePolicy& policy,
                            const std::string& utterance_id, int draw) {
  const auto& personas =
      policy.personas.empty() ? default_personas() : policy.personas;
  Rng rng(mix_seed(mix_seed(policy.seed, fnv1a64(utterance_id)),
                   static_cast<std::uint64_t>(draw)));
  AnnotatorConfig cfg;
  cfg.draw = draw;
  if (policy.persona_sampling == GeneratePolicy::PersonaSampling::cycle) {
    cfg.persona = personas[static_cast<std::size_t>(draw) % personas.size()];
  } else {
    cfg.persona = personas[rng.below(personas.size())];
  }
  if (!policy.temperature_grid.empty()) {
    cfg.temperature =
        policy.temperature_grid[static_cast<std::size_t>(draw) %
                                policy.temperature_grid.size()];
  } else {
    cfg.temperature = rng.uniform(policy.temperature_min,
                                  policy.temperature_max);
  }
  cfg.seed = rng.next_u64();
  return cfg;
}

namespace {

class TokenBucket {
 public:
  explicit TokenBucket(double rate_per_sec)
      : rate_(rate_per_sec),
        tokens_(rate_per_sec),
        last_(std::chrono::steady_clock::now()) {}

  void acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock<std::mutex> lock(mu_);
    for (;;) {
      refill();
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      const auto wait =
          std::chrono::duration<double>((1.0 - tokens_) / rate_);
      cv_.wait_for(lock, wait);
    }
  }

 private:
  void refill() {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(rate_, tokens_ + elapsed * rate_);
  }

  double rate_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mu_;
  std::condition_variable cv_;
};

// Counts calls and applies the rate limit in front of the real provider.
class MeteredProvider : public Provider {
 public:
  MeteredProvider(Provider& inner, TokenBucket& bucket,
                  std::atomic<std::size_t>& calls)
      : inner_(inner), bucket_(bucket), calls_(calls) {}

  std::string name() const override { return inner_.name(); }

  std::string complete(const std::string& prompt, const Utterance& utterance,
                       const AnnotatorConfig& config, int attempt) override {
    bucket_.acquire();
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.complete(prompt, utterance, config, attempt);
  }

 private:
  Provider& inner_;
  TokenBucket& bucket_;
  std::atomic<std::size_t>& calls_;
};

}  // namespace

GenerateReport generate_annotation_sets(std::vector<Utterance>& corpus,
                                        int n_per_utterance,
                                        const GeneratePolicy& policy,
                                        Provider& provider,
                                        const CategorySet& categories,
                                        AnnotationCache* cache) {
  if (n_per_utterance < 1) {
    throw ConfigError("n_per_utterance must be >= 1, got " +
                      std::to_string(n_per_utterance));
  }
  const std::size_t n = static_cast<std::size_t>(n_per_utterance);
  const std::size_t total = corpus.size() * n;

  struct Slot {
    std::optional<AnnotationRecord> record;
    std::string failure;
  };
  std::vector<Slot> slots(total);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> calls{0};
  TokenBucket bucket(policy.rate_per_sec);
  MeteredProvider metered(provider, bucket, calls);
  const bool remote = provider.name() == "remote";

  auto run_tasks = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= total) return;
      const std::size_t ui = i / n;
      const int draw = static_cast<int>(i % n);
      const Utterance& u = corpus[ui];
      AnnotatorConfig cfg = draw_config(policy, u.id, draw);
      cfg.model_name = provider.model();
      cfg.provider = remote ? AnnotatorConfig::ProviderKind::remote
                            : AnnotatorConfig::ProviderKind::mock;
      try {
        slots[i].record = annotate_utterance(u, cfg, policy.retries, metered,
                                             categories, cache);
      } catch (const Error& ex) {
        slots[i].failure = ex.what();
      }
    }
  };

  const int workers = std::max(1, policy.max_in_flight);
  if (workers == 1 || total <= 1) {
    run_tasks();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(run_tasks);
    for (auto& t : pool) t.join();
  }

  // Deterministic merge by (utterance, draw), independent of completion order.
  GenerateReport report;
  report.provider_calls = calls.load();
  for (std::size_t ui = 0; ui < corpus.size(); ++ui) {
    corpus[ui].synthetic_annotations.clear();
    for (std::size_t draw = 0; draw < n; ++draw) {
      Slot& slot = slots[ui * n + draw];
      if (slot.record) {
        if (slot.record->from_cache) ++report.cache_hits;
        corpus[ui].synthetic_annotations.push_back(slot.record->label);
        report.records.push_back(std::move(*slot.record));
      } else {
        report.failures.push_back({corpus[ui].id, static_cast<int>(draw),
                                   slot.failure});
      }
    }
  }
  return report;
}

}  // namespace ambidist::synthgen
