#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ambidist/types.hpp"

namespace ambidist::synthgen {

// The five annotator attention-steering instructions.
const std::vector<std::string>& default_personas();

struct AnnotatorConfig {
  std::string persona;
  double temperature = 1.0;
  enum class ProviderKind { remote, mock } provider = ProviderKind::mock;
  std::string model_name = "mock-alm";
  std::uint64_t seed = 0;  // mock sampling seed
  int draw = 0;            // draw index within an utterance's annotation set
};

// The prompt, kept as its five blocks; render() joins them in order
// (task description, transcription, emotion categories, instructions with
// the persona as instruction 2, output question), byte-deterministic.
struct PromptSpec {
  std::string task_description;
  std::string transcript;
  std::vector<std::string> emotion_list;
  std::string persona;
  std::string output_instruction;

  std::string render() const;
};

PromptSpec build_prompt(const Utterance& utterance,
                        const AnnotatorConfig& config,
                        const CategorySet& categories,
                        std::vector<std::string>* warnings = nullptr);

// Whitespace/punctuation-trimmed, case-insensitive exact match against the
// category names. Throws InvalidLabel otherwise (no match, or several
// category names in one response) to signal a retry.
int parse_response(const std::string& raw, const CategorySet& categories);

struct AnnotationRecord {
  std::string utterance_id;
  int label = -1;
  std::string label_name;
  AnnotatorConfig config;
  std::string raw_response;
  std::string timestamp_utc;  // ISO-8601
  int attempt = 1;
  bool from_cache = false;
};

// One annotation backend. complete() returns the raw model text for a
// rendered prompt; transport failures throw ProviderError.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string name() const = 0;
  virtual std::string model() const { return name() + "-alm"; }
  virtual std::string complete(const std::string& prompt,
                               const Utterance& utterance,
                               const AnnotatorConfig& config, int attempt) = 0;
};

// Samples one label from the power-tempered latent distribution
// q_c = p_c^(1/T) / sum p^(1/T), deterministically from (seed, draw index).
int mock_annotate(const EmotionDistribution& latent,
                  const AnnotatorConfig& config, int draw_index = 0);

// Offline test double: latent distribution = the utterance's aggregated
// human annotations (or a fixed override), tempered by config.temperature.
class MockProvider : public Provider {
 public:
  explicit MockProvider(const CategorySet& categories)
      : categories_(categories) {}
  MockProvider(const CategorySet& categories, EmotionDistribution latent)
      : categories_(categories), latent_override_(std::move(latent)) {}

  std::string name() const override { return "mock"; }
  std::string complete(const std::string& prompt, const Utterance& utterance,
                       const AnnotatorConfig& config, int attempt) override;

 private:
  CategorySet categories_;
  std::optional<EmotionDistribution> latent_override_;
};

// HTTP/JSON backend. POST {model, temperature, prompt, audio_wav_base64}
// to the endpoint; expects {"text": "..."}. Credentials are read from the
// named environment variable and sent as a bearer token.
class RemoteProvider : public Provider {
 public:
  struct Options {
    std::string endpoint;  // e.g. http://host:port/annotate
    std::string model = "alm";
    std::string credential_env;  // empty -> no Authorization header
    int timeout_seconds = 30;
  };

  explicit RemoteProvider(Options options) : options_(std::move(options)) {}

  std::string name() const override { return "remote"; }
  std::string model() const override { return options_.model; }
  std::string complete(const std::string& prompt, const Utterance& utterance,
                       const AnnotatorConfig& config, int attempt) override;

 private:
  Options options_;
};

// One JSON file per record under <root>/<utterance_id>/<key>.json with
// key = sha256(persona|temperature|model|draw). Writes are atomic
// (temp file + rename).
class AnnotationCache {
 public:
  explicit AnnotationCache(std::filesystem::path root)
      : root_(std::move(root)) {}

  static std::string key(const std::string& persona, double temperature,
                         const std::string& model, int draw);

  std::optional<AnnotationRecord> lookup(const std::string& utterance_id,
                                         const std::string& key) const;
  void store(const AnnotationRecord& record) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

// Cache-first single annotation with retry-on-invalid-label. `retries` is
// the number of additional attempts after the first (attempt numbering is
// 1-based in the record). Throws ProviderError / AnnotationFailed.
AnnotationRecord annotate_utterance(const Utterance& utterance,
                                    const AnnotatorConfig& config, int retries,
                                    Provider& provider,
                                    const CategorySet& categories,
                                    AnnotationCache* cache = nullptr);

struct GeneratePolicy {
  std::uint64_t seed = 0;
  double temperature_min = 0.1;
  double temperature_max = 1.0;
  // Non-empty: fixed grid indexed by draw instead of uniform sampling.
  std::vector<double> temperature_grid;
  enum class PersonaSampling { independent, cycle } persona_sampling =
      PersonaSampling::independent;
  std::vector<std::string> personas;  // defaults to default_personas()
  int retries = 3;
  int max_in_flight = 1;   // worker threads for provider calls
  double rate_per_sec = 0;  // token-bucket rate limit; 0 = unlimited
};

struct DrawFailure {
  std::string utterance_id;
  int draw = 0;
  std::string reason;
};

struct GenerateReport {
  std::vector<AnnotationRecord> records;  // ordered by (utterance, draw)
  std::vector<DrawFailure> failures;
  std::size_t provider_calls = 0;
  std::size_t cache_hits = 0;
};

// The per-draw annotator config (persona, temperature, mock seed) for a
// given utterance id; exposed so stored draw order is reproducible anywhere.
AnnotatorConfig draw_config(const GeneratePolicy& policy,
                            const std::string& utterance_id, int draw);

// Gives every utterance exactly n synthetic labels (failed draws are
// reported, not silently dropped) and fills utterance.synthetic_annotations
// in draw order. Runs provider calls with bounded parallelism; results are
// merged by (utterance, draw) so completion order never changes output.
GenerateReport generate_annotation_sets(std::vector<Utterance>& corpus,
                                        int n_per_utterance,
                                        const GeneratePolicy& policy,
                                        Provider& provider,
                                        const CategorySet& categories,
                                        AnnotationCache* cache = nullptr);

}  // namespace ambidist::synthgen
