#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ambidist {

// Base for all toolkit errors. kind() is the stable machine-readable name,
// what() carries kind plus detail.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& detail)
      : std::runtime_error(kind + ": " + detail), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define AMBIDIST_DEFINE_ERROR(Name)                                     \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& detail) : Error(#Name, detail) {} \
  }

// corpus
AMBIDIST_DEFINE_ERROR(MalformedManifest);
AMBIDIST_DEFINE_ERROR(DuplicateId);
AMBIDIST_DEFINE_ERROR(UnknownCategory);
AMBIDIST_DEFINE_ERROR(EmptyCorpus);
AMBIDIST_DEFINE_ERROR(UnreadableAudio);
AMBIDIST_DEFINE_ERROR(UnsupportedEncoding);
AMBIDIST_DEFINE_ERROR(UnreadableFeatures);

// distmath
AMBIDIST_DEFINE_ERROR(DimensionMismatch);
AMBIDIST_DEFINE_ERROR(NotNormalized);
AMBIDIST_DEFINE_ERROR(EmptyAnnotationSet);
AMBIDIST_DEFINE_ERROR(InsufficientRaters);

// synthgen
AMBIDIST_DEFINE_ERROR(EmptyCategoryList);
AMBIDIST_DEFINE_ERROR(InvalidLabel);
AMBIDIST_DEFINE_ERROR(ProviderError);
AMBIDIST_DEFINE_ERROR(AnnotationFailed);

// dimeaug
AMBIDIST_DEFINE_ERROR(MissingEmbedding);
AMBIDIST_DEFINE_ERROR(MissingDistribution);
AMBIDIST_DEFINE_ERROR(EmptyPool);
AMBIDIST_DEFINE_ERROR(SampleRateMismatch);

// analysis
AMBIDIST_DEFINE_ERROR(InsufficientSyntheticAnnotations);
AMBIDIST_DEFINE_ERROR(FitDiverged);

// disthead
AMBIDIST_DEFINE_ERROR(ShapeMismatch);
AMBIDIST_DEFINE_ERROR(NonFiniteActivation);
AMBIDIST_DEFINE_ERROR(NonFiniteGradient);
AMBIDIST_DEFINE_ERROR(DivergedTraining);

// cli
AMBIDIST_DEFINE_ERROR(ConfigError);

#undef AMBIDIST_DEFINE_ERROR

// Non-fatal conditions (degenerate chance agreement, singleton classes,
// split rounding, ...) are reported through an optional sink. A null sink
// sends them to stderr.
inline void warn(std::vector<std::string>* sink, std::string message) {
  if (sink != nullptr) {
    sink->push_back(std::move(message));
  } else {
    std::fprintf(stderr, "warning: %s\n", message.c_str());
  }
}

}  // namespace ambidist
