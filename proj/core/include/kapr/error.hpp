#pragma once

#include <stdexcept>
#include <string>

namespace kapr {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define KAPR_DEFINE_ERROR(Name)                  \
  class Name : public Error {                    \
   public:                                       \
    explicit Name(const std::string& what_arg)   \
        : Error(#Name ": " + what_arg) {}        \
  }

// graph
KAPR_DEFINE_ERROR(SchemaViolation);
KAPR_DEFINE_ERROR(UnknownEntity);
// ingest
KAPR_DEFINE_ERROR(IoError);
KAPR_DEFINE_ERROR(MalformedRecord);
KAPR_DEFINE_ERROR(EmptyCorpus);
KAPR_DEFINE_ERROR(InvalidFraction);
// environment / policy
KAPR_DEFINE_ERROR(NotAProduct);
KAPR_DEFINE_ERROR(IllegalAction);
KAPR_DEFINE_ERROR(NoActions);
// mfi
KAPR_DEFINE_ERROR(EmptyCategory);
KAPR_DEFINE_ERROR(EmptyText);
KAPR_DEFINE_ERROR(MissingFeature);
// eval
KAPR_DEFINE_ERROR(InsufficientPopulation);
KAPR_DEFINE_ERROR(UnknownVariant);
// artifacts / config
KAPR_DEFINE_ERROR(FormatError);
KAPR_DEFINE_ERROR(ConfigError);

#undef KAPR_DEFINE_ERROR

/// Raised when a pipeline stage needs the output of an upstream stage that
/// has not been run. `stage()` names the upstream command.
class MissingArtifact : public Error {
 public:
  MissingArtifact(std::string stage, const std::string& path)
      : Error("MissingArtifact(\"" + stage + "\"): " + path), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace kapr
