#pragma once

#include <stdexcept>
#include <string>

namespace nlx {

// Base of every error thrown by the library. `kind()` is a stable short tag
// used by the CLI when reporting failures.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define NLX_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(tag, what) {}     \
  };

NLX_DEFINE_ERROR(FormatError, "format")
NLX_DEFINE_ERROR(CompositionError, "composition")
NLX_DEFINE_ERROR(InputError, "input")
NLX_DEFINE_ERROR(LookupError, "lookup")
NLX_DEFINE_ERROR(NumericError, "numeric")
NLX_DEFINE_ERROR(AnnotationError, "annotation")
NLX_DEFINE_ERROR(ProviderError, "provider")
NLX_DEFINE_ERROR(GenerationError, "generation")
NLX_DEFINE_ERROR(ConstraintError, "constraint")
NLX_DEFINE_ERROR(ParseError, "parse")
NLX_DEFINE_ERROR(ConstructionError, "construction")
NLX_DEFINE_ERROR(ValidationError, "validation")
NLX_DEFINE_ERROR(ConfigError, "config")

#undef NLX_DEFINE_ERROR

}  // namespace nlx
