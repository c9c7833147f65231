#pragma once

#include <stdexcept>
#include <string>

namespace fsl {

/// Base of every error the library raises. `kind()` is a stable short tag
/// used by the CLI and in structured reports.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define FSL_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(tag, what) {}      \
  };

FSL_DEFINE_ERROR(DimensionError, "dimension")
FSL_DEFINE_ERROR(ArgumentError, "argument")
FSL_DEFINE_ERROR(StateError, "state")
FSL_DEFINE_ERROR(IoError, "io")
FSL_DEFINE_ERROR(FormatError, "format")
FSL_DEFINE_ERROR(ValidationError, "validation")
FSL_DEFINE_ERROR(CapacityError, "capacity")
FSL_DEFINE_ERROR(ConfigError, "config")

#undef FSL_DEFINE_ERROR

}  // namespace fsl
