#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ctl {

// Base for all library errors. `name()` is the stable identifier surfaced in
// CLI diagnostics; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& detail)
      : std::runtime_error(name + ": " + detail), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

#define CTL_ERROR_TYPE(TypeName, tag)                                     \
  class TypeName : public Error {                                         \
   public:                                                                \
    explicit TypeName(const std::string& detail) : Error(tag, detail) {}  \
  }

CTL_ERROR_TYPE(EmptyBoxError, "EmptyBox");
CTL_ERROR_TYPE(ManifestParseError, "ManifestParse");
CTL_ERROR_TYPE(MissingImageError, "MissingImage");
CTL_ERROR_TYPE(DecodeError, "DecodeError");
CTL_ERROR_TYPE(ShapeError, "ShapeError");
CTL_ERROR_TYPE(CacheMissError, "CacheMiss");
CTL_ERROR_TYPE(FormatVersionMismatchError, "FormatVersionMismatch");
CTL_ERROR_TYPE(ChecksumMismatchError, "ChecksumMismatch");
CTL_ERROR_TYPE(DegenerateNormError, "DegenerateNorm");
CTL_ERROR_TYPE(SingletonCategoryError, "SingletonCategory");
CTL_ERROR_TYPE(NonFiniteLossError, "NonFiniteLoss");
CTL_ERROR_TYPE(UnknownProductError, "UnknownProduct");
CTL_ERROR_TYPE(IoError, "IO");
CTL_ERROR_TYPE(UsageError, "UsageError");

#undef CTL_ERROR_TYPE

}  // namespace ctl
