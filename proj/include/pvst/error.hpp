#pragma once

#include <stdexcept>
#include <string>

namespace pvst {

enum class ErrorKind {
  kMissingFile,
  kUnsupportedFormat,
  kUnsupportedBitDepth,
  kMalformedHeader,
  kTruncated,
  kBadMagic,
  kShapeChain,
  kShapeMismatch,
  kInvalidArgument,
  kUnknownLayer,
  kIo,
  kNonFinite,
  kConfig,
};

const char* to_string(ErrorKind kind);

// Every failure surfaced by the library. `subject()` names the file, flag or
// layer the error is about when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message, std::string subject = {});

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  ErrorKind kind_;
  std::string subject_;
};

}  // namespace pvst
