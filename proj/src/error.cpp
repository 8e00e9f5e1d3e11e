#include "pvst/error.hpp"

namespace pvst {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMissingFile: return "missing file";
    case ErrorKind::kUnsupportedFormat: return "unsupported format";
    case ErrorKind::kUnsupportedBitDepth: return "unsupported bit depth";
    case ErrorKind::kMalformedHeader: return "malformed header";
    case ErrorKind::kTruncated: return "truncated file";
    case ErrorKind::kBadMagic: return "bad magic";
    case ErrorKind::kShapeChain: return "shape chain violation";
    case ErrorKind::kShapeMismatch: return "shape mismatch";
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kUnknownLayer: return "unknown layer";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kNonFinite: return "non-finite value";
    case ErrorKind::kConfig: return "configuration error";
  }
  return "error";
}

namespace {
std::string compose(ErrorKind kind, const std::string& message, const std::string& subject) {
  std::string out = to_string(kind);
  if (!subject.empty()) out += " [" + subject + "]";
  if (!message.empty()) out += ": " + message;
  return out;
}
}  // namespace

Error::Error(ErrorKind kind, std::string message, std::string subject)
    : std::runtime_error(compose(kind, message, subject)),
      kind_(kind),
      subject_(std::move(subject)) {}

}  // namespace pvst
