#include "mtrack/error.hpp"

namespace mtrack {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::IoError: return "IoError";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::MalformedFile: return "MalformedFile";
    case Errc::InvalidParam: return "InvalidParam";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::RangeMismatch: return "RangeMismatch";
    case Errc::InsufficientHistory: return "InsufficientHistory";
    case Errc::EmptyPath: return "EmptyPath";
    case Errc::DomainMismatch: return "DomainMismatch";
    case Errc::BeatCountMismatch: return "BeatCountMismatch";
    case Errc::SocketError: return "SocketError";
  }
  return "Unknown";
}

}  // namespace mtrack
