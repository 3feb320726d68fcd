#include "pcreid/error.hpp"

namespace pcreid {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::EmptyCloud: return "EmptyCloud";
    case ErrorKind::EmptyRender: return "EmptyRender";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::DatasetTooSmall: return "DatasetTooSmall";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::InsufficientGallery: return "InsufficientGallery";
    case ErrorKind::EmptyEvaluation: return "EmptyEvaluation";
    case ErrorKind::MissingRoleMapping: return "MissingRoleMapping";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::Io: return "Io";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace pcreid
