#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pcreid {

enum class ErrorKind {
  EmptyCloud,
  EmptyRender,
  EmptySequence,
  ConfigMismatch,
  DatasetTooSmall,
  LabelOutOfRange,
  InsufficientGallery,
  EmptyEvaluation,
  MissingRoleMapping,
  NonFiniteLoss,
  Io,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure surfaced by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pcreid
