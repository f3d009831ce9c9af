#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace defurnish {

enum class ErrorKind {
  InvalidArgument,
  FileNotFound,
  Parse,
  Io,
  LabelCountMismatch,
  UnknownClass,
  TooFewSamples,
  NoPlane,
  NoIntersection,
  DegenerateCorner,
  SelfIntersecting,
  ConstraintOutside,
  EmptyRegion,
  NonManifoldBoundary,
  OpenChain,
  FoldOver,
  DegenerateFrame,
  DegenerateTriangle,
  InconsistentInput,
  InsufficientReference,
  CommandFailed,
  Timeout,
  SizeMismatch,
  ChartTooLarge,
  AtlasOverflow,
  UnplacedFace,
  SchemaVersion,
  MissingIntermediate,
  CorrespondenceFailure,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-checkable kind next to the human message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace defurnish
