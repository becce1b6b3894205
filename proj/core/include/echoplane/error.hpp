#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace echoplane {

enum class Errc {
  ZeroNormal,
  DegenerateEllipsoid,
  ComplexRoots,
  InvalidArgument,
  SourceOutsideRoom,
  MicOutsideRoom,
  InfeasibleSetup,
  TooShort,
  NoOnsets,
  InsufficientChannels,
  NoValidChannels,
  DegenerateArray,
  AllCombinationsFailed,
  CoincidentPoints,
  ZeroMeanNormal,
  EmptyInput,
  NoEllipsoids,
  NoTangentConsensus,
  ShapeMismatch,
  MissingGroundTruth,
  Io,
  Format,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above so that
/// batch drivers can map it onto a gross error without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace echoplane
