#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace slidesift {

enum class Errc {
  Io,
  Decode,
  InvalidArgument,
  EmptyImage,
  ChannelMismatch,
  EmptyHistogram,
  TileLargerThanImage,
  OutOfBounds,
  UnsupportedTileSize,
  ShapeMismatch,
  EmptyDataset,
  Divergence,
  Config,
  Format,
  Version,
  EmptyPredictionSet,
  MissingGroundTruth,
  InsufficientSlides,
  DimensionMismatch,
  NoRetainedTiles,
};

std::string_view to_string(Errc code);

// All library failures surface as this type; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace slidesift
